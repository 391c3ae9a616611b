"""Representation theorems as executable transformations.

The predictable projection s -> E(w_s | F_{[s,t]^c}) of a process expansion
is compiled into per-cell entry tables: full surviving cells keep ordinary
Charlier factors while the cell containing s contributes a factor cut at the
running time.  Consumers evaluate those tables pathwise (traces, pathwise
integrals); grid-aligned identities stay inside the exact kernel algebra.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chaos import (
    ChaosExpansion,
    ProcessExpansion,
    condition,
    cross_moment,
    indefinite_skorohod,
    linear_combine,
    mderivative,
    multiply,
    second_moment,
    skorohod,
)
from .grid import (
    CellSet,
    Partition,
    SymKernel,
    _multiplicities,
    _pfm,
    indicator_kernel,
    refine,
    tensor_power_kernel,
)
from .pathsim import PoissonPath, PsiTables

__all__ = [
    "ProjectedIntegrand",
    "predictable_projection",
    "build_psi_tables",
    "clark_ocone",
    "clark_ocone_delta",
    "ito_skorohod_w",
    "pi_approximation",
    "projected_step_process",
    "forward_backward",
    "assemble_forward_backward",
    "v_norm",
    "split_tensor_power",
    "outside_cells",
]


def outside_cells(part: Partition, s: float, t: float) -> CellSet:
    """The cell union [0, s) + (t, 1] for grid points s <= t (as cells)."""
    return CellSet.interval(part, s, t).complement()


def build_psi_tables(w: ProcessExpansion, t: float, adapted: bool = False) -> PsiTables:
    """Compile s -> E(w_s | F) into per-cell evaluation tables.

    With adapted=False the conditioning field is F_{[s,t]^c} (cells strictly
    left of s, the partial block (t_i, s), and everything right of t); with
    adapted=True it is F_{[0,s)} and the tail cells are dropped as well.
    """
    part = w.part
    idx_t = part.index_of(t)
    per_cell: list = [[] for _ in range(idx_t)]

    for n in range(len(w.kernels)):
        fn = math.factorial(n)
        for (a, tc), v in sorted(w.kernel(n).items()):
            if tc >= idx_t or v == 0.0:
                continue
            full: list = []
            pm = 0
            dead = False
            for c, m in _multiplicities(a):
                if c < tc or (not adapted and c >= idx_t):
                    full.append((c, m))
                elif c == tc:
                    pm = m
                else:
                    dead = True
                    break
            if not dead:
                per_cell[tc].append((fn * v, pm, tuple(full)))

    for n in range(len(w.diag)):
        for (i, b, rc), wt in sorted(w.diag_terms(n).items()):
            if i >= idx_t or wt == 0.0:
                continue
            blocks: dict = {}
            pm = 0
            dead = False
            for c, m in _multiplicities(b):
                if c < i or (not adapted and c >= idx_t):
                    blocks[c] = blocks.get(c, 0) + m
                elif c == i:
                    pm += m
                else:
                    dead = True
                    break
            if dead:
                continue
            if rc == i:
                pm += 1
            else:
                blocks[rc] = blocks.get(rc, 0) + 1
            weight = wt * math.factorial(n - 1) / _pfm(b)
            for m in blocks.values():
                weight *= math.factorial(m)
            weight *= math.factorial(pm)
            per_cell[i].append((weight, pm, tuple(sorted(blocks.items()))))

    entries = [e for cell in per_cell for e in cell]
    E = len(entries)
    kmax = max(max((len(f) for _, _, f in entries), default=1), 1)
    W = np.empty(E)
    pm_arr = np.zeros(E, dtype=np.int64)
    fc = np.zeros((E, kmax), dtype=np.int64)
    fm = np.zeros((E, kmax), dtype=np.int64)
    for e, (wgt, pm, full) in enumerate(entries):
        W[e] = wgt
        pm_arr[e] = pm
        for k, (c, m) in enumerate(full):
            fc[e, k] = c
            fm[e, k] = m
    ptr = np.zeros(idx_t + 1, dtype=np.int64)
    for i in range(idx_t):
        ptr[i + 1] = ptr[i] + len(per_cell[i])
    max_full = int(fm.max()) if E else 0
    return PsiTables(part, float(t), idx_t, ptr, W, pm_arr, fc, fm, max_full)


@dataclass(eq=False)
class ProjectedIntegrand:
    """Predictable version of s -> E(w_s | F_{[s,t]^c}) with a fixed horizon."""

    w: ProcessExpansion
    t: float
    tables: PsiTables
    adapted: bool = False

    @property
    def part(self) -> Partition:
        return self.w.part

    def value_at(self, s: float, path: PoissonPath) -> float:
        """Pathwise value at s, using strict (left-limit) counts at s."""
        tb = self.tables
        part = tb.part
        if s == 0.0:
            i = 0
        else:
            i = part.cell_of(s)
        if i >= tb.idx_t:
            raise ValueError("s must lie in [0, t]")
        counts = path.cell_counts(part)
        lam = part.lengths
        ell = s - part.points[i]
        k_in = path.n_before(s) - path.n_at(part.points[i])
        from .pathsim import charlier

        total = 0.0
        for e in range(tb.cell_ptr[i], tb.cell_ptr[i + 1]):
            v = tb.W[e]
            for k in range(tb.fc.shape[1]):
                m = tb.fm[e, k]
                if m > 0:
                    c = tb.fc[e, k]
                    v *= charlier(int(m), lam[c], counts[c] - lam[c])
            v *= charlier(int(tb.pm[e]), ell, k_in - ell)
            total += v
        return total

    def cell_expansion_at(self, s: float) -> ChaosExpansion:
        """Exact conditional expansion at an interior s on the grid refined at s."""
        part = self.part
        i = part.cell_of(s)
        expanded = self.w.restrict_at(s)
        fine = expanded.part
        pos = fine.index_of(s) if fine.is_grid_point(s) else None
        keep = np.zeros(fine.n_cells, dtype=bool)
        idx_t_f = fine.index_of(self.t)
        keep[:pos] = True
        if not self.adapted:
            keep[idx_t_f:] = True
        return condition(expanded, CellSet(fine, keep))


def predictable_projection(w: ProcessExpansion, t: float) -> ProjectedIntegrand:
    """Projection on the independently enlarged filtration with horizon t."""
    return ProjectedIntegrand(w, float(t), build_psi_tables(w, t, adapted=False))


def adapted_projection(w: ProcessExpansion) -> ProjectedIntegrand:
    """Plain predictable projection s -> E(w_s | F_{[0,s)})."""
    return ProjectedIntegrand(w, 1.0, build_psi_tables(w, 1.0, adapted=True), True)


# ----------------------------------------------------------------------------
# Clark-Ocone


def clark_ocone(G: ChaosExpansion, s: float, t: float):
    """Conditional part and projected integrand of the martingale representation.

    Returns (E(G | F_{[s,t]^c}), projected derivative integrand); adding the
    divergence of the integrand restricted to [s, t] reconstructs G.
    """
    if s > t:
        raise ValueError("need s <= t")
    part = G.part
    conditional = condition(G, outside_cells(part, s, t))
    integrand = predictable_projection(mderivative(G), t)
    return conditional, integrand


def clark_ocone_delta(G: ChaosExpansion, s: float, t: float) -> ChaosExpansion:
    """Exact kernel form of the divergence term of the representation.

    Symmetrizing the time slot of the projected derivative turns each kernel
    g_m into g_m restricted to the region where at least one coordinate falls
    in [s, t]; on the grid that is a per-entry membership test.
    """
    part = G.part
    inside = CellSet.interval(part, s, t)
    ks = [SymKernel.zero(0, part)]
    for n in range(1, G.degree + 1):
        vals = {
            idx: v
            for idx, v in G.kernel(n).values.items()
            if any(inside.mask[c] for c in idx)
        }
        ks.append(SymKernel(n, part, vals))
    return ChaosExpansion(part, ks)


# ----------------------------------------------------------------------------
# the Ito-Skorohod rewriter


def ito_skorohod_w(u: ProcessExpansion) -> ProcessExpansion:
    """The unique integrand w with  w_s = u_s + delta(D_s u 1_{[0,s]}).

    The divergence term couples one kernel variable to the running time, so it
    is stored as diagonal terms: for each entry of u with space index a, time
    cell rc and every distinct cell i of a, the term (i, a minus one i, rc)
    receives weight n * value (dropped when rc > i, where the time restriction
    kills it).
    """
    if u.has_diag:
        raise ValueError("integrand already carries diagonal terms")
    out_diag: list = [dict() for _ in range(u.space_degree + 1)]
    for n in range(1, u.space_degree + 1):
        terms = out_diag[n]
        for (a, rc), v in u.kernel(n).items():
            if v == 0.0:
                continue
            seen = set()
            for j, i in enumerate(a):
                if i in seen or rc > i:
                    continue
                seen.add(i)
                b = a[:j] + a[j + 1 :]
                key = (i, b, rc)
                terms[key] = terms.get(key, 0.0) + n * v
    ks = [dict(k) for k in u.kernels]
    return ProcessExpansion(u.part, ks, out_diag)


# ----------------------------------------------------------------------------
# step approximation and forward-backward splitting


def _pi_blocks(part: Partition, pi: Partition) -> "list[range]":
    """Kernel cells composing each pi cell (pi must be coarser or equal)."""
    return [
        range(part.index_of(pi.points[j]), part.index_of(pi.points[j + 1]))
        for j in range(pi.n_cells)
    ]


def pi_approximation(w: ProcessExpansion, pi: Partition) -> ProcessExpansion:
    """Cell averages of the projection on the complement of each pi cell.

    The coefficient of cell j is F_j = (1/len) int over the cell of
    E(w_s | F outside the cell) ds, which the conditioning makes constant on
    each kernel cell, so the average is a length-weighted kernel sum.  Every
    F_j is measurable outside its own cell by construction.
    """
    part = w.part
    blocks = _pi_blocks(part, pi)
    lengths = part.lengths
    ks: list = [dict() for _ in range(w.space_degree + 1)]
    for j, block in enumerate(blocks):
        cells_j = set(block)
        width = float(pi.points[j + 1] - pi.points[j])
        fj = ChaosExpansion.from_scalar(0.0, part)
        outside = CellSet.from_cells(part, [c for c in range(part.n_cells)
                                            if c not in cells_j])
        for i in block:
            cell_term = _step_slice(w, i).add(_diag_slice_conditioned(w, i, cells_j))
            fj = fj.add(condition(cell_term, outside).scaled(lengths[i] / width))
        for n in range(fj.degree + 1):
            for a, v in fj.kernel(n).values.items():
                if v == 0.0:
                    continue
                for i in block:
                    ks[n][(a, i)] = ks[n].get((a, i), 0.0) + v
    return ProcessExpansion(part, ks, [])


def _step_slice(w: ProcessExpansion, i: int) -> ChaosExpansion:
    ks = []
    for n in range(len(w.kernels)):
        vals = {a: v for (a, tc), v in w.kernel(n).items() if tc == i}
        ks.append(SymKernel(n, w.part, vals))
    if not ks:
        ks = [SymKernel.zero(0, w.part)]
    return ChaosExpansion(w.part, ks)


def _diag_slice_conditioned(w: ProcessExpansion, i: int, dead_cells) -> ChaosExpansion:
    """Diagonal terms at time cell i with any mass on `dead_cells` removed.

    Outside the dead cells the time coupling is inert (the coupled block is
    either a whole cell below i or empty), so the result is an ordinary
    expansion, constant in s over cell i.
    """
    from .grid import contract

    part = w.part
    out = ChaosExpansion.from_scalar(0.0, part)
    for n in range(len(w.diag)):
        for (ci, b, rc), wt in w.diag_terms(n).items():
            if ci != i or wt == 0.0:
                continue
            if rc == i or rc in dead_cells or any(c in dead_cells for c in b):
                continue
            eb = SymKernel(n - 1, part, {b: 1.0})
            block = indicator_kernel(CellSet.from_cells(part, [rc]))
            out = out.add(ChaosExpansion.from_kernel(contract(eb, block, 0, 0).scaled(wt)))
    return out


def projected_step_process(w_pi: ProcessExpansion, pi: Partition, t: float
                           ) -> ProcessExpansion:
    """E(w^pi_s | F_{[s,t]^c}) as a step process (exact for step coefficients).

    The cell-j coefficient of w^pi has no mass on its own pi cell, so the
    projection is constant in s there: it keeps cells strictly left of the
    kernel cell of s and cells right of t.
    """
    part = w_pi.part
    idx_t = part.index_of(t)
    ks: list = [dict() for _ in range(w_pi.space_degree + 1)]
    for i in range(idx_t):
        keep = np.zeros(part.n_cells, dtype=bool)
        keep[:i] = True
        keep[idx_t:] = True
        cond = condition(_step_slice(w_pi, i), CellSet(part, keep))
        for n in range(cond.degree + 1):
            for a, v in cond.kernel(n).values.items():
                if v != 0.0:
                    ks[n][(a, i)] = v
    return ProcessExpansion(part, ks, [])


def forward_backward(w_pi: ProcessExpansion, pi: Partition, t: float):
    """Summands E(F_j | F outside (t_j, t_{j+1} or t]) times the increment.

    Returns a list of (factor, (a, b)) pairs with (a, b] the increment
    interval; the assembled sum of factor * compensated increment equals the
    indefinite divergence of the projected step process exactly.
    """
    part = w_pi.part
    blocks = _pi_blocks(part, pi)
    idx_t = part.index_of(t)
    out = []
    for j, block in enumerate(blocks):
        a_pt = float(pi.points[j])
        if part.index_of(a_pt) >= idx_t:
            break
        b_pt = min(float(pi.points[j + 1]), t)
        fj = _step_slice(w_pi, block.start)
        hi = max(part.index_of(float(pi.points[j + 1])), idx_t)
        keep = np.zeros(part.n_cells, dtype=bool)
        keep[: block.start] = True
        keep[hi:] = True
        factor = condition(fj, CellSet(part, keep))
        out.append((factor, (a_pt, b_pt)))
    return out


def assemble_forward_backward(terms, part: Partition,
                              degree_cap: int = 12) -> ChaosExpansion:
    """Sum of factor * compensated-increment products, at kernel level."""
    total = ChaosExpansion.from_scalar(0.0, part)
    for factor, (a, b) in terms:
        inc = ChaosExpansion.from_kernel(
            indicator_kernel(CellSet.interval(part, a, b))
        )
        total = total.add(multiply(factor, inc, degree_cap))
    return total


# ----------------------------------------------------------------------------
# quadratic variation in mean


def v_norm(X, partitions) -> float:
    """sup over the supplied partitions of E sum (X_{t_{i+1}} - X_{t_i})^2.

    `X` maps grid points to expansions (callable or dict); the result is a
    certified lower bound for the supremum over all partitions.
    """
    getter = X.__getitem__ if hasattr(X, "__getitem__") else X
    best = 0.0
    for pi in partitions:
        tot = 0.0
        for a, b in zip(pi.points[:-1], pi.points[1:]):
            diff = getter(float(b)).sub(getter(float(a)))
            tot += second_moment(diff)
        best = max(best, tot)
    return best


def dyadic_partition(depth: int) -> Partition:
    return Partition(np.linspace(0.0, 1.0, 2**depth + 1))


# ----------------------------------------------------------------------------
# tensor-power splitting


def split_tensor_power(h, s: float, t: float, n: int, part: Partition):
    """Split h^(tensor n) restricted to ([0,s) + (t,1])^n by left-factor count.

    Returns (left kernel of degree k, right kernel of degree n-k, binomial
    weight) for k = 0..n; the weighted product sum reassembles the multiple
    integral of the restricted tensor power exactly.
    """
    if s > t:
        raise ValueError("need s <= t")
    h = np.asarray(h, dtype=float)
    idx_s, idx_t = part.index_of(s), part.index_of(t)
    h_left = h.copy()
    h_left[idx_s:] = 0.0
    h_right = h.copy()
    h_right[:idx_t] = 0.0
    out = []
    for k in range(n + 1):
        left = (
            tensor_power_kernel(h_left, k, part)
            if k >= 1
            else SymKernel.scalar(1.0, part)
        )
        right = (
            tensor_power_kernel(h_right, n - k, part)
            if n - k >= 1
            else SymKernel.scalar(1.0, part)
        )
        out.append((left, right, float(math.comb(n, k))))
    return out
