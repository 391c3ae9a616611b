"""Algebra of finite chaos expansions over grid kernels.

A `ChaosExpansion` is the orthogonal sum c_0 + sum_n I_n(f_n) with one grid
kernel per degree.  A `ProcessExpansion` is a time-indexed expansion
u_s = sum_n I_n(g_n(., s)) whose time slot is, by convention, the LAST kernel
variable and is piecewise constant on grid cells.  Processes may additionally
carry diagonal terms whose kernels couple one variable to the running time s
(these arise from divergences of the form delta(D_s u 1_{[0,s]})); diagonal
terms keep the algebra exact where a grid-step process would only approximate.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    CellSet,
    Partition,
    SymKernel,
    _merge_sorted,
    _multiplicities,
    _pfm,
    common_refinement,
    contract,
    indicator_kernel,
    inner,
    lift,
)

__all__ = [
    "DEFAULT_DEGREE_CAP",
    "DegreeCapExceeded",
    "ChaosExpansion",
    "ProcessExpansion",
    "expectation",
    "linear_combine",
    "multiply",
    "mderivative",
    "derivative_slice",
    "skorohod",
    "indefinite_skorohod",
    "condition",
    "condition_process",
    "seminorm",
    "process_seminorm",
    "second_moment",
    "cross_moment",
]

DEFAULT_DEGREE_CAP = 8


class DegreeCapExceeded(ValueError):
    """A product would create chaos terms beyond the configured degree cap."""


@dataclass(eq=False)
class ChaosExpansion:
    """Finite orthogonal sum c_0 + sum_{n>=1} I_n(f_n); kernels[n] has degree n."""

    part: Partition
    kernels: list = field(default_factory=list)

    def __post_init__(self):
        for n, k in enumerate(self.kernels):
            if k.degree != n:
                raise ValueError("kernel degree must equal its slot")
            if not k.part.matches(self.part):
                raise ValueError("kernel partition mismatch")
        self._trim()

    def _trim(self):
        while self.kernels and self.kernels[-1].is_zero() and len(self.kernels) > 1:
            self.kernels.pop()
        if not self.kernels:
            self.kernels.append(SymKernel.zero(0, self.part))

    @classmethod
    def from_scalar(cls, c: float, part: Partition) -> "ChaosExpansion":
        return cls(part, [SymKernel.scalar(c, part)])

    @classmethod
    def from_kernel(cls, f: SymKernel) -> "ChaosExpansion":
        """The single multiple integral I_n(f)."""
        ks = [SymKernel.zero(d, f.part) for d in range(f.degree)]
        ks.append(f.copy())
        return cls(f.part, ks)

    @property
    def degree(self) -> int:
        return len(self.kernels) - 1

    def kernel(self, n: int) -> SymKernel:
        if n < len(self.kernels):
            return self.kernels[n]
        return SymKernel.zero(n, self.part)

    def scaled(self, c: float) -> "ChaosExpansion":
        return ChaosExpansion(self.part, [k.scaled(c) for k in self.kernels])

    def add(self, other: "ChaosExpansion") -> "ChaosExpansion":
        return linear_combine([1.0, 1.0], [self, other])

    def sub(self, other: "ChaosExpansion") -> "ChaosExpansion":
        return linear_combine([1.0, -1.0], [self, other])

    def on(self, finer: Partition) -> "ChaosExpansion":
        if finer.matches(self.part):
            return self
        return ChaosExpansion(finer, [lift(k, finer) for k in self.kernels])

    def max_abs(self) -> float:
        return max(k.max_abs() for k in self.kernels)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol


def expectation(F: ChaosExpansion) -> float:
    """E(F): the degree-0 coefficient (all higher integrals are centered)."""
    return F.kernels[0].values.get((), 0.0)


def linear_combine(coeffs, terms) -> ChaosExpansion:
    """Degree-wise linear combination, lifting to a common refinement first."""
    if len(coeffs) != len(terms) or not terms:
        raise ValueError("need one coefficient per term")
    part = terms[0].part
    for t in terms[1:]:
        part = common_refinement(part, t.part)
    terms = [t.on(part) for t in terms]
    deg = max(t.degree for t in terms)
    ks = []
    for n in range(deg + 1):
        k = SymKernel.zero(n, part)
        for c, t in zip(coeffs, terms):
            if c != 0.0 and n <= t.degree:
                k = k.add(t.kernel(n).scaled(c))
        ks.append(k.trimmed())
    return ChaosExpansion(part, ks)


def multiply(
    F: ChaosExpansion, G: ChaosExpansion, degree_cap: int = DEFAULT_DEGREE_CAP
) -> ChaosExpansion:
    """Exact product of two expansions via the multiplication formula.

    I_m(f) I_n(g) expands into contractions I_{m+n-r-l}(f star_r^l g) with
    weight r! C(m,r) C(n,r) C(r,l); identified-variable terms carry the extra
    binomial C(r,l) because on the Poisson space the diagonal both survives
    pointwise and integrates (the desk check I_2(1_B tensor 1_B)^2 pins this
    weight).  Exceeding `degree_cap` raises rather than silently truncating.
    """
    part = common_refinement(F.part, G.part)
    F, G = F.on(part), G.on(part)
    top = F.degree + G.degree
    if top > degree_cap:
        raise DegreeCapExceeded(
            f"product degree {top} exceeds cap {degree_cap}"
        )
    acc: list = [SymKernel.zero(n, part) for n in range(top + 1)]
    comb = math.comb
    for m, f in enumerate(F.kernels):
        if f.is_zero():
            continue
        for n, g in enumerate(G.kernels):
            if g.is_zero():
                continue
            if m == 0:
                c = f.values.get((), 0.0)
                acc[n] = acc[n].add(g.scaled(c))
                continue
            if n == 0:
                c = g.values.get((), 0.0)
                acc[m] = acc[m].add(f.scaled(c))
                continue
            for r in range(min(m, n) + 1):
                w_r = math.factorial(r) * comb(m, r) * comb(n, r)
                for l in range(r + 1):
                    w = w_r * comb(r, l)
                    acc[m + n - r - l] = acc[m + n - r - l].add(
                        contract(f, g, r, l).scaled(w)
                    )
    return ChaosExpansion(part, [k.trimmed() for k in acc])


def second_moment(F: ChaosExpansion) -> float:
    """E(F^2) = sum_n n! ||f_n||^2 (orthogonality of the chaoses)."""
    return cross_moment(F, F)


def cross_moment(F: ChaosExpansion, G: ChaosExpansion) -> float:
    """E(F G) computed degree-wise from kernel pairings."""
    part = common_refinement(F.part, G.part)
    F, G = F.on(part), G.on(part)
    tot = 0.0
    for n in range(min(F.degree, G.degree) + 1):
        tot += math.factorial(n) * inner(F.kernel(n), G.kernel(n))
    return tot


# ----------------------------------------------------------------------------
# processes


@dataclass(eq=False)
class ProcessExpansion:
    """Time-indexed expansion u_s = sum_n I_n(g_n(., s)), s in grid cells.

    kernels[n] maps (space multi-index of length n sorted, time cell) to the
    coefficient; the kernel is symmetric in its space slots only.

    `diag` holds optional diagonal terms.  diag[n] maps
    (s_cell i, space multi-index b of length n-1, coupled cell rc <= i) to a
    weight w; for s in cell i the term contributes w * I_n(q~) where q~ is the
    symmetrization of e_b (x) 1_{cell rc  intersected with [0, s]}.  The
    coupled slot is cut at the running time, which is what makes processes
    like s -> (compensated count up to s) exactly representable.
    """

    part: Partition
    kernels: list = field(default_factory=list)
    diag: list = field(default_factory=list)

    def __post_init__(self):
        for n, k in enumerate(self.kernels):
            for (a, tc) in k:
                if len(a) != n or any(a[j] > a[j + 1] for j in range(len(a) - 1)):
                    raise ValueError(f"bad space index {a} at degree {n}")
                if not 0 <= tc < self.part.n_cells:
                    raise ValueError(f"bad time cell {tc}")
        for n, dterms in enumerate(self.diag):
            for (i, b, rc) in dterms:
                if len(b) != n - 1:
                    raise ValueError("diagonal space index has wrong length")
                if rc > i:
                    raise ValueError("coupled cell must not exceed the time cell")

    @classmethod
    def zero(cls, part: Partition) -> "ProcessExpansion":
        return cls(part, [], [])

    @classmethod
    def deterministic(cls, h, part: Partition) -> "ProcessExpansion":
        """Deterministic step process u_s = h_i on cell i."""
        h = np.asarray(h, dtype=float)
        k0 = {((), i): float(h[i]) for i in range(part.n_cells) if h[i] != 0.0}
        return cls(part, [k0], [])

    @classmethod
    def constant(cls, F: ChaosExpansion) -> "ProcessExpansion":
        """Process constant in time, u_s = F for every s."""
        ks = []
        for n, k in enumerate(F.kernels):
            ks.append(
                {
                    (a, i): v
                    for a, v in k.values.items()
                    for i in range(F.part.n_cells)
                }
            )
        return cls(F.part, ks, [])

    @classmethod
    def from_cells(cls, exps, part: Partition) -> "ProcessExpansion":
        """Step process whose value on cell i is the i-th expansion."""
        if len(exps) != part.n_cells:
            raise ValueError("need one expansion per cell")
        deg = max(e.degree for e in exps)
        ks: list = [dict() for _ in range(deg + 1)]
        for i, e in enumerate(exps):
            if not e.part.matches(part):
                raise ValueError("partition mismatch")
            for n in range(e.degree + 1):
                for a, v in e.kernel(n).values.items():
                    if v != 0.0:
                        ks[n][(a, i)] = v
        return cls(part, ks, [])

    @property
    def space_degree(self) -> int:
        deg = -1
        for n, k in enumerate(self.kernels):
            if k:
                deg = n
        for n, d in enumerate(self.diag):
            if d:
                deg = max(deg, n)
        return max(deg, 0)

    @property
    def has_diag(self) -> bool:
        return any(self.diag)

    def kernel(self, n: int) -> dict:
        return self.kernels[n] if n < len(self.kernels) else {}

    def diag_terms(self, n: int) -> dict:
        return self.diag[n] if n < len(self.diag) else {}

    def scaled(self, c: float) -> "ProcessExpansion":
        ks = [{k: c * v for k, v in d.items()} for d in self.kernels]
        dg = [{k: c * v for k, v in d.items()} for d in self.diag]
        return ProcessExpansion(self.part, ks, dg)

    def add(self, other: "ProcessExpansion") -> "ProcessExpansion":
        if not self.part.matches(other.part):
            raise ValueError("partition mismatch")
        nk = max(len(self.kernels), len(other.kernels))
        ks = []
        for n in range(nk):
            d = dict(self.kernel(n))
            for k, v in other.kernel(n).items():
                d[k] = d.get(k, 0.0) + v
            ks.append(d)
        nd = max(len(self.diag), len(other.diag))
        dg = []
        for n in range(nd):
            d = dict(self.diag_terms(n))
            for k, v in other.diag_terms(n).items():
                d[k] = d.get(k, 0.0) + v
            dg.append(d)
        return ProcessExpansion(self.part, ks, dg)

    def at_cell(self, i: int) -> ChaosExpansion:
        """The expansion u_s for s anywhere in cell i, for step processes only."""
        if self.has_diag:
            raise ValueError(
                "process has diagonal terms; use restrict_at(s) for interior times"
            )
        ks = []
        for n, k in enumerate(self.kernels):
            vals = {a: v for (a, tc), v in k.items() if tc == i}
            ks.append(SymKernel(n, self.part, vals))
        return ChaosExpansion(self.part, ks) if ks else ChaosExpansion.from_scalar(0.0, self.part)

    def restrict_at(self, s: float) -> ChaosExpansion:
        """Exact expansion of u_s on the grid refined at s (diagonal terms cut)."""
        from .grid import refine  # local to avoid re-export confusion

        i = self.part.cell_of(s)
        interior = not self.part.is_grid_point(s)
        fine = refine(self.part, [s]) if interior else self.part
        out = ChaosExpansion.from_scalar(0.0, fine)
        step = []
        for n, k in enumerate(self.kernels):
            vals = {a: v for (a, tc), v in k.items() if tc == i}
            if vals:
                step.append(lift(SymKernel(n, self.part, vals), fine))
        for f in step:
            out = out.add(ChaosExpansion.from_kernel(f))
        for n in range(len(self.diag)):
            for (ci, b, rc), w in self.diag_terms(n).items():
                if ci != i or w == 0.0:
                    continue
                # cells of (cell rc) intersected with [0, s] on the fine grid
                lo = fine.index_of(self.part.points[rc])
                hi_t = min(self.part.points[rc + 1], s)
                hi = fine.index_of(hi_t)
                if hi <= lo:
                    continue
                block = CellSet.from_cells(fine, range(lo, hi))
                eb = lift(SymKernel(n - 1, self.part, {b: 1.0}), fine)
                term = contract(eb, indicator_kernel(block), 0, 0).scaled(w)
                out = out.add(ChaosExpansion.from_kernel(term))
        return out


def mderivative(F: ChaosExpansion) -> ProcessExpansion:
    """Annihilation operator: D_t F = sum_n n I_{n-1}(f_n(., t))."""
    nk = max(F.degree, 1)
    ks: list = [dict() for _ in range(nk)]
    for n in range(1, F.degree + 1):
        f = F.kernel(n)
        for a, v in f.values.items():
            seen = set()
            for j, c in enumerate(a):
                if c in seen:
                    continue
                seen.add(c)
                b = a[:j] + a[j + 1 :]
                ks[n - 1][(b, c)] = n * v
    return ProcessExpansion(F.part, ks, [])


def derivative_slice(u: ProcessExpansion, r_cell: int) -> ProcessExpansion:
    """The process s -> D_r u_s for r in the given cell."""
    if u.has_diag:
        raise ValueError("derivative slices of diagonal processes are unsupported")
    deg = u.space_degree
    ks: list = [dict() for _ in range(max(deg, 1))]
    for n in range(1, deg + 1):
        for (a, tc), v in u.kernel(n).items():
            if r_cell not in a:
                continue
            j = a.index(r_cell)
            b = a[:j] + a[j + 1 :]
            ks[n - 1][(b, tc)] = n * v
    return ProcessExpansion(u.part, ks, [])


def skorohod(u: ProcessExpansion) -> ChaosExpansion:
    """Creation operator: symmetrize the time slot into each kernel."""
    if u.has_diag:
        raise ValueError("divergence of diagonal processes is not grid-representable")
    part = u.part
    out: list = [SymKernel.zero(0, part)]
    for n, k in enumerate(u.kernels):
        if not k:
            continue
        vals: dict = defaultdict(float)
        for (b, tc), v in k.items():
            x = _merge_sorted(b, (tc,))
            m_tc = sum(1 for c in x if c == tc)
            vals[x] += v * m_tc / (n + 1)
        while len(out) <= n + 1:
            out.append(SymKernel.zero(len(out), part))
        out[n + 1] = out[n + 1].add(SymKernel(n + 1, part, dict(vals)))
    return ChaosExpansion(part, [k.trimmed() for k in out])


def indefinite_skorohod(u: ProcessExpansion, t: float) -> ChaosExpansion:
    """Skorohod integral of u restricted to [0, t], for a grid point t."""
    idx_t = u.part.index_of(t)
    ks = []
    for k in u.kernels:
        ks.append({(b, tc): v for (b, tc), v in k.items() if tc < idx_t})
    return skorohod(ProcessExpansion(u.part, ks, []))


def condition(F: ChaosExpansion, A: CellSet) -> ChaosExpansion:
    """E(F | sigma-field of the cell union A): restrict kernels to A tensor powers."""
    if not F.part.matches(A.part):
        raise ValueError("partition mismatch")
    return ChaosExpansion(F.part, [k.restrict(A) for k in F.kernels])


def condition_process(u: ProcessExpansion, A: CellSet) -> ProcessExpansion:
    """Condition each u_s on the cell union A and multiply by 1_A in time."""
    if not u.part.matches(A.part):
        raise ValueError("partition mismatch")
    ks = []
    for k in u.kernels:
        ks.append(
            {
                (b, tc): v
                for (b, tc), v in k.items()
                if A.mask[tc] and all(A.mask[c] for c in b)
            }
        )
    dg = []
    for n in range(len(u.diag)):
        dg.append(
            {
                (i, b, rc): w
                for (i, b, rc), w in u.diag_terms(n).items()
                if A.mask[i] and A.mask[rc] and all(A.mask[c] for c in b)
            }
        )
    return ProcessExpansion(u.part, ks, dg)


def seminorm(F: ChaosExpansion, k: int) -> float:
    """Squared graph norm E F^2 + sum_{l<=k} ||D^l F||^2, exactly."""
    if k < 1:
        raise ValueError("k must be >= 1")
    tot = 0.0
    for n in range(F.degree + 1):
        nn = F.kernel(n).norm_sq()
        if nn == 0.0:
            continue
        w = math.factorial(n)
        for l in range(1, min(k, n) + 1):
            w += (math.factorial(n) / math.factorial(n - l)) * math.factorial(n)
        tot += w * nn
    return tot


def _process_kernel_norm_sq(u: ProcessExpansion, n: int) -> float:
    """L2(T^{n+1}) norm of the degree-n kernel of a step process."""
    lam = u.part.lengths
    tot = 0.0
    for (b, tc), v in u.kernel(n).items():
        w = math.factorial(n) / _pfm(b)
        for c in b:
            w *= lam[c]
        tot += w * lam[tc] * v * v
    return tot


def process_seminorm(u: ProcessExpansion, k: int) -> float:
    """Squared norm of u in L2(T; D^{k,2}), exactly.

    For diagonal processes the time integral is carried out per cell by
    Gauss-Legendre nodes, which is exact here because the integrand is a
    polynomial of the running time within each cell.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if u.has_diag:
        from numpy.polynomial.legendre import leggauss

        xq, wq = leggauss(16)
        pts = u.part.points
        tot = 0.0
        for i in range(u.part.n_cells):
            a, b = pts[i], pts[i + 1]
            nodes = a + (b - a) * (xq + 1.0) / 2.0
            for x, w in zip(nodes, wq):
                tot += w * (b - a) / 2.0 * seminorm(u.restrict_at(x), k)
        return tot
    tot = 0.0
    deg = u.space_degree
    for n in range(deg + 1):
        nn = _process_kernel_norm_sq(u, n)
        if nn == 0.0:
            continue
        w = math.factorial(n)
        for l in range(1, min(k, n) + 1):
            w += (math.factorial(n) / math.factorial(n - l)) * math.factorial(n)
        tot += w * nn
    return tot
