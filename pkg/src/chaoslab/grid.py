"""Partitions of [0,1] and exact algebra on piecewise-constant symmetric kernels.

A degree-n kernel is stored sparsely on canonical nondecreasing cell
multi-indices (i_1 <= ... <= i_n), so it is symmetric by construction.
Inner products, contractions and tensor operations reduce to finite sums
weighted by cell lengths, which keeps every identity downstream exact up to
float roundoff.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Partition",
    "CellSet",
    "SymKernel",
    "make_uniform_partition",
    "refine",
    "common_refinement",
    "lift",
    "symmetrize",
    "tensor_power_kernel",
    "indicator_kernel",
    "contract",
    "inner",
]

# Tolerance for pure-sum invariants (cell lengths, grid-point lookup).
SUM_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Partition:
    """Ordered grid 0 = t_0 < ... < t_M = 1.

    Cell i is the interval (t_i, t_{i+1}]; by convention cell 0 also owns the
    point 0, so that indicator kernels of [0, t] are clean cell unions.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("partition needs at least two points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise ValueError("partition must start at 0 and end at 1")
        if not np.all(np.diff(pts) > 0.0):
            raise ValueError("partition points must be strictly increasing")
        if abs(float(np.sum(np.diff(pts))) - 1.0) > SUM_TOL:
            raise ValueError("cell lengths must sum to 1")

    @property
    def n_cells(self) -> int:
        return self.points.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.points)

    def matches(self, other: "Partition") -> bool:
        return self.points.size == other.points.size and bool(
            np.array_equal(self.points, other.points)
        )

    def index_of(self, t: float) -> int:
        """Position of the grid point t in `points` (t must lie on the grid)."""
        i = int(np.searchsorted(self.points, t))
        for j in (i, i - 1, i + 1):
            if 0 <= j < self.points.size and abs(self.points[j] - t) <= SUM_TOL:
                return j
        raise ValueError(f"{t!r} is not a grid point of this partition")

    def is_grid_point(self, t: float) -> bool:
        try:
            self.index_of(t)
            return True
        except ValueError:
            return False

    def cell_of(self, s: float) -> int:
        """Index of the cell containing s (cells are (t_i, t_{i+1}], cell 0 owns 0)."""
        if s < 0.0 or s > 1.0:
            raise ValueError("s must lie in [0, 1]")
        i = int(np.searchsorted(self.points, s, side="left")) - 1
        return max(i, 0)

    def cells_covering(self, a: float, b: float) -> range:
        """Cells whose union is (a, b], for grid points a <= b."""
        ia, ib = self.index_of(a), self.index_of(b)
        if ia > ib:
            raise ValueError("need a <= b")
        return range(ia, ib)


def make_uniform_partition(m: int) -> Partition:
    """Uniform grid with m cells of length 1/m."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    return Partition(np.linspace(0.0, 1.0, m + 1))


def refine(part: Partition, extra: "list[float]") -> Partition:
    """Partition with the extra interior times inserted as grid points."""
    pts = list(part.points)
    for t in extra:
        if not 0.0 < t < 1.0:
            raise ValueError("extra times must lie in (0, 1)")
        pts.append(float(t))
    return Partition(np.unique(np.asarray(pts)))


def common_refinement(p1: Partition, p2: Partition) -> Partition:
    if p1.matches(p2):
        return p1
    return Partition(np.union1d(p1.points, p2.points))


@dataclass(frozen=True, eq=False)
class CellSet:
    """Borel set that is a union of grid cells, stored as a membership mask."""

    part: Partition
    mask: np.ndarray

    def __post_init__(self):
        mk = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        object.__setattr__(self, "mask", mk)
        if mk.shape != (self.part.n_cells,):
            raise ValueError("mask length must equal the cell count")

    @classmethod
    def full(cls, part: Partition) -> "CellSet":
        return cls(part, np.ones(part.n_cells, dtype=bool))

    @classmethod
    def empty(cls, part: Partition) -> "CellSet":
        return cls(part, np.zeros(part.n_cells, dtype=bool))

    @classmethod
    def from_cells(cls, part: Partition, cells) -> "CellSet":
        mask = np.zeros(part.n_cells, dtype=bool)
        mask[list(cells)] = True
        return cls(part, mask)

    @classmethod
    def interval(cls, part: Partition, a: float, b: float) -> "CellSet":
        """The set (a, b] for grid points a <= b (equals [a, b] up to a null set)."""
        return cls.from_cells(part, part.cells_covering(a, b))

    def complement(self) -> "CellSet":
        return CellSet(self.part, ~self.mask)

    def union(self, other: "CellSet") -> "CellSet":
        return CellSet(self.part, self.mask | other.mask)

    def measure(self) -> float:
        return float(np.sum(self.part.lengths[self.mask]))

    def contains_cell(self, i: int) -> bool:
        return bool(self.mask[i])


# ----------------------------------------------------------------------------
# multiset helpers on canonical (sorted) cell multi-indices


def _pfm(idx: tuple) -> float:
    """Product of multiplicity factorials of a sorted multi-index."""
    out = 1.0
    run = 1
    for k in range(1, len(idx)):
        if idx[k] == idx[k - 1]:
            run += 1
            out *= run
        else:
            run = 1
    return out


def _arrangements(idx: tuple) -> float:
    """Number of distinct orderings of a sorted multi-index: n!/prod(mult!)."""
    return math.factorial(len(idx)) / _pfm(idx)


def _multiplicities(idx: tuple) -> "list[tuple[int, int]]":
    """(cell, multiplicity) pairs of a sorted multi-index."""
    out = []
    for c, grp in itertools.groupby(idx):
        out.append((c, sum(1 for _ in grp)))
    return out


def _sub_multisets(idx: tuple, k: int):
    """Distinct sorted sub-multisets of size k, each with its complement."""
    items = _multiplicities(idx)

    def rec(pos: int, need: int, acc: list):
        if need == 0:
            chosen = tuple(acc)
            rest = list(idx)
            for c in chosen:
                rest.remove(c)
            yield chosen, tuple(rest)
            return
        if pos >= len(items):
            return
        c, m = items[pos]
        avail = sum(mm for _, mm in items[pos:])
        if avail < need:
            return
        for take in range(min(m, need), -1, -1):
            yield from rec(pos + 1, need - take, acc + [c] * take)

    yield from rec(0, k, [])


def _multiset_minus(a: tuple, b: tuple):
    """a minus b as multisets (both sorted), or None if b is not contained in a."""
    out = []
    i = j = 0
    while i < len(a):
        if j < len(b) and a[i] == b[j]:
            i += 1
            j += 1
        elif j < len(b) and a[i] > b[j]:
            return None
        else:
            out.append(a[i])
            i += 1
    if j < len(b):
        return None
    return tuple(out)


def _merge_sorted(a: tuple, b: tuple) -> tuple:
    return tuple(sorted(a + b))


# ----------------------------------------------------------------------------


@dataclass(eq=False)
class SymKernel:
    """Symmetric piecewise-constant kernel of a given degree.

    `values` maps canonical nondecreasing cell multi-indices to coefficients;
    absent entries are 0.  Degree 0 is the single scalar at the empty index.
    """

    degree: int
    part: Partition
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        for idx in self.values:
            self._check_index(idx)

    def _check_index(self, idx: tuple):
        if len(idx) != self.degree:
            raise ValueError(f"index {idx} has wrong length for degree {self.degree}")
        if any(not 0 <= c < self.part.n_cells for c in idx):
            raise ValueError(f"index {idx} has out-of-range cells")
        if any(idx[k] > idx[k + 1] for k in range(len(idx) - 1)):
            raise ValueError(f"index {idx} is not canonical (sorted)")

    @classmethod
    def zero(cls, degree: int, part: Partition) -> "SymKernel":
        return cls(degree, part, {})

    @classmethod
    def scalar(cls, c: float, part: Partition) -> "SymKernel":
        return cls(0, part, {(): float(c)} if c != 0.0 else {})

    def get(self, idx: tuple) -> float:
        """Kernel value at an arbitrary-order multi-index (reads canonically)."""
        return self.values.get(tuple(sorted(idx)), 0.0)

    def copy(self) -> "SymKernel":
        return SymKernel(self.degree, self.part, dict(self.values))

    def scaled(self, c: float) -> "SymKernel":
        if c == 0.0:
            return SymKernel.zero(self.degree, self.part)
        return SymKernel(self.degree, self.part, {k: c * v for k, v in self.values.items()})

    def add(self, other: "SymKernel") -> "SymKernel":
        _require_compatible(self, other)
        vals = dict(self.values)
        for k, v in other.values.items():
            vals[k] = vals.get(k, 0.0) + v
        return SymKernel(self.degree, self.part, vals)

    def restrict(self, cells: CellSet) -> "SymKernel":
        """Zero every entry whose multi-index touches a cell outside the set."""
        if not self.part.matches(cells.part):
            raise ValueError("partition mismatch")
        vals = {
            idx: v
            for idx, v in self.values.items()
            if all(cells.mask[c] for c in idx)
        }
        return SymKernel(self.degree, self.part, vals)

    def trimmed(self) -> "SymKernel":
        return SymKernel(
            self.degree, self.part, {k: v for k, v in self.values.items() if v != 0.0}
        )

    def norm_sq(self) -> float:
        return inner(self, self)

    def max_abs(self) -> float:
        return max((abs(v) for v in self.values.values()), default=0.0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol


def _require_compatible(f: SymKernel, g: SymKernel):
    if f.degree != g.degree:
        raise ValueError("degree mismatch")
    if not f.part.matches(g.part):
        raise ValueError("partition mismatch")


def symmetrize(raw: dict, degree: int, part: Partition) -> SymKernel:
    """Symmetrization of a kernel given by arbitrary-order multi-index values.

    The canonical entry equals the average of the raw values over all distinct
    orderings of the index; orderings absent from `raw` contribute 0.
    """
    sums: dict = defaultdict(float)
    for idx, v in raw.items():
        idx = tuple(idx)
        if len(idx) != degree:
            raise ValueError(f"index {idx} has wrong length for degree {degree}")
        sums[tuple(sorted(idx))] += float(v)
    vals = {a: s / _arrangements(a) for a, s in sums.items()}
    return SymKernel(degree, part, vals)


def tensor_power_kernel(h, n: int, part: Partition) -> SymKernel:
    """The n-fold tensor power of a per-cell function h: value prod_j h_{i_j}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h = np.asarray(h, dtype=float)
    if h.shape != (part.n_cells,):
        raise ValueError("h must give one value per cell")
    support = [i for i in range(part.n_cells) if h[i] != 0.0]
    vals = {}
    for idx in itertools.combinations_with_replacement(support, n):
        v = 1.0
        for c in idx:
            v *= h[c]
        vals[idx] = v
    return SymKernel(n, part, vals)


def indicator_kernel(cells: CellSet) -> SymKernel:
    """Degree-1 kernel equal to 1 on the given cell union."""
    vals = {(i,): 1.0 for i in range(cells.part.n_cells) if cells.mask[i]}
    return SymKernel(1, cells.part, vals)


def inner(f: SymKernel, g: SymKernel) -> float:
    """L2(T^n) pairing: multiplicity-weighted sum of products times cell lengths."""
    _require_compatible(f, g)
    lam = f.part.lengths
    small, big = (f.values, g.values) if len(f.values) <= len(g.values) else (g.values, f.values)
    tot = 0.0
    for idx, v in small.items():
        w = big.get(idx)
        if w is None:
            continue
        p = _arrangements(idx)
        for c in idx:
            p *= lam[c]
        tot += p * v * w
    return tot


def contract(f: SymKernel, g: SymKernel, r: int, l: int) -> SymKernel:
    """Contraction identifying r variable pairs and integrating l of them.

    r - l variables are identified pointwise and stay free, l are identified
    and integrated (a cell-length weighted sum), and the remaining m - r and
    n - r variables of f and g stay free.  The result is symmetrized jointly
    over all surviving variables; r = l = 0 is the symmetrized tensor product.
    """
    m, n = f.degree, g.degree
    if not (0 <= r <= min(m, n)):
        raise ValueError(f"r={r} out of range for degrees ({m}, {n})")
    if not (0 <= l <= r):
        raise ValueError(f"l={l} out of range for r={r}")
    if not f.part.matches(g.part):
        raise ValueError("partition mismatch")
    part = f.part
    lam = part.lengths
    d = m + n - r - l
    fact = math.factorial

    # Index g entries by their (integrated, identified) shared sub-multisets.
    g_index: dict = defaultdict(list)
    for ag, vg in g.values.items():
        for u_g, rest in _sub_multisets(ag, l):
            for gam_g, sm in _sub_multisets(rest, r - l):
                g_index[(u_g, gam_g)].append((sm, vg))

    out: dict = defaultdict(float)
    cl = fact(r - l)
    cm = fact(m - r)
    cn = fact(n - r)
    for af, vf in f.values.items():
        for u, rest in _sub_multisets(af, l):
            wu = fact(l) / _pfm(u)
            for c in u:
                wu *= lam[c]
            for gam, tm in _sub_multisets(rest, r - l):
                matches = g_index.get((u, gam))
                if not matches:
                    continue
                base = (
                    wu
                    * vf
                    * (cl / _pfm(gam))
                    * (cm / _pfm(tm))
                )
                gt = _merge_sorted(gam, tm)
                for sm, vg in matches:
                    x = _merge_sorted(gt, sm)
                    coef = (_pfm(x) / fact(d)) * (cn / _pfm(sm))
                    out[x] += base * coef * vg
    return SymKernel(d, part, dict(out))


def lift(f: SymKernel, finer: Partition) -> SymKernel:
    """Represent f on a nested refinement (same function, finer cells)."""
    coarse = f.part
    if finer.matches(coarse):
        return f.copy()
    # Every coarse point must be a fine point.
    fine_pos = {}
    for i, t in enumerate(coarse.points):
        fine_pos[i] = finer.index_of(t)  # raises if not nested
    children = {
        i: tuple(range(fine_pos[i], fine_pos[i + 1])) for i in range(coarse.n_cells)
    }
    vals = {}
    for idx, v in f.values.items():
        pools = []
        for c, mult in _multiplicities(idx):
            pools.append(
                list(itertools.combinations_with_replacement(children[c], mult))
            )
        for combo in itertools.product(*pools):
            fine_idx = tuple(sorted(itertools.chain.from_iterable(combo)))
            vals[fine_idx] = v
    return SymKernel(f.degree, finer, vals)
