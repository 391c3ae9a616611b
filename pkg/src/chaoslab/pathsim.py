"""Poisson path simulation and exact pathwise evaluation of chaos expansions.

Sampling is counter-based: the path for (seed, stream) comes from a Philox
generator keyed by that pair, so results never depend on scheduling or worker
count.  Evaluation of a multiple integral on a path reduces to products of
Charlier polynomials of the per-cell compensated counts; integrand traces of
the form  lambda -> int_0^lambda (projected integrand) dN~  are computed piece
by piece with exact Legendre polynomial fits between breakpoints.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander

from . import _backends
from .chaos import ChaosExpansion
from .grid import CellSet, Partition

__all__ = [
    "PoissonPath",
    "PathBatch",
    "McEstimate",
    "PathTrace",
    "PsiTables",
    "TraceResult",
    "sample_path",
    "charlier",
    "eval_chaos",
    "eval_chaos_batch",
    "ito_integral",
    "mc_estimate",
    "run_traces",
    "trace_y_lambda",
]

# Gauss-Legendre rule per piece: exact for polynomial integrands up to degree
# 31, far above the chaos degree cap; order-16 composite quadrature keeps the
# error on smooth non-polynomial integrands below the 1e-10 budget.
GL_ORDER = 16
MAX_LEGENDRE_DEG = 10

_XQ, _WQ = leggauss(GL_ORDER)
_PK = legvander(_XQ, MAX_LEGENDRE_DEG)  # (Q, KL): P_k(x_q)
# Projection onto Legendre coefficients: c_k = sum_q PROJ[k, q] psi(x_q),
# exact whenever psi is a polynomial of degree <= MAX_LEGENDRE_DEG.
_PROJ = ((2.0 * np.arange(MAX_LEGENDRE_DEG + 1) + 1.0) / 2.0)[:, None] * (
    _PK.T * _WQ[None, :]
)
# Cumulative integrals int_{-1}^{x_q} P_k: CUM[q, 0] = x_q + 1 and for k >= 1
# (P_{k+1}(x_q) - P_{k-1}(x_q)) / (2k + 1).
_CUM = np.empty((GL_ORDER, MAX_LEGENDRE_DEG + 1))
_CUM[:, 0] = _XQ + 1.0
_PK_EXT = legvander(_XQ, MAX_LEGENDRE_DEG + 1)
for _k in range(1, MAX_LEGENDRE_DEG + 1):
    _CUM[:, _k] = (_PK_EXT[:, _k + 1] - _PK_EXT[:, _k - 1]) / (2.0 * _k + 1.0)

_CHUNK = 4096  # fixed MC chunk size; reduction order never depends on workers


def _workers_from_env() -> int:
    try:
        return max(1, int(os.environ.get("CHAOSLAB_WORKERS", "1")))
    except ValueError:
        return 1


# ----------------------------------------------------------------------------
# paths


@dataclass(frozen=True, eq=False)
class PoissonPath:
    """Sorted jump times of one unit-rate Poisson realization on (0, 1]."""

    jumps: np.ndarray

    def __post_init__(self):
        j = np.ascontiguousarray(np.asarray(self.jumps, dtype=np.float64))
        object.__setattr__(self, "jumps", j)
        if j.size and (np.any(np.diff(j) <= 0) or j[0] <= 0.0 or j[-1] > 1.0):
            raise ValueError("jumps must be strictly increasing in (0, 1]")

    @property
    def n_total(self) -> int:
        return int(self.jumps.size)

    def n_at(self, t: float) -> int:
        """N_t (count of jumps <= t)."""
        return int(np.searchsorted(self.jumps, t, side="right"))

    def n_before(self, t: float) -> int:
        """N_{t-} (count of jumps < t)."""
        return int(np.searchsorted(self.jumps, t, side="left"))

    def ntilde(self, t: float) -> float:
        return self.n_at(t) - t

    def ntilde_left(self, t: float) -> float:
        return self.n_before(t) - t

    def count(self, cells: CellSet) -> int:
        return int(self.cell_counts(cells.part)[cells.mask].sum())

    def compensated(self, cells: CellSet) -> float:
        return self.count(cells) - cells.measure()

    def cell_counts(self, part: Partition) -> np.ndarray:
        hi = np.searchsorted(self.jumps, part.points[1:], side="right")
        lo = np.searchsorted(self.jumps, part.points[:-1], side="right")
        return (hi - lo).astype(np.float64)


def sample_path(seed: int, stream: int) -> PoissonPath:
    """Unit-rate Poisson path, a deterministic function of (seed, stream)."""
    rng = np.random.Generator(np.random.Philox(key=[seed & _U64, stream & _U64]))
    n = rng.poisson(1.0)
    return PoissonPath(np.sort(rng.random(n)))


_U64 = (1 << 64) - 1


@dataclass(eq=False)
class PathBatch:
    """A contiguous block of paths stored as a ragged array."""

    jumps_flat: np.ndarray
    offsets: np.ndarray  # (P+1,)
    seed: int
    first_stream: int

    @classmethod
    def sample(cls, seed: int, n_paths: int, first_stream: int = 0) -> "PathBatch":
        parts = []
        offs = np.zeros(n_paths + 1, dtype=np.int64)
        for k in range(n_paths):
            p = sample_path(seed, first_stream + k)
            parts.append(p.jumps)
            offs[k + 1] = offs[k] + p.jumps.size
        flat = np.concatenate(parts) if parts else np.empty(0)
        return cls(flat, offs, seed, first_stream)

    @property
    def n_paths(self) -> int:
        return self.offsets.size - 1

    def path(self, k: int) -> PoissonPath:
        return PoissonPath(self.jumps_flat[self.offsets[k] : self.offsets[k + 1]])

    def cell_counts(self, part: Partition) -> np.ndarray:
        """Per-path per-cell jump counts, shape (P, M)."""
        P = self.n_paths
        counts = np.zeros((P, part.n_cells), dtype=np.float64)
        if self.jumps_flat.size:
            owner = np.repeat(np.arange(P), np.diff(self.offsets))
            ci = np.searchsorted(part.points, self.jumps_flat, side="left") - 1
            ci = np.clip(ci, 0, part.n_cells - 1)
            np.add.at(counts, (owner, ci), 1.0)
        return counts


# ----------------------------------------------------------------------------
# Charlier polynomials


def charlier(n: int, t: float, x: float) -> float:
    """C_n(t, x): coefficient of z^n in (1+z)^(x+t) exp(-z t).

    Computed by the three-term recurrence
    (n+1) C_{n+1} = (x - n) C_n - t C_{n-1},  C_0 = 1, C_1 = x.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1.0
    c_prev, c = 1.0, float(x)
    for k in range(1, n):
        c_prev, c = c, ((x - k) * c - t * c_prev) / (k + 1.0)
    return c


# ----------------------------------------------------------------------------
# pathwise evaluation of expansions


@dataclass(eq=False)
class ExpansionTable:
    """Array encoding of an expansion for batch pathwise evaluation."""

    part: Partition
    c0: float
    cells: np.ndarray  # (E, K) int64
    mults: np.ndarray  # (E, K) int64
    coefs: np.ndarray  # (E,) includes the n! weight
    max_mult: int


def encode_expansion(F: ChaosExpansion) -> ExpansionTable:
    rows = []
    for n in range(1, F.degree + 1):
        fn = math.factorial(n)
        for idx, v in F.kernel(n).values.items():
            if v == 0.0:
                continue
            pairs = []
            run_c, run_m = idx[0], 0
            for c in idx:
                if c == run_c:
                    run_m += 1
                else:
                    pairs.append((run_c, run_m))
                    run_c, run_m = c, 1
            pairs.append((run_c, run_m))
            rows.append((fn * v, pairs))
    kmax = max((len(p) for _, p in rows), default=1)
    E = len(rows)
    cells = np.zeros((E, kmax), dtype=np.int64)
    mults = np.zeros((E, kmax), dtype=np.int64)
    coefs = np.empty(E, dtype=np.float64)
    for e, (w, pairs) in enumerate(rows):
        coefs[e] = w
        for k, (c, m) in enumerate(pairs):
            cells[e, k] = c
            mults[e, k] = m
    mm = int(mults.max()) if E else 0
    from .chaos import expectation

    return ExpansionTable(F.part, expectation(F), cells, mults, coefs, mm)


def eval_chaos_batch(
    F, batch: PathBatch, impl=None, counts: "np.ndarray | None" = None
) -> np.ndarray:
    """Pathwise values of an expansion over a batch of paths."""
    enc = F if isinstance(F, ExpansionTable) else encode_expansion(F)
    impl = impl or _backends.get_impl()
    if counts is None:
        counts = batch.cell_counts(enc.part)
    ctable = impl.charlier_table(counts, enc.part.lengths, enc.max_mult)
    vals = impl.eval_entry_sum(ctable, enc.cells, enc.mults, enc.coefs)
    return vals + enc.c0


def eval_chaos(F: ChaosExpansion, path: PoissonPath) -> float:
    """Exact pathwise value of a finite chaos expansion.

    Each canonical entry with cell multiplicities (m_1, ..., m_k) evaluates to
    n! * coefficient * prod_j C_{m_j}(cell length, compensated cell count);
    the multinomial orbit count and the factorials of the repeated-block
    integrals combine into the single n! weight.
    """
    counts = path.cell_counts(F.part)
    lam = F.part.lengths
    total = 0.0
    for n in range(1, F.degree + 1):
        fn = math.factorial(n)
        for idx, v in F.kernel(n).values.items():
            if v == 0.0:
                continue
            prod = fn * v
            j = 0
            while j < len(idx):
                c = idx[j]
                m = 1
                while j + m < len(idx) and idx[j + m] == c:
                    m += 1
                prod *= charlier(m, lam[c], counts[c] - lam[c])
                j += m
            total += prod
    from .chaos import expectation

    return total + expectation(F)


# ----------------------------------------------------------------------------
# pathwise Ito integrals of step/polynomial integrands


def ito_integral(h, path: PoissonPath, t: float, part: "Partition | None" = None,
                 extra_breaks=()) -> float:
    """int_0^t h_s dN~_s for a predictable integrand given as a callable.

    `h(s)` must return the left limit h_{s-} when s is a breakpoint; between
    breakpoints (grid points, jump times and `extra_breaks`) the integrand is
    assumed polynomial, so the compensator part integrates exactly with the
    order-16 Gauss rule per piece.
    """
    if t > 1.0 or t < 0.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return 0.0
    breaks = [0.0, t]
    if part is not None:
        breaks.extend(p for p in part.points if 0.0 < p < t)
    breaks.extend(b for b in extra_breaks if 0.0 < b < t)
    jumps = [float(tau) for tau in path.jumps if tau <= t]
    breaks.extend(tau for tau in jumps if tau < t)
    bp = np.unique(np.asarray(breaks))
    jump_part = sum(h(tau) for tau in jumps)
    drift = 0.0
    for a, b in zip(bp[:-1], bp[1:]):
        nodes = a + (b - a) * (_XQ + 1.0) / 2.0
        drift += (b - a) / 2.0 * sum(w * h(x) for w, x in zip(_WQ, nodes))
    return jump_part - drift


# ----------------------------------------------------------------------------
# Monte Carlo harness


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int


def _eval_functional(functional, batch: PathBatch) -> np.ndarray:
    if hasattr(functional, "eval_batch"):
        return np.asarray(functional.eval_batch(batch), dtype=np.float64)
    return np.array(
        [functional(batch.path(k)) for k in range(batch.n_paths)], dtype=np.float64
    )


def mc_samples(functional, n_samples: int, seed: int, workers: "int | None" = None
               ) -> np.ndarray:
    """Per-sample values, chunked over fixed stream blocks.

    The chunk layout depends only on (seed, n_samples), so any worker count
    produces bit-identical output; chunks are written back by index.
    """
    n_chunks = (n_samples + _CHUNK - 1) // _CHUNK
    out = np.empty(n_samples, dtype=np.float64)

    def job(c: int):
        lo = c * _CHUNK
        hi = min(lo + _CHUNK, n_samples)
        batch = PathBatch.sample(seed, hi - lo, first_stream=lo)
        out[lo:hi] = _eval_functional(functional, batch)

    workers = workers if workers is not None else _workers_from_env()
    if workers <= 1 or n_chunks == 1:
        for c in range(n_chunks):
            job(c)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(job, range(n_chunks)))
    return out


def mc_estimate(functional, n_samples: int, seed: int,
                workers: "int | None" = None) -> McEstimate:
    """Sample mean and standard error over independent streams."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    vals = mc_samples(functional, n_samples, seed, workers)
    mean = float(np.sum(vals)) / n_samples
    var = float(np.sum((vals - mean) ** 2)) / (n_samples - 1)
    return McEstimate(mean, math.sqrt(var / n_samples), n_samples, seed)


# ----------------------------------------------------------------------------
# integrand traces


@dataclass(eq=False)
class PsiTables:
    """Per-cell entry tables of a projected integrand s -> E(w_s | F_{[s,t]^c}).

    For s in cell i the value on a path is
    sum_e W_e * prod_k C_{fm}(lam_c, count_c - lam_c) * C_{pm}(l, k_i - l)
    with l = s - t_i and k_i the jump count in (t_i, s); the first factors run
    over full surviving cells, the last over the partial cell cut at s.
    """

    part: Partition
    t: float
    idx_t: int
    cell_ptr: np.ndarray  # (idx_t + 1,)
    W: np.ndarray  # (E,)
    pm: np.ndarray  # (E,)
    fc: np.ndarray  # (E, K)
    fm: np.ndarray  # (E, K)
    max_full: int

    @property
    def n_entries(self) -> int:
        return self.W.size


@dataclass(eq=False)
class TraceResult:
    """Flat trace data of one path chunk (pieces, jumps, terminal values)."""

    n_paths: int
    piece_path: np.ndarray
    w_nodes: np.ndarray
    y_nodes: np.ndarray
    psi_nodes: np.ndarray
    coefs: np.ndarray
    y_start: np.ndarray
    drift: np.ndarray
    jmp_path: np.ndarray
    jmp_y_before: np.ndarray
    jmp_y_after: np.ndarray
    jmp_psi: np.ndarray
    y_end: np.ndarray

    def node_sum(self, values: np.ndarray) -> np.ndarray:
        """Per-path sum of quadrature-weighted node values."""
        per_piece = (self.w_nodes * values).sum(axis=1)
        return np.bincount(self.piece_path, weights=per_piece, minlength=self.n_paths)

    def jump_sum(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.jmp_path, weights=values, minlength=self.n_paths)


def _merged_breakpoints(tables: PsiTables, batch: PathBatch):
    pts = tables.part.points
    grid = pts[: tables.idx_t + 1]
    t = tables.t
    bps, isj, isg = [], [], []
    offs = np.zeros(batch.n_paths + 1, dtype=np.int64)
    for k in range(batch.n_paths):
        j = batch.jumps_flat[batch.offsets[k] : batch.offsets[k + 1]]
        j = j[j <= t]
        merged = np.unique(np.concatenate([grid, j]))
        jflag = np.isin(merged, j)
        gflag = np.isin(merged, grid)
        bps.append(merged)
        isj.append(jflag)
        isg.append(gflag)
        offs[k + 1] = offs[k] + merged.size
    return (
        np.concatenate(bps) if bps else np.empty(0),
        np.concatenate(isj).astype(np.uint8) if isj else np.empty(0, dtype=np.uint8),
        np.concatenate(isg).astype(np.uint8) if isg else np.empty(0, dtype=np.uint8),
        offs,
    )


def run_traces(
    tables: PsiTables,
    batch: PathBatch,
    mult: "np.ndarray | None" = None,
    impl=None,
    counts: "np.ndarray | None" = None,
) -> TraceResult:
    """Trace lambda -> int_0^lambda psi(s) dN~_s for every path of the batch."""
    impl = impl or _backends.get_impl()
    part = tables.part
    if counts is None:
        counts = batch.cell_counts(part)
    ctable = impl.charlier_table(counts, part.lengths, tables.max_full)
    fprod = impl.entry_factors(ctable, tables.fc, tables.fm, tables.W)
    bp, isj, isg, offs = _merged_breakpoints(tables, batch)
    if mult is None:
        mult = np.ones(batch.n_paths)
    res = impl.trace_engine(
        part.points,
        tables.idx_t,
        bp,
        isj,
        isg,
        offs,
        fprod,
        tables.cell_ptr,
        tables.pm,
        np.asarray(mult, dtype=np.float64),
        _XQ,
        _WQ,
        _PROJ,
        _CUM,
    )
    return TraceResult(batch.n_paths, *res)


@dataclass(eq=False)
class PathTrace:
    """Cadlag trace lambda -> Y_t^lambda on [0, t] for a single path."""

    t: float
    breakpoints: np.ndarray
    values: np.ndarray  # right-continuous values at the breakpoints
    left_values: np.ndarray
    piece_coefs: np.ndarray  # Legendre coefficients of psi per piece
    piece_y_start: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def value_at(self, lam: float) -> float:
        """Y_t^lambda (right-continuous) at an arbitrary lambda in [0, t]."""
        if not 0.0 <= lam <= self.t:
            raise ValueError("lambda must lie in [0, t]")
        k = int(np.searchsorted(self.breakpoints, lam, side="right")) - 1
        if k >= self.breakpoints.size - 1:
            return self.terminal
        a, b = self.breakpoints[k], self.breakpoints[k + 1]
        if lam == a:
            return float(self.values[k])
        xi = 2.0 * (lam - a) / (b - a) - 1.0
        c = self.piece_coefs[k]
        acc = c[0] * (xi + 1.0)
        pkm, pk = 1.0, xi
        for deg in range(1, c.size):
            pkp = ((2 * deg + 1) * xi * pk - deg * pkm) / (deg + 1)
            acc += c[deg] * (pkp - pkm) / (2 * deg + 1)
            pkm, pk = pk, pkp
        return float(self.piece_y_start[k] - (b - a) / 2.0 * acc)


def trace_y_lambda(w_proj, t: float, path: PoissonPath) -> PathTrace:
    """Full cadlag trace of the indefinite integral of a projected integrand."""
    tables = w_proj.tables if hasattr(w_proj, "tables") else w_proj
    if abs(tables.t - t) > 1e-13:
        raise ValueError("horizon t must match the projection horizon")
    batch = PathBatch(path.jumps.copy(), np.array([0, path.jumps.size]), -1, 0)
    tr = run_traces(tables, batch)
    bp, isj, _, _ = _merged_breakpoints(tables, batch)
    values = np.zeros(bp.size)
    left = np.zeros(bp.size)
    # piece k spans (bp[k], bp[k+1]); y_start is the value at bp[k]
    for k in range(tr.y_start.size):
        values[k] = tr.y_start[k]
        left[k] = tr.y_start[k]
    values[-1] = tr.y_end[0]
    left[-1] = tr.y_start[-1] - tr.drift[-1] if tr.y_start.size else 0.0
    ji = 0
    for k in range(1, bp.size):
        if isj[k]:
            left[k] = tr.jmp_y_before[ji]
            values[k] = tr.jmp_y_after[ji]
            ji += 1
        elif k < bp.size - 1:
            left[k] = values[k]
    return PathTrace(t, bp, values, left, tr.coefs, tr.y_start)
