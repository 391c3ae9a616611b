"""Pure-numpy implementations of the hot kernels (fallback backend).

Everything is vectorized over paths; the martingale-trace engine flattens the
ragged per-path piece structure into index arrays so no per-path Python loop
survives in the inner work.
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"


def charlier_table(counts: np.ndarray, lam: np.ndarray, nmax: int) -> np.ndarray:
    """C_k(lam_i, counts[p,i] - lam_i) for k = 0..nmax; shape (P, M, nmax+1)."""
    P, M = counts.shape
    out = np.empty((P, M, nmax + 1), dtype=np.float64)
    out[:, :, 0] = 1.0
    if nmax >= 1:
        x = counts - lam[None, :]
        out[:, :, 1] = x
        for n in range(1, nmax):
            out[:, :, n + 1] = (
                (x - n) * out[:, :, n] - lam[None, :] * out[:, :, n - 1]
            ) / (n + 1.0)
    return out


def charlier_grid(t: np.ndarray, x: np.ndarray, nmax: int) -> np.ndarray:
    """C_k(t, x) elementwise for k = 0..nmax; shape t.shape + (nmax+1,)."""
    out = np.empty(t.shape + (nmax + 1,), dtype=np.float64)
    out[..., 0] = 1.0
    if nmax >= 1:
        out[..., 1] = x
        for n in range(1, nmax):
            out[..., n + 1] = ((x - n) * out[..., n] - t * out[..., n - 1]) / (n + 1.0)
    return out


def entry_factors(
    ctable: np.ndarray, cells: np.ndarray, mults: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """w_e * prod_k C_{mults[e,k]}(cell cells[e,k]) per path; shape (P, E)."""
    P = ctable.shape[0]
    E, K = cells.shape
    out = np.repeat(w[None, :], P, axis=0)
    for k in range(K):
        live = mults[:, k] > 0
        if not live.any():
            continue
        out[:, live] *= ctable[:, cells[live, k], mults[live, k]]
    return out


def eval_entry_sum(
    ctable: np.ndarray, cells: np.ndarray, mults: np.ndarray, coefs: np.ndarray
) -> np.ndarray:
    """Sum over entries of the entry factors; shape (P,)."""
    if coefs.size == 0:
        return np.zeros(ctable.shape[0])
    return entry_factors(ctable, cells, mults, coefs).sum(axis=1)


def trace_engine(
    pts: np.ndarray,
    idx_t: int,
    bp: np.ndarray,
    is_jump: np.ndarray,
    is_grid: np.ndarray,
    bp_off: np.ndarray,
    fprod: np.ndarray,
    cell_ptr: np.ndarray,
    pm: np.ndarray,
    mult: np.ndarray,
    xq: np.ndarray,
    wq: np.ndarray,
    proj: np.ndarray,
    cum: np.ndarray,
):
    """Evaluate all integrand/martingale traces of one path chunk.

    Returns per-piece node data (quadrature weights, trace values, integrand
    values, Legendre coefficients), per-jump data (left value, right value,
    integrand left limit) and the per-path terminal values.
    """
    P = bp_off.size - 1
    B = bp.size
    Q = xq.size
    KL = proj.shape[0]

    path_of_bp = np.repeat(np.arange(P), np.diff(bp_off))
    q_idx = np.arange(B)
    is_last = q_idx == (bp_off[path_of_bp + 1] - 1)
    start = q_idx[~is_last]
    p_path = path_of_bp[~is_last]
    a = bp[start]
    b = bp[start + 1]
    end_isjump = is_jump[start + 1].astype(bool)
    NP = start.size

    ci = np.searchsorted(pts, a, side="right") - 1
    ci = np.clip(ci, 0, None)

    # jumps inside the current cell up to the piece start (strict left limits)
    jc_global = np.cumsum(is_jump)
    jc_base = jc_global[bp_off[path_of_bp]]
    jcount = jc_global - jc_base  # jump breakpoints up to q within the path
    grid_idx = np.where(is_grid.astype(bool), q_idx, -1)
    last_grid = np.maximum.accumulate(grid_idx)
    k_base = (jcount[start] - jcount[last_grid[start]]).astype(np.float64)

    h = b - a
    ell0 = a - pts[ci]
    ellq = ell0[:, None] + h[:, None] * (xq[None, :] + 1.0) / 2.0
    ell_end = b - pts[ci]

    psi = np.zeros((NP, Q))
    psi_end = np.zeros(NP)
    for i in range(idx_t):
        e0, e1 = int(cell_ptr[i]), int(cell_ptr[i + 1])
        if e1 == e0:
            continue
        sel = np.where(ci == i)[0]
        if sel.size == 0:
            continue
        mp = int(pm[e0:e1].max())
        tq = ellq[sel]
        cq = charlier_grid(tq, k_base[sel][:, None] - tq, mp)
        te = ell_end[sel]
        ce = charlier_grid(te, k_base[sel] - te, mp)
        for e in range(e0, e1):
            f = fprod[p_path[sel], e]
            psi[sel] += f[:, None] * cq[..., int(pm[e])]
            psi_end[sel] += f * ce[..., int(pm[e])]
    psi *= mult[p_path][:, None]
    psi_end *= mult[p_path]

    c = psi @ proj.T  # Legendre coefficients per piece
    drift = h * c[:, 0]
    d_y = -drift + np.where(end_isjump, psi_end, 0.0)

    piece_off = bp_off[:-1] - np.arange(P)  # pieces preceding each path
    csz = np.concatenate([[0.0], np.cumsum(d_y)])
    base = csz[piece_off[p_path]]
    y_start = csz[np.arange(NP)] - base
    y_end_all = csz[bp_off[1:] - np.arange(1, P + 1)] - csz[piece_off]

    y_nodes = y_start[:, None] - (h / 2.0)[:, None] * (c @ cum.T)
    w_nodes = (h / 2.0)[:, None] * wq[None, :]
    y_before = y_start - drift

    jsel = np.where(end_isjump)[0]
    return (
        p_path,
        w_nodes,
        y_nodes,
        psi,
        c,
        y_start,
        drift,
        p_path[jsel],
        y_before[jsel],
        y_before[jsel] + psi_end[jsel],
        psi_end[jsel],
        y_end_all,
    )
