"""Numba-jitted implementations of the hot kernels (primary backend)."""
from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _charlier_table_fill(counts, lam, nmax, out):
    P, M = counts.shape
    for p in range(P):
        for i in range(M):
            out[p, i, 0] = 1.0
            if nmax >= 1:
                x = counts[p, i] - lam[i]
                out[p, i, 1] = x
                for n in range(1, nmax):
                    out[p, i, n + 1] = (
                        (x - n) * out[p, i, n] - lam[i] * out[p, i, n - 1]
                    ) / (n + 1.0)


def charlier_table(counts, lam, nmax):
    out = np.empty((counts.shape[0], counts.shape[1], nmax + 1), dtype=np.float64)
    _charlier_table_fill(counts, lam, nmax, out)
    return out


@njit(**_OPTS)
def _charlier_scalar(n, t, x):
    if n == 0:
        return 1.0
    c_prev = 1.0
    c = x
    for k in range(1, n):
        c_prev, c = c, ((x - k) * c - t * c_prev) / (k + 1.0)
    return c


def charlier_grid(t, x, nmax):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(t.shape + (nmax + 1,), dtype=np.float64)
    _charlier_grid_fill(t.ravel(), x.ravel(), nmax, out.reshape(-1, nmax + 1))
    return out


@njit(**_OPTS)
def _charlier_grid_fill(t, x, nmax, out):
    for j in range(t.size):
        out[j, 0] = 1.0
        if nmax >= 1:
            out[j, 1] = x[j]
            for n in range(1, nmax):
                out[j, n + 1] = ((x[j] - n) * out[j, n] - t[j] * out[j, n - 1]) / (
                    n + 1.0
                )


@njit(**_OPTS)
def _entry_factors_fill(ctable, cells, mults, w, out):
    P = ctable.shape[0]
    E, K = cells.shape
    for p in range(P):
        for e in range(E):
            f = w[e]
            for k in range(K):
                m = mults[e, k]
                if m > 0:
                    f *= ctable[p, cells[e, k], m]
            out[p, e] = f


def entry_factors(ctable, cells, mults, w):
    out = np.empty((ctable.shape[0], cells.shape[0]), dtype=np.float64)
    _entry_factors_fill(ctable, cells, mults, w, out)
    return out


@njit(**_OPTS)
def _eval_entry_sum_fill(ctable, cells, mults, coefs, out):
    P = ctable.shape[0]
    E, K = cells.shape
    for p in range(P):
        acc = 0.0
        for e in range(E):
            f = coefs[e]
            for k in range(K):
                m = mults[e, k]
                if m > 0:
                    f *= ctable[p, cells[e, k], m]
            acc += f
        out[p] = acc


def eval_entry_sum(ctable, cells, mults, coefs):
    out = np.zeros(ctable.shape[0], dtype=np.float64)
    if coefs.size:
        _eval_entry_sum_fill(ctable, cells, mults, coefs, out)
    return out


@njit(**_OPTS)
def _trace_fill(
    pts,
    idx_t,
    bp,
    is_jump,
    is_grid,
    bp_off,
    fprod,
    cell_ptr,
    pm,
    mult,
    xq,
    wq,
    proj,
    cum,
    piece_path,
    w_nodes,
    y_nodes,
    psi_nodes,
    coefs,
    y_start_out,
    drift_out,
    jmp_path,
    jmp_yb,
    jmp_ya,
    jmp_psi,
    y_end,
):
    P = bp_off.size - 1
    Q = xq.size
    KL = proj.shape[0]
    psi = np.empty(Q)
    cw = np.empty(KL)
    ctab = np.empty((Q, 16))
    ctab_end = np.empty(16)
    pc = 0
    jc = 0
    for p in range(P):
        y = 0.0
        k_base = 0.0
        mm = mult[p]
        for q in range(bp_off[p], bp_off[p + 1] - 1):
            a = bp[q]
            b = bp[q + 1]
            if is_grid[q]:
                k_base = 0.0
            ci = np.searchsorted(pts, a, side="right") - 1
            if ci < 0:
                ci = 0
            h = b - a
            ell0 = a - pts[ci]
            e0 = cell_ptr[ci] if ci < idx_t else 0
            e1 = cell_ptr[ci + 1] if ci < idx_t else 0
            for qq in range(Q):
                psi[qq] = 0.0
            psi_end = 0.0
            if e1 > e0:
                mp = 0
                for e in range(e0, e1):
                    if pm[e] > mp:
                        mp = pm[e]
                for qq in range(Q):
                    ell = ell0 + h * (xq[qq] + 1.0) / 2.0
                    x = k_base - ell
                    ctab[qq, 0] = 1.0
                    if mp >= 1:
                        ctab[qq, 1] = x
                        for n in range(1, mp):
                            ctab[qq, n + 1] = (
                                (x - n) * ctab[qq, n] - ell * ctab[qq, n - 1]
                            ) / (n + 1.0)
                elle = b - pts[ci]
                xe = k_base - elle
                ctab_end[0] = 1.0
                if mp >= 1:
                    ctab_end[1] = xe
                    for n in range(1, mp):
                        ctab_end[n + 1] = (
                            (xe - n) * ctab_end[n] - elle * ctab_end[n - 1]
                        ) / (n + 1.0)
                for e in range(e0, e1):
                    f = fprod[p, e]
                    if f == 0.0:
                        continue
                    m = pm[e]
                    for qq in range(Q):
                        psi[qq] += f * ctab[qq, m]
                    psi_end += f * ctab_end[m]
            for qq in range(Q):
                psi[qq] *= mm
            psi_end *= mm
            for k in range(KL):
                s = 0.0
                for qq in range(Q):
                    s += proj[k, qq] * psi[qq]
                cw[k] = s
            drift = h * cw[0]
            piece_path[pc] = p
            y_start_out[pc] = y
            drift_out[pc] = drift
            for qq in range(Q):
                w_nodes[pc, qq] = wq[qq] * h / 2.0
                psi_nodes[pc, qq] = psi[qq]
                acc = 0.0
                for k in range(KL):
                    acc += cw[k] * cum[qq, k]
                y_nodes[pc, qq] = y - (h / 2.0) * acc
            for k in range(KL):
                coefs[pc, k] = cw[k]
            yb = y - drift
            if is_jump[q + 1]:
                jmp_path[jc] = p
                jmp_yb[jc] = yb
                jmp_psi[jc] = psi_end
                jmp_ya[jc] = yb + psi_end
                y = yb + psi_end
                jc += 1
                k_base += 1.0
            else:
                y = yb
            pc += 1
        y_end[p] = y


def trace_engine(
    pts,
    idx_t,
    bp,
    is_jump,
    is_grid,
    bp_off,
    fprod,
    cell_ptr,
    pm,
    mult,
    xq,
    wq,
    proj,
    cum,
):
    P = bp_off.size - 1
    NP = bp.size - P
    NJ = int(is_jump.sum())
    Q = xq.size
    KL = proj.shape[0]
    piece_path = np.empty(NP, dtype=np.int64)
    w_nodes = np.empty((NP, Q))
    y_nodes = np.empty((NP, Q))
    psi_nodes = np.empty((NP, Q))
    coefs = np.empty((NP, KL))
    y_start = np.empty(NP)
    drift = np.empty(NP)
    jmp_path = np.empty(NJ, dtype=np.int64)
    jmp_yb = np.empty(NJ)
    jmp_ya = np.empty(NJ)
    jmp_psi = np.empty(NJ)
    y_end = np.empty(P)
    _trace_fill(
        pts,
        idx_t,
        bp,
        is_jump,
        is_grid,
        bp_off,
        fprod,
        cell_ptr,
        pm,
        mult,
        xq,
        wq,
        proj,
        cum,
        piece_path,
        w_nodes,
        y_nodes,
        psi_nodes,
        coefs,
        y_start,
        drift,
        jmp_path,
        jmp_yb,
        jmp_ya,
        jmp_psi,
        y_end,
    )
    return (
        piece_path,
        w_nodes,
        y_nodes,
        psi_nodes,
        coefs,
        y_start,
        drift,
        jmp_path,
        jmp_yb,
        jmp_ya,
        jmp_psi,
        y_end,
    )
