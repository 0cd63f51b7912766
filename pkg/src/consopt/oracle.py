"""Brute-force reference solvers.

These read only the raw problem data (block kinds, parameters, indices and
LI matrices) and re-state every cost themselves, so they share nothing with
the transformed-map solution path they are used to check.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import qr

from .errors import BadParams, SingularKKT
from .problem import Problem

_PINNED = ("source", "zero")


def _li_rows(p: Problem):
    part = p.partition
    rows = []
    for l, li in enumerate(p.lis):
        A = np.asarray(li.a_matrix, dtype=float)
        ins, outs = part.li_blocks[l][: A.shape[1]], part.li_blocks[l][A.shape[1]:]
        for r in range(A.shape[0]):
            row = np.zeros(part.n_total)
            row[ins] = A[r]
            row[outs[r]] -= 1.0
            rows.append(row)
    return np.array(rows).reshape(-1, part.n_total)


def _pin_rows(p: Problem):
    rows, rhs = [], []
    for cr, idx in zip(p.crs, p.partition.cr_blocks):
        if cr.kind in _PINNED:
            e = np.zeros(idx.size) if cr.kind == "zero" else np.broadcast_to(cr.params["e"], idx.shape)
            for j, i in enumerate(idx):
                row = np.zeros(p.n)
                row[i] = 1.0
                rows.append(row)
                rhs.append(float(e[j]))
    return np.array(rows).reshape(-1, p.n), np.array(rhs)


def kkt_solve(p: Problem):
    """Solve an equality-constrained quadratic by one dense KKT system.

    Supported blocks: quadratic (q, lin), linear (lam), source (e), zero.
    Returns (a, b) with b the per-index cost gradient, which satisfies
    b_in = -A.T b_out on every LI block.
    """
    n = p.n
    H = np.zeros((n, n))
    h = np.zeros(n)
    for cr, idx in zip(p.crs, p.partition.cr_blocks):
        if cr.kind == "quadratic":
            q = np.asarray(cr.params["q"], dtype=float)
            H[np.ix_(idx, idx)] = q if q.ndim == 2 else np.diag(np.broadcast_to(q, idx.shape))
            h[idx] = cr.params["lin"]
        elif cr.kind == "linear":
            h[idx] = cr.params["lam"]
        elif cr.kind not in _PINNED:
            raise BadParams(f"kkt_solve cannot handle {cr.kind!r} blocks")
    C_li = _li_rows(p)
    C_pin, r_pin = _pin_rows(p)
    C = np.vstack([C_li, C_pin])
    r = np.concatenate([np.zeros(C_li.shape[0]), r_pin])
    m = C.shape[0]
    K = np.block([[H, C.T], [C, np.zeros((m, m))]])
    if np.linalg.matrix_rank(K) < n + m:
        raise SingularKKT("KKT matrix is singular (constraints dependent or cost not strictly convex on them)")
    sol = np.linalg.solve(K, np.concatenate([-h, r]))
    a = sol[:n]
    nu_li = sol[n : n + C_li.shape[0]]
    b = -C_li.T @ nu_li
    return a, b


def _block_cost(kind, params, a_blk):
    """Cost of one block over rows of a_blk (shape (npts, dim)); inf if infeasible."""
    if kind == "quadratic":
        q = np.asarray(params["q"], dtype=float)
        P = q if q.ndim == 2 else np.diag(np.broadcast_to(q, a_blk.shape[1:]))
        return 0.5 * np.einsum("pi,ij,pj->p", a_blk, P, a_blk) + a_blk @ np.asarray(params["lin"], dtype=float)
    if kind == "linear":
        return a_blk @ np.broadcast_to(np.asarray(params["lam"], dtype=float), a_blk.shape[1:])
    if kind == "abs":
        lam = np.broadcast_to(np.asarray(params["lam"], dtype=float), a_blk.shape[1:])
        return np.abs(a_blk) @ lam
    if kind in _PINNED:
        return np.zeros(a_blk.shape[0])  # enforced as equality rows
    if kind == "nonneg":
        return np.where(np.all(a_blk >= -1e-12, axis=1), 0.0, np.inf)
    if kind == "box":
        lo, hi = np.asarray(params["lo"], dtype=float), np.asarray(params["hi"], dtype=float)
        ok = np.all((a_blk >= lo - 1e-12) & (a_blk <= hi + 1e-12), axis=1)
        return np.where(ok, 0.0, np.inf)
    raise BadParams(f"grid_solve cannot handle {kind!r} blocks")


def grid_solve(p: Problem, bounds=(-3.0, 3.0), resolution=1e-3, max_points=2_000_000):
    """Best feasible point on a grid over the free coordinates of the linear constraints.

    The equality constraints (LI blocks and pinned sources) are eliminated by
    choosing pivot coordinates; the remaining at most three coordinates are
    gridded with the given spacing. Large grids are searched coarse-to-fine.
    """
    C_li = _li_rows(p)
    C_pin, r_pin = _pin_rows(p)
    C = np.vstack([C_li, C_pin])
    r = np.concatenate([np.zeros(C_li.shape[0]), r_pin])
    n = p.n
    if C.shape[0]:
        _, R, perm = qr(C, pivoting=True, mode="economic")
        rank = int(np.sum(np.abs(np.diag(R)) > 1e-10 * max(1.0, abs(R[0, 0]))))
    else:
        perm, rank = np.arange(n), 0
    piv, free = np.sort(perm[:rank]), np.sort(perm[rank:])
    if free.size > 3:
        raise BadParams(f"grid_solve supports at most 3 free coordinates, got {free.size}")

    def complete(af):
        # af: (npts, nfree) -> full a (npts, n)
        a = np.zeros((af.shape[0], n))
        a[:, free] = af
        if piv.size:
            rhs = r[None, :] - af @ C[:, free].T
            a[:, piv] = np.linalg.lstsq(C[:, piv], rhs.T, rcond=None)[0].T
        return a

    def cost(a):
        total = np.zeros(a.shape[0])
        for cr, idx in zip(p.crs, p.partition.cr_blocks):
            total += _block_cost(cr.kind, cr.params, a[:, idx])
        resid = np.abs(a @ C.T - r).max(axis=1) if C.shape[0] else 0.0
        return np.where(resid <= 1e-9, total, np.inf)

    lo, hi = bounds
    if free.size == 0:
        a = complete(np.zeros((1, 0)))
        return a[0]
    npts = int(round((hi - lo) / resolution)) + 1
    if npts**free.size <= max_points:
        axis = lo + resolution * np.arange(npts)
        grid = np.array(list(itertools.product(axis, repeat=free.size)))
        a = complete(grid)
        return a[int(np.argmin(cost(a)))]
    # coarse-to-fine on the same lattice
    center = np.full(free.size, 0.5 * (lo + hi))
    half = 0.5 * (hi - lo)
    per_dim = 101
    while True:
        step = max(resolution, round(2 * half / (per_dim - 1) / resolution) * resolution)
        ticks = np.arange(-(per_dim // 2), per_dim // 2 + 1) * step
        base = lo + np.round((center - lo) / resolution) * resolution
        axes = [np.clip(base[j] + ticks, lo, hi) for j in range(free.size)]
        grid = np.array(list(itertools.product(*axes)))
        a = complete(grid)
        best = int(np.argmin(cost(a)))
        center = grid[best]
        if step <= resolution:
            return a[best]
        half = 4 * step
