"""Primal/dual recovery at a fixed point and stationarity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .assembly import SystemGraph
from .partition import StateVector, TransformConvention, inverse_transform
from .problem import Problem, fd_jacobian


@dataclass
class Solution:
    a_star: np.ndarray
    b_star: np.ndarray
    y_star: np.ndarray  # nan on blocks whose parameter cannot be recovered
    primal_cost: float
    dual_cost: float
    residuals: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.primal_cost - self.dual_cost

    @property
    def y_recovered(self) -> bool:
        return bool(np.all(np.isfinite(self.y_star)))


def _feasibility(p: Problem, a, b) -> dict:
    part = p.partition
    primal, dual = [], []
    for l, li in enumerate(p.lis):
        ins, outs = part.li_inputs(l), part.li_outputs(l)
        primal.append(float(np.linalg.norm(a[outs] - li.a_matrix @ a[ins])))
        dual.append(float(np.linalg.norm(b[ins] + li.a_matrix.T @ b[outs])))
    return {"primal_li": np.array(primal), "dual_li": np.array(dual)}


def recover(sg: SystemGraph, state: StateVector, t: TransformConvention | None = None) -> Solution:
    """Invert the coordinate change and evaluate costs at the recovered point."""
    p = sg.problem
    t = t or sg.transform
    a, b = inverse_transform(state, t)
    y = np.full(p.n, np.nan)
    for cr, idx in zip(p.crs, p.partition.cr_blocks):
        rec = getattr(cr, "recover_y", None)
        if rec is not None:
            y[idx] = rec(a[idx], b[idx])
    if np.all(np.isfinite(y)):
        primal = float(sum(cr.Q(y[idx]) for cr, idx in zip(p.crs, p.partition.cr_blocks)))
        dual = float(-sum(cr.R(y[idx]) for cr, idx in zip(p.crs, p.partition.cr_blocks)))
    else:
        primal = dual = np.nan
    return Solution(a, b, y, primal, dual, _feasibility(p, a, b))


@dataclass
class StationarityReport:
    primal_li: np.ndarray
    dual_li: np.ndarray
    cr_primal: np.ndarray
    cr_dual: np.ndarray
    primal_slopes: np.ndarray  # log-log slope of |dQ| vs step size, per direction
    dual_slopes: np.ndarray
    steps: tuple

    @property
    def max_residual(self) -> float:
        v = np.concatenate([self.primal_li, self.dual_li, self.cr_primal, self.cr_dual])
        v = v[~np.isnan(v)]
        return float(np.max(v, initial=0.0))

    @property
    def min_slope(self) -> float:
        s = np.concatenate([self.primal_slopes, self.dual_slopes])
        return float(np.min(s, initial=np.inf))


def _block_jacobian(p: Problem, y, which: str) -> np.ndarray:
    J = np.zeros((p.n, p.n))
    for cr, idx in zip(p.crs, p.partition.cr_blocks):
        yk = y[idx]
        if which == "f":
            Jk = cr.jac_f(yk)
        else:
            Jk = fd_jacobian(cr.g, yk)
        J[np.ix_(idx, idx)] = Jk
    return J


def _cost_change(p: Problem, y, delta, eps, dual: bool) -> float:
    total = 0.0
    for cr, idx in zip(p.crs, p.partition.cr_blocks):
        fn = cr.R if dual else cr.Q
        total += fn(y[idx] + eps * delta[idx]) - fn(y[idx])
    return total


def _slope(p, y, delta, steps, dual):
    fn_scale = 1.0 + sum(abs((cr.R if dual else cr.Q)(y[idx])) for cr, idx in zip(p.crs, p.partition.cr_blocks))
    floor = 1e-13 * fn_scale
    changes = np.array([abs(_cost_change(p, y, delta, e, dual)) for e in steps])
    keep = changes > floor
    if keep.sum() < 2:
        # flat to rounding along this direction
        return np.inf
    return float(np.polyfit(np.log(np.asarray(steps)[keep]), np.log(changes[keep]), 1)[0])


def flatness_slopes(p: Problem, y, n_dirs=32, steps=(1e-2, 1e-3, 1e-4, 1e-5), seed=0, dual=False):
    """Slopes of |cost change| against step size along random feasible directions.

    Directions keep the linear constraints on f(y) (primal) or g(y) (dual)
    satisfied to first order: they span the null space of C J_f (or D J_g).
    """
    rng = np.random.default_rng(seed)
    if dual:
        C = p.dual_constraint_matrix() @ _block_jacobian(p, y, "g")
    else:
        C = p.constraint_matrix() @ _block_jacobian(p, y, "f")
    Z = null_space(C) if C.shape[0] else np.eye(p.n)
    if Z.shape[1] == 0:
        return np.array([])
    out = []
    for _ in range(n_dirs):
        delta = Z @ rng.standard_normal(Z.shape[1])
        delta /= np.linalg.norm(delta)
        out.append(_slope(p, y, delta, steps, dual))
    return np.array(out)


def stationarity_report(
    sol: Solution, p: Problem, n_dirs: int = 32, steps=(1e-2, 1e-3, 1e-4, 1e-5), seed: int = 0
) -> StationarityReport:
    """Feasibility residuals, CR consistency, and a cost-flatness probe."""
    a, b, y = sol.a_star, sol.b_star, sol.y_star
    feas = _feasibility(p, a, b)
    cr_p, cr_d = [], []
    for cr, idx in zip(p.crs, p.partition.cr_blocks):
        if not np.all(np.isfinite(y[idx])):
            cr_p.append(np.nan)
            cr_d.append(np.nan)
            continue
        cr_p.append(float(np.linalg.norm(a[idx] - np.asarray(cr.f(y[idx]), dtype=float))))
        cr_d.append(float(np.linalg.norm(b[idx] - np.asarray(cr.g(y[idx]), dtype=float))))
    if sol.y_recovered:
        ps = flatness_slopes(p, y, n_dirs, steps, seed, dual=False)
        ds = flatness_slopes(p, y, n_dirs, steps, seed + 1, dual=True)
    else:
        ps = ds = np.array([])
    return StationarityReport(
        feas["primal_li"], feas["dual_li"], np.array(cr_p), np.array(cr_d), ps, ds, tuple(steps)
    )
