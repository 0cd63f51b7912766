"""Canonical and reduced problem blocks, the canonical dual, and cost evaluation.

A canonical CR block is a triple (f, g, Q) over an internal parameter y with

    grad Q(y) == J_f(y).T @ g(y)

so that a = f(y) is its primal value and b = g(y) its dual value. The dual
block swaps the roles of f and g and carries R(y) = <f(y), g(y)> - Q(y).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BadParams,
    CoverageError,
    DimMismatch,
    NotCanonical,
    NotReducible,
)
from .partition import IndexPartition, validate_partition
from .sets import Box, FeasibleSet

Vec = np.ndarray


def _vec(x) -> Vec:
    return np.atleast_1d(np.asarray(x, dtype=float))


def fd_step(y: Vec) -> Vec:
    return 1e-6 * (1.0 + np.abs(y))


def fd_jacobian(fun: Callable, y) -> np.ndarray:
    """Central-difference Jacobian; entry (i, j) is d fun_i / d y_j."""
    y = _vec(y)
    h = fd_step(y)
    cols = []
    for j in range(y.size):
        e = np.zeros_like(y)
        e[j] = h[j]
        cols.append((_vec(fun(y + e)) - _vec(fun(y - e))) / (2 * h[j]))
    return np.column_stack(cols)


def fd_gradient(fun: Callable, y) -> Vec:
    y = _vec(y)
    h = fd_step(y)
    out = np.empty_like(y)
    for j in range(y.size):
        e = np.zeros_like(y)
        e[j] = h[j]
        out[j] = (float(fun(y + e)) - float(fun(y - e))) / (2 * h[j])
    return out


@dataclass(frozen=True)
class ReducedCR:
    """A cost Q_hat restricted to a feasible set, in the decision variable a."""

    dim: int
    Q_hat: Callable[[Vec], float]
    feasible_set: FeasibleSet

    def cost(self, a) -> float:
        a = _vec(a)
        if not self.feasible_set.contains(a, tol=1e-9):
            return np.inf
        return float(self.Q_hat(a))


@dataclass(frozen=True)
class CanonicalCR:
    """A constitutive relation given parametrically by (f, g, Q).

    Catalog elements fill in the optional metadata: a closed-form reduced
    form, the reduced dual, a closed-form transformed map, and a way of
    recovering y from a matched (a, b) pair.
    """

    dim: int
    f: Callable[[Vec], Vec]
    g: Callable[[Vec], Vec]
    Q: Callable[[Vec], float]
    jacobian_f: Optional[Callable[[Vec], np.ndarray]] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    reduced: Optional[ReducedCR] = None
    dual_reduced: Optional[ReducedCR] = None
    closed_map: Any = None
    recover_y: Optional[Callable[[Vec, Vec], Vec]] = None
    dual_of: Optional["CanonicalCR"] = None

    def R(self, y) -> float:
        y = _vec(y)
        return float(np.dot(_vec(self.f(y)), _vec(self.g(y))) - self.Q(y))

    def jac_f(self, y) -> np.ndarray:
        if self.jacobian_f is not None:
            return np.atleast_2d(self.jacobian_f(_vec(y)))
        return fd_jacobian(self.f, y)


@dataclass(frozen=True)
class DualCR:
    """Dual-side view of a canonical block: R(y) and, when available, R_hat over B."""

    dim: int
    R: Callable[[Vec], float]
    reduced: Optional[ReducedCR] = None

    @property
    def R_hat(self):
        return None if self.reduced is None else self.reduced.Q_hat

    @property
    def feasible_set(self):
        return None if self.reduced is None else self.reduced.feasible_set


def dual_block(cr: CanonicalCR) -> DualCR:
    return DualCR(cr.dim, cr.R, cr.dual_reduced)


@dataclass(frozen=True)
class LIBlock:
    """Linear constraint a_out = A @ a_in (and dually b_in = -A.T @ b_out)."""

    a_matrix: np.ndarray
    kind: str = "general"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.asarray(self.a_matrix, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        if A.ndim != 2:
            raise BadParams("A must be a matrix")
        if not np.all(np.isfinite(A)):
            raise BadParams("A has non-finite entries")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "a_matrix", A)

    @property
    def n_in(self) -> int:
        return self.a_matrix.shape[1]

    @property
    def n_out(self) -> int:
        return self.a_matrix.shape[0]


@dataclass(frozen=True, eq=False)
class Problem:
    """A primal problem: K CR blocks and L LI blocks over an index partition."""

    partition: IndexPartition
    crs: tuple
    lis: tuple

    def __post_init__(self):
        object.__setattr__(self, "crs", tuple(self.crs))
        object.__setattr__(self, "lis", tuple(self.lis))
        p = self.partition
        if p.n_total == 0:
            raise CoverageError("empty problem")
        validate_partition(p)
        if len(self.crs) != p.K:
            raise DimMismatch(f"{len(self.crs)} CR entries for {p.K} CR blocks")
        if len(self.lis) != p.L:
            raise DimMismatch(f"{len(self.lis)} LI entries for {p.L} LI blocks")
        for k, (cr, idx) in enumerate(zip(self.crs, p.cr_blocks)):
            if cr.dim != idx.size:
                raise DimMismatch(f"CR block {k} has dim {cr.dim} but houses {idx.size} indices")
        for l, (li, (ni, no)) in enumerate(zip(self.lis, p.li_io_split)):
            if li.a_matrix.shape != (no, ni):
                raise DimMismatch(
                    f"LI block {l}: A is {li.a_matrix.shape}, split needs ({no}, {ni})"
                )

    @property
    def n(self) -> int:
        return self.partition.n_total

    def constraint_matrix(self) -> np.ndarray:
        """Stack the primal LI constraints as C @ a == 0 over global indices."""
        rows = []
        p = self.partition
        for l, li in enumerate(self.lis):
            ins, outs = p.li_inputs(l), p.li_outputs(l)
            block = np.zeros((li.n_out, p.n_total))
            block[:, ins] = li.a_matrix
            block[np.arange(li.n_out), outs] -= 1.0
            rows.append(block)
        if not rows:
            return np.zeros((0, p.n_total))
        return np.vstack(rows)

    def dual_constraint_matrix(self) -> np.ndarray:
        """Stack the dual LI constraints as D @ b == 0 (b_in + A.T b_out == 0)."""
        rows = []
        p = self.partition
        for l, li in enumerate(self.lis):
            ins, outs = p.li_inputs(l), p.li_outputs(l)
            block = np.zeros((li.n_in, p.n_total))
            block[np.arange(li.n_in), ins] = 1.0
            block[:, outs] += li.a_matrix.T
            rows.append(block)
        if not rows:
            return np.zeros((0, p.n_total))
        return np.vstack(rows)


def _swap_roles(cr: CanonicalCR) -> CanonicalCR:
    if not isinstance(cr, CanonicalCR):
        raise NotCanonical("a reduced-form block has no parametric representation to dualize")
    rec = None
    if cr.recover_y is not None:
        rec = lambda a, b, _r=cr.recover_y: _r(b, a)  # noqa: E731
    return CanonicalCR(
        dim=cr.dim,
        f=cr.g,
        g=cr.f,
        Q=cr.R,
        jacobian_f=None,
        kind=cr.kind,
        params=cr.params,
        reduced=cr.dual_reduced,
        dual_reduced=cr.reduced,
        recover_y=rec,
        dual_of=cr,
    )


def build_dual(p: Problem) -> Problem:
    """The canonical dual written as a problem of the same shape.

    Each CR block becomes (g, f, R); each LI block with matrix A becomes one
    with matrix -A.T whose inputs are the original outputs. Applying this
    twice gives back the original blocks.
    """
    crs = []
    for k, cr in enumerate(p.crs):
        if getattr(cr, "dual_of", None) is not None:
            crs.append(cr.dual_of)
            continue
        try:
            crs.append(_swap_roles(cr))
        except NotCanonical as exc:
            raise NotCanonical(f"CR block {k}: {exc}") from None
    part = p.partition
    li_io = [(part.li_outputs(l), part.li_inputs(l)) for l in range(part.L)]
    dual_part = IndexPartition.from_io(part.n_total, part.cr_blocks, li_io)
    lis = [LIBlock(-li.a_matrix.T, kind=li.kind, params=li.params) for li in p.lis]
    return Problem(dual_part, crs, lis)


@dataclass
class GradientCouplingReport:
    samples: np.ndarray
    rel_errors: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.rel_errors <= self.tol))

    @property
    def worst(self) -> int:
        return int(np.argmax(self.rel_errors)) if self.rel_errors.size else -1


def check_gradient_coupling(cr: CanonicalCR, samples, tol: float = 1e-5) -> GradientCouplingReport:
    """Compare a central-difference grad Q with J_f.T @ g at each sample."""
    pts = np.asarray(samples, dtype=float).reshape(-1, cr.dim)
    errs = np.empty(len(pts))
    for j, y in enumerate(pts):
        fd = fd_gradient(cr.Q, y)
        coupled = cr.jac_f(y).T @ _vec(cr.g(y))
        scale = max(1.0, np.linalg.norm(fd), np.linalg.norm(coupled))
        errs[j] = np.linalg.norm(fd - coupled) / scale
    return GradientCouplingReport(pts, errs, tol)


# --- reduction from canonical to reduced form by sweeping y -----------------

@dataclass(frozen=True)
class _Piece:
    y0: float
    y1: float
    a0: float
    a1: float
    sign: int  # +1 increasing, -1 decreasing, 0 flat
    q: float = 0.0  # cost on a flat piece


class _SweptCost:
    """Q_hat(a) = Q(y) for the y with f(y) == a, found by root-finding."""

    def __init__(self, cr, pieces, lo_unbounded, hi_unbounded):
        self.cr = cr
        self.pieces = pieces
        self.lo_unbounded = lo_unbounded
        self.hi_unbounded = hi_unbounded

    def _f(self, y):
        return float(_vec(self.cr.f(np.array([y])))[0])

    def _Q(self, y):
        return float(self.cr.Q(np.array([y])))

    def __call__(self, a) -> float:
        a = float(_vec(a)[0])
        for pc in self.pieces:
            lo, hi = min(pc.a0, pc.a1), max(pc.a0, pc.a1)
            if pc.sign == 0 and abs(a - pc.a0) <= 1e-12 * (1 + abs(a)):
                return pc.q
            if pc.sign != 0 and lo <= a <= hi:
                y = brentq(lambda t: self._f(t) - a, pc.y0, pc.y1, xtol=1e-14, rtol=1e-15, maxiter=200)
                return self._Q(y)
        # beyond the sweep: extend the monotone end pieces outward
        for pc, at_start in ((self.pieces[0], True), (self.pieces[-1], False)):
            if pc.sign == 0:
                continue
            y_end = pc.y0 if at_start else pc.y1
            a_end = pc.a0 if at_start else pc.a1
            outward = -1.0 if at_start else 1.0
            # does moving outward in y move a towards the query?
            moving_up = (pc.sign > 0) == (outward > 0)
            if (moving_up and a > a_end) or (not moving_up and a < a_end):
                step = max(1.0, abs(y_end))
                y_far = y_end
                for _ in range(200):
                    y_far = y_far + outward * step
                    step *= 2
                    if (self._f(y_far) - a) * (a_end - a) <= 0:
                        lo_y, hi_y = sorted((y_end, y_far))
                        y = brentq(lambda t: self._f(t) - a, lo_y, hi_y, xtol=1e-14, rtol=1e-15, maxiter=200)
                        return self._Q(y)
                    if not np.isfinite(y_far):
                        break
        return np.inf


def reduce_form(
    cr: CanonicalCR,
    domain: tuple[float, float] = (-10.0, 10.0),
    n_points: int = 1000,
    tol: float = 1e-9,
) -> ReducedCR:
    """Find (Q_hat, A) tracing the same (f(y), Q(y)) set as the block.

    Catalog elements return their closed-form reduction. Other blocks are
    handled for dim == 1 by sweeping y over ``domain``: the sweep is split into
    monotone and flat pieces of f, and overlapping pieces must agree on Q.
    An end of the image is unbounded if f is still moving at the sweep end,
    open if f saturates there, and closed if it is attained.
    """
    if cr.reduced is not None:
        return cr.reduced
    if cr.dim != 1:
        raise NotReducible("sweep reduction handles scalar blocks only")
    ys = np.linspace(domain[0], domain[1], n_points)
    fa = np.array([float(_vec(cr.f(np.array([y])))[0]) for y in ys])
    qa = np.array([float(cr.Q(np.array([y]))) for y in ys])
    if not (np.all(np.isfinite(fa)) and np.all(np.isfinite(qa))):
        raise NotReducible("f or Q is not finite on the sweep")
    da = np.diff(fa)
    flat_tol = 1e-13 * (1.0 + np.abs(fa[:-1]))
    signs = np.where(np.abs(da) <= flat_tol, 0, np.sign(da)).astype(int)

    pieces: list[_Piece] = []
    start = 0
    for j in range(1, len(signs) + 1):
        if j == len(signs) or signs[j] != signs[start]:
            s = int(signs[start])
            q = 0.0
            if s == 0:
                seg = qa[start : j + 1]
                if np.ptp(seg) > tol * (1 + np.max(np.abs(seg))):
                    raise NotReducible(
                        f"f is constant at a={fa[start]:.6g} while Q varies over y in "
                        f"[{ys[start]:.6g}, {ys[j]:.6g}]"
                    )
                q = float(seg[0])
            pieces.append(_Piece(ys[start], ys[j], fa[start], fa[j], s, q))
            start = j

    q_scale = 1.0 + np.max(np.abs(qa))
    for i, p1 in enumerate(pieces):
        for p2 in pieces[i + 1 :]:
            _check_consistent(cr, p1, p2, ys, fa, qa, 1e-6 * q_scale)

    # image bounds and their nature
    lo_val, hi_val = float(fa.min()), float(fa.max())
    slopes = np.abs(da) / np.diff(ys)
    peak = max(slopes.max(), 1e-300)

    def end_kind(val):
        hits = np.flatnonzero(fa == val)
        j = int(hits[0])
        if len(hits) > 1 or j not in (0, len(fa) - 1):
            return "closed"
        slope = slopes[0] if j == 0 else slopes[-1]
        return "open" if slope < 1e-6 * peak else "unbounded"

    lo_kind, hi_kind = end_kind(lo_val), end_kind(hi_val)
    lo = -np.inf if lo_kind == "unbounded" else lo_val
    hi = np.inf if hi_kind == "unbounded" else hi_val
    box = Box(np.array([lo]), np.array([hi]), lo_closed=lo_kind == "closed", hi_closed=hi_kind == "closed")
    cost = _SweptCost(cr, pieces, lo_kind == "unbounded", hi_kind == "unbounded")
    return ReducedCR(1, cost, box)


def _check_consistent(cr, p1, p2, ys, fa, qa, tol):
    def span(p):
        return min(p.a0, p.a1), max(p.a0, p.a1)

    l1, h1 = span(p1)
    l2, h2 = span(p2)
    lo, hi = max(l1, l2), min(h1, h2)
    if p1.sign == 0 and p2.sign == 0:
        if abs(p1.a0 - p2.a0) <= 1e-12 * (1 + abs(p1.a0)) and abs(p1.q - p2.q) > tol:
            raise NotReducible(f"two different costs at a={p1.a0:.6g}")
        return
    if p1.sign == 0 or p2.sign == 0:
        flat, mono = (p1, p2) if p1.sign == 0 else (p2, p1)
        ml, mh = span(mono)
        if ml < flat.a0 < mh:
            q_mono = _interp_piece(mono, ys, fa, qa, np.array([flat.a0]))[0]
            if abs(q_mono - flat.q) > tol:
                raise NotReducible(f"two different costs at a={flat.a0:.6g}")
        return
    if hi <= lo:
        return
    sel = (ys >= min(p1.y0, p1.y1)) & (ys <= max(p1.y0, p1.y1)) & (fa > lo) & (fa < hi)
    if not np.any(sel):
        probe = np.array([(lo + hi) / 2])
        q1 = _interp_piece(p1, ys, fa, qa, probe)
    else:
        probe = fa[sel]
        q1 = qa[sel]
    q2 = _interp_piece(p2, ys, fa, qa, probe)
    bad = np.abs(q1 - q2) > tol + 1e-4 * np.abs(q1)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise NotReducible(
            f"a={probe[j]:.6g} is reached with costs {q1[j]:.6g} and {q2[j]:.6g}"
        )


def _interp_piece(p, ys, fa, qa, a_query):
    sel = (ys >= min(p.y0, p.y1)) & (ys <= max(p.y0, p.y1))
    a, q = fa[sel], qa[sel]
    order = np.argsort(a)
    return np.interp(a_query, a[order], q[order])


# --- cost evaluation ---------------------------------------------------------

def _blockwise(p: Problem, vec, name):
    v = _vec(vec)
    if v.size != p.n:
        raise DimMismatch(f"{name} has length {v.size}, problem has {p.n} indices")
    return [v[idx] for idx in p.partition.cr_blocks]


def eval_primal_cost(p: Problem, y=None, a=None) -> float:
    """Sum of block costs, from parameters y (canonical) or values a (reduced)."""
    if (y is None) == (a is None):
        raise ValueError("give exactly one of y or a")
    if y is not None:
        return float(sum(cr.Q(yk) for cr, yk in zip(p.crs, _blockwise(p, y, "y"))))
    total = 0.0
    for k, (cr, ak) in enumerate(zip(p.crs, _blockwise(p, a, "a"))):
        red = cr if isinstance(cr, ReducedCR) else cr.reduced
        if red is None:
            raise NotCanonical(f"CR block {k} has no reduced form")
        total += red.cost(ak)
    return float(total)


def eval_dual_cost(p: Problem, y=None, b=None) -> float:
    """The dual objective -sum R_k, from parameters y or dual values b."""
    if (y is None) == (b is None):
        raise ValueError("give exactly one of y or b")
    if y is not None:
        return float(-sum(cr.R(yk) for cr, yk in zip(p.crs, _blockwise(p, y, "y"))))
    total = 0.0
    for k, (cr, bk) in enumerate(zip(p.crs, _blockwise(p, b, "b"))):
        red = getattr(cr, "dual_reduced", None)
        if red is None:
            raise NotCanonical(f"CR block {k} has no reduced dual form")
        total += red.cost(bk)
    return float(-total)


def coupling_sum(p: Problem, y) -> float:
    """sum_k <f_k(y_k), g_k(y_k)>; equals primal minus dual cost at common y."""
    return float(
        sum(np.dot(_vec(cr.f(yk)), _vec(cr.g(yk))) for cr, yk in zip(p.crs, _blockwise(p, y, "y")))
    )


def with_blocks(p: Problem, crs: Sequence | None = None, lis: Sequence | None = None) -> Problem:
    return Problem(p.partition, p.crs if crs is None else crs, p.lis if lis is None else lis)
