"""Constitutive-relation maps m: d -> c, their classification, and the element catalog.

Under the default per-index transform a block traced by (f(y), g(y)) becomes
the curve (c, d) = ((f - g)/sqrt(2), (f + g)/sqrt(2)); when d(y) can be
inverted the block is the map m(d) = c. Closed forms for the catalog:

    quadratic  q a^2/2 + lam a     m(d) = (1-q)/(1+q) d - sqrt(2) lam/(1+q)
    linear     lam a               m(d) = d - sqrt(2) lam
    source     a == e              m(d) = -d + sqrt(2) e
    zero       a == 0              m(d) = -d
    abs        lam |a|             m(d) = d - 2 clip(d, -lam/sqrt(2), lam/sqrt(2))
    nonneg     a >= 0              m(d) = |d|
    box        lo <= a <= hi       m(d) = 2 clip(d, lo/sqrt(2), hi/sqrt(2)) - d
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import BadParams, DerivationError, NonInvertibleParametrization
from .partition import SQRT2, TransformConvention
from .problem import CanonicalCR, ReducedCR
from .sets import Box

NEUTRAL = "neutral"
PASSIVE = "passive-everywhere"
DISSIPATIVE = "dissipative-everywhere"
SOURCE = "source"
UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class CRMap:
    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    kind: str = "closed-form"  # or "implicit-parametric"
    classification: str = UNCLASSIFIED
    source_params: Optional[tuple] = None  # (S, e) whenever the map is affine
    knees: tuple = ()
    proof: str = ""  # how the classification was established
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None  # rows of points at once, if supported

    def __call__(self, d) -> np.ndarray:
        return self.apply(np.atleast_1d(np.asarray(d, dtype=float)))

    @property
    def is_source(self) -> bool:
        return self.classification == SOURCE


def _affine_map(S, e):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    return lambda d: S @ d + e


def affine_class(S, e, tol: float = 1e-9) -> tuple[str, float]:
    """Label an affine map S d + e; returns (label, operator norm of S)."""
    S = np.atleast_2d(S)
    sn = float(np.linalg.norm(S, 2)) if S.size else 0.0
    has_offset = bool(np.any(np.abs(e) > 1e-12))
    if has_offset and abs(sn - 1.0) <= tol:
        return SOURCE, sn
    if not has_offset and np.allclose(S.T @ S, np.eye(S.shape[1]), atol=tol, rtol=0):
        return NEUTRAL, sn
    if sn <= 1.0 - tol:
        return DISSIPATIVE, sn
    if sn <= 1.0 + tol:
        return PASSIVE, sn
    return UNCLASSIFIED, sn


def _negated(m: CRMap) -> CRMap:
    sp = None
    if m.source_params is not None:
        S, e = m.source_params
        sp = (-S, -e)
    batch = None if m.batch is None else (lambda X, _b=m.batch: -_b(X))
    return replace(
        m, apply=lambda d, _f=m.apply: -_f(d), batch=batch, source_params=sp, proof=m.proof + "; negated for the dual"
    )


# --- derivation -------------------------------------------------------------

def _bisect_all(phi, target, max_iter=200, tol=1e-12):
    """Solve phi(y) == target elementwise for an increasing-or-decreasing phi."""
    lo = np.full(target.shape, -1.0)
    hi = np.full(target.shape, 1.0)
    flo, fhi = phi(lo) - target, phi(hi) - target
    for _ in range(max_iter):
        bad = np.sign(flo) * np.sign(fhi) > 0
        if not np.any(bad):
            break
        w = hi - lo
        lo = np.where(bad, lo - w, lo)
        hi = np.where(bad, hi + w, hi)
        flo, fhi = phi(lo) - target, phi(hi) - target
        if not (np.all(np.isfinite(flo)) and np.all(np.isfinite(fhi))):
            break
    bad = np.sign(flo) * np.sign(fhi) > 0
    if np.any(bad) or not (np.all(np.isfinite(flo)) and np.all(np.isfinite(fhi))):
        flat = int(np.flatnonzero(bad)[0]) if np.any(bad) else 0
        j = np.unravel_index(flat, target.shape)
        raise NonInvertibleParametrization(
            f"coordinate {j[-1]}: d = {target[j]:.6g} not reached for y in [{lo[j]:.6g}, {hi[j]:.6g}]"
        )
    # converged entries are frozen, so each entry's result does not depend on
    # what else is solved alongside it
    done = hi - lo <= tol * (1.0 + np.abs(0.5 * (lo + hi)))
    for _ in range(max_iter):
        if np.all(done):
            break
        mid = 0.5 * (lo + hi)
        fm = phi(mid) - target
        left = (np.sign(fm) == np.sign(flo)) & ~done
        right = ~left & ~done
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(right, mid, hi)
        done |= hi - lo <= tol * (1.0 + np.abs(0.5 * (lo + hi)))
    return 0.5 * (lo + hi)


def derive_cr(cr: CanonicalCR, t: TransformConvention | None = None, check_monotone: bool = True) -> CRMap:
    """The transformed map of a canonical block.

    Catalog blocks under the default convention get their closed form.
    Otherwise the block must be separable (elementwise f and g); the map then
    solves r_j f_j(y) + s_j g_j(y) = d_j per coordinate by bracketing and
    bisection and returns c = p f(y) + q g(y), with [[p, q], [r, s]] = M_j.
    """
    default = t is None or t.is_default()
    if default and cr.closed_map is not None:
        return cr.closed_map
    if default and cr.dual_of is not None and cr.dual_of.closed_map is not None:
        return _negated(cr.dual_of.closed_map)
    if cr.dim > 1 and not cr.params.get("separable", cr.kind != "custom"):
        raise DerivationError("implicit derivation needs a separable block (params['separable'])")
    if default:
        mats = np.broadcast_to(np.array([[1.0, -1.0], [1.0, 1.0]]) / SQRT2, (cr.dim, 2, 2))
    else:
        if t.n != cr.dim:
            raise DerivationError("convention does not match the block size")
        mats = t.matrices
    p, q, r, s = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]

    def d_of_y(y):
        return r * np.asarray(cr.f(y), dtype=float) + s * np.asarray(cr.g(y), dtype=float)

    if check_monotone:
        _check_monotone(d_of_y, cr.dim)

    def apply(d):
        # also accepts a stack of points (npts, dim) when f and g act elementwise
        y = _bisect_all(d_of_y, d)
        return p * np.asarray(cr.f(y), dtype=float) + q * np.asarray(cr.g(y), dtype=float)

    return CRMap(cr.dim, apply, kind="implicit-parametric", batch=apply)


def _check_monotone(d_of_y, dim, span=50.0, n=2001):
    ys = np.linspace(-span, span, n)
    vals = np.array([d_of_y(np.full(dim, y)) for y in ys])
    dv = np.diff(vals, axis=0)
    for j in range(dim):
        up, down = np.any(dv[:, j] > 0), np.any(dv[:, j] < 0)
        if up and down:
            k = int(np.flatnonzero(np.sign(dv[:, j]) != np.sign(dv[0, j]))[0])
            raise NonInvertibleParametrization(
                f"coordinate {j}: d(y) changes direction near y in [{ys[k]:.4g}, {ys[k + 1]:.4g}]"
            )
        if not (up or down):
            raise NonInvertibleParametrization(f"coordinate {j}: d(y) is constant")


# --- classification ---------------------------------------------------------

@dataclass(frozen=True)
class Battery:
    box: float = 100.0
    pairs: int = 10_000
    seed: int = 0
    knee_pairs: int = 200


@dataclass
class Classification:
    label: str
    gain: float  # sampled sup of ||m(x) - m(x')|| / ||x - x'||
    neutral_deviation: float
    source_params: Optional[tuple] = None
    margin: float = 0.0  # 1 - gain for dissipative maps

    def __str__(self):
        return self.label


def _affine_fit(m: CRMap, rng, box):
    dim = m.dim
    e = m(np.zeros(dim))
    S = np.column_stack([m(np.eye(dim)[j]) - e for j in range(dim)]) if dim else np.zeros((0, 0))
    probes = rng.uniform(-box, box, size=(32, dim))
    # three collinear points per coordinate plus random probes
    probes = np.vstack([probes, 2 * np.eye(dim), -3 * np.eye(dim)])
    for x in probes:
        pred = S @ x + e
        if np.linalg.norm(m(x) - pred) > 1e-9 * (1 + np.linalg.norm(pred)):
            return None
    return S, e


def _eval_many(m: CRMap, X: np.ndarray) -> np.ndarray:
    """m applied to each row of X, in one call when the map supports it."""
    if m.batch is not None:
        try:
            out = np.asarray(m.batch(X), dtype=float)
        except Exception:
            out = None
        if out is not None and out.shape == X.shape:
            probe = np.array([m(x) for x in X[:3]])
            if np.array_equal(out[:3], probe):
                return out
    return np.array([m(x) for x in X])


def classify_map(m: CRMap, battery: Battery | None = None) -> Classification:
    """Label a map by sampling: exact affinity first, then norms and incremental gains."""
    battery = battery or Battery()
    rng = np.random.default_rng(battery.seed)
    dim = m.dim
    xs = rng.uniform(-battery.box, battery.box, size=(battery.pairs, dim))
    xps = rng.uniform(-battery.box, battery.box, size=(battery.pairs, dim))
    # knee neighbourhoods: straddle each knee at several scales
    if m.knees:
        kp = []
        for knee in np.atleast_1d(m.knees):
            for _ in range(battery.knee_pairs):
                w = 10.0 ** rng.uniform(-6, 1)
                base = rng.uniform(-battery.box, battery.box, size=dim)
                j = rng.integers(dim)
                x, xp = base.copy(), base.copy()
                x[j] = knee + w * rng.uniform(-1, 1)
                xp[j] = knee + w * rng.uniform(-1, 1)
                kp.append((x, xp))
        xs = np.vstack([xs, [a for a, _ in kp]])
        xps = np.vstack([xps, [b for _, b in kp]])

    mx = _eval_many(m, xs)
    mxp = _eval_many(m, xps)
    norms_x = np.linalg.norm(xs, axis=1)
    neutral_dev = float(np.max(np.abs(np.linalg.norm(mx, axis=1) - norms_x) / np.maximum(1.0, norms_x)))
    dx = np.linalg.norm(xs - xps, axis=1)
    keep = dx > 0
    gain = float(np.max(np.linalg.norm(mx - mxp, axis=1)[keep] / dx[keep])) if np.any(keep) else 0.0

    fit = _affine_fit(m, rng, battery.box)
    if fit is not None:
        S, e = fit
        label, sn = affine_class(S, e)
        margin = 1.0 - sn if label == DISSIPATIVE else 0.0
        return Classification(label, max(gain, 0.0), neutral_dev, (S, e), margin)

    if neutral_dev <= 1e-9:
        return Classification(NEUTRAL, gain, neutral_dev)
    if gain <= 1.0 - 1e-9:
        return Classification(DISSIPATIVE, gain, neutral_dev, margin=1.0 - gain)
    if gain <= 1.0 + 1e-9:
        return Classification(PASSIVE, gain, neutral_dev)
    return Classification(UNCLASSIFIED, gain, neutral_dev)


def classified(m: CRMap, battery: Battery | None = None) -> CRMap:
    """Return ``m`` with a battery-based label if it does not carry one yet."""
    if m.classification != UNCLASSIFIED:
        return m
    cl = classify_map(m, battery)
    return replace(m, classification=cl.label, source_params=cl.source_params, proof="battery")


# --- catalog ----------------------------------------------------------------

def _param_vec(params, name, dim, default=None):
    v = params.get(name, default)
    if v is None:
        raise BadParams(f"missing parameter {name!r}")
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise BadParams(f"parameter {name!r} is not numeric") from None
    if arr.ndim == 0:
        return np.full(dim, float(arr))
    arr = arr.reshape(-1)
    if arr.size != dim:
        raise BadParams(f"parameter {name!r} has {arr.size} entries, block dim is {dim}")
    return arr


def _dim_of(params, *names):
    if "dim" in params:
        d = params["dim"]
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise BadParams("dim must be a positive integer")
        return int(d)
    for n in names:
        v = params.get(n)
        if v is not None and np.ndim(v) > 0:
            return int(np.shape(v)[0])
    return 1


def _quadratic(params):
    dim = _dim_of(params, "q", "lin")
    q = np.asarray(params.get("q", 1.0), dtype=float)
    if q.ndim == 2:
        P = q
        if P.shape != (dim, dim):
            raise BadParams(f"q matrix must be {dim}x{dim}")
        if not np.allclose(P, P.T, atol=1e-12):
            raise BadParams("q matrix must be symmetric")
    else:
        P = np.diag(_param_vec(params, "q", dim, 1.0))
    lin = _param_vec(params, "lin", dim, 0.0)
    eig_min = float(np.linalg.eigvalsh(P).min())
    if eig_min < -1e-12 and params.get("require_passive", True):
        raise BadParams(f"q must be positive semidefinite for a passive map (min eigenvalue {eig_min:.3g})")
    I = np.eye(dim)
    f = lambda y: np.asarray(y, dtype=float)  # noqa: E731
    g = lambda y: P @ y + lin  # noqa: E731
    Q = lambda y: float(0.5 * y @ P @ y + lin @ y)  # noqa: E731
    S = np.linalg.solve(I + P, I - P)
    e = -SQRT2 * np.linalg.solve(I + P, lin)
    label, sn = affine_class(S, e)
    cmap = CRMap(dim, _affine_map(S, e), "closed-form", label, (S, e), proof=f"affine, ||S||={sn:.6g}")
    reduced = ReducedCR(dim, Q, Box.real_line(dim))
    dual_red = None
    if np.allclose(P, np.diag(np.diag(P))):
        qd = np.diag(P)
        pos = qd > 1e-15
        lo = np.where(pos, -np.inf, lin)
        hi = np.where(pos, np.inf, lin)

        def R_hat(b, qd=qd, pos=pos, lin=lin):
            r = (b - lin)[pos]
            return float(0.5 * np.sum(r * r / qd[pos]))

        dual_red = ReducedCR(dim, R_hat, Box(lo, hi))
    elif eig_min > 1e-12:
        Pinv = np.linalg.inv(P)
        dual_red = ReducedCR(dim, lambda b: float(0.5 * (b - lin) @ Pinv @ (b - lin)), Box.real_line(dim))
    canon = CanonicalCR(
        dim, f, g, Q, jacobian_f=lambda y: I, kind="quadratic",
        params={"q": P if q.ndim == 2 else np.diag(P).copy(), "lin": lin},
        reduced=reduced, dual_reduced=dual_red, closed_map=cmap, recover_y=lambda a, b: np.asarray(a, float),
    )
    return canon, cmap


def _source(params, kind):
    if kind == "zero":
        dim = _dim_of(params)
        e = np.zeros(dim)
    else:
        dim = _dim_of(params, "e")
        e = _param_vec(params, "e", dim)
    I = np.eye(dim)
    f = lambda y: e.copy()  # noqa: E731
    g = lambda y: np.asarray(y, dtype=float)  # noqa: E731
    Q = lambda y: 0.0  # noqa: E731
    S, off = -I, SQRT2 * e
    label, _ = affine_class(S, off)
    cmap = CRMap(dim, _affine_map(S, off), "closed-form", label, (S, off), proof="affine, S=-I")
    reduced = ReducedCR(dim, lambda a: 0.0, Box.point(e))
    dual_red = ReducedCR(dim, lambda b: float(e @ b), Box.real_line(dim))
    canon = CanonicalCR(
        dim, f, g, Q, jacobian_f=lambda y: np.zeros((dim, dim)), kind=kind,
        params={} if kind == "zero" else {"e": e},
        reduced=reduced, dual_reduced=dual_red, closed_map=cmap, recover_y=lambda a, b: np.asarray(b, float),
    )
    return canon, cmap


def _abs(params):
    dim = _dim_of(params, "lam")
    lam = _param_vec(params, "lam", dim, 1.0)
    if np.any(lam < 0):
        raise BadParams("abs weight lam must be nonnegative")
    f = lambda y: np.sign(y) * np.maximum(np.abs(y) - lam, 0.0)  # noqa: E731
    g = lambda y: np.clip(y, -lam, lam)  # noqa: E731
    Q = lambda y: float(np.sum(lam * np.abs(f(y))))  # noqa: E731
    k = lam / SQRT2
    cmap = CRMap(
        dim, lambda d: d - 2.0 * np.clip(d, -k, k), "closed-form",
        NEUTRAL if np.all(lam == 0) else PASSIVE,
        knees=tuple(np.unique(np.concatenate([k, -k]))), proof="piecewise slopes +-1, continuous",
    )
    reduced = ReducedCR(dim, lambda a: float(np.sum(lam * np.abs(a))), Box.real_line(dim))
    dual_red = ReducedCR(dim, lambda b: 0.0, Box(-lam, lam))
    canon = CanonicalCR(
        dim, f, g, Q, jacobian_f=lambda y: np.diag((np.abs(y) > lam).astype(float)), kind="abs",
        params={"lam": lam}, reduced=reduced, dual_reduced=dual_red, closed_map=cmap,
        recover_y=lambda a, b: np.asarray(a, float) + np.asarray(b, float),
    )
    return canon, cmap


def _box(params, kind):
    if kind == "nonneg":
        dim = _dim_of(params)
        lo, hi = np.zeros(dim), np.full(dim, np.inf)
    else:
        dim = _dim_of(params, "lo", "hi")
        lo = _param_vec(params, "lo", dim)
        hi = _param_vec(params, "hi", dim)
        if np.any(lo > hi):
            raise BadParams("box needs lo <= hi")
    f = lambda y: np.clip(y, lo, hi)  # noqa: E731
    g = lambda y: np.asarray(y, dtype=float) - np.clip(y, lo, hi)  # noqa: E731
    Q = lambda y: 0.0  # noqa: E731
    kl, kh = lo / SQRT2, hi / SQRT2
    if kind == "nonneg":
        apply = np.abs
    else:
        apply = lambda d: 2.0 * np.clip(d, kl, kh) - d  # noqa: E731
    one_sided = np.all(((lo == 0) & np.isposinf(hi)) | (np.isneginf(lo) & (hi == 0)) | (np.isneginf(lo) & np.isposinf(hi)))
    if np.all(lo == hi):
        S, e = -np.eye(dim), SQRT2 * lo
        label, _ = affine_class(S, e)
        cmap = CRMap(dim, _affine_map(S, e), "closed-form", label, (S, e), proof="degenerate box is a point")
    else:
        knees = np.concatenate([kl[np.isfinite(kl)], kh[np.isfinite(kh)]])
        cmap = CRMap(
            dim, apply, "closed-form", NEUTRAL if one_sided else PASSIVE,
            knees=tuple(np.unique(knees)),
            proof="|m(d)| == |d|" if one_sided else "piecewise slopes +-1, continuous",
        )
    reduced = ReducedCR(dim, lambda a: 0.0, Box(lo, hi))

    def R_hat(b):
        # support function of [lo, hi]
        with np.errstate(invalid="ignore"):
            terms = np.where(b > 0, hi * b, np.where(b < 0, lo * b, 0.0))
        return float(np.sum(terms))

    b_lo = np.where(np.isposinf(hi), -np.inf, np.where(np.isneginf(lo), 0.0, -np.inf))
    b_hi = np.where(np.isneginf(lo), np.inf, np.where(np.isposinf(hi), 0.0, np.inf))
    # unbounded on both sides only admits b == 0
    both = np.isneginf(lo) & np.isposinf(hi)
    b_lo = np.where(both, 0.0, b_lo)
    b_hi = np.where(both, 0.0, b_hi)
    dual_red = ReducedCR(dim, R_hat, Box(b_lo, b_hi))
    canon = CanonicalCR(
        dim, f, g, Q, jacobian_f=lambda y: np.diag(((y > lo) & (y < hi)).astype(float)), kind=kind,
        params={} if kind == "nonneg" else {"lo": lo, "hi": hi},
        reduced=reduced, dual_reduced=dual_red, closed_map=cmap,
        recover_y=lambda a, b: np.asarray(a, float) + np.asarray(b, float),
    )
    return canon, cmap


CR_KINDS = ("quadratic", "linear", "source", "zero", "abs", "nonneg", "box")


def catalog_cr(kind: str, **params) -> tuple[CanonicalCR, CRMap]:
    """Catalog element: its canonical (f, g, Q) data and its closed-form map.

    kinds and parameters (scalars broadcast over ``dim``):
        quadratic  q (>= 0, or a symmetric PSD matrix), lin
        linear     lam
        source     e          (a fixed at e, b free)
        zero                  (a fixed at 0)
        abs        lam (>= 0)
        nonneg
        box        lo, hi
    """
    if kind == "quadratic":
        return _quadratic(params)
    if kind == "linear":
        dim = _dim_of(params, "lam")
        canon, cmap = _quadratic({"dim": dim, "q": 0.0, "lin": _param_vec(params, "lam", dim)})
        return replace(canon, kind="linear", params={"lam": canon.params["lin"]}), cmap
    if kind in ("source", "zero"):
        return _source(params, kind)
    if kind == "abs":
        return _abs(params)
    if kind in ("nonneg", "box"):
        return _box(params, kind)
    raise BadParams(f"unknown CR kind {kind!r}")
