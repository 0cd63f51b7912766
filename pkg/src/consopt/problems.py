"""Small ready-made problems with known solutions, used by tests and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cr import catalog_cr
from .li import catalog_li
from .partition import IndexPartition
from .problem import LIBlock, Problem


@dataclass(frozen=True)
class Canned:
    name: str
    problem: Problem
    oracle: str  # "kkt" or "grid"
    grid_bounds: tuple = (-3.0, 3.0)
    grid_resolution: float = 1e-3
    a_expected: np.ndarray | None = None  # hand-derived, where simple


def build(n, crs, lis) -> Problem:
    """Problem from ``crs = [(kind, params, indices)]`` and
    ``lis = [(LIBlock, inputs, outputs)]``."""
    part = IndexPartition.from_io(n, [idx for _, _, idx in crs], [(i, o) for _, i, o in lis])
    blocks = [catalog_cr(kind, **params)[0] for kind, params, _ in crs]
    return Problem(part, blocks, [li for li, _, _ in lis])


def pinned_quadratic(q=2.0, e=1.0) -> Canned:
    """min q a^2/2 with a pinned to e by a source; a* = e."""
    p = build(
        2,
        [("quadratic", {"q": q}, [0]), ("source", {"e": e}, [1])],
        [(catalog_li("equality-chain", dim=1), [0], [1])],
    )
    return Canned("pinned-quadratic", p, "kkt", a_expected=np.array([e, e]))


def consensus() -> Canned:
    """min (a1-1)^2/2 + (a2+1)^2/2 s.t. a1 == a2; a* = 0."""
    p = build(
        2,
        [("quadratic", {"q": 1.0, "lin": -1.0}, [0]), ("quadratic", {"q": 1.0, "lin": 1.0}, [1])],
        [(catalog_li("equality-chain", dim=1), [0], [1])],
    )
    return Canned("consensus", p, "kkt", a_expected=np.zeros(2))


def weighted_consensus() -> Canned:
    """Three agents agreeing through a replicator; a* is the q-weighted mean of targets."""
    q = np.array([1.0, 2.0, 0.5])
    target = np.array([1.0, 2.0, -2.0])
    crs = [("quadratic", {"q": q[j], "lin": -q[j] * target[j]}, [j]) for j in range(3)]
    p = build(3, crs, [(catalog_li("replicator", m=2), [0], [1, 2])])
    mean = float(q @ target / q.sum())
    return Canned("weighted-consensus", p, "kkt", a_expected=np.full(3, mean))


def soft_threshold(lam=1.0, target=2.0, q=1.0, name="soft-threshold") -> Canned:
    """min q (a - target)^2/2 + lam |a|; a* = sign(target) max(|target| - lam/q, 0)."""
    p = build(
        2,
        [("quadratic", {"q": q, "lin": -q * target}, [0]), ("abs", {"lam": lam}, [1])],
        [(catalog_li("equality-chain", dim=1), [0], [1])],
    )
    s = np.sign(target) * max(abs(target) - lam / q, 0.0)
    return Canned(name, p, "grid", a_expected=np.array([s, s]))


def box_quadratic(lo=0.0, hi=1.0, target=2.0) -> Canned:
    """min (a - target)^2/2 over [lo, hi]; a* = clip(target, lo, hi)."""
    p = build(
        2,
        [("quadratic", {"q": 1.0, "lin": -target}, [0]), ("box", {"lo": lo, "hi": hi}, [1])],
        [(catalog_li("equality-chain", dim=1), [0], [1])],
    )
    s = float(np.clip(target, lo, hi))
    return Canned("box-quadratic", p, "grid", a_expected=np.array([s, s]))


def chained3() -> Canned:
    """min sum_j q_j (a_j - t_j)^2/2 s.t. a_1 = a_0 and a_2 = 2 a_1."""
    q = np.array([1.0, 3.0, 0.5])
    t = np.array([1.0, -1.0, 2.0])
    crs = [("quadratic", {"q": q[j], "lin": -q[j] * t[j]}, [j]) for j in range(3)]
    A = np.array([[1.0], [2.0]])
    p = build(3, crs, [(LIBlock(A), [0], [1, 2])])
    # a = (x, x, 2x): minimise sum q_j (s_j x - t_j)^2 / 2 with s = (1, 1, 2)
    s = np.array([1.0, 1.0, 2.0])
    x = float((q * s) @ t / ((q * s) @ s))
    return Canned("chained-3", p, "kkt", a_expected=s * x)


def budget_box(q=2.0, targets=(2.0, -1.0), lo=0.0, hi=0.5) -> Canned:
    """min sum q (a_j - t_j)^2/2 s.t. a_0 + a_1 in [lo, hi]; the box on the sum is active."""
    t = np.asarray(targets, dtype=float)
    crs = [("quadratic", {"q": q, "lin": -q * t[j]}, [j]) for j in range(2)]
    crs.append(("box", {"lo": lo, "hi": hi}, [2]))
    p = build(3, crs, [(LIBlock(np.array([[1.0, 1.0]])), [0, 1], [2])])
    total = float(np.clip(t.sum(), lo, hi))
    a01 = t + 0.5 * (total - t.sum())  # equal shift for equal weights
    return Canned("budget-box", p, "grid", a_expected=np.array([a01[0], a01[1], total]))


def all_canned() -> list[Canned]:
    return [
        pinned_quadratic(), consensus(), weighted_consensus(), soft_threshold(), box_quadratic(), chained3(),
        soft_threshold(q=3.0, name="soft-threshold-q3"), budget_box(),
    ]
