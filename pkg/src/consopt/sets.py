"""Feasible sets for reduced-form blocks.

Only the shapes the element catalog needs are supported: per-coordinate
intervals (boxes, possibly open or unbounded), half-spaces, affine sets and
finite unions of intervals in one dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FeasibleSet:
    dim: int

    def contains(self, a, tol: float = 0.0) -> bool:
        raise NotImplementedError

    def project(self, a) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Box(FeasibleSet):
    """Per-coordinate interval. Open ends are honoured by ``contains`` only;
    ``project`` maps onto the closure."""

    lo: np.ndarray
    hi: np.ndarray
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo.copy())
        object.__setattr__(self, "hi", hi.copy())

    @classmethod
    def real_line(cls, dim: int = 1) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def point(cls, value) -> "Box":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(v, v)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def is_point(self) -> bool:
        return bool(np.all(self.lo == self.hi))

    def contains(self, a, tol: float = 0.0) -> bool:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        lo_ok = a >= self.lo - tol if self.lo_closed else (a > self.lo - tol) | np.isneginf(self.lo)
        hi_ok = a <= self.hi + tol if self.hi_closed else (a < self.hi + tol) | np.isposinf(self.hi)
        return bool(np.all(lo_ok & hi_ok))

    def project(self, a) -> np.ndarray:
        return np.clip(np.atleast_1d(np.asarray(a, dtype=float)), self.lo, self.hi)


@dataclass(frozen=True)
class HalfSpace(FeasibleSet):
    """``{a : w @ a <= beta}``."""

    w: np.ndarray
    beta: float

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if not np.any(w):
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.w.size

    def contains(self, a, tol: float = 0.0) -> bool:
        return bool(self.w @ np.atleast_1d(a) <= self.beta + tol)

    def project(self, a) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        viol = self.w @ a - self.beta
        if viol <= 0:
            return a.copy()
        return a - viol * self.w / (self.w @ self.w)


@dataclass(frozen=True)
class AffineSet(FeasibleSet):
    """``{a : E @ a == h}`` with E of full row rank."""

    E: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if E.shape[0] != h.size:
            raise ValueError("E and h disagree in row count")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    def contains(self, a, tol: float = 0.0) -> bool:
        r = self.E @ np.atleast_1d(a) - self.h
        return bool(np.all(np.abs(r) <= tol))

    def project(self, a) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        r = self.E @ a - self.h
        return a - self.E.T @ np.linalg.solve(self.E @ self.E.T, r)


@dataclass(frozen=True)
class IntervalUnion(FeasibleSet):
    """Finite union of closed intervals on the real line (dim 1)."""

    intervals: tuple

    def __post_init__(self):
        ivs = sorted((float(lo), float(hi)) for lo, hi in self.intervals)
        if not ivs:
            raise ValueError("empty interval union")
        merged = [list(ivs[0])]
        for lo, hi in ivs[1:]:
            if lo > hi:
                raise ValueError("interval has lo > hi")
            if lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        object.__setattr__(self, "intervals", tuple(tuple(iv) for iv in merged))

    dim = 1

    def contains(self, a, tol: float = 0.0) -> bool:
        x = float(np.asarray(a).reshape(-1)[0])
        return any(lo - tol <= x <= hi + tol for lo, hi in self.intervals)

    def project(self, a) -> np.ndarray:
        x = float(np.asarray(a).reshape(-1)[0])
        cands = [min(max(x, lo), hi) for lo, hi in self.intervals]
        best = min(cands, key=lambda v: abs(v - x))
        return np.array([best])
