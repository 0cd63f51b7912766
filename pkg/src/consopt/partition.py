"""Index bookkeeping and the per-index coordinate change (a, b) -> (c, d).

Every scalar index ``i`` of a problem is housed by exactly one CR block and
exactly one LI block. LI blocks further split their indices into an input
part followed by an output part.

The coordinate change is a 2x2 matrix per index. The default matrix is

    M = [[1, -1],
         [1,  1]] / sqrt(2)

so that ``c = (a - b)/sqrt(2)`` and ``d = (a + b)/sqrt(2)``, giving
``c**2 - d**2 == -2*a*b`` for every index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CoverageError, LengthMismatch, SingularTransform, SplitError

SQRT2 = np.sqrt(2.0)
DEFAULT_M = np.array([[1.0, -1.0], [1.0, 1.0]]) / SQRT2


def _as_index_array(idx) -> np.ndarray:
    arr = np.asarray(idx, dtype=np.int64).reshape(-1)
    return arr


@dataclass(frozen=True, eq=False)
class IndexPartition:
    """The CR and LI partitionings of ``n_total`` scalar indices.

    Blocks are stored as arrays of global indices, so a block need not be a
    contiguous range. For LI block ``l`` the first ``li_io_split[l][0]``
    entries are inputs and the remaining ``li_io_split[l][1]`` are outputs.
    Construction does not validate; call :func:`validate_partition`.
    """

    n_total: int
    cr_blocks: tuple
    li_blocks: tuple
    li_io_split: tuple

    @classmethod
    def from_lists(
        cls,
        n_total: int,
        cr_blocks: Sequence[Sequence[int]],
        li_blocks: Sequence[Sequence[int]],
        li_io_split: Sequence[tuple[int, int]] | None = None,
    ) -> "IndexPartition":
        cr = tuple(_as_index_array(b) for b in cr_blocks)
        li = tuple(_as_index_array(b) for b in li_blocks)
        if li_io_split is None:
            # all inputs, no outputs
            li_io_split = [(len(b), 0) for b in li]
        split = tuple((int(i), int(o)) for i, o in li_io_split)
        return cls(int(n_total), cr, li, split)

    @classmethod
    def from_io(
        cls,
        n_total: int,
        cr_blocks: Sequence[Sequence[int]],
        li_io: Sequence[tuple[Sequence[int], Sequence[int]]],
    ) -> "IndexPartition":
        """Build from LI blocks given as ``(inputs, outputs)`` index lists."""
        li = [list(i) + list(o) for i, o in li_io]
        split = [(len(i), len(o)) for i, o in li_io]
        return cls.from_lists(n_total, cr_blocks, li, split)

    @property
    def K(self) -> int:
        return len(self.cr_blocks)

    @property
    def L(self) -> int:
        return len(self.li_blocks)

    def li_inputs(self, l: int) -> np.ndarray:
        return self.li_blocks[l][: self.li_io_split[l][0]]

    def li_outputs(self, l: int) -> np.ndarray:
        return self.li_blocks[l][self.li_io_split[l][0]:]

    def cr_order(self) -> np.ndarray:
        """Global indices listed block by block in CR order."""
        if not self.cr_blocks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.cr_blocks)

    def li_order(self) -> np.ndarray:
        if not self.li_blocks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.li_blocks)

    def cr_block_of(self) -> np.ndarray:
        """For each global index, the CR block housing it."""
        owner = np.empty(self.n_total, dtype=np.int64)
        for k, b in enumerate(self.cr_blocks):
            owner[b] = k
        return owner

    def __eq__(self, other):
        if not isinstance(other, IndexPartition):
            return NotImplemented
        return (
            self.n_total == other.n_total
            and self.li_io_split == other.li_io_split
            and len(self.cr_blocks) == len(other.cr_blocks)
            and len(self.li_blocks) == len(other.li_blocks)
            and all(np.array_equal(x, y) for x, y in zip(self.cr_blocks, other.cr_blocks))
            and all(np.array_equal(x, y) for x, y in zip(self.li_blocks, other.li_blocks))
        )

    __hash__ = None


def _check_cover(n: int, blocks, family: str) -> None:
    counts = np.zeros(n, dtype=np.int64)
    for j, b in enumerate(blocks):
        if b.size and (b.min() < 0 or b.max() >= n):
            raise CoverageError(f"{family} block {j} has an index outside [0, {n})")
        np.add.at(counts, b, 1)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise CoverageError(f"index {int(missing[0])} is not housed by any {family} block")
    dup = np.flatnonzero(counts > 1)
    if dup.size:
        raise CoverageError(f"index {int(dup[0])} is housed by more than one {family} block")


def validate_partition(p: IndexPartition) -> bool:
    """Check the partition invariants, raising on the first violation."""
    if p.n_total <= 0:
        raise CoverageError("a partition needs at least one index")
    if len(p.li_io_split) != len(p.li_blocks):
        raise SplitError("one input/output split is required per LI block")
    for l, (b, (ni, no)) in enumerate(zip(p.li_blocks, p.li_io_split)):
        if ni < 0 or no < 0 or ni + no != b.size:
            raise SplitError(
                f"LI block {l}: split ({ni}, {no}) does not add up to its length {b.size}"
            )
    _check_cover(p.n_total, p.cr_blocks, "CR")
    _check_cover(p.n_total, p.li_blocks, "LI")
    return True


@dataclass(frozen=True, eq=False)
class TransformConvention:
    """Per-index 2x2 matrices mapping (a_i, b_i) to (c_i, d_i)."""

    matrices: np.ndarray  # shape (N, 2, 2)
    default_scale: float = 1.0 / SQRT2

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim != 3 or m.shape[1:] != (2, 2):
            raise ValueError("matrices must have shape (N, 2, 2)")
        dets = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
        if np.any(np.abs(dets) < 1e-14):
            raise SingularTransform(f"M_{int(np.argmin(np.abs(dets)))} is singular")
        # c^2 - d^2 = (p^2-r^2) a^2 + 2 (pq - rs) a b + (q^2-s^2) b^2
        p, q, r, s = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
        cross = p * q - r * s
        ok = (
            np.allclose(p**2, r**2, atol=1e-12)
            and np.allclose(q**2, s**2, atol=1e-12)
            and np.allclose(np.abs(cross), 1.0, atol=1e-12)
        )
        if m.shape[0] and not ok:
            raise ValueError("every M_i must map 2ab onto c^2 - d^2 (up to one global sign)")
        if m.shape[0] and not np.allclose(cross, cross[0], atol=1e-12):
            raise ValueError("all M_i must share the sign relating c^2 - d^2 to 2ab")
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @classmethod
    def default(cls, n: int) -> "TransformConvention":
        return cls(np.broadcast_to(DEFAULT_M, (n, 2, 2)).copy())

    def with_override(self, i: int, m_i) -> "TransformConvention":
        mats = self.matrices.copy()
        mats[i] = np.asarray(m_i, dtype=float)
        return TransformConvention(mats, self.default_scale)

    @property
    def n(self) -> int:
        return self.matrices.shape[0]

    @property
    def sign(self) -> float:
        """sigma in c^2 - d^2 == 2*sigma*a*b."""
        m = self.matrices[0]
        return float(np.sign(m[0, 0] * m[0, 1] - m[1, 0] * m[1, 1]))

    def is_default(self, idx=None) -> bool:
        mats = self.matrices if idx is None else self.matrices[np.asarray(idx, dtype=np.int64)]
        return bool(np.allclose(mats, DEFAULT_M, rtol=0, atol=1e-15))

    def subset(self, idx) -> "TransformConvention":
        return TransformConvention(self.matrices[np.asarray(idx, dtype=np.int64)], self.default_scale)


@dataclass
class StateVector:
    """Transformed variables: c (CR outputs / LI inputs), d (LI outputs / CR inputs)."""

    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        if self.c.shape != self.d.shape:
            raise LengthMismatch(f"c has length {self.c.size}, d has length {self.d.size}")

    @classmethod
    def zeros(cls, n: int) -> "StateVector":
        return cls(np.zeros(n), np.zeros(n))

    def copy(self) -> "StateVector":
        return StateVector(self.c.copy(), self.d.copy())

    def __len__(self):
        return self.c.size


def forward_transform(a, b, t: TransformConvention | None = None) -> StateVector:
    """Map primal/dual values (a, b) to the transformed pair (c, d)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"a has length {a.size}, b has length {b.size}")
    if t is not None and t.n != a.size:
        raise LengthMismatch(f"convention covers {t.n} indices, vectors have {a.size}")
    if t is None or t.is_default():
        return StateVector((a - b) / SQRT2, (a + b) / SQRT2)
    m = t.matrices
    c = m[:, 0, 0] * a + m[:, 0, 1] * b
    d = m[:, 1, 0] * a + m[:, 1, 1] * b
    return StateVector(c, d)


def inverse_transform(s: StateVector, t: TransformConvention | None = None):
    """Recover (a, b) from a transformed state."""
    c, d = s.c, s.d
    if t is not None and t.n != c.size:
        raise LengthMismatch(f"convention covers {t.n} indices, state has {c.size}")
    if t is None or t.is_default():
        return (c + d) / SQRT2, (d - c) / SQRT2
    m = t.matrices
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    if np.any(det == 0):
        raise SingularTransform("cannot invert a singular M_i")
    a = (m[:, 1, 1] * c - m[:, 0, 1] * d) / det
    b = (-m[:, 1, 0] * c + m[:, 0, 0] * d) / det
    return a, b
