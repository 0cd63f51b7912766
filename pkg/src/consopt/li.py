"""Linear interconnection elements: from a constraint matrix A to an orthonormal G.

With c = (a - b)/sqrt(2), d = (a + b)/sqrt(2) on every port and port order
(inputs, outputs), eliminating (a_in, b_out) from

    a_out = A a_in,    b_in = -A.T b_out

leaves d = G c with

    G = [[(I + A'A)^-1 (I - A'A),  2 (I + A'A)^-1 A'        ],
         [2 A (I + A'A)^-1,        (I + AA')^-1 (AA' - I)   ]]

G is symmetric and orthogonal, hence an involution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadParams, DerivationError
from .partition import TransformConvention
from .problem import LIBlock


@dataclass(frozen=True)
class ScatteringBlock:
    g_matrix: np.ndarray
    source_block: LIBlock
    convention: TransformConvention | None = None

    @property
    def n(self) -> int:
        return self.g_matrix.shape[0]

    def orthonormality_error(self) -> float:
        G = self.g_matrix
        return float(np.max(np.abs(G.T @ G - np.eye(self.n)))) if self.n else 0.0

    def apply(self, c):
        return self.g_matrix @ np.asarray(c, dtype=float)


def _closed_form_g(A: np.ndarray) -> np.ndarray:
    no, ni = A.shape
    AtA = A.T @ A
    AAt = A @ A.T
    I_i = np.eye(ni)
    I_o = np.eye(no)
    P = np.linalg.solve(I_i + AtA, np.hstack([I_i - AtA, 2.0 * A.T]))  # top rows
    # bottom-left 2A(I+A'A)^-1 == 2(I+AA')^-1 A; keeps the solve on the left
    B = np.linalg.solve(I_o + AAt, np.hstack([2.0 * A, AAt - I_o]))
    return np.vstack([P, B])


def behavior_ports(A: np.ndarray, a_in, b_out):
    """(a, b) on all ports of the block, inputs first, for free (a_in, b_out)."""
    a = np.concatenate([a_in, A @ a_in])
    b = np.concatenate([-A.T @ b_out, b_out])
    return a, b


def _generic_g(A: np.ndarray, t: TransformConvention) -> np.ndarray:
    # Port values are linear in z = (a_in, b_out); (c, d) = (Tc z, Td z), so G = Td Tc^-1.
    no, ni = A.shape
    n = ni + no
    Z = np.eye(n)
    a_ports, b_ports = behavior_ports(A, Z[:ni], Z[ni:])
    m = t.matrices
    Tc = m[:, 0, 0][:, None] * a_ports + m[:, 0, 1][:, None] * b_ports
    Td = m[:, 1, 0][:, None] * a_ports + m[:, 1, 1][:, None] * b_ports
    if np.linalg.matrix_rank(Tc) < n:
        raise DerivationError("the behavior is not the graph of a map from c to d")
    Q, R = np.linalg.qr(Tc)
    # G Tc = Td  ->  G Q R = Td  ->  G = Td R^-1 Q'
    return np.linalg.solve(R.T, Td.T).T @ Q.T


def build_scattering(li: LIBlock, t: TransformConvention | None = None) -> ScatteringBlock:
    """Orthonormal G for an LI block.

    ``t`` is the convention restricted to the block's ports in (inputs,
    outputs) order. The closed form is used for the default convention and
    a generic elimination otherwise.
    """
    A = li.a_matrix
    if t is None or t.is_default():
        G = _closed_form_g(A)
    else:
        if t.n != A.shape[0] + A.shape[1]:
            raise DerivationError("convention does not match the block's port count")
        G = _generic_g(A, t)
    G.setflags(write=False)
    return ScatteringBlock(G, li, t)


@dataclass
class BehaviorReport:
    trials: int
    max_deviation: float

    def passed(self, tol: float = 1e-9) -> bool:
        return self.max_deviation <= tol


def verify_behavior(sb: ScatteringBlock, trials: int = 1000, rng=None) -> BehaviorReport:
    """Sample the constraint behavior directly and measure how far d is from G c.

    Deviations are relative to max(1, ||c||) per sample.
    """
    rng = np.random.default_rng(rng)
    A = sb.source_block.a_matrix
    no, ni = A.shape
    a_in = rng.standard_normal((ni, trials))
    b_out = rng.standard_normal((no, trials))
    a = np.vstack([a_in, A @ a_in])
    b = np.vstack([-A.T @ b_out, b_out])
    if sb.convention is None:
        c, d = (a - b) / np.sqrt(2), (a + b) / np.sqrt(2)
    else:
        m = sb.convention.matrices
        c = m[:, 0, 0, None] * a + m[:, 0, 1, None] * b
        d = m[:, 1, 0, None] * a + m[:, 1, 1, None] * b
    dev = np.linalg.norm(d - sb.g_matrix @ c, axis=0) / np.maximum(1.0, np.linalg.norm(c, axis=0))
    return BehaviorReport(trials, float(dev.max(initial=0.0)))


def catalog_li(kind: str, **params) -> LIBlock:
    """Standard connective LI elements.

    kinds:
        ``replicator`` (m): one input copied to m outputs, A = ones((m, 1)).
        ``equality-chain`` (dim): outputs equal inputs, A = I.
        ``negator`` (dim): outputs are negated inputs, A = -I.
        ``general`` (matrix): any user matrix.
    """
    if kind == "replicator":
        m = params.get("m", 2)
        if not isinstance(m, (int, np.integer)) or m < 1:
            raise BadParams("replicator needs an integer m >= 1")
        return LIBlock(np.ones((m, 1)), kind, {"m": int(m)})
    if kind in ("equality-chain", "negator"):
        dim = params.get("dim", 1)
        if not isinstance(dim, (int, np.integer)) or dim < 1:
            raise BadParams(f"{kind} needs an integer dim >= 1")
        sign = 1.0 if kind == "equality-chain" else -1.0
        return LIBlock(sign * np.eye(dim), kind, {"dim": int(dim)})
    if kind == "general":
        if "matrix" not in params:
            raise BadParams("general LI needs a matrix")
        try:
            M = np.asarray(params["matrix"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise BadParams(f"matrix is not numeric: {exc}") from None
        return LIBlock(M, kind, {})
    raise BadParams(f"unknown LI kind {kind!r}")
