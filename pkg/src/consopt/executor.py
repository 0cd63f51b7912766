"""Running an assembled system to a fixed point.

One tick is a two-phase update that reads only the previous tick's state:

1. every delayed port proposes d = Ghat c + ehat from the previous c and
   latches it if its delay fires (always, in synchronous mode; with
   probability p_i, in asynchronous mode);
2. every delayed CR block produces c = m(d_held).

Bernoulli draws come from a counter-based generator keyed on the seed and
indexed by tick and port, so runs are reproducible and do not depend on the
order in which ports are visited.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import SystemGraph
from .errors import NonFiniteState
from .partition import StateVector, inverse_transform

DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class Schedule:
    mode: str = "synchronous"
    update_prob: float | np.ndarray = 1.0
    rng_seed: int = 0
    max_iters: int = 1_000_000
    fixed_point_tol: float = 1e-9

    def __post_init__(self):
        if self.mode not in ("synchronous", "asynchronous"):
            raise ValueError(f"unknown mode {self.mode!r}")
        p = np.atleast_1d(np.asarray(self.update_prob, dtype=float))
        if np.any(~(p > 0)) or np.any(p > 1):
            raise ValueError("update probabilities must lie in (0, 1]")
        if self.mode == "synchronous":
            p = np.ones(1)
        if not (0 <= self.rng_seed < 2**64):
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "update_prob", p if p.size > 1 else float(p[0]))

    @property
    def window(self) -> int:
        """Consecutive quiet ticks required before declaring convergence."""
        if self.mode == "synchronous":
            return 1
        return 4 * math.ceil(1.0 / float(np.min(self.update_prob)))

    def fires(self, tick: int, n_ports: int) -> np.ndarray:
        if self.mode == "synchronous":
            return np.ones(n_ports, dtype=bool)
        bitgen = np.random.Philox(key=self.rng_seed, counter=[0, tick, 0, 0])
        u = np.random.Generator(bitgen).random(n_ports)
        return u < self.update_prob


@dataclass
class Trace:
    iteration: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    stationarity: list = field(default_factory=list)
    conservation: list = field(default_factory=list)
    fired: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    status: str = "running"

    HEADER = ("iteration", "residual", "stationarity_residual", "conservation_residual")

    def __len__(self):
        return len(self.iteration)

    def to_csv(self, fh=None) -> str:
        """Comma-separated rows with a header; floats written with repr."""
        out = io.StringIO()
        out.write(",".join(self.HEADER) + "\n")
        for row in zip(self.iteration, self.residual, self.stationarity, self.conservation):
            out.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r}\n")
        text = out.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def initial_state(sg: SystemGraph, init: StateVector | None = None) -> StateVector:
    if init is None:
        return StateVector.zeros(sg.n)
    if len(init) != sg.n:
        raise ValueError(f"initial state has length {len(init)}, system has {sg.n} ports")
    return init.copy()


def _proposal(sg: SystemGraph, c) -> np.ndarray:
    ra = sg.reduced_affine
    return ra.G_hat @ c[sg.delay_ports] + ra.e_hat


def step(sg: SystemGraph, state: StateVector, schedule: Schedule, tick: int) -> StateVector:
    """Advance one global tick (see module docstring)."""
    D = sg.delay_ports
    proposed = _proposal(sg, state.c)
    fire = schedule.fires(tick, D.size)
    d = state.d.copy()
    d[D] = np.where(fire, proposed, state.d[D])
    c_all = sg.apply_maps(d, sg.delayed_blocks)
    c, d = sg.expand(c_all[D], d[D])
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
        bad = int(np.flatnonzero(~(np.isfinite(c) & np.isfinite(d)))[0])
        raise NonFiniteState(f"tick {tick}: non-finite value at port {bad}")
    return StateVector(c, d)


def conservation_residual(sg: SystemGraph, c) -> float:
    """| ||c||^2 - ||G c||^2 | for the pre-reduction interconnection."""
    Gc = sg.G @ c
    return float(abs(c @ c - Gc @ Gc))


def run(
    sg: SystemGraph,
    schedule: Schedule | None = None,
    init: StateVector | None = None,
    snapshot_stride: int = 0,
) -> tuple[StateVector, Trace]:
    """Iterate until the delayed inputs settle.

    Converged means the per-tick change of the held d stayed within tol for
    ``schedule.window`` ticks in a row and the current proposal agrees with
    every held value within tol.
    """
    schedule = schedule or Schedule()
    state = initial_state(sg, init)
    D = sg.delay_ports
    tol = schedule.fixed_point_tol
    trace = Trace()
    quiet = 0
    for tick in range(1, schedule.max_iters + 1):
        new = step(sg, state, schedule, tick)
        res = float(np.max(np.abs(new.d[D] - state.d[D]))) if D.size else 0.0
        fp = float(np.max(np.abs(_proposal(sg, new.c) - new.d[D]))) if D.size else 0.0
        trace.iteration.append(tick)
        trace.residual.append(res)
        trace.stationarity.append(fp)
        trace.conservation.append(conservation_residual(sg, new.c))
        if snapshot_stride and tick % snapshot_stride == 0:
            trace.snapshots[tick] = new.copy()
        state = new
        if np.max(np.abs(state.d), initial=0.0) > DIVERGENCE_BOUND:
            trace.status = "diverged"
            return state, trace
        quiet = quiet + 1 if res <= tol else 0
        if quiet >= schedule.window and fp <= tol:
            trace.status = "converged"
            return state, trace
    trace.status = "max-iters"
    return state, trace


@dataclass
class FixedPointReport:
    li_transformed: np.ndarray  # ||G_l c - d|| per LI block
    cr_transformed: np.ndarray  # ||m_k(d) - c|| per CR block
    li_primal: np.ndarray  # ||a_out - A a_in||
    li_dual: np.ndarray  # ||b_in + A' b_out||
    cr_primal: np.ndarray  # ||a_k - f_k(y_k)||, nan when y is not recoverable
    cr_dual: np.ndarray  # ||b_k - g_k(y_k)||

    def all_residuals(self) -> np.ndarray:
        parts = [self.li_transformed, self.cr_transformed, self.li_primal, self.li_dual,
                 self.cr_primal, self.cr_dual]
        v = np.concatenate([np.asarray(x, dtype=float) for x in parts])
        return v[~np.isnan(v)]

    @property
    def max_transformed(self) -> float:
        return float(np.max(np.concatenate([self.li_transformed, self.cr_transformed]), initial=0.0))

    @property
    def max_untransformed(self) -> float:
        v = np.concatenate([self.li_primal, self.li_dual, self.cr_primal, self.cr_dual])
        v = v[~np.isnan(v)]
        return float(np.max(v, initial=0.0))

    @property
    def max_residual(self) -> float:
        return max(self.max_transformed, self.max_untransformed)


def verify_fixed_point(sg: SystemGraph, state: StateVector) -> FixedPointReport:
    """Evaluate both sets of transformed conditions and the original ones."""
    part = sg.partition
    p = sg.problem
    c, d = state.c, state.d
    li_t = np.array([
        np.linalg.norm(sb.g_matrix @ c[idx] - d[idx]) for sb, idx in zip(sg.scattering, part.li_blocks)
    ])
    cr_t = np.array([np.linalg.norm(m(d[idx]) - c[idx]) for m, idx in zip(sg.cr_maps, part.cr_blocks)])
    a, b = inverse_transform(state, sg.transform)
    li_p, li_d = [], []
    for l, li in enumerate(p.lis):
        ins, outs = part.li_inputs(l), part.li_outputs(l)
        A = li.a_matrix
        li_p.append(np.linalg.norm(a[outs] - A @ a[ins]))
        li_d.append(np.linalg.norm(b[ins] + A.T @ b[outs]))
    cr_p, cr_d = [], []
    for cr, idx in zip(p.crs, part.cr_blocks):
        rec = getattr(cr, "recover_y", None)
        if rec is None:
            cr_p.append(np.nan)
            cr_d.append(np.nan)
            continue
        y = rec(a[idx], b[idx])
        cr_p.append(np.linalg.norm(a[idx] - np.asarray(cr.f(y), dtype=float)))
        cr_d.append(np.linalg.norm(b[idx] - np.asarray(cr.g(y), dtype=float)))
    return FixedPointReport(li_t, cr_t, np.array(li_p), np.array(li_d), np.array(cr_p), np.array(cr_d))
