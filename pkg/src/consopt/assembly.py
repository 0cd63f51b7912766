"""Wiring CR maps to the aggregate interconnection and eliminating source loops.

Every global index i is one port: its LI block drives d_i = (G c)_i and its
CR block drives c_i = m(d)_i. Non-source CR ports receive d through a delay.
Source CR ports (m(d) = S d + e) are wired directly; the linear loop they
form with G is solved once so that the delayed ports see the affine map

    d_D = Ghat c_D + ehat.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .cr import SOURCE, Battery, classified, derive_cr
from .errors import CoverageError, DerivationError, SingularLoop
from .li import build_scattering
from .partition import IndexPartition, TransformConvention, validate_partition
from .problem import CanonicalCR, Problem

COND_WARN = 1e12
COND_SINGULAR = 1e15


@dataclass(frozen=True)
class ReducedAffine:
    G_hat: np.ndarray  # |D| x |D|
    e_hat: np.ndarray  # |D|
    # re-expansion of the source ports from the delayed c: d_S = dS_gain c_D + dS_offset
    dS_gain: np.ndarray
    dS_offset: np.ndarray
    S: np.ndarray  # stacked source linear parts, |S| x |S|
    e: np.ndarray  # stacked source offsets
    loop_cond: float = 1.0


@dataclass(frozen=True, eq=False)
class SystemGraph:
    problem: Problem
    transform: TransformConvention
    scattering: tuple  # ScatteringBlock per LI block
    G: np.ndarray  # aggregate, global index order
    cr_maps: tuple  # CRMap per CR block
    delay_ports: np.ndarray
    source_ports: np.ndarray
    li_order: np.ndarray
    cr_order: np.ndarray
    reduced_affine: ReducedAffine | None = None

    @property
    def partition(self) -> IndexPartition:
        return self.problem.partition

    @property
    def n(self) -> int:
        return self.partition.n_total

    @property
    def source_blocks(self) -> list[int]:
        return [k for k, m in enumerate(self.cr_maps) if m.classification == SOURCE]

    @property
    def delayed_blocks(self) -> list[int]:
        return [k for k, m in enumerate(self.cr_maps) if m.classification != SOURCE]

    def apply_maps(self, d, blocks=None) -> np.ndarray:
        """c = m(d) on the given CR blocks (all by default); other entries are 0."""
        c = np.zeros(self.n)
        blocks = range(len(self.cr_maps)) if blocks is None else blocks
        for k in blocks:
            idx = self.partition.cr_blocks[k]
            c[idx] = self.cr_maps[k](d[idx])
        return c

    def expand(self, c_delayed, d_delayed):
        """Full (c, d) from the delayed-port values, filling the source ports."""
        ra = self.reduced_affine
        c = np.zeros(self.n)
        d = np.zeros(self.n)
        D, S = self.delay_ports, self.source_ports
        c[D] = c_delayed
        d[D] = d_delayed
        if S.size:
            d_S = ra.dS_gain @ c_delayed + ra.dS_offset
            d[S] = d_S
            c[S] = ra.S @ d_S + ra.e
        return c, d


def assemble(
    p: Problem,
    t: TransformConvention | None = None,
    battery: Battery | None = None,
    reduce: bool = True,
) -> SystemGraph:
    """Build the interconnection for a problem.

    Each LI block becomes its orthonormal G_l placed at its global indices;
    each CR block is derived and classified. Ports of source CRs are wired
    directly and, with ``reduce``, eliminated by :func:`reduce_sources`.
    """
    part = p.partition
    if part.n_total <= 0:
        raise CoverageError("empty problem")
    validate_partition(part)
    n = part.n_total
    t = t or TransformConvention.default(n)
    if t.n != n:
        raise DerivationError(f"convention covers {t.n} indices, problem has {n}")

    G = np.zeros((n, n))
    blocks = []
    for l, li in enumerate(p.lis):
        idx = part.li_blocks[l]
        sb = build_scattering(li, None if t.is_default(idx) else t.subset(idx))
        blocks.append(sb)
        G[np.ix_(idx, idx)] = sb.g_matrix

    maps = []
    for k, cr in enumerate(p.crs):
        idx = part.cr_blocks[k]
        if not isinstance(cr, CanonicalCR):
            raise DerivationError(f"CR block {k} has no parametric form to derive a map from")
        try:
            m = derive_cr(cr, None if t.is_default(idx) else t.subset(idx))
        except Exception as exc:
            raise DerivationError(f"CR block {k} ({cr.kind}): {exc}") from exc
        maps.append(classified(m, battery))

    is_src = np.zeros(n, dtype=bool)
    for k, m in enumerate(maps):
        if m.classification == SOURCE:
            is_src[part.cr_blocks[k]] = True
    G.setflags(write=False)
    sg = SystemGraph(
        problem=p,
        transform=t,
        scattering=tuple(blocks),
        G=G,
        cr_maps=tuple(maps),
        delay_ports=np.flatnonzero(~is_src),
        source_ports=np.flatnonzero(is_src),
        li_order=part.li_order(),
        cr_order=part.cr_order(),
    )
    return reduce_sources(sg) if reduce else sg


def reduce_sources(sg: SystemGraph) -> SystemGraph:
    """Solve the algebraic loop through the source ports.

    With D the delayed ports, S the source ports, c_S = Smat d_S + e and
    d = G c, the source-port inputs satisfy

        (I - G_SS Smat) d_S = G_SD c_D + G_SS e

    which, substituted into d_D = G_DD c_D + G_DS c_S, gives Ghat and ehat.
    """
    D, S = sg.delay_ports, sg.source_ports
    G = sg.G
    part = sg.partition
    if S.size == 0:
        ra = ReducedAffine(
            G[np.ix_(D, D)].copy(), np.zeros(D.size), np.zeros((0, D.size)), np.zeros(0),
            np.zeros((0, 0)), np.zeros(0),
        )
        return replace(sg, reduced_affine=ra)

    # stack source linear parts in the order of S
    pos = {int(i): j for j, i in enumerate(S)}
    Smat = np.zeros((S.size, S.size))
    e = np.zeros(S.size)
    for k, m in enumerate(sg.cr_maps):
        if m.classification != SOURCE:
            continue
        Sk, ek = m.source_params
        loc = [pos[int(i)] for i in part.cr_blocks[k]]
        Smat[np.ix_(loc, loc)] = Sk
        e[loc] = ek

    G_DD, G_DS = G[np.ix_(D, D)], G[np.ix_(D, S)]
    G_SD, G_SS = G[np.ix_(S, D)], G[np.ix_(S, S)]
    loop = np.eye(S.size) - G_SS @ Smat
    cond = float(np.linalg.cond(loop))
    if not np.isfinite(cond) or cond > COND_SINGULAR:
        raise SingularLoop(f"I - G_SS S is singular (condition number {cond:.3g})", cond)
    if cond > COND_WARN:
        warnings.warn(f"source loop is ill-conditioned (condition number {cond:.3g})", stacklevel=2)
    rhs = np.linalg.solve(loop, np.hstack([G_SD, (G_SS @ e)[:, None]]))
    dS_gain, dS_offset = rhs[:, :-1], rhs[:, -1]
    G_hat = G_DD + G_DS @ Smat @ dS_gain
    e_hat = G_DS @ (Smat @ dS_offset + e)
    ra = ReducedAffine(G_hat, e_hat, dS_gain, dS_offset, Smat, e, cond)
    return replace(sg, reduced_affine=ra)
