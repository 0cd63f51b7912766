import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consopt.cr import CR_KINDS, catalog_cr
from consopt.errors import DimMismatch, NotCanonical, NotReducible
from consopt.li import catalog_li
from consopt.partition import IndexPartition
from consopt.problem import (
    CanonicalCR,
    LIBlock,
    Problem,
    ReducedCR,
    build_dual,
    check_gradient_coupling,
    coupling_sum,
    eval_dual_cost,
    eval_primal_cost,
    reduce_form,
)
from consopt.problems import all_canned
from consopt.sets import Box


def scalar_cr(f, g, Q, **kw):
    return CanonicalCR(1, f, g, lambda y: float(np.sum(Q(y))), **kw)


def quad(q):
    return scalar_cr(lambda y: y, lambda y: q * y, lambda y: q * y**2 / 2)


CATALOG = [
    ("quadratic", {"q": 2.0, "lin": 0.5}),
    ("linear", {"lam": 1.5}),
    ("source", {"e": -0.7}),
    ("zero", {}),
    ("abs", {"lam": 0.8}),
    ("nonneg", {}),
    ("box", {"lo": -1.0, "hi": 2.0}),
]


def test_catalog_list_is_covered():
    assert {k for k, _ in CATALOG} == set(CR_KINDS)


# --- dual construction ---------------------------------------------------------

def test_dual_cost_identity_examples():
    ys = np.linspace(-3, 3, 13)
    ident = scalar_cr(lambda y: y, lambda y: y, lambda y: y**2 / 2)
    zero = scalar_cr(lambda y: y, lambda y: 0 * y, lambda y: 0 * y)
    for y in ys:
        yy = np.array([y])
        assert ident.R(yy) == pytest.approx(y**2 / 2, abs=1e-12)
        assert zero.R(yy) == 0.0
        assert quad(3.0).R(yy) == pytest.approx(3.0 * y**2 / 2, abs=1e-12)


@pytest.mark.parametrize("kind,params", CATALOG)
def test_R_plus_Q_is_coupling(kind, params, rng):
    cr, _ = catalog_cr(kind, **params)
    for y in rng.uniform(-5, 5, size=(50, cr.dim)):
        inner = float(np.dot(cr.f(y), cr.g(y)))
        assert cr.R(y) + cr.Q(y) == pytest.approx(inner, abs=1e-9)


def test_dual_linear_structure_and_involution(rng):
    A = rng.standard_normal((2, 3))
    part = IndexPartition.from_io(5, [[0, 1], [2, 3, 4]], [([0, 1, 2], [3, 4])])
    crs = [catalog_cr("quadratic", q=[1.0, 2.0])[0], catalog_cr("abs", lam=[1.0, 1.0, 1.0])[0]]
    p = Problem(part, crs, [LIBlock(A)])
    d = build_dual(p)
    assert np.array_equal(d.lis[0].a_matrix, -A.T)
    assert d.partition.li_inputs(0).tolist() == [3, 4]
    assert d.partition.li_outputs(0).tolist() == [0, 1, 2]
    dd = build_dual(d)
    assert np.array_equal(dd.lis[0].a_matrix, A)
    assert dd.partition == p.partition
    assert all(x is y for x, y in zip(dd.crs, p.crs))
    # dual blocks swap f and g
    y = rng.standard_normal(2)
    assert np.allclose(d.crs[0].f(y), p.crs[0].g(y))
    assert d.crs[0].Q(y) == pytest.approx(p.crs[0].R(y))


def test_dual_constraints_hold_on_behavior(rng):
    A = rng.standard_normal((2, 2))
    p = Problem(IndexPartition.from_io(4, [[0, 1, 2, 3]], [([0, 1], [2, 3])]),
                [catalog_cr("quadratic", q=np.ones(4))[0]], [LIBlock(A)])
    b_out = rng.standard_normal(2)
    b = np.concatenate([-A.T @ b_out, b_out])
    assert np.allclose(p.dual_constraint_matrix() @ b, 0, atol=1e-12)
    a_in = rng.standard_normal(2)
    a = np.concatenate([a_in, A @ a_in])
    assert np.allclose(p.constraint_matrix() @ a, 0, atol=1e-12)


def test_dual_of_reduced_block_rejected():
    red = ReducedCR(1, lambda a: 0.0, Box.real_line(1))
    p = Problem(IndexPartition.from_io(2, [[0], [1]], [([0], [1])]),
                [red, catalog_cr("zero")[0]], [catalog_li("equality-chain")])
    with pytest.raises(NotCanonical):
        build_dual(p)


# --- gradient coupling ------------------------------------------------------------

def test_gradient_coupling_quadratic(rng):
    rep = check_gradient_coupling(quad(2.5), rng.uniform(-10, 10, size=(100, 1)))
    assert rep.passed


def test_gradient_coupling_detects_violation():
    bad = scalar_cr(lambda y: y, lambda y: y, lambda y: y**2 / 2 + 0.01 * y**3)
    rep = check_gradient_coupling(bad, np.linspace(-20, 20, 41)[:, None])
    assert not rep.passed
    assert abs(rep.samples[rep.worst, 0]) >= 10


def test_gradient_coupling_zero_case():
    flat = scalar_cr(lambda y: y, lambda y: 0 * y, lambda y: 0 * y + 4.0)
    assert check_gradient_coupling(flat, np.linspace(-5, 5, 11)[:, None]).passed


@pytest.mark.parametrize("kind,params", CATALOG)
def test_catalog_coupling(kind, params, rng):
    cr, _ = catalog_cr(kind, **params)
    # stay away from knees, where Q is not differentiable
    ys = rng.uniform(-5, 5, size=(200, cr.dim))
    if kind == "abs":
        ys = ys[np.abs(np.abs(ys[:, 0]) - 0.8) > 1e-3]
    if kind == "nonneg":
        ys = ys[np.abs(ys[:, 0]) > 1e-3]
    if kind == "box":
        ys = ys[(np.abs(ys[:, 0] + 1) > 1e-3) & (np.abs(ys[:, 0] - 2) > 1e-3)]
    assert check_gradient_coupling(cr, ys).passed


# --- reduction ------------------------------------------------------------------

def test_reduce_identity():
    red = reduce_form(scalar_cr(lambda y: y, lambda y: y, lambda y: y**2 / 2))
    lo, hi = red.feasible_set.lo[0], red.feasible_set.hi[0]
    assert lo == -np.inf and hi == np.inf
    for a in np.linspace(-9, 9, 37):
        assert red.Q_hat(np.array([a])) == pytest.approx(a**2 / 2, abs=1e-9)


def test_reduce_tanh_open_interval():
    cr = scalar_cr(np.tanh, lambda y: y, lambda y: y * np.tanh(y) - np.log(np.cosh(y)))
    red = reduce_form(cr)
    box = red.feasible_set
    assert box.lo[0] == pytest.approx(-1.0, abs=1e-6) and box.hi[0] == pytest.approx(1.0, abs=1e-6)
    assert not box.lo_closed and not box.hi_closed
    assert box.contains(np.array([0.99]))
    assert not box.contains(np.array([1.5]))
    # sweep check: (f(y), Q(y)) on the graph of Q_hat
    for y in np.linspace(-5, 5, 1000):
        a = np.tanh(y)
        assert red.Q_hat(np.array([a])) == pytest.approx(float(cr.Q(np.array([y]))), abs=1e-9)


def test_reduce_multivalued():
    cr = scalar_cr(lambda y: y**2, lambda y: 0 * y, lambda y: y)
    with pytest.raises(NotReducible):
        reduce_form(cr)


def test_reduce_flat_piece_with_varying_cost():
    cr = scalar_cr(lambda y: np.clip(y, -1, 1), lambda y: 0 * y, lambda y: y)
    with pytest.raises(NotReducible):
        reduce_form(cr)


@pytest.mark.parametrize("q", [0.5, 1.0, 4.0])
def test_reduce_sweep_reproduces_pairs(q):
    cr = scalar_cr(lambda y: 2 * y + 1, lambda y: q * (2 * y + 1) * 2, lambda y: q * (2 * y + 1) ** 2)
    red = reduce_form(cr)
    for y in np.linspace(-10, 10, 1000):
        a = 2 * y + 1
        assert red.Q_hat(np.array([a])) == pytest.approx(q * a**2, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("kind,params", CATALOG)
def test_catalog_reduced_matches_canonical(kind, params):
    cr, _ = catalog_cr(kind, **params)
    red = reduce_form(cr)
    for y in np.linspace(-4, 4, 801):
        yy = np.full(cr.dim, y)
        a = np.asarray(cr.f(yy), dtype=float)
        assert red.feasible_set.contains(a, tol=1e-12)
        assert red.cost(a) == pytest.approx(cr.Q(yy), abs=1e-9)


@pytest.mark.parametrize("kind,params", CATALOG)
def test_catalog_dual_reduced_matches_R(kind, params):
    cr, _ = catalog_cr(kind, **params)
    for y in np.linspace(-4, 4, 801):
        yy = np.full(cr.dim, y)
        b = np.asarray(cr.g(yy), dtype=float)
        assert cr.dual_reduced.feasible_set.contains(b, tol=1e-12)
        assert cr.dual_reduced.cost(b) == pytest.approx(cr.R(yy), abs=1e-9)


# --- cost evaluation ---------------------------------------------------------

def _two_quad():
    return Problem(IndexPartition.from_io(2, [[0], [1]], [([0], [1])]),
                   [quad(1.0), quad(1.0)], [catalog_li("equality-chain")])


def test_costs_basic():
    p = _two_quad()
    assert eval_primal_cost(p, y=np.zeros(2)) == 0.0
    assert eval_primal_cost(p, y=np.array([2.0, 0.0])) == pytest.approx(2.0)
    with pytest.raises(DimMismatch):
        eval_primal_cost(p, y=np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=1))
def test_gap_identity_on_canned(ys):
    for c in all_canned():
        p = c.problem
        y = np.full(p.n, ys[0])
        gap = eval_primal_cost(p, y=y) - eval_dual_cost(p, y=y)
        assert gap == pytest.approx(coupling_sum(p, y), abs=1e-9)


def test_reduced_costs_match_parametric(rng):
    p = all_canned()[0].problem
    y = rng.standard_normal(p.n)
    a = np.concatenate([np.asarray(cr.f(y[idx])) for cr, idx in zip(p.crs, p.partition.cr_blocks)])
    b = np.concatenate([np.asarray(cr.g(y[idx])) for cr, idx in zip(p.crs, p.partition.cr_blocks)])
    # the pinned source is infeasible off its value, so take a point on it
    assert eval_primal_cost(p, a=a) == pytest.approx(eval_primal_cost(p, y=y), abs=1e-9)
    assert eval_dual_cost(p, b=b) == pytest.approx(eval_dual_cost(p, y=y), abs=1e-9)


def test_problem_validation():
    with pytest.raises(DimMismatch):
        Problem(IndexPartition.from_io(2, [[0, 1]], [([0], [1])]), [quad(1.0)], [catalog_li("equality-chain")])
