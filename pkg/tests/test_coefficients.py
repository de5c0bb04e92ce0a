"""Coefficient containers, cooperative potential, coupling reachability."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernelbound import coefficients as co
from kernelbound.errors import DimensionMismatchError, HypothesisViolationError


# ---------------------------------------------------------------------------
# cooperative potential
# ---------------------------------------------------------------------------

def test_vp_flips_offdiagonal_signs():
    V = np.array([[2.0, 3.0], [-1.0, 4.0]])
    VP = co.eval_VP(V)
    assert np.array_equal(VP, np.array([[2.0, -3.0], [-1.0, 4.0]]))


def test_vp_identity_on_nonpositive_offdiagonal():
    V = np.array([[1.0, -0.5], [-0.25, 3.0]])
    assert np.array_equal(co.eval_VP(V), V)


def test_vp_scalar_case_unchanged():
    V = np.array([[7.0]])
    assert np.array_equal(co.eval_VP(V), V)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_vp_idempotent_and_dominates(m, seed):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(m, m)) * 10
    VP = co.eval_VP(V)
    assert np.array_equal(co.eval_VP(VP), VP), "cooperative modification must be idempotent"
    assert np.array_equal(np.diag(VP), np.diag(V)), "diagonal must be preserved"
    off = ~np.eye(m, dtype=bool)
    assert np.all(VP[off] <= 0), "off-diagonal entries must be nonpositive"
    assert np.allclose(np.abs(VP[off]), np.abs(V[off])), "magnitudes must be preserved"


def test_vp_rejects_nonsquare():
    with pytest.raises(DimensionMismatchError):
        co.eval_VP(np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# operator evaluation
# ---------------------------------------------------------------------------

def _laplacian_spec():
    dims = co.SystemDims(d=1, m=1)
    return co.operator_spec_from_callables(
        dims,
        Q=lambda h, x: np.ones(np.atleast_2d(x).shape[:1] + (1, 1))
        if np.asarray(x).ndim > 1 else np.eye(1),
        b=lambda h, x: np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float))),
        V=lambda x: np.zeros((1, 1)),
        R=lambda h, x: np.zeros((1, 1)),
        divb=lambda h, x: 0.0,
    )


def test_operator_on_square_is_second_derivative():
    # A u = u'' for Q=1, b=0, V=0; u(x)=x^2 gives 2 everywhere
    spec = _laplacian_spec()
    jet = co.FieldJet(values=np.array([4.0]), gradients=np.array([[4.0]]),
                      hessians=np.array([[[2.0]]]))
    assert co.eval_operator(spec, "plain", jet, 0, np.array([2.0])) == pytest.approx(2.0)


def test_operator_constant_potential_coupling():
    # d=1, m=2, Q=I, b=0, V=[[2,3],[-1,4]]: (A u)_0 = u0'' - 2 u0 - 3 u1
    dims = co.SystemDims(d=1, m=2)
    V = np.array([[2.0, 3.0], [-1.0, 4.0]])
    spec = co.operator_spec_from_callables(
        dims,
        Q=lambda h, x: np.eye(1),
        b=lambda h, x: np.zeros(1),
        V=lambda x: V,
        R=lambda h, x: np.zeros((1, 1)),
        divb=lambda h, x: 0.0,
    )
    jet = co.FieldJet(values=np.array([1.0, 2.0]),
                      gradients=np.zeros((2, 1)),
                      hessians=np.array([[[5.0]], [[7.0]]]))
    x = np.array([0.3])
    assert co.eval_operator(spec, "plain", jet, 0, x) == pytest.approx(5.0 - 2.0 - 3.0 * 2.0)
    # P variant flips v_01 = 3 to -3: 5 - 2*1 + 3*2
    assert co.eval_operator(spec, "P", jet, 0, x) == pytest.approx(5.0 - 2.0 + 3.0 * 2.0)
    # adjoint transposes: column 0 of VP is (2, -1): 5 - 2*1 + 1*2
    assert co.eval_operator(spec, "P_adjoint", jet, 0, x) == pytest.approx(5.0 - 2.0 + 1.0 * 2.0)


def test_operator_variable_diffusion_expansion():
    # Q = 1+x^2, u = sin x: div(Q u') = 2x cos x - (1+x^2) sin x
    fam = co.diagonal_family("polynomial", 1, 1, alpha=1.0, theta=[[1.0]], gamma=[[0.0]])
    spec = fam.operator_spec()
    xv = 0.7
    jet = co.FieldJet(values=np.array([np.sin(xv)]),
                      gradients=np.array([[np.cos(xv)]]),
                      hessians=np.array([[[-np.sin(xv)]]]))
    got = co.eval_operator(spec, "plain", jet, 0, np.array([xv]))
    # family also has drift -x(1+x^2)^0 = -x and potential 1: subtract x cos x + sin x
    expected = 2 * xv * np.cos(xv) - (1 + xv ** 2) * np.sin(xv) - xv * np.cos(xv) - np.sin(xv)
    assert got == pytest.approx(expected, rel=1e-12)


def test_operator_matches_finite_difference_jet():
    # independent route: analytic jet vs FieldJet.from_callables on smooth funcs
    fam = co.diagonal_family("polynomial", 2, 2, alpha=0.5, beta=1.0,
                             theta=[[1.0, 0.5], [0.5, 1.0]], gamma=[[2.0, 1.0], [1.0, 2.0]])
    spec = fam.operator_spec()
    funcs = [lambda x: float(np.exp(-x @ x)), lambda x: float(np.cos(x[0]) * np.sin(x[1]))]
    x = np.array([0.4, -0.3])
    jet_fd = co.FieldJet.from_callables(funcs, x, step=1e-5)

    g0 = -2 * x * np.exp(-x @ x)
    h0 = (4 * np.outer(x, x) - 2 * np.eye(2)) * np.exp(-x @ x)
    g1 = np.array([-np.sin(x[0]) * np.sin(x[1]), np.cos(x[0]) * np.cos(x[1])])
    h1 = np.array([[-np.cos(x[0]) * np.sin(x[1]), -np.sin(x[0]) * np.cos(x[1])],
                   [-np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])]])
    jet_exact = co.FieldJet(values=np.array([funcs[0](x), funcs[1](x)]),
                            gradients=np.stack([g0, g1]),
                            hessians=np.stack([h0, h1]))
    for variant in co.VARIANTS:
        for h in range(2):
            a = co.eval_operator(spec, variant, jet_fd, h, x)
            b = co.eval_operator(spec, variant, jet_exact, h, x)
            assert a == pytest.approx(b, rel=1e-6, abs=1e-6)


def test_operator_rejects_bad_component():
    spec = _laplacian_spec()
    jet = co.FieldJet(np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1, 1)))
    with pytest.raises(DimensionMismatchError):
        co.eval_operator(spec, "plain", jet, 3, np.array([0.0]))


def test_operator_rejects_bad_variant():
    spec = _laplacian_spec()
    jet = co.FieldJet(np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1, 1)))
    with pytest.raises(ValueError):
        co.eval_operator(spec, "Q", jet, 0, np.array([0.0]))


# ---------------------------------------------------------------------------
# coupling reachability
# ---------------------------------------------------------------------------

def test_support_chain():
    # entries flow 1 -> 2 -> 3 (0-based: 0 -> 1 -> 2): v_10 and v_21 nontrivial
    nz = {(1, 0), (2, 1)}
    sup = co.coupling_support(3, 0, lambda h, l: (h, l) in nz)
    assert sup.levels == (frozenset({1}), frozenset({2}))
    assert sup.reachable == frozenset({0, 1, 2})
    sup_end = co.coupling_support(3, 2, lambda h, l: (h, l) in nz)
    assert sup_end.levels == ()
    assert sup_end.reachable == frozenset({2})


def test_support_full_coupling():
    sup = co.coupling_support(3, 1, lambda h, l: True)
    assert sup.levels == (frozenset({0, 2}),)
    assert sup.reachable == frozenset({0, 1, 2})


def test_support_decoupled():
    sup = co.coupling_support(4, 2, lambda h, l: False)
    assert sup.reachable == frozenset({2})


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_support_monotone_under_added_edges(m, seed):
    # adding a coupling entry can only enlarge every reachable set
    rng = np.random.default_rng(seed)
    base = {(h, l) for h in range(m) for l in range(m) if h != l and rng.random() < 0.3}
    candidates = [(h, l) for h in range(m) for l in range(m) if h != l and (h, l) not in base]
    extra = set(base)
    if candidates:
        idx = rng.integers(len(candidates))
        extra.add(candidates[idx])
    for k in range(m):
        r1 = co.coupling_support(m, k, lambda h, l: (h, l) in base).reachable
        r2 = co.coupling_support(m, k, lambda h, l: (h, l) in extra).reachable
        assert r1 <= r2, f"adding an edge shrank the reachable set of {k}"


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def test_min_ellipticity_identity():
    fam = co.diagonal_family("polynomial", 2, 1)
    assert co.min_ellipticity(fam, 0) == pytest.approx(1.0)


def test_min_ellipticity_offdiagonal_pull():
    dims = co.SystemDims(2, 1)
    zeta = np.array([[[2.0, 0.5], [0.5, 2.0]]])
    fam = co.PolynomialFamily(dims, zeta, np.zeros((1, 2, 2)), np.ones((1, 2)),
                              np.zeros((1, 2)), np.array([[1.0]]), np.zeros((1, 1)))
    # Z = [[2,-0.5],[-0.5,2]] has eigenvalues 1.5 and 2.5
    assert co.min_ellipticity(fam, 0) == pytest.approx(1.5)


def test_min_ellipticity_rejects_indefinite():
    dims = co.SystemDims(2, 1)
    zeta = np.array([[[1.0, 2.0], [2.0, 1.0]]])
    fam = co.PolynomialFamily(dims, zeta, np.zeros((1, 2, 2)), np.ones((1, 2)),
                              np.zeros((1, 2)), np.array([[1.0]]), np.zeros((1, 1)))
    with pytest.raises(HypothesisViolationError, match="0"):
        co.min_ellipticity(fam, 0)


def test_family_field_validation():
    with pytest.raises(HypothesisViolationError):
        co.diagonal_family("polynomial", 1, 1, eta=-1.0)
    with pytest.raises(HypothesisViolationError):
        co.diagonal_family("polynomial", 1, 2, theta=[[0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DimensionMismatchError):
        dims = co.SystemDims(2, 1)
        co.PolynomialFamily(dims, np.tile(np.eye(2), (1, 1, 1)),
                            np.array([[[0.0, 1.0], [2.0, 0.0]]]),  # asymmetric alpha
                            np.ones((1, 2)), np.zeros((1, 2)),
                            np.array([[1.0]]), np.zeros((1, 1)))


def test_polynomial_growth_values():
    fam = co.diagonal_family("polynomial", 1, 2, zeta_diag=2.0, alpha=1.5, eta=3.0, beta=0.5,
                             theta=[[1.0, 0.5], [0.5, 1.0]], gamma=[[2.0, 1.0], [1.0, 2.0]])
    x = np.array([2.0])
    r = 5.0
    assert fam.Q(0, x)[0, 0] == pytest.approx(2.0 * r ** 1.5)
    assert fam.b(1, x)[0] == pytest.approx(-3.0 * 2.0 * r ** 0.5)
    V = fam.V(x)
    assert V[0, 0] == pytest.approx(r ** 2)
    assert V[0, 1] == pytest.approx(0.5 * r)


def test_polynomial_derivative_fields_match_fd():
    fam = co.diagonal_family("polynomial", 2, 1, zeta_diag=1.5, alpha=1.0, eta=2.0, beta=1.0,
                             theta=[[1.0]], gamma=[[1.0]])
    x = np.array([0.6, -1.1])
    step = 1e-6
    # R entries vs central differences of Q
    R = fam.R(0, x)
    for i in range(2):
        ei = np.zeros(2)
        ei[i] = step
        dQ = (fam.Q(0, x + ei) - fam.Q(0, x - ei)) / (2 * step)
        for j in range(2):
            assert R[i, j] == pytest.approx(dQ[i, j], rel=1e-6, abs=1e-8)
    # divb vs central differences of b
    acc = 0.0
    for i in range(2):
        ei = np.zeros(2)
        ei[i] = step
        acc += (fam.b(0, x + ei)[i] - fam.b(0, x - ei)[i]) / (2 * step)
    assert fam.divb(0, x) == pytest.approx(acc, rel=1e-6)


def test_exponential_derivative_fields_match_fd():
    fam = co.diagonal_family("exponential", 2, 1, zeta_diag=0.8, alpha=0.5, eta=1.2, beta=0.5,
                             theta=[[1.0]], gamma=[[1.0]])
    x = np.array([0.9, 0.2])
    step = 1e-6
    R = fam.R(0, x)
    for i in range(2):
        ei = np.zeros(2)
        ei[i] = step
        dQ = (fam.Q(0, x + ei) - fam.Q(0, x - ei)) / (2 * step)
        for j in range(2):
            assert R[i, j] == pytest.approx(dQ[i, j], rel=1e-6, abs=1e-8)
    acc = 0.0
    for i in range(2):
        ei = np.zeros(2)
        ei[i] = step
        acc += (fam.b(0, x + ei)[i] - fam.b(0, x - ei)[i]) / (2 * step)
    assert fam.divb(0, x) == pytest.approx(acc, rel=1e-6)


def test_family_vectorized_evaluation_matches_scalar():
    fam = co.diagonal_family("exponential", 2, 2, alpha=0.3, beta=0.7,
                             theta=[[1.0, 0.2], [0.2, 1.0]], gamma=[[1.0, 0.5], [0.5, 1.0]])
    pts = np.array([[0.0, 0.0], [1.0, -2.0], [0.3, 0.4]])
    Qb = fam.Q(1, pts)
    bb = fam.b(1, pts)
    Vb = fam.V(pts)
    db = fam.divb(1, pts)
    for p in range(3):
        assert np.allclose(Qb[p], fam.Q(1, pts[p]))
        assert np.allclose(bb[p], fam.b(1, pts[p]))
        assert np.allclose(Vb[p], fam.V(pts[p]))
        assert np.allclose(db[p], fam.divb(1, pts[p]))


def test_ellipticity_lower_bound_on_samples():
    # <Q(x) xi, xi> >= lambda_min(Z) (1+|x|^2)^alpha_min |xi|^2 under diagonal dominance
    dims = co.SystemDims(2, 1)
    zeta = np.array([[[2.0, 0.4], [0.4, 1.5]]])
    alpha = np.array([[[1.0, 0.25], [0.25, 1.0]]])
    fam = co.PolynomialFamily(dims, zeta, alpha, np.ones((1, 2)), np.zeros((1, 2)),
                              np.array([[1.0]]), np.zeros((1, 1)))
    lam = co.min_ellipticity(fam, 0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.normal(size=2) * 3
        xi = rng.normal(size=2)
        r = 1 + x @ x
        quad = xi @ fam.Q(0, x) @ xi
        floor = lam * r ** fam.alpha_min(0) * (xi @ xi)
        assert quad >= floor - 1e-9 * abs(quad)
