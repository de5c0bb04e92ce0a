"""Lyapunov synthesis, evaluation, growth integrals, certificates."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from kernelbound import coefficients as co
from kernelbound import lyapunov as ly
from kernelbound.errors import (
    CertificateError,
    DomainError,
    SaturationError,
    SynthesisError,
)


def poly_headline():
    """d=1, m=2 polynomial family used throughout: quadratic diagonal potential."""
    return co.diagonal_family("polynomial", 1, 2, beta=1.0,
                              theta=[[1.0, 0.5], [0.5, 1.0]],
                              gamma=[[2.0, 1.0], [1.0, 2.0]])


# ---------------------------------------------------------------------------
# synthesis: polynomial family
# ---------------------------------------------------------------------------

def test_synth_poly_single_equation_wide_interval():
    # gamma=2, beta=1, alpha=0: balance holds up to rho=2, no damping cap,
    # so rho = 1; damping level max{2, 1+rho} = 2 makes sigma_min = 1
    fam = co.diagonal_family("polynomial", 1, 1, beta=1.0, theta=[[1.0]], gamma=[[2.0]])
    res = ly.synth_poly(fam, T=1.0)
    assert res.static.rho == pytest.approx(1.0)
    assert res.notes["sigma_min"] == pytest.approx(1.0)
    assert res.timed.sigma == pytest.approx(2.0)
    # delta midpoint of (2/3, 2*(2-1)/2 = 1)
    assert res.timed.delta == pytest.approx((2.0 / 3.0 + 1.0) / 2.0)
    assert res.static.eps_hat == pytest.approx(0.5)


def test_synth_poly_damping_cap_binds():
    # gamma=0.5, beta=0, alpha=0: the strict damping condition rho < gamma
    # binds before the growth balance, midpoint 0.25
    fam = co.diagonal_family("polynomial", 1, 1, beta=0.0, theta=[[1.0]], gamma=[[0.5]])
    res = ly.synth_poly(fam, T=1.0)
    assert res.static.rho == pytest.approx(0.25)


def test_synth_poly_headline_values():
    res = ly.synth_poly(poly_headline(), T=1.0)
    assert res.static.rho == pytest.approx(1.0)
    assert res.static.eps_hat == pytest.approx(0.5)
    assert res.timed.sigma == pytest.approx(2.0)
    assert res.timed.eps_T == pytest.approx(0.5)  # eps_hat * T^-sigma


def test_synth_poly_infeasible_growth():
    # alpha_max = 3 makes max{gamma, beta_min} + 1 = 2 < alpha_max + ... infeasible
    fam = co.diagonal_family("polynomial", 1, 1, alpha=3.0, beta=0.0,
                             theta=[[1.0]], gamma=[[1.0]])
    with pytest.raises(SynthesisError, match="rho"):
        ly.synth_poly(fam, T=1.0)


def test_synth_poly_adjoint_requires_strong_diagonal():
    # forward feasible but adjoint needs gamma_kk > beta_max + rho
    fam = co.diagonal_family("polynomial", 1, 1, beta=2.0, theta=[[1.0]], gamma=[[1.0]])
    res = ly.synth_poly(fam, T=1.0)  # forward fine
    assert res.static.rho > 0
    with pytest.raises(SynthesisError, match="adjoint"):
        ly.synth_poly(fam, T=1.0, target="P_adjoint")


def test_synth_poly_adjoint_headline():
    # gamma_kk=2, beta_max=1, alpha_max=0: upper = min(1.5, 1, 2) = 1, rho*=0.5
    res = ly.synth_poly(poly_headline(), T=1.0, target="P_adjoint")
    assert res.static.rho == pytest.approx(0.5)
    assert res.static.target == "P_adjoint"
    # sigma* = rho*/(gamma_min - rho*) + 1 = 0.5/1.5 + 1
    assert res.timed.sigma == pytest.approx(0.5 / 1.5 + 1.0)


def test_synth_determinism_bit_for_bit():
    a = ly.synth_poly(poly_headline(), T=1.0)
    b = ly.synth_poly(poly_headline(), T=1.0)
    assert a.static == b.static and a.timed == b.timed


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.6, max_value=4.0), st.floats(min_value=0.1, max_value=2.0))
def test_synth_poly_interval_monotone_in_gamma(gamma, bump):
    # enlarging the diagonal potential exponent never shrinks the rho interval
    fam1 = co.diagonal_family("polynomial", 1, 1, beta=0.0, theta=[[1.0]], gamma=[[gamma]])
    fam2 = co.diagonal_family("polynomial", 1, 1, beta=0.0, theta=[[1.0]], gamma=[[gamma + bump]])
    u1 = ly.synth_poly(fam1, T=1.0).notes["rho_interval"][1]
    u2 = ly.synth_poly(fam2, T=1.0).notes["rho_interval"][1]
    assert u2 >= u1 - 1e-12


# ---------------------------------------------------------------------------
# synthesis: exponential family
# ---------------------------------------------------------------------------

def exp_smoke():
    return co.diagonal_family("exponential", 1, 2,
                              theta=[[1.0, 0.5], [0.5, 1.0]],
                              gamma=[[1.0, 0.5], [0.5, 1.0]])


def test_synth_exp_forward():
    # beta_min=0, gamma_kk=1 -> rho interval (0,1), midpoint 0.5; sigma fixed at 1
    res = ly.synth_exp(exp_smoke(), T=1.0)
    assert res.static.form == "integrated-exp"
    assert res.static.rho == pytest.approx(0.5)
    assert res.timed.sigma == pytest.approx(1.0)
    assert res.timed.delta == pytest.approx((0.5 + 1.0) / 2.0)


def test_synth_exp_strong_drift_uses_beta():
    fam = co.diagonal_family("exponential", 1, 1, beta=2.0, theta=[[1.0]], gamma=[[1.0]])
    res = ly.synth_exp(fam, T=1.0)
    assert res.static.rho == pytest.approx(1.0)  # midpoint of (0, max{2,1}=2)


def test_synth_exp_adjoint_sigma_rule():
    # gamma_min = 1 -> rho* = 0.5, sigma*_min = 1, sigma* = 2
    res = ly.synth_exp(exp_smoke(), T=1.0, target="P_adjoint")
    assert res.static.rho == pytest.approx(0.5)
    assert res.timed.sigma == pytest.approx(2.0)


def test_synth_exp_infeasible():
    fam = co.diagonal_family("exponential", 1, 1, beta=0.0, theta=[[1.0]], gamma=[[0.0]])
    with pytest.raises(SynthesisError):
        ly.synth_exp(fam, T=1.0)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_eval_power_form():
    spec = ly.LyapunovSpec(form="power", rho=1.0, eps_hat=1.0)
    assert spec.value(np.array([0.0]), 1) == pytest.approx(math.e)
    assert spec.value(np.array([1.0]), 1) == pytest.approx(math.exp(2.0))


def test_eval_timed_at_zero_is_one():
    spec = ly.LyapunovSpec(form="power", rho=1.0, eps_hat=0.5)
    timed = ly.TimeLyapunovSpec(base=spec, T=1.0, sigma=2.0, delta=5.0 / 6.0)
    assert timed.value(0.0, np.array([3.0]), 1) == pytest.approx(1.0)
    assert timed.value(1.0, np.array([0.0]), 1) == pytest.approx(math.exp(0.5))


def test_eval_saturation_error_carries_log_value():
    spec = ly.LyapunovSpec(form="power", rho=2.0, eps_hat=1.0)
    with pytest.raises(SaturationError) as exc:
        spec.value(np.array([100.0]), 1)
    assert exc.value.log_value == pytest.approx((1 + 100.0 ** 2) ** 2)


def test_integrated_exp_closed_forms_match_quadrature():
    # the closed forms for rho in {1, 1/2} are fast paths of the quadrature contract
    for rho in (1.0, 0.5):
        for r in (0.0, 0.7, 3.0, 20.0):
            direct, _ = integrate.quad(lambda tau: math.exp(tau ** rho / 2.0), 0.0, r,
                                       epsrel=1e-12, limit=200)
            assert ly.integrated_exp(r, rho) == pytest.approx(direct, rel=1e-10, abs=1e-12)
    # generic-rho path agrees with its own quadrature contract
    assert ly.integrated_exp(2.0, 0.8) == pytest.approx(
        integrate.quad(lambda tau: math.exp(tau ** 0.8 / 2.0), 0, 2.0, epsrel=1e-12)[0],
        rel=1e-9)


def test_weight_log_derivatives_match_fd():
    for form, rho in (("power", 1.5), ("integrated-exp", 0.5)):
        w = ly.SpaceTimeWeight(form=form, eps=0.3, sigma=2.0, rho=rho)
        t, x = 0.7, np.array([0.8, -0.4])
        step = 1e-6
        lv = lambda tt, xx: w.log_value(tt, xx, 2)
        dt_fd = (lv(t + step, x) - lv(t - step, x)) / (2 * step)
        assert w.dt_log(t, x, 2) == pytest.approx(dt_fd, rel=1e-6)
        grad = w.grad_log(t, x, 2)
        hess = w.hess_log(t, x, 2)
        for i in range(2):
            ei = np.zeros(2)
            ei[i] = step
            assert grad[i] == pytest.approx((lv(t, x + ei) - lv(t, x - ei)) / (2 * step), rel=1e-6)
            for j in range(2):
                ej = np.zeros(2)
                ej[j] = step
                h_fd = (lv(t, x + ei + ej) - lv(t, x + ei - ej)
                        - lv(t, x - ei + ej) + lv(t, x - ei - ej)) / (4 * step ** 2)
                assert hess[i, j] == pytest.approx(h_fd, rel=1e-4, abs=1e-4)


# ---------------------------------------------------------------------------
# growth integral
# ---------------------------------------------------------------------------

def test_growth_integral_zero_rate():
    assert ly.growth_integral(0.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0)  # G(t) = t
    assert ly.growth_integral(0.0, 0.0, 1.0, 0.75, 5.0) == pytest.approx(0.0)


def test_growth_integral_against_quadrature():
    c0, eps_T, sigma, delta = 1.0, 2.0, 1.0, 0.75
    p = sigma * (delta - 1.0) / delta
    g = lambda s: c0 + eps_T * delta * s ** p
    for t in (0.25, 1.0, 2.0):
        quad, _ = integrate.quad(g, 0.0, t, epsrel=1e-12, points=[0.0] if t > 0 else None)
        assert ly.growth_integral(c0, eps_T, sigma, delta, t) == pytest.approx(quad, rel=1e-10)
    assert ly.growth_integral(c0, eps_T, sigma, delta, 1.0) == pytest.approx(3.25)


def test_growth_integral_rejects_divergent():
    with pytest.raises(DomainError):
        ly.growth_integral(0.0, 1.0, 2.0, 0.5, 1.0)  # p = -1.5


def test_timed_g_and_G_consistency():
    res = ly.synth_poly(poly_headline(), T=1.0)
    timed = ly.TimeLyapunovSpec(base=res.static, T=1.0, sigma=res.timed.sigma,
                                delta=res.timed.delta, c0=0.3)
    quad, _ = integrate.quad(lambda s: float(timed.g(s)), 0.0, 0.8, epsrel=1e-12)
    assert float(timed.G(0.8)) == pytest.approx(quad, rel=1e-9)


def test_delta_validation():
    spec = ly.LyapunovSpec(form="power", rho=1.0, eps_hat=0.5)
    with pytest.raises(DomainError):
        ly.TimeLyapunovSpec(base=spec, T=1.0, sigma=2.0, delta=0.5)  # below sigma/(sigma+1)
    with pytest.raises(DomainError):
        ly.TimeLyapunovSpec(base=spec, T=1.0, sigma=2.0, delta=2.5)  # above sigma


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def test_certificate_static_headline():
    fam = poly_headline()
    res = ly.synth_poly(fam, T=1.0)
    rep = ly.verify_certificate(fam, res.static, radius=20.0, tolerance=0.01)
    assert rep.passed, rep.message
    assert rep.certified.lam is not None and rep.certified.lam >= 0
    # hand computation: ratio_k(0) = a1 + a3 = (2 rho eps zeta) - (theta_kk - theta_off)
    # = 2*1*0.5*1 - (1 - 0.5) = 0.5 at x = 0, and the ratio decreases away from 0
    assert rep.sup_coarse == pytest.approx(0.5, abs=1e-6)


def test_certificate_static_matches_fd_operator_route():
    # independent route: evaluate (A phi)_k / phi through eval_operator with
    # a finite-difference jet of phi itself
    fam = poly_headline()
    res = ly.synth_poly(fam, T=1.0)
    spec = fam.operator_spec()
    static = res.static
    for xv in (0.0, 0.9, -1.7):
        phi = lambda x: float(np.exp(static.log_value(np.atleast_1d(x), 1)))
        jet = co.FieldJet.from_callables([phi, phi], np.array([xv]), step=1e-5)
        for k in range(2):
            direct = co.eval_operator(spec, "P", jet, k, np.array([xv])) / phi(xv)
            pts = np.array([[xv]])
            analytic = ly._generator_ratio(fam, static, None, None, pts)[k, 0]
            assert direct == pytest.approx(analytic, rel=1e-5, abs=1e-5)


def test_certificate_rejects_heat_equation_blowup():
    # V = 0, b = 0: exp(eps (1+x^2)^rho) grows under the Laplacian, sup explodes with R
    dims = co.SystemDims(1, 1)
    spec = co.operator_spec_from_callables(
        dims,
        Q=lambda h, x: np.ones(np.atleast_2d(x).shape[:1])[:, None, None],
        b=lambda h, x: np.zeros_like(np.atleast_2d(x)),
        V=lambda x: np.zeros((np.atleast_2d(x).shape[0], 1, 1)),
        R=lambda h, x: np.zeros(np.atleast_2d(x).shape[:1])[:, None, None],
        divb=lambda h, x: np.zeros(np.atleast_2d(x).shape[:1]),
    )
    lyap = ly.LyapunovSpec(form="power", rho=1.0, eps_hat=0.5)
    with pytest.raises(CertificateError, match="growth"):
        ly.verify_certificate(spec, lyap, radius=10.0)


def test_certificate_timed_calibrates_c0():
    fam = poly_headline()
    res = ly.synth_poly(fam, T=1.0)
    rep = ly.verify_certificate(fam, res.timed, radius=20.0, tolerance=0.01)
    assert rep.passed, rep.message
    timed = rep.certified
    assert timed.c0 is not None and timed.c0 >= 0.0
    # calibrated residual inequality holds on a fresh sample grid
    pts = np.linspace(-15.0, 15.0, 401)[:, None]
    for t in (0.05, 0.3, 0.9):
        ratio = ly._generator_ratio(fam, timed.base, timed, t, pts)
        lhs = np.max(ratio)
        assert lhs <= float(timed.g(t)) + 1e-9


def test_certificate_timed_exponential_family():
    fam = exp_smoke()
    res = ly.synth_exp(fam, T=1.0)
    rep = ly.verify_certificate(fam, res.timed, radius=20.0, tolerance=0.01)
    assert rep.passed, rep.message
    assert rep.certified.c0 >= 0.0


def test_certificate_adjoint_target():
    fam = poly_headline()
    res = ly.synth_poly(fam, T=1.0, target="P_adjoint")
    rep = ly.verify_certificate(fam, res.static, radius=20.0, tolerance=0.01)
    assert rep.passed, rep.message
    assert rep.certified.lam is not None
