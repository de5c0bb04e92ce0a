import math

import numpy as np
import pytest

from kernelbound.coefficients import OperatorSpec, SystemDims, diagonal_family
from kernelbound.errors import DomainError
from kernelbound.hypotheses import (
    SamplePlan,
    check_base,
    check_exponential,
    check_polynomial,
    compute_row_sum_bound,
    estimate_ledger,
    margins_csv,
    report_text,
)
from kernelbound.lyapunov import SpaceTimeWeight


def headline_family():
    return diagonal_family("polynomial", 1, 2, beta=1.0,
                           theta=[[1.0, 0.5], [0.5, 1.0]],
                           gamma=[[2.0, 1.0], [1.0, 2.0]])


def smoke_exp_family():
    return diagonal_family("exponential", 1, 2,
                           theta=[[1.0, 0.5], [0.5, 1.0]],
                           gamma=[[1.0, 0.5], [0.5, 1.0]])


def trivial_spec(d=1, m=1):
    """Heat-equation-shaped system: identity diffusion, no drift, no coupling."""
    dims = SystemDims(d, m)

    def npoints(x):
        return np.atleast_2d(np.asarray(x, dtype=float)).shape[0]

    return OperatorSpec(
        dims=dims,
        Q=lambda h, x: np.tile(np.eye(d), (npoints(x), 1, 1)),
        b=lambda h, x: np.zeros((npoints(x), d)),
        V=lambda x: np.zeros((npoints(x), m, m)),
        R=lambda h, x: np.zeros((npoints(x), d, d)),
        divb=lambda h, x: np.zeros(npoints(x)),
    )


def report_by_id(reports, hid):
    matches = [r for r in reports if r.hypothesis_id == hid]
    assert len(matches) == 1, f"expected one report {hid}, got {len(matches)}"
    return matches[0]


class TestFamilyChecks:
    def test_headline_polynomial_all_hold(self):
        reports = check_polynomial(headline_family())
        assert all(r.ok for r in reports)
        assert {r.status for r in reports} == {"holds"}

    def test_headline_growth_balance_margin(self):
        rep = report_by_id(check_polynomial(headline_family()), "growth-balance")
        assert rep.margins["balance[0]"] == pytest.approx(3.0)
        assert rep.margins["balance[1]"] == pytest.approx(3.0)

    def test_weak_diagonal_potential_fails_with_witness(self):
        fam = diagonal_family("polynomial", 1, 2,
                              theta=[[1.0, 0.5], [0.5, 1.0]],
                              gamma=[[1.0, 2.0], [1.0, 2.0]])
        rep = report_by_id(check_polynomial(fam), "potential-row-dominance")
        assert rep.status == "fails"
        assert rep.witness == (0, 1)

    def test_decoupled_entries_do_not_constrain(self):
        # zero theta off-diagonal: the large gamma_01 exponent is inert
        fam = diagonal_family("polynomial", 1, 2, theta=np.eye(2),
                              gamma=[[1.0, 5.0], [5.0, 1.0]])
        rep = report_by_id(check_polynomial(fam), "potential-row-dominance")
        assert rep.status == "holds"
        assert rep.margins == {}

    def test_smoke_exponential_margins(self):
        reports = check_exponential(smoke_exp_family())
        assert all(r.ok for r in reports)
        assert report_by_id(reports, "growth-balance").margins["balance[0]"] == pytest.approx(1.0)
        assert report_by_id(reports, "adjoint-dominance").margins["adjoint[0]"] == pytest.approx(0.5)
        assert report_by_id(reports, "two-sided-dominance").margins["two-sided[1]"] == pytest.approx(0.5)

    def test_exponential_balance_needs_strict_excess(self):
        fam = diagonal_family("exponential", 1, 1, alpha=1.0, gamma=[[1.0]])
        rep = report_by_id(check_exponential(fam), "growth-balance")
        assert rep.status == "fails"
        assert rep.witness == (0,)


class TestRowSumBound:
    def test_headline_forward_value(self):
        # min over x of theta_kk r^2 - 0.5 r sits at x = 0: 1 - 0.5
        row = compute_row_sum_bound(headline_family())
        assert row.M == pytest.approx(0.5, abs=1e-12)
        assert row.certified_tail

    def test_headline_adjoint_value(self):
        # column sums minus div b minimize at |x|^2 = 3/4 with value -17/16
        row = compute_row_sum_bound(headline_family(), adjoint=True)
        assert row.M == pytest.approx(-1.0625, abs=2e-3)
        assert row.certified_tail

    def test_exponential_forward_and_adjoint(self):
        fam = smoke_exp_family()
        row = compute_row_sum_bound(fam)
        assert row.M == pytest.approx(0.5 * math.e, rel=1e-9)
        adj = compute_row_sum_bound(fam, adjoint=True)
        # constant div b = -e joins the column sums
        assert adj.M == pytest.approx(-0.5 * math.e, rel=1e-9)
        assert row.certified_tail and adj.certified_tail

    def test_zero_potential_spec(self):
        row = compute_row_sum_bound(trivial_spec(m=2))
        assert row.M == pytest.approx(0.0, abs=1e-14)
        assert row.certified_tail


class TestBaseChecks:
    def test_headline_base_holds(self):
        reports, row = check_base(headline_family())
        assert all(r.ok for r in reports)
        assert report_by_id(reports, "row-sum-lower-bound").status == "holds"
        assert row.M == pytest.approx(0.5, abs=1e-12)

    def test_generic_spec_is_numeric_only(self):
        reports, row = check_base(trivial_spec(m=2))
        by_status = {r.hypothesis_id: r.status for r in reports}
        assert by_status["ellipticity"] == "numeric-only"
        assert by_status["row-sum-lower-bound"] == "numeric-only"
        assert row.M == pytest.approx(0.0, abs=1e-14)

    def test_indefinite_diffusion_fails(self):
        spec = trivial_spec()
        bad = OperatorSpec(dims=spec.dims,
                           Q=lambda h, x: -np.asarray(spec.Q(h, x)),
                           b=spec.b, V=spec.V, R=spec.R, divb=spec.divb)
        reports, _ = check_base(bad)
        rep = report_by_id(reports, "ellipticity")
        assert rep.status == "fails"
        assert rep.witness is not None


def power_weights(eps_scale=(0.5, 0.75, 1.0), eps_T=1.0, sigma=1.0, rho=1.0):
    return tuple(SpaceTimeWeight("power", e * eps_T, sigma, rho) for e in eps_scale)


class TestLedger:
    def test_trivial_coefficients_pin_the_constants(self):
        w, nu1, nu2 = power_weights()
        led = estimate_ledger(trivial_spec(m=2), w, nu1, nu2, s=4.0,
                              window=(0.5, 1.5))
        # no potential, no drift, no diffusion derivative
        assert led.c[4] < 1e-200
        assert led.c[5] < 1e-200
        assert led.c[7] < 1e-200
        # weight-vs-nu1 and |Q|_F peak at t = a0, x = 0 where S(r) = 1
        assert led.c[0] == pytest.approx(math.exp(2 * (0.5 - 0.75) * 0.5 / 4.0), rel=1e-12)
        assert led.c[6] == pytest.approx(math.exp((0.5 - 0.75) * 0.5 / 4.0), rel=1e-12)
        assert led.c[1] > 1e-6 and led.c[2] > 1e-6 and led.c[3] > 1e-6
        assert led.M == pytest.approx(0.0, abs=1e-14)

    def test_frobenius_scaling_with_dimension(self):
        w, nu1, nu2 = power_weights()
        led = estimate_ledger(trivial_spec(d=2, m=1), w, nu1, nu2, s=5.0,
                              window=(0.5, 1.5))
        expected = math.sqrt(2.0) * math.exp((0.5 - 0.75) * 0.5 / 5.0)
        assert led.c[6] == pytest.approx(expected, rel=1e-12)

    def test_time_derivative_against_calculus_maximum(self):
        # ratio_4 = A u e^{-B u} in u = S(r) with A = eps_w and
        # B = 2 (eps_1 - eps_w) t / s; its max A/(eB) is largest at t = a0
        w, nu1, nu2 = power_weights()
        led = estimate_ledger(trivial_spec(), w, nu1, nu2, s=4.0,
                              window=(0.5, 1.5))
        assert led.c[3] == pytest.approx(8.0 / math.e, rel=1e-3)

    def test_window_quarters_and_invariants(self):
        fam = headline_family()
        w, nu1, nu2 = power_weights(eps_T=0.5, sigma=2.0)
        led = estimate_ledger(fam, w, nu1, nu2, s=4.0, window=(0.5, 1.5))
        assert led.window == (0.5, 0.75, 1.25, 1.5)
        assert led.M == pytest.approx(0.5, abs=1e-12)
        assert led.analytic is not None
        for c_i, a_i in zip(led.c, led.analytic):
            assert a_i >= c_i - 1e-12
        assert led.boundary_flags is not None and not any(led.boundary_flags)
        assert all(np.isfinite(led.c))

    def test_adjoint_potential_item_absorbs_divergence(self):
        fam = headline_family()
        w, nu1, nu2 = power_weights(eps_T=0.5, sigma=2.0)
        fwd = estimate_ledger(fam, w, nu1, nu2, s=4.0, window=(0.5, 1.5))
        adj = estimate_ledger(fam, w, nu1, nu2, s=4.0, window=(0.5, 1.5), adjoint=True)
        assert adj.c[4] > fwd.c[4]
        merged = fwd.with_adjoint(adj)
        assert merged.c_star == adj.c
        assert merged.M_star == pytest.approx(-1.0625, abs=2e-3)

    def test_exponential_family_stays_finite(self):
        fam = smoke_exp_family()
        w, nu1, nu2 = tuple(SpaceTimeWeight("integrated-exp", e * 0.5, 1.0, 0.5)
                            for e in (0.5, 0.75, 1.0))
        led = estimate_ledger(fam, w, nu1, nu2, s=4.0, window=(0.5, 1.5))
        assert all(np.isfinite(led.c))
        assert led.c[4] > 1.0  # exponential potential dominates the weight gap
        assert led.M == pytest.approx(0.5 * math.e, rel=1e-9)

    def test_inner_window_override(self):
        w, nu1, nu2 = power_weights()
        led = estimate_ledger(trivial_spec(), w, nu1, nu2, s=4.0,
                              window=(0.5, 1.5), inner=(0.6, 1.4))
        assert led.window == (0.5, 0.6, 1.4, 1.5)

    def test_degenerate_windows_rejected(self):
        w, nu1, nu2 = power_weights()
        with pytest.raises(DomainError):
            estimate_ledger(trivial_spec(), w, nu1, nu2, s=4.0, window=(0.0, 1.0))
        with pytest.raises(DomainError):
            estimate_ledger(trivial_spec(), w, nu1, nu2, s=4.0, window=(2.0, 1.0))

    def test_weight_ordering_enforced(self):
        w, nu1, nu2 = power_weights()
        with pytest.raises(DomainError):
            estimate_ledger(trivial_spec(), nu2, nu1, w, s=4.0, window=(0.5, 1.5))
        mixed = SpaceTimeWeight("power", 0.75, 2.0, 1.0)  # sigma mismatch
        with pytest.raises(DomainError):
            estimate_ledger(trivial_spec(), w, mixed, nu2, s=4.0, window=(0.5, 1.5))

    def test_coarse_plan_is_cheap_and_consistent(self):
        fam = headline_family()
        w, nu1, nu2 = power_weights(eps_T=0.5, sigma=2.0)
        coarse = estimate_ledger(fam, w, nu1, nu2, s=4.0, window=(0.5, 1.5),
                                 plan=SamplePlan(t_count=5, radius=20.0, per_axis=129))
        fine = estimate_ledger(fam, w, nu1, nu2, s=4.0, window=(0.5, 1.5))
        for c_lo, c_hi in zip(coarse.c, fine.c):
            # a denser sample can only reveal a larger supremum
            assert c_hi >= c_lo - 1e-9 * max(1.0, c_lo)


class TestReporting:
    def test_report_text_layout(self):
        reports, row = check_base(headline_family())
        text = report_text(reports, row)
        assert text.splitlines()[0] == "hypothesis report"
        assert "[ellipticity]" in text and "status = holds" in text
        assert "certified_tail = True" in text
        assert text == report_text(reports, row)

    def test_margins_csv_shape(self):
        reports = check_polynomial(headline_family())
        csv = margins_csv(reports)
        lines = csv.strip().splitlines()
        assert lines[0] == "hypothesis,margin,value,status"
        assert any(line.startswith("growth-balance,balance[0],3.0,") for line in lines)
        assert all(line.count(",") == 3 for line in lines)
