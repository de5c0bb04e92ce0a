"""Structural hypothesis checks and the numeric constants ledger.

Three layers of scrutiny, in increasing numeric weight:

1. closed-form exponent comparisons on the coefficient families (diagonal
   growth of the potential dominating the couplings, diffusion diagonal
   dominating off-diagonal growth, and the growth balance that makes
   Lyapunov synthesis feasible);
2. the row-sum lower bound M of the cooperative potential, measured as a
   grid infimum plus a directional tail probe, which feeds the mass decay
   e^{-Mt} of the semigroup;
3. the eight weight-compatibility ratios tying a decaying space-time weight
   w to a pair of growing comparison functions nu1, nu2: c_i is the
   supremum over a time window and a spatial sample box of ratio_i, e.g.

       c_2 = sup |Q^h grad w| / (w^{(s-1)/s} nu1^{1/s}),
       c_5 = sup |V_(h,.)| / (w^{-2/s} nu2^{2/s}),    and so on.

All ratio work happens in log space: coefficients and weights may overflow
float64 individually, their combinations never should.  For the coefficient
families the ledger also reports the closed-form envelope of each constant
(a calibrated multiple of the worst window endpoint), which by construction
dominates the numeric supremum on any sample plan inside the window.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import LEDGER_ITEMS, ConstantsLedger
from .coefficients import (
    ExponentialFamily,
    PolynomialFamily,
    _FamilyBase,
    min_ellipticity,
)
from .errors import DomainError, HypothesisViolationError, NonFiniteError
from .lyapunov import SpaceTimeWeight, _grid_points

_LOG_MAX = math.log(np.finfo(float).max)
_PLAN_POINTS = {1: 513, 2: 65}


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of one structural check.

    status is "holds", "fails", or "numeric-only" (true on the sampled set,
    no closed-form certificate).  witness names the offending indices or
    point for failures; margins maps labelled quantities to their slack
    (positive = satisfied strictly).
    """

    hypothesis_id: str
    status: str
    witness: Optional[tuple] = None
    margins: dict = field(default_factory=dict)
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "fails"


@dataclass(frozen=True)
class RowSumBound:
    """Lower bound M for the row sums of the cooperative potential."""

    M: float
    method: str
    certified_tail: bool


@dataclass(frozen=True)
class SamplePlan:
    """Sampling layout for numeric suprema: time count, box radius, axis points."""

    t_count: int = 9
    radius: float = 20.0
    per_axis: Optional[int] = None

    def points(self, d: int) -> np.ndarray:
        n = self.per_axis or _PLAN_POINTS.get(d, 33)
        return _grid_points(d, self.radius, n)

    def times(self, a0: float, b0: float) -> np.ndarray:
        return np.linspace(a0, b0, self.t_count)


# ---------------------------------------------------------------------------
# closed-form family checks
# ---------------------------------------------------------------------------

def _offdiag_dominance(fam: _FamilyBase) -> HypothesisReport:
    """Diagonal potential growth must strictly dominate row couplings."""
    m = fam.dims.m
    margins = {}
    worst = (math.inf, None)
    for h in range(m):
        for k in range(m):
            if h == k or fam.theta[h, k] == 0.0:
                continue
            slack = float(fam.gamma[h, h] - fam.gamma[h, k])
            margins[f"gamma[{h}][{h}]-gamma[{h}][{k}]"] = slack
            if slack < worst[0]:
                worst = (slack, (h, k))
    status = "holds" if (worst[1] is None or worst[0] > 0) else "fails"
    return HypothesisReport("potential-row-dominance", status,
                            witness=None if status == "holds" else worst[1],
                            margins=margins)


def _diffusion_dominance(fam: _FamilyBase) -> HypothesisReport:
    """Diagonal diffusion growth above off-diagonal growth, Z^k positive definite."""
    m, d = fam.dims.m, fam.dims.d
    margins = {}
    witness = None
    status = "holds"
    for k in range(m):
        amin = fam.alpha_min(k)
        for i in range(d):
            for j in range(d):
                if i == j or fam.zeta[k, i, j] == 0.0:
                    continue
                slack = float(amin - fam.alpha[k, i, j])
                margins[f"alpha_min[{k}]-alpha[{k}][{i}][{j}]"] = slack
                if slack <= 0 and witness is None:
                    status, witness = "fails", (k, i, j)
        try:
            margins[f"min_eig_Z[{k}]"] = min_ellipticity(fam, k)
        except HypothesisViolationError:
            status, witness = "fails", (k,)
            margins[f"min_eig_Z[{k}]"] = float(np.linalg.eigvalsh(fam.Z(k)).min())
    return HypothesisReport("diffusion-diagonal-dominance", status, witness=witness,
                            margins=margins)


def check_polynomial(fam: PolynomialFamily) -> list[HypothesisReport]:
    """Exponent hypotheses of the polynomial family.

    Covers sign/symmetry conventions (enforced at construction), row and
    diffusion dominance, the growth balance max{gamma_kk, beta_min} >
    alpha_max - 1 needed for forward synthesis, the stronger diagonal
    dominance needed for the adjoint, and the two-sided combination.
    """
    m = fam.dims.m
    reports = [
        HypothesisReport("family-signs", "holds",
                         margins={"eta_min": float(fam.eta.min()),
                                  "theta_diag_min": float(np.diag(fam.theta).min())},
                         note="sign and symmetry constraints enforced by the constructor"),
        _offdiag_dominance(fam),
        _diffusion_dominance(fam),
    ]
    margins, worst = {}, (math.inf, None)
    for k in range(m):
        slack = float(max(fam.gamma[k, k], fam.beta_min(k)) - (fam.alpha_max(k) - 1.0))
        margins[f"balance[{k}]"] = slack
        if slack < worst[0]:
            worst = (slack, (k,))
    reports.append(HypothesisReport(
        "growth-balance", "holds" if worst[0] > 0 else "fails",
        witness=None if worst[0] > 0 else worst[1], margins=margins))

    margins, worst = {}, (math.inf, None)
    for k in range(m):
        rivals = [fam.beta_max(k), fam.alpha_max(k) - 1.0]
        rivals += [float(fam.gamma[h, k]) for h in range(m) if h != k and fam.theta[h, k] != 0.0]
        slack = float(fam.gamma[k, k] - max(rivals))
        margins[f"adjoint[{k}]"] = slack
        if slack < worst[0]:
            worst = (slack, (k,))
    reports.append(HypothesisReport(
        "adjoint-dominance", "holds" if worst[0] > 0 else "fails",
        witness=None if worst[0] > 0 else worst[1], margins=margins))

    margins, worst = {}, (math.inf, None)
    for k in range(m):
        rivals = [fam.beta_max(k), fam.alpha_max(k) - 1.0]
        rivals += [float(fam.gamma[h, k]) for h in range(m) if h != k and fam.theta[h, k] != 0.0]
        rivals += [float(fam.gamma[k, h]) for h in range(m) if h != k and fam.theta[k, h] != 0.0]
        slack = float(fam.gamma[k, k] - max(rivals))
        margins[f"two-sided[{k}]"] = slack
        if slack < worst[0]:
            worst = (slack, (k,))
    reports.append(HypothesisReport(
        "two-sided-dominance", "holds" if worst[0] > 0 else "fails",
        witness=None if worst[0] > 0 else worst[1], margins=margins))
    return reports


def check_exponential(fam: ExponentialFamily) -> list[HypothesisReport]:
    """Exponent hypotheses of the exponential family (growth compared inside exp)."""
    m = fam.dims.m
    reports = [
        HypothesisReport("family-signs", "holds",
                         margins={"eta_min": float(fam.eta.min()),
                                  "theta_diag_min": float(np.diag(fam.theta).min())},
                         note="sign and symmetry constraints enforced by the constructor"),
        _offdiag_dominance(fam),
        _diffusion_dominance(fam),
    ]
    margins, worst = {}, (math.inf, None)
    for k in range(m):
        slack = float(max(fam.beta_min(k), fam.gamma[k, k]) - fam.alpha_max(k))
        margins[f"balance[{k}]"] = slack
        if slack < worst[0]:
            worst = (slack, (k,))
    reports.append(HypothesisReport(
        "growth-balance", "holds" if worst[0] > 0 else "fails",
        witness=None if worst[0] > 0 else worst[1], margins=margins))

    margins, worst = {}, (math.inf, None)
    for k in range(m):
        rivals = [fam.alpha_max(k), fam.beta_max(k)]
        rivals += [float(fam.gamma[h, k]) for h in range(m) if h != k and fam.theta[h, k] != 0.0]
        slack = float(fam.gamma[k, k] - max(rivals))
        margins[f"adjoint[{k}]"] = slack
        if slack < worst[0]:
            worst = (slack, (k,))
    reports.append(HypothesisReport(
        "adjoint-dominance", "holds" if worst[0] > 0 else "fails",
        witness=None if worst[0] > 0 else worst[1], margins=margins))

    margins, worst = {}, (math.inf, None)
    for k in range(m):
        rivals = [fam.alpha_max(k), fam.beta_max(k)]
        rivals += [float(fam.gamma[h, k]) for h in range(m) if h != k and fam.theta[h, k] != 0.0]
        rivals += [float(fam.gamma[k, h]) for h in range(m) if h != k and fam.theta[k, h] != 0.0]
        slack = float(fam.gamma[k, k] - max(rivals))
        margins[f"two-sided[{k}]"] = slack
        if slack < worst[0]:
            worst = (slack, (k,))
    reports.append(HypothesisReport(
        "two-sided-dominance", "holds" if worst[0] > 0 else "fails",
        witness=None if worst[0] > 0 else worst[1], margins=margins))
    return reports


# ---------------------------------------------------------------------------
# row-sum lower bound
# ---------------------------------------------------------------------------

def _family_log_absdivb_terms(fam: _FamilyBase, k: int, pts: np.ndarray) -> np.ndarray:
    """log of the d per-axis magnitudes of div b^k; all carry the same (negative) sign."""
    r = 1.0 + np.sum(pts * pts, axis=-1)
    if isinstance(fam, PolynomialFamily):
        grow = fam.beta[k] * np.log(r)[:, None]
        inner = 1.0 + 2.0 * fam.beta[k] * pts * pts / r[:, None]
    else:
        grow = r[:, None] ** fam.beta[k]
        inner = 1.0 + 2.0 * fam.beta[k] * pts * pts * r[:, None] ** (fam.beta[k] - 1.0)
    return (np.log(fam.eta[k])[None, :] + grow + np.log(inner)).T  # (d, n)


def _effective_rows(system, pts: np.ndarray, adjoint: bool) -> np.ndarray:
    """Row sums of the cooperative potential; the adjoint transposes and
    adds div b.  Shape (m, n).  Families run fully in log space so a huge
    potential degrades to +/- inf rather than NaN against a huge drift."""
    from .lyapunov import _vp_row_col_sums

    if not isinstance(system, _FamilyBase):
        sums = _vp_row_col_sums(system, pts, adjoint)
        if adjoint:
            for h in range(system.dims.m):
                sums[h] = sums[h] + np.asarray(system.divb(h, pts), dtype=float)
        return sums

    fam = system
    m = fam.dims.m
    r = 1.0 + np.sum(pts * pts, axis=-1)
    out = np.empty((m, len(r)))
    with np.errstate(over="ignore"):
        for k in range(m):
            logs = [fam.log_growth_V(k, k, r)[None, :]]
            signs = [np.ones((1, len(r)))]
            for l in range(m):
                if l == k:
                    continue
                h_idx, l_idx = (l, k) if adjoint else (k, l)
                if fam.theta[h_idx, l_idx] == 0.0:
                    continue
                logs.append(fam.log_growth_V(h_idx, l_idx, r)[None, :])
                signs.append(-np.ones((1, len(r))))
            if adjoint:
                terms = _family_log_absdivb_terms(fam, k, pts)
                logs.append(terms)
                signs.append(-np.ones_like(terms))
            mag, sign = _signed_log_sum(np.concatenate(logs, axis=0),
                                        np.concatenate(signs, axis=0), axis=0)
            vals = sign * np.exp(np.minimum(mag, _LOG_MAX))
            vals[mag > _LOG_MAX] = np.inf * sign[mag > _LOG_MAX]
            out[k] = vals
    return out


def compute_row_sum_bound(system, adjoint: bool = False, radius: float = 20.0,
                          per_axis: Optional[int] = None) -> RowSumBound:
    """Grid infimum of the worst cooperative row sum, with a tail probe.

    The infimum is taken over a box of the given radius; along each signed
    axis (and in-plane diagonals for d = 2) the row sums are probed at
    radii radius * {1, 1.25, 1.5, 2} and must be nondecreasing for the tail
    to count as certified, otherwise the result is marked numeric-only.
    """
    spec = system.operator_spec() if isinstance(system, _FamilyBase) else system
    d = spec.dims.d
    n = per_axis or _PLAN_POINTS.get(d, 33)
    pts = _grid_points(d, radius, n)
    sums = _effective_rows(system, pts, adjoint)
    M = float(np.min(sums))

    dirs = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        dirs += [e, -e]
    if d >= 2:
        for si in (1.0, -1.0):
            for sj in (1.0, -1.0):
                v = np.zeros(d)
                v[0], v[1] = si, sj
                dirs.append(v / math.sqrt(2.0))
    certified = True
    for v in dirs:
        radii = radius * np.array([1.0, 1.25, 1.5, 2.0])
        probe = np.stack([rr * v for rr in radii])
        vals = _effective_rows(system, probe, adjoint).min(axis=0)
        for lo, hi in zip(vals[:-1], vals[1:]):
            if hi >= lo:
                continue
            tol = 1e-12 * max(1.0, abs(lo)) if math.isfinite(lo) else 0.0
            if not (hi >= lo - tol):
                certified = False
    method = f"grid-infimum(radius={radius:g}, per_axis={n})" \
        + (", tail certified nondecreasing" if certified else ", tail NOT certified")
    return RowSumBound(M=M, method=method, certified_tail=certified)


def check_base(system, radius: float = 20.0) -> tuple[list[HypothesisReport], RowSumBound]:
    """Baseline well-posedness checks for any coefficient system.

    Regularity is assumed (reported as a note), ellipticity is certified
    via the sign-adjusted matrices for families and sampled for generic
    specs, the Lyapunov existence requirement is deferred to the synthesis
    and certificate machinery, and the row-sum lower bound of the
    cooperative potential is measured.
    """
    reports: list[HypothesisReport] = []
    is_family = isinstance(system, _FamilyBase)
    reports.append(HypothesisReport(
        "regularity", "holds" if is_family else "numeric-only",
        note="families are smooth by construction; generic coefficients are "
             "assumed locally Hoelder continuous"))

    spec = system.operator_spec() if is_family else system
    m, d = spec.dims.m, spec.dims.d
    if is_family:
        margins = {}
        status, witness = "holds", None
        for k in range(m):
            try:
                margins[f"min_eig_Z[{k}]"] = min_ellipticity(system, k)
            except HypothesisViolationError:
                status, witness = "fails", (k,)
                margins[f"min_eig_Z[{k}]"] = float(np.linalg.eigvalsh(system.Z(k)).min())
        reports.append(HypothesisReport("ellipticity", status, witness=witness, margins=margins))
    else:
        pts = _grid_points(d, radius, _PLAN_POINTS.get(d, 33))
        worst = math.inf
        arg = None
        for k in range(m):
            Q = np.asarray(spec.Q(k, pts), dtype=float)
            eigs = np.linalg.eigvalsh(0.5 * (Q + np.swapaxes(Q, -1, -2)))
            lo = float(eigs[:, 0].min())
            if lo < worst:
                worst, arg = lo, (k, tuple(pts[int(np.argmin(eigs[:, 0]))]))
        reports.append(HypothesisReport(
            "ellipticity", "numeric-only" if worst > 0 else "fails",
            witness=None if worst > 0 else arg, margins={"min_eig_Q_sampled": worst}))

    reports.append(HypothesisReport(
        "lyapunov-existence", "numeric-only",
        note="certified separately by synthesis and grid certificates"))

    if is_family:
        dom = _offdiag_dominance(system)
        reports.append(dom)
        row = compute_row_sum_bound(system, radius=radius)
        status = "holds" if (dom.ok and row.certified_tail) else \
            ("fails" if not dom.ok else "numeric-only")
        witness = dom.witness
    else:
        row = compute_row_sum_bound(system, radius=radius)
        status = "numeric-only"
        witness = None
    reports.append(HypothesisReport(
        "row-sum-lower-bound", status, witness=witness,
        margins={"M": row.M}, note=row.method))
    return reports, row


# ---------------------------------------------------------------------------
# constants ledger
# ---------------------------------------------------------------------------

def _signed_log_sum(logabs: np.ndarray, sign: np.ndarray, axis: int = 0):
    """Stable signed sum of terms given by (log|term|, sign); returns (log|sum|, sign)."""
    M = np.max(logabs, axis=axis, keepdims=True)
    M = np.where(np.isfinite(M), M, 0.0)
    acc = np.sum(sign * np.exp(logabs - M), axis=axis)
    out_sign = np.sign(acc)
    out = np.squeeze(M, axis=axis) + np.log(np.maximum(np.abs(acc), 1e-300))
    return out, out_sign


def _log_norm_from_entries(logabs: np.ndarray, axis: int = 0) -> np.ndarray:
    """log of the Euclidean/Frobenius norm from log|entries|."""
    M = np.max(logabs, axis=axis, keepdims=True)
    M = np.where(np.isfinite(M), M, 0.0)
    ssq = np.sum(np.exp(2.0 * (logabs - M)), axis=axis)
    return np.squeeze(M, axis=axis) + 0.5 * np.log(np.maximum(ssq, 1e-300))


def _family_log_entries(fam: _FamilyBase, k: int, pts: np.ndarray):
    """Log-magnitudes and signs of Q, R, b entries plus |row V| in log space."""
    d = fam.dims.d
    r = 1.0 + np.sum(pts * pts, axis=-1)
    absx = np.abs(pts)
    logr = np.log(r)
    poly = isinstance(fam, PolynomialFamily)
    with np.errstate(divide="ignore"):
        if poly:
            growQ = fam.alpha[k] * logr[:, None, None]
            growb = fam.beta[k] * logr[:, None]
        else:
            growQ = r[:, None, None] ** fam.alpha[k]
            growb = r[:, None] ** fam.beta[k]
        logQ = np.log(np.abs(fam.zeta[k]))[None, :, :] + growQ
        signQ = np.broadcast_to(np.sign(fam.zeta[k]), logQ.shape)
        # R_ij = 2 zeta_ij alpha_ij x_i r^(alpha_ij - 1) (* e^{r^alpha_ij} for exp)
        core = np.log(2.0 * np.abs(fam.zeta[k]) * fam.alpha[k])[None, :, :] \
            + (fam.alpha[k] - 1.0) * logr[:, None, None] \
            + np.log(np.maximum(absx, 1e-300))[:, :, None]
        if not poly:
            core = core + r[:, None, None] ** fam.alpha[k]
        logR = core
        signR = np.sign(fam.zeta[k])[None, :, :] * np.sign(pts)[:, :, None]
        logb = np.log(fam.eta[k])[None, :] + np.log(np.maximum(absx, 1e-300)) + growb
        signb = -np.sign(pts)
    return logQ, signQ, logR, signR, logb, signb


def _family_log_V_row(fam: _FamilyBase, h: int, r: np.ndarray) -> np.ndarray:
    """log of the Euclidean norm of row h of V."""
    m = fam.dims.m
    rows = np.full((m, len(r)), -np.inf)
    for k in range(m):
        if fam.theta[h, k] != 0.0:
            rows[k] = fam.log_growth_V(h, k, r)
    return _log_norm_from_entries(rows, axis=0)


def _ledger_shapes(fam: _FamilyBase, w: SpaceTimeWeight):
    """Per-item t-shape callables for the analytic envelope of c_1..c_8."""
    sig, rho = w.sigma, w.rho
    if isinstance(fam, PolynomialFamily):
        abar = fam.abar()
        bbar = fam.bbar()
        gmax = float(fam.gamma.max())
        powers = [0.0,
                  -(sig / (2 * rho)) * (2 * abar - 1.0),
                  -(sig / rho) * (abar - 1.0),
                  -1.0,
                  -(sig / rho) * gmax,
                  -(sig / (2 * rho)) * (2 * bbar + 1.0),
                  -(sig / rho) * abar,
                  -(sig / (2 * rho)) * (2 * abar - 1.0)]
        return [lambda t, p=p: t ** p for p in powers]
    spike = lambda t: math.exp(0.25 * t ** (-sig))
    return [lambda t: 1.0,
            lambda t: t ** sig * spike(t),
            lambda t: t ** sig * spike(t),
            lambda t: t ** (-1.0),
            spike, spike, spike, spike]


def estimate_ledger(system, w: SpaceTimeWeight, nu1: SpaceTimeWeight, nu2: SpaceTimeWeight,
                    s: float, window: tuple[float, float],
                    plan: Optional[SamplePlan] = None,
                    adjoint: bool = False,
                    inner: Optional[tuple[float, float]] = None) -> ConstantsLedger:
    """Numeric suprema of the eight weight-compatibility ratios.

    w must decay relative to nu1 and nu2 (eps strictly increasing along
    w, nu1, nu2 and shared sigma, rho), otherwise the ratios blow up.  The
    supremum runs over plan.times(a0, b0) x plan.points; every evaluation
    is a log-space combination, so family coefficients far beyond float64
    range still produce finite ratios.  adjoint=True computes the starred
    variant: the potential item additionally absorbs |div b|, and the
    resulting constants land in c with M from the adjoint row sums (use
    ConstantsLedger.with_adjoint to merge).  inner overrides the inner
    window pair (a, b); the default sits at even quarters.
    """
    a0, b0 = window
    if not (0 < a0 < b0):
        raise DomainError(f"window must satisfy 0 < a0 < b0, got {window}")
    if not (w.sigma == nu1.sigma == nu2.sigma and w.rho == nu1.rho == nu2.rho
            and w.form == nu1.form == nu2.form):
        raise DomainError("w, nu1, nu2 must share form, sigma, and rho")
    if not (w.eps < nu1.eps < nu2.eps):
        raise DomainError(
            f"need eps(w) < eps(nu1) < eps(nu2), got {w.eps}, {nu1.eps}, {nu2.eps}")
    plan = plan or SamplePlan()
    spec = system.operator_spec() if isinstance(system, _FamilyBase) else system
    d, m = spec.dims.d, spec.dims.m
    is_family = isinstance(system, _FamilyBase)

    pts = plan.points(d)
    r = 1.0 + np.sum(pts * pts, axis=-1)
    ts = plan.times(a0, b0)
    sups = np.zeros(8)
    arg_edge = [False] * 8
    shape_cal = np.zeros(8)
    shapes = _ledger_shapes(system, w) if is_family else None
    edge = np.max(np.abs(pts), axis=-1) >= 0.95 * plan.radius

    for t in ts:
        Sw = w.log_value(t, pts, d)
        S1 = nu1.log_value(t, pts, d)
        S2 = nu2.log_value(t, pts, d)
        gw = w.grad_log(t, pts, d)
        hw = w.hess_log(t, pts, d)
        dtw = w.dt_log(t, pts, d)
        outer = gw[:, :, None] * gw[:, None, :]
        curv = outer + hw
        d1 = (Sw - S1) / s
        d2 = (Sw - S2) / s
        log_ratios = np.full((8, len(r)), -np.inf)
        log_ratios[0] = 2.0 * d1  # (w/nu1)^(2/s)

        log_gw = np.log(np.maximum(np.abs(gw), 1e-300))
        sign_gw = np.sign(gw)
        log_curv = np.log(np.maximum(np.abs(curv), 1e-300))
        sign_curv = np.sign(curv)

        for k in range(m):
            if is_family:
                logQ, signQ, logR, signR, logb, signb = _family_log_entries(system, k, pts)
                logVrow = _family_log_V_row(system, k, r)
            else:
                Q = np.asarray(spec.Q(k, pts), dtype=float)
                R = np.asarray(spec.R(k, pts), dtype=float)
                bv = np.asarray(spec.b(k, pts), dtype=float)
                V = np.asarray(spec.V(pts), dtype=float)
                logQ = np.log(np.maximum(np.abs(Q), 1e-300))
                signQ = np.sign(Q)
                logR = np.log(np.maximum(np.abs(R), 1e-300))
                signR = np.sign(R)
                logb = np.log(np.maximum(np.abs(bv), 1e-300))
                signb = np.sign(bv)
                logVrow = _log_norm_from_entries(
                    np.log(np.maximum(np.abs(V[:, k, :]), 1e-300)).T, axis=0)

            # item 2: |Q grad w| / (w^((s-1)/s) nu1^(1/s)) = |Q grad Sw| e^(d1)
            terms = logQ + log_gw[:, None, :]
            signs = signQ * sign_gw[:, None, :]
            comp_log, _ = _signed_log_sum(terms, signs, axis=2)   # (n, d)
            log_ratios[1] = np.maximum(log_ratios[1],
                                       _log_norm_from_entries(comp_log.T, axis=0) + d1)

            # item 3: |div(Q grad w)|/w * e^(2 d1)
            #       = |sum_ij q_ij (gSg + hess)_ij + sum_ij R_ij gS_j| e^(2 d1)
            t1 = (logQ + log_curv).reshape(len(r), -1)
            s1 = (signQ * sign_curv).reshape(len(r), -1)
            t2 = (logR + log_gw[:, None, :]).reshape(len(r), -1)
            s2 = (signR * sign_gw[:, None, :]).reshape(len(r), -1)
            div_log, _ = _signed_log_sum(np.concatenate([t1, t2], axis=1).T,
                                         np.concatenate([s1, s2], axis=1).T, axis=0)
            log_ratios[2] = np.maximum(log_ratios[2], div_log + 2.0 * d1)

            # item 4
            log_ratios[3] = np.maximum(
                log_ratios[3], np.log(np.maximum(np.abs(dtw), 1e-300)) + 2.0 * d1)

            # item 5: |V row| (+ |div b| in the starred variant) with nu2
            if adjoint:
                db = np.asarray(spec.divb(k, pts), dtype=float)
                pot = np.logaddexp(logVrow, np.log(np.maximum(np.abs(db), 1e-300)))
            else:
                pot = logVrow
            log_ratios[4] = np.maximum(log_ratios[4], pot + 2.0 * d2)

            # item 6: |b| with nu2
            log_ratios[5] = np.maximum(
                log_ratios[5], _log_norm_from_entries(logb.T, axis=0) + d2)

            # item 7: Frobenius |Q| with nu1
            log_ratios[6] = np.maximum(
                log_ratios[6],
                _log_norm_from_entries(logQ.reshape(len(r), -1).T, axis=0) + d1)

            # item 8: Frobenius |R| with nu1
            log_ratios[7] = np.maximum(
                log_ratios[7],
                _log_norm_from_entries(logR.reshape(len(r), -1).T, axis=0) + 2.0 * d1)

        with np.errstate(over="ignore"):
            ratios = np.exp(log_ratios)
        if not np.all(np.isfinite(ratios)):
            bad = np.argwhere(~np.isfinite(ratios))
            item, pt = int(bad[0][0]), int(bad[0][1])
            raise NonFiniteError(
                f"ledger item '{LEDGER_ITEMS[item]}' non-finite at t={t:.6g}, "
                f"x={pts[pt]!r}")
        t_sup = ratios.max(axis=1)
        t_arg = ratios.argmax(axis=1)
        for i in range(8):
            if t_sup[i] > sups[i]:
                sups[i] = t_sup[i]
                arg_edge[i] = bool(edge[t_arg[i]])
            if shapes is not None:
                shape_cal[i] = max(shape_cal[i], t_sup[i] / shapes[i](t))

    row = compute_row_sum_bound(system, adjoint=adjoint, radius=plan.radius)
    if inner is None:
        quarter = (b0 - a0) / 4.0
        a, b = a0 + quarter, b0 - quarter
    else:
        a, b = inner
    analytic = None
    if shapes is not None:
        tdense = np.linspace(a0, b0, 257)
        analytic = []
        for i in range(8):
            env = shape_cal[i] * max(shapes[i](tt) for tt in tdense)
            analytic.append(max(env, sups[i]))
        # the weight never exceeds nu1, so 1 is always a valid first envelope
        analytic[0] = max(1.0, sups[0]) if sups[0] <= 1.0 + 1e-12 else analytic[0]
        analytic = tuple(analytic)

    return ConstantsLedger(d=d, s=s, window=(a0, a, b, b0), c=tuple(sups), M=row.M,
                           analytic=analytic, boundary_flags=tuple(arg_edge))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def report_text(reports: Sequence[HypothesisReport], row: Optional[RowSumBound] = None) -> str:
    """Human-readable structured report, stable across runs."""
    buf = io.StringIO()
    buf.write("hypothesis report\n=================\n")
    for rep in reports:
        buf.write(f"\n[{rep.hypothesis_id}]\nstatus = {rep.status}\n")
        if rep.witness is not None:
            buf.write(f"witness = {rep.witness!r}\n")
        if rep.note:
            buf.write(f"note = {rep.note}\n")
        for key in sorted(rep.margins):
            buf.write(f"margin {key} = {rep.margins[key]!r}\n")
    if row is not None:
        buf.write(f"\n[row-sum-bound]\nM = {row.M!r}\nmethod = {row.method}\n"
                  f"certified_tail = {row.certified_tail}\n")
    return buf.getvalue()


def margins_csv(reports: Sequence[HypothesisReport]) -> str:
    lines = ["hypothesis,margin,value,status"]
    for rep in reports:
        if not rep.margins:
            lines.append(f"{rep.hypothesis_id},,,{rep.status}")
        for key in sorted(rep.margins):
            lines.append(f"{rep.hypothesis_id},{key},{rep.margins[key]!r},{rep.status}")
    return "\n".join(lines) + "\n"
