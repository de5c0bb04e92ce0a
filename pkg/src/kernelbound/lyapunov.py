"""Lyapunov functions for the coupled systems: synthesis and certificates.

Two shapes are used, both radial in r = 1 + |x|^2 and handled in log space
throughout to survive the growth:

* power form        phi(x) = exp(eps_hat * r^rho)
* integrated-exp    phi(x) = exp(eps_hat * int_0^r e^{tau^rho/2} dtau)

A static function phi certifies sup_k (A phi)_k / phi = lam < infinity,
which is what makes the whole-space semigroup well defined despite the
unbounded coefficients.  The time-dependent variant

    nu(t, x) = exp(eps_T * t^sigma * S(r)),    eps_T = eps_hat * T^(-sigma)

vanishes into the constant 1 at t = 0 and satisfies

    D_t nu + (A nu)_k <= g(t) nu,    g(t) = c0 + eps_T * delta * t^(sigma*(delta-1)/delta),

with g integrable at 0 because delta > sigma/(sigma+1).  Its running
integral G(t) = int_0^t g closes the loop: the Dirichlet semigroups obey
T(t) nu(t, .) <= e^{G(t)} nu(0, .), which is the integrability input of the
kernel bounds.

Synthesis picks (rho, eps_hat, sigma, delta) deterministically as midpoints
of the feasible intervals dictated by the growth exponents of the chosen
coefficient family (sigma, whose interval is one-sided, is set to its lower
endpoint plus one).  Certificates are validated numerically: grid suprema
of the generator ratio, stability under radius doubling, and calibration of
the constant part c0 of g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate

from .coefficients import (
    ExponentialFamily,
    OperatorSpec,
    PolynomialFamily,
    SystemDims,
    _FamilyBase,
)
from .errors import CertificateError, DomainError, SaturationError, SynthesisError

FORMS = ("power", "integrated-exp")
TARGETS = ("P", "P_adjoint")

_LOG_MAX = math.log(np.finfo(float).max)  # ~709.78


# ---------------------------------------------------------------------------
# radial shapes, in log space
# ---------------------------------------------------------------------------

def _radial_r(x: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[-1] != d:
        raise DomainError(f"points must have last axis {d}, got shape {x.shape}")
    return pts, 1.0 + np.sum(pts * pts, axis=-1), scalar


def integrated_exp(r, rho: float):
    """int_0^r e^{tau^rho/2} dtau, vectorized.

    Closed forms for rho = 1 and rho = 1/2 (the synthesis defaults), adaptive
    quadrature at relative tolerance 1e-10 otherwise.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("integrated-exp shape needs r >= 0")
    if rho == 1.0:
        return 2.0 * (np.exp(r / 2.0) - 1.0)
    if rho == 0.5:
        s = np.sqrt(r)
        return (4.0 * s - 8.0) * np.exp(s / 2.0) + 8.0
    flat = np.atleast_1d(r).ravel()
    out = np.empty_like(flat)
    for i, ri in enumerate(flat):
        val, _ = integrate.quad(lambda tau: math.exp(tau ** rho / 2.0), 0.0, ri,
                                epsrel=1e-10, limit=200)
        out[i] = val
    return out.reshape(np.shape(r)) if np.ndim(r) else float(out[0])


def _shape_S(form: str, r: np.ndarray, rho: float) -> np.ndarray:
    if form == "power":
        return r ** rho
    return integrated_exp(r, rho)


def _shape_dS(form: str, r: np.ndarray, rho: float) -> np.ndarray:
    if form == "power":
        return rho * r ** (rho - 1.0)
    return np.exp(r ** rho / 2.0)


def _shape_d2S(form: str, r: np.ndarray, rho: float) -> np.ndarray:
    if form == "power":
        return rho * (rho - 1.0) * r ** (rho - 2.0)
    return 0.5 * rho * r ** (rho - 1.0) * np.exp(r ** rho / 2.0)


@dataclass(frozen=True)
class SpaceTimeWeight:
    """Weight exp(eps * t^sigma * S(1+|x|^2)) exposed through log-derivatives.

    All downstream consumers (constants ledger, majorant, decay profiles)
    work with log w and its derivatives, never with w itself, so the class
    stays finite wherever the exponent is representable.
    """

    form: str
    eps: float
    sigma: float
    rho: float

    def __post_init__(self):
        if self.form not in FORMS:
            raise DomainError(f"unknown weight form {self.form!r}")
        if self.eps <= 0 or self.sigma <= 0 or self.rho <= 0:
            raise DomainError("weight needs eps, sigma, rho > 0")

    def log_value(self, t: float, x: np.ndarray, d: int) -> np.ndarray:
        _, r, scalar = _radial_r(x, d)
        out = self.eps * t ** self.sigma * _shape_S(self.form, r, self.rho)
        return out[0] if scalar else out

    def dt_log(self, t: float, x: np.ndarray, d: int) -> np.ndarray:
        if t <= 0:
            raise DomainError("time derivative needs t > 0")
        _, r, scalar = _radial_r(x, d)
        out = self.eps * self.sigma * t ** (self.sigma - 1.0) * _shape_S(self.form, r, self.rho)
        return out[0] if scalar else out

    def grad_log(self, t: float, x: np.ndarray, d: int) -> np.ndarray:
        pts, r, scalar = _radial_r(x, d)
        out = 2.0 * self.eps * t ** self.sigma * _shape_dS(self.form, r, self.rho)[:, None] * pts
        return out[0] if scalar else out

    def hess_log(self, t: float, x: np.ndarray, d: int) -> np.ndarray:
        pts, r, scalar = _radial_r(x, d)
        c = self.eps * t ** self.sigma
        dS = _shape_dS(self.form, r, self.rho)
        d2S = _shape_d2S(self.form, r, self.rho)
        eye = np.eye(d)
        out = 2.0 * c * dS[:, None, None] * eye + 4.0 * c * d2S[:, None, None] \
            * pts[:, :, None] * pts[:, None, :]
        return out[0] if scalar else out


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovSpec:
    """Static radial Lyapunov function exp(eps_hat * S(1+|x|^2))."""

    form: str
    rho: float
    eps_hat: float
    target: str = "P"
    lam: Optional[float] = None  # certified growth bound, set by verify_certificate

    def __post_init__(self):
        if self.form not in FORMS:
            raise DomainError(f"unknown form {self.form!r}")
        if self.target not in TARGETS:
            raise DomainError(f"unknown target {self.target!r}")
        if self.rho <= 0 or self.eps_hat <= 0:
            raise DomainError("need rho > 0 and eps_hat > 0")
        if self.lam is not None and self.lam < 0:
            raise DomainError("certified growth bound must be >= 0")

    def log_value(self, x: np.ndarray, d: int) -> np.ndarray:
        _, r, scalar = _radial_r(x, d)
        out = self.eps_hat * _shape_S(self.form, r, self.rho)
        return out[0] if scalar else out

    def value(self, x: np.ndarray, d: int) -> np.ndarray:
        lv = self.log_value(x, d)
        top = float(np.max(lv))
        if top > _LOG_MAX:
            raise SaturationError(top)
        return np.exp(lv)


@dataclass(frozen=True)
class TimeLyapunovSpec:
    """Time-dependent companion exp(eps_T t^sigma S(1+|x|^2)) on [0, T]."""

    base: LyapunovSpec
    T: float
    sigma: float
    delta: float
    c0: Optional[float] = None  # calibrated constant part of g, set by verify_certificate

    def __post_init__(self):
        if self.T <= 0 or self.sigma <= 0:
            raise DomainError("need T > 0 and sigma > 0")
        lo = self.sigma / (self.sigma + 1.0)
        if not (lo < self.delta < self.sigma):
            raise DomainError(
                f"delta must lie in (sigma/(sigma+1), sigma) = ({lo:.6g}, {self.sigma:.6g}), "
                f"got {self.delta:.6g}")

    @property
    def eps_T(self) -> float:
        return self.base.eps_hat * self.T ** (-self.sigma)

    def weight(self, eps: Optional[float] = None) -> SpaceTimeWeight:
        """Space-time weight with the same shape; eps defaults to eps_T."""
        return SpaceTimeWeight(form=self.base.form, eps=self.eps_T if eps is None else eps,
                               sigma=self.sigma, rho=self.base.rho)

    def log_value(self, t: float, x: np.ndarray, d: int) -> np.ndarray:
        if t < 0:
            raise DomainError("need t >= 0")
        if t == 0:
            _, r, scalar = _radial_r(x, d)
            return 0.0 if scalar else np.zeros_like(r)
        return self.weight().log_value(t, x, d)

    def value(self, t: float, x: np.ndarray, d: int) -> np.ndarray:
        lv = self.log_value(t, x, d)
        top = float(np.max(lv))
        if top > _LOG_MAX:
            raise SaturationError(top)
        return np.exp(lv)

    def g(self, t) -> np.ndarray:
        if self.c0 is None:
            raise CertificateError("g requested before the certificate calibrated c0")
        t = np.asarray(t, dtype=float)
        p = self.sigma * (self.delta - 1.0) / self.delta
        return self.c0 + self.eps_T * self.delta * t ** p

    def G(self, t) -> np.ndarray:
        if self.c0 is None:
            raise CertificateError("G requested before the certificate calibrated c0")
        return growth_integral(self.c0, self.eps_T, self.sigma, self.delta, t)


def growth_integral(c0: float, eps_T: float, sigma: float, delta: float, t) -> np.ndarray:
    """Closed form of int_0^t (c0 + eps_T delta s^(sigma(delta-1)/delta)) ds.

    The exponent p = sigma(delta-1)/delta satisfies p > -1 exactly when
    delta > sigma/(sigma+1), so the integral is finite; delta = sigma is
    accepted here to cover limit cases.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("growth integral needs t >= 0")
    p = sigma * (delta - 1.0) / delta
    if p <= -1.0:
        raise DomainError(f"exponent p = {p:.6g} <= -1, integral diverges")
    return c0 * t + eps_T * delta * t ** (p + 1.0) / (p + 1.0)


# ---------------------------------------------------------------------------
# deterministic synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthesisResult:
    static: LyapunovSpec
    timed: TimeLyapunovSpec
    notes: dict


def _midpoint(lo: float, hi: float) -> float:
    return 0.5 * (lo + hi)


def _poly_rho_upper(fam: PolynomialFamily, k: int) -> float:
    """Root of max{gamma_kk, beta_min + rho} + 1 - 2 rho - alpha_max in rho.

    The left side is piecewise linear and strictly decreasing, so the root
    is unique; which branch holds it depends on the sign of
    gamma_kk - (2 beta_min + 1 - alpha_max).
    """
    g = float(fam.gamma[k, k])
    bmin = fam.beta_min(k)
    amax = fam.alpha_max(k)
    if g <= 2.0 * bmin + 1.0 - amax:
        return bmin + 1.0 - amax
    return 0.5 * (g + 1.0 - amax)


def _poly_eps_cap(fam: PolynomialFamily, rho: float, equality: list[int]) -> float:
    """Admissible eps_hat ceiling from the leading-term balance.

    Only components where the growth constraint is tight contribute; at a
    tight index the quadratic gradient term of the candidate function ties
    with the damping terms, and the ceiling depends on whether the potential
    (first case), the drift (second), or both (third) absorb it.
    """
    cap = 1.0
    for k in equality:
        zmax = float(fam.zeta[k].diagonal().max())
        emin = float(fam.eta[k].min())
        th = float(fam.theta[k, k])
        diff = float(fam.gamma[k, k]) - (2.0 * fam.beta_min(k) + 1.0 - fam.alpha_max(k))
        if diff > 0:
            cap_k = math.sqrt(th / (4.0 * rho ** 2 * zmax))
        elif diff < 0:
            cap_k = emin / (2.0 * rho * zmax)
        else:
            cap_k = (emin + math.sqrt(emin ** 2 + 4.0 * zmax * th)) / (4.0 * rho * zmax)
        cap = min(cap, cap_k)
    return cap


def _poly_eps_cap_adjoint(fam: PolynomialFamily, rho: float, equality: list[int]) -> float:
    cap = 1.0
    for k in equality:
        zmax = float(fam.zeta[k].diagonal().max())
        emax = float(fam.eta[k].max())
        th = float(fam.theta[k, k])
        diff = float(fam.gamma[k, k]) - (2.0 * fam.beta_max(k) - fam.alpha_max(k) + 1.0)
        if diff > 0:
            cap_k = math.sqrt(th / (4.0 * rho ** 2 * zmax))
        elif diff < 0:
            cap_k = th / (2.0 * rho * emax)
        else:
            cap_k = (-emax + math.sqrt(emax ** 2 + 4.0 * zmax * th)) / (4.0 * rho * zmax)
        cap = min(cap, cap_k)
    return cap


def _delta_midpoint(sigma: float, cap_ratio: float) -> float:
    # feasible delta interval is (sigma/(sigma+1), sigma * cap_ratio)
    lo = sigma / (sigma + 1.0)
    hi = sigma * cap_ratio
    if hi <= lo:
        raise SynthesisError(
            f"empty delta interval ({lo:.6g}, {hi:.6g}); sigma too close to its lower bound")
    return _midpoint(lo, hi)


def synth_poly(fam: PolynomialFamily, T: float, target: str = "P") -> SynthesisResult:
    """Deterministic Lyapunov synthesis for the polynomial family.

    Forward target: rho must satisfy, for every equation k,
    max{gamma_kk, beta_min + rho} + 1 >= 2 rho + alpha_max (growth balance)
    and max{gamma_kk, beta_min + rho} > rho (damping wins); the interval is
    (0, U) and rho = U/2.  sigma sits above rho/(m* - rho) with
    m* = min_k max{gamma_kk, beta_min + rho}; delta inside
    (sigma/(sigma+1), sigma (m*-rho)/m*).  The adjoint target replaces the
    balance by gamma_kk >= max{alpha_max + 2 rho - 1, beta_max + rho} with
    gamma_kk > rho, and its sigma constraint uses min_k gamma_kk alone
    because the flipped drift no longer damps.
    """
    if target not in TARGETS:
        raise DomainError(f"unknown target {target!r}")
    if T <= 0:
        raise DomainError("need horizon T > 0")
    m = fam.dims.m
    notes: dict = {"family": "polynomial", "target": target, "T": T}

    if target == "P":
        uppers = []
        for k in range(m):
            u = _poly_rho_upper(fam, k)
            if fam.beta_min(k) == 0.0:
                u = min(u, float(fam.gamma[k, k]))
            uppers.append(u)
        U = min(uppers)
        if U <= 0:
            k_bad = int(np.argmin(uppers))
            raise SynthesisError(
                f"equation {k_bad}: no admissible rho, growth balance "
                f"max{{gamma_kk, beta_min}} + 1 > alpha_max fails "
                f"(upper endpoint {U:.6g} <= 0)")
        rho = U / 2.0
        equality = [k for k in range(m)
                    if abs(max(float(fam.gamma[k, k]), fam.beta_min(k) + rho)
                           + 1.0 - 2.0 * rho - fam.alpha_max(k)) < 1e-12]
        cap = _poly_eps_cap(fam, rho, equality)
        eps_hat = cap / 2.0
        mstar = min(max(float(fam.gamma[k, k]), fam.beta_min(k) + rho) for k in range(m))
        if mstar <= rho:
            raise SynthesisError(f"damping max{{gamma_kk, beta_min + rho}} = {mstar:.6g} "
                                 f"does not exceed rho = {rho:.6g}")
        sigma_min = rho / (mstar - rho)
        sigma = sigma_min + 1.0
        delta = _delta_midpoint(sigma, (mstar - rho) / mstar)
        notes.update(rho_interval=(0.0, U), eps_cap=cap, equality_indices=equality,
                     damping=mstar, sigma_min=sigma_min)
    else:
        uppers = []
        for k in range(m):
            g = float(fam.gamma[k, k])
            u = min(0.5 * (g + 1.0 - fam.alpha_max(k)), g - fam.beta_max(k), g)
            uppers.append(u)
        U = min(uppers)
        if U <= 0:
            k_bad = int(np.argmin(uppers))
            raise SynthesisError(
                f"equation {k_bad}: no admissible adjoint rho, need gamma_kk above "
                f"max{{alpha_max + 2 rho - 1, beta_max + rho, rho}} (upper endpoint {U:.6g} <= 0)")
        rho = U / 2.0
        equality = [k for k in range(m)
                    if abs(float(fam.gamma[k, k])
                           - max(fam.alpha_max(k) + 2.0 * rho - 1.0,
                                 fam.beta_max(k) + rho)) < 1e-12]
        cap = _poly_eps_cap_adjoint(fam, rho, equality)
        eps_hat = cap / 2.0
        gmin = fam.gamma_diag_min()
        if gmin <= rho:
            raise SynthesisError(f"adjoint damping gamma_min = {gmin:.6g} "
                                 f"does not exceed rho = {rho:.6g}")
        sigma_min = rho / (gmin - rho)
        sigma = sigma_min + 1.0
        delta = _delta_midpoint(sigma, (gmin - rho) / gmin)
        notes.update(rho_interval=(0.0, U), eps_cap=cap, equality_indices=equality,
                     damping=gmin, sigma_min=sigma_min)

    static = LyapunovSpec(form="power", rho=rho, eps_hat=eps_hat, target=target)
    timed = TimeLyapunovSpec(base=static, T=T, sigma=sigma, delta=delta)
    notes.update(rho=rho, eps_hat=eps_hat, sigma=sigma, delta=delta)
    return SynthesisResult(static=static, timed=timed, notes=notes)


def synth_exp(fam: ExponentialFamily, T: float, target: str = "P") -> SynthesisResult:
    """Deterministic Lyapunov synthesis for the exponential family.

    Forward target: the integrated-exp shape works for every
    rho < max{beta_min, gamma_kk} per equation (midpoint chosen), any
    eps_hat > 0 (0.5 chosen), and any sigma > 0; the artifact fixes
    sigma = 1 and the usual delta midpoint.  The adjoint target needs
    rho < min_k gamma_kk and sigma above rho/(gamma_min - rho).
    """
    if target not in TARGETS:
        raise DomainError(f"unknown target {target!r}")
    if T <= 0:
        raise DomainError("need horizon T > 0")
    m = fam.dims.m
    notes: dict = {"family": "exponential", "target": target, "T": T}

    if target == "P":
        caps = [max(fam.beta_min(k), float(fam.gamma[k, k])) for k in range(m)]
        U = min(caps)
        if U <= 0:
            k_bad = int(np.argmin(caps))
            raise SynthesisError(
                f"equation {k_bad}: no admissible rho, need max{{beta_min, gamma_kk}} > 0")
        rho = U / 2.0
        eps_hat = 0.5
        sigma = 1.0  # free choice for the forward target, fixed for determinism
        delta = _midpoint(sigma / (sigma + 1.0), sigma)
        notes.update(rho_interval=(0.0, U), sigma_choice="default 1 (forward target leaves sigma free)")
    else:
        gmin = fam.gamma_diag_min()
        if gmin <= 0:
            raise SynthesisError("adjoint synthesis needs gamma_kk > 0 for every k")
        rho = gmin / 2.0
        eps_hat = 0.5
        sigma_min = rho / (gmin - rho)
        sigma = sigma_min + 1.0
        delta = _midpoint(sigma / (sigma + 1.0), sigma)
        notes.update(rho_interval=(0.0, gmin), sigma_min=sigma_min)

    static = LyapunovSpec(form="integrated-exp", rho=rho, eps_hat=eps_hat, target=target)
    timed = TimeLyapunovSpec(base=static, T=T, sigma=sigma, delta=delta)
    notes.update(rho=rho, eps_hat=eps_hat, sigma=sigma, delta=delta)
    return SynthesisResult(static=static, timed=timed, notes=notes)


# ---------------------------------------------------------------------------
# numeric certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertificateReport:
    certified: LyapunovSpec | TimeLyapunovSpec
    sup_coarse: float
    sup_fine: float
    radius: float
    passed: bool
    message: str


def _grid_points(d: int, radius: float, per_axis: int) -> np.ndarray:
    axes = [np.linspace(-radius, radius, per_axis) for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([mm.ravel() for mm in mesh], axis=-1)


def _vp_row_col_sums(system, pts: np.ndarray, adjoint: bool) -> np.ndarray:
    """Row (or column, for the adjoint) sums of the cooperative potential.

    Family systems get an overflow-safe evaluation: the diagonal growth is
    factored out in log space so huge entries degrade to +/- inf instead of
    NaN.  Returns shape (m, n).
    """
    if isinstance(system, _FamilyBase):
        m = system.dims.m
        r = 1.0 + np.sum(pts * pts, axis=-1)
        out = np.empty((m, len(r)))
        with np.errstate(over="ignore"):
            for k in range(m):
                # factor out the diagonal growth: sum = e^lead * acc with
                # acc = 1 - sum_off e^(off growth - lead); off-diagonal
                # cooperative entries always subtract
                lead = system.log_growth_V(k, k, r)
                acc = np.ones_like(r)
                for l in range(m):
                    if l == k:
                        continue
                    h_idx, l_idx = (l, k) if adjoint else (k, l)
                    if system.theta[h_idx, l_idx] == 0.0:
                        continue
                    rel = system.log_growth_V(h_idx, l_idx, r) - lead
                    acc -= np.exp(np.minimum(rel, _LOG_MAX))
                sign = np.sign(acc)
                mag = lead + np.log(np.maximum(np.abs(acc), 1e-300))
                vals = sign * np.exp(np.minimum(mag, _LOG_MAX))
                vals[mag > _LOG_MAX] = np.inf * sign[mag > _LOG_MAX]
                out[k] = vals
        return out
    spec: OperatorSpec = system
    V = np.asarray(spec.V(pts), dtype=float)
    from .coefficients import eval_VP
    VP = eval_VP(V)
    sums = VP.sum(axis=-2) if adjoint else VP.sum(axis=-1)  # (n, m)
    return sums.T


def _operator_spec_of(system) -> OperatorSpec:
    return system.operator_spec() if isinstance(system, _FamilyBase) else system


def _generator_ratio(system, lyap: LyapunovSpec, timed: Optional[TimeLyapunovSpec],
                     t: Optional[float], pts: np.ndarray) -> np.ndarray:
    """(D_t +) generator applied to the (time-)Lyapunov function, over its value.

    Works entirely with S = log of the function: the ratio for component k is
    tr(Q_k (grad S grad S^T + D^2 S)) + <g_k + s b_k, grad S> + extras, with
    s = +1 for the forward targets and -1 plus the -div b - column-sum terms
    for the adjoint.  Shape (m, n).
    """
    spec = _operator_spec_of(system)
    d, m = spec.dims.d, spec.dims.m
    adjoint = lyap.target == "P_adjoint"
    if timed is None:
        w = SpaceTimeWeight(form=lyap.form, eps=lyap.eps_hat, sigma=1.0, rho=lyap.rho)
        tt = 1.0  # static function: t^sigma frozen at 1
    else:
        w = timed.weight()
        tt = float(t)
    grad = w.grad_log(tt, pts, d)          # (n, d)
    hess = w.hess_log(tt, pts, d)          # (n, d, d)
    outer = grad[:, :, None] * grad[:, None, :]
    vp_sums = _vp_row_col_sums(system, pts, adjoint)

    out = np.empty((m, pts.shape[0]))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(m):
            Q = np.asarray(spec.Q(k, pts), dtype=float)
            R = np.asarray(spec.R(k, pts), dtype=float)
            gvec = R.sum(axis=-2)  # column sums: g_j = sum_i D_i q_ij
            bvec = np.asarray(spec.b(k, pts), dtype=float)
            second = np.einsum("nij,nij->n", Q, outer + hess)
            first = np.einsum("nj,nj->n", gvec + (-bvec if adjoint else bvec), grad)
            val = second + first - vp_sums[k]
            if adjoint:
                val = val - np.asarray(spec.divb(k, pts), dtype=float)
            if timed is not None:
                val = val + w.dt_log(tt, pts, d)
            out[k] = val
    # -inf is fine (deep damping); +inf or NaN is not
    if np.any(np.isnan(out)) or np.any(np.isposinf(out)):
        raise CertificateError("generator ratio produced NaN/+inf on the certificate grid")
    return out


_CERT_POINTS = {1: 513, 2: 65}


def verify_certificate(system, lyap: LyapunovSpec | TimeLyapunovSpec,
                       radius: float = 20.0, tolerance: float = 0.01,
                       per_axis: Optional[int] = None) -> CertificateReport:
    """Validate a Lyapunov certificate on a grid and its radius-doubled version.

    Static specs: certifies lam = max(0, sup_k,x (A psi)_k / psi).  Timed
    specs: calibrates c0 = max(0, sup of the g-free residual) over a
    geometric time ladder.  Fails with a certificate error when the sup
    grows by 10% or more under radius doubling (the function is then no
    Lyapunov function for this operator); passes when the two suprema agree
    within tolerance * max(1, |sup|).
    """
    spec = _operator_spec_of(system)
    d = spec.dims.d
    n = per_axis or _CERT_POINTS.get(d, 33)
    timed = isinstance(lyap, TimeLyapunovSpec)

    def grid_sup(R: float) -> float:
        pts = _grid_points(d, R, n)
        if timed:
            tgrid = [lyap.T * 2.0 ** (-j) for j in range(0, 11)]
            p = lyap.sigma * (lyap.delta - 1.0) / lyap.delta
            best = -np.inf
            for t in tgrid:
                ratio = _generator_ratio(system, lyap.base, lyap, t, pts)
                resid = ratio - lyap.eps_T * lyap.delta * t ** p
                best = max(best, float(np.max(resid)))
            return best
        ratio = _generator_ratio(system, lyap, None, None, pts)
        return float(np.max(ratio))

    sup_c = grid_sup(radius)
    sup_f = grid_sup(2.0 * radius)
    scale = max(1.0, abs(sup_c))
    if sup_f >= sup_c + 0.10 * scale and sup_f > sup_c:
        raise CertificateError(
            f"unbounded growth: certificate sup rose from {sup_c:.6g} (R={radius:g}) "
            f"to {sup_f:.6g} (R={2 * radius:g})")
    passed = abs(sup_f - sup_c) <= tolerance * scale
    msg = (f"sup {sup_c:.6g} -> {sup_f:.6g} under radius doubling, "
           f"{'stable' if passed else 'not stable'} at tolerance {tolerance:g}")
    # the doubled grid halves core resolution, so certify against both sups
    if timed:
        certified = replace(lyap, c0=max(0.0, sup_c, sup_f))
    else:
        certified = replace(lyap, lam=max(0.0, sup_c, sup_f))
    return CertificateReport(certified=certified, sup_coarse=sup_c, sup_fine=sup_f,
                             radius=radius, passed=passed, message=msg)
