"""Kernel-bound majorant, calibrated constants, and decay evaluators.

The weighted kernel estimate has the shape

    w(t, y) * sum_k |p_hk(t, x, y)| <= C * H(x)       for t in (a, b),

where H collects everything the proof machinery extracts from the eight
weight-compatibility constants c_1..c_8, the inner/outer time window
(a0, a, b, b0), and the time integrals of the two Lyapunov growth rates:

    H(x) = [c1^(s/2) + c1^(s/2)/((a-a0) ^ (b0-b))^(s/2) + c2^s + c3^(s/2)
            + c4^(s/2) + c1^(s/4) c2^(s/2) + c1^(s/4) c7^(s/2) + c7^s
            + c8^(s/2)] * nu1(0, x) * int_a0^b0 e^{G1}
         + [c1^(s/4) c6^(s/2) + c2^(s/2) c6^(s/2) + c5^(s/2) + c6^s]
            * nu2(0, x) * int_a0^b0 e^{G2},

with ^ denoting min.  Specializing the weights to the concrete coefficient
families turns C * H into explicit decay profiles: a power of t times a
stretched-exponential factor in the second spatial argument (and, for the
two-sided form, in both arguments).

The reduction from the iterated kernel estimates to H passes through one
piece of scalar algebra, exposed as solve_X0: any X >= 0 satisfying

    X^s <= alpha X^(s/2) + beta X^(s-1) + gamma X^(s-2)

also satisfies X <= X0 = (4/3) beta + sqrt((4/3) gamma) + ((4/3) alpha^2)^(1/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .coefficients import PolynomialFamily
from .errors import DomainError, NonFiniteError
from .lyapunov import integrated_exp

LEDGER_ITEMS = (
    "weight-vs-nu1",
    "diffusion-gradient",
    "diffusion-divergence",
    "time-derivative",
    "potential-row",
    "drift",
    "diffusion-size",
    "diffusion-derivative",
)


@dataclass(frozen=True)
class ConstantsLedger:
    """Numeric suprema of the eight weight-compatibility ratios.

    window = (a0, a, b, b0) is the nested time window: constants are
    suprema over [a0, b0] x R^d, the bound itself lives on (a, b).  The
    optional analytic tuple is the family closed-form envelope (always >=
    the numeric values); boundary_flags marks items whose numeric argmax sat
    on the sample-box boundary, i.e. whose supremum may not be converged in
    the radius.  Starred fields repeat the story for the adjoint problem.
    """

    d: int
    s: float
    window: tuple[float, float, float, float]
    c: tuple[float, ...]
    M: float
    c_star: Optional[tuple[float, ...]] = None
    M_star: Optional[float] = None
    analytic: Optional[tuple[float, ...]] = None
    analytic_star: Optional[tuple[float, ...]] = None
    boundary_flags: Optional[tuple[bool, ...]] = None

    def __post_init__(self):
        if self.s <= self.d + 2:
            raise DomainError(f"need s > d + 2 = {self.d + 2}, got s = {self.s}")
        a0, a, b, b0 = self.window
        if not (0 < a0 < a < b < b0):
            raise DomainError(f"window must satisfy 0 < a0 < a < b < b0, got {self.window}")
        for name, vals in (("c", self.c), ("c_star", self.c_star)):
            if vals is None:
                continue
            if len(vals) != 8:
                raise DomainError(f"{name} must have 8 entries, got {len(vals)}")
            arr = np.asarray(vals, dtype=float)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise NonFiniteError(f"{name} entries must be finite and >= 0: {vals}")
        if not math.isfinite(self.M):
            raise NonFiniteError(f"row-sum bound M must be finite, got {self.M}")

    def with_adjoint(self, star: "ConstantsLedger") -> "ConstantsLedger":
        """Merge a forward ledger with the ledger of the adjoint problem."""
        if star.window != self.window or star.s != self.s:
            raise DomainError("adjoint ledger must share the window and s")
        return ConstantsLedger(
            d=self.d, s=self.s, window=self.window, c=self.c, M=self.M,
            c_star=star.c, M_star=star.M, analytic=self.analytic,
            analytic_star=star.analytic, boundary_flags=self.boundary_flags)


def eval_H(ledger: ConstantsLedger,
           nu1_at_zero: Callable[[np.ndarray], np.ndarray],
           nu2_at_zero: Callable[[np.ndarray], np.ndarray],
           G1: Callable[[float], float],
           G2: Callable[[float], float],
           x: np.ndarray,
           starred: bool = False) -> np.ndarray:
    """Majorant H(x) built from a ledger, initial weights, and growth integrals.

    nu1_at_zero / nu2_at_zero take points of shape (n, d) or (d,); G1, G2
    are the cumulated growth rates of the two comparison Lyapunov functions.
    starred=True evaluates the adjoint-side majorant from c_star.
    """
    c = ledger.c_star if starred else ledger.c
    if c is None:
        raise DomainError("ledger has no starred constants")
    c1, c2, c3, c4, c5, c6, c7, c8 = c
    s = ledger.s
    a0, a, b, b0 = ledger.window
    gap = min(a - a0, b0 - b)
    try:
        bracket1 = (c1 ** (s / 2) + c1 ** (s / 2) / gap ** (s / 2) + c2 ** s
                    + c3 ** (s / 2) + c4 ** (s / 2) + c1 ** (s / 4) * c2 ** (s / 2)
                    + c1 ** (s / 4) * c7 ** (s / 2) + c7 ** s + c8 ** (s / 2))
        bracket2 = (c1 ** (s / 4) * c6 ** (s / 2) + c2 ** (s / 2) * c6 ** (s / 2)
                    + c5 ** (s / 2) + c6 ** s)
    except OverflowError as exc:
        raise NonFiniteError(f"majorant brackets overflow: {exc}") from None
    if not (math.isfinite(bracket1) and math.isfinite(bracket2)):
        raise NonFiniteError(f"majorant brackets overflow: {bracket1}, {bracket2}")
    I1, _ = integrate.quad(lambda t: math.exp(float(G1(t))), a0, b0, epsrel=1e-9, limit=200)
    I2, _ = integrate.quad(lambda t: math.exp(float(G2(t))), a0, b0, epsrel=1e-9, limit=200)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    out = bracket1 * np.asarray(nu1_at_zero(pts), dtype=float) * I1 \
        + bracket2 * np.asarray(nu2_at_zero(pts), dtype=float) * I2
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("majorant evaluated non-finite")
    return float(out[0]) if scalar else out


def solve_X0(alpha: float, beta: float, gamma: float, s: float) -> float:
    """Closed-form ceiling for X^s <= alpha X^(s/2) + beta X^(s-1) + gamma X^(s-2).

    Young's inequality absorbs the middle power: alpha X^(s/2) <= X^s/4 +
    alpha^2, after which the ceiling (4/3)beta + sqrt((4/3)gamma) +
    ((4/3)alpha^2)^(1/s) dominates every nonnegative solution.
    """
    if s <= 2:
        raise DomainError(f"need s > 2, got {s}")
    if alpha < 0 or beta < 0 or gamma < 0:
        raise DomainError("coefficients must be nonnegative")
    return (4.0 / 3.0) * beta + math.sqrt((4.0 / 3.0) * gamma) \
        + ((4.0 / 3.0) * alpha ** 2) ** (1.0 / s)


def eval_lambda_poly(family: PolynomialFamily, sigma: float, rho: float) -> float:
    """Exponent controlling the t-power of the polynomial-family bound.

    lambda = max{1/2, (sigma/rho) abar, (sigma/2rho) gamma_max,
    (sigma/2rho)(2 bbar + 1)}, with the extra competitor
    (sigma/2rho)(abar + bbar) when abar > 1/2; the final kernel bound decays
    (or blows up) like t^(1 - lambda s).
    """
    abar = family.abar()
    bbar = family.bbar()
    gmax = float(family.gamma.max())
    lam = max(0.5, (sigma / rho) * abar, (sigma / (2 * rho)) * gmax,
              (sigma / (2 * rho)) * (2 * bbar + 1.0))
    if abar > 0.5:
        lam = max(lam, (sigma / (2 * rho)) * (abar + bbar))
    return lam


def default_c_hat(d: int) -> float:
    """Default singular-prefactor constant for the exponential-family bound."""
    return (d + 3) / 4.0


@dataclass(frozen=True)
class BoundCertificate:
    """Everything needed to evaluate the certified decay profile.

    kind selects the family shape.  (eps, sigma, rho) parametrize the decay
    in the second spatial argument; the starred triple, when present,
    parametrizes the two-sided decay in the first argument.  lam (and
    lam_star) fix the t-power; C_cal is the measured calibration constant
    (None until a verification run sets it).
    """

    kind: str  # "polynomial" | "exponential"
    d: int
    s: float
    ledger: ConstantsLedger
    eps: float
    sigma: float
    rho: float
    lam: Optional[float] = None          # polynomial kind only
    c_hat: Optional[float] = None        # exponential kind only
    eps_star: Optional[float] = None
    sigma_star: Optional[float] = None
    rho_star: Optional[float] = None
    lam_star: Optional[float] = None
    C_cal: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential"):
            raise DomainError(f"unknown certificate kind {self.kind!r}")
        if self.eps <= 0 or self.sigma <= 0 or self.rho <= 0:
            raise DomainError("decay parameters eps, sigma, rho must be positive")
        if self.kind == "polynomial" and self.lam is None:
            raise DomainError("polynomial certificate needs lam")
        if self.kind == "exponential":
            ch = self.c_hat if self.c_hat is not None else default_c_hat(self.d)
            if ch <= (self.d + 2) / 4.0:
                raise DomainError(
                    f"c_hat must exceed (d+2)/4 = {(self.d + 2) / 4.0}, got {ch}")
            object.__setattr__(self, "c_hat", ch)

    @property
    def two_sided(self) -> bool:
        return self.eps_star is not None

    def log_decay(self, t: float, y: np.ndarray, x: Optional[np.ndarray] = None) -> np.ndarray:
        """log of the decay profile (excluding C_cal) at time t.

        One-sided: evaluated at y, uniform in the unseen first argument.
        Passing x switches to the two-sided profile; requires the starred
        parameters.
        """
        if t <= 0:
            raise DomainError(f"decay profile needs t > 0, got {t}")
        y = np.asarray(y, dtype=float)
        ry = 1.0 + np.sum(np.atleast_2d(y) ** 2, axis=-1)
        two = x is not None
        if two and not self.two_sided:
            raise DomainError("two-sided profile requested but no starred parameters present")
        if self.kind == "polynomial":
            if two:
                rx = 1.0 + np.sum(np.atleast_2d(x) ** 2, axis=-1)
                power = 1.0 - (self.lam + self.lam_star) * self.s / 2.0
                out = power * math.log(t) \
                    - 0.5 * self.eps * t ** self.sigma * ry ** self.rho \
                    - 0.5 * self.eps_star * t ** self.sigma_star * rx ** self.rho_star
            else:
                out = (1.0 - self.lam * self.s) * math.log(t) \
                    - self.eps * t ** self.sigma * ry ** self.rho
        else:
            head = math.log(t) + self.c_hat * t ** (-self.sigma)
            if two:
                rx = 1.0 + np.sum(np.atleast_2d(x) ** 2, axis=-1)
                out = head - 0.5 * self.eps * t ** self.sigma * (
                    integrated_exp(ry, self.rho) + integrated_exp(rx, self.rho))
            else:
                out = head - self.eps * t ** self.sigma * integrated_exp(ry, self.rho)
        return out[0] if y.ndim == 1 else out

    def eval(self, t: float, y: np.ndarray, x: Optional[np.ndarray] = None) -> np.ndarray:
        """Certified bound value C_cal * decay(t, x, y); may overflow to inf."""
        if self.C_cal is None:
            raise DomainError("certificate not calibrated: C_cal unset")
        with np.errstate(over="ignore"):
            return np.exp(np.log(self.C_cal) + self.log_decay(t, y, x))
