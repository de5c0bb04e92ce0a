"""Coefficient fields of weakly coupled second-order parabolic systems.

The systems treated here have the form

    D_t f_h = div(Q^h grad f_h) + <b^h, grad f_h> - (V f)_h,   h = 1..m,

on R^d: each scalar equation carries its own diffusion matrix Q^h and drift
b^h (both allowed to be unbounded in x), and the coupling between equations
happens only through the zero-order matrix potential V.  Two derived objects
drive everything downstream:

* the cooperative modification V^P, which keeps the diagonal of V and flips
  every off-diagonal entry to -|v_hk|.  The semigroup generated with V^P has
  a nonnegative kernel that dominates the original kernel entrywise, so all
  kernel estimates are proved for the P-variant and inherited by the plain
  one;
* the formal adjoint of the P-variant, whose kernel evaluates the P-kernel
  with swapped spatial arguments and transposed component indices.

Besides generic coefficient containers the module ships the two concrete
families used throughout the artifact, with polynomially and exponentially
growing coefficients:

    q^k_ij = zeta^k_ij (1+|x|^2)^alpha^k_ij      q^k_ij = zeta^k_ij e^{(1+|x|^2)^alpha^k_ij}
    b^k_i  = -eta^k_i x_i (1+|x|^2)^beta^k_i     b^k_i  = -eta^k_i x_i e^{(1+|x|^2)^beta^k_i}
    v_hk   = theta_hk (1+|x|^2)^gamma_hk         v_hk   = theta_hk e^{(1+|x|^2)^gamma_hk}

All family evaluators are vectorized over trailing point batches: x may be a
single point of shape (d,) or a batch of shape (n, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    HypothesisViolationError,
    NonFiniteError,
)

VARIANTS = ("plain", "P", "P_adjoint")


@dataclass(frozen=True)
class SystemDims:
    """Space dimension d and number of coupled equations m."""

    d: int
    m: int

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise DimensionMismatchError(f"need d >= 1 and m >= 1, got d={self.d}, m={self.m}")


def eval_VP(V: np.ndarray) -> np.ndarray:
    """Cooperative modification of a potential matrix.

    Keeps the diagonal and replaces each off-diagonal entry by minus its
    absolute value.  Idempotent, and equal to V whenever the off-diagonal
    part of V is already nonpositive.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim < 2 or V.shape[-1] != V.shape[-2]:
        raise DimensionMismatchError(f"potential must be square, got shape {V.shape}")
    out = -np.abs(V)
    diag = np.arange(V.shape[-1])
    out[..., diag, diag] = V[..., diag, diag]
    return out


@dataclass(frozen=True)
class FieldJet:
    """Values, gradients and Hessians of an m-vector field at one point."""

    values: np.ndarray     # (m,)
    gradients: np.ndarray  # (m, d)
    hessians: np.ndarray   # (m, d, d)

    @classmethod
    def from_callables(cls, funcs: Sequence[Callable[[np.ndarray], float]],
                       x: np.ndarray, step: float | None = None) -> "FieldJet":
        """Build a jet by central finite differences of scalar callables.

        Used by tests as an independent route to operator values; step
        defaults to cbrt(eps) * (1 + |x|).
        """
        x = np.asarray(x, dtype=float)
        d = x.size
        h = step if step is not None else (np.finfo(float).eps ** (1 / 3)) * (1.0 + float(np.linalg.norm(x)))
        m = len(funcs)
        vals = np.array([f(x) for f in funcs], dtype=float)
        grads = np.zeros((m, d))
        hesses = np.zeros((m, d, d))
        for a, f in enumerate(funcs):
            for i in range(d):
                ei = np.zeros(d)
                ei[i] = h
                fp, fm = f(x + ei), f(x - ei)
                grads[a, i] = (fp - fm) / (2 * h)
                hesses[a, i, i] = (fp - 2 * vals[a] + fm) / h ** 2
            for i in range(d):
                for j in range(i + 1, d):
                    ei = np.zeros(d); ei[i] = h
                    ej = np.zeros(d); ej[j] = h
                    val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h ** 2)
                    hesses[a, i, j] = hesses[a, j, i] = val
        return cls(vals, grads, hesses)


@dataclass(frozen=True)
class OperatorSpec:
    """Bundle of coefficient callables defining one coupled system.

    Each callable is vectorized over a leading batch of points: for x of
    shape (n, d), Q(h, x) returns (n, d, d), b(h, x) returns (n, d), V(x)
    returns (n, m, m), R(h, x) returns the matrix of diffusion derivatives
    (R^h)_ij = D_i q^h_ij with shape (n, d, d), and divb(h, x) returns (n,).
    Scalar points of shape (d,) are accepted too.
    """

    dims: SystemDims
    Q: Callable[[int, np.ndarray], np.ndarray]
    b: Callable[[int, np.ndarray], np.ndarray]
    V: Callable[[np.ndarray], np.ndarray]
    R: Callable[[int, np.ndarray], np.ndarray]
    divb: Callable[[int, np.ndarray], np.ndarray]

    def VP(self, x: np.ndarray) -> np.ndarray:
        return eval_VP(self.V(x))


def _fd_jacobian_of_Q(Q: Callable[[int, np.ndarray], np.ndarray], d: int):
    """Finite-difference fallback for R^h when no analytic derivative is given."""

    def R(h: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        out = np.zeros((n, d, d))
        for p in range(n):
            xp = x[p]
            step = (np.finfo(float).eps ** (1 / 3)) * (1.0 + float(np.linalg.norm(xp)))
            for i in range(d):
                ei = np.zeros(d)
                ei[i] = step
                dQ = (np.asarray(Q(h, xp + ei), dtype=float) - np.asarray(Q(h, xp - ei), dtype=float)) / (2 * step)
                out[p, i, :] = dQ[i, :] if dQ.ndim == 2 else dQ.reshape(d, d)[i, :]
        return out

    return R


def _fd_div_of_b(b: Callable[[int, np.ndarray], np.ndarray], d: int):
    def divb(h: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for p in range(x.shape[0]):
            xp = x[p]
            step = (np.finfo(float).eps ** (1 / 3)) * (1.0 + float(np.linalg.norm(xp)))
            acc = 0.0
            for i in range(d):
                ei = np.zeros(d)
                ei[i] = step
                acc += (np.asarray(b(h, xp + ei), dtype=float)[i] - np.asarray(b(h, xp - ei), dtype=float)[i]) / (2 * step)
            out[p] = acc
        return out

    return divb


def operator_spec_from_callables(dims: SystemDims, Q, b, V, R=None, divb=None) -> OperatorSpec:
    """Wrap plain callables into an OperatorSpec.

    Missing derivative data (R, divb) is filled with central finite
    differences; fine for tests and generic checks, families provide
    analytic versions.
    """
    return OperatorSpec(
        dims=dims,
        Q=Q,
        b=b,
        V=V,
        R=R if R is not None else _fd_jacobian_of_Q(Q, dims.d),
        divb=divb if divb is not None else _fd_div_of_b(b, dims.d),
    )


def eval_operator(spec: OperatorSpec, variant: str, jet: FieldJet, h: int, x: np.ndarray) -> float:
    """Pointwise action of the system operator on a smooth vector field.

    variant selects between the original potential ("plain"), its
    cooperative modification ("P"), and the formal adjoint of the latter
    ("P_adjoint"), which flips the drift sign, subtracts div(b^h) u_h, and
    transposes the potential.  The divergence-form diffusion is expanded as
    tr(Q D^2 u_h) + <g, grad u_h> with g_j = sum_i D_i q_ij.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    m, d = spec.dims.m, spec.dims.d
    if not (0 <= h < m):
        raise DimensionMismatchError(f"component index {h} outside 0..{m - 1}")
    x = np.asarray(x, dtype=float)
    if jet.values.shape != (m,) or jet.gradients.shape != (m, d) or jet.hessians.shape != (m, d, d):
        raise DimensionMismatchError(
            f"jet shapes {jet.values.shape}/{jet.gradients.shape}/{jet.hessians.shape} "
            f"do not match dims (m={m}, d={d})")

    Q = np.asarray(spec.Q(h, x), dtype=float).reshape(d, d)
    R = np.asarray(spec.R(h, x), dtype=float).reshape(d, d)
    g = R.sum(axis=0)  # g_j = sum_i D_i q_ij
    grad = jet.gradients[h]
    diffusion = float(np.tensordot(Q, jet.hessians[h]) + g @ grad)

    bvec = np.asarray(spec.b(h, x), dtype=float).reshape(d)
    Vmat = np.asarray(spec.V(x), dtype=float).reshape(m, m)
    if variant == "plain":
        value = diffusion + bvec @ grad - Vmat[h] @ jet.values
    elif variant == "P":
        value = diffusion + bvec @ grad - eval_VP(Vmat)[h] @ jet.values
    else:
        db = float(np.asarray(spec.divb(h, x), dtype=float).reshape(()))
        value = diffusion - bvec @ grad - db * jet.values[h] - eval_VP(Vmat)[:, h] @ jet.values
    value = float(value)
    if not np.isfinite(value):
        raise NonFiniteError(f"operator value not finite at x={x!r}, component {h}")
    return value


# ---------------------------------------------------------------------------
# coupling reachability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingSupport:
    """Which kernel entries of column k can be nontrivial.

    levels[0] holds the components fed directly by component k through the
    potential, levels[i] the fresh components reachable in one more step,
    and reachable is {k} plus the union of all levels.  An entry p_hk of the
    cooperative kernel is not identically zero exactly when h is reachable.
    """

    k: int
    levels: tuple[frozenset[int], ...]
    reachable: frozenset[int]


def coupling_support(m: int, k: int, nonzero: Callable[[int, int], bool]) -> CouplingSupport:
    """Breadth-first reachability of component k through the coupling graph.

    nonzero(h, l) must say whether the potential entry v_hl is not
    identically zero for h != l; diagonal queries are never made.  Level 0
    is {h != k : v_hk nontrivial}; level i+1 collects fresh h with v_hl
    nontrivial for some l in level i.
    """
    if not (0 <= k < m):
        raise DimensionMismatchError(f"component index {k} outside 0..{m - 1}")
    seen = {k}
    levels: list[frozenset[int]] = []
    frontier = frozenset(h for h in range(m) if h != k and nonzero(h, k))
    while frontier:
        levels.append(frontier)
        seen |= frontier
        nxt = set()
        for l in frontier:
            for h in range(m):
                if h not in seen and h != l and nonzero(h, l):
                    nxt.add(h)
        frontier = frozenset(nxt)
    return CouplingSupport(k=k, levels=tuple(levels), reachable=frozenset(seen))


# ---------------------------------------------------------------------------
# concrete coefficient families
# ---------------------------------------------------------------------------

def _as_array(name: str, value, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise DimensionMismatchError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


def _radial(x: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Return (points (n,d), r = 1+|x|^2 (n,), scalar_input)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[-1] != d:
        raise DimensionMismatchError(f"points must have last axis {d}, got shape {x.shape}")
    r = 1.0 + np.sum(pts * pts, axis=-1)
    return pts, r, scalar


class _FamilyBase:
    """Shared validation and derived quantities of both coefficient families."""

    def __init__(self, dims: SystemDims, zeta, alpha, eta, beta, theta, gamma):
        d, m = dims.d, dims.m
        self.dims = dims
        self.zeta = _as_array("zeta", zeta, (m, d, d))
        self.alpha = _as_array("alpha", alpha, (m, d, d))
        self.eta = _as_array("eta", eta, (m, d))
        self.beta = _as_array("beta", beta, (m, d))
        self.theta = _as_array("theta", theta, (m, m))
        self.gamma = _as_array("gamma", gamma, (m, m))
        if not np.allclose(self.alpha, np.swapaxes(self.alpha, 1, 2)):
            raise DimensionMismatchError("alpha exponents must be symmetric in i, j")
        if not np.allclose(self.zeta, np.swapaxes(self.zeta, 1, 2)):
            raise DimensionMismatchError("zeta coefficients must be symmetric in i, j")
        if np.any(self.alpha < 0) or np.any(self.beta < 0) or np.any(self.gamma < 0):
            raise HypothesisViolationError("exponents alpha, beta, gamma must be nonnegative")
        if np.any(self.eta <= 0):
            raise HypothesisViolationError("drift coefficients eta must be positive")
        if np.any(np.diag(self.theta) <= 0):
            raise HypothesisViolationError("diagonal potential coefficients theta_kk must be positive")

    # -- structural matrices ------------------------------------------------

    def Z(self, k: int) -> np.ndarray:
        """Sign-adjusted diffusion coefficient matrix: diagonal kept, off-diagonal -|zeta|."""
        Zk = -np.abs(self.zeta[k])
        idx = np.arange(self.dims.d)
        Zk[idx, idx] = self.zeta[k, idx, idx]
        return Zk

    def vp_nonzero(self, h: int, l: int) -> bool:
        return self.theta[h, l] != 0.0

    def support(self, k: int) -> CouplingSupport:
        return coupling_support(self.dims.m, k, self.vp_nonzero)

    # -- per-equation exponent summaries ------------------------------------

    def alpha_max(self, k: int) -> float:
        return float(self.alpha[k].max())

    def alpha_min(self, k: int) -> float:
        # smallest diagonal growth exponent of Q^k
        return float(self.alpha[k].diagonal().min())

    def beta_min(self, k: int) -> float:
        return float(self.beta[k].min())

    def beta_max(self, k: int) -> float:
        return float(self.beta[k].max())

    def abar(self) -> float:
        return float(self.alpha.max())

    def bbar(self) -> float:
        return float(self.beta.max())

    def gamma_diag_max(self) -> float:
        return float(np.diag(self.gamma).max())

    def gamma_diag_min(self) -> float:
        return float(np.diag(self.gamma).min())

    def operator_spec(self) -> OperatorSpec:
        return OperatorSpec(dims=self.dims, Q=self.Q, b=self.b, V=self.V,
                            R=self.R, divb=self.divb)


def min_ellipticity(family: "_FamilyBase", k: int) -> float:
    """Smallest eigenvalue of the sign-adjusted coefficient matrix Z^k.

    For both families the diffusion satisfies <Q^k(x) xi, xi> >=
    lambda_min(Z^k) * growth(alpha^k_min at x) * |xi|^2 whenever the
    diagonal growth exponents dominate the off-diagonal ones, so positive
    definiteness of Z^k is the ellipticity witness.  Raises when Z^k is not
    positive definite.
    """
    Zk = family.Z(k)
    lam = float(np.linalg.eigvalsh(0.5 * (Zk + Zk.T)).min())
    if lam <= 0:
        raise HypothesisViolationError(
            f"equation {k}: sign-adjusted diffusion matrix is not positive definite "
            f"(min eigenvalue {lam:.6g})")
    return lam


class PolynomialFamily(_FamilyBase):
    """Coefficients with power-law growth in 1+|x|^2."""

    kind = "polynomial"

    def Q(self, k: int, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        out = self.zeta[k] * r[:, None, None] ** self.alpha[k]
        return out[0] if scalar else out

    def R(self, k: int, x: np.ndarray) -> np.ndarray:
        # (R^k)_ij = D_i q^k_ij = 2 zeta_ij alpha_ij x_i (1+|x|^2)^(alpha_ij - 1)
        pts, r, scalar = _radial(x, self.dims.d)
        core = 2.0 * self.zeta[k] * self.alpha[k] * r[:, None, None] ** (self.alpha[k] - 1.0)
        out = core * pts[:, :, None]
        return out[0] if scalar else out

    def b(self, k: int, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        out = -self.eta[k] * pts * r[:, None] ** self.beta[k]
        return out[0] if scalar else out

    def divb(self, k: int, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        terms = -self.eta[k] * r[:, None] ** self.beta[k] * (
            1.0 + 2.0 * self.beta[k] * pts * pts / r[:, None])
        out = terms.sum(axis=-1)
        return out[0] if scalar else out

    def V(self, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        out = self.theta * r[:, None, None] ** self.gamma
        return out[0] if scalar else out

    def log_growth_V(self, h: int, k: int, r: np.ndarray) -> np.ndarray:
        """log |v_hk| at radius variable r = 1+|x|^2 (for overflow-safe work)."""
        return np.log(np.abs(self.theta[h, k])) + self.gamma[h, k] * np.log(r)


class ExponentialFamily(_FamilyBase):
    """Coefficients with exponential growth e^{(1+|x|^2)^exponent}."""

    kind = "exponential"

    def Q(self, k: int, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        out = self.zeta[k] * np.exp(r[:, None, None] ** self.alpha[k])
        return out[0] if scalar else out

    def R(self, k: int, x: np.ndarray) -> np.ndarray:
        # D_i q_ij = 2 zeta_ij alpha_ij x_i (1+|x|^2)^(alpha_ij-1) e^{(1+|x|^2)^alpha_ij}
        pts, r, scalar = _radial(x, self.dims.d)
        core = 2.0 * self.zeta[k] * self.alpha[k] * r[:, None, None] ** (self.alpha[k] - 1.0) \
            * np.exp(r[:, None, None] ** self.alpha[k])
        out = core * pts[:, :, None]
        return out[0] if scalar else out

    def b(self, k: int, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        out = -self.eta[k] * pts * np.exp(r[:, None] ** self.beta[k])
        return out[0] if scalar else out

    def divb(self, k: int, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        terms = -self.eta[k] * np.exp(r[:, None] ** self.beta[k]) * (
            1.0 + 2.0 * self.beta[k] * pts * pts * r[:, None] ** (self.beta[k] - 1.0))
        out = terms.sum(axis=-1)
        return out[0] if scalar else out

    def V(self, x: np.ndarray) -> np.ndarray:
        pts, r, scalar = _radial(x, self.dims.d)
        out = self.theta * np.exp(r[:, None, None] ** self.gamma)
        return out[0] if scalar else out

    def log_growth_V(self, h: int, k: int, r: np.ndarray) -> np.ndarray:
        return np.log(np.abs(self.theta[h, k])) + r ** self.gamma[h, k]


def diagonal_family(kind: str, d: int, m: int, *, zeta_diag=1.0, alpha=0.0,
                    eta=1.0, beta=0.0, theta=None, gamma=None):
    """Convenience constructor: scalar-per-equation diffusion, shared exponents.

    theta and gamma must be (m, m) arrays (or None for the identity-like
    defaults theta = I, gamma = 0).
    """
    dims = SystemDims(d, m)
    zeta = np.tile(np.eye(d) * zeta_diag, (m, 1, 1))
    alpha_arr = np.full((m, d, d), float(alpha))
    eta_arr = np.full((m, d), float(eta))
    beta_arr = np.full((m, d), float(beta))
    theta_arr = np.eye(m) if theta is None else np.asarray(theta, dtype=float)
    gamma_arr = np.zeros((m, m)) if gamma is None else np.asarray(gamma, dtype=float)
    cls = PolynomialFamily if kind == "polynomial" else ExponentialFamily
    return cls(dims, zeta, alpha_arr, eta_arr, beta_arr, theta_arr, gamma_arr)
