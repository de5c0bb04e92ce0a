"""Dirichlet approximation of the coupled semigroups on boxes.

The whole-space kernels are limits of Dirichlet kernels on [-R, R]^d, so
everything numeric happens on a uniform interior grid of such a box:

* the generator is assembled in flux form: diffusion uses face-centered
  coefficients (exact local conservation, symmetric stencil), drift is
  centered but switches to upwind differences wherever the cell Peclet
  number |b| h / (2 q) exceeds 1, and the potential couples the m
  components of each node through a dense m x m block.  Unknowns are
  ordered node-major (index = node * m + component), keeping the coupling
  bandwidth at m;
* the adjoint variant is the exact transpose of the cooperative matrix.
  The transpose of centered/upwind drift is the matching discretization of
  -div(b u), so discrete duality holds to solver precision, not just to
  discretization order;
* time stepping is the theta method.  theta = 1/2 for accuracy, theta = 1
  when order-preservation matters: with the cooperative potential the
  implicit factor is an M-matrix, so backward steps map nonnegative data
  to nonnegative data and dominated data to dominated data.

Factorizations are cached per (theta, dt); kernel columns are semigroup
images of mollified point sources (discrete Gaussians with unit discrete
mass).  Fields round-trip through a small binary format and CSV, both
byte-stable for identical inputs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as _field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from .coefficients import VARIANTS, OperatorSpec, _FamilyBase, eval_VP
from .errors import (
    AssemblyError,
    BudgetError,
    DomainError,
    SolveError,
)

_DEFAULT_BUDGET = 4_000_000
_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Uniform interior grid of the box [-radius, radius]^d.

    The boundary itself carries the homogeneous Dirichlet condition and is
    eliminated; interior nodes sit at -radius + i * spacing.  radius must
    be an integer multiple of spacing so that 0 is a node and grids of
    different radii share their common nodes.
    """

    d: int
    radius: float
    spacing: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise DomainError(f"grids support d in {{1, 2}}, got d={self.d}")
        if self.spacing <= 0 or self.radius <= 0:
            raise DomainError("radius and spacing must be positive")
        ratio = self.radius / self.spacing
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 2:
            raise DomainError(
                f"radius must be an integer multiple (>= 2) of the spacing, "
                f"got radius={self.radius}, spacing={self.spacing}")

    @property
    def cells_per_axis(self) -> int:
        return 2 * int(round(self.radius / self.spacing))

    @property
    def n_per_axis(self) -> int:
        return self.cells_per_axis - 1

    @property
    def n_nodes(self) -> int:
        return self.n_per_axis ** self.d

    def axis_coords(self) -> np.ndarray:
        return -self.radius + self.spacing * np.arange(1, self.cells_per_axis)

    def points(self) -> np.ndarray:
        """All interior nodes, shape (n_nodes, d), row-major in the axes."""
        ax = self.axis_coords()
        if self.d == 1:
            return ax[:, None]
        mesh = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([mm.ravel() for mm in mesh], axis=-1)

    def node_of(self, point) -> int:
        """Index of the node at the given point; must lie on the grid."""
        p = np.asarray(point, dtype=float).reshape(self.d)
        idx = (p + self.radius) / self.spacing - 1.0
        near = np.round(idx)
        if np.any(np.abs(idx - near) > 1e-9) or np.any(near < 0) \
                or np.any(near > self.n_per_axis - 1):
            raise DomainError(f"point {p!r} is not an interior grid node")
        flat = 0
        for a in range(self.d):
            flat = flat * self.n_per_axis + int(near[a])
        return flat


@dataclass
class DiscreteField:
    """Values of an m-component field on a grid, plus how it was produced."""

    grid: GridSpec
    values: np.ndarray  # (n_nodes, m)
    time: float = 0.0
    meta: dict = _field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.n_nodes:
            raise DomainError(
                f"field values must have shape (n_nodes, m) = ({self.grid.n_nodes}, m), "
                f"got {self.values.shape}")

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def component(self, k: int) -> np.ndarray:
        out = self.values[:, k]
        if self.grid.d == 2:
            n1 = self.grid.n_per_axis
            return out.reshape(n1, n1)
        return out

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def discrete_inner(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    """h^d-weighted inner product summed over nodes and components."""
    return float(grid.spacing ** grid.d * np.sum(np.asarray(a) * np.asarray(b)))


def discrete_mass(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """h^d-weighted integral of each component, shape (m,)."""
    return grid.spacing ** grid.d * np.asarray(values).sum(axis=0)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _operator_spec_of(system) -> OperatorSpec:
    return system.operator_spec() if isinstance(system, _FamilyBase) else system


def _check_coefficient_block(name: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise AssemblyError(f"{name} evaluates non-finite on the grid")


def _component_stencil_1d(spec, grid: GridSpec, k: int):
    h = grid.spacing
    n = grid.n_nodes
    x = grid.points()
    # face j sits at -R + (j + 1/2) h; node j has faces j and j+1 around it
    faces = (-grid.radius + (np.arange(grid.cells_per_axis) + 0.5) * h)[:, None]
    qf = np.asarray(spec.Q(k, faces), dtype=float)[:, 0, 0]
    qn = np.asarray(spec.Q(k, x), dtype=float)[:, 0, 0]
    bn = np.asarray(spec.b(k, x), dtype=float)[:, 0]
    _check_coefficient_block("Q", qf)
    _check_coefficient_block("b", bn)
    if np.any(qf <= 0) or np.any(qn <= 0):
        raise AssemblyError(f"equation {k}: diffusion must be positive on faces and nodes")

    diag = -(qf[:-1] + qf[1:]) / h ** 2
    right = qf[1:-1] / h ** 2          # node j -> j+1, j = 0..n-2
    left = qf[1:-1] / h ** 2           # node j -> j-1, j = 1..n-1

    pe = np.abs(bn) * h / (2.0 * qn)
    centered = pe <= 1.0
    up_pos = (~centered) & (bn > 0)
    up_neg = (~centered) & (bn < 0)

    drift_diag = np.where(up_pos, -bn / h, 0.0) + np.where(up_neg, bn / h, 0.0)
    drift_right = np.where(centered, bn / (2 * h), 0.0) + np.where(up_pos, bn / h, 0.0)
    drift_left = np.where(centered, -bn / (2 * h), 0.0) + np.where(up_neg, -bn / h, 0.0)

    rows = [np.arange(n), np.arange(n - 1), np.arange(1, n)]
    cols = [np.arange(n), np.arange(1, n), np.arange(n - 1)]
    vals = [diag + drift_diag, right + drift_right[:-1], left + drift_left[1:]]
    return rows, cols, vals


def _component_stencil_2d(spec, grid: GridSpec, k: int):
    h = grid.spacing
    n1 = grid.n_per_axis
    n = grid.n_nodes
    pts = grid.points()
    P = np.arange(n)
    IX, IY = P // n1, P % n1
    stride = (n1, 1)
    has = {
        (0, +1): IX < n1 - 1, (0, -1): IX > 0,
        (1, +1): IY < n1 - 1, (1, -1): IY > 0,
    }

    Qn = np.asarray(spec.Q(k, pts), dtype=float)
    bn = np.asarray(spec.b(k, pts), dtype=float)
    _check_coefficient_block("Q", Qn)
    _check_coefficient_block("b", bn)
    eigs = np.linalg.eigvalsh(0.5 * (Qn + np.swapaxes(Qn, 1, 2)))
    if float(eigs[:, 0].min()) <= 0:
        raise AssemblyError(f"equation {k}: diffusion not positive definite on the grid")

    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    def couple(mask, target, value):
        rows.append(P[mask])
        cols.append(target[mask])
        vals.append(value[mask])

    for a in range(2):
        e = np.zeros(2)
        e[a] = 0.5 * h
        qp = np.asarray(spec.Q(k, pts + e), dtype=float)[:, a, a]
        qm = np.asarray(spec.Q(k, pts - e), dtype=float)[:, a, a]
        if np.any(qp <= 0) or np.any(qm <= 0):
            raise AssemblyError(f"equation {k}: diffusion must be positive on faces")
        diag += -(qp + qm) / h ** 2
        couple(has[(a, +1)], P + stride[a], qp / h ** 2)
        couple(has[(a, -1)], P - stride[a], qm / h ** 2)

        ba = bn[:, a]
        pe = np.abs(ba) * h / (2.0 * Qn[:, a, a])
        centered = pe <= 1.0
        up_pos = (~centered) & (ba > 0)
        up_neg = (~centered) & (ba < 0)
        diag += np.where(up_pos, -ba / h, 0.0) + np.where(up_neg, ba / h, 0.0)
        couple(has[(a, +1)] & (centered | up_pos), P + stride[a],
               np.where(centered, ba / (2 * h), ba / h))
        couple(has[(a, -1)] & (centered | up_neg), P - stride[a],
               np.where(centered, -ba / (2 * h), -ba / h))

    # mixed diffusion D_0(q01 D_1 u) + D_1(q01 D_0 u), only when present
    if np.any(Qn[:, 0, 1] != 0.0):
        for a in range(2):
            o = 1 - a
            e = np.zeros(2)
            e[a] = 0.5 * h
            qp = np.asarray(spec.Q(k, pts + e), dtype=float)[:, 0, 1]
            qm = np.asarray(spec.Q(k, pts - e), dtype=float)[:, 0, 1]
            c = 1.0 / (4.0 * h ** 2)
            couple(has[(o, +1)], P + stride[o], (qp - qm) * c)
            couple(has[(o, -1)], P - stride[o], -(qp - qm) * c)
            couple(has[(a, +1)] & has[(o, +1)], P + stride[a] + stride[o], qp * c)
            couple(has[(a, +1)] & has[(o, -1)], P + stride[a] - stride[o], -qp * c)
            couple(has[(a, -1)] & has[(o, +1)], P - stride[a] + stride[o], -qm * c)
            couple(has[(a, -1)] & has[(o, -1)], P - stride[a] - stride[o], qm * c)

    rows.append(P)
    cols.append(P)
    vals.append(diag)
    return rows, cols, vals


def assemble_generator(system, grid: GridSpec, variant: str = "P") -> sparse.csr_matrix:
    """Sparse matrix of the chosen operator variant on the grid.

    The adjoint is assembled as the transpose of the cooperative matrix,
    which is simultaneously a consistent discretization of the adjoint
    operator and the exact discrete dual of the forward matrix.
    """
    if variant not in VARIANTS:
        raise DomainError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    if variant == "P_adjoint":
        return assemble_generator(system, grid, "P").T.tocsr()
    spec = _operator_spec_of(system)
    if spec.dims.d != grid.d:
        raise AssemblyError(f"system dimension {spec.dims.d} != grid dimension {grid.d}")
    m = spec.dims.m
    n = grid.n_nodes
    pts = grid.points()

    Vmat = np.asarray(spec.V(pts), dtype=float)
    _check_coefficient_block("V", Vmat)
    pot = eval_VP(Vmat) if variant == "P" else Vmat

    rows_all, cols_all, vals_all = [], [], []
    for k in range(m):
        if grid.d == 1:
            rows, cols, vals = _component_stencil_1d(spec, grid, k)
        else:
            rows, cols, vals = _component_stencil_2d(spec, grid, k)
        for r, c, v in zip(rows, cols, vals):
            rows_all.append(r * m + k)
            cols_all.append(c * m + k)
            vals_all.append(v)

    node_idx = np.arange(n)
    for hh in range(m):
        for kk in range(m):
            col = pot[:, hh, kk]
            if not np.any(col):
                continue
            rows_all.append(node_idx * m + hh)
            cols_all.append(node_idx * m + kk)
            vals_all.append(-col)

    A = sparse.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(n * m, n * m))
    A.sum_duplicates()
    return A.tocsr()


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

class OperatorHandle:
    """Assembled generator plus a cache of theta-step factorizations."""

    def __init__(self, system, grid: GridSpec, variant: str = "P",
                 budget: int = _DEFAULT_BUDGET):
        spec = _operator_spec_of(system)
        dof = grid.n_nodes * spec.dims.m
        if dof > budget:
            raise BudgetError(
                f"grid needs {dof} unknowns, over the budget of {budget}; "
                f"coarsen the grid or raise the budget")
        self.grid = grid
        self.variant = variant
        self.m = spec.dims.m
        self.matrix = assemble_generator(system, grid, variant)
        self._lu: dict = {}

    def _flat(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape != (self.grid.n_nodes, self.m):
            raise DomainError(
                f"values must have shape ({self.grid.n_nodes}, {self.m}), got {v.shape}")
        return v.reshape(-1)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """One matvec with the generator, shape preserved."""
        return np.asarray(self.matrix @ self._flat(values)).reshape(-1, self.m)

    def _factor(self, theta: float, dt: float):
        key = (float(theta), float(dt))
        if key not in self._lu:
            n = self.matrix.shape[0]
            eye = sparse.identity(n, format="csr")
            M1 = (eye - theta * dt * self.matrix).tocsc()
            try:
                lu = sparse_linalg.splu(M1)
            except RuntimeError as exc:
                raise SolveError(f"implicit factor is singular: {exc}") from None
            M0 = (eye + (1.0 - theta) * dt * self.matrix).tocsr() if theta < 1.0 else None
            self._lu[key] = (lu, M1.tocsr(), M0)
        return self._lu[key]

    def _step(self, u: np.ndarray, theta: float, dt: float) -> np.ndarray:
        lu, M1, M0 = self._factor(theta, dt)
        rhs = M0 @ u if M0 is not None else u
        out = lu.solve(rhs)
        resid = float(np.max(np.abs(M1 @ out - rhs)))
        if not np.isfinite(resid) or resid > _RESIDUAL_TOL * max(1.0, float(np.max(np.abs(rhs)))):
            raise SolveError(f"step residual {resid:.3g} exceeds tolerance")
        return out

    def evolve(self, values: np.ndarray, t: float, dt: Optional[float] = None,
               theta: float = 0.5) -> tuple[np.ndarray, dict]:
        """Semigroup image of the values at time t; returns (values, step record).

        dt defaults to min(t/64, spacing); whatever does not divide t evenly
        is taken as one trailing shorter step, recorded in the metadata.
        """
        if t <= 0:
            raise DomainError(f"evolve needs t > 0, got {t}")
        if not 0.0 <= theta <= 1.0:
            raise DomainError(f"theta must lie in [0, 1], got {theta}")
        if dt is None:
            dt = min(t / 64.0, self.grid.spacing)
        if dt <= 0:
            raise DomainError(f"need dt > 0, got {dt}")
        dt = min(dt, t)
        full = int(math.floor(t / dt + 1e-9))
        rem = t - full * dt
        if rem <= 1e-12 * max(1.0, t):
            rem = 0.0
        u = self._flat(values).copy()
        for _ in range(full):
            u = self._step(u, theta, dt)
        if rem > 0.0:
            u = self._step(u, theta, rem)
        if not np.all(np.isfinite(u)):
            raise SolveError("evolution produced non-finite values")
        meta = {"variant": self.variant, "theta": theta, "dt": dt,
                "steps": full + (1 if rem else 0), "final_step": rem if rem else dt,
                "t": t}
        return u.reshape(-1, self.m), meta


# ---------------------------------------------------------------------------
# kernel access
# ---------------------------------------------------------------------------

def mollified_source(grid: GridSpec, m: int, center, component: int,
                     width: Optional[float] = None) -> np.ndarray:
    """Discrete Gaussian of the given width in one component, unit discrete mass."""
    if not 0 <= component < m:
        raise DomainError(f"component {component} outside 0..{m - 1}")
    c = np.asarray(center, dtype=float).reshape(grid.d)
    if np.any(np.abs(c) >= grid.radius):
        raise DomainError(f"source {c!r} lies outside the open box of radius {grid.radius}")
    w = 2.0 * grid.spacing if width is None else float(width)
    if w <= 0:
        raise DomainError("mollifier width must be positive")
    pts = grid.points()
    g = np.exp(-np.sum((pts - c) ** 2, axis=-1) / (2.0 * w ** 2))
    mass = float(g.sum()) * grid.spacing ** grid.d
    if mass <= 0:
        raise DomainError("mollifier has zero discrete mass on this grid")
    out = np.zeros((grid.n_nodes, m))
    out[:, component] = g / mass
    return out


def kernel_column(handle: OperatorHandle, t: float, center, component: int,
                  width: Optional[float] = None, dt: Optional[float] = None,
                  theta: float = 0.5) -> DiscreteField:
    """Column of the kernel: all components at time t sourced at (center, component)."""
    src = mollified_source(handle.grid, handle.m, center, component, width)
    vals, meta = handle.evolve(src, t, dt=dt, theta=theta)
    meta.update(source=tuple(np.asarray(center, dtype=float).reshape(handle.grid.d)),
                source_component=component,
                mollifier_width=2.0 * handle.grid.spacing if width is None else float(width))
    return DiscreteField(handle.grid, vals, time=t, meta=meta)


def kernel_matrix(handle: OperatorHandle, t: float, width: Optional[float] = None,
                  dt: Optional[float] = None, theta: float = 0.5,
                  max_columns: int = 8192) -> np.ndarray:
    """Full kernel ensemble K[i*m+h, j*m+k] ~ p_hk(t, x_i, y_j).

    One linear solve per column; intended for small validation grids, hence
    the column cap.
    """
    n, m = handle.grid.n_nodes, handle.m
    if n * m > max_columns:
        raise BudgetError(f"ensemble kernel needs {n * m} columns, cap is {max_columns}")
    pts = handle.grid.points()
    K = np.empty((n * m, n * m))
    for j in range(n):
        for k in range(m):
            src = mollified_source(handle.grid, m, pts[j], k, width)
            vals, _ = handle.evolve(src, t, dt=dt, theta=theta)
            K[:, j * m + k] = vals.reshape(-1)
    return K


def apply_kernel_to_function(handle: OperatorHandle, t: float, values: np.ndarray,
                             dt: Optional[float] = None, theta: float = 0.5) -> DiscreteField:
    """Semigroup applied to sampled initial data (the kernel-quadrature limit)."""
    vals, meta = handle.evolve(values, t, dt=dt, theta=theta)
    return DiscreteField(handle.grid, vals, time=t, meta=meta)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"KBF1"
_VARIANT_CODES = {"plain": 0, "P": 1, "P_adjoint": 2}
_VARIANT_NAMES = {v: k for k, v in _VARIANT_CODES.items()}


def field_to_bytes(field: DiscreteField) -> bytes:
    """Binary encoding: fixed header, then row-major float64 payload.

    Deterministic for identical inputs (no timestamps, no environment)."""
    g = field.grid
    meta = field.meta
    variant = _VARIANT_CODES.get(meta.get("variant"), 255)
    comp = int(meta.get("source_component", -1))
    width = float(meta.get("mollifier_width", math.nan))
    source = meta.get("source")
    src = np.full(g.d, math.nan) if source is None else np.asarray(source, dtype=float)
    head = struct.pack("<4sIIII", _MAGIC, 1, g.d, field.m, g.n_per_axis)
    head += struct.pack("<ddd", g.radius, g.spacing, field.time)
    head += struct.pack("<Bi", variant, comp)
    head += struct.pack("<d", width)
    head += struct.pack(f"<{g.d}d", *src)
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    return head + payload


def field_from_bytes(blob: bytes) -> DiscreteField:
    fixed = struct.calcsize("<4sIIII")
    magic, version, d, m, n1 = struct.unpack_from("<4sIIII", blob, 0)
    if magic != _MAGIC:
        raise DomainError("not a kernel field blob (bad magic)")
    if version != 1:
        raise DomainError(f"unsupported field format version {version}")
    off = fixed
    radius, spacing, time = struct.unpack_from("<ddd", blob, off)
    off += struct.calcsize("<ddd")
    variant, comp = struct.unpack_from("<Bi", blob, off)
    off += struct.calcsize("<Bi")
    (width,) = struct.unpack_from("<d", blob, off)
    off += struct.calcsize("<d")
    src = struct.unpack_from(f"<{d}d", blob, off)
    off += struct.calcsize(f"<{d}d")
    grid = GridSpec(d=d, radius=radius, spacing=spacing)
    if grid.n_per_axis != n1:
        raise DomainError("grid header is inconsistent")
    values = np.frombuffer(blob, dtype="<f8", offset=off).reshape(grid.n_nodes, m).copy()
    meta = {}
    if variant in _VARIANT_NAMES:
        meta["variant"] = _VARIANT_NAMES[variant]
    if comp >= 0:
        meta["source_component"] = comp
    if not math.isnan(width):
        meta["mollifier_width"] = width
    if not any(math.isnan(s) for s in src):
        meta["source"] = tuple(src)
    return DiscreteField(grid, values, time=time, meta=meta)


def save_field(path, field: DiscreteField):
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(field))


def load_field(path) -> DiscreteField:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


def field_to_csv(field: DiscreteField) -> str:
    g = field.grid
    cols = [f"x{a}" for a in range(g.d)] + [f"u{k}" for k in range(field.m)]
    lines = [",".join(cols)]
    pts = g.points()
    for i in range(g.n_nodes):
        row = [f"{pts[i, a]:.17g}" for a in range(g.d)]
        row += [f"{field.values[i, k]:.17g}" for k in range(field.m)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def save_field_csv(path, field: DiscreteField):
    with open(path, "w") as fh:
        fh.write(field_to_csv(field))
