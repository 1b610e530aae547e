"""Finite element spaces on time slabs.

Trial/test functions are tensor products of 1D Lagrange bases: degree-k
polynomials in t on each slab (discontinuous across slab interfaces),
continuous piecewise degree-k polynomials with zero boundary trace in x
(and v1, v2 for the phase-space family).  The two projections used in
the error analysis are implemented here: P (slab-wise L2-orthogonal
projection) and pi (slab time average; see project_pi for the scaling
convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import LineBasis
from .errors import ConfigurationError
from .mesh import SlabMesh


@dataclass(frozen=True)
class SpaceSpec:
    """Polynomial degree and boundary handling of a slab space family."""

    degree: int = 1
    zero_trace: bool = True

    def __post_init__(self):
        if not 1 <= self.degree <= 3:
            raise ConfigurationError(
                "degree must be in 1..3 (zero-trace conforming P0 in space "
                "is degenerate; piecewise-constant fields are supported only "
                "as evaluation-time residual inputs)")


def tensor_contract(values: np.ndarray, mats) -> np.ndarray:
    """Contract axis i of `values` with mats[i] of shape (n_out_i, n_in_i);
    axis order is preserved."""
    a = values
    for m in mats:
        a = np.moveaxis(np.tensordot(m, a, axes=(1, 0)), 0, -1)
    return a


def tensor_cho_solve(factors, rhs: np.ndarray) -> np.ndarray:
    """Solve the Kronecker-product SPD system along every axis of rhs."""
    a = rhs
    for f in factors:
        lead = a.shape[0]
        flat = a.reshape(lead, -1)
        a = np.moveaxis(cho_solve(f, flat).reshape(a.shape), 0, -1)
    return a


class CylinderSpace:
    """One finite element family over the whole time cylinder.

    kind='field'  -> t x x          (the space tilde-V_h, 3 components)
    kind='phase'  -> t x x x v1 x v2 (the space V_h, scalar)
    """

    def __init__(self, mesh: SlabMesh, spec: SpaceSpec, kind: str):
        if kind not in ("field", "phase"):
            raise ConfigurationError(f"unknown space kind {kind!r}")
        self.mesh = mesh
        self.spec = spec
        self.kind = kind
        k = spec.degree
        zt = spec.zero_trace
        self.x_basis = LineBasis(mesh.grid.x_nodes, k, zero_trace=zt)
        if kind == "phase":
            self.v1_basis = LineBasis(mesh.grid.v1_nodes, k, zero_trace=zt)
            self.v2_basis = LineBasis(mesh.grid.v2_nodes, k, zero_trace=zt)
            self.spatial_axes = (self.x_basis, self.v1_basis, self.v2_basis)
        else:
            self.spatial_axes = (self.x_basis,)
        if any(ax.n_dofs < 1 for ax in self.spatial_axes):
            raise ConfigurationError(
                "mesh too coarse: zero-trace space has no interior dofs")
        self._time_bases: dict[int, LineBasis] = {}

    @property
    def degree(self) -> int:
        return self.spec.degree

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return tuple(ax.n_dofs for ax in self.spatial_axes)

    def time_basis(self, m: int) -> LineBasis:
        if m not in self._time_bases:
            t0, t1 = self.mesh.time.slab(m)
            self._time_bases[m] = LineBasis([t0, t1], self.degree)
        return self._time_bases[m]

    def dofs_per_slab(self) -> int:
        return (self.degree + 1) * int(np.prod(self.spatial_shape))

    def axes(self, m: int) -> tuple[LineBasis, ...]:
        return (self.time_basis(m),) + self.spatial_axes

    def zeros(self, m: int, ncomp: int = 1) -> "SlabFunction":
        shape = (ncomp, self.degree + 1) + self.spatial_shape
        return SlabFunction(self, m, np.zeros(shape))

    def spatial_grams(self) -> list[np.ndarray]:
        return [ax.gram() for ax in self.spatial_axes]


@dataclass
class SlabFunction:
    """A member of the slab space: coefficients indexed by
    (component, time node, spatial nodes...)."""

    space: CylinderSpace
    m: int
    coeffs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        expect = (self.coeffs.shape[0], self.space.degree + 1) + \
            self.space.spatial_shape
        if self.coeffs.shape != expect:
            raise ConfigurationError(
                f"coefficient shape {self.coeffs.shape} != {expect}")

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @property
    def interval(self) -> tuple[float, float]:
        return self.space.mesh.time.slab(self.m)

    def eval_grid(self, t_pts, axis_pts, deriv: int = -1) -> np.ndarray:
        """Values on a tensor grid; `deriv` selects one axis (0 = time,
        1.. = spatial) to differentiate, -1 for plain values.
        Returns (ncomp, nt_pts, n_axis0, ...)."""
        axes = self.space.axes(self.m)
        pts = [np.atleast_1d(t_pts)] + [np.atleast_1d(p) for p in axis_pts]
        mats = [ax.deriv_matrix(p) if i == deriv else ax.eval_matrix(p)
                for i, (ax, p) in enumerate(zip(axes, pts))]
        # contract dofs against evaluation matrices, per component
        out = [tensor_contract(self.coeffs[c], [m.T for m in mats])
               for c in range(self.ncomp)]
        return np.stack(out)

    def eval_at(self, t: float, *points, deriv: int = -1) -> np.ndarray:
        """Values at scattered points sharing one time t; each entry of
        `points` is an array over the same point list.  Shape (ncomp, npts).
        At t = t_{m-1} this returns the right trace, at t = t_m the left;
        `deriv` picks one axis (0 = time, 1.. = spatial) to differentiate."""
        axes = self.space.axes(self.m)
        tarr = np.array([float(t)])
        tv = (axes[0].deriv_matrix(tarr) if deriv == 0 else
              axes[0].eval_matrix(tarr))[:, 0]
        spatial = [np.atleast_1d(np.asarray(p, float)) for p in points]
        mats = [ax.deriv_matrix(p) if deriv == i + 1 else ax.eval_matrix(p)
                for i, (ax, p) in enumerate(zip(axes[1:], spatial))]
        c = np.tensordot(self.coeffs, tv, axes=(1, 0))  # (ncomp, *space)
        if len(mats) == 1:
            return np.einsum("ci,ip->cp", c, mats[0])
        return np.einsum("cijl,ip,jp,lp->cp", c, *mats, optimize=True)

    def trace_coeffs(self, side: str) -> np.ndarray:
        """One-sided time-trace coefficients (ncomp, spatial...):
        side='left' gives w_+ at t_{m-1}, side='right' gives w_- at t_m."""
        tv = self.space.time_basis(self.m).endpoint_values(side)
        return np.tensordot(self.coeffs, tv, axes=(1, 0))

    def time_average(self) -> np.ndarray:
        """Spatial coefficients of the slab time average (ncomp, spatial...)."""
        tb = self.space.time_basis(self.m)
        t0, t1 = self.interval
        return np.tensordot(self.coeffs, tb.integrals(), axes=(1, 0)) / (t1 - t0)

    def copy(self) -> "SlabFunction":
        return SlabFunction(self.space, self.m, self.coeffs.copy())


def evaluate(fn: SlabFunction, t: float, point) -> np.ndarray:
    """Point evaluation of a slab function; `point` is (x,) or (x, v1, v2).
    Returns the (ncomp,) value vector."""
    t0, t1 = fn.interval
    eps = 1e-12 * max(1.0, abs(t1))
    if not (t0 - eps <= t <= t1 + eps):
        raise ConfigurationError(f"time {t} outside slab [{t0}, {t1}]")
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.size != len(fn.space.spatial_axes):
        raise ConfigurationError("point dimension does not match the space")
    vals = fn.eval_grid(np.array([t]), [np.array([p]) for p in point])
    return vals.reshape(fn.ncomp)


def project_P(target, space: CylinderSpace, m: int, ncomp: int = 1,
              nq: int | None = None) -> SlabFunction:
    """Slab-wise L2-orthogonal projection of a callable onto the slab space.

    `target(t, x[, v1, v2])` must broadcast over open grids; for several
    components pass a sequence of callables.
    """
    targets = target if isinstance(target, (list, tuple)) else [target]
    if len(targets) != ncomp:
        raise ConfigurationError("number of target callables != ncomp")
    axes = space.axes(m)
    quads = [ax.quad(nq) for ax in axes]
    emats = [ax.eval_matrix(q[0]) for ax, q in zip(axes, quads)]
    grids = np.ix_(*[q[0] for q in quads])
    factors = [cho_factor(ax.gram()) for ax in axes]
    coeffs = []
    for tgt in targets:
        vals = np.asarray(tgt(*grids), dtype=float)
        vals = np.broadcast_to(vals, tuple(q[0].size for q in quads)).copy()
        for i, (_, w) in enumerate(quads):
            vals *= w.reshape((1,) * i + (-1,) + (1,) * (len(quads) - i - 1))
        load = tensor_contract(vals, emats)
        coeffs.append(tensor_cho_solve(factors, load))
    return SlabFunction(space, m, np.stack(coeffs))


def project_pi(fn: SlabFunction) -> SlabFunction:
    """Time-average projection onto functions constant in t on the slab.

    The result equals (1/|I_m|) * int_{I_m} fn dt; dividing by the true
    slab length (rather than the global mesh parameter h) is what makes
    pi idempotent, and is the convention used throughout this artifact.
    """
    avg = fn.time_average()
    coeffs = np.repeat(avg[:, None, ...], fn.space.degree + 1, axis=1)
    return SlabFunction(fn.space, fn.m, coeffs)


def interpolate_nodal(target, space: CylinderSpace, m: int) -> SlabFunction:
    """Nodal interpolant on the slab (exact for polynomials of degree <= k)."""
    axes = space.axes(m)
    grids = np.ix_(*[ax.nodes for ax in axes])
    vals = np.asarray(target(*grids), dtype=float)
    vals = np.broadcast_to(vals, tuple(ax.n_dofs for ax in axes))
    return SlabFunction(space, m, vals[None, ...].copy())


def slab_norm_sq(fn: SlabFunction, grams=None) -> float:
    """Squared L2 norm over the slab via per-axis Gram matrices."""
    axes = fn.space.axes(fn.m)
    if grams is None:
        grams = [ax.gram() for ax in axes]
    total = 0.0
    for c in range(fn.ncomp):
        gc = tensor_contract(fn.coeffs[c], grams)
        total += float(np.vdot(fn.coeffs[c], gc))
    return total


def history_norm_sq(slabs: list[SlabFunction]) -> float:
    """Squared L2 norm over the whole cylinder of a per-slab history."""
    if not slabs:
        return 0.0
    space = slabs[0].space
    sgrams = space.spatial_grams()
    return sum(slab_norm_sq(f, [f.space.time_basis(f.m).gram()] + sgrams)
               for f in slabs)
