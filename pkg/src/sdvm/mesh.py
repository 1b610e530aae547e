"""Space-time slab meshes.

The phase-space cylinder Q_T = [0,T] x Omega_x x Omega_v is decomposed
into time slabs times tensor-product cells; the field cylinder
[0,T] x Omega_x reuses the same time partition and x nodes.  Only
uniform tensor meshes are supported; local refinement is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TimePartition:
    """Strictly increasing breakpoints 0 = t_0 < ... < t_M = T; slab m
    is the half-open interval (t_{m-1}, t_m]."""

    breakpoints: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        if bp.ndim != 1 or bp.size < 2:
            raise ConfigurationError("need at least one time slab")
        if bp[0] != 0.0:
            raise ConfigurationError("time partition must start at 0")
        if np.any(np.diff(bp) <= 0):
            raise ConfigurationError("time breakpoints must be increasing")

    @property
    def n_slabs(self) -> int:
        return self.breakpoints.size - 1

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    def slab(self, m: int) -> tuple[float, float]:
        """Endpoints (t_{m-1}, t_m) of slab m, m = 1..M."""
        if not 1 <= m <= self.n_slabs:
            raise ConfigurationError(f"slab index {m} out of range")
        return float(self.breakpoints[m - 1]), float(self.breakpoints[m])

    def slab_lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)


@dataclass(frozen=True)
class TensorCellGrid:
    """Tensor-product phase-space grid: x_nodes over Omega_x and
    v1_nodes/v2_nodes over the (bounded) velocity box."""

    x_nodes: np.ndarray
    v1_nodes: np.ndarray
    v2_nodes: np.ndarray

    def __post_init__(self):
        for name in ("x_nodes", "v1_nodes", "v2_nodes"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1 or arr.size < 2:
                raise ConfigurationError(f"{name} needs >= 2 entries")
            if np.any(np.diff(arr) <= 0):
                raise ConfigurationError(f"{name} must be strictly increasing")

    @property
    def n_cells(self) -> int:
        return ((self.x_nodes.size - 1) * (self.v1_nodes.size - 1)
                * (self.v2_nodes.size - 1))

    @property
    def x_bounds(self) -> tuple[float, float]:
        return float(self.x_nodes[0]), float(self.x_nodes[-1])

    @property
    def v_bounds(self) -> tuple[float, float, float, float]:
        return (float(self.v1_nodes[0]), float(self.v1_nodes[-1]),
                float(self.v2_nodes[0]), float(self.v2_nodes[-1]))


@dataclass(frozen=True)
class SlabMesh:
    """Time partition x tensor grid, with the mesh parameter h = max
    diameter of the space-time elements I_m x tau (4D diameter), and the
    analogous parameter h_field for the field-cylinder elements I_m x tau_x."""

    time: TimePartition
    grid: TensorCellGrid

    @property
    def h(self) -> float:
        dt = self.time.slab_lengths().max()
        dx = np.diff(self.grid.x_nodes).max()
        dv1 = np.diff(self.grid.v1_nodes).max()
        dv2 = np.diff(self.grid.v2_nodes).max()
        return float(np.sqrt(dt * dt + dx * dx + dv1 * dv1 + dv2 * dv2))

    @property
    def h_field(self) -> float:
        dt = self.time.slab_lengths().max()
        dx = np.diff(self.grid.x_nodes).max()
        return float(np.sqrt(dt * dt + dx * dx))

    @property
    def n_slabs(self) -> int:
        return self.time.n_slabs


def build_uniform(T: float, M: int, nx: int, nv: int,
                  x_bounds=(0.0, 1.0), v_bounds=(-1.0, 1.0)) -> SlabMesh:
    """Uniform mesh: M time slabs on [0,T], nx cells on x_bounds and nv
    cells per velocity axis on v_bounds (same box for v1 and v2)."""
    if T <= 0:
        raise ConfigurationError("final time T must be positive")
    if min(M, nx, nv) < 1:
        raise ConfigurationError("M, nx, nv must all be >= 1")
    x0, x1 = map(float, x_bounds)
    v0, v1 = map(float, v_bounds)
    if x1 <= x0 or v1 <= v0:
        raise ConfigurationError("domain box must have positive measure")
    return SlabMesh(
        time=TimePartition(np.linspace(0.0, T, M + 1)),
        grid=TensorCellGrid(
            x_nodes=np.linspace(x0, x1, nx + 1),
            v1_nodes=np.linspace(v0, v1, nv + 1),
            v2_nodes=np.linspace(v0, v1, nv + 1),
        ),
    )


def _bisect(nodes: np.ndarray) -> np.ndarray:
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    out = np.empty(nodes.size + mids.size)
    out[0::2] = nodes
    out[1::2] = mids
    return out


def refine_once(mesh: SlabMesh) -> SlabMesh:
    """Bisect every time slab and every cell edge; coarse breakpoints and
    nodes all reappear in the refined mesh (nesting)."""
    return SlabMesh(
        time=TimePartition(_bisect(mesh.time.breakpoints)),
        grid=TensorCellGrid(
            x_nodes=_bisect(mesh.grid.x_nodes),
            v1_nodes=_bisect(mesh.grid.v1_nodes),
            v2_nodes=_bisect(mesh.grid.v2_nodes),
        ),
    )
