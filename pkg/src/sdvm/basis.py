"""1D Lagrange bases on cell meshes, Gauss quadrature, and Gram helpers.

Every finite-element space in the solver is a tensor product of the
per-axis bases built here: continuous piecewise polynomials of degree k
on a 1D cell mesh, optionally with the two boundary nodes removed
(homogeneous Dirichlet trace).  The time axis of a slab is the special
case of a single cell.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DomainError


@lru_cache(maxsize=32)
def _gauss_rule(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_points(n: int, a: float, b: float):
    """Gauss-Legendre points/weights on [a, b], exact through degree 2n-1."""
    x, w = _gauss_rule(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


@lru_cache(maxsize=16)
def _lagrange_coeffs(k: int) -> np.ndarray:
    """Monomial coefficients of the Lagrange basis on [0,1] with k+1
    equispaced nodes; row j holds the coefficients of basis function j."""
    nodes = np.linspace(0.0, 1.0, k + 1)
    vander = np.vander(nodes, k + 1, increasing=True)
    return np.linalg.inv(vander).T


class LineBasis:
    """Continuous nodal Lagrange basis of degree k on a 1D cell mesh.

    Nodes are the cell edges plus k-1 equispaced interior nodes per cell.
    With ``zero_trace`` the first and last node are dropped, giving the
    H^1_0-conforming subspace.
    """

    def __init__(self, edges, degree: int, zero_trace: bool = False):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("edges must hold at least two points")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if degree < 1:
            raise ValueError("LineBasis needs degree >= 1")
        self.edges = edges
        self.degree = int(degree)
        self.zero_trace = bool(zero_trace)
        self.ncells = edges.size - 1
        k = self.degree
        # global nodes, cell c owns slots [c*k, c*k + k]
        nodes = np.empty(self.ncells * k + 1)
        for c in range(self.ncells):
            nodes[c * k:(c + 1) * k + 1] = np.linspace(edges[c], edges[c + 1], k + 1)
        self._all_nodes = nodes
        self._coeffs = _lagrange_coeffs(k)          # (k+1, k+1) monomial rows
        self._dcoeffs = self._coeffs[:, 1:] * np.arange(1, k + 1)

    @property
    def n_dofs(self) -> int:
        n = self._all_nodes.size
        return n - 2 if self.zero_trace else n

    @property
    def nodes(self) -> np.ndarray:
        return self._all_nodes[1:-1] if self.zero_trace else self._all_nodes

    @property
    def a(self) -> float:
        return float(self.edges[0])

    @property
    def b(self) -> float:
        return float(self.edges[-1])

    def cell_sizes(self) -> np.ndarray:
        return np.diff(self.edges)

    def _locate(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eps = 1e-12 * max(1.0, abs(self.a), abs(self.b))
        if np.any(pts < self.a - eps) or np.any(pts > self.b + eps):
            raise DomainError(
                f"point outside [{self.a}, {self.b}]: "
                f"range [{pts.min()}, {pts.max()}]")
        idx = np.searchsorted(self.edges, pts, side="right") - 1
        idx = np.clip(idx, 0, self.ncells - 1)
        h = self.edges[idx + 1] - self.edges[idx]
        u = (pts - self.edges[idx]) / h
        return idx, u

    def _local_values(self, u: np.ndarray) -> np.ndarray:
        """(k+1, npts) local basis values at reference coordinates u."""
        powers = u[None, :] ** np.arange(self.degree + 1)[:, None]
        return self._coeffs @ powers

    def _local_derivs(self, u: np.ndarray) -> np.ndarray:
        powers = u[None, :] ** np.arange(self.degree)[:, None]
        return self._dcoeffs @ powers

    def _scatter(self, idx, local, npts) -> np.ndarray:
        k = self.degree
        out = np.zeros((self._all_nodes.size, npts))
        rows = idx[None, :] * k + np.arange(k + 1)[:, None]
        np.add.at(out, (rows.ravel(), np.tile(np.arange(npts), k + 1)),
                  local.reshape(-1))
        return out[1:-1] if self.zero_trace else out

    def eval_matrix(self, pts) -> np.ndarray:
        """(n_dofs, npts) values of every basis function at pts."""
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        idx, u = self._locate(pts)
        return self._scatter(idx, self._local_values(u), pts.size)

    def deriv_matrix(self, pts) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        idx, u = self._locate(pts)
        h = self.edges[idx + 1] - self.edges[idx]
        return self._scatter(idx, self._local_derivs(u) / h, pts.size)

    def quad(self, npts: int | None = None):
        """Per-cell Gauss rule; returns (points, weights) over the mesh."""
        nq = npts if npts is not None else self.degree + 2
        x, w = _gauss_rule(nq)
        h = np.diff(self.edges)
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        pts = (mids[:, None] + 0.5 * h[:, None] * x[None, :]).ravel()
        wts = (0.5 * h[:, None] * w[None, :]).ravel()
        return pts, wts

    def gram(self, weight=None, npts: int | None = None) -> np.ndarray:
        pts, wts = self.quad(npts)
        if weight is not None:
            wts = wts * weight(pts)
        e = self.eval_matrix(pts)
        return (e * wts) @ e.T

    def stiffness(self, npts: int | None = None) -> np.ndarray:
        pts, wts = self.quad(npts)
        d = self.deriv_matrix(pts)
        return (d * wts) @ d.T

    def integrals(self, npts: int | None = None) -> np.ndarray:
        """Vector of integrals of each basis function over the axis."""
        pts, wts = self.quad(npts)
        return self.eval_matrix(pts) @ wts

    def endpoint_values(self, side: str) -> np.ndarray:
        pt = self.a if side == "left" else self.b
        return self.eval_matrix(np.array([pt]))[:, 0]

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolation coefficients (exact for degree <= k)."""
        return np.asarray(fn(self.nodes), dtype=float)

    # element-local views used by the vectorized 2D velocity assembly

    def local_reference(self, nq: int):
        """Reference-cell data: GL points u, weights, values/derivs (k+1, nq)."""
        x, w = _gauss_rule(nq)
        u = 0.5 * (x + 1.0)
        return u, 0.5 * w, self._local_values(u), self._local_derivs(u)

    def cell_dof_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(ncells, k+1) global dof index per local node and a validity mask
        (False where the node was removed by the zero-trace condition)."""
        k = self.degree
        idx = np.arange(self.ncells)[:, None] * k + np.arange(k + 1)[None, :]
        if self.zero_trace:
            idx = idx - 1
            mask = (idx >= 0) & (idx < self.n_dofs)
        else:
            mask = np.ones_like(idx, dtype=bool)
        return idx, mask
