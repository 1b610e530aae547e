"""Velocity moments of the distribution, neutralizing background, and the
consistent initial longitudinal field.

Momentum v maps to the relativistic velocity v_hat = v / sqrt(1 + |v|^2)
(mass and light speed normalized to one), so |v_hat| < 1 always.  The
sources feeding the field equations are

    rho(t,x) = int f dv - rho_b(x),   j_i(t,x) = int vhat_i f dv,

and the right-hand side 4-vector is b = (rho, -j1, -j2, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import gauss_points
from .errors import NonNeutralizingError
from .fespace import CylinderSpace

__all__ = ["hat_velocity", "hat_v1", "hat_v2", "SourceMoments",
           "compute_moments", "build_neutralizing_background", "initial_E1",
           "velocity_moment_matrices"]


def hat_velocity(v1, v2):
    """Relativistic velocity map (v1, v2) -> v / sqrt(1 + |v|^2)."""
    gamma = np.sqrt(1.0 + np.asarray(v1) ** 2 + np.asarray(v2) ** 2)
    return v1 / gamma, v2 / gamma


def hat_v1(v1, v2):
    return v1 / np.sqrt(1.0 + v1 ** 2 + v2 ** 2)


def hat_v2(v1, v2):
    return v2 / np.sqrt(1.0 + v1 ** 2 + v2 ** 2)


def velocity_moment_matrices(space: CylinderSpace, nq: int | None = None):
    """(Nv1, Nv2) matrices I0, I1, I2 with I_w[j,l] = int w(v) z_j(v1) z_l(v2) dv
    for w = 1, vhat_1, vhat_2; contracting distribution coefficients with
    these gives the (t,x)-polynomial coefficients of the moments."""
    v1q, w1 = space.v1_basis.quad(nq)
    v2q, w2 = space.v2_basis.quad(nq)
    z1 = space.v1_basis.eval_matrix(v1q) * w1
    z2 = space.v2_basis.eval_matrix(v2q) * w2
    ones = np.ones((v1q.size, v2q.size))
    h1 = hat_v1(v1q[:, None], v2q[None, :])
    h2 = hat_v2(v1q[:, None], v2q[None, :])
    return tuple(np.einsum("ja,lb,ab->jl", z1, z2, w, optimize=True)
                 for w in (ones, h1, h2))


@dataclass
class SourceMoments:
    """Moments of one distribution history: per-slab (t,x)-coefficient
    arrays of int f dv and int vhat_i f dv, plus the background rho_b.

    The moment of a V_h function is itself a polynomial in (t, x) on each
    slab, so the coefficient representation is exact up to the velocity
    quadrature of the vhat weights; values(...) evaluates rho, j1, j2 at
    arbitrary points without any extra projection step.
    """

    space: CylinderSpace          # the phase space the history lives on
    slab_coeffs: list             # per slab: (3, nt, Nx) for (intf, j1, j2)
    rho_b: object                 # callable rho_b(x)

    def values(self, m: int, t_pts, x_pts):
        """(rho, j1, j2) on the tensor grid t_pts x x_pts of slab m."""
        tb = self.space.time_basis(m)
        xb = self.space.x_basis
        tmat = tb.eval_matrix(t_pts)
        xmat = xb.eval_matrix(x_pts)
        c = self.slab_coeffs[m - 1]
        vals = np.einsum("cpi,pt,ix->ctx", c, tmat, xmat, optimize=True)
        rho = vals[0] - self.rho_b(np.asarray(x_pts))[None, :]
        return rho, vals[1], vals[2]

    def rhs_rows(self, m: int, t_pts, x_pts):
        """The 4-vector b = (rho, -j1, -j2, 0) on the grid, shape (4, nt, nx)."""
        rho, j1, j2 = self.values(m, t_pts, x_pts)
        return np.stack([rho, -j1, -j2, np.zeros_like(rho)])


def compute_moments(dist_slabs, space: CylinderSpace, rho_b,
                    nq: int | None = None) -> SourceMoments:
    """Moments of a per-slab distribution history (list of SlabFunction)."""
    i0, i1, i2 = velocity_moment_matrices(space, nq)
    coeffs = []
    for fn in dist_slabs:
        c = fn.coeffs[0]  # (nt, Nx, Nv1, Nv2)
        coeffs.append(np.stack([
            np.einsum("pijl,jl->pi", c, i0, optimize=True),
            np.einsum("pijl,jl->pi", c, i1, optimize=True),
            np.einsum("pijl,jl->pi", c, i2, optimize=True),
        ]))
    return SourceMoments(space, coeffs, rho_b)


def moments_at_time(fn, space: CylinderSpace, rho_b, t: float, x_pts,
                    nq: int | None = None):
    """Snapshot (rho, j1, j2) of one slab function at time t on x points."""
    i0, i1, i2 = velocity_moment_matrices(space, nq)
    c = fn.coeffs[0]  # (nt, Nx, Nv1, Nv2)
    cc = np.stack([np.einsum("pijl,jl->pi", c, w, optimize=True)
                   for w in (i0, i1, i2)])
    tmat = space.time_basis(fn.m).eval_matrix(np.array([t]))
    xmat = space.x_basis.eval_matrix(x_pts)
    vals = np.einsum("cpi,pt,ix->ctx", cc, tmat, xmat)[:, 0, :]
    rho = vals[0] - rho_b(np.asarray(x_pts))
    return rho, vals[1], vals[2]


def spatial_marginal(f0, mesh, nq: int = 6):
    """Quadrature evaluator of m(x) = int f0(x, v) dv over the velocity box."""
    v1lo, v1hi = mesh.grid.v1_nodes[0], mesh.grid.v1_nodes[-1]
    v2lo, v2hi = mesh.grid.v2_nodes[0], mesh.grid.v2_nodes[-1]
    pts1, wts1 = _composite_gauss(mesh.grid.v1_nodes, nq)
    pts2, wts2 = _composite_gauss(mesh.grid.v2_nodes, nq)

    def marginal(x):
        x = np.asarray(x, dtype=float)
        vals = f0(x[..., None, None], pts1[:, None], pts2[None, :])
        return np.einsum("...ab,a,b->...", vals, wts1, wts2)

    marginal.domain = (v1lo, v1hi, v2lo, v2hi)
    return marginal


def _composite_gauss(nodes, nq):
    pts, wts = [], []
    for a, b in zip(nodes[:-1], nodes[1:]):
        p, w = gauss_points(nq, a, b)
        pts.append(p)
        wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)


def build_neutralizing_background(f0, mesh, nq: int = 6):
    """Neutralizing background with the shape of the spatial marginal of f0,
    which makes rho(0, .) vanish identically."""
    return spatial_marginal(f0, mesh, nq)


def initial_E1(rho0, mesh, nq: int = 8, tol: float = 1e-10):
    """Cumulative integral E1(x) = int_{x_min}^x rho0(y) dy.

    rho0 is the initial charge density (marginal of f0 minus rho_b); for
    neutralizing data E1 vanishes at both domain edges, and a residual
    |E1(x_max)| above tol (relative to the total variation) raises.
    """
    nodes = mesh.grid.x_nodes
    cell_pts, cell_wts = [], []
    cum = [0.0]
    for a, b in zip(nodes[:-1], nodes[1:]):
        p, w = gauss_points(nq, a, b)
        cell_pts.append(p)
        cell_wts.append(w)
        cum.append(cum[-1] + float(np.dot(w, rho0(p))))
    cum = np.array(cum)
    scale = max(np.abs(cum).max(), float(np.abs(rho0(np.concatenate(cell_pts))).max()), 1e-300)
    if abs(cum[-1]) > tol * max(scale, 1.0):
        raise NonNeutralizingError(
            f"initial charge does not integrate to zero: E1(x_max) = {cum[-1]:.3e}")

    def e1(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0,
                      nodes.size - 2)
        out = cum[idx].copy()
        # partial-cell Gauss from the left cell edge to x
        for k in range(x.size):
            a = nodes[idx[k]]
            if x[k] > a:
                p, w = gauss_points(nq, a, float(x[k]))
                out[k] += float(np.dot(w, rho0(p)))
        return out

    return e1
