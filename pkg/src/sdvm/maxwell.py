"""Slab-wise streamline-diffusion solver for the compact Maxwell system

    M1 W_t + M2 W_x = b,    W = (E1, E2, B),  b = (rho, -j1, -j2, 0).

The weak form tests the 4-component strong residual against
ghat + delta*(M1 g_t + M2 g_x), where ghat duplicates the first test
component; the Gauss-law row is part of the discrete equations.  Jumps
across slab interfaces carry the solution forward in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import TXContext, tx_jump_matrix, tx_load, tx_matrix
from .errors import ConfigurationError, SolverError
from .fespace import CylinderSpace, SlabFunction
from .mesh import SlabMesh

M1 = np.array([[0, 0, 0],
               [1, 0, 0],
               [0, 1, 0],
               [0, 0, 1]], dtype=float)

M2 = np.array([[1, 0, 0],
               [0, 0, 0],
               [0, 0, 1],
               [0, 1, 0]], dtype=float)


def hat_map(g: np.ndarray) -> np.ndarray:
    """(g1, g2, g3) -> (g1, g1, g2, g3) along the leading axis."""
    return np.concatenate([g[:1], g], axis=0)


@dataclass(frozen=True)
class SDParameters:
    """Stabilization and linear-solver knobs shared by both equations.

    delta = c_delta * h with the mesh parameter of the relevant family
    (field cylinder for Maxwell, phase-space cylinder for Vlasov).
    """

    c_delta: float = 0.5
    solver_rtol: float = 1e-10

    def __post_init__(self):
        if self.c_delta <= 0:
            raise ConfigurationError("c_delta must be positive")
        if self.solver_rtol <= 0:
            raise ConfigurationError("solver_rtol must be positive")

    def delta(self, h: float) -> float:
        return self.c_delta * h


@dataclass
class FieldTriple:
    """Discrete field history: one 3-component slab function per slab,
    plus the initial data (E1^0, E2^0, B^0) as callables of x."""

    space: CylinderSpace
    slabs: list
    initial: tuple

    @property
    def mesh(self) -> SlabMesh:
        return self.space.mesh

    def slab(self, m: int) -> SlabFunction:
        return self.slabs[m - 1]

    def slab_index_at(self, t: float) -> int:
        """Slab m with t in (t_{m-1}, t_m]; t = 0 maps to slab 1."""
        bp = self.space.mesh.time.breakpoints
        if t <= bp[0]:
            return 1
        m = int(np.searchsorted(bp, t, side="left"))
        return min(m, self.space.mesh.n_slabs)

    def eval_at(self, t: float, x, deriv: int = -1) -> np.ndarray:
        """(E1, E2, B) values (3, npts) at time t; inside a slab this is the
        slab polynomial, at interfaces the left trace of the earlier slab."""
        return self.slab(self.slab_index_at(t)).eval_at(t, x, deriv=deriv)

    def initial_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
                         for f in self.initial])


# trial rows: PDE row r -> list of (component, slot) entries, where slot
# 0/1/2 means plain / d_t / d_x basis factors
_TRIAL_ROWS = (
    ((0, 2),),            # row 0: dx E1
    ((0, 1),),            # row 1: dt E1
    ((1, 1), (2, 2)),     # row 2: dt E2 + dx B
    ((2, 1), (1, 2)),     # row 3: dt B + dx E2
)


def _test_rows(delta: float):
    """Test rows: PDE row r -> list of (test component, slot, scale) from
    ghat + delta*(M1 g_t + M2 g_x)."""
    return (
        ((0, 0, 1.0), (0, 2, delta)),
        ((0, 0, 1.0), (0, 1, delta)),
        ((1, 0, 1.0), (1, 1, delta), (2, 2, delta)),
        ((2, 0, 1.0), (2, 1, delta), (1, 2, delta)),
    )


class MaxwellSlabSystem:
    """Assembled SD system for one slab: dense matrix plus rhs builder."""

    def __init__(self, space: CylinderSpace, m: int, delta: float):
        self.space = space
        self.m = m
        self.delta = delta
        self.ctx = TXContext(space, m)
        ntx = self.ctx.nt * self.ctx.nx
        self.ntx = ntx
        a = np.zeros((3, ntx, 3, ntx))
        for trial_entries, test_entries in zip(_TRIAL_ROWS, _test_rows(delta)):
            for (c_tr, s_tr) in trial_entries:
                for (c_te, s_te, scale) in test_entries:
                    a[c_te, :, c_tr, :] += scale * tx_matrix(
                        self.ctx, s_te, s_tr)
        jump = tx_jump_matrix(self.ctx)
        for c in range(3):
            a[c, :, c, :] += jump
        self.matrix = a.reshape(3 * ntx, 3 * ntx)
        self._lu = None

    def rhs(self, b_rows, w_in) -> np.ndarray:
        """b_rows: (4, ntq, nxq) source values at the quadrature grid or None;
        w_in: incoming trace, either ('coeffs', (3, Nx)) or ('callables',
        (E1,E2,B))."""
        out = np.zeros((3, self.ntx))
        if b_rows is not None:
            for r, test_entries in enumerate(_test_rows(self.delta)):
                if not np.any(b_rows[r]):
                    continue
                for (c_te, s_te, scale) in test_entries:
                    out[c_te] += scale * tx_load(self.ctx, b_rows[r], s_te)
        kind, data = w_in
        if kind == "coeffs":
            spatial = self.ctx.x_gram @ np.asarray(data).T  # (Nx, 3)
            for c in range(3):
                out[c] += np.outer(self.ctx.t_left, spatial[:, c]).reshape(-1)
        else:
            xq, xw = self.ctx.xq, self.ctx.xw
            for c, fn in enumerate(data):
                vals = np.broadcast_to(np.asarray(fn(xq), dtype=float), xq.shape)
                load = self.ctx.Xv @ (xw * vals)
                out[c] += np.outer(self.ctx.t_left, load).reshape(-1)
        return out.reshape(-1)

    def solve(self, rhs: np.ndarray, rtol: float) -> np.ndarray:
        try:
            if self._lu is None:
                self._lu = scipy.linalg.lu_factor(self.matrix)
            x = scipy.linalg.lu_solve(self._lu, rhs)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise ConfigurationError(
                f"singular field system on slab {self.m}: {exc}") from exc
        scale = np.linalg.norm(rhs)
        resid = np.linalg.norm(self.matrix @ x - rhs)
        if scale > 0 and resid > rtol * scale:
            raise SolverError(
                f"field solve on slab {self.m}: relative residual "
                f"{resid / scale:.2e} above {rtol:.1e}")
        return x


def assemble_slab(space: CylinderSpace, m: int, params: SDParameters,
                  delta: float | None = None) -> MaxwellSlabSystem:
    d = params.delta(space.mesh.h_field) if delta is None else delta
    return MaxwellSlabSystem(space, m, d)


def march(space: CylinderSpace, initial, sources, params: SDParameters,
          boundary_tol: float = 1e-8) -> FieldTriple:
    """Sequential slab solves over the whole cylinder.

    initial: (E1^0, E2^0, B^0) callables; sources: object with
    rhs_rows(m, tq, xq) -> (4, ntq, nxq) or None for a source-free run.
    """
    slabs = []
    w_in = ("callables", initial)
    nt = space.degree + 1
    boundary_flags = []
    for m in range(1, space.mesh.n_slabs + 1):
        sys_m = assemble_slab(space, m, params)
        b_rows = None
        if sources is not None:
            b_rows = sources.rhs_rows(m, sys_m.ctx.tq, sys_m.ctx.xq)
        x = sys_m.solve(sys_m.rhs(b_rows, w_in), params.solver_rtol)
        fn = SlabFunction(space, m, x.reshape(3, nt, sys_m.ctx.nx))
        slabs.append(fn)
        w_in = ("coeffs", fn.trace_coeffs("right"))
        boundary_flags.append(_boundary_energy_flag(fn, boundary_tol))
    hist = FieldTriple(space, slabs, tuple(initial))
    hist.boundary_flagged = bool(np.any(boundary_flags))
    return hist


def _boundary_energy_flag(fn: SlabFunction, tol: float) -> bool:
    """True when the field carries mass in the cells next to the x boundary
    (the compact-support assumption is then violated)."""
    xb = fn.space.x_basis
    edges = xb.edges
    tq, _ = fn.space.time_basis(fn.m).quad()
    cells = [(edges[0], edges[1]), (edges[-2], edges[-1])]
    total = np.abs(fn.coeffs).max()
    if total == 0:
        return False
    for a, b in cells:
        pts = np.linspace(a, b, 5)
        vals = fn.eval_grid(tq, [pts])
        if np.abs(vals).max() > tol * total:
            return True
    return False


def gauss_law_residual(fields: FieldTriple, sources) -> np.ndarray:
    """Per-slab L2(S_m) norm of dx E1^h - rho^h (constraint monitor)."""
    out = []
    for m in range(1, fields.mesh.n_slabs + 1):
        ctx = TXContext(fields.space, m)
        fn = fields.slab(m)
        de1 = fn.eval_grid(ctx.tq, [ctx.xq], deriv=1)[0]
        rho = sources.values(m, ctx.tq, ctx.xq)[0] if sources is not None \
            else np.zeros_like(de1)
        out.append(np.sqrt((ctx.w2d * (de1 - rho) ** 2).sum()))
    return np.array(out)
