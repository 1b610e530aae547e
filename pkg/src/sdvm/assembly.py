"""Shared (t,x)-plane assembly helpers for the slab-wise SD systems.

Both the field and the phase-space solvers build their slab operators
from weighted inner products of tensor basis factors over the slab's
(t, x) quadrature grid; everything here is small and dense.
"""

from __future__ import annotations

import numpy as np

from .fespace import CylinderSpace


class TXContext:
    """Quadrature grid and basis tabulations on slab m for one space.

    Attributes
    ----------
    tq, tw : time Gauss points/weights on the slab
    xq, xw : per-cell Gauss points/weights over Omega_x
    Tv, Td : time basis values/derivatives, (nt_dofs, ntq)
    Xv, Xd : x basis values/derivatives, (Nx, nxq)
    """

    def __init__(self, space: CylinderSpace, m: int, nq: int | None = None):
        self.space = space
        self.m = m
        tb = space.time_basis(m)
        nq = nq if nq is not None else space.degree + 2
        self.tq, self.tw = tb.quad(nq)
        self.xq, self.xw = space.x_basis.quad(nq)
        self.Tv = tb.eval_matrix(self.tq)
        self.Td = tb.deriv_matrix(self.tq)
        self.Xv = space.x_basis.eval_matrix(self.xq)
        self.Xd = space.x_basis.deriv_matrix(self.xq)
        self.t_left = tb.endpoint_values("left")
        self.x_gram = space.x_basis.gram()
        self.w2d = np.multiply.outer(self.tw, self.xw)

    @property
    def nt(self) -> int:
        return self.Tv.shape[0]

    @property
    def nx(self) -> int:
        return self.Xv.shape[0]

    def slot(self, which: int) -> tuple[np.ndarray, np.ndarray]:
        """Basis factor pair for a derivative slot: 0 plain, 1 d/dt, 2 d/dx."""
        return ((self.Tv, self.Xv), (self.Td, self.Xv), (self.Tv, self.Xd))[which]


def tx_matrix(ctx: TXContext, te_slot: int, tr_slot: int,
              weight=None) -> np.ndarray:
    """Matrix of int_slab w(t,x) (D_te theta_q xi_a)(D_tr theta_p xi_i),
    flattened to ((q,a), (p,i)) with the time index major."""
    T_te, X_te = ctx.slot(te_slot)
    T_tr, X_tr = ctx.slot(tr_slot)
    w = ctx.w2d if weight is None else ctx.w2d * weight
    ntq = ctx.tq.size
    tai = np.empty((ntq, X_te.shape[0], X_tr.shape[0]))
    for t in range(ntq):
        tai[t] = (X_te * w[t]) @ X_tr.T
    mat = np.einsum("qt,pt,tai->qapi", T_te, T_tr, tai, optimize=True)
    n_te = T_te.shape[0] * X_te.shape[0]
    n_tr = T_tr.shape[0] * X_tr.shape[0]
    return mat.reshape(n_te, n_tr)


def tx_jump_matrix(ctx: TXContext) -> np.ndarray:
    """<w_+, g_+> at the slab's left interface, ((q,a),(p,i)) layout."""
    mat = np.einsum("q,p,ai->qapi", ctx.t_left, ctx.t_left, ctx.x_gram)
    n = ctx.nt * ctx.nx
    return mat.reshape(n, n)


def tx_load(ctx: TXContext, values: np.ndarray, te_slot: int) -> np.ndarray:
    """Load vector int_slab values(t,x) (D_te theta_q xi_a), shape (nt*Nx,)."""
    T_te, X_te = ctx.slot(te_slot)
    w = ctx.w2d * values
    return np.einsum("qt,ax,tx->qa", T_te, X_te, w,
                     optimize=True).reshape(-1)
