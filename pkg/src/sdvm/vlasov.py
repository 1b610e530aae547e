"""Slab-wise streamline-diffusion solver for the Vlasov equation

    f_t + G . grad f = 0,   G = (vhat1, E1 + vhat2 B, E2 - vhat1 B),

with the drift frozen from a given field history.  Every term of the SD
bilinear form factorizes into a (t,x)-plane matrix times a weighted
velocity-plane matrix, so slab operators are stored as short sums of
Kronecker pairs.  Small systems are materialized and solved directly;
the large drift-free systems (no velocity derivatives in G) are solved
matrix-free by GMRES preconditioned in the eigenbasis of the velocity
mass pencil (M[vhat1], M[1]), which block-diagonalizes everything except
an O(h^2) coupling from the vhat1^2 weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import TXContext, tx_jump_matrix, tx_matrix
from .errors import ConfigurationError, SolverError
from .fespace import CylinderSpace, SlabFunction, tensor_contract
from .maxwell import FieldTriple, SDParameters

DIRECT_MAX_UNKNOWNS = 400_000
PENCIL_THRESHOLD = 20_000


# --------------------------------------------------------------- drift

@dataclass
class DriftField:
    """Drift coefficient G for one iteration: field history (or None for
    free streaming) plus the recorded sup norm |G|_{L_inf(Q_T)}."""

    space: CylinderSpace
    fields: FieldTriple | None
    g_sup: float

    def tx_values(self, m: int, tq, xq):
        """(E1, E2, B) arrays of shape (ntq, nxq) on slab m, or None when
        the fields vanish identically."""
        if self.fields is None:
            return None
        vals = self.fields.slab(m).eval_grid(tq, [xq])
        return vals[0], vals[1], vals[2]


def _hat_grids(space: CylinderSpace, nq=None):
    v1q, w1 = space.v1_basis.quad(nq)
    v2q, w2 = space.v2_basis.quad(nq)
    h1 = v1q[:, None] / np.sqrt(1.0 + v1q[:, None] ** 2 + v2q[None, :] ** 2)
    h2 = v2q[None, :] / np.sqrt(1.0 + v1q[:, None] ** 2 + v2q[None, :] ** 2)
    return (v1q, w1, v2q, w2, h1, h2)


def build_drift(fields: FieldTriple | None, space: CylinderSpace) -> DriftField:
    """Evaluate the drift built from a Maxwell history (fields of the
    current iteration) and record its sup norm over the quadrature points."""
    _, _, _, _, h1, h2 = _hat_grids(space)
    if fields is None:
        return DriftField(space, None, float(np.abs(h1).max()))
    g_sup = 0.0
    for m in range(1, space.mesh.n_slabs + 1):
        ctx = TXContext(space, m)
        e1, e2, b = (arr.ravel() for arr in
                     fields.slab(m).eval_grid(ctx.tq, [ctx.xq]))
        hf1, hf2 = h1.ravel(), h2.ravel()
        for lo in range(0, e1.size, 64):
            sl = slice(lo, lo + 64)
            g2 = (hf1[None, :] ** 2
                  + (e1[sl, None] + b[sl, None] * hf2[None, :]) ** 2
                  + (e2[sl, None] - b[sl, None] * hf1[None, :]) ** 2)
            g_sup = max(g_sup, float(g2.max()))
    return DriftField(space, fields, np.sqrt(g_sup))


def drift_divergence_terms(fields: FieldTriple | None, t, x, v1, v2):
    """Chain-rule evaluation of div G = d_x vhat1 + d_v1(E1 + vhat2 B)
    + d_v2(E2 - vhat1 B); the two velocity terms cancel pointwise because
    d_v1 vhat2 = d_v2 vhat1.  Returns (term_x, term_v1, term_v2)."""
    v1, v2 = np.asarray(v1, float), np.asarray(v2, float)
    gam3 = (1.0 + v1 ** 2 + v2 ** 2) ** 1.5
    dv1_hat2 = -v1 * v2 / gam3
    dv2_hat1 = -v1 * v2 / gam3
    if fields is None:
        b = np.zeros_like(v1)
    else:
        b = fields.eval_at(t, np.broadcast_to(np.asarray(x, float), v1.shape).ravel())[2]
        b = b.reshape(v1.shape)
    return np.zeros_like(v1), b * dv1_hat2, -b * dv2_hat1


# ------------------------------------------------- velocity-plane matrices

class VelocityPlane:
    """Weighted velocity mass/derivative matrices, assembled element-wise.

    matrix(key) with key = (d_test, d_trial, e1, e2) returns the csr matrix
    of int vhat1^e1 vhat2^e2 (D_test zeta_b zeta_c)(D_trial zeta_j zeta_l)
    where D in {0: none, 1: d/dv1, 2: d/dv2}.
    """

    def __init__(self, space: CylinderSpace, nq: int | None = None):
        self.space = space
        k = space.degree
        nq = nq if nq is not None else k + 2
        self._cache: dict = {}
        b1, b2 = space.v1_basis, space.v2_basis
        self.n1, self.n2 = b1.n_dofs, b2.n_dofs
        self.nv = self.n1 * self.n2
        u1, wr1, z1, zd1 = b1.local_reference(nq)
        u2, wr2, z2, zd2 = b2.local_reference(nq)
        h1, h2 = b1.cell_sizes(), b2.cell_sizes()
        self._w1 = wr1[None, :] * h1[:, None]          # (ncells1, nq)
        self._w2 = wr2[None, :] * h2[:, None]
        pts1 = b1.edges[:-1, None] + h1[:, None] * u1[None, :]
        pts2 = b2.edges[:-1, None] + h2[:, None] * u2[None, :]
        gam = np.sqrt(1.0 + pts1.ravel()[:, None] ** 2 + pts2.ravel()[None, :] ** 2)
        self._hat1 = (pts1.ravel()[:, None] / gam).reshape(
            h1.size, nq, h2.size, nq)
        self._hat2 = (pts2.ravel()[None, :] / gam).reshape(
            h1.size, nq, h2.size, nq)
        # local factors: [deriv?][cell, local dof, qpt]
        nc1, nc2 = h1.size, h2.size
        self._f1 = (np.broadcast_to(z1, (nc1,) + z1.shape),
                    zd1[None, :, :] / h1[:, None, None])
        self._f2 = (np.broadcast_to(z2, (nc2,) + z2.shape),
                    zd2[None, :, :] / h2[:, None, None])
        self._idx1, self._mask1 = b1.cell_dof_indices()
        self._idx2, self._mask2 = b2.cell_dof_indices()
        self.gram1 = b1.gram()
        self.gram2 = b2.gram()
        self.int1 = b1.integrals()
        self.int2 = b2.integrals()

    def matrix(self, key) -> sp.csr_matrix:
        if key in self._cache:
            return self._cache[key]
        d_te, d_tr, e1, e2 = key
        w = self._w1[:, :, None, None] * self._w2[None, None, :, :]
        if e1:
            w = w * self._hat1 ** e1
        if e2:
            w = w * self._hat2 ** e2
        f1_tr = self._f1[1] if d_tr == 1 else self._f1[0]
        f1_te = self._f1[1] if d_te == 1 else self._f1[0]
        f2_tr = self._f2[1] if d_tr == 2 else self._f2[0]
        f2_te = self._f2[1] if d_te == 2 else self._f2[0]
        t1 = np.einsum("apbq,ajp,aBp->abjBq", w, f1_tr, f1_te, optimize=True)
        loc = np.einsum("abjBq,blq,bCq->ajbl BC".replace(" ", ""),
                        t1, f2_tr, f2_te, optimize=True)
        # loc[a, j, b, l, B, C]: cells (a,b), trial locals (j,l), test (B,C)
        a, j, b, l = loc.shape[:4]
        rows = (self._idx1[:, None, None, None, :, None] * self.n2
                + self._idx2[None, None, :, None, None, :])
        cols = (self._idx1[:, :, None, None, None, None] * self.n2
                + self._idx2[None, None, :, :, None, None])
        valid = (self._mask1[:, None, None, None, :, None]
                 & self._mask2[None, None, :, None, None, :]
                 & self._mask1[:, :, None, None, None, None]
                 & self._mask2[None, None, :, :, None, None])
        rows = np.broadcast_to(rows, loc.shape)[valid]
        cols = np.broadcast_to(cols, loc.shape)[valid]
        mat = sp.csr_matrix((loc[valid], (rows, cols)),
                            shape=(self.nv, self.nv))
        mat.sum_duplicates()
        self._cache[key] = mat
        return mat


def velocity_plane(space: CylinderSpace) -> VelocityPlane:
    vp = getattr(space, "_velocity_plane", None)
    if vp is None:
        vp = VelocityPlane(space)
        space._velocity_plane = vp
    return vp


# ----------------------------------------------------------- slab operator

def build_slab_terms(space: CylinderSpace, m: int, drift: DriftField,
                     delta: float):
    """SD bilinear form of one slab as {key: TX matrix} with key the
    velocity-plane matrix selector."""
    ctx = TXContext(space, m)
    elems = [(1, 0, None, (0, 0)),      # w_t
             (2, 0, None, (1, 0))]      # vhat1 w_x
    dv = drift.tx_values(m, ctx.tq, ctx.xq)
    if dv is not None:
        e1v, e2v, bv = dv
        elems += [(0, 1, e1v, (0, 0)), (0, 1, bv, (0, 1)),
                  (0, 2, e2v, (0, 0)), (0, 2, -bv, (1, 0))]
    acc: dict = {}

    def add(key, mat):
        acc[key] = acc[key] + mat if key in acc else mat

    for ts, vs, w, vk in elems:                      # (Lw, g)
        add((0, vs, vk[0], vk[1]), tx_matrix(ctx, 0, ts, w))
    for ts_t, vs_t, w_t, vk_t in elems:              # delta (Lw, Lg)
        for ts_s, vs_s, w_s, vk_s in elems:
            w = delta if w_t is None else delta * w_t
            if w_s is not None:
                w = w * w_s
            add((vs_s, vs_t, vk_t[0] + vk_s[0], vk_t[1] + vk_s[1]),
                tx_matrix(ctx, ts_s, ts_t, w))
    add((0, 0, 0, 0), tx_jump_matrix(ctx))
    return ctx, {k: acc[k] for k in sorted(acc)}


class VlasovSlabSystem:
    """Kron-structured slab system with direct and pencil-GMRES backends."""

    def __init__(self, space: CylinderSpace, m: int, terms: dict,
                 vplane: VelocityPlane):
        self.space = space
        self.m = m
        self.keys = sorted(terms)
        self.tx = [terms[k] for k in self.keys]
        self.vv = [vplane.matrix(k) for k in self.keys]
        self.ntx = self.tx[0].shape[0]
        self.nv = vplane.nv
        self.n = self.ntx * self.nv
        self._splu = None
        self._pencil = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Operator action on coefficients shaped (ntx, nv)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.zeros(x.shape, dtype=np.float64)
        for tx, vv in zip(self.tx, self.vv):
            y += tx @ (vv @ x.T).T
        return y

    def pencil_eligible(self) -> bool:
        return all(k[0] == 0 and k[1] == 0 and k[3] == 0 and k[2] <= 2
                   for k in self.keys)

    def residual(self, x, rhs) -> float:
        return float(np.linalg.norm(self.apply(x) - rhs))

    # direct backend

    def _materialize(self) -> sp.csr_matrix:
        a = None
        for tx, vv in zip(self.tx, self.vv):
            term = sp.kron(sp.csr_matrix(tx), vv, format="csr")
            a = term if a is None else a + term
        return a

    def _solve_direct(self, rhs: np.ndarray) -> np.ndarray:
        if self.n > DIRECT_MAX_UNKNOWNS:
            raise ConfigurationError(
                f"phase-space slab system with {self.n} unknowns exceeds the "
                "direct-solver limit and has no structured backend")
        if self._splu is None:
            try:
                self._splu = spla.splu(self._materialize().tocsc())
            except RuntimeError as exc:
                raise ConfigurationError(
                    f"singular phase-space system on slab {self.m}: {exc}") from exc
        return self._splu.solve(rhs.ravel()).reshape(rhs.shape)

    # pencil backend

    def _setup_pencil(self):
        byk = dict(zip(self.keys, self.tx))
        tx0 = byk.get((0, 0, 0, 0), 0.0)
        tx1 = byk.get((0, 0, 1, 0), 0.0)
        tx2 = byk.get((0, 0, 2, 0), 0.0)
        vv = dict(zip(self.keys, self.vv))
        v1 = vv[(0, 0, 0, 0)].toarray().astype(np.float32)
        va = vv[(0, 0, 1, 0)].toarray().astype(np.float32)
        vb = vv.get((0, 0, 2, 0))
        mu, z = scipy.linalg.eigh(va, v1)
        if vb is not None:
            sdiag = np.einsum("vr,vr->r", z, vb.astype(np.float32) @ z)
        else:
            sdiag = np.zeros_like(mu)
        blocks = (np.asarray(tx0, np.float32)[None, :, :]
                  + mu[:, None, None] * np.asarray(tx1, np.float32)
                  + sdiag[:, None, None] * np.asarray(tx2, np.float32))
        binv = np.linalg.inv(blocks)
        self._pencil = (z, binv)

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        z, binv = self._pencil
        rh = r.astype(np.float32) @ z
        xh = np.matmul(binv, rh.T[:, :, None])[:, :, 0].T
        return (xh @ z.T).astype(np.float64)

    def _solve_pencil(self, rhs: np.ndarray, rtol: float) -> np.ndarray:
        if self._pencil is None:
            self._setup_pencil()
        shape = rhs.shape
        op = spla.LinearOperator(
            (self.n, self.n),
            matvec=lambda v: self.apply(v.reshape(shape)).ravel())
        pre = spla.LinearOperator(
            (self.n, self.n),
            matvec=lambda v: self._precondition(v.reshape(shape)).ravel())
        b = rhs.ravel()
        bnorm = np.linalg.norm(b)
        x = np.zeros_like(b)
        for _ in range(4):
            x, _ = spla.gmres(op, b, x0=x, M=pre, rtol=1e-13, atol=0.0,
                              restart=60, maxiter=240)
            if np.linalg.norm(b - op @ x) <= rtol * bnorm:
                return x.reshape(shape)
        raise SolverError(
            f"pencil GMRES stalled on slab {self.m}; relative residual "
            f"{np.linalg.norm(b - op @ x) / bnorm:.2e}")

    def solve(self, rhs: np.ndarray, params: SDParameters) -> np.ndarray:
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if self.pencil_eligible() and self.n > PENCIL_THRESHOLD:
            x = self._solve_pencil(rhs, params.solver_rtol)
        else:
            x = self._solve_direct(rhs)
        scale = np.linalg.norm(rhs)
        resid = self.residual(x, rhs)
        if resid > params.solver_rtol * scale:
            raise SolverError(
                f"phase-space solve on slab {self.m}: relative residual "
                f"{resid / scale:.2e} above {params.solver_rtol:.1e}")
        return x


def assemble_slab(space: CylinderSpace, m: int, drift: DriftField,
                  params: SDParameters) -> VlasovSlabSystem:
    delta = params.delta(space.mesh.h)
    _, terms = build_slab_terms(space, m, drift, delta)
    return VlasovSlabSystem(space, m, terms, velocity_plane(space))


# ------------------------------------------------------------------ march

@dataclass
class DistributionField:
    """Discrete distribution history plus its initial datum."""

    space: CylinderSpace
    slabs: list
    f0: object

    @property
    def mesh(self):
        return self.space.mesh

    def slab(self, m: int) -> SlabFunction:
        return self.slabs[m - 1]


@dataclass
class VlasovResult:
    dist: DistributionField
    mass: np.ndarray                  # int f at each slab end
    boundary_mass: np.ndarray         # |f| mass in the outermost v cells
    boundary_flagged: bool
    undershoot: np.ndarray            # most negative nodal value per slab
    initial_mass: float


def _initial_load(space: CylinderSpace, ctx: TXContext, f0) -> np.ndarray:
    v1q, w1 = space.v1_basis.quad()
    v2q, w2 = space.v2_basis.quad()
    vals = np.asarray(f0(ctx.xq[:, None, None], v1q[None, :, None],
                         v2q[None, None, :]), dtype=float)
    vals = np.broadcast_to(vals, (ctx.xq.size, v1q.size, v2q.size)).copy()
    vals *= ctx.xw[:, None, None] * w1[None, :, None] * w2[None, None, :]
    mats = [space.x_basis.eval_matrix(ctx.xq),
            space.v1_basis.eval_matrix(v1q),
            space.v2_basis.eval_matrix(v2q)]
    return tensor_contract(vals, mats)


def _slab_rhs(space: CylinderSpace, ctx: TXContext, vplane: VelocityPlane,
              f_in) -> np.ndarray:
    kind, data = f_in
    if kind == "coeffs":
        spatial = tensor_contract(data, [ctx.x_gram, vplane.gram1,
                                         vplane.gram2])
    else:
        spatial = _initial_load(space, ctx, data)
    nx = spatial.shape[0]
    flat = spatial.reshape(nx, -1)
    return np.einsum("q,an->qan", ctx.t_left, flat).reshape(
        ctx.nt * nx, -1)


def march(space: CylinderSpace, f0, drift: DriftField, params: SDParameters,
          boundary_tol: float = 1e-8) -> VlasovResult:
    """Sequential slab solves of the SD Vlasov system over the cylinder."""
    vplane = velocity_plane(space)
    delta = params.delta(space.mesh.h)
    slab_lengths = space.mesh.time.slab_lengths()
    uniform_reuse = drift.fields is None
    cached: dict = {}
    slabs = []
    f_in = ("callable", f0)
    mass, bmass, undershoot = [], [], []
    ix = space.x_basis.integrals()
    for m in range(1, space.mesh.n_slabs + 1):
        key = round(float(slab_lengths[m - 1]), 14)
        if uniform_reuse and key in cached:
            system = cached[key]
            ctx = system._ctx
        else:
            ctx, terms = build_slab_terms(space, m, drift, delta)
            system = VlasovSlabSystem(space, m, terms, vplane)
            system._ctx = ctx
            if uniform_reuse:
                cached[key] = system
        rhs = _slab_rhs(space, ctx, vplane, f_in)
        x = system.solve(rhs, params)
        fn = SlabFunction(
            space, m, x.reshape(1, ctx.nt, ctx.nx, vplane.n1, vplane.n2))
        slabs.append(fn)
        trace = fn.trace_coeffs("right")[0]
        f_in = ("coeffs", trace)
        mass.append(float(np.einsum("ijl,i,j,l->", trace, ix, vplane.int1,
                                    vplane.int2)))
        bmass.append(_boundary_layer_mass(fn))
        undershoot.append(min(0.0, float(fn.coeffs.min())))
    dist = DistributionField(space, slabs, f0)
    init_mass = _initial_mass(space, f0)
    flag = bool(np.any(np.asarray(bmass) >
                       boundary_tol * max(abs(init_mass), 1e-300)))
    return VlasovResult(dist, np.asarray(mass), np.asarray(bmass), flag,
                        np.asarray(undershoot), init_mass)


def _initial_mass(space: CylinderSpace, f0) -> float:
    xq, xw = space.x_basis.quad()
    v1q, w1 = space.v1_basis.quad()
    v2q, w2 = space.v2_basis.quad()
    vals = np.abs(np.asarray(f0(xq[:, None, None], v1q[None, :, None],
                                v2q[None, None, :]), dtype=float))
    vals = np.broadcast_to(vals, (xq.size, v1q.size, v2q.size))
    return float(np.einsum("xab,x,a,b->", vals, xw, w1, w2))


def _boundary_layer_mass(fn: SlabFunction) -> float:
    """|f| mass within one cell layer of the velocity boundary at the
    slab's right trace."""
    space = fn.space
    t1 = fn.interval[1]
    xq, xw = space.x_basis.quad()
    v1q, w1 = space.v1_basis.quad()
    v2q, w2 = space.v2_basis.quad()
    nq = space.degree + 2
    lay1 = np.zeros(v1q.size, dtype=bool)
    lay1[:nq] = lay1[-nq:] = True
    lay2 = np.zeros(v2q.size, dtype=bool)
    lay2[:nq] = lay2[-nq:] = True

    def integrate(sel1, sel2):
        if not sel1.any() or not sel2.any():
            return 0.0
        vals = fn.eval_grid(np.array([t1]), [xq, v1q[sel1], v2q[sel2]])[0, 0]
        return float(np.einsum("xab,x,a,b->", np.abs(vals), xw,
                               w1[sel1], w2[sel2]))

    # disjoint decomposition: (layer v1, all v2) + (inner v1, layer v2)
    return integrate(lay1, np.ones_like(lay2)) + integrate(~lay1, lay2)
