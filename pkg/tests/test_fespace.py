import numpy as np
import pytest

from sdvm.basis import LineBasis, gauss_points
from sdvm.errors import DomainError
from sdvm.fespace import (CylinderSpace, SpaceSpec, evaluate, interpolate_nodal,
                          project_P, project_pi, slab_norm_sq)
from sdvm.mesh import build_uniform

RNG = np.random.default_rng(20240517)


def field_space(M=2, nx=4, k=1, zero_trace=True):
    mesh = build_uniform(T=1.0, M=M, nx=nx, nv=2)
    return CylinderSpace(mesh, SpaceSpec(degree=k, zero_trace=zero_trace), "field")


def phase_space(M=1, nx=3, nv=3, k=1):
    mesh = build_uniform(T=1.0, M=M, nx=nx, nv=nv, v_bounds=(-2.0, 2.0))
    return CylinderSpace(mesh, SpaceSpec(degree=k), "phase")


# ---------------------------------------------------------------- basis

def test_quadrature_weights_positive_and_sum_to_measure():
    b = LineBasis(np.linspace(0.0, 2.0, 5), degree=2)
    pts, wts = b.quad()
    assert np.all(wts > 0)
    assert wts.sum() == pytest.approx(2.0)


def test_gauss_rule_exactness():
    pts, wts = gauss_points(3, 0.0, 1.0)
    # 3 points integrate degree-5 polynomials exactly
    assert (wts * pts**5).sum() == pytest.approx(1.0 / 6.0, abs=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_partition_of_unity(k):
    b = LineBasis(np.linspace(0.0, 1.0, 4), degree=k)
    pts = RNG.uniform(0.0, 1.0, 37)
    assert np.allclose(b.eval_matrix(pts).sum(axis=0), 1.0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_evaluation_against_monomial_oracle(k):
    # random polynomial of degree k, interpolated exactly on the nodes,
    # compared against direct monomial evaluation
    b = LineBasis(np.linspace(-1.0, 2.0, 3), degree=k)
    mono = RNG.standard_normal(k + 1)

    def poly(x):
        return sum(c * x**p for p, c in enumerate(mono))

    coeffs = b.interpolate(poly)
    pts = RNG.uniform(-1.0, 2.0, 50)
    assert np.allclose(coeffs @ b.eval_matrix(pts), poly(pts), atol=1e-11)
    dpoly = sum(p * c * pts**(p - 1) for p, c in enumerate(mono) if p >= 1)
    assert np.allclose(coeffs @ b.deriv_matrix(pts), dpoly, atol=1e-10)


def test_point_outside_domain_raises():
    b = LineBasis(np.linspace(0.0, 1.0, 3), degree=1)
    with pytest.raises(DomainError):
        b.eval_matrix(np.array([1.5]))


# ---------------------------------------------------------------- projection P

def test_projection_idempotent_on_space_members():
    space = field_space(nx=4, k=2)
    fn = space.zeros(1)
    fn.coeffs[...] = RNG.standard_normal(fn.coeffs.shape)

    def as_callable(t, x):
        return fn.eval_grid(np.ravel(t), [np.ravel(x)])[0]

    proj = project_P(as_callable, space, 1)
    assert np.allclose(proj.coeffs, fn.coeffs, atol=1e-12)


def test_projection_matches_dense_least_squares_oracle():
    # target x(1-x) on [0,1], zero-trace piecewise linears: compare the
    # projection against an independently assembled normal-equations solve
    mesh = build_uniform(T=1.0, M=1, nx=2, nv=2)
    space = CylinderSpace(mesh, SpaceSpec(degree=1), "field")

    def target(t, x):
        return x * (1.0 - x) + 0.0 * t

    proj = project_P(target, space, 1)

    axes = space.axes(1)
    tq, tw = axes[0].quad(6)
    xq, xw = axes[1].quad(6)
    tb = axes[0].eval_matrix(tq)
    xb = axes[1].eval_matrix(xq)
    # full basis cross tabulation: rows = (p,i), columns = quad pts
    basis = np.einsum("pt,ix->pitx", tb, xb).reshape(-1, tq.size * xq.size)
    w = np.outer(tw, xw).ravel()
    tgt = np.broadcast_to(target(tq[:, None], xq[None, :]),
                          (tq.size, xq.size)).ravel()
    gram = (basis * w) @ basis.T
    load = basis @ (w * tgt)
    ref = np.linalg.solve(gram, load).reshape(2, space.x_basis.n_dofs)
    assert np.allclose(proj.coeffs[0], ref, atol=1e-12)


def test_projection_orthogonality():
    space = phase_space(nx=2, nv=2, k=1)

    def target(t, x, v1, v2):
        return np.sin(np.pi * x) * np.exp(-v1**2 - 0.3 * v2**2) * (1 + t)

    proj = project_P(target, space, 1)
    axes = space.axes(1)
    quads = [ax.quad() for ax in axes]
    grids = np.ix_(*[q[0] for q in quads])
    vals = target(*grids)
    pvals = proj.eval_grid(quads[0][0], [q[0] for q in quads[1:]])[0]
    resid = vals - pvals
    w = quads[0][1]
    for q in quads[1:]:
        w = np.multiply.outer(w, q[1])
    target_norm = np.sqrt((w * vals**2).sum())
    emats = [ax.eval_matrix(q[0]) for ax, q in zip(axes, quads)]
    # <phi - P phi, u> for every basis function u
    inner = np.einsum("txyz,pt,ix,jy,lz->pijl", resid * w, *emats,
                      optimize=True)
    norms = [np.sqrt(np.diag(ax.gram())) for ax in axes]
    basis_norms = np.einsum("p,i,j,l->pijl", *norms)
    assert np.all(np.abs(inner) <= 1e-10 * target_norm * basis_norms + 1e-14)


# ---------------------------------------------------------------- projection pi

def test_pi_fixes_time_constant_functions():
    space = field_space()
    fn = space.zeros(2)
    fn.coeffs[...] = RNG.standard_normal(fn.coeffs.shape)[:, :1, :]  # const in t
    out = project_pi(fn)
    assert np.allclose(out.coeffs, fn.coeffs, atol=1e-14)


def test_pi_time_average_of_linear():
    # value a + b*t on t in (0,1] has time average a + b/2
    mesh = build_uniform(T=1.0, M=1, nx=3, nv=2)
    space = CylinderSpace(mesh, SpaceSpec(degree=1), "field")
    a, b = 0.7, -1.3
    fn = interpolate_nodal(lambda t, x: a + b * t + 0.0 * x, space, 1)
    out = project_pi(fn)
    t0 = out.eval_grid(np.array([0.3]), [np.array([0.4])])
    assert t0.ravel()[0] == pytest.approx(a + b / 2, abs=1e-13)
    assert np.allclose(project_pi(out).coeffs, out.coeffs, atol=1e-14)


def test_P_and_pi_commute():
    space = phase_space(nx=2, nv=2, k=2)

    def target(t, x, v1, v2):
        return (1 + 0.5 * t - t**3 + t**4) * np.sin(np.pi * x) * np.cos(v1) * (v2 + 2)

    p_then_pi = project_pi(project_P(target, space, 1))
    # independent route: time-average the target analytically by quadrature,
    # then project the averaged function
    tb = space.time_basis(1)
    tq, tw = tb.quad(8)

    def averaged(t, x, v1, v2):
        vals = target(tq.reshape(-1, 1, 1, 1), x, v1, v2)
        return np.tensordot(tw, vals, axes=(0, 0))[None] + 0.0 * t

    pi_then_p = project_P(averaged, space, 1)
    diff = p_then_pi.coeffs - pi_then_p.coeffs
    assert np.sqrt((diff**2).sum()) <= 1e-12 * max(1.0, np.abs(p_then_pi.coeffs).max())


# ---------------------------------------------------------------- evaluation

def test_constant_one_representable_on_free_boundary_space():
    mesh = build_uniform(T=1.0, M=1, nx=3, nv=2)
    space = CylinderSpace(mesh, SpaceSpec(degree=1, zero_trace=False), "field")
    fn = space.zeros(1)
    fn.coeffs[...] = 1.0
    pts = RNG.uniform(0.0, 1.0, 9)
    vals = fn.eval_grid(np.array([0.5]), [pts])
    assert np.allclose(vals, 1.0, atol=1e-13)


def test_trace_consistency():
    space = field_space(M=2, nx=3)
    fn = space.zeros(2, ncomp=3)
    fn.coeffs[...] = RNG.standard_normal(fn.coeffs.shape)
    t0, t1 = fn.interval
    xpts = space.x_basis.nodes
    left = fn.eval_at(t0, xpts)
    right = fn.eval_at(t1, xpts)
    tl = fn.trace_coeffs("left") @ space.x_basis.eval_matrix(xpts)
    tr = fn.trace_coeffs("right") @ space.x_basis.eval_matrix(xpts)
    assert np.allclose(left, tl, atol=1e-13)
    assert np.allclose(right, tr, atol=1e-13)


def test_evaluate_point_api():
    space = phase_space()
    fn = space.zeros(1)
    fn.coeffs[...] = RNG.standard_normal(fn.coeffs.shape)
    val = evaluate(fn, 0.5, (0.4, 0.1, -0.2))
    grid = fn.eval_grid(np.array([0.5]), [np.array([0.4]), np.array([0.1]),
                                          np.array([-0.2])])
    assert val[0] == pytest.approx(grid.ravel()[0], abs=1e-14)
    with pytest.raises(DomainError):
        evaluate(fn, 0.5, (5.0, 0.0, 0.0))


def test_norms_against_quadrature():
    space = field_space(M=3, nx=3, k=2)
    fn = space.zeros(2)
    fn.coeffs[...] = RNG.standard_normal(fn.coeffs.shape)
    axes = space.axes(2)
    quads = [ax.quad(6) for ax in axes]
    vals = fn.eval_grid(quads[0][0], [quads[1][0]])[0]
    w = np.multiply.outer(quads[0][1], quads[1][1])
    assert slab_norm_sq(fn) == pytest.approx((w * vals**2).sum(), rel=1e-12)
