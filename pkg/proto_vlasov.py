"""Throwaway prototype: free-streaming correctness + solver timing."""
import time

import numpy as np

from sdvm.fespace import CylinderSpace, SpaceSpec, tensor_contract
from sdvm.maxwell import SDParameters
from sdvm.mesh import build_uniform, refine_once
from sdvm.vlasov import build_drift, march


def bump(s, c, w, p=4):
    u = (np.asarray(s, float) - c) / w
    return np.where(np.abs(u) < 1, np.maximum(0.0, 1 - u**2) ** p, 0.0)


def f0(x, v1, v2):
    return bump(x, 1.0, 0.3) * bump(v1, 0.0, 1.8) * bump(v2, 0.0, 1.8)


def exact(t, x, v1, v2):
    vh1 = v1 / np.sqrt(1 + v1**2 + v2**2)
    return f0(x - vh1 * t, v1, v2)


def l2_error(dist, texact):
    total = 0.0
    space = dist.space
    for fn in dist.slabs:
        tb = space.time_basis(fn.m)
        tq, tw = tb.quad(2)
        quads = [ax.quad(2) for ax in space.spatial_axes]
        vals = fn.eval_grid(tq, [q[0] for q in quads])[0]
        ex = texact(tq[:, None, None, None], quads[0][0][None, :, None, None],
                    quads[1][0][None, None, :, None], quads[2][0][None, None, None, :])
        w = tw
        for q in quads:
            w = np.multiply.outer(w, q[1])
        total += ((vals - ex) ** 2 * w).sum()
    return np.sqrt(total)


params = SDParameters()
mesh = build_uniform(T=0.4, M=4, nx=8, nv=8, x_bounds=(0.0, 2.0), v_bounds=(-2.4, 2.4))
errs = []
for level in range(4):
    space = CylinderSpace(mesh, SpaceSpec(degree=1), "phase")
    drift = build_drift(None, space)
    t0 = time.time()
    res = march(space, f0, drift, params)
    dt = time.time() - t0
    err = l2_error(res.dist, exact)
    errs.append(err)
    n = (space.degree + 1) * np.prod(space.spatial_shape)
    print(f"level {level}: n/slab={n:7d} M={mesh.n_slabs:3d} "
          f"err={err:.4e} time={dt:6.1f}s mass_drift={abs(res.mass[-1]-res.initial_mass):.2e} "
          f"bflag={res.boundary_flagged}")
    if level:
        print(f"   rate: {np.log2(errs[-2] / errs[-1]):.3f}")
    mesh = refine_once(mesh)
