"""Analytic and semi-analytic solutions of the dual problems, used as
independent verification targets.

The field dual  -M1^T phihat_t - M2^T phihat_x = chi, phi(T,.) = 0
decouples into transport equations along x +- t and is solved in closed
form by line integrals (d'Alembert); the phase-space dual is solved by
backward/forward characteristic tracing with the full sensitivity
(Jacobian) system, whose growth is certified against the exponential
Gronwall envelopes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .basis import gauss_points
from .errors import ConfigurationError
from .maxwell import FieldTriple

__all__ = [
    "MaxwellDualData", "dual_maxwell_dalembert", "dual_stability_check",
    "wave_forward_solution", "integrate_characteristics",
    "gronwall_certificate", "dual_vlasov", "CharacteristicPath",
]


# ------------------------------------------------------------- field dual

@dataclass
class MaxwellDualData:
    """Source chi = (chi1, chi2, chi3) over the field cylinder, with the
    x-partials needed by the stability checks; every callable must return
    zero outside the compact support (extension by zero)."""

    chi: tuple
    chi_dx: tuple
    T: float
    x_bounds: tuple


def _line_integral(fn, t, x, T, direction, n_panels=48, nq=8):
    """int_t^T fn(s, x + direction*(s - t)) ds, vectorized over x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if T <= t:
        return np.zeros_like(x)
    out = np.zeros_like(x)
    edges = np.linspace(t, T, n_panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        s, w = gauss_points(nq, a, b)
        vals = fn(s[:, None], x[None, :] + direction * (s[:, None] - t))
        out += w @ np.asarray(vals, dtype=float)
    return out


def dual_maxwell_dalembert(data: MaxwellDualData, t: float, x,
                           n_panels=48, nq=8, _flip_phi2_sign=False):
    """(phi1, phi2, phi3) at time t and points x by the closed-form line
    integrals; `_flip_phi2_sign` is a test-only mutation hook that breaks
    the backward-moving part of phi2."""
    chi1, chi2, chi3 = data.chi
    T = data.T

    def plus(s, y):
        return np.asarray(chi2(s, y), dtype=float) + np.asarray(chi3(s, y), dtype=float)

    def minus(s, y):
        return np.asarray(chi2(s, y), dtype=float) - np.asarray(chi3(s, y), dtype=float)

    phi1 = _line_integral(chi1, t, x, T, +1, n_panels, nq)
    fwd = _line_integral(plus, t, x, T, +1, n_panels, nq)
    bwd = _line_integral(minus, t, x, T, -1, n_panels, nq)
    sign = -1.0 if _flip_phi2_sign else 1.0
    phi2 = 0.5 * (fwd + sign * bwd)
    phi3 = 0.5 * (fwd - bwd)
    return phi1, phi2, phi3


def dual_pde_residual(data: MaxwellDualData, t, x, h=2e-3, **kw):
    """Finite-difference residual of -M1^T phihat_t - M2^T phihat_x = chi
    at scattered points, using 5-point stencils in t and x.  Returns the
    (3, npts) residual array."""
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def phi(tt, xx):
        return np.stack(dual_maxwell_dalembert(data, tt, xx, **kw))

    c = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)
    off = (-2.0, -1.0, 1.0, 2.0)
    dpdt = sum(ci * phi(t + oi * h, x) for ci, oi in zip(c, off)) / h
    dpdx = sum(ci * phi(t, x + oi * h) for ci, oi in zip(c, off)) / h
    chi_vals = np.stack([np.asarray(f(t, x), dtype=float) for f in data.chi])
    resid = np.empty_like(chi_vals)
    resid[0] = -dpdt[0] - dpdx[0] - chi_vals[0]
    resid[1] = -dpdt[1] - dpdx[2] - chi_vals[1]
    resid[2] = -dpdt[2] - dpdx[1] - chi_vals[2]
    return resid


@dataclass
class DualStabilityReport:
    ratio_dx_phi1: float          # <= T
    ratio_l2_phi1: float          # <= sqrt(T) e^{T/2}
    ratio_l2_phi23: float         # <= sqrt(T) e^{T/2}
    ratio_h1: float               # reported constant, unasserted
    bound_dx: float
    bound_l2: float
    passed: bool


def dual_stability_check(data: MaxwellDualData, nt=20, nx=48, tol=1e-8,
                         _flip_phi2_sign=False) -> DualStabilityReport:
    """Verify the dual stability constants on one source chi by tensor
    quadrature over the cylinder: the phi1 x-derivative bound with
    constant exactly T, and the L2 bounds with constant sqrt(T) e^{T/2}."""
    T = data.T
    a, b = data.x_bounds
    tq, tw = gauss_points(nt, 0.0, T)
    xq, xw = gauss_points(nx, a, b)

    phi = np.zeros((3, nt, nx))
    dphi_dx = np.zeros((3, nt, nx))
    for i, t in enumerate(tq):
        phi[:, i, :] = np.stack(dual_maxwell_dalembert(
            data, t, xq, _flip_phi2_sign=_flip_phi2_sign))
        dx_data = MaxwellDualData(data.chi_dx, data.chi_dx, T, data.x_bounds)
        dphi_dx[:, i, :] = np.stack(dual_maxwell_dalembert(
            dx_data, t, xq, _flip_phi2_sign=_flip_phi2_sign))
    chi_vals = np.stack([np.stack([np.asarray(f(t, xq), dtype=float)
                                   for t in tq]) for f in data.chi])
    chidx_vals = np.stack([np.stack([np.asarray(f(t, xq), dtype=float)
                                     for t in tq]) for f in data.chi_dx])
    # time derivatives from the dual PDE itself (exact relations)
    dphi_dt = np.empty_like(phi)
    dphi_dt[0] = -chi_vals[0] - dphi_dx[0]
    dphi_dt[1] = -chi_vals[1] - dphi_dx[2]
    dphi_dt[2] = -chi_vals[2] - dphi_dx[1]

    w = np.multiply.outer(tw, xw)

    def norm(v):
        return float(np.sqrt((w * v ** 2).sum()))

    n_dx_phi1, n_dx_chi1 = norm(dphi_dx[0]), norm(chidx_vals[0])
    n_phi1, n_chi1 = norm(phi[0]), norm(chi_vals[0])
    n_phi23 = norm(phi[1]) + norm(phi[2])
    n_chi23 = norm(chi_vals[1]) + norm(chi_vals[2])
    h1_phi = np.sqrt(sum(norm(v) ** 2 for v in
                         list(phi) + list(dphi_dx) + list(dphi_dt)))
    # chi H1 norm: x-partials analytic, t-partials by finite differences
    ht = 1e-4 * T
    chidt_vals = np.stack([np.stack([
        (np.asarray(f(min(t + ht, T), xq), dtype=float)
         - np.asarray(f(max(t - ht, 0.0), xq), dtype=float))
        / (min(t + ht, T) - max(t - ht, 0.0)) for t in tq])
        for f in data.chi])
    h1_chi = np.sqrt(sum(norm(v) ** 2 for v in
                         list(chi_vals) + list(chidx_vals) + list(chidt_vals)))

    bound_dx = T
    bound_l2 = np.sqrt(T) * np.exp(T / 2.0)
    r1 = n_dx_phi1 / n_dx_chi1 if n_dx_chi1 > 0 else 0.0
    r2 = n_phi1 / n_chi1 if n_chi1 > 0 else 0.0
    r3 = n_phi23 / n_chi23 if n_chi23 > 0 else 0.0
    rh1 = h1_phi / h1_chi if h1_chi > 0 else 0.0
    passed = (r1 <= bound_dx + tol) and (r2 <= bound_l2 + tol) \
        and (r3 <= bound_l2 + tol)
    return DualStabilityReport(r1, r2, r3, rh1, bound_dx, bound_l2, passed)


def wave_forward_solution(e2_0, b_0):
    """Exact solution of the source-free subsystem dt E2 + dx B = 0,
    dt B + dx E2 = 0 from compactly supported initial data: the
    characteristic split (E2 +- B)(t,x) = (E2^0 +- B^0)(x -+ t)."""

    def e2(t, x):
        return 0.5 * ((e2_0(x - t) + b_0(x - t)) + (e2_0(x + t) - b_0(x + t)))

    def b(t, x):
        return 0.5 * ((e2_0(x - t) + b_0(x - t)) - (e2_0(x + t) - b_0(x + t)))

    return e2, b


# ---------------------------------------------------- characteristic dual

@dataclass
class CharacteristicPath:
    """Characteristic trajectory with first-order seed sensitivities.

    states[i] = (X, V1, V2) at s_grid[i]; sens[i] is the 3x3 Jacobian
    d(X, V1, V2)/d(x, v1, v2) relative to the seed."""

    t_seed: float
    seed: tuple
    s_grid: np.ndarray
    states: np.ndarray
    sens: np.ndarray
    exited: bool


def _field_eval(fields: FieldTriple | None, m: int | None, s: float, x: float):
    """(E1, E2, B) and (dxE1, dxE2, dxB) at one point; zero without fields."""
    if fields is None:
        return np.zeros(3), np.zeros(3)
    fn = fields.slab(m)
    xa = np.array([x])
    vals = fn.eval_at(s, xa)[:, 0]
    ders = fn.eval_at(s, xa, deriv=1)[:, 0]
    return vals, ders


def _rhs(s, y, fields, m):
    x, v1, v2 = y[0], y[1], y[2]
    jac = y[3:].reshape(3, 3)
    (e1, e2, bb), (de1, de2, db) = _field_eval(fields, m, s, x)
    gam = np.sqrt(1.0 + v1 * v1 + v2 * v2)
    h1, h2 = v1 / gam, v2 / gam
    g3 = gam ** 3
    dh1_dv1, dh1_dv2 = (1.0 + v2 * v2) / g3, -v1 * v2 / g3
    dh2_dv1, dh2_dv2 = -v1 * v2 / g3, (1.0 + v1 * v1) / g3
    a = np.array([
        [0.0, dh1_dv1, dh1_dv2],
        [de1 + db * h2, bb * dh2_dv1, bb * dh2_dv2],
        [de2 - db * h1, -bb * dh1_dv1, -bb * dh1_dv2],
    ])
    dy = np.empty(12)
    dy[0] = h1
    dy[1] = e1 + bb * h2
    dy[2] = e2 - bb * h1
    dy[3:] = (a @ jac).reshape(-1)
    return dy


def integrate_characteristics(fields: FieldTriple | None, seed,
                              rtol=1e-10, atol=1e-12, dense_per_slab=8,
                              x_bounds=None) -> CharacteristicPath:
    """Integrate the characteristic system from seed = (s_end, t, x, v1, v2):
    the path starts at (x, v) at time t and is integrated to time s_end,
    with steps clipped at slab interfaces so the integrator never crosses
    a field discontinuity.  Sensitivities ride along as a 3x3 Jacobian."""
    s_end, t, x, v1, v2 = (float(q) for q in seed)
    if fields is not None:
        bp = fields.mesh.time.breakpoints
        if not (bp[0] - 1e-12 <= min(s_end, t) and
                max(s_end, t) <= bp[-1] + 1e-12):
            raise ConfigurationError("characteristic time range outside [0, T]")
        xlo, xhi = fields.mesh.grid.x_bounds
    else:
        bp = np.array([min(s_end, t), max(s_end, t)])
        xlo, xhi = x_bounds if x_bounds is not None else (-np.inf, np.inf)

    lo, hi = min(s_end, t), max(s_end, t)
    cuts = bp[(bp > lo + 1e-14) & (bp < hi - 1e-14)]
    stops = np.concatenate([[lo], cuts, [hi]])
    if s_end < t:
        stops = stops[::-1]

    y = np.zeros(12)
    y[:3] = (x, v1, v2)
    y[3:] = np.eye(3).reshape(-1)
    s_grid = [np.array([t])]
    states = [y[:3].copy()[None]]
    sens = [y[3:].reshape(1, 3, 3).copy()]
    exited = False

    def exit_event(s, yy, *_):
        return min(yy[0] - xlo, xhi - yy[0])
    exit_event.terminal = True

    for a, b in zip(stops[:-1], stops[1:]):
        if a == b:
            continue
        if fields is not None:
            mid = 0.5 * (a + b)
            m = int(np.searchsorted(fields.mesh.time.breakpoints, mid,
                                    side="left"))
            m = max(1, min(m, fields.mesh.n_slabs))
        else:
            m = None
        t_eval = np.linspace(a, b, dense_per_slab + 1)[1:]
        sol = solve_ivp(_rhs, (a, b), y, t_eval=t_eval, args=(fields, m),
                        rtol=rtol, atol=atol, method="DOP853",
                        events=exit_event, dense_output=False)
        if not sol.success and sol.status != 1:
            raise ConfigurationError(f"characteristic integration failed: "
                                     f"{sol.message}")
        if sol.t.size:
            s_grid.append(sol.t)
            states.append(sol.y[:3].T)
            sens.append(sol.y[3:].T.reshape(-1, 3, 3))
        if sol.status == 1:  # exit event fired
            exited = True
            break
        y = sol.y[:, -1]
    return CharacteristicPath(
        t, (x, v1, v2), np.concatenate(s_grid),
        np.concatenate(states), np.concatenate(sens), exited)


# ------------------------------------------------------ Gronwall envelope

def _field_sup_norms(fields: FieldTriple | None, samples_per_cell=8):
    """Per-slab callables tau -> (sum_c sup_x |dx W_c|, sup_x |B|); for the
    default k=1 fields the x-sups are exact (derivative piecewise constant,
    values extremal at nodes)."""
    if fields is None:
        return None

    xb = fields.space.x_basis
    xs = np.unique(np.concatenate(
        [np.linspace(a, b, samples_per_cell)
         for a, b in zip(xb.edges[:-1], xb.edges[1:])]))

    def sup_at(m, tau):
        fn = fields.slab(m)
        vals = fn.eval_at(tau, xs)
        ders = fn.eval_at(tau, xs, deriv=1)
        return (float(np.abs(ders).max(axis=1).sum()),
                float(np.abs(vals[2]).max()))

    return sup_at


@dataclass
class GronwallReport:
    margins_x: np.ndarray
    margins_v1: np.ndarray
    margins_v2: np.ndarray
    passed: bool

    @property
    def min_margin(self) -> float:
        return float(min(self.margins_x.min(), self.margins_v1.min(),
                         self.margins_v2.min()))


def gronwall_certificate(path: CharacteristicPath,
                         fields: FieldTriple | None,
                         tol=1e-9, quad_per_slab=24) -> GronwallReport:
    """Check the sensitivity sums along the path against the exponential
    envelopes exp(int 2 + 2||dx W||_inf + 3||B||_inf) (x-seed) and
    exp(int 2 + 3||B||_inf) (v-seeds); negative margins flag a defect in
    the integration (the inequalities hold for exact paths)."""
    t_seed = path.t_seed
    sup_at = _field_sup_norms(fields)

    def coeffs(m, tau):
        if sup_at is None:
            return 2.0, 2.0
        dw, bsup = sup_at(m, tau)
        return 2.0 + 2.0 * dw + 3.0 * bsup, 2.0 + 3.0 * bsup

    # cumulative integral of both coefficient functions from t_seed to s
    s_sorted = path.s_grid
    gx = np.zeros_like(s_sorted)
    gv = np.zeros_like(s_sorted)
    for i, s in enumerate(s_sorted):
        lo, hi = min(s, t_seed), max(s, t_seed)
        if hi - lo < 1e-300:
            continue
        acc_x = acc_v = 0.0
        if fields is None:
            acc_x = 2.0 * (hi - lo)
            acc_v = 2.0 * (hi - lo)
        else:
            bp = fields.mesh.time.breakpoints
            cuts = bp[(bp > lo + 1e-14) & (bp < hi - 1e-14)]
            for a, b in zip(np.concatenate([[lo], cuts]),
                            np.concatenate([cuts, [hi]])):
                mid = 0.5 * (a + b)
                m = max(1, min(int(np.searchsorted(bp, mid, side="left")),
                               fields.mesh.n_slabs))
                tq, tw = gauss_points(max(2, quad_per_slab // max(1, len(cuts) + 1)),
                                      a, b)
                vals = np.array([coeffs(m, tau) for tau in tq])
                acc_x += float(tw @ vals[:, 0])
                acc_v += float(tw @ vals[:, 1])
        gx[i], gv[i] = acc_x, acc_v

    env_x, env_v = np.exp(gx), np.exp(gv)
    actual = np.abs(path.sens).sum(axis=1)       # (ns, 3): per seed column
    m_x = env_x - actual[:, 0]
    m_v1 = env_v - actual[:, 1]
    m_v2 = env_v - actual[:, 2]
    passed = bool(m_x.min() >= -tol and m_v1.min() >= -tol
                  and m_v2.min() >= -tol)
    return GronwallReport(m_x, m_v1, m_v2, passed)


# ---------------------------------------------------------- phase dual

def dual_vlasov(chi, fields: FieldTriple | None, t: float, x: float,
                v1: float, v2: float, T: float | None = None,
                **path_kw) -> float:
    """Dual solution Psi(t,x,v) = chi evaluated at the characteristic
    endpoint at the final time: Psi is constant along the forward
    characteristics of the drift, and Psi(T,.) = chi."""
    if T is None:
        if fields is None:
            raise ConfigurationError("T required when no fields are given")
        T = fields.mesh.time.T
    path = integrate_characteristics(fields, (T, t, x, v1, v2), **path_kw)
    xe, v1e, v2e = path.states[-1]
    return float(np.asarray(chi(xe, v1e, v2e)))
