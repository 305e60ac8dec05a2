"""Approximate-solution assembly and ambient residual evaluation.

Field pairs W = (u, A) are ambient evaluators on R^4.  The local
approximations place the planar degree-1 vortex on the normal planes of
a surface chart through the shifted Fermi coordinates,

    u(x) = u0(t) + eps^2 Lambda_u(y, t),
    A(x) = eps^{-1} [A0_g(t) + eps^2 Lambda_w^g(y, t)] nu_g(y),

with x = y + eps (t + h(y))^b nu_b(y); the pure-gauge pair (e^{i psi},
d psi) extends the far field and the glued pair interpolates the two
with a cutoff centred on the shifted tube.

The Ginzburg-Landau residual and energy density are evaluated with
gauge-covariant finite differences: scalar derivatives compare stencil
values through link phases obtained by Gauss-Legendre quadrature of A
along the stencil segments.  Discrete gauge covariance is then exact for
polynomial gauge functions, which the covariance tests exploit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import OnBranchLocus, OutOfRange, StencilOutsideDomain
from .fermi import FermiFrame, LogEndShift, ZeroShift
from .profile import RadialProfile

__all__ = [
    "FieldPair",
    "ResidualSample",
    "NumericalCoef",
    "build_W0",
    "build_W1",
    "pure_gauge_psi",
    "glue",
    "gl_residual_fd",
    "energy_density",
    "gauge_transform",
    "zeta_step",
    "locate_zero_radius",
    "field_dump_csv",
]

_GAUSS3_NODES = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_GAUSS3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def zeta_step(s):
    """Monotone C^2 cutoff: 1 for s <= 1, 0 for s >= 2 (quintic ramp)."""
    x = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


@dataclass
class FieldPair:
    """Ambient configuration with vectorized u(x) and A(x) evaluators."""

    u: callable
    A: callable
    provenance: str
    frame: FermiFrame | None = None

    def both(self, x):
        return self.u(x), self.A(x)


@dataclass(frozen=True)
class ResidualSample:
    x: np.ndarray
    xi: np.ndarray
    t: np.ndarray
    scalar: complex
    form: np.ndarray           # ambient 1-form components (4,)
    weighted_magnitude: float


class NumericalCoef:
    """Chart coefficient c(x1) with 4th-order FD derivatives.

    Wraps a smooth vectorized function of the first chart coordinate
    (all built-in charts have x2-independent geometry).
    """

    def __init__(self, fn, step: float = 1e-3):
        self.fn = fn
        self.step = step

    def value(self, x1):
        return self.fn(np.asarray(x1, dtype=float))

    def grad(self, x1):
        h, f = self.step, self.fn
        x1 = np.asarray(x1, dtype=float)
        return (f(x1 - 2 * h) - 8 * f(x1 - h) + 8 * f(x1 + h) - f(x1 + 2 * h)) / (12 * h)

    def hess(self, x1):
        h, f = self.step, self.fn
        x1 = np.asarray(x1, dtype=float)
        return (-f(x1 - 2 * h) + 16 * f(x1 - h) - 30 * f(x1) + 16 * f(x1 + h)
                - f(x1 + 2 * h)) / (12 * h**2)


def vortex_scalar(profile: RadialProfile, t1, t2):
    """u0(t) = f(|t|) e^{i theta}, safe at the origin."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    rho = np.hypot(t1, t2)
    g = np.where(rho > 1e-12, profile.f_at(np.minimum(rho, profile.r_max))
                 / np.where(rho > 1e-12, rho, 1.0), profile.df_at(0.0))
    return g * (t1 + 1j * t2)


def vortex_form(profile: RadialProfile, t1, t2):
    """A0(t) = a(|t|) (-t2, t1)/|t|^2; components in the normal frame."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    rho2 = t1**2 + t2**2
    rho = np.sqrt(rho2)
    q = np.where(rho > 1e-12,
                 profile.a_at(np.minimum(rho, profile.r_max))
                 / np.where(rho2 > 1e-24, rho2, 1.0), 0.0)
    return -q * t2, q * t1


class _TubeEvaluator:
    """Shared machinery: x -> (xi, z, t) with profile-domain guard."""

    def __init__(self, frame: FermiFrame, profile: RadialProfile,
                 corrections=()):
        self.frame = frame
        self.profile = profile
        self.corrections = tuple(corrections)

    def locate(self, x):
        xi, z, t = self.frame.fermi_invert(np.asarray(x, dtype=float))
        rho = np.hypot(t[..., 0], t[..., 1])
        if np.any(rho > self.profile.r_max):
            raise StencilOutsideDomain(
                f"normal radius {np.max(rho):.2f} exceeds the profile range "
                f"{self.profile.r_max}")
        return xi, z, t

    def u(self, x):
        xi, z, t = self.locate(x)
        val = vortex_scalar(self.profile, t[..., 0], t[..., 1])
        eps = self.frame.eps
        for coef, lam, which in self.corrections:
            c = coef.value(xi[..., 0])
            val = val + eps**2 * c * (
                lam.eval(which, 0, t[..., 0], t[..., 1])
                + 1j * lam.eval(which, 1, t[..., 0], t[..., 1]))
        return val

    def A(self, x):
        """Ambient 1-form of w_b(xi, t) dt^b.

        dt^b = dz^b/eps - h_j^b dxi^j as ambient covectors, so a nonzero
        shift gradient contributes tangential components through the
        coframe dxi^j = X_j / ((1 - z^1 kappa_j) |X_j|^2).
        """
        xi, z, t = self.locate(x)
        w1, w2 = vortex_form(self.profile, t[..., 0], t[..., 1])
        eps = self.frame.eps
        for coef, lam, which in self.corrections:
            c = coef.value(xi[..., 0])
            w1 = w1 + eps**2 * c * lam.eval(which, 2, t[..., 0], t[..., 1])
            w2 = w2 + eps**2 * c * lam.eval(which, 3, t[..., 0], t[..., 1])
        ch = self.frame.chart
        x1, x2 = xi[..., 0], xi[..., 1]
        nu = ch.normal(x1, x2)
        out = np.zeros(np.shape(w1) + (4,))
        out[..., :3] = (w1 / eps)[..., None] * nu
        out[..., 3] = w2 / eps
        hg = self.frame.shift.grad(x1, x2)
        if np.max(np.abs(hg)) > 0.0:
            J = ch.position_jacobian(x1, x2)
            E0, G0 = ch.metric_diag(x1)
            k1, k2 = ch.principal_curvatures(x1)
            gdd = (E0, G0)
            kap = (k1, k2)
            for j in range(2):
                co = J[..., j, :] / (((1.0 - z[..., 0] * kap[j]) * gdd[j])[..., None])
                wh = w1 * hg[..., j, 0] + w2 * hg[..., j, 1]
                out[..., :3] -= wh[..., None] * co
        return out


def build_W0(profile: RadialProfile, frame: FermiFrame) -> FieldPair:
    """First local approximation: the vortex on each shifted normal plane."""
    ev = _TubeEvaluator(frame, profile)
    pair = FieldPair(ev.u, ev.A, "W0", frame)
    pair.tube = ev
    return pair


def build_W1(profile: RadialProfile, frame: FermiFrame, lambda_pair,
             shift_scale: float | None = None) -> FieldPair:
    """Improved approximation W1 = W0 + eps^2 Lambda.

    Lambda = -|A_M|^2 Lambda_1 + a0^{ij} di h0 dj h0 Lambda_11 with the
    improvement fields from the 2D projected solves.  The gradient
    coefficient uses the frame's shift (the closed-form log-end field).
    """
    chart = frame.chart

    def neg_sqnorm(s):
        k1, k2 = chart.principal_curvatures(s)
        return -(k1**2 + k2**2)

    corrections = [(NumericalCoef(neg_sqnorm), lambda_pair, "lambda1")]
    shift = frame.shift
    if not isinstance(shift, ZeroShift):
        def grad_coef(s):
            E0, _ = chart.metric_diag(s)
            g = shift.grad(s, np.zeros_like(s))[..., 0, 0]
            return g**2 / E0

        corrections.append((NumericalCoef(grad_coef), lambda_pair, "lambda11"))
    ev = _TubeEvaluator(frame, profile, corrections)
    pair = FieldPair(ev.u, ev.A, "W1", frame)
    pair.tube = ev
    return pair


# ---------------------------------------------------------------------------
# pure gauge and gluing


class _PureGauge:
    """Pure-gauge pair (e^{i psi}, d psi) from the smoothed shifted distance.

    psi = Arg(d(x') + i x^4) with d the h^1-shifted signed normal
    coordinate inside the tube region, blended to the sign function
    outside (the blend sits strictly beyond the gluing collar).
    """

    def __init__(self, frame: FermiFrame, delta_glue: float = 0.15,
                 blend_width: float = 2.0):
        self.frame = frame
        self.delta_glue = float(delta_glue)
        self.blend_width = float(blend_width)

    def rho_eps(self, x1, x2):
        r = self.frame.chart.r_weight(x1, x2)
        return self.delta_glue / self.frame.eps + 4.0 * np.log(1.0 + r)

    def dd(self, xp3):
        """Smoothed shifted signed distance of 3D points."""
        from .fermi import _invert3d

        xi, z1 = _invert3d(self.frame.chart, xp3, 1e-12, 60)
        eps = self.frame.eps
        h1 = self.frame.shift.value(xi[..., 0], xi[..., 1])[..., 0]
        raw = z1 - eps * h1
        arg = (np.abs(raw) / eps - self.rho_eps(xi[..., 0], xi[..., 1]) - 3.0)
        zt = zeta_step(1.0 + (arg - 4.0) / self.blend_width)
        return zt * raw + (1.0 - zt) * np.sign(raw), xi, raw, zt

    def u(self, x):
        x = np.asarray(x, dtype=float)
        d, _, _, _ = self.dd(x[..., :3])
        w = d + 1j * x[..., 3]
        mod = np.abs(w)
        if np.any(mod < 1e-12):
            raise OnBranchLocus("pure-gauge phase undefined on the zero set")
        return w / mod

    def A(self, x):
        """d psi = (d dx^4 - x^4 d d)/(d^2 + (x^4)^2).

        The distance gradient is analytic where the blend is inactive
        (grad of the signed distance is the unit normal, shifted by the
        chain rule through the foot point); a 4th-order difference of the
        phase covers the blend region.
        """
        x = np.asarray(x, dtype=float)
        d, xi, raw, zt = self.dd(x[..., :3])
        denom = d**2 + x[..., 3] ** 2
        if np.any(denom < 1e-24):
            raise OnBranchLocus("pure-gauge phase undefined on the zero set")
        out = np.zeros(x.shape)
        grad_d = self._grad_dd_analytic(x, xi)
        pure = zt > 1.0 - 1e-12
        out[..., :3] = -x[..., 3:4] * grad_d / denom[..., None]
        out[..., 3] = d / denom
        if not np.all(pure):
            fd = self._A_fd(x[~pure])
            out[~pure] = fd
        return out

    def _grad_dd_analytic(self, x, xi):
        ch = self.frame.chart
        x1, x2 = xi[..., 0], xi[..., 1]
        nu = ch.normal(x1, x2)
        shift_grad = self.frame.shift.grad(x1, x2)[..., :, 0]  # d_j h^1
        if np.max(np.abs(shift_grad)) == 0.0:
            return nu
        J = ch.position_jacobian(x1, x2)
        E0, G0 = ch.metric_diag(x1)
        k1, k2 = ch.principal_curvatures(x1)
        p = ch.position(x1, x2)
        z1 = np.sum((x[..., :3] - p) * nu, axis=-1)
        g1 = shift_grad[..., 0] / ((1.0 - z1 * k1) * E0)
        g2 = shift_grad[..., 1] / ((1.0 - z1 * k2) * G0)
        grad_h = g1[..., None] * J[..., 0, :] + g2[..., None] * J[..., 1, :]
        return nu - self.frame.eps * grad_h

    def _A_fd(self, x, h: float = 1e-3):
        out = np.zeros(x.shape)
        for k in range(4):
            dx = np.zeros(4)
            dx[k] = h
            up2 = self.u(x + 2 * dx)
            up1 = self.u(x + dx)
            um1 = self.u(x - dx)
            um2 = self.u(x - 2 * dx)
            du = (um2 - 8 * um1 + 8 * up1 - up2) / (12 * h)
            out[..., k] = np.real(du / (1j * self.u(x)))
        return out


def pure_gauge_psi(frame: FermiFrame, delta_glue: float = 0.15,
                   blend_width: float = 2.0) -> FieldPair:
    pg = _PureGauge(frame, delta_glue, blend_width)
    pair = FieldPair(pg.u, pg.A, "pure_gauge", frame)
    pair.gauge = pg
    return pair


class _Glued:
    def __init__(self, W1: FieldPair, Psi: FieldPair, frame: FermiFrame,
                 delta_glue: float):
        self.W1 = W1
        self.Psi = Psi
        self.frame = frame
        self.delta_glue = float(delta_glue)

    def cutoff(self, x):
        """zeta_delta(x) = zeta(|t + h1| - rho_eps(y) - 3), 0 off-tube."""
        x = np.asarray(x, dtype=float)
        frame = self.frame
        xi, z, t = frame.fermi_invert(x)
        h = frame.shift.value(xi[..., 0], xi[..., 1])
        # h = h0 here, so t + h1 = z/eps - h0
        targ = z / frame.eps - h
        mag = np.hypot(targ[..., 0], targ[..., 1])
        r = frame.chart.r_weight(xi[..., 0], xi[..., 1])
        rho_eps = self.delta_glue / frame.eps + 4.0 * np.log(1.0 + r)
        return zeta_step(mag - rho_eps - 3.0)

    def u(self, x):
        z = self.cutoff(x)
        out = np.asarray(self.Psi.u(x), dtype=complex).copy()
        inside = z > 0
        if np.any(inside):
            out[inside] = (z[inside] * self.W1.u(x[inside])
                           + (1 - z[inside]) * out[inside])
        return out

    def A(self, x):
        z = self.cutoff(x)
        out = np.asarray(self.Psi.A(x), dtype=float).copy()
        inside = z > 0
        if np.any(inside):
            out[inside] = (z[inside, None] * self.W1.A(x[inside])
                           + (1 - z[inside, None]) * out[inside])
        return out


def glue(W1: FieldPair, Psi: FieldPair, frame: FermiFrame,
         delta_glue: float = 0.15) -> FieldPair:
    g = _Glued(W1, Psi, frame, delta_glue)
    pair = FieldPair(g.u, g.A, "glued", frame)
    pair.glued = g
    return pair


# ---------------------------------------------------------------------------
# covariant finite-difference residual and energy


def _link_phase(A, x, k, h):
    """Gauss-3 line integrals of A along x -> x + h e_k (vectorized)."""
    seg = np.zeros(x.shape[:-1] + (1, 4))
    seg[..., 0, k] = h
    nodes = x[..., None, :] + _GAUSS3_NODES[:, None] * seg
    Ak = A(nodes.reshape(-1, 4)).reshape(nodes.shape)[..., k]
    return h * np.sum(_GAUSS3_WEIGHTS * Ak, axis=-1)


def gl_residual_fd(W: FieldPair, x, eps: float, step: float | None = None):
    """Residual S_eps(W) at ambient points by covariant-link differences.

    Returns (S1 complex, S2 (4,)).  Second-order accurate; exactly gauge
    covariant for polynomial gauge functions.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if step is None:
        step = min(1e-3, eps / 50.0)
    h = step
    u0 = W.u(x)
    A0 = W.A(x)

    up = np.empty((4,) + u0.shape, dtype=complex)
    um = np.empty_like(up)
    Ap = np.empty((4,) + A0.shape)
    Am = np.empty_like(Ap)
    thp = np.empty((4,) + u0.shape)
    thm = np.empty((4,) + u0.shape)
    for k in range(4):
        dx = np.zeros(4)
        dx[k] = h
        up[k] = W.u(x + dx)
        um[k] = W.u(x - dx)
        Ap[k] = W.A(x + dx)
        Am[k] = W.A(x - dx)
        thp[k] = _link_phase(W.A, x, k, h)
        thm[k] = -_link_phase(W.A, x, k, -h)  # integral from x-h to x

    # covariant first and second derivatives of u
    Du = np.empty((4,) + u0.shape, dtype=complex)
    lap_cov = np.zeros(u0.shape, dtype=complex)
    for k in range(4):
        ep = np.exp(-1j * thp[k])
        em = np.exp(1j * thm[k])
        Du[k] = (ep * up[k] - em * um[k]) / (2 * h)
        lap_cov += (ep * up[k] - 2 * u0 + em * um[k]) / h**2

    # d*dA from plain differences of A (gauge part cancels exactly for
    # polynomial gauge functions)
    lapA = np.zeros_like(A0)
    for k in range(4):
        lapA += (Ap[k] + Am[k] - 2 * A0) / h**2
    # mixed partials d_k d_j A_j
    dkdiv = np.zeros(x.shape[:-1] + (4,))
    for k in range(4):
        dxk = np.zeros(4)
        dxk[k] = h
        for j in range(4):
            if j == k:
                dkdiv[..., k] += (Ap[k][..., k] - 2 * A0[..., k]
                                  + Am[k][..., k]) / h**2
            else:
                dxj = np.zeros(4)
                dxj[j] = h
                app = W.A(x + dxk + dxj)[..., j]
                apm = W.A(x + dxk - dxj)[..., j]
                amp = W.A(x - dxk + dxj)[..., j]
                amm = W.A(x - dxk - dxj)[..., j]
                dkdiv[..., k] += (app - apm - amp + amm) / (4 * h**2)
    dstar_dA = -lapA + dkdiv

    current = np.empty_like(A0)
    for k in range(4):
        current[..., k] = np.real(Du[k] * np.conj(1j * u0))

    S1 = -eps**2 * lap_cov - 0.5 * (1.0 - np.abs(u0) ** 2) * u0
    S2 = eps**2 * dstar_dA - current
    return S1, S2


def energy_density(W: FieldPair, x, eps: float, step: float | None = None):
    """(1/2)[eps^2 |D^A u|^2 + eps^4 |dA|^2 + (1/4)(1-|u|^2)^2] >= 0."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if step is None:
        step = min(1e-3, eps / 50.0)
    h = step
    u0 = W.u(x)
    grad2 = np.zeros(u0.shape)
    dA = np.zeros(x.shape[:-1] + (4, 4))
    Ap = np.empty((4,) + x.shape[:-1] + (4,))
    Am = np.empty_like(Ap)
    for k in range(4):
        dx = np.zeros(4)
        dx[k] = h
        thp = _link_phase(W.A, x, k, h)
        thm = -_link_phase(W.A, x, k, -h)
        Du = (np.exp(-1j * thp) * W.u(x + dx)
              - np.exp(1j * thm) * W.u(x - dx)) / (2 * h)
        grad2 += np.abs(Du) ** 2
        Ap[k] = W.A(x + dx)
        Am[k] = W.A(x - dx)
    for j in range(4):
        for k in range(4):
            if j != k:
                dA[..., j, k] = (Ap[j][..., k] - Am[j][..., k]) / (2 * h) \
                    - (Ap[k][..., j] - Am[k][..., j]) / (2 * h)
    dA2 = 0.5 * np.sum(dA**2, axis=(-2, -1))
    return 0.5 * (eps**2 * grad2 + eps**4 * dA2
                  + 0.25 * (1.0 - np.abs(u0) ** 2) ** 2)


def gauge_transform(W: FieldPair, gamma_fn, dgamma_fn) -> FieldPair:
    """G_gamma W = (u e^{i gamma}, A + d gamma)."""

    def u(x):
        return W.u(x) * np.exp(1j * gamma_fn(np.asarray(x, dtype=float)))

    def A(x):
        return W.A(x) + dgamma_fn(np.asarray(x, dtype=float))

    return FieldPair(u, A, f"gauge({W.provenance})", W.frame)


def locate_zero_radius(W: FieldPair, frame: FermiFrame, x1: float, x2: float,
                       direction: float = 0.0, t_range: float = 1.5,
                       n: int = 3001):
    """|u|-minimizing t along a normal ray through the shifted core."""
    tt = np.linspace(-t_range, t_range, n)
    t = np.stack([tt * np.cos(direction), tt * np.sin(direction)], axis=-1)
    x = frame.fermi_map(np.full(n, x1), np.full(n, x2), t, check=False)
    vals = np.abs(W.u(x))
    i = int(np.argmin(vals))
    return tt[i], vals[i]


def field_dump_csv(W: FieldPair, xs, path):
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    u = W.u(xs)
    A = W.A(xs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "x3", "x4", "re_u", "im_u",
                    "A1", "A2", "A3", "A4", "abs_u"])
        for i in range(len(xs)):
            w.writerow([f"{v:.17g}" for v in
                        (*xs[i], u[i].real, u[i].imag, *A[i], abs(u[i]))])
