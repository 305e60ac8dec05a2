"""Coordinate-route residual evaluation and the residual scaling study.

Evaluates the Ginzburg-Landau residual of tube configurations directly in
Fermi coordinates, using the product structure of the pullback metric
(g_z block-diagonal with the flat normal plane) and the coordinate
expressions of the covariant Laplacian and d*d:

    -D^A u  = -(a^{ij} d_ij + c^j d_j) u - dAA_zz u + H^1 dA_z1 u,
    (d*F)_a = -G_ab (det G)^{-1/2} d_c (sqrt(det G) F^{cb}),

with all metric coefficients in closed form (the built-in charts have
diagonal, angle-independent metrics).  Fields are given as jets in
(xi, t); the shift enters through t = z/eps - h(xi) by the chain rule.
This route has no finite-difference noise in the normal directions and
is the one used for the eps-scaling measurements; the ambient stencil
route of ``fields`` serves as its independent cross-oracle.
"""

from __future__ import annotations

import numpy as np

from .fermi import FermiFrame
from .fields import NumericalCoef
from .profile import RadialProfile

__all__ = [
    "TubeSpec",
    "metric_pack",
    "field_pack",
    "build_w0_spec",
    "build_w1_spec",
    "fermi_residual",
    "weighted_magnitude",
    "sample_set",
    "residual_scaling_study",
    "ambient_to_coordinate_form",
    "cross_oracle_check",
]


def _vortex_scalar_jets(profile: RadialProfile, t1, t2):
    """u0 and its t-derivatives through second order (complex arrays)."""
    rho = np.hypot(t1, t2)
    f = profile.f_at(rho)
    fp = profile.df_at(rho)
    fpp = profile.d2f_at(rho)
    g = f / rho
    gp = (fp * rho - f) / rho**2
    gpp = (fpp * rho**2 - 2 * fp * rho + 2 * f) / rho**3
    w = t1 + 1j * t2
    e = (1.0, 1j)
    t = (t1, t2)
    val = g * w
    dt = [gp * (t[a] / rho) * w + g * e[a] for a in range(2)]
    dtt = [[None, None], [None, None]]
    for a in range(2):
        for b in range(2):
            d_ab = 1.0 if a == b else 0.0
            rad = gpp * t[a] * t[b] / rho**2 + gp * (d_ab / rho - t[a] * t[b] / rho**3)
            dtt[a][b] = rad * w + gp * (t[a] / rho) * e[b] + gp * (t[b] / rho) * e[a]
    return val, dt, dtt


def _vortex_form_jets(profile: RadialProfile, t1, t2):
    """A0 components (w1, w2) and t-derivatives through second order."""
    rho = np.hypot(t1, t2)
    a = profile.a_at(rho)
    ap = profile.da_at(rho)
    app = profile.d2a_at(rho)
    q = a / rho**2
    qp = ap / rho**2 - 2 * a / rho**3
    qpp = app / rho**2 - 4 * ap / rho**3 + 6 * a / rho**4
    t = (t1, t2)
    sign = (-1.0, 1.0)
    other = (t2, t1)   # A_1 = -q t2, A_2 = +q t1
    val = [sign[g] * q * other[g] for g in range(2)]
    dt = [[None, None], [None, None]]   # dt[b][g] = d_{t^b} A_g
    dtt = [[[None] * 2 for _ in range(2)] for _ in range(2)]
    for g in range(2):
        oth = 1 - g
        for b in range(2):
            d_bo = 1.0 if b == oth else 0.0
            dt[b][g] = sign[g] * (qp * (t[b] / rho) * other[g] + q * d_bo)
        for b in range(2):
            for c in range(2):
                d_bc = 1.0 if b == c else 0.0
                rad = qpp * t[b] * t[c] / rho**2 + qp * (d_bc / rho - t[b] * t[c] / rho**3)
                term = rad * other[g]
                term = term + qp * (t[b] / rho) * (1.0 if c == oth else 0.0)
                term = term + qp * (t[c] / rho) * (1.0 if b == oth else 0.0)
                dtt[b][c][g] = sign[g] * term
    return val, dt, dtt


class TubeSpec:
    """Jets of (u, w_gamma) in (xi, t) for vortex-plus-correction pairs.

    Corrections are separable coef(xi^1) x Lambda(t) terms with the
    improvement fields' spline jets; all built-in coefficient fields are
    angle-independent.
    """

    def __init__(self, profile: RadialProfile, eps: float, corrections=()):
        self.profile = profile
        self.eps = eps
        self.corrections = tuple(corrections)

    def scalar_jets(self, x1, t1, t2):
        val, dt, dtt = _vortex_scalar_jets(self.profile, t1, t2)
        dxi1 = np.zeros_like(val)
        dxi1xi1 = np.zeros_like(val)
        dxi1t = [np.zeros_like(val), np.zeros_like(val)]
        e2 = self.eps**2
        for coef, lam, which in self.corrections:
            c, cp, cpp = coef.value(x1), coef.grad(x1), coef.hess(x1)
            L = lambda d1, d2, comp: lam.eval(which, comp, t1, t2, d1, d2)
            lv = L(0, 0, 0) + 1j * L(0, 0, 1)
            l1 = L(1, 0, 0) + 1j * L(1, 0, 1)
            l2 = L(0, 1, 0) + 1j * L(0, 1, 1)
            val = val + e2 * c * lv
            dt[0] = dt[0] + e2 * c * l1
            dt[1] = dt[1] + e2 * c * l2
            dtt[0][0] = dtt[0][0] + e2 * c * (L(2, 0, 0) + 1j * L(2, 0, 1))
            dtt[0][1] = dtt[0][1] + e2 * c * (L(1, 1, 0) + 1j * L(1, 1, 1))
            dtt[1][0] = dtt[0][1]
            dtt[1][1] = dtt[1][1] + e2 * c * (L(0, 2, 0) + 1j * L(0, 2, 1))
            dxi1 = dxi1 + e2 * cp * lv
            dxi1xi1 = dxi1xi1 + e2 * cpp * lv
            dxi1t[0] = dxi1t[0] + e2 * cp * l1
            dxi1t[1] = dxi1t[1] + e2 * cp * l2
        return dict(val=val, dt=dt, dtt=dtt, dxi1=dxi1, dxi1xi1=dxi1xi1,
                    dxi1t=dxi1t)

    def form_jets(self, x1, t1, t2):
        val, dt, dtt = _vortex_form_jets(self.profile, t1, t2)
        zero = np.zeros_like(t1)
        dxi1 = [zero.copy(), zero.copy()]
        dxi1xi1 = [zero.copy(), zero.copy()]
        dxi1t = [[zero.copy(), zero.copy()], [zero.copy(), zero.copy()]]
        e2 = self.eps**2
        for coef, lam, which in self.corrections:
            c, cp, cpp = coef.value(x1), coef.grad(x1), coef.hess(x1)
            for g in range(2):
                comp = 2 + g
                L = lambda d1, d2: lam.eval(which, comp, t1, t2, d1, d2)
                lv = L(0, 0)
                val[g] = val[g] + e2 * c * lv
                dt[0][g] = dt[0][g] + e2 * c * L(1, 0)
                dt[1][g] = dt[1][g] + e2 * c * L(0, 1)
                dtt[0][0][g] = dtt[0][0][g] + e2 * c * L(2, 0)
                dtt[0][1][g] = dtt[0][1][g] + e2 * c * L(1, 1)
                dtt[1][0][g] = dtt[0][1][g]
                dtt[1][1][g] = dtt[1][1][g] + e2 * c * L(0, 2)
                dxi1[g] = dxi1[g] + e2 * cp * lv
                dxi1xi1[g] = dxi1xi1[g] + e2 * cpp * lv
                dxi1t[0][g] = dxi1t[0][g] + e2 * cp * L(1, 0)
                dxi1t[1][g] = dxi1t[1][g] + e2 * cp * L(0, 1)
        return dict(val=val, dt=dt, dtt=dtt, dxi1=dxi1, dxi1xi1=dxi1xi1,
                    dxi1t=dxi1t)


def build_w0_spec(profile: RadialProfile, frame: FermiFrame) -> TubeSpec:
    return TubeSpec(profile, frame.eps)


def build_w1_spec(profile: RadialProfile, frame: FermiFrame,
                  lambda_pair) -> TubeSpec:
    from .fermi import ZeroShift

    chart = frame.chart

    def neg_sqnorm(s):
        k1, k2 = chart.principal_curvatures(s)
        return -(k1**2 + k2**2)

    corrections = [(NumericalCoef(neg_sqnorm), lambda_pair, "lambda1")]
    if not isinstance(frame.shift, ZeroShift):
        def grad_coef(s):
            E0, _ = chart.metric_diag(s)
            g = frame.shift.grad(s, np.zeros_like(s))[..., 0, 0]
            return g**2 / E0

        corrections.append((NumericalCoef(grad_coef), lambda_pair, "lambda11"))
    return TubeSpec(profile, frame.eps, corrections)


def metric_pack(frame: FermiFrame, x1, x2, t):
    """Exact pullback metric data of the shifted map in (xi, t).

        G_xi,xi = g_z + eps^2 hg hg^T,  G_xi,t = eps^2 hg,  G_t,t = eps^2 I,
        G^{xi,xi} = g_z^{-1},  G^{xi,t} = -g_z^{-1} hg,
        G^{t,t} = eps^{-2} I + hg^T g_z^{-1} hg,   det G = eps^4 det g_z,

    with g_z = g_0 (I - z^1 S)^2, z^1 = eps (t^1 + h^1(xi)).  Returns a
    dict with Gd, Gi, sqrtG and their first coordinate partials dGd, dGi,
    dsqrtG (leading axis = coordinate), plus the diagonal inverse factors.
    """
    eps = frame.eps
    ch = frame.chart
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    t = np.asarray(t, dtype=float)
    t1 = t[..., 0]
    K = np.broadcast(x1, t1).shape

    h = frame.shift.value(x1, x2)
    hg = frame.shift.grad(x1, x2)       # [j, beta]
    hH = frame.shift.hess(x1, x2)       # [i, j, beta]
    z1 = eps * (t1 + h[..., 0])

    E0, G0 = ch.metric_diag(x1)
    dE0, dG0 = ch.dmetric_diag(x1)
    k1, k2 = ch.principal_curvatures(x1)
    dk1, dk2 = ch.dprincipal_curvatures(x1)
    m1, m2 = 1.0 - z1 * k1, 1.0 - z1 * k2
    gz = (E0 * m1**2, G0 * m2**2)
    gz_x = (dE0 * m1**2 + E0 * 2 * m1 * (-z1 * dk1),
            dG0 * m2**2 + G0 * 2 * m2 * (-z1 * dk2))
    gz_z = (E0 * 2 * m1 * (-k1), G0 * 2 * m2 * (-k2))

    zero = np.zeros(K)
    one = np.ones(K)
    dz1 = [eps * hg[..., 0, 0], eps * hg[..., 1, 0], eps * one, zero]

    def coef(cv, cx, cz):
        return cv, [cx + cz * dz1[0], cz * dz1[1], cz * dz1[2], cz * dz1[3]]

    Gd = np.zeros(K + (4, 4))
    Gi = np.zeros(K + (4, 4))
    dGd = np.zeros(K + (4, 4, 4))
    dGi = np.zeros(K + (4, 4, 4))
    dhg = np.zeros(K + (4, 2, 2))
    for c in range(2):
        dhg[..., c, :, :] = hH[..., c, :, :]

    gzv = [None, None]
    dgz = [None, None]
    for j in range(2):
        gzv[j], dgz[j] = coef(gz[j], gz_x[j], gz_z[j])
    inv = [1.0 / gzv[0], 1.0 / gzv[1]]
    dinv = [[-dgz[j][c] / gzv[j] ** 2 for c in range(4)] for j in range(2)]

    for j in range(2):
        for kk in range(2):
            acc = (gzv[j] if j == kk else zero).copy()
            Gd[..., j, kk] = acc + eps**2 * np.sum(hg[..., j, :] * hg[..., kk, :], axis=-1)
        for al in range(2):
            Gd[..., j, 2 + al] = eps**2 * hg[..., j, al]
            Gd[..., 2 + al, j] = Gd[..., j, 2 + al]
    Gd[..., 2, 2] = eps**2
    Gd[..., 3, 3] = eps**2

    for j in range(2):
        Gi[..., j, j] = inv[j]
        for al in range(2):
            Gi[..., j, 2 + al] = -hg[..., j, al] * inv[j]
            Gi[..., 2 + al, j] = Gi[..., j, 2 + al]
    for al in range(2):
        for be in range(2):
            Gi[..., 2 + al, 2 + be] = ((1.0 / eps**2 if al == be else 0.0)
                                       + hg[..., 0, al] * hg[..., 0, be] * inv[0]
                                       + hg[..., 1, al] * hg[..., 1, be] * inv[1])

    for c in range(4):
        for j in range(2):
            for kk in range(2):
                dd = (dgz[j][c] if j == kk else zero).copy()
                dd = dd + eps**2 * np.sum(dhg[..., c, j, :] * hg[..., kk, :]
                                          + hg[..., j, :] * dhg[..., c, kk, :], axis=-1)
                dGd[..., c, j, kk] = dd
            for al in range(2):
                dGd[..., c, j, 2 + al] = eps**2 * dhg[..., c, j, al]
                dGd[..., c, 2 + al, j] = dGd[..., c, j, 2 + al]
        for j in range(2):
            dGi[..., c, j, j] = dinv[j][c]
            for al in range(2):
                v = -(dhg[..., c, j, al] * inv[j] + hg[..., j, al] * dinv[j][c])
                dGi[..., c, j, 2 + al] = v
                dGi[..., c, 2 + al, j] = v
        for al in range(2):
            for be in range(2):
                acc = zero.copy()
                for j in range(2):
                    acc = acc + (dhg[..., c, j, al] * hg[..., j, be] * inv[j]
                                 + hg[..., j, al] * dhg[..., c, j, be] * inv[j]
                                 + hg[..., j, al] * hg[..., j, be] * dinv[j][c])
                dGi[..., c, 2 + al, 2 + be] = acc

    sqrtG = eps**2 * np.sqrt(gzv[0] * gzv[1])
    dsqrtG = np.stack([eps**2 * (dgz[0][c] * gzv[1] + gzv[0] * dgz[1][c])
                       / (2 * np.sqrt(gzv[0] * gzv[1])) for c in range(4)],
                      axis=-1)
    return dict(Gd=Gd, Gi=Gi, dGd=dGd, dGi=dGi, sqrtG=sqrtG, dsqrtG=dsqrtG,
                inv=inv)


def field_pack(spec: TubeSpec, x1, t1, t2):
    """Jets of u and w_a = (0, 0, w1, w2) in the (xi, t) coordinates."""
    U = spec.scalar_jets(x1, t1, t2)
    Wf = spec.form_jets(x1, t1, t2)
    u = U["val"]
    K = np.shape(u)
    du = np.stack([U["dxi1"], np.zeros_like(u), U["dt"][0], U["dt"][1]], axis=-1)
    ddu = np.zeros(K + (4, 4), dtype=complex)
    ddu[..., 0, 0] = U["dxi1xi1"]
    for al in range(2):
        ddu[..., 0, 2 + al] = U["dxi1t"][al]
        ddu[..., 2 + al, 0] = U["dxi1t"][al]
        for be in range(2):
            ddu[..., 2 + al, 2 + be] = U["dtt"][al][be]
    w = np.zeros(K + (4,))
    dw = np.zeros(K + (4, 4))
    ddw = np.zeros(K + (4, 4, 4))
    for g in range(2):
        w[..., 2 + g] = Wf["val"][g]
        dw[..., 0, 2 + g] = Wf["dxi1"][g]
        for b in range(2):
            dw[..., 2 + b, 2 + g] = Wf["dt"][b][g]
        ddw[..., 0, 0, 2 + g] = Wf["dxi1xi1"][g]
        for b in range(2):
            ddw[..., 0, 2 + b, 2 + g] = Wf["dxi1t"][b][g]
            ddw[..., 2 + b, 0, 2 + g] = Wf["dxi1t"][b][g]
            for c in range(2):
                ddw[..., 2 + b, 2 + c, 2 + g] = Wf["dtt"][b][c][g]
    return u, du, ddu, w, dw, ddw


def fermi_residual(frame: FermiFrame, spec: TubeSpec, x1, x2, t):
    """Residual of the pair at tube samples, in shifted coordinates.

    Generic contraction of the coordinate expressions of the covariant
    Laplacian and d*d with the exact shift metric of ``metric_pack``.
    Returns the complex scalar S1, the coordinate components S2_t (2,),
    S2_xi (2,), and the dilated-frame magnitude for the weighted norms.
    """
    eps = frame.eps
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    t = np.asarray(t, dtype=float)
    t1, t2 = t[..., 0], t[..., 1]

    mp = metric_pack(frame, x1, x2, t)
    Gd, Gi, dGd, dGi = mp["Gd"], mp["Gi"], mp["dGd"], mp["dGi"]
    sqrtG, dsqrtG, inv = mp["sqrtG"], mp["dsqrtG"], mp["inv"]

    u, du, ddu, w, dw, ddw = field_pack(spec, x1, t1, t2)

    # covariant gradient and scalar Laplacian
    V = du - 1j * w * u[..., None]
    dV = ddu - 1j * (dw * u[..., None, None]
                     + np.einsum("...b,...a->...ab", w, du))
    GiV = np.einsum("...ab,...b->...a", Gi, V)
    div = (np.einsum("...a,...a->...", dsqrtG, GiV)
           + sqrtG * (np.einsum("...aab,...b->...", dGi, V)
                      + np.einsum("...ab,...ab->...", Gi, dV)))
    lap = div / sqrtG - 1j * np.einsum("...a,...a->...", w, GiV)
    S1 = -eps**2 * lap - 0.5 * (1.0 - np.abs(u) ** 2) * u

    # field strength and d*F
    F = dw - np.swapaxes(dw, -1, -2)
    dF = ddw - np.swapaxes(ddw, -1, -2)
    Fup = np.einsum("...ac,...bd,...cd->...ab", Gi, Gi, F)
    dFup = (np.einsum("...eac,...bd,...cd->...eab", dGi, Gi, F)
            + np.einsum("...ac,...ebd,...cd->...eab", Gi, dGi, F)
            + np.einsum("...ac,...bd,...ecd->...eab", Gi, Gi, dF))
    divF = (np.einsum("...c,...cb->...b", dsqrtG, Fup)
            + sqrtG[..., None] * np.einsum("...ccb->...b", dFup))
    dstarF = -np.einsum("...ab,...b->...a", Gd, divF) / sqrtG[..., None]
    current = np.real(V * np.conj(1j * u)[..., None])
    S2 = eps**2 * dstarF - current

    S2_xi = S2[..., :2]
    S2_t = S2[..., 2:]
    form_sq = (np.sum(S2_t**2, axis=-1)
               + eps**2 * (S2_xi[..., 0] ** 2 * inv[0]
                           + S2_xi[..., 1] ** 2 * inv[1]))
    return dict(S1=S1, S2_t=S2_t, S2_xi=S2_xi, form_norm=np.sqrt(form_sq),
                S2_z=S2_t / eps)


def weighted_magnitude(frame: FermiFrame, res, x1, x2, t, mu: float = 4.0,
                       sigma: float = 0.5):
    """r_eps^mu e^{sigma |t|} max(|S1|, |S2|_t-frame) per sample."""
    r = frame.chart.r_weight(x1, x2)
    tn = np.hypot(t[..., 0], t[..., 1])
    mag = np.maximum(np.abs(res["S1"]), res["form_norm"])
    return r**mu * np.exp(sigma * tn) * mag


def sample_set(chart, eps_ref: float, shift, n_chart: int = 16,
               n_dirs: int = 24, n_radii: int = 12, delta: float = 0.5,
               frac: float = 0.8, s_mid: float = 2.0):
    """Deterministic tensor sample set shared across the eps sweep.

    The normal radii stop at ``frac`` of the injectivity bound of the
    LARGEST eps in the sweep, so every eps measures the same region.
    """
    n_s = max(1, n_chart // 4)
    n_th = max(1, n_chart // n_s)
    svals = np.linspace(-s_mid, s_mid, n_s)
    thvals = np.arange(n_th) * (2 * np.pi / n_th)
    dirs = np.arange(n_dirs) * (2 * np.pi / n_dirs)
    out_x1, out_x2, out_t = [], [], []
    for s in svals:
        r = chart.r_weight(s, 0.0)
        tau = delta * np.log(1.0 + r)
        hval = shift.value(np.asarray(s), np.asarray(0.0))
        hmag = float(np.hypot(hval[..., 0], hval[..., 1]))
        tmax = frac * (tau / eps_ref - hmag)
        tmax = float(np.clip(tmax, 0.4, 6.0))
        radii = tmax * (np.arange(1, n_radii + 1) / n_radii)
        for th in thvals:
            for d in dirs:
                for rr in radii:
                    out_x1.append(s)
                    out_x2.append(th)
                    out_t.append((rr * np.cos(d), rr * np.sin(d)))
    return (np.array(out_x1), np.array(out_x2), np.array(out_t))


def residual_scaling_study(profile: RadialProfile, chart, eps_list,
                           order: str = "w0", shift=None, lambda_pair=None,
                           mu: float = 4.0, sigma: float = 0.5,
                           delta: float = 0.5, samples=None):
    """Weighted sup-residuals over an eps sweep and successive ratios.

    ``order`` selects the approximation: 'w0' for the bare vortex ansatz,
    'w1' for the eps^2-improved pair (requires ``lambda_pair``).  Returns
    a list of rows {eps, weighted_sup, ratio}.
    """
    from .fermi import ZeroShift

    eps_list = list(eps_list)
    if sorted(eps_list, reverse=True) != eps_list:
        raise ValueError("eps_list must be decreasing")
    shift = shift if shift is not None else ZeroShift()
    if samples is None:
        samples = sample_set(chart, max(eps_list), shift, delta=delta)
    x1, x2, t = samples
    rows = []
    prev = None
    for eps in eps_list:
        frame = FermiFrame(chart, eps=eps, shift=shift, delta=delta)
        if order == "w0":
            spec = build_w0_spec(profile, frame)
        elif order == "w1":
            if lambda_pair is None:
                raise ValueError("order 'w1' requires lambda_pair")
            spec = build_w1_spec(profile, frame, lambda_pair)
        else:
            raise ValueError(f"unknown order {order!r}")
        res = fermi_residual(frame, spec, x1, x2, t)
        wm = weighted_magnitude(frame, res, x1, x2, t, mu=mu, sigma=sigma)
        sup = float(np.max(wm))
        rows.append({"eps": eps, "weighted_sup": sup,
                     "ratio": (prev / sup) if prev else float("nan")})
        prev = sup
    return rows


def ambient_to_coordinate_form(frame: FermiFrame, x1, x2, t, S2_ambient):
    """Contract an ambient 1-form with the shifted-coordinate frame vectors.

    Returns (S2_xi (2,), S2_t (2,)) matching the components produced by
    ``fermi_residual``: dx/dt^a = eps nu_a and
    dx/dxi^j = (1 - z^1 kappa_j) X_j + eps hg[j, b] nu_b.
    """
    ch = frame.chart
    eps = frame.eps
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    t = np.asarray(t, dtype=float)
    S2 = np.asarray(S2_ambient, dtype=float)
    nu = ch.normal(x1, x2)
    J = ch.position_jacobian(x1, x2)
    k1, k2 = ch.principal_curvatures(x1)
    hg = frame.shift.grad(x1, x2)
    h = frame.shift.value(x1, x2)
    z1 = eps * (t[..., 0] + h[..., 0])
    S2_t = np.stack([eps * np.sum(S2[..., :3] * nu, axis=-1),
                     eps * S2[..., 3]], axis=-1)
    kap = (k1, k2)
    cols = []
    for j in range(2):
        v3 = (1.0 - z1 * kap[j])[..., None] * J[..., j, :] \
            + eps * hg[..., j, 0][..., None] * nu
        comp = np.sum(S2[..., :3] * v3, axis=-1) + eps * hg[..., j, 1] * S2[..., 3]
        cols.append(comp)
    return np.stack(cols, axis=-1), S2_t


def cross_oracle_check(frame: FermiFrame, spec: TubeSpec, pair, x1, x2, t,
                       safety: float = 4.0, abs_floor: float = 1e-8):
    """Fermi-route vs ambient finite differences with Richardson tolerance.

    Evaluates the ambient stencil residual at steps h and h/2; the
    difference estimates the leading O(h^2) truncation, and the check
    asserts |fermi - fd_{h/2}| <= safety * (4/3) |fd_h - fd_{h/2}| +
    floor, per component.  Returns a dict of margins (<= 1 passes).
    """
    from .fields import gl_residual_fd

    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    t = np.asarray(t, dtype=float)
    res = fermi_residual(frame, spec, x1, x2, t)
    xs = frame.fermi_map(x1, x2, t, check=False)
    step = min(1e-3, frame.eps / 50.0)
    S1h, S2h = gl_residual_fd(pair, xs, frame.eps, step=step)
    S1h2, S2h2 = gl_residual_fd(pair, xs, frame.eps, step=step / 2)
    xi_h, t_h = ambient_to_coordinate_form(frame, x1, x2, t, S2h)
    xi_h2, t_h2 = ambient_to_coordinate_form(frame, x1, x2, t, S2h2)

    out = {}
    tol1 = safety * (4.0 / 3.0) * np.abs(S1h - S1h2) + abs_floor
    out["S1"] = np.abs(res["S1"] - S1h2) / tol1
    tol2 = safety * (4.0 / 3.0) * np.abs(t_h - t_h2) + abs_floor
    out["S2_t"] = np.abs(res["S2_t"] - t_h2) / tol2
    tol3 = safety * (4.0 / 3.0) * np.abs(xi_h - xi_h2) + abs_floor
    out["S2_xi"] = np.abs(res["S2_xi"] - xi_h2) / tol3
    return out
