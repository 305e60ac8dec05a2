"""Solvability machinery for the codimension-2 Jacobi system on a chart.

Solves the corrected system

    Delta_M h^1 + |A_M|^2 h^1 = f^1 - sum_j c^j |A_M|^2 zhat_j
    Delta_M h^2               = f^2 - c^4 |A_M|^2

on the truncated chart with natural (zero-flux) far-field closure, the
corrections entering as Lagrange multipliers of the bordered system with
the weighted orthogonality constraints int |A_M|^2 h zhat_j = 0.  The
multipliers must reproduce the closed-form projection quadratures
c^j = int f zhat_j / int |A_M|^2 zhat_j^2, which is an independent check.

The zhat basis comes from Gram-Schmidt of the bounded Jacobi fields in
the |A_M|^2-weighted inner product; on the catenoid the rotational field
vanishes identically and is dropped.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DecayViolation, MeanNotZero, SolverFailure, UnbalancedLambda
from .surface import (SurfaceChart, jacobi_fields, laplace_beltrami_matrix,
                      second_fundamental_norm)

__all__ = [
    "JacobiSolution",
    "zhat_basis",
    "solve_corrected_jacobi",
    "laplace_invert_mean_zero",
    "build_h0",
    "end_remainder_proxy",
    "solve_jacobi_axisymmetric_1d",
    "star_norm_proxy",
]


@dataclass
class JacobiSolution:
    h1: np.ndarray
    h2: np.ndarray
    corrections: np.ndarray        # (c^1..c^J, c^4): first-block then second
    corrections_quadrature: np.ndarray
    defect: float
    star_norm: float


def _grid_data(chart: SurfaceChart):
    S1, S2 = chart.grid_mesh()
    w = chart.quad_weights().ravel()
    pot = second_fundamental_norm(chart, S1).ravel()
    return S1, S2, w, pot


def zhat_basis(chart: SurfaceChart, drop_tol: float = 1e-8):
    """|A_M|^2-orthonormalized bounded Jacobi fields on the grid.

    Returns (basis (n, J), labels).  Fields whose weighted norm is below
    ``drop_tol`` relative to the largest (the rotational field on any
    surface of revolution) are dropped with a warning.
    """
    S1, S2, w, pot = _grid_data(chart)
    cand = jacobi_fields(chart, S1, S2)
    labels = ["z0", "z1", "z2", "z3"]
    vecs, kept = [], []
    norms = [float(np.sum(w * pot * z.ravel() ** 2)) for z in cand]
    ref = max(norms)
    for z, lab, nrm in zip(cand, labels, norms):
        if nrm < drop_tol * ref:
            warnings.warn(f"dropping degenerate Jacobi field {lab} "
                          f"(weighted norm {nrm:.2e})")
            continue
        v = z.ravel().copy()
        for u in vecs:
            v -= np.sum(w * pot * u * v) * u
        nv = np.sqrt(np.sum(w * pot * v * v))
        vecs.append(v / nv)
        kept.append(lab)
    return np.stack(vecs, axis=1), kept


def _dtn_ring(n2: int):
    """Symmetric circulant |d/dtheta|^{1/2}-squared ring form F^-1 |k| F.

    Mode-wise absorbing far-field closure: the weak form of the decaying
    k-th angular mode contributes a boundary term h2 * |k| * u_k v_k,
    independently of the chart (the metric factors cancel against the
    boundary length element).
    """
    k = np.fft.fftfreq(n2, d=1.0 / n2)
    mags = np.abs(k)
    F = np.fft.fft(np.eye(n2), axis=0)
    ring = np.real(np.conj(F.T) @ (mags[:, None] * F)) / n2
    return (ring + ring.T) / 2


def _theta4_correction(chart: SurfaceChart):
    """Upgrade of the angular second derivative to fourth order.

    Returns the weighted correction W (1/G0) (D4 - D2) with periodic
    circulant stencils; symmetric per ring, vanishing on constants.
    """
    n1, n2 = chart.n1 + 1, chart.n2
    h2 = 2 * np.pi / n2
    _, G0 = chart.metric_diag(chart.x1)
    w = chart.quad_weights()
    j = np.arange(n2)
    rows, cols, vals = [], [], []
    # D4 - D2 stencil: (-u_{-2} + 16u_{-1} - 30u_0 + 16u_{+1} - u_{+2})/12h^2
    #                - (u_{-1} - 2u_0 + u_{+1})/h^2
    stencil = {(-2): -1.0 / 12, (-1): 16.0 / 12 - 1.0, 0: -30.0 / 12 + 2.0,
               1: 16.0 / 12 - 1.0, 2: -1.0 / 12}
    idx = np.arange(n1 * n2).reshape(n1, n2)
    for i in range(n1):
        coef = w[i, 0] / (G0[i] * h2**2)
        for off, val in stencil.items():
            rows.append(idx[i])
            cols.append(idx[i, (j + off) % n2])
            vals.append(np.full(n2, coef * val))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows).ravel(),
                                np.concatenate(cols).ravel())),
        shape=(n1 * n2, n1 * n2),
    )


def _dtn_augment(chart: SurfaceChart, K):
    """Add the absorbing-ring boundary form at both x1 ends.

    K represents the weighted operator W (Delta + ...) = -stiffness + ...,
    so the positive ring form enters with a minus sign.
    """
    n1, n2 = chart.n1 + 1, chart.n2
    h2 = 2 * np.pi / n2
    ring = h2 * _dtn_ring(n2)
    idx = np.arange(n1 * n2).reshape(n1, n2)
    rows, cols, vals = [], [], []
    for ring_idx in (idx[0], idx[-1]):
        rr, cc = np.meshgrid(ring_idx, ring_idx, indexing="ij")
        rows.append(rr.ravel()); cols.append(cc.ravel()); vals.append(ring.ravel())
    R = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=K.shape)
    return (K - R).tocsr()


def _bordered_solve(K, w, cols, rhs):
    """Solve [K, B; B^T, 0] [x; c] = [w*rhs; 0] with B = w*cols."""
    B = sp.csr_matrix(cols * w[:, None])
    m = cols.shape[1]
    M = sp.bmat([[K, B], [B.T, sp.csr_matrix((m, m))]], format="csc")
    b = np.concatenate([w * rhs, np.zeros(m)])
    try:
        sol = splu(M).solve(b)
    except Exception as exc:
        raise SolverFailure(str(exc)) from exc
    return sol[:-m] if m else sol, sol[len(rhs):]


def _check_decay(chart: SurfaceChart, f_flat, w):
    """Reject right-hand sides far from the r^-4 weighted class."""
    S1, S2 = chart.grid_mesh()
    r4 = chart.r_weight(S1, S2).ravel() ** 4
    wf = r4 * np.abs(f_flat)
    band = (np.abs(S1) > 0.8 * chart.x1_max).ravel()
    interior = ~band
    sup_in = np.max(wf[interior]) if np.any(interior) else 0.0
    sup_out = np.max(wf[band]) if np.any(band) else 0.0
    if sup_out > 50.0 * max(sup_in, 1e-300):
        raise DecayViolation("r^4-weighted magnitude grows toward the ends")


def star_norm_proxy(chart: SurfaceChart, h: np.ndarray):
    """Discrete version of |h|_inf + |r^2 Dh|_inf + |r^4 D^2 h|_inf.

    Covariant derivative magnitudes are approximated by metric-normalized
    chart differences; a sup-norm proxy for the weighted Holder norms.
    """
    S1, S2 = chart.grid_mesh()
    E0, G0 = chart.metric_diag(S1)
    r = chart.r_weight(S1, S2)
    h1 = chart.x1[1] - chart.x1[0]
    h2 = 2 * np.pi / chart.n2
    Hs = np.gradient(h, chart.x1, axis=0)
    Ht = (np.roll(h, -1, axis=1) - np.roll(h, 1, axis=1)) / (2 * h2)
    grad = np.sqrt(Hs**2 / E0 + Ht**2 / G0)
    Hss = np.gradient(Hs, chart.x1, axis=0)
    Hst = (np.roll(Hs, -1, axis=1) - np.roll(Hs, 1, axis=1)) / (2 * h2)
    Htt = (np.roll(Ht, -1, axis=1) - np.roll(Ht, 1, axis=1)) / (2 * h2)
    hess = np.sqrt(Hss**2 / E0**2 + 2 * Hst**2 / (E0 * G0) + Htt**2 / G0**2)
    return (float(np.max(np.abs(h)))
            + float(np.max(r**2 * grad))
            + float(np.max(r**4 * hess)))


def solve_corrected_jacobi(chart: SurfaceChart, f1: np.ndarray, f2: np.ndarray,
                           check_decay: bool = True) -> JacobiSolution:
    """Solve the corrected Jacobi system for a pair right-hand side."""
    S1, S2, w, pot = _grid_data(chart)
    if check_decay:
        _check_decay(chart, f1.ravel(), w)
        _check_decay(chart, f2.ravel(), w)
    L = laplace_beltrami_matrix(chart, bc="neumann")
    W = sp.diags(w)
    Z, labels = zhat_basis(chart)

    # first block: (Delta + |A|^2) h1 + sum c^j |A|^2 zhat_j = f1;
    # absorbing-ring closure keeps the resonant angular modes clean
    K1 = (W @ (L + sp.diags(pot))).tocsr()
    K1 = ((K1 + K1.T) / 2).tocsr() + _theta4_correction(chart)
    K1 = _dtn_augment(chart, K1)
    cols1 = pot[:, None] * Z
    h1_flat, c1 = _bordered_solve(K1, w, cols1, f1.ravel())

    # second block: Delta h2 + c^4 |A|^2 = f2
    K2 = (W @ L).tocsr()
    K2 = ((K2 + K2.T) / 2).tocsr() + _theta4_correction(chart)
    K2 = _dtn_augment(chart, K2)
    cols2 = pot[:, None]
    h2_flat, c4 = _bordered_solve(K2, w, cols2, f2.ravel())

    # independent quadrature route for the corrections
    cq1 = np.array([np.sum(w * f1.ravel() * Z[:, j]) /
                    np.sum(w * pot * Z[:, j] ** 2) for j in range(Z.shape[1])])
    cq4 = np.sum(w * f2.ravel()) / np.sum(w * pot)

    res1 = (L + sp.diags(pot)) @ h1_flat + cols1 @ c1 - f1.ravel()
    res2 = L @ h2_flat + cols2 @ c4 - f2.ravel()
    interior = np.ones((chart.n1 + 1, chart.n2), dtype=bool)
    interior[:2] = interior[-2:] = False
    defect = float(max(np.max(np.abs(res1[interior.ravel()])),
                       np.max(np.abs(res2[interior.ravel()]))))
    shape = (chart.n1 + 1, chart.n2)
    h1g, h2g = h1_flat.reshape(shape), h2_flat.reshape(shape)
    star = star_norm_proxy(chart, h1g) + star_norm_proxy(chart, h2g)
    return JacobiSolution(
        h1=h1g, h2=h2g,
        corrections=np.concatenate([c1, c4]),
        corrections_quadrature=np.concatenate([cq1, [cq4]]),
        defect=defect, star_norm=star,
    )


def laplace_invert_mean_zero(chart: SurfaceChart, g: np.ndarray,
                             mean_tol: float = 1e-8):
    """Solve Delta_M psi = g for mean-zero g, normalized int |A|^2 psi = 0.

    Returns (psi, multiplier); the multiplier of the |A|^2 correction
    column vanishes with the mean of g.
    """
    S1, S2, w, pot = _grid_data(chart)
    gf = g.ravel()
    mean = np.sum(w * gf)
    scale = np.sum(w * np.abs(gf)) + 1e-300
    if abs(mean) > mean_tol * scale:
        raise MeanNotZero(f"quadrature mean {mean:.3e} exceeds tolerance")
    L = laplace_beltrami_matrix(chart, bc="neumann")
    K = (sp.diags(w) @ L).tocsr()
    K = _dtn_augment(chart, ((K + K.T) / 2).tocsr())
    psi, mult = _bordered_solve(K, w, pot[:, None], gf)
    return psi.reshape(S1.shape), float(mult[0])


def _smoothstep(x):
    """Quintic smoothstep: 0 for x <= 0, 1 for x >= 1, C^2 monotone."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def build_h0(chart: SurfaceChart, lambdas, s_blend=(1.0, 2.0)):
    """Log-growing Jacobi field with prescribed balanced end coefficients.

    The analytic growth (-1)^j lambda_j log|x'| enters through a smooth
    lifting supported outside |x1| < s_blend[0]; the bounded remainder is
    solved with zero-flux closure and kernel constraints.  Returns
    (h0_grid, eta_grid, info).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if len(lambdas) != len(chart.ends):
        raise UnbalancedLambda("one lambda per end required")
    if abs(np.sum(lambdas)) > 1e-12:
        raise UnbalancedLambda(f"sum(lambda) = {np.sum(lambdas)} != 0")
    S1, S2, w, pot = _grid_data(chart)
    if not chart.ends:
        raise UnbalancedLambda("chart has no ends")

    # lifting carrying the exact log growth on each end
    lift = np.zeros_like(S1)
    p = chart.position(S1, S2)
    logr = 0.5 * np.log(p[..., 0] ** 2 + p[..., 1] ** 2 + 1e-300)
    chi = _smoothstep((np.abs(S1) - s_blend[0]) / (s_blend[1] - s_blend[0]))
    for j, (end, lam) in enumerate(zip(chart.ends, lambdas)):
        side = (S1 < 0) if end.orientation < 0 else (S1 > 0)
        lift = np.where(side, end.orientation * lam * logr * chi, lift)

    # J[lift] with boundary-agnostic 1D stencils: the zero-flux closure of
    # the discrete operator must not see the lift's boundary derivative,
    # which belongs to the prescribed log growth, not to the remainder.
    E0, _ = chart.metric_diag(S1)
    lift_ss = _d2_onesided(lift, chart.x1)
    j_lift = lift_ss / E0 + pot.reshape(S1.shape) * lift
    rhs = -j_lift.ravel()

    L = laplace_beltrami_matrix(chart, bc="neumann")
    J = L + sp.diags(pot)
    K = (sp.diags(w) @ J).tocsr()
    K = ((K + K.T) / 2).tocsr()
    Z, labels = zhat_basis(chart)
    eta, mult = _bordered_solve(K, w, pot[:, None] * Z, rhs)
    h0 = lift + eta.reshape(S1.shape)
    info = {
        "multipliers": mult,
        "labels": labels,
        "defect": float(np.max(np.abs((J @ h0.ravel())[_interior_mask(chart)]))),
    }
    return h0, eta.reshape(S1.shape), info


def _d2_onesided(u, x):
    """Second derivative along axis 0, one-sided at the ends, O(h^2)."""
    h = x[1] - x[0]
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    out[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / h**2
    out[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h**2
    return out


def _interior_mask(chart: SurfaceChart, margin: int = 2):
    m = np.ones((chart.n1 + 1, chart.n2), dtype=bool)
    m[:margin] = m[-margin:] = False
    return m.ravel()


def end_remainder_proxy(chart: SurfaceChart, h0: np.ndarray, lambdas,
                        s_lo: float = 3.0):
    """Check eta = h0 - (-1)^j lambda_j log r is bounded with r^2-gradient.

    Returns (sup |eta|, sup r^2 |D eta|) over the end regions |x1| > s_lo.
    """
    S1, S2, w, pot = _grid_data(chart)
    p = chart.position(S1, S2)
    logr = 0.5 * np.log(p[..., 0] ** 2 + p[..., 1] ** 2)
    eta = h0.copy()
    for end, lam in zip(chart.ends, np.asarray(lambdas, dtype=float)):
        side = (S1 < 0) if end.orientation < 0 else (S1 > 0)
        eta = np.where(side & (np.abs(S1) > 1e-12),
                       eta - end.orientation * lam * logr, eta)
    E0, G0 = chart.metric_diag(S1)
    r = chart.r_weight(S1, S2)
    ds = np.gradient(eta, chart.x1, axis=0)
    band = np.abs(S1) > s_lo
    sup_eta = float(np.max(np.abs(eta[band])))
    sup_grad = float(np.max((r**2 * np.abs(ds) / np.sqrt(E0))[band]))
    return sup_eta, sup_grad


def solve_jacobi_axisymmetric_1d(chart: SurfaceChart, f1d: np.ndarray):
    """Independent 1D solve for theta-independent data on the catenoid.

    Solves u'' + 2 sech^2(s) u = cosh(s)^2 f (the conformal reduction of
    the first Jacobi block) with zero-flux ends and the same weighted
    constraints restricted to theta-independent fields (zhat_3 only).
    """
    if chart.kind != "catenoid":
        raise SolverFailure("1D reduction implemented for the catenoid only")
    s = chart.x1
    n = len(s)
    h = s[1] - s[0]
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    # zero-flux closure
    A[0, 0] = -1.0 / h**2
    A[-1, -1] = -1.0 / h**2
    A = A.tocsr() + sp.diags(2.0 / np.cosh(s) ** 2)
    w1d = np.full(n, h)
    w1d[0] = w1d[-1] = h / 2
    # weighted constraint against tanh (the theta-independent kernel shadow)
    zc = np.tanh(s)
    pot = 2.0 / np.cosh(s) ** 4
    col = (pot * np.cosh(s) ** 2 * zc)[:, None]  # |A|^2 zhat in conformal gauge
    K = sp.diags(w1d) @ A
    K = ((K + K.T) / 2).tocsr()
    rhs = np.cosh(s) ** 2 * f1d
    u, c = _bordered_solve(K, w1d, col, rhs)
    return u, float(c[0])


def export_solution_json(sol: JacobiSolution, path):
    payload = {
        "corrections": list(map(float, sol.corrections)),
        "corrections_quadrature": list(map(float, sol.corrections_quadrature)),
        "defect": sol.defect,
        "star_norm": sol.star_norm,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload
