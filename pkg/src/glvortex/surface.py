"""Embedded-surface charts with metric, curvature, and Jacobi machinery.

Charts are immutable evaluator bundles over a parameter rectangle
(periodic in the second coordinate).  The built-in charts (catenoid,
comparison cylinder, plane) expose closed-form position, metric, shape
operator and unit normal; the discrete Laplace-Beltrami and Jacobi
operators work off nodal metric samples and are second-order accurate.

Orientation convention: the catenoid normal points away from its axis,
so the vertical translation field nu . e3 equals -tanh(s); the cylinder
normal points toward its axis so that its mean curvature is +1/R.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import EigenFailure, InvalidGrid

__all__ = [
    "EndData",
    "SurfaceChart",
    "catenoid_chart",
    "cylinder_chart",
    "plane_chart",
    "mean_curvature",
    "second_fundamental_norm",
    "total_curvature",
    "jacobi_fields",
    "jacobi_residual",
    "laplace_beltrami_matrix",
    "jacobi_matrix",
    "gauss_curvature_brioschi",
    "nondegeneracy_spectrum",
    "fit_end_asymptotics",
    "export_mesh_csv",
    "export_end_report",
]


@dataclass(frozen=True)
class EndData:
    """Asymptotic data of one end: height ~ a*log|x'| + b."""

    a: float
    b: float
    orientation: int  # (-1)^j sign used by the log-growing Jacobi field


class SurfaceChart:
    """Evaluator bundle for an embedded surface patch.

    Parameters are (x1, x2) with x1 in [-x1_max, x1_max] and x2 periodic
    of period 2*pi.  Subclasses provide vectorized closed-form geometry;
    the metric of every built-in chart is diagonal and independent of x2.
    """

    kind = "custom"

    def __init__(self, x1_max: float, n1: int, n2: int, ends=()):
        if n1 < 8 or n2 < 8 or n2 % 2:
            raise InvalidGrid("need n1, n2 >= 8 and n2 even")
        self.x1_max = float(x1_max)
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.x1 = np.linspace(-self.x1_max, self.x1_max, self.n1 + 1)
        self.x2 = np.arange(self.n2) * (2 * np.pi / self.n2)
        self.ends = tuple(ends)
        if self.ends:
            total = sum(e.a for e in self.ends)
            if abs(total) > 1e-12:
                raise InvalidGrid(f"end log-coefficients must balance, sum={total}")

    # --- closed-form geometry (subclasses override) -------------------
    def position(self, x1, x2):
        raise NotImplementedError

    def position_jacobian(self, x1, x2):
        """Tangent vectors X_1, X_2, shape (..., 2, 3)."""
        raise NotImplementedError

    def position_hessian(self, x1, x2):
        """Second derivatives X_{ij}, shape (..., 2, 2, 3)."""
        raise NotImplementedError

    def normal(self, x1, x2):
        raise NotImplementedError

    def metric_diag(self, x1):
        """Diagonal metric entries (E0, G0) as functions of x1."""
        raise NotImplementedError

    def dmetric_diag(self, x1):
        """(dE0/dx1, dG0/dx1)."""
        raise NotImplementedError

    def principal_curvatures(self, x1):
        """(kappa_1, kappa_2) in the (x1, x2) principal directions."""
        raise NotImplementedError

    def dprincipal_curvatures(self, x1):
        raise NotImplementedError

    # --- derived quantities -------------------------------------------
    def metric(self, x1, x2=None):
        E0, G0 = self.metric_diag(np.asarray(x1, dtype=float))
        out = np.zeros(np.shape(E0) + (2, 2))
        out[..., 0, 0] = E0
        out[..., 1, 1] = G0
        return out

    def shape_operator(self, x1, x2=None):
        k1, k2 = self.principal_curvatures(np.asarray(x1, dtype=float))
        out = np.zeros(np.shape(k1) + (2, 2))
        out[..., 0, 0] = k1
        out[..., 1, 1] = k2
        return out

    def second_fundamental_form(self, x1, x2=None):
        """B = g0 S (symmetric with respect to the metric by construction)."""
        g = self.metric(x1)
        return g @ self.shape_operator(x1)

    def area_element(self, x1):
        E0, G0 = self.metric_diag(np.asarray(x1, dtype=float))
        return np.sqrt(E0 * G0)

    def r_weight(self, x1, x2):
        """r(y) = sqrt(1 + |position|^2), the end-decay weight."""
        p = self.position(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        return np.sqrt(1.0 + np.sum(p**2, axis=-1))

    def grid_mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def quad_weights(self):
        """Trapezoid-in-x1 times exact-in-x2 area quadrature weights."""
        h1 = self.x1[1] - self.x1[0]
        h2 = 2 * np.pi / self.n2
        w1 = np.full(self.n1 + 1, h1)
        w1[0] = w1[-1] = h1 / 2
        S1, _ = self.grid_mesh()
        return self.area_element(S1) * w1[:, None] * h2


class CatenoidChart(SurfaceChart):
    kind = "catenoid"

    def position(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.stack([np.cosh(s) * np.cos(th), np.cosh(s) * np.sin(th), s], axis=-1)

    def position_jacobian(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        Xs = np.stack([np.sinh(s) * np.cos(th), np.sinh(s) * np.sin(th),
                       np.ones_like(s)], axis=-1)
        Xt = np.stack([-np.cosh(s) * np.sin(th), np.cosh(s) * np.cos(th),
                       np.zeros_like(s)], axis=-1)
        return np.stack([Xs, Xt], axis=-2)

    def position_hessian(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        ch, sh, c, si = np.cosh(s), np.sinh(s), np.cos(th), np.sin(th)
        z = np.zeros_like(s)
        Xss = np.stack([ch * c, ch * si, z], axis=-1)
        Xst = np.stack([-sh * si, sh * c, z], axis=-1)
        Xtt = np.stack([-ch * c, -ch * si, z], axis=-1)
        row1 = np.stack([Xss, Xst], axis=-2)
        row2 = np.stack([Xst, Xtt], axis=-2)
        return np.stack([row1, row2], axis=-3)

    def normal(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        ch = np.cosh(s)
        return np.stack([np.cos(th) / ch, np.sin(th) / ch, -np.tanh(s)], axis=-1)

    def metric_diag(self, x1):
        c2 = np.cosh(x1) ** 2
        return c2, c2

    def dmetric_diag(self, x1):
        d = 2 * np.cosh(x1) * np.sinh(x1)
        return d, d

    def principal_curvatures(self, x1):
        k = 1.0 / np.cosh(x1) ** 2
        return k, -k

    def dprincipal_curvatures(self, x1):
        dk = -2.0 * np.tanh(x1) / np.cosh(x1) ** 2
        return dk, -dk


class CylinderChart(SurfaceChart):
    """Round cylinder of radius R with axis e3; the non-minimal comparison.

    Normal points toward the axis, so kappa = (1/R, 0) along (x2, x1)...
    in the (x1, x2) = (axial, angular) ordering the curvatures are (0, 1/R).
    """

    kind = "cylinder"

    def __init__(self, radius, x1_max, n1, n2):
        self.radius = float(radius)
        super().__init__(x1_max, n1, n2, ends=())

    def position(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        R = self.radius
        return np.stack([R * np.cos(th), R * np.sin(th), s], axis=-1)

    def position_jacobian(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        R = self.radius
        z = np.zeros_like(s)
        Xs = np.stack([z, z, np.ones_like(s)], axis=-1)
        Xt = np.stack([-R * np.sin(th), R * np.cos(th), z], axis=-1)
        return np.stack([Xs, Xt], axis=-2)

    def position_hessian(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        R = self.radius
        z3 = np.zeros(s.shape + (3,))
        Xtt = np.stack([-R * np.cos(th), -R * np.sin(th), np.zeros_like(s)], axis=-1)
        row1 = np.stack([z3, z3], axis=-2)
        row2 = np.stack([z3, Xtt], axis=-2)
        return np.stack([row1, row2], axis=-3)

    def normal(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.stack([-np.cos(th), -np.sin(th), np.zeros_like(s)], axis=-1)

    def metric_diag(self, x1):
        one = np.ones_like(np.asarray(x1, dtype=float))
        return one, np.full_like(one, self.radius**2)

    def dmetric_diag(self, x1):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return z, z

    def principal_curvatures(self, x1):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return z, np.full_like(z, 1.0 / self.radius)

    def dprincipal_curvatures(self, x1):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return z, z


class PlaneChart(SurfaceChart):
    """Flat plane x3 = 0 in polar-free Cartesian-like parameters."""

    kind = "plane"

    def position(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.stack([s, th, np.zeros_like(s)], axis=-1)

    def position_jacobian(self, x1, x2):
        s, th = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        z = np.zeros_like(s)
        one = np.ones_like(s)
        X1 = np.stack([one, z, z], axis=-1)
        X2 = np.stack([z, one, z], axis=-1)
        return np.stack([X1, X2], axis=-2)

    def position_hessian(self, x1, x2):
        s, _ = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.zeros(s.shape + (2, 2, 3))

    def normal(self, x1, x2):
        s, _ = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        out = np.zeros(s.shape + (3,))
        out[..., 2] = 1.0
        return out

    def metric_diag(self, x1):
        one = np.ones_like(np.asarray(x1, dtype=float))
        return one, one

    def dmetric_diag(self, x1):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return z, z

    def principal_curvatures(self, x1):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return z, z

    def dprincipal_curvatures(self, x1):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return z, z


def catenoid_chart(s_max: float = 8.0, n_s: int = 128, n_theta: int = 64) -> SurfaceChart:
    """Catenoid (cosh s cos t, cosh s sin t, s) with its two log-ends."""
    if s_max < 3:
        raise InvalidGrid("catenoid chart needs s_max >= 3")
    ends = (EndData(a=-1.0, b=-math.log(2.0), orientation=-1),
            EndData(a=1.0, b=math.log(2.0), orientation=1))
    return CatenoidChart(s_max, n_s, n_theta, ends=ends)


def cylinder_chart(radius: float = 2.0, s_max: float = 6.0, n_s: int = 128,
                   n_theta: int = 64) -> SurfaceChart:
    return CylinderChart(radius, s_max, n_s, n_theta)


def plane_chart(half_width: float = 6.0, n1: int = 64, n2: int = 64) -> SurfaceChart:
    return PlaneChart(half_width, n1, n2)


# ---------------------------------------------------------------------------
# pointwise curvature functionals


def mean_curvature(chart: SurfaceChart, x1, x2=None):
    k1, k2 = chart.principal_curvatures(np.asarray(x1, dtype=float))
    return k1 + k2


def second_fundamental_norm(chart: SurfaceChart, x1, x2=None):
    k1, k2 = chart.principal_curvatures(np.asarray(x1, dtype=float))
    return k1**2 + k2**2


def total_curvature(chart: SurfaceChart) -> float:
    """Quadrature of |K| dA over the stored grid."""
    S1, _ = chart.grid_mesh()
    k1, k2 = chart.principal_curvatures(S1)
    return float(np.sum(np.abs(k1 * k2) * chart.quad_weights()))


def jacobi_fields(chart: SurfaceChart, x1, x2):
    """Bounded Jacobi fields (z0, z1, z2, z3) of the rigid motions."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    nu = chart.normal(x1, x2)
    p = chart.position(x1, x2)
    rot = np.stack([-p[..., 1], p[..., 0], np.zeros_like(p[..., 0])], axis=-1)
    z0 = np.sum(nu * rot, axis=-1)
    return z0, nu[..., 0], nu[..., 1], nu[..., 2]


# ---------------------------------------------------------------------------
# discrete operators on the chart grid


def laplace_beltrami_matrix(chart: SurfaceChart, bc: str = "dirichlet"):
    """Flux-form Laplace-Beltrami matrix on the full nodal grid.

    Second-order, symmetric with respect to the area weights; periodic in
    x2.  ``bc`` in {'dirichlet', 'neumann'} fixes the x1 closure: Dirichlet
    zeroes the boundary rows against the identity, Neumann imposes zero
    flux through the boundary faces.
    """
    if bc not in ("dirichlet", "neumann"):
        raise InvalidGrid(f"unknown bc {bc!r}")
    K = stiffness_matrix(chart)
    w = chart.quad_weights().ravel()
    L = sp.diags(-1.0 / w) @ K
    if bc == "dirichlet":
        n1, n2 = chart.n1 + 1, chart.n2
        idx = np.arange(n1 * n2).reshape(n1, n2)
        mask = np.zeros(n1 * n2, dtype=bool)
        mask[idx[0]] = mask[idx[-1]] = True
        keep = sp.diags((~mask).astype(float))
        L = keep @ L @ keep - sp.diags(mask.astype(float))
    return L.tocsr()


def stiffness_matrix(chart: SurfaceChart):
    """Symmetric positive form K with  u^T K v = int grad u . grad v dA.

    Exactly W-conjugate to the Laplace-Beltrami operator: the flux-form
    L = -W^{-1} K satisfies L 1 = 0 and W L symmetric, with trapezoid
    half-cells at the x1 boundary (the natural zero-flux closure).
    """
    n1, n2 = chart.n1 + 1, chart.n2
    h1 = chart.x1[1] - chart.x1[0]
    h2 = 2 * np.pi / n2
    s = chart.x1
    E0, G0 = chart.metric_diag(s)
    sg = np.sqrt(E0 * G0)
    sh = 0.5 * (s[:-1] + s[1:])
    E0h, G0h = chart.metric_diag(sh)
    c1h = np.sqrt(E0h * G0h) / E0h * (h2 / h1)   # face coefficient, x1 faces
    c2 = sg / G0 * (h1 / h2)                     # x2 faces at interior rows
    c2_bnd = c2 / 2.0                            # half cells at the boundary

    idx = np.arange(n1 * n2).reshape(n1, n2)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.broadcast_to(v, np.shape(r)).ravel().astype(float))

    for i in range(n1 - 1):
        r0, r1 = idx[i], idx[i + 1]
        add(r0, r0, np.full(n2, c1h[i]))
        add(r1, r1, np.full(n2, c1h[i]))
        add(r0, r1, np.full(n2, -c1h[i]))
        add(r1, r0, np.full(n2, -c1h[i]))
    jp = (np.arange(n2) + 1) % n2
    for i in range(n1):
        coef = c2_bnd[i] if i in (0, n1 - 1) else c2[i]
        r0, r1 = idx[i], idx[i, jp]
        add(r0, r0, np.full(n2, coef))
        add(r1, r1, np.full(n2, coef))
        add(r0, r1, np.full(n2, -coef))
        add(r1, r0, np.full(n2, -coef))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n1 * n2, n1 * n2),
    )


def area_weights_vector(chart: SurfaceChart):
    return chart.quad_weights().ravel()


def jacobi_matrix(chart: SurfaceChart, bc: str = "dirichlet"):
    """Discrete J = Laplace-Beltrami + |A_M|^2."""
    S1, _ = chart.grid_mesh()
    pot = second_fundamental_norm(chart, S1).ravel()
    L = laplace_beltrami_matrix(chart, bc)
    if bc == "dirichlet":
        mask = np.zeros(L.shape[0], dtype=bool)
        idx = np.arange(L.shape[0]).reshape(chart.n1 + 1, chart.n2)
        mask[idx[0]] = mask[idx[-1]] = True
        pot = np.where(mask, 0.0, pot)
    return L + sp.diags(pot)


def jacobi_residual(chart: SurfaceChart, field: np.ndarray, interior: int = 2) -> float:
    """Sup of |Delta_M field + |A_M|^2 field| on interior nodes."""
    J = jacobi_matrix(chart, bc="neumann")
    r = (J @ field.ravel()).reshape(chart.n1 + 1, chart.n2)
    return float(np.max(np.abs(r[interior:-interior, :])))


def gauss_curvature_brioschi(chart: SurfaceChart):
    """Gauss curvature from the metric alone (intrinsic, Liouville form).

    For the diagonal x2-independent metrics used here,
    K = -(1/(2 sqrt(EG))) d/dx1 (G'/sqrt(EG)), evaluated with second-order
    differences of nodal metric samples.  Independent of the shape
    operator, so it cross-checks det(S) = K.
    """
    s = chart.x1
    E0, G0 = chart.metric_diag(s)
    sg = np.sqrt(E0 * G0)
    dG = np.gradient(G0, s)
    K = -np.gradient(dG / sg, s) / (2 * sg)
    return K


def nondegeneracy_spectrum(chart: SurfaceChart, k: int = 6):
    """Low spectrum of the Jacobi operator in the chart-measure gauge.

    Returns (eigenvalues, eigenvectors) of the generalized symmetric
    problem K u = lambda W_chart u with Dirichlet far-field, where K is
    the area-weighted Jacobi form and W_chart the flat chart measure.  On
    the catenoid this is the conformally rescaled operator
    d_ss + d_tt + 2 sech^2(s), whose near-zero modes are exactly the
    shadows of the bounded Jacobi fields (the rotational field vanishes
    identically there).
    """
    n1, n2 = chart.n1 + 1, chart.n2
    idx = np.arange(n1 * n2).reshape(n1, n2)
    boundary = np.zeros(n1 * n2, dtype=bool)
    boundary[idx[0]] = boundary[idx[-1]] = True
    keep = ~boundary

    J = jacobi_matrix(chart, bc="neumann")
    w_area = area_weights_vector(chart)
    K = sp.diags(w_area) @ J
    K = (K + K.T) / 2.0
    h1 = chart.x1[1] - chart.x1[0]
    h2 = 2 * np.pi / chart.n2
    Wc = np.full(n1 * n2, h1 * h2)

    Ki = K[keep][:, keep].tocsc()
    Mi = sp.diags(Wc[keep]).tocsc()
    try:
        vals, vecs = eigsh(Ki, k=k, M=Mi, sigma=0.0, which="LM")
    except Exception as exc:  # pragma: no cover
        raise EigenFailure(str(exc)) from exc
    order = np.argsort(np.abs(vals))
    full = np.zeros((n1 * n2, k))
    full[keep] = vecs[:, order]
    return vals[order], full


def fit_end_asymptotics(chart: SurfaceChart, which: int, s_lo: float = 5.0):
    """Regress x3 against log|x'| on one end; returns (slope, intercept).

    ``which`` = +1 for the upper end (x1 -> +x1_max), -1 for the lower.
    """
    s = chart.x1[chart.x1 * which >= s_lo] if which > 0 else chart.x1[chart.x1 <= -s_lo]
    p = chart.position(s, np.zeros_like(s))
    logr = 0.5 * np.log(p[:, 0] ** 2 + p[:, 1] ** 2)
    slope, intercept = np.polyfit(logr, p[:, 2], 1)
    return float(slope), float(intercept)


def export_mesh_csv(chart: SurfaceChart, path):
    S1, S2 = chart.grid_mesh()
    P = chart.position(S1, S2)
    k1, k2 = chart.principal_curvatures(S1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi1", "xi2", "x", "y", "z", "kappa1", "kappa2"])
        for i in range(S1.shape[0]):
            for j in range(S1.shape[1]):
                w.writerow([f"{v:.17g}" for v in
                            (S1[i, j], S2[i, j], P[i, j, 0], P[i, j, 1],
                             P[i, j, 2], k1[i, j], k2[i, j] if np.ndim(k2) else k2)])


def export_end_report(chart: SurfaceChart, path):
    payload = {
        "ends": [{"a": e.a, "b": e.b} for e in chart.ends],
        "total_curvature": total_curvature(chart),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload
