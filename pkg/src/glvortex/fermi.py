"""Fermi and shifted Fermi coordinates around a surface chart.

The tube around a chart M is parametrized two ways:

* unshifted, unscaled:  X(y, z)  = y + z^1 nu_1(y) + z^2 e4,  |z| < tau(y),
* shifted, eps-scaled:  X_{eps,h}(y, t) = y + eps (t + h(y))^beta nu_beta(y),

with tau(y) = delta log(1 + r(y)), r(y) = sqrt(1 + |y|^2).  The pullback
metric splits as g_z + (dz^1)^2 + (dz^2)^2 with the exact closed form
g_z = g_0 (I - z^1 S)^2; the directional mean curvatures are the rational
functions H_z^beta = sum_l k_{l beta} / (1 - z^gamma k_{l gamma}).  The
fourth coordinate direction is flat (nu_2 = e4 is constant), so
k_{l 2} = 0 and H_z^2 vanishes identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import OutsideTube, SingularTube
from .surface import SurfaceChart, second_fundamental_norm, jacobi_matrix

__all__ = [
    "ShiftField",
    "ZeroShift",
    "LogEndShift",
    "GridShift",
    "CurvatureData",
    "FermiFrame",
    "fermi_map",
    "fermi_invert",
    "metric_gz",
    "mean_curvature_normal",
    "curvature_moments",
    "jacobi_operator_codim2",
    "export_expansion_report",
]

_FOCAL_SAFETY = 0.98


class ShiftField:
    """Normal shift h = (h^1, h^2) on the chart, with derivatives."""

    def value(self, x1, x2):
        raise NotImplementedError

    def grad(self, x1, x2):
        """d h^beta / d xi^j, shape (..., 2, 2), index order [j, beta]."""
        raise NotImplementedError

    def hess(self, x1, x2):
        """d^2 h^beta / d xi^i d xi^j, shape (..., 2, 2, 2): [i, j, beta]."""
        raise NotImplementedError


class ZeroShift(ShiftField):
    def value(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        return np.zeros(np.shape(x1) + (2,))

    def grad(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        return np.zeros(np.shape(x1) + (2, 2))

    def hess(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        return np.zeros(np.shape(x1) + (2, 2, 2))


class LogEndShift(ShiftField):
    """Closed-form log-growing Jacobi field of the catenoid.

    h^1 = c (s tanh s - 1) solves Delta_M h + |A_M|^2 h = 0 exactly and
    grows like c log r on both ends; h^2 = 0.  With end coefficients
    lambda = (-c, c) this matches the (-1)^j lambda_j log r prescription.
    """

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def lambdas(self):
        return (-self.scale, self.scale)

    def value(self, x1, x2):
        s = np.asarray(x1, dtype=float)
        out = np.zeros(np.shape(s) + (2,))
        out[..., 0] = self.scale * (s * np.tanh(s) - 1.0)
        return out

    def grad(self, x1, x2):
        s = np.asarray(x1, dtype=float)
        out = np.zeros(np.shape(s) + (2, 2))
        out[..., 0, 0] = self.scale * (np.tanh(s) + s / np.cosh(s) ** 2)
        return out

    def hess(self, x1, x2):
        s = np.asarray(x1, dtype=float)
        out = np.zeros(np.shape(s) + (2, 2, 2))
        sech2 = 1.0 / np.cosh(s) ** 2
        out[..., 0, 0, 0] = self.scale * 2.0 * sech2 * (1.0 - s * np.tanh(s))
        return out


class GridShift(ShiftField):
    """Shift sampled on the chart grid, splined per component."""

    def __init__(self, chart: SurfaceChart, h1_grid, h2_grid=None):
        from scipy.interpolate import RectBivariateSpline

        th = chart.x2
        th_ext = np.concatenate([th - 2 * np.pi, th, th + 2 * np.pi])

        def build(grid):
            ext = np.concatenate([grid, grid, grid], axis=1)
            return RectBivariateSpline(chart.x1, th_ext, ext, kx=3, ky=3)

        z = np.zeros((chart.n1 + 1, chart.n2))
        self._s1 = build(np.asarray(h1_grid, dtype=float))
        self._s2 = build(np.asarray(h2_grid, dtype=float) if h2_grid is not None else z)

    def _ev(self, spl, x1, x2, dx, dy):
        return spl(np.asarray(x1, float), np.mod(x2, 2 * np.pi), dx=dx, dy=dy, grid=False)

    def value(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(np.shape(x1) + (2,))
        out[..., 0] = self._ev(self._s1, x1, x2, 0, 0)
        out[..., 1] = self._ev(self._s2, x1, x2, 0, 0)
        return out

    def grad(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(np.shape(x1) + (2, 2))
        for b, spl in enumerate((self._s1, self._s2)):
            out[..., 0, b] = self._ev(spl, x1, x2, 1, 0)
            out[..., 1, b] = self._ev(spl, x1, x2, 0, 1)
        return out

    def hess(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(np.shape(x1) + (2, 2, 2))
        for b, spl in enumerate((self._s1, self._s2)):
            out[..., 0, 0, b] = self._ev(spl, x1, x2, 2, 0)
            out[..., 0, 1, b] = self._ev(spl, x1, x2, 1, 1)
            out[..., 1, 0, b] = out[..., 0, 1, b]
            out[..., 1, 1, b] = self._ev(spl, x1, x2, 0, 2)
        return out


@dataclass(frozen=True)
class CurvatureData:
    """Principal curvatures per normal direction and their moments."""

    k: np.ndarray  # shape (2, 2): k[l, beta] for l, beta in {1, 2}

    def moment(self, m: int, n: int) -> float:
        """H_{m,n} = sum_l k_{l1}^m k_{l2}^n."""
        return float(np.sum(self.k[:, 0] ** m * self.k[:, 1] ** n))

    def moment_table(self, max_order: int = 3):
        out = {}
        for m in range(max_order + 1):
            for n in range(max_order + 1 - m):
                if m + n >= 1:
                    out[(m, n)] = self.moment(m, n)
        return out


class FermiFrame:
    """Curvature data and coordinate maps for the tube around a chart.

    Immutable; evaluations are pure.  ``delta`` controls the tube-width
    function tau(y) = delta log(1 + r(y)); the focal obstruction
    |z^1| k < 1 is enforced independently of tau.
    """

    def __init__(self, chart: SurfaceChart, eps: float = 0.1,
                 shift: ShiftField | None = None, delta: float = 0.2):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.chart = chart
        self.eps = float(eps)
        self.shift = shift if shift is not None else ZeroShift()
        self.delta = float(delta)

    # --- tube geometry -------------------------------------------------
    def tau(self, x1, x2):
        return self.delta * np.log(1.0 + self.chart.r_weight(x1, x2))

    def _focal_ok(self, x1, z1):
        k1, k2 = self.chart.principal_curvatures(np.asarray(x1, dtype=float))
        return (1.0 - z1 * k1 > 1.0 - _FOCAL_SAFETY) & (1.0 - z1 * k2 > 1.0 - _FOCAL_SAFETY)

    # --- maps ------------------------------------------------------------
    def fermi_map_unscaled(self, x1, x2, z, check: bool = True):
        """X(y, z) = y + z^1 nu_1(y) + z^2 e4."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        z = np.asarray(z, dtype=float)
        p = self.chart.position(x1, x2)
        nu = self.chart.normal(x1, x2)
        if check:
            zn = np.sqrt(z[..., 0] ** 2 + z[..., 1] ** 2)
            if np.any(zn >= self.tau(x1, x2)):
                raise OutsideTube("|z| >= tau(y)")
            if not np.all(self._focal_ok(x1, z[..., 0])):
                raise SingularTube("focal point reached")
        out = np.zeros(np.broadcast(x1, x2).shape + (4,))
        out[..., :3] = p + z[..., :1] * nu
        out[..., 3] = z[..., 1]
        return out

    def fermi_map(self, x1, x2, t, check: bool = True):
        """Shifted, eps-scaled map X_{eps,h}(y, t) = y + eps (t + h) . nu."""
        t = np.asarray(t, dtype=float)
        h = self.shift.value(x1, x2)
        z = self.eps * (t + h)
        if check:
            zn = np.sqrt(z[..., 0] ** 2 + z[..., 1] ** 2)
            if np.any(zn >= self.tau(x1, x2)):
                raise OutsideTube("|t + h| >= tau(y) / eps")
        return self.fermi_map_unscaled(x1, x2, z, check=check)

    def fermi_invert(self, x, newton_tol: float = 1e-12, max_iter: int = 40):
        """Invert the Fermi map: x -> (xi, z, t).

        Vectorized over the leading axes of ``x``.  Uses the chart's
        rotational structure (1D Newton for the catenoid; closed forms for
        cylinder and plane).  Raises OutsideTube when the Newton iteration
        fails to locate a foot point.
        """
        x = np.asarray(x, dtype=float)
        xi, z1 = _invert3d(self.chart, x[..., :3], newton_tol, max_iter)
        z = np.stack([z1, x[..., 3]], axis=-1)
        t = z / self.eps - self.shift.value(xi[..., 0], xi[..., 1])
        return xi, z, t

    # --- metric and curvature -------------------------------------------
    def metric_gz(self, x1, z):
        """Exact tube metric g_z = g_0 (I - z^gamma A_gamma)^2 (2x2)."""
        x1 = np.asarray(x1, dtype=float)
        z = np.asarray(z, dtype=float)
        E0, G0 = self.chart.metric_diag(x1)
        k1, k2 = self.chart.principal_curvatures(x1)
        f1 = 1.0 - z[..., 0] * k1
        f2 = 1.0 - z[..., 0] * k2
        if np.any(f1 * f2 <= 0) or np.any(f1 <= 0):
            raise SingularTube("det(I - z^gamma A_gamma) <= 0")
        out = np.zeros(np.shape(f1) + (2, 2))
        out[..., 0, 0] = E0 * f1**2
        out[..., 1, 1] = G0 * f2**2
        return out

    def metric_full(self, x1, z):
        """Pullback 4-metric g_z + dz^1^2 + dz^2^2 in (xi, z) coordinates."""
        g2 = self.metric_gz(x1, z)
        out = np.zeros(g2.shape[:-2] + (4, 4))
        out[..., :2, :2] = g2
        out[..., 2, 2] = 1.0
        out[..., 3, 3] = 1.0
        return out

    def mean_curvature_normal(self, x1, z, beta: int):
        """Exact H_z^beta = sum_l k_{l beta} / (1 - z^gamma k_{l gamma})."""
        x1 = np.asarray(x1, dtype=float)
        z = np.asarray(z, dtype=float)
        k = self._k_pairs(x1)
        den = 1.0 - z[..., 0, None] * k[..., :, 0] - z[..., 1, None] * k[..., :, 1]
        if np.any(den <= 1.0 - _FOCAL_SAFETY):
            raise SingularTube("focal point reached")
        return np.sum(k[..., :, beta - 1] / den, axis=-1)

    def mean_curvature_quadratic(self, x1, z, beta: int):
        """Taylor expansion of H_z^beta through quadratic order in z.

        Includes the constant moment (zero on a minimal chart), the linear
        and the quadratic moments; the remainder is O(|z|^3).
        """
        x1 = np.asarray(x1, dtype=float)
        z = np.asarray(z, dtype=float)
        k = self._k_pairs(x1)
        kb = k[..., :, beta - 1]
        zdot = z[..., 0, None] * k[..., :, 0] + z[..., 1, None] * k[..., :, 1]
        return np.sum(kb * (1.0 + zdot + zdot**2), axis=-1)

    def _k_pairs(self, x1):
        """Principal curvature pairs k[l, beta], flat fourth direction."""
        k1, k2 = self.chart.principal_curvatures(x1)
        out = np.zeros(np.shape(k1) + (2, 2))
        out[..., 0, 0] = k1
        out[..., 1, 0] = k2
        return out

    def curvature_moments(self, x1) -> CurvatureData:
        k = self._k_pairs(float(x1))
        return CurvatureData(k=k)

    def jacobi_operator_codim2(self, phi1: np.ndarray, phi2: np.ndarray):
        """Apply (Delta_M + H-matrix) to a pair field on the chart grid.

        For the flat fourth direction the moment matrix reduces to
        diag(|A_M|^2, 0), decoupling the system into
        (Delta_M + |A_M|^2) phi^1 and Delta_M phi^2.
        """
        ch = self.chart
        S1, _ = ch.grid_mesh()
        from .surface import laplace_beltrami_matrix

        L = laplace_beltrami_matrix(ch, bc="neumann")
        k = self._k_pairs(S1)
        H20 = np.sum(k[..., :, 0] ** 2, axis=-1).ravel()
        H11 = np.sum(k[..., :, 0] * k[..., :, 1], axis=-1).ravel()
        H02 = np.sum(k[..., :, 1] ** 2, axis=-1).ravel()
        p1, p2 = phi1.ravel(), phi2.ravel()
        out1 = L @ p1 + H20 * p1 + H11 * p2
        out2 = L @ p2 + H11 * p1 + H02 * p2
        return out1.reshape(phi1.shape), out2.reshape(phi2.shape)


def _invert3d(chart: SurfaceChart, xp, tol, max_iter):
    """Foot point and signed normal offset of 3D points, vectorized."""
    xp = np.asarray(xp, dtype=float)
    kind = chart.kind
    if kind == "plane":
        xi = np.stack([xp[..., 0], xp[..., 1]], axis=-1)
        return xi, xp[..., 2]
    rho = np.hypot(xp[..., 0], xp[..., 1])
    theta = np.arctan2(xp[..., 1], xp[..., 0])
    if kind == "cylinder":
        s = xp[..., 2]
        xi = np.stack([s, np.mod(theta, 2 * np.pi)], axis=-1)
        # inward normal: z1 = (x - p) . nu = R - rho
        return xi, chart.radius - rho
    if kind == "catenoid":
        # rotational symmetry: minimize (rho - cosh s)^2 + (x3 - s)^2 over s
        s = xp[..., 2].copy()
        for _ in range(max_iter):
            ch_, sh_ = np.cosh(s), np.sinh(s)
            g = -(rho - ch_) * sh_ - (xp[..., 2] - s)
            gp = sh_**2 - (rho - ch_) * ch_ + 1.0
            gp = np.where(np.abs(gp) < 1e-9, 1e-9, gp)
            step = g / gp
            step = np.clip(step, -0.5, 0.5)
            s = s - step
            if np.max(np.abs(step)) < tol:
                break
        else:
            if np.max(np.abs(step)) > 1e-6:
                raise OutsideTube("foot-point Newton did not converge")
        xi = np.stack([s, np.mod(theta, 2 * np.pi)], axis=-1)
        p = chart.position(s, theta)
        nu = chart.normal(s, theta)
        z1 = np.sum((xp - p) * nu, axis=-1)
        return xi, z1
    # generic fallback: 2D Newton from a caller-provided guess is not
    # implemented for custom charts
    raise NotImplementedError(f"fermi_invert for chart kind {kind!r}")


# module-level wrappers matching the operation names


def fermi_map(frame: FermiFrame, x1, x2, t, check: bool = True):
    return frame.fermi_map(x1, x2, t, check=check)


def fermi_invert(frame: FermiFrame, x):
    return frame.fermi_invert(x)


def metric_gz(frame: FermiFrame, x1, z):
    return frame.metric_gz(x1, z)


def mean_curvature_normal(frame: FermiFrame, x1, z, beta: int):
    exact = frame.mean_curvature_normal(x1, z, beta)
    quad = frame.mean_curvature_quadratic(x1, z, beta)
    return exact, quad


def curvature_moments(frame: FermiFrame, x1) -> CurvatureData:
    return frame.curvature_moments(x1)


def jacobi_operator_codim2(frame: FermiFrame, phi1, phi2):
    return frame.jacobi_operator_codim2(phi1, phi2)


def export_expansion_report(frame: FermiFrame, samples, path):
    """JSON report {xi, z, H_exact, H_quadratic, remainder} per sample."""
    rows = []
    for (x1, x2, z1, z2) in samples:
        z = np.array([z1, z2])
        ex = float(frame.mean_curvature_normal(x1, np.array([z]), 1)[0])
        qd = float(frame.mean_curvature_quadratic(x1, np.array([z]), 1)[0])
        rows.append({
            "xi": [x1, x2],
            "z": [z1, z2],
            "H_exact": ex,
            "H_quadratic": qd,
            "remainder": ex - qd,
        })
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows
