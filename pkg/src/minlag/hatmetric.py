"""Blended metric near a scaffold given in product-chart form.

In chart coordinates y = (u, s) with W = {s = 0}, the product metric is
g_1 = g_W(u) + |ds|^2, where g_W is the flat metric pulled back to W.  The
blended metric is bump * g_1 + (1 - bump) * g with bump a function of |s|
equal to 1 below r_in and 0 above r_out.  W is totally geodesic for it
because g_1 is a product near W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import AffineScaffold, ProductScaffold, Scaffold
from .errors import ValidationError


def bump(r, r_in: float, r_out: float):
    """Quintic smoothstep: 1 for r <= r_in, 0 for r >= r_out, C^2 in between."""
    r = np.asarray(r, dtype=float)
    t = np.clip((r - r_in) / (r_out - r_in), 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


def bump_derivative(r, r_in: float, r_out: float):
    r = np.asarray(r, dtype=float)
    t = np.clip((r - r_in) / (r_out - r_in), 0.0, 1.0)
    return -30 * t**2 * (1 - t) ** 2 / (r_out - r_in)


def _exp_ramp(t):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def smooth_bump(r, r_in: float, r_out: float):
    """C^infinity cutoff: 1 for r <= r_in, 0 for r >= r_out, built from exp(-1/t)."""
    t = np.clip((np.asarray(r, dtype=float) - r_in) / (r_out - r_in), 0.0, 1.0)
    f, g = _exp_ramp(t), _exp_ramp(1.0 - t)
    return g / (f + g)


def smooth_bump_derivative(r, r_in: float, r_out: float):
    t = np.clip((np.asarray(r, dtype=float) - r_in) / (r_out - r_in), 0.0, 1.0)
    f, g = _exp_ramp(t), _exp_ramp(1.0 - t)
    with np.errstate(divide="ignore", invalid="ignore"):
        df = np.where(t > 0, f / np.where(t > 0, t, 1.0) ** 2, 0.0)
        dg = np.where(t < 1, g / np.where(t < 1, 1.0 - t, 1.0) ** 2, 0.0)
    # d/dt [g / (f + g)] with dg/dt = -dg
    return -(dg * f + g * df) / (f + g) ** 2 / (r_out - r_in)


class AffineChart:
    """Isometric chart of an affine scaffold: orthonormal tangent and normal coordinates."""

    def __init__(self, scaffold: AffineScaffold):
        a = scaffold.normals
        dim = a.shape[1]
        # a point of W: minimal-norm solution of a p = b
        self.origin = np.linalg.lstsq(a, scaffold.offsets, rcond=None)[0]
        q, _ = np.linalg.qr(np.hstack([a.T, np.eye(dim)]))
        self.frame = np.hstack([q[:, 2:dim], q[:, :2]])  # columns: tangent..., normal, normal
        self.dim = dim

    def to_chart(self, points):
        return (np.atleast_2d(points) - self.origin) @ self.frame

    def from_chart(self, coords):
        return np.atleast_2d(coords) @ self.frame.T + self.origin

    def chart_jacobian(self, coords):
        return np.broadcast_to(self.frame, (len(np.atleast_2d(coords)), self.dim, self.dim))


def chart_for(scaffold: Scaffold):
    if isinstance(scaffold, ProductScaffold):
        return scaffold
    if isinstance(scaffold, AffineScaffold):
        return AffineChart(scaffold)
    raise ValidationError(f"no product chart for {scaffold.describe()}", module="deform",
                          operation="build_hat_metric")


@dataclass
class HatMetric:
    scaffold: Scaffold
    chart: object
    r_in: float
    r_out: float

    @property
    def dim(self) -> int:
        return self.scaffold.dim

    def chart_metric(self, coords: np.ndarray) -> np.ndarray:
        """Blended metric in chart coordinates, shape (N, d, d)."""
        y = np.atleast_2d(coords)
        jac = self.chart.chart_jacobian(y)
        flat = np.swapaxes(jac, 1, 2) @ jac
        g1 = np.zeros_like(flat)
        k = self.dim - 2
        # product metric: restriction of g to W at the foot point, plus |ds|^2
        foot = y.copy()
        foot[:, k:] = 0.0
        jw = self.chart.chart_jacobian(foot)[:, :, :k]
        g1[:, :k, :k] = np.swapaxes(jw, 1, 2) @ jw
        g1[:, k:, k:] = np.eye(2)
        b = bump(np.linalg.norm(y[:, k:], axis=1), self.r_in, self.r_out)[:, None, None]
        return b * g1 + (1 - b) * flat

    def __call__(self, points) -> np.ndarray:
        """Blended metric at ambient points, as a matrix in ambient coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y = self.chart.to_chart(pts)
        inv = np.linalg.inv(self.chart.chart_jacobian(y))
        return np.swapaxes(inv, 1, 2) @ self.chart_metric(y) @ inv


def build_hat_metric(scaffold: Scaffold, r_in: float = 0.2, r_out: float = 0.5) -> HatMetric:
    if not 0 < r_in < r_out:
        raise ValidationError("cutoff radii need 0 < r_in < r_out", module="deform",
                              operation="build_hat_metric")
    return HatMetric(scaffold, chart_for(scaffold), float(r_in), float(r_out))


def _christoffel(metric: HatMetric, y: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gamma^i_{jk} at chart point y from central differences of the metric."""
    d = len(y)
    g = metric.chart_metric(y[None])[0]
    shifts = np.concatenate([y + h * np.eye(d), y - h * np.eye(d)])
    gs = metric.chart_metric(shifts)
    dg = (gs[:d] - gs[d:]) / (2 * h)  # dg[l, i, j] = d_l g_ij
    # lower[i, j, k] = 1/2 (d_j g_ik + d_k g_ij - d_i g_jk)
    lower = 0.5 * (np.einsum("jik->ijk", dg) + np.einsum("kij->ijk", dg) - dg)
    return np.linalg.solve(g, lower.reshape(d, -1)).reshape(d, d, d)


def geodesic_shoot(metric: HatMetric, p, v, T: float = 1.0, step: float = 1e-3) -> np.ndarray:
    """RK4 integration of the blended-metric geodesic from p with ambient velocity v.

    Returns the path in ambient coordinates, shape (steps + 1, d).
    """
    p = np.asarray(p, dtype=float)
    y = metric.chart.to_chart(p)[0]
    jac = metric.chart.chart_jacobian(y[None])[0]
    w = np.linalg.solve(jac, np.asarray(v, dtype=float))
    nsteps = int(round(T / step))

    def rhs(state):
        pos, vel = state[: len(y)], state[len(y):]
        gam = _christoffel(metric, pos)
        return np.concatenate([vel, -np.einsum("ijk,j,k->i", gam, vel, vel)])

    state = np.concatenate([y, w])
    path = [y.copy()]
    for _ in range(nsteps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * step * k1)
        k3 = rhs(state + 0.5 * step * k2)
        k4 = rhs(state + step * k3)
        state = state + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise ValidationError("geodesic left the chart", module="deform",
                                  operation="geodesic_shoot")
        path.append(state[: len(y)].copy())
    return metric.chart.from_chart(np.array(path))
