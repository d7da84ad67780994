"""Hamiltonian deformations of a scaffold and continuation onto the moved scaffold.

A section X of (TW)^omega defines the Hamiltonian

    H_X(p) = bump(|w|) * omega(X(q), w),   q = proj_W(p),  w = p - q,

which equals bump * (-a^2 s^1 + a^1 s^2) when w = s^1 E + s^2 F and
X = a^1 E + a^2 F.  Its Hamiltonian vector field X_H, defined by
omega(X_H, .) = dH, restricts to X on W.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ambient import (
    QuadricScaffold,
    Scaffold,
    UnionScaffold,
    omega_matrix,
    read_key_values,
)
from .deform import DeformationState, newton_solve
from .errors import ConvergenceError, ParseError, SolverError, ValidationError
from .hatmetric import smooth_bump as bump, smooth_bump_derivative as bump_derivative
from .mesh import BoundaryData, SimplicialPatch, betti_numbers

MIDPOINT_TOL = 1e-14
MIDPOINT_MAX_ITER = 50
MIDPOINT_FLOOR = 1e-10


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("SLAG_THREADS", "1")))
    except ValueError:
        return 1


# -- frames along W, batched ------------------------------------------------------
def frames_many(w: Scaffold, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Frame (E, F) of (TW)^omega at each point, by the same rule as scaffold_frame."""
    dim = w.dim
    om = omega_matrix(dim)
    a = w.gradients(points)
    q, _ = np.linalg.qr(om @ np.swapaxes(a, 1, 2))  # (N, d, 2)
    proj = q @ np.swapaxes(q, 1, 2)                # projector onto the complement
    e = np.zeros((len(points), dim))
    todo = np.ones(len(points), dtype=bool)
    for axis in range(dim):
        cand = proj[:, :, axis]
        ok = todo & (np.linalg.norm(cand, axis=1) > 1e-8)
        e[ok] = cand[ok]
        todo &= ~ok
    e /= np.linalg.norm(e, axis=1)[:, None]
    f = np.einsum("nij,nj->ni", proj, e @ om)  # project omega^T E
    f -= e * np.sum(e * f, axis=1)[:, None]
    pairing = np.einsum("ni,ij,nj->n", e, om, f)
    return e, f / pairing[:, None]


# -- sections --------------------------------------------------------------------------
class ScaffoldSection:
    """Vector field X on W with values in (TW)^omega."""

    name = "section"

    def vector(self, w: Scaffold, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, w: Scaffold, q: np.ndarray, h: float = 1e-6) -> np.ndarray:
        """d X / d q by central differences, shape (N, d, d)."""
        d = q.shape[1]
        shifts = np.concatenate([q[:, None, :] + h * np.eye(d), q[:, None, :] - h * np.eye(d)], axis=1)
        vals = self.vector(w, shifts.reshape(-1, d)).reshape(len(q), 2 * d, d)
        return np.swapaxes((vals[:, :d] - vals[:, d:]) / (2 * h), 1, 2)

    def coefficients(self, w: Scaffold, q: np.ndarray) -> np.ndarray:
        """(a^1, a^2) with X = a^1 E + a^2 F at each point."""
        q = np.atleast_2d(q)
        x = self.vector(w, q)
        e, f = frames_many(w, q)
        om = omega_matrix(w.dim)
        a1 = np.einsum("ni,ij,nj->n", x, om, f)
        a2 = np.einsum("ni,ij,nj->n", e, om, x)
        return np.stack([a1, a2], axis=1)

    def sup_norm(self, w: Scaffold, q: np.ndarray) -> float:
        return float(np.linalg.norm(self.vector(w, np.atleast_2d(q)), axis=1).max())

    @property
    def is_zero(self) -> bool:
        return False


class ConstantSection(ScaffoldSection):
    """X = a^1 E + a^2 F with constant coefficients in the scaffold frame.

    E follows the deterministic frame rule, which flips sign where the
    reference axis becomes omega-orthogonal to (TW)^omega.  On curved
    scaffolds X is therefore smooth only away from those points.
    """

    def __init__(self, a1: float = 0.0, a2: float = 0.0):
        self.a1, self.a2 = float(a1), float(a2)
        self.name = f"constant({self.a1:g}, {self.a2:g})"

    def vector(self, w, q):
        if self.is_zero:
            return np.zeros_like(q)
        e, f = frames_many(w, q)
        return self.a1 * e + self.a2 * f

    @property
    def is_zero(self) -> bool:
        return self.a1 == 0.0 and self.a2 == 0.0


class RadialSection(ScaffoldSection):
    """Section of a complex quadric whose time-one flow moves level c to c + delta.

    X(z) = mu * exp(2 i phi) * conj(z) coordinatewise, which is complex-normal
    to the quadric.  On the real slice the flow is a radial translation at
    speed mu * sqrt(c), so mu = sqrt(1 + delta / c) - 1 lands on level c + delta.
    """

    def __init__(self, delta: float):
        self.delta = float(delta)
        self.name = f"radial({self.delta:g})"

    def _params(self, w: Scaffold):
        if isinstance(w, UnionScaffold) or not isinstance(w, QuadricScaffold):
            raise ValidationError("radial sections need a single quadric scaffold",
                                  module="flow", operation="hamiltonian")
        c = w.c.real
        if c <= 0 or c + self.delta <= 0:
            raise ValidationError("radial section needs c > 0 and c + delta > 0",
                                  module="flow", operation="hamiltonian")
        mu = np.sqrt(1 + self.delta / c) - 1
        return mu, np.exp(2j * w.phases)

    def _matrix(self, w: Scaffold) -> np.ndarray:
        mu, rot = self._params(w)
        m = np.zeros((w.dim, w.dim))
        for k, r in enumerate(rot):
            i = 2 * k
            # z -> r * conj(z):  (x, y) -> (Re r x + Im r y, Im r x - Re r y)
            m[i:i + 2, i:i + 2] = [[r.real, r.imag], [r.imag, -r.real]]
        return mu * m

    def vector(self, w, q):
        return q @ self._matrix(w).T

    def jacobian(self, w, q, h=1e-6):
        return np.broadcast_to(self._matrix(w), (len(q), w.dim, w.dim))

    @property
    def is_zero(self) -> bool:
        return self.delta == 0.0


class SampledSection(ScaffoldSection):
    """Coefficients a^1, a^2 given at sample points, blended by inverse-distance weights."""

    def __init__(self, points, a1, a2, power: float = 2.0):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.a = np.stack([np.asarray(a1, dtype=float), np.asarray(a2, dtype=float)], axis=1)
        if len(self.a) != len(self.points) or not np.all(np.isfinite(self.a)):
            raise ValidationError("sampled section needs one finite (a1, a2) per sample point",
                                  module="flow", operation="ScaffoldSection")
        self.power = power
        self.name = f"sampled({len(self.points)} points)"

    def _coeffs(self, q):
        d2 = np.sum((q[:, None, :] - self.points[None]) ** 2, axis=2)
        wts = 1.0 / np.maximum(d2, 1e-300) ** (self.power / 2)
        wts /= wts.sum(axis=1, keepdims=True)
        return wts @ self.a

    def vector(self, w, q):
        e, f = frames_many(w, q)
        a = self._coeffs(q)
        return a[:, :1] * e + a[:, 1:] * f

    @property
    def is_zero(self) -> bool:
        return not np.any(self.a)


def parse_section_config(text: str) -> ScaffoldSection:
    """``section = radial(0.21)`` / ``constant(a1, a2)``, or ``type = sampled`` with
    ``points`` (rows separated by ``;``), ``a1`` and ``a2``."""
    op = "parse_section_config"
    kv = read_key_values(text, module="flow", operation=op)
    spec = kv.get("section", kv.get("type", "")).strip().lower()
    try:
        if spec.startswith("radial(") and spec.endswith(")"):
            return RadialSection(float(spec[7:-1]))
        if spec.startswith("constant(") and spec.endswith(")"):
            a1, a2 = (float(t) for t in spec[9:-1].split(","))
            return ConstantSection(a1, a2)
        if spec == "radial":
            return RadialSection(float(kv["delta"]))
        if spec == "constant":
            return ConstantSection(float(kv.get("a1", 0)), float(kv.get("a2", 0)))
        if spec == "sampled":
            pts = [[float(x) for x in row.split()] for row in kv["points"].split(";") if row.strip()]
            a1 = [float(x) for x in kv["a1"].split()]
            a2 = [float(x) for x in kv["a2"].split()]
            return SampledSection(pts, a1, a2)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad section description: {exc}", module="flow", operation=op) from exc
    raise ParseError(f"unknown section {spec!r}", module="flow", operation=op)


# -- Hamiltonian and flow ----------------------------------------------------------------
@dataclass
class FlowSpec:
    scaffold: Scaffold
    section: ScaffoldSection
    r_in: float = 0.2
    r_out: float = 1.0
    steps: int = 100
    scale: float = 1.0

    def scaled(self, t: float) -> FlowSpec:
        return FlowSpec(self.scaffold, self.section, self.r_in, self.r_out, self.steps,
                        self.scale * t)

    def _tube(self, p: np.ndarray):
        q, ok = self.scaffold.project_many(p, strict=False)
        w = p - q
        rho = np.linalg.norm(w, axis=1)
        ok &= rho < self.r_out
        return q, w, rho, ok

    def hamiltonian(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(p))
        if self.section.is_zero or self.scale == 0:
            return out
        q, w, rho, ok = self._tube(p)
        if ok.any():
            om = omega_matrix(p.shape[1])
            x = self.section.vector(self.scaffold, q[ok])
            h = np.einsum("ni,ij,nj->n", x, om, w[ok])
            out[ok] = self.scale * bump(rho[ok], self.r_in, self.r_out) * h
        return out

    def gradient(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(p)
        if self.section.is_zero or self.scale == 0:
            return out
        q, w, rho, ok = self._tube(p)
        if not ok.any():
            return out
        p, q, w, rho = p[ok], q[ok], w[ok], rho[ok]
        dim = p.shape[1]
        om = omega_matrix(dim)
        _, dq = self.scaffold.project_jacobian(p)
        x = self.section.vector(self.scaffold, q)
        dx = self.section.jacobian(self.scaffold, q)
        h = np.einsum("ni,ij,nj->n", x, om, w)
        i_dq = np.eye(dim) - dq
        om_w = w @ om.T                        # (omega w) per point
        grad_h = np.einsum("nji,nj->ni", dq, np.einsum("nji,nj->ni", dx, om_w))
        grad_h += np.einsum("nji,nj->ni", i_dq, x @ om)  # (I - Dq)^T omega^T X
        b = bump(rho, self.r_in, self.r_out)
        db = bump_derivative(rho, self.r_in, self.r_out)
        with np.errstate(invalid="ignore", divide="ignore"):
            grad_rho = np.where(rho[:, None] > 0,
                                np.einsum("nji,nj->ni", i_dq, w) / rho[:, None], 0.0)
        out[ok] = self.scale * (db[:, None] * h[:, None] * grad_rho + b[:, None] * grad_h)
        return out

    def vector_field(self, points) -> np.ndarray:
        """X_H with omega(X_H, .) = dH."""
        return self.gradient(points) @ omega_matrix(np.atleast_2d(points).shape[1]).T


def hamiltonian(section: ScaffoldSection, scaffold: Scaffold, r_in: float = 0.2,
                r_out: float = 1.0, steps: int = 100) -> FlowSpec:
    if not 0 < r_in < r_out:
        raise ValidationError("cutoff radii need 0 < r_in < r_out", module="flow",
                              operation="hamiltonian")
    return FlowSpec(scaffold, section, float(r_in), float(r_out), int(steps))


def _midpoint_chunk(spec: FlowSpec, x: np.ndarray, direction: float) -> np.ndarray:
    dt = direction / spec.steps
    x = x.copy()
    for _ in range(spec.steps):
        nxt = x + dt * spec.vector_field(x)
        active = np.ones(len(x), dtype=bool)
        prev = np.full(len(x), np.inf)
        for _ in range(MIDPOINT_MAX_ITER):
            upd = x[active] + dt * spec.vector_field(0.5 * (x[active] + nxt[active]))
            change = np.abs(upd - nxt[active]).max(axis=1)
            nxt[active] = upd
            scale = 1 + np.abs(upd).max(axis=1)
            # converged, or stalled at the rounding floor of the vector field
            done = (change <= MIDPOINT_TOL * scale) | (
                (change >= 0.5 * prev[active]) & (change <= MIDPOINT_FLOOR * scale))
            idx = np.nonzero(active)[0]
            prev[idx] = change
            active[idx[done]] = False
            if not active.any():
                break
        else:
            raise ConvergenceError("implicit midpoint iteration did not converge",
                                   module="flow", operation="time_one_flow")
        x = nxt
    return x


def time_one_flow(spec: FlowSpec, points, inverse: bool = False) -> np.ndarray:
    """Implicit-midpoint time-one map of X_H (or its inverse) applied to each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.section.is_zero or spec.scale == 0 or len(pts) == 0:
        return pts.copy()
    direction = -1.0 if inverse else 1.0
    nthreads = min(thread_count(), len(pts))
    if nthreads == 1:
        return _midpoint_chunk(spec, pts, direction)
    chunks = np.array_split(pts, nthreads)
    with ThreadPoolExecutor(nthreads) as pool:
        parts = list(pool.map(lambda c: _midpoint_chunk(spec, c, direction), chunks))
    return np.concatenate(parts)


class FlowedScaffold(Scaffold):
    """phi_X(W): membership through F o phi_X^{-1}, projection phi o proj_W o phi^{-1}."""

    def __init__(self, spec: FlowSpec, fd_step: float = 1e-6):
        self.spec = spec
        self.base = spec.scaffold
        self.dim = self.base.dim
        self.h = fd_step
        self.name = f"flowed[{self.base.describe()} by {spec.scale:g} x {spec.section.name}]"

    def _inverse_jacobian(self, points):
        d = self.dim
        p = np.atleast_2d(points)
        shifts = np.concatenate([p[:, None, :] + self.h * np.eye(d),
                                 p[:, None, :] - self.h * np.eye(d)], axis=1)
        img = time_one_flow(self.spec, shifts.reshape(-1, d), inverse=True).reshape(len(p), 2 * d, d)
        return np.swapaxes((img[:, :d] - img[:, d:]) / (2 * self.h), 1, 2)

    def values(self, points):
        return self.base.values(time_one_flow(self.spec, np.atleast_2d(points), inverse=True))

    def gradients(self, points):
        p = np.atleast_2d(points)
        pre = time_one_flow(self.spec, p, inverse=True)
        return self.base.gradients(pre) @ self._inverse_jacobian(p)

    def hessians(self, points):
        raise NotImplementedError("flowed scaffolds project through the base scaffold")

    def project_many(self, points, tol=1e-12, max_iter=50, strict=True):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pre = time_one_flow(self.spec, pts, inverse=True)
        q, ok = self.base.project_many(pre, tol, max_iter, strict=strict)
        return time_one_flow(self.spec, q), ok

    def project_jacobian(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.dim
        shifts = np.concatenate([p[:, None, :] + self.h * np.eye(d),
                                 p[:, None, :] - self.h * np.eye(d)], axis=1).reshape(-1, d)
        img = self.project_many(shifts)[0].reshape(len(p), 2 * d, d)
        jac = np.swapaxes((img[:, :d] - img[:, d:]) / (2 * self.h), 1, 2)
        return self.project_many(p)[0], jac


def default_radii(patch: SimplicialPatch) -> tuple[float, float]:
    """r_in = 0.2 and r_out = half the diameter of the boundary vertex set."""
    b = patch.vertices[patch.boundary_vertex_indices]
    diam = float(np.max(np.linalg.norm(b[:, None] - b[None], axis=-1)))
    return 0.2, 0.5 * diam


def continuation_solve(patch: SimplicialPatch, bdata: BoundaryData, scaffold: Scaffold,
                       section: ScaffoldSection, steps: int = 5, tol: float = 1e-10,
                       max_iter: int = 50, radii: tuple[float, float] | None = None,
                       flow_steps: int = 100) -> DeformationState:
    """Track a minimal Lagrangian along W_t = phi_{tX}(W), t = 1/steps, ..., 1."""
    b1 = betti_numbers(patch)[1]
    if b1 != 0:
        raise ValidationError(f"continuation needs b1 = 0, patch has b1 = {b1}",
                              module="flow", operation="continuation_solve")
    if steps < 1:
        raise ValidationError("steps must be >= 1", module="flow", operation="continuation_solve")
    r_in, r_out = radii or default_radii(patch)
    spec = hamiltonian(section, scaffold, r_in, r_out, flow_steps)
    state = newton_solve(patch, bdata, scaffold, tol=tol, max_iter=max_iter)
    if section.is_zero:
        return state
    for i in range(1, steps + 1):
        t = i / steps
        moved = FlowedScaffold(spec.scaled(t))
        try:
            start = DeformationState.build(patch, bdata, moved, state.field, state.theta)
            state = newton_solve(patch, bdata, moved, start, tol=tol, max_iter=max_iter,
                                 check_scaffold=False)
        except SolverError as exc:
            raise ConvergenceError(
                f"continuation failed at t = {t:g} (last good t = {(i - 1) / steps:g}): "
                f"{exc.message}", module="flow", operation="continuation_solve",
                last_state=state,
            ) from exc
        state.scaffold = moved
    return state


def load_section(path) -> ScaffoldSection:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read section file {path}: {exc}", module="flow",
                         operation="load_section") from exc
    return parse_section_config(text)
