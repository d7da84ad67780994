"""Flat Calabi-Yau structure on C^n = R^{2n} and level-set scaffolds.

Coordinates are ordered (x_1, y_1, ..., x_n, y_n).  The metric is the
identity, omega = sum dx_i ^ dy_i, J rotates each (x_i, y_i) pair by a
quarter turn and alpha = dz_1 ^ ... ^ dz_n.  All forms have constant
coefficients, so their integrals over affine simplices are exact.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ParseError, ProjectionError, ScaffoldError, ValidationError

CONDITION_TOL = 1e-8
NONDEGENERACY_TOL = 1e-8


def omega_matrix(dim: int) -> np.ndarray:
    """Matrix W with omega(u, v) = u @ W @ v."""
    w = np.zeros((dim, dim))
    for i in range(0, dim, 2):
        w[i, i + 1] = 1.0
        w[i + 1, i] = -1.0
    return w


def j_matrix(dim: int) -> np.ndarray:
    """Complex structure (x, y) -> (-y, x) on each coordinate pair."""
    j = np.zeros((dim, dim))
    for i in range(0, dim, 2):
        j[i, i + 1] = -1.0
        j[i + 1, i] = 1.0
    return j


@dataclass(frozen=True)
class AmbientSpace:
    n: int

    @property
    def dim(self) -> int:
        return 2 * self.n

    @cached_property
    def omega(self) -> np.ndarray:
        return omega_matrix(self.dim)

    @cached_property
    def J(self) -> np.ndarray:
        return j_matrix(self.dim)

    @cached_property
    def g(self) -> np.ndarray:
        return np.eye(self.dim)

    def omega_eval(self, u, v) -> float:
        return omega_eval(u, v)

    def alpha(self, vectors) -> complex:
        """alpha evaluated on n vectors."""
        return complex(np.linalg.det(to_complex(np.asarray(vectors, dtype=float))))


def to_complex(vectors: np.ndarray) -> np.ndarray:
    """(..., 2n) real -> (..., n) complex with z_i = x_i + i y_i."""
    return vectors[..., 0::2] + 1j * vectors[..., 1::2]


def from_complex(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def omega_eval(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size % 2:
        raise ValidationError(
            f"omega needs two vectors of equal even dimension, got {u.shape} and {v.shape}",
            module="ambient", operation="omega_eval",
        )
    return float(np.sum(u[0::2] * v[1::2] - u[1::2] * v[0::2]))


def _omega_batch(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.sum(u[..., 0::2] * v[..., 1::2] - u[..., 1::2] * v[..., 0::2], axis=-1)


def pullback_omega(points, pair=(1, 2)) -> float:
    """omega on the edge vectors p_i - p_0, p_j - p_0 of a simplex."""
    points = np.asarray(points, dtype=float)
    i, j = pair
    return omega_eval(points[i] - points[0], points[j] - points[0])


def _check_simplex(points: np.ndarray, k: int, op: str):
    edges = points[1:] - points[0]
    gram = edges @ edges.T
    longest = max(np.linalg.norm(a - b) for a in points for b in points)
    if longest == 0 or math.sqrt(max(np.linalg.det(gram), 0.0)) < 1e-12 * longest**k:
        raise ValidationError("degenerate simplex", module="ambient", operation=op)


def omega_integral(points) -> float:
    """Exact integral of omega over an oriented affine 2-simplex."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] != 3:
        raise ValueError("omega_integral needs a 2-simplex (3 points)")
    _check_simplex(points, 2, "omega_integral")
    return 0.5 * pullback_omega(points)


def alpha_integral(points, theta: float = 0.0) -> complex:
    """Exact integral of exp(-i theta) alpha over an oriented affine n-simplex in C^n."""
    points = np.asarray(points, dtype=float)
    n = points.shape[1] // 2
    if points.shape[0] != n + 1:
        raise ValueError(f"alpha_integral needs an {n}-simplex ({n + 1} points)")
    _check_simplex(points, n, "alpha_integral")
    z = to_complex(points[1:] - points[0])
    return complex(np.exp(-1j * theta) * np.linalg.det(z) / math.factorial(n))


def omega_integrals(positions: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Vectorized omega integrals over many oriented triangles."""
    p = positions[triangles]
    return 0.5 * _omega_batch(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def alpha_integrals(positions: np.ndarray, simplices: np.ndarray, theta: float = 0.0) -> np.ndarray:
    p = positions[simplices]
    n = simplices.shape[1] - 1
    z = to_complex(p[:, 1:] - p[:, :1])
    return np.exp(-1j * theta) * np.linalg.det(z) / math.factorial(n)


# -- scaffolds ------------------------------------------------------------
class Scaffold:
    """Codimension-2 submanifold W = {F_1 = F_2 = 0} of R^{2n}.

    Subclasses supply batched ``values`` (N, 2), ``gradients`` (N, 2, d)
    and ``hessians`` (N, 2, d, d).
    """

    dim: int
    name = "scaffold"

    def values(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessians(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def components(self) -> list[Scaffold]:
        return [self]

    def describe(self) -> str:
        return self.name

    # evaluation
    def evaluate(self, p) -> tuple[float, float, np.ndarray, np.ndarray]:
        """(F_1, F_2, grad F_1, grad F_2) at a single point."""
        p = np.asarray(p, dtype=float)[None]
        f = self.values(p)[0]
        g = self.gradients(p)[0]
        return float(f[0]), float(f[1]), g[0].copy(), g[1].copy()

    # projection
    def project_many(self, points, tol: float = 1e-12, max_iter: int = 50,
                     strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Closest-point projection of each row of ``points`` onto W.

        Returns (projected points, success mask).  With ``strict`` a failed
        point raises ProjectionError instead.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        q, lam, ok = _kkt_project(self, pts, tol, max_iter)
        if strict and not ok.all():
            bad = int(np.nonzero(~ok)[0][0])
            raise ProjectionError(
                f"projection onto {self.describe()} failed at point {pts[bad].tolist()}",
                module="ambient", operation="scaffold_project", point=bad,
            )
        return q, ok

    def project(self, p) -> np.ndarray:
        return self.project_many(np.asarray(p, dtype=float)[None])[0][0]

    def project_jacobian(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Projected points and the Jacobian of the projection map at ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        q, lam, ok = _kkt_project(self, pts, 1e-12, 50)
        if not ok.all():
            raise ProjectionError(
                f"projection onto {self.describe()} failed", module="ambient",
                operation="scaffold_project",
            )
        return q, _projection_jacobian(self, q, lam)


def _kkt_project(w: Scaffold, pts: np.ndarray, tol: float, max_iter: int):
    """Closest points on W; points already on W are returned unchanged with lam = 0."""
    on_w = np.abs(w.values(pts)).max(axis=1) <= tol
    q = pts.copy()
    lam = np.zeros((len(pts), 2))
    ok = np.ones(len(pts), dtype=bool)
    if not on_w.all():
        off = ~on_w
        q[off], lam[off], ok[off] = _kkt_newton(w, pts[off], tol, max_iter)
    return q, lam, ok


def _kkt_newton(w: Scaffold, pts: np.ndarray, tol: float, max_iter: int):
    """Newton iteration on F(q) = 0, p - q = A(q)^T lam (closest point)."""
    n_pts, dim = pts.shape
    q = pts.copy()
    ok = np.ones(n_pts, dtype=bool)
    scale = 1.0 + np.abs(pts).max(axis=1)
    # Gauss-Newton warm start with minimal-norm corrections, masked per point so
    # that each result is independent of the rest of the batch
    warm = np.ones(n_pts, dtype=bool)
    for _ in range(8):
        f = w.values(q[warm])
        warm[np.nonzero(warm)[0][np.abs(f).max(axis=1) <= 1e-3]] = False
        if not (warm & ok).any():
            break
        sel = warm & ok
        f = w.values(q[sel])
        a = w.gradients(q[sel])
        gram = a @ np.swapaxes(a, 1, 2)
        sing = np.abs(np.linalg.det(gram)) < 1e-20 * scale[sel] ** 4
        idx = np.nonzero(sel)[0]
        ok[idx[sing]] = False
        gram[sing] = np.eye(2)
        step = np.linalg.solve(gram, f[..., None])[..., 0]
        q[idx[~sing]] -= np.einsum("nkd,nk->nd", a, step)[~sing]
    a = w.gradients(q)
    gram = a @ np.swapaxes(a, 1, 2)
    bad = np.abs(np.linalg.det(gram)) < 1e-20 * scale**4
    ok &= ~bad
    gram[bad] = np.eye(2)
    lam = np.linalg.solve(gram, np.einsum("nkd,nd->nk", a, pts - q)[..., None])[..., 0]
    converged = np.zeros(n_pts, dtype=bool)
    eye = np.eye(dim)
    for _ in range(max_iter):
        f = w.values(q)
        a = w.gradients(q)
        r1 = pts - q - np.einsum("nkd,nk->nd", a, lam)
        err = np.maximum(np.abs(f).max(axis=1), np.abs(r1).max(axis=1) / scale)
        converged = ok & (np.abs(f).max(axis=1) <= tol) & (np.abs(r1).max(axis=1) <= 1e-13 * scale)
        if np.all(converged | ~ok):
            break
        h = w.hessians(q)
        m = eye + np.einsum("nk,nkde->nde", lam, h)
        kkt = np.zeros((n_pts, dim + 2, dim + 2))
        kkt[:, :dim, :dim] = m
        kkt[:, :dim, dim:] = np.swapaxes(a, 1, 2)
        kkt[:, dim:, :dim] = a
        rhs = np.concatenate([r1, -f], axis=1)
        active = ok & ~converged & np.isfinite(err)
        sing = np.abs(np.linalg.det(kkt)) < 1e-30
        ok &= ~(active & sing)
        active &= ~sing
        if not active.any():
            break
        sol = np.linalg.solve(kkt[active], rhs[active][..., None])[..., 0]
        q[active] += sol[:, :dim]
        lam[active] += sol[:, dim:]
    ok &= converged & np.all(np.isfinite(q), axis=1)
    return q, lam, ok


def _projection_jacobian(w: Scaffold, q: np.ndarray, lam: np.ndarray) -> np.ndarray:
    n_pts, dim = q.shape
    a = w.gradients(q)
    h = w.hessians(q)
    kkt = np.zeros((n_pts, dim + 2, dim + 2))
    kkt[:, :dim, :dim] = np.eye(dim) + np.einsum("nk,nkde->nde", lam, h)
    kkt[:, :dim, dim:] = np.swapaxes(a, 1, 2)
    kkt[:, dim:, :dim] = a
    rhs = np.zeros((dim + 2, dim))
    rhs[:dim] = np.eye(dim)
    sol = np.linalg.solve(kkt, np.broadcast_to(rhs, (n_pts, dim + 2, dim)))
    return sol[:, :dim, :]


class QuadricScaffold(Scaffold):
    """Complex quadric sum_k (exp(-i phi_k) z_k)^2 = c; F = (Re, Im) of the difference."""

    def __init__(self, c: float = 1.0, n: int = 2, phases=None):
        self.c = complex(c)
        self.n = n
        self.dim = 2 * n
        self.phases = np.zeros(n) if phases is None else np.asarray(phases, dtype=float)
        self._rot = np.exp(-1j * self.phases)
        self.name = f"quadric(c={c:g})"

    def values(self, points):
        z = to_complex(points)
        g = np.sum((self._rot * z) ** 2, axis=1) - self.c
        return np.stack([g.real, g.imag], axis=1)

    def gradients(self, points):
        z = to_complex(points)
        dg = 2 * self._rot**2 * z  # dG = sum dg_k dz_k
        out = np.empty((len(points), 2, self.dim))
        out[:, 0, 0::2] = dg.real
        out[:, 0, 1::2] = -dg.imag
        out[:, 1, 0::2] = dg.imag
        out[:, 1, 1::2] = dg.real
        return out

    def hessians(self, points):
        h = 2 * self._rot**2
        one = np.zeros((2, self.dim, self.dim))
        for k in range(self.n):
            i = 2 * k
            re, im = h[k].real, h[k].imag
            one[0, i:i + 2, i:i + 2] = [[re, -im], [-im, -re]]
            one[1, i:i + 2, i:i + 2] = [[im, re], [re, -im]]
        return np.broadcast_to(one, (len(points), 2, self.dim, self.dim))


class AffineScaffold(Scaffold):
    """Affine plane {a_1 . p = b_1, a_2 . p = b_2}."""

    def __init__(self, normals, offsets, name: str | None = None):
        self.normals = np.asarray(normals, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.dim = self.normals.shape[1]
        self.name = name or "affine"

    @classmethod
    def coordinate_plane(cls, dim: int, coords, values=(0.0, 0.0)):
        """{p[coords[0]] = values[0], p[coords[1]] = values[1]}; coords are indices or names."""
        idx = [_coord_index(c, dim) for c in coords]
        normals = np.zeros((2, dim))
        normals[0, idx[0]] = 1.0
        normals[1, idx[1]] = 1.0
        label = ", ".join(f"{_coord_name(i)}={v:g}" for i, v in zip(idx, values))
        return cls(normals, values, name=f"affine({label})")

    def values(self, points):
        return points @ self.normals.T - self.offsets

    def gradients(self, points):
        return np.broadcast_to(self.normals, (len(points), 2, self.dim))

    def hessians(self, points):
        return np.zeros((len(points), 2, self.dim, self.dim))


def _coord_index(c, dim: int) -> int:
    if isinstance(c, (int, np.integer)):
        return int(c)
    c = str(c).strip()
    axis, k = c[0], int(c[1:]) - 1
    if axis not in "xy" or not 0 <= 2 * k < dim:
        raise ValueError(f"bad coordinate name {c!r}")
    return 2 * k + (axis == "y")


def _coord_name(i: int) -> str:
    return f"{'xy'[i % 2]}{i // 2 + 1}"


class ProductScaffold(Scaffold):
    """Curved surface W = {x2 = k/2 (x1^2 + y1^2), y2 = 0} in C^2 with a global product chart.

    The chart (u, v, s1, s2) -> (u, v, k/2 (u^2 + v^2) + s1, s2) identifies a
    neighbourhood of W with W x R^2, W = {s = 0}.
    """

    def __init__(self, curvature: float = 0.5):
        self.k = float(curvature)
        self.dim = 4
        self.name = f"product(curvature={curvature:g})"

    def _phi(self, u, v):
        return 0.5 * self.k * (u**2 + v**2)

    def values(self, points):
        return np.stack(
            [points[:, 2] - self._phi(points[:, 0], points[:, 1]), points[:, 3]], axis=1
        )

    def gradients(self, points):
        out = np.zeros((len(points), 2, 4))
        out[:, 0, 0] = -self.k * points[:, 0]
        out[:, 0, 1] = -self.k * points[:, 1]
        out[:, 0, 2] = 1.0
        out[:, 1, 3] = 1.0
        return out

    def hessians(self, points):
        out = np.zeros((len(points), 2, 4, 4))
        out[:, 0, 0, 0] = -self.k
        out[:, 0, 1, 1] = -self.k
        return out

    # product chart
    def to_chart(self, points):
        points = np.atleast_2d(points)
        u, v = points[:, 0], points[:, 1]
        return np.stack([u, v, points[:, 2] - self._phi(u, v), points[:, 3]], axis=1)

    def from_chart(self, coords):
        coords = np.atleast_2d(coords)
        u, v = coords[:, 0], coords[:, 1]
        return np.stack([u, v, self._phi(u, v) + coords[:, 2], coords[:, 3]], axis=1)

    def chart_jacobian(self, coords):
        """d(point)/d(chart coords), shape (N, 4, 4)."""
        coords = np.atleast_2d(coords)
        out = np.tile(np.eye(4), (len(coords), 1, 1))
        out[:, 2, 0] = self.k * coords[:, 0]
        out[:, 2, 1] = self.k * coords[:, 1]
        return out


class UnionScaffold(Scaffold):
    """Disjoint union of scaffolds; each point is handled by its nearest component."""

    def __init__(self, parts):
        self.parts = list(parts)
        self.dim = self.parts[0].dim
        self.name = " + ".join(p.describe() for p in self.parts)

    @property
    def components(self):
        return list(self.parts)

    def _assign(self, points):
        res = np.stack([np.abs(p.values(points)).max(axis=1) for p in self.parts], axis=1)
        return np.argmin(res, axis=1)

    def _dispatch(self, method, points, shape_tail):
        points = np.atleast_2d(points)
        which = self._assign(points)
        out = np.empty((len(points),) + shape_tail)
        for i, part in enumerate(self.parts):
            m = which == i
            if m.any():
                out[m] = getattr(part, method)(points[m])
        return out

    def values(self, points):
        return self._dispatch("values", points, (2,))

    def gradients(self, points):
        return self._dispatch("gradients", points, (2, self.dim))

    def hessians(self, points):
        return self._dispatch("hessians", points, (2, self.dim, self.dim))

    def project_many(self, points, tol=1e-12, max_iter=50, strict=True):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        best = np.full(len(pts), np.inf)
        out = pts.copy()
        ok = np.zeros(len(pts), dtype=bool)
        for part in self.parts:
            q, good = part.project_many(pts, tol, max_iter, strict=False)
            d = np.linalg.norm(q - pts, axis=1)
            take = good & (d < best)
            out[take], best[take] = q[take], d[take]
            ok |= good
        if strict and not ok.all():
            raise ProjectionError(
                f"projection onto {self.describe()} failed", module="ambient",
                operation="scaffold_project",
            )
        return out, ok

    def project_jacobian(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        q, _ = self.project_many(pts)
        which = self._assign(q)
        jac = np.empty((len(pts), self.dim, self.dim))
        for i, part in enumerate(self.parts):
            m = which == i
            if m.any():
                _, jac[m] = part.project_jacobian(pts[m])
        return q, jac


def scaffold_eval(w: Scaffold, p):
    return w.evaluate(p)


def scaffold_project(w: Scaffold, p):
    return w.project(p)


# -- frames and Definition-1 conditions -----------------------------------
def tangent_basis(w: Scaffold, p) -> np.ndarray:
    """Orthonormal basis (d-2, d) of T_pW = ker dF_1 & ker dF_2."""
    a = w.gradients(np.asarray(p, dtype=float)[None])[0]
    _, s, vt = np.linalg.svd(a)
    if s.min() < 1e-12 * max(1.0, s.max()):
        raise ScaffoldError(
            "dF_1 ^ dF_2 = 0: not a regular level set", module="ambient", operation="scaffold_frame"
        )
    return vt[2:]


def symplectic_complement(w: Scaffold, p) -> np.ndarray:
    """Orthonormal basis (2, d) of (T_pW)^omega."""
    a = w.gradients(np.asarray(p, dtype=float)[None])[0]
    c = omega_matrix(w.dim) @ a.T
    q, _ = np.linalg.qr(c)
    return q.T


def nondegeneracy(w: Scaffold, p) -> float:
    """Smallest singular value of omega restricted to T_pW."""
    t = tangent_basis(w, p)
    return float(np.linalg.svd(t @ omega_matrix(w.dim) @ t.T, compute_uv=False).min())


def scaffold_frame(w: Scaffold, p, reference=None) -> tuple[np.ndarray, np.ndarray]:
    """Symplectic frame (E, F) of (T_pW)^omega with omega(E, F) = 1.

    E is the normalized projection of ``reference`` onto the complement (by
    default the first coordinate axis with a non-negligible projection);
    F is the g-orthogonal complement of E in that plane, scaled so that
    omega(E, F) = 1.
    """
    p = np.asarray(p, dtype=float)
    if nondegeneracy(w, p) <= NONDEGENERACY_TOL:
        raise ScaffoldError(
            f"omega degenerates on T_pW at {p.tolist()} (W not symplectic)",
            module="ambient", operation="scaffold_frame",
        )
    basis = symplectic_complement(w, p)
    candidates = [np.asarray(reference, dtype=float)] if reference is not None else []
    candidates += list(np.eye(w.dim))
    for ref in candidates:
        e = basis.T @ (basis @ ref)
        if np.linalg.norm(e) > 1e-8:
            break
    e /= np.linalg.norm(e)
    f = basis.T @ (basis @ (omega_matrix(w.dim).T @ e))
    f -= e * (e @ f)
    pairing = omega_eval(e, f)
    if abs(pairing) <= NONDEGENERACY_TOL:
        raise ScaffoldError(
            "omega vanishes on (TW)^omega", module="ambient", operation="scaffold_frame"
        )
    return e, f / pairing


def boundary_frames(w: Scaffold, points: np.ndarray, order=None) -> tuple[np.ndarray, np.ndarray]:
    """Frames along a chain of boundary points, each seeded by its predecessor's E."""
    order = range(len(points)) if order is None else order
    es = np.zeros_like(points)
    fs = np.zeros_like(points)
    prev = None
    for i in order:
        e, f = scaffold_frame(w, points[i], reference=prev)
        es[i], fs[i] = e, f
        prev = e
    return es, fs


@dataclass
class ScaffoldReport:
    """Per-boundary-vertex residuals of the three scaffold conditions."""

    vertex_indices: np.ndarray
    containment: np.ndarray
    transversality: np.ndarray
    frame: np.ndarray
    nondegeneracy: np.ndarray
    tol: float = CONDITION_TOL
    notes: list[str] = field(default_factory=list)

    @property
    def condition_max(self) -> dict[str, float]:
        def mx(a):
            return float(np.max(a)) if np.size(a) else 0.0

        return {
            "containment": mx(self.containment),
            "transversality": mx(self.transversality),
            "frame": mx(self.frame),
        }

    @property
    def passed(self) -> bool:
        ok = all(v <= self.tol for v in self.condition_max.values())
        return ok and bool(np.all(self.nondegeneracy > NONDEGENERACY_TOL))

    def failures(self) -> list[str]:
        out = [k for k, v in self.condition_max.items() if not v <= self.tol]
        if np.any(self.nondegeneracy <= NONDEGENERACY_TOL):
            out.append("nondegeneracy")
        return out

    def format(self) -> str:
        lines = ["scaffold conditions (max over boundary vertices)"]
        lines.append(f"  {'condition':<16}{'max residual':>26}  status")
        rows = dict(self.condition_max)
        rows["nondegeneracy"] = float(np.min(self.nondegeneracy)) if self.nondegeneracy.size else 0.0
        for name, val in rows.items():
            if name == "nondegeneracy":
                ok = val > NONDEGENERACY_TOL
                label = "min sing. value"
            else:
                ok = val <= self.tol
                label = name
            lines.append(f"  {label:<16}{val:>26.17g}  {'pass' if ok else 'FAIL'}")
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def check_scaffold_conditions(w: Scaffold, patch, bdata, positions=None) -> ScaffoldReport:
    """Evaluate containment, omega-orthogonality of N, and frame validity on the boundary."""
    pts = patch.vertices if positions is None else np.asarray(positions, dtype=float)
    idx = bdata.vertex_indices
    bpts = pts[idx]
    contain = np.abs(w.values(bpts))
    nb = len(idx)
    trans = np.full(nb, np.inf)
    frame = np.full(nb, np.inf)
    nondeg = np.zeros(nb)
    notes = []
    for i, p in enumerate(bpts):
        try:
            t = tangent_basis(w, p)
            nondeg[i] = nondegeneracy(w, p)
            trans[i] = np.max(np.abs([omega_eval(bdata.inward_normal[i], tt) for tt in t]))
            e, f = scaffold_frame(w, p)
            frame[i] = max(
                abs(omega_eval(e, f) - 1.0),
                max(abs(omega_eval(e, tt)) for tt in t),
                max(abs(omega_eval(f, tt)) for tt in t),
            )
        except ScaffoldError as exc:
            if len(notes) < 3:
                notes.append(f"vertex {int(idx[i])}: {exc.message}")
    return ScaffoldReport(idx, contain, trans, frame, nondeg, notes=notes)


# -- configuration files ---------------------------------------------------
def read_key_values(text: str, *, module: str, operation: str) -> dict[str, str]:
    """Parse `key = value` lines; blank lines and `#` comments are ignored."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        parser.read_string("[main]\n" + text)
    except configparser.Error as exc:
        raise ParseError(f"malformed key-value file: {exc}", module=module, operation=operation) from exc
    return dict(parser["main"])


def _floats(value: str, key: str, op: str) -> list[float]:
    try:
        return [float(t) for t in value.replace(",", " ").split()]
    except ValueError as exc:
        raise ParseError(f"key {key!r}: expected numbers, got {value!r}", module="ambient",
                         operation=op) from exc


def parse_scaffold_config(text: str) -> Scaffold:
    """Build a scaffold from a key-value description.

    ``type = quadric`` takes ``c`` (several values give a disjoint union),
    optional ``n`` and ``phases``.  ``type = affine`` takes ``fix`` (two
    coordinate names such as ``x2 y2``) and ``values``; several value pairs
    separated by ``;`` give a union of parallel planes.  ``type = product``
    takes ``curvature``.
    """
    op = "parse_scaffold_config"
    kv = read_key_values(text, module="ambient", operation=op)
    kind = kv.get("type", "").strip().lower()
    n = int(kv.get("n", "2"))
    try:
        if kind == "quadric":
            cs = _floats(kv.get("c", "1"), "c", op)
            phases = _floats(kv["phases"], "phases", op) if "phases" in kv else None
            if phases is not None and len(phases) != n:
                raise ParseError(f"phases needs {n} values", module="ambient", operation=op)
            parts = [QuadricScaffold(c, n=n, phases=phases) for c in cs]
        elif kind == "affine":
            coords = kv.get("fix", "x1 y1").replace(",", " ").split()
            if len(coords) != 2:
                raise ParseError("fix needs two coordinate names", module="ambient", operation=op)
            groups = kv.get("values", "0 0").split(";")
            parts = []
            for grp in groups:
                vals = _floats(grp, "values", op)
                if len(vals) != 2:
                    raise ParseError("values needs two numbers per plane", module="ambient",
                                     operation=op)
                parts.append(AffineScaffold.coordinate_plane(2 * n, coords, vals))
        elif kind == "product":
            if n != 2:
                raise ParseError("product scaffolds exist only for n = 2", module="ambient",
                                 operation=op)
            parts = [ProductScaffold(float(kv.get("curvature", "0.5")))]
        else:
            raise ParseError(f"unknown scaffold type {kind!r}", module="ambient", operation=op)
    except ValueError as exc:
        raise ParseError(str(exc), module="ambient", operation=op) from exc
    return parts[0] if len(parts) == 1 else UnionScaffold(parts)


def load_scaffold(path) -> Scaffold:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read scaffold file {path}: {exc}", module="ambient",
                         operation="load_scaffold") from exc
    return parse_scaffold_config(text)
