"""Nonlinear minimal-Lagrangian residual, its linearization and Newton solves.

A deformation of a base patch L is a normal field V on its vertices plus a
phase angle theta.  Interior vertices move by V; boundary vertices move by V
and are then projected back onto the scaffold W.  The residual of the
deformed patch is the pair

    (integral of omega over each 2-face,
     -Im(exp(-i theta) * integral of alpha) over each top simplex),

both evaluated exactly per simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .ambient import (
    Scaffold,
    alpha_integrals,
    check_scaffold_conditions,
    j_matrix,
    omega_integrals,
    omega_matrix,
    to_complex,
)
from .cochain import Cochain
from .dec import DecOperators
from .errors import ConvergenceError, ProjectionError, SolverError, ValidationError
from .hodge import neumann_harmonic_basis
from .mesh import BoundaryData, SimplicialPatch

FIELD_TOL = 1e-10
BASE_TOL = 1e-8
SVD_CUTOFF = 1e-8


def principal_angle(theta: float) -> float:
    """theta reduced to (-pi, pi]."""
    t = math.remainder(theta, 2 * math.pi)
    return math.pi if t == -math.pi else t


# -- admissible normal fields ---------------------------------------------------
class AdmissibleSpace:
    """Linear space of admissible normal fields of a patch.

    Interior vertices carry J applied to their tangent plane (the normal
    space of a Lagrangian patch).  Boundary vertices carry J applied to the
    part of the tangent plane orthogonal to N, which is exactly the set of
    normal vectors with omega(V, N) = 0.  Columns of ``basis`` are
    orthonormal, so coefficient vectors and flattened fields share one
    Euclidean inner product.
    """

    def __init__(self, patch: SimplicialPatch, bdata: BoundaryData):
        self.patch = patch
        self.bdata = bdata
        dim = patch.ambient_dim
        jm = j_matrix(dim)
        frames = patch.tangent_frames
        pos = bdata.position
        cols = []
        owner = []
        for v in range(patch.num_vertices):
            if v in pos:
                vecs = bdata.boundary_tangent[pos[v]]
            else:
                vecs = frames[v]
            for t in vecs:
                col = np.zeros(patch.num_vertices * dim)
                col[v * dim:(v + 1) * dim] = jm @ t
                cols.append(col)
                owner.append(v)
        self.basis = np.array(cols).T
        self.owner = np.array(owner)

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    def field(self, coeffs) -> np.ndarray:
        return (self.basis @ np.asarray(coeffs, dtype=float)).reshape(self.patch.num_vertices, -1)

    def coefficients(self, values) -> np.ndarray:
        return self.basis.T @ np.asarray(values, dtype=float).ravel()


@dataclass(eq=False)
class NormalField:
    """Per-vertex normal vectors satisfying the boundary condition omega(V, N) = 0."""

    patch: SimplicialPatch
    bdata: BoundaryData
    values: np.ndarray
    validate: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = (self.patch.num_vertices, self.patch.ambient_dim)
        if self.values.shape != shape:
            raise ValidationError(f"normal field needs shape {shape}, got {self.values.shape}",
                                  module="deform", operation="NormalField")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("normal field has non-finite entries", module="deform",
                                  operation="NormalField")
        if self.validate:
            self.check()

    def constraint_residuals(self) -> tuple[np.ndarray, np.ndarray]:
        """(tangential part at every vertex, omega(V, N) at boundary vertices)."""
        frames = self.patch.tangent_frames
        tang = np.linalg.norm(np.einsum("vkd,vd->vk", frames, self.values), axis=1)
        idx = self.bdata.vertex_indices
        om = np.einsum("bd,de,be->b", self.values[idx], omega_matrix(self.patch.ambient_dim),
                       self.bdata.inward_normal)
        return tang, om

    def check(self):
        scale = max(1.0, float(np.abs(self.values).max()))
        tang, om = self.constraint_residuals()
        if tang.max(initial=0.0) > FIELD_TOL * scale:
            raise ValidationError(
                f"field is not normal to L (tangential part {tang.max():.3g})",
                module="deform", operation="NormalField",
                vertex=int(np.argmax(tang)),
            )
        if np.abs(om).max(initial=0.0) > FIELD_TOL * scale:
            raise ValidationError(
                f"boundary condition omega(V, N) = 0 violated ({np.abs(om).max():.3g})",
                module="deform", operation="NormalField",
                vertex=int(self.bdata.vertex_indices[np.argmax(np.abs(om))]),
            )

    @classmethod
    def zeros(cls, patch, bdata) -> NormalField:
        return cls(patch, bdata, np.zeros((patch.num_vertices, patch.ambient_dim)))

    @classmethod
    def from_coefficients(cls, space: AdmissibleSpace, coeffs) -> NormalField:
        return cls(space.patch, space.bdata, space.field(coeffs))

    @classmethod
    def project(cls, space: AdmissibleSpace, values) -> NormalField:
        """Nearest admissible field to arbitrary per-vertex vectors."""
        return cls.from_coefficients(space, space.coefficients(values))

    def __mul__(self, s: float) -> NormalField:
        return NormalField(self.patch, self.bdata, s * self.values, validate=False)

    __rmul__ = __mul__


# -- residual ---------------------------------------------------------------------
def _two_faces(patch: SimplicialPatch) -> np.ndarray:
    return patch.faces(2)


def residual_at(patch: SimplicialPatch, positions: np.ndarray, theta: float) -> tuple[Cochain, Cochain]:
    """(omega, -Im(exp(-i theta) alpha)) integrals of the patch with moved vertices."""
    _check_nondegenerate(patch, positions)
    om = omega_integrals(positions, _two_faces(patch))
    al = -np.imag(alpha_integrals(positions, patch.simplices, theta))
    return Cochain(patch, 2, om), Cochain(patch, patch.n, al)


def _check_nondegenerate(patch: SimplicialPatch, positions: np.ndarray):
    if not np.all(np.isfinite(positions)):
        raise SolverError("deformed vertices are not finite", module="deform", operation="residual")
    p = positions[patch.simplices]
    edges = p[:, 1:] - p[:, :1]
    gram = edges @ np.swapaxes(edges, 1, 2)
    vol = np.sqrt(np.clip(np.linalg.det(gram), 0, None))
    longest = np.max(np.linalg.norm(p[:, :, None] - p[:, None, :], axis=-1), axis=(1, 2))
    bad = vol < 1e-12 * longest ** patch.n
    if bad.any():
        raise SolverError(f"deformed simplex {int(np.argmax(bad))} is degenerate",
                          module="deform", operation="residual", simplex=int(np.argmax(bad)))


def retract(patch: SimplicialPatch, scaffold: Scaffold | None, values: np.ndarray,
            bdata: BoundaryData | None = None, base_positions: np.ndarray | None = None) -> np.ndarray:
    """Move every vertex by V, then project boundary vertices onto the scaffold."""
    base = patch.vertices if base_positions is None else base_positions
    pos = base + values
    if scaffold is not None:
        idx = patch.boundary_vertex_indices if bdata is None else bdata.vertex_indices
        try:
            pos[idx] = scaffold.project_many(pos[idx])[0]
        except ProjectionError as exc:
            raise ProjectionError(exc.message, module="deform", operation="retract") from exc
    return pos


def _retract_jacobian(patch, scaffold, bdata, values) -> np.ndarray | None:
    """Per-boundary-vertex Jacobian of the projection at p + V, or None without a scaffold."""
    if scaffold is None:
        return None
    idx = bdata.vertex_indices
    return scaffold.project_jacobian(patch.vertices[idx] + values[idx])[1]


@dataclass(eq=False)
class DeformationState:
    patch: SimplicialPatch
    bdata: BoundaryData
    scaffold: Scaffold | None
    field: NormalField
    theta: float
    positions: np.ndarray
    residual_omega: Cochain
    residual_alpha: Cochain
    iterations: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def build(cls, patch, bdata, scaffold, nfield: NormalField | None = None,
              theta: float = 0.0) -> DeformationState:
        nfield = nfield if nfield is not None else NormalField.zeros(patch, bdata)
        pos = retract(patch, scaffold, nfield.values, bdata)
        om, al = residual_at(patch, pos, theta)
        return cls(patch, bdata, scaffold, nfield, principal_angle(theta), pos, om, al)

    @property
    def norms(self) -> tuple[float, float]:
        return self.residual_omega.norm_inf(), self.residual_alpha.norm_inf()

    @property
    def residual_norm(self) -> float:
        return max(self.norms)

    @property
    def residual_l2(self) -> float:
        return float(np.hypot(np.linalg.norm(self.residual_omega.values),
                              np.linalg.norm(self.residual_alpha.values)))


def residual(state: DeformationState) -> tuple[Cochain, Cochain]:
    """Recompute both residual cochains of a state from its field and phase."""
    pos = retract(state.patch, state.scaffold, state.field.values, state.bdata)
    return residual_at(state.patch, pos, state.theta)


# -- Jacobians ---------------------------------------------------------------------
def _residual_position_jacobian(patch: SimplicialPatch, positions: np.ndarray, theta: float) -> np.ndarray:
    """d(residual)/d(positions), dense of shape (N_2 + N_n, V * 2n)."""
    nv, dim = positions.shape
    n = patch.n
    om_mat = omega_matrix(dim)
    faces = _two_faces(patch)
    jac_om = np.zeros((len(faces), nv * dim))
    p = positions[faces]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    g1 = 0.5 * e2 @ om_mat.T      # d/dp1 of 0.5 * e1^T W e2
    g2 = -0.5 * e1 @ om_mat.T     # d/dp2
    rows = np.arange(len(faces))
    for local, g in ((1, g1), (2, g2), (0, -g1 - g2)):
        for d in range(dim):
            np.add.at(jac_om, (rows, faces[:, local] * dim + d), g[:, d])

    simp = patch.simplices
    jac_al = np.zeros((len(simp), nv * dim))
    q = positions[simp]
    z = to_complex(q[:, 1:] - q[:, :1])  # (T, n, n): row j = edge j
    cof = _cofactors(z)
    phase = np.exp(-1j * theta) / math.factorial(n)
    dx = -np.imag(phase * cof)   # d/dx_{jk}
    dy = -np.real(phase * cof)   # d/dy_{jk}
    rows = np.arange(len(simp))
    for j in range(n):
        vert = simp[:, j + 1]
        for k in range(n):
            np.add.at(jac_al, (rows, vert * dim + 2 * k), dx[:, j, k])
            np.add.at(jac_al, (rows, vert * dim + 2 * k + 1), dy[:, j, k])
            np.add.at(jac_al, (rows, simp[:, 0] * dim + 2 * k), -dx[:, j, k])
            np.add.at(jac_al, (rows, simp[:, 0] * dim + 2 * k + 1), -dy[:, j, k])
    return np.vstack([jac_om, jac_al])


def _cofactors(z: np.ndarray) -> np.ndarray:
    """Cofactor matrices of a stack of square complex matrices (d det / d z_jk)."""
    m = z.shape[-1]
    if m == 1:
        return np.ones_like(z)
    out = np.empty_like(z)
    for j in range(m):
        for k in range(m):
            minor = np.delete(np.delete(z, j, axis=-2), k, axis=-1)
            out[..., j, k] = (-1) ** (j + k) * np.linalg.det(minor)
    return out


def _theta_column(patch, positions, theta) -> np.ndarray:
    n_two = len(_two_faces(patch))
    col = np.zeros(n_two + len(patch.simplices))
    col[n_two:] = np.real(alpha_integrals(positions, patch.simplices, theta))
    return col


def _field_jacobian(patch, scaffold, bdata, space: AdmissibleSpace, values) -> np.ndarray:
    """d(positions)/d(coefficients), shape (V * 2n, m)."""
    dim = patch.ambient_dim
    dp = space.basis.copy()
    proj = _retract_jacobian(patch, scaffold, bdata, values)
    if proj is not None:
        for i, v in enumerate(bdata.vertex_indices):
            sl = slice(v * dim, (v + 1) * dim)
            dp[sl] = proj[i] @ dp[sl]
    return dp


def full_jacobian(state: DeformationState, space: AdmissibleSpace) -> np.ndarray:
    """Jacobian of the residual with respect to (field coefficients, theta)."""
    jp = _residual_position_jacobian(state.patch, state.positions, state.theta)
    dp = _field_jacobian(state.patch, state.scaffold, state.bdata, space, state.field.values)
    return np.hstack([jp @ dp, _theta_column(state.patch, state.positions, state.theta)[:, None]])


# -- linearization at a special Lagrangian base ----------------------------------
@dataclass
class LinearizedOperator:
    """(V, a) -> (d eta_V, d beta_V + a Vol) at a special Lagrangian base patch.

    eta_V is the 1-cochain of edge integrals of the contraction of V with
    omega, beta_V the (n-1)-cochain of face integrals of the contraction of V
    with -Im(exp(-i theta) alpha); both use linear interpolation of V and
    are exact.  The second slot is d*eta_V in the continuum.
    """

    patch: SimplicialPatch
    bdata: BoundaryData
    scaffold: Scaffold | None
    theta: float
    space: AdmissibleSpace

    @cached_property
    def ops(self) -> DecOperators:
        return DecOperators(self.patch)

    @cached_property
    def _tangent_map(self) -> np.ndarray | None:
        if self.scaffold is None:
            return None
        return _retract_jacobian(self.patch, self.scaffold, self.bdata,
                                 np.zeros_like(self.patch.vertices))

    def effective_field(self, values: np.ndarray) -> np.ndarray:
        """V with boundary values pushed through the linearized projection."""
        out = np.array(values, dtype=float)
        if self._tangent_map is not None:
            idx = self.bdata.vertex_indices
            out[idx] = np.einsum("bij,bj->bi", self._tangent_map, out[idx])
        return out

    def eta(self, values: np.ndarray) -> Cochain:
        v = self.effective_field(values)
        e = self.patch.faces(1)
        pos = self.patch.vertices
        vbar = 0.5 * (v[e[:, 0]] + v[e[:, 1]])
        edge = pos[e[:, 1]] - pos[e[:, 0]]
        w = omega_matrix(self.patch.ambient_dim)
        return Cochain(self.patch, 1, np.sum((vbar @ w) * edge, axis=1))

    def beta(self, values: np.ndarray) -> Cochain:
        v = self.effective_field(values)
        n = self.patch.n
        faces = self.patch.faces(n - 1)
        pos = self.patch.vertices
        vbar = v[faces].mean(axis=1)
        edges = pos[faces[:, 1:]] - pos[faces[:, :1]]
        z = np.concatenate([to_complex(vbar)[:, None, :], to_complex(edges)], axis=1)
        val = np.exp(-1j * self.theta) * np.linalg.det(z) / math.factorial(n - 1)
        return Cochain(self.patch, n - 1, -np.imag(val))

    def apply(self, nfield: NormalField | np.ndarray, a: float = 0.0) -> tuple[Cochain, Cochain]:
        values = nfield.values if isinstance(nfield, NormalField) else np.asarray(nfield, dtype=float)
        sigma = self.ops.coboundary(self.eta(values))
        tau = self.ops.coboundary(self.beta(values))
        vol = np.real(alpha_integrals(self.patch.vertices, self.patch.simplices, self.theta))
        return sigma, Cochain(self.patch, self.patch.n, tau.values + a * vol)

    def d_star_eta(self, nfield: NormalField) -> Cochain:
        """Diagnostic: d*eta_V through the discrete Hodge star, on dual n-cells."""
        return self.ops.d_star(self.eta(nfield.values))


def linearize_at_zero(patch: SimplicialPatch, bdata: BoundaryData, scaffold: Scaffold | None,
                      theta: float = 0.0) -> LinearizedOperator:
    om, al = residual_at(patch, patch.vertices, theta)
    worst = max(om.norm_inf(), al.norm_inf())
    if worst > BASE_TOL:
        raise ValidationError(f"base patch is not special Lagrangian (residual {worst:.3g})",
                              module="deform", operation="linearize_at_zero")
    return LinearizedOperator(patch, bdata, scaffold, theta, AdmissibleSpace(patch, bdata))


# -- moduli -------------------------------------------------------------------------
def moduli_basis(patch: SimplicialPatch, bdata: BoundaryData, scaffold: Scaffold | None,
                 theta: float = 0.0, space: AdmissibleSpace | None = None) -> list[NormalField]:
    """Admissible normal fields whose eta_V best match each Neumann harmonic 1-form.

    Returned fields are scaled to unit sup-norm over vertices.
    """
    lin = linearize_at_zero(patch, bdata, scaffold, theta)
    space = space or lin.space
    harmonic = neumann_harmonic_basis(patch, 1, lin.ops)
    if not harmonic:
        return []
    cols = np.array([lin.eta(space.field(c)).values for c in np.eye(space.size)]).T
    out = []
    for h in harmonic:
        c, *_ = np.linalg.lstsq(cols, h.values, rcond=None)
        v = space.field(c)
        out.append(NormalField(patch, bdata, v / np.linalg.norm(v, axis=1).max()))
    return out


# -- Newton -------------------------------------------------------------------------
def _complement_basis(space: AdmissibleSpace, kernel: list[NormalField]) -> np.ndarray:
    """Orthonormal basis of (coefficients, theta) space orthogonal to the kernel fields."""
    m = space.size + 1
    if not kernel:
        return np.eye(m)
    k = np.array([np.append(space.coefficients(f.values), 0.0) for f in kernel]).T
    q, _ = np.linalg.qr(k, mode="complete")
    return q[:, k.shape[1]:]


def newton_solve(patch: SimplicialPatch, bdata: BoundaryData, scaffold: Scaffold | None,
                 initial: DeformationState | None = None, tol: float = 1e-10,
                 max_iter: int = 50, kernel: list[NormalField] | None = None,
                 check_scaffold: bool = True) -> DeformationState:
    """Gauss-Newton on (field coefficients, theta) with damped, deflated steps."""
    space = AdmissibleSpace(patch, bdata)
    if check_scaffold and scaffold is not None:
        positions = (initial.positions if initial is not None
                     else retract(patch, scaffold, np.zeros_like(patch.vertices), bdata))
        report = check_scaffold_conditions(scaffold, patch, bdata, positions=positions)
        if not report.passed:
            raise ValidationError("scaffold conditions fail:\n" + report.format(),
                                  module="deform", operation="newton_solve", report=report)
    state = initial if initial is not None else DeformationState.build(patch, bdata, scaffold)
    comp = _complement_basis(space, kernel or [])
    coeffs = space.coefficients(state.field.values)
    theta = state.theta
    history = [state.residual_norm]
    it = 0
    state.history = history
    while state.residual_norm > tol:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence in {max_iter} iterations "
                                   f"(residual {state.residual_norm:.3g})",
                                   module="deform", operation="newton_solve", last_state=state)
        jac = full_jacobian(state, space) @ comp
        r = np.concatenate([state.residual_omega.values, state.residual_alpha.values])
        u, s, vt = np.linalg.svd(jac, full_matrices=False)
        if s.size == 0 or s[0] == 0:
            raise SolverError("linearization has rank zero", module="deform",
                              operation="newton_solve")
        keep = s > SVD_CUTOFF * s[0]
        step = comp @ (vt[keep].T @ ((u[:, keep].T @ -r) / s[keep]))
        t = 1.0
        for _ in range(11):
            trial_c = coeffs + t * step[:-1]
            trial_theta = theta + t * step[-1]
            try:
                trial = DeformationState.build(
                    patch, bdata, scaffold,
                    NormalField(patch, bdata, space.field(trial_c), validate=False), trial_theta)
                if trial.residual_l2 < state.residual_l2:
                    break
            except SolverError:
                pass
            t *= 0.5
        else:
            raise ConvergenceError(f"damping failed after 10 halvings (residual "
                                   f"{state.residual_norm:.3g})", module="deform",
                                   operation="newton_solve", last_state=state)
        coeffs, theta, state = trial_c, trial_theta, trial
        it += 1
        history.append(state.residual_norm)
        state.history = history
        state.iterations = it
    state.iterations = it
    state.history = history
    state.field = NormalField(patch, bdata, state.field.values)
    return state


def moduli_step(patch: SimplicialPatch, bdata: BoundaryData, scaffold: Scaffold | None,
                direction: NormalField, step: float, tol: float = 1e-10, max_iter: int = 50,
                kernel: list[NormalField] | None = None, theta: float = 0.0) -> DeformationState:
    """Newton solve from V = step * direction with corrections orthogonal to the kernel."""
    kernel = kernel if kernel is not None else [direction]
    start = NormalField(patch, bdata, step * direction.values)
    initial = DeformationState.build(patch, bdata, scaffold, start, theta)
    return newton_solve(patch, bdata, scaffold, initial, tol=tol, max_iter=max_iter,
                        kernel=kernel, check_scaffold=False)


def largest_converged_step(patch: SimplicialPatch, bdata: BoundaryData, scaffold: Scaffold | None,
                           direction: NormalField, step: float, halvings: int = 6,
                           kernel: list[NormalField] | None = None, **newton_kw):
    """Halve ``step`` until moduli_step converges.

    Returns (step, state) for the first converged step, or (0.0, None) when
    every trial fails.  The size of the converging neighbourhood is only
    known empirically, so this is what gets reported.
    """
    trial = float(step)
    for _ in range(halvings + 1):
        try:
            return trial, moduli_step(patch, bdata, scaffold, direction, trial, kernel=kernel, **newton_kw)
        except SolverError:
            trial *= 0.5
    return 0.0, None


def kernel_component(state: DeformationState, base: DeformationState, kernel: list[NormalField]) -> float:
    """Largest component along the kernel of the correction made by the solver."""
    diff = (state.field.values - base.field.values).ravel()
    return max((abs(diff @ k.values.ravel()) / np.linalg.norm(k.values) for k in kernel), default=0.0)
