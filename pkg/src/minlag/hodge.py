"""Neumann Hodge boundary-value problem for 1-forms.

The system solved is

    d eta = sigma,   d*eta = tau + a Vol,   eta(N) = 0 on the boundary,

with d*eta evaluated on dual n-cells (one per vertex).  The Neumann
condition enters weakly: the dual cell of a boundary vertex is closed off at
the boundary with zero flux, so the boundary-vertex rows of the d* block are
the normal-trace rows.  Because every column of that block sums to zero, the
constant multiple a of Vol is fixed by the total integral of tau alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cochain import Cochain
from .dec import DecOperators
from .errors import AmbiguousKernelError, SolvabilityError, ValidationError
from .mesh import SimplicialPatch, boundary_data, volume_cochain

KERNEL_TOL = 1e-8
GAP_FACTOR = 10.0
SOLVE_TOL = 1e-9


@dataclass
class KernelInfo:
    dimension: int
    singular_values: np.ndarray
    threshold: float

    @property
    def gap(self) -> float:
        """Ratio of the smallest non-kernel to the largest kernel singular value."""
        s = self.singular_values
        k = self.dimension
        floor = np.finfo(float).eps * s[0]
        top = max(s[-k:].max() if k else 0.0, floor)
        nonzero = s[: len(s) - k]
        return float(nonzero.min() / top) if nonzero.size else np.inf


def _stacked_kernel(blocks: list[np.ndarray], ncols: int, op: str):
    """Null space of the row-equilibrated stack of ``blocks``."""
    rows = []
    for b in blocks:
        nrm = np.linalg.norm(b)
        if nrm > 0:
            rows.append(b / nrm)
    a = np.vstack(rows) if rows else np.zeros((1, ncols))
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    full = np.zeros(ncols)
    full[: len(s)] = s
    thr = KERNEL_TOL * full[0]
    near = (full > thr / GAP_FACTOR) & (full < thr * GAP_FACTOR)
    if np.any(near):
        raise AmbiguousKernelError(
            "singular values too close to the kernel threshold; refine the mesh",
            module="hodge", operation=op,
        )
    order = np.sort(full)[::-1]
    dim = int(np.sum(order <= thr))
    return vt[ncols - dim:], KernelInfo(dim, order, thr)


def harmonic_kernel(ops: DecOperators, k: int):
    """Kernel of [d_k; d_{k-1}^T *_k] and its spectrum, before orthonormalization."""
    n = ops.n
    if not 0 <= k <= n:
        raise ValidationError(f"degree {k} outside [0, {n}]", module="hodge",
                              operation="neumann_harmonic_basis")
    blocks = []
    if k < n:
        blocks.append(ops.d_matrix(k).toarray())
    if k > 0:
        blocks.append((ops.d_matrix(k - 1).T @ ops.star_matrix(k)).toarray())
    return _stacked_kernel(blocks, ops.patch.num_faces(k), "neumann_harmonic_basis")


def _star_orthonormalize(ops: DecOperators, k: int, vecs: np.ndarray) -> np.ndarray:
    if len(vecs) == 0:
        return vecs
    s = np.sqrt(ops.star_diagonals[k])
    q, _ = np.linalg.qr((vecs * s).T)
    return (q / s[:, None]).T


def neumann_harmonic_basis(patch: SimplicialPatch, k: int = 1,
                           ops: DecOperators | None = None, return_info: bool = False):
    """Star-orthonormal basis of the discrete Neumann harmonic k-forms."""
    ops = ops or DecOperators(patch)
    vecs, info = harmonic_kernel(ops, k)
    basis = [Cochain(patch, k, v) for v in _star_orthonormalize(ops, k, vecs)]
    return (basis, info) if return_info else basis


@dataclass
class HodgeProblem:
    patch: SimplicialPatch
    sigma: Cochain
    tau: Cochain
    free_a: bool = True
    neumann: str = "eta(N)=0"

    def __post_init__(self):
        n = self.patch.n
        if self.sigma.degree != 2 or self.sigma.dual:
            raise ValidationError("sigma must be a primal 2-cochain", module="hodge",
                                  operation="HodgeProblem")
        if self.tau.degree != n or self.tau.dual:
            raise ValidationError(f"tau must be a primal {n}-cochain", module="hodge",
                                  operation="HodgeProblem")
        if self.sigma.patch is not self.patch or self.tau.patch is not self.patch:
            raise ValidationError("cochains belong to a different patch", module="hodge",
                                  operation="HodgeProblem")

    @property
    def scale(self) -> float:
        return max(1.0, float(np.abs(self.sigma.values).sum()), float(np.abs(self.tau.values).sum()))


CONDITION_NAMES = (
    "d sigma = 0",
    "d tau = 0",
    "boundary trace of tau",
    "sigma vs harmonic 2-forms",
    "tau vs harmonic 0-forms",
)


@dataclass
class SolvabilityReport:
    residuals: np.ndarray
    scale: float
    tol: float = SOLVE_TOL
    names: tuple = CONDITION_NAMES

    @property
    def passes(self) -> np.ndarray:
        return self.residuals <= self.tol * self.scale

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passes))

    def format(self) -> str:
        width = max(len(n) for n in self.names)
        lines = [f"  #  {'condition':<{width}}  {'residual':>24}  status"]
        for i, (name, r, ok) in enumerate(zip(self.names, self.residuals, self.passes), 1):
            lines.append(f"  {i}  {name:<{width}}  {r:>24.17g}  {'pass' if ok else 'FAIL'}")
        lines.append(f"  pass threshold {self.tol:g} x input scale {self.scale:.17g}")
        return "\n".join(lines)


def solvability_report(problem: HodgeProblem, ops: DecOperators | None = None) -> SolvabilityReport:
    """The five compatibility conditions for the Neumann Hodge system with data (sigma, tau)."""
    patch = problem.patch
    ops = ops or DecOperators(patch)
    n = patch.n
    sigma, tau = problem.sigma, problem.tau
    res = np.zeros(5)
    # (1) closedness of sigma; vacuous when sigma is top-degree
    if n > 2:
        res[0] = float(np.abs(ops.d_matrix(2) @ sigma.values).max())
    # (2) d tau and (3) the trace of tau on the (n-1)-dimensional boundary vanish
    # identically for a top-degree tau; they are kept for completeness
    res[1] = 0.0
    res[2] = 0.0
    # (4) pairings of sigma with Neumann harmonic 2-forms
    lam = neumann_harmonic_basis(patch, 2, ops)
    if lam:
        res[3] = max(abs(ops.inner(sigma, l)) for l in lam)
    # (5) pairing with the harmonic 0-forms (locally constant, sup-norm 1)
    res[4] = abs(float(np.sum(tau.values)))
    return SolvabilityReport(res, problem.scale)


def integrability_scalar(beta: Cochain, patch: SimplicialPatch,
                         ops: DecOperators | None = None) -> float:
    """a = -(integral of d beta) / Vol(L)."""
    ops = ops or DecOperators(patch)
    vol = float(patch.simplex_volumes.sum())
    if vol <= 0:
        raise ValidationError("patch has zero volume", module="hodge",
                              operation="integrability_scalar")
    if beta.degree != patch.n - 1:
        raise ValidationError(f"beta must be an {patch.n - 1}-cochain", module="hodge",
                              operation="integrability_scalar")
    return -ops.integrate(ops.coboundary(beta)) / vol


@dataclass
class HodgeSolution:
    eta: Cochain
    a: float
    residual_norms: tuple[float, float, float]
    harmonic_component: np.ndarray
    normal_trace_whitney: np.ndarray = field(default_factory=lambda: np.zeros(0))
    report: SolvabilityReport | None = None


def solve_bvp(problem: HodgeProblem, ops: DecOperators | None = None,
              check: bool = True) -> HodgeSolution:
    """Least-squares solve of the stacked Neumann Hodge system.

    Returns the minimum-norm solution (harmonic part removed in the star
    inner product).  With ``free_a`` the Vol multiplier is an extra unknown;
    otherwise the tau slot must integrate to zero on its own.
    """
    patch = problem.patch
    ops = ops or DecOperators(patch)
    report = solvability_report(problem, ops)
    if check:
        failing = [i for i, ok in enumerate(report.passes) if not ok and not (i == 4 and problem.free_a)]
        if failing:
            raise SolvabilityError(
                "solvability conditions fail: " + ", ".join(CONDITION_NAMES[i] for i in failing),
                module="hodge", operation="solve_bvp", report=report,
            )
    n_e = patch.num_faces(1)
    d1 = ops.d_matrix(1).toarray()
    div = ops.div_star_matrix().toarray()
    tau_dual = ops.to_dual_top(problem.tau).values
    vol_dual = ops.to_dual_top(volume_cochain(patch)).values
    vol = float(patch.simplex_volumes.sum())

    a = -float(problem.tau.values.sum()) / vol if problem.free_a else 0.0
    rhs_div = tau_dual + a * vol_dual
    w1 = 1.0 / max(np.linalg.norm(d1), 1e-300)
    w2 = 1.0 / max(np.linalg.norm(div), 1e-300)
    mat = np.vstack([w1 * d1, w2 * div])
    rhs = np.concatenate([w1 * problem.sigma.values, w2 * rhs_div])
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    thr = KERNEL_TOL * s[0]
    keep = s > thr
    eta = vt[keep].T @ ((u[:, keep].T @ rhs) / s[keep])

    basis = neumann_harmonic_basis(patch, 1, ops)
    star1 = ops.star_diagonals[1]
    coeffs = np.array([b.values @ (star1 * eta) for b in basis])
    for c, b in zip(coeffs, basis):
        eta = eta - c * b.values
    eta_c = Cochain(patch, 1, eta)

    r_sigma = float(np.abs(d1 @ eta - problem.sigma.values).max()) if d1.size else 0.0
    r_div = div @ eta - rhs_div
    bmask = np.zeros(patch.num_vertices, dtype=bool)
    bmask[patch.boundary_vertex_indices] = True
    r_int = float(np.abs(r_div[~bmask]).max()) if (~bmask).any() else 0.0
    r_bdy = float(np.abs(r_div[bmask]).max())
    whitney = ops.normal_component(eta_c, boundary_data(patch))
    return HodgeSolution(eta_c, a, (r_sigma, r_int, r_bdy), coeffs, whitney, report)
