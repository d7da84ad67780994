"""Discrete exterior calculus on a simplicial patch.

Primal k-cochains live on the k-faces of the patch (sorted vertex order for
k < n, stored orientation for top simplices).  Dual cochains of degree j
live on the dual cells of the (n-j)-faces.  The diagonal Hodge star is built
from flag-chain volumes: the dual cell of a face is the union, over every
chain face = t_k < t_{k+1} < ... < t_n, of the simplices spanned by the
centres of the t_i.  Dual cells of boundary faces are therefore clipped at
the boundary.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .cochain import Cochain
from .errors import ValidationError
from .mesh import BoundaryData, SimplicialPatch, circumcenter, is_well_centered, simplex_volume


def _err(msg: str, operation: str) -> ValidationError:
    return ValidationError(msg, module="dec", operation=operation)


@dataclass
class BoundaryCochain:
    """Restriction of a primal k-cochain to the boundary complex.

    ``indices`` index into ``patch.faces(k)``.  Values keep the sorted
    orientation of those faces.
    """

    patch: SimplicialPatch
    degree: int
    indices: np.ndarray
    values: np.ndarray

    def integrate(self) -> float:
        """Integral over the boundary with the orientation induced from the patch."""
        if self.degree != self.patch.n - 1:
            raise _err("only boundary (n-1)-cochains can be integrated", "integrate")
        signs = dict(zip(self.patch.boundary_face_indices.tolist(), self.patch.boundary_face_signs))
        return float(sum(signs[int(i)] * v for i, v in zip(self.indices, self.values)))


class DecOperators:
    """Coboundaries, Hodge stars and boundary operators of one patch."""

    def __init__(self, patch: SimplicialPatch, dual: str = "auto"):
        self.patch = patch
        if dual not in ("auto", "circumcentric", "barycentric"):
            raise ValueError(f"unknown dual type {dual!r}")
        if dual == "auto":
            dual = "circumcentric" if is_well_centered(patch) else "barycentric"
        self.dual_type = dual
        self.n = patch.n

    # -- coboundary -------------------------------------------------------
    @cached_property
    def _d(self) -> list[sp.csr_matrix]:
        return [self.patch.boundary_matrix(k + 1).T.tocsr() for k in range(self.n)]

    def d_matrix(self, k: int) -> sp.csr_matrix:
        """d_k from k-cochains to (k+1)-cochains."""
        if not 0 <= k < self.n:
            raise _err(f"coboundary degree {k} outside [0, {self.n - 1}]", "coboundary")
        return self._d[k]

    def coboundary(self, c: Cochain, k: int | None = None) -> Cochain:
        k = c.degree if k is None else k
        if c.dual or c.degree != k:
            raise _err("coboundary needs a primal cochain of the stated degree", "coboundary")
        return Cochain(self.patch, k + 1, self.d_matrix(k) @ c.values)

    # -- dual volumes and star ---------------------------------------------
    def _center(self, face: tuple[int, ...]) -> np.ndarray:
        pts = self.patch.vertices[list(face)]
        if self.dual_type == "circumcentric":
            return circumcenter(pts)[0]
        return pts.mean(axis=0)

    @cached_property
    def _flags(self) -> list[tuple[int, tuple, int, float]]:
        """Unique (k, k-face, top simplex, volume) pieces of dual cells.

        Each piece is the simplex spanned by the centres of a chain
        face = t_k < t_{k+1} < ... < t_n inside one top simplex.
        """
        n = self.n
        centers: dict[tuple, np.ndarray] = {}

        def center(f):
            if f not in centers:
                centers[f] = self._center(f)
            return centers[f]

        pieces = {}
        for t, simplex in enumerate(self.patch.simplices.tolist()):
            for perm in itertools.permutations(sorted(simplex)):
                chain = [tuple(sorted(perm[: i + 1])) for i in range(n + 1)]
                for k in range(n):
                    key = (t, tuple(chain[k:]))
                    if key not in pieces:
                        vol = simplex_volume(np.array([center(f) for f in chain[k:]]))
                        pieces[key] = (k, chain[k], t, vol)
        return list(pieces.values())

    @cached_property
    def dual_volumes(self) -> list[np.ndarray]:
        """Volume of the (n-k)-dimensional dual cell of each k-face."""
        patch, n = self.patch, self.n
        vols = [np.zeros(patch.num_faces(k)) for k in range(n + 1)]
        for k, face, _, vol in self._flags:
            vols[k][patch.locate(face)[0]] += vol
        vols[n][:] = 1.0
        return vols

    @cached_property
    def primal_volumes(self) -> list[np.ndarray]:
        vols = [np.ones(self.patch.num_vertices)]
        vols += [self.patch.face_volumes(k) for k in range(1, self.n)]
        vols.append(self.patch.simplex_volumes)
        return vols

    @cached_property
    def star_diagonals(self) -> list[np.ndarray]:
        stars = [d / p for d, p in zip(self.dual_volumes, self.primal_volumes)]
        for k, s in enumerate(stars):
            if not np.all(np.isfinite(s)) or np.any(s == 0):
                raise _err(f"dual cells of {k}-faces are degenerate", "hodge_star")
        return stars

    def star_matrix(self, k: int) -> sp.dia_matrix:
        return sp.diags(self.star_diagonals[k])

    def hodge_star(self, c: Cochain) -> Cochain:
        """Primal k-cochain to dual (n-k)-cochain, or the inverse map on dual input."""
        n = self.n
        if not c.dual:
            k = c.degree
            return Cochain(self.patch, n - k, self.star_diagonals[k] * c.values, dual=True)
        k = n - c.degree
        sign = (-1) ** (k * (n - k))
        return Cochain(self.patch, k, sign * c.values / self.star_diagonals[k])

    def inner(self, a: Cochain, b: Cochain) -> float:
        """<a, b> = a^T * b in the diagonal star metric."""
        if a.degree != b.degree or a.dual or b.dual:
            raise _err("inner product needs primal cochains of one degree", "inner")
        return float(a.values @ (self.star_diagonals[a.degree] * b.values))

    def codifferential(self, c: Cochain) -> Cochain:
        """Adjoint of d in the star metric, with natural (zero-flux) boundary behaviour."""
        k = c.degree
        if c.dual or not 1 <= k <= self.n:
            raise _err("codifferential needs a primal cochain of degree >= 1", "codifferential")
        v = self.d_matrix(k - 1).T @ (self.star_diagonals[k] * c.values)
        return Cochain(self.patch, k - 1, v / self.star_diagonals[k - 1])

    def div_star_matrix(self) -> sp.csr_matrix:
        """d*eta on dual n-cells (one per vertex) as a matrix acting on 1-cochains.

        Row v is the net outward flux of *eta through the boundary of the dual
        cell of v.  Boundary vertices see no flux across the patch boundary.
        """
        return (-(self.d_matrix(0).T @ self.star_matrix(1))).tocsr()

    def d_star(self, eta: Cochain) -> Cochain:
        if eta.degree != 1 or eta.dual:
            raise _err("d_star needs a primal 1-cochain", "d_star")
        return Cochain(self.patch, self.n, self.div_star_matrix() @ eta.values, dual=True)

    # -- top-degree transfer ------------------------------------------------
    @cached_property
    def top_to_dual(self) -> sp.csr_matrix:
        """Area-weighted transfer of primal n-cochains onto dual n-cells (vertices).

        Each top simplex spreads its value over the pieces of the vertex dual
        cells it contains; column sums are 1, so integrals are preserved.
        """
        patch = self.patch
        rows, cols, vals = [], [], []
        for k, face, t, vol in self._flags:
            if k == 0:
                rows.append(face[0])
                cols.append(t)
                vals.append(vol / patch.simplex_volumes[t])
        return sp.csr_matrix((vals, (rows, cols)), shape=(patch.num_vertices, patch.num_faces(patch.n)))

    def to_dual_top(self, c: Cochain) -> Cochain:
        if c.dual or c.degree != self.n:
            raise _err("to_dual_top needs a primal n-cochain", "to_dual_top")
        return Cochain(self.patch, self.n, self.top_to_dual @ c.values, dual=True)

    # -- integration and boundary -------------------------------------------
    def integrate(self, c: Cochain) -> float:
        if c.degree != self.n:
            raise _err(f"integrate needs degree {self.n}, got {c.degree}", "integrate")
        return float(np.sum(c.values))

    def boundary_trace(self, c: Cochain) -> BoundaryCochain:
        k = c.degree
        if c.dual or k > self.n - 1:
            raise _err("boundary trace needs a primal cochain of degree <= n-1", "boundary_trace")
        idx = np.nonzero(self.patch.boundary_simplex_mask[k])[0]
        return BoundaryCochain(self.patch, k, idx, c.values[idx].copy())

    def boundary_d_matrix(self, k: int) -> sp.csr_matrix:
        """Coboundary of the boundary complex, k -> k+1 (k + 1 <= n - 1)."""
        masks = self.patch.boundary_simplex_mask
        if not 0 <= k < self.n - 1:
            raise _err("boundary complex coboundary degree out of range", "boundary_trace")
        d = self.d_matrix(k).tocsc()[:, masks[k]].tocsr()
        return d[masks[k + 1]]

    def boundary_coboundary(self, b: BoundaryCochain) -> BoundaryCochain:
        k = b.degree
        d = self.boundary_d_matrix(k)
        idx = np.nonzero(self.patch.boundary_simplex_mask[k + 1])[0]
        return BoundaryCochain(self.patch, k + 1, idx, d @ b.values)

    # -- Whitney evaluation ---------------------------------------------------
    @cached_property
    def _vertex_covector_maps(self):
        """Per (simplex, local vertex): map from the n edge values at that vertex to a covector."""
        patch = self.patch
        out = []
        for s in patch.simplices:
            pts = patch.vertices[s]
            local = []
            for i in range(len(s)):
                others = [j for j in range(len(s)) if j != i]
                edges = pts[others] - pts[i]
                # covector c in span(edges) with c . edge_j = value_j
                local.append((others, np.linalg.pinv(edges)))
            out.append(local)
        return out

    def whitney_at_vertex(self, c: Cochain, vertex: int) -> np.ndarray:
        """Volume-averaged lowest-order Whitney reconstruction of a 1-cochain at a vertex."""
        if c.degree != 1 or c.dual:
            raise _err("Whitney evaluation needs a primal 1-cochain", "normal_component")
        patch = self.patch
        acc = np.zeros(patch.ambient_dim)
        total = 0.0
        for t, s in enumerate(patch.simplices.tolist()):
            if vertex not in s:
                continue
            i = s.index(vertex)
            others, pinv = self._vertex_covector_maps[t][i]
            vals = np.array([c.on((vertex, s[j])) for j in others])
            w = patch.simplex_volumes[t]
            acc += w * (pinv @ vals)
            total += w
        return acc / total

    def normal_component(self, c: Cochain, bdata: BoundaryData) -> np.ndarray:
        """eta(N) at each boundary vertex via Whitney interpolation."""
        return np.array(
            [self.whitney_at_vertex(c, int(v)) @ nrm for v, nrm in zip(bdata.vertex_indices,
                                                                     bdata.inward_normal)]
        )


# -- helpers --------------------------------------------------------------
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def one_form_cochain(patch: SimplicialPatch, field) -> Cochain:
    """1-cochain of line integrals of the g-dual of a vector field along each edge.

    ``field`` maps an (m, 2n) array of points to (m, 2n) vectors.  Four-point
    Gauss-Legendre quadrature makes the result exact for fields of degree <= 7.
    """
    e = patch.faces(1)
    a, b = patch.vertices[e[:, 0]], patch.vertices[e[:, 1]]
    vals = np.zeros(len(e))
    for x, w in zip(_GL_NODES, _GL_WEIGHTS):
        t = 0.5 * (x + 1)
        vals += 0.5 * w * np.sum(field(a + t * (b - a)) * (b - a), axis=1)
    return Cochain(patch, 1, vals)


def angular_cochain(patch: SimplicialPatch, axes=(0, 2), center=(0.0, 0.0)) -> Cochain:
    """Edge increments of the polar angle about ``center`` in the plane of coordinates ``axes``."""
    e = patch.faces(1)
    z = (patch.vertices[:, axes[0]] - center[0]) + 1j * (patch.vertices[:, axes[1]] - center[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        return Cochain(patch, 1, np.angle(z[e[:, 1]] / z[e[:, 0]]))


def boundary_components(patch: SimplicialPatch) -> list[np.ndarray]:
    """Boundary (n-1)-face indices grouped by connected component of the boundary."""
    faces = patch.faces(patch.n - 1)
    bidx = patch.boundary_face_indices
    parent = {int(i): int(i) for i in bidx}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    by_vertex: dict[int, int] = {}
    for i in bidx.tolist():
        for v in faces[i].tolist():
            if v in by_vertex:
                parent[find(i)] = find(by_vertex[v])
            else:
                by_vertex[v] = i
    groups: dict[int, list[int]] = {}
    for i in bidx.tolist():
        groups.setdefault(find(i), []).append(i)
    return [np.array(sorted(g)) for g in sorted(groups.values(), key=min)]


def boundary_circulations(ops: DecOperators, c: Cochain) -> list[float]:
    """Integral of a 1-cochain (n = 2) over each boundary component, induced orientation."""
    signs = dict(zip(ops.patch.boundary_face_indices.tolist(), ops.patch.boundary_face_signs))
    return [float(sum(signs[int(i)] * c.values[i] for i in comp))
            for comp in boundary_components(ops.patch)]


def cochain_to_csv(c: Cochain) -> str:
    buf = io.StringIO()
    kind = "dual" if c.dual else "primal"
    buf.write(f"# degree={c.degree} kind={kind} patch={c.patch.digest}\n")
    buf.write("simplex_index,value\n")
    for i, v in enumerate(c.values):
        buf.write(f"{i},{v:.17g}\n")
    return buf.getvalue()
