"""Oriented simplicial patches with boundary, embedded in R^{2n}."""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .cochain import Cochain, permutation_sign
from .errors import ParseError, ValidationError

DEGENERACY_TOL = 1e-12
RANK_TOL = 1e-9


def simplex_volume(points: np.ndarray) -> float:
    """Unsigned k-volume of the affine simplex with the given k+1 vertices."""
    edges = points[1:] - points[0]
    k = edges.shape[0]
    if k == 0:
        return 1.0
    gram = edges @ edges.T
    return math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(k)


def _err(msg: str, operation: str = "validate", **details) -> ValidationError:
    return ValidationError(msg, module="mesh", operation=operation, **details)


@dataclass(frozen=True, eq=False)
class SimplicialPatch:
    """An oriented n-manifold-with-boundary triangulation in R^{2n}.

    Construction validates the manifold, orientation, non-degeneracy and
    connectivity invariants; a patch is immutable afterwards and all derived
    data is cached.
    """

    vertices: np.ndarray
    simplices: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        simp = np.array(self.simplices, dtype=np.int64)
        if simp.ndim != 2 or simp.shape[0] == 0:
            raise _err("patch needs at least one simplex")
        if verts.ndim != 2:
            raise _err("vertices must be a 2-d array")
        verts.setflags(write=False)
        simp.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "simplices", simp)
        if self.validate:
            self._validate()

    # -- basic shape -------------------------------------------------------
    @property
    def n(self) -> int:
        return self.simplices.shape[1] - 1

    @property
    def intrinsic_dim(self) -> int:
        return self.n

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    def num_faces(self, k: int) -> int:
        return len(self.faces(k))

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.simplices).tobytes())
        return h.hexdigest()[:16]

    # -- combinatorics -----------------------------------------------------
    @cached_property
    def _faces(self) -> list[np.ndarray]:
        n = self.n
        out = []
        for k in range(n):
            combos = set()
            for s in self.simplices:
                combos.update(itertools.combinations(sorted(s.tolist()), k + 1))
            out.append(np.array(sorted(combos), dtype=np.int64).reshape(-1, k + 1))
        out.append(self.simplices)
        return out

    def faces(self, k: int) -> np.ndarray:
        """k-simplices: sorted tuples for k < n, stored orientation for k = n."""
        return self._faces[k]

    @cached_property
    def _face_index(self) -> list[dict]:
        return [
            {tuple(sorted(f.tolist())): i for i, f in enumerate(fk)} for fk in self._faces
        ]

    @cached_property
    def top_orientation(self) -> np.ndarray:
        """Sign of each stored top simplex relative to its sorted vertex order."""
        return np.array([permutation_sign(s) for s in self.simplices.tolist()])

    def locate(self, simplex) -> tuple[int, int]:
        """Index of an oriented simplex and its sign relative to the stored orientation."""
        simplex = [int(v) for v in simplex]
        k = len(simplex) - 1
        key = tuple(sorted(simplex))
        try:
            idx = self._face_index[k][key]
        except (IndexError, KeyError):
            raise KeyError(f"simplex {simplex} not in patch") from None
        sign = permutation_sign(simplex)
        if k == self.n:
            sign *= int(self.top_orientation[idx])
        return idx, sign

    def boundary_matrix(self, k: int) -> sp.csr_matrix:
        """Signed incidence from k-simplices to (k-1)-faces, shape (N_{k-1}, N_k)."""
        if not 1 <= k <= self.n:
            raise ValueError(f"boundary_matrix needs 1 <= k <= {self.n}")
        lower = self._face_index[k - 1]
        rows, cols, vals = [], [], []
        top = k == self.n
        for j, s in enumerate(self.faces(k).tolist()):
            ordered = sorted(s)
            base = int(self.top_orientation[j]) if top else 1
            for i in range(k + 1):
                face = tuple(ordered[:i] + ordered[i + 1:])
                rows.append(lower[face])
                cols.append(j)
                vals.append(base * (-1) ** i)
        shape = (self.num_faces(k - 1), self.num_faces(k))
        return sp.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=shape)

    @cached_property
    def _coface_info(self):
        """For each (n-1)-face: list of (top simplex index, induced sign)."""
        n = self.n
        info: dict[tuple, list[tuple[int, int]]] = {}
        for j, s in enumerate(self.simplices.tolist()):
            for i in range(n + 1):
                face = s[:i] + s[i + 1:]
                induced = (-1) ** i * permutation_sign(face)
                info.setdefault(tuple(sorted(face)), []).append((j, induced))
        return info

    @cached_property
    def boundary_face_indices(self) -> np.ndarray:
        """Indices into faces(n-1) of faces with exactly one coface."""
        idx = self._face_index[self.n - 1]
        out = [idx[f] for f, cof in self._coface_info.items() if len(cof) == 1]
        return np.array(sorted(out), dtype=np.int64)

    @cached_property
    def boundary_face_signs(self) -> np.ndarray:
        """+1 where a boundary face's sorted order agrees with its induced orientation."""
        faces = self.faces(self.n - 1)
        return np.array(
            [self._coface_info[tuple(faces[i].tolist())][0][1] for i in self.boundary_face_indices],
            dtype=float,
        )

    @cached_property
    def boundary_face_cofaces(self) -> np.ndarray:
        faces = self.faces(self.n - 1)
        return np.array(
            [self._coface_info[tuple(faces[i].tolist())][0][0] for i in self.boundary_face_indices],
            dtype=np.int64,
        )

    @property
    def boundary_faces(self) -> np.ndarray:
        """Boundary (n-1)-faces with the orientation induced from their coface."""
        faces = self.faces(self.n - 1)[self.boundary_face_indices].copy()
        flip = self.boundary_face_signs < 0
        if faces.shape[1] >= 2:
            faces[flip, :2] = faces[flip, 1::-1]
        return faces

    @cached_property
    def boundary_vertex_indices(self) -> np.ndarray:
        faces = self.faces(self.n - 1)[self.boundary_face_indices]
        return np.unique(faces.ravel())

    @cached_property
    def boundary_simplex_mask(self) -> list[np.ndarray]:
        """Per degree k <= n-1, boolean mask of k-faces lying in the boundary complex."""
        faces = self.faces(self.n - 1)[self.boundary_face_indices]
        masks = []
        for k in range(self.n):
            keys = set()
            for f in faces.tolist():
                keys.update(itertools.combinations(f, k + 1))
            idx = self._face_index[k]
            m = np.zeros(self.num_faces(k), dtype=bool)
            m[[idx[key] for key in keys]] = True
            masks.append(m)
        return masks

    # -- geometry ----------------------------------------------------------
    @cached_property
    def simplex_volumes(self) -> np.ndarray:
        return np.array([simplex_volume(self.vertices[s]) for s in self.simplices])

    def face_volumes(self, k: int) -> np.ndarray:
        return np.array([simplex_volume(self.vertices[f]) for f in self.faces(k)])

    @cached_property
    def mesh_size(self) -> float:
        e = self.faces(1)
        return float(np.max(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)))

    @cached_property
    def tangent_frames(self) -> np.ndarray:
        """Orthonormal basis (V, n, 2n) of the volume-averaged tangent plane at each vertex."""
        n, dim = self.n, self.ambient_dim
        acc = np.zeros((self.num_vertices, dim, dim))
        for s, vol in zip(self.simplices, self.simplex_volumes):
            edges = self.vertices[s[1:]] - self.vertices[s[0]]
            q, _ = np.linalg.qr(edges.T)
            proj = vol * (q @ q.T)
            for v in s:
                acc[v] += proj
        _, vecs = np.linalg.eigh(acc)
        return np.transpose(vecs[:, :, ::-1][:, :, :n], (0, 2, 1))

    # -- validation --------------------------------------------------------
    def _validate(self):
        verts, simp, n = self.vertices, self.simplices, self.n
        if n < 1:
            raise _err("simplices need at least two vertices")
        if verts.shape[1] != 2 * n:
            raise _err(f"ambient dimension {verts.shape[1]} != 2n = {2 * n}")
        if not np.all(np.isfinite(verts)):
            raise _err("non-finite vertex coordinate")
        if simp.min() < 0 or simp.max() >= len(verts):
            bad = int(np.nonzero((simp < 0).any(1) | (simp >= len(verts)).any(1))[0][0])
            raise _err(f"simplex {bad} references a missing vertex", simplex=bad)
        for j, s in enumerate(simp):
            if len(set(s.tolist())) != n + 1:
                raise _err(f"simplex {j} repeats a vertex", simplex=j)
            pts = verts[s]
            longest = max(np.linalg.norm(a - b) for a, b in itertools.combinations(pts, 2))
            if simplex_volume(pts) < DEGENERACY_TOL * longest**n:
                raise _err(f"simplex {j} is degenerate", simplex=j)
        for face, cof in self._coface_info.items():
            if len(cof) > 2:
                raise _err(
                    f"face {face} has {len(cof)} cofaces (non-manifold) at simplex {cof[2][0]}",
                    simplex=cof[2][0],
                )
            if len(cof) == 2 and cof[0][1] == cof[1][1]:
                raise _err(
                    f"simplices {cof[0][0]} and {cof[1][0]} induce the same orientation on "
                    f"face {face} (non-orientable or inconsistently oriented)",
                    simplex=cof[1][0],
                )
        unused = np.setdiff1d(np.arange(len(verts)), simp.ravel())
        if unused.size:
            raise _err(f"vertex {int(unused[0])} belongs to no simplex (disconnected patch)")
        if self._components() != 1:
            raise _err("patch is disconnected; connected patches only")

    def _components(self) -> int:
        parent = list(range(len(self.simplices)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for cof in self._coface_info.values():
            if len(cof) == 2:
                ra, rb = find(cof[0][0]), find(cof[1][0])
                parent[ra] = rb
        return len({find(i) for i in range(len(parent))})


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Boundary vertices of a patch with their inward unit normals.

    ``tangent`` holds an orthonormal basis of the averaged tangent plane of
    L at each boundary vertex.  ``inward_normal`` is the normalized sum of the
    unit in-simplex conormals of the incident boundary faces, projected into
    that plane, and ``boundary_tangent`` spans its complement there.
    """

    vertex_indices: np.ndarray
    inward_normal: np.ndarray
    tangent: np.ndarray
    boundary_tangent: np.ndarray

    @cached_property
    def position(self) -> dict[int, int]:
        return {int(v): i for i, v in enumerate(self.vertex_indices)}

    def __len__(self) -> int:
        return len(self.vertex_indices)


def boundary_data(patch: SimplicialPatch) -> BoundaryData:
    bidx = patch.boundary_face_indices
    if bidx.size == 0:
        raise ValidationError(
            "empty boundary: patch is closed", module="mesh", operation="boundary_data"
        )
    n, dim = patch.n, patch.ambient_dim
    verts = patch.vertices
    faces = patch.faces(n - 1)[bidx]
    cofaces = patch.boundary_face_cofaces
    bverts = patch.boundary_vertex_indices
    pos = {int(v): i for i, v in enumerate(bverts)}

    normal_acc = np.zeros((len(bverts), dim))
    for face, c in zip(faces, cofaces):
        simplex = patch.simplices[c]
        opposite = [v for v in simplex if v not in face][0]
        origin = verts[face[0]]
        u = verts[opposite] - origin
        if n > 1:
            q, _ = np.linalg.qr((verts[face[1:]] - origin).T)
            u = u - q @ (q.T @ u)
        u /= np.linalg.norm(u)
        for v in face:
            normal_acc[pos[int(v)]] += u

    tangent = patch.tangent_frames[bverts]
    normals = np.empty_like(normal_acc)
    btangent = np.zeros((len(bverts), n - 1, dim))
    for i in range(len(bverts)):
        t = tangent[i]
        m = t.T @ (t @ normal_acc[i])
        m /= np.linalg.norm(m)
        normals[i] = m
        if n > 1:
            # complement of the normal inside the averaged tangent plane
            coeffs = np.linalg.svd((t @ m)[None, :])[2][1:]
            bt = coeffs @ t
            btangent[i] = bt
    return BoundaryData(bverts, normals, tangent, btangent)


def betti_numbers(patch: SimplicialPatch) -> tuple[int, int]:
    """(b0, b1) of the patch over the reals, from ranks of boundary matrices."""
    ranks = [0]
    for k in range(1, patch.n + 1):
        ranks.append(_rank(patch.boundary_matrix(k).toarray()))
    ranks.append(0)
    betti = [patch.num_faces(k) - ranks[k] - ranks[k + 1] for k in range(patch.n + 1)]
    return betti[0], betti[1] if patch.n >= 1 else 0


def _rank(a: np.ndarray) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0


def volume_cochain(patch: SimplicialPatch) -> Cochain:
    """Vol_L as a primal n-cochain on the stored, oriented top simplices."""
    return Cochain(patch, patch.n, patch.simplex_volumes.copy())


# -- slmesh text format -----------------------------------------------------
def parse_slmesh(text: str) -> SimplicialPatch:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise ParseError("empty mesh file", module="mesh", operation="load_mesh")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "slmesh":
        raise ParseError(f"bad header {lines[0]!r}", module="mesh", operation="load_mesh")
    try:
        n, nv, ns = (int(x) for x in head[1:])
    except ValueError:
        raise ParseError(f"bad header {lines[0]!r}", module="mesh", operation="load_mesh") from None
    if len(lines) != 1 + nv + ns:
        raise ParseError(
            f"expected {nv} vertex and {ns} simplex lines, found {len(lines) - 1} data lines",
            module="mesh", operation="load_mesh",
        )
    try:
        verts = np.array([[float(x) for x in ln.split()] for ln in lines[1:1 + nv]])
        simp = np.array([[int(x) for x in ln.split()] for ln in lines[1 + nv:]])
    except ValueError as exc:
        raise ParseError(str(exc), module="mesh", operation="load_mesh") from None
    if verts.shape != (nv, 2 * n) or simp.shape != (ns, n + 1):
        raise ParseError(
            f"row widths do not match n = {n}", module="mesh", operation="load_mesh"
        )
    return SimplicialPatch(verts, simp)


def load_mesh(path) -> SimplicialPatch:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc), module="mesh", operation="load_mesh") from None
    return parse_slmesh(text)


def format_slmesh(patch: SimplicialPatch, vertices: np.ndarray | None = None) -> str:
    verts = patch.vertices if vertices is None else vertices
    out = [f"slmesh {patch.n} {len(verts)} {len(patch.simplices)}"]
    out += [" ".join(f"{x:.17g}" for x in row) for row in verts]
    out += [" ".join(str(int(i)) for i in row) for row in patch.simplices]
    return "\n".join(out) + "\n"


def save_mesh(patch: SimplicialPatch, path, vertices: np.ndarray | None = None) -> None:
    Path(path).write_text(format_slmesh(patch, vertices), encoding="ascii")


def circumcenter(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Circumcenter of a k-simplex in its affine hull, and its barycentric coordinates."""
    k = len(points) - 1
    if k == 0:
        return points[0].copy(), np.ones(1)
    a = np.zeros((k + 2, k + 2))
    a[: k + 1, : k + 1] = 2 * points @ points.T
    a[: k + 1, k + 1] = 1
    a[k + 1, : k + 1] = 1
    rhs = np.zeros(k + 2)
    rhs[: k + 1] = np.sum(points**2, axis=1)
    rhs[k + 1] = 1
    bary = np.linalg.solve(a, rhs)[: k + 1]
    return bary @ points, bary


def is_well_centered(patch: SimplicialPatch, margin: float = 1e-9) -> bool:
    """True if every simplex of dimension >= 2 strictly contains its circumcenter."""
    for k in range(2, patch.n + 1):
        for f in patch.faces(k):
            _, bary = circumcenter(patch.vertices[f])
            if bary.min() <= margin:
                return False
    return True
