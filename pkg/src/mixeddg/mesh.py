"""Meshes and face topology.

Structured triangle/quad/tet families are generated directly at each level;
unstructured triangle meshes are read from text files and refined by edge
midpoints.  All cells are affine images of their reference cell (simplices,
or parallelogram quads), with positive orientation normalized at build time.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .polybasis import REF_MEASURE

VERTS_PER_CELL = {"triangle": 3, "quad": 4, "tetrahedron": 4}

# local faces as tuples of local vertex indices
LOCAL_FACES = {
    "triangle": ((0, 1), (1, 2), (2, 0)),
    "quad": ((0, 1), (1, 2), (2, 3), (3, 0)),
    "tetrahedron": ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)),
}


class MeshError(ValueError):
    """Invalid mesh data (degenerate cells, broken topology, bad file)."""


@dataclass(frozen=True)
class Mesh:
    """Immutable simplicial or rectangular mesh of an axis-aligned box."""

    dim: int
    cell_kind: str
    vertices: np.ndarray    # (nv, dim)
    cells: np.ndarray       # (nc, verts_per_cell)
    domain_box: np.ndarray  # (dim, 2)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @cached_property
    def cell_v0(self) -> np.ndarray:
        return self.vertices[self.cells[:, 0]]

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map Jacobians, shape (nc, dim, dim); columns are edge vectors."""
        v = self.vertices[self.cells]  # (nc, nvc, dim)
        if self.cell_kind == "quad":
            cols = (v[:, 1] - v[:, 0], v[:, 3] - v[:, 0])
        else:
            cols = tuple(v[:, i] - v[:, 0] for i in range(1, v.shape[1]))
        return np.stack(cols, axis=-1)

    @cached_property
    def det_jac(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def jac_inv(self) -> np.ndarray:
        if np.any(np.abs(self.det_jac) < 1e-300):
            raise MeshError("singular cell map (degenerate cell)")
        return np.linalg.inv(self.jacobians)

    @cached_property
    def measures(self) -> np.ndarray:
        return np.abs(self.det_jac) * REF_MEASURE[self.cell_kind]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """h_K: maximum pairwise vertex distance of each cell."""
        v = self.vertices[self.cells]
        diff = v[:, :, None, :] - v[:, None, :, :]
        return np.sqrt((diff ** 2).sum(-1)).max(axis=(1, 2))

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    def cell_points(self, cell: int, ref_points: np.ndarray) -> np.ndarray:
        """Map reference points to physical coordinates of a cell."""
        return self.cell_v0[cell] + ref_points @ self.jacobians[cell].T

    def cell_ref_coords(self, cell: int, phys_points: np.ndarray) -> np.ndarray:
        """Invert the affine cell map at physical points."""
        return (phys_points - self.cell_v0[cell]) @ self.jac_inv[cell].T


def _box_array(box) -> np.ndarray:
    b = np.asarray(box, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
        raise MeshError(f"bad domain box {box!r}")
    return b


def _make_mesh(dim, kind, vertices, cells, box) -> Mesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    vertices.setflags(write=False)
    cells.setflags(write=False)
    box = _box_array(box)
    box.setflags(write=False)
    mesh = Mesh(dim, kind, vertices, cells, box)
    _validate(mesh)
    return mesh


def _validate(mesh: Mesh) -> None:
    if mesh.cells.min(initial=0) < 0 or mesh.cells.max(initial=-1) >= mesh.num_vertices:
        raise MeshError("cell vertex index out of range")
    seen = set()
    for i, cell in enumerate(mesh.cells):
        key = tuple(sorted(cell))
        if len(set(key)) != len(key):
            raise MeshError(f"cell {i} repeats a vertex")
        if key in seen:
            raise MeshError(f"duplicated cell {i}")
        seen.add(key)
    if mesh.cell_kind == "quad":
        v = mesh.vertices[mesh.cells]
        gap = v[:, 2] - v[:, 1] - v[:, 3] + v[:, 0]
        scale = mesh.diameters[:, None]
        if np.any(np.abs(gap) > 1e-12 * scale):
            raise MeshError("quad cells must be parallelograms (affine map)")
    if np.any(mesh.det_jac <= 0):
        bad = int(np.argmax(mesh.det_jac <= 0))
        raise MeshError(f"cell {bad} has non-positive measure")
    box_measure = float(np.prod(mesh.domain_box[:, 1] - mesh.domain_box[:, 0]))
    total = float(mesh.measures.sum())
    if abs(total - box_measure) > 1e-12 * box_measure:
        raise MeshError(
            f"cells do not tile the domain box: sum of measures {total} vs {box_measure}"
        )


def build_uniform_tri(n: int, box=((-1.0, 1.0), (-1.0, 1.0))) -> Mesh:
    """n-by-n grid of squares, each split by its lower-left/upper-right diagonal."""
    if n < 1:
        raise MeshError("n must be >= 1")
    box = _box_array(box)
    xs = np.linspace(box[0, 0], box[0, 1], n + 1)
    ys = np.linspace(box[1, 0], box[1, 1], n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel()], axis=-1)

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            ll, lr = vid(i, j), vid(i + 1, j)
            ul, ur = vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((ll, lr, ur))
            cells.append((ll, ur, ul))
    return _make_mesh(2, "triangle", verts, cells, box)


def build_uniform_quad(n: int, box=((-1.0, 1.0), (-1.0, 1.0))) -> Mesh:
    """n-by-n axis-aligned rectangles."""
    if n < 1:
        raise MeshError("n must be >= 1")
    box = _box_array(box)
    xs = np.linspace(box[0, 0], box[0, 1], n + 1)
    ys = np.linspace(box[1, 0], box[1, 1], n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel()], axis=-1)

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return _make_mesh(2, "quad", verts, cells, box)


# Kuhn split: one tet per permutation of the coordinate insertion order,
# conforming across neighboring cubes.
_KUHN_PERMS = (
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
)


def build_uniform_tet(n: int, box=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))) -> Mesh:
    """n^3 cubes, each split into 6 tetrahedra along the main diagonal."""
    if n < 1:
        raise MeshError("n must be >= 1")
    box = _box_array(box)
    axes = [np.linspace(box[d, 0], box[d, 1], n + 1) for d in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    cells = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                corner = np.array([i, j, k])
                for perm in _KUHN_PERMS:
                    path = [corner.copy()]
                    for axis in perm:
                        nxt = path[-1].copy()
                        nxt[axis] += 1
                        path.append(nxt)
                    tet = [vid(*p) for p in path]
                    a, b, c, d = (verts[t] for t in tet)
                    if np.linalg.det(np.stack([b - a, c - a, d - a], axis=-1)) < 0:
                        tet[2], tet[3] = tet[3], tet[2]
                    cells.append(tuple(tet))
    return _make_mesh(3, "tetrahedron", verts, cells, box)


def refine_red(mesh: Mesh) -> Mesh:
    """Split every triangle into 4 similar children by connecting edge midpoints."""
    if mesh.cell_kind != "triangle":
        raise MeshError("red refinement is implemented for triangle meshes only")
    verts = list(map(tuple, mesh.vertices))
    midpoint = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        idx = midpoint.get(key)
        if idx is None:
            idx = len(verts)
            verts.append(tuple((mesh.vertices[a] + mesh.vertices[b]) / 2.0))
            midpoint[key] = idx
        return idx

    cells = []
    for v0, v1, v2 in mesh.cells:
        m01, m12, m02 = mid(v0, v1), mid(v1, v2), mid(v0, v2)
        cells.extend([(v0, m01, m02), (m01, v1, m12), (m02, m12, v2), (m01, m12, m02)])
    return _make_mesh(2, "triangle", np.array(verts), cells, mesh.domain_box)


def read_mesh(text: str) -> Mesh:
    """Parse the whitespace-separated mesh file format.

    Format::

        dim <2|3> kind <tri|quad|tet>
        vertices <n>
        <n coordinate lines>
        cells <m>
        <m lines of 0-based vertex indices>

    Lines starting with '#' are ignored.  Simplex orientation is normalized
    to positive signed measure.
    """
    kinds = {"tri": "triangle", "quad": "quad", "tet": "tetrahedron"}
    lines = [
        (i + 1, line.strip())
        for i, line in enumerate(text.splitlines())
        if line.strip() and not line.strip().startswith("#")
    ]
    pos = 0

    def take(expect: str):
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"unexpected end of file, expected {expect}")
        item = lines[pos]
        pos += 1
        return item

    lineno, header = take("header")
    tok = header.split()
    if len(tok) != 4 or tok[0] != "dim" or tok[2] != "kind" or tok[3] not in kinds:
        raise MeshError(f"line {lineno}: malformed header {header!r}")
    try:
        dim = int(tok[1])
    except ValueError:
        raise MeshError(f"line {lineno}: bad dimension {tok[1]!r}") from None
    kind = kinds[tok[3]]
    if dim not in (2, 3) or (dim == 3) != (kind == "tetrahedron"):
        raise MeshError(f"line {lineno}: dimension {dim} incompatible with kind {tok[3]}")

    lineno, decl = take("vertex count")
    tok = decl.split()
    if len(tok) != 2 or tok[0] != "vertices":
        raise MeshError(f"line {lineno}: expected 'vertices <n>', got {decl!r}")
    nv = int(tok[1])
    verts = np.empty((nv, dim))
    for i in range(nv):
        lineno, row = take("vertex coordinates")
        vals = row.split()
        if len(vals) != dim:
            raise MeshError(f"line {lineno}: expected {dim} coordinates")
        try:
            verts[i] = [float(v) for v in vals]
        except ValueError:
            raise MeshError(f"line {lineno}: bad coordinate in {row!r}") from None

    lineno, decl = take("cell count")
    tok = decl.split()
    if len(tok) != 2 or tok[0] != "cells":
        raise MeshError(f"line {lineno}: expected 'cells <m>', got {decl!r}")
    nc = int(tok[1])
    nvc = VERTS_PER_CELL[kind]
    cells = np.empty((nc, nvc), dtype=np.int64)
    cell_lines = []
    for i in range(nc):
        lineno, row = take("cell indices")
        vals = row.split()
        if len(vals) != nvc:
            raise MeshError(f"line {lineno}: expected {nvc} vertex indices")
        try:
            cells[i] = [int(v) for v in vals]
        except ValueError:
            raise MeshError(f"line {lineno}: bad vertex index in {row!r}") from None
        if cells[i].min() < 0 or cells[i].max() >= nv:
            raise MeshError(f"line {lineno}: vertex index out of range")
        cell_lines.append(lineno)

    _normalize_orientation(kind, verts, cells, cell_lines)
    box = np.stack([verts.min(axis=0), verts.max(axis=0)], axis=-1)
    try:
        return _make_mesh(dim, kind, verts, cells, box)
    except MeshError as exc:
        raise MeshError(f"invalid mesh: {exc}") from exc


def _normalize_orientation(kind, verts, cells, cell_lines):
    for i in range(cells.shape[0]):
        v = verts[cells[i]]
        if kind == "quad":
            # shoelace area of the quadrilateral loop
            x, y = v[:, 0], v[:, 1]
            area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
            if abs(area) < 1e-300:
                raise MeshError(f"line {cell_lines[i]}: zero-measure cell")
            if area < 0:
                cells[i] = cells[i, ::-1]
            continue
        edges = np.stack([v[j] - v[0] for j in range(1, v.shape[0])], axis=-1)
        det = np.linalg.det(edges)
        if abs(det) < 1e-300:
            raise MeshError(f"line {cell_lines[i]}: zero-measure cell")
        if det < 0:
            cells[i, -2], cells[i, -1] = cells[i, -1], cells[i, -2]


@dataclass(frozen=True)
class Face:
    """One mesh face with geometry and (up to two) incident cells.

    The stored unit normal points out of `plus_cell`; for interior faces that
    is from plus into minus, and n_minus = -n_plus by convention.
    """

    vertices: tuple
    measure: float
    normal: np.ndarray
    plus_cell: int
    plus_local: int
    minus_cell: int = -1
    minus_local: int = -1

    @property
    def is_interior(self) -> bool:
        return self.minus_cell >= 0


@dataclass(frozen=True)
class FaceTopology:
    faces: tuple
    interior_count: int
    boundary_count: int

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def interior(self) -> tuple:
        return tuple(f for f in self.faces if f.is_interior)

    @cached_property
    def boundary(self) -> tuple:
        return tuple(f for f in self.faces if not f.is_interior)


def _face_geometry(mesh: Mesh, vert_ids) -> tuple:
    v = mesh.vertices[list(vert_ids)]
    if mesh.dim == 2:
        t = v[1] - v[0]
        measure = float(np.linalg.norm(t))
        normal = np.array([t[1], -t[0]]) / measure
    else:
        cr = np.cross(v[1] - v[0], v[2] - v[0])
        measure = float(np.linalg.norm(cr)) / 2.0
        normal = cr / (2.0 * measure)
    return measure, normal, v.mean(axis=0)


def build_face_topology(mesh: Mesh) -> FaceTopology:
    """Pair cell faces by vertex sets; unmatched non-boundary faces are rejected."""
    local_faces = LOCAL_FACES[mesh.cell_kind]
    by_key: dict = {}
    order = []
    for c in range(mesh.num_cells):
        cell = mesh.cells[c]
        for lf, idx in enumerate(local_faces):
            key = tuple(sorted(int(cell[i]) for i in idx))
            rec = by_key.get(key)
            if rec is None:
                by_key[key] = [tuple(int(cell[i]) for i in idx), c, lf, -1, -1]
                order.append(key)
            elif rec[3] < 0:
                rec[3], rec[4] = c, lf
            else:
                raise MeshError(f"face {key} shared by more than two cells")

    box = mesh.domain_box
    scale = float(np.max(box[:, 1] - box[:, 0]))
    faces = []
    n_int = 0
    for key in order:
        verts, plus, plus_local, minus, minus_local = by_key[key]
        measure, normal, fc = _face_geometry(mesh, verts)
        if np.dot(normal, fc - mesh.centroids[plus]) < 0:
            normal = -normal
        if minus >= 0:
            if np.dot(normal, mesh.centroids[minus] - mesh.centroids[plus]) <= 0:
                raise MeshError(f"inverted face orientation between cells {plus}, {minus}")
            n_int += 1
        else:
            on_box = np.any(
                (np.abs(fc - box[:, 0]) < 1e-9 * scale)
                | (np.abs(fc - box[:, 1]) < 1e-9 * scale)
            )
            if not on_box:
                raise MeshError(
                    f"unmatched interior face {key}: hanging nodes are not supported"
                )
        normal.setflags(write=False)
        faces.append(Face(tuple(verts), measure, normal, plus, plus_local, minus, minus_local))
    return FaceTopology(tuple(faces), n_int, len(faces) - n_int)


def face_quadrature(mesh: Mesh, face: Face, exactness: int):
    """Physical quadrature points and weights on a face.

    1D Gauss on edges of 2D meshes, triangle rules on tet faces.
    """
    from .polybasis import simplex_quadrature

    v = mesh.vertices[list(face.vertices)]
    if mesh.dim == 2:
        rule = simplex_quadrature(1, exactness)
        pts = v[0] + rule.points * (v[1] - v[0])
        wts = rule.weights * face.measure
    else:
        rule = simplex_quadrature(2, exactness)
        e1, e2 = v[1] - v[0], v[2] - v[0]
        pts = v[0] + rule.points[:, :1] * e1 + rule.points[:, 1:] * e2
        wts = rule.weights * (face.measure / 0.5)
    return pts, wts
