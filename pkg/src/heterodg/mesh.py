"""Polytopal meshes with simplicial faces.

Elements are polygons/polyhedra stored through face-incidence lists, so
generated quad/hex grids and imported general polytopes share one data
model.  Faces are segments in 2D and triangles in 3D; polygonal interfaces
of 3D elements are split fan-wise into co-planar triangles.  Meshes are
immutable after construction and safe to share between workers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

INTERNAL = "I"
DIRICHLET = "D"
NEUMANN = "N"

_TAGS = (INTERNAL, DIRICHLET, NEUMANN)


class MeshError(Exception):
    """Base class for mesh construction and validation failures."""


class MeshFormatError(MeshError):
    """Malformed mesh file.  Carries the 1-based offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshTopologyError(MeshError):
    """Inconsistent element/face incidence (dangling or non-manifold)."""


def harmonic_average(v_plus, v_minus):
    """Harmonic average 2ab/(a+b) of nonnegative scalars or arrays.

    Symmetric, bounded by min(a,b) <= H <= 2*min(a,b) for positive inputs,
    and zero whenever either argument is zero.  Raises ValueError if both
    arguments vanish (pointwise for arrays).
    """
    a = np.asarray(v_plus, dtype=float)
    b = np.asarray(v_minus, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("harmonic average requires nonnegative arguments")
    s = a + b
    if np.any(s == 0):
        raise ValueError("harmonic average undefined when both arguments are zero")
    out = 2.0 * a * b / s
    return float(out) if out.ndim == 0 else out


@dataclass
class PolyMesh:
    """Polytopal mesh: vertices, simplicial faces, and face-based elements.

    Faces store their vertex ids, the one or two incident elements
    (``face_elems[f, 1] == -1`` on the boundary) and a tag: internal "I",
    Dirichlet "D" or Neumann "N".  Face normals are unit vectors oriented
    outward from the first incident element.  All geometric quantities are
    derived once at construction.
    """

    dim: int
    vertices: np.ndarray                 # (n_vertices, dim)
    face_vertices: np.ndarray            # (n_faces, dim) vertex ids
    face_elems: np.ndarray               # (n_faces, 2) element ids, -1 = none
    face_tags: np.ndarray                # (n_faces,) one of "I", "D", "N"
    elem_faces: list                     # per element, array of face ids
    elem_vertices: list                  # per element, array of vertex ids
    axon: np.ndarray | None = None       # optional per-element unit direction

    face_normals: np.ndarray = field(init=False)
    face_areas: np.ndarray = field(init=False)
    face_centroids: np.ndarray = field(init=False)
    elem_measures: np.ndarray = field(init=False)
    elem_diameters: np.ndarray = field(init=False)
    elem_bbox: np.ndarray = field(init=False)      # (n_elements, 2, dim)
    elem_centroids: np.ndarray = field(init=False)
    elem_is_box: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise MeshError(f"unsupported dimension {self.dim}")
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.face_vertices = np.asarray(self.face_vertices, dtype=np.int64)
        self.face_elems = np.asarray(self.face_elems, dtype=np.int64)
        self.face_tags = np.asarray(self.face_tags, dtype="<U1")
        self.elem_faces = [np.asarray(f, dtype=np.int64) for f in self.elem_faces]
        self.elem_vertices = [np.asarray(v, dtype=np.int64) for v in self.elem_vertices]
        self._validate_topology()
        self._compute_geometry()
        if self.axon is not None:
            self.axon = np.asarray(self.axon, dtype=float)
            if self.axon.shape != (self.n_elements, self.dim):
                raise MeshError("axonal direction field must be (n_elements, dim)")

    # -- sizes ---------------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.face_vertices.shape[0]

    @property
    def n_elements(self):
        return len(self.elem_faces)

    @property
    def h(self):
        """Global mesh size: the largest element diameter."""
        return float(self.elem_diameters.max())

    def faces_with_tag(self, tag):
        return np.flatnonzero(self.face_tags == tag)

    # -- construction helpers ------------------------------------------

    def _validate_topology(self):
        n_v, n_f, n_e = self.n_vertices, self.n_faces, self.n_elements
        if self.face_vertices.shape[1] != self.dim:
            raise MeshTopologyError(
                f"faces must have {self.dim} vertices in {self.dim}D"
            )
        if np.any(self.face_vertices < 0) or np.any(self.face_vertices >= n_v):
            raise MeshTopologyError("face references a vertex that does not exist")
        for e, faces in enumerate(self.elem_faces):
            if faces.size == 0:
                raise MeshTopologyError(f"element {e} has no faces")
            if np.any(faces < 0) or np.any(faces >= n_f):
                raise MeshTopologyError(f"element {e} references a missing face")
        bad = ~np.isin(self.face_tags, _TAGS)
        if np.any(bad):
            raise MeshTopologyError(
                f"face {np.flatnonzero(bad)[0]} has an unknown tag"
            )
        internal = self.face_tags == INTERNAL
        two_sided = (self.face_elems[:, 0] >= 0) & (self.face_elems[:, 1] >= 0)
        if np.any(internal & ~two_sided):
            f = int(np.flatnonzero(internal & ~two_sided)[0])
            raise MeshTopologyError(f"internal face {f} has fewer than two elements")
        if np.any(~internal & two_sided):
            f = int(np.flatnonzero(~internal & two_sided)[0])
            raise MeshTopologyError(f"boundary face {f} is shared by two elements")
        same = self.face_elems[:, 0] == self.face_elems[:, 1]
        if np.any(same & two_sided):
            f = int(np.flatnonzero(same & two_sided)[0])
            raise MeshTopologyError(f"face {f} lists the same element twice")

    def _compute_geometry(self):
        verts = self.vertices
        fv = self.face_vertices
        self.face_centroids = verts[fv].mean(axis=1)

        if self.dim == 2:
            tang = verts[fv[:, 1]] - verts[fv[:, 0]]
            self.face_areas = np.linalg.norm(tang, axis=1)
            normals = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
        else:
            e1 = verts[fv[:, 1]] - verts[fv[:, 0]]
            e2 = verts[fv[:, 2]] - verts[fv[:, 0]]
            cross = np.cross(e1, e2)
            area2 = np.linalg.norm(cross, axis=1)
            self.face_areas = 0.5 * area2
            normals = cross
        if np.any(self.face_areas <= 0):
            f = int(np.flatnonzero(self.face_areas <= 0)[0])
            raise MeshError(f"face {f} is degenerate")
        normals = normals / np.linalg.norm(normals, axis=1)[:, None]

        # inside point of each element (vertex average; elements are
        # assumed star-shaped with respect to it)
        inside = np.zeros((self.n_elements, self.dim))
        bbox = np.zeros((self.n_elements, 2, self.dim))
        diam = np.zeros(self.n_elements)
        for e, vids in enumerate(self.elem_vertices):
            pts = verts[vids]
            inside[e] = pts.mean(axis=0)
            bbox[e, 0] = pts.min(axis=0)
            bbox[e, 1] = pts.max(axis=0)
            diff = pts[:, None, :] - pts[None, :, :]
            diam[e] = np.sqrt((diff ** 2).sum(axis=2).max())

        # orient each normal outward from its first incident element
        first = self.face_elems[:, 0]
        flip = np.einsum(
            "fd,fd->f", normals, self.face_centroids - inside[first]
        ) < 0
        normals[flip] *= -1.0
        self.face_normals = normals

        # element measures and centroids from the cone decomposition over
        # faces (apex at the inside point)
        measures = np.zeros(self.n_elements)
        centroids = np.zeros((self.n_elements, self.dim))
        for e, faces in enumerate(self.elem_faces):
            apex = inside[e]
            heights = np.abs(
                np.einsum(
                    "fd,fd->f",
                    self.face_normals[faces],
                    self.face_centroids[faces] - apex,
                )
            )
            cone_vols = self.face_areas[faces] * heights / self.dim
            cone_cents = (
                verts[fv[faces]].sum(axis=1) + apex
            ) / (self.dim + 1)
            measures[e] = cone_vols.sum()
            centroids[e] = (cone_vols[:, None] * cone_cents).sum(axis=0) / measures[e]
        self.elem_measures = measures
        self.elem_diameters = diam
        self.elem_bbox = bbox
        self.elem_centroids = centroids

        box_vol = np.prod(bbox[:, 1] - bbox[:, 0], axis=1)
        is_box = np.isclose(measures, box_vol, rtol=1e-12, atol=0.0)
        for e, vids in enumerate(self.elem_vertices):
            if is_box[e] and len(vids) != 2 ** self.dim:
                is_box[e] = False
        self.elem_is_box = is_box


def build_cartesian_grid(dim, cells_per_axis, bbox):
    """Structured grid of axis-aligned quads (2D) or hexahedra (3D).

    In 3D every quadrilateral facet is split into two triangles shared by
    both neighboring cells.  All boundary faces are tagged Neumann.

    Parameters
    ----------
    dim : 2 or 3
    cells_per_axis : sequence of positive int, one entry per axis
    bbox : pair of corner points ((lo...), (hi...))
    """
    cells = [int(n) for n in cells_per_axis]
    if len(cells) != dim:
        raise MeshError(f"expected {dim} cell counts, got {len(cells)}")
    if any(n <= 0 for n in cells):
        raise MeshError("cell counts must be positive")
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    if lo.shape != (dim,) or hi.shape != (dim,):
        raise MeshError("bounding box corners must have one coordinate per axis")
    if np.any(hi <= lo):
        raise MeshError("bounding box is inverted or degenerate")

    axes = [np.linspace(lo[d], hi[d], cells[d] + 1) for d in range(dim)]
    if dim == 2:
        return _grid_2d(cells, axes)
    return _grid_3d(cells, axes)


def _grid_2d(cells, axes):
    nx, ny = cells
    xs, ys = axes

    def vid(i, j):
        return i * (ny + 1) + j

    verts = np.array([[xs[i], ys[j]] for i in range(nx + 1) for j in range(ny + 1)])

    def eid(i, j):
        return i * ny + j

    face_verts, face_elems, face_tags = [], [], []
    elem_faces = [[] for _ in range(nx * ny)]

    # faces with normal along x, at x = xs[i]
    for i in range(nx + 1):
        for j in range(ny):
            left = eid(i - 1, j) if i > 0 else -1
            right = eid(i, j) if i < nx else -1
            _add_face(face_verts, face_elems, face_tags, elem_faces,
                      [vid(i, j), vid(i, j + 1)], left, right)
    # faces with normal along y, at y = ys[j]
    for j in range(ny + 1):
        for i in range(nx):
            below = eid(i, j - 1) if j > 0 else -1
            above = eid(i, j) if j < ny else -1
            _add_face(face_verts, face_elems, face_tags, elem_faces,
                      [vid(i, j), vid(i + 1, j)], below, above)

    elem_vertices = [
        np.array([vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)])
        for i in range(nx) for j in range(ny)
    ]
    return PolyMesh(2, verts, np.array(face_verts), np.array(face_elems),
                    np.array(face_tags), elem_faces, elem_vertices)


def _grid_3d(cells, axes):
    nx, ny, nz = cells
    xs, ys, zs = axes

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    verts = np.array([
        [xs[i], ys[j], zs[k]]
        for i in range(nx + 1) for j in range(ny + 1) for k in range(nz + 1)
    ])

    def eid(i, j, k):
        return (i * ny + j) * nz + k

    face_verts, face_elems, face_tags = [], [], []
    elem_faces = [[] for _ in range(nx * ny * nz)]

    def add_quad(corners, e_minus, e_plus):
        # corners in cyclic order; fan split from the first corner
        c0, c1, c2, c3 = corners
        _add_face(face_verts, face_elems, face_tags, elem_faces,
                  [c0, c1, c2], e_minus, e_plus)
        _add_face(face_verts, face_elems, face_tags, elem_faces,
                  [c0, c2, c3], e_minus, e_plus)

    # facets with normal along x
    for i in range(nx + 1):
        for j in range(ny):
            for k in range(nz):
                quad = [vid(i, j, k), vid(i, j + 1, k),
                        vid(i, j + 1, k + 1), vid(i, j, k + 1)]
                add_quad(quad,
                         eid(i - 1, j, k) if i > 0 else -1,
                         eid(i, j, k) if i < nx else -1)
    # facets with normal along y
    for j in range(ny + 1):
        for i in range(nx):
            for k in range(nz):
                quad = [vid(i, j, k), vid(i + 1, j, k),
                        vid(i + 1, j, k + 1), vid(i, j, k + 1)]
                add_quad(quad,
                         eid(i, j - 1, k) if j > 0 else -1,
                         eid(i, j, k) if j < ny else -1)
    # facets with normal along z
    for k in range(nz + 1):
        for i in range(nx):
            for j in range(ny):
                quad = [vid(i, j, k), vid(i + 1, j, k),
                        vid(i + 1, j + 1, k), vid(i, j + 1, k)]
                add_quad(quad,
                         eid(i, j, k - 1) if k > 0 else -1,
                         eid(i, j, k) if k < nz else -1)

    elem_vertices = [
        np.array([vid(i + a, j + b, k + c)
                  for a in (0, 1) for b in (0, 1) for c in (0, 1)])
        for i in range(nx) for j in range(ny) for k in range(nz)
    ]
    return PolyMesh(3, verts, np.array(face_verts), np.array(face_elems),
                    np.array(face_tags), elem_faces, elem_vertices)


def _add_face(face_verts, face_elems, face_tags, elem_faces, vids, e0, e1):
    fid = len(face_verts)
    face_verts.append(vids)
    if e0 >= 0 and e1 >= 0:
        face_elems.append([e0, e1])
        face_tags.append(INTERNAL)
        elem_faces[e0].append(fid)
        elem_faces[e1].append(fid)
    else:
        owner = e0 if e0 >= 0 else e1
        face_elems.append([owner, -1])
        face_tags.append(NEUMANN)
        elem_faces[owner].append(fid)


def tag_boundary(mesh, predicate):
    """Retag boundary faces; ``predicate(centroid) -> "D" | "N"``.

    Internal faces are untouched.  Returns a new mesh (meshes are
    immutable).
    """
    tags = mesh.face_tags.copy()
    for f in np.flatnonzero(mesh.face_tags != INTERNAL):
        tag = predicate(mesh.face_centroids[f])
        if tag not in (DIRICHLET, NEUMANN):
            raise MeshError(f"boundary predicate returned {tag!r}")
        tags[f] = tag
    return PolyMesh(mesh.dim, mesh.vertices, mesh.face_vertices,
                    mesh.face_elems, tags, mesh.elem_faces,
                    mesh.elem_vertices, axon=mesh.axon)


# -- text format -------------------------------------------------------
#
# polymesh <dim>
# vertices <n>          n lines of dim floats
# faces <m>             m lines: v0 v1 [v2] tag        (tag in I D N)
# elements <k>          k lines: face ids
# axon <k>              optional, k lines of dim floats
#
# All indices are 0-based; floats are written with 17 significant digits.


def write_mesh(mesh, path):
    """Write a mesh in the plain-text format read by :func:`read_mesh`."""
    with open(path, "w") as out:
        out.write(f"polymesh {mesh.dim}\n")
        out.write(f"vertices {mesh.n_vertices}\n")
        for v in mesh.vertices:
            out.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        out.write(f"faces {mesh.n_faces}\n")
        for f in range(mesh.n_faces):
            ids = " ".join(str(i) for i in mesh.face_vertices[f])
            out.write(f"{ids} {mesh.face_tags[f]}\n")
        out.write(f"elements {mesh.n_elements}\n")
        for faces in mesh.elem_faces:
            out.write(" ".join(str(i) for i in faces) + "\n")
        if mesh.axon is not None:
            out.write(f"axon {mesh.n_elements}\n")
            for a in mesh.axon:
                out.write(" ".join(f"{x:.17g}" for x in a) + "\n")


def read_mesh(path):
    """Read a mesh written by :func:`write_mesh`, validating on load."""
    with open(path) as src:
        lines = src.read().splitlines()
    pos = 0

    def next_tokens(expect=None):
        nonlocal pos
        while pos < len(lines):
            pos += 1
            toks = lines[pos - 1].split()
            if toks:
                return toks
        raise MeshFormatError(
            f"unexpected end of file, expected {expect}", line=len(lines)
        )

    toks = next_tokens("header")
    if len(toks) != 2 or toks[0] != "polymesh":
        raise MeshFormatError("expected header 'polymesh <dim>'", line=pos)
    try:
        dim = int(toks[1])
    except ValueError:
        raise MeshFormatError(f"bad dimension {toks[1]!r}", line=pos) from None
    if dim not in (2, 3):
        raise MeshFormatError(f"unsupported dimension {dim}", line=pos)

    def section(name, width, parse):
        toks = next_tokens(f"section {name!r}")
        if len(toks) != 2 or toks[0] != name:
            raise MeshFormatError(f"expected section '{name} <count>'", line=pos)
        try:
            count = int(toks[1])
        except ValueError:
            raise MeshFormatError(f"bad count {toks[1]!r}", line=pos) from None
        rows = []
        for _ in range(count):
            row = next_tokens(f"{name} entry")
            rows.append(parse(row, pos))
        return rows

    def parse_floats(row, line):
        if len(row) != dim:
            raise MeshFormatError(
                f"expected {dim} coordinates, got {len(row)}", line=line
            )
        try:
            return [float(x) for x in row]
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {row}", line=line) from None

    def parse_face(row, line):
        if len(row) != dim + 1:
            raise MeshFormatError(
                f"expected {dim} vertex ids and a tag", line=line
            )
        tag = row[-1]
        if tag not in _TAGS:
            raise MeshFormatError(f"unknown face tag {tag!r}", line=line)
        try:
            ids = [int(x) for x in row[:-1]]
        except ValueError:
            raise MeshFormatError(f"bad vertex id in {row}", line=line) from None
        return ids, tag, line

    def parse_elem(row, line):
        try:
            return [int(x) for x in row], line
        except ValueError:
            raise MeshFormatError(f"bad face id in {row}", line=line) from None

    vertices = section("vertices", dim, parse_floats)
    faces = section("faces", dim + 1, parse_face)
    elements = section("elements", None, parse_elem)

    axon = None
    if pos < len(lines) and any(l.split() for l in lines[pos:]):
        rows = section("axon", dim, parse_floats)
        if len(rows) != len(elements):
            raise MeshFormatError(
                "axon section must have one direction per element", line=pos
            )
        axon = np.array(rows)

    n_v, n_f = len(vertices), len(faces)
    face_verts = np.array([f[0] for f in faces], dtype=np.int64).reshape(n_f, dim)
    face_tags = np.array([f[1] for f in faces], dtype="<U1")
    for ids, _tag, line in faces:
        for i in ids:
            if i < 0 or i >= n_v:
                raise MeshFormatError(f"face references missing vertex {i}", line=line)

    face_elems = np.full((n_f, 2), -1, dtype=np.int64)
    refcount = np.zeros(n_f, dtype=np.int64)
    elem_faces = []
    for e, (ids, line) in enumerate(elements):
        for f in ids:
            if f < 0 or f >= n_f:
                raise MeshFormatError(f"element references missing face {f}", line=line)
            if refcount[f] >= 2:
                raise MeshFormatError(
                    f"face {f} is referenced by three or more elements "
                    "(non-manifold)", line=line,
                )
            face_elems[f, refcount[f]] = e
            refcount[f] += 1
        elem_faces.append(np.array(ids, dtype=np.int64))

    for f in range(n_f):
        want = 2 if face_tags[f] == INTERNAL else 1
        if refcount[f] != want:
            line = faces[f][2]
            raise MeshFormatError(
                f"face {f} tagged {face_tags[f]} is referenced by "
                f"{refcount[f]} element(s), expected {want}", line=line,
            )

    elem_vertices = [
        np.unique(face_verts[faces_of_e].ravel()) for faces_of_e in elem_faces
    ]
    return PolyMesh(dim, np.array(vertices), face_verts, face_elems,
                    face_tags, elem_faces, elem_vertices, axon=axon)


def mesh_report(mesh):
    """Summary statistics used by the mesh-checking command.

    Shape-regularity of general polytopes is not certified algorithmically;
    this report exposes the size and incidence statistics needed to judge a
    mesh by eye.
    """
    faces_per_elem = np.array([len(f) for f in mesh.elem_faces])
    return {
        "dim": mesh.dim,
        "n_vertices": mesh.n_vertices,
        "n_elements": mesh.n_elements,
        "n_faces": mesh.n_faces,
        "n_internal_faces": int((mesh.face_tags == INTERNAL).sum()),
        "n_dirichlet_faces": int((mesh.face_tags == DIRICHLET).sum()),
        "n_neumann_faces": int((mesh.face_tags == NEUMANN).sum()),
        "h": mesh.h,
        "h_min": float(mesh.elem_diameters.min()),
        "measure_total": float(mesh.elem_measures.sum()),
        "measure_min": float(mesh.elem_measures.min()),
        "measure_max": float(mesh.elem_measures.max()),
        "faces_per_element_min": int(faces_per_elem.min()),
        "faces_per_element_max": int(faces_per_elem.max()),
    }
