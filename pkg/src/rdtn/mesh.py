"""Interface-conforming triangulations of the truncated disk ``|x| < R``.

Meshes are produced by constrained Delaunay refinement (Shewchuk's
``Triangle`` through the ``triangle`` package) with the scatterer boundary
and the truncation circle inserted as constrained polylines.  Uniform red
refinement halves the mesh size and projects new boundary midpoints back
onto the exact curves.

Vertex tags: ``0`` interior, ``1`` on the scatterer boundary, ``2`` on the
truncation circle.  Element regions: ``1`` inside the scatterer, ``0``
outside.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import triangle

from ._io import atomic_write_text
from .errors import DomainError, MeshError, MeshParseError
from .geometry import interior_point

log = logging.getLogger(__name__)

TAG_INTERIOR, TAG_GAMMA, TAG_GAMMA_R = 0, 1, 2
REGION_OUTSIDE, REGION_INSIDE = 0, 1
TAG_NAMES = {TAG_INTERIOR: "interior", TAG_GAMMA: "on_gamma", TAG_GAMMA_R: "on_gamma_r"}
REGION_NAMES = {REGION_OUTSIDE: "outside_scatterer", REGION_INSIDE: "inside_scatterer"}

MIN_ANGLE_DEG = 20.0
MAX_VERTICES = 10_000_000
MAX_REFINE_PASSES = 30
FORMAT_HEADER = "RDTN-MESH 1"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with vertex tags and element regions.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    vertex_tag : (V,) int array of ``TAG_*`` values
    element_region : (T,) int array of ``REGION_*`` values
    nominal_h : float, the maximum edge length at generation (halved by refinement)
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_tag: np.ndarray
    element_region: np.ndarray
    nominal_h: float

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.vertex_tag, other.vertex_tag)
                and np.array_equal(self.element_region, other.element_region)
                and self.nominal_h == other.nominal_h)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edges(self):
        """Unique edges ``(E, 2)`` and, per edge, the number of adjacent triangles."""
        half = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, inverse, counts = np.unique(half, axis=0, return_inverse=True, return_counts=True)
        return uniq, counts, inverse.reshape(-1)

    def edge_lengths(self):
        e, _, _ = self.edges()
        return np.hypot(*(self.vertices[e[:, 1]] - self.vertices[e[:, 0]]).T)

    def angles(self):
        """Interior angles in degrees, shape ``(T, 3)``."""
        p = self.vertices[self.triangles]
        out = np.empty((len(p), 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(a * b, axis=1) / (np.hypot(*a.T) * np.hypot(*b.T))
            out[:, i] = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
        return out

    def min_angle(self):
        return float(self.angles().min())

    def boundary_edges(self):
        e, counts, _ = self.edges()
        return e[counts == 1]

    def interface_edges(self):
        e, counts, inverse = self.edges()
        reg = np.repeat(self.element_region, 3)
        lo = np.full(len(e), 10)
        hi = np.full(len(e), -10)
        np.minimum.at(lo, inverse, reg)
        np.maximum.at(hi, inverse, reg)
        return e[(counts == 2) & (lo != hi)]

    def quality(self):
        lengths = self.edge_lengths()
        areas = self.signed_areas()
        return {
            "vertices": self.num_vertices,
            "triangles": self.num_triangles,
            "nominal_h": self.nominal_h,
            "max_edge": float(lengths.max()),
            "min_edge": float(lengths.min()),
            "min_angle_deg": self.min_angle(),
            "min_area": float(areas.min()),
            "on_gamma": int(np.sum(self.vertex_tag == TAG_GAMMA)),
            "on_gamma_r": int(np.sum(self.vertex_tag == TAG_GAMMA_R)),
        }

    def validate(self, problem, tol=1e-10):
        """Raise :class:`MeshError` if any structural invariant fails."""
        if np.any(self.signed_areas() <= 0):
            raise MeshError("mesh has non-positive triangle areas")
        e, counts, _ = self.edges()
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        bnd = e[counts == 1]
        if not np.all(self.vertex_tag[bnd] == TAG_GAMMA_R):
            raise MeshError("mesh boundary contains vertices off the truncation circle")
        shape = problem.shape
        gam = self.vertex_tag == TAG_GAMMA
        if not np.any(gam):
            raise MeshError("no vertices on the scatterer boundary")
        if np.max(shape.on_curve_residual(self.vertices[gam])) > tol:
            raise MeshError("on_gamma vertex off the scatterer boundary")
        gr = self.vertex_tag == TAG_GAMMA_R
        if np.max(np.abs(np.hypot(*self.vertices[gr].T) - problem.R)) > tol:
            raise MeshError("on_gamma_r vertex off the truncation circle")
        expected = np.where(shape.inside_mask(self.centroids()), REGION_INSIDE, REGION_OUTSIDE)
        if not np.array_equal(expected, self.element_region):
            raise MeshError("element region disagrees with centroid classification")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _loop_segments(start, count):
    idx = np.arange(start, start + count)
    return np.column_stack([idx, np.roll(idx, -1)])


def _shape_samples(shape, h):
    corners = shape.corners
    if len(corners):
        sides = np.hypot(*(np.roll(corners, -1, axis=0) - corners).T)
        m = int(np.sum(np.ceil(sides / h - 1e-9)))
    else:
        m = max(int(math.ceil(shape.perimeter / h - 1e-9)), 8)
    return shape.boundary_points(m)


def _outside_point(problem):
    x0, x1, y0, _ = problem.shape.bbox()
    cx = 0.5 * (x0 + x1)
    return np.array([cx, 0.5 * (y0 - math.sqrt(problem.R**2 - cx**2))])


def _project_markers(verts, markers, problem):
    on_r = markers == TAG_GAMMA_R
    on_g = markers == TAG_GAMMA
    if np.any(on_r):
        verts[on_r] = problem.truncation.project_many(verts[on_r])
    if np.any(on_g):
        verts[on_g] = problem.shape.project_many(verts[on_g])
    return verts


def _from_triangle(out, problem):
    verts = np.array(out["vertices"], dtype=float)
    markers = np.array(out["vertex_markers"], dtype=int).reshape(-1)
    verts = _project_markers(verts, markers, problem)
    tris = np.array(out["triangles"], dtype=np.int64)
    attr = np.array(out["triangle_attributes"], dtype=float).reshape(-1)
    region = np.where(np.rint(attr) == 1, REGION_INSIDE, REGION_OUTSIDE)
    return verts, markers, tris, region


def generate(problem, target_h):
    """Constrained Delaunay mesh of ``|x| < R`` resolving the scatterer boundary.

    The scatterer boundary and the truncation circle are sampled with spacing
    about ``target_h`` and inserted as constrained segments.  Triangle's
    quality refinement (minimum angle 20 degrees) is repeated with local
    area limits until every edge is at most ``target_h``.
    """
    if not target_h > 0 or not target_h < problem.R / 4:
        raise DomainError(f"target_h = {target_h!r} must lie in (0, R/4)")
    circle_pts = problem.truncation.boundary_points(max(int(math.ceil(2 * math.pi * problem.R / target_h)), 8))
    shape_pts = _shape_samples(problem.shape, target_h)
    nr, ns = len(circle_pts), len(shape_pts)
    pslg = {
        "vertices": np.vstack([circle_pts, shape_pts]),
        "vertex_markers": np.concatenate([np.full(nr, TAG_GAMMA_R), np.full(ns, TAG_GAMMA)])[:, None],
        "segments": np.vstack([_loop_segments(0, nr), _loop_segments(nr, ns)]),
        "segment_markers": np.concatenate([np.full(nr, TAG_GAMMA_R), np.full(ns, TAG_GAMMA)])[:, None],
        "regions": np.array([
            [*interior_point(problem.shape), 1.0, 0.0],
            [*_outside_point(problem), 2.0, 0.0],
        ]),
    }
    area = math.sqrt(3) / 4 * target_h**2
    out = triangle.triangulate(pslg, f"pq{MIN_ANGLE_DEG:g}a{area:.17g}AQ")
    for _ in range(MAX_REFINE_PASSES):
        verts, markers, tris, region = _from_triangle(out, problem)
        if len(verts) > MAX_VERTICES:
            raise MeshError(f"refinement exceeded {MAX_VERTICES} vertices")
        p = verts[tris]
        longest = np.max(np.stack([np.hypot(*(p[:, (i + 1) % 3] - p[:, i]).T) for i in range(3)]), axis=0)
        if longest.max() <= target_h:
            break
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        tri_area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        limits = np.where(longest > target_h, 0.5 * tri_area, -1.0)
        seg = np.array(out["segments"])
        out = triangle.triangulate({
            "vertices": verts,
            "vertex_markers": markers[:, None],
            "triangles": tris,
            "segments": seg,
            "segment_markers": np.array(out["segment_markers"]).reshape(-1, 1),
            "triangle_attributes": np.where(region == REGION_INSIDE, 1.0, 2.0)[:, None],
            "triangle_max_area": limits,
        }, f"rpq{MIN_ANGLE_DEG:g}aAQ")
    else:
        raise MeshError(f"edge-length refinement did not converge in {MAX_REFINE_PASSES} passes")
    tags = np.where(np.isin(markers, (TAG_GAMMA, TAG_GAMMA_R)), markers, TAG_INTERIOR)
    tris = _orient(verts, tris)
    mesh = Mesh(verts, tris, tags.astype(np.int8), region.astype(np.int8), float(longest.max()))
    mesh.validate(problem)
    log.info("generated mesh: %d vertices, %d triangles, h = %.4g, min angle %.2f",
             mesh.num_vertices, mesh.num_triangles, mesh.nominal_h, mesh.min_angle())
    return mesh


def _orient(verts, tris):
    p = verts[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris = tris.copy()
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


# ---------------------------------------------------------------------------
# uniform refinement
# ---------------------------------------------------------------------------

def refine_uniform(mesh, problem):
    """Red refinement: each triangle is split into four.

    Midpoints of truncation-boundary edges are projected radially onto the
    circle, midpoints of interface edges (the two neighbours lie in different
    regions) onto the scatterer boundary.
    """
    e, counts, inverse = mesh.edges()
    nv = mesh.num_vertices
    reg = np.repeat(mesh.element_region, 3)
    lo = np.full(len(e), 10)
    hi = np.full(len(e), -10)
    np.minimum.at(lo, inverse, reg)
    np.maximum.at(hi, inverse, reg)
    on_r = counts == 1
    on_g = (counts == 2) & (lo != hi)

    mid = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    if np.any(on_r):
        mid[on_r] = problem.truncation.project_many(mid[on_r])
    if np.any(on_g):
        mid[on_g] = problem.shape.project_many(mid[on_g])
    mid_tag = np.full(len(e), TAG_INTERIOR, dtype=np.int8)
    mid_tag[on_r] = TAG_GAMMA_R
    mid_tag[on_g] = TAG_GAMMA

    # edge ids of (v0v1, v1v2, v2v0) per triangle, offset into the new vertex list
    m = (inverse.reshape(-1, 3) + nv)
    a, b, c = mesh.triangles.T
    mab, mbc, mca = m.T
    children = np.concatenate([
        np.column_stack([a, mab, mca]),
        np.column_stack([b, mbc, mab]),
        np.column_stack([c, mca, mbc]),
        np.column_stack([mab, mbc, mca]),
    ])
    regions = np.tile(mesh.element_region, 4)
    fine = Mesh(
        np.vstack([mesh.vertices, mid]),
        children,
        np.concatenate([mesh.vertex_tag, mid_tag]),
        regions,
        mesh.nominal_h / 2,
    )
    if np.any(fine.signed_areas() <= 0):
        raise MeshError("boundary projection inverted a child triangle")
    return fine


def mesh_hierarchy(problem, h1, levels):
    """Meshes at levels ``1..levels`` with ``h_j = h_1 / 2**(j-1)``."""
    meshes = [generate(problem, h1)]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1], problem))
    return meshes


# ---------------------------------------------------------------------------
# ASCII format
# ---------------------------------------------------------------------------

def format_mesh(mesh):
    """Serialise ``mesh`` in the ``RDTN-MESH 1`` text format."""
    lines = [FORMAT_HEADER, f"{mesh.num_vertices} {mesh.num_triangles} {mesh.nominal_h:.17g}"]
    for (x, y), t in zip(mesh.vertices, mesh.vertex_tag):
        lines.append(f"{x:.17g} {y:.17g} {TAG_NAMES[int(t)]}")
    for (i, j, k), r in zip(mesh.triangles, mesh.element_region):
        lines.append(f"{i} {j} {k} {REGION_NAMES[int(r)]}")
    return "\n".join(lines) + "\n"


def write_mesh(mesh, path):
    atomic_write_text(path, format_mesh(mesh))


def parse_mesh(text):
    """Parse ``RDTN-MESH 1`` text; errors carry 1-based line numbers."""
    lines = text.splitlines()
    tag_ids = {v: k for k, v in TAG_NAMES.items()}
    region_ids = {v: k for k, v in REGION_NAMES.items()}
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise MeshParseError(f"expected header {FORMAT_HEADER!r}", line=1)
    try:
        nv_s, nt_s, h_s = lines[1].split()
        nv, nt, h = int(nv_s), int(nt_s), float(h_s)
    except (IndexError, ValueError):
        raise MeshParseError("expected counts line 'num_vertices num_triangles nominal_h'", line=2) from None
    if nv < 3 or nt < 1 or not h > 0:
        raise MeshParseError("invalid counts", line=2)
    verts = np.empty((nv, 2))
    tags = np.empty(nv, dtype=np.int8)
    tris = np.empty((nt, 3), dtype=np.int64)
    regions = np.empty(nt, dtype=np.int8)
    for i in range(nv):
        lineno = 3 + i
        parts = lines[lineno - 1].split() if lineno - 1 < len(lines) else []
        if len(parts) != 3 or parts[2] not in tag_ids:
            raise MeshParseError("expected vertex line 'x y tag'", line=lineno)
        try:
            verts[i] = float(parts[0]), float(parts[1])
        except ValueError:
            raise MeshParseError("vertex coordinates are not numbers", line=lineno) from None
        tags[i] = tag_ids[parts[2]]
    for i in range(nt):
        lineno = 3 + nv + i
        parts = lines[lineno - 1].split() if lineno - 1 < len(lines) else []
        if len(parts) != 4 or parts[3] not in region_ids:
            raise MeshParseError("expected triangle line 'i j k region'", line=lineno)
        try:
            idx = [int(p) for p in parts[:3]]
        except ValueError:
            raise MeshParseError("triangle indices are not integers", line=lineno) from None
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshParseError("triangle index out of range", line=lineno)
        tris[i] = idx
        regions[i] = region_ids[parts[3]]
    extra = [ln for ln in lines[2 + nv + nt:] if ln.strip()]
    if extra:
        raise MeshParseError("unexpected trailing content", line=3 + nv + nt)
    mesh = Mesh(verts, tris, tags, regions, h)
    if np.any(mesh.signed_areas() <= 0):
        raise MeshParseError("triangle with non-positive area", line=3 + nv + int(np.argmin(mesh.signed_areas())))
    return mesh


def read_mesh(path):
    with open(path) as fh:
        return parse_mesh(fh.read())
