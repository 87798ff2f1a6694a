"""Contour-integral eigensolver for the nonlinear problem ``B(k) u = 0``.

Two stages:

1. ``localize``: recursive quadtree over the search rectangle.  Each box is
   tested with a spectral indicator, the norm of the contour integral of
   ``B(z)^{-1} f`` for a random vector ``f`` over the circle circumscribing
   the box.  Boxes whose indicator exceeds a threshold are subdivided.
2. ``beyn_extract``: first-order moment method on a circle.  The moments
   ``A0 = (1/2 pi i) oint B^{-1} V dz`` and ``A1 = (1/2 pi i) oint z B^{-1} V dz``
   are reduced by an SVD of ``A0``; the eigenvalues of the reduced matrix
   are the eigenvalues of ``B`` inside the circle, and multiplicities follow
   from how many of them cluster together.

``track`` reruns extraction on small circles around known estimates, which
is how poles are followed through a mesh hierarchy without repeating the
full search on fine meshes.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import factor_solve
from .errors import EigensolverError, NearHankelZeroError, SingularMatrixError
from .geometry import Rect

log = logging.getLogger(__name__)

# keep contours this far (relative) from the branch point k = 0 and the cut
BRANCH_CLEARANCE = 0.98
CLUSTER_INFLATION = 1.15
LEAF_MARGIN = 0.10
# mesh size at which ``cluster_rtol`` applies unscaled
REFERENCE_H = 0.04 * math.pi


@dataclass(frozen=True)
class SolverConfig:
    """Eigensolver parameters.

    ``cluster_tol`` is the distance below which reduced eigenvalues are
    merged into one pole with multiplicity.  When ``None`` it defaults to
    ``cluster_rtol * (1 + |k|) * (mesh_h / REFERENCE_H)**2``: the splitting
    of a degenerate pair is a discretisation error and shrinks like ``h^2``.
    Without ``mesh_h`` the scale factor is one.
    """

    quad_nodes_localize: int = 16
    quad_nodes_extract: int = 64
    probes: int = 24
    rank_tol: float = 1e-8
    residual_tol: float = 1e-6
    max_depth: int = 6
    indicator_threshold: float = 1e-2
    rng_seed: int = 0
    cluster_tol: Optional[float] = None
    cluster_rtol: float = 4e-3
    mesh_h: Optional[float] = None
    dedup_rtol: float = 1e-5
    track_nodes: int = 24
    track_probes: int = 8
    track_radius: float = 0.05

    def __post_init__(self):
        for name in ("quad_nodes_localize", "quad_nodes_extract", "probes", "max_depth",
                     "track_nodes", "track_probes"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        for name in ("rank_tol", "residual_tol", "indicator_threshold", "cluster_rtol",
                     "dedup_rtol", "track_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cluster_tol is not None and not self.cluster_tol > 0:
            raise ValueError("cluster_tol must be positive")
        if self.quad_nodes_extract < 2 * self.quad_nodes_localize:
            raise ValueError("quad_nodes_extract must be at least 2 * quad_nodes_localize")

    def cluster_distance(self, k):
        if self.cluster_tol is not None:
            return self.cluster_tol
        scale = 1.0 if self.mesh_h is None else (self.mesh_h / REFERENCE_H) ** 2
        return self.cluster_rtol * (1 + abs(k)) * scale

    def for_mesh(self, h):
        """Copy with ``mesh_h`` set."""
        return replace(self, mesh_h=float(h))


@dataclass(frozen=True)
class SearchBox:
    rect: Rect
    depth: int


@dataclass(frozen=True)
class Contour:
    center: complex
    radius: float

    def contains(self, k):
        return abs(k - self.center) < self.radius


@dataclass(frozen=True)
class PoleEstimate:
    """Computed resonance.

    ``k`` is the mean of the clustered reduced eigenvalues, ``spread`` the
    largest distance of a cluster member from that mean.
    """

    k: complex
    multiplicity: int
    residual: float
    contour_id: int = -1
    mesh_level: int = 0
    spread: float = 0.0
    members: tuple = field(default=(), compare=False)


# ---------------------------------------------------------------------------
# contours and quadrature
# ---------------------------------------------------------------------------

def branch_distance(center):
    """Distance from ``center`` to the excluded half-line ``(-inf, 0]``."""
    c = complex(center)
    return abs(c) if c.real >= 0 else abs(c.imag)


def admissible_contour(center, radius):
    """Circle shrunk if necessary so it stays clear of ``(-inf, 0]``."""
    cap = BRANCH_CLEARANCE * branch_distance(center)
    if cap <= 0:
        raise EigensolverError(f"contour centre {center} lies on the excluded half-line")
    return Contour(complex(center), float(min(radius, cap)))


class _Resolvent:
    """Factorises ``B(z)`` at quadrature nodes with the node-failure policy.

    A near-Hankel-zero node is moved along the circle by half a node
    spacing; an exactly singular factorisation moves it radially by
    ``1e-8 * radius``.  A failure after that one move is an error.
    """

    def __init__(self, opfun):
        self.opfun = opfun
        self.factorizations = 0

    def _factorize(self, z):
        if hasattr(self.opfun, "factorize"):
            return self.opfun.factorize(z)
        return factor_solve(self.opfun.evaluate(z))

    def node_solve(self, contour, theta, spacing, rhs):
        z = contour.center + contour.radius * cmath.exp(1j * theta)
        for attempt in range(2):
            try:
                lu = self._factorize(z)
                self.factorizations += 1
                return z, lu.solve(rhs)
            except NearHankelZeroError:
                if attempt == 1:
                    break
                theta += 0.5 * spacing
                z = contour.center + contour.radius * cmath.exp(1j * theta)
                log.debug("node moved off a Hankel zero to %s", z)
            except SingularMatrixError:
                if attempt == 1:
                    break
                z = z + 1e-8 * contour.radius * cmath.exp(1j * theta)
                log.debug("singular factorisation, node perturbed to %s", z)
        raise EigensolverError(f"repeated factorisation failure near quadrature node {z}")


def contour_moments(opfun, contour, rhs, nodes, resolvent=None, powers=(0, 1)):
    """Trapezoid-rule moments ``(1/2 pi i) oint z^p B(z)^{-1} rhs dz`` on a circle.

    Returns ``(moments, max_norm)`` where ``max_norm`` is the largest
    ``||B(z)^{-1} rhs||_2`` seen at the nodes (a scale for rank decisions).
    """
    res = resolvent or _Resolvent(opfun)
    spacing = 2 * math.pi / nodes
    moments = [np.zeros(rhs.shape, dtype=complex) for _ in powers]
    max_norm = 0.0
    for j in range(nodes):
        z, x = res.node_solve(contour, (j + 0.5) * spacing, spacing, rhs)
        # dz / (2 pi i) = (z - c) dtheta / (2 pi)
        w = (z - contour.center) / nodes
        max_norm = max(max_norm, float(np.linalg.norm(x, 2 if x.ndim == 1 else None)))
        for m, p in zip(moments, powers):
            m += (w * z**p) * x
    return moments, max_norm


def _random_unit(rng, size):
    f = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return f / np.linalg.norm(f)


# ---------------------------------------------------------------------------
# localisation
# ---------------------------------------------------------------------------

def box_contour(rect):
    return admissible_contour(rect.center, rect.half_diagonal)


def indicator(box, opfun, cfg, probe=None):
    """Spectral indicator ``||(1/2 pi i) oint B(z)^{-1} f dz|| / ||f||`` of ``box``."""
    rect = box.rect if isinstance(box, SearchBox) else box
    if probe is None:
        probe = _random_unit(np.random.default_rng(cfg.rng_seed), opfun.size)
    (m0,), _ = contour_moments(opfun, box_contour(rect), probe, cfg.quad_nodes_localize, powers=(0,))
    return float(np.linalg.norm(m0) / np.linalg.norm(probe))


def localize(region, opfun, cfg):
    """Quadtree subdivision of ``region``; returns the surviving leaves.

    Each returned leaf is inflated by 10 % of its size so that a pole on
    a shared edge is covered by both neighbours.
    """
    probe = _random_unit(np.random.default_rng(cfg.rng_seed), opfun.size)
    leaves = []
    frontier = [SearchBox(region, 0)]
    while frontier:
        nxt = []
        for box in frontier:
            value = indicator(box, opfun, cfg, probe)
            log.debug("depth %d box %s indicator %.3e", box.depth, box.rect.as_tuple(), value)
            if value < cfg.indicator_threshold:
                continue
            if box.depth >= cfg.max_depth:
                leaves.append(SearchBox(box.rect.inflate(LEAF_MARGIN), box.depth))
            else:
                nxt.extend(SearchBox(r, box.depth + 1) for r in box.rect.split())
        frontier = nxt
    log.info("localize: %d leaves at depth %d", len(leaves), cfg.max_depth)
    return leaves


def _overlap(a, b):
    return not (a.re_max < b.re_min or b.re_max < a.re_min or a.im_max < b.im_min or b.im_max < a.im_min)


def merge_boxes(leaves):
    """Group overlapping leaves; returns one bounding ``Rect`` per group."""
    rects = [leaf.rect if isinstance(leaf, SearchBox) else leaf for leaf in leaves]
    parent = list(range(len(rects)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if _overlap(rects[i], rects[j]):
                parent[find(i)] = find(j)
    groups = {}
    for i, r in enumerate(rects):
        groups.setdefault(find(i), []).append(r)
    merged = []
    for members in groups.values():
        merged.append(Rect(min(r.re_min for r in members), max(r.re_max for r in members),
                           min(r.im_min for r in members), max(r.im_max for r in members)))
    merged.sort(key=lambda r: (r.re_min, r.im_min))
    return merged


def cluster_contour(rect):
    return admissible_contour(rect.center, CLUSTER_INFLATION * rect.half_diagonal)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def relative_residual(opfun, k, v):
    """``||B(k) v|| / (||B(k)||_1 ||v||)``."""
    B = opfun.evaluate(k)
    return float(np.linalg.norm(B @ v) / (spla.norm(B, 1) * np.linalg.norm(v)))


def cluster_values(values, distance):
    """Single-linkage grouping of complex values; returns lists of indices."""
    order = sorted(range(len(values)), key=lambda i: (values[i].real, values[i].imag))
    groups = []
    for i in order:
        for g in groups:
            if any(abs(values[i] - values[j]) < distance(values[j]) for j in g):
                g.append(i)
                break
        else:
            groups.append([i])
    # a value may bridge two earlier groups
    merged = True
    while merged:
        merged = False
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                if any(abs(values[i] - values[j]) < distance(values[j]) for i in groups[a] for j in groups[b]):
                    groups[a] += groups.pop(b)
                    merged = True
                    break
            if merged:
                break
    return groups


def beyn_extract(contour, opfun, cfg, nodes=None, probes=None, contour_id=-1, mesh_level=0, _retry=True):
    """Eigenvalues of ``B`` inside ``contour`` with multiplicities.

    Parameters
    ----------
    contour : Contour (or ``(center, radius)``)
    nodes, probes : override ``cfg.quad_nodes_extract`` and ``cfg.probes``
    """
    if not isinstance(contour, Contour):
        contour = Contour(complex(contour[0]), float(contour[1]))
    if contour.radius > BRANCH_CLEARANCE * branch_distance(contour.center) + 1e-15:
        raise EigensolverError(f"contour {contour} reaches the excluded half-line")
    nodes = nodes or cfg.quad_nodes_extract
    L = probes or cfg.probes
    rng = np.random.default_rng([cfg.rng_seed, L])
    V = rng.standard_normal((opfun.size, L)) + 1j * rng.standard_normal((opfun.size, L))
    V /= np.linalg.norm(V, axis=0)
    (A0, A1), max_norm = contour_moments(opfun, contour, V, nodes)
    U, s, Wh = np.linalg.svd(A0, full_matrices=False)
    scale = contour.radius * max_norm
    rank = int(np.sum(s > cfg.rank_tol * scale))
    log.debug("contour %s: singular values %s, rank %d", contour, np.array2string(s[:rank + 2], precision=2), rank)
    if rank == 0:
        return []
    if rank >= L:
        if _retry:
            log.info("probe deficiency on %s, retrying with %d probes", contour, 2 * L)
            return beyn_extract(contour, opfun, cfg, nodes, 2 * L, contour_id, mesh_level, _retry=False)
        raise EigensolverError(f"numerical rank reached {L} probes on {contour}; increase probes")
    U0, s0, W0 = U[:, :rank], s[:rank], Wh[:rank].conj().T
    reduced = U0.conj().T @ A1 @ W0 / s0[None, :]
    lam, vecs = np.linalg.eig(reduced)
    accepted = []
    for value, vec in zip(lam, vecs.T):
        if not contour.contains(value):
            continue
        u = U0 @ vec
        r = relative_residual(opfun, value, u)
        if r <= cfg.residual_tol:
            accepted.append((complex(value), r))
        else:
            log.debug("rejected %s with residual %.2e", value, r)
    values = [a[0] for a in accepted]
    out = []
    for g in cluster_values(values, cfg.cluster_distance):
        members = tuple(sorted((values[i] for i in g), key=lambda z: (z.real, z.imag)))
        mean = complex(np.mean(members))
        out.append(PoleEstimate(
            k=mean, multiplicity=len(g), residual=max(accepted[i][1] for i in g),
            contour_id=contour_id, mesh_level=mesh_level,
            spread=float(max(abs(m - mean) for m in members)), members=members))
    return sort_poles(out)


def sort_poles(poles):
    return sorted(poles, key=lambda p: (round(abs(p.k), 12), p.k.real))


def deduplicate(poles, cfg):
    """Drop repeated estimates of the same pole, keeping the smallest residual."""
    kept = []
    for p in sorted(poles, key=lambda p: p.residual):
        if any(abs(p.k - q.k) < cfg.dedup_rtol * (1 + abs(p.k)) for q in kept):
            continue
        kept.append(p)
    return sort_poles(kept)


def solve_region(region, opfun, cfg, mesh_level=0):
    """Localise, extract per merged cluster, deduplicate and sort by modulus."""
    leaves = localize(region, opfun, cfg)
    estimates = []
    for cid, rect in enumerate(merge_boxes(leaves)):
        contour = cluster_contour(rect)
        found = beyn_extract(contour, opfun, cfg, contour_id=cid, mesh_level=mesh_level)
        estimates.extend(p for p in found if region.contains(p.k))
    return deduplicate(estimates, cfg)


# ---------------------------------------------------------------------------
# tracking through a mesh hierarchy
# ---------------------------------------------------------------------------

def _group_circles(centers, radii):
    groups = [[i] for i in range(len(centers))]
    merged = True
    while merged:
        merged = False
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                if any(abs(centers[i] - centers[j]) < radii[i] + radii[j] for i in groups[a] for j in groups[b]):
                    groups[a] += groups.pop(b)
                    merged = True
                    break
            if merged:
                break
    return groups


def track(opfun, centers, cfg, radii=None, mesh_level=0, region=None):
    """Re-extract poles on small circles around predicted locations.

    Circles that overlap are replaced by one circle enclosing them.  Each
    returned pole is tagged with the index of the (first) centre whose
    group produced it in ``contour_id``.
    """
    centers = [complex(c) for c in centers]
    if radii is None:
        radii = [cfg.track_radius] * len(centers)
    radii = [max(float(r), cfg.track_radius) for r in radii]
    estimates = []
    for group in _group_circles(centers, radii):
        if len(group) == 1:
            i = group[0]
            contour = admissible_contour(centers[i], radii[i])
        else:
            pts = [centers[i] for i in group]
            mid = complex(np.mean(pts))
            rad = max(abs(centers[i] - mid) + radii[i] for i in group)
            contour = admissible_contour(mid, rad)
        found = beyn_extract(contour, opfun, cfg, nodes=cfg.track_nodes, probes=cfg.track_probes,
                             contour_id=min(group), mesh_level=mesh_level)
        if region is not None:
            found = [p for p in found if region.contains(p.k)]
        estimates.extend(found)
    return deduplicate(estimates, cfg)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def smallest_singular_value(matrix, iterations=30, seed=0):
    """``sigma_min`` by inverse power iteration on ``B^H B`` with one LU."""
    try:
        lu = factor_solve(matrix)
    except SingularMatrixError:
        return 0.0
    rng = np.random.default_rng(seed)
    x = _random_unit(rng, matrix.shape[0])
    est = 0.0
    for _ in range(iterations):
        y = lu.solve(x, trans="H")
        y = lu.solve(y)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        est_new = 1 / math.sqrt(nrm)
        x = y / nrm
        if est and abs(est_new - est) < 1e-10 * est:
            est = est_new
            break
        est = est_new
    return est
