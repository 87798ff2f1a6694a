"""Mesh-hierarchy studies: pole tracking, convergence orders, R and N sweeps.

A *tracked pole* follows one resonance (or one multiplicity-2 pair) through
the meshes ``h_1 > h_2 > ...``.  On every level a small circle is placed
at the predicted location and the eigenvalues inside are re-extracted.
The prediction uses the exact value when one is known (disk) and
second-order extrapolation from the previous levels otherwise.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

from . import assembly, mesh as meshmod, neps
from .geometry import Rect

log = logging.getLogger(__name__)

DEFAULT_H1 = 0.04 * math.pi
ORDER_FLOOR = 1e-8
# largest circle a lost pole is searched on before it is given up
TRACK_R_MAX = 0.8


@dataclass
class TrackedPole:
    """History of one pole across mesh levels."""

    label: str
    seed: complex
    exact: Optional[complex] = None
    estimates: List[Optional[neps.PoleEstimate]] = field(default_factory=list)
    ambiguous: List[bool] = field(default_factory=list)

    def values(self):
        return [None if e is None else e.k for e in self.estimates]

    def known(self):
        return [e.k for e in self.estimates if e is not None]


class Hierarchy:
    """Meshes and operator functions for levels ``1..levels`` built on demand."""

    def __init__(self, problem, h1=DEFAULT_H1, levels=4):
        self.problem = problem
        self.h1 = h1
        self.levels = levels
        self._meshes = {}
        self._ops = {}

    def mesh(self, level):
        if level not in self._meshes:
            if level == 1:
                self._meshes[1] = meshmod.generate(self.problem, self.h1)
            else:
                self._meshes[level] = meshmod.refine_uniform(self.mesh(level - 1), self.problem)
        return self._meshes[level]

    def operator(self, level):
        if level not in self._ops:
            system = assembly.assemble(self.mesh(level), self.problem)
            self._ops[level] = assembly.OperatorFunction(system)
            log.info("level %d: %d dofs", level, system.size)
        return self._ops[level]

    def release(self, level):
        """Drop the cached operator (and finer meshes keep their parents)."""
        self._ops.pop(level, None)


def _prediction(pole, r_min, r_init):
    known = pole.known()
    if not known:
        center = pole.exact if pole.exact is not None else pole.seed
        return center, r_init
    last = known[-1]
    if pole.exact is not None:
        center = pole.exact + (last - pole.exact) / 4
        return center, max(r_min, 1.5 * abs(center - last))
    if len(known) >= 2:
        step = (known[-1] - known[-2]) / 4
        return last + step, max(r_min, 3 * abs(step))
    return last, max(r_min, 0.5 * r_init)


def _claimed(k, taken, cfg):
    return any(abs(k - q.k) < cfg.dedup_rtol * (1 + abs(k)) for q in taken)


def _widen(op, pole, center, radius, taken, cfg, level, r_max):
    """Retry a lost pole on circles of doubling radius; full Beyn settings."""
    wide_cfg = replace(cfg, track_nodes=cfg.quad_nodes_extract, track_probes=cfg.probes)
    while radius < r_max:
        radius = min(2 * radius, r_max)
        found = neps.track(op, [center], wide_cfg, radii=[radius], mesh_level=level)
        inside = sorted((e for e in found if abs(e.k - center) < radius and not _claimed(e.k, taken, cfg)),
                        key=lambda e: abs(e.k - center))
        if inside:
            log.info("%s: found at radius %.3g on level %d", pole.label, radius, level)
            return inside, radius, found
    return [], radius, []


def track_level(op, poles, cfg, level, r_min=None, r_init=0.1, region=None, r_max=TRACK_R_MAX):
    """Extract every tracked pole on one level and append to its history.

    A pole with nothing inside its predicted circle is retried on wider
    circles up to ``r_max``, ignoring estimates already assigned to other
    poles. Returns the deduplicated list of all estimates found on the level.
    """
    r_min = cfg.track_radius if r_min is None else r_min
    preds = [_prediction(p, r_min, r_init) for p in poles]
    centers = [c for c, _ in preds]
    radii = [r for _, r in preds]
    found = neps.track(op, centers, cfg, radii=radii, mesh_level=level)
    matches = []
    for center, radius in preds:
        matches.append(sorted((e for e in found if abs(e.k - center) < radius), key=lambda e: abs(e.k - center)))
    taken = [m[0] for m in matches if m]
    extra = []
    for pole, (center, radius), inside in zip(poles, preds, matches):
        if not inside:
            inside, radius, more = _widen(op, pole, center, radius, taken, cfg, level, r_max)
            extra.extend(more)
            if inside:
                taken.append(inside[0])
        if not inside:
            pole.estimates.append(None)
            pole.ambiguous.append(False)
            log.warning("%s: nothing found within %.3g of %s on level %d", pole.label, radius, center, level)
            continue
        pole.estimates.append(inside[0])
        ambiguous = len(inside) > 1 and abs(inside[1].k - center) < 2 * abs(inside[0].k - center)
        pole.ambiguous.append(bool(ambiguous))
    if extra:
        found = neps.deduplicate(found + extra, cfg)
    if region is not None:
        found = [e for e in found if region.contains(e.k)]
    return found


def track_hierarchy(hierarchy, poles, cfg, levels=None, r_min=None, r_init=0.1, region=None, release=True,
                    r_max=TRACK_R_MAX):
    """Track ``poles`` through ``levels`` (default ``1..hierarchy.levels``).

    Returns the per-level lists of all estimates found (restricted to
    ``region`` when given).
    """
    levels = levels or range(1, hierarchy.levels + 1)
    per_level = {}
    for level in levels:
        level_cfg = cfg.for_mesh(hierarchy.mesh(level).nominal_h)
        per_level[level] = track_level(hierarchy.operator(level), poles, level_cfg, level, r_min, r_init, region, r_max)
        if release:
            hierarchy.release(level)
    return per_level


def coarse_search_region(region, fraction=0.05):
    """``region`` enlarged by ``fraction`` without crossing the negative real axis.

    Poles move by ``O(h^2)`` between levels, so a pole just outside the
    region on the coarse mesh may end up inside on a finer one.
    """
    big = region.inflate(fraction)
    re_min, im_max = big.re_min, big.im_max
    if re_min < 0 <= region.re_min:
        re_min = region.re_min
    if im_max > 0 >= region.im_max:
        im_max = region.im_max
    return Rect(re_min, big.re_max, big.im_min, im_max)


def solve_direct(problem, cfg, h1=DEFAULT_H1, level=1):
    """Full quadtree search on the mesh of ``level``."""
    hier = Hierarchy(problem, h1, level)
    op = hier.operator(level)
    return neps.solve_region(problem.search_region, op, cfg.for_mesh(hier.mesh(level).nominal_h), mesh_level=level)


def solve_hierarchical(problem, cfg, h1=DEFAULT_H1, level=1, fraction=0.05):
    """Quadtree search on the coarsest mesh, then tracking up to ``level``.

    Every pole found on level 1 in the slightly enlarged region is followed
    through the finer meshes with small contours; the estimates on
    ``level`` that lie in the search region are returned.
    """
    region = problem.search_region
    hier = Hierarchy(problem, h1, level)
    coarse = neps.solve_region(coarse_search_region(region, fraction), hier.operator(1),
                               cfg.for_mesh(hier.mesh(1).nominal_h), mesh_level=1)
    if level == 1 or not coarse:
        return neps.sort_poles([p for p in coarse if region.contains(p.k)])
    hier.release(1)
    poles = [TrackedPole(f"p{i}", p.k) for i, p in enumerate(coarse)]
    for pole, est in zip(poles, coarse):
        pole.estimates.append(est)
        pole.ambiguous.append(False)
    per_level = track_hierarchy(hier, poles, cfg, levels=range(2, level + 1), region=region)
    return neps.sort_poles(per_level[level])


# ---------------------------------------------------------------------------
# convergence reports
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceRow:
    label: str
    level: int
    h: float
    k: Optional[complex]
    multiplicity: int
    error: Optional[complex]
    order: Optional[float]
    reference: str
    ambiguous: bool


def _order(prev, cur, floor):
    if prev is None or cur is None:
        return None
    if abs(prev) <= floor or abs(cur) <= floor:
        return None
    return math.log2(abs(prev) / abs(cur))


def convergence_rows(pole, h1, floor=ORDER_FLOOR):
    """Errors and observed orders for one tracked pole.

    With an exact value ``e_j = k_j - k``; otherwise ``e_j = k_j - k_{j+1}``.
    ``CO_j = log2(|e_{j-1}| / |e_j|)`` is reported where both errors exceed
    ``floor``.
    """
    ks = pole.values()
    if pole.exact is not None:
        errors = [None if k is None else k - pole.exact for k in ks]
        reference = "exact"
    else:
        errors = [None if (a is None or b is None) else a - b for a, b in zip(ks[:-1], ks[1:])] + [None]
        reference = "next-level"
    rows = []
    for j, (k, e) in enumerate(zip(ks, errors)):
        order = _order(errors[j - 1], e, floor) if j > 0 else None
        est = pole.estimates[j]
        rows.append(ConvergenceRow(
            label=pole.label, level=j + 1, h=h1 / 2**j, k=k,
            multiplicity=est.multiplicity if est is not None else 0,
            error=e, order=order, reference=reference, ambiguous=pole.ambiguous[j]))
    return rows


def final_order(rows):
    orders = [r.order for r in rows if r.order is not None]
    return orders[-1] if orders else None


def format_table(rows):
    """Fixed-width text table of convergence rows."""
    lines = [f"{'pole':>10} {'lvl':>3} {'h':>9} {'k':>26} {'m':>2} {'|e|':>10} {'CO':>6}"]
    for r in rows:
        k = "-" if r.k is None else f"{r.k.real:.8f}{r.k.imag:+.8f}i"
        e = "-" if r.error is None else f"{abs(r.error):.3e}"
        o = "-" if r.order is None else f"{r.order:.2f}"
        flag = " *" if r.ambiguous else ""
        lines.append(f"{r.label:>10} {r.level:>3} {r.h:>9.5f} {k:>26} {r.multiplicity:>2} {e:>10} {o:>6}{flag}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    parameter: str
    value: float
    label: str
    k: Optional[complex]
    reference: Optional[complex]
    relative_error: Optional[float]


def sweep_radius(problem, radii, seeds, cfg, level, h1=DEFAULT_H1, exact=None, labels=None):
    """Relative error of tracked poles for each truncation radius at one mesh level.

    ``exact`` supplies reference values; without it the finest-radius
    value (first entry of ``radii``) is the reference.
    """
    labels = labels or [f"p{i}" for i in range(len(seeds))]
    rows = []
    results = {}
    for R in radii:
        prob = problem.with_(R=float(R))
        hier = Hierarchy(prob, h1, level)
        poles = [TrackedPole(lab, s, None if exact is None else exact[i]) for i, (lab, s) in enumerate(zip(labels, seeds))]
        track_hierarchy(hier, poles, cfg, levels=range(1, level + 1))
        results[R] = [p.estimates[-1] for p in poles]
    for R in radii:
        for i, lab in enumerate(labels):
            est = results[R][i]
            ref = exact[i] if exact is not None else (results[radii[0]][i].k if results[radii[0]][i] else None)
            k = None if est is None else est.k
            re = None if (k is None or ref is None) else abs(k - ref) / abs(ref)
            rows.append(SweepRow("R", float(R), lab, k, ref, re))
    return rows


def sweep_truncation(problem, orders, seeds, cfg, level, h1=DEFAULT_H1, exact=None, labels=None, radius=None):
    """Pole values for each truncation order ``N`` on one fixed mesh.

    The reference is the exact value when given, otherwise the value at the
    largest ``N``.
    """
    labels = labels or [f"p{i}" for i in range(len(seeds))]
    base = Hierarchy(problem, h1, level)
    mesh = base.mesh(level)
    # locate the poles once at the largest N, then reuse the centres
    nmax = max(orders)
    poles = [TrackedPole(lab, s, None if exact is None else exact[i]) for i, (lab, s) in enumerate(zip(labels, seeds))]
    track_hierarchy(Hierarchy(problem.with_(N=nmax), h1, level), poles, cfg, levels=range(1, level + 1))
    centers = [p.estimates[-1].k if p.estimates[-1] else p.seed for p in poles]
    r = radius or cfg.track_radius
    values = {}
    for N in orders:
        prob = problem.with_(N=int(N))
        op = assembly.OperatorFunction(assembly.assemble(mesh, prob))
        found = neps.track(op, centers, cfg.for_mesh(mesh.nominal_h), radii=[r] * len(centers), mesh_level=level)
        values[N] = []
        for c in centers:
            near = sorted(found, key=lambda e: abs(e.k - c))
            values[N].append(near[0].k if near and abs(near[0].k - c) < r else None)
    rows = []
    for N in orders:
        for i, lab in enumerate(labels):
            k = values[N][i]
            ref = exact[i] if exact is not None else values[nmax][i]
            re = None if (k is None or ref is None) else abs(k - ref) / abs(ref)
            rows.append(SweepRow("N", int(N), lab, k, ref, re))
    return rows
