import pytest

from rdtn import experiments as X, neps
from rdtn.geometry import Disk, LShape, Problem, Rect, Square

ACCEPTANCE = {}

H1 = X.DEFAULT_H1
REGION = Rect(0.0, 4.0, -4.0, 0.0)
CFG = neps.SolverConfig()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])


def global_then_track(problem, levels):
    """Quadtree search on level 1, every pole found followed to ``levels``.

    Returns ``{level: [PoleEstimate in the search region]}``; this is the
    pipeline behind ``rdtn solve`` with the hierarchical strategy.
    """
    hier = X.Hierarchy(problem, H1, levels)
    region = problem.search_region
    coarse = neps.solve_region(X.coarse_search_region(region), hier.operator(1),
                               CFG.for_mesh(hier.mesh(1).nominal_h), mesh_level=1)
    hier.release(1)
    poles = [X.TrackedPole(f"p{i}", est.k, estimates=[est], ambiguous=[False])
             for i, est in enumerate(coarse)]
    per_level = {1: [e for e in coarse if region.contains(e.k)]}
    per_level.update(X.track_hierarchy(hier, poles, CFG, levels=range(2, levels + 1), region=region))
    return per_level


@pytest.fixture(scope="session")
def disk_hierarchies():
    """Disk, R = 1.25, N = 20, both indices, levels 1..4."""
    return {n: global_then_track(Problem(Disk(1.0), n, 1.25, N=20, search_region=REGION), 4)
            for n in (4.0, 0.25)}


@pytest.fixture(scope="session")
def square_solutions():
    """Unit square, R = 0.8, N = 20, both indices, levels 1..4."""
    return {n: global_then_track(Problem(Square(1.0), n, 0.8, N=20, search_region=REGION), 4)
            for n in (4.0, 0.25)}


@pytest.fixture(scope="session")
def lshape_solution():
    """L-shape, n_i = 4, R = 0.8, N = 20, levels 1..3."""
    return global_then_track(Problem(LShape(1.0), 4.0, 0.8, N=20, search_region=REGION), 3)
