import math

import numpy as np
import pytest

from rdtn import mesh as M
from rdtn.errors import MeshParseError
from rdtn.geometry import Disk, Ellipse, LShape, Problem, Square

H1 = 0.04 * math.pi

PROBLEMS = {
    "disk": Problem(Disk(1.0), 4.0, 1.25),
    "square": Problem(Square(1.0), 4.0, 0.8),
    "lshape": Problem(LShape(1.0), 4.0, 0.8),
    "ellipse": Problem(Ellipse(1.2, 0.8), 4.0, 1.3),
}

HAND_SQUARE = """RDTN-MESH 1
5 4 1
0 0 interior
1 0 on_gamma_r
1 1 on_gamma_r
0 1 on_gamma_r
0.5 0.5 interior
0 1 4 outside_scatterer
1 2 4 outside_scatterer
2 3 4 inside_scatterer
3 0 4 inside_scatterer
"""


@pytest.fixture(scope="module", params=sorted(PROBLEMS))
def hierarchy(request):
    problem = PROBLEMS[request.param]
    return problem, M.mesh_hierarchy(problem, H1, 3)


def test_invariants_all_levels(hierarchy):
    problem, meshes = hierarchy
    for m in meshes:
        m.validate(problem)
        assert np.all(m.signed_areas() > 0)
        _, counts, _ = m.edges()
        assert set(np.unique(counts)) <= {1, 2}


def test_total_area(hierarchy):
    problem, meshes = hierarchy
    for m in meshes:
        assert m.signed_areas().sum() == pytest.approx(math.pi * problem.R**2, rel=5e-3)


def test_inside_area(hierarchy):
    problem, meshes = hierarchy
    m = meshes[0]
    inside = m.signed_areas()[m.element_region == M.REGION_INSIDE].sum()
    assert inside == pytest.approx(problem.shape.area, rel=5e-3)


def test_min_angles(hierarchy):
    _, meshes = hierarchy
    assert meshes[0].min_angle() >= 20.0
    assert meshes[2].min_angle() >= 15.0


def test_nominal_h_and_edges(hierarchy):
    _, meshes = hierarchy
    # nominal_h is the realised maximum edge, just below the target
    assert meshes[0].nominal_h == pytest.approx(H1, rel=1e-2)
    assert meshes[0].nominal_h == pytest.approx(meshes[0].edge_lengths().max())
    assert meshes[0].nominal_h <= H1 * (1 + 1e-12)
    assert meshes[2].nominal_h == meshes[0].nominal_h / 4


def test_refinement_combinatorics(hierarchy):
    _, meshes = hierarchy
    for coarse, fine in zip(meshes[:-1], meshes[1:]):
        e, _, _ = coarse.edges()
        assert fine.num_vertices == coarse.num_vertices + len(e)
        assert fine.num_triangles == 4 * coarse.num_triangles
        assert len(fine.boundary_edges()) == 2 * len(coarse.boundary_edges())
        n_r = lambda m: int(np.sum(m.vertex_tag == M.TAG_GAMMA_R))
        assert n_r(fine) == 2 * n_r(coarse)


def test_interface_perimeter_converges(hierarchy):
    problem, meshes = hierarchy
    errs = []
    for m in meshes:
        iface = m.interface_edges()
        length = np.hypot(*(m.vertices[iface[:, 1]] - m.vertices[iface[:, 0]]).T).sum()
        errs.append(abs(length - problem.shape.perimeter))
    if problem.shape.kind in ("square", "lshape"):
        assert max(errs) < 1e-12
    else:
        assert errs[0] / errs[2] == pytest.approx(16, rel=0.1)


def test_round_trip(tmp_path):
    m = M.generate(PROBLEMS["lshape"], H1)
    path = tmp_path / "m.rdtn"
    M.write_mesh(m, path)
    back = M.read_mesh(path)
    assert back == m
    assert M.format_mesh(back) == path.read_text()


def test_hand_written_mesh():
    m = M.parse_mesh(HAND_SQUARE)
    assert m.num_triangles == 4
    assert m.signed_areas().sum() == pytest.approx(1.0)
    assert len(m.boundary_edges()) == 4
    assert len(m.interface_edges()) == 2


def test_missing_vertex_line():
    lines = HAND_SQUARE.splitlines()
    del lines[4]
    with pytest.raises(MeshParseError) as info:
        M.parse_mesh("\n".join(lines))
    assert info.value.line == 7
    assert "line 7" in str(info.value)


@pytest.mark.parametrize("text, line", [
    ("RDTN-MESH 2\n", 1),
    ("RDTN-MESH 1\n5 four 1\n", 2),
    (HAND_SQUARE.replace("0.5 0.5 interior", "0.5 0.5 somewhere"), 7),
    (HAND_SQUARE.replace("3 0 4 inside_scatterer", "3 0 9 inside_scatterer"), 11),
    (HAND_SQUARE + "junk\n", 12),
])
def test_parse_errors(text, line):
    with pytest.raises(MeshParseError) as info:
        M.parse_mesh(text)
    assert info.value.line == line


def test_generation_deterministic():
    a = M.generate(PROBLEMS["square"], H1)
    b = M.generate(PROBLEMS["square"], H1)
    assert a == b
