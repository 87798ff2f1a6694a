import math

import numpy as np
import pytest
import scipy.sparse as sp

from rdtn import experiments as X, neps
from rdtn.geometry import Disk, Problem, Rect


def est(k, m=1, level=1):
    return neps.PoleEstimate(k, m, 0.0, mesh_level=level)


def test_coarse_region_inflates_but_keeps_half_plane():
    big = X.coarse_search_region(Rect(0.0, 4.0, -4.0, 0.0), 0.05)
    assert big == Rect(0.0, 4.2, -4.2, 0.0)
    inner = X.coarse_search_region(Rect(1.0, 2.0, -2.0, -1.0), 0.1)
    assert inner == Rect(0.9, 2.1, -2.1, -0.9)


def test_prediction_with_exact_value():
    pole = X.TrackedPole("p", 1 - 1j, exact=1 - 1j)
    assert X._prediction(pole, 1e-3, 0.1) == (1 - 1j, 0.1)
    pole.estimates.append(est(1.004 - 1j))
    center, radius = X._prediction(pole, 1e-3, 0.1)
    assert center == pytest.approx(1.001 - 1j)
    assert radius == pytest.approx(max(1e-3, 1.5 * 0.003))


def test_prediction_extrapolates_second_order():
    pole = X.TrackedPole("p", 2 - 1j)
    pole.estimates += [est(2.016 - 1j), est(2.004 - 1j)]
    center, radius = X._prediction(pole, 1e-4, 0.1)
    assert center == pytest.approx(2.001 - 1j)
    assert radius == pytest.approx(3 * 0.003)


def test_order_floor():
    assert X._order(4e-4, 1e-4, 1e-8) == pytest.approx(2.0)
    assert X._order(1e-7, 1e-9, 1e-8) is None
    assert X._order(None, 1e-4, 1e-8) is None


def test_convergence_rows_exact_reference():
    k = 1 - 1j
    pole = X.TrackedPole("p0", k, exact=k)
    for j in range(4):
        pole.estimates.append(est(k + 1e-2 * 4.0**-j * (1 + 1j), level=j + 1))
        pole.ambiguous.append(False)
    rows = X.convergence_rows(pole, 0.1)
    assert [r.level for r in rows] == [1, 2, 3, 4]
    assert [r.h for r in rows] == pytest.approx([0.1, 0.05, 0.025, 0.0125])
    assert rows[0].order is None
    assert all(r.order == pytest.approx(2.0) for r in rows[1:])
    assert X.final_order(rows) == pytest.approx(2.0)
    assert all(r.reference == "exact" for r in rows)


def test_convergence_rows_self_reference_and_gaps():
    pole = X.TrackedPole("q", 1 - 1j)
    values = [1.0 - 1j, 1.0 + 0.021 - 1j, None, 1.0 + 0.0213 - 1j]
    for v in values:
        pole.estimates.append(None if v is None else est(v))
        pole.ambiguous.append(v is None)
    rows = X.convergence_rows(pole, 0.1)
    assert rows[0].error == pytest.approx(-0.021)
    assert rows[1].error is None and rows[2].error is None and rows[3].error is None
    assert rows[2].multiplicity == 0
    assert X.final_order(rows) is None


def test_format_table():
    pole = X.TrackedPole("p0", 1 - 1j, exact=1 - 1j)
    pole.estimates += [est(1.01 - 1j), None]
    pole.ambiguous += [False, True]
    text = X.format_table(X.convergence_rows(pole, 0.1))
    lines = text.splitlines()
    assert len(lines) == 3
    assert "1.01000000-1.00000000i" in lines[1]
    assert lines[2].endswith("*")


def test_tracking_first_disk_pole():
    problem = Problem(Disk(1.0), 4.0, 1.25, N=20)
    exact = 0.43667759849521837 - 0.30394648673509378j
    hier = X.Hierarchy(problem, X.DEFAULT_H1, 2)
    pole = X.TrackedPole("p0", 0.4367 - 0.3039j, exact=exact)
    per_level = X.track_hierarchy(hier, [pole], neps.SolverConfig())
    assert sorted(per_level) == [1, 2]
    e1, e2 = (abs(k - exact) for k in pole.values())
    assert e1 < 2e-3 and math.log2(e1 / e2) == pytest.approx(2.0, abs=0.3)


class Diagonal:
    """``B(z) = diag(z - lambda_i)`` padded with far-away eigenvalues."""

    def __init__(self, eigenvalues, size=30):
        lam = list(eigenvalues) + [6.0 - 6.0j + i for i in range(size - len(eigenvalues))]
        self.lam = np.array(lam, dtype=complex)
        self.size = size

    def evaluate(self, z):
        return sp.diags(z - self.lam).tocsc()


def test_lost_pole_recovered_on_wider_circle():
    # the second pole moved 0.3 since the last level, the first did not move
    op = Diagonal([1.0 - 0.5j, 2.3 - 1.5j])
    poles = [X.TrackedPole("a", 1 - 0.5j, estimates=[est(1.0 - 0.5j)], ambiguous=[False]),
             X.TrackedPole("b", 2 - 1.5j, estimates=[est(2.0 - 1.5j)], ambiguous=[False])]
    found = X.track_level(op, poles, neps.SolverConfig(), 2)
    assert poles[0].estimates[-1].k == pytest.approx(1.0 - 0.5j, abs=1e-10)
    assert poles[1].estimates[-1].k == pytest.approx(2.3 - 1.5j, abs=1e-10)
    assert len(found) == 2


def test_lost_pole_does_not_steal_a_claimed_estimate():
    op = Diagonal([1.0 - 0.5j])
    poles = [X.TrackedPole("a", 1 - 0.5j, estimates=[est(1.0 - 0.5j)], ambiguous=[False]),
             X.TrackedPole("b", 1.3 - 0.5j, estimates=[est(1.3 - 0.5j)], ambiguous=[False])]
    X.track_level(op, poles, neps.SolverConfig(), 2, r_max=0.4)
    assert poles[0].estimates[-1] is not None
    assert poles[1].estimates[-1] is None
