import csv
import json
import subprocess
import sys

import pytest

from rdtn import cli, experiments
from rdtn.errors import EigensolverError


def run(tmp_path, *args):
    return cli.main([*args, "--output-directory", str(tmp_path)])


def test_exact_disk_outputs_and_determinism(tmp_path):
    assert run(tmp_path, "exact-disk", "-p", "disk_n4") == 0
    first = (tmp_path / "exact_disk.csv").read_bytes()
    rows = list(csv.DictReader(first.decode().splitlines()))
    assert rows[0].keys() == {"re_k", "im_k", "multiplicity", "angular_order"}
    assert sum(int(r["multiplicity"]) for r in rows) == 29
    assert run(tmp_path, "exact-disk", "-p", "disk_n4") == 0
    assert (tmp_path / "exact_disk.csv").read_bytes() == first
    payload = json.loads((tmp_path / "exact_disk.json").read_text())
    assert payload["command"] == "exact-disk"
    assert len(payload["config_hash"]) == 64
    assert payload["seed"] == 0
    assert len(payload["poles"]) == len(rows)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["exact_disk"] == payload["config_hash"]


def test_overwrite_refused_without_force(tmp_path, capsys):
    assert run(tmp_path, "exact-disk", "-p", "disk_n4") == 0
    before = (tmp_path / "exact_disk.csv").read_bytes()
    assert run(tmp_path, "exact-disk", "-p", "disk_n025") == 2
    assert "--force" in capsys.readouterr().err
    assert (tmp_path / "exact_disk.csv").read_bytes() == before
    assert run(tmp_path, "exact-disk", "-p", "disk_n025", "--force") == 0
    assert (tmp_path / "exact_disk.csv").read_bytes() != before


def test_output_directory_does_not_change_hash(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "exact-disk") == 0
    assert run(b, "exact-disk") == 0
    ha = json.loads((a / "exact_disk.json").read_text())["config_hash"]
    hb = json.loads((b / "exact_disk.json").read_text())["config_hash"]
    assert ha == hb


def test_formats_override(tmp_path):
    assert run(tmp_path, "exact-disk", "--output-formats", "json") == 0
    assert (tmp_path / "exact_disk.json").exists()
    assert not (tmp_path / "exact_disk.csv").exists()


def test_empty_region_solve(tmp_path):
    rc = run(tmp_path, "solve", "--problem-region", "3.2 3.8 -3.8 -3.2", "--mesh-level", "1")
    assert rc == 0
    lines = (tmp_path / "poles.csv").read_text().splitlines()
    assert lines == [",".join(cli.POLE_HEADER)]
    assert json.loads((tmp_path / "poles.json").read_text())["poles"] == []


@pytest.mark.parametrize("args", [
    ["solve", "--problem-R", "0.5"],
    ["solve", "--problem-shape", "hexagon"],
    ["solve", "--mesh-level", "zero"],
    ["solve", "-p", "no_such_preset"],
    ["converge", "--mesh-levels", "2"],
    ["sweep-r"],
])
def test_config_errors_exit_2(tmp_path, args):
    assert run(tmp_path, *args) == 2


def test_missing_config_file(tmp_path):
    assert run(tmp_path, "solve", "-c", str(tmp_path / "nope.ini")) == 2


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["solve", "--no-such-flag", "1"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["solve", "-c", "a.ini", "-p", "disk_n4"])
    assert info.value.code == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    def fail(*args, **kwargs):
        raise EigensolverError("synthetic failure")

    monkeypatch.setattr(experiments, "solve_hierarchical", fail)
    assert run(tmp_path, "solve") == 3
    assert "synthetic failure" in capsys.readouterr().err
    assert not (tmp_path / "poles.csv").exists()


def test_mesh_command(tmp_path):
    assert run(tmp_path, "mesh", "-p", "square_n4", "--mesh-level", "1") == 0
    stats = list(csv.DictReader((tmp_path / "mesh_stats.csv").read_text().splitlines()))[0]
    assert float(stats["min_angle_deg"]) >= 20.0
    assert (tmp_path / "mesh.rdtn").read_text().startswith("RDTN-MESH 1")


def test_config_command_prints_resolved(tmp_path, capsys):
    assert run(tmp_path, "config", "-p", "ellipse_n4", "--problem-N", "11") == 0
    out = capsys.readouterr().out
    assert "shape = ellipse" in out
    assert "N = 11" in out


def test_verbose_flag_either_side(tmp_path):
    assert cli.main(["-v", "config", "--output-directory", str(tmp_path)]) == 0
    assert cli.main(["config", "-vv", "--output-directory", str(tmp_path)]) == 0


def test_every_key_has_a_flag():
    parser = cli.build_parser()
    text = parser._subparsers._group_actions[0].choices["solve"].format_help()
    for section, key in cli.cfgmod.all_keys():
        assert cli.flag_name(section, key) in text


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rdtn.cli", "config", "-p", "disk_n025",
                           "--output-directory", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "n_inside = 0.25" in proc.stdout


def test_matrix_dump_round_trip(tmp_path):
    import scipy.io
    from rdtn import assembly, mesh as meshmod
    from rdtn.geometry import Disk, Problem

    assert run(tmp_path, "mesh", "--mesh-level", "1", "--dump-k", "1-0.5i") == 0
    m = meshmod.read_mesh(tmp_path / "mesh.rdtn")
    system = assembly.assemble(m, Problem(Disk(1.0), 4.0, 1.25, N=20))
    B = assembly.OperatorFunction(system).evaluate(1 - 0.5j)
    back = scipy.io.mmread(tmp_path / "B.mtx").tocsc()
    assert abs(back - B).max() == 0
    assert abs(scipy.io.mmread(tmp_path / "K.mtx").tocsc() - system.K).max() == 0


def test_matrix_dump_off_by_default(tmp_path):
    assert run(tmp_path, "mesh", "--mesh-level", "1") == 0
    assert not (tmp_path / "K.mtx").exists()
    with pytest.raises(SystemExit):
        cli.main(["solve", "--dump-matrices"])
