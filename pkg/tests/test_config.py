import pytest

from rdtn import config as C
from rdtn.errors import ConfigError


def test_defaults_round_trip():
    run = C.RunConfig()
    back = C.parse_config(run.to_text())
    assert back == run
    assert back.to_text() == run.to_text()


def test_every_key_formats_and_parses():
    run = C.RunConfig()
    for section, key in C.all_keys():
        value = getattr(getattr(run, section), key)
        assert C.parse_value(section, key, C.format_value(value)) == value


def test_presets_round_trip():
    from rdtn.cli import preset_names, preset_text
    names = preset_names()
    assert {"disk_n4", "disk_n025", "square_n4", "square_n025"} <= set(names)
    for name in names:
        run = C.parse_config(preset_text(name))
        assert C.parse_config(run.to_text()) == run


def test_hash_stable_and_sensitive():
    a = C.RunConfig()
    assert a.hash() == C.RunConfig().hash()
    assert len(a.hash()) == 64
    assert a.replace("problem", N=21).hash() != a.hash()
    assert a.replace("solver", rng_seed=7).hash() != a.hash()


def test_hash_ignores_output_section():
    a = C.RunConfig()
    b = a.replace("output", directory="elsewhere", formats=("csv",))
    assert a.hash() == b.hash()


def test_overrides_win_over_file():
    text = "[problem]\nN = 12\n[mesh]\nlevel = 2\n"
    run = C.parse_config(text, {("problem", "N"): "7", ("solver", "rng_seed"): "3"})
    assert run.problem.N == 7
    assert run.mesh.level == 2
    assert run.solver.rng_seed == 3


def test_value_syntax():
    assert C.parse_value("sweep", "poles", "1-2j 0.5-0.25i") == (1 - 2j, 0.5 - 0.25j)
    assert C.parse_value("problem", "region", "0 4 -4 0") == (0.0, 4.0, -4.0, 0.0)
    assert C.parse_value("output", "formats", "json") == ("json",)


def test_inline_comments():
    run = C.parse_config("[problem]\nN = 9 ; truncation\nn_inside = 0.25 # low index\n")
    assert run.problem.N == 9 and run.problem.n_inside == 0.25


@pytest.mark.parametrize("text", [
    "[nonsense]\na = 1\n",
    "[problem]\ncolour = red\n",
    "[problem]\nN = many\n",
    "[problem]\nshape = hexagon\n",
    "[problem]\nR = 0.5\n",
    "[problem]\nn_inside = 1.0\n",
    "[mesh]\nlevels = 0\n",
    "[mesh]\nh1 = -1\n",
    "[solver]\nstrategy = guess\n",
    "[solver]\nprobes = 0\n",
    "[output]\nformats = xml\n",
    "[sweep]\norders = 0 5\n",
    "not an ini file",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        C.parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        C.load_config(tmp_path / "absent.ini")


def test_load_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[problem]\nshape = square\nR = 0.8\n")
    run = C.load_config(path)
    assert run.build_problem().shape.kind == "square"
