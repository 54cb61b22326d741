import json
import os

import pytest

from slelab import cli
from slelab.montecarlo import Kind


def test_cardy_flags_build_config():
    command, cfg = cli.parse_config(["cardy", "--kappa", "6", "--n", "5000", "--dt", "1e-4",
                                     "--seed", "7"])
    assert command == "cardy"
    assert (cfg.kind, cfg.kappa, cfg.n_replicas, cfg.dt, cfg.seed) == (Kind.CARDY, 6.0, 5000,
                                                                         1e-4, 7)


def test_fraction_kappa():
    _, cfg = cli.parse_config(["cardy", "--kappa", "16/3"])
    assert cfg.kappa == pytest.approx(16 / 3, rel=1e-15)


@pytest.mark.parametrize("argv,needle", [
    (["kappa-rho", "--kappa", "6", "--rho", "-3"], "rho > -2"),
    (["perc", "--q", "2"], "q = 1"),
    (["cardy", "--kappa", "3"], "4 < kappa < 8"),
    (["half-strip", "--kappa", "6"], "kappa = 8"),
    (["kappa-rho", "--kappa", "6", "--rho", "0.5"], "rho = kappa/2 - 2"),
    (["cardy", "--n", "0"], "n_replicas"),
])
def test_usage_errors_name_the_constraint(argv, needle, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE
    assert needle in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    f = tmp_path / "run.cfg"
    f.write_text("kappa = 6\nbogus = 1\n")
    assert cli.main(["cardy", "--config", str(f)]) == cli.EXIT_USAGE
    assert "bogus" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["cardy", "--config", str(tmp_path / "none.cfg")]) == cli.EXIT_USAGE


def test_flags_override_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# small run\nkappa = 16/3\nn = 300\nseed = 4\n")
    _, cfg = cli.parse_config(["cardy", "--config", str(f), "--n", "50"])
    assert cfg.kappa == pytest.approx(16 / 3) and cfg.n_replicas == 50 and cfg.seed == 4


def test_points_in_config_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("points = 0.5+0.5j, 1j\n")
    _, cfg = cli.parse_config(["left-side", "--config", str(f)])
    assert cfg.test_points == (0.5 + 0.5j, 1j)


def test_help_exits_cleanly(capsys):
    assert cli.main(["cardy", "--help"]) == cli.EXIT_OK
    assert "--kappa" in capsys.readouterr().out


def test_map_sixteen_thirds(capsys):
    assert cli.main(["map", "--kappa", "16/3"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "alpha = 0.25" in out and "beta = 0.5" in out and "right angle at b" in out


def test_map_writes_region_svg(tmp_path):
    path = tmp_path / "region.svg"
    assert cli.main(["map", "--kappa", "3", "--svg", str(path)]) == cli.EXIT_OK
    assert path.read_text().startswith("<svg")


SMALL = ["left-side", "--n", "40", "--seed", "3", "--points", "0.5+0.8j,1j"]


def test_outputs_and_rerun_are_byte_identical(tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    code = cli.main(SMALL + ["--out", str(first), "--svg"])
    assert code in (cli.EXIT_OK, cli.EXIT_GATE)
    assert {"results.csv", "manifest.json"} <= set(os.listdir(first))
    manifest = json.loads((first / "manifest.json").read_text())
    for key in ("subcommand", "config", "seed", "shards", "version", "wall_time", "results"):
        assert key in manifest
    assert cli.main(["rerun", str(first / "manifest.json"), "--out", str(second)]) == code
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()


def test_lattice_rerun(tmp_path):
    out = tmp_path / "p"
    cli.main(["ust", "--mesh", "4", "--L", "2", "--n", "200", "--out", str(out)])
    csv_first = (out / "results.csv").read_bytes()
    cli.main(["rerun", str(out / "manifest.json"), "--out", str(out)])
    assert (out / "results.csv").read_bytes() == csv_first


def test_json_format(capsys):
    cli.main(SMALL + ["--format", "json"])
    data = json.loads(capsys.readouterr().out)
    assert data["subcommand"] == "left-side" and data["config"]["n_replicas"] == 40
    assert data["config"]["test_points"] == [[0.5, 0.8], [0.0, 1.0]]


def test_gate_exit_code_matches_result(capsys):
    code = cli.main(["radial", "--n", "50", "--dt", "1e-3"])
    out = capsys.readouterr()
    assert code == (cli.EXIT_GATE if "gate failed" in out.err else cli.EXIT_OK)


def test_write_failure_is_internal_and_cleans_up(tmp_path, monkeypatch, capsys):
    out = tmp_path / "o"
    real_open = open

    def flaky_open(path, mode="r", *a, **kw):
        if str(path).endswith("manifest.json") and "w" in mode:
            raise OSError(28, "No space left on device", str(path))
        return real_open(path, mode, *a, **kw)

    monkeypatch.setattr("builtins.open", flaky_open)
    assert cli.main(SMALL + ["--out", str(out)]) == cli.EXIT_INTERNAL
    assert "manifest.json" in capsys.readouterr().err
    assert os.listdir(out) == []


def test_rerun_rejects_non_manifest(tmp_path):
    f = tmp_path / "x.json"
    f.write_text("[1, 2]")
    assert cli.main(["rerun", str(f)]) == cli.EXIT_USAGE
