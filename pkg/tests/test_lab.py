from pathlib import Path

import numpy as np
import pytest
import yaml

from kaclab.chaos_metrics import ChaosReport
from kaclab.cli import main
from kaclab.config import ConfigError, load_config, parse_config, validate_config
from kaclab.experiments import derive_seed, file_digest, run_experiment
from kaclab.kernels import InvalidInput
from kaclab.plots import emit_plot

CONFIGS = sorted((Path(__file__).parents[1] / "configs").glob("*.yaml"))

TINY = {
    "kind": "Equilibration",
    "name": "tiny",
    "seed": 3,
    "N": [8],
    "R": 6,
    "t_grid": [0.0, 0.5, 1.0],
    "init": {"kind": "uniform_sphere", "sphere": "boltzmann", "d": 3},
    "reference": {"kind": "maxwellian"},
    "estimators": {"omega_j": [1], "n_boot": 2, "entropy": False},
}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


def tiny(tmp_path, **over):
    data = dict(TINY, output=str(tmp_path / "run"), **over)
    return write_cfg(tmp_path, data)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg, errors = validate_config(path)
    assert errors == []


def test_validation_lists_every_error_with_lines(tmp_path):
    path = write_cfg(tmp_path, {"kind": "LLNRates", "output": "x", "N": [64, 32], "R": 0,
                                "t_grid": [0.0], "bogus": 1,
                                "init": {"kind": "product",
                                         "density": {"kind": "gauss", "d": 3}}})
    _, errors = validate_config(path)
    text = "\n".join(errors)
    for needle in ("seed", "strictly increasing", "R:", "bogus"):
        assert needle in text
    assert any(":6:" in e or ":7:" in e for e in errors)  # file:line locations


def test_kac_sphere_requires_d1(tmp_path):
    cfg = dict(TINY, output="x", init={"kind": "conditioned", "sphere": "kac",
                                       "density": {"kind": "gauss", "d": 3}})
    _, errors = validate_config(write_cfg(tmp_path, cfg))
    assert any("Kac sphere" in e for e in errors)


def test_hard_spheres_need_normalized_init(tmp_path):
    cfg = dict(TINY, output="x", kernel={"variant": "hs"},
               init={"kind": "product", "density": {"kind": "gauss", "d": 3, "var": 2.0}})
    _, errors = validate_config(write_cfg(tmp_path, cfg))
    assert any("hard spheres" in e for e in errors)


def test_parse_config_raises_with_all_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config({"kind": "nope"}).kind  # noqa: B018
    assert len(exc.value.errors) >= 3


def test_derive_seed_stable():
    assert derive_seed(1, "ensemble", 8) == derive_seed(1, "ensemble", 8)
    assert derive_seed(1, "ensemble", 8) != derive_seed(1, "ensemble", 16)
    assert derive_seed(1, "a") != derive_seed(2, "a")


def test_run_is_deterministic_and_resumable(tmp_path):
    cfg = load_config(tiny(tmp_path))
    files = run_experiment(cfg)
    first = {k: file_digest(files[k]) for k in ("report", "csv")}
    rep = ChaosReport.read_json(files["report"])
    assert len(rep.rows) == 3 and rep.rows[0]["omega_1"] is not None
    # resume: chunks are reused and the results are byte-identical
    chunk = tmp_path / "run" / "ensembles" / "N00008" / "c00000.npz"
    stamp = chunk.stat().st_mtime_ns
    files = run_experiment(cfg)
    assert chunk.stat().st_mtime_ns == stamp
    assert {k: file_digest(files[k]) for k in ("report", "csv")} == first
    # fresh directory, same config: identical bytes
    cfg2 = load_config(tiny(tmp_path))
    cfg2.output = str(tmp_path / "run2")
    files2 = run_experiment(cfg2)
    assert {k: file_digest(files2[k]) for k in ("report", "csv")} == first


def test_refuses_to_mix_configs(tmp_path):
    run_experiment(load_config(tiny(tmp_path)))
    other = load_config(tiny(tmp_path, seed=4))
    with pytest.raises(RuntimeError):
        run_experiment(other)


def test_cli_exit_codes(tmp_path, capsys):
    good = tiny(tmp_path)
    bad = write_cfg(tmp_path, {"kind": "Equilibration"}, "bad.yaml")
    assert main(["validate", str(good)]) == 0
    assert main(["validate", str(bad)]) == 1
    assert main(["run", str(bad)]) == 1
    assert main(["run", str(good), "--quiet"]) == 0
    assert main(["report", str(tmp_path / "run")]) == 0
    assert "Equilibration" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "missing")]) == 2
    assert main(["replay", str(tmp_path / "run" / "manifest.json"),
                 "--output", str(tmp_path / "replayed")]) == 0
    assert "identical" in capsys.readouterr().out
    assert main(["frobnicate"]) == 1
    assert main(["validate", str(tmp_path / "nope.yaml")]) == 1


def test_replay_detects_tampering(tmp_path, capsys):
    main(["run", str(tiny(tmp_path)), "--quiet"])
    csv = tmp_path / "run" / "timeseries.csv"
    csv.write_text(csv.read_text() + "tampered\n")
    assert main(["replay", str(tmp_path / "run" / "manifest.json"),
                 "--output", str(tmp_path / "rp")]) == 2
    assert "DIFFERENT" in capsys.readouterr().out


def test_emit_plot(tmp_path):
    N = np.array([64, 128, 256, 512])
    fits = emit_plot([("omega", N, 2 * N ** -0.5, 0.05 * N ** -0.5)], "loglog",
                     tmp_path / "p.svg", title="rate", fit=True)
    assert fits["omega"]["slope"] == pytest.approx(-0.5)
    text = (tmp_path / "p.svg").read_text()
    assert text.startswith("<svg") and "slope -0.500" in text
    t = np.linspace(0, 4, 9)
    fits = emit_plot([{"label": "decay", "x": t, "y": np.exp(-t)}], "semilogy",
                     tmp_path / "q.svg", fit=True)
    assert fits["decay"]["rate"] == pytest.approx(1.0)
    with pytest.raises(InvalidInput):
        emit_plot([], "linear", tmp_path / "e.svg")
    with pytest.raises(InvalidInput):
        emit_plot([("a", [1], [1])], "polar", tmp_path / "e.svg")
