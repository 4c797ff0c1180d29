import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from spacetime_embed.cli import main
from spacetime_embed.config import ConfigError, ExperimentConfig
from spacetime_embed.experiments import expand_grid, sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_follow_manifold_preset():
    cfg = ExperimentConfig.load(None, ["manifold.kind=cylindrical_minkowski"])
    assert cfg.spec().circumference == 10.0
    lik = cfg.likelihood()
    assert (lik.tau1, lik.tau2, lik.alpha, lik.wrap_m) == (0.4, 0.07, 0.09, 3)
    tc = cfg.train_config()
    assert (tc.lr, tc.batch_size, tc.epochs) == (0.02, 2, 200)
    ads = ExperimentConfig.load(None, ["manifold.kind=ads"])
    assert ads.likelihood().r == -0.1 and ads.train_config().epochs == 150
    assert ads.sections["manifold"]["circumference"] == ""


def test_config_rejects_unknown_keys_and_sections(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[train]\nlearning_rate = 0.1\n")
    with pytest.raises(ConfigError, match="learning_rate"):
        ExperimentConfig.load(p)
    p.write_text("[plots]\nx = 1\n")
    with pytest.raises(ConfigError, match="plots"):
        ExperimentConfig.load(p)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, ["train.lr=-1"])
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, ["lr=1"])
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.ini")


def test_likelihood_kind_variants():
    fd = ExperimentConfig.load(None, ["manifold.kind=euclidean"]).likelihood()
    assert fd.kind == "fd"
    plain = ExperimentConfig.load(None, ["likelihood.kind=tfd"]).likelihood()
    assert plain.wrap_m == 0
    wr = ExperimentConfig.load(None, ["likelihood.kind=wrapped_tfd", "likelihood.wrap_m=0"])
    assert wr.likelihood().wrap_m == 3
    fixed = ExperimentConfig.load(None, ["likelihood.k=0.5"]).likelihood()
    assert fixed.k == 0.5


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig.load(CONFIGS / "cycle5_cylinder.ini")
    cfg.write(tmp_path / "eff.ini")
    again = ExperimentConfig.load(tmp_path / "eff.ini")
    assert again.sections == cfg.sections


def test_sweep_axes_and_grid():
    cfg = ExperimentConfig.load(CONFIGS / "dupdiv_sweep.ini")
    axes = cfg.sweep_axes()
    assert axes == {"likelihood.tau2": ["0.07", "0.1"], "manifold.circumference": ["6", "10"]}
    pts = expand_grid(axes)
    assert len(pts) == 4 and pts[0] == {"likelihood.tau2": "0.07", "manifold.circumference": "6"}
    assert cfg.with_values(pts[-1]).spec().circumference == 10.0
    with pytest.raises(ValueError):
        expand_grid({"a": []})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, ["manifold.kind=minkowski,euclidean"])


def _score(point, seed):
    return float(point["x"]) - 0.1 * seed


def test_sweep_ranks_by_median():
    rows = sweep({"x": [1, 3, 2]}, 3, _score, workers=1)
    assert [r[0]["x"] for r in rows] == [3, 2, 1]
    assert rows[0][1] == pytest.approx(2.9)
    par = sweep({"x": [1, 3, 2]}, 3, _score, workers=2)
    assert [(r[0], r[1]) for r in par] == [(r[0], r[1]) for r in rows]


def run(args, capsys=None):
    return main([*args, "--quiet"])


def test_cli_generate(tmp_path, capsys):
    assert run(["generate", "--set", "data.generator=chain", "--set", "data.n=10",
                "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "graph.tsv").read_text().splitlines()) == 9
    assert run(["generate", "--out", str(tmp_path / "dd")]) == 0
    assert "nodes=100 edges=1015 dag=false" in capsys.readouterr().out


def test_cli_train_eval_and_determinism(tmp_path):
    cfg = str(CONFIGS / "cycle5_cylinder.ini")
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run(["train", "--config", cfg, "--set", "train.epochs=40", "--out", str(a)]) == 0
    for name in ("checkpoint.tsv", "loss.csv", "metrics.json", "config.ini"):
        assert (a / name).is_file()
    loss = (a / "loss.csv").read_text().splitlines()
    assert loss[0] == "epoch,loss,test_ap" and len(loss) == 41
    metrics = json.loads((a / "metrics.json").read_text())
    assert metrics["reported_epoch"] == "final" and metrics["manifold"] == "cylindrical_minkowski"
    # re-run from the written effective config
    assert run(["train", "--config", str(a / "config.ini"), "--out", str(b)]) == 0
    for name in ("loss.csv", "metrics.json", "checkpoint.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert run(["eval", "--config", str(a / "config.ini"), "--checkpoint", str(a / "checkpoint.tsv"),
                "--out", str(c)]) == 0
    ev = json.loads((c / "metrics.json").read_text())
    assert ev["average_precision"] == metrics["average_precision"]


def test_cli_seed_changes_result(tmp_path):
    cfg = str(CONFIGS / "cycle5_cylinder.ini")
    run(["train", "--config", cfg, "--set", "train.epochs=20", "--seed", "1", "--out", str(tmp_path / "1")])
    run(["train", "--config", cfg, "--set", "train.epochs=20", "--seed", "2", "--out", str(tmp_path / "2")])
    assert (tmp_path / "1" / "loss.csv").read_text() != (tmp_path / "2" / "loss.csv").read_text()


def test_cli_sweep(tmp_path):
    assert run(["sweep", "--set", "manifold.kind=minkowski", "--set", "likelihood.tau2=0.03,0.05",
                "--set", "train.epochs=2", "--set", "sweep.trials=1", "--set", "sweep.workers=1",
                "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("rank,likelihood.tau2,median_ap") and len(rows) == 3


def test_cli_heatmap(tmp_path):
    assert run(["heatmap", "--set", "manifold.kind=minkowski", "--resolution", "3",
                "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "heatmap.csv").read_text().splitlines()
    assert len(lines) == 10
    assert lines[5].startswith("0.0,0.0,")
    assert run(["heatmap", "--set", "manifold.kind=ads", "--out", str(tmp_path)]) == 1


def test_cli_toy_writes_report(tmp_path):
    assert run(["toy", "chain10", "--trials", "1", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "chain10.json").read_text())
    assert rep["toy"] == "chain10" and set(rep["alphas"]) == {"0.001", "0.075"}


def test_cli_errors(tmp_path, capsys):
    assert run(["train", "--set", "data.generator=edgelist", "--set", f"data.path={tmp_path}/x.tsv"]) == 1
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["toy", "nonsense"])
    assert exc.value.code == 2


def test_numpy_backend_flag():
    env = dict(os.environ, SPACETIME_EMBED_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "import spacetime_embed as s; print(s.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["SPACETIME_EMBED_BACKEND"] = "fortran"
    bad = subprocess.run([sys.executable, "-c", "import spacetime_embed"], env=env, capture_output=True)
    assert bad.returncode != 0


def test_edge_list_ingest_smoke(tmp_path):
    # WordNet-like names with dots and underscores, one epoch
    rng = np.random.default_rng(0)
    names = [f"synset_{i}.n.01" for i in range(300)]
    lines = {(names[a], names[b]) for a, b in rng.integers(0, 300, (900, 2)) if a != b}
    path = tmp_path / "nouns.tsv"
    path.write_text("".join(f"{a}\t{b}\n" for a, b in sorted(lines)), encoding="utf-8")
    assert run(["train", "--set", "data.generator=edgelist", "--set", f"data.path={path}",
                "--set", "train.epochs=1", "--set", "manifold.dim=4", "--out", str(tmp_path / "o")]) == 0
