import pytest

from trajanomaly import pipeline as pl
from trajanomaly.metrics import read_report
from trajanomaly.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def write_config(tmp_path, **extra):
    cfg = {
        "data_root": tmp_path / "data",
        "runs_root": tmp_path / "runs",
        "name": "smoke",
        "n_train": 4,
        "n_abnormal": 3,
        "n_frames": 30,
        "epochs": 2,
        "decay_epoch": 1,
        "kde_subsample": 400,
        "seeds": "0, 1",
        "sweep_lengths": "8, 15",
    }
    cfg.update(extra)
    path = tmp_path / "run.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in cfg.items()))
    return path


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["score", "--method", "svm"]) == EXIT_USAGE
    assert main(["generate", "--agents", "7"]) == EXIT_USAGE


def test_config_parsing(tmp_path):
    cfg = pl.load_run_config(write_config(tmp_path))
    assert cfg.seeds == (0, 1) and cfg.kde_subsample == 400 and cfg.n_frames == 30
    assert pl.parse_run_config(pl.dump_run_config(cfg)) == cfg
    with pytest.raises(ValueError, match="line 1"):
        pl.parse_run_config("bogus = 1")
    with pytest.raises(ValueError, match="seeds"):
        pl.parse_run_config("seeds = ")


def test_missing_upstream_names_command(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["generate", "--config", str(cfg)]) == EXIT_OK
    assert main(["fit-density", "--config", str(cfg), "--seed", "0"]) == EXIT_DATA
    assert "'train'" in capsys.readouterr().err
    assert main(["eval", "--config", str(cfg), "--method", "lti"]) == EXIT_DATA
    assert "'score'" in capsys.readouterr().err


def test_generate_refuses_non_empty(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["generate", "--config", str(cfg)]) == EXIT_OK
    manifest = (tmp_path / "data" / "manifest.csv").read_bytes()
    assert main(["generate", "--config", str(cfg)]) == EXIT_DATA
    assert main(["generate", "--config", str(cfg), "--force"]) == EXIT_OK
    assert (tmp_path / "data" / "manifest.csv").read_bytes() == manifest


def test_generate_default_composition(tmp_path):
    out = tmp_path / "full"
    assert main(["generate", "--out", str(out), "--agents", "4"]) == EXIT_OK
    from trajanomaly.simdata import read_manifest
    rows = read_manifest(out)
    assert sum(r["split"] == "train" for r in rows) == 80
    assert sum(r["split"] == "test" for r in rows) == 66
    assert all(r["n_agents"] == "4" for r in rows if r["split"] == "test")


def test_baseline_needs_no_checkpoint(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["generate", "--config", str(cfg)]) == EXIT_OK
    assert main(["score", "--config", str(cfg), "--method", "cvm"]) == EXIT_OK
    assert main(["eval", "--config", str(cfg), "--method", "cvm"]) == EXIT_OK


def test_full_pipeline_smoke(tmp_path, capsys):
    cfg = write_config(tmp_path, n_abnormal_per_class=1, n_abnormal="none", n_train=5)
    args = ["--config", str(cfg)]
    assert main(["generate", *args]) == EXIT_OK
    assert main(["train", *args]) == EXIT_OK
    assert (tmp_path / "runs" / "smoke-s0" / "ckpt_final").exists()
    assert main(["fit-density", *args]) == EXIT_OK
    assert main(["score", *args, "--method", "kde"]) == EXIT_OK
    assert main(["eval", *args, "--method", "kde"]) == EXIT_OK
    report = tmp_path / "runs" / "smoke" / "report_kde.csv"
    first = report.read_bytes()
    rows = read_report(report)
    assert sum(1 for s, _ in rows if s == "overall") == 4
    assert sum(1 for s, _ in rows if s == "per_class") == 11
    # idempotent: rerunning score + eval reproduces the report bytes
    assert main(["score", *args, "--method", "kde"]) == EXIT_OK
    assert main(["eval", *args, "--method", "kde"]) == EXIT_OK
    assert report.read_bytes() == first
    assert main(["sweep-seglen", *args, "--method", "lti", "--method", "cvm"]) == EXIT_OK
    sweep = pl.read_sweep(tmp_path / "runs" / "smoke" / "sweep_seglen.csv")
    assert [r.segment_length for r in sweep.rows] == [8, 8, 15, 15]


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seed", "0"]) == EXIT_OK
    assert "max relative error" in capsys.readouterr().out


def test_score_other_dataset_keeps_base_scores(tmp_path):
    cfg = write_config(tmp_path)
    args = ["--config", str(cfg)]
    other = tmp_path / "data_n3"
    assert main(["generate", *args]) == EXIT_OK
    assert main(["generate", *args, "--agents", "3", "--out", str(other)]) == EXIT_OK
    assert main(["score", *args, "--method", "lti", "--seed", "0"]) == EXIT_OK
    base = tmp_path / "runs" / "smoke-s0" / "scores"
    before = {p.name: p.read_bytes() for p in (base / "lti").iterdir()}
    assert main(["score", *args, "--method", "lti", "--seed", "0", "--data", str(other)]) == EXIT_OK
    assert {p.name: p.read_bytes() for p in (base / "lti").iterdir()} == before
    scores = sorted((base / "lti@data_n3").iterdir())
    assert len(scores) == len(before)
    assert "agent,0,2," in scores[0].read_text()
    assert main(["eval", *args, "--method", "lti", "--seed", "0", "--data", str(other)]) == EXIT_OK
    assert (tmp_path / "runs" / "smoke" / "report_lti@data_n3.csv").exists()
