"""CLI runs end to end on disk cohorts; exit codes for the failure paths."""

import json

from gradeharness.cli import main

from conftest import make_cohort

TRAIN_TOML = """
learning_rate = 0.001
epochs = 3
batch_size = 2
seed = 1
variant = "toy"
"""


def _write_config(tmp_path, text=TRAIN_TOML):
    cfg = tmp_path / "train.toml"
    cfg.write_text(text, encoding="utf-8")
    return cfg


def test_loocv_cli_writes_results(tmp_path):
    manifest = make_cohort(tmp_path, 6, dims=(10, 10, 4))
    cfg = _write_config(tmp_path)
    out = tmp_path / "results.json"
    assert main(["loocv", "--manifest", str(manifest),
                 "--config", str(cfg), "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["tool"] == "grade-harness"
    assert payload["n_samples"] == 6
    assert payload["n_channels"] == 2
    assert payload["dims"] == [10, 10, 4]
    assert len(payload["folds"]) == 6
    assert payload["skipped"] == []
    agg = payload["aggregate"]
    assert agg["n_scored"] == 6
    confusion = agg["confusion"]
    assert sum(confusion.values()) == 6
    assert agg["accuracy"] == (confusion["tp"] + confusion["tn"]) / 6
    assert payload["config"]["epochs"] == 3
    assert payload["config"]["freeze_layers"] == "none"
    for fold in payload["folds"]:
        assert abs(sum(fold["scores"]) - 1.0) <= 1e-6


def test_loocv_cli_rerun_is_byte_identical(tmp_path):
    manifest = make_cohort(tmp_path, 4, dims=(8, 8, 4))
    cfg = _write_config(tmp_path)
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(["loocv", "--manifest", str(manifest),
                     "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_exit_2_on_config_errors(tmp_path, capsys):
    manifest = make_cohort(tmp_path, 4)
    rc = main(["loocv", "--manifest", str(manifest),
               "--config", str(tmp_path / "absent.toml"),
               "--out", str(tmp_path / "r.json")])
    assert rc == 2
    assert "config.missing-file" in capsys.readouterr().err

    for text, tag in [
        (TRAIN_TOML + "momentum = 0.9\n", "config.unknown-key"),
        (TRAIN_TOML.replace('variant = "toy"', 'variant = "vgg"'), "model.variant"),
        (TRAIN_TOML + 'freeze_layers = "head"\n', "config.freeze-layers"),
        ("epochs = [3\n", "config.toml"),
        ('learning_rate = "fast"\n', "config.learning-rate"),
    ]:
        cfg = _write_config(tmp_path, text)
        rc = main(["loocv", "--manifest", str(manifest),
                   "--config", str(cfg), "--out", str(tmp_path / "r.json")])
        err = capsys.readouterr().err
        assert rc == 2, text
        assert tag in err, text


def test_exit_3_on_data_errors(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    rc = main(["loocv", "--manifest", str(tmp_path / "absent.csv"),
               "--config", str(cfg), "--out", str(tmp_path / "r.json")])
    assert rc == 3
    assert "manifest.missing" in capsys.readouterr().err

    manifest = make_cohort(tmp_path, 4, label_of=lambda i: 1)
    rc = main(["loocv", "--manifest", str(manifest),
               "--config", str(cfg), "--out", str(tmp_path / "r.json")])
    assert rc == 3
    assert "dataset.single-class" in capsys.readouterr().err


def test_stderr_line_format(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    main(["loocv", "--manifest", str(tmp_path / "absent.csv"),
          "--config", str(cfg), "--out", str(tmp_path / "r.json")])
    err = capsys.readouterr().err
    assert err.startswith("grade-harness: manifest.missing:")
    assert err.count("\n") == 1
