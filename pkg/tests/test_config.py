"""Config loading: defaults, TOML overlays, and environment overrides."""

import pytest

from cdiskit.config import load_config
from cdiskit.errors import ConfigError


def _load(tmp_path, text=None, env=None):
    path = None
    if text is not None:
        path = tmp_path / "run.toml"
        path.write_text(text, encoding="utf-8")
    return load_config(path, environ=env or {})


def test_defaults_load_without_a_file(tmp_path):
    cfg = _load(tmp_path)
    assert cfg.seed == 0
    assert cfg.native_bvalues == (0.0, 100.0, 600.0, 800.0)
    assert cfg.synthetic_bvalues == (1000.0,)
    assert cfg.channels == (0.0, 100.0, 600.0, 800.0, 1000.0)
    assert cfg.bounds == (0.0, 4.0)
    assert cfg.x0().rho == (1.0,) * 5
    assert cfg.objective_mode == "mean_patient_auc"
    assert cfg.fuse_mode == "stack"
    assert cfg.target_dims == (224, 224, 25)
    assert cfg.fusion_dwi_bvalues is None
    assert cfg.out_dir == "run"
    assert cfg.n_patients == 6
    nm = cfg.nm_config()
    assert nm.max_iter is None and nm.max_evals is None
    spec = cfg.phantom_spec()
    assert spec.dims == (32, 32, 8)
    assert spec.noise_sigma == 0.02


def test_grade_mix_weights_normalize():
    cfg = load_config(environ={})
    mix = cfg.grade_mix
    assert mix["I"] == pytest.approx(10 / 309)
    assert mix["III"] == pytest.approx(200 / 309)
    assert sum(mix.values()) == pytest.approx(1.0)


def test_toml_file_overlays_defaults(tmp_path):
    cfg = _load(tmp_path, """
seed = 42

[phantom]
n_patients = 9
noise_sigma = 0.05
grade_mix = { II = 1.0, III = 1.0 }

[optimizer]
max_iter = 40
holdout = ["P007", "P008"]

[fusion]
mode = "product"
dwi_bvalues = [800.0]
target_dims = [32, 32, 8]
""")
    assert cfg.seed == 42
    assert cfg.n_patients == 9
    assert cfg.grade_mix == {"II": 0.5, "III": 0.5}
    assert cfg.nm_config().max_iter == 40
    assert cfg.holdout_ids == ("P007", "P008")
    assert cfg.fuse_mode == "product"
    assert cfg.fusion_dwi_bvalues == (800.0,)
    assert cfg.target_dims == (32, 32, 8)
    assert cfg.phantom_spec().seed == 42


def test_env_overrides_beat_file(tmp_path):
    cfg = _load(tmp_path, "[optimizer]\nmax_iter = 40\n",
                env={"CDIS_OPTIMIZER_MAX_ITER": "99",
                     "CDIS_SEED": "7",
                     "CDIS_FUSION_MODE": "product",
                     "CDIS_FUSION_DWI_BVALUES": "[800.0]",
                     "CDIS_PHANTOM_NOISE_SIGMA": "0.1"})
    assert cfg.nm_config().max_iter == 99
    assert cfg.seed == 7
    assert cfg.fuse_mode == "product"
    assert cfg.fusion_dwi_bvalues == (800.0,)
    assert cfg.phantom_spec().noise_sigma == 0.1


def test_env_values_parse_as_toml_literals(tmp_path):
    cfg = _load(tmp_path, env={"CDIS_IO_OUT_DIR": "plainstring",
                               "CDIS_OPTIMIZER_SUBSAMPLE_STRIDE": "3"})
    assert cfg.out_dir == "plainstring"  # unquoted string falls back verbatim
    assert cfg.subsample_stride == 3
    assert isinstance(cfg.subsample_stride, int)


def test_unrelated_env_vars_are_ignored(tmp_path):
    cfg = _load(tmp_path, env={"PATH": "/usr/bin", "CDISX_FOO": "1"})
    assert cfg.seed == 0


@pytest.mark.parametrize("text, tag", [
    ("nonsense = 1\n", "config.unknown-key"),
    ("[phantom]\nunknown = 2\n", "config.unknown-key"),
    ("[cdis]\np_lo = 99.0\np_hi = 1.0\n", "config.calibration.percentiles"),
    ("[cdis]\neps_fraction = 0.0\n", "config.cdis.eps"),
    ("[bvalues]\nnative = []\n", "config.bvalues.native"),
    ("[bvalues]\nsynthetic = [800.0]\n", "config.bvalues.overlap"),
    ("[cdis]\nx0 = [1.0, 1.0]\n", "config.cdis.x0"),
    ("[fusion]\ntarget_dims = [32, 32]\n", "config.fusion.dims"),
    ("[phantom]\ngrade_mix = { IV = 1.0 }\n", "config.phantom.grades"),
    ("[phantom]\ngrade_mix = { II = 0.0 }\n", "config.phantom.grades"),
    ("[optimizer]\nmax_iter = \"soon\"\n", "config.type"),
    ("seed = [1]\n", "config.type"),
])
def test_bad_configs_raise_config_errors(tmp_path, text, tag):
    with pytest.raises(ConfigError) as exc:
        _load(tmp_path, text)
    assert exc.value.tag == tag


def test_bad_env_override_raises(tmp_path):
    with pytest.raises(ConfigError) as exc:
        _load(tmp_path, env={"CDIS_NOSUCH_KEY": "1"})
    assert exc.value.tag == "config.env"
    with pytest.raises(ConfigError) as exc:
        _load(tmp_path, env={"CDIS_OPTIMIZER_NOPE": "1"})
    assert exc.value.tag == "config.env"
    with pytest.raises(ConfigError) as exc:
        _load(tmp_path, env={"CDIS_OPTIMIZER_MAX_ITER": "notanint"})
    assert exc.value.tag == "config.type"


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(tmp_path / "absent.toml", environ={})
    assert exc.value.tag == "config.missing-file"
    bad = tmp_path / "bad.toml"
    bad.write_text("[unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError) as exc:
        load_config(bad, environ={})
    assert exc.value.tag == "config.toml"


def test_defaults_tree_is_not_mutated(tmp_path):
    from cdiskit.config import _DEFAULTS
    before = repr(_DEFAULTS)
    _load(tmp_path, "[phantom]\nn_patients = 50\n")
    assert repr(_DEFAULTS) == before
