import pytest

from citpred.core.config import RunConfig, load_config
from citpred.core.errors import ConfigError, MissingFileError


def write_config(tmp_path, text):
    path = tmp_path / "run.env"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_match_reference_setup():
    cfg = RunConfig()
    assert (cfg.grid_rows, cfg.grid_cols, cfg.t_obs, cfg.t_pred) == (25, 5, 15, 25)
    assert cfg.enc_dim == 64 and cfg.leaky_slope == 0.1
    assert cfg.toggles == {"info_c": True, "info_f": True, "icd": "cross", "iie": True, "fusion": True}


def test_file_values_and_flag_overrides(tmp_path):
    path = write_config(tmp_path, "SEED=7\nEPOCHS=3\nICD=self\nIIE=false\nFCN_CHANNELS=[16, 32]\n")
    cfg = load_config(path, epochs=5, log_level=None)
    assert cfg.seed == 7
    assert cfg.epochs == 5
    assert cfg.icd == "self" and cfg.iie is False
    assert cfg.fcn_channels == (16, 32)


def test_config_path_from_environment(tmp_path, monkeypatch):
    path = write_config(tmp_path, "SEED=11\n")
    monkeypatch.setenv("CITPRED_CONFIG", str(path))
    assert load_config().seed == 11


def test_missing_config_file(tmp_path):
    with pytest.raises(MissingFileError):
        load_config(tmp_path / "nope.env")


def test_unknown_key_is_rejected(tmp_path):
    path = write_config(tmp_path, "NOT_A_SETTING=1\n")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize(
    "overrides",
    [
        {"info_f": False},  # cross attention needs both domains
        {"info_c": False, "info_f": False, "icd": "self", "iie": False},
        {"conv_kernel": 4},
        {"train_frac": 0.5},
        {"attn_heads": 3},
    ],
)
def test_inconsistent_settings(overrides):
    with pytest.raises(ConfigError):
        load_config(None, **overrides)


def test_with_overrides_validates():
    cfg = RunConfig()
    baseline = cfg.with_overrides(info_c=False, info_f=False, icd="off", iie=False, fusion=False)
    assert baseline.toggles["info_c"] is False
    with pytest.raises(ConfigError):
        cfg.with_overrides(iie=True, info_c=False)


def test_model_signature_ignores_runtime_fields():
    a = RunConfig(seed=1, workers=4, dtype="float64")
    b = RunConfig(seed=2, workers=1, learning_rate=0.1)
    assert a.model_signature() == b.model_signature()
    assert a.model_signature() != RunConfig(enc_dim=32).model_signature()


def test_derived_views():
    cfg = RunConfig(grid_rows=5, grid_cols=3, seed=4, synth_agents=2)
    assert (cfg.grid.rows, cfg.grid.cols) == (5, 3)
    assert cfg.split.seed == 4
    assert cfg.synthetic.agents == 2
