import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from citpred.core.errors import ConfigError, MissingFileError
from citpred.schemas import GridSpec, SplitSpec, SyntheticConfig

# Only this variable is read from the process environment: it names the
# default config file. All other settings come from the file or from flags.
CONFIG_ENV_VAR = "CITPRED_CONFIG"

# Fields that define the trained model beyond its weights; a checkpoint must agree on all of them.
MODEL_FIELDS = (
    "grid_length_ft", "grid_width_ft", "grid_rows", "grid_cols", "rate_hz", "t_obs", "t_pred",
    "input_embed_dim", "conv_kernel", "enc_dim", "attn_dim", "attn_heads",
    "ctx_dim", "iie_pool_rows", "fcn_channels", "maneuver_hidden", "dec_dim", "leaky_slope", "sigma_floor",
    "info_c", "info_f", "icd", "iie", "fusion", "intention_readout",
)


class RunConfig(BaseSettings):
    """All experiment hyperparameters, read from a KEY=value file."""

    # --- Reproducibility ---
    seed: int = 0

    # --- Grid (feet, converted once in GridSpec) ---
    grid_length_ft: float = 200.0
    grid_width_ft: float = 35.0
    grid_rows: int = Field(25, ge=1)
    grid_cols: int = Field(5, ge=1)

    # --- Horizons (frames at RATE_HZ) ---
    rate_hz: int = 5
    t_obs: int = Field(15, ge=2)
    t_pred: int = Field(25, ge=1)
    t_stride: int = Field(5, ge=1)
    plan_rate_hz: Literal[1, 5] = 1

    # --- Dimensions ---
    input_embed_dim: int = 32
    conv_kernel: int = 3
    enc_dim: int = 64
    attn_dim: int = 64
    attn_heads: int = 1
    ctx_dim: int = 64
    iie_pool_rows: int = 5
    fcn_channels: Tuple[int, int] = (128, 128)
    maneuver_hidden: int = 64
    dec_dim: int = 128
    leaky_slope: float = 0.1
    sigma_floor: float = 1e-3
    intention_readout: Literal["mean", "target_cell"] = "mean"

    # --- Ablation toggles (info (c) | info (f) | ICD | IIE | Fusion) ---
    info_c: bool = True
    info_f: bool = True
    icd: Literal["off", "self", "cross"] = "cross"
    iie: bool = True
    fusion: bool = True

    # --- Optimisation ---
    learning_rate: float = 1e-3
    batch_size: int = Field(16, ge=1)
    epochs: int = Field(50, ge=0)
    grad_clip: float = 10.0
    dtype: Literal["float32", "float64"] = "float32"

    # --- Dataset split ---
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    # --- Evaluation ---
    nll_mode: Literal["mixture", "best-maneuver"] = "mixture"

    # --- Runtime ---
    workers: int = Field(1, ge=1)
    progress: bool = False
    log_level: str = "INFO"

    # --- Synthetic scenarios ---
    synth_lanes: int = 3
    synth_agents: int = 4
    synth_scenes: int = 16
    synth_frames: int = 60
    synth_scenario_mix: Dict[str, float] = Field(
        default_factory=lambda: {"cruise": 0.25, "lane-change": 0.25, "brake": 0.25, "car-following-reactive": 0.25}
    )
    synth_lane_width_m: float = 3.66
    synth_speed_min: float = 20.0
    synth_speed_max: float = 30.0
    synth_brake_decel: float = 4.0
    synth_lane_change_s: float = 4.0
    synth_reaction_lag_s: float = 0.6
    synth_reactive_brake_prob: float = 0.5
    synth_follow_gap_m: float = 20.0

    model_config = SettingsConfigDict(
        env_file=None,
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="forbid",
        frozen=True,
    )

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings):
        # Flags (init kwargs) override the config file; the process environment is ignored.
        return (init_settings, dotenv_settings)

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        if self.icd == "cross" and not (self.info_c and self.info_f):
            raise ValueError("ICD=cross needs both INFO_C and INFO_F")
        if self.iie and not (self.info_c and self.info_f):
            raise ValueError("IIE needs both INFO_C and INFO_F")
        if self.icd == "self" and not (self.info_c or self.info_f):
            raise ValueError("ICD=self needs at least one of INFO_C / INFO_F")
        if self.conv_kernel % 2 == 0:
            raise ValueError("CONV_KERNEL must be odd to preserve sequence length")
        if self.attn_dim % self.attn_heads:
            raise ValueError("ATTN_HEADS must divide ATTN_DIM")
        if self.t_pred % (self.rate_hz // self.plan_rate_hz or 1):
            raise ValueError("T_PRED must be divisible by the plan downsampling ratio")
        return self

    # --- Derived views ---

    @property
    def grid(self) -> GridSpec:
        return GridSpec(length=self.grid_length_ft, width=self.grid_width_ft, rows=self.grid_rows, cols=self.grid_cols)

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(train_frac=self.train_frac, val_frac=self.val_frac, test_frac=self.test_frac, seed=self.seed)

    @property
    def synthetic(self) -> SyntheticConfig:
        return SyntheticConfig(
            lanes=self.synth_lanes,
            agents=self.synth_agents,
            scenes=self.synth_scenes,
            frames=self.synth_frames,
            scenario_mix=self.synth_scenario_mix,
            lane_width_m=self.synth_lane_width_m,
            speed_min=self.synth_speed_min,
            speed_max=self.synth_speed_max,
            brake_decel=self.synth_brake_decel,
            lane_change_s=self.synth_lane_change_s,
            reaction_lag_s=self.synth_reaction_lag_s,
            reactive_brake_prob=self.synth_reactive_brake_prob,
            follow_gap_m=self.synth_follow_gap_m,
        )

    @property
    def toggles(self) -> Dict[str, Any]:
        return {"info_c": self.info_c, "info_f": self.info_f, "icd": self.icd, "iie": self.iie, "fusion": self.fusion}

    def model_signature(self) -> Dict[str, Any]:
        dumped = self.model_dump(mode="json")
        return {name: dumped[name] for name in MODEL_FIELDS}

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Returns a validated copy with some fields replaced."""
        merged = {**self.model_dump(), **overrides}
        try:
            return type(self)(**merged)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration override: {e}") from e


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> RunConfig:
    """Reads the KEY=value config file (or $CITPRED_CONFIG) and applies flag overrides."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingFileError(f"Config file not found: {path}")
    try:
        return RunConfig(_env_file=str(path) if path is not None else None, **overrides)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration in {path or 'defaults'}: {e}") from e
