"""Experiment configuration: flat dotted-key text files with strict keys.

A config file holds ``key = value`` lines ('#' starts a comment).  Every key
has a documented default below; unknown keys are rejected so typos surface
immediately.  The same table renders the fully materialized canonical form
used for manifests and the reproducibility hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .channel import ArrayConfig
from .mobility import MobilityConfig, SceneConfig
from .predictors.ekf import EkfConfig
from .predictors.odelstm import TrainConfig
from .protocol import ProtocolConfig

PREDICTOR_CHOICES = ("odelstm", "lstm", "ekf", "arima")


class ConfigError(ValueError):
    """Invalid configuration file or values (CLI exit code 2)."""


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes", "on"):
        return True
    if raw.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(v) for v in raw.split(",") if v.strip())


def _parse_str_list(raw: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in raw.split(",") if v.strip())


def _parse_opt_float(raw: str):
    return None if raw.strip().lower() in ("", "none") else float(raw)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


# key -> (default, parser); insertion order is the canonical order
DEFAULTS: dict[str, tuple] = {
    "seed": (0, int),
    "predictor": ("odelstm", str),
    "array.num_antennas": (16, int),
    "array.codebook_size": (64, int),
    "array.element_spacing_over_wavelength": (0.5, float),
    "scene.num_paths": (3, int),
    "scene.nlos_relative_gain_db": (10.0, float),
    "scene.nlos_angle_spread_radians": (0.2, float),
    "scene.pathloss_exponent": (2.0, float),
    "scene.reference_gain": (30.0, float),
    "scene.doppler_hz": (0.0, float),
    "mobility.speed_mps": (10.0, float),
    "mobility.duration_s": (1.0, float),
    "mobility.sample_interval_s": (0.001, float),
    "mobility.turn_event_rate_hz": (0.0, float),
    "mobility.heading_change_std_radians": (0.0, float),
    "mobility.start_radius_min_m": (20.0, float),
    "mobility.start_radius_max_m": (60.0, float),
    "selection.strategy": ("uneven", str),
    "selection.size": (11, int),
    "selection.j0": (2, int),
    "protocol.period_s": (0.1, float),
    "protocol.switch_rule": ("off", str),
    "protocol.switch_period_stages": (2, int),
    "protocol.adaptive_threshold_policy": ("running_mean", str),
    "protocol.fixed_threshold": (0.0, float),
    "protocol.prediction_count": (99, int),
    "protocol.noise_variance": (1e-4, float),
    "protocol.adaptive_uses_normalized": (True, _parse_bool),
    "train.model": ("odelstm", str),
    "train.scan_all": (False, _parse_bool),
    "train.epochs": (60, int),
    "train.learning_rate": (3e-3, float),
    "train.batch_size": (16, int),
    "train.ode_steps": (10, int),
    "train.conv_channels": (10, int),
    "train.kernel": (3, int),
    "train.hidden": (32, int),
    "train.ode_hidden": (32, int),
    "counts.train_traces": (512, int),
    "counts.eval_traces": (64, int),
    "eval.predictors": (("odelstm",), _parse_str_list),
    "eval.rules": (("off",), _parse_str_list),
    "sweep.velocities_mps": ((5.0, 10.0, 15.0, 20.0, 25.0, 30.0), _parse_float_list),
    "ekf.process_noise_density": (0.1, float),
    "ekf.measurement_noise": (None, _parse_opt_float),
    "ekf.init_angle_var": (0.01, float),
    "ekf.init_rate_var": (1.0, float),
    "arima.window_periods": (4, int),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Full reproducibility bundle for one experiment family."""

    values: dict = field(repr=False)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def array(self) -> ArrayConfig:
        return ArrayConfig(
            num_antennas=self["array.num_antennas"],
            codebook_size=self["array.codebook_size"],
            element_spacing_over_wavelength=self["array.element_spacing_over_wavelength"],
        )

    @property
    def scene(self) -> SceneConfig:
        return SceneConfig(
            num_paths=self["scene.num_paths"],
            nlos_relative_gain_db=self["scene.nlos_relative_gain_db"],
            nlos_angle_spread_radians=self["scene.nlos_angle_spread_radians"],
            pathloss_exponent=self["scene.pathloss_exponent"],
            reference_gain=self["scene.reference_gain"],
            doppler_hz=self["scene.doppler_hz"],
        )

    def mobility(self, speed_mps: float | None = None) -> MobilityConfig:
        return MobilityConfig(
            speed_mps=self["mobility.speed_mps"] if speed_mps is None else speed_mps,
            duration_s=self["mobility.duration_s"],
            sample_interval_s=self["mobility.sample_interval_s"],
            turn_event_rate_hz=self["mobility.turn_event_rate_hz"],
            heading_change_std_radians=self["mobility.heading_change_std_radians"],
            start_radius_bounds_m=(
                self["mobility.start_radius_min_m"],
                self["mobility.start_radius_max_m"],
            ),
        )

    def protocol(self, switch_rule: str | None = None) -> ProtocolConfig:
        return ProtocolConfig(
            period_s=self["protocol.period_s"],
            switch_rule=self["protocol.switch_rule"] if switch_rule is None else switch_rule,
            switch_period_stages=self["protocol.switch_period_stages"],
            candidate_size=self["selection.size"],
            j0=self["selection.j0"],
            strategy=self["selection.strategy"],
            adaptive_threshold_policy=self["protocol.adaptive_threshold_policy"],
            fixed_threshold=self["protocol.fixed_threshold"],
            prediction_count=self["protocol.prediction_count"],
            noise_variance=self["protocol.noise_variance"],
            adaptive_uses_normalized=self["protocol.adaptive_uses_normalized"],
        )

    @property
    def train(self) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"],
            learning_rate=self["train.learning_rate"],
            batch_size=self["train.batch_size"],
            ode_steps=self["train.ode_steps"],
            conv_channels=self["train.conv_channels"],
            kernel=self["train.kernel"],
            hidden=self["train.hidden"],
            ode_hidden=self["train.ode_hidden"],
            ode_enabled=self["train.model"] == "odelstm",
        )

    @property
    def ekf(self) -> EkfConfig:
        return EkfConfig(
            process_noise_density=self["ekf.process_noise_density"],
            measurement_noise=self["ekf.measurement_noise"],
            init_angle_var=self["ekf.init_angle_var"],
            init_rate_var=self["ekf.init_rate_var"],
        )

    def lines(self) -> list[str]:
        """Canonical 'key = value' lines with every default materialized."""
        return [f"{k} = {_fmt(self.values[k])}" for k in DEFAULTS]

    def hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.lines()).encode())
        return digest.hexdigest()

    def with_overrides(self, **raw_items) -> "ExperimentConfig":
        values = dict(self.values)
        for key, value in raw_items.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
        cfg = ExperimentConfig(values=values)
        _validate(cfg)
        return cfg


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key->string pairs from config text; rejects unknown keys."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def load_config(path: str | None = None, seed_override: int | None = None) -> ExperimentConfig:
    """Config from a file (or pure defaults), with an optional seed override."""
    raw: dict[str, str] = {}
    if path is not None:
        with open(path, "r") as fh:
            raw = parse_config_text(fh.read())
    values = {}
    for key, (default, parser) in DEFAULTS.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        else:
            values[key] = default
    if seed_override is not None:
        values["seed"] = seed_override
    cfg = ExperimentConfig(values=values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg["predictor"] not in PREDICTOR_CHOICES:
        raise ConfigError(
            f"predictor must be one of {PREDICTOR_CHOICES}, got {cfg['predictor']!r}"
        )
    for name in cfg["eval.predictors"]:
        if name not in PREDICTOR_CHOICES:
            raise ConfigError(f"eval.predictors entry {name!r} is not a predictor")
    for rule in cfg["eval.rules"]:
        if rule not in ("off", "periodic", "adaptive"):
            raise ConfigError(f"eval.rules entry {rule!r} is not a switch rule")
    if cfg["train.model"] not in ("odelstm", "lstm"):
        raise ConfigError("train.model must be 'odelstm' or 'lstm'")
    if not cfg["sweep.velocities_mps"]:
        raise ConfigError("sweep.velocities_mps must not be empty")
    if cfg["counts.train_traces"] < 1 or cfg["counts.eval_traces"] < 1:
        raise ConfigError("trace counts must be >= 1")
    # materialize nested configs so their own validation runs now, not mid-run
    try:
        cfg.array
        cfg.scene
        cfg.mobility()
        cfg.protocol()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["selection.size"] > cfg["array.codebook_size"]:
        raise ConfigError("selection.size exceeds array.codebook_size")
