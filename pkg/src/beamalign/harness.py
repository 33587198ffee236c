"""Experiment orchestration: dataset generation, training, evaluation, sweeps.

Every command is a plain function over an :class:`ExperimentConfig`; the CLI
in :mod:`beamalign.cli` is a thin wrapper.  All randomness derives from the
master seed (trace i uses seed master+i, evaluation traces use a disjoint
offset), so a command rerun with the same config and seed reproduces every
output byte.  Metrics CSVs are pure aggregations of episode logs and can be
re-derived from saved logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import Codebook, build_codebook
from .config import ConfigError, ExperimentConfig
from .mobility import ChannelTrace, channel_trace, gen_trajectory, load_trace, save_trace
from .predictors import (
    ArimaPredictor,
    EkfPredictor,
    OdeLstmPredictor,
    OneStepLstmPredictor,
    OraclePredictor,
    load_model,
    odelstm_train,
    save_model,
)
from .protocol import EpisodeLog, StageLog, make_selector, make_stage_simulator, overhead, run_episode
from .selection import CandidateSet

EVAL_SEED_OFFSET = 1_000_000  # keeps eval trajectories disjoint from training ones

GAIN_VS_TAU_HEADER = ["predictor", "rule", "velocity_mps", "tau", "mean_norm_gain", "n"]
GAIN_VS_VELOCITY_HEADER = ["predictor", "rule", "velocity_mps", "mean_norm_gain", "n"]
OVERHEAD_HEADER = ["rule", "velocity_mps", "overhead_fraction"]


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluated (predictor, rule, velocity) group at one tau."""

    experiment: str
    predictor: str
    rule: str
    velocity_mps: float
    tau: float
    mean_norm_gain: float
    n: int
    overhead_fraction: float


# --- generation ---------------------------------------------------------------

def make_trace(cfg: ExperimentConfig, seed: int, speed_mps: float | None = None) -> ChannelTrace:
    rng = np.random.default_rng(seed)
    traj = gen_trajectory(cfg.mobility(speed_mps), rng)
    meta = {"seed": seed, "speed_mps": speed_mps or cfg["mobility.speed_mps"]}
    return channel_trace(traj, cfg.scene, cfg.array, rng, meta=meta)


def train_trace_seed(cfg: ExperimentConfig, index: int) -> int:
    return cfg.seed + index


def eval_trace_seed(cfg: ExperimentConfig, index: int) -> int:
    return cfg.seed + EVAL_SEED_OFFSET + index


def cmd_generate(cfg: ExperimentConfig, out_dir) -> dict:
    """Write train/eval trace files plus a manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": cfg.hash(), "master_seed": cfg.seed, "train": [], "eval": []}
    for kind, count, seed_fn in (
        ("train", cfg["counts.train_traces"], train_trace_seed),
        ("eval", cfg["counts.eval_traces"], eval_trace_seed),
    ):
        for i in range(count):
            seed = seed_fn(cfg, i)
            trace = make_trace(cfg, seed)
            name = f"{kind}_{i:04d}.btrc"
            save_trace(trace, out / name)
            manifest[kind].append({"file": name, "seed": seed})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_traces(traces_dir, kind: str) -> list[ChannelTrace]:
    paths = sorted(Path(traces_dir).glob(f"{kind}_*.btrc"))
    if not paths:
        raise FileNotFoundError(f"no {kind}_*.btrc files under {traces_dir}")
    return [load_trace(p) for p in paths]


def _check_trace_geometry(cfg: ExperimentConfig, traces) -> None:
    for t in traces:
        if t.array != cfg.array:
            raise ConfigError(
                f"trace array {t.array} does not match configured array {cfg.array}"
            )


# --- training -------------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, traces_dir, out_dir, resume=None) -> Path:
    """Train the configured model variant; writes checkpoint + loss CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = load_traces(traces_dir, "train")
    _check_trace_geometry(cfg, traces)
    codebook = build_codebook(cfg.array)
    sim = make_stage_simulator(cfg.protocol("off"), codebook, scan_all=cfg["train.scan_all"])
    start = load_model(resume) if resume is not None else None
    model, losses = odelstm_train(
        traces, sim, cfg.train, np.random.default_rng(cfg.seed), start_from=start
    )
    ckpt = out / f"{cfg['train.model']}.bmdl"
    save_model(model, ckpt)
    write_csv(out / "loss.csv", ["epoch", "loss"], [[i, v] for i, v in enumerate(losses)])
    return ckpt


# --- evaluation -----------------------------------------------------------------

def _resolve_checkpoint(checkpoint, name: str):
    """A checkpoint argument may be one .bmdl file or a directory of them."""
    if checkpoint is None:
        raise FileNotFoundError(f"predictor {name!r} needs a checkpoint")
    path = Path(checkpoint)
    if path.is_dir():
        candidate = path / f"{name}.bmdl"
        if not candidate.exists():
            raise FileNotFoundError(f"no {name}.bmdl under {path}")
        return candidate
    return path


def build_predictor(
    name: str,
    cfg: ExperimentConfig,
    codebook: Codebook,
    checkpoint=None,
    trace: ChannelTrace | None = None,
):
    """Fresh per-episode predictor adapter for a config's settings."""
    proto = cfg.protocol()
    if name == "odelstm" or name == "lstm":
        model = load_model(_resolve_checkpoint(checkpoint, name))
        expect_width = codebook.size if model.variant == "scan" else proto.candidate_size
        if model.dims.input_width != expect_width:
            raise ConfigError(
                f"{name} checkpoint width {model.dims.input_width} does not match "
                f"the configured candidate size {expect_width}"
            )
        select = make_selector(proto, codebook.size)
        if name == "odelstm":
            return OdeLstmPredictor(model, select=select, ode_steps=cfg["train.ode_steps"])
        return OneStepLstmPredictor(model, period_s=proto.period_s, select=select)
    if name == "ekf":
        return EkfPredictor(codebook, cfg.ekf)
    if name == "arima":
        return ArimaPredictor(
            codebook.size, proto.period_s, proto.prediction_count,
            window_periods=cfg["arima.window_periods"],
        )
    if name == "oracle":
        if trace is None:
            raise ValueError("oracle predictor needs the trace")
        return OraclePredictor(trace, codebook)
    raise ConfigError(f"unknown predictor {name!r}")


def run_group(
    cfg: ExperimentConfig,
    traces: list[ChannelTrace],
    predictor_name: str,
    rule: str,
    codebook: Codebook,
    checkpoint=None,
) -> list[EpisodeLog]:
    """One episode per trace for a (predictor, rule) pair; paired pilot seeds."""
    proto = cfg.protocol(rule)
    logs = []
    for i, trace in enumerate(traces):
        predictor = build_predictor(predictor_name, cfg, codebook, checkpoint, trace)
        rng = np.random.default_rng(eval_trace_seed(cfg, i) + 1)
        logs.append(run_episode(trace, predictor, proto, codebook, rng))
    return logs


def aggregate_gain_vs_tau(groups: dict[tuple, list[EpisodeLog]]) -> list[list]:
    """Rows (predictor, rule, velocity, tau, mean gain, n), deterministic order."""
    rows = []
    for (predictor, rule, velocity) in sorted(groups):
        logs = groups[(predictor, rule, velocity)]
        count = logs[0].prediction_count
        sums = np.zeros(count)
        n = 0
        for log in logs:
            for stage in log.stages:
                sums += np.array([g for (_, _, g) in stage.predictions])
                n += 1
        for i in range(count):
            tau = (i + 1) / (count + 1)
            rows.append([predictor, rule, velocity, tau, sums[i] / n, n])
    return rows


def aggregate_gain_vs_velocity(groups: dict[tuple, list[EpisodeLog]]) -> list[list]:
    rows = []
    for (predictor, rule, velocity) in sorted(groups):
        logs = groups[(predictor, rule, velocity)]
        gains = np.concatenate([log.gains() for log in logs])
        rows.append([predictor, rule, velocity, float(gains.mean()), len(gains)])
    return rows


def aggregate_overhead(
    groups: dict[tuple, list[EpisodeLog]], primary_predictor: str
) -> list[list]:
    """Rows (rule, velocity, overhead) measured on the primary predictor."""
    rows = []
    for (predictor, rule, velocity) in sorted(groups):
        if predictor != primary_predictor:
            continue
        logs = groups[(predictor, rule, velocity)]
        fractions = [overhead(log) for log in logs]
        rows.append([rule, velocity, float(np.mean(fractions))])
    return rows


def _fmt_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")


def evaluate_groups(
    cfg: ExperimentConfig,
    traces: list[ChannelTrace],
    codebook: Codebook,
    checkpoint=None,
    velocity: float | None = None,
) -> dict[tuple, list[EpisodeLog]]:
    velocity = velocity if velocity is not None else cfg["mobility.speed_mps"]
    groups: dict[tuple, list[EpisodeLog]] = {}
    for rule in cfg["eval.rules"]:
        for name in cfg["eval.predictors"]:
            logs = run_group(cfg, traces, name, rule, codebook, checkpoint)
            groups[(name, rule, velocity)] = logs
    return groups


def write_metric_csvs(groups, primary: str, out: Path) -> None:
    write_csv(out / "gain_vs_tau.csv", GAIN_VS_TAU_HEADER, aggregate_gain_vs_tau(groups))
    write_csv(
        out / "gain_vs_velocity.csv",
        GAIN_VS_VELOCITY_HEADER,
        aggregate_gain_vs_velocity(groups),
    )
    write_csv(out / "overhead.csv", OVERHEAD_HEADER, aggregate_overhead(groups, primary))


def cmd_eval(cfg: ExperimentConfig, checkpoint, traces_dir, out_dir) -> Path:
    """Evaluate every configured (predictor, rule) pair on the eval traces."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = load_traces(traces_dir, "eval")
    _check_trace_geometry(cfg, traces)
    codebook = build_codebook(cfg.array)
    groups = evaluate_groups(cfg, traces, codebook, checkpoint)
    write_metric_csvs(groups, cfg["predictor"], out)
    return out


def cmd_sweep(cfg: ExperimentConfig, checkpoint, out_dir) -> Path:
    """Evaluate across the velocity list; traces are regenerated per velocity
    from the same per-index seeds so predictors see identical geometry."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    codebook = build_codebook(cfg.array)
    groups: dict[tuple, list[EpisodeLog]] = {}
    for velocity in cfg["sweep.velocities_mps"]:
        traces = [
            make_trace(cfg, eval_trace_seed(cfg, i), speed_mps=velocity)
            for i in range(cfg["counts.eval_traces"])
        ]
        groups.update(evaluate_groups(cfg, traces, codebook, checkpoint, velocity))
    write_metric_csvs(groups, cfg["predictor"], out)
    return out


# --- episode-log persistence --------------------------------------------------------

def episode_to_dict(log: EpisodeLog) -> dict:
    return {
        "codebook_size": log.codebook_size,
        "period_s": log.period_s,
        "prediction_count": log.prediction_count,
        "trace_meta": log.trace_meta,
        "stages": [
            {
                "stage_index": s.stage_index,
                "stage_time_s": s.stage_time_s,
                "mode": s.mode,
                "candidate": list(s.candidate_set.global_indices) if s.candidate_set else None,
                "strategy": s.candidate_set.strategy_tag if s.candidate_set else None,
                "reserve": s.candidate_set.reserve_count if s.candidate_set else 0,
                "pilots_sent": s.pilots_sent,
                "measured_optimum": s.measured_optimum,
                "predictions": [[t, g, gain] for (t, g, gain) in s.predictions],
            }
            for s in log.stages
        ],
    }


def episode_from_dict(data: dict) -> EpisodeLog:
    stages = []
    for s in data["stages"]:
        cs = None
        if s["candidate"] is not None:
            cs = CandidateSet(
                tuple(s["candidate"]), s["strategy"], reserve_count=s["reserve"]
            )
        stages.append(
            StageLog(
                stage_index=s["stage_index"],
                stage_time_s=s["stage_time_s"],
                mode=s["mode"],
                candidate_set=cs,
                pilots_sent=s["pilots_sent"],
                measured_optimum=s["measured_optimum"],
                predictions=[(t, int(g), gain) for t, g, gain in s["predictions"]],
            )
        )
    return EpisodeLog(
        stages=stages,
        codebook_size=data["codebook_size"],
        period_s=data["period_s"],
        prediction_count=data["prediction_count"],
        trace_meta=data["trace_meta"],
    )


def save_logs(groups: dict[tuple, list[EpisodeLog]], path) -> None:
    payload = [
        {
            "predictor": key[0],
            "rule": key[1],
            "velocity_mps": key[2],
            "episodes": [episode_to_dict(log) for log in logs],
        }
        for key, logs in sorted(groups.items())
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_logs(path) -> dict[tuple, list[EpisodeLog]]:
    with open(path) as fh:
        payload = json.load(fh)
    return {
        (entry["predictor"], entry["rule"], entry["velocity_mps"]): [
            episode_from_dict(d) for d in entry["episodes"]
        ]
        for entry in payload
    }
