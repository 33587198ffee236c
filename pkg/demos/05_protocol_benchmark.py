# %% [markdown]
# # Benchmarking predictors through the full protocol
#
# Small but complete comparison: train the continuous-time model and the
# one-step baseline, then run all four predictors through identical episodes
# and aggregate the three metric families.  The CSVs written at the end are
# the exact format the harness `eval` command emits (and the plots frontend
# consumes).

# %%
import os
from pathlib import Path

import numpy as np

from beamalign import build_codebook
from beamalign.config import load_config
from beamalign.harness import (
    evaluate_groups,
    make_trace,
    eval_trace_seed,
    train_trace_seed,
    write_metric_csvs,
)
from beamalign.predictors import TrainConfig, odelstm_train, save_model
from beamalign.protocol import make_stage_simulator

OUT = Path(__file__).parent / "output" / "benchmark"
OUT.mkdir(parents=True, exist_ok=True)

cfg = load_config(None).with_overrides(**{
    "array.num_antennas": 8,
    "array.codebook_size": 16,
    "selection.size": 5,
    "selection.j0": 1,
    "protocol.prediction_count": 19,
    "mobility.duration_s": 0.5,
    "mobility.start_radius_min_m": 12.0,
    "mobility.start_radius_max_m": 30.0,
    "counts.eval_traces": 8,
    "eval.predictors": ("odelstm", "lstm", "ekf", "arima"),
    "eval.rules": ("off", "adaptive"),
    "train.epochs": 30,
    "train.batch_size": 8,
    "train.conv_channels": 6,
    "train.hidden": 16,
    "train.ode_hidden": 16,
    "train.ode_steps": 8,
})
codebook = build_codebook(cfg.array)

# %%
train_traces = [make_trace(cfg, train_trace_seed(cfg, i)) for i in range(24)]
sim = make_stage_simulator(cfg.protocol("off"), codebook)
for model_kind in ("odelstm", "lstm"):
    tc = cfg.with_overrides(**{"train.model": model_kind}).train
    model, losses = odelstm_train(train_traces, sim, tc, np.random.default_rng(cfg.seed))
    save_model(model, OUT / f"{model_kind}.bmdl")
    print(f"{model_kind}: loss {losses[0]:.3f} -> {losses[-1]:.3f}")

# %%
eval_traces = [make_trace(cfg, eval_trace_seed(cfg, i)) for i in range(8)]
groups = evaluate_groups(cfg, eval_traces, codebook, checkpoint=OUT)

print(f"{'predictor':<10}{'rule':<10}{'mean gain':<12}")
for (name, rule, _v), logs in sorted(groups.items()):
    gain = np.concatenate([log.gains() for log in logs]).mean()
    print(f"{name:<10}{rule:<10}{gain:<12.4f}")

# %%
write_metric_csvs(groups, cfg["predictor"], OUT)
for name in ("gain_vs_tau.csv", "gain_vs_velocity.csv", "overhead.csv"):
    print(f"wrote {OUT / name}")
