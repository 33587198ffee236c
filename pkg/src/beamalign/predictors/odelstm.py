"""Continuous-time beam predictor: conv front-end, LSTM, ODE block, softmax head.

Per alignment stage the model packs the candidate pilots into a 2-channel
(real, imaginary) sequence over the beam axis, extracts features with a small
conv stack, and advances an LSTM state.  Between stages the hidden state is
evolved by integrating a learned derivative, so the classifier head can be
read out at any instant inside the prediction period.  The one-step variant
reuses the same trunk but skips the ODE block and therefore produces a single
period-wide decision.

Training runs full backpropagation through time across the stage sequence and
through every Euler step, batched over trajectories.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .. import nn
from ..channel import PilotObservation
from ..selection import CandidateSet, to_global
from .base import BeamPredictor, PredictionOutput

log = logging.getLogger(__name__)

PILOT_CHANNELS = 2  # real and imaginary parts


@dataclass(frozen=True)
class ModelDims:
    input_width: int
    conv_channels: int = 10
    conv_layers: int = 2
    kernel: int = 3
    hidden: int = 32
    ode_hidden: int = 32

    @property
    def out_dim(self) -> int:
        return self.input_width

    @property
    def feature_size(self) -> int:
        return self.conv_channels * self.input_width


@dataclass
class OdeLstmModel:
    variant: str  # "scan" (all beams) or "track" (candidate subset)
    ode_enabled: bool
    dims: ModelDims
    conv: list[nn.Conv1dParams]
    lstm: nn.LstmCellParams
    ode: nn.OdeDerivativeNet | None
    fc: nn.DenseParams

    def param_dict(self) -> dict[str, np.ndarray]:
        """Flat name->array view; arrays are shared, not copied."""
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.conv):
            out.update(nn.flatten_params(f"conv{i}", layer))
        out.update(nn.flatten_params("lstm", self.lstm))
        if self.ode is not None:
            out.update(nn.flatten_params("ode", self.ode))
        out.update(nn.flatten_params("fc", self.fc))
        return out


@dataclass
class PredictorState:
    """Evolving hidden/cell state plus the stage context it was built from."""

    h: np.ndarray
    c: np.ndarray
    last_stage_time_s: float
    last_candidate_set: CandidateSet | None  # None marks an all-beams stage


def init_model(
    rng: np.random.Generator,
    variant: str,
    dims: ModelDims,
    ode_enabled: bool = True,
) -> OdeLstmModel:
    """Fresh model; gate weights uniform(+-1/sqrt(fan_in)), zero softmax head."""
    if variant not in ("scan", "track"):
        raise ValueError(f"variant must be 'scan' or 'track', got {variant!r}")
    conv = []
    c_in = PILOT_CHANNELS
    for _ in range(dims.conv_layers):
        conv.append(nn.init_conv1d(rng, dims.conv_channels, c_in, dims.kernel))
        c_in = dims.conv_channels
    lstm = nn.init_lstm(rng, dims.feature_size, dims.hidden)
    ode = nn.init_ode(rng, dims.hidden, dims.ode_hidden) if ode_enabled else None
    fc = nn.init_dense_zero(dims.out_dim, dims.hidden)
    return OdeLstmModel(
        variant=variant, ode_enabled=ode_enabled, dims=dims,
        conv=conv, lstm=lstm, ode=ode, fc=fc,
    )


def initial_state(model: OdeLstmModel) -> PredictorState:
    return PredictorState(
        h=np.zeros(model.dims.hidden),
        c=np.zeros(model.dims.hidden),
        last_stage_time_s=0.0,
        last_candidate_set=None,
    )


def pack_pilots(pilots: Sequence[PilotObservation]) -> np.ndarray:
    """Stack pilot values as a (2, width) real tensor in the given order."""
    values = np.array([p.value for p in pilots])
    return np.stack([values.real, values.imag])


def _feature_forward(model: OdeLstmModel, x: np.ndarray):
    """Conv stack with ReLU, then flatten channels x width; returns caches."""
    caches = []
    a = x
    for layer in model.conv:
        z = nn.conv1d_forward(layer, a)
        caches.append((a, z))
        a = nn.relu(z)
    feat = a.reshape(a.shape[:-2] + (model.dims.feature_size,))
    return feat, caches


def _feature_backward(model: OdeLstmModel, caches, grad_feat: np.ndarray, grads: dict):
    g = grad_feat.reshape(
        grad_feat.shape[:-1] + (model.dims.conv_channels, model.dims.input_width)
    )
    for i in range(len(model.conv) - 1, -1, -1):
        a_in, z = caches[i]
        g = g * (z > 0)
        g, layer_grads = nn.conv1d_backward(model.conv[i], a_in, g)
        for k, v in layer_grads.items():
            grads[f"conv{i}.{k}"] += v
    return g


def odelstm_ingest(
    model: OdeLstmModel,
    state: PredictorState,
    pilots: Sequence[PilotObservation],
    cs: CandidateSet | None,
) -> PredictorState:
    """Consume one stage's pilots (in the candidate set's local order).

    Returns the advanced state; the input state is not modified.
    """
    width = model.dims.input_width
    if len(pilots) != width:
        raise ValueError(
            f"pilot count {len(pilots)} does not match model input width {width}"
        )
    if cs is not None and cs.size != width:
        raise ValueError(f"candidate set size {cs.size} != model width {width}")
    x = pack_pilots(pilots)
    feat, _ = _feature_forward(model, x)
    h2, c2 = nn.lstm_cell_step(model.lstm, feat, state.h, state.c)
    return PredictorState(
        h=h2, c=c2,
        last_stage_time_s=pilots[0].time_s,
        last_candidate_set=cs,
    )


def _output_from_probs(probs: np.ndarray, time_s: float, cs: CandidateSet | None):
    local = int(np.argmax(probs)) + 1  # ties resolve to the smallest index
    global_index = to_global(local, cs) if cs is not None else local
    return PredictionOutput(
        time_s=time_s, probabilities=probs, local_index=local, global_index=global_index
    )


def odelstm_query(
    model: OdeLstmModel,
    state: PredictorState,
    query_time_s: float,
    cs: CandidateSet | None,
    ode_steps: int = 10,
) -> PredictionOutput:
    """Evolve the hidden state to the query instant and read out the head."""
    if model.ode is None:
        raise ValueError("model has no ODE block; use lstm_onestep_predict")
    elapsed = query_time_s - state.last_stage_time_s
    if elapsed < 0:
        raise ValueError(
            f"query time {query_time_s} precedes stage time {state.last_stage_time_s}"
        )
    s = nn.ode_evolve(model.ode, state.h, elapsed, ode_steps)
    probs = nn.fc_softmax(model.fc, s)
    return _output_from_probs(probs, query_time_s, cs)


def lstm_onestep_predict(
    model: OdeLstmModel,
    state: PredictorState,
    stage_start_s: float,
    period_s: float,
    cs: CandidateSet | None,
) -> Callable[[float], PredictionOutput]:
    """One-step baseline: a single read-out pinned to the period midpoint.

    The returned function stamps the queried time but always reports the
    midpoint decision.
    """
    probs = nn.fc_softmax(model.fc, state.h)
    midpoint = _output_from_probs(probs, stage_start_s + period_s / 2, cs)

    def query(query_time_s: float) -> PredictionOutput:
        return replace(midpoint, time_s=query_time_s)

    return query


# --- training ------------------------------------------------------------------

@dataclass(frozen=True)
class StageSample:
    """Model-independent record of one alignment stage for training.

    candidate is None when the pilots cover all beams in global order; labels
    are 0-based local class indices, -1 where no oracle label exists.
    """

    stage_time_s: float
    pilot_tensor: np.ndarray  # (2, width)
    candidate: CandidateSet | None
    query_elapsed_s: np.ndarray  # (n_instants,)
    labels_local0: np.ndarray  # (n_instants,) int


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    learning_rate: float = 3e-3
    batch_size: int = 16
    ode_steps: int = 10
    conv_channels: int = 10
    kernel: int = 3
    hidden: int = 32
    ode_hidden: int = 32
    ode_enabled: bool = True
    conv_layers: int = 0  # 0 = default for the variant (2 track, 3 scan)


def odelstm_train(
    traces: Sequence,
    sim_callback: Callable,
    cfg: TrainConfig,
    rng: np.random.Generator,
    start_from: OdeLstmModel | None = None,
) -> tuple[OdeLstmModel, list[float]]:
    """Train on simulated alignment-stage sequences with full BPTT.

    sim_callback(trace, rng) must yield one list of :class:`StageSample` per
    trace; every trace must produce the same stage count, pilot width, and
    query schedule so stages batch across trajectories.  Returns the model and
    the per-epoch mean cross-entropy.  Pass start_from to resume training an
    existing model instead of initializing a fresh one.
    """
    if not traces:
        raise ValueError("training set must not be empty")

    datasets = []
    for trace in traces:
        child = np.random.default_rng(int(rng.integers(2**63)))
        datasets.append(sim_callback(trace, child))

    n_stages = len(datasets[0])
    width = datasets[0][0].pilot_tensor.shape[1]
    n_inst = len(datasets[0][0].query_elapsed_s)
    for samples in datasets:
        if len(samples) != n_stages or any(
            s.pilot_tensor.shape != (2, width) or len(s.query_elapsed_s) != n_inst
            for s in samples
        ):
            raise ValueError("all traces must share stage count and pilot width")

    X = np.array([[s.pilot_tensor for s in samples] for samples in datasets])
    labels = np.array([[s.labels_local0 for s in samples] for samples in datasets])
    elapsed = np.array([s.query_elapsed_s for s in datasets[0]])  # (n_stages, n_inst)

    skipped = int(np.sum(labels < 0))
    if skipped:
        log.warning("training labels unavailable for %d instants; skipped", skipped)

    variant = "track" if datasets[0][0].candidate is not None else "scan"
    conv_layers = cfg.conv_layers or (2 if variant == "track" else 3)
    dims = ModelDims(
        input_width=width,
        conv_channels=cfg.conv_channels,
        conv_layers=conv_layers,
        kernel=cfg.kernel,
        hidden=cfg.hidden,
        ode_hidden=cfg.ode_hidden,
    )
    if start_from is not None:
        if start_from.dims != dims or start_from.variant != variant:
            raise ValueError(
                f"resume model architecture {start_from.variant}/{start_from.dims} "
                f"does not match the training data ({variant}/{dims})"
            )
        model = start_from
    else:
        model = init_model(rng, variant, dims, ode_enabled=cfg.ode_enabled)
    params = model.param_dict()
    adam = nn.adam_init(params, cfg.learning_rate)
    shuffle_rng = np.random.default_rng(int(rng.integers(2**63)))

    losses = []
    n_traces = len(traces)
    for _ in range(cfg.epochs):
        perm = shuffle_rng.permutation(n_traces)
        epoch_ce = 0.0
        epoch_points = 0
        for lo in range(0, n_traces, cfg.batch_size):
            batch = perm[lo : lo + cfg.batch_size]
            ce_sum, points, grads = _batch_forward_backward(
                model, X[batch], labels[batch], elapsed, cfg
            )
            nn.adam_step(adam, params, grads)
            epoch_ce += ce_sum
            epoch_points += points
        losses.append(epoch_ce / max(epoch_points, 1))
    return model, losses


def bptt_loss_and_grads(
    model: OdeLstmModel, X: np.ndarray, labels: np.ndarray,
    elapsed: np.ndarray, cfg: TrainConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean training loss and its parameter gradients on one batch.

    X: (traces, stages, 2, width); labels: (traces, stages, instants) 0-based
    local indices; elapsed: (stages, instants).  Exposed mainly so the whole
    stack can be finite-difference checked end to end.
    """
    ce_sum, n_points, grads = _batch_forward_backward(model, X, labels, elapsed, cfg)
    return ce_sum / max(n_points, 1), grads


def _batch_forward_backward(model, X, labels, elapsed, cfg):
    """One BPTT pass over a batch of trajectories; returns (ce_sum, n, grads).

    Query branches (ODE + head) are backpropagated immediately per stage; the
    recurrent trunk is unrolled afterwards in reverse, so only small per-stage
    caches stay alive.
    """
    B, n_stages = X.shape[0], X.shape[1]
    n_inst = elapsed.shape[1]
    H = model.dims.hidden

    grads = {k: np.zeros_like(v) for k, v in model.param_dict().items()}
    valid = labels >= 0
    n_points = int(valid.sum())
    scale = 1.0 / max(n_points, 1)

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    trunk = []
    ce_sum = 0.0
    for n in range(n_stages):
        feat, conv_caches = _feature_forward(model, X[:, n])
        h2, c2, lstm_cache = nn.lstm_cell_forward(model.lstm, feat, h, c)

        s0 = np.broadcast_to(h2, (n_inst, B, H))
        if model.ode_enabled:
            s, ode_cache = nn.ode_evolve_forward(
                model.ode, s0, elapsed[n][:, None], cfg.ode_steps
            )
        else:
            s = np.array(s0)
        probs, fc_cache = nn.fc_softmax_forward(model.fc, s)

        lbl = labels[:, n].T  # (n_inst, B)
        mask = lbl >= 0
        safe = np.where(mask, lbl, 0)
        picked = np.take_along_axis(probs, safe[..., None], axis=-1)[..., 0]
        ce_sum += float(-np.log(np.maximum(picked[mask], nn.LOSS_FLOOR)).sum())

        gs, fc_grads = nn.fc_softmax_xent_backward(model.fc, fc_cache, safe, scale)
        gs[~mask] = 0.0
        grads["fc.weight"] += fc_grads["weight"]
        grads["fc.bias"] += fc_grads["bias"]
        if model.ode_enabled:
            gs, ode_grads = nn.ode_evolve_backward(model.ode, ode_cache, gs)
            for k, v in ode_grads.items():
                grads[f"ode.{k}"] += v
        gh_queries = gs.sum(axis=0)

        trunk.append((conv_caches, lstm_cache, gh_queries))
        h, c = h2, c2

    gh = np.zeros((B, H))
    gc = np.zeros((B, H))
    for n in range(n_stages - 1, -1, -1):
        conv_caches, lstm_cache, gh_queries = trunk[n]
        gh = gh + gh_queries
        gfeat, gh, gc, lstm_grads = nn.lstm_cell_backward(model.lstm, lstm_cache, gh, gc)
        for k, v in lstm_grads.items():
            grads[f"lstm.{k}"] += v
        _feature_backward(model, conv_caches, gfeat, grads)

    return ce_sum, n_points, grads


# --- persistence -----------------------------------------------------------------

def save_model(model: OdeLstmModel, destination) -> None:
    header = {
        "variant": model.variant,
        "ode_enabled": model.ode_enabled,
        "input_width": model.dims.input_width,
        "conv_channels": model.dims.conv_channels,
        "conv_layers": model.dims.conv_layers,
        "kernel": model.dims.kernel,
        "hidden": model.dims.hidden,
        "ode_hidden": model.dims.ode_hidden,
        "out_dim": model.dims.out_dim,
    }
    nn.save_checkpoint(destination, header, model.param_dict())


def load_model(source, expected_header: dict | None = None) -> OdeLstmModel:
    """Rebuild a model from a checkpoint, optionally enforcing an architecture."""
    header, params = nn.load_checkpoint(source)
    if expected_header is not None:
        nn.check_architecture(header, expected_header)
    dims = ModelDims(
        input_width=header["input_width"],
        conv_channels=header["conv_channels"],
        conv_layers=header["conv_layers"],
        kernel=header["kernel"],
        hidden=header["hidden"],
        ode_hidden=header["ode_hidden"],
    )
    conv = [
        nn.Conv1dParams(weight=params[f"conv{i}.weight"], bias=params[f"conv{i}.bias"])
        for i in range(dims.conv_layers)
    ]
    lstm = nn.LstmCellParams(**{
        f: params[f"lstm.{f}"]
        for f in ("wi", "ui", "bi", "wf", "uf", "bf", "wo", "uo", "bo", "wg", "ug", "bg")
    })
    ode = None
    if header["ode_enabled"]:
        ode = nn.OdeDerivativeNet(**{f: params[f"ode.{f}"] for f in ("w1", "b1", "w2", "b2")})
    fc = nn.DenseParams(weight=params["fc.weight"], bias=params["fc.bias"])
    return OdeLstmModel(
        variant=header["variant"], ode_enabled=header["ode_enabled"], dims=dims,
        conv=conv, lstm=lstm, ode=ode, fc=fc,
    )


# --- episode adapters ----------------------------------------------------------------

class OdeLstmPredictor(BeamPredictor):
    """Episode adapter around :func:`odelstm_ingest` / :func:`odelstm_query`.

    On full-scan stages a tracking-variant model ingests the candidate-sized
    pilot subset re-anchored at the scan's own measured optimum (all beams
    were probed, so those pilots exist); a scanning-variant model ingests
    everything in global order.
    """

    def __init__(self, model: OdeLstmModel, select: Callable | None = None,
                 ode_steps: int = 10):
        """select(measured_optimum, history) -> CandidateSet builds the ingest
        subset on scan stages; required for tracking-variant models."""
        self.model = model
        self.select = select
        self.ode_steps = ode_steps
        self.state = initial_state(model)
        self.optima_history: list[int] = []

    def observe_stage(self, stage_time_s, pilots, candidate_set, measured_optimum):
        self.optima_history.append(measured_optimum)
        if candidate_set is None and self.model.variant == "track":
            if self.select is None:
                raise ValueError("tracking model needs a selector for scan stages")
            cs = self.select(measured_optimum, self.optima_history)
            by_global = {p.beam_index: p for p in pilots}
            pilots = [by_global[g] for g in cs.global_indices]
            candidate_set = cs
        elif candidate_set is not None and self.model.variant == "scan":
            raise ValueError("scanning model cannot ingest a partial candidate set")
        self.state = odelstm_ingest(self.model, self.state, pilots, candidate_set)

    def predict(self, query_time_s: float) -> PredictionOutput:
        return odelstm_query(
            self.model, self.state, query_time_s,
            self.state.last_candidate_set, self.ode_steps,
        )

    def predict_many(self, query_times_s) -> list[PredictionOutput]:
        # batched ODE evolution: one integration per instant, shared matmuls
        times = np.asarray(query_times_s, dtype=float)
        elapsed = times - self.state.last_stage_time_s
        if np.any(elapsed < 0):
            raise ValueError("query precedes the last stage time")
        s = nn.ode_evolve(self.model.ode, np.broadcast_to(
            self.state.h, (len(times), self.model.dims.hidden)
        ), elapsed, self.ode_steps)
        probs = nn.fc_softmax(self.model.fc, s)
        cs = self.state.last_candidate_set
        return [
            _output_from_probs(probs[i], float(times[i]), cs) for i in range(len(times))
        ]


class OneStepLstmPredictor(BeamPredictor):
    """Shares the ODE-LSTM ingest path; emits one midpoint decision per period."""

    def __init__(self, model: OdeLstmModel, period_s: float,
                 select: Callable | None = None):
        self.model = model
        self.period_s = period_s
        self.select = select
        self.state = initial_state(model)
        self.optima_history: list[int] = []
        self._query: Callable[[float], PredictionOutput] | None = None

    def observe_stage(self, stage_time_s, pilots, candidate_set, measured_optimum):
        self.optima_history.append(measured_optimum)
        if candidate_set is None and self.model.variant == "track":
            if self.select is None:
                raise ValueError("tracking model needs a selector for scan stages")
            cs = self.select(measured_optimum, self.optima_history)
            by_global = {p.beam_index: p for p in pilots}
            pilots = [by_global[g] for g in cs.global_indices]
            candidate_set = cs
        self.state = odelstm_ingest(self.model, self.state, pilots, candidate_set)
        self._query = lstm_onestep_predict(
            self.model, self.state, stage_time_s, self.period_s,
            self.state.last_candidate_set,
        )

    def predict(self, query_time_s: float) -> PredictionOutput:
        if self._query is None:
            raise RuntimeError("predict called before any stage was observed")
        return self._query(query_time_s)
