"""Beam predictors behind a common per-episode interface."""

from .arima import (
    ArimaModel,
    ArimaPredictor,
    arima_fit,
    arima_forecast,
    forecast_to_beam_indices,
)
from .base import BeamPredictor, PredictionOutput
from .ekf import (
    EkfConfig,
    EkfDivergenceError,
    EkfPredictor,
    EkfState,
    ekf_init,
    ekf_predict,
    ekf_query,
    ekf_update,
)
from .odelstm import (
    ModelDims,
    OdeLstmModel,
    OdeLstmPredictor,
    OneStepLstmPredictor,
    PredictorState,
    StageSample,
    TrainConfig,
    bptt_loss_and_grads,
    init_model,
    initial_state,
    load_model,
    lstm_onestep_predict,
    odelstm_ingest,
    odelstm_query,
    odelstm_train,
    pack_pilots,
    save_model,
)
from .oracle import OraclePredictor

__all__ = [
    "ArimaModel",
    "ArimaPredictor",
    "BeamPredictor",
    "EkfConfig",
    "EkfDivergenceError",
    "EkfPredictor",
    "EkfState",
    "ModelDims",
    "OdeLstmModel",
    "OdeLstmPredictor",
    "OneStepLstmPredictor",
    "OraclePredictor",
    "PredictionOutput",
    "PredictorState",
    "StageSample",
    "TrainConfig",
    "arima_fit",
    "arima_forecast",
    "bptt_loss_and_grads",
    "ekf_init",
    "ekf_predict",
    "ekf_query",
    "ekf_update",
    "forecast_to_beam_indices",
    "init_model",
    "initial_state",
    "load_model",
    "lstm_onestep_predict",
    "odelstm_ingest",
    "odelstm_query",
    "odelstm_train",
    "pack_pilots",
    "save_model",
]
