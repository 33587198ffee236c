"""ARIMA forecaster with in-repo AIC order selection.

Orders are chosen by grid search over (p, d, q) with conditional-sum-of-squares
fitting: the AR part comes from least squares on lagged values and the MA part
from iterated residual regression.  AIC = 2k + n*ln(RSS/n) with k counting the
estimated coefficients plus intercept; ties go to the smaller model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..selection import CandidateSet, nearest_in_set
from .base import BeamPredictor, PredictionOutput

DEFAULT_GRID = tuple(
    (p, d, q) for p in range(4) for d in range(2) for q in range(3)
)
MIN_SERIES_LEN = 8
RSS_FLOOR = 1e-12
MA_ITERATIONS = 8


@dataclass(frozen=True)
class ArimaModel:
    order: tuple[int, int, int]
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    residuals: np.ndarray
    aic: float
    search: tuple[tuple[tuple[int, int, int], float], ...]  # every grid candidate

    @property
    def num_params(self) -> int:
        return len(self.ar) + len(self.ma) + 1


def _css_fit(w: np.ndarray, p: int, q: int):
    """Conditional-sum-of-squares fit of ARMA(p, q) with intercept.

    Returns (ar, ma, intercept, residuals); residuals start at max(p, q)
    with earlier shocks conditioned to zero.
    """
    n = len(w)
    m = max(p, q)
    if n - m < p + q + 1:
        return None

    def recursive_residuals(c, ar, ma):
        e = np.zeros(n)
        for t in range(m, n):
            pred = c
            for i in range(p):
                pred += ar[i] * w[t - 1 - i]
            for j in range(q):
                pred += ma[j] * e[t - 1 - j]
            e[t] = w[t] - pred
        return e

    if p == 0 and q == 0:
        c = float(np.mean(w))
        return np.zeros(0), np.zeros(0), c, w - c

    e = np.zeros(n)
    best = None  # (rss, ar, ma, c, resid); MA iteration may diverge past it
    coeffs_prev = None
    for _ in range(MA_ITERATIONS if q > 0 else 1):
        rows = np.arange(m, n)
        cols = [np.ones(len(rows))]
        for i in range(1, p + 1):
            cols.append(w[rows - i])
        for j in range(1, q + 1):
            cols.append(e[rows - j])
        design = np.stack(cols, axis=1)
        coeffs, *_ = np.linalg.lstsq(design, w[rows], rcond=None)
        c = float(coeffs[0])
        ar = coeffs[1 : 1 + p]
        ma = coeffs[1 + p :]
        e = recursive_residuals(c, ar, ma)
        with np.errstate(over="ignore"):
            rss = float(np.sum(e[m:] ** 2))
        if not np.all(np.isfinite(e)) or not np.isfinite(rss):
            break
        if best is None or rss < best[0]:
            best = (rss, ar, ma, c, e[m:].copy())
        else:
            break  # residual regression started diverging; keep the best iterate
        if coeffs_prev is not None and np.max(np.abs(coeffs - coeffs_prev)) < 1e-10:
            break
        coeffs_prev = coeffs
    if best is None:
        return None
    _, ar, ma, c, resid = best
    return ar, ma, c, resid


def arima_fit(series: Sequence[float], grid=DEFAULT_GRID) -> ArimaModel:
    """Grid-search (p, d, q) by AIC over CSS fits; smallest model wins ties."""
    y = np.asarray(series, dtype=float)
    if len(y) < MIN_SERIES_LEN:
        raise ValueError(f"series length {len(y)} < minimum {MIN_SERIES_LEN}")

    candidates = []
    search = []
    for p, d, q in grid:
        w = np.diff(y, n=d) if d else y
        fit = _css_fit(w, p, q)
        if fit is None:
            continue
        ar, ma, c, resid = fit
        n_eff = len(resid)
        if n_eff < 1:
            continue
        rss = float(np.sum(resid**2))
        k = p + q + 1
        aic = 2 * k + n_eff * np.log(max(rss, RSS_FLOOR) / n_eff)
        search.append(((p, d, q), aic))
        candidates.append(((aic, p + q, d, p, q), (p, d, q), ar, ma, c, resid, aic))
    if not candidates:
        raise ValueError("no ARIMA candidate could be fitted")
    candidates.sort(key=lambda item: item[0])
    _, order, ar, ma, c, resid, aic = candidates[0]
    return ArimaModel(
        order=order, ar=ar, ma=ma, intercept=c,
        residuals=resid, aic=aic, search=tuple(search),
    )


def arima_forecast(model: ArimaModel, history: Sequence[float], steps: int) -> list[float]:
    """Recursive multi-step forecast continuing the (undifferenced) history.

    Future shocks are zero; in-sample shocks are reconstructed on the supplied
    history so the model can forecast any series, not just the one it was fit
    on.  steps=0 returns an empty list.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if steps == 0:
        return []
    y = np.asarray(history, dtype=float)
    p, d, q = model.order
    w = np.diff(y, n=d) if d else y.copy()
    if len(w) < max(p, q, 1):
        raise ValueError("history too short for the fitted orders")

    e = np.zeros(len(w))
    m = max(p, q)
    for t in range(m, len(w)):
        pred = model.intercept
        for i in range(p):
            pred += model.ar[i] * w[t - 1 - i]
        for j in range(q):
            pred += model.ma[j] * e[t - 1 - j]
        e[t] = w[t] - pred

    w_ext = list(w)
    e_ext = list(e)
    out_w = []
    for _ in range(steps):
        pred = model.intercept
        for i in range(p):
            pred += model.ar[i] * w_ext[-1 - i]
        for j in range(q):
            pred += model.ma[j] * e_ext[-1 - j]
        w_ext.append(pred)
        e_ext.append(0.0)
        out_w.append(pred)

    if d == 0:
        return [float(v) for v in out_w]
    # integrate the differenced forecasts back onto the last observed level
    level = float(y[-1])
    out = []
    for v in out_w:
        level += v
        out.append(level)
    return out


def forecast_to_beam_indices(values: Sequence[float], Q: int) -> list[int]:
    """Round to the nearest index (half away from zero) and clamp to [1, Q]."""
    out = []
    for v in values:
        q = int(np.floor(v + 0.5))
        out.append(min(max(q, 1), Q))
    return out


class ArimaPredictor(BeamPredictor):
    """Refits each stage on its own predictions from the previous periods plus
    the current measured optimum, then forecasts the whole coming period."""

    def __init__(self, Q: int, period_s: float, prediction_count: int,
                 window_periods: int = 4, grid=DEFAULT_GRID):
        self.Q = Q
        self.period_s = period_s
        self.count = prediction_count
        self.window = window_periods
        self.grid = grid
        self._past: list[list[int]] = []  # per-period predicted indices
        self._stage_time = 0.0
        self._beams: list[int] = []
        self._cs: CandidateSet | None = None

    def observe_stage(self, stage_time_s, pilots, candidate_set, measured_optimum):
        self._stage_time = stage_time_s
        self._cs = candidate_set
        series: list[float] = []
        for period in self._past[-self.window :]:
            series.extend(period)
        series.append(measured_optimum)

        if len(series) < MIN_SERIES_LEN:
            beams = [measured_optimum] * self.count  # bootstrap before history exists
        else:
            model = arima_fit(series, self.grid)
            beams = forecast_to_beam_indices(
                arima_forecast(model, series, self.count), self.Q
            )
        if candidate_set is not None:
            beams = [
                b if b in candidate_set.global_indices
                else nearest_in_set(b, candidate_set, self.Q)
                for b in beams
            ]
        self._beams = beams
        self._past.append(list(beams))

    def predict(self, query_time_s: float) -> PredictionOutput:
        if not self._beams:
            raise RuntimeError("predict called before any stage was observed")
        spacing = self.period_s / (self.count + 1)
        i = int(round((query_time_s - self._stage_time) / spacing)) - 1
        i = min(max(i, 0), self.count - 1)
        g = self._beams[i]
        probs = np.zeros(self.Q)
        probs[g - 1] = 1.0
        return PredictionOutput(
            time_s=query_time_s, probabilities=probs, local_index=g, global_index=g
        )
