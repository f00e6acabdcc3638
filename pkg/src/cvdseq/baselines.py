"""Reference predictors: linear hazard risk score and L1 logistic regression.

The hazard score is the classical survival-form risk
    risk = 1 - S0 ** exp(sum_j beta_j * (x_j - center_j))
computed from unscaled index-day clinical values. The sparse logistic
baseline concatenates a window of k history rows into one flat feature
vector and trains with proximal gradient descent, so zero weights are
exact and a stationarity certificate is checkable after training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .numerics import sigmoid
from .records import CONTINUOUS_MODALITIES, PatientRecord, PatientSequence, sex_to_value

#: Stationarity residual below which proximal training stops.
STATIONARITY_TOL = 1e-6
MAX_PROX_ITERS = 10_000


@dataclass(frozen=True)
class HazardScoreConfig:
    """Coefficients, centering values, and baseline survival for the score."""

    coefficients: dict[str, float]
    baseline_survival: float
    centering: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.baseline_survival < 1.0:
            raise ConfigError(
                f"baseline survival must lie in (0,1), got {self.baseline_survival}"
            )

    @classmethod
    def default(cls) -> "HazardScoreConfig":
        with resources.files("cvdseq.data").joinpath("hazard_score_default.json").open(
            "r", encoding="utf-8"
        ) as fh:
            return cls.from_json_obj(json.load(fh))

    @classmethod
    def from_json_obj(cls, doc: Mapping) -> "HazardScoreConfig":
        try:
            return cls(
                coefficients={str(k): float(v) for k, v in doc["coefficients"].items()},
                baseline_survival=float(doc["baseline_survival"]),
                centering={str(k): float(v) for k, v in doc.get("centering", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad hazard score config: {exc}") from exc

    def to_json_obj(self) -> dict:
        return {
            "schema_version": 1,
            "coefficients": dict(sorted(self.coefficients.items())),
            "baseline_survival": self.baseline_survival,
            "centering": dict(sorted(self.centering.items())),
        }


def qrisk_score(features: Mapping[str, float], config: HazardScoreConfig) -> float:
    """Risk from unscaled index-day values; unknown features contribute 0."""
    eta = 0.0
    for name, beta in config.coefficients.items():
        if name in features:
            eta += beta * (features[name] - config.centering.get(name, 0.0))
    return 1.0 - config.baseline_survival ** np.exp(eta)


def index_day_features(record: PatientRecord, index_day: int) -> dict[str, float]:
    """Unscaled clinical values observed on the index day, plus age and sex.

    Continuous variables with several same-day readings contribute their
    median; variables not observed that day are simply absent (the score
    treats them as zero-contribution).
    """
    values: dict[str, list[float]] = {}
    for e in record.events:
        if e.day == index_day and e.modality in CONTINUOUS_MODALITIES and e.value is not None:
            values.setdefault(e.code, []).append(e.value)
    out = {name: float(np.median(v)) for name, v in values.items()}
    out["age"] = record.age_on(index_day)
    out["sex"] = sex_to_value(record.sex)
    return out


def concat_history(sequence: PatientSequence, k: int) -> np.ndarray:
    """Flatten the k most recent real rows, oldest first, zero front-pad."""
    if k < 1:
        raise ConfigError(f"history window must be >= 1, got {k}")
    real = sequence.matrix[sequence.mask.astype(bool)]
    recent = real[-k:]
    n_features = sequence.matrix.shape[1]
    if recent.shape[0] < k:
        recent = np.vstack([np.zeros((k - recent.shape[0], n_features)), recent])
    return recent.reshape(-1)


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    """Proximal operator of t * |.|: shrink toward zero, clamp at zero."""
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


@dataclass
class SparseLinearModel:
    weights: np.ndarray
    intercept: float
    lam: float
    history_window: int
    n_iter: int = 0
    residual: float = np.inf

    def to_params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights.copy(), "intercept": np.array([self.intercept])}

    def meta(self) -> dict:
        return {
            "lambda": self.lam,
            "history_window": self.history_window,
            "n_iter": self.n_iter,
            "residual": self.residual,
        }

    @classmethod
    def from_params(cls, params: Mapping[str, np.ndarray], meta: Mapping) -> "SparseLinearModel":
        return cls(
            weights=np.asarray(params["weights"], dtype=float),
            intercept=float(np.asarray(params["intercept"]).reshape(-1)[0]),
            lam=float(meta["lambda"]),
            history_window=int(meta["history_window"]),
            n_iter=int(meta.get("n_iter", 0)),
            residual=float(meta.get("residual", np.inf)),
        )


def _power_iteration_lmax(Xa: np.ndarray, seed: int) -> float:
    """Largest eigenvalue of Xa^T Xa via power iteration on matvecs."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=Xa.shape[1])
    v /= np.linalg.norm(v)
    lmax = 0.0
    for _ in range(500):
        w = Xa.T @ (Xa @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        lmax_new = float(v_new @ (Xa.T @ (Xa @ v_new)))
        if abs(lmax_new - lmax) <= 1e-12 * max(1.0, lmax_new):
            return lmax_new
        v, lmax = v_new, lmax_new
    return lmax


def _residual_from_grad(g: np.ndarray, gb: float, weights: np.ndarray, lam: float) -> float:
    at_zero = weights == 0.0
    res_zero = np.maximum(np.abs(g[at_zero]) - lam, 0.0)
    res_active = np.abs(g[~at_zero] + lam * np.sign(weights[~at_zero]))
    parts = [abs(gb)]
    if res_zero.size:
        parts.append(float(res_zero.max()))
    if res_active.size:
        parts.append(float(res_active.max()))
    return max(parts)


def stationarity_residual(weights: np.ndarray, intercept: float, X: np.ndarray,
                          y: np.ndarray, lam: float) -> float:
    """Max violation of the L1 first-order conditions (0 at an exact optimum).

    For w_j = 0 the smooth gradient must lie within [-lam, lam]; otherwise
    g_j + lam * sign(w_j) must vanish. The unpenalized intercept gradient
    must vanish outright.
    """
    n = X.shape[0]
    p = sigmoid(X @ weights + intercept)
    g = X.T @ (p - y) / n
    gb = float(np.sum(p - y) / n)
    return _residual_from_grad(g, gb, weights, lam)


def logreg_train(X: np.ndarray, y: np.ndarray, lam: float, seed: int = 0,
                 history_window: int = 1) -> SparseLinearModel:
    """L1-penalized logistic regression by proximal gradient descent.

    Minimizes mean BCE + lam * sum|w_j| (intercept unpenalized) with fixed
    step 1/L, where L bounds the smooth part's curvature via the largest
    eigenvalue of the intercept-augmented Gram matrix over 4n. Stops when
    the stationarity residual drops below STATIONARITY_TOL.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"design/label shape mismatch: X {X.shape}, y {y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite entries in training data")
    if lam < 0:
        raise ConfigError(f"L1 strength must be >= 0, got {lam}")

    n, d = X.shape
    # Intercept column included so one step size covers every coordinate.
    Xa = np.hstack([X, np.ones((n, 1))])
    lmax = _power_iteration_lmax(Xa, seed)
    L = max(lmax / (4.0 * n), 1e-12)
    step = 1.0 / L

    w = np.zeros(d)
    b = 0.0
    it = 0
    while True:
        p = sigmoid(X @ w + b)
        g = X.T @ (p - y) / n
        gb = float(np.sum(p - y) / n)
        residual = _residual_from_grad(g, gb, w, lam)
        if residual < STATIONARITY_TOL or it >= MAX_PROX_ITERS:
            break
        it += 1
        w = soft_threshold(w - step * g, step * lam)
        b -= step * gb
    return SparseLinearModel(w, b, lam, history_window, n_iter=it, residual=residual)


def logreg_predict(model: SparseLinearModel, x) -> float | np.ndarray:
    """sigmoid(w.x + b); accepts one vector or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.weights.shape[0]:
        raise DataError(
            f"feature length {x.shape[-1]} does not match model ({model.weights.shape[0]})"
        )
    z = x @ model.weights + model.intercept
    out = sigmoid(z)
    return float(out) if x.ndim == 1 else out
