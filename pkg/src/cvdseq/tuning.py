"""Hyperparameter search: Gaussian-process Bayesian optimization.

A small, fully deterministic loop: quasi-random (Sobol) starts, then a
squared-exponential GP fit on the unit hypercube with a single shared
length scale chosen by marginal likelihood on a grid, and expected
improvement maximized over a fixed set of seeded candidates. The trial
history is append-only JSONL so interrupted searches can resume.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf
from scipy.stats import qmc

from .errors import ConfigError, DataError, NumericError

log = logging.getLogger(__name__)

GP_NOISE = 1e-4
GP_JITTER = 1e-8
N_CANDIDATES = 1024
N_RANDOM_STARTS = 5
LENGTH_SCALE_GRID = np.geomspace(0.05, 2.0, 25)


@dataclass(frozen=True)
class Dimension:
    """One searchable hyperparameter, mapped from the unit interval."""

    name: str
    low: float
    high: float
    scale: str = "linear"
    integer: bool = False

    def __post_init__(self) -> None:
        if not (self.low < self.high):
            raise ConfigError(f"dimension {self.name!r}: lower bound must be below upper")
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"dimension {self.name!r}: scale must be linear or log")
        if self.scale == "log" and self.low <= 0:
            raise ConfigError(f"dimension {self.name!r}: log scale needs positive bounds")

    def to_value(self, u: float):
        u = min(max(float(u), 0.0), 1.0)
        if self.scale == "log":
            value = math.exp(math.log(self.low) + u * (math.log(self.high) - math.log(self.low)))
        else:
            value = self.low + u * (self.high - self.low)
        if self.integer:
            return int(min(max(round(value), math.ceil(self.low)), math.floor(self.high)))
        return value

    def to_unit(self, value) -> float:
        if self.scale == "log":
            return (math.log(value) - math.log(self.low)) / (math.log(self.high) - math.log(self.low))
        return (value - self.low) / (self.high - self.low)


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple[Dimension, ...]

    def __post_init__(self) -> None:
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate dimension names")
        if not self.dimensions:
            raise ConfigError("empty search space")

    @property
    def n_dims(self) -> int:
        return len(self.dimensions)

    def to_config(self, point) -> dict:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.n_dims,):
            raise DataError("point does not match the search space dimensionality")
        return {d.name: d.to_value(u) for d, u in zip(self.dimensions, point)}


def default_gru_space() -> SearchSpace:
    return SearchSpace((
        Dimension("n_hidden", 8, 64, integer=True),
        Dimension("n_days_pad", 10, 50, integer=True),
        Dimension("learning_rate", 1e-4, 1e-2, scale="log"),
        Dimension("batch_size", 16, 64, integer=True),
    ))


def default_lr_space() -> SearchSpace:
    return SearchSpace((
        Dimension("lam", 1e-5, 1e-1, scale="log"),
    ))


@dataclass
class Trial:
    point: tuple[float, ...]
    value: float | None
    config: dict
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.value is not None


@dataclass
class TrialHistory:
    trials: list[Trial] = field(default_factory=list)

    def append(self, trial: Trial) -> None:
        point = np.asarray(trial.point, dtype=float)
        if np.any(point < 0.0) or np.any(point > 1.0):
            raise DataError("trial point outside the unit hypercube")
        if trial.value is not None and not math.isfinite(trial.value):
            raise DataError("trial objective must be finite")
        self.trials.append(trial)

    def __len__(self) -> int:
        return len(self.trials)

    def successes(self) -> list[Trial]:
        return [t for t in self.trials if t.ok]

    def best(self) -> Trial:
        good = self.successes()
        if not good:
            raise DataError("history holds no successful trials")
        return max(good, key=lambda t: t.value)


def _sobol_point(n_dims: int, seed: int, index: int) -> np.ndarray:
    """The index-th point of the seeded Sobol sequence, regenerated from
    scratch so suggestion i never depends on how many times the sampler
    object was used before."""
    sampler = qmc.Sobol(d=n_dims, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # balance properties are irrelevant when indexing into the sequence
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(index + 1)[-1]


def _candidate_points(n_dims: int, seed: int, n_history: int) -> np.ndarray:
    cseed = int(np.random.SeedSequence([seed, 7919, n_history]).generate_state(1)[0])
    return qmc.Sobol(d=n_dims, scramble=True, seed=cseed).random(N_CANDIDATES)


@dataclass
class GpModel:
    x: np.ndarray
    alpha: np.ndarray
    chol: np.ndarray
    length_scale: float
    y_mean: float
    y_std: float


def _kernel(a: np.ndarray, b: np.ndarray, ell: float) -> np.ndarray:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-0.5 * d2 / (ell * ell))


def fit_gp(x: np.ndarray, y: np.ndarray) -> GpModel:
    """Squared-exponential GP on standardized targets; the single length
    scale maximizes the log marginal likelihood over a fixed grid."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        raise NumericError("cannot fit a GP to constant objective values")
    z = (y - y_mean) / y_std
    n = len(z)
    best = None
    for ell in LENGTH_SCALE_GRID:
        k = _kernel(x, x, ell) + (GP_NOISE + GP_JITTER) * np.eye(n)
        chol = np.linalg.cholesky(k)
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, z))
        lml = (
            -0.5 * float(z @ alpha)
            - float(np.log(np.diag(chol)).sum())
            - 0.5 * n * math.log(2.0 * math.pi)
        )
        if best is None or lml > best[0]:
            best = (lml, ell, chol, alpha)
    _, ell, chol, alpha = best
    return GpModel(x=x, alpha=alpha, chol=chol, length_scale=float(ell),
                   y_mean=y_mean, y_std=y_std)


def gp_posterior(model: GpModel, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points, in objective units."""
    xq = np.asarray(xq, dtype=float)
    ks = _kernel(xq, model.x, model.length_scale)
    mu = ks @ model.alpha
    v = np.linalg.solve(model.chol, ks.T)
    var = 1.0 + GP_NOISE - (v * v).sum(axis=0)
    var = np.maximum(var, 0.0)
    return mu * model.y_std + model.y_mean, var * model.y_std ** 2


def ei_closed_form(mu: np.ndarray, sigma: np.ndarray, best_value: float) -> np.ndarray:
    """E[max(f - best, 0)] for normal f; zero-variance points collapse to
    the deterministic improvement max(mu - best, 0)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    imp = mu - best_value
    out = np.maximum(imp, 0.0)
    live = sigma > 1e-12
    z = imp[live] / sigma[live]
    cdf = 0.5 * (1.0 + erf(z / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out[live] = imp[live] * cdf + sigma[live] * pdf
    return out


def expected_improvement(model: GpModel, xq: np.ndarray, best_value: float) -> np.ndarray:
    mu, var = gp_posterior(model, xq)
    return ei_closed_form(mu, np.sqrt(var), best_value)


def suggest_next(history: TrialHistory, space: SearchSpace, seed: int) -> np.ndarray:
    """Next point to evaluate, in the unit hypercube."""
    good = history.successes()
    index = len(history)
    if len(good) < N_RANDOM_STARTS:
        return _sobol_point(space.n_dims, seed, index)
    values = np.array([t.value for t in good])
    if values.min() == values.max():
        log.info("degenerate trial history (all objectives equal); "
                 "falling back to a quasi-random point")
        return _sobol_point(space.n_dims, seed, index)
    x = np.array([t.point for t in good], dtype=float)
    model = fit_gp(x, values)
    candidates = _candidate_points(space.n_dims, seed, index)
    ei = expected_improvement(model, candidates, float(values.max()))
    return candidates[int(np.argmax(ei))]


def trial_to_json_obj(trial: Trial) -> dict:
    return {
        "point": list(trial.point),
        "value": trial.value,
        "config": trial.config,
        "error": trial.error,
    }


def trial_from_json_obj(obj: dict) -> Trial:
    return Trial(
        point=tuple(float(u) for u in obj["point"]),
        value=obj["value"],
        config=dict(obj["config"]),
        error=obj.get("error"),
    )


def append_trial_jsonl(path, trial: Trial) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(trial_to_json_obj(trial), sort_keys=True))
        fh.write("\n")


def load_history_jsonl(path) -> TrialHistory:
    history = TrialHistory()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    history.append(trial_from_json_obj(json.loads(line)))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot read trial history {path}: {exc}") from exc
    return history


def tune(space: SearchSpace, budget: int, objective, seed: int = 0,
         history_path=None, history: TrialHistory | None = None) -> tuple[dict, TrialHistory]:
    """Suggest-evaluate loop. The objective receives a config dict and
    returns the validation objective (higher is better); an objective
    that raises, or returns a non-finite value, marks its trial failed
    and the search continues without it.
    """
    if budget < 1:
        raise ConfigError("budget must be at least 1")
    if history is None:
        history = TrialHistory()
    for _ in range(budget):
        point = suggest_next(history, space, seed)
        config = space.to_config(point)
        value: float | None
        error = None
        try:
            value = float(objective(config))
            if not math.isfinite(value):
                value, error = None, "non-finite objective"
        except Exception as exc:  # noqa: BLE001 — trial isolation is the contract
            value, error = None, f"{type(exc).__name__}: {exc}"
        trial = Trial(point=tuple(float(u) for u in point), value=value,
                      config=config, error=error)
        history.append(trial)
        if error is not None:
            log.warning("trial failed (%s); continuing", error)
        if history_path is not None:
            append_trial_jsonl(history_path, trial)
    return history.best().config, history
