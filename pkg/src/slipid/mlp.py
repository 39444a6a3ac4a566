"""Fully connected regressor written directly in numpy.

Rectified hidden layers, linear output, mean-squared error on standardized
targets, Adam updates.  Inputs and targets are standardized with statistics
taken from the training split and stored on the model, so ``forward`` maps
raw feature vectors to predictions in physical units.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import GaitDataset, GaitRecord

MODEL_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ModelFormatError(ValueError):
    pass


class Scenario(str, Enum):
    THREE_PARAM = "three-param"
    TWO_PARAM = "two-param"

    @property
    def output_names(self) -> tuple[str, ...]:
        return ("m", "k", "l0") if self is Scenario.THREE_PARAM else ("rho", "l0")


def build_targets(record: GaitRecord, scenario: Scenario) -> np.ndarray:
    p = record.params
    if Scenario(scenario) is Scenario.THREE_PARAM:
        return np.array([p.m, p.k, p.l0])
    return np.array([p.k / p.m, p.l0])


def dataset_targets(ds: GaitDataset, scenario: Scenario) -> np.ndarray:
    """Vectorized :func:`build_targets` over a whole dataset."""
    m, k, l0 = ds.column("m"), ds.column("k"), ds.column("l0")
    if Scenario(scenario) is Scenario.THREE_PARAM:
        return np.column_stack([m, k, l0])
    return np.column_stack([k / m, l0])


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]  # each (out, in)
    biases: list[np.ndarray]
    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    scenario: Scenario = Scenario.TWO_PARAM
    config: dict = field(default_factory=dict)

    @property
    def output_names(self) -> tuple[str, ...]:
        return Scenario(self.scenario).output_names

    def copy(self) -> MlpModel:
        return MlpModel(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.input_mean.copy(), self.input_std.copy(),
            self.target_mean.copy(), self.target_std.copy(),
            self.scenario, dict(self.config),
        )


def standardization_stats(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and stddev; constant columns get stddev 1."""
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def init_model(layer_dims, rng: np.random.Generator, **kw) -> MlpModel:
    """He-initialized weights, zero biases, identity standardization."""
    weights = [rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
               for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:])]
    biases = [np.zeros(n) for n in layer_dims[1:]]
    n_in, n_out = layer_dims[0], layer_dims[-1]
    return MlpModel(
        list(layer_dims), weights, biases,
        np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out), **kw,
    )


def _forward_std(weights, biases, z):
    """Returns the list of layer outputs; the last one is linear."""
    acts = [z]
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        a = acts[-1] @ w.T + b
        if i < last:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return acts


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != model.layer_dims[0]:
        raise ValueError(f"input has {xb.shape[1]} features, model expects {model.layer_dims[0]}")
    z = (xb - model.input_mean) / model.input_std
    out = _forward_std(model.weights, model.biases, z)[-1]
    y = out * model.target_std + model.target_mean
    return y[0] if single else y


def _loss_and_grads_std(weights, biases, z, t):
    acts = _forward_std(weights, biases, z)
    err = acts[-1] - t
    loss = float(np.mean(err**2))
    delta = 2.0 * err / err.size
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (acts[i] > 0)
    return loss, gw, gb


def loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """MSE over batch and outputs in standardized units, with exact gradients.

    Returns ``(loss, weight_grads, bias_grads)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != model.layer_dims[0] or y.shape[1] != model.layer_dims[-1] or len(x) != len(y):
        raise ValueError(f"batch shapes {x.shape}, {y.shape} do not fit layer_dims {model.layer_dims}")
    z = (x - model.input_mean) / model.input_std
    t = (y - model.target_mean) / model.target_std
    return _loss_and_grads_std(model.weights, model.biases, z, t)


def gradient_check(model: MlpModel, x: np.ndarray, y: np.ndarray, eps: float = 1e-6,
                   floor: float = 1e-4) -> float:
    """Max relative error of backprop gradients against central differences.

    Per entry the error is ``|g - g_fd| / max(|g|, |g_fd|, floor * max|g|)``.
    The floor keeps entries that sit at the difference quotient's round-off
    level (about ``1e-16 * loss / eps``) from dominating.
    """
    _, gw, gb = loss_and_grads(model, x, y)
    scale = max(float(np.abs(g).max()) for g in gw + gb)
    worst = 0.0
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for j in range(flat.size):
                keep = flat[j]
                flat[j] = keep + eps
                up = loss_and_grads(model, x, y)[0]
                flat[j] = keep - eps
                down = loss_and_grads(model, x, y)[0]
                flat[j] = keep
                fd = (up - down) / (2 * eps)
                denom = max(abs(gflat[j]), abs(fd), floor * scale, 1e-300)
                worst = max(worst, abs(gflat[j] - fd) / denom)
    return worst


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> AdamState:
        params = model.weights + model.biases
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(model: MlpModel, state: AdamState, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, in place.  ``grads`` is ``(weight_grads, bias_grads)``."""
    gw, gb = grads
    params = model.weights + model.biases
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for p, g, m, v in zip(params, list(gw) + list(gb), state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return model, state


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 1000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    scenario: Scenario = Scenario.TWO_PARAM
    hidden: tuple[int, ...] = (50,) * 7
    tolerance: float = 0.05

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        self.fractions = tuple(float(f) for f in self.fractions)
        self.hidden = tuple(int(h) for h in self.hidden)
        if len(self.fractions) != 3 or min(self.fractions) <= 0 or abs(sum(self.fractions) - 1) > 1e-9:
            raise ValueError(f"split fractions must be three positives summing to 1, got {self.fractions}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("epochs and batch_size must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.value
        d["fractions"] = list(self.fractions)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class Metrics:
    names: tuple[str, ...]
    mse: list[float]
    mae: list[float]
    r_squared: list[float | None]  # None when the actuals have zero variance
    tolerance_accuracy: float
    n: int
    history: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    best_epoch: int | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "best_epoch": self.best_epoch,
            "tolerance_accuracy": self.tolerance_accuracy,
            "outputs": {
                name: {"mse": self.mse[i], "mae": self.mae[i], "r_squared": self.r_squared[i]}
                for i, name in enumerate(self.names)
            },
        }


def r_squared(actual: np.ndarray, predicted: np.ndarray) -> float | None:
    actual = np.asarray(actual, dtype=float)
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        return None
    return 1.0 - float(np.sum((actual - np.asarray(predicted)) ** 2)) / ss_tot


def tolerance_accuracy(actual: np.ndarray, predicted: np.ndarray, tol: float = 0.05) -> float:
    """Fraction of rows whose every output is within ``tol`` relative error."""
    within = np.abs(predicted - actual) <= tol * np.abs(actual)
    return float(np.mean(np.all(within, axis=1))) if len(actual) else float("nan")


def split_indices(n: int, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded disjoint train/val/test index arrays covering ``range(n)``."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def evaluate(model: MlpModel, x: np.ndarray, y: np.ndarray, tol: float = 0.05):
    """Metrics in physical units plus ``{name: (actual, predicted)}`` pairs."""
    pred = forward(model, np.atleast_2d(x))
    y = np.atleast_2d(y)
    err = pred - y
    names = model.output_names
    metrics = Metrics(
        names=names,
        mse=[float(v) for v in np.mean(err**2, axis=0)],
        mae=[float(v) for v in np.mean(np.abs(err), axis=0)],
        r_squared=[r_squared(y[:, i], pred[:, i]) for i in range(y.shape[1])],
        tolerance_accuracy=tolerance_accuracy(y, pred, tol),
        n=len(y),
    )
    pairs = {name: (y[:, i].copy(), pred[:, i].copy()) for i, name in enumerate(names)}
    return metrics, pairs


def _epoch(model, state, z, t, rng, cfg):
    """One shuffled pass of minibatch Adam over standardized ``(z, t)``."""
    order = rng.permutation(len(z))
    for a in range(0, len(order), cfg.batch_size):
        b = order[a:a + cfg.batch_size]
        _, gw, gb = _loss_and_grads_std(model.weights, model.biases, z[b], t[b])
        adam_step(model, state, (gw, gb), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


def fit(ds: GaitDataset, cfg: TrainConfig):
    """Train on every record with no split or model selection.

    Capacity check: returns ``(model, losses)`` with the standardized
    training mse after each epoch.  The model is the one from the epoch with
    the lowest training loss, the analogue of best-validation selection in
    :func:`train`; near zero loss Adam's normalized steps make later epochs
    spike.
    """
    x = ds.features
    y = dataset_targets(ds, cfg.scenario)
    rng = np.random.default_rng(cfg.seed)
    model = init_model([x.shape[1], *cfg.hidden, y.shape[1]], rng, scenario=cfg.scenario)
    model.input_mean, model.input_std = standardization_stats(x)
    model.target_mean, model.target_std = standardization_stats(y)
    model.config = {"train": cfg.to_dict(), "n_records": len(ds), "split": False}
    z = (x - model.input_mean) / model.input_std
    t = (y - model.target_mean) / model.target_std
    state = AdamState.zeros_like(model)
    losses = []
    best, best_loss = model.copy(), math.inf
    for epoch in range(1, cfg.epochs + 1):
        _epoch(model, state, z, t, rng, cfg)
        loss = float(np.mean((_forward_std(model.weights, model.biases, z)[-1] - t) ** 2))
        if not math.isfinite(loss):
            raise TrainingError(f"training diverged at epoch {epoch}", epoch)
        losses.append(loss)
        if loss < best_loss:
            best, best_loss = model.copy(), loss
            best.config["best_epoch"] = epoch
    return best, losses


def train(ds: GaitDataset, cfg: TrainConfig, log=None):
    """Train on the seeded split and return ``(model, test_metrics)``.

    The returned model is the one from the epoch with lowest validation
    loss.  ``test_metrics.history`` holds one
    ``(epoch, train_loss, val_loss, train_acc, val_acc)`` row per epoch.
    ``log``, if given, is called as ``log(row)`` after each epoch.
    """
    x_all = ds.features
    y_all = dataset_targets(ds, cfg.scenario)
    tr, va, te = split_indices(len(ds), cfg.fractions, cfg.seed)
    if min(len(tr), len(va), len(te)) == 0:
        raise ValueError(f"dataset of {len(ds)} records leaves an empty split")

    rng = np.random.default_rng(cfg.seed)
    dims = [x_all.shape[1], *cfg.hidden, y_all.shape[1]]
    model = init_model(dims, rng, scenario=cfg.scenario)
    model.input_mean, model.input_std = standardization_stats(x_all[tr])
    model.target_mean, model.target_std = standardization_stats(y_all[tr])
    model.config = {"train": cfg.to_dict(), "n_records": len(ds)}

    def std(idx):
        return ((x_all[idx] - model.input_mean) / model.input_std,
                (y_all[idx] - model.target_mean) / model.target_std)

    z_tr, t_tr = std(tr)
    z_va, t_va = std(va)
    state = AdamState.zeros_like(model)

    def loss_acc(z, t, y):
        out = _forward_std(model.weights, model.biases, z)[-1]
        loss = float(np.mean((out - t) ** 2))
        pred = out * model.target_std + model.target_mean
        return loss, tolerance_accuracy(y, pred, cfg.tolerance)

    history = []
    best, best_loss, best_epoch = model.copy(), math.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        _epoch(model, state, z_tr, t_tr, rng, cfg)
        train_loss, train_acc = loss_acc(z_tr, t_tr, y_all[tr])
        val_loss, val_acc = loss_acc(z_va, t_va, y_all[va])
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(f"training diverged at epoch {epoch}", epoch)
        row = (epoch, train_loss, val_loss, train_acc, val_acc)
        history.append(row)
        if log is not None:
            log(row)
        if val_loss < best_loss:
            best, best_loss, best_epoch = model.copy(), val_loss, epoch

    metrics, _ = evaluate(best, x_all[te], y_all[te], cfg.tolerance)
    metrics.history = history
    metrics.best_epoch = best_epoch
    best.config["best_epoch"] = best_epoch
    return best, metrics


def held_out_split(model: MlpModel, ds: GaitDataset):
    """The test split the model was trained against, as ``(x, y)``."""
    cfg = model.config["train"]
    if model.config.get("n_records") != len(ds):
        raise ValueError(f"model was trained on {model.config.get('n_records')} records, dataset has {len(ds)}")
    _, _, te = split_indices(len(ds), cfg["fractions"], cfg["seed"])
    return ds.features[te], dataset_targets(ds, model.scenario)[te]


def save_model(model: MlpModel, path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "scenario": Scenario(model.scenario).value,
        "output_names": list(model.output_names),
        "layer_dims": list(model.layer_dims),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "input_stats": {"mean": model.input_mean.tolist(), "std": model.input_std.tolist()},
        "target_stats": {"mean": model.target_mean.tolist(), "std": model.target_std.tolist()},
        "seed": model.config.get("train", {}).get("seed"),
        "config": model.config,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> MlpModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not a model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported model format version {doc.get('format_version')!r}")
    return MlpModel(
        layer_dims=doc["layer_dims"],
        weights=[np.array(w, dtype=float) for w in doc["weights"]],
        biases=[np.array(b, dtype=float) for b in doc["biases"]],
        input_mean=np.array(doc["input_stats"]["mean"]),
        input_std=np.array(doc["input_stats"]["std"]),
        target_mean=np.array(doc["target_stats"]["mean"]),
        target_std=np.array(doc["target_stats"]["std"]),
        scenario=Scenario(doc["scenario"]),
        config=doc["config"],
    )


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        for epoch, *vals in history:
            w.writerow([epoch, *(repr(float(v)) for v in vals)])


def write_scatter(pairs, directory) -> list:
    """One ``actual,predicted`` CSV per output; returns the paths written."""
    paths = []
    for name, (actual, predicted) in pairs.items():
        path = Path(directory) / f"scatter_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["actual", "predicted"])
            w.writerows(zip(map(repr, map(float, actual)), map(repr, map(float, predicted))))
        paths.append(path)
    return paths
