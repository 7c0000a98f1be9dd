"""Loss, learning-rate schedule, Adam, and the train / evaluate loops."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, NumericalError
from .graph import NetworkGraph
from .metrics import MetricReport, PredictionRecord, report_from_records
from .predictor import Model, PreparedGraph

log = logging.getLogger(__name__)

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass
class TrainConfig:
    peak_lr: float = 1e-3
    warmup_fraction: float = 0.10
    batch_size: int = 16
    epochs: int = 50
    seed: int = 0
    block_kind: str = "graph"
    task: str = "latency"

    def __post_init__(self) -> None:
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigurationError("warmup_fraction must lie strictly between 0 and 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.peak_lr <= 0:
            raise ConfigurationError("peak_lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error between a B x 1 prediction column and ``target``."""
    y = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    if pred.rows == 0 or y.shape[0] == 0:
        raise ConfigurationError("mse_loss: empty batch")
    if pred.shape != y.shape:
        raise ConfigurationError(f"mse_loss: predictions {pred.shape} vs targets {y.shape}")
    return ad.mean_all(ad.square(ad.sub(pred, ad.constant(y))))


def lr_at(step: int, total_steps: int, peak_lr: float = 1e-3, warmup_fraction: float = 0.10) -> float:
    """Linear warm-up from 0 to ``peak_lr`` over the first ``warmup_fraction`` of
    ``total_steps``, then linear decay to 0 at ``total_steps``."""
    if total_steps <= 0:
        raise ConfigurationError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ConfigurationError(f"step {step} outside [0, {total_steps}]")
    warm = warmup_fraction * total_steps
    if step <= warm:
        return peak_lr * step / warm
    return peak_lr * (total_steps - step) / (total_steps - warm)


class Adam:
    """Adam with bias correction; moments keyed by parameter name."""

    def __init__(self, beta1: float = BETA1, beta2: float = BETA2, eps: float = ADAM_EPS):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], lr: float) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ConfigurationError(f"gradient shape {g.shape} != parameter {name!r} shape {p.data.shape}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "m": self.m, "v": self.v}

    def load_state_dict(self, d: dict) -> None:
        self.t = int(d["t"])
        self.beta1, self.beta2, self.eps = float(d["beta1"]), float(d["beta2"]), float(d["eps"])
        self.m = {k: np.array(v, dtype=np.float64) for k, v in d["m"].items()}
        self.v = {k: np.array(v, dtype=np.float64) for k, v in d["v"].items()}


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: Adam, lr: float) -> None:
    state.step(params, grads, lr)


# ---------------------------------------------------------------------------


def graph_loss_and_grads(model: Model, pg: PreparedGraph, params: Mapping[str, Tensor]):
    """Squared error of one graph on its own tape; returns ``(loss, grads)``."""
    y = pg.target / model.config.target_scale
    with ad.Tape() as tape:
        loss = mse_loss(model.forward(pg), [y])
    return loss.item(), ad.backward(tape, loss, params.values())


def batch_gradients(model: Model, batch: Sequence[PreparedGraph]):
    """Average of per-graph gradients, reduced in batch order."""
    params = model.parameters()
    total = {k: np.zeros_like(t.data) for k, t in params.items()}
    loss_sum = 0.0
    for pg in batch:
        loss, grads = graph_loss_and_grads(model, pg, params)
        loss_sum += loss
        for k, g in grads.items():
            total[k] += g
    n = len(batch)
    return loss_sum / n, {k: g / n for k, g in total.items()}


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    val_metric: Optional[float] = None


@dataclass
class TrainResult:
    model: Model
    history: List[EpochRecord]
    optimizer: Adam
    rng: np.random.Generator
    steps: int
    best_state: Optional[Dict[str, np.ndarray]] = None
    best_epoch: Optional[int] = None


HISTORY_COLUMNS = ("epoch", "loss", "lr")


def history_csv(history: Sequence[EpochRecord]) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    lines += [f"{h.epoch},{h.loss!r},{h.lr!r}" for h in history]
    return "\n".join(lines) + "\n"


def _validation_score(model: Model, val: Sequence[PreparedGraph]) -> float:
    """Lower is better: MAPE for latency, -tau for accuracy."""
    rep = evaluate_prepared(model, val)
    return rep.mape if rep.task == "latency" else -rep.kendall_tau


def train(
    dataset: Sequence[NetworkGraph],
    model: Model,
    cfg: TrainConfig,
    val: Optional[Sequence[NetworkGraph]] = None,
    on_divergence: Optional[Callable[[TrainResult], None]] = None,
    log_every: int = 0,
) -> TrainResult:
    """Mini-batch Adam with the warm-up/linear-decay schedule.

    Each epoch reshuffles with the seeded generator.  If the loss turns
    non-finite, parameters are rolled back to the last good step,
    ``on_divergence`` (e.g. a checkpoint writer) is called, and
    :class:`NumericalError` is raised.
    """
    if not dataset:
        raise ConfigurationError("train: empty dataset")
    if cfg.task != model.config.task:
        raise ConfigurationError(f"train config task {cfg.task!r} != model task {model.config.task!r}")
    missing = [g.id for g in dataset if g.target is None]
    if missing:
        raise ConfigurationError(f"graphs without targets: {missing[:5]}")

    prepared = [model.prepare(g) for g in dataset]
    val_prepared = [model.prepare(g) for g in val] if val else None
    params = model.parameters()
    opt = Adam()
    rng = np.random.default_rng(cfg.seed)
    n = len(prepared)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = per_epoch * cfg.epochs
    result = TrainResult(model, [], opt, rng, 0)
    best_score = math.inf

    step = 0
    good = model.state()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        lr = 0.0
        for b in range(per_epoch):
            batch = [prepared[i] for i in order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            loss, grads = batch_gradients(model, batch)
            if not math.isfinite(loss):
                # current parameters came from the update that broke things
                model.load_state(good)
                result.steps = step
                if on_divergence is not None:
                    on_divergence(result)
                raise NumericalError(f"loss became {loss} at epoch {epoch}, step {step}")
            lr = lr_at(step, total, cfg.peak_lr, cfg.warmup_fraction)
            good = model.state()
            opt.step(params, grads, lr)
            step += 1
            losses.append(loss * len(batch))
        rec = EpochRecord(epoch, float(sum(losses) / n), lr)
        if val_prepared:
            rec.val_metric = _validation_score(model, val_prepared)
            if rec.val_metric < best_score:
                best_score = rec.val_metric
                result.best_state, result.best_epoch = model.state(), epoch
        result.history.append(rec)
        if log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            log.info("epoch %d loss %.6g lr %.3g val %s", epoch, rec.loss, lr, rec.val_metric)
    result.steps = step
    return result


def predict_records(model: Model, prepared: Sequence[PreparedGraph]) -> List[PredictionRecord]:
    scale = model.config.target_scale
    out = []
    for pg in prepared:
        pred = model.forward(pg).item() * scale
        if not math.isfinite(pred):
            raise NumericalError(f"non-finite prediction for graph {pg.id!r}")
        out.append(PredictionRecord(pg.id, pred, float(pg.target)))
    return out


def evaluate_prepared(model: Model, prepared: Sequence[PreparedGraph]) -> MetricReport:
    if not prepared:
        raise ConfigurationError("evaluate: empty dataset")
    return report_from_records(predict_records(model, prepared), model.config.task)


def evaluate(model: Model, dataset: Sequence[NetworkGraph], task: Optional[str] = None) -> MetricReport:
    """MAPE / Acc(5%) / Acc(10%) for latency, Kendall's tau for accuracy."""
    task = task or model.config.task
    if task != model.config.task:
        raise ConfigurationError(f"model task {model.config.task!r} cannot be evaluated as {task!r}")
    if not dataset:
        raise ConfigurationError("evaluate: empty dataset")
    return evaluate_prepared(model, [model.prepare(g) for g in dataset])
