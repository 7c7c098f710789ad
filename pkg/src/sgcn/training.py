"""Full-batch training: forward pass, Adam, early stopping, gradient checks."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensorgrad as tg
from .evaluation import accuracy, f1_scores
from .graphstore import CappedNeighbors, Graph, neighbor_cap_view
from .independence import independence_loss
from .objectives import TaskOutput, multi_label_loss, output_head, semi_supervised_loss
from .routing import EdgeIndex, ModelParams, RoutingConfig, forward_disentangled
from .semantics import build_path_adjacency_capped, build_path_adjacency_dense, harden, semantic_aggregate
from .tensorgrad import Tape, Tensor

log = logging.getLogger(__name__)

WEIGHT_NAMES = ("W", "w", "W_y", "w_key")


class DivergenceError(RuntimeError):
    def __init__(self, message: str, report: "TrainReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    l2_coefficient: float = 5e-4
    max_epochs: int = 1000
    patience: int = 50
    lam: float = 1.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    task: str = "single-label"
    C: int = 8
    paths: str = "capped"
    shared_projection: bool = True
    multilabel_verbatim: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0 or self.l2_coefficient < 0 or self.lam < 0:
            raise ValueError("learning_rate must be > 0; l2_coefficient and lambda >= 0")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if self.task not in ("single-label", "multi-label"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.paths not in ("capped", "dense"):
            raise ValueError(f"paths must be 'capped' or 'dense', got {self.paths!r}")
        if self.C < 0:
            raise ValueError("C must be >= 0")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_metric: float
    val_loss: float
    val_metric: float


@dataclass
class TrainReport:
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val_metric: float = 0.0
    test_metrics: dict[str, float] = field(default_factory=dict)
    wall_seconds: float = 0.0
    config: dict = field(default_factory=dict)
    logits: np.ndarray | None = None
    stopped_early: bool = False

    def lines(self) -> list[str]:
        out = [f"epoch={e.epoch} train_loss={e.train_loss!r} train_metric={e.train_metric!r} "
               f"val_loss={e.val_loss!r} val_metric={e.val_metric!r}" for e in self.epochs]
        out.append(f"best_epoch={self.best_epoch} best_val_metric={self.best_val_metric!r}")
        return out


# ----------------------------------------------------------------- model


def init_params(config: RoutingConfig, seed: int, d_in: int, num_classes: int,
                shared_projection: bool = True) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out, cols=None):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-limit, limit, (fan_in, cols or fan_out)), requires_grad=True)

    delta = config.delta
    # each W_k block is drawn with its own d_in x delta fan
    W = glorot(d_in, delta, config.d_out)
    params = ModelParams(
        W=W,
        b=Tensor(np.zeros(config.d_out), requires_grad=True),
        w=glorot(delta, delta),
        W_y=glorot(config.d_out, num_classes),
        b_y=Tensor(np.zeros(num_classes), requires_grad=True),
    )
    if not shared_projection:
        params.w_key = glorot(delta, delta)
    return params


@dataclass
class ForwardResult:
    logits: Tensor
    L_i: Tensor
    paths: object
    h: Tensor
    z_first: Tensor


class Model:
    """Binds a graph and configuration to the full forward pass.

    The neighbor cap view is drawn once per model so the capped path
    enumeration only changes through the hard factor assignments.
    """

    def __init__(self, graph: Graph, routing: RoutingConfig, train: TrainConfig):
        self.graph = graph
        self.routing = routing
        self.train_config = train
        self.edges = EdgeIndex(graph)
        self.view: CappedNeighbors | None = None
        if train.C > 0 and train.paths == "capped":
            self.view = neighbor_cap_view(graph, train.C, train.seed)

    def build_paths(self, p_last):
        if self.train_config.C == 0:
            return None
        A = harden(p_last)
        if self.train_config.paths == "dense":
            return build_path_adjacency_dense(A, self.graph)
        return build_path_adjacency_capped(A, self.graph, self.train_config.C, view=self.view)

    def forward(self, params: ModelParams, training: bool, rng) -> ForwardResult:
        out = forward_disentangled(self.graph, params, self.routing, training, rng, edges=self.edges)
        L_i = independence_loss(out.z_first, params.w, self.routing.K, params.w_key)
        paths = self.build_paths(out.p_last)
        y = semantic_aggregate(out.h, out.z_last, paths)
        logits = output_head(y, params.W_y, params.b_y)
        return ForwardResult(logits, L_i, paths, out.h, out.z_first)

    def loss(self, result: ForwardResult, nodes) -> Tensor:
        cfg = self.train_config
        if cfg.task == "multi-label":
            return multi_label_loss(result.logits, self.graph.labels, nodes, result.L_i, cfg.lam,
                                    verbatim=cfg.multilabel_verbatim)
        return semi_supervised_loss(result.logits, self.graph.labels, nodes, result.L_i, cfg.lam)

    def metric(self, logits: np.ndarray, nodes) -> float:
        out = TaskOutput(logits, self.train_config.task == "multi-label")
        if out.multilabel:
            return f1_scores(out.predictions, self.graph.labels, nodes)[1]
        return accuracy(out.predictions, self.graph.labels, nodes)

    def test_metrics(self, logits: np.ndarray) -> dict[str, float]:
        nodes = self.graph.test
        if len(nodes) == 0:
            return {}
        out = TaskOutput(logits, self.train_config.task == "multi-label")
        if out.multilabel:
            macro, micro = f1_scores(out.predictions, self.graph.labels, nodes)
            return {"test_macro_f1": macro, "test_micro_f1": micro}
        return {"test_acc": accuracy(out.predictions, self.graph.labels, nodes)}


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig) -> tuple[ModelParams, AdamState]:
    """Bias-corrected Adam with L2 weight decay on weight matrices (not biases).

    Updates ``params`` in place and returns it with the advanced state.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient for {name}")
    state.step += 1
    t = state.step
    for name, tensor in params.named().items():
        g = grads.get(name)
        if g is None:
            continue
        if name in WEIGHT_NAMES and config.l2_coefficient:
            g = g + config.l2_coefficient * tensor.value
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = config.beta1 * m + (1 - config.beta1) * g
        v = config.beta2 * v + (1 - config.beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - config.beta1 ** t)
        v_hat = v / (1 - config.beta2 ** t)
        tensor.value = tensor.value - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return params, state


# ---------------------------------------------------------------- training


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch]))


def _is_better(metric: float, loss: float, best_metric: float, best_loss: float) -> bool:
    return metric > best_metric or (metric == best_metric and loss < best_loss)


def train(graph: Graph, routing: RoutingConfig, config: TrainConfig,
          params: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
    """Train with early stopping on the validation metric; returns the best parameters.

    The validation metric is accuracy for single-label tasks and micro-F1 for
    multi-label tasks; ties are broken by the lower validation loss.
    """
    if len(graph.train) == 0:
        raise ValueError("graph has no training split")
    start = time.perf_counter()
    model = Model(graph, routing, config)
    if params is None:
        params = init_params(routing, config.seed, graph.in_dim, graph.num_classes, config.shared_projection)
    val_nodes = graph.val if len(graph.val) else graph.train
    report = TrainReport(config={**dataclasses.asdict(routing), **dataclasses.asdict(config)})

    def evaluate(p: ModelParams):
        result = model.forward(p, training=False, rng=None)
        val_loss = model.loss(result, val_nodes).item()
        return result.logits.value, val_loss

    logits, best_loss = evaluate(params)
    best_metric = model.metric(logits, val_nodes)
    best = params.copy()
    report.logits = logits
    report.best_val_metric = best_metric
    stale = 0
    state = AdamState()
    for epoch in range(1, config.max_epochs + 1):
        try:
            with Tape() as tape:
                result = model.forward(params, training=True, rng=_epoch_rng(config.seed, epoch))
                loss = model.loss(result, graph.train)
            tg.backward(tape, loss)
            grads = {name: t.grad for name, t in params.named().items() if t.grad is not None}
            adam_step(params, grads, state, config)
            for t in params.named().values():
                t.grad = None
            logits, val_loss = evaluate(params)
        except (DivergenceError, FloatingPointError) as exc:
            # the report still holds the last good epoch
            raise DivergenceError(f"{exc} at epoch {epoch}", report) from None
        train_metric = model.metric(logits, graph.train)
        val_metric = model.metric(logits, val_nodes)
        report.epochs.append(EpochLog(epoch, loss.item(), train_metric, val_loss, val_metric))
        log.debug("epoch %d loss %.4f val %.4f", epoch, loss.item(), val_metric)
        if _is_better(val_metric, val_loss, best_metric, best_loss):
            best_metric, best_loss = val_metric, val_loss
            best = params.copy()
            report.best_epoch = epoch
            report.logits = logits
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                report.stopped_early = True
                break

    report.best_val_metric = best_metric
    report.test_metrics = model.test_metrics(report.logits)
    report.wall_seconds = time.perf_counter() - start
    return best, report


def predict(graph: Graph, params: ModelParams, routing: RoutingConfig, config: TrainConfig) -> ForwardResult:
    """Eval-mode forward pass (dropout off)."""
    return Model(graph, routing, config).forward(params, training=False, rng=None)


# ------------------------------------------------------------ gradient check


def _loss_value(model: Model, params: ModelParams) -> float:
    result = model.forward(params, training=False, rng=None)
    return model.loss(result, model.graph.train).item()


def grad_check(graph: Graph, routing: RoutingConfig, config: TrainConfig, samples: int = 10,
               h: float = 1e-5, seed: int = 0, params: ModelParams | None = None,
               training: bool = False) -> dict[str, float]:
    """Max relative error of analytic vs central-difference gradients per parameter block.

    Relative error is ``|analytic - numeric| / max(1, |numeric|)``.  Dropout is
    off unless ``training`` is set, which is only useful as a negative control.
    The hard path assignment is frozen at the base point so the finite
    differences see the same piecewise-smooth branch as the analytic gradient.
    """
    model = Model(graph, routing, config)
    if params is None:
        params = init_params(routing, config.seed, graph.in_dim, graph.num_classes, config.shared_projection)
    rng = np.random.default_rng(seed)

    base = model.forward(params, training=False, rng=None)
    frozen = base.paths
    model.build_paths = lambda p_last: frozen

    with Tape() as tape:
        result = model.forward(params, training=training, rng=np.random.default_rng(seed))
        loss = model.loss(result, graph.train)
    tg.backward(tape, loss)

    errors = {}
    for name, tensor in params.named().items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.value)
        flat = tensor.value.reshape(-1)
        picks = rng.choice(flat.size, min(samples, flat.size), replace=False)
        worst = 0.0
        for i in picks:
            old = flat[i]
            flat[i] = old + h
            up = _loss_value(model, params)
            flat[i] = old - h
            down = _loss_value(model, params)
            flat[i] = old
            numeric = (up - down) / (2 * h)
            worst = max(worst, abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric)))
        errors[name] = worst
        tensor.grad = None
    return errors
