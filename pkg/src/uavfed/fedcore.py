"""Local training, aggregation, and the synchronous/asynchronous round engines."""

from dataclasses import dataclass, field
import math

import numpy as np

from .data import Dataset
from .errors import (
    EmptyContributionError,
    EmptyDatasetError,
    InvalidConfigError,
    NonFiniteGradientError,
    ShapeMismatchError,
)
from .nets import DenseNet, ModelParams


@dataclass
class FLConfig:
    """Federated-learning hyperparameters.

    afl_quorum overrides quorum_frac when set; otherwise a round waits for
    ceil(quorum_frac * selected) responders.
    """

    eta: float = 0.1
    local_iters: int = 10
    max_rounds: int = 100
    quorum_frac: float = 0.6
    afl_quorum: int | None = None
    epsilon: float = 0.01
    hidden: tuple = ()
    staleness_decay: float = 1.0  # weight multiplier for folded-in stale updates

    def __post_init__(self):
        if self.eta <= 0:
            raise InvalidConfigError("eta must be positive")
        if self.local_iters < 1 or self.max_rounds < 0:
            raise InvalidConfigError("iteration counts out of range")
        if not 0 < self.quorum_frac <= 1:
            raise InvalidConfigError("quorum_frac must be in (0, 1]")
        if self.epsilon <= 0:
            raise InvalidConfigError("epsilon must be positive")
        if not 0 < self.staleness_decay <= 1:
            raise InvalidConfigError("staleness_decay must be in (0, 1]")

    def quorum_for(self, num_selected: int) -> int:
        q = self.afl_quorum if self.afl_quorum is not None else math.ceil(
            self.quorum_frac * num_selected
        )
        return max(1, min(q, num_selected))


class DenseClassifier:
    """Softmax classifier on a dense net; empty `hidden` gives multinomial
    logistic regression."""

    def __init__(self, num_features: int, num_classes: int, hidden: tuple = ()):
        self.num_classes = num_classes
        self.net = DenseNet((num_features, *hidden, num_classes))

    def init_params(self, rng: np.random.Generator) -> ModelParams:
        return self.net.init_params(rng)

    def logits(self, params: ModelParams, X: np.ndarray) -> np.ndarray:
        return self.net.batch_forward(params, np.atleast_2d(X))

    def loss(self, params: ModelParams, ds: Dataset) -> float:
        """Mean cross-entropy over the dataset."""
        ds.require_nonempty()
        z = self.logits(params, ds.features)
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        return float(np.mean(lse - z[np.arange(len(ds)), ds.labels]))

    def grad_sample(self, params: ModelParams, x: np.ndarray, label: int) -> np.ndarray:
        """Gradient of the single-sample cross-entropy wrt the flat params."""
        acts = self.net.forward_acts(params, x)
        logits = acts[-self.num_classes :]
        p = np.exp(logits - logits.max())
        p /= p.sum()
        p[label] -= 1.0
        return self.net.backward(params, x, acts, p)

    def predict(self, params: ModelParams, X: np.ndarray) -> np.ndarray:
        return self.logits(params, X).argmax(axis=1)

    def accuracy(self, params: ModelParams, ds: Dataset) -> float:
        ds.require_nonempty()
        return float(np.mean(self.predict(params, ds.features) == ds.labels))

    def sgd_steps(self, params: ModelParams, ds: Dataset, order: np.ndarray,
                  eta: float) -> None:
        """Run one single-sample SGD step per index in `order`, in place."""
        from . import backend

        ok = backend.sgd_dense_softmax(
            params.values, self.net.sizes_arr, ds.features, ds.labels,
            np.ascontiguousarray(order, dtype=np.int64), eta,
        )
        if not ok:
            raise NonFiniteGradientError("local SGD diverged to non-finite parameters")


def local_loss(model: DenseClassifier, params: ModelParams, ds: Dataset) -> float:
    """Mean per-sample loss of one device's dataset."""
    return model.loss(params, ds)


def global_loss(model: DenseClassifier, params: ModelParams, datasets) -> float:
    """Sample-count-weighted mean of local losses."""
    datasets = list(datasets)
    if not datasets or all(len(d) == 0 for d in datasets):
        raise EmptyDatasetError("no data to evaluate")
    total = sum(len(d) for d in datasets)
    return sum(model.loss(params, d) * len(d) for d in datasets if len(d)) / total


def local_sgd_step(model: DenseClassifier, params: ModelParams, ds: Dataset,
                   eta: float, rng: np.random.Generator) -> ModelParams:
    """One SGD step on one uniformly drawn sample; returns new params."""
    ds.require_nonempty()
    i = int(rng.integers(len(ds)))
    grad = model.grad_sample(params, ds.features[i], int(ds.labels[i]))
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("sample gradient is not finite")
    out = params.copy()
    out.values -= eta * grad
    return out


def local_train(model: DenseClassifier, global_params: ModelParams, ds: Dataset,
                eta: float, steps: int, rng: np.random.Generator) -> ModelParams:
    """A device's round: copy the broadcast model, run `steps` sampled SGD steps."""
    ds.require_nonempty()
    params = global_params.copy()
    order = rng.integers(0, len(ds), size=steps)
    model.sgd_steps(params, ds, order, eta)
    return params


def aggregate(contributions) -> ModelParams:
    """Sample-count-weighted mean of parameter vectors."""
    contributions = list(contributions)
    if not contributions:
        raise EmptyContributionError("nothing to aggregate")
    first, _ = contributions[0]
    for params, _ in contributions:
        if params.sizes != first.sizes or params.values.shape != first.values.shape:
            raise ShapeMismatchError("contributor shapes differ")
    counts = [count for _, count in contributions]
    if sum(counts) <= 0:
        raise EmptyContributionError("total sample weight is zero")
    acc = np.zeros_like(first.values)
    if len(set(counts)) == 1:
        # equal weights cancel: take the exact arithmetic mean
        for params, _ in contributions:
            acc += params.values
        return ModelParams(acc / len(contributions), first.sizes)
    for params, count in contributions:
        acc += count * params.values
    return ModelParams(acc / sum(counts), first.sizes)


def convergence_check(loss_history, epsilon: float, oracle_loss: float | None = None) -> bool:
    """True once the latest loss is within epsilon of the optimum proxy.

    The proxy is `oracle_loss` when provided (e.g. a long-run optimum on a
    convex instance), else the best loss seen so far.
    """
    if len(loss_history) < 2:
        raise ValueError("need at least two loss observations")
    proxy = oracle_loss if oracle_loss is not None else min(loss_history)
    return abs(loss_history[-1] - proxy) <= epsilon


def accuracy(model: DenseClassifier, params: ModelParams, ds: Dataset) -> float:
    """Fraction of argmax-correct predictions."""
    return model.accuracy(params, ds)


# ---------------------------------------------------------------------------
# Round engines


@dataclass
class DeviceJob:
    """One selected device's inputs for a round."""

    device: int
    dataset: Dataset
    t_local: float
    t_global: float
    t_down: float
    t_up: float

    @property
    def t_total(self) -> float:
        return self.t_local + self.t_global + self.t_down + self.t_up


@dataclass
class ServerState:
    """One UAV server's model plus stale updates awaiting fold-in."""

    model: DenseClassifier
    params: ModelParams
    pending: dict = field(default_factory=dict)  # device -> (ModelParams, count)


@dataclass
class RoundOutcome:
    params: ModelParams
    responders: list
    stragglers: list
    latency: float
    upload_remaining_frac: dict  # device -> unfinished upload fraction at close


def _train_all(server: ServerState, jobs, cfg: FLConfig, round_seed):
    """Every selected device trains from the broadcast params; per-device RNG
    streams derive from (round_seed, device) so engines agree bit-for-bit."""
    updates = {}
    for job in sorted(jobs, key=lambda j: j.device):
        rng = np.random.default_rng(np.random.SeedSequence((round_seed, job.device)))
        params = local_train(server.model, server.params, job.dataset,
                             cfg.eta, cfg.local_iters, rng)
        updates[job.device] = (params, len(job.dataset))
    return updates


def run_sfl_round(server: ServerState, jobs, cfg: FLConfig, round_seed) -> RoundOutcome:
    """Synchronous round: barrier over every selected device, aggregate all."""
    if not jobs:
        raise EmptyContributionError("no devices selected for the round")
    if server.pending:
        raise InvalidConfigError("synchronous server must not carry pending updates")
    updates = _train_all(server, jobs, cfg, round_seed)
    contribs = [updates[d] for d in sorted(updates)]
    server.params = aggregate(contribs)
    latency = max(j.t_total for j in jobs)
    return RoundOutcome(
        params=server.params,
        responders=sorted(updates),
        stragglers=[],
        latency=latency,
        upload_remaining_frac={j.device: 0.0 for j in jobs},
    )


def run_afl_round(server: ServerState, jobs, cfg: FLConfig, round_seed) -> RoundOutcome:
    """Asynchronous round: aggregate once the quorum fastest devices respond.

    Stragglers' updates are kept with their sample weights and fold into the
    next aggregation (a fresh update from the same device supersedes its
    stale one). Round latency is the quorum-th smallest device round time.
    """
    if not jobs:
        raise EmptyContributionError("no devices selected for the round")
    updates = _train_all(server, jobs, cfg, round_seed)
    ranked = sorted(jobs, key=lambda j: (j.t_total, j.device))
    q = cfg.quorum_for(len(jobs))
    close = ranked[q - 1].t_total
    responders = sorted(j.device for j in ranked[:q])
    stragglers = sorted(j.device for j in ranked[q:])

    merged = {
        dev: (params, count * cfg.staleness_decay)
        for dev, (params, count) in server.pending.items()
    }
    for dev in responders:
        merged[dev] = updates[dev]
    server.params = aggregate([merged[d] for d in sorted(merged)])
    server.pending = {dev: updates[dev] for dev in stragglers}

    remaining = {}
    for job in jobs:
        if job.t_total <= close or job.t_up <= 0:
            remaining[job.device] = 0.0
        else:
            remaining[job.device] = min(1.0, (job.t_total - close) / job.t_up)
    return RoundOutcome(
        params=server.params,
        responders=responders,
        stragglers=stragglers,
        latency=close,
        upload_remaining_frac=remaining,
    )
