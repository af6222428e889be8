"""Round loop: sample clients, broadcast, train locally, aggregate, measure."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .client import ClientState, LocalHyper, LocalResult, run_local
from .datagen import (
    Dataset,
    dirichlet_partition,
    generate_gaussian_classes,
    load_csv,
    train_test_split,
)
from .methods import AMENDED, MethodConfig, default_weight_decay
from .numerics import RngStream
from .objective import accuracy, make_model
from .server import ServerState, init_server, sample_clients, server_update

__all__ = [
    "DataConfig",
    "ExperimentConfig",
    "ExperimentResult",
    "Federation",
    "ModelConfig",
    "RoundMetrics",
    "build_federation",
    "rounds_to_target",
    "run_experiment",
    "run_round",
    "run_seed",
    "thread_count",
]

METRIC_COLUMNS = ("round", "seed", "train_loss", "test_acc", "grad_norm_sq",
                  "z_grad_norm_sq", "consistency", "ga_norm")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "softmax"
    hidden: int = 16
    activation: str = "relu"
    mu: float = 25.0
    weight_decay: float | None = None  # None: family default of the method


@dataclass(frozen=True)
class DataConfig:
    source: str = "gaussian"  # or "csv"
    path: str = ""
    label_column: str = "label"
    n_train: int = 5000
    n_test: int = 1000
    p: int = 20
    C: int = 5
    sep: float = 2.0
    beta: float = 0.6


@dataclass(frozen=True)
class ExperimentConfig:
    method: MethodConfig = field(default_factory=lambda: MethodConfig.default("fedlada"))
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    m: int = 20
    rate: float = 0.1
    T: int = 300
    K: int = 10
    batch: int = 50
    seeds: tuple = (0,)
    metric_every: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.K < 1:
            raise ConfigError("run.K must be >= 1 (zero local steps)")
        if self.T < 1:
            raise ConfigError("run.T must be >= 1")
        if self.m < 1:
            raise ConfigError("run.m must be >= 1")
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError("run.rate must lie in (0, 1]")
        if self.batch < 1:
            raise ConfigError("run.batch must be >= 1")
        if self.metric_every < 1:
            raise ConfigError("run.metric_every must be >= 1")
        if not self.seeds:
            raise ConfigError("run.seeds must not be empty")
        if self.model.kind not in ("softmax", "mlp"):
            raise ConfigError(f"model.kind must be 'softmax' or 'mlp', got {self.model.kind!r}")
        if self.data.source not in ("gaussian", "csv"):
            raise ConfigError("data.source must be 'gaussian' or 'csv'")
        if self.data.source == "gaussian" and (self.data.n_train + self.data.n_test) % self.data.C:
            raise ConfigError("data.n_train + data.n_test must be divisible by data.C")
        if not self.data.beta > 0:
            raise ConfigError("data.beta must be positive")
        return self

    @property
    def weight_decay(self) -> float:
        wd = self.model.weight_decay
        return default_weight_decay(self.method.name) if wd is None else wd

    def as_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class RoundMetrics:
    round: int
    train_loss: float
    test_acc: float
    grad_norm_sq: float
    z_grad_norm_sq: float | None
    consistency: float
    ga_norm: float
    wall_ms: float = 0.0

    def row(self, seed: int) -> dict:
        d = {k: getattr(self, k) for k in METRIC_COLUMNS if k != "seed"}
        d["seed"] = seed
        return d


@dataclass
class Federation:
    """Clients plus the data used for global evaluation.

    With a shared dataset, global loss and gradient are full-batch over
    ``train``. Without one (per-client quadratics), the global objective is
    the mean of the client objectives.
    """

    model: object
    clients: list[ClientState]
    train: Dataset | None = None
    test: Dataset | None = None

    @property
    def m(self) -> int:
        return len(self.clients)

    def loss(self, x) -> float:
        if self.train is not None:
            return self.model.loss(x, self.train, np.arange(self.train.n))
        return float(np.mean([c.model.loss(x) for c in self.clients]))

    def grad(self, x) -> np.ndarray:
        if self.train is not None:
            return self.model.grad(x, self.train, np.arange(self.train.n))
        return np.mean([c.model.grad(x) for c in self.clients], axis=0)

    def test_accuracy(self, x) -> float:
        # data-free objectives have no notion of accuracy; reported as 0
        if self.test is None or not hasattr(self.model, "logits"):
            return 0.0
        return accuracy(self.model, x, self.test)


def build_federation(config: ExperimentConfig, seed: int) -> Federation:
    dc = config.data
    data_rng = RngStream(seed, "data", 0)
    if dc.source == "csv":
        full = load_csv(dc.path, dc.label_column)
    else:
        total = dc.n_train + dc.n_test
        full = generate_gaussian_classes(total // dc.C, dc.p, dc.C, dc.sep, data_rng)
    train, test = train_test_split(full, dc.n_test, RngStream(seed, "data", 1))
    shards = dirichlet_partition(train, config.m, dc.beta, RngStream(seed, "data", 2))
    mc = config.model
    model = make_model(mc.kind, train.p, train.n_classes, mc.hidden, mc.activation, mc.mu,
                       config.weight_decay)
    clients = [ClientState(i, model, train, shards[i], RngStream(seed, "client", i))
               for i in range(config.m)]
    return Federation(model, clients, train, test)


def thread_count() -> int:
    """Worker pool size from ``FEDSIM_THREADS`` (default 1)."""
    raw = os.environ.get("FEDSIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FEDSIM_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_round(fed: Federation, method: MethodConfig, state: ServerState, K: int, batch: int,
              rate: float, rng: RngStream, executor: ThreadPoolExecutor | None = None,
              observer=None, measure: bool = True) -> tuple[ServerState, RoundMetrics | None]:
    """One communication round.

    ``observer(state_before, ids, results, state_after)`` is called after
    aggregation, before metrics. Results are always merged in ascending
    client-id order so parallel execution cannot change any sum.
    """
    t0 = time.perf_counter()
    ids = sample_clients(fed.m, rate, rng)
    bc = state.broadcast()
    hyper = LocalHyper.from_method(method, state.eta_l, K, batch)

    def job(cid):
        return run_local(method, state.x, fed.clients[cid], bc, hyper)

    try:
        if executor is not None and len(ids) > 1:
            outs = list(executor.map(job, ids))
        else:
            outs = [job(cid) for cid in ids]
        results: list[tuple[int, LocalResult]] = list(zip(ids.tolist(), outs))
        new_state = server_update(method, state, results, K)
    except Exception as exc:
        raise RuntimeError(f"round {state.round}: {exc}") from exc

    if observer is not None:
        observer(state, ids, results, new_state)
    if not measure:
        return new_state, None

    x_new = new_state.x
    g = fed.grad(x_new)
    z_norm = None
    if method.name in ("fedcm", "fedlada"):
        a = method.alpha
        z = x_new / a - (1.0 - a) / a * state.x
        gz = fed.grad(z)
        z_norm = float(gz @ gz)
    consistency = 0.0
    for _, r in results:
        dev = (state.x - r.offset) - x_new
        consistency += float(dev @ dev)
    consistency /= len(results)
    metrics = RoundMetrics(
        round=new_state.round,
        train_loss=fed.loss(x_new),
        test_acc=fed.test_accuracy(x_new),
        grad_norm_sq=float(g @ g),
        z_grad_norm_sq=z_norm,
        consistency=consistency,
        ga_norm=float(np.linalg.norm(new_state.g_a)),
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
    return new_state, metrics


def run_seed(config: ExperimentConfig, seed: int, fed: Federation | None = None,
             observer=None, threads: int | None = None) -> list[RoundMetrics]:
    """Run all ``T`` rounds for one seed and return its metric stream."""
    config.validate()
    fed = fed or build_federation(config, seed)
    x0 = fed.model.init(RngStream(seed, "model", 0))
    state = init_server(x0, config.method)
    stream = []
    threads = thread_count() if threads is None else threads
    executor = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for t in range(config.T):
            measure = (t + 1) % config.metric_every == 0 or t + 1 == config.T
            state, metrics = run_round(fed, config.method, state, config.K, config.batch,
                                       config.rate, RngStream(seed, "server", t), executor,
                                       observer, measure)
            if metrics is not None:
                stream.append(metrics)
    finally:
        if executor is not None:
            executor.shutdown()
    return stream


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    streams: dict = field(default_factory=dict)  # seed -> list[RoundMetrics]
    errors: dict = field(default_factory=dict)  # seed -> message

    def summary(self) -> dict:
        """Mean/std across seeds of final and best-so-far metrics."""
        out: dict = {"seeds": sorted(self.streams), "failed": dict(self.errors)}
        if not self.streams:
            return out
        finals = [s[-1] for s in self.streams.values()]
        for key in ("train_loss", "test_acc", "grad_norm_sq", "consistency", "ga_norm"):
            vals = np.array([getattr(f, key) for f in finals], dtype=float)
            out[f"final_{key}_mean"] = float(vals.mean())
            out[f"final_{key}_std"] = float(vals.std())
        best_acc = np.array([max(r.test_acc for r in s) for s in self.streams.values()])
        best_loss = np.array([min(r.train_loss for r in s) for s in self.streams.values()])
        out["best_test_acc_mean"] = float(best_acc.mean())
        out["best_test_acc_std"] = float(best_acc.std())
        out["best_train_loss_mean"] = float(best_loss.mean())
        out["best_train_loss_std"] = float(best_loss.std())
        return out


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Run every seed independently; a failing seed is recorded, the rest still run."""
    config.validate()
    result = ExperimentResult(config)
    for seed in config.seeds:
        try:
            result.streams[seed] = run_seed(config, seed, threads=threads)
        except Exception as exc:  # reported per seed
            result.errors[seed] = f"{type(exc).__name__}: {exc}"
    return result


def rounds_to_target(metrics, key: str, target: float) -> float:
    """First 1-indexed round reaching ``target``; ``math.inf`` if never.

    ``train_loss`` counts as reached when ``<= target``, ``test_acc`` when
    ``>= target``.
    """
    if key not in ("train_loss", "test_acc"):
        raise ValueError("key must be 'train_loss' or 'test_acc'")
    for r in metrics:
        v = getattr(r, key)
        if (v <= target) if key == "train_loss" else (v >= target):
            return r.round
    return math.inf


def config_fields(cls) -> list[str]:
    return [f.name for f in fields(cls)]
