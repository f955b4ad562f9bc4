"""The federated protocol: server broadcast, per-client local SGD, weighted
averaging over the active set, participation schedules, and byte-exact
communication accounting.

One global epoch = broadcast -> local updates on every active client ->
aggregation -> evaluation. Client updates within an epoch are mutually
independent; with FEDMAIL_THREADS > 1 they run on a thread pool, and results
are bit-identical to sequential ascending-id execution because aggregation
always sums in ascending client-id order.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .ingest import DEFAULT_VOCAB_DIM, TokenizedCorpus
from .metrics import METRIC_NAMES, confusion, derive_metrics
from .model import (
    Hyper,
    ModelParams,
    features_matrix,
    init_params,
    loss_and_grad_matrix,
    predict_matrix,
    serialize_params,
    sgd_step,
)
from .partition import PartitionSpec, partition, partition_report, split_train_test


@dataclass(frozen=True)
class ScheduleEntry:
    start: int
    end: int  # exclusive
    clients: frozenset[int]


@dataclass(frozen=True)
class ParticipationSchedule:
    entries: tuple[ScheduleEntry, ...]

    @staticmethod
    def always_all(num_clients: int, global_epochs: int) -> "ParticipationSchedule":
        return ParticipationSchedule(
            (ScheduleEntry(0, global_epochs, frozenset(range(1, num_clients + 1))),)
        )

    def validate(self, global_epochs: int, num_clients: int) -> None:
        covered = np.zeros(global_epochs, dtype=bool)
        for entry in self.entries:
            if not entry.clients:
                raise ValueError(f"schedule entry [{entry.start},{entry.end}) has no active clients")
            if not entry.clients <= set(range(1, num_clients + 1)):
                raise ValueError(f"schedule entry [{entry.start},{entry.end}) names unknown clients")
            if not 0 <= entry.start < entry.end <= global_epochs:
                raise ValueError(f"schedule range [{entry.start},{entry.end}) out of bounds")
            if covered[entry.start : entry.end].any():
                raise ValueError("schedule ranges overlap")
            covered[entry.start : entry.end] = True
        if not covered.all():
            raise ValueError("schedule does not cover every epoch")

    def active_at(self, epoch: int) -> tuple[int, ...]:
        for entry in self.entries:
            if entry.start <= epoch < entry.end:
                return tuple(sorted(entry.clients))
        raise ValueError(f"epoch {epoch} not covered by schedule")


@dataclass(frozen=True)
class FLConfig:
    num_clients: int
    global_epochs: int
    local_epochs: int = 1
    learning_rate: float = 1e-4
    batch_size: int = 256
    seed: int = 123
    hidden_dim: int = 0
    vocab_dim: int = DEFAULT_VOCAB_DIM
    schedule: ParticipationSchedule | None = None

    def validate(self) -> None:
        if self.num_clients < 1 or self.global_epochs < 1 or self.local_epochs < 1:
            raise ValueError("num_clients, global_epochs and local_epochs must be >= 1")
        if self.learning_rate < 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be >= 0 and batch_size >= 1")
        if self.schedule is not None:
            self.schedule.validate(self.global_epochs, self.num_clients)


@dataclass
class ClientData:
    """One client's materialized shard: train/test feature matrices."""

    client_id: int
    x_train: sp.csr_matrix
    y_train: np.ndarray
    x_test: sp.csr_matrix
    y_test: np.ndarray

    @property
    def n_k(self) -> int:
        return self.x_train.shape[0]


@dataclass(frozen=True)
class ClientUpdateResult:
    client_id: int
    params: ModelParams
    n_k: int


@dataclass
class EpochRecord:
    epoch: int
    params_hash: str
    active: tuple[int, ...]
    local: dict[int, dict[str, float | None]]
    global_: dict[int, dict[str, float | None]]
    local_avg: dict[str, float | None]
    global_avg: dict[str, float | None]
    bytes_up: dict[int, int]
    bytes_down: dict[int, int]


@dataclass
class FLRunRecord:
    num_clients: int
    model_bytes: int
    epochs: list[EpochRecord] = field(default_factory=list)
    partition: dict = field(default_factory=dict)

    def final(self) -> EpochRecord:
        return self.epochs[-1]


def client_update(global_params: ModelParams, client: ClientData, cfg: FLConfig,
                  epoch: int) -> tuple[ModelParams, int]:
    """Local training pass: copy the global model, run local_epochs sweeps
    of mini-batch SGD over a seeded shuffle (last partial batch included),
    return the updated params and the local sample count."""
    if not np.all(np.isfinite(global_params.flat)):
        raise FloatingPointError("divergence detected: non-finite global params")
    params = global_params.copy()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, client.client_id, epoch]))
    n = client.n_k
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad = loss_and_grad_matrix(params, client.x_train[batch], client.y_train[batch])
            params = sgd_step(params, grad, cfg.learning_rate)
    return params, n


def aggregate(updates: list[ClientUpdateResult]) -> ModelParams:
    """Weighted average sum_k (n_k / n) W_k, summed in ascending client-id
    order at float64, so the result is independent of submission order."""
    if not updates:
        raise ValueError("no updates to aggregate")
    ordered = sorted(updates, key=lambda u: u.client_id)
    dim = len(ordered[0].params.flat)
    if any(len(u.params.flat) != dim for u in ordered):
        raise ValueError("update dimension mismatch")
    if any(u.n_k <= 0 for u in ordered):
        raise ValueError("all n_k must be positive")
    n = sum(u.n_k for u in ordered)
    flat = np.zeros(dim)
    for u in ordered:
        flat += (u.n_k / n) * u.params.flat
    return replace(ordered[0].params, flat=flat)


def _metrics_for(params: ModelParams, x: sp.csr_matrix, y: np.ndarray) -> dict[str, float | None]:
    preds = predict_matrix(params, x)
    return derive_metrics(confusion(preds, y))


def _average(per_client: list[dict[str, float | None]]) -> dict[str, float | None]:
    """Unweighted mean per metric over the clients where it is defined."""
    out: dict[str, float | None] = {}
    for name in METRIC_NAMES:
        defined = [m[name] for m in per_client if m[name] is not None]
        out[name] = float(np.mean(defined)) if defined else None
    return out


def _worker_count(n_tasks: int) -> int:
    try:
        threads = int(os.environ.get("FEDMAIL_THREADS", "1"))
    except ValueError:
        threads = 1
    return max(1, min(threads, n_tasks))


@dataclass
class EngineState:
    params: ModelParams
    clients: list[ClientData]
    cfg: FLConfig
    record: FLRunRecord


def run_global_epoch(state: EngineState, active: tuple[int, ...], epoch: int) -> None:
    """One round of Algorithm: broadcast to the active set, collect local
    updates, aggregate over the active set only, evaluate, append a record
    row with the byte ledger."""
    if not active:
        raise ValueError("empty active client set")
    cfg = state.cfg
    by_id = {c.client_id: c for c in state.clients}
    model_bytes = len(serialize_params(state.params))
    bytes_down = {k: (model_bytes if k in active else 0) for k in by_id}

    def train_one(k: int) -> ClientUpdateResult:
        params_k, n_k = client_update(state.params, by_id[k], cfg, epoch)
        return ClientUpdateResult(k, params_k, n_k)

    workers = _worker_count(len(active))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            updates = list(pool.map(train_one, active))
    else:
        updates = [train_one(k) for k in active]

    bytes_up = {k: 0 for k in by_id}
    for u in updates:
        bytes_up[u.client_id] = len(serialize_params(u.params))

    state.params = aggregate(updates)

    local = {
        u.client_id: _metrics_for(u.params, by_id[u.client_id].x_test, by_id[u.client_id].y_test)
        for u in updates
    }
    global_ = {
        k: _metrics_for(state.params, c.x_test, c.y_test) for k, c in sorted(by_id.items())
    }
    state.record.epochs.append(
        EpochRecord(
            epoch=epoch,
            params_hash=hashlib.sha256(serialize_params(state.params)).hexdigest(),
            active=tuple(sorted(active)),
            local=dict(sorted(local.items())),
            global_=global_,
            local_avg=_average([local[k] for k in sorted(local)]),
            global_avg=_average([global_[k] for k in sorted(global_)]),
            bytes_up=bytes_up,
            bytes_down=bytes_down,
        )
    )


def evaluate(params: ModelParams, clients: list[ClientData]) -> tuple[dict[int, dict], dict]:
    """Score one parameter vector on every client's test split; returns the
    per-client metrics and their unweighted average."""
    per_client = {c.client_id: _metrics_for(params, c.x_test, c.y_test) for c in clients}
    return per_client, _average([per_client[k] for k in sorted(per_client)])


def build_clients(corpus: TokenizedCorpus, spec: PartitionSpec, seed: int) -> tuple[list[ClientData], dict]:
    """Partition the corpus, give each client a local stratified 80:20
    split, and materialize per-client feature matrices."""
    result = partition(corpus.labels, spec, corpus.sources)
    x_all = features_matrix(corpus.sequences, corpus.vocab_dim)
    y_all = np.asarray(corpus.labels, dtype=np.float64)
    clients = []
    for shard in result.shards:
        train_idx, test_idx = split_train_test(
            shard.indices, corpus.labels, seed=seed * 1000003 + shard.client_id
        )
        clients.append(
            ClientData(
                client_id=shard.client_id,
                x_train=x_all[train_idx],
                y_train=y_all[train_idx],
                x_test=x_all[test_idx],
                y_test=y_all[test_idx],
            )
        )
    return clients, partition_report(result, corpus.labels, corpus.sources)


def run_training(corpus: TokenizedCorpus, spec: PartitionSpec, cfg: FLConfig,
                 on_epoch=None) -> FLRunRecord:
    """Full federated run: partition, init from seed, execute every global
    epoch under the participation schedule. Deterministic in
    (corpus, spec, cfg). on_epoch(state) fires after each aggregation (used
    for optional per-epoch parameter snapshots)."""
    cfg.validate()
    if spec.num_clients != cfg.num_clients:
        raise ValueError("partition spec and FL config disagree on num_clients")
    clients, part_report = build_clients(corpus, spec, cfg.seed)
    schedule = cfg.schedule or ParticipationSchedule.always_all(cfg.num_clients, cfg.global_epochs)
    schedule.validate(cfg.global_epochs, cfg.num_clients)
    params = init_params(
        cfg.hidden_dim, cfg.vocab_dim, cfg.seed, cfg.learning_rate, cfg.batch_size
    )
    state = EngineState(
        params=params,
        clients=clients,
        cfg=cfg,
        record=FLRunRecord(
            num_clients=cfg.num_clients,
            model_bytes=len(serialize_params(params)),
            partition=part_report,
        ),
    )
    for epoch in range(cfg.global_epochs):
        run_global_epoch(state, schedule.active_at(epoch), epoch)
        if on_epoch is not None:
            on_epoch(state)
    return state.record


def run_centralized(corpus: TokenizedCorpus, cfg: FLConfig) -> FLRunRecord:
    """Baseline: the identical loop with a single client holding all data."""
    cl_cfg = replace(cfg, num_clients=1, schedule=None)
    return run_training(
        corpus, PartitionSpec(kind="balanced", num_clients=1, seed=cfg.seed), cl_cfg
    )
