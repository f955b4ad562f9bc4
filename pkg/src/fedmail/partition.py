"""Train/test splitting and distribution of a labeled corpus across K
simulated clients: balanced, size-asymmetric (var ramp), class-ratio
asymmetric (P/L), and per-source extreme schemes.

Everything here operates on integer index arrays into the parent corpus and
is deterministic in (labels, sources, spec). Index arrays are returned
sorted so downstream consumers see a canonical order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ingest import SOURCES

KIND_BALANCED = "balanced"
KIND_SIZE_VAR = "size_var"
KIND_PL_RATIO = "pl_ratio"
KIND_PER_SOURCE = "per_source"
PARTITION_KINDS = (KIND_BALANCED, KIND_SIZE_VAR, KIND_PL_RATIO, KIND_PER_SOURCE)

VAR_LEVELS = (0, 10, 20, 30, 50, 80)
TRAIN_FRACTION_NUM, TRAIN_FRACTION_DEN = 4, 5  # 80:20

_KIND_CODE = {k: i for i, k in enumerate(PARTITION_KINDS)}


@dataclass(frozen=True)
class PartitionSpec:
    kind: str
    num_clients: int
    var_pct: int = 0
    ratios: tuple[tuple[int, int], ...] = ()
    seed: int = 123

    def validate(self) -> None:
        if self.kind not in PARTITION_KINDS:
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if self.num_clients < 1:
            raise ValueError("num_clients must be positive")
        if self.kind == KIND_SIZE_VAR:
            if self.var_pct not in VAR_LEVELS:
                raise ValueError(f"var_pct must be one of {VAR_LEVELS}")
            if self.var_pct > 0 and self.num_clients < 2:
                raise ValueError("size_var with var_pct > 0 needs at least 2 clients")
        if self.kind == KIND_PL_RATIO:
            if len(self.ratios) != self.num_clients:
                raise ValueError("pl_ratio needs one (phish, legit) pair per client")
            for i, (p, l) in enumerate(self.ratios):
                if p + l != 100 or p < 0 or l < 0:
                    raise ValueError(f"ratio for client {i + 1} must sum to 100, got ({p}, {l})")


@dataclass(frozen=True)
class ClientShard:
    client_id: int  # 1-based
    indices: np.ndarray

    @property
    def n_k(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class PartitionResult:
    shards: tuple[ClientShard, ...]
    unassigned: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def _rng(spec: PartitionSpec) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([spec.seed, _KIND_CODE[spec.kind], spec.num_clients])
    )


def balance_classes(labels: np.ndarray, seed: int) -> np.ndarray:
    """Indices of a class-balanced subsample: the majority class is
    uniformly subsampled (seeded) down to the minority count."""
    labels = np.asarray(labels)
    phish = np.flatnonzero(labels == 1)
    legit = np.flatnonzero(labels == 0)
    if len(phish) == 0 or len(legit) == 0:
        raise ValueError("cannot balance: dataset has a single class")
    target = min(len(phish), len(legit))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA1A]))
    if len(phish) > target:
        phish = rng.choice(phish, size=target, replace=False)
    if len(legit) > target:
        legit = rng.choice(legit, size=target, replace=False)
    return np.sort(np.concatenate([phish, legit]))


def split_train_test(indices: np.ndarray, labels: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified 80:20 split; per-class sizes round toward the train side."""
    indices = np.asarray(indices)
    if len(indices) < 5:
        raise ValueError("need at least 5 samples to split 80:20")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5811]))
    train_parts, test_parts = [], []
    for cls in (1, 0):
        cls_idx = indices[np.asarray(labels)[indices] == cls]
        perm = rng.permutation(len(cls_idx))
        n_train = -((-TRAIN_FRACTION_NUM * len(cls_idx)) // TRAIN_FRACTION_DEN)
        train_parts.append(cls_idx[perm[:n_train]])
        test_parts.append(cls_idx[perm[n_train:]])
    return (
        np.sort(np.concatenate(train_parts)),
        np.sort(np.concatenate(test_parts)),
    )


def size_var_sizes(total: int, num_clients: int, var_pct: int) -> list[int]:
    """Client sizes for the linear var ramp, computed in exact integer
    arithmetic.

    Client k's share ramps from -var_pct% to +var_pct% around total//K and
    is floored to an even number so a 50:50 class split is always possible.
    The ramp is applied to the floored base (not total/K exactly); for
    total=20044, K=5, var=10 this yields (3606, 3806, 4008, 4208, 4408).
    The rounding remainder is left unassigned rather than redistributed.
    """
    base = total // num_clients
    den = 100 * (num_clients - 1)
    sizes = []
    for k in range(1, num_clients + 1):
        num = base * (den + var_pct * (2 * (k - 1) - (num_clients - 1)))
        sizes.append(2 * (num // (2 * den)))
    return sizes


def _deal_stratified(labels: np.ndarray, pool: np.ndarray, num_clients: int,
                     rng: np.random.Generator) -> list[np.ndarray]:
    """Stratified deal: per class, shuffle and cut into K near-equal chunks;
    the +1 remainders rotate across clients so total sizes differ by <= 1."""
    per_client: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
    offset = 0
    for cls in (1, 0):
        cls_idx = pool[labels[pool] == cls]
        cls_idx = cls_idx[rng.permutation(len(cls_idx))]
        base, rem = divmod(len(cls_idx), num_clients)
        start = 0
        for j in range(num_clients):
            size = base + (1 if (j - offset) % num_clients < rem else 0)
            per_client[j].append(cls_idx[start : start + size])
            start += size
        offset = (offset + rem) % num_clients
    return [np.sort(np.concatenate(parts)) for parts in per_client]


def partition(labels: np.ndarray, spec: PartitionSpec,
              sources: list[str] | None = None) -> PartitionResult:
    """Distribute sample indices across clients according to the spec.

    Shards are pairwise disjoint; every index lands in exactly one shard or
    in the (usually empty) unassigned remainder. Balanced and per-source
    schemes always assign everything; the size-var ramp and P/L quotas can
    leave a small rounding/quota remainder.
    """
    spec.validate()
    if spec.kind == KIND_SIZE_VAR and spec.var_pct == 0:
        spec = replace(spec, kind=KIND_BALANCED)  # identical memberships by contract
    labels = np.asarray(labels)
    total = len(labels)
    if total < spec.num_clients:
        raise ValueError(f"cannot split {total} samples across {spec.num_clients} clients")
    rng = _rng(spec)
    all_idx = np.arange(total, dtype=np.int64)

    if spec.kind == KIND_BALANCED:
        chunks = _deal_stratified(labels, all_idx, spec.num_clients, rng)
        shards = tuple(ClientShard(k + 1, chunk) for k, chunk in enumerate(chunks))
        return PartitionResult(shards)

    if spec.kind == KIND_SIZE_VAR:
        sizes = size_var_sizes(total, spec.num_clients, spec.var_pct)
        pools = {cls: all_idx[labels == cls] for cls in (1, 0)}
        pools = {cls: idx[rng.permutation(len(idx))] for cls, idx in pools.items()}
        need = sum(sizes) // 2
        for cls in (1, 0):
            if len(pools[cls]) < need:
                name = "phishing" if cls == 1 else "legitimate"
                raise ValueError(
                    f"size_var needs {need} {name} samples for 50:50 shards, only {len(pools[cls])} available"
                )
        shards = []
        cursor = {1: 0, 0: 0}
        for k, n_k in enumerate(sizes, start=1):
            half = n_k // 2
            taken = [pools[cls][cursor[cls] : cursor[cls] + half] for cls in (1, 0)]
            for cls in (1, 0):
                cursor[cls] += half
            shards.append(ClientShard(k, np.sort(np.concatenate(taken))))
        leftover = np.concatenate([pools[cls][cursor[cls] :] for cls in (1, 0)])
        return PartitionResult(tuple(shards), np.sort(leftover))

    if spec.kind == KIND_PL_RATIO:
        base, rem = divmod(total, spec.num_clients)
        sizes = [base + (1 if k < rem else 0) for k in range(spec.num_clients)]
        pools = {cls: all_idx[labels == cls] for cls in (1, 0)}
        pools = {cls: idx[rng.permutation(len(idx))] for cls, idx in pools.items()}
        cursor = {1: 0, 0: 0}
        shards = []
        for k, (n_k, (phish_pct, _)) in enumerate(zip(sizes, spec.ratios), start=1):
            quota = {1: (n_k * phish_pct + 50) // 100}
            quota[0] = n_k - quota[1]
            taken = []
            for cls in (1, 0):
                available = len(pools[cls]) - cursor[cls]
                if available < quota[cls]:
                    name = "phishing" if cls == 1 else "legitimate"
                    raise ValueError(
                        f"client {k}: needs {quota[cls]} {name} samples, shortfall of {quota[cls] - available}"
                    )
                taken.append(pools[cls][cursor[cls] : cursor[cls] + quota[cls]])
                cursor[cls] += quota[cls]
            shards.append(ClientShard(k, np.sort(np.concatenate(taken))))
        leftover = np.concatenate([pools[cls][cursor[cls] :] for cls in (1, 0)])
        return PartitionResult(tuple(shards), np.sort(leftover))

    # per-source
    if sources is None:
        raise ValueError("per_source partitioning needs per-sample source tags")
    present = set(sources)
    ordered = [s for s in SOURCES if s in present] + sorted(present - set(SOURCES))
    if len(ordered) != spec.num_clients:
        raise ValueError(
            f"per_source needs num_clients == distinct sources ({len(ordered)}), got {spec.num_clients}"
        )
    src_arr = np.asarray(sources, dtype=object)
    shards = tuple(
        ClientShard(k, np.flatnonzero(src_arr == src).astype(np.int64))
        for k, src in enumerate(ordered, start=1)
    )
    return PartitionResult(shards)


def partition_report(result: PartitionResult, labels: np.ndarray,
                     sources: list[str] | None = None) -> dict:
    """JSON-ready per-client summary: n_k, class counts, source counts."""
    labels = np.asarray(labels)
    clients = []
    for shard in result.shards:
        entry = {
            "client_id": shard.client_id,
            "n_k": int(shard.n_k),
            "phishing": int(np.sum(labels[shard.indices] == 1)),
            "legitimate": int(np.sum(labels[shard.indices] == 0)),
        }
        if sources is not None:
            counts: dict[str, int] = {}
            for i in shard.indices:
                counts[sources[i]] = counts.get(sources[i], 0) + 1
            entry["sources"] = dict(sorted(counts.items()))
        clients.append(entry)
    return {
        "clients": clients,
        "unassigned": int(len(result.unassigned)),
        "total": int(len(labels)),
    }
