"""Trainable classifier over hashed token-count features: logistic
regression by default, optional one-hidden-layer tanh MLP.

Parameters live in a single flat float64 vector so federated averaging and
serialization stay trivial. The input dimension is 4 * vocab_dim (one
hashed count bag per channel). All arithmetic is 64-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .ingest import CHANNEL_LENGTHS, TokenSequences

PARAMS_MAGIC = b"FMP1"


@dataclass(eq=False, frozen=True)
class FeatureVector:
    """Sparse non-negative feature vector: per-channel token counts scaled
    by 1/channel_length, at most 600 nonzeros (the total token budget)."""

    indices: np.ndarray  # sorted, unique, int64
    values: np.ndarray   # float64
    dim: int

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense


@dataclass(frozen=True)
class Hyper:
    learning_rate: float = 1e-4
    batch_size: int = 256
    hidden_dim: int = 0


@dataclass(eq=False, frozen=True)
class ModelParams:
    flat: np.ndarray
    shapes: tuple[tuple[int, int], ...]
    hyper: Hyper

    @property
    def input_dim(self) -> int:
        return self.shapes[0][1]

    def copy(self) -> "ModelParams":
        return replace(self, flat=self.flat.copy())

    def layers(self) -> list[np.ndarray]:
        """Views of flat as the layer matrices, in shape order."""
        out, start = [], 0
        for rows, cols in self.shapes:
            out.append(self.flat[start : start + rows * cols].reshape(rows, cols))
            start += rows * cols
        return out


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    worst_coordinate: int


def featurize(seqs: TokenSequences) -> FeatureVector:
    """Bag-of-ids count vector: channel c contributes count/len(channel) at
    index c * vocab_dim + id. Padding (id 0) contributes nothing. Token
    order within a channel is irrelevant."""
    vocab = seqs.vocab_dim
    idx_parts, val_parts = [], []
    for c, (channel, length) in enumerate(zip(seqs.channels(), CHANNEL_LENGTHS)):
        ids = channel[channel != 0]
        uniq, counts = np.unique(ids, return_counts=True)
        idx_parts.append(uniq.astype(np.int64) + c * vocab)
        val_parts.append(counts.astype(np.float64) / length)
    return FeatureVector(
        indices=np.concatenate(idx_parts),
        values=np.concatenate(val_parts),
        dim=4 * vocab,
    )


def features_matrix(seq_list: list[TokenSequences], vocab_dim: int) -> sp.csr_matrix:
    """CSR matrix with featurize(seq_list[i]) as row i (vectorized build).

    Counts are accumulated as integers and divided once per entry, so every
    value is bit-identical to the per-sample featurize path.
    """
    n = len(seq_list)
    dim = 4 * vocab_dim
    rows, cols, vals = [], [], []
    for c, length in enumerate(CHANNEL_LENGTHS):
        stacked = np.stack([s.channels()[c] for s in seq_list]) if n else np.zeros((0, length), dtype=np.int32)
        r, p = np.nonzero(stacked)
        keys = r.astype(np.int64) * dim + stacked[r, p].astype(np.int64) + c * vocab_dim
        uniq, counts = np.unique(keys, return_counts=True)
        rows.append(uniq // dim)
        cols.append(uniq % dim)
        vals.append(counts.astype(np.float64) / length)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, dim),
    ).tocsr()
    mat.sort_indices()
    return mat


def stack_features(fvs: list[FeatureVector]) -> sp.csr_matrix:
    if not fvs:
        raise ValueError("empty feature list")
    dim = fvs[0].dim
    indptr = np.cumsum([0] + [len(fv.indices) for fv in fvs])
    return sp.csr_matrix(
        (
            np.concatenate([fv.values for fv in fvs]),
            np.concatenate([fv.indices for fv in fvs]),
            indptr,
        ),
        shape=(len(fvs), dim),
    )


def init_params(hidden_dim: int, vocab_dim: int, seed: int,
                learning_rate: float = 1e-4, batch_size: int = 256) -> ModelParams:
    """Seeded Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))),
    zero biases. hidden_dim 0 means pure logistic regression."""
    if vocab_dim < 2 or hidden_dim < 0:
        raise ValueError("vocab_dim must be >= 2 and hidden_dim >= 0")
    dim = 4 * vocab_dim
    rng = np.random.default_rng(seed)
    if hidden_dim == 0:
        shapes = ((1, dim), (1, 1))
        s = np.sqrt(6.0 / (dim + 1))
        flat = np.concatenate([rng.uniform(-s, s, dim), np.zeros(1)])
    else:
        shapes = ((hidden_dim, dim), (hidden_dim, 1), (1, hidden_dim), (1, 1))
        s1 = np.sqrt(6.0 / (dim + hidden_dim))
        s2 = np.sqrt(6.0 / (hidden_dim + 1))
        flat = np.concatenate(
            [
                rng.uniform(-s1, s1, hidden_dim * dim),
                np.zeros(hidden_dim),
                rng.uniform(-s2, s2, hidden_dim),
                np.zeros(1),
            ]
        )
    return ModelParams(flat, shapes, Hyper(learning_rate, batch_size, hidden_dim))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logits(params: ModelParams, x) -> tuple[np.ndarray, np.ndarray | None]:
    """Logit per row of x (csr or dense 2-d); also the hidden activation
    when the model has a hidden layer."""
    layers = params.layers()
    if params.hyper.hidden_dim == 0:
        w, b = layers
        z = np.asarray(x @ w.ravel()).ravel() + b[0, 0]
        return z, None
    w1, b1, w2, b2 = layers
    h = np.tanh(np.asarray(x @ w1.T) + b1.ravel())
    z = h @ w2.ravel() + b2[0, 0]
    return z, h


def forward(params: ModelParams, x: FeatureVector) -> float:
    """Phishing probability for one sample. Stable for |logit| up to 1e3;
    saturates to 0.0/1.0 at float64 resolution."""
    if x.dim != params.input_dim:
        raise ValueError(f"feature dim {x.dim} does not match model dim {params.input_dim}")
    z, _ = _logits(params, stack_features([x]))
    return float(_sigmoid(z)[0])


def predict_matrix(params: ModelParams, x) -> np.ndarray:
    """Hard labels: phishing iff p > 0.5 (ties at exactly 0.5 go legitimate)."""
    z, _ = _logits(params, x)
    return (z > 0).astype(np.int8)


def loss_matrix(params: ModelParams, x, y: np.ndarray) -> float:
    z, _ = _logits(params, x)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))


def loss_and_grad_matrix(params: ModelParams, x, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its analytic gradient wrt flat."""
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[1] != params.input_dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match model dim {params.input_dim}")
    y = np.asarray(y, dtype=np.float64)
    z, h = _logits(params, x)
    loss = float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))
    r = (_sigmoid(z) - y) / x.shape[0]
    if params.hyper.hidden_dim == 0:
        grad_w = np.asarray(x.T @ r).ravel()
        grad = np.concatenate([grad_w, [r.sum()]])
    else:
        _, _, w2, _ = params.layers()
        dh = np.outer(r, w2.ravel()) * (1.0 - h * h)
        grad_w1 = np.asarray((x.T @ dh)).T.reshape(-1)
        grad = np.concatenate([grad_w1, dh.sum(axis=0), h.T @ r, [r.sum()]])
    return loss, grad


def loss_and_grad(params: ModelParams,
                  batch: list[tuple[FeatureVector, int]]) -> tuple[float, np.ndarray]:
    if not batch:
        raise ValueError("empty batch")
    x = stack_features([fv for fv, _ in batch])
    y = np.array([label for _, label in batch], dtype=np.float64)
    return loss_and_grad_matrix(params, x, y)


def sgd_step(params: ModelParams, grad: np.ndarray, eta: float) -> ModelParams:
    if grad.shape != params.flat.shape:
        raise ValueError("gradient dimension mismatch")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("divergence detected: non-finite gradient")
    return replace(params, flat=params.flat - eta * grad)


def grad_check(params: ModelParams, batch: list[tuple[FeatureVector, int]],
               epsilon: float, n_coords: int = 200, seed: int = 0,
               analytic_grad: np.ndarray | None = None) -> GradCheckReport:
    """Central finite differences on >= n_coords seeded random coordinates.

    analytic_grad overrides the computed gradient (negative-control hook).
    Relative error uses max(|g_a|, |g_fd|, 1e-12) as denominator.
    """
    if not 1e-8 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-8, 1e-3]")
    x = stack_features([fv for fv, _ in batch])
    y = np.array([label for _, label in batch], dtype=np.float64)
    if analytic_grad is None:
        _, analytic_grad = loss_and_grad_matrix(params, x, y)
    rng = np.random.default_rng(seed)
    coords = rng.choice(len(params.flat), size=min(n_coords, len(params.flat)), replace=False)
    worst_err, worst_coord = 0.0, int(coords[0])
    flat = params.flat
    for i in coords:
        shifted = flat.copy()
        shifted[i] = flat[i] + epsilon
        up = loss_matrix(replace(params, flat=shifted), x, y)
        shifted[i] = flat[i] - epsilon
        down = loss_matrix(replace(params, flat=shifted), x, y)
        fd = (up - down) / (2.0 * epsilon)
        err = abs(analytic_grad[i] - fd) / max(abs(analytic_grad[i]), abs(fd), 1e-12)
        if err > worst_err:
            worst_err, worst_coord = err, int(i)
    return GradCheckReport(worst_err, worst_coord)


def serialize_params(params: ModelParams) -> bytes:
    """Wire format: magic, shape count, (rows, cols) pairs, flat as
    little-endian float64. len() of this is the communication cost of one
    model transfer."""
    header = PARAMS_MAGIC + struct.pack("<I", len(params.shapes))
    for rows, cols in params.shapes:
        header += struct.pack("<II", rows, cols)
    return header + params.flat.astype("<f8").tobytes()


def deserialize_params(data: bytes, hyper: Hyper | None = None) -> ModelParams:
    if data[:4] != PARAMS_MAGIC:
        raise ValueError("bad params header")
    (n_shapes,) = struct.unpack_from("<I", data, 4)
    shapes, offset = [], 8
    for _ in range(n_shapes):
        rows, cols = struct.unpack_from("<II", data, offset)
        shapes.append((rows, cols))
        offset += 8
    flat = np.frombuffer(data[offset:], dtype="<f8").astype(np.float64)
    if len(flat) != sum(r * c for r, c in shapes):
        raise ValueError("flat length does not match shape header")
    if hyper is None:
        hidden = shapes[0][0] if len(shapes) == 4 else 0
        hyper = Hyper(hidden_dim=hidden)
    return ModelParams(flat, tuple(shapes), hyper)
