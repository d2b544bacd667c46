"""DeepFM-lite CTR model: first-order id weights, an embedding dot product,
and an MLP over the concatenated field embeddings, trained with hand-derived
gradients and Adam on a weighted binary cross-entropy objective.

All parameters and accumulators are float64; training is single-threaded and
fully determined by (seed, data, config).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import Interaction
from .metrics import auc as auc_metric
from .reweight import WeightedSample


class TrainingError(RuntimeError):
    """Training produced a non-finite loss, gradient, or parameter."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 2048
    epochs: int = 30
    seed: int = 0
    embedding_dim: int = 64
    hidden_layers: tuple[int, ...] = (256, 128, 64)
    clip_epsilon: float = 1e-7
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 3

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.embedding_dim <= 0 or any(h <= 0 for h in self.hidden_layers):
            raise ValueError("embedding_dim and hidden layer widths must be positive")
        if not (0.0 < self.clip_epsilon < 0.01):
            raise ValueError(f"clip_epsilon must be in (0, 0.01), got {self.clip_epsilon}")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValueError("adam betas must be in (0, 1)")


class EpochStats(NamedTuple):
    epoch: int
    train_loss: float
    val_auc: float


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_bce(
    preds: Sequence[float] | np.ndarray,
    labels: Sequence[float] | np.ndarray,
    weights: Sequence[float] | np.ndarray | None = None,
    reduction: str = "sum",
) -> float:
    """Weighted binary cross-entropy. Predictions must already be in (0, 1).

    ``reduction`` is ``"sum"`` (the training objective) or ``"mean"``.
    """
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"preds/labels length mismatch: {p.shape} vs {y.shape}")
    ll = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != p.shape:
            raise ValueError(f"weights length mismatch: {w.shape} vs {p.shape}")
        ll = w * ll
    total = -float(np.sum(ll))
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total / len(p)
    raise ValueError(f"unknown reduction {reduction!r}")


class CtrModel:
    """Two-field (user, item) CTR predictor with raw-id lookup tables."""

    def __init__(
        self,
        user_ids: Sequence[int],
        item_ids: Sequence[int],
        embedding_dim: int,
        hidden_layers: tuple[int, ...],
        clip_epsilon: float,
        params: dict[str, np.ndarray],
    ):
        self.user_ids = np.unique(np.asarray(list(user_ids), dtype=np.int64))
        self.item_ids = np.unique(np.asarray(list(item_ids), dtype=np.int64))
        self.embedding_dim = int(embedding_dim)
        self.hidden_layers = tuple(int(h) for h in hidden_layers)
        self.clip_epsilon = float(clip_epsilon)
        self.params = params

    # -- construction --------------------------------------------------

    @classmethod
    def initialize(cls, user_ids: Sequence[int], item_ids: Sequence[int], cfg: TrainConfig) -> "CtrModel":
        """Seeded init: embeddings ~ U(-0.05, 0.05), MLP weights ~ fan-in-scaled
        uniform, all biases and first-order weights zero."""
        rng = np.random.default_rng([cfg.seed, 11])
        n_users = len(set(user_ids))
        n_items = len(set(item_ids))
        d = cfg.embedding_dim
        params: dict[str, np.ndarray] = {
            "global_bias": np.zeros(1),
            "w_user": np.zeros(n_users),
            "w_item": np.zeros(n_items),
            "v_user": rng.uniform(-0.05, 0.05, size=(n_users, d)),
            "v_item": rng.uniform(-0.05, 0.05, size=(n_items, d)),
        }
        widths = (2 * d,) + cfg.hidden_layers + (1,)
        for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            params[f"mlp_w{layer}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            params[f"mlp_b{layer}"] = np.zeros(fan_out)
        return cls(user_ids, item_ids, cfg.embedding_dim, cfg.hidden_layers, cfg.clip_epsilon, params)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def param_names(self) -> list[str]:
        names = ["global_bias", "w_user", "w_item", "v_user", "v_item"]
        for layer in range(len(self.hidden_layers) + 1):
            names += [f"mlp_w{layer}", f"mlp_b{layer}"]
        return names

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    # -- id translation --------------------------------------------------

    def _rows(self, ids: np.ndarray, table: np.ndarray, field: str) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(table, ids)
        pos_clipped = np.minimum(pos, len(table) - 1)
        bad = (pos >= len(table)) | (table[pos_clipped] != ids)
        if np.any(bad):
            raise ValueError(f"unknown {field} id(s): {ids[bad][:5].tolist()}")
        return pos_clipped

    def user_rows(self, user_ids: np.ndarray) -> np.ndarray:
        return self._rows(user_ids, self.user_ids, "user")

    def item_rows(self, item_ids: np.ndarray) -> np.ndarray:
        return self._rows(item_ids, self.item_ids, "item")

    # -- forward ---------------------------------------------------------

    def _forward_rows(self, u: np.ndarray, i: np.ndarray) -> tuple[np.ndarray, dict]:
        """Raw sigmoid outputs (unclipped) plus the cache backward needs."""
        p = self.params
        vu = p["v_user"][u]
        vi = p["v_item"][i]
        x = np.concatenate([vu, vi], axis=1)
        h = x
        pre_acts: list[np.ndarray] = []
        acts: list[np.ndarray] = [x]
        n_hidden = len(self.hidden_layers)
        for layer in range(n_hidden):
            z_l = h @ p[f"mlp_w{layer}"] + p[f"mlp_b{layer}"]
            pre_acts.append(z_l)
            h = np.maximum(z_l, 0.0)
            acts.append(h)
        mlp_out = (h @ p[f"mlp_w{n_hidden}"] + p[f"mlp_b{n_hidden}"])[:, 0]
        fm = np.einsum("ij,ij->i", vu, vi)
        z = p["global_bias"][0] + p["w_user"][u] + p["w_item"][i] + fm + mlp_out
        prob = _sigmoid(z)
        cache = {"u": u, "i": i, "vu": vu, "vi": vi, "pre_acts": pre_acts, "acts": acts, "prob": prob}
        return prob, cache

    def predict(self, user_ids: Sequence[int] | np.ndarray, item_ids: Sequence[int] | np.ndarray) -> np.ndarray:
        """Clipped click probabilities for raw-id batches."""
        u = self.user_rows(np.asarray(user_ids))
        i = self.item_rows(np.asarray(item_ids))
        prob, _ = self._forward_rows(u, i)
        return np.clip(prob, self.clip_epsilon, 1.0 - self.clip_epsilon)

    def forward(self, user_id: int, item_id: int) -> float:
        """Single-pair clipped click probability."""
        return float(self.predict(np.array([user_id]), np.array([item_id]))[0])

    # -- backward ----------------------------------------------------------

    def backward(
        self,
        user_ids: Sequence[int] | np.ndarray,
        item_ids: Sequence[int] | np.ndarray,
        labels: Sequence[float] | np.ndarray,
        weights: Sequence[float] | np.ndarray | None = None,
    ) -> dict[str, np.ndarray]:
        """Analytic gradients of the summed weighted BCE over the batch.

        Gradients are taken through the unclipped sigmoid; predictions are
        clipped only when the loss value itself is reported.
        """
        u = self.user_rows(np.asarray(user_ids))
        i = self.item_rows(np.asarray(item_ids))
        _, cache = self._forward_rows(u, i)
        y = np.asarray(labels, dtype=np.float64)
        w = None if weights is None else np.asarray(weights, dtype=np.float64)
        grads = self._grads_from_cache(cache, y, w)
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
        return grads

    def _grads_from_cache(self, cache: dict, y: np.ndarray, w: np.ndarray | None) -> dict[str, np.ndarray]:
        p = self.params
        u, i = cache["u"], cache["i"]
        vu, vi = cache["vu"], cache["vi"]
        g = cache["prob"] - y
        if w is not None:
            g = w * g

        grads: dict[str, np.ndarray] = {
            "global_bias": np.array([np.sum(g)]),
            "w_user": np.zeros_like(p["w_user"]),
            "w_item": np.zeros_like(p["w_item"]),
        }
        np.add.at(grads["w_user"], u, g)
        np.add.at(grads["w_item"], i, g)

        n_hidden = len(self.hidden_layers)
        delta = g[:, None]
        for layer in range(n_hidden, -1, -1):
            h_in = cache["acts"][layer]
            grads[f"mlp_w{layer}"] = h_in.T @ delta
            grads[f"mlp_b{layer}"] = delta.sum(axis=0)
            delta = delta @ p[f"mlp_w{layer}"].T
            if layer > 0:
                delta = delta * (cache["pre_acts"][layer - 1] > 0.0)

        d = self.embedding_dim
        dvu = delta[:, :d] + g[:, None] * vi
        dvi = delta[:, d:] + g[:, None] * vu
        grads["v_user"] = np.zeros_like(p["v_user"])
        grads["v_item"] = np.zeros_like(p["v_item"])
        np.add.at(grads["v_user"], u, dvu)
        np.add.at(grads["v_item"], i, dvi)
        return grads


class AdamState:
    """Per-parameter first/second moment accumulators and a step counter."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], cfg: TrainConfig) -> None:
        self.step_count += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            params[name] -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)


def _sample_arrays(
    samples: Sequence[WeightedSample] | Sequence[Interaction],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
    if isinstance(samples[0], WeightedSample):
        inter = [s.interaction for s in samples]
        weights = np.array([s.weight for s in samples], dtype=np.float64)
    else:
        inter = list(samples)
        weights = None
    users = np.array([it.user_id for it in inter], dtype=np.int64)
    items = np.array([it.item_id for it in inter], dtype=np.int64)
    labels = np.array([it.label for it in inter], dtype=np.float64)
    return users, items, labels, weights


def train(
    model: CtrModel,
    samples: Sequence[WeightedSample] | Sequence[Interaction],
    cfg: TrainConfig,
    validation: Sequence[Interaction] | None = None,
) -> tuple[CtrModel, list[EpochStats]]:
    """Seeded-shuffled minibatch Adam on the weighted BCE objective.

    Plain ``Interaction`` sequences train the literal unweighted objective.
    With validation data, stops after ``cfg.patience`` epochs without val-AUC
    improvement and restores the best-validation parameters. The trace records
    per-sample mean train loss and val AUC (NaN when no validation is given).
    """
    if not samples:
        raise ValueError("cannot train on an empty sample list")
    users, items, labels, weights = _sample_arrays(samples)
    u_rows = model.user_rows(users)
    i_rows = model.item_rows(items)

    val_arrays = None
    if validation is not None and len(validation) > 0:
        vu = np.array([it.user_id for it in validation], dtype=np.int64)
        vi = np.array([it.item_id for it in validation], dtype=np.int64)
        vy = np.array([it.label for it in validation], dtype=np.int64)
        val_arrays = (vu, vi, vy)

    rng = np.random.default_rng([cfg.seed, 101])
    adam = AdamState(model.params)
    eps = model.clip_epsilon
    n = len(labels)
    trace: list[EpochStats] = []
    best_auc = -math.inf
    best_params: dict[str, np.ndarray] | None = None
    epochs_since_best = 0

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total_loss = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            prob, cache = model._forward_rows(u_rows[idx], i_rows[idx])
            clipped = np.clip(prob, eps, 1.0 - eps)
            w_batch = None if weights is None else weights[idx]
            batch_loss = weighted_bce(clipped, labels[idx], w_batch, reduction="sum")
            if not math.isfinite(batch_loss):
                raise TrainingError(f"loss diverged at epoch {epoch}, batch {batch_no}")
            total_loss += batch_loss
            grads = model._grads_from_cache(cache, labels[idx], w_batch)
            scale = 1.0 / len(idx)
            for name, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise TrainingError(
                        f"non-finite gradient for parameter {name!r} at epoch {epoch}, batch {batch_no}"
                    )
                g *= scale
            adam.step(model.params, grads, cfg)

        for name, value in model.params.items():
            if not np.all(np.isfinite(value)):
                raise TrainingError(f"non-finite parameter {name!r} after epoch {epoch}")

        val_auc = math.nan
        if val_arrays is not None:
            vu, vi, vy = val_arrays
            val_scores = model.predict(vu, vi)
            val_auc = auc_metric(val_scores, vy)
        trace.append(EpochStats(epoch, total_loss / n, val_auc))

        if val_arrays is not None:
            if val_auc > best_auc:
                best_auc = val_auc
                best_params = model.copy_params()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= cfg.patience:
                    break

    if best_params is not None:
        model.params = best_params
    return model, trace


def write_loss_trace(path: str | Path, trace: Sequence[EpochStats]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_auc\n")
        for row in trace:
            fh.write(f"{row.epoch},{row.train_loss:.10g},{row.val_auc:.10g}\n")


# -- finite-difference reference ---------------------------------------------


def finite_difference_gradients(
    model: CtrModel,
    user_ids: np.ndarray,
    item_ids: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None,
    coords: Sequence[tuple[str, int]],
    h: float = 1e-5,
) -> list[float]:
    """Central finite differences of the summed weighted BCE at given
    (parameter name, flat index) coordinates. Only uses the forward path."""
    u = model.user_rows(np.asarray(user_ids))
    i = model.item_rows(np.asarray(item_ids))
    y = np.asarray(labels, dtype=np.float64)

    def loss() -> float:
        prob, _ = model._forward_rows(u, i)
        return weighted_bce(prob, y, weights, reduction="sum")

    out: list[float] = []
    for name, flat_idx in coords:
        arr = model.params[name]
        orig = arr.flat[flat_idx]
        arr.flat[flat_idx] = orig + h
        up = loss()
        arr.flat[flat_idx] = orig - h
        down = loss()
        arr.flat[flat_idx] = orig
        out.append((up - down) / (2.0 * h))
    return out


def gradient_check(
    n_users: int = 5,
    n_items: int = 5,
    n_points: int = 100,
    seed: int = 0,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and finite-difference gradients on
    a tiny randomly initialized model with a random weighted batch."""
    cfg = TrainConfig(embedding_dim=4, hidden_layers=(8, 4), seed=seed, epochs=1)
    model = CtrModel.initialize(range(n_users), range(n_items), cfg)
    rng = np.random.default_rng([seed, 7])
    batch = 16
    users = rng.integers(0, n_users, size=batch)
    items = rng.integers(0, n_items, size=batch)
    labels = rng.integers(0, 2, size=batch).astype(np.float64)
    weights = rng.uniform(0.2, 1.0, size=batch)

    grads = model.backward(users, items, labels, weights)
    coords: list[tuple[str, int]] = []
    names = model.param_names()
    for _ in range(n_points):
        name = names[rng.integers(0, len(names))]
        coords.append((name, int(rng.integers(0, model.params[name].size))))
    fd = finite_difference_gradients(model, users, items, labels, weights, coords, h=h)

    worst = 0.0
    for (name, flat_idx), ref in zip(coords, fd):
        analytic = grads[name].flat[flat_idx]
        denom = max(abs(analytic), abs(ref), 1e-8)
        worst = max(worst, abs(analytic - ref) / denom)
    return worst


# -- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"SAIDCKPT"
_CKPT_VERSION = 1


def save_checkpoint(model: CtrModel, path: str | Path) -> None:
    """Versioned binary checkpoint: magic, dims header, id tables, f64 arrays."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IBI", _CKPT_VERSION, 1, model.embedding_dim))
        fh.write(struct.pack("<I", len(model.hidden_layers)))
        for width in model.hidden_layers:
            fh.write(struct.pack("<I", width))
        fh.write(struct.pack("<dQQ", model.clip_epsilon, model.n_users, model.n_items))
        fh.write(model.user_ids.astype("<i8").tobytes())
        fh.write(model.item_ids.astype("<i8").tobytes())
        for name in model.param_names():
            fh.write(model.params[name].astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> CtrModel:
    path = Path(path)
    data = path.read_bytes()
    if data[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    offset = len(CKPT_MAGIC)
    version, dtype_code, dim = struct.unpack_from("<IBI", data, offset)
    offset += 9
    if version != _CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if dtype_code != 1:
        raise ValueError(f"{path}: unsupported dtype code {dtype_code}")
    (n_hidden,) = struct.unpack_from("<I", data, offset)
    offset += 4
    hidden = struct.unpack_from(f"<{n_hidden}I", data, offset) if n_hidden else ()
    offset += 4 * n_hidden
    clip_epsilon, n_users, n_items = struct.unpack_from("<dQQ", data, offset)
    offset += 24
    user_ids = np.frombuffer(data, dtype="<i8", count=n_users, offset=offset).copy()
    offset += 8 * n_users
    item_ids = np.frombuffer(data, dtype="<i8", count=n_items, offset=offset).copy()
    offset += 8 * n_items

    shapes: dict[str, tuple[int, ...]] = {
        "global_bias": (1,),
        "w_user": (n_users,),
        "w_item": (n_items,),
        "v_user": (n_users, dim),
        "v_item": (n_items, dim),
    }
    widths = (2 * dim,) + tuple(hidden) + (1,)
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        shapes[f"mlp_w{layer}"] = (fan_in, fan_out)
        shapes[f"mlp_b{layer}"] = (fan_out,)

    params: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        if offset + 8 * count > len(data):
            raise ValueError(f"{path}: truncated checkpoint at parameter {name!r}")
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += 8 * count
    return CtrModel(user_ids, item_ids, dim, tuple(hidden), clip_epsilon, params)
