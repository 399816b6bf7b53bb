"""Toy-scale hybrid training: parallel FL steps, a sequential SL chain and averaging.

Splitting a model between device and server does not change the gradient, so
the trainer only needs the mode vector, batch sizes and SL order of a round.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

DEFAULT_WIDTHS = (20, 32, 16, 4)
DEFAULT_ETA = 0.05


class TrainingDiverged(RuntimeError):
    def __init__(self, round_index: int, loss: float):
        super().__init__(f"non-finite loss {loss} at round {round_index}")
        self.round_index = round_index
        self.loss = loss


@dataclass(frozen=True)
class ToyModel:
    """Dense tanh network with a softmax output; parameters live in one flat vector."""

    widths: tuple = DEFAULT_WIDTHS

    def __post_init__(self):
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError("need at least an input and an output width")

    @property
    def num_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        chunks = []
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            chunks.append(rng.normal(0.0, 1.0 / np.sqrt(a), size=a * b))
            chunks.append(np.zeros(b))
        return np.concatenate(chunks)

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {params.shape}")
        out, pos = [], 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            w = params[pos : pos + a * b].reshape(a, b)
            pos += a * b
            out.append((w, params[pos : pos + b]))
            pos += b
        return out

    def logits(self, params, x) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        layers = self.unpack(params)
        for i, (w, b) in enumerate(layers):
            h = h @ w + b
            if i < len(layers) - 1:
                h = np.tanh(h)
        return h

    def loss(self, params, x, y) -> float:
        lp = log_softmax(self.logits(params, x), axis=1)
        return float(-lp[np.arange(len(y)), y].mean())

    def loss_and_grad(self, params, x, y) -> tuple[float, np.ndarray]:
        """Mean softmax cross-entropy and its gradient by backpropagation."""
        layers = self.unpack(params)
        acts = [np.asarray(x, dtype=float)]
        for i, (w, b) in enumerate(layers):
            z = acts[-1] @ w + b
            acts.append(np.tanh(z) if i < len(layers) - 1 else z)
        n = len(y)
        lp = log_softmax(acts[-1], axis=1)
        loss = float(-lp[np.arange(n), y].mean())
        delta = softmax(acts[-1], axis=1)
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            grads.append((acts[i].T @ delta, delta.sum(axis=0)))
            if i > 0:
                delta = (delta @ w.T) * (1.0 - acts[i] ** 2)
        flat = []
        for gw, gb in reversed(grads):
            flat.append(gw.ravel())
            flat.append(gb)
        return loss, np.concatenate(flat)


@dataclass
class SyntheticDataset:
    """Per-device shards plus a held-out evaluation split."""

    device_x: list
    device_y: list
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(y) for y in self.device_y], dtype=np.int64)

    @property
    def num_devices(self) -> int:
        return len(self.device_y)


def gaussian_mixture(num_samples: int, dim: int, num_classes: int, rng, separation: float = 1.0):
    """Balanced classes around random centres with unit isotropic noise."""
    centres = rng.normal(0.0, separation, size=(num_classes, dim))
    y = np.arange(num_samples) % num_classes
    rng.shuffle(y)
    x = centres[y] + rng.normal(size=(num_samples, dim))
    return x, y


def dirichlet_partition(labels, num_devices: int, phi: float, rng, max_resample: int = 100) -> list[np.ndarray]:
    """Split sample indices by class with Dirichlet(1/phi) device shares.

    A larger ``phi`` concentrates each class on fewer devices. Partitions that
    leave a device empty are redrawn; after ``max_resample`` attempts the
    largest shard donates samples to empty ones.
    """
    if phi <= 0:
        raise ValueError("phi must be positive")
    labels = np.asarray(labels)
    if len(labels) < num_devices:
        raise ValueError("fewer samples than devices")
    alpha = 1.0 / phi
    classes = np.unique(labels)
    for _ in range(max_resample):
        shards = [[] for _ in range(num_devices)]
        for c in classes:
            idx = np.flatnonzero(labels == c)
            rng.shuffle(idx)
            share = rng.dirichlet(np.full(num_devices, alpha))
            cuts = np.round(np.cumsum(share)[:-1] * len(idx)).astype(int)
            for k, part in enumerate(np.split(idx, cuts)):
                shards[k].extend(part.tolist())
        if all(shards):
            break
    else:
        for k in range(num_devices):
            if not shards[k]:
                donor = max(range(num_devices), key=lambda j: len(shards[j]))
                shards[k].append(shards[donor].pop())
    return [np.sort(np.array(s, dtype=np.int64)) for s in shards]


def make_synthetic_dataset(
    num_devices: int,
    total_samples: int = 2000,
    phi: float = 1.0,
    seed: int = 0,
    widths=DEFAULT_WIDTHS,
    separation: float = 1.0,
    test_fraction: float = 0.2,
) -> SyntheticDataset:
    rng = np.random.default_rng([seed, 7])
    x, y = gaussian_mixture(total_samples, widths[0], widths[-1], rng, separation)
    n_test = int(round(test_fraction * total_samples))
    parts = dirichlet_partition(y[n_test:], num_devices, phi, rng)
    xt, yt = x[n_test:], y[n_test:]
    return SyntheticDataset([xt[p] for p in parts], [yt[p] for p in parts], x[:n_test], y[:n_test], widths[-1])


def local_gradient(model: ToyModel, params, x, y, batch_indices) -> np.ndarray:
    idx = np.asarray(batch_indices, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("empty batch")
    return model.loss_and_grad(params, x[idx], y[idx])[1]


def fl_round_update(model, params, devices, batch_indices: dict, data: SyntheticDataset, eta: float) -> dict:
    """One SGD step per FL device, all from the same global parameters."""
    return {
        k: params - eta * local_gradient(model, params, data.device_x[k], data.device_y[k], batch_indices[k])
        for k in devices
    }


def sl_chain_update(model, params, order, batch_indices: dict, data: SyntheticDataset, eta: float) -> dict:
    """Sequential SGD steps along ``order``; every intermediate model is kept."""
    out = {}
    w = params
    for k in order:
        w = w - eta * local_gradient(model, w, data.device_x[k], data.device_y[k], batch_indices[k])
        out[k] = w
    return out


def aggregate(models: dict | list) -> np.ndarray:
    """Unweighted mean, summed in device-id order so the result ignores insertion order."""
    if isinstance(models, dict):
        models = [models[k] for k in sorted(models)]
    stacked = np.stack([np.asarray(m, dtype=float) for m in models])
    return stacked.mean(axis=0)


@dataclass
class TrainState:
    params: np.ndarray
    round: int = 0
    eta: float = DEFAULT_ETA
    history: list = field(default_factory=list)


class HybridTrainer:
    """Runs hybrid rounds on a synthetic dataset.

    Device batches are sampled from a stream keyed by (seed, round, device) so
    that the same device draws the same samples whatever its mode; the SL
    order has its own stream.
    """

    def __init__(self, data: SyntheticDataset, model: ToyModel | None = None, eta: float = DEFAULT_ETA, seed: int = 0):
        self.data = data
        self.model = model or ToyModel()
        self.seed = seed
        self.state = TrainState(self.model.init_params(np.random.default_rng([seed, 11])), 0, eta)

    def sample_batches(self, batches, round_index: int) -> dict:
        out = {}
        for k, size in enumerate(np.asarray(batches, dtype=np.int64)):
            n = len(self.data.device_y[k])
            if not 1 <= size <= n:
                raise ValueError(f"batch {size} for device {k} outside [1, {n}]")
            rng = np.random.default_rng([self.seed, round_index, k, 3])
            out[k] = rng.choice(n, size=size, replace=False)
        return out

    def sl_order(self, sl_devices, round_index: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, round_index, 5])
        return rng.permutation(np.asarray(sl_devices, dtype=np.int64))

    def step(self, sl_mask, batches) -> float:
        s = self.state
        sl_mask = np.asarray(sl_mask, dtype=bool)
        idx = self.sample_batches(batches, s.round)
        fl_dev = np.flatnonzero(~sl_mask)
        models = fl_round_update(self.model, s.params, fl_dev, idx, self.data, s.eta)
        order = self.sl_order(np.flatnonzero(sl_mask), s.round)
        models.update(sl_chain_update(self.model, s.params, order, idx, self.data, s.eta))
        s.params = aggregate(models)
        s.round += 1
        loss = self.test_loss()
        if not np.isfinite(loss):
            raise TrainingDiverged(s.round, loss)
        s.history.append(loss)
        return loss

    def test_loss(self) -> float:
        return self.model.loss(self.state.params, self.data.test_x, self.data.test_y)


def run_hsfl_training(trainer: HybridTrainer, schedule, rounds: int, target_loss: float | None = None):
    """Train for up to ``rounds`` rounds of ``schedule(t) -> (sl_mask, batches)``.

    Returns the first round (1-based) whose held-out loss is at most
    ``target_loss`` (``None`` if never reached) and the loss curve. Training
    stops early once the target is met.
    """
    hit = None
    for t in range(rounds):
        sl, batches = schedule(t)
        loss = trainer.step(sl, batches)
        if target_loss is not None and loss <= target_loss:
            hit = t + 1
            break
    return hit, list(trainer.state.history)
