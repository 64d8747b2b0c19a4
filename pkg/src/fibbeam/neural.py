"""Numpy multilayer perceptrons with softmax outputs and multi-label cross-entropy.

Architecture: ``input -> dense(n_h) -> ReLU -> [concat embedding(beam)] ->
(N_h - 1) x [dense(n_h) -> ReLU] -> dense(output) -> softmax``. The embedding
table (vocabulary = number of AP beams, width ``n_h // 2``) is only present for
networks conditioned on an AP beam index.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .antenna import Device
from .beamcore import joint_probability, postprocess

LOG_FLOOR = 1e-12


class NumericalError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class NetShape:
    input_dim: int
    output_dim: int
    hidden_layers: int = 5
    hidden_width: int = 128
    embedding_vocab: int | None = None

    def __post_init__(self) -> None:
        dims = (self.input_dim, self.output_dim, self.hidden_layers, self.hidden_width)
        if any(int(d) != d or d < 1 for d in dims):
            raise ValueError(f"network dimensions must be positive integers: {self}")
        if self.embedding_vocab is not None and (self.embedding_vocab < 1 or self.hidden_width < 2):
            raise ValueError("embedding needs vocab >= 1 and hidden_width >= 2")

    @property
    def embedding_dim(self) -> int:
        return self.hidden_width // 2 if self.embedding_vocab is not None else 0

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [(self.input_dim, self.hidden_width)]
        prev = self.hidden_width + self.embedding_dim
        for _ in range(self.hidden_layers - 1):
            dims.append((prev, self.hidden_width))
            prev = self.hidden_width
        dims.append((prev, self.output_dim))
        return dims


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class MlpParams:
    shape: NetShape
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    embedding: np.ndarray | None = None
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def arrays(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order (weights, biases, embedding)."""
        out = [*self.weights, *self.biases]
        if self.embedding is not None:
            out.append(self.embedding)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.shape,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.embedding is None else self.embedding.copy(),
            self.feature_mean,
            self.feature_std,
            dict(self.meta),
        )


def init_params(shape: NetShape, rng: np.random.Generator) -> MlpParams:
    """He-normal weights, zero biases, uniform(-0.05, 0.05) embedding."""
    weights, biases = [], []
    for fan_in, fan_out in shape.layer_dims():
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    emb = None
    if shape.embedding_vocab is not None:
        emb = rng.uniform(-0.05, 0.05, size=(shape.embedding_vocab, shape.embedding_dim))
    return MlpParams(shape, weights, biases, emb)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _prepare(params: MlpParams, x, beam_index):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.shape.input_dim:
        raise ValueError(f"expected {params.shape.input_dim} features, got {x.shape[1]}")
    if params.feature_mean is not None:
        x = (x - params.feature_mean) / params.feature_std
    has_emb = params.embedding is not None
    if has_emb != (beam_index is not None):
        raise ValueError("beam_index must be given exactly when the network has an embedding")
    idx = None
    if has_emb:
        idx = np.broadcast_to(np.asarray(beam_index, dtype=int), (len(x),))
        if np.any(idx < 0) or np.any(idx >= params.shape.embedding_vocab):
            raise ValueError("beam_index outside the embedding vocabulary")
    return x, idx, single


def _forward(params: MlpParams, x: np.ndarray, idx):
    """Return logits and the cache needed for backprop."""
    inputs, pre = [], []
    a = x
    n = len(params.weights)
    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ W + b
        if layer == n - 1:
            return z, (inputs, pre)
        pre.append(z)
        a = np.maximum(z, 0.0)
        if layer == 0 and idx is not None:
            a = np.concatenate([a, params.embedding[idx]], axis=1)
    raise AssertionError("unreachable")


def forward(params: MlpParams, x, beam_index=None) -> np.ndarray:
    """Softmax probabilities for one feature vector ``(d,)`` or a batch ``(B, d)``."""
    x, idx, single = _prepare(params, x, beam_index)
    logits, _ = _forward(params, x, idx)
    p = softmax(logits)
    return p[0] if single else p


def _normalise_labels(label: np.ndarray) -> np.ndarray:
    label = np.asarray(label, dtype=float)
    if np.any(label < 0):
        raise ValueError("labels must be non-negative")
    s = np.sum(label, axis=-1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError("every label needs a positive sum")
    return label / s


def cross_entropy(probs, label) -> float | np.ndarray:
    """``-sum(L~ log p)`` with ``L~`` the label scaled to sum one; per row for batches."""
    lt = _normalise_labels(label)
    return -np.sum(lt * np.log(np.maximum(probs, LOG_FLOOR)), axis=-1)


def gradient(params: MlpParams, x, labels, beam_index=None) -> tuple[float, list[np.ndarray]]:
    """Mean batch loss and its gradients, ordered like :meth:`MlpParams.arrays`."""
    x, idx, _ = _prepare(params, x, beam_index)
    labels = np.atleast_2d(labels)
    if len(labels) != len(x) or len(x) == 0:
        raise ValueError("need a non-empty batch with one label per sample")
    lt = _normalise_labels(labels)
    logits, (inputs, pre) = _forward(params, x, idx)
    p = softmax(logits)
    batch = len(x)
    loss = float(np.mean(-np.sum(lt * np.log(np.maximum(p, LOG_FLOOR)), axis=1)))

    n = len(params.weights)
    dW: list[np.ndarray] = [None] * n
    db: list[np.ndarray] = [None] * n
    d_emb = None
    delta = (p - lt) / batch
    for layer in range(n - 1, -1, -1):
        dW[layer] = inputs[layer].T @ delta
        db[layer] = delta.sum(axis=0)
        if layer == 0:
            break
        da = delta @ params.weights[layer].T
        if layer == 1 and idx is not None:
            h = params.shape.hidden_width
            d_emb = np.zeros_like(params.embedding)
            np.add.at(d_emb, idx, da[:, h:])
            da = da[:, :h]
        delta = da * (pre[layer - 1] > 0.0)
    grads = [*dW, *db]
    if params.embedding is not None:
        grads.append(d_emb)
    return loss, grads


class Adam:
    def __init__(self, arrays: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            a -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def train(
    x: np.ndarray,
    labels: np.ndarray,
    shape: NetShape,
    cfg: TrainConfig,
    beam_index: np.ndarray | None = None,
    standardize: bool = True,
) -> tuple[MlpParams, list[float]]:
    """Mini-batch Adam on the mean multi-label cross-entropy.

    Returns the trained parameters and the epoch-mean training loss per epoch.
    Deterministic for a given ``cfg.seed``.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if len(x) == 0:
        raise ValueError("empty training set")
    if x.shape[1] != shape.input_dim or labels.shape[1] != shape.output_dim:
        raise ValueError(f"data shapes {x.shape}, {labels.shape} do not match {shape}")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(shape, rng)
    if standardize:
        params.feature_mean = x.mean(axis=0)
        std = x.std(axis=0)
        params.feature_std = np.where(std > 0, std, 1.0)
    params.meta = {"train_config": asdict(cfg), "train_config_digest": cfg.digest(), "seed": cfg.seed}
    arrays = params.arrays()
    opt = Adam(arrays, cfg)
    trace: list[float] = []
    n = len(x)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            b = order[start : start + cfg.batch_size]
            bi = None if beam_index is None else beam_index[b]
            loss, grads = gradient(params, x[b], labels[b], bi)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}, batch starting {start}")
            opt.step(arrays, grads)
            total += loss * len(b)
        trace.append(total / n)
    params.meta["loss_trace"] = trace
    return params, trace


# --------------------------------------------------------------------------- inference


def predict_joint(net1: MlpParams, net2: MlpParams, x, device: Device | None = None) -> np.ndarray:
    """Joint pair probabilities ``(B, N_AP, N_UT)`` from the two-stage networks.

    ``net2`` is evaluated once per AP beam. Its output is over grid directions when
    ``device`` is given (collapsed with the device's map) and over UT beams otherwise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p_ap = forward(net1, x)
    n_ap = p_ap.shape[1]
    xs = np.repeat(x, n_ap, axis=0)
    beams = np.tile(np.arange(n_ap), len(x))
    cond = forward(net2, xs, beams)
    if device is not None:
        cond = postprocess(cond, device)
    cond = cond.reshape(len(x), n_ap, -1)
    return joint_probability(p_ap, cond)


def predict_sub6(params: MlpParams, h_features, device: Device | None, n_ap_beams: int) -> np.ndarray:
    """Pair probabilities ``(B, N_AP, N_UT)`` from a flat softmax over AP beams x directions.

    With ``device=None`` the output is taken to be over AP x UT beams already.
    """
    p = np.atleast_2d(forward(params, h_features))
    if p.shape[1] % n_ap_beams:
        raise ValueError(f"output size {p.shape[1]} is not a multiple of {n_ap_beams} AP beams")
    per_ap = p.shape[1] // n_ap_beams
    if device is not None and per_ap != len(device.fib_map):
        raise ValueError(f"output size {p.shape[1]} != {n_ap_beams} x {len(device.fib_map)}")
    p = p.reshape(len(p), n_ap_beams, per_ap)
    return postprocess(p, device) if device is not None else p


# --------------------------------------------------------------------------- shapes


def indoor_shapes(n_ap: int, n_ut: int, n_fib: int, hidden_layers: int = 5, hidden_width: int = 128, input_dim: int = 9):
    """Shapes of NET_I, the generic NET_II and the device-specific NET_II."""
    kw = dict(hidden_layers=hidden_layers, hidden_width=hidden_width)
    return {
        "net1": NetShape(input_dim, n_ap, **kw),
        "net2_generic": NetShape(input_dim, n_fib, embedding_vocab=n_ap, **kw),
        "net2_specific": NetShape(input_dim, n_ut, embedding_vocab=n_ap, **kw),
    }


def sub6_shapes(input_dim: int, n_ap: int, n_ut: int, n_fib: int, hidden_layers: int = 5, hidden_width: int = 128):
    kw = dict(hidden_layers=hidden_layers, hidden_width=hidden_width)
    return {
        "generic": NetShape(input_dim, n_ap * n_fib, **kw),
        "specific": NetShape(input_dim, n_ap * n_ut, **kw),
    }


def build_baseline_specific(scenario: str, **dims) -> NetShape:
    """Device-specific counterpart of the generic net for ``indoor`` or ``sub6`` scenarios."""
    if scenario == "indoor":
        return indoor_shapes(dims["n_ap"], dims["n_ut"], dims.get("n_fib", 1), input_dim=dims.get("input_dim", 9))[
            "net2_specific"
        ]
    if scenario == "sub6":
        return sub6_shapes(dims["input_dim"], dims["n_ap"], dims["n_ut"], dims.get("n_fib", 1))["specific"]
    raise ValueError(f"unknown scenario {scenario!r}")


# --------------------------------------------------------------------------- persistence


def save_model(params: MlpParams, path) -> None:
    """Write an ``.npz`` holding every array plus a JSON ``meta`` document."""
    arrays = {f"W{i}": w for i, w in enumerate(params.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(params.biases)})
    if params.embedding is not None:
        arrays["embedding"] = params.embedding
    if params.feature_mean is not None:
        arrays["feature_mean"] = params.feature_mean
        arrays["feature_std"] = params.feature_std
    meta = {"shape": asdict(params.shape), **params.meta}
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> MlpParams:
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        shape = NetShape(**meta.pop("shape"))
        n = len(shape.layer_dims())
        return MlpParams(
            shape,
            [z[f"W{i}"] for i in range(n)],
            [z[f"b{i}"] for i in range(n)],
            z["embedding"] if "embedding" in z else None,
            z["feature_mean"] if "feature_mean" in z else None,
            z["feature_std"] if "feature_std" in z else None,
            meta,
        )
