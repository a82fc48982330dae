"""Two-layer mean-aggregation graph encoder trained by edge reconstruction.

Architecture (all float64)::

    h1  = relu(conv1(X, A))          40 -> 20
    h2  = relu(conv2(h1, A))         20 -> 20
    out = head(h2) + residual(X)     20 -> 3, 40 -> 3

where conv(H, A)_v = W_self H_v + W_neigh mean_{u in N(v)} H_u + b and an empty
neighbourhood aggregates to zero. Gradients are derived by hand; see
``gradient_check`` for the finite-difference cross-check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .graph import CollectiveGraph, adjacency_matrix, feature_matrix

MODEL_FORMAT_VERSION = 1
INPUT_DIM, HIDDEN_DIM, OUTPUT_DIM = 40, 20, 3

PARAM_SHAPES = {
    "conv1.w_self": (HIDDEN_DIM, INPUT_DIM),
    "conv1.w_neigh": (HIDDEN_DIM, INPUT_DIM),
    "conv1.bias": (HIDDEN_DIM,),
    "conv2.w_self": (HIDDEN_DIM, HIDDEN_DIM),
    "conv2.w_neigh": (HIDDEN_DIM, HIDDEN_DIM),
    "conv2.bias": (HIDDEN_DIM,),
    "head.weight": (OUTPUT_DIM, HIDDEN_DIM),
    "head.bias": (OUTPUT_DIM,),
    "residual.weight": (OUTPUT_DIM, INPUT_DIM),
    "residual.bias": (OUTPUT_DIM,),
}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class EncoderModel:
    params: dict[str, np.ndarray]
    seed: int = 0

    @classmethod
    def init(cls, seed: int = 0) -> EncoderModel:
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in PARAM_SHAPES.items():
            if len(shape) == 2:
                limit = math.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, size=shape)
            else:
                params[name] = np.zeros(shape)
        return cls(params, seed)

    @classmethod
    def zeros(cls) -> EncoderModel:
        return cls({n: np.zeros(s) for n, s in PARAM_SHAPES.items()})

    def copy(self) -> EncoderModel:
        return EncoderModel({k: v.copy() for k, v in self.params.items()}, self.seed)

    def to_dict(self) -> dict:
        return {
            "format": "graph-encoder",
            "version": MODEL_FORMAT_VERSION,
            "seed": self.seed,
            "dims": {"input": INPUT_DIM, "hidden": HIDDEN_DIM, "output": OUTPUT_DIM},
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> EncoderModel:
        if data.get("format") != "graph-encoder" or data.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not a supported graph-encoder model document")
        params = {}
        for name, shape in PARAM_SHAPES.items():
            entry = data["params"][name]
            if tuple(entry["shape"]) != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {entry['shape']}")
            params[name] = np.array(entry["data"], dtype=np.float64).reshape(shape)
        return cls(params, data.get("seed", 0))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> EncoderModel:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def mean_operator(adjacency: np.ndarray) -> np.ndarray:
    """Row-normalized adjacency; rows of isolated nodes stay zero."""
    deg = adjacency.sum(axis=1)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return adjacency * inv[:, None]


def _linear(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """H @ W.T with a fixed per-element reduction order.

    BLAS kernels may round a row differently depending on where it sits in
    the batch; einsum without path optimisation keeps each output row a
    function of its input row only.
    """
    return np.einsum("ni,oi->no", H, W)


def neighbor_mean(H: np.ndarray, adjacency: np.ndarray) -> np.ndarray:
    """Mean of neighbour rows, summed in a canonical (value-sorted) order.

    Equal to ``mean_operator(adjacency) @ H`` up to rounding, but the result
    for a node does not depend on how the other nodes are numbered, which
    keeps relabelled graphs bit-identical.
    """
    n = H.shape[0]
    out = np.zeros_like(H)
    rows, cols = np.nonzero(adjacency)
    if rows.size == 0:
        return out
    rank = np.empty(n, dtype=np.int64)
    rank[np.lexsort(H.T[::-1])] = np.arange(n)
    cols = cols[np.lexsort((rank[cols], rows))]
    deg = np.bincount(rows, minlength=n)
    has = deg > 0
    starts = (np.cumsum(deg) - deg)[has]
    out[has] = np.add.reduceat(H[cols], starts, axis=0) / deg[has, None]
    return out


def _check_inputs(features: np.ndarray, adjacency: np.ndarray) -> None:
    if features.ndim != 2 or features.shape[1] != INPUT_DIM:
        raise ValueError(f"features must be N x {INPUT_DIM}, got {features.shape}")
    n = features.shape[0]
    if adjacency.shape != (n, n):
        raise ValueError(f"adjacency must be {n} x {n}, got {adjacency.shape}")
    if not np.array_equal(adjacency, adjacency.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(adjacency) != 0):
        raise ValueError("adjacency must have a zero diagonal")
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")


def _forward(model: EncoderModel, X: np.ndarray, M: np.ndarray):
    p = model.params
    MX = neighbor_mean(X, M)
    a1 = _linear(X, p["conv1.w_self"]) + _linear(MX, p["conv1.w_neigh"]) + p["conv1.bias"]
    h1 = np.maximum(a1, 0.0)
    Mh1 = neighbor_mean(h1, M)
    a2 = _linear(h1, p["conv2.w_self"]) + _linear(Mh1, p["conv2.w_neigh"]) + p["conv2.bias"]
    h2 = np.maximum(a2, 0.0)
    out = (_linear(h2, p["head.weight"]) + p["head.bias"]) + (_linear(X, p["residual.weight"]) + p["residual.bias"])
    cache = (X, M, MX, a1, h1, Mh1, a2, h2)
    return out, cache


def sage_forward(features: np.ndarray, adjacency: np.ndarray, model: EncoderModel) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    adjacency = np.asarray(adjacency, dtype=np.float64)
    _check_inputs(features, adjacency)
    out, _ = _forward(model, features, mean_operator(adjacency))
    return out


def _backward(model: EncoderModel, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    p = model.params
    X, M, MX, a1, h1, Mh1, a2, h2 = cache
    g = {
        "head.weight": d_out.T @ h2,
        "head.bias": d_out.sum(axis=0),
        "residual.weight": d_out.T @ X,
        "residual.bias": d_out.sum(axis=0),
    }
    d_a2 = (d_out @ p["head.weight"]) * (a2 > 0)
    g["conv2.w_self"] = d_a2.T @ h1
    g["conv2.w_neigh"] = d_a2.T @ Mh1
    g["conv2.bias"] = d_a2.sum(axis=0)
    d_h1 = d_a2 @ p["conv2.w_self"] + M.T @ (d_a2 @ p["conv2.w_neigh"])
    d_a1 = d_h1 * (a1 > 0)
    g["conv1.w_self"] = d_a1.T @ X
    g["conv1.w_neigh"] = d_a1.T @ MX
    g["conv1.bias"] = d_a1.sum(axis=0)
    return g


def edge_score(x, y) -> float:
    """sigma(x . y), the reconstructed edge probability."""
    z = float(np.dot(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)))
    return _sigmoid(z)


def _sigmoid(z):
    if isinstance(z, float):
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        ez = math.exp(z)
        return ez / (1.0 + ez)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits, targets):
    """Elementwise max(z,0) - z t + log(1 + exp(-|z|))."""
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    return np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))


def _loss_and_dlogits(emb: np.ndarray, targets: np.ndarray):
    n = emb.shape[0]
    if n < 2:
        raise ValueError("reconstruction loss needs at least two nodes")
    logits = emb @ emb.T
    iu = np.triu_indices(n, k=1)
    n_pairs = iu[0].size
    loss = float(bce_with_logits(logits[iu], targets[iu]).sum() / n_pairs)
    g = (_sigmoid(logits) - targets) / n_pairs
    np.fill_diagonal(g, 0.0)
    return loss, g


def reconstruction_loss(embeddings: np.ndarray, targets: np.ndarray) -> float:
    """Mean BCE over unordered off-diagonal pairs with logits x_i . x_j."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if np.isnan(embeddings).any():
        raise ValueError("embeddings contain NaN")
    if not np.array_equal(targets, targets.T) or np.any(np.diag(targets) != 0):
        raise ValueError("targets must be symmetric with a zero diagonal")
    if not np.all((targets == 0) | (targets == 1)):
        raise ValueError("targets must be 0/1")
    return _loss_and_dlogits(embeddings, targets)[0]


def loss_and_grads(model: EncoderModel, features: np.ndarray, adjacency: np.ndarray):
    M = mean_operator(adjacency)
    emb, cache = _forward(model, features, M)
    loss, g = _loss_and_dlogits(emb, adjacency)
    # logits z_ij = e_i . e_j over unordered pairs: dL/de_i = sum_j g_ij e_j
    d_emb = g @ emb
    return loss, _backward(model, cache, d_emb)


@dataclass
class Sample:
    features: np.ndarray
    adjacency: np.ndarray
    keys: list[str] = field(default_factory=list)

    @classmethod
    def from_graph(cls, graph: CollectiveGraph) -> Sample:
        order = graph.ordering()
        return cls(feature_matrix(graph, order), adjacency_matrix(graph, order), order)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    validation_fraction: float = 0.0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


def _as_samples(subgraphs) -> list[Sample]:
    out = []
    for s in subgraphs:
        s = Sample.from_graph(s) if isinstance(s, CollectiveGraph) else s
        if s.features.shape[0] < 2:
            raise ValueError("every subgraph sample needs at least two nodes")
        _check_inputs(s.features, s.adjacency)
        out.append(s)
    return out


def mean_loss(model: EncoderModel, subgraphs) -> float:
    samples = _as_samples(subgraphs)
    return float(np.mean([
        _loss_and_dlogits(_forward(model, s.features, mean_operator(s.adjacency))[0], s.adjacency)[0]
        for s in samples
    ]))


def train(model: EncoderModel, subgraphs, config: TrainConfig = TrainConfig(), seed: int = 0):
    """Full-batch Adam, one step per subgraph per epoch.

    Returns ``(trained_model, per_epoch_mean_loss)``; the input model is not
    modified.
    """
    samples = _as_samples(subgraphs)
    if not samples:
        raise ValueError("no subgraph samples")
    model = model.copy()
    rng = np.random.default_rng(seed)
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples)) if config.shuffle else np.arange(len(samples))
        losses = []
        for idx in order:
            s = samples[idx]
            loss, grads = loss_and_grads(model, s.features, s.adjacency)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch}")
            losses.append(loss)
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            scale = config.clip_norm / norm if norm > config.clip_norm else 1.0
            step += 1
            for k, g in grads.items():
                g = g * scale
                m[k] = config.beta1 * m[k] + (1 - config.beta1) * g
                v[k] = config.beta2 * v[k] + (1 - config.beta2) * g * g
                m_hat = m[k] / (1 - config.beta1 ** step)
                v_hat = v[k] / (1 - config.beta2 ** step)
                model.params[k] = model.params[k] - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        history.append(float(np.mean(losses)))
    return model, history


def split_samples(subgraphs, fraction: float, seed: int = 0):
    """Seeded (train, validation) split of whole subgraph samples."""
    items = list(subgraphs)
    n_val = int(round(fraction * len(items)))
    perm = np.random.default_rng(seed).permutation(len(items))
    val = [items[i] for i in sorted(perm[:n_val])]
    tr = [items[i] for i in sorted(perm[n_val:])]
    return tr, val


def _clear_kinks(model: EncoderModel, X: np.ndarray, M: np.ndarray, margin: float) -> EncoderModel:
    """Shift per-unit biases so no ReLU pre-activation lies within ``margin`` of 0."""
    model = model.copy()
    shifts = np.linspace(-50 * margin, 50 * margin, 101)
    for layer, idx in (("conv1", 3), ("conv2", 6)):
        pre = _forward(model, X, M)[1][idx]
        bias = model.params[f"{layer}.bias"]
        for j in range(pre.shape[1]):
            if np.abs(pre[:, j]).min() >= margin:
                continue
            gaps = [np.abs(pre[:, j] + d).min() for d in shifts]
            bias[j] += shifts[int(np.argmax(gaps))]
    return model


def gradient_check(model: EncoderModel, subgraph, epsilon: float = 1e-5,
                   kink_margin: float = 1e-3) -> float:
    """Max elementwise |analytic - numeric| / max(1e-12, |numeric|) over all
    parameters, using central differences of the reconstruction loss.

    The check runs at a copy of ``model`` whose biases are nudged so that every
    ReLU input is at least ``kink_margin`` away from zero; finite differences
    straddling a kink would otherwise measure a different one-sided slope.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    s = subgraph if isinstance(subgraph, Sample) else Sample.from_graph(subgraph)
    X, Adj = s.features, s.adjacency
    M = mean_operator(Adj)
    if kink_margin > 0:
        model = _clear_kinks(model, X, M, kink_margin)
    _, analytic = loss_and_grads(model, X, Adj)

    def f(mdl):
        return _loss_and_dlogits(_forward(mdl, X, M)[0], Adj)[0]

    worst = 0.0
    probe = model.copy()
    for name, arr in probe.params.items():
        flat = arr.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = f(probe)
            flat[i] = orig - epsilon
            fm = f(probe)
            flat[i] = orig
            num = (fp - fm) / (2 * epsilon)
            worst = max(worst, abs(ga[i] - num) / max(1e-12, abs(num)))
    return worst


def embed_graph(model: EncoderModel, graph: CollectiveGraph) -> dict[str, np.ndarray]:
    order = graph.ordering()
    X = feature_matrix(graph, order)
    if X.ndim != 2 or X.shape[1] != INPUT_DIM:
        raise ValueError(f"node tensors must be {INPUT_DIM} wide")
    out = sage_forward(X, adjacency_matrix(graph, order), model)
    return {k: out[i] for i, k in enumerate(order)}


def roc_auc(scores_pos, scores_neg) -> float:
    """Probability a random positive outranks a random negative (ties count half)."""
    pos = np.asarray(scores_pos, dtype=np.float64)
    neg = np.asarray(scores_neg, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need both positive and negative scores")
    ranks = rankdata(np.concatenate([pos, neg]))
    r_pos = ranks[:pos.size].sum()
    return float((r_pos - pos.size * (pos.size + 1) / 2) / (pos.size * neg.size))


def link_scores(model: EncoderModel, sample: Sample):
    """Edge and non-edge scores sigma(x_i . x_j) over unordered pairs."""
    emb = sage_forward(sample.features, sample.adjacency, model)
    logits = emb @ emb.T
    iu = np.triu_indices(emb.shape[0], k=1)
    z = _sigmoid(logits[iu])
    t = sample.adjacency[iu]
    return z[t == 1], z[t == 0]
