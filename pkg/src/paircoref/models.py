"""Dense-layer models with hand-derived gradients.

Five architectures share one parameter container:

    logreg     one linear layer over the full pair vector
    mlp        pair vector -> 500 -> 200 -> 100 -> 1, ReLU between,
               linear score output
    two_tower  one ReLU stack per mention (tower input -> 500 -> 200 ->
               linear 100); the score is the dot product of the two
               tower outputs
    score_sum  an mlp and a two_tower trained jointly; scores add
    gated      an mlp, a two_tower and a linear gate over the pair
               vector; the output probability is
               g*sigmoid(s1) + (1-g)*sigmoid(s2)

All score-producing kinds train on a numerically stable softplus form of
weighted cross entropy; the gated kind trains in probability space with
an epsilon clamp because its output is a probability mixture, not a
logit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, FormatError
from .features import FeatureSchema

KINDS = ("logreg", "mlp", "two_tower", "score_sum", "gated")
SCORE_KINDS = ("logreg", "mlp", "two_tower", "score_sum")
DEFAULT_HIDDEN = (500, 200, 100)
STACK_ORDER = ("scorer", "ant_tower", "ana_tower", "gate")

CHECKPOINT_MAGIC = b"PCMODEL\x01"
CHECKPOINT_VERSION = 1


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass(frozen=True)
class DropoutSpec:
    """Inverted dropout; ``apply_layers`` indexes hidden activations per stack."""

    rate: float = 0.0
    apply_layers: frozenset[int] = frozenset({0})

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class LossSpec:
    """Weighted cross entropy; the weight multiplies the positive-class term."""

    positive_weight: float = 1.0
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.positive_weight <= 0:
            raise ValueError("positive_weight must be > 0")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must be in (0, 0.5)")


@dataclass
class ModelParams:
    kind: str
    input_dim: int
    hidden: tuple[int, ...]
    ant_index: np.ndarray | None
    ana_index: np.ndarray | None
    stacks: dict[str, list[DenseLayer]]

    def iter_layers(self) -> Iterator[tuple[str, int, DenseLayer]]:
        for name in STACK_ORDER:
            if name in self.stacks:
                for i, layer in enumerate(self.stacks[name]):
                    yield name, i, layer

    def n_parameters(self) -> int:
        return sum(layer.weights.size + layer.bias.size for _, _, layer in self.iter_layers())


def stack_shapes(
    kind: str, input_dim: int, tower_dim: int | None, hidden: Sequence[int]
) -> dict[str, list[tuple[int, int]]]:
    """(out, in) shapes per stack, in declaration order."""
    hidden = tuple(hidden)
    mlp_dims = (input_dim, *hidden, 1)
    mlp = [(mlp_dims[i + 1], mlp_dims[i]) for i in range(len(mlp_dims) - 1)]
    shapes: dict[str, list[tuple[int, int]]] = {}
    if kind == "logreg":
        shapes["scorer"] = [(1, input_dim)]
        return shapes
    if kind in ("mlp", "score_sum", "gated"):
        shapes["scorer"] = mlp
    if kind in ("two_tower", "score_sum", "gated"):
        if tower_dim is None:
            raise ConfigError(f"kind {kind!r} needs tower index arrays")
        tower_dims = (tower_dim, *hidden)
        tower = [(tower_dims[i + 1], tower_dims[i]) for i in range(len(tower_dims) - 1)]
        shapes["ant_tower"] = tower
        shapes["ana_tower"] = list(tower)
    if kind == "gated":
        shapes["gate"] = [(1, input_dim)]
    if not shapes:
        raise ConfigError(f"unknown model kind {kind!r}")
    return shapes


def init_params(
    kind: str,
    schema: FeatureSchema | None = None,
    seed=0,
    *,
    input_dim: int | None = None,
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    dtype=np.float32,
) -> ModelParams:
    """He-normal weights before ReLU, Xavier-normal on linear outputs, zero biases."""
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    ant_index = ana_index = None
    tower_dim = None
    if schema is not None:
        input_dim = schema.total_dim
        ant_index, ana_index = schema.tower_indices()
        tower_dim = schema.tower_dim
    if input_dim is None:
        raise ConfigError("either schema or input_dim is required")
    if kind in ("two_tower", "score_sum", "gated") and ant_index is None:
        raise ConfigError(f"kind {kind!r} requires a schema with tower sections")
    rng = np.random.default_rng(seed)
    stacks: dict[str, list[DenseLayer]] = {}
    for name, shapes in stack_shapes(kind, input_dim, tower_dim, hidden).items():
        layers = []
        for i, (out_dim, in_dim) in enumerate(shapes):
            if i < len(shapes) - 1:
                std = np.sqrt(2.0 / in_dim)  # feeds a ReLU
            else:
                std = np.sqrt(2.0 / (in_dim + out_dim))
            weights = rng.normal(0.0, std, size=(out_dim, in_dim)).astype(dtype)
            bias = np.zeros(out_dim, dtype=dtype)
            layers.append(DenseLayer(weights, bias))
        stacks[name] = layers
    return ModelParams(kind, input_dim, tuple(hidden), ant_index, ana_index, stacks)


@dataclass
class _LayerCache:
    inputs: np.ndarray  # activation consumed by the layer (post-dropout)
    z: np.ndarray  # pre-activation
    mask: np.ndarray | None  # inverted-dropout mask applied to this layer's output


@dataclass
class ForwardResult:
    kind: str
    score: np.ndarray | None  # per-row logit; None for the gated kind
    prob: np.ndarray
    cache: dict


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _stack_forward(
    layers: list[DenseLayer],
    x: np.ndarray,
    train: bool,
    dropout: DropoutSpec | None,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, list[_LayerCache]]:
    caches: list[_LayerCache] = []
    a = x
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        z = a @ layer.weights.T + layer.bias
        h = z if i == last else np.maximum(z, 0.0)
        mask = None
        if (
            train
            and dropout is not None
            and dropout.rate > 0.0
            and i != last
            and i in dropout.apply_layers
        ):
            keep = 1.0 - dropout.rate
            mask = (rng.random(h.shape) < keep).astype(h.dtype) / h.dtype.type(keep)
            h = h * mask
        caches.append(_LayerCache(inputs=a, z=z, mask=mask))
        a = h
    return a, caches


def _stack_backward(
    layers: list[DenseLayer], caches: list[_LayerCache], d_out: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(layers)
    d = d_out
    last = len(layers) - 1
    for i in range(last, -1, -1):
        c = caches[i]
        if i != last:
            if c.mask is not None:
                d = d * c.mask
            d = d * (c.z > 0)
        grads[i] = (d.T @ c.inputs, d.sum(axis=0))
        if i > 0:
            d = d @ layers[i].weights
    return grads  # type: ignore[return-value]


def forward(
    params: ModelParams,
    x: np.ndarray,
    mode: str = "infer",
    dropout: DropoutSpec | None = None,
    rng=None,
) -> ForwardResult:
    """Batch forward pass; caches every intermediate needed by :func:`backward`."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.atleast_2d(np.asarray(x))
    if x.shape[1] != params.input_dim:
        raise ConfigError(f"input dim {x.shape[1]} != model dim {params.input_dim}")
    train = mode == "train"
    use_dropout = train and dropout is not None and dropout.rate > 0.0
    gen = _as_rng(rng) if use_dropout else None
    cache: dict = {"x": x, "stack_caches": {}}

    def run(name: str, inputs: np.ndarray) -> np.ndarray:
        out, caches = _stack_forward(params.stacks[name], inputs, train, dropout, gen)
        cache["stack_caches"][name] = caches
        return out

    kind = params.kind
    s1 = s2 = None
    if kind in ("logreg", "mlp", "score_sum", "gated"):
        s1 = run("scorer", x)[:, 0]
    if kind in ("two_tower", "score_sum", "gated"):
        xa = x[:, params.ant_index]
        xb = x[:, params.ana_index]
        u = run("ant_tower", xa)
        v = run("ana_tower", xb)
        cache["u"], cache["v"] = u, v
        s2 = np.einsum("bi,bi->b", u, v)

    if kind in ("logreg", "mlp"):
        score = s1
        prob = expit(score)
    elif kind == "two_tower":
        score = s2
        prob = expit(score)
    elif kind == "score_sum":
        score = s1 + s2
        cache["s1"], cache["s2"] = s1, s2
        prob = expit(score)
    elif kind == "gated":
        zg = run("gate", x)[:, 0]
        g = expit(zg)
        p1, p2 = expit(s1), expit(s2)
        prob = g * p1 + (1.0 - g) * p2
        cache.update(s1=s1, s2=s2, g=g, p1=p1, p2=p2, prob=prob)
        score = None
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    if score is not None:
        cache["score"] = score
    return ForwardResult(kind=kind, score=score, prob=prob, cache=cache)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def weighted_ce_from_scores(scores: np.ndarray, y: np.ndarray, spec: LossSpec) -> float:
    """Mean of w*y*softplus(-s) + (1-y)*softplus(s); stable for large |s|."""
    w = spec.positive_weight
    per = w * y * _softplus(-scores) + (1.0 - y) * _softplus(scores)
    return float(np.mean(per))


def weighted_ce_from_probs(probs: np.ndarray, y: np.ndarray, spec: LossSpec) -> float:
    """Mean of -w*y*log(p) - (1-y)*log(1-p) with p clamped to [eps, 1-eps]."""
    w = spec.positive_weight
    p = np.clip(probs, spec.epsilon, 1.0 - spec.epsilon)
    per = -(w * y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(np.mean(per))


def loss(result: ForwardResult, y: np.ndarray, spec: LossSpec) -> float:
    y = np.asarray(y, dtype=result.prob.dtype)
    if result.score is not None:
        return weighted_ce_from_scores(result.score, y, spec)
    return weighted_ce_from_probs(result.prob, y, spec)


Gradients = dict[str, list[tuple[np.ndarray, np.ndarray]]]


def backward(params: ModelParams, cache: dict, y: np.ndarray, spec: LossSpec) -> Gradients:
    """Exact analytic gradients of the batch-mean loss for every parameter."""
    x = cache["x"]
    n = x.shape[0]
    y = np.asarray(y, dtype=x.dtype)
    w = spec.positive_weight
    grads: Gradients = {}

    def back(name: str, d_out: np.ndarray) -> None:
        grads[name] = _stack_backward(params.stacks[name], cache["stack_caches"][name], d_out)

    kind = params.kind
    if kind in SCORE_KINDS:
        s = cache["score"]
        # d(mean loss)/ds = [(1-y)*sigmoid(s) - w*y*sigmoid(-s)] / n
        gs = ((1.0 - y) * expit(s) - w * y * expit(-s)) / n
        if kind in ("logreg", "mlp"):
            back("scorer", gs[:, None])
        elif kind == "two_tower":
            back("ant_tower", gs[:, None] * cache["v"])
            back("ana_tower", gs[:, None] * cache["u"])
        else:  # score_sum: ds1 = ds2 = gs
            back("scorer", gs[:, None])
            back("ant_tower", gs[:, None] * cache["v"])
            back("ana_tower", gs[:, None] * cache["u"])
    elif kind == "gated":
        p1, p2, g, prob = cache["p1"], cache["p2"], cache["g"], cache["prob"]
        inside = (prob > spec.epsilon) & (prob < 1.0 - spec.epsilon)
        pc = np.clip(prob, spec.epsilon, 1.0 - spec.epsilon)
        dp = np.where(inside, (-w * y / pc + (1.0 - y) / (1.0 - pc)), 0.0) / n
        ds1 = dp * g * p1 * (1.0 - p1)
        ds2 = dp * (1.0 - g) * p2 * (1.0 - p2)
        dzg = dp * (p1 - p2) * g * (1.0 - g)
        back("scorer", ds1[:, None])
        back("ant_tower", ds2[:, None] * cache["v"])
        back("ana_tower", ds2[:, None] * cache["u"])
        back("gate", dzg[:, None])
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    return grads


def zero_gradients(params: ModelParams) -> Gradients:
    return {
        name: [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]
        for name, layers in params.stacks.items()
    }


def sgd_step(
    params: ModelParams,
    grads: Gradients,
    lr: float,
    momentum: float = 0.0,
    velocity: Gradients | None = None,
) -> Gradients:
    """Classical momentum update in place: v = mu*v + g; w -= lr*v.

    Returns the velocity state to thread through subsequent steps;
    momentum 0 reduces to vanilla SGD.
    """
    if lr <= 0:
        raise ValueError("learning rate must be > 0")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must be in [0, 1)")
    if velocity is None:
        velocity = zero_gradients(params)
    for name, layers in params.stacks.items():
        for i, layer in enumerate(layers):
            gw, gb = grads[name][i]
            vw, vb = velocity[name][i]
            vw *= momentum
            vw += gw
            vb *= momentum
            vb += gb
            layer.weights -= lr * vw
            layer.bias -= lr * vb
    return velocity


def finite_difference_grads(
    params: ModelParams, x: np.ndarray, y: np.ndarray, spec: LossSpec, h: float = 1e-4
) -> Gradients:
    """Central-difference gradients of the batch-mean loss; the test oracle."""

    def eval_loss() -> float:
        return loss(forward(params, x, mode="infer"), y, spec)

    grads: Gradients = {}
    for name, layers in params.stacks.items():
        grads[name] = []
        for layer in layers:
            pair = []
            for arr in (layer.weights, layer.bias):
                g = np.zeros_like(arr)
                flat = arr.reshape(-1)
                gflat = g.reshape(-1)
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + h
                    plus = eval_loss()
                    flat[j] = orig - h
                    minus = eval_loss()
                    flat[j] = orig
                    gflat[j] = (plus - minus) / (2.0 * h)
                pair.append(g)
            grads[name].append((pair[0], pair[1]))
    return grads


def _max_relative_error(analytic: Gradients, numeric: Gradients) -> float:
    worst = 0.0
    for name in analytic:
        for (aw, ab), (nw, nb) in zip(analytic[name], numeric[name]):
            for a, f in ((aw, nw), (ab, nb)):
                # floor keeps finite-difference roundoff from dominating
                # components where the true gradient vanishes
                denom = np.maximum(np.abs(a) + np.abs(f), 1e-2)
                worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def _min_hidden_preactivation(params: ModelParams, cache: dict) -> float:
    best = np.inf
    for name, caches in cache["stack_caches"].items():
        last = len(caches) - 1
        for i, c in enumerate(caches):
            if i != last:  # only ReLU layers have kinks
                best = min(best, float(np.min(np.abs(c.z))))
    return best


def gradient_check(
    kind: str,
    seed: int = 0,
    h: float = 1e-4,
    batch: int = 6,
    embedding_dim: int = 2,
    hidden: Sequence[int] = (8, 6, 4),
    positive_weight: float = 1.7,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in double precision at shrunken dims; probe points are resampled
    while any ReLU pre-activation sits within 10*h of its kink.
    """
    schema = FeatureSchema(embedding_dim=embedding_dim)
    params = init_params(kind, schema, seed=seed, hidden=hidden, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    spec = LossSpec(positive_weight=positive_weight)
    for _ in range(100):
        x = rng.uniform(-1.0, 1.0, size=(batch, schema.total_dim))
        y = rng.integers(0, 2, size=batch).astype(np.float64)
        fwd = forward(params, x, mode="infer")
        if _min_hidden_preactivation(params, fwd.cache) > 10.0 * h:
            break
    else:
        raise RuntimeError("could not find a probe point away from ReLU kinks")
    analytic = backward(params, fwd.cache, y, spec)
    numeric = finite_difference_grads(params, x, y, spec, h=h)
    return _max_relative_error(analytic, numeric)


def save_checkpoint(params: ModelParams, path) -> None:
    """Binary checkpoint: magic, format version, structure header, float32 arrays."""
    header = {
        "kind": params.kind,
        "input_dim": params.input_dim,
        "hidden": list(params.hidden),
        "ant_index": None if params.ant_index is None else params.ant_index.tolist(),
        "ana_index": None if params.ana_index is None else params.ana_index.tolist(),
        "stacks": [
            [name, [[l.weights.shape[0], l.weights.shape[1]] for l in params.stacks[name]]]
            for name in STACK_ORDER
            if name in params.stacks
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for name, _, layer in params.iter_layers():
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise FormatError(f"{path}: truncated version field")
        (version,) = struct.unpack("<I", raw)
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise FormatError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<I", raw)
        header_bytes = fh.read(hlen)
        if len(header_bytes) != hlen:
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(header_bytes)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: corrupt header: {exc}") from exc
        stacks: dict[str, list[DenseLayer]] = {}
        for name, shapes in header["stacks"]:
            layers = []
            for out_dim, in_dim in shapes:
                wb = fh.read(out_dim * in_dim * 4)
                bb = fh.read(out_dim * 4)
                if len(wb) != out_dim * in_dim * 4 or len(bb) != out_dim * 4:
                    raise FormatError(f"{path}: truncated parameter arrays for stack {name!r}")
                weights = np.frombuffer(wb, dtype="<f4").reshape(out_dim, in_dim).copy()
                bias = np.frombuffer(bb, dtype="<f4").copy()
                layers.append(DenseLayer(weights, bias))
            stacks[name] = layers
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after parameter arrays")
    ant = header["ant_index"]
    ana = header["ana_index"]
    return ModelParams(
        kind=header["kind"],
        input_dim=int(header["input_dim"]),
        hidden=tuple(header["hidden"]),
        ant_index=None if ant is None else np.asarray(ant, dtype=np.int64),
        ana_index=None if ana is None else np.asarray(ana, dtype=np.int64),
        stacks=stacks,
    )
