"""Three graph-conv blocks, global mean pooling and a small MLP head.

    conv -> BN -> ELU   (x3)
    mean pool
    Linear -> BN -> ReLU -> Linear -> ReLU -> Linear

The conv flavour is chosen by ``ModelConfig.variant``.  GAT layers
concatenate their heads; GCN and NVGCN layers use the same output widths
(channels * heads) so every variant shares the head.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from ..tensor import sparse_from_edges
from . import layers as L

VARIANTS = ("gcn", "nvgcn", "gat")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "nvgcn"
    in_features: int = 3
    channels: tuple = (32, 64, 64)
    heads: int = 2
    hidden: tuple = (32, 32)
    num_classes: int = 10
    self_loop_weight: float = 6.0
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.in_features < 1 or self.num_classes < 2:
            raise ValueError("in_features must be >= 1 and num_classes >= 2")
        if not self.channels or any(c < 1 for c in tuple(self.channels) + tuple(self.hidden)):
            raise ValueError("layer widths must be positive")
        if self.self_loop_weight <= 0:
            raise ValueError("self_loop_weight must be > 0")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "hidden", tuple(int(c) for c in self.hidden))

    @property
    def conv_widths(self):
        """(in, out) feature widths of each conv layer after head concatenation."""
        widths = [self.in_features] + [c * self.heads for c in self.channels]
        return list(zip(widths[:-1], widths[1:]))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class ModelState:
    config: ModelConfig
    params: dict  # name -> float64 array, insertion order is canonical
    buffers: dict = field(default_factory=dict)  # BN running statistics

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def copy(self):
        return ModelState(self.config, {k: v.copy() for k, v in self.params.items()},
                          {k: v.copy() for k, v in self.buffers.items()})


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def _add_bn(params, buffers, name, width):
    params[f"{name}.gamma"] = np.ones(width)
    params[f"{name}.beta"] = np.zeros(width)
    buffers[f"{name}.running_mean"] = np.zeros(width)
    buffers[f"{name}.running_var"] = np.ones(width)


def build_model(cfg, seed=0):
    rng = np.random.default_rng(seed)
    params, buffers = {}, {}
    for i, (fi, fo) in enumerate(cfg.conv_widths):
        params[f"conv{i}.weight"] = glorot(rng, fi, fo)
        if cfg.variant == "gat":
            per_head = fo // cfg.heads
            params[f"conv{i}.att"] = glorot(rng, per_head, 1, (cfg.heads, 2 * per_head))
        _add_bn(params, buffers, f"bn{i}", fo)
    widths = [cfg.conv_widths[-1][1]] + list(cfg.hidden) + [cfg.num_classes]
    for j, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"lin{j}.weight"] = glorot(rng, fi, fo)
        params[f"lin{j}.bias"] = np.zeros(fo)
        if j == 0:
            _add_bn(params, buffers, "head_bn", fo)
    return ModelState(cfg, params, buffers)


@dataclass
class GraphBatch:
    """Model-ready view of a Batch: features plus the variant's adjacency."""
    features: np.ndarray
    adjacency: object
    graph_id: np.ndarray
    num_graphs: int
    labels: np.ndarray = None


def prepare_batch(batch, cfg):
    """Build the adjacency each variant consumes from a graphstore Batch.

    gcn and gat use A + I; nvgcn uses A + cI.
    """
    c = cfg.self_loop_weight if cfg.variant == "nvgcn" else 1.0
    n = len(batch.features)
    adj = sparse_from_edges(batch.edges, n, c)
    return GraphBatch(np.asarray(batch.features, dtype=np.float64), adj,
                      np.asarray(batch.graph_id, dtype=np.int64), int(batch.num_graphs),
                      None if batch.labels is None else np.asarray(batch.labels, dtype=np.int64))


def _conv(state, i, adj, h):
    cfg, p = state.config, state.params
    w = p[f"conv{i}.weight"]
    if cfg.variant == "gcn":
        return L.gcn_conv(adj, h, w)
    if cfg.variant == "nvgcn":
        return L.nvgcn_conv(adj, h, w)
    return L.gat_conv(adj, h, w, p[f"conv{i}.att"], cfg.heads, cfg.negative_slope)


def _bn(state, name, x, train, momentum):
    p, b = state.params, state.buffers
    return L.batchnorm_forward(x, p[f"{name}.gamma"], p[f"{name}.beta"],
                               b[f"{name}.running_mean"], b[f"{name}.running_var"], train=train,
                               momentum=momentum)


def forward(state, gb, train=False, bn_momentum=L.BN_MOMENTUM):
    """Logits (G, classes) and the cache needed by :func:`backward`.

    In training mode the BN running statistics are updated in place.
    """
    caches = []
    h = gb.features
    if h.shape[1] != state.config.in_features:
        raise ValueError(f"model expects {state.config.in_features} features, got {h.shape[1]}")
    for i in range(len(state.config.channels)):
        z, cc = _conv(state, i, gb.adjacency, h)
        zn, bc = _bn(state, f"bn{i}", z, train, bn_momentum)
        h = L.activate(zn, "elu")
        caches.append((cc, bc, zn, h))
    pooled = L.global_mean_pool(h, gb.graph_id, gb.num_graphs)
    x = pooled
    head = []
    nlin = len(state.config.hidden) + 1
    for j in range(nlin):
        y, lc = L.linear_forward(x, state.params[f"lin{j}.weight"], state.params[f"lin{j}.bias"])
        bc = None
        if j == 0:
            y, bc = _bn(state, "head_bn", y, train, bn_momentum)
        pre = y
        if j < nlin - 1:
            y = L.activate(y, "relu")
        head.append((lc, bc, pre))
        x = y
    return x, {"convs": caches, "head": head, "graph_id": gb.graph_id, "train": train}


def backward(state, cache, dlogits):
    """Gradients for every entry of ``state.params``."""
    if not cache or "convs" not in cache:
        raise RuntimeError("backward needs the cache returned by forward")
    grads = {}
    cfg = state.config
    dx = dlogits
    nlin = len(cfg.hidden) + 1
    for j in reversed(range(nlin)):
        lc, bc, pre = cache["head"][j]
        if j < nlin - 1:
            dx = L.activate_backward(dx, pre, None, "relu")
        if bc is not None:
            dx, grads["head_bn.gamma"], grads["head_bn.beta"] = L.batchnorm_backward(dx, bc)
        dx, grads[f"lin{j}.weight"], grads[f"lin{j}.bias"] = L.linear_backward(dx, lc)
    dh = L.global_mean_pool_backward(dx, cache["graph_id"])
    for i in reversed(range(len(cfg.channels))):
        cc, bc, zn, h = cache["convs"][i]
        dz = L.activate_backward(dh, zn, h, "elu")
        dz, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = L.batchnorm_backward(dz, bc)
        if cfg.variant == "gcn":
            dh, grads[f"conv{i}.weight"] = L.gcn_conv_backward(dz, cc)
        elif cfg.variant == "nvgcn":
            dh, grads[f"conv{i}.weight"] = L.nvgcn_conv_backward(dz, cc)
        else:
            dh, grads[f"conv{i}.weight"], grads[f"conv{i}.att"] = L.gat_conv_backward(dz, cc)
    return {k: grads[k] for k in state.params}


def loss_and_grads(state, gb, train=True):
    logits, cache = forward(state, gb, train=train)
    loss, dlogits = L.cross_entropy(logits, gb.labels)
    return loss, logits, backward(state, cache, dlogits)


def recalibrate_bn(state, batches):
    """Replace BN running statistics with averages over ``batches`` (GraphBatch list).

    Batch k enters with weight 1/(k+1), so the result is the plain mean of the
    per-batch statistics computed with the current weights.
    """
    for k, gb in enumerate(batches):
        forward(state, gb, train=True, bn_momentum=1.0 / (k + 1))
    return state


def predict(state, gb):
    logits, _ = forward(state, gb, train=False)
    return logits.argmax(1)
