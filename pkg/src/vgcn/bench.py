"""Multiplication-count model for one graph-conv layer, plus timing comparisons.

With degree normalization a layer costs three M*F stages (two diagonal
scalings and the adjacency product, charged M*F for sparse graphs) plus the
M*F*F' weight product; without it, one M*F stage plus the weight product.
The saving is exactly 2*M*F per layer.  Measured counts charge the
adjacency stage nnz*F instead, which equals M*F only for self-loop-only
graphs.
"""
import math
from dataclasses import dataclass

import numpy as np

from .graphstore import GraphRecord
from .nn import layers as L
from .nn.model import ModelConfig, build_model
from .nn.optim import AdamState
from .tensor import counting, sparse_from_edges


@dataclass(frozen=True)
class CountModel:
    M: int
    F: int
    F_prime: int
    E: int = 0
    with_degree: bool = True

    def __post_init__(self):
        if self.M <= 0 or self.F <= 0 or self.F_prime <= 0 or self.E < 0:
            raise ValueError("M, F and F' must be positive and E non-negative")


def analytic_mult_count(model):
    base = model.M * model.F * model.F_prime
    return base + (3 if model.with_degree else 1) * model.M * model.F


def reduction_percentage(f, f_prime):
    """Headline saving 2 / (3 + F'/F), in percent.

    This is the closed form usually quoted for the cost model.  It equals
    the count-model ratio 2MF / (3MF + MFF') only when F = 1; for wider
    inputs the weight product dominates and the true saving is smaller
    (see :func:`count_model_reduction`).  ``f_prime`` may be 0 or
    ``math.inf`` to get the two limits.
    """
    if f <= 0 or f_prime < 0 or math.isnan(f_prime):
        raise ValueError("need F > 0 and F' >= 0")
    if math.isinf(f_prime):
        return 0.0
    return 200.0 / (3.0 + f_prime / f)


def count_model_reduction(f, f_prime, m=1):
    """Saving predicted by :func:`analytic_mult_count`, in percent."""
    with_deg = analytic_mult_count(CountModel(m, f, f_prime, with_degree=True))
    without = analytic_mult_count(CountModel(m, f, f_prime, with_degree=False))
    return 100.0 * (with_deg - without) / with_deg


def _structure(graph):
    if isinstance(graph, GraphRecord):
        return graph.num_nodes, graph.edges
    if hasattr(graph, "num_nodes") and hasattr(graph, "edges"):
        return graph.num_nodes, graph.edges
    m, edges = graph
    return int(m), np.asarray(edges).reshape(-1, 2)


def measured_layer_counts(graph, f, f_prime, variant, self_loop_weight=6.0, heads=1, seed=0):
    """Run one conv forward under the counter; returns {stage: count}.

    ``graph`` is a GraphRecord, a DelaunayGraph or an (M, edges) pair.
    """
    m, edges = _structure(graph)
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((m, f))
    w = rng.standard_normal((f, f_prime * (heads if variant == "gat" else 1)))
    if variant == "gcn":
        adj = sparse_from_edges(edges, m, 1.0)
        fn = lambda: L.gcn_conv(adj, h, w)  # noqa: E731
    elif variant == "nvgcn":
        adj = sparse_from_edges(edges, m, self_loop_weight)
        fn = lambda: L.nvgcn_conv(adj, h, w)  # noqa: E731
    elif variant == "gat":
        adj = sparse_from_edges(edges, m, 1.0)
        att = rng.standard_normal((heads, 2 * f_prime))
        fn = lambda: L.gat_conv(adj, h, w, att, heads)  # noqa: E731
    else:
        raise ValueError(f"unknown variant {variant!r}")
    with counting() as c:
        fn()
    return dict(c.stages)


def measured_reduction(graph, f, f_prime):
    """Percentage saving of nvgcn over gcn for this graph, from measured counts."""
    g = sum(measured_layer_counts(graph, f, f_prime, "gcn").values())
    n = sum(measured_layer_counts(graph, f, f_prime, "nvgcn").values())
    return 100.0 * (g - n) / g


def opcount_rows(records, f, ratios):
    """One row per F'/F ratio with analytic and corpus-measured reductions."""
    rows = []
    for r in ratios:
        fp = max(1, int(round(f * r)))
        gcn = nv = 0
        for rec in records:
            gcn += sum(measured_layer_counts(rec, f, fp, "gcn").values())
            nv += sum(measured_layer_counts(rec, f, fp, "nvgcn").values())
        rows.append({"ratio": r, "F": f, "F_prime": fp,
                     "analytic_pct": reduction_percentage(f, fp),
                     "count_model_pct": count_model_reduction(f, fp),
                     "measured_pct": 100.0 * (gcn - nv) / gcn if gcn else float("nan"),
                     "gcn_mults": gcn, "nvgcn_mults": nv, "difference": gcn - nv})
    return rows


def default_variants(in_features=3, heads=2):
    """The four configurations compared in the timing benchmark."""
    return {
        "nvgcn": ModelConfig("nvgcn", in_features, heads=heads),
        "gcn": ModelConfig("gcn", in_features, heads=heads),
        "gat-1head": ModelConfig("gat", in_features, heads=1),
        "gat-2head": ModelConfig("gat", in_features, heads=2),
    }


def epoch_time_bench(records, variants=None, epochs=3, seed=0, batch_size=128, warmup=1):
    """Per-epoch compute seconds for each variant on the same batches.

    Every variant sees the same shuffles.  The first ``warmup`` epochs are
    run but discarded.  Returns {name: [seconds per kept epoch]}.
    """
    from .train import TrainConfig, train_epoch  # local: train imports nn, not bench

    if variants is None:
        variants = default_variants(records[0].feature_width)
    cfg = TrainConfig(epochs=max(epochs + warmup, 1), patience=1, batch_size=batch_size,
                      seed=seed)
    out = {}
    for name, mcfg in variants.items():
        state = build_model(mcfg, seed=seed)
        opt = AdamState()
        rng = np.random.default_rng(seed)
        times = []
        for e in range(warmup + epochs):
            m = train_epoch(state, opt, records, cfg, rng, e)
            if e >= warmup:
                times.append(m.seconds)
        out[name] = times
    return out


def format_table(rows, columns):
    """Right-aligned text table; floats printed with two decimals."""
    def fmt(v):
        return f"{v:.2f}" if isinstance(v, float) else str(v)
    cells = [[str(c) for c in columns]] + [[fmt(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)

