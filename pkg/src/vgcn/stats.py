"""Corpus summaries: graph sizes, degrees and node-feature entropy."""
import math

import numpy as np


def feature_entropy(p):
    """Shannon entropy in nats of a probability vector (0 log 0 taken as 0)."""
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    if not math.isclose(p.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def histogram_entropy(values, bins=10, value_range=(0.0, 1.0)):
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=value_range)
    total = counts.sum()
    if total == 0:
        return 0.0
    return feature_entropy(counts / total)


def corpus_summary(records, bins=10):
    if not records:
        return {"graphs": 0}
    nodes = np.array([r.num_nodes for r in records])
    edges = np.array([r.num_edges for r in records])
    degs = np.concatenate([np.bincount(r.edges.ravel(), minlength=r.num_nodes) for r in records])
    feats = np.concatenate([r.features for r in records])
    labels = np.bincount([r.label for r in records])
    return {
        "graphs": len(records),
        "feature_width": int(records[0].feature_width),
        "nodes_mean": float(nodes.mean()), "nodes_min": int(nodes.min()),
        "nodes_max": int(nodes.max()),
        "edges_mean": float(edges.mean()), "edges_min": int(edges.min()),
        "edges_max": int(edges.max()),
        "degree_mean": float(2 * edges.sum() / nodes.sum()),
        "degree_min": int(degs.min()), "degree_max": int(degs.max()),
        "isolated_nodes": int((degs == 0).sum()),
        "label_counts": labels.tolist(),
        "feature_entropy": [histogram_entropy(feats[:, j], bins) for j in range(feats.shape[1])],
    }
