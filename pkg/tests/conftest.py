import os
from pathlib import Path

import numpy as np
import pytest

from vgcn.datasets import load_dataset
from vgcn.dualgraph import image_to_graph
from vgcn.graphstore import GraphRecord, graph_to_record

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = ROOT / "data" / "mnist5k"


def random_edges(rng, m, p=0.3):
    iu, ju = np.triu_indices(m, 1)
    keep = rng.random(len(iu)) < p
    return np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)


def random_record(rng, m, width=3, p=0.3, num_classes=10):
    return GraphRecord(rng.random((m, width)), random_edges(rng, m, p),
                       int(rng.integers(num_classes)))


@pytest.fixture(scope="session")
def mnist():
    if not MNIST_DIR.exists():
        pytest.skip("MNIST subset missing; run tools/extract_mnist_subset.py")
    return load_dataset(MNIST_DIR, "mnist")


@pytest.fixture(scope="session")
def mnist_order(mnist):
    """Fixed shuffle of the subset, so slices are class-balanced."""
    return np.random.default_rng(2024).permutation(len(mnist))


@pytest.fixture(scope="session")
def mnist_records(mnist, mnist_order):
    """2,500 converted graphs with default settings, in shuffled order."""
    idx = mnist_order[:2500]
    return [graph_to_record(image_to_graph(mnist.images[i]), mnist.labels[i]) for i in idx]


@pytest.fixture
def rng():
    return np.random.default_rng(int(os.environ.get("VGCN_TEST_SEED", "7")))


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar f() with respect to array x (perturbed in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def grad_rel_error(num, ana, floor=1e-6):
    """Norm-wise relative error; the floor keeps all-zero gradients comparable."""
    return float(np.linalg.norm(num - ana) /
                 max(np.linalg.norm(num), np.linalg.norm(ana), floor))


def model_grad_errors(variant, seed=0, heads=2):
    """Relative error of every parameter gradient of a small model on a 2-graph batch."""
    from vgcn.graphstore import batch_graphs
    from vgcn.nn import ModelConfig, build_model, loss_and_grads, prepare_batch

    rng = np.random.default_rng(seed)
    batch = batch_graphs([random_record(rng, 5, p=0.5), random_record(rng, 4, p=0.6)])
    cfg = ModelConfig(variant=variant, channels=(3, 4, 2), heads=heads, hidden=(5, 4))
    state = build_model(cfg, seed)
    gb = prepare_batch(batch, cfg)
    _, _, grads = loss_and_grads(state.copy(), gb)

    def loss():
        return loss_and_grads(state.copy(), gb)[0]

    return {k: grad_rel_error(numeric_grad(loss, p), grads[k]) for k, p in state.params.items()}
