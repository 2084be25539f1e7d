"""Dense and sparse kernels that keep an exact count of scalar multiplications.

Counting is opt-in: kernels charge the counter installed by :func:`counting`
in the current context (thread or task), and do nothing otherwise.

    with counting() as c:
        spmm(adj, h)
    c.total, c.stages["adjacency"]
"""
import contextlib
import contextvars
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

STAGES = ("deg_scale_pre", "adjacency", "deg_scale_post", "weight")

_active = contextvars.ContextVar("mult_counter", default=None)


class MultCounter:
    def __init__(self):
        self.total = 0
        self.stages = Counter()

    def add(self, n, stage="other"):
        n = int(n)
        self.total += n
        self.stages[stage] += n

    def reset(self):
        self.total = 0
        self.stages.clear()

    def snapshot(self):
        return dict(self.stages)

    def __repr__(self):
        return f"MultCounter(total={self.total}, stages={dict(self.stages)})"


@contextlib.contextmanager
def counting(counter=None):
    counter = MultCounter() if counter is None else counter
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)


def active_counter():
    return _active.get()


def charge(n, stage):
    c = _active.get()
    if c is not None:
        c.add(n, stage)


@dataclass
class SparseAdjacency:
    """Symmetric CSR matrix with an explicit diagonal of weight ``self_loop_weight``."""
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    self_loop_weight: float = 1.0

    @property
    def nnz(self):
        return len(self.indices)

    @property
    def rows(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def row_sums(self):
        return np.add.reduceat(self.data, self.indptr[:-1]) if self.n else np.zeros(0)

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        out[self.rows, self.indices] = self.data
        return out

    def with_data(self, data):
        return SparseAdjacency(self.n, self.indptr, self.indices, data, self.self_loop_weight)

    def csr(self, data=None):
        """scipy view sharing this structure, optionally with other entry values."""
        values = self.data if data is None else data
        return sp.csr_matrix((values, self.indices, self.indptr), shape=(self.n, self.n))


def dense_matmul(a, b, stage="weight"):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    charge(a.shape[0] * a.shape[1] * b.shape[1], stage)
    return a @ b


def scale_rows(scale, h, stage):
    """diag(scale) @ h, charged one multiplication per element of ``h``."""
    h = np.asarray(h, dtype=np.float64)
    if len(scale) != h.shape[0]:
        raise ValueError(f"shape mismatch: {len(scale)} scales for {h.shape[0]} rows")
    charge(h.size, stage)
    return scale[:, None] * h


def sparse_from_edges(edges, n, self_loop_weight=1.0):
    """A + c*I for an undirected edge list; duplicate and mirrored edges collapse."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n):
        raise ValueError(f"edge index out of range for {n} nodes")
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-edges are not allowed; use self_loop_weight")
    diag = np.arange(n, dtype=np.int64)
    r = np.concatenate([e[:, 0], e[:, 1], diag])
    c = np.concatenate([e[:, 1], e[:, 0], diag])
    key = np.unique(r * n + c)
    rows, cols = np.divmod(key, n) if n else (key, key)
    data = np.where(rows == cols, float(self_loop_weight), 1.0)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return SparseAdjacency(n, indptr, cols.astype(np.int64), data, float(self_loop_weight))


def spmm(adj, h, stage="adjacency"):
    """adj @ h touching only stored entries; charges nnz * F multiplications."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != adj.n:
        raise ValueError(f"shape mismatch: {adj.n}x{adj.n} @ {h.shape}")
    charge(adj.nnz * h.shape[1], stage)
    return np.asarray(adj.csr() @ h)


def degree_normalize(adj):
    """D^-1/2 adj D^-1/2 with D the row sums of ``adj``; charges 2 * nnz."""
    d = adj.row_sums()
    if np.any(d <= 0):
        raise ValueError("degree_normalize needs strictly positive row sums")
    inv = 1.0 / np.sqrt(d)
    charge(2 * adj.nnz, "normalize")
    return adj.with_data(adj.data * inv[adj.rows] * inv[adj.indices])
