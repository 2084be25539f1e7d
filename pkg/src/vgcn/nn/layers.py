"""Layer kernels with hand-written gradients.

Each ``*_conv`` / ``*_forward`` returning ``(out, cache)`` has a matching
``*_backward(dout, cache)``.  Adjacency arguments are
:class:`~vgcn.tensor.SparseAdjacency` objects that store their diagonal.
"""
import numpy as np

from ..tensor import SparseAdjacency, dense_matmul, scale_rows, sparse_from_edges, spmm

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


# activations -----------------------------------------------------------------

def activate(x, kind):
    if kind in (None, "identity"):
        return x
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(dy, x, y, kind):
    if kind in (None, "identity"):
        return dy
    if kind == "relu":
        return dy * (x > 0)
    if kind == "elu":
        return dy * np.where(x > 0, 1.0, y + 1.0)
    raise ValueError(f"unknown activation {kind!r}")


def leaky_relu(x, slope):
    return np.where(x > 0, x, slope * x)


# graph convolutions -----------------------------------------------------------

def gcn_conv(adj, h, w):
    """D^-1/2 adj D^-1/2 h w, with D the row sums of ``adj`` (normally A + I).

    The degree scaling is applied to the feature rows before and after the
    sparse product, so the multiplication counter sees the four stages
    deg_scale_pre (M*F), adjacency (nnz*F), deg_scale_post (M*F), weight (M*F*F').
    """
    deg = adj.row_sums()
    if np.any(deg <= 0):
        raise ValueError("gcn_conv needs strictly positive degrees")
    dinv = 1.0 / np.sqrt(deg)
    x1 = scale_rows(dinv, h, "deg_scale_pre")
    x2 = spmm(adj, x1, "adjacency")
    x3 = scale_rows(dinv, x2, "deg_scale_post")
    out = dense_matmul(x3, w, "weight")
    return out, (adj, dinv, x3, w)


def gcn_conv_backward(dout, cache):
    adj, dinv, x3, w = cache
    dw = dense_matmul(x3.T, dout, "backward")
    dx3 = dense_matmul(dout, w.T, "backward")
    dx1 = spmm(adj, scale_rows(dinv, dx3, "backward"), "backward")  # adj is symmetric
    return scale_rows(dinv, dx1, "backward"), dw


def nvgcn_conv(adj, h, w):
    """(A + cI) h w with no degree normalization."""
    x = spmm(adj, h, "adjacency")
    out = dense_matmul(x, w, "weight")
    return out, (adj, x, w)


def nvgcn_conv_backward(dout, cache):
    adj, x, w = cache
    dw = dense_matmul(x.T, dout, "backward")
    dx = dense_matmul(dout, w.T, "backward")
    return spmm(adj, dx, "backward"), dw


def _structure(graph, n=None):
    if isinstance(graph, SparseAdjacency):
        return graph
    return sparse_from_edges(graph, n, 1.0)


def _segment_sum(values, indptr):
    return np.add.reduceat(values, indptr[:-1], axis=0)


def gat_conv(graph, h, w, att, heads, negative_slope=0.2):
    """Multi-head graph attention with concatenated heads.

    ``w`` is (F, heads*F'); ``att`` is (heads, 2F') holding, per head, the
    weights for the neighbour's transformed features followed by those of
    the receiving node.  Every node attends to itself.
    """
    adj = _structure(graph, len(h))
    m = len(h)
    fo = w.shape[1] // heads
    z = dense_matmul(h, w, "weight").reshape(m, heads, fo)
    a_src, a_dst = att[:, :fo], att[:, fo:]
    s_src = np.einsum("mhf,hf->mh", z, a_src)
    s_dst = np.einsum("mhf,hf->mh", z, a_dst)
    rows, cols = adj.rows, adj.indices  # entry (v, u): u sends to v
    pre = s_src[cols] + s_dst[rows]
    e = leaky_relu(pre, negative_slope)
    e = e - np.maximum.reduceat(e, adj.indptr[:-1], axis=0)[rows]
    ex = np.exp(e)
    alpha = ex / _segment_sum(ex, adj.indptr)[rows]
    out = np.empty((m, heads, fo))
    for k in range(heads):
        out[:, k, :] = adj.csr(alpha[:, k]) @ z[:, k, :]
    cache = (adj, h, w, att, z, pre, alpha, heads, negative_slope)
    return out.reshape(m, heads * fo), cache


def gat_conv_backward(dout, cache):
    adj, h, w, att, z, pre, alpha, heads, slope = cache
    m, _, fo = z.shape
    rows, cols = adj.rows, adj.indices
    dout = dout.reshape(m, heads, fo)
    dz = np.empty_like(z)
    for k in range(heads):
        # transpose of the attention-weighted aggregation
        dz[:, k, :] = adj.csr(alpha[:, k]).T @ dout[:, k, :]
    dalpha = np.einsum("ehf,ehf->eh", dout[rows], z[cols])
    s = _segment_sum(alpha * dalpha, adj.indptr)
    de = alpha * (dalpha - s[rows])
    dpre = de * np.where(pre > 0, 1.0, slope)
    ds_dst = _segment_sum(dpre, adj.indptr)
    ds_src = np.zeros((m, heads))
    for k in range(heads):
        ds_src[:, k] = np.bincount(cols, weights=dpre[:, k], minlength=m)
    a_src, a_dst = att[:, :fo], att[:, fo:]
    dz += ds_src[:, :, None] * a_src[None] + ds_dst[:, :, None] * a_dst[None]
    datt = np.concatenate([np.einsum("mh,mhf->hf", ds_src, z),
                           np.einsum("mh,mhf->hf", ds_dst, z)], axis=1)
    dzf = dz.reshape(m, heads * fo)
    dw = dense_matmul(h.T, dzf, "backward")
    dh = dense_matmul(dzf, w.T, "backward")
    return dh, dw, datt


def gcn_forward(adj, h, w, activation="identity"):
    """sigma(D^-1/2 (A+I) D^-1/2 H W); ``adj`` is the self-looped adjacency."""
    return activate(gcn_conv(adj, h, w)[0], activation)


def nvgcn_forward(adj, h, w, activation="identity"):
    """sigma((A + cI) H W) for an adjacency built with self-loop weight c."""
    return activate(nvgcn_conv(adj, h, w)[0], activation)


def gat_forward(graph, h, w, att, heads, negative_slope=0.2, activation="identity"):
    return activate(gat_conv(graph, h, w, att, heads, negative_slope)[0], activation)


def attention_coefficients(graph, h, w, att, heads, negative_slope=0.2):
    """(adjacency, alpha) where alpha[e, k] weights entry e of the CSR structure in head k."""
    _, cache = gat_conv(graph, h, w, att, heads, negative_slope)
    return cache[0], cache[6]


# dense layers -----------------------------------------------------------------

def linear_forward(x, w, b):
    return dense_matmul(x, w, "linear") + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    return dense_matmul(dout, w.T, "backward"), dense_matmul(x.T, dout, "backward"), dout.sum(0)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train=True,
                      momentum=BN_MOMENTUM, eps=BN_EPS, update_stats=True):
    """Per-feature batch normalization; running stats are updated in place when training."""
    if len(x) < 1:
        raise ValueError("batchnorm needs at least one row")
    if train:
        mu = x.mean(0)
        var = x.var(0)
        if update_stats:
            n = len(x)
            unbiased = var * n / (n - 1) if n > 1 else var
            running_mean *= 1 - momentum
            running_mean += momentum * mu
            running_var *= 1 - momentum
            running_var += momentum * unbiased
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv, gamma, train = cache
    dgamma = (dout * xhat).sum(0)
    dbeta = dout.sum(0)
    dxhat = dout * gamma
    if not train:
        return dxhat * inv, dgamma, dbeta
    n = len(xhat)
    dx = inv / n * (n * dxhat - dxhat.sum(0) - xhat * (dxhat * xhat).sum(0))
    return dx, dgamma, dbeta


# pooling and loss ---------------------------------------------------------------

def global_mean_pool(h, graph_id, num_graphs=None):
    graph_id = np.asarray(graph_id, dtype=np.int64)
    g = int(graph_id.max()) + 1 if num_graphs is None else num_graphs
    counts = np.bincount(graph_id, minlength=g)
    if np.any(counts == 0):
        raise ValueError("every graph in the batch needs at least one node")
    sums = np.zeros((g, h.shape[1]))
    np.add.at(sums, graph_id, h) if h.shape[0] < 64 else _sorted_sum(sums, h, graph_id, counts)
    return sums / counts[:, None]


def _sorted_sum(out, h, graph_id, counts):
    if np.all(graph_id[1:] >= graph_id[:-1]):
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        out[:] = np.add.reduceat(h, starts, axis=0)
    else:
        np.add.at(out, graph_id, h)


def global_mean_pool_backward(dout, graph_id):
    graph_id = np.asarray(graph_id, dtype=np.int64)
    counts = np.bincount(graph_id, minlength=len(dout))
    return dout[graph_id] / counts[graph_id][:, None]


def cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient with respect to the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    g = len(labels)
    shifted = logits - logits.max(1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(g), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(g), labels] -= 1.0
    return float(loss), grad / g
