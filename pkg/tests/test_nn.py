import numpy as np
import pytest

from vgcn.graphstore import batch_graphs
from vgcn.nn import (AdamState, CheckpointError, ModelConfig, adam_step, attention_coefficients,
                     backward, build_model, forward, gat_forward, gcn_forward, load_checkpoint,
                     nvgcn_forward, prepare_batch, save_checkpoint)
from vgcn.nn import layers as L
from vgcn.nn.checkpoint import dumps, loads
from vgcn.tensor import counting, sparse_from_edges

from conftest import grad_rel_error, model_grad_errors, numeric_grad, random_edges, random_record


def dense_adj(edges, m, c):
    return sparse_from_edges(edges, m, c).to_dense()


# conv forwards -------------------------------------------------------------------

def test_gcn_examples():
    out = gcn_forward(sparse_from_edges([], 1, 1.0), np.array([[2.0, 3.0]]), np.eye(2))
    np.testing.assert_allclose(out, [[2, 3]])
    out = gcn_forward(sparse_from_edges([(0, 1)], 2, 1.0), np.eye(2), np.eye(2))
    np.testing.assert_allclose(out, [[0.5, 0.5], [0.5, 0.5]])


def test_nvgcn_examples(rng):
    h = rng.random((4, 3))
    np.testing.assert_allclose(nvgcn_forward(sparse_from_edges([], 4, 6), h, np.eye(3)), 6 * h)
    out = nvgcn_forward(sparse_from_edges([(0, 1)], 2, 6), np.eye(2), np.eye(2))
    np.testing.assert_allclose(out, [[6, 1], [1, 6]])


def test_stage_counts_gcn_vs_nvgcn(rng):
    m, f, fo = 20, 5, 7
    e = random_edges(rng, m, 0.2)
    h, w = rng.random((m, f)), rng.random((f, fo))
    g_adj, n_adj = sparse_from_edges(e, m, 1.0), sparse_from_edges(e, m, 6.0)
    with counting() as cg:
        gcn_forward(g_adj, h, w)
    with counting() as cn:
        nvgcn_forward(n_adj, h, w)
    assert cg.snapshot() == {"deg_scale_pre": m * f, "adjacency": g_adj.nnz * f,
                             "deg_scale_post": m * f, "weight": m * f * fo}
    assert cn.snapshot() == {"adjacency": n_adj.nnz * f, "weight": m * f * fo}
    assert cn.total < cg.total


def test_nvgcn_c1_is_unnormalized_gcn(rng):
    e = random_edges(rng, 12, 0.3)
    h, w = rng.standard_normal((12, 4)), rng.standard_normal((4, 3))
    a = dense_adj(e, 12, 1.0)
    np.testing.assert_array_equal(nvgcn_forward(sparse_from_edges(e, 12, 1.0), h, w, "relu"),
                                  np.maximum(sparse_from_edges(e, 12, 1.0).csr() @ h @ w, 0))
    np.testing.assert_allclose(nvgcn_forward(sparse_from_edges(e, 12, 1.0), h, w), a @ h @ w,
                               atol=1e-12)


def test_gat_uniform_attention_cases(rng):
    e = random_edges(rng, 8, 0.4)
    adj = sparse_from_edges(e, 8, 1.0)
    deg = adj.to_dense().astype(bool).sum(1)
    w = rng.standard_normal((3, 4))
    att = rng.standard_normal((2, 4))
    # identical features -> equal logits -> 1/|N(v)|
    _, alpha = attention_coefficients(adj, np.ones((8, 3)), w, att, heads=2)
    np.testing.assert_allclose(alpha, (1.0 / deg[adj.rows])[:, None].repeat(2, 1))
    # zero attention vector, one head -> mean over the neighbourhood
    h = rng.standard_normal((8, 3))
    out = gat_forward(e, h, w, np.zeros((1, 8)), heads=1)
    a = adj.to_dense()
    np.testing.assert_allclose(out, (a / a.sum(1, keepdims=True)) @ h @ w, atol=1e-12)


def test_gat_rows_sum_to_one(rng):
    for m in (1, 5, 17):
        e = random_edges(rng, m, 0.3)
        adj = sparse_from_edges(e, m, 1.0)
        _, alpha = attention_coefficients(adj, rng.standard_normal((m, 3)),
                                          rng.standard_normal((3, 6)),
                                          rng.standard_normal((3, 4)), heads=3)
        sums = np.add.reduceat(alpha, adj.indptr[:-1], axis=0)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_permutation_equivariance(rng):
    m = 10
    e = random_edges(rng, m, 0.3)
    perm = rng.permutation(m)
    inv = np.argsort(perm)
    h = rng.standard_normal((m, 3))
    w = rng.standard_normal((3, 4))
    att = rng.standard_normal((2, 4))
    e2 = inv[e]  # node i becomes inv[i]
    h2 = h[perm]
    for fn in (lambda ed, x: gcn_forward(sparse_from_edges(ed, m, 1.0), x, w),
               lambda ed, x: nvgcn_forward(sparse_from_edges(ed, m, 6.0), x, w),
               lambda ed, x: gat_forward(ed, x, w, att, 2)):
        np.testing.assert_allclose(fn(e2, h2), fn(e, h)[perm], atol=1e-12)


# layer gradients -----------------------------------------------------------------

@pytest.mark.parametrize("variant", ["gcn", "nvgcn", "gat"])
def test_conv_layer_gradients(variant, rng):
    m, f, fo, heads = 7, 3, 2, 2
    e = random_edges(rng, m, 0.4)
    h = rng.standard_normal((m, f))
    w = rng.standard_normal((f, fo * (heads if variant == "gat" else 1)))
    att = rng.standard_normal((heads, 2 * fo))
    proj = rng.standard_normal((m, w.shape[1]))
    adj = sparse_from_edges(e, m, 6.0 if variant == "nvgcn" else 1.0)

    def run():
        if variant == "gcn":
            return L.gcn_conv(adj, h, w)
        if variant == "nvgcn":
            return L.nvgcn_conv(adj, h, w)
        return L.gat_conv(adj, h, w, att, heads)

    out, cache = run()
    back = {"gcn": L.gcn_conv_backward, "nvgcn": L.nvgcn_conv_backward,
            "gat": L.gat_conv_backward}[variant](proj, cache)
    loss = lambda: float((run()[0] * proj).sum())  # noqa: E731
    targets = [h, w] + ([att] if variant == "gat" else [])
    for x, g in zip(targets, back):
        assert grad_rel_error(numeric_grad(loss, x), g) < 1e-7


@pytest.mark.parametrize("variant", ["gcn", "nvgcn", "gat"])
def test_model_gradients(variant):
    errs = model_grad_errors(variant)
    assert max(errs.values()) < 1e-4, errs


# batch norm, pooling, loss -------------------------------------------------------

def _bn_args(f):
    return np.ones(f), np.zeros(f), np.zeros(f), np.ones(f)


def test_batchnorm_examples(rng):
    x = np.column_stack([np.full(6, 3.0), rng.standard_normal(6)])
    out, _ = L.batchnorm_forward(x, *_bn_args(2))
    assert np.all(out[:, 0] == 0)
    assert abs(out[:, 1].mean()) < 1e-9 and abs(out[:, 1].var() - 1) < 1e-4
    g, b, rm, rv = _bn_args(2)
    out, _ = L.batchnorm_forward(x, np.zeros(2), np.array([1.5, -2.0]), rm, rv)
    np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (6, 1)))


def test_batchnorm_running_stats_and_eval(rng):
    x = rng.standard_normal((50, 3)) * 2 + 5
    g, b, rm, rv = _bn_args(3)
    L.batchnorm_forward(x, g, b, rm, rv, train=True)
    np.testing.assert_allclose(rm, 0.1 * x.mean(0))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(0, ddof=1))
    before = rm.copy()
    out, _ = L.batchnorm_forward(x, g, b, rm, rv, train=False)
    np.testing.assert_array_equal(rm, before)
    np.testing.assert_allclose(out, (x - rm) / np.sqrt(rv + 1e-5))
    with pytest.raises(ValueError):
        L.batchnorm_forward(np.zeros((0, 3)), g, b, rm, rv)


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradient(train, rng):
    x = rng.standard_normal((9, 4))
    gamma, beta = rng.standard_normal(4), rng.standard_normal(4)
    proj = rng.standard_normal((9, 4))
    rm, rv = rng.standard_normal(4), rng.random(4) + 0.5

    def loss():
        return float((L.batchnorm_forward(x, gamma, beta, rm.copy(), rv.copy(), train)[0]
                      * proj).sum())

    _, cache = L.batchnorm_forward(x, gamma, beta, rm.copy(), rv.copy(), train)
    dx, dg, db = L.batchnorm_backward(proj, cache)
    for arr, g in ((x, dx), (gamma, dg), (beta, db)):
        assert grad_rel_error(numeric_grad(loss, arr), g) < 1e-7


def test_global_mean_pool_examples(rng):
    a, b, c = rng.random((3, 4))
    np.testing.assert_allclose(L.global_mean_pool(np.stack([a, b, c]), [0, 0, 1]),
                               [(a + b) / 2, c])
    r = rng.random(5)
    np.testing.assert_allclose(L.global_mean_pool(np.tile(r, (7, 1)), [0, 0, 1, 1, 1, 2, 2]),
                               np.tile(r, (3, 1)))
    with pytest.raises(ValueError):
        L.global_mean_pool(rng.random((3, 2)), [0, 0, 2])


def test_global_mean_pool_random_batch(rng):
    sizes = rng.integers(1, 20, 12)
    gid = np.repeat(np.arange(12), sizes)
    h = rng.standard_normal((len(gid), 3))
    pooled = L.global_mean_pool(h, gid)
    for g in range(12):
        np.testing.assert_allclose(pooled[g], h[gid == g].mean(0))
    proj = rng.standard_normal(pooled.shape)
    num = numeric_grad(lambda: float((L.global_mean_pool(h, gid) * proj).sum()), h)
    assert grad_rel_error(num, L.global_mean_pool_backward(proj, gid)) < 1e-8


def test_cross_entropy(rng):
    loss, _ = L.cross_entropy(np.zeros((4, 10)), [0, 3, 9, 2])
    assert loss == pytest.approx(np.log(10))
    loss, _ = L.cross_entropy(np.eye(10)[[4]] * 1e4, [4])
    assert loss < 1e-12
    logits = rng.standard_normal((5, 10))
    labels = rng.integers(0, 10, 5)
    _, grad = L.cross_entropy(logits, labels)
    num = numeric_grad(lambda: L.cross_entropy(logits, labels)[0], logits)
    assert grad_rel_error(num, grad) < 1e-6


def test_activations():
    x = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_allclose(L.activate(x, "elu"), [np.expm1(-2), 0, 3])
    np.testing.assert_allclose(L.activate(x, "relu"), [0, 0, 3])
    with pytest.raises(ValueError):
        L.activate(x, "gelu")


# optimizer -------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    st = AdamState(step=1, m={"w": np.array([0.5, 0.5])}, v={"w": np.array([0.1, 0.1])})
    adam_step(p, {"w": np.zeros(2)}, st, lr=0.0)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])
    np.testing.assert_allclose(st.m["w"], [0.45, 0.45])
    np.testing.assert_allclose(st.v["w"], [0.0999, 0.0999])
    q = {"w": np.array([1.0])}
    adam_step(q, {"w": np.zeros(1)}, AdamState(), lr=0.1)
    assert q["w"][0] == 1.0


def test_adam_first_step_is_lr():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, AdamState(), lr=1e-3)
    assert p["w"][0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_step_bounded(rng):
    p = {"w": rng.standard_normal(50)}
    st = AdamState()
    for _ in range(20):
        before = p["w"].copy()
        adam_step(p, {"w": rng.standard_normal(50) * 10 ** rng.uniform(-3, 3)}, st, lr=0.01)
        assert np.all(np.abs(p["w"] - before) <= 0.01 * (1 + 1e-6) / (1 - 0.9) ** 0 * 3.2)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


# model -------------------------------------------------------------------------------

def test_gat_parameter_count_matches_table():
    table = [
        3 * 64 + 2 * 2 * 32, 2 * 64,            # GATConv 3->32 x2, BN 64
        64 * 128 + 2 * 2 * 64, 2 * 128,         # GATConv 64->64 x2, BN 128
        128 * 128 + 2 * 2 * 64, 2 * 128,        # GATConv 128->64 x2, BN 128
        128 * 32 + 32, 2 * 32,                  # Linear 128->32, BN 32
        32 * 32 + 32, 32 * 10 + 10,             # Linear 32->32, Linear 32->10
    ]
    assert build_model(ModelConfig("gat", 3)).num_parameters() == sum(table) == 31626


def test_gcn_widths_follow_concatenation():
    st = build_model(ModelConfig("gcn", 5))
    shapes = [st.params[f"conv{i}.weight"].shape for i in range(3)]
    assert shapes == [(5, 64), (64, 128), (128, 128)]


def test_build_model_deterministic():
    a, b = build_model(ModelConfig(), 3), build_model(ModelConfig(), 3)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)
    assert build_model(ModelConfig(), 4).params["conv0.weight"].tobytes() != \
        a.params["conv0.weight"].tobytes()


@pytest.mark.parametrize("kw", [dict(variant="sage"), dict(heads=0), dict(channels=(4, 0)),
                                dict(self_loop_weight=0)])
def test_model_config_validation(kw):
    with pytest.raises(ValueError):
        ModelConfig(**kw)


def test_single_graph_logits_shape_and_eval_determinism(rng):
    cfg = ModelConfig("nvgcn", 3)
    st = build_model(cfg)
    gb = prepare_batch(batch_graphs([random_record(rng, 9)]), cfg)
    a, _ = forward(st, gb, train=False)
    b, _ = forward(st, gb, train=False)
    assert a.shape == (1, 10)
    assert a.tobytes() == b.tobytes()


def test_pooled_logits_invariant_to_node_relabeling(rng):
    rec = random_record(rng, 11)
    perm = rng.permutation(11)
    inv = np.argsort(perm)
    from vgcn.graphstore import GraphRecord
    rec2 = GraphRecord(rec.features[perm], inv[rec.edges], rec.label)
    for variant in ("gcn", "nvgcn", "gat"):
        cfg = ModelConfig(variant, 3)
        st = build_model(cfg)
        a, _ = forward(st, prepare_batch(batch_graphs([rec]), cfg))
        b, _ = forward(st, prepare_batch(batch_graphs([rec2]), cfg))
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_zero_loss_gradient_gives_zero_gradients(rng):
    cfg = ModelConfig("gat", 3, channels=(3, 4, 2), hidden=(4, 4))
    st = build_model(cfg)
    gb = prepare_batch(batch_graphs([random_record(rng, 6), random_record(rng, 5)]), cfg)
    logits, cache = forward(st, gb, train=True)
    grads = backward(st, cache, np.zeros_like(logits))
    assert set(grads) == set(st.params)
    assert all(not g.any() for g in grads.values())


def test_backward_without_cache():
    with pytest.raises(RuntimeError):
        backward(build_model(ModelConfig()), None, np.zeros((1, 10)))


@pytest.mark.parametrize("variant", ["gcn", "nvgcn", "gat"])
def test_duplicated_graph_doubles_its_gradient(variant, rng):
    # eval-mode BN makes the network a per-graph function, so gradients add up
    cfg = ModelConfig(variant, 3, channels=(3, 4, 2), hidden=(4, 4))
    st = build_model(cfg, 1)
    a, b = random_record(rng, 6), random_record(rng, 5)

    def grads(records):
        gb = prepare_batch(batch_graphs(records), cfg)
        logits, cache = forward(st, gb, train=False)
        _, d = L.cross_entropy(logits, gb.labels)
        return backward(st, cache, d * len(records))  # undo the mean

    ga, gb_, gaab = grads([a]), grads([b]), grads([a, a, b])
    for k in st.params:
        np.testing.assert_allclose(gaab[k], 2 * ga[k] + gb_[k], atol=1e-10)


# checkpoints -------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, rng):
    st = build_model(ModelConfig("gat", 5, heads=3), 2)
    opt = AdamState()
    adam_step(st.params, {k: rng.standard_normal(v.shape) for k, v in st.params.items()}, opt)
    n = save_checkpoint(tmp_path / "a.ck", st, opt, {"note": "x"})
    st2, opt2, meta = load_checkpoint(tmp_path / "a.ck")
    assert n == (tmp_path / "a.ck").stat().st_size
    assert st2.config == st.config and meta == {"note": "x"} and opt2.step == 1
    for k in st.params:
        assert st2.params[k].tobytes() == st.params[k].tobytes()
        assert opt2.m[k].tobytes() == opt.m[k].tobytes()
    assert dumps(st2, opt2, meta) == (tmp_path / "a.ck").read_bytes()


def test_checkpoint_errors():
    data = dumps(build_model(ModelConfig()))
    with pytest.raises(CheckpointError):
        loads(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError):
        loads(data[:-8])
    with pytest.raises(CheckpointError):
        loads(data[:4] + bytes([9]) + data[5:])
