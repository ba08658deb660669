import numpy as np
import pytest

from fed3cr.checkpoint import load_client_state, save_client_state
from fed3cr.errors import DataError, ShapeError
from fed3cr.model import (
    TransferNet,
    compute_prototypes,
    enhance_consensus,
    forward_pass,
    fuse,
    generate_transfer_matrix,
    init_client,
    predict,
)
from fed3cr.numerics import grad_check


def rigged_identity_net(d):
    """Net whose output is the flattened identity regardless of input."""
    w0 = np.zeros((4 * d, 2 * d))
    b0 = np.zeros(4 * d)
    w1 = np.zeros((d * d, 4 * d))
    b1 = np.eye(d).reshape(-1)
    return TransferNet([w0, w1], [b0, b1])


def test_prototypes_singleton():
    state = init_client(seed=0, d=3, M=5, dtype=np.float64)
    p_g, p_p = compute_prototypes(state, np.array([2]))
    assert np.array_equal(p_g, state.global_table[2])
    assert np.array_equal(p_p, state.personal_table[2])


def test_prototypes_mean_of_two_rows():
    state = init_client(seed=0, d=2, M=2, dtype=np.float64)
    state.global_table = np.array([[1.0, 0.0], [0.0, 1.0]])
    p_g, _ = compute_prototypes(state, np.array([0, 1]))
    assert np.allclose(p_g, [0.5, 0.5])


def test_prototypes_match_accumulate_divide_oracle():
    state = init_client(seed=3, d=8, M=80, dtype=np.float64)
    positives = np.random.default_rng(1).choice(80, size=50, replace=False)
    p_g, p_p = compute_prototypes(state, positives)
    acc_g = np.zeros(8)
    acc_p = np.zeros(8)
    for j in positives:
        acc_g += state.global_table[j]
        acc_p += state.personal_table[j]
    assert np.allclose(p_g, acc_g / 50, atol=1e-12)
    assert np.allclose(p_p, acc_p / 50, atol=1e-12)


def test_prototypes_empty_positives():
    state = init_client(seed=0, d=2, M=3, dtype=np.float64)
    with pytest.raises(DataError):
        compute_prototypes(state, np.array([], dtype=np.int64))


def test_transfer_matrix_zero_final_layer():
    d = 3
    net = TransferNet(
        [np.zeros((4 * d, 2 * d)), np.zeros((d * d, 4 * d))],
        [np.zeros(4 * d), np.zeros(d * d)],
    )
    w = generate_transfer_matrix(net, np.ones(d), np.ones(d))
    assert np.array_equal(w, np.zeros((d, d)))


def test_transfer_matrix_rigged_identity():
    d = 3
    net = rigged_identity_net(d)
    w = generate_transfer_matrix(net, np.ones(d), -np.ones(d))
    assert np.array_equal(w, np.eye(d))


def test_transfer_matrix_gradient_wrt_theta():
    import fed3cr.autodiff as ad

    d = 3
    rng = np.random.default_rng(7)
    state = init_client(seed=5, d=d, M=4, dtype=np.float64)
    state.transfer_net.weights[-1] = rng.normal(0, 0.3, state.transfer_net.weights[-1].shape)
    # random projection of W keeps the check cheap while touching every entry
    proj = rng.normal(size=(d, d))

    def f_for_block(name):
        def f(p):
            s2 = state.copy()
            if name.startswith("w"):
                s2.transfer_net.weights[int(name[1:])] = p
            else:
                s2.transfer_net.biases[int(name[1:])] = p
            t2 = forward_pass(s2, np.array([0, 1]), enhancement="ace")
            return ad.tsum(ad.mul(t2.W, proj)).item()

        return f

    trace = forward_pass(state, np.array([0, 1]), enhancement="ace")
    target = ad.tsum(ad.mul(trace.W, proj))
    target.backward()
    for name in ("w0", "b0", "w1", "b1"):
        tensor = trace.params[name]
        report = grad_check(f_for_block(name), tensor.data, tensor.grad)
        assert report.passed, (name, report)


def test_enhance_identity_and_scaling():
    c = np.random.default_rng(0).normal(size=(4, 3))
    assert np.allclose(enhance_consensus(np.eye(3), c), c)
    assert np.allclose(enhance_consensus(2 * np.eye(3), c), 2 * c)


def test_enhance_matches_per_row_matvec_oracle():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(2, 2))
    c = rng.normal(size=(3, 2))
    out = enhance_consensus(w, c)
    for j in range(3):
        assert np.allclose(out[j], w @ c[j])


def test_enhance_linearity():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(3, 3))
    a, b = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    assert np.allclose(
        enhance_consensus(w, a + b),
        enhance_consensus(w, a) + enhance_consensus(w, b),
        atol=1e-6,
    )


def test_enhance_shape_error():
    with pytest.raises(ShapeError):
        enhance_consensus(np.eye(3), np.ones((4, 2)))


def test_fuse_cases():
    c_e = np.random.default_rng(3).normal(size=(3, 2))
    assert np.array_equal(fuse(c_e, np.zeros_like(c_e)), c_e)
    assert np.array_equal(fuse(c_e, -c_e), np.zeros_like(c_e))
    v = np.random.default_rng(4).normal(size=(3, 2))
    assert np.array_equal(fuse(c_e, v), fuse(v, c_e))
    with pytest.raises(ShapeError):
        fuse(c_e, np.ones((2, 2)))


def test_predict_cases():
    assert predict(np.zeros(2), np.ones(2)) == pytest.approx(0.5)
    assert predict(np.array([1.0, 2.0]), np.array([0.5, -0.25])) == pytest.approx(0.5)
    assert predict(np.array([40.0]), np.array([1.0])) == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(predict(np.array([1000.0]), np.array([1.0])))


def test_predict_monotone_in_dot():
    rng = np.random.default_rng(5)
    u = rng.normal(size=4)
    vs = [rng.normal(size=4) for _ in range(20)]
    dots = [float(u @ v) for v in vs]
    preds = [predict(u, v) for v in vs]
    order = np.argsort(dots)
    assert all(preds[order[i]] <= preds[order[i + 1]] for i in range(len(order) - 1))


def test_init_client_deterministic():
    a = init_client(seed=11, d=4, M=6, client_id=2)
    b = init_client(seed=11, d=4, M=6, client_id=2)
    assert np.array_equal(a.user_embedding, b.user_embedding)
    assert np.array_equal(a.global_table, b.global_table)
    assert np.array_equal(a.personal_table, b.personal_table)
    for w1, w2 in zip(a.transfer_net.weights, b.transfer_net.weights):
        assert np.array_equal(w1, w2)


def test_init_client_shapes():
    state = init_client(seed=0, d=2, M=3)
    assert state.user_embedding.shape == (2,)
    assert state.global_table.shape == (3, 2)
    assert state.personal_table.shape == (3, 2)
    assert state.transfer_net.in_dim == 4
    assert state.transfer_net.out_dim == 4


def test_initial_transfer_matrix_is_small():
    state = init_client(seed=13, d=32, M=10, dtype=np.float64)
    p_g, p_p = compute_prototypes(state, np.arange(5))
    w = generate_transfer_matrix(state.transfer_net, p_g, p_p)
    assert np.linalg.norm(w) < 0.1


def test_identity_init_starts_near_identity():
    state = init_client(seed=13, d=8, M=10, dtype=np.float64, ace_init="identity")
    p_g, p_p = compute_prototypes(state, np.arange(4))
    w = generate_transfer_matrix(state.transfer_net, p_g, p_p)
    assert np.linalg.norm(w - np.eye(8)) < 0.1


def test_identity_rigged_net_reduces_to_additive_fusion():
    d, m = 3, 5
    state = init_client(seed=1, d=d, M=m, dtype=np.float64)
    state.transfer_net = rigged_identity_net(d)
    trace = forward_pass(state, np.array([0, 2]), enhancement="ace")
    assert np.allclose(trace.V_F.data, state.global_table + state.personal_table)
    assert np.allclose(trace.C_E.data, state.global_table)
    assert np.allclose(trace.p_E.data, trace.p_G.data)


def test_ace_scale_multiplies_matrix():
    state = init_client(seed=2, d=3, M=4, dtype=np.float64)
    state.transfer_net.weights[-1] = np.random.default_rng(0).normal(0, 0.5, (9, 12))
    pos = np.array([0, 1])
    t1 = forward_pass(state, pos, enhancement="ace", ace_scale=1.0)
    t2 = forward_pass(state, pos, enhancement="ace", ace_scale=2.5)
    assert np.allclose(t2.W.data, 2.5 * t1.W.data)


def test_forward_p_e_is_mapped_global_prototype():
    state = init_client(seed=3, d=4, M=6, dtype=np.float64)
    state.transfer_net.weights[-1] = np.random.default_rng(1).normal(0, 0.4, (16, 16))
    trace = forward_pass(state, np.array([1, 3, 5]), enhancement="ace")
    assert np.allclose(trace.p_E.data, trace.W.data @ trace.p_G.data, atol=1e-12)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    state = init_client(seed=21, d=5, M=7, client_id=9)
    path = str(tmp_path / "client.bin")
    save_client_state(path, state, seed=21, round=4)
    loaded, header = load_client_state(path)
    assert header["seed"] == 21
    assert header["round"] == 4
    assert loaded.client_id == 9
    assert np.array_equal(loaded.user_embedding, state.user_embedding)
    assert np.array_equal(loaded.global_table, state.global_table)
    assert np.array_equal(loaded.personal_table, state.personal_table)
    for w1, w2 in zip(loaded.transfer_net.weights, state.transfer_net.weights):
        assert np.array_equal(w1, w2)
    for b1, b2 in zip(loaded.transfer_net.biases, state.transfer_net.biases):
        assert np.array_equal(b1, b2)


def test_checkpoint_without_net(tmp_path):
    state = init_client(seed=1, d=3, M=4, enhancement="none")
    assert state.transfer_net is None
    path = str(tmp_path / "c.bin")
    save_client_state(path, state, seed=1, round=0)
    loaded, _ = load_client_state(path)
    assert loaded.transfer_net is None
