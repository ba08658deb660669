import numpy as np
import pytest

from fed3cr.errors import ProtocolError, ShapeError
from fed3cr.evaluation import (
    RoundMetrics,
    correlation_matrix,
    export_correlation_matrix,
    hr_ndcg_at_k,
    metrics_csv_lines,
    rank_candidates,
    rbo_truncated,
    top_k_list,
    view_consistency_rbo,
)
from fed3cr.model import forward_pass, init_client


def test_rank_single_candidate():
    assert rank_candidates(np.ones(2), np.ones((3, 2)), [1]) == [1]


def test_rank_tie_broken_by_ascending_id():
    table = np.zeros((6, 2))
    ranked = rank_candidates(np.ones(2), table, [5, 2])
    assert ranked == [2, 5]


def test_rank_matches_full_sort_oracle():
    rng = np.random.default_rng(0)
    u = rng.normal(size=8)
    table = rng.normal(size=(200, 8))
    cands = list(rng.choice(200, size=100, replace=False))
    ranked = rank_candidates(u, table, cands)
    oracle = sorted(cands, key=lambda j: (-float(table[j] @ u), j))
    assert ranked == oracle


def test_rank_invariant_under_positive_rescaling():
    rng = np.random.default_rng(1)
    u = rng.normal(size=4)
    table = rng.normal(size=(30, 4))
    cands = list(range(30))
    assert rank_candidates(u, table, cands) == rank_candidates(3.7 * u, table, cands)


def test_hr_ndcg_perfect_rank():
    assert hr_ndcg_at_k([7, 1, 2], 7, k=10) == (1, 1.0)


def test_hr_ndcg_rank_ten():
    ranked = list(range(10)) + [99]
    hr, ndcg = hr_ndcg_at_k(ranked, 9, k=10)
    assert hr == 1
    assert ndcg == pytest.approx(1 / np.log2(11), abs=1e-4)


def test_hr_ndcg_miss():
    ranked = list(range(11))
    assert hr_ndcg_at_k(ranked, 10, k=10) == (0, 0.0)


def test_hr_ndcg_absent_item_raises():
    with pytest.raises(ProtocolError):
        hr_ndcg_at_k([1, 2, 3], 9, k=2)


def test_ndcg_never_exceeds_hr():
    rng = np.random.default_rng(2)
    for _ in range(50):
        ranked = list(rng.permutation(30))
        hr, ndcg = hr_ndcg_at_k(ranked, int(rng.integers(30)), k=10)
        assert ndcg <= hr


def test_rbo_identical_lists():
    assert rbo_truncated([3, 1, 2], [3, 1, 2], p=0.99) == pytest.approx(1.0)


def test_rbo_disjoint_lists():
    assert rbo_truncated([1, 2, 3], [4, 5, 6], p=0.99) == pytest.approx(0.0)


def test_rbo_hand_derived_case():
    # depth sums: (1*1 + 0.5*0.5 + 0.25*1) / (1 + 0.5 + 0.25)
    assert rbo_truncated([1, 2, 3], [1, 3, 2], p=0.5) == pytest.approx(0.8571, abs=1e-4)


def test_rbo_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = list(rng.permutation(20)[:10])
        b = list(rng.permutation(20)[:10])
        assert rbo_truncated(a, b, 0.9) == pytest.approx(rbo_truncated(b, a, 0.9), abs=1e-12)


def test_rbo_monotone_under_improving_agreement():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = list(rng.permutation(30)[:8])
        b = list(rng.permutation(30)[:8])
        base = rbo_truncated(a, b, 0.8)

        def depth_sum_oracle(x, y, p=0.8):
            num = den = 0.0
            w = 1.0
            for k in range(1, 9):
                num += w * len(set(x[:k]) & set(y[:k])) / k
                den += w
                w *= p
            return num / den

        assert base == pytest.approx(depth_sum_oracle(a, b), abs=1e-12)
        # replace b's first disagreeing position with a's item at that position
        for i in range(8):
            if a[i] != b[i]:
                improved = list(b)
                if a[i] in improved:
                    improved[improved.index(a[i])] = b[i]
                improved[i] = a[i]
                assert rbo_truncated(a, improved, 0.8) >= base - 1e-12
                break


def test_rbo_rejects_duplicates_and_bad_lengths():
    with pytest.raises(ValueError):
        rbo_truncated([1, 1, 2], [1, 2, 3], 0.5)
    with pytest.raises(ShapeError):
        rbo_truncated([1, 2], [1, 2, 3], 0.5)


def test_view_rbo_identical_views():
    state = init_client(seed=0, d=4, M=10, dtype=np.float64)
    state.personal_table = state.global_table.copy()
    # identity transfer: C_E == C == V so both views score identically
    from tests.test_model import rigged_identity_net

    state.transfer_net = rigged_identity_net(4)
    trace = forward_pass(state, np.array([0, 1]), enhancement="ace")
    assert view_consistency_rbo(state, trace, k_prime=10, p=0.9) == pytest.approx(1.0)


def test_view_rbo_antithetical_views_near_zero():
    m, d = 50, 2
    state = init_client(seed=1, d=d, M=m, dtype=np.float64, enhancement="none")
    state.user_embedding = np.array([1.0, 0.0])
    scores = np.linspace(1, 2, m)
    state.personal_table = np.stack([scores, np.zeros(m)], axis=1)
    state.global_table = np.stack([scores[::-1], np.zeros(m)], axis=1)
    trace = forward_pass(state, np.array([0, 1]), enhancement="none")
    assert view_consistency_rbo(state, trace, k_prime=m, p=0.5) < 0.01


def test_view_rbo_matches_direct_oracle():
    state = init_client(seed=2, d=4, M=30, dtype=np.float64)
    state.transfer_net.weights[-1] = np.random.default_rng(5).normal(0, 0.4, (16, 16))
    trace = forward_pass(state, np.array([0, 3, 7]), enhancement="ace")
    got = view_consistency_rbo(state, trace, k_prime=10, p=0.9)
    personal = top_k_list(state.user_embedding, state.personal_table, 10)
    global_view = top_k_list(state.user_embedding, trace.C_E.data, 10)
    assert got == pytest.approx(rbo_truncated(personal, global_view, 0.9), abs=1e-9)


def test_correlation_export_orthogonal_pair_all_zero(tmp_path):
    c_e = np.array([[1.0, 2.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    v = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 1.0], [1.0, -2.0]])
    path = str(tmp_path / "corr.csv")
    out = export_correlation_matrix(c_e, v, path)
    assert np.array_equal(out, np.zeros((2, 2)))
    rows = open(path).read().strip().split("\n")
    assert rows == ["0,0", "0,0"]


def test_correlation_clip_zero_is_raw():
    rng = np.random.default_rng(6)
    c_e, v = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    assert np.array_equal(correlation_matrix(c_e, v, clip=0.0), c_e.T @ v)


def test_correlation_count_monotone_in_clip():
    rng = np.random.default_rng(7)
    c_e, v = rng.normal(scale=0.05, size=(20, 6)), rng.normal(scale=0.05, size=(20, 6))
    counts = []
    for clip in [0.0, 0.001, 0.003, 0.01, 0.05]:
        counts.append(int((correlation_matrix(c_e, v, clip) != 0).sum()))
    assert counts == sorted(counts, reverse=True)


def test_metrics_csv_format():
    rows = [
        RoundMetrics(0, 0.5, 0.25, 0.75, 1.0, 2.0, 3.0, 24),
        RoundMetrics(1, 0.6, 0.3, None, 0.9, 1.9, 2.9, 24),
    ]
    lines = metrics_csv_lines(rows)
    assert lines[0] == "round,hr10,ndcg10,rbo50,loss_rec,loss_a,loss_o,clients_evaluated"
    assert lines[1] == "0,0.5,0.25,0.75,1.0,2.0,3.0,24"
    assert lines[2] == "1,0.6,0.3,,0.9,1.9,2.9,24"
