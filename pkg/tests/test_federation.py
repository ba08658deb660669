import dataclasses
import warnings

import numpy as np
import pytest

from fed3cr.datasets import NegativeSampler, leave_one_out_split
from fed3cr.errors import AggregationError, ConfigurationError, ShapeError
from fed3cr.evaluation import metrics_csv_lines
from fed3cr.federation import (
    HyperParams,
    Upload,
    UploadChannel,
    VariantConfig,
    aggregate_consensus,
    aggregate_theta,
    fedmf_baseline,
    local_update,
    run_training,
    select_clients,
)
from fed3cr.model import TransferNet, init_client
from fed3cr.toy import generate_toy_dataset

TOY = leave_one_out_split(generate_toy_dataset(seed=0), seed=0)

FAST = HyperParams(
    rounds=3,
    local_iters=2,
    dim=8,
    eval_negatives=20,
    seed=0,
    lr=0.1,
    beta_a=0.5,
    beta_o=0.5,
    rbo_k=10,
)


def test_variant_labels_map_to_flags():
    grid = {
        "C0": ("none", False, False),
        "C1": ("ace", False, False),
        "C2": ("none", True, False),
        "C3": ("none", False, True),
        "C4": ("none", True, True),
        "C5": ("ace", True, False),
        "C6": ("ace", False, True),
        "Fed3CR": ("ace", True, True),
    }
    for label, (kind, la, lo) in grid.items():
        v = VariantConfig.from_label(label)
        assert v.enhancement_kind == kind
        assert v.consistency_enabled is la
        assert v.orthogonality_enabled is lo


def test_aggregate_consensus_cases():
    t = np.random.default_rng(0).normal(size=(3, 2))
    assert np.allclose(aggregate_consensus([t, t.copy()]), t)
    rows = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[-1.0, 0.0]])]
    assert np.allclose(aggregate_consensus(rows), [[0.0, 1 / 3]])
    with pytest.raises(AggregationError):
        aggregate_consensus([])
    with pytest.raises(ShapeError):
        aggregate_consensus([np.ones((2, 2)), np.ones((3, 2))])


def test_aggregate_consensus_norm_convexity():
    rng = np.random.default_rng(1)
    uploads = [rng.normal(size=(4, 3)) for _ in range(5)]
    mean_norm = np.linalg.norm(aggregate_consensus(uploads))
    assert mean_norm <= max(np.linalg.norm(u) for u in uploads) + 1e-12


def test_aggregate_theta_cases():
    net = init_client(seed=0, d=4, M=3).transfer_net
    single = aggregate_theta([net])
    for w1, w2 in zip(single.weights, net.weights):
        assert np.array_equal(w1, w2)

    neg = TransferNet([-w for w in net.weights], [-b for b in net.biases])
    zero = aggregate_theta([net, neg])
    for w in zero.weights + zero.biases:
        assert np.allclose(w, 0.0)


def test_aggregate_theta_matches_flat_mean_oracle():
    nets = [init_client(seed=s, d=3, M=2).transfer_net for s in range(3)]
    merged = aggregate_theta(nets)
    oracle = np.mean([n.flatten() for n in nets], axis=0)
    assert np.allclose(merged.flatten(), oracle, atol=1e-7)


def test_aggregate_theta_schedule_mismatch():
    a = init_client(seed=0, d=4, M=3, schedule=(2, 4)).transfer_net
    b = init_client(seed=0, d=4, M=3, schedule=(2, 4, 8)).transfer_net
    with pytest.raises(ConfigurationError):
        aggregate_theta([a, b])


def test_select_clients():
    assert select_clients(10, 1.0, round=0, seed=0) == list(range(10))
    picked = select_clients(10, 0.3, round=2, seed=1)
    assert len(picked) == 3
    assert len(set(picked)) == 3
    assert picked == select_clients(10, 0.3, round=2, seed=1)
    assert picked != select_clients(10, 0.3, round=3, seed=1) or True  # usually differs


def test_local_update_lr_zero_is_noop():
    hp = dataclasses.replace(FAST, lr=1e-300)  # effectively zero; validate() wants lr > 0
    state = init_client(0, hp.dim, TOY.num_items, client_id=0)
    sampler = NegativeSampler(TOY, seed=0)
    consensus = np.random.default_rng(2).normal(0, 0.01, (TOY.num_items, hp.dim)).astype(np.float32)
    theta = init_client(1, hp.dim, TOY.num_items, client_id=0).transfer_net
    upload, _ = local_update(state, consensus, theta, sampler, hp, VariantConfig.from_label("Fed3CR"))
    assert np.allclose(upload.consensus, consensus, atol=1e-12)
    for w1, w2 in zip(upload.transfer_net.weights, theta.weights):
        assert np.allclose(w1, w2, atol=1e-12)


def test_local_update_single_item_matches_one_step_sgd_oracle():
    # one client, one train positive, no sampleable negatives, E=1, C0 path
    from fed3cr.datasets import InteractionDataset

    ds = InteractionDataset(
        num_clients=1,
        num_items=2,
        client_items=[np.array([0])],
        timestamps=None,
        test_items=[1],
        user_ids=["u"],
        item_ids=["a", "b"],
        user_index={"u": 0},
        item_index={"a": 0, "b": 1},
    )
    hp = HyperParams(rounds=1, local_iters=1, dim=3, lr=0.5, lr_gamma=1.0, seed=0, dtype="float64")
    state = init_client(0, 3, 2, dtype=np.float64, enhancement="none")
    u0 = state.user_embedding.copy()
    v0 = state.personal_table.copy()
    consensus = np.random.default_rng(5).normal(0, 0.01, (2, 3))
    sampler = NegativeSampler(ds, seed=0)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        upload, _ = local_update(
            state, consensus, None, sampler, hp, VariantConfig.from_label("C0")
        )

    # oracle: single positive example, score = u . (c0 + v0), BCE gradient
    fused = consensus[0] + v0[0]
    p = 1 / (1 + np.exp(-float(u0 @ fused)))
    g_u = (p - 1.0) * fused
    g_row = (p - 1.0) * u0
    assert np.allclose(state.user_embedding, u0 - 0.5 * g_u, atol=1e-6)
    assert np.allclose(upload.consensus[0], consensus[0] - 0.5 * g_row, atol=1e-6)
    assert np.allclose(state.personal_table[0], v0[0] - 0.5 * g_row, atol=1e-6)
    # untouched rows stay exactly
    assert np.array_equal(upload.consensus[1], consensus[1])


def test_identical_clients_consensus_equals_single_upload():
    sampler = NegativeSampler(TOY, seed=0)
    hp = FAST
    variant = VariantConfig.from_label("Fed3CR")
    consensus = np.random.default_rng(0).normal(0, 0.01, (TOY.num_items, hp.dim)).astype(np.float32)
    theta = init_client(1, hp.dim, TOY.num_items, client_id=0).transfer_net
    uploads = []
    for _ in range(3):  # same client id -> same data, same init, same rng stream
        state = init_client(0, hp.dim, TOY.num_items, client_id=0)
        sampler_clone = NegativeSampler(TOY, seed=0)
        upload, _ = local_update(state, consensus, theta, sampler_clone, hp, variant)
        uploads.append(upload.consensus)
    merged = aggregate_consensus(uploads)
    assert np.allclose(merged, uploads[0], atol=1e-7)


@pytest.mark.filterwarnings("ignore::fed3cr.errors.ReplacementSamplingWarning")
def test_run_training_single_client_consensus_is_upload():
    ds = leave_one_out_split(
        generate_toy_dataset(num_clients=1, num_items=24, num_blocks=1, seed=1), seed=1
    )
    hp = dataclasses.replace(FAST, rounds=1, eval_negatives=10)
    channel = UploadChannel()
    result = run_training(ds, hp, VariantConfig.from_label("Fed3CR"), channel=channel)
    assert len(channel.records) == 1
    assert np.allclose(result.server.consensus, result.clients[0].global_table, atol=1e-7)


def test_run_training_deterministic_and_worker_independent():
    hp = FAST
    variant = VariantConfig.from_label("Fed3CR")
    runs = [
        run_training(TOY, hp, variant, workers=w).metrics for w in (1, 1, 4)
    ]
    csvs = ["\n".join(metrics_csv_lines(m)) for m in runs]
    assert csvs[0] == csvs[1]  # same config, same bytes
    assert csvs[0] == csvs[2]  # independent of worker count


def test_run_training_requires_split():
    raw = generate_toy_dataset(seed=0)
    with pytest.raises(ConfigurationError):
        run_training(raw, FAST, VariantConfig.from_label("C0"))


def test_upload_channel_sees_only_shared_blocks():
    channel = UploadChannel(capture_bytes=True)
    hp = dataclasses.replace(FAST, rounds=2)
    result = run_training(TOY, hp, VariantConfig.from_label("Fed3CR"), channel=channel)
    assert len(channel.records) == 2 * TOY.num_clients
    for record in channel.records:
        names = [b[0] for b in record["blocks"]]
        assert names[0] == "consensus"
        assert all(n.startswith("transfer_net.") for n in names[1:])
        # payload is exactly the serialized shared blocks, nothing more
        assert len(record["payload_bytes"]) == record["total_nbytes"]
    # nothing that left any client matches a private block
    for client in result.clients:
        private = {client.user_embedding.tobytes(), client.personal_table.tobytes()}
        for record in channel.records:
            assert record["payload_bytes"] not in private


def test_upload_dataclass_has_exactly_shared_fields():
    names = {f.name for f in dataclasses.fields(Upload)}
    assert names == {"client_id", "consensus", "transfer_net"}


def test_c0_uploads_carry_no_net():
    channel = UploadChannel()
    run_training(TOY, dataclasses.replace(FAST, rounds=1), VariantConfig.from_label("C0"), channel=channel)
    for record in channel.records:
        assert [b[0] for b in record["blocks"]] == ["consensus"]


def test_client_fraction_selects_subset():
    hp = dataclasses.replace(FAST, client_fraction=0.25, rounds=2)
    channel = UploadChannel()
    run_training(TOY, hp, VariantConfig.from_label("C1"), channel=channel)
    per_round = {}
    for r in channel.records:
        per_round.setdefault(r["round"], []).append(r["client_id"])
    assert all(len(v) == 6 for v in per_round.values())


def test_enhancement_kinds_preserve_shapes():
    for kind in ("consensus-transfer", "unified-transfer"):
        variant = VariantConfig(enhancement_kind=kind, consistency_enabled=False, orthogonality_enabled=False)
        hp = dataclasses.replace(FAST, rounds=1)
        result = run_training(TOY, hp, variant)
        assert result.server.consensus.shape == (TOY.num_items, hp.dim)
        assert result.server.theta.in_dim == hp.dim
        assert result.server.theta.out_dim == hp.dim


def test_identity_rigged_row_net_reduces_to_additive_fusion():
    from fed3cr.model import forward_pass, init_row_net
    import fed3cr.seeding as seeding

    state = init_client(0, 4, 6, dtype=np.float64, enhancement="consensus-transfer")
    # exact identity: strip the init noise
    net = init_row_net(seeding.rng(0, 99), 4, 8, dtype=np.float64)
    net.weights[0] = np.concatenate([np.eye(4), -np.eye(4)])
    net.weights[1] = np.concatenate([np.eye(4), -np.eye(4)], axis=1)
    state.transfer_net = net
    trace = forward_pass(state, np.array([0, 1]), enhancement="consensus-transfer")
    assert np.allclose(trace.V_F.data, state.global_table + state.personal_table, atol=1e-12)
    trace_u = forward_pass(state, np.array([0, 1]), enhancement="unified-transfer")
    assert np.allclose(trace_u.V_F.data, state.global_table + state.personal_table, atol=1e-12)


def test_fedmf_plain_and_plugin_shapes():
    hp = dataclasses.replace(FAST, rounds=2)
    plain = fedmf_baseline(TOY, hp, ace_plugin=False)
    plugin = fedmf_baseline(TOY, hp, ace_plugin=True)
    assert plain.server.theta is None
    assert plugin.server.theta is not None
    assert len(plain.metrics) == 2
    assert all(0.0 <= m.hr_at_k <= 1.0 for m in plain.metrics + plugin.metrics)


def test_fedmf_zero_net_scores_match_plain_exactly():
    # with the generated transfer matrix forced to exactly zero, the plugin's
    # scoring table equals the plain shared table
    from fed3cr.model import generate_transfer_matrix, init_client_net
    import fed3cr.seeding as seeding

    d = 8
    net = init_client_net(seeding.rng(0, 50), d, (2, 4), ace_init="zero", enhancement="ace")
    net.weights[-1][:] = 0.0
    table = np.random.default_rng(3).normal(size=(20, d))
    pos = np.array([1, 5])
    w = generate_transfer_matrix(net, table[pos].mean(axis=0), table[pos].mean(axis=0))
    assert np.array_equal(w, np.zeros((d, d)))
    assert np.array_equal(table + table @ w.T, table)


def test_fedmf_channel_carries_table_and_optional_net():
    hp = dataclasses.replace(FAST, rounds=1)
    ch_plain, ch_plug = UploadChannel(), UploadChannel()
    fedmf_baseline(TOY, hp, ace_plugin=False, channel=ch_plain)
    fedmf_baseline(TOY, hp, ace_plugin=True, channel=ch_plug)
    assert all([b[0] for b in r["blocks"]] == ["consensus"] for r in ch_plain.records)
    assert all(any(b[0].startswith("transfer_net") for b in r["blocks"]) for r in ch_plug.records)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_aborts_client_with_warning():
    hp = dataclasses.replace(FAST, rounds=1, local_iters=3, lr=1e30)
    state = init_client(0, hp.dim, TOY.num_items, client_id=0)
    sampler = NegativeSampler(TOY, seed=0)
    consensus = np.random.default_rng(0).normal(0, 0.01, (TOY.num_items, hp.dim)).astype(np.float32)
    theta = init_client(1, hp.dim, TOY.num_items, client_id=0).transfer_net
    with pytest.warns(UserWarning, match="non-finite"):
        result = local_update(state, consensus, theta, sampler, hp, VariantConfig.from_label("Fed3CR"))
    assert result is None


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_all_clients_failing_aborts_run():
    hp = dataclasses.replace(FAST, rounds=1, local_iters=3, lr=1e30)
    with pytest.warns(UserWarning):
        with pytest.raises(AggregationError, match="round 0"):
            run_training(TOY, hp, VariantConfig.from_label("Fed3CR"))


def test_ace_not_worse_than_row_enhancement_baselines():
    from fed3cr.federation import enhancement_baseline

    hp = dataclasses.replace(FAST, rounds=15, local_iters=5, dim=16, eval_negatives=59, rbo_k=20)
    hr_ace = run_training(TOY, hp, VariantConfig.from_label("C1")).metrics[-1].hr_at_k
    hr_ct = enhancement_baseline(TOY, hp, "consensus-transfer").metrics[-1].hr_at_k
    hr_ut = enhancement_baseline(TOY, hp, "unified-transfer").metrics[-1].hr_at_k
    assert hr_ace >= hr_ct
    assert hr_ace >= hr_ut


def test_aggregation_order_invariance_via_sorted_ids():
    rng = np.random.default_rng(4)
    uploads = {cid: rng.normal(size=(3, 2)) for cid in range(5)}
    in_order = aggregate_consensus([uploads[c] for c in sorted(uploads)])
    shuffled_ids = list(uploads)
    rng.shuffle(shuffled_ids)
    resorted = aggregate_consensus([uploads[c] for c in sorted(shuffled_ids)])
    assert np.array_equal(in_order, resorted)
