"""Federated orchestration: client sampling, local SGD updates, server-side
averaging of the shared item table and transfer-net weights, round-wise
evaluation, ablation variants, and a federated-MF baseline with an optional
consensus-enhancement plug-in.

Only the shared table and the transfer-net weights ever leave a client;
user embeddings and personal tables stay local. Every upload is routed
through an UploadChannel so that surface is auditable.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import seeding
from .datasets import InteractionDataset, NegativeSampler, build_eval_candidates
from .errors import AggregationError, ConfigurationError, ShapeError
from .evaluation import RoundMetrics, hr_ndcg_at_k, rank_candidates, view_consistency_rbo
from .losses import LossBreakdown, _rec_loss_t, total_loss_t
from .model import (
    ClientState,
    TransferNet,
    forward_pass,
    generate_transfer_matrix,
    init_client,
    init_client_net,
    net_forward,
)

ABLATION_LABELS = ("C0", "C1", "C2", "C3", "C4", "C5", "C6", "Fed3CR")


@dataclass(frozen=True)
class VariantConfig:
    """Which enhancement path and which auxiliary losses a run uses."""

    enhancement_kind: str = "ace"  # ace | consensus-transfer | unified-transfer | none
    consistency_enabled: bool = True
    orthogonality_enabled: bool = True
    complementarity_kind: str = "orthogonal"  # orthogonal | l2-distance

    @property
    def ace_enabled(self) -> bool:
        return self.enhancement_kind == "ace"

    @property
    def has_net(self) -> bool:
        return self.enhancement_kind != "none"

    def validate(self) -> None:
        if self.enhancement_kind not in ("ace", "consensus-transfer", "unified-transfer", "none"):
            raise ConfigurationError(f"unknown enhancement kind {self.enhancement_kind!r}")
        if self.complementarity_kind not in ("orthogonal", "l2-distance"):
            raise ConfigurationError(f"unknown complementarity kind {self.complementarity_kind!r}")

    @classmethod
    def from_label(cls, label: str) -> "VariantConfig":
        """Ablation grid: C0 bare additive fusion, C1 adds the enhancement,
        C2/C3/C4 add only the auxiliary losses, C5/C6 combine the enhancement
        with one loss each, Fed3CR enables everything."""
        table = {
            "C0": ("none", False, False),
            "C1": ("ace", False, False),
            "C2": ("none", True, False),
            "C3": ("none", False, True),
            "C4": ("none", True, True),
            "C5": ("ace", True, False),
            "C6": ("ace", False, True),
            "Fed3CR": ("ace", True, True),
        }
        if label not in table:
            raise ConfigurationError(f"unknown variant label {label!r} (expected one of {ABLATION_LABELS})")
        kind, la, lo = table[label]
        return cls(enhancement_kind=kind, consistency_enabled=la, orthogonality_enabled=lo)


@dataclass
class HyperParams:
    """All training, loss and evaluation knobs with their defaults."""

    rounds: int = 100
    local_iters: int = 10
    dim: int = 32
    batch_size: int = 2048
    negatives_per_positive: int = 4
    client_fraction: float = 1.0
    lr: float = 0.1
    lr_gamma: float = 0.999
    beta_a: float = 0.5
    beta_o: float = 0.5
    ace_init: str = "zero"
    ace_scale: float = 1.0
    eq12_mode: str = "softmax"
    eval_negatives: int = 99
    seed: int = 0
    transfer_schedule: tuple[int, ...] = (2, 4)
    consistency_sample: bool = False
    dtype: str = "float32"
    eval_interval: int = 1
    top_k: int = 10
    rbo_k: int = 50
    rbo_p: float = 0.99
    rbo_enabled: bool = True

    def validate(self) -> None:
        if self.rounds < 1 or self.local_iters < 1:
            raise ConfigurationError("rounds and local_iters must be >= 1")
        if not 0.0 < self.client_fraction <= 1.0:
            raise ConfigurationError("client_fraction must lie in (0, 1]")
        if self.lr <= 0.0:
            raise ConfigurationError("lr must be positive")
        if self.eq12_mode not in ("softmax", "literal-ratio"):
            raise ConfigurationError(f"unknown eq12_mode {self.eq12_mode!r}")
        if self.ace_init not in ("zero", "identity"):
            raise ConfigurationError(f"unknown ace_init {self.ace_init!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.eval_negatives < 1 and self.eval_negatives != -1:
            raise ConfigurationError("eval_negatives must be positive (or -1 for full ranking)")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class ServerState:
    """What the server owns between rounds."""

    consensus: np.ndarray
    theta: TransferNet | None
    round: int = 0


@dataclass
class Upload:
    """The complete client-to-server payload: shared table + net weights."""

    client_id: int
    consensus: np.ndarray
    transfer_net: TransferNet | None


class UploadChannel:
    """Instrumented client-to-server path; records every payload block.

    With `capture_bytes` the raw serialized payload is kept so tests can
    assert exactly which bytes left the client.
    """

    def __init__(self, capture_bytes: bool = False):
        self.capture_bytes = capture_bytes
        self.records: list[dict] = []

    def send(self, round: int, upload: Upload) -> Upload:
        blocks = [("consensus", upload.consensus.shape, upload.consensus.nbytes)]
        payload = upload.consensus.tobytes() if self.capture_bytes else b""
        if upload.transfer_net is not None:
            for l, (w, b) in enumerate(zip(upload.transfer_net.weights, upload.transfer_net.biases)):
                blocks.append((f"transfer_net.w{l}", w.shape, w.nbytes))
                blocks.append((f"transfer_net.b{l}", b.shape, b.nbytes))
                if self.capture_bytes:
                    payload += w.tobytes() + b.tobytes()
        self.records.append(
            {
                "round": round,
                "client_id": upload.client_id,
                "blocks": blocks,
                "payload_bytes": payload if self.capture_bytes else None,
                "total_nbytes": sum(b[2] for b in blocks),
            }
        )
        return upload


# -- aggregation ----------------------------------------------------------------------


def aggregate_consensus(uploads: list[np.ndarray]) -> np.ndarray:
    """Elementwise mean of the uploaded tables."""
    if not uploads:
        raise AggregationError("no uploads to aggregate")
    first = np.asarray(uploads[0])
    for u in uploads[1:]:
        if np.asarray(u).shape != first.shape:
            raise ShapeError(f"upload shapes differ: {first.shape} vs {np.asarray(u).shape}")
    return np.mean(np.stack([np.asarray(u) for u in uploads]), axis=0)


def aggregate_theta(uploads: list[TransferNet]) -> TransferNet:
    """Blockwise mean of net weights and biases."""
    if not uploads:
        raise AggregationError("no transfer nets to aggregate")
    shapes = uploads[0].layer_shapes
    for net in uploads[1:]:
        if net.layer_shapes != shapes:
            raise ConfigurationError(
                f"transfer-net schedules differ: {shapes} vs {net.layer_shapes}"
            )
    weights = [np.mean(np.stack([net.weights[l] for net in uploads]), axis=0) for l in range(len(shapes))]
    biases = [np.mean(np.stack([net.biases[l] for net in uploads]), axis=0) for l in range(len(shapes))]
    return TransferNet(weights, biases)


def select_clients(n: int, fraction: float, round: int, seed: int) -> list[int]:
    """ceil(fraction * n) distinct ids, uniform without replacement,
    deterministic in (seed, round); returned sorted."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"fraction must lie in (0, 1], got {fraction}")
    count = int(np.ceil(fraction * n))
    if count >= n:
        return list(range(n))
    rng = seeding.rng(seed, seeding.CLIENT_SELECT, round)
    return sorted(int(c) for c in rng.choice(n, size=count, replace=False))


# -- local update ----------------------------------------------------------------------


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    return LossBreakdown(
        l_rec=float(np.mean([p.l_rec for p in parts])),
        l_a=float(np.mean([p.l_a for p in parts])),
        l_o=float(np.mean([p.l_o for p in parts])),
        total=float(np.mean([p.total for p in parts])),
        beta_a=parts[0].beta_a,
        beta_o=parts[0].beta_o,
    )


def local_update(
    state: ClientState,
    consensus: np.ndarray,
    theta: TransferNet | None,
    sampler: NegativeSampler,
    hp: HyperParams,
    variant: VariantConfig,
    round: int = 0,
) -> tuple[Upload, LossBreakdown] | None:
    """Download the shared blocks, run E SGD iterations, return the upload.

    The learning rate decays per local iteration across the whole run:
    lr * gamma^(round * E + e). A non-finite loss aborts the client for the
    round (it is excluded from aggregation) with a warning naming it.
    """
    positives = sampler.dataset.client_items[state.client_id]
    if len(positives) == 0:
        warnings.warn(f"round {round}: client {state.client_id} has no positives; skipped")
        return None

    state.global_table = np.array(consensus, dtype=hp.np_dtype)
    if variant.has_net:
        if theta is None:
            raise ConfigurationError("variant requires transfer-net weights to download")
        state.transfer_net = theta.copy()

    breakdowns = []
    for e in range(hp.local_iters):
        items, labels = sampler.sample_batch(state.client_id, hp.batch_size)
        trace = forward_pass(
            state, positives, enhancement=variant.enhancement_kind, ace_scale=hp.ace_scale
        )
        total, breakdown = total_loss_t(
            trace,
            items,
            labels,
            beta_a=hp.beta_a,
            beta_o=hp.beta_o,
            eq12_mode=hp.eq12_mode,
            consistency_enabled=variant.consistency_enabled,
            orthogonality_enabled=variant.orthogonality_enabled,
            complementarity_kind=variant.complementarity_kind,
            consistency_items=np.unique(items) if hp.consistency_sample else None,
        )
        if not np.isfinite(breakdown.total):
            warnings.warn(
                f"round {round}: client {state.client_id} produced a non-finite loss; "
                "excluded from aggregation"
            )
            return None
        total.backward()
        lr = hp.lr * hp.lr_gamma ** (round * hp.local_iters + e)
        # Row-map nets see gradient sums over all M item rows; use the mean
        # so the shared learning rate stays stable for the baseline kinds.
        net_scale = 1.0 / state.num_items if variant.enhancement_kind in (
            "consensus-transfer",
            "unified-transfer",
        ) else 1.0
        for name, tensor in trace.params.items():
            if tensor.grad is None:
                continue
            scale = net_scale if name[0] in ("w", "b") else 1.0
            tensor.data -= (lr * scale * tensor.grad).astype(tensor.data.dtype, copy=False)
        breakdowns.append(breakdown)

    upload = Upload(
        client_id=state.client_id,
        consensus=state.global_table.copy(),
        transfer_net=state.transfer_net.copy() if variant.has_net and state.transfer_net else None,
    )
    return upload, _mean_breakdown(breakdowns)


# -- training loop ----------------------------------------------------------------------


@dataclass
class TrainingResult:
    server: ServerState
    metrics: list[RoundMetrics]
    clients: list[ClientState] = field(repr=False, default_factory=list)


def init_server(ds: InteractionDataset, hp: HyperParams, variant: VariantConfig) -> ServerState:
    rng = seeding.rng(hp.seed, seeding.SERVER_INIT, 0)
    consensus = rng.normal(0.0, 0.01, size=(ds.num_items, hp.dim)).astype(hp.np_dtype)
    theta = None
    if variant.has_net:
        theta = init_client_net(
            seeding.rng(hp.seed, seeding.SERVER_INIT, 1),
            hp.dim,
            hp.transfer_schedule,
            ace_init=hp.ace_init,
            enhancement=variant.enhancement_kind,
            dtype=hp.np_dtype,
        )
    return ServerState(consensus=consensus, theta=theta, round=0)


def _eval_state(client: ClientState, server: ServerState, hp: HyperParams, variant: VariantConfig) -> ClientState:
    """Client as it would score after downloading the freshest shared blocks."""
    return ClientState(
        client_id=client.client_id,
        user_embedding=client.user_embedding,
        global_table=np.array(server.consensus, dtype=hp.np_dtype),
        personal_table=client.personal_table,
        transfer_net=server.theta.copy() if variant.has_net and server.theta is not None else None,
    )


def evaluate_round(
    clients: list[ClientState],
    server: ServerState,
    ds: InteractionDataset,
    hp: HyperParams,
    variant: VariantConfig,
    candidates: list[list[int]],
    round: int,
    loss_means: LossBreakdown,
    compute_rbo: bool = True,
) -> RoundMetrics:
    hrs, ndcgs, rbos = [], [], []
    for client in clients:
        positives = ds.client_items[client.client_id]
        if len(positives) == 0:
            continue
        snap = _eval_state(client, server, hp, variant)
        trace = forward_pass(snap, positives, enhancement=variant.enhancement_kind, ace_scale=hp.ace_scale)
        ranked = rank_candidates(snap.user_embedding, trace.V_F.data, candidates[client.client_id])
        hr, ndcg = hr_ndcg_at_k(ranked, ds.test_items[client.client_id], hp.top_k)
        hrs.append(hr)
        ndcgs.append(ndcg)
        if compute_rbo:
            k = min(hp.rbo_k, ds.num_items)
            rbos.append(view_consistency_rbo(snap, trace, k, hp.rbo_p))
    return RoundMetrics(
        round=round,
        hr_at_k=float(np.mean(hrs)),
        ndcg_at_k=float(np.mean(ndcgs)),
        rbo=float(np.mean(rbos)) if rbos else None,
        loss_rec=loss_means.l_rec,
        loss_a=loss_means.l_a,
        loss_o=loss_means.l_o,
        clients_evaluated=len(hrs),
    )


def run_training(
    ds: InteractionDataset,
    hp: HyperParams,
    variant: VariantConfig = VariantConfig(),
    workers: int = 1,
    channel: UploadChannel | None = None,
    on_round=None,
) -> TrainingResult:
    """Full federated run: T rounds of select / parallel local update /
    aggregate / evaluate. Deterministic for a fixed (config, seed) no matter
    how many workers execute the client map. `on_round(round)` fires after
    each completed round (timing hooks and progress reporting)."""
    hp.validate()
    variant.validate()
    if not ds.is_split:
        raise ConfigurationError("dataset must be split before training")

    clients = [
        init_client(
            hp.seed,
            hp.dim,
            ds.num_items,
            schedule=hp.transfer_schedule,
            client_id=c,
            dtype=hp.np_dtype,
            ace_init=hp.ace_init,
            enhancement=variant.enhancement_kind,
        )
        for c in range(ds.num_clients)
    ]
    server = init_server(ds, hp, variant)
    sampler = NegativeSampler(ds, hp.seed, hp.negatives_per_positive)
    candidates = [
        build_eval_candidates(ds, c, hp.eval_negatives, hp.seed) for c in range(ds.num_clients)
    ]

    metrics: list[RoundMetrics] = []
    for round in range(hp.rounds):
        selected = select_clients(ds.num_clients, hp.client_fraction, round, hp.seed)

        def update(cid: int):
            return local_update(clients[cid], server.consensus, server.theta, sampler, hp, variant, round)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(update, selected))
        else:
            results = [update(cid) for cid in selected]

        uploads, losses = [], []
        for result in results:
            if result is None:
                continue
            upload, breakdown = result
            if channel is not None:
                channel.send(round, upload)
            uploads.append(upload)
            losses.append(breakdown)
        if not uploads:
            raise AggregationError(f"round {round}: every selected client failed; aborting run")

        uploads.sort(key=lambda u: u.client_id)
        server.consensus = aggregate_consensus([u.consensus for u in uploads]).astype(hp.np_dtype)
        if variant.has_net:
            server.theta = aggregate_theta([u.transfer_net for u in uploads])
        server.round = round + 1

        if (round + 1) % hp.eval_interval == 0 or round == hp.rounds - 1:
            metrics.append(
                evaluate_round(
                    clients,
                    server,
                    ds,
                    hp,
                    variant,
                    candidates,
                    round,
                    _mean_breakdown(losses),
                    compute_rbo=hp.rbo_enabled,
                )
            )
        if on_round is not None:
            on_round(round)
    return TrainingResult(server=server, metrics=metrics, clients=clients)


def enhancement_baseline(
    ds: InteractionDataset,
    hp: HyperParams,
    kind: str,
    workers: int = 1,
    channel: UploadChannel | None = None,
) -> TrainingResult:
    """Run the alternative row-enhancement baselines under the C1-style
    setting (auxiliary losses off) so they are directly comparable."""
    if kind not in ("consensus-transfer", "unified-transfer"):
        raise ConfigurationError(f"unknown enhancement baseline {kind!r}")
    variant = VariantConfig(enhancement_kind=kind, consistency_enabled=False, orthogonality_enabled=False)
    return run_training(ds, hp, variant, workers=workers, channel=channel)


# -- federated matrix factorization baseline ----------------------------------------------


@dataclass
class FedMFClient:
    client_id: int
    user_embedding: np.ndarray


def fedmf_baseline(
    ds: InteractionDataset,
    hp: HyperParams,
    ace_plugin: bool = False,
    channel: UploadChannel | None = None,
) -> TrainingResult:
    """Single shared item table trained federatedly with the BCE objective.

    With `ace_plugin` the downloaded table doubles as a frozen consensus:
    each scored row becomes q_j + W c_j where W comes from the net applied
    to the [consensus, local] prototype pair, so a zero-initialized net
    reproduces the plain baseline exactly.
    """
    hp.validate()
    if not ds.is_split:
        raise ConfigurationError("dataset must be split before training")

    dtype = hp.np_dtype
    clients = [
        FedMFClient(c, seeding.rng(hp.seed, seeding.CLIENT_INIT, c).normal(0.0, 0.01, hp.dim).astype(dtype))
        for c in range(ds.num_clients)
    ]
    rng = seeding.rng(hp.seed, seeding.SERVER_INIT, 0)
    table = rng.normal(0.0, 0.01, size=(ds.num_items, hp.dim)).astype(dtype)
    theta = (
        init_client_net(
            seeding.rng(hp.seed, seeding.SERVER_INIT, 1),
            hp.dim,
            hp.transfer_schedule,
            ace_init=hp.ace_init,
            enhancement="ace",
            dtype=dtype,
        )
        if ace_plugin
        else None
    )
    sampler = NegativeSampler(ds, hp.seed, hp.negatives_per_positive)
    candidates = [
        build_eval_candidates(ds, c, hp.eval_negatives, hp.seed) for c in range(ds.num_clients)
    ]

    def plugin_scoring_table(q: np.ndarray, consensus: np.ndarray, net: TransferNet, positives) -> np.ndarray:
        p_g = consensus[positives].mean(axis=0)
        p_p = q[positives].mean(axis=0)
        w = generate_transfer_matrix(net, p_g, p_p, hp.ace_scale)
        return q + consensus @ w.T

    metrics: list[RoundMetrics] = []
    for round in range(hp.rounds):
        selected = select_clients(ds.num_clients, hp.client_fraction, round, hp.seed)
        uploads: list[Upload] = []
        losses: list[LossBreakdown] = []
        for cid in selected:
            client = clients[cid]
            positives = ds.client_items[cid]
            if len(positives) == 0:
                continue
            q = np.array(table, dtype=dtype)
            net = theta.copy() if ace_plugin else None
            consensus = table  # frozen view of the downloaded table
            breakdowns = []
            for e in range(hp.local_iters):
                items, labels = sampler.sample_batch(cid, hp.batch_size)
                u_t = ad.parameter(client.user_embedding)
                q_t = ad.parameter(q)
                params = [u_t, q_t]
                if ace_plugin:
                    theta_t = []
                    for w, b in zip(net.weights, net.biases):
                        w_t, b_t = ad.parameter(w), ad.parameter(b)
                        theta_t.append((w_t, b_t))
                        params.extend([w_t, b_t])
                    p_g = ad.as_tensor(consensus[positives].mean(axis=0))
                    p_p = ad.tmean(ad.gather_rows(q_t, positives), axis=0)
                    w_mat = ad.reshape(net_forward(theta_t, ad.concat([p_g, p_p])), (hp.dim, hp.dim))
                    if hp.ace_scale != 1.0:
                        w_mat = ad.mul(w_mat, hp.ace_scale)
                    v_f = ad.add(q_t, ad.matmul(ad.as_tensor(consensus), ad.transpose(w_mat)))
                else:
                    v_f = q_t
                scores = ad.matmul(ad.gather_rows(v_f, items), u_t)
                loss = _rec_loss_t(ad.sigmoid(scores), labels)
                if not np.isfinite(loss.item()):
                    warnings.warn(f"round {round}: fedmf client {cid} non-finite loss; excluded")
                    breakdowns = []
                    break
                loss.backward()
                lr = hp.lr * hp.lr_gamma ** (round * hp.local_iters + e)
                for t in params:
                    if t.grad is not None:
                        t.data -= (lr * t.grad).astype(t.data.dtype, copy=False)
                breakdowns.append(LossBreakdown(loss.item(), 0.0, 0.0, loss.item(), 0.0, 0.0))
            if not breakdowns:
                continue
            upload = Upload(cid, q.copy(), net.copy() if ace_plugin else None)
            if channel is not None:
                channel.send(round, upload)
            uploads.append(upload)
            losses.append(_mean_breakdown(breakdowns))

        if not uploads:
            raise AggregationError(f"round {round}: every selected fedmf client failed")
        uploads.sort(key=lambda u: u.client_id)
        table = aggregate_consensus([u.consensus for u in uploads]).astype(dtype)
        if ace_plugin:
            theta = aggregate_theta([u.transfer_net for u in uploads])

        if (round + 1) % hp.eval_interval == 0 or round == hp.rounds - 1:
            hrs, ndcgs = [], []
            for client in clients:
                positives = ds.client_items[client.client_id]
                if len(positives) == 0:
                    continue
                scoring = (
                    plugin_scoring_table(table, table, theta, positives) if ace_plugin else table
                )
                ranked = rank_candidates(client.user_embedding, scoring, candidates[client.client_id])
                hr, ndcg = hr_ndcg_at_k(ranked, ds.test_items[client.client_id], hp.top_k)
                hrs.append(hr)
                ndcgs.append(ndcg)
            mean_losses = _mean_breakdown(losses)
            metrics.append(
                RoundMetrics(
                    round=round,
                    hr_at_k=float(np.mean(hrs)),
                    ndcg_at_k=float(np.mean(ndcgs)),
                    rbo=None,
                    loss_rec=mean_losses.l_rec,
                    loss_a=0.0,
                    loss_o=0.0,
                    clients_evaluated=len(hrs),
                )
            )

    server = ServerState(consensus=table, theta=theta, round=hp.rounds)
    return TrainingResult(server=server, metrics=metrics, clients=[])
