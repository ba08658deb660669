"""Client-side parameters and the consensus-enhancement forward pass.

A client holds four trainable blocks: its user embedding, a local copy of
the shared (global) item table, a private personal item table, and the
weights of a small fully connected net that turns the client's two
preference prototypes into a d x d transfer matrix. Scoring fuses the
transformed global table with the personal one additively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import seeding
from .autodiff import Tensor
from .errors import DataError, ShapeError

ENHANCEMENT_KINDS = ("ace", "consensus-transfer", "unified-transfer", "none")


@dataclass
class TransferNet:
    """Fully connected net: ReLU hidden layers, linear output.

    `weights[l]` has shape (out_l, in_l); `biases[l]` has shape (out_l,).
    The default configuration maps the concatenated prototypes (2d) to the
    d*d entries of the transfer matrix; the alternative row-enhancement
    baselines use a d -> d configuration instead.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        return tuple(w.shape for w in self.weights)

    @property
    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "TransferNet":
        return TransferNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)


def init_transfer_net(
    rng: np.random.Generator,
    in_dim: int,
    hidden: list[int],
    out_dim: int,
    final_init: str = "zero",
    final_scale: float = 1e-3,
    dtype=np.float32,
) -> TransferNet:
    """Hidden layers get fan-in uniform init; the output layer starts near
    zero ('zero') or near a flattened identity ('identity') so the generated
    transfer matrix begins at ~0 or ~I respectively."""
    widths = [in_dim] + list(hidden) + [out_dim]
    weights, biases = [], []
    for l in range(len(widths) - 1):
        fan_in, fan_out = widths[l], widths[l + 1]
        last = l == len(widths) - 2
        if last:
            w = rng.uniform(-final_scale, final_scale, size=(fan_out, fan_in))
            b = np.zeros(fan_out)
            if final_init == "identity":
                d = int(round(out_dim**0.5))
                if d * d != out_dim:
                    raise ShapeError(f"identity init needs a square output, got {out_dim}")
                b = np.eye(d).reshape(-1)
            elif final_init != "zero":
                raise ValueError(f"unknown final_init {final_init!r}")
        else:
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
        weights.append(w.astype(dtype))
        biases.append(b.astype(dtype))
    return TransferNet(weights, biases)


def net_forward(params: list[tuple[Tensor, Tensor]], x: Tensor) -> Tensor:
    """Run the net on a single input vector."""
    h = x
    for l, (w, b) in enumerate(params):
        h = ad.matmul(w, h) + b
        if l < len(params) - 1:
            h = ad.relu(h)
    return h


def net_forward_rows(params: list[tuple[Tensor, Tensor]], x: Tensor) -> Tensor:
    """Run the net independently on every row of a matrix."""
    h = x
    for l, (w, b) in enumerate(params):
        h = ad.matmul(h, ad.transpose(w)) + b
        if l < len(params) - 1:
            h = ad.relu(h)
    return h


@dataclass
class ClientState:
    """All parameter blocks owned by one client."""

    client_id: int
    user_embedding: np.ndarray
    global_table: np.ndarray
    personal_table: np.ndarray
    transfer_net: TransferNet | None

    @property
    def dim(self) -> int:
        return self.user_embedding.shape[0]

    @property
    def num_items(self) -> int:
        return self.global_table.shape[0]

    def copy(self) -> "ClientState":
        return ClientState(
            self.client_id,
            self.user_embedding.copy(),
            self.global_table.copy(),
            self.personal_table.copy(),
            self.transfer_net.copy() if self.transfer_net is not None else None,
        )


@dataclass
class ForwardTrace:
    """Tensors recorded by one forward pass; `params` holds the trainable leaves."""

    p_G: Tensor
    p_P: Tensor
    W: Tensor | None
    C_E: Tensor
    p_E: Tensor
    V_F: Tensor
    params: dict = field(repr=False, default_factory=dict)


def init_client(
    seed: int,
    d: int,
    M: int,
    schedule: tuple[int, ...] = (2, 4),
    client_id: int = 0,
    dtype=np.float32,
    ace_init: str = "zero",
    enhancement: str = "ace",
) -> ClientState:
    """Seeded client construction; identical (seed, client_id) gives identical state.

    Embeddings draw from Normal(0, 0.01). `schedule` lists layer widths as
    multiples of d starting at the mandatory input width 2*d; the output
    layer (d*d units) is appended automatically.
    """
    if d < 1 or M < 1:
        raise ValueError("d and M must be positive")
    if enhancement not in ENHANCEMENT_KINDS:
        raise ValueError(f"unknown enhancement kind {enhancement!r}")
    rng = seeding.rng(seed, seeding.CLIENT_INIT, client_id)
    u = rng.normal(0.0, 0.01, size=d).astype(dtype)
    c = rng.normal(0.0, 0.01, size=(M, d)).astype(dtype)
    v = rng.normal(0.0, 0.01, size=(M, d)).astype(dtype)
    net = init_client_net(rng, d, schedule, ace_init=ace_init, enhancement=enhancement, dtype=dtype)
    return ClientState(client_id, u, c, v, net)


def init_client_net(
    rng: np.random.Generator,
    d: int,
    schedule: tuple[int, ...],
    ace_init: str = "zero",
    enhancement: str = "ace",
    dtype=np.float32,
) -> TransferNet | None:
    """Net constructor shared by clients and the server-side initializer."""
    if enhancement == "none":
        return None
    if enhancement == "ace":
        if not schedule or schedule[0] != 2:
            raise ShapeError(f"transfer-net schedule must start at width 2*d, got {schedule}")
        hidden = [m * d for m in schedule[1:]]
        return init_transfer_net(rng, 2 * d, hidden, d * d, final_init=ace_init, dtype=dtype)
    # Row-enhancement baselines map item rows d -> d through one hidden layer.
    hidden = max(schedule[-1] * d if len(schedule) > 1 else 4 * d, 2 * d)
    return init_row_net(rng, d, hidden, dtype=dtype)


def init_row_net(rng: np.random.Generator, d: int, hidden: int, dtype=np.float32) -> TransferNet:
    """Row-map net (d -> hidden -> d) initialized near the identity function.

    The first 2*d hidden units encode relu(x) - relu(-x) = x; the output
    layer reassembles it. Starting at the identity keeps the fused table at
    its plain additive value until the net learns something better (a
    zero-start would zero out every mapped row and erase the signal).
    """
    noise = 1e-3
    w0 = rng.uniform(-noise, noise, size=(hidden, d))
    w0[:d] += np.eye(d)
    w0[d : 2 * d] -= np.eye(d)
    b0 = np.zeros(hidden)
    w1 = rng.uniform(-noise, noise, size=(d, hidden))
    w1[:, :d] += np.eye(d)
    w1[:, d : 2 * d] -= np.eye(d)
    b1 = np.zeros(d)
    return TransferNet([w0.astype(dtype), w1.astype(dtype)], [b0.astype(dtype), b1.astype(dtype)])


# -- single-step operations (numpy in, numpy out) ------------------------------------


def compute_prototypes(state: ClientState, positives: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean global-table row and mean personal-table row over the interacted items."""
    positives = np.asarray(positives)
    if positives.size == 0:
        raise DataError(f"client {state.client_id} has no positives to build prototypes from")
    p_g = state.global_table[positives].mean(axis=0)
    p_p = state.personal_table[positives].mean(axis=0)
    return p_g, p_p


def generate_transfer_matrix(
    net: TransferNet, p_g: np.ndarray, p_p: np.ndarray, ace_scale: float = 1.0
) -> np.ndarray:
    """Map the concatenated [global, personal] prototypes to a d x d matrix."""
    d = p_g.shape[0]
    if p_p.shape != p_g.shape:
        raise ShapeError(f"prototype shapes differ: {p_g.shape} vs {p_p.shape}")
    if net.in_dim != 2 * d or net.out_dim != d * d:
        raise ShapeError(
            f"net maps {net.in_dim} -> {net.out_dim}, expected {2 * d} -> {d * d}"
        )
    params = [(ad.as_tensor(w), ad.as_tensor(b)) for w, b in zip(net.weights, net.biases)]
    out = net_forward(params, ad.as_tensor(np.concatenate([p_g, p_p])))
    return out.data.reshape(d, d) * ace_scale


def enhance_consensus(w: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Apply the transfer matrix to every item row: row j becomes W @ c_j."""
    w, c = np.asarray(w), np.asarray(c)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"transfer matrix must be square, got {w.shape}")
    if c.ndim != 2 or c.shape[1] != w.shape[0]:
        raise ShapeError(f"table {c.shape} incompatible with transfer matrix {w.shape}")
    return c @ w.T


def fuse(c_e: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Elementwise sum of the enhanced global table and the personal table."""
    c_e, v = np.asarray(c_e), np.asarray(v)
    if c_e.shape != v.shape:
        raise ShapeError(f"cannot fuse tables of shapes {c_e.shape} and {v.shape}")
    return c_e + v


def predict(u: np.ndarray, v: np.ndarray) -> float:
    """Interaction probability sigma(u . v), overflow-safe."""
    u, v = np.asarray(u), np.asarray(v)
    if u.shape != v.shape:
        raise ShapeError(f"embedding shapes differ: {u.shape} vs {v.shape}")
    x = float(np.dot(u, v))
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


# -- differentiable forward pass ----------------------------------------------------


def forward_pass(
    state: ClientState,
    positives: np.ndarray,
    enhancement: str = "ace",
    ace_scale: float = 1.0,
) -> ForwardTrace:
    """Build the differentiable graph from the client's parameter blocks.

    The returned trace's `params` dict holds the trainable leaf tensors
    ("u", "C", "V" and per-layer "w{l}"/"b{l}"); after a backward pass their
    `.grad` fields drive the SGD update.
    """
    if enhancement not in ENHANCEMENT_KINDS:
        raise ValueError(f"unknown enhancement kind {enhancement!r}")
    positives = np.asarray(positives)
    if positives.size == 0:
        raise DataError(f"client {state.client_id} has no positives")

    d = state.dim
    u_t = ad.parameter(state.user_embedding)
    c_t = ad.parameter(state.global_table)
    v_t = ad.parameter(state.personal_table)
    params: dict = {"u": u_t, "C": c_t, "V": v_t}

    theta: list[tuple[Tensor, Tensor]] = []
    if state.transfer_net is not None and enhancement != "none":
        for l, (w, b) in enumerate(zip(state.transfer_net.weights, state.transfer_net.biases)):
            w_t, b_t = ad.parameter(w), ad.parameter(b)
            params[f"w{l}"] = w_t
            params[f"b{l}"] = b_t
            theta.append((w_t, b_t))

    p_g = ad.tmean(ad.gather_rows(c_t, positives), axis=0)
    p_p = ad.tmean(ad.gather_rows(v_t, positives), axis=0)

    w_mat: Tensor | None = None
    if enhancement == "ace":
        out = net_forward(theta, ad.concat([p_g, p_p]))
        w_mat = ad.reshape(out, (d, d))
        if ace_scale != 1.0:
            w_mat = ad.mul(w_mat, ace_scale)
        c_e = ad.matmul(c_t, ad.transpose(w_mat))
        p_e = ad.matmul(w_mat, p_g)
        v_f = ad.add(c_e, v_t)
    elif enhancement == "consensus-transfer":
        c_e = net_forward_rows(theta, c_t)
        p_e = ad.tmean(ad.gather_rows(c_e, positives), axis=0)
        v_f = ad.add(c_e, v_t)
    elif enhancement == "unified-transfer":
        c_e = net_forward_rows(theta, c_t)
        v_mapped = net_forward_rows(theta, v_t)
        p_e = ad.tmean(ad.gather_rows(c_e, positives), axis=0)
        v_f = ad.add(c_e, v_mapped)
    else:  # none: fusion of the raw consensus with the personal table
        c_e = c_t
        p_e = p_g
        v_f = ad.add(c_t, v_t)

    return ForwardTrace(p_G=p_g, p_P=p_p, W=w_mat, C_E=c_e, p_E=p_e, V_F=v_f, params=params)
