"""Training objectives: recommendation BCE, ranking-based consistency between
the two item-table views, and the orthogonality penalty on their correlation,
combined as l_rec + beta_a * l_a + beta_o * l_o.

Every term has a pure-numpy entry point for direct evaluation plus a tape
counterpart (same math) used inside the differentiable training step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DegenerateInputWarning, ShapeError
from .model import ForwardTrace

PRED_CLAMP = 1e-7
LOG_FLOOR = 1e-12
COS_CLAMP = 1e-6
NORM_GUARD = 1e-24  # added under the square root of every norm

EQ12_MODES = ("softmax", "literal-ratio")


@dataclass
class LossBreakdown:
    """Per-iteration loss components and their weighted total."""

    l_rec: float
    l_a: float
    l_o: float
    total: float
    beta_a: float
    beta_o: float


# -- tape-level building blocks -----------------------------------------------------


def _rec_loss_t(predictions: Tensor, labels: np.ndarray) -> Tensor:
    """Summed binary cross-entropy with predictions clamped away from {0, 1}."""
    p = ad.clip(predictions, PRED_CLAMP, 1.0 - PRED_CLAMP)
    labels = np.asarray(labels, dtype=p.data.dtype)
    pos = ad.mul(ad.log(p), labels)
    neg = ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - labels)
    return ad.mul(ad.tsum(ad.add(pos, neg)), -1.0)


def _row_cosines_t(prototype: Tensor, table: Tensor) -> Tensor:
    """Cosine similarity of a prototype against every table row."""
    row_dots = ad.matmul(table, prototype)
    row_norms = ad.sqrt(ad.add(ad.tsum(ad.mul(table, table), axis=1), NORM_GUARD))
    p_norm = ad.sqrt(ad.add(ad.tsum(ad.mul(prototype, prototype)), NORM_GUARD))
    return ad.div(row_dots, ad.mul(row_norms, p_norm))


def _top_one_t(prototype: Tensor, table: Tensor, mode: str = "softmax") -> Tensor:
    """Distribution over items from prototype-to-row cosine similarities.

    'softmax' (default) exponentiates the similarities; 'literal-ratio'
    clamps them to [1e-6, 1] and normalizes by their sum.
    """
    if mode not in EQ12_MODES:
        raise ValueError(f"unknown top-one mode {mode!r}")
    cos = _row_cosines_t(prototype, table)
    if mode == "softmax":
        return ad.softmax(cos)
    clamped = ad.clip(cos, COS_CLAMP, 1.0)
    return ad.div(clamped, ad.tsum(clamped))


def _consistency_t(p_personal: Tensor, p_global: Tensor) -> Tensor:
    """Symmetric cross-entropy between two item distributions."""
    log_g = ad.log(ad.clip(p_global, LOG_FLOOR, None))
    log_p = ad.log(ad.clip(p_personal, LOG_FLOOR, None))
    cross = ad.add(ad.tsum(ad.mul(p_personal, log_g)), ad.tsum(ad.mul(p_global, log_p)))
    return ad.mul(cross, -0.5)


def _orthogonality_t(c_e: Tensor, v: Tensor) -> Tensor:
    """Mean-per-column Frobenius energy of the cross-view correlation matrix."""
    corr = ad.matmul(ad.transpose(c_e), v)
    d = c_e.data.shape[1]
    return ad.mul(ad.tsum(ad.mul(corr, corr)), 1.0 / d)


def _distance_push_t(c_e: Tensor, v: Tensor) -> Tensor:
    """Negative mean squared distance between the tables (push-apart baseline)."""
    diff = ad.sub(c_e, v)
    m, d = c_e.data.shape
    return ad.mul(ad.tsum(ad.mul(diff, diff)), -1.0 / (m * d))


# -- public numpy surface -------------------------------------------------------------


def rec_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ShapeError(f"predictions {predictions.shape} vs labels {labels.shape}")
    return _rec_loss_t(ad.as_tensor(np.asarray(predictions, dtype=np.float64)), labels).item()


def top_one_distribution(prototype: np.ndarray, table: np.ndarray, mode: str = "softmax") -> np.ndarray:
    prototype, table = np.asarray(prototype), np.asarray(table)
    if table.ndim != 2 or prototype.shape[0] != table.shape[1]:
        raise ShapeError(f"prototype {prototype.shape} vs table {table.shape}")
    if not table.any(axis=1).all():
        warnings.warn("table contains all-zero rows; their similarity is treated as 0", DegenerateInputWarning)
    return _top_one_t(ad.as_tensor(prototype), ad.as_tensor(table), mode).data


def consistency_loss(p_personal: np.ndarray, p_global: np.ndarray) -> float:
    p_personal, p_global = np.asarray(p_personal), np.asarray(p_global)
    if p_personal.shape != p_global.shape:
        raise ShapeError(f"distribution shapes differ: {p_personal.shape} vs {p_global.shape}")
    return _consistency_t(ad.as_tensor(p_personal), ad.as_tensor(p_global)).item()


def orthogonality_loss(c_e: np.ndarray, v: np.ndarray) -> float:
    c_e, v = np.asarray(c_e), np.asarray(v)
    if c_e.shape != v.shape:
        raise ShapeError(f"table shapes differ: {c_e.shape} vs {v.shape}")
    return _orthogonality_t(ad.as_tensor(c_e), ad.as_tensor(v)).item()


def similarity_consistency_diagnostic(c_e: np.ndarray, v: np.ndarray) -> float:
    """Frobenius distance between the row-cosine Gram matrices of the two tables.

    Diagnostic only; the training objective uses the ranking-based
    consistency term instead.
    """
    c_e, v = np.asarray(c_e, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if c_e.shape != v.shape:
        raise ShapeError(f"table shapes differ: {c_e.shape} vs {v.shape}")

    def cosine_gram(table: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(table, axis=1)
        if (norms == 0).any():
            warnings.warn("zero-norm rows in table; treated as zero vectors", DegenerateInputWarning)
        safe = np.where(norms == 0, 1.0, norms)
        unit = table / safe[:, None]
        return unit @ unit.T

    return float(np.linalg.norm(cosine_gram(c_e) - cosine_gram(v), "fro"))


# -- combined objective --------------------------------------------------------------


def total_loss_t(
    trace: ForwardTrace,
    batch_items: np.ndarray,
    batch_labels: np.ndarray,
    beta_a: float,
    beta_o: float,
    eq12_mode: str = "softmax",
    consistency_enabled: bool = True,
    orthogonality_enabled: bool = True,
    complementarity_kind: str = "orthogonal",
    consistency_items: np.ndarray | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """Assemble the full objective on the tape; returns (total tensor, breakdown).

    `consistency_items`, when given, restricts the two top-one distributions
    to that subset of rows (cheaper than all M items on large tables).
    """
    u = trace.params["u"]
    scores = ad.matmul(ad.gather_rows(trace.V_F, np.asarray(batch_items)), u)
    preds = ad.sigmoid(scores)
    l_rec = _rec_loss_t(preds, batch_labels)

    zero = ad.as_tensor(np.asarray(0.0, dtype=trace.V_F.data.dtype))
    l_a = zero
    if consistency_enabled and beta_a != 0.0:
        v_view, g_view = trace.params["V"], trace.C_E
        if consistency_items is not None:
            idx = np.asarray(consistency_items)
            v_view = ad.gather_rows(v_view, idx)
            g_view = ad.gather_rows(g_view, idx)
        p_personal = _top_one_t(trace.p_P, v_view, eq12_mode)
        p_global = _top_one_t(trace.p_E, g_view, eq12_mode)
        l_a = _consistency_t(p_personal, p_global)

    l_o = zero
    if orthogonality_enabled and beta_o != 0.0:
        if complementarity_kind == "orthogonal":
            l_o = _orthogonality_t(trace.C_E, trace.params["V"])
        elif complementarity_kind == "l2-distance":
            l_o = _distance_push_t(trace.C_E, trace.params["V"])
        else:
            raise ValueError(f"unknown complementarity kind {complementarity_kind!r}")

    total = ad.add(l_rec, ad.add(ad.mul(l_a, beta_a), ad.mul(l_o, beta_o)))
    breakdown = LossBreakdown(
        l_rec=l_rec.item(),
        l_a=l_a.item(),
        l_o=l_o.item(),
        total=total.item(),
        beta_a=beta_a,
        beta_o=beta_o,
    )
    return total, breakdown


def total_loss(
    trace: ForwardTrace,
    batch: tuple[np.ndarray, np.ndarray],
    beta_a: float,
    beta_o: float,
    **kwargs,
) -> LossBreakdown:
    """Evaluate the combined objective for a fresh forward trace."""
    items, labels = batch
    _, breakdown = total_loss_t(trace, items, labels, beta_a, beta_o, **kwargs)
    return breakdown
