"""Interaction-log ingestion and per-client implicit datasets.

Raw logs (MovieLens ``.dat``, TSV or CSV) are binarized into per-client
positive item sets, filtered by activity, remapped to dense contiguous ids,
and split leave-one-out: one held-out test item per client, the rest kept
for training. Negative sampling for training batches and fixed evaluation
candidate lists live here too.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .errors import (
    ConfigurationError,
    DataError,
    ParseError,
    ReplacementSamplingWarning,
    SplitError,
)


@dataclass
class RawInteraction:
    """One parsed log record, before remapping."""

    user_id: str
    item_id: str
    rating: float | None = None
    timestamp: int | None = None


@dataclass
class InteractionDataset:
    """Per-client implicit interactions with dense ids.

    `client_items[i]` holds client i's train positives once a split has been
    performed, or all positives before it. `timestamps[i]` is aligned with
    `client_items[i]` and None when the source had no timestamps.
    """

    num_clients: int
    num_items: int
    client_items: list[np.ndarray]
    timestamps: list[np.ndarray] | None
    test_items: list[int] | None
    user_ids: list[str]
    item_ids: list[str]
    user_index: dict[str, int] = field(repr=False)
    item_index: dict[str, int] = field(repr=False)

    @property
    def is_split(self) -> bool:
        return self.test_items is not None

    @property
    def num_interactions(self) -> int:
        total = sum(len(items) for items in self.client_items)
        if self.is_split:
            total += self.num_clients
        return total

    def stats(self) -> dict:
        k = self.num_interactions
        return {
            "clients": self.num_clients,
            "items": self.num_items,
            "interactions": k,
            "avg": k / self.num_clients,
            "sparsity": 1.0 - k / (self.num_clients * self.num_items),
        }


# -- parsing ---------------------------------------------------------------------


def _parse_movielens_dat(path: str) -> list[RawInteraction]:
    records = []
    with open(path, "r", encoding="latin-1") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise ParseError(f"expected user::item::rating::timestamp, got {line!r}", line_no)
            user, item, rating, ts = parts
            if not user or not item:
                raise ParseError("empty user or item id", line_no)
            try:
                records.append(RawInteraction(user, item, float(rating), int(ts)))
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from exc
    return records


def _parse_delimited(path: str, delimiter: str) -> list[RawInteraction]:
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        columns = [c.strip().lower() for c in header]
        if "user" not in columns or "item" not in columns:
            raise ParseError(f"header must name 'user' and 'item' columns, got {header}", 1)
        u_col, i_col = columns.index("user"), columns.index("item")
        r_col = columns.index("rating") if "rating" in columns else None
        t_col = columns.index("timestamp") if "timestamp" in columns else None
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(columns):
                raise ParseError(f"expected {len(columns)} fields, got {len(row)}", line_no)
            user, item = row[u_col].strip(), row[i_col].strip()
            if not user or not item:
                raise ParseError("empty user or item id", line_no)
            try:
                rating = float(row[r_col]) if r_col is not None and row[r_col].strip() else None
                ts = int(row[t_col]) if t_col is not None and row[t_col].strip() else None
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from exc
            records.append(RawInteraction(user, item, rating, ts))
    return records


def _dense_order(ids: set[str]) -> list[str]:
    """Stable external-id ordering: numeric when possible, lexicographic otherwise."""
    try:
        return sorted(ids, key=lambda s: (0, int(s), s))
    except ValueError:
        return sorted(ids)


def build_dataset(records: list[RawInteraction], min_interactions: int) -> InteractionDataset:
    """Binarize, deduplicate, filter low-activity users and remap to dense ids."""
    # Dedup (user, item); keep the latest timestamp for the pair.
    by_user: dict[str, dict[str, int | None]] = {}
    for rec in records:
        items = by_user.setdefault(rec.user_id, {})
        prev = items.get(rec.item_id, None)
        if rec.item_id not in items or (
            rec.timestamp is not None and (prev is None or rec.timestamp > prev)
        ):
            items[rec.item_id] = rec.timestamp

    kept = {u: items for u, items in by_user.items() if len(items) >= min_interactions}
    if not kept:
        raise ConfigurationError(
            f"no users with at least {min_interactions} interactions; dataset is empty after filtering"
        )

    user_ids = _dense_order(set(kept))
    item_ids = _dense_order({i for items in kept.values() for i in items})
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {i: k for k, i in enumerate(item_ids)}

    has_timestamps = any(ts is not None for items in kept.values() for ts in items.values())
    client_items: list[np.ndarray] = []
    timestamps: list[np.ndarray] | None = [] if has_timestamps else None
    for u in user_ids:
        pairs = sorted((item_index[i], ts) for i, ts in kept[u].items())
        client_items.append(np.array([p[0] for p in pairs], dtype=np.int64))
        if timestamps is not None:
            timestamps.append(np.array([p[1] if p[1] is not None else -1 for p in pairs], dtype=np.int64))

    return InteractionDataset(
        num_clients=len(user_ids),
        num_items=len(item_ids),
        client_items=client_items,
        timestamps=timestamps,
        test_items=None,
        user_ids=user_ids,
        item_ids=item_ids,
        user_index=user_index,
        item_index=item_index,
    )


def load_dataset(path: str, format: str, min_interactions: int = 10) -> InteractionDataset:
    """Parse an interaction log and build the filtered, remapped dataset.

    Supported formats: ``movielens-dat`` (``user::item::rating::timestamp``),
    ``tsv`` and ``csv`` (header ``user,item[,rating][,timestamp]``).
    """
    if format == "movielens-dat":
        records = _parse_movielens_dat(path)
    elif format == "tsv":
        records = _parse_delimited(path, "\t")
    elif format == "csv":
        records = _parse_delimited(path, ",")
    else:
        raise ConfigurationError(f"unknown dataset format {format!r}")
    return build_dataset(records, min_interactions)


# -- leave-one-out split ------------------------------------------------------------


def leave_one_out_split(
    ds: InteractionDataset, seed: int, holdout: str = "timestamp"
) -> InteractionDataset:
    """Hold out one positive per client.

    With the default 'timestamp' strategy the latest-timestamp item is held
    out (ties broken by larger dense id), falling back to a seeded-uniform
    choice when the source had no timestamps; 'random' forces the seeded
    choice even when timestamps exist.
    """
    if ds.is_split:
        raise DataError("dataset already split")
    if holdout not in ("timestamp", "random"):
        raise ConfigurationError(f"unknown holdout strategy {holdout!r}")
    train_items: list[np.ndarray] = []
    train_ts: list[np.ndarray] | None = [] if ds.timestamps is not None else None
    test_items: list[int] = []
    for client, items in enumerate(ds.client_items):
        if len(items) < 2:
            raise SplitError(
                f"client {client} ({ds.user_ids[client]!r}) has {len(items)} positive(s); need at least 2"
            )
        if ds.timestamps is not None and holdout == "timestamp":
            ts = ds.timestamps[client]
            pick = int(np.lexsort((items, ts))[-1])
        else:
            pick = int(seeding.rng(seed, seeding.SPLIT, client).integers(len(items)))
        test_items.append(int(items[pick]))
        keep = np.ones(len(items), dtype=bool)
        keep[pick] = False
        train_items.append(items[keep])
        if train_ts is not None:
            train_ts.append(ds.timestamps[client][keep])
    return replace(ds, client_items=train_items, timestamps=train_ts, test_items=test_items)


# -- sampling --------------------------------------------------------------------


class NegativeSampler:
    """Training-batch sampler pairing each positive with sampled negatives.

    Each client owns an independent RNG stream derived from
    (seed, client_id), so batch sequences are reproducible regardless of
    the order clients are visited in.
    """

    def __init__(self, dataset: InteractionDataset, seed: int, negatives_per_positive: int = 4):
        if not dataset.is_split:
            raise DataError("sampler requires a split dataset (test items assigned)")
        self.dataset = dataset
        self.seed = seed
        self.negatives_per_positive = negatives_per_positive
        self._rngs: dict[int, np.random.Generator] = {}
        self._universe: dict[int, np.ndarray] = {}

    def _client_rng(self, client: int) -> np.random.Generator:
        if client not in self._rngs:
            self._rngs[client] = seeding.rng(self.seed, seeding.TRAIN_BATCH, client)
        return self._rngs[client]

    def candidate_universe(self, client: int) -> np.ndarray:
        """Items the client never interacted with (train positives and test excluded)."""
        if client not in self._universe:
            blocked = np.concatenate(
                [self.dataset.client_items[client], [self.dataset.test_items[client]]]
            )
            self._universe[client] = np.setdiff1d(
                np.arange(self.dataset.num_items, dtype=np.int64), blocked
            )
        return self._universe[client]

    def sample_batch(self, client: int, batch_size: int = 2048) -> tuple[np.ndarray, np.ndarray]:
        """Return (item_ids, labels) interleaving each positive with its negatives."""
        positives = self.dataset.client_items[client]
        if len(positives) == 0:
            raise DataError(f"client {client} has no train positives")
        universe = self.candidate_universe(client)
        rng = self._client_rng(client)
        k = self.negatives_per_positive

        order = rng.permutation(len(positives))
        needed = len(positives) * k
        if len(universe) == 0:
            warnings.warn(
                f"client {client}: no non-interacted items to sample; batch has positives only",
                ReplacementSamplingWarning,
            )
            negatives = np.empty((len(positives), 0), dtype=np.int64)
        elif len(universe) < needed:
            warnings.warn(
                f"client {client}: universe of {len(universe)} smaller than {needed} "
                "requested negatives; sampling with replacement",
                ReplacementSamplingWarning,
            )
            negatives = rng.choice(universe, size=(len(positives), k), replace=True)
        else:
            negatives = rng.choice(universe, size=needed, replace=False).reshape(len(positives), k)

        per_pos = 1 + negatives.shape[1]
        items = np.empty(len(positives) * per_pos, dtype=np.int64)
        labels = np.zeros(len(positives) * per_pos, dtype=np.int64)
        items[::per_pos] = positives[order]
        labels[::per_pos] = 1
        for j in range(negatives.shape[1]):
            items[j + 1 :: per_pos] = negatives[order, j]
        return items[:batch_size], labels[:batch_size]


def sample_training_batch(
    sampler: NegativeSampler, client: int, batch_size: int = 2048
) -> tuple[np.ndarray, np.ndarray]:
    return sampler.sample_batch(client, batch_size)


def build_eval_candidates(
    ds: InteractionDataset, client: int, num_negatives: int, seed: int
) -> list[int]:
    """Fixed evaluation candidate list: the test item plus sampled negatives.

    Deterministic per (client, seed); negatives never collide with the
    client's train positives or its test item. `num_negatives=-1` selects
    full ranking: every non-interacted item becomes a candidate.
    """
    if not ds.is_split:
        raise DataError("evaluation candidates require a split dataset")
    test = ds.test_items[client]
    blocked = np.concatenate([ds.client_items[client], [test]])
    universe = np.setdiff1d(np.arange(ds.num_items, dtype=np.int64), blocked)
    if num_negatives == -1:
        return [int(test)] + [int(n) for n in universe]
    rng = seeding.rng(seed, seeding.EVAL_CANDIDATES, client)
    if len(universe) == 0:
        warnings.warn(
            f"client {client}: no non-interacted items; candidate list is the test item alone",
            ReplacementSamplingWarning,
        )
        return [int(test)]
    if len(universe) < num_negatives:
        warnings.warn(
            f"client {client}: only {len(universe)} candidate negatives for {num_negatives} "
            "requested; sampling with replacement",
            ReplacementSamplingWarning,
        )
        negatives = rng.choice(universe, size=num_negatives, replace=True)
    else:
        negatives = rng.choice(universe, size=num_negatives, replace=False)
    return [int(test)] + [int(n) for n in negatives]
