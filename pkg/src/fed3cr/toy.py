"""Synthetic planted-block dataset for offline desk-scale experiments.

Clients and items are partitioned into aligned blocks in a latent taste
space: every item vector is its block's center plus noise, every client is
its block's center plus idiosyncratic taste, and a client's positives are
drawn without replacement in proportion to softmax(sharpness * affinity).
Aggregating such clients mixes the block signals, so the shared table is
measurably degraded for every client, which is exactly the regime the
enhancement machinery is meant to exercise. The held-out item is a genuine
ranking target: block membership alone does not pin it down.
"""

from __future__ import annotations

import numpy as np

from . import seeding
from .datasets import InteractionDataset
from .errors import ConfigurationError


def _latent_vectors(
    rng: np.random.Generator, count: int, per_block: int, num_blocks: int, noise: float
) -> np.ndarray:
    """Block one-hot centers plus Gaussian noise, one row per entity."""
    blocks = np.repeat(np.arange(num_blocks), per_block)
    vecs = np.eye(num_blocks)[blocks] + rng.normal(0.0, noise, size=(count, num_blocks))
    return vecs


def generate_toy_dataset(
    num_clients: int = 24,
    num_items: int = 96,
    num_blocks: int = 4,
    min_positives: int = 6,
    max_positives: int = 10,
    own_block_fraction: float = 0.75,
    taste_noise: float = 0.4,
    sharpness: float = 2.5,
    seed: int = 0,
) -> InteractionDataset:
    """Build the planted-block dataset (unsplit, no timestamps).

    `own_block_fraction` only tunes how concentrated the affinity sampling
    is (it rescales `sharpness`); the draw itself is probabilistic, so every
    client mixes mostly-own-block items with cross-block noise.
    """
    if num_blocks < 1 or num_clients % num_blocks or num_items % num_blocks:
        raise ConfigurationError(
            f"blocks must evenly divide clients and items, got {num_clients}/{num_items}/{num_blocks}"
        )
    if not 2 <= min_positives <= max_positives <= num_items:
        raise ConfigurationError("positive counts out of range")
    if not 0.0 < own_block_fraction <= 1.0:
        raise ConfigurationError("own_block_fraction must lie in (0, 1]")

    shared = seeding.rng(seed, seeding.TOY_DATA, 1_000_000)
    item_vecs = _latent_vectors(shared, num_items, num_items // num_blocks, num_blocks, taste_noise)
    client_vecs = _latent_vectors(
        shared, num_clients, num_clients // num_blocks, num_blocks, taste_noise
    )
    temp = sharpness * own_block_fraction / 0.75

    client_items: list[np.ndarray] = []
    for client in range(num_clients):
        rng = seeding.rng(seed, seeding.TOY_DATA, client)
        affinity = item_vecs @ client_vecs[client]
        logits = temp * (affinity - affinity.max())
        probs = np.exp(logits)
        probs /= probs.sum()
        n_pos = int(rng.integers(min_positives, max_positives + 1))
        chosen = rng.choice(num_items, size=n_pos, replace=False, p=probs)
        client_items.append(np.sort(chosen).astype(np.int64))

    user_ids = [str(c) for c in range(num_clients)]
    item_ids = [str(i) for i in range(num_items)]
    return InteractionDataset(
        num_clients=num_clients,
        num_items=num_items,
        client_items=client_items,
        timestamps=None,
        test_items=None,
        user_ids=user_ids,
        item_ids=item_ids,
        user_index={u: k for k, u in enumerate(user_ids)},
        item_index={i: k for k, i in enumerate(item_ids)},
    )


def client_block(client: int, num_clients: int, num_blocks: int) -> int:
    """Block index a client belongs to under the generator's layout."""
    return client // (num_clients // num_blocks)


def write_toy_dataset_csv(path: str, **kwargs) -> InteractionDataset:
    """Materialize the toy dataset as a CSV usable by the standard loader.

    The loader rebuilds the item universe from observed interactions, so
    items that no client happened to draw will not survive a round trip.
    """
    ds = generate_toy_dataset(**kwargs)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user,item\n")
        for client, items in enumerate(ds.client_items):
            for item in items:
                fh.write(f"{ds.user_ids[client]},{ds.item_ids[int(item)]}\n")
    return ds
