"""Synthetic cross-domain interaction logs with planted shared structure.

Every user gets one latent interest vector that drives item choice in both
domains, so whatever a model learns about a user from one domain is, by
construction, informative about the other.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from horizonrec.config import (
    SYNTH_ITEMS_PER_DOMAIN,
    SYNTH_LATENT_DIM,
    SYNTH_SEQ_LEN_RANGE,
    SYNTH_TEMPERATURE,
    SYNTH_USERS,
)
from horizonrec.helpers.data_utils import Domain, InteractionRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticInteractions:
    source_records: List[InteractionRecord]
    target_records: List[InteractionRecord]
    user_latents: np.ndarray
    source_latents: np.ndarray
    target_latents: np.ndarray


def _choice_probabilities(user: np.ndarray, items: np.ndarray, temperature: float) -> np.ndarray:
    if math.isinf(temperature):
        return np.full(len(items), 1.0 / len(items))
    logits = items @ user / temperature
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def generate_synthetic(
    n_users: int = SYNTH_USERS,
    n_items_per_domain: int = SYNTH_ITEMS_PER_DOMAIN,
    seq_len_range: Tuple[int, int] = SYNTH_SEQ_LEN_RANGE,
    latent_dim: int = SYNTH_LATENT_DIM,
    noise_level: float = SYNTH_TEMPERATURE,
    seed: int = 0,
    min_per_domain: int = 3,
) -> SyntheticInteractions:
    """Sample interaction logs for two domains from shared user latents.

    Items are drawn one step at a time with probability proportional to
    ``exp(user . item / noise_level)``; ``noise_level = inf`` gives uniform
    sampling with no planted structure.  Each step goes to the target domain
    with a per-user Bernoulli rate; a user's draws are repeated until both
    domains get at least ``min_per_domain`` interactions.  Timestamps
    strictly increase.

    Args:
        n_users: Number of users.
        n_items_per_domain: Catalogue size of each domain.
        seq_len_range: Inclusive (min, max) total interactions per user.
        latent_dim: Width of the latent vectors.
        noise_level: Softmax temperature.
        seed: Seed of the only random generator used.
        min_per_domain: Minimum interactions per domain per user.

    Raises:
        ValueError: on non-positive counts or a length range too short to give
            both domains ``min_per_domain`` interactions.
    """
    lo, hi = seq_len_range
    if n_users < 1 or n_items_per_domain < 1 or latent_dim < 1:
        raise ValueError("n_users, n_items_per_domain and latent_dim must be positive")
    if not noise_level > 0:
        raise ValueError(f"noise_level must be positive, got {noise_level}")
    if min_per_domain < 1:
        raise ValueError(f"min_per_domain must be positive, got {min_per_domain}")
    if lo > hi or lo < 2 * min_per_domain:
        raise ValueError(
            f"seq_len_range {seq_len_range} must satisfy {2 * min_per_domain} <= min <= max"
        )

    rng = np.random.default_rng(seed)
    users = rng.standard_normal((n_users, latent_dim))
    source_items = rng.standard_normal((n_items_per_domain, latent_dim)) / math.sqrt(latent_dim)
    target_items = rng.standard_normal((n_items_per_domain, latent_dim)) / math.sqrt(latent_dim)

    source_records: List[InteractionRecord] = []
    target_records: List[InteractionRecord] = []
    for u in range(n_users):
        user_id = f"u{u}"
        length = int(rng.integers(lo, hi + 1))
        rate = rng.uniform(0.3, 0.7)
        domains = rng.random(length) < rate
        while not min_per_domain <= int(domains.sum()) <= length - min_per_domain:
            domains = rng.random(length) < rate
        gaps = rng.integers(1, 100, size=length)
        timestamps = np.cumsum(gaps)
        probs = (
            _choice_probabilities(users[u], source_items, noise_level),
            _choice_probabilities(users[u], target_items, noise_level),
        )
        for step in range(length):
            is_target = bool(domains[step])
            item = int(rng.choice(n_items_per_domain, p=probs[is_target]))
            if is_target:
                target_records.append(InteractionRecord(user_id, f"t{item}", int(timestamps[step]), Domain.TARGET))
            else:
                source_records.append(InteractionRecord(user_id, f"s{item}", int(timestamps[step]), Domain.SOURCE))

    logger.info(
        "Generated %d source and %d target interactions for %d users.",
        len(source_records),
        len(target_records),
        n_users,
    )
    return SyntheticInteractions(source_records, target_records, users, source_items, target_items)
