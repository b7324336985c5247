import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adaptreg.data import InteractionLog, chronological_split
from adaptreg.mf import Embeddings, TripletBatch


def toy_log(events, num_users=None, num_items=None):
    """Build an InteractionLog from (user, item, timestamp) tuples."""
    users = np.asarray([e[0] for e in events], dtype=np.int64)
    items = np.asarray([e[1] for e in events], dtype=np.int64)
    times = np.asarray([e[2] for e in events], dtype=np.int64)
    return InteractionLog(
        users=users, items=items, times=times,
        num_users=num_users if num_users is not None else int(users.max()) + 1,
        num_items=num_items if num_items is not None else int(items.max()) + 1,
        user_tokens=[], item_tokens=[],
    )


def random_instance(seed, num_users=5, num_items=8, dim=4, scale=0.3):
    rng = np.random.default_rng(seed)
    emb = Embeddings.init(num_users, num_items, dim, scale, rng)
    return emb, rng


def random_batch(rng, num_users, num_items, size):
    return TripletBatch(
        users=rng.integers(0, num_users, size),
        pos=rng.integers(0, num_items, size),
        neg=rng.integers(0, num_items, size),
    )


@pytest.fixture(scope="session")
def small_split():
    from _synth import make_split
    return make_split(num_users=40, num_items=60, seed=7, min_events=6, max_events=30)
