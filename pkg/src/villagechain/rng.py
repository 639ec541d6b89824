"""Named random substreams derived from a single scenario seed.

Each consumer (workload, mining, churn, sync) pulls its own stream keyed by
name, so changing how one consumer draws never perturbs the others, and runs
that share a seed stay coupled across sweep points.
"""
from __future__ import annotations

import hashlib
import random


def substream(seed: int, *path) -> random.Random:
    """Independent random.Random derived from (seed, path) via a 64-bit digest."""
    key = f"{seed}:" + "/".join(str(p) for p in path)
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))
