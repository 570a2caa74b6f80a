"""Stable per-stage random streams derived from one master seed."""

import hashlib

import numpy as np


def stage_key(name: str) -> int:
    digest = hashlib.blake2b(name.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, stage: str, index: int = 0) -> np.random.SeedSequence:
    """SeedSequence keyed by (seed, stage name, batch index).

    Independent of process, platform and PYTHONHASHSEED.
    """
    return np.random.SeedSequence([int(seed) & (2**64 - 1), stage_key(stage), int(index)])


def stage_rng(seed: int, stage: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, stage, index)))
