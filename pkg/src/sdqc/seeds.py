"""Seed discipline: one master seed, independent labelled streams per stage.

The simulation and the networked processes derive their generators the same
way, so a shared master seed gives them the same randomness stage by stage.
"""

import enum

import numpy as np


class Stage(enum.IntEnum):
    PAYLOAD = 0
    CHANNEL = 1
    JITTER = 2


def stage_rng(seed: int, stage: Stage, point: int = 0) -> np.random.Generator:
    """Generator for ``stage`` of sweep point ``point`` under master ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stage), int(point))))


def random_payload(seed: int, nbytes: int, point: int = 0) -> bytes:
    rng = stage_rng(seed, Stage.PAYLOAD, point)
    return rng.integers(0, 256, size=nbytes, dtype=np.uint8).tobytes()
