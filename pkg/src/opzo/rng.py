"""Seeded random streams and the perturbation noise distributions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class NoiseDistribution(Enum):
    """Zero-mean, unit-variance perturbation distributions.

    ``beta`` is the variance of the squared components, Var[z_i^2]:
    2 for Gaussian, 0 for Rademacher.
    """

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"

    @property
    def beta(self) -> float:
        return 2.0 if self is NoiseDistribution.GAUSSIAN else 0.0


@dataclass
class RngState:
    """A single-owner random stream.

    Identical (seed, spawn path) gives a bit-identical sample sequence.
    Parallel consumers must each get their own ``fork()``; a stream is
    never shared.
    """

    seed_seq: np.random.SeedSequence
    gen: np.random.Generator = field(init=False)

    def __post_init__(self):
        self.gen = np.random.Generator(np.random.PCG64(self.seed_seq))

    @classmethod
    def from_seed(cls, seed: int) -> "RngState":
        return cls(np.random.SeedSequence(seed))

    def fork(self, name: str) -> "RngState":
        # Named forks are order-independent: the child stream depends only on
        # the parent seed and the name, not on how many forks came before.
        key = np.frombuffer(name.encode(), dtype=np.uint8)
        child = np.random.SeedSequence(
            entropy=self.seed_seq.entropy,
            spawn_key=tuple(self.seed_seq.spawn_key) + tuple(int(b) for b in key),
        )
        return RngState(child)


def sample_noise(rng: RngState, dist: NoiseDistribution, shape) -> np.ndarray:
    """Draw i.i.d. samples from ``dist`` with the given shape (float64)."""
    shape = tuple(shape)
    if len(shape) == 0:
        raise ValueError("shape must be nonempty")
    if dist is NoiseDistribution.GAUSSIAN:
        return rng.gen.standard_normal(shape)
    return rng.gen.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0


def empirical_beta(samples: np.ndarray) -> float:
    """Variance of the squared components, an empirical estimate of beta."""
    flat = np.asarray(samples, dtype=np.float64).ravel()
    if flat.size < 1000:
        raise ValueError(f"need at least 1000 samples, got {flat.size}")
    sq = flat * flat
    return float(np.var(sq))
