"""Synthetic workload: curve sampling, the score function, and scaling."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .core import HyperparamSample, ScalingKind

DEFAULT_EXP_SCALE = 0.1


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named stream under one experiment seed.

    Streams are keyed by name, so adding a new stream never shifts the draws
    of an existing one.
    """
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=seed & (2**64 - 1), spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))


def sample_hyperparams(
    rng: np.random.Generator, exp_scale: float = DEFAULT_EXP_SCALE
) -> HyperparamSample:
    # fixed draw order: b0, b1, b2
    b0 = float(rng.exponential(exp_scale))
    b1 = float(rng.uniform(0.0, 1.0))
    b2 = float(rng.uniform(0.0, 1.0))
    return HyperparamSample(b0, b1, b2)


def score(sample: HyperparamSample, k: float) -> float:
    """Synthetic model accuracy after ``k`` training steps.

    Non-decreasing in ``k`` and bounded to [-0.005, 1).
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    denom = 0.01 * sample.b0 * k + 0.1 * sample.b1 + 0.5
    return (2.0 - (1.0 / denom + 0.01 * sample.b2)) / 2.0


@dataclass(frozen=True)
class SyntheticModel:
    sample: HyperparamSample
    exp_scale: float = DEFAULT_EXP_SCALE

    def score(self, k: float) -> float:
        return score(self.sample, k)


def speedup(kind: ScalingKind, atoms: int) -> float:
    if atoms < 1:
        raise ValueError(f"atoms must be >= 1, got {atoms}")
    if kind is ScalingKind.LINEAR:
        return float(atoms)
    if kind is ScalingKind.SQRT:
        return math.sqrt(atoms)
    return 1.0


@dataclass(frozen=True)
class ScalingFunction:
    """Maps an atom count to a training rate in steps per time unit."""

    kind: ScalingKind
    base_rate: float

    @classmethod
    def from_step_time(cls, kind: ScalingKind, base_step_time: float) -> "ScalingFunction":
        return cls(ScalingKind(kind), 1.0 / base_step_time)

    @property
    def base_step_time(self) -> float:
        return 1.0 / self.base_rate

    def step_duration(self, atoms: int) -> float:
        return step_duration(self, atoms, self.base_step_time)

    def rate(self, atoms: int) -> float:
        return rate(self, atoms)

    def __call__(self, atoms: int) -> float:
        return self.rate(atoms)


def step_duration(scaling: ScalingFunction, atoms: int, base_step_time: float) -> float:
    return base_step_time / speedup(scaling.kind, atoms)


def rate(scaling: ScalingFunction, atoms: int) -> float:
    return 1.0 / step_duration(scaling, atoms, scaling.base_step_time)
