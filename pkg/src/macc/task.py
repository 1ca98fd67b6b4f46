"""Synthetic black-box exploration task over a discrete hyperparameter grid.

The landscape is the max of Gaussian bumps on the unit hypercube; grid
cells map to cube points at cell centers.  It is multimodal enough that
exploration matters, while small grids keep an exhaustive-scan oracle
cheap.  Evaluation adds seeded Gaussian noise so reproduction checks are
statistical rather than exact copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from . import canon, rng
from .errors import InvalidArgument


@dataclass(frozen=True)
class Bump:
    amplitude: float
    center: tuple[float, ...]
    width: float


@dataclass(frozen=True)
class TaskSpec:
    task_seed: int
    dims: tuple[int, ...]
    bumps: tuple[Bump, ...]
    noise_std: float

    def to_dict(self) -> dict:
        return {
            "task_seed": self.task_seed,
            "dims": list(self.dims),
            "bumps": [
                {"amplitude": b.amplitude, "center": list(b.center), "width": b.width}
                for b in self.bumps
            ],
            "noise_std": self.noise_std,
        }


@dataclass(frozen=True)
class EvaluationResult:
    true_score: float
    observed_score: float
    cost: int = 1


def generate_task(task_seed: int, dims, bump_count: int, noise_std: float) -> TaskSpec:
    """Build the task deterministically from its seed.

    Per bump the draw order is fixed: amplitude, then one center
    coordinate per dimension, then width.
    """
    dims = tuple(int(n) for n in dims)
    if not dims or any(n < 1 for n in dims):
        raise InvalidArgument("dims must be a non-empty list of positive integers")
    if bump_count < 1:
        raise InvalidArgument("bump_count must be >= 1")
    if noise_std < 0:
        raise InvalidArgument("noise_std must be >= 0")
    stream = rng.Stream(rng.derive_key(rng.DOMAIN_TASK, task_seed))
    bumps = []
    for _ in range(bump_count):
        amplitude = stream.uniform(0.5, 1.0)
        center = tuple(stream.uniform(0.0, 1.0) for _ in dims)
        width = stream.uniform(0.05, 0.3)
        bumps.append(Bump(amplitude, center, width))
    return TaskSpec(task_seed, dims, tuple(bumps), float(noise_std))


def validate_config(task: TaskSpec, config) -> tuple[int, ...]:
    config = tuple(int(v) for v in config)
    if len(config) != len(task.dims):
        raise InvalidArgument(f"config has {len(config)} values, task has {len(task.dims)} dims")
    for v, n in zip(config, task.dims):
        if v < 0 or v >= n:
            raise InvalidArgument(f"config value {v} outside [0, {n})")
    return config


def true_score(task: TaskSpec, config) -> float:
    """Noise-free landscape value at a grid cell; in (0, max amplitude]."""
    config = validate_config(task, config)
    x = [(v + 0.5) / n for v, n in zip(config, task.dims)]
    best = 0.0
    for b in task.bumps:
        d2 = 0.0
        for xi, ci in zip(x, b.center):
            d2 += (xi - ci) * (xi - ci)
        s = b.amplitude * math.exp(-d2 / (2.0 * b.width * b.width))
        if s > best:
            best = s
    return best


def evaluate(task: TaskSpec, config, eval_seed: int) -> EvaluationResult:
    """One noisy evaluation; the noise draw is a pure function of eval_seed."""
    t = true_score(task, config)
    noise = rng.Stream(rng.derive_key(rng.DOMAIN_NOISE, eval_seed)).normal()
    return EvaluationResult(true_score=t, observed_score=t + task.noise_std * noise, cost=1)


def grid_size(dims) -> int:
    total = 1
    for n in dims:
        total *= int(n)
    return total


@lru_cache(maxsize=64)
def grid_table(dims: tuple[int, ...]) -> tuple[tuple[tuple[int, ...], str], ...]:
    """All grid configs with their hashes, in row-major order.

    Cached per dims tuple; intended for desk-scale grids (<= 10^4 cells).
    """
    configs = [()]
    for n in dims:
        configs = [c + (v,) for c in configs for v in range(n)]
    return tuple((c, canon.config_hash(c)) for c in configs)
