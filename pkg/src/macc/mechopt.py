"""Mechanism training: welfare objective and a derivative-free ascent loop.

The gradient estimator draws antithetic Gaussian perturbation pairs and
fits the gradient to the central differences by least squares (the
normal-equations-whitened form of the plain antithetic average).  The fit
reproduces linear and quadratic gradients exactly whenever the draws span
the space, and reduces to the classic estimator in expectation.

Training evaluates every perturbation of one iteration on the same fixed
set of simulation seeds (common random numbers), so the whole loop is a
deterministic function of its seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .errors import InvalidConfig, InvalidScenario
from .incentive import NEURAL, MechanismTheta
from .scenario import Scenario
from .sim import Metrics, run


@dataclass(frozen=True)
class WelfareWeights:
    w_best: float = 1.0
    w_redund: float = 1.0
    w_repro: float = 1.0
    w_cost: float = 0.1


@dataclass(frozen=True)
class ESConfig:
    population: int = 64
    sigma_es: float = 0.05
    step_size: float = 0.1
    iterations: int = 30
    base_seed: int = 0

    def validate(self) -> "ESConfig":
        if self.population < 2 or self.population % 2 != 0:
            raise InvalidConfig("population must be a positive even integer")
        if self.sigma_es <= 0:
            raise InvalidConfig("sigma_es must be positive")
        if self.step_size <= 0:
            raise InvalidConfig("step_size must be positive")
        if self.iterations < 0:
            raise InvalidConfig("iterations must be >= 0")
        return self


def welfare(metrics: Metrics, weights: WelfareWeights = WelfareWeights()) -> float:
    """Scalar community objective for one completed run."""
    denom = metrics.n_agents * metrics.n_rounds
    normalized_cost = metrics.total_compute / denom if denom else 0.0
    return (
        weights.w_best * metrics.best_true_score
        - weights.w_redund * metrics.redundancy_rate
        + weights.w_repro * metrics.reproduction_coverage
        - weights.w_cost * normalized_cost
    )


def es_gradient(objective, theta: np.ndarray, es: ESConfig) -> np.ndarray:
    """Estimate the gradient of `objective` at theta from antithetic pairs.

    Draws population/2 perturbation directions from base_seed, probes
    objective(theta +/- sigma_es * eps), and least-squares fits g to the
    central difference quotients.  Deterministic given base_seed; with
    fewer pairs than dimensions the estimate is the minimum-norm solution
    within the sampled subspace.
    """
    es = es.validate()
    theta = np.asarray(theta, dtype=float)
    pairs = es.population // 2
    stream = rng.Stream(rng.derive_key(rng.DOMAIN_ES, es.base_seed))
    eps = np.array([[stream.normal() for _ in range(theta.size)] for _ in range(pairs)])
    diffs = np.empty(pairs)
    for j in range(pairs):
        up = objective(theta + es.sigma_es * eps[j])
        down = objective(theta - es.sigma_es * eps[j])
        diffs[j] = (up - down) / (2.0 * es.sigma_es)
    if not np.any(diffs):
        return np.zeros_like(theta)
    grad, *_ = np.linalg.lstsq(eps, diffs, rcond=None)
    return grad


@dataclass(frozen=True)
class TrainResult:
    theta: MechanismTheta
    # One row per evaluation point: (iteration, mean welfare, gradient norm
    # of the step taken to reach it; 0.0 for the initial row).
    curve: tuple[tuple[int, float, float], ...]
    sim_seeds: tuple[int, ...]

    @property
    def initial_welfare(self) -> float:
        return self.curve[0][1]

    @property
    def final_welfare(self) -> float:
        return self.curve[-1][1]


def training_seeds(scenario: Scenario, count: int = 8) -> tuple[int, ...]:
    """Fixed simulation seed set derived from the scenario master seed."""
    return tuple(
        rng.derive_key(rng.DOMAIN_SIM_SEED, scenario.master_seed, k) for k in range(count)
    )


def mean_welfare(scenario: Scenario, theta: np.ndarray, seeds,
                 weights: WelfareWeights) -> float:
    total = 0.0
    mech = MechanismTheta.from_array(theta)
    for seed in seeds:
        varied = replace(
            scenario,
            master_seed=seed,
            params=replace(scenario.params, theta=mech),
        )
        _, metrics = run(varied)
        total += welfare(metrics, weights)
    return total / len(seeds)


def train_mechanism(scenario: Scenario, weights: WelfareWeights = WelfareWeights(),
                    es: ESConfig = ESConfig(), seed_count: int = 8) -> TrainResult:
    """Ascend mean welfare over a fixed seed set; returns theta and the curve.

    The starting point is the all-zeros theta (the uniform allocator), so
    the first curve row doubles as the uniform-mechanism baseline.
    """
    scenario = scenario.validate()
    if scenario.params.mechanism != NEURAL:
        raise InvalidScenario("mechanism training requires a neural-mechanism scenario")
    es = es.validate()
    seeds = training_seeds(scenario, seed_count)

    def objective(theta_vec: np.ndarray) -> float:
        return mean_welfare(scenario, theta_vec, seeds, weights)

    theta = MechanismTheta.zeros().as_array()
    curve = [(0, objective(theta), 0.0)]
    for i in range(es.iterations):
        step_es = replace(es, base_seed=rng.derive_key(rng.DOMAIN_ES, es.base_seed, i))
        grad = es_gradient(objective, theta, step_es)
        theta = theta + es.step_size * grad
        curve.append((i + 1, objective(theta), float(np.linalg.norm(grad))))
    return TrainResult(
        theta=MechanismTheta.from_array(theta),
        curve=tuple(curve),
        sim_seeds=seeds,
    )


def write_curve_csv(path: str, result: TrainResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("iteration,mean_welfare,grad_norm\n")
        for it, w, g in result.curve:
            f.write(f"{it},{w!r},{g!r}\n")


def write_theta_json(path: str, theta: MechanismTheta) -> None:
    from . import canon

    with open(path, "w", encoding="utf-8") as f:
        f.write(canon.dumps(list(theta.values)) + "\n")
