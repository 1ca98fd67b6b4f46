"""Parametric agent policies, including adversarial ones.

Policies are deliberately simple heuristics so runs measure institutional
effects, not agent intelligence.  Each policy is a pure function of
(spec, board view, round, rng stream); the harness owns all state and may
call policies for different agents in parallel against the same
round-start view.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import task as task_env
from .errors import InvalidScenario

BLIND_EXPLORER = "BlindExplorer"
BLACKBOARD_EXPLORER = "BlackboardExplorer"
REPRODUCER = "Reproducer"
FREE_RIDER = "FreeRider"
FABRICATOR = "Fabricator"
COLLUDER = "Colluder"
POLICIES = (BLIND_EXPLORER, BLACKBOARD_EXPLORER, REPRODUCER, FREE_RIDER,
            FABRICATOR, COLLUDER)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: int
    name: str
    policy: str
    evals_per_round: int = 1
    disclose: bool = True
    policy_seed: int = 0
    exploit_prob: float = 0.5  # BlackboardExplorer only
    inflate: float = 0.5  # Fabricator only
    partner: int | None = None  # Colluder only

    def validate(self) -> "AgentSpec":
        if self.policy not in POLICIES:
            raise InvalidScenario(f"unknown policy {self.policy!r}")
        if self.evals_per_round < 1:
            raise InvalidScenario("evals_per_round must be >= 1")
        if not 0.0 <= self.exploit_prob <= 1.0:
            raise InvalidScenario("exploit_prob must be in [0, 1]")
        if self.policy == FABRICATOR and self.inflate <= 0:
            raise InvalidScenario("inflate must be positive")
        if self.policy == COLLUDER and self.partner is None:
            raise InvalidScenario("colluders need a partner")
        return self


@dataclass(frozen=True)
class Evaluate:
    config: tuple[int, ...]
    disclose: bool


@dataclass(frozen=True)
class Reproduce:
    target: int
    claimed_score: float | None = None  # set only by score-copying colluders


@dataclass(frozen=True)
class Fabricate:
    config: tuple[int, ...] | None
    claimed_score: float
    # Server-mediated claims may pin disclosure explicitly and may arrive
    # hash-only; policy-driven fabrication leaves both unset.
    disclose: bool | None = None
    config_hash: str | None = None


@dataclass(frozen=True)
class Idle:
    pass


Action = Evaluate | Reproduce | Fabricate | Idle


def _random_config(dims, stream) -> tuple[int, ...]:
    return tuple(stream.randrange(n) for n in dims)


def _neighbor(config, dims, stream) -> tuple[int, ...]:
    i = stream.randrange(len(dims))
    step = stream.choice((-1, 1))
    values = list(config)
    values[i] = min(max(values[i] + step, 0), dims[i] - 1)
    return tuple(values)


def _frontier_all(view):
    n = len(view)
    return view.frontier(n) if n else []


def _best_disclosed_config(view):
    """Config of the highest-ranked disclosed New submission, if any."""
    for sid, _score, _confirmed in _frontier_all(view):
        rec = view.get(sid)
        if rec is not None and rec["disclosed"] and rec["config"] is not None:
            return tuple(rec["config"])
    return None


def _frontier_best_reported(view) -> float:
    top = view.frontier(1)
    return top[0][1] if top else 0.0


def _blind(spec, view, dims, stream):
    return [Evaluate(_random_config(dims, stream), spec.disclose)
            for _ in range(spec.evals_per_round)]


def _blackboard_explorer(spec, view, dims, stream):
    # Explore picks avoid configs already taken in this agent's own round.
    taken: set[tuple[int, ...]] = set()
    table = task_env.grid_table(tuple(dims))
    actions: list[Action] = []
    for _ in range(spec.evals_per_round):
        exploit_first = stream.uniform() < spec.exploit_prob

        def explore():
            pool = [c for c, h in table if not view.visited(h) and c not in taken]
            if not pool:
                return None
            return pool[stream.randrange(len(pool))]

        def exploit():
            base = _best_disclosed_config(view)
            if base is None:
                return None
            return _neighbor(base, dims, stream)

        if exploit_first:
            config = exploit()
            if config is None:
                config = explore()
        else:
            config = explore()
            if config is None:
                config = exploit()
        if config is None:
            actions.append(Idle())
        else:
            taken.add(config)
            actions.append(Evaluate(config, spec.disclose))
    return actions


def _reproducer(spec, view, stream):
    # Verification effort is supplied only when the institution pays for it.
    params = getattr(view, "params", None)
    if params is not None and params.repro_bounty <= 0:
        return [Idle() for _ in range(spec.evals_per_round)]
    eligible = []
    for sid, _score, confirmed in _frontier_all(view):
        if confirmed:
            continue
        rec = view.get(sid)
        if rec is None or not rec["disclosed"] or rec["config"] is None:
            continue
        if rec["agent"] == spec.agent_id:
            continue
        eligible.append(sid)
    actions: list[Action] = []
    for slot in range(spec.evals_per_round):
        actions.append(Reproduce(eligible[slot]) if slot < len(eligible) else Idle())
    return actions


def _free_rider(spec, view, dims, stream):
    base = _best_disclosed_config(view)
    if base is None:
        return [Idle() for _ in range(spec.evals_per_round)]
    return [Evaluate(_neighbor(base, dims, stream), spec.disclose)
            for _ in range(spec.evals_per_round)]


def _fabricator(spec, view, dims, stream):
    claimed = _frontier_best_reported(view) + spec.inflate
    return [Fabricate(_random_config(dims, stream), claimed)
            for _ in range(spec.evals_per_round)]


def _colluder(spec, view, dims, stream, round):
    if round % 2 == 0:
        return [Evaluate(_random_config(dims, stream), spec.disclose)]
    latest = None
    for sid, _score, confirmed in _frontier_all(view):
        rec = view.get(sid)
        if rec is None or rec["agent"] != spec.partner or confirmed:
            continue
        if rec["config"] is None:
            continue
        if latest is None or rec["id"] > latest["id"]:
            latest = rec
    if latest is None:
        return [Idle()]
    return [Reproduce(latest["id"], claimed_score=latest["reported_score"])]


def decide_actions(spec: AgentSpec, view, round: int, stream) -> list[Action]:
    """Choose this round's actions against a round-start board view.

    Deterministic in (spec, view contents, round, stream state); at most
    evals_per_round actions are returned and Idle entries are inert.
    """
    dims = tuple(view.dims)
    if spec.policy == BLIND_EXPLORER:
        return _blind(spec, view, dims, stream)
    if spec.policy == BLACKBOARD_EXPLORER:
        return _blackboard_explorer(spec, view, dims, stream)
    if spec.policy == REPRODUCER:
        return _reproducer(spec, view, stream)
    if spec.policy == FREE_RIDER:
        return _free_rider(spec, view, dims, stream)
    if spec.policy == FABRICATOR:
        return _fabricator(spec, view, dims, stream)
    if spec.policy == COLLUDER:
        return _colluder(spec, view, dims, stream, round)
    raise InvalidScenario(f"unknown policy {spec.policy!r}")
