"""Scenario model and strict file loading.

A scenario file is a JSON document with sections task, agents,
institution, rounds, and master_seed.  Loading is strict: unknown keys
are rejected and every embedded invariant is checked, with diagnostics
that name the offending field by dotted path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .agents import (
    BLACKBOARD_EXPLORER,
    COLLUDER,
    FABRICATOR,
    POLICIES,
    AgentSpec,
)
from .errors import InvalidScenario
from .incentive import MECHANISMS, InstitutionParams, MechanismTheta


@dataclass(frozen=True)
class TaskInputs:
    task_seed: int
    dims: tuple[int, ...]
    bump_count: int
    noise_std: float

    def to_dict(self) -> dict:
        return {
            "task_seed": self.task_seed,
            "dims": list(self.dims),
            "bump_count": self.bump_count,
            "noise_std": self.noise_std,
        }


@dataclass(frozen=True)
class Scenario:
    task: TaskInputs
    agents: tuple[AgentSpec, ...]
    params: InstitutionParams
    rounds: int
    master_seed: int

    def to_dict(self) -> dict:
        inst = self.params.public_dict()
        inst["theta"] = list(self.params.theta.values) if self.params.theta else None
        return {
            "task": self.task.to_dict(),
            "agents": [_agent_to_dict(a) for a in self.agents],
            "institution": inst,
            "rounds": self.rounds,
            "master_seed": self.master_seed,
        }

    def validate(self) -> "Scenario":
        if self.rounds < 1:
            raise InvalidScenario("rounds: must be >= 1")
        if not self.agents:
            raise InvalidScenario("agents: at least one agent is required")
        seen_ids = set()
        by_id = {}
        for i, a in enumerate(self.agents):
            try:
                a.validate()
            except InvalidScenario as e:
                raise InvalidScenario(f"agents[{i}]: {e}") from None
            if a.agent_id in seen_ids:
                raise InvalidScenario(f"agents[{i}].id: duplicate agent id {a.agent_id}")
            seen_ids.add(a.agent_id)
            by_id[a.agent_id] = a
        for i, a in enumerate(self.agents):
            if a.policy == COLLUDER:
                partner = by_id.get(a.partner)
                if partner is None:
                    raise InvalidScenario(f"agents[{i}].partner: agent {a.partner} not in roster")
                if partner.policy != COLLUDER or partner.partner != a.agent_id:
                    raise InvalidScenario(
                        f"agents[{i}].partner: colluder pairs must reference each other")
        if not self.task.dims or any(n < 1 for n in self.task.dims):
            raise InvalidScenario("task.dims: must be non-empty positive integers")
        if self.task.bump_count < 1:
            raise InvalidScenario("task.bump_count: must be >= 1")
        if self.task.noise_std < 0:
            raise InvalidScenario("task.noise_std: must be >= 0")
        try:
            params = self.params.validate()
        except Exception as e:
            raise InvalidScenario(f"institution: {e}") from None
        return replace(self, params=params)


def _agent_to_dict(a: AgentSpec) -> dict:
    d = {
        "id": a.agent_id,
        "name": a.name,
        "policy": a.policy,
        "evals_per_round": a.evals_per_round,
        "disclose": a.disclose,
        "policy_seed": a.policy_seed,
    }
    if a.policy == BLACKBOARD_EXPLORER:
        d["exploit_prob"] = a.exploit_prob
    if a.policy == FABRICATOR:
        d["inflate"] = a.inflate
    if a.policy == COLLUDER:
        d["partner"] = a.partner
    return d


def _expect_keys(obj: dict, where: str, required: set[str], optional: set[str] = frozenset()):
    if not isinstance(obj, dict):
        raise InvalidScenario(f"{where}: expected an object")
    unknown = set(obj) - required - set(optional)
    if unknown:
        raise InvalidScenario(f"{where}.{sorted(unknown)[0]}: unknown key")
    missing = required - set(obj)
    if missing:
        raise InvalidScenario(f"{where}.{sorted(missing)[0]}: missing required key")


def _int(obj, where: str) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise InvalidScenario(f"{where}: expected an integer")
    return obj


def _real(obj, where: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise InvalidScenario(f"{where}: expected a number")
    return float(obj)


def _bool(obj, where: str) -> bool:
    if not isinstance(obj, bool):
        raise InvalidScenario(f"{where}: expected a boolean")
    return obj


def agent_from_dict(d: dict, where: str = "agent") -> AgentSpec:
    policy = d.get("policy")
    if policy not in POLICIES:
        raise InvalidScenario(f"{where}.policy: must be one of {', '.join(POLICIES)}")
    optional = {"name", "evals_per_round", "disclose", "policy_seed"}
    if policy == BLACKBOARD_EXPLORER:
        optional.add("exploit_prob")
    if policy == FABRICATOR:
        optional.add("inflate")
    required = {"id", "policy"}
    if policy == COLLUDER:
        required.add("partner")
    _expect_keys(d, where, required, optional)
    agent_id = _int(d["id"], f"{where}.id")
    spec = AgentSpec(
        agent_id=agent_id,
        name=str(d.get("name", f"agent-{agent_id}")),
        policy=policy,
        evals_per_round=_int(d.get("evals_per_round", 1), f"{where}.evals_per_round"),
        disclose=_bool(d.get("disclose", True), f"{where}.disclose"),
        policy_seed=_int(d.get("policy_seed", 0), f"{where}.policy_seed"),
        exploit_prob=_real(d.get("exploit_prob", 0.5), f"{where}.exploit_prob"),
        inflate=_real(d.get("inflate", 0.5), f"{where}.inflate"),
        partner=_int(d["partner"], f"{where}.partner") if policy == COLLUDER else None,
    )
    try:
        return spec.validate()
    except InvalidScenario as e:
        raise InvalidScenario(f"{where}: {e}") from None


def institution_from_dict(d: dict, where: str = "institution") -> InstitutionParams:
    _expect_keys(
        d, where, set(),
        {"perf_budget", "top_k", "repro_bounty", "confirm_bonus", "refute_penalty",
         "sharing_bonus", "epsilon", "mechanism", "theta"},
    )
    defaults = InstitutionParams()
    mechanism = d.get("mechanism", defaults.mechanism)
    if mechanism not in MECHANISMS:
        raise InvalidScenario(f"{where}.mechanism: must be one of {', '.join(MECHANISMS)}")
    theta = None
    if d.get("theta") is not None:
        raw = d["theta"]
        if not isinstance(raw, list):
            raise InvalidScenario(f"{where}.theta: expected an array of reals")
        try:
            theta = MechanismTheta.from_array(raw)
        except Exception as e:
            raise InvalidScenario(f"{where}.theta: {e}") from None
    params = InstitutionParams(
        perf_budget=_real(d.get("perf_budget", defaults.perf_budget), f"{where}.perf_budget"),
        top_k=_int(d.get("top_k", defaults.top_k), f"{where}.top_k"),
        repro_bounty=_real(d.get("repro_bounty", defaults.repro_bounty), f"{where}.repro_bounty"),
        confirm_bonus=_real(d.get("confirm_bonus", defaults.confirm_bonus), f"{where}.confirm_bonus"),
        refute_penalty=_real(d.get("refute_penalty", defaults.refute_penalty), f"{where}.refute_penalty"),
        sharing_bonus=_real(d.get("sharing_bonus", defaults.sharing_bonus), f"{where}.sharing_bonus"),
        epsilon=_real(d.get("epsilon", defaults.epsilon), f"{where}.epsilon"),
        mechanism=mechanism,
        theta=theta,
    )
    for name in ("perf_budget", "repro_bounty", "confirm_bonus", "refute_penalty",
                 "sharing_bonus", "epsilon"):
        if getattr(params, name) < 0:
            raise InvalidScenario(f"{where}.{name}: must be >= 0")
    if params.top_k < 1:
        raise InvalidScenario(f"{where}.top_k: must be >= 1")
    return params.validate()


def scenario_from_dict(doc: dict) -> Scenario:
    _expect_keys(doc, "scenario", {"task", "agents", "institution", "rounds", "master_seed"})
    t = doc["task"]
    _expect_keys(t, "task", {"task_seed", "dims", "bump_count"}, {"noise_std"})
    dims = t["dims"]
    if not isinstance(dims, list) or not dims:
        raise InvalidScenario("task.dims: expected a non-empty array of integers")
    task = TaskInputs(
        task_seed=_int(t["task_seed"], "task.task_seed"),
        dims=tuple(_int(n, "task.dims") for n in dims),
        bump_count=_int(t["bump_count"], "task.bump_count"),
        noise_std=_real(t.get("noise_std", 0.0), "task.noise_std"),
    )
    if not isinstance(doc["agents"], list):
        raise InvalidScenario("agents: expected an array")
    agent_specs = tuple(
        agent_from_dict(a, f"agents[{i}]") for i, a in enumerate(doc["agents"])
    )
    scenario = Scenario(
        task=task,
        agents=agent_specs,
        params=institution_from_dict(doc["institution"]),
        rounds=_int(doc["rounds"], "rounds"),
        master_seed=_int(doc["master_seed"], "master_seed"),
    )
    return scenario.validate()


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise InvalidScenario(f"cannot read scenario file: {e}") from None
    except json.JSONDecodeError as e:
        raise InvalidScenario(f"scenario file is not valid JSON: line {e.lineno}: {e.msg}") from None
    return scenario_from_dict(doc)


# Sweep support: dotted-free single-key overrides addressing either an
# institution field or an AgentSpec field (applied to every agent).

_INSTITUTION_REAL = {"perf_budget", "repro_bounty", "confirm_bonus", "refute_penalty",
                     "sharing_bonus", "epsilon"}
_AGENT_FIELDS = {"evals_per_round", "disclose", "exploit_prob", "inflate"}


def parse_vary_value(key: str, raw: str):
    if key in _INSTITUTION_REAL or key in ("exploit_prob", "inflate"):
        return float(raw)
    if key in ("top_k", "evals_per_round"):
        return int(raw)
    if key == "disclose":
        if raw not in ("true", "false"):
            raise InvalidScenario(f"vary {key}: expected true or false, got {raw!r}")
        return raw == "true"
    if key == "mechanism":
        if raw not in MECHANISMS:
            raise InvalidScenario(f"vary mechanism: must be one of {', '.join(MECHANISMS)}")
        return raw
    raise InvalidScenario(f"unknown vary key {key!r}")


def apply_vary(scenario: Scenario, key: str, value) -> Scenario:
    """Return a scenario with one varied field; agent keys hit every agent."""
    if key in _INSTITUTION_REAL or key in ("top_k", "mechanism"):
        varied = replace(scenario, params=replace(scenario.params, **{key: value}))
    elif key in _AGENT_FIELDS:
        varied = replace(
            scenario,
            agents=tuple(replace(a, **{key: value}) for a in scenario.agents),
        )
    else:
        raise InvalidScenario(f"unknown vary key {key!r}")
    return varied.validate()
