"""Round-based simulation harness and community-level metrics.

Rounds are synchronous: every agent decides against the same round-start
board view, all actions are then committed in fixed (agent id, action
index) order, reproductions are judged, and the round is allocated.  The
commit path lives in RoundEngine so the network server and the in-process
harness produce identical ledgers from identical action streams.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from . import canon, rng
from .agents import AgentSpec, Evaluate, Fabricate, Idle, Reproduce, decide_actions
from .board import (
    KIND_NEW,
    KIND_REPRODUCTION,
    Blackboard,
    ReproductionVerdict,
    Submission,
    submission_from_dict,
    verdict_from_dict,
)
from .errors import InvalidArgument
from .incentive import (
    InstitutionParams,
    RewardEntry,
    RoundContext,
    allocate_round,
    reward_from_dict,
)
from .scenario import Scenario, scenario_from_dict
from .task import evaluate, generate_task

METRICS_COLUMNS = (
    "scenario", "seed", "vary_key", "vary_value", "best_true_score",
    "redundancy_rate", "reproduction_coverage", "total_compute",
    "reward_gini", "total_outlay",
)


@dataclass(frozen=True)
class Metrics:
    best_true_score_by_round: tuple[float, ...]
    redundancy_rate: float
    reproduction_coverage: float
    total_compute: int
    reward_gini: float
    total_outlay: float
    n_agents: int
    n_rounds: int

    @property
    def best_true_score(self) -> float:
        return self.best_true_score_by_round[-1] if self.best_true_score_by_round else 0.0


@dataclass
class Trajectory:
    """Everything one run produced, in replayable order."""

    scenario: Scenario
    submissions: list[Submission]
    verdicts: list[ReproductionVerdict]
    rewards: list[RewardEntry]
    true_scores: dict[int, float]  # submission id -> true score, evaluated ones only

    def log_lines(self):
        yield canon.dumps({"record": "meta", "format": 1, "scenario": self.scenario.to_dict()})
        by_round_subs: dict[int, list[Submission]] = {}
        for s in self.submissions:
            by_round_subs.setdefault(s.round, []).append(s)
        by_round_verds: dict[int, list[ReproductionVerdict]] = {}
        for v in self.verdicts:
            by_round_verds.setdefault(v.round, []).append(v)
        for t in sorted(set(by_round_subs) | set(by_round_verds)):
            for s in by_round_subs.get(t, []):
                yield canon.dumps(s.to_dict())
            for v in by_round_verds.get(t, []):
                yield canon.dumps(v.to_dict())
        for sid in sorted(self.true_scores):
            yield canon.dumps({"record": "truth", "submission": sid,
                               "true_score": self.true_scores[sid]})
        for r in self.rewards:
            yield canon.dumps(r.to_dict())

    def write_log(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for line in self.log_lines():
                f.write(line + "\n")

    @classmethod
    def from_log(cls, path: str) -> "Trajectory":
        scenario = None
        subs, verds, rewards = [], [], []
        truths: dict[int, float] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                d = canon.loads(line)
                kind = d.get("record")
                if kind == "meta":
                    scenario = scenario_from_dict(d["scenario"])
                elif kind == "submission":
                    subs.append(submission_from_dict(d))
                elif kind == "verdict":
                    verds.append(verdict_from_dict(d))
                elif kind == "truth":
                    truths[d["submission"]] = d["true_score"]
                elif kind == "reward":
                    rewards.append(reward_from_dict(d))
                else:
                    raise InvalidArgument(f"unknown log record {kind!r}")
        if scenario is None:
            raise InvalidArgument("trajectory log has no meta record")
        return cls(scenario, subs, verds, rewards, truths)


def agent_stream_base(master_seed: int, spec: AgentSpec) -> int:
    """Per-agent stream root; remote agents receive this instead of the seeds."""
    return rng.derive_key(rng.DOMAIN_AGENT, master_seed, spec.policy_seed, spec.agent_id)


def agent_round_stream(base: int, round: int) -> rng.Stream:
    return rng.Stream(rng.derive_key(base, round))


def eval_seed_for(master_seed: int, sequence: int) -> int:
    return rng.derive_key(rng.DOMAIN_EVAL, master_seed, sequence)


class RoundEngine:
    """Executes committed action batches against one board.

    Batches are applied in ascending agent id, then action index; sequence
    ids, evaluation seeds, verdicts, and reward entries follow from that
    order alone, so transports cannot perturb the ledger.
    """

    def __init__(self, scenario: Scenario, board: Blackboard | None = None):
        self.scenario = scenario.validate()
        self.params = self.scenario.params
        self.task = generate_task(
            scenario.task.task_seed, scenario.task.dims,
            scenario.task.bump_count, scenario.task.noise_std,
        )
        self.board = board if board is not None else Blackboard()
        self.rewards: list[RewardEntry] = []
        self.true_scores: dict[int, float] = {}
        self._seen_hashes: set[str] = set()

    def view(self):
        return self.board.view(self.params, self.scenario.rounds, self.task.dims)

    def commit(self, round: int, batches: list[tuple[int, list]]
               ) -> tuple[list[RewardEntry], dict[tuple[int, int], Submission]]:
        """Apply one round's batches in (agent id, action index) order.

        Returns the round's reward entries plus a map from (agent id,
        action index) to the submission each action produced (inert
        actions are absent).
        """
        prior = frozenset(self._seen_hashes)
        new_repro_ids: list[int] = []
        results: dict[tuple[int, int], Submission] = {}
        for agent_id, actions in sorted(batches, key=lambda b: b[0]):
            for idx, action in enumerate(actions):
                sub = self._execute(agent_id, round, action)
                if sub is not None:
                    results[(agent_id, idx)] = sub
                    self._seen_hashes.add(sub.config_hash)
                    if sub.kind == KIND_REPRODUCTION:
                        new_repro_ids.append(sub.id)
        for rid in new_repro_ids:
            self.board.match_reproduction(rid, self.params.epsilon)
        subs, verds = self.board.snapshot_round(round)
        ctx = RoundContext(
            round=round,
            total_rounds=self.scenario.rounds,
            prior_hashes=prior,
            confirmed_ids=frozenset(self.board.confirmed_ids()),
        )
        entries = allocate_round(
            subs, verds, self.params, ctx,
            submission_agent=lambda sid: self.board.get(sid).agent,
        )
        self.rewards.extend(entries)
        self.board.round_boundary()
        return entries, results

    def _execute(self, agent_id: int, round: int, action) -> Submission | None:
        if isinstance(action, Idle):
            return None
        if isinstance(action, Evaluate):
            seq = len(self.board) + 1
            result = evaluate(self.task, action.config, eval_seed_for(self.scenario.master_seed, seq))
            sub = self.board.append(
                agent=agent_id, round=round, kind=KIND_NEW,
                reported_score=result.observed_score, disclosed=action.disclose,
                config=action.config,
            )
            self.true_scores[sub.id] = result.true_score
            return sub
        if isinstance(action, Fabricate):
            disclose = action.disclose
            if disclose is None:
                spec = self._spec(agent_id)
                disclose = spec.disclose if spec is not None else True
            return self.board.append(
                agent=agent_id, round=round, kind=KIND_NEW,
                reported_score=action.claimed_score, disclosed=disclose,
                config=action.config, config_hash=action.config_hash,
            )
        if isinstance(action, Reproduce):
            try:
                target = self.board.get(action.target)
            except Exception:
                return None
            if target.kind != KIND_NEW or target.config is None or target.agent == agent_id:
                return None  # degenerate pick; treat as idle
            if action.claimed_score is None:
                seq = len(self.board) + 1
                result = evaluate(self.task, target.config,
                                  eval_seed_for(self.scenario.master_seed, seq))
                sub = self.board.append(
                    agent=agent_id, round=round, kind=KIND_REPRODUCTION,
                    reported_score=result.observed_score, disclosed=True,
                    config=target.config, target=target.id,
                )
                self.true_scores[sub.id] = result.true_score
                return sub
            # Score-copying reproduction: nothing is evaluated, but the
            # execution still occupies one compute unit like any Reproduce.
            return self.board.append(
                agent=agent_id, round=round, kind=KIND_REPRODUCTION,
                reported_score=action.claimed_score, disclosed=True,
                config=target.config, target=target.id,
            )
        raise InvalidArgument(f"unknown action {action!r}")

    def _spec(self, agent_id: int) -> AgentSpec | None:
        for a in self.scenario.agents:
            if a.agent_id == agent_id:
                return a
        return None

    def trajectory(self) -> Trajectory:
        return Trajectory(
            scenario=self.scenario,
            submissions=self.board.submissions(),
            verdicts=self.board.verdicts(),
            rewards=list(self.rewards),
            true_scores=dict(self.true_scores),
        )


def run(scenario: Scenario, log_path: str | None = None) -> tuple[Trajectory, Metrics]:
    """Run one seeded simulation; deterministic in the scenario alone."""
    scenario = scenario.validate()
    board = Blackboard(log_path=None)
    engine = RoundEngine(scenario, board)
    roster = sorted(scenario.agents, key=lambda a: a.agent_id)
    bases = {a.agent_id: agent_stream_base(scenario.master_seed, a) for a in roster}
    for t in range(scenario.rounds):
        view = engine.view()
        batches = []
        for spec in roster:
            stream = agent_round_stream(bases[spec.agent_id], t)
            batches.append((spec.agent_id, decide_actions(spec, view, t, stream)))
        engine.commit(t, batches)
    trajectory = engine.trajectory()
    if log_path:
        trajectory.write_log(log_path)
    return trajectory, compute_metrics(trajectory)


def _is_compute(sub: Submission, true_scores: dict[int, float]) -> bool:
    # Reproductions always execute; News execute only when something was
    # actually evaluated (fabricated claims carry no truth record).
    return sub.kind == KIND_REPRODUCTION or sub.id in true_scores


def compute_metrics(trajectory: Trajectory, params: InstitutionParams | None = None) -> Metrics:
    scenario = trajectory.scenario
    params = (params or scenario.params).validate()

    evaluations = [s for s in trajectory.submissions
                   if _is_compute(s, trajectory.true_scores)]
    seen: set[str] = set()
    duplicates = 0
    for s in evaluations:
        if s.config_hash in seen:
            duplicates += 1
        seen.add(s.config_hash)
    redundancy = duplicates / len(evaluations) if evaluations else 0.0

    best_by_round = []
    best = 0.0
    truths_by_round: dict[int, list[float]] = {}
    for s in trajectory.submissions:
        if s.id in trajectory.true_scores:
            truths_by_round.setdefault(s.round, []).append(trajectory.true_scores[s.id])
    for t in range(scenario.rounds):
        for v in truths_by_round.get(t, []):
            if v > best:
                best = v
        best_by_round.append(best)

    confirmed = {v.original for v in trajectory.verdicts if v.verdict == "confirmed"}
    news = sorted((s for s in trajectory.submissions if s.kind == KIND_NEW),
                  key=lambda s: (-s.reported_score, s.id))
    top = news[: params.top_k]
    coverage = (sum(1 for s in top if s.id in confirmed) / len(top)) if top else 0.0

    totals = {a.agent_id: 0.0 for a in scenario.agents}
    for r in trajectory.rewards:
        totals[r.agent] = totals.get(r.agent, 0.0) + r.amount

    return Metrics(
        best_true_score_by_round=tuple(best_by_round),
        redundancy_rate=redundancy,
        reproduction_coverage=coverage,
        total_compute=len(evaluations),
        reward_gini=gini(list(totals.values())),
        total_outlay=sum(r.amount for r in trajectory.rewards),
        n_agents=len(scenario.agents),
        n_rounds=scenario.rounds,
    )


def gini(values: list[float]) -> float:
    """Gini coefficient over nonnegative totals (negatives clamp to zero)."""
    xs = sorted(max(v, 0.0) for v in values)
    n = len(xs)
    total = sum(xs)
    if n == 0 or total == 0.0:
        return 0.0
    weighted = sum((i + 1) * x for i, x in enumerate(xs))
    g = (2.0 * weighted) / (n * total) - (n + 1) / n
    return min(max(g, 0.0), 1.0)


def metrics_csv_header() -> str:
    return ",".join(METRICS_COLUMNS)


def metrics_csv_row(scenario_label: str, seed: int, metrics: Metrics,
                    vary_key: str = "", vary_value: str = "") -> str:
    fields = [
        scenario_label, str(seed), vary_key, str(vary_value),
        repr(metrics.best_true_score), repr(metrics.redundancy_rate),
        repr(metrics.reproduction_coverage), str(metrics.total_compute),
        repr(metrics.reward_gini), repr(metrics.total_outlay),
    ]
    return ",".join(fields)


def write_metrics_csv(path_or_buf, rows: list[str]) -> None:
    if isinstance(path_or_buf, (str, bytes)):
        with open(path_or_buf, "w", encoding="utf-8", newline="\n") as f:
            _write_rows(f, rows)
    else:
        _write_rows(path_or_buf, rows)


def _write_rows(f: io.TextIOBase, rows: list[str]) -> None:
    f.write(metrics_csv_header() + "\n")
    for row in rows:
        f.write(row + "\n")


def replay_rewards(trajectory: Trajectory, params: InstitutionParams | None = None) -> list[RewardEntry]:
    """Recompute every reward entry from the stored records alone."""
    scenario = trajectory.scenario
    params = (params or scenario.params).validate()
    by_id = {s.id: s for s in trajectory.submissions}
    entries: list[RewardEntry] = []
    seen: set[str] = set()
    confirmed: set[int] = set()
    verd_by_round: dict[int, list[ReproductionVerdict]] = {}
    for v in trajectory.verdicts:
        verd_by_round.setdefault(v.round, []).append(v)
    subs_by_round: dict[int, list[Submission]] = {}
    for s in trajectory.submissions:
        subs_by_round.setdefault(s.round, []).append(s)
    for t in range(scenario.rounds):
        subs = subs_by_round.get(t, [])
        verds = verd_by_round.get(t, [])
        for v in verds:
            if v.verdict == "confirmed":
                confirmed.add(v.original)
        ctx = RoundContext(
            round=t, total_rounds=scenario.rounds,
            prior_hashes=frozenset(seen), confirmed_ids=frozenset(confirmed),
        )
        entries.extend(allocate_round(subs, verds, params, ctx,
                                      submission_agent=lambda sid: by_id[sid].agent))
        for s in subs:
            seen.add(s.config_hash)
    return entries
