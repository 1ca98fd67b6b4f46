"""Reward allocation over one round of board records.

Three performance mechanisms share the budget-conservation contract:
winner-take-all, rank-weighted top-k (linear weights k-r+1), and a small
neural allocator (5 features -> 16 tanh units -> softmax shares).
Reproduction bounties, confirmation bonuses, sharing bonuses, and refute
penalties are paid outside the performance budget; the net total outlay
is reported as a run metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .board import CONFIRMED, KIND_NEW, ReproductionVerdict, Submission
from .errors import InvalidArgument, InvalidParams

WINNER_TAKE_ALL = "winner_take_all"
RANK_TOP_K = "rank_top_k"
NEURAL = "neural"
MECHANISMS = (WINNER_TAKE_ALL, RANK_TOP_K, NEURAL)

PERFORMANCE = "performance"
SHARING_BONUS = "sharing_bonus"
REPRO_BOUNTY = "repro_bounty"
CONFIRM_BONUS = "confirm_bonus"
REFUTE_PENALTY = "refute_penalty"

THETA_LEN = 5 * 16 + 16 + 16 + 1  # one hidden layer: 5 -> 16 -> 1


@dataclass(frozen=True)
class MechanismTheta:
    """Flat weights of the neural allocator: W1 (16x5 row-major), b1, w2, b2."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != THETA_LEN:
            raise InvalidParams(f"theta must have {THETA_LEN} entries, got {len(self.values)}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParams("theta entries must be finite")

    @classmethod
    def zeros(cls) -> "MechanismTheta":
        return cls(values=(0.0,) * THETA_LEN)

    @classmethod
    def from_array(cls, arr) -> "MechanismTheta":
        return cls(values=tuple(float(v) for v in arr))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class InstitutionParams:
    """Every institutional knob of one design, the object sweeps vary."""

    perf_budget: float = 10.0
    top_k: int = 3
    repro_bounty: float = 1.0
    confirm_bonus: float = 0.5
    refute_penalty: float = 1.0
    sharing_bonus: float = 0.0
    epsilon: float = 0.05
    mechanism: str = WINNER_TAKE_ALL
    theta: MechanismTheta | None = None

    def validate(self) -> "InstitutionParams":
        for name in ("perf_budget", "repro_bounty", "confirm_bonus", "refute_penalty",
                     "sharing_bonus", "epsilon"):
            if getattr(self, name) < 0:
                raise InvalidParams(f"{name} must be >= 0")
        if self.top_k < 1:
            raise InvalidParams("top_k must be >= 1")
        if self.mechanism not in MECHANISMS:
            raise InvalidParams(f"mechanism must be one of {MECHANISMS}")
        if self.mechanism == NEURAL and self.theta is None:
            return replace(self, theta=MechanismTheta.zeros())
        return self

    def public_dict(self) -> dict:
        """Wire-safe form: everything an agent may see (theta elided)."""
        return {
            "perf_budget": self.perf_budget,
            "top_k": self.top_k,
            "repro_bounty": self.repro_bounty,
            "confirm_bonus": self.confirm_bonus,
            "refute_penalty": self.refute_penalty,
            "sharing_bonus": self.sharing_bonus,
            "epsilon": self.epsilon,
            "mechanism": self.mechanism,
        }


@dataclass(frozen=True)
class RewardEntry:
    submission: int
    agent: int
    amount: float
    reason: str
    round: int

    def to_dict(self) -> dict:
        return {
            "record": "reward",
            "submission": self.submission,
            "agent": self.agent,
            "amount": self.amount,
            "reason": self.reason,
            "round": self.round,
        }


def reward_from_dict(d: dict) -> RewardEntry:
    return RewardEntry(
        submission=d["submission"], agent=d["agent"], amount=d["amount"],
        reason=d["reason"], round=d["round"],
    )


@dataclass(frozen=True)
class RoundContext:
    """Board-derived inputs the neural features need."""

    round: int
    total_rounds: int
    prior_hashes: frozenset = field(default_factory=frozenset)
    confirmed_ids: frozenset = field(default_factory=frozenset)


def _round_news(records: list[Submission]) -> list[Submission]:
    return sorted((s for s in records if s.kind == KIND_NEW), key=lambda s: s.id)


def neural_features(submission: Submission, ctx: RoundContext,
                    round_news: list[Submission]) -> np.ndarray:
    """Feature vector [rank, novelty, disclosed, confirmed_ever, round_fraction].

    Rank is normalized to [0, 1] with 0 for the round's best reported
    score; features are institution-level only, never agent identity.
    """
    order = sorted(round_news, key=lambda s: (-s.reported_score, s.id))
    idx = next(i for i, s in enumerate(order) if s.id == submission.id)
    n = len(order)
    rank = idx / (n - 1) if n > 1 else 0.0
    novelty = 0.0 if submission.config_hash in ctx.prior_hashes else 1.0
    disclosed = 1.0 if submission.disclosed else 0.0
    confirmed = 1.0 if submission.id in ctx.confirmed_ids else 0.0
    fraction = ctx.round / ctx.total_rounds if ctx.total_rounds > 0 else 0.0
    return np.array([rank, novelty, disclosed, confirmed, fraction], dtype=float)


def mlp_score(theta: MechanismTheta, features: np.ndarray) -> float:
    v = theta.as_array()
    w1 = v[:80].reshape(16, 5)
    b1 = v[80:96]
    w2 = v[96:112]
    b2 = v[112]
    return float(w2 @ np.tanh(w1 @ features + b1) + b2)


def neural_allocate(round_records: list[Submission], theta: MechanismTheta,
                    perf_budget: float, ctx: RoundContext) -> list[RewardEntry]:
    """Softmax shares of the budget over the round's New submissions."""
    news = _round_news(round_records)
    if not news:
        raise InvalidArgument("neural allocation needs at least one New submission")
    scores = np.array([mlp_score(theta, neural_features(s, ctx, news)) for s in news])
    scores -= scores.max()
    weights = np.exp(scores)
    shares = weights / weights.sum()
    rnd = news[0].round
    return [
        RewardEntry(s.id, s.agent, float(perf_budget * p), PERFORMANCE, rnd)
        for s, p in zip(news, shares)
    ]


def _performance_entries(news: list[Submission], params: InstitutionParams,
                         ctx: RoundContext) -> list[RewardEntry]:
    rnd = news[0].round
    if params.mechanism == WINNER_TAKE_ALL:
        winner = min(news, key=lambda s: (-s.reported_score, s.id))
        return [
            RewardEntry(s.id, s.agent, params.perf_budget if s.id == winner.id else 0.0,
                        PERFORMANCE, rnd)
            for s in news
        ]
    if params.mechanism == RANK_TOP_K:
        order = sorted(news, key=lambda s: (-s.reported_score, s.id))
        k = params.top_k
        weights = {s.id: max(k - r, 0) for r, s in enumerate(order)}
        total = sum(weights.values())
        return [
            RewardEntry(s.id, s.agent,
                        params.perf_budget * weights[s.id] / total if total else 0.0,
                        PERFORMANCE, rnd)
            for s in news
        ]
    return neural_allocate(news, params.theta or MechanismTheta.zeros(),
                           params.perf_budget, ctx)


def allocate_round(round_records: list[Submission], verdicts: list[ReproductionVerdict],
                   params: InstitutionParams, ctx: RoundContext | None = None,
                   submission_agent=None) -> list[RewardEntry]:
    """All reward entries for one round, in a fixed deterministic order.

    Order: performance (by submission id), sharing bonuses (by id), then
    verdict-driven entries in verdict order (bounty before bonus/penalty).
    `submission_agent` resolves the submitter of originals from earlier
    rounds; it defaults to a lookup over `round_records` only.
    """
    params = params.validate()
    if ctx is None:
        rnd = round_records[0].round if round_records else 0
        ctx = RoundContext(round=rnd, total_rounds=max(rnd + 1, 1))
    by_id = {s.id: s for s in round_records}
    if submission_agent is None:
        submission_agent = lambda sid: by_id[sid].agent  # noqa: E731

    entries: list[RewardEntry] = []
    news = _round_news(round_records)
    if news:
        entries.extend(_performance_entries(news, params, ctx))
        for s in news:
            if s.disclosed:
                entries.append(RewardEntry(s.id, s.agent, params.sharing_bonus,
                                           SHARING_BONUS, s.round))
    for v in verdicts:
        reproducer = submission_agent(v.reproduction)
        original_agent = submission_agent(v.original)
        entries.append(RewardEntry(v.reproduction, reproducer, params.repro_bounty,
                                   REPRO_BOUNTY, v.round))
        if v.verdict == CONFIRMED:
            entries.append(RewardEntry(v.original, original_agent, params.confirm_bonus,
                                       CONFIRM_BONUS, v.round))
        else:
            entries.append(RewardEntry(v.original, original_agent, -params.refute_penalty,
                                       REFUTE_PENALTY, v.round))
    return entries
