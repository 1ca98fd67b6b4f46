"""Append-only blackboard of submissions, reproduction verdicts, and queries.

The board is the community's record of claims: each append is immutable,
sequence ids are dense and strictly increasing, and every record carries a
content hash so log replay can prove integrity.  Undisclosed submissions
are stored hash-only; no query path ever reveals their configuration.

Persistence is a newline-delimited canonical-text log (one record per
line) plus an optional snapshot file for fast restart.  Replaying a log
rebuilds the identical board, including content hashes.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass

from . import canon
from .errors import (
    AlreadyJudged,
    ConditionMismatch,
    ForbiddenSelfReproduction,
    InvalidArgument,
    InvalidKind,
    UnknownTarget,
)

KIND_NEW = "new"
KIND_REPRODUCTION = "reproduction"

CONFIRMED = "confirmed"
REFUTED = "refuted"


@dataclass(frozen=True)
class Submission:
    id: int
    agent: int
    round: int
    kind: str
    target: int | None
    config: tuple[int, ...] | None  # present iff disclosed or kind == reproduction
    config_hash: str
    reported_score: float
    disclosed: bool
    content_hash: str

    def to_dict(self) -> dict:
        return {
            "record": "submission",
            "id": self.id,
            "agent": self.agent,
            "round": self.round,
            "kind": self.kind,
            "target": self.target,
            "config": list(self.config) if self.config is not None else None,
            "config_hash": self.config_hash,
            "reported_score": self.reported_score,
            "disclosed": self.disclosed,
            "content_hash": self.content_hash,
        }


@dataclass(frozen=True)
class ReproductionVerdict:
    reproduction: int
    original: int
    round: int
    delta: float
    verdict: str
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "record": "verdict",
            "reproduction": self.reproduction,
            "original": self.original,
            "round": self.round,
            "delta": self.delta,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
        }


def _submission_content_hash(fields: dict) -> str:
    body = {k: v for k, v in fields.items() if k not in ("record", "content_hash")}
    return canon.content_hash(body)


def submission_from_dict(d: dict) -> Submission:
    return Submission(
        id=d["id"],
        agent=d["agent"],
        round=d["round"],
        kind=d["kind"],
        target=d["target"],
        config=tuple(d["config"]) if d["config"] is not None else None,
        config_hash=d["config_hash"],
        reported_score=d["reported_score"],
        disclosed=d["disclosed"],
        content_hash=d["content_hash"],
    )


def verdict_from_dict(d: dict) -> ReproductionVerdict:
    return ReproductionVerdict(
        reproduction=d["reproduction"],
        original=d["original"],
        round=d["round"],
        delta=d["delta"],
        verdict=d["verdict"],
        tolerance=d["tolerance"],
    )


class Blackboard:
    """Single-writer board; appends are serialized, readers see a prefix."""

    def __init__(self, log_path: str | None = None):
        self._lock = threading.Lock()
        self._submissions: list[Submission] = []
        self._verdicts: list[ReproductionVerdict] = []
        self._judged: set[int] = set()  # reproduction ids with a recorded verdict
        self._confirmed: set[int] = set()  # original ids with >= 1 confirmed verdict
        self._first_seen: dict[str, int] = {}  # config_hash -> first sequence id
        self._log = open(log_path, "a", encoding="utf-8") if log_path else None

    # -- mutation ---------------------------------------------------------

    def append(
        self,
        agent: int,
        round: int,
        kind: str,
        reported_score: float,
        disclosed: bool,
        config=None,
        config_hash: str | None = None,
        target: int | None = None,
    ) -> Submission:
        """Record one submission; returns the stored record with its id.

        New submissions may be hash-only (undisclosed); reproductions must
        carry the config and it must match the target's config hash.
        """
        if kind not in (KIND_NEW, KIND_REPRODUCTION):
            raise InvalidArgument(f"unknown submission kind {kind!r}")
        if config is not None:
            config = tuple(int(v) for v in config)
            computed = canon.config_hash(config)
            if config_hash is not None and config_hash != computed:
                raise ConditionMismatch("config_hash does not match config")
            config_hash = computed
        if config_hash is None:
            raise InvalidArgument("either config or config_hash is required")

        with self._lock:
            if kind == KIND_REPRODUCTION:
                if not disclosed:
                    raise InvalidArgument("reproductions must be disclosed")
                if config is None:
                    raise InvalidArgument("reproductions must carry the config")
                if target is None or target < 1 or target > len(self._submissions):
                    raise UnknownTarget(f"target {target} does not exist")
                orig = self._submissions[target - 1]
                if orig.kind != KIND_NEW:
                    raise InvalidKind("reproduction target must be a New submission")
                if orig.agent == agent:
                    raise ForbiddenSelfReproduction("agents may not reproduce their own work")
                if orig.config_hash != config_hash:
                    raise ConditionMismatch("reproduction config does not match the target's")
            else:
                target = None
                if not disclosed:
                    config = None  # hash-only storage; never retained

            seq = len(self._submissions) + 1
            body = {
                "id": seq,
                "agent": int(agent),
                "round": int(round),
                "kind": kind,
                "target": target,
                "config": list(config) if config is not None else None,
                "config_hash": config_hash,
                "reported_score": float(reported_score),
                "disclosed": bool(disclosed),
            }
            sub = Submission(
                id=seq,
                agent=body["agent"],
                round=body["round"],
                kind=kind,
                target=target,
                config=config,
                config_hash=config_hash,
                reported_score=body["reported_score"],
                disclosed=body["disclosed"],
                content_hash=canon.content_hash(body),
            )
            self._submissions.append(sub)
            self._first_seen.setdefault(config_hash, seq)
            if self._log:
                self._log.write(canon.dumps(sub.to_dict()) + "\n")
            return sub

    def match_reproduction(self, reproduction_id: int, epsilon: float) -> ReproductionVerdict:
        """Judge one reproduction against its original; one verdict per record."""
        with self._lock:
            if reproduction_id < 1 or reproduction_id > len(self._submissions):
                raise UnknownTarget(f"submission {reproduction_id} does not exist")
            repro = self._submissions[reproduction_id - 1]
            if repro.kind != KIND_REPRODUCTION:
                raise InvalidKind(f"submission {reproduction_id} is not a reproduction")
            if reproduction_id in self._judged:
                raise AlreadyJudged(f"reproduction {reproduction_id} already judged")
            orig = self._submissions[repro.target - 1]
            delta = abs(repro.reported_score - orig.reported_score)
            verdict = ReproductionVerdict(
                reproduction=reproduction_id,
                original=orig.id,
                round=repro.round,
                delta=delta,
                verdict=CONFIRMED if delta <= epsilon else REFUTED,
                tolerance=float(epsilon),
            )
            self._verdicts.append(verdict)
            self._judged.add(reproduction_id)
            if verdict.verdict == CONFIRMED:
                self._confirmed.add(orig.id)
            if self._log:
                self._log.write(canon.dumps(verdict.to_dict()) + "\n")
            return verdict

    def round_boundary(self) -> None:
        """Flush and fsync the append log (called once per round)."""
        if self._log:
            self._log.flush()
            os.fsync(self._log.fileno())

    def close(self) -> None:
        if self._log:
            self._log.close()
            self._log = None

    # -- queries ----------------------------------------------------------

    def __len__(self) -> int:
        with self._lock:
            return len(self._submissions)

    def get(self, submission_id: int) -> Submission:
        with self._lock:
            if submission_id < 1 or submission_id > len(self._submissions):
                raise UnknownTarget(f"submission {submission_id} does not exist")
            return self._submissions[submission_id - 1]

    def visited(self, config_hash: str) -> bool:
        with self._lock:
            return config_hash in self._first_seen

    def frontier(self, k: int) -> list[tuple[int, float, bool]]:
        """Top-k New submissions by reported score; ties break to lower id."""
        if k < 1:
            raise InvalidArgument("k must be >= 1")
        with self._lock:
            news = [s for s in self._submissions if s.kind == KIND_NEW]
            news.sort(key=lambda s: (-s.reported_score, s.id))
            return [(s.id, s.reported_score, s.id in self._confirmed) for s in news[:k]]

    def snapshot_round(self, round: int) -> tuple[list[Submission], list[ReproductionVerdict]]:
        with self._lock:
            subs = [s for s in self._submissions if s.round == round]
            verds = [v for v in self._verdicts if v.round == round]
            return subs, verds

    def submissions(self) -> list[Submission]:
        with self._lock:
            return list(self._submissions)

    def verdicts(self) -> list[ReproductionVerdict]:
        with self._lock:
            return list(self._verdicts)

    def confirmed_ids(self) -> set[int]:
        with self._lock:
            return set(self._confirmed)

    def hashes_before(self, round: int) -> set[str]:
        """Config hashes of all submissions appended in rounds < round."""
        with self._lock:
            return {s.config_hash for s in self._submissions if s.round < round}

    def view(self, params=None, total_rounds: int = 1, dims=()) -> "BoardView":
        """Public read snapshot at the current append watermark."""
        with self._lock:
            return BoardView(self, len(self._submissions), params, total_rounds, dims)

    # -- persistence ------------------------------------------------------

    def save_snapshot(self, path: str) -> None:
        with self._lock:
            state = {
                "record": "board-snapshot",
                "last_sequence": len(self._submissions),
                "submissions": [s.to_dict() for s in self._submissions],
                "verdicts": [v.to_dict() for v in self._verdicts],
            }
        with open(path, "w", encoding="utf-8") as f:
            f.write(canon.dumps(state) + "\n")

    @classmethod
    def load_snapshot(cls, path: str) -> "Blackboard":
        with open(path, encoding="utf-8") as f:
            state = canon.loads(f.read())
        board = cls()
        board._ingest(
            [submission_from_dict(d) for d in state["submissions"]],
            [verdict_from_dict(d) for d in state["verdicts"]],
        )
        return board

    @classmethod
    def replay_log(cls, path: str) -> "Blackboard":
        """Rebuild a board from its append log, verifying content hashes."""
        subs: list[Submission] = []
        verds: list[ReproductionVerdict] = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                d = canon.loads(line)
                if d.get("record") == "submission":
                    subs.append(submission_from_dict(d))
                elif d.get("record") == "verdict":
                    verds.append(verdict_from_dict(d))
        board = cls()
        board._ingest(subs, verds)
        return board

    def _ingest(self, subs: list[Submission], verds: list[ReproductionVerdict]) -> None:
        for i, s in enumerate(subs, start=1):
            if s.id != i:
                raise InvalidArgument(f"sequence gap: expected id {i}, found {s.id}")
            expected = _submission_content_hash(s.to_dict())
            if s.content_hash != expected:
                raise ConditionMismatch(f"content hash mismatch on submission {s.id}")
            self._submissions.append(s)
            self._first_seen.setdefault(s.config_hash, s.id)
        for v in verds:
            self._verdicts.append(v)
            self._judged.add(v.reproduction)
            if v.verdict == CONFIRMED:
                self._confirmed.add(v.original)


class BoardView:
    """Read-only public projection of a board prefix.

    Agents only ever see one of these (or a remote mirror with the same
    surface): undisclosed configurations are redacted to their hash.
    """

    def __init__(self, board: Blackboard, watermark: int, params, total_rounds: int,
                 dims=()):
        self._board = board
        self._watermark = watermark
        self.params = params
        self.total_rounds = total_rounds
        self.dims = tuple(dims)

    def __len__(self) -> int:
        return self._watermark

    def visited(self, config_hash: str) -> bool:
        first = self._board._first_seen.get(config_hash)
        return first is not None and first <= self._watermark

    def frontier(self, k: int) -> list[tuple[int, float, bool]]:
        news = [
            s for s in self._board._submissions[: self._watermark] if s.kind == KIND_NEW
        ]
        news.sort(key=lambda s: (-s.reported_score, s.id))
        return [(s.id, s.reported_score, s.id in self._board._confirmed) for s in news[:k]]

    def get(self, submission_id: int) -> dict | None:
        """Public fields of one record; config only when disclosed."""
        if submission_id < 1 or submission_id > self._watermark:
            return None
        s = self._board._submissions[submission_id - 1]
        return public_record(s)


def public_record(s: Submission) -> dict:
    d = s.to_dict()
    if not s.disclosed:
        d["config"] = None
    return d
