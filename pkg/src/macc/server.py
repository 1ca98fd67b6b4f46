"""Open-participation board server.

Remote agents authenticate with pre-shared tokens (one per roster slot),
act against committed round-start state, and see their submissions
applied at round boundaries in (agent id, submit index) order through the
same RoundEngine the in-process harness uses, so a networked run and an
in-process run of the same action streams produce identical ledgers.

The server drives the round clock: a round closes when every connected
agent has used its per-round submission budget or when the wall-time
deadline passes, whichever comes first.  In refereed mode the server
evaluates every submitted config itself and ignores client-claimed
scores; in open mode claims are recorded verbatim and the task inputs
are published so honest remote agents can evaluate locally.
"""

from __future__ import annotations

import socket
import threading
import time

from . import protocol
from .agents import Evaluate, Fabricate, Reproduce
from .board import public_record
from .errors import MaccError, ProtocolError
from .protocol import Message
from .scenario import Scenario
from .sim import RoundEngine, agent_stream_base, compute_metrics

REFEREED = "refereed"
OPEN = "open"

RATE_LIMIT_PER_ROUND = 100


class _Session:
    def __init__(self, conn: socket.socket):
        self.conn = conn
        self.reader = protocol.FrameReader()
        self.write_lock = threading.Lock()
        self.token: str | None = None
        self.spec = None  # AgentSpec once authenticated
        self.msg_count = 0
        self.pending: list[tuple[str, object]] = []  # (nonce, action|None)
        self.obligations: list[str] = []  # nonces in request order, dupes repeated
        self.queued: set[str] = set()
        self.closed = False

    def send(self, message: Message) -> None:
        if self.closed:
            return
        try:
            with self.write_lock:
                self.conn.sendall(protocol.encode(message))
        except OSError:
            self.closed = True

    def submitted_slots(self) -> int:
        return len(self.pending)


class Server:
    def __init__(self, scenario: Scenario, tokens: list[str], mode: str = REFEREED,
                 host: str = "127.0.0.1", port: int = protocol.DEFAULT_PORT,
                 round_time: float = 2.0, start_timeout: float = 30.0):
        self.scenario = scenario.validate()
        if mode not in (REFEREED, OPEN):
            raise MaccError(f"unknown server mode {mode!r}")
        roster = sorted(self.scenario.agents, key=lambda a: a.agent_id)
        if len(tokens) != len(roster):
            raise MaccError(
                f"token file has {len(tokens)} tokens for {len(roster)} roster slots")
        self.mode = mode
        self.host = host
        self.port = port
        self.round_time = round_time
        self.start_timeout = start_timeout
        self.engine = RoundEngine(self.scenario)
        self._slots = dict(zip(tokens, roster))  # token -> AgentSpec
        self._lock = threading.Lock()
        self._sessions: dict[str, _Session] = {}  # token -> live session
        # At-most-once ledger recording: token -> nonce -> ack payload.
        # Keyed by token so duplicates after a reconnect still replay.
        self._acked: dict[str, dict[str, dict]] = {t: {} for t in tokens}
        self._round_open = False
        self._current_round = -1
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._stopping = False

    # -- lifecycle --------------------------------------------------------

    def serve(self):
        """Run all rounds, then return (trajectory, metrics)."""
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self.host, self.port))
        self.port = self._listener.getsockname()[1]
        self._listener.listen(64)
        self._listener.settimeout(0.05)
        accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        accept_thread.start()
        try:
            self._await_roster()
            for t in range(self.scenario.rounds):
                self._play_round(t)
        finally:
            self._stopping = True
            accept_thread.join(timeout=2.0)
            self._close_all()
        trajectory = self.engine.trajectory()
        return trajectory, compute_metrics(trajectory)

    def _await_roster(self) -> None:
        deadline = time.monotonic() + self.start_timeout
        while time.monotonic() < deadline:
            with self._lock:
                if len(self._sessions) == len(self._slots):
                    return
            time.sleep(0.01)

    def _close_all(self) -> None:
        with self._lock:
            sessions = list(self._sessions.values())
            self._sessions.clear()
        for s in sessions:
            s.closed = True
            try:
                s.conn.close()
            except OSError:
                pass

    # -- round clock ------------------------------------------------------

    def _play_round(self, t: int) -> None:
        with self._lock:
            self._current_round = t
            bound = list(self._sessions.values())
            for s in bound:
                s.msg_count = 0
                s.pending.clear()
                s.obligations.clear()
                s.queued.clear()
            self._round_open = True
        for s in bound:
            s.send(Message(protocol.ROUND_START, {"round": t}))
        deadline = time.monotonic() + self.round_time
        while time.monotonic() < deadline:
            with self._lock:
                live = [s for s in self._sessions.values() if not s.closed]
                if live and all(
                        s.submitted_slots() >= s.spec.evals_per_round for s in live):
                    break
            time.sleep(0.005)
        with self._lock:
            self._round_open = False
            sessions = list(self._sessions.values())
            batches = []
            plans = []  # (session, pending snapshot, obligation snapshot)
            for s in sorted(sessions, key=lambda s: s.spec.agent_id):
                actions = [a for _nonce, a in s.pending if a is not None]
                batches.append((s.spec.agent_id, actions))
                plans.append((s, list(s.pending), list(s.obligations)))
        entries, results = self.engine.commit(t, batches)
        rewards_payload = [e.to_dict() for e in entries]
        for s, pending, obligations in plans:
            acked = self._acked[s.token]
            action_idx = 0
            for nonce, action in pending:
                if action is None:
                    acked[nonce] = {"nonce": nonce, "submission": None,
                                    "reported_score": None}
                    continue
                sub = results.get((s.spec.agent_id, action_idx))
                action_idx += 1
                acked[nonce] = {
                    "nonce": nonce,
                    "submission": sub.id if sub is not None else None,
                    "reported_score": sub.reported_score if sub is not None else None,
                }
            for nonce in obligations:
                payload = acked.get(nonce, {"nonce": nonce, "submission": None,
                                            "reported_score": None})
                s.send(Message(protocol.ACK, payload))
        for s in sessions:
            s.send(Message(protocol.ROUND_RESULT, {"round": t, "rewards": rewards_payload}))

    # -- connection handling ------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                conn, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            thread = threading.Thread(target=self._session_loop,
                                      args=(_Session(conn),), daemon=True)
            thread.start()
            self._threads.append(thread)
        try:
            self._listener.close()
        except OSError:
            pass

    def _session_loop(self, session: _Session) -> None:
        conn = session.conn
        conn.settimeout(0.2)
        try:
            while not self._stopping and not session.closed:
                try:
                    data = conn.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                for kind, frame, offset in session.reader.feed(data):
                    if kind == protocol.TOO_LARGE:
                        session.send(Message(protocol.ERROR, {
                            "code": "frame-too-large",
                            "message": f"frame starting at byte {offset} exceeds "
                                       f"{protocol.MAX_FRAME} bytes",
                        }))
                        continue
                    self._handle_frame(session, frame, offset)
        finally:
            self._unbind(session)
            try:
                conn.close()
            except OSError:
                pass

    def _unbind(self, session: _Session) -> None:
        session.closed = True
        with self._lock:
            if session.token and self._sessions.get(session.token) is session:
                del self._sessions[session.token]

    def _handle_frame(self, session: _Session, frame: bytes, offset: int) -> None:
        try:
            message = protocol.decode(frame, offset)
        except ProtocolError as e:
            session.send(Message(protocol.ERROR, {
                "code": e.code, "message": str(e), "offset": e.offset,
            }))
            return
        session.msg_count += 1
        if session.msg_count > RATE_LIMIT_PER_ROUND:
            session.send(Message(protocol.ERROR, {
                "code": "rate-limited",
                "message": f"over {RATE_LIMIT_PER_ROUND} messages this round; dropped",
            }))
            return
        if message.type == protocol.HELLO:
            self._handle_hello(session, message)
        elif message.type == protocol.SUBMIT:
            self._handle_submit(session, message)
        elif message.type == protocol.QUERY:
            self._handle_query(session, message)
        else:
            session.send(Message(protocol.ERROR, {
                "code": "protocol-error",
                "message": f"unknown message type {message.type!r}",
            }))

    def _authenticated(self, session: _Session, message: Message) -> bool:
        if session.token is None or message.session != session.token:
            session.send(Message(protocol.ERROR, {
                "code": "no-session",
                "message": "authenticate with Hello before submitting",
            }))
            return False
        return True

    def _handle_hello(self, session: _Session, message: Message) -> None:
        token = message.payload.get("token")
        spec = self._slots.get(token)
        reject = spec is None
        if not reject:
            with self._lock:
                if token in self._sessions and not self._sessions[token].closed:
                    reject = True
                else:
                    session.token = token
                    session.spec = spec
                    self._sessions[token] = session
        if reject:
            session.send(Message(protocol.ERROR, {
                "code": "auth-failed", "message": "unknown or busy token",
            }))
            session.closed = True
            try:
                session.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            return
        payload = {
            "agent_id": spec.agent_id,
            "name": spec.name,
            "dims": list(self.scenario.task.dims),
            "rounds": self.scenario.rounds,
            "params": self.scenario.params.public_dict(),
            "mode": self.mode,
            "spec": {
                "policy": spec.policy,
                "evals_per_round": spec.evals_per_round,
                "disclose": spec.disclose,
                "exploit_prob": spec.exploit_prob,
                "inflate": spec.inflate,
            },
            "agent_seed": agent_stream_base(self.scenario.master_seed, spec),
        }
        if self.mode == OPEN:
            payload["task"] = self.scenario.task.to_dict()
        session.send(Message(protocol.WELCOME, payload, session=token))

    def _handle_submit(self, session: _Session, message: Message) -> None:
        if not self._authenticated(session, message):
            return
        p = message.payload
        nonce = p.get("nonce")
        if not isinstance(nonce, str) or not nonce:
            session.send(Message(protocol.ERROR, {
                "code": "protocol-error", "message": "Submit requires a string nonce",
            }))
            return
        with self._lock:
            if nonce in self._acked[session.token]:
                session.send(Message(protocol.ACK, self._acked[session.token][nonce]))
                return
            if not self._round_open:
                session.send(Message(protocol.ERROR, {
                    "code": "protocol-error",
                    "message": "no round is accepting submissions",
                }))
                return
            if nonce in session.queued:
                session.obligations.append(nonce)  # answered at commit
                return
            try:
                action = self._action_from_payload(session, p)
            except MaccError as e:
                session.send(Message(protocol.ERROR, {"code": e.code, "message": str(e)}))
                return
            session.pending.append((nonce, action))
            session.queued.add(nonce)
            session.obligations.append(nonce)

    def _action_from_payload(self, session: _Session, p: dict):
        kind = p.get("kind")
        if kind == "idle":
            return None  # readiness marker; occupies one budget slot
        if kind == "reproduction":
            target = p.get("target")
            if not isinstance(target, int):
                raise ProtocolError("reproduction Submit requires an integer target")
            if self.mode == REFEREED:
                return Reproduce(target=target)
            claimed = p.get("reported_score")
            if not isinstance(claimed, (int, float)):
                raise ProtocolError("open-mode reproduction requires reported_score")
            return Reproduce(target=target, claimed_score=float(claimed))
        if kind == "new":
            config = p.get("config")
            disclosed = p.get("disclosed", session.spec.disclose)
            if self.mode == REFEREED:
                if not isinstance(config, list):
                    raise ProtocolError("refereed Submit requires the config")
                return Evaluate(config=tuple(config), disclose=bool(disclosed))
            claimed = p.get("reported_score")
            if not isinstance(claimed, (int, float)):
                raise ProtocolError("open-mode Submit requires reported_score")
            if config is None:
                config_hash = p.get("config_hash")
                if not isinstance(config_hash, str):
                    raise ProtocolError("hash-only Submit requires config_hash")
                return Fabricate(config=None, claimed_score=float(claimed),
                                 disclose=False, config_hash=config_hash)
            return Fabricate(config=tuple(config), claimed_score=float(claimed),
                             disclose=bool(disclosed))
        raise ProtocolError(f"unknown submission kind {kind!r}")

    def _handle_query(self, session: _Session, message: Message) -> None:
        if not self._authenticated(session, message):
            return
        p = message.payload
        what = p.get("what")
        view = self.engine.view()
        if what == "visited":
            h = p.get("config_hash")
            result = {"what": what, "visited": bool(isinstance(h, str) and view.visited(h))}
        elif what == "frontier":
            k = p.get("k")
            if not isinstance(k, int) or k < 1:
                session.send(Message(protocol.ERROR, {
                    "code": "protocol-error", "message": "frontier query requires k >= 1",
                }))
                return
            result = {"what": what, "entries": [
                {"submission": sid, "reported_score": score, "confirmed": confirmed}
                for sid, score, confirmed in view.frontier(k)
            ]}
        elif what == "snapshot_round":
            r = p.get("round")
            if not isinstance(r, int):
                session.send(Message(protocol.ERROR, {
                    "code": "protocol-error", "message": "snapshot_round query requires round",
                }))
                return
            subs, verds = self.engine.board.snapshot_round(r)
            result = {
                "what": what,
                "round": r,
                "submissions": [public_record(s) for s in subs],
                "verdicts": [v.to_dict() for v in verds],
            }
        else:
            session.send(Message(protocol.ERROR, {
                "code": "protocol-error", "message": f"unknown query {what!r}",
            }))
            return
        session.send(Message(protocol.QUERY_RESULT, result))


def load_tokens(path: str) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]
