"""Error taxonomy shared by the library, the wire protocol, and the CLI.

Every error carries a stable kebab-case code; the server puts the code in
Error payloads and the CLI maps code families to exit codes.
"""

from __future__ import annotations


class MaccError(Exception):
    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class InvalidArgument(MaccError):
    code = "invalid-argument"


class InvalidParams(MaccError):
    code = "invalid-params"


class InvalidConfig(MaccError):
    code = "invalid-config"


class InvalidScenario(MaccError):
    code = "invalid-scenario"


class UnknownTarget(MaccError):
    code = "unknown-target"


class ForbiddenSelfReproduction(MaccError):
    code = "forbidden-self-reproduction"


class ConditionMismatch(MaccError):
    code = "condition-mismatch"


class InvalidKind(MaccError):
    code = "invalid-kind"


class AlreadyJudged(MaccError):
    code = "already-judged"


class ProtocolError(MaccError):
    code = "protocol-error"

    def __init__(self, message: str = "", offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class FrameTooLarge(MaccError):
    code = "frame-too-large"


class AuthFailed(MaccError):
    code = "auth-failed"


class NoSession(MaccError):
    code = "no-session"


class RateLimited(MaccError):
    code = "rate-limited"
