"""Canonical text encoding and content hashing.

One encoding serves log lines, wire frames, and hashes: JSON with sorted
keys, no insignificant whitespace, UTF-8, and floats rendered by Python's
shortest round-trip repr (within the 17 significant digits needed to
round-trip a double).  Non-finite reals are rejected so every emitted
line parses back to an equal value.
"""

from __future__ import annotations

import hashlib
import json
import math

from .errors import InvalidArgument


def _check_finite(obj) -> None:
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise InvalidArgument("non-finite real in canonical value")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            if not isinstance(k, str):
                raise InvalidArgument("canonical object keys must be strings")
            _check_finite(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v)


def dumps(obj) -> str:
    """Canonical text form of a JSON-compatible value."""
    _check_finite(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def loads(text: str):
    return json.loads(text)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def content_hash(obj) -> str:
    """256-bit hash of the canonical form, as lowercase hex."""
    return sha256_hex(dumps(obj))


def config_hash(values) -> str:
    """Hash of a grid configuration (canonical form: plain integer array)."""
    return content_hash([int(v) for v in values])
