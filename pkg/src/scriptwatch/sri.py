"""Content digests and subresource-integrity metadata."""

from __future__ import annotations

import base64
import binascii
import enum
import hashlib
from dataclasses import dataclass
from typing import Iterable, Optional

DIGEST_SIZES = {"sha1": 20, "sha256": 32, "sha384": 48, "sha512": 64}
SRI_ALGORITHMS = ("sha256", "sha384", "sha512")  # weakest first
_STRENGTH = {alg: i for i, alg in enumerate(SRI_ALGORITHMS)}


class Verification(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    NO_METADATA = "no-metadata"


@dataclass(frozen=True)
class Digest:
    algorithm: str
    value: bytes

    def __post_init__(self):
        if DIGEST_SIZES.get(self.algorithm) != len(self.value):
            raise ValueError(f"bad {self.algorithm} digest length {len(self.value)}")

    @property
    def hex(self) -> str:
        return self.value.hex()

    @property
    def b64(self) -> str:
        return base64.b64encode(self.value).decode("ascii")

    @classmethod
    def from_hex(cls, algorithm: str, text: str) -> "Digest":
        return cls(algorithm, bytes.fromhex(text))


@dataclass(frozen=True)
class IntegrityMetadata:
    algorithm: str
    digest_b64: str
    options: Optional[str] = None

    @property
    def digest(self) -> bytes:
        return _b64decode(self.digest_b64)


def compute_digest(content: bytes, algorithm: str = "sha1") -> Digest:
    if algorithm not in DIGEST_SIZES:
        raise ValueError(f"unsupported digest algorithm {algorithm!r}")
    return Digest(algorithm, hashlib.new(algorithm, content).digest())


def _b64decode(text: str) -> bytes:
    padded = text + "=" * (-len(text) % 4)
    try:
        return base64.b64decode(padded, validate=True)
    except (binascii.Error, ValueError):
        return base64.b64decode(padded, altchars=b"-_", validate=True)


def parse_integrity_attr(value: str) -> list[IntegrityMetadata]:
    """Parse an ``integrity`` attribute into its valid hash entries.

    Tokens with an unknown algorithm or a digest that does not decode to the
    algorithm's length are skipped.
    """
    out = []
    for token in value.split():
        alg, sep, rest = token.partition("-")
        alg = alg.lower()
        if not sep or alg not in _STRENGTH:
            continue
        digest_b64, _, options = rest.partition("?")
        try:
            raw = _b64decode(digest_b64)
        except (binascii.Error, ValueError, UnicodeEncodeError):
            continue
        if len(raw) != DIGEST_SIZES[alg]:
            continue
        out.append(IntegrityMetadata(alg, digest_b64, options or None))
    return out


def verify(content: bytes, metadata: Iterable[IntegrityMetadata]) -> Verification:
    """Check ``content`` against the strongest algorithm present in ``metadata``."""
    metadata = [m for m in metadata if m.algorithm in _STRENGTH]
    if not metadata:
        return Verification.NO_METADATA
    strongest = max(metadata, key=lambda m: _STRENGTH[m.algorithm]).algorithm
    actual = compute_digest(content, strongest).value
    for m in metadata:
        if m.algorithm == strongest and m.digest == actual:
            return Verification.PASS
    return Verification.FAIL


def generate_integrity_attr(content: bytes, algorithm: str = "sha384") -> str:
    if algorithm not in _STRENGTH:
        raise ValueError(f"{algorithm!r} is not a subresource-integrity algorithm")
    return f"{algorithm}-{compute_digest(content, algorithm).b64}"
