"""Polling pool construction, timed fetch rounds and their on-disk logs.

Pool manifest and poll log are JSON-lines files. The poll log is
append-only: one record per pool entry per round, ascending ``url_id``
within a round and ascending round index ``t`` across rounds.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .domains import second_level_domain
from .extract import TRACKED_ATTRIBUTES, ScriptRef
from .fetch import Fetcher, FetchResult
from .sri import Digest, compute_digest
from .urls import ParsedUrl, parse_url

log = logging.getLogger(__name__)

BACKREF_ATTRIBUTES = TRACKED_ATTRIBUTES + ("type",)
SNIFFED_TYPES = ("javascript", "html", "text", "binary", "empty")
BINARY_THRESHOLD = 0.10
SNIFF_WINDOW = 1024

JS_MEDIA_TYPES = frozenset({
    "application/javascript", "text/javascript", "application/x-javascript",
    "application/ecmascript", "text/ecmascript", "application/x-ecmascript",
})
_JS_TOKENS = re.compile(
    rb"function|\bvar |\blet |\bconst |=>|\(\)\s*\{|!function|use strict"
    rb"|\bwindow\.|\bdocument\.|^\s*(?://|/\*)",
    re.MULTILINE,
)
_TEXT_CONTROLS = frozenset(b"\t\n\r\f\b")


class PollLogError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackRef:
    domain: str  # second-level domain of the including page
    attributes: tuple = ()  # sorted tracked attribute names on the tag

    def to_json(self) -> dict:
        return {"domain": self.domain, "attributes": list(self.attributes)}


@dataclass
class PoolEntry:
    url_id: int
    url: str
    first_digest: Digest
    first_length: int
    content_type: Optional[str]
    sniffed_type: str
    back_refs: list = field(default_factory=list)

    @property
    def parsed(self) -> ParsedUrl:
        return parse_url(self.url)

    def to_json(self) -> dict:
        return {
            "url_id": self.url_id,
            "url": self.url,
            "first_digest_hex": self.first_digest.hex,
            "first_length": self.first_length,
            "content_type": self.content_type,
            "sniffed_type": self.sniffed_type,
            "back_refs": [b.to_json() for b in self.back_refs],
        }

    @classmethod
    def from_json(cls, d: dict) -> "PoolEntry":
        return cls(
            url_id=int(d["url_id"]),
            url=d["url"],
            first_digest=Digest.from_hex("sha1", d["first_digest_hex"]),
            first_length=int(d["first_length"]),
            content_type=d.get("content_type"),
            sniffed_type=d["sniffed_type"],
            back_refs=[BackRef(b["domain"], tuple(b.get("attributes", ())))
                       for b in d.get("back_refs", [])],
        )


@dataclass(frozen=True)
class PollRecord:
    url_id: int
    t: int
    timestamp: float
    digest: Optional[Digest] = None
    length: int = 0
    error: Optional[str] = None  # error class when the fetch yielded bottom
    final_url: Optional[str] = None

    def __post_init__(self):
        if (self.digest is None) == (self.error is None):
            raise ValueError("exactly one of digest / error must be set")

    @property
    def is_bottom(self) -> bool:
        return self.digest is None

    @property
    def status(self) -> str:
        return "ok" if self.digest is not None else self.error

    def to_json(self) -> dict:
        return {
            "url_id": self.url_id,
            "t": self.t,
            "timestamp": round(self.timestamp, 3),
            "status": self.status,
            "sha1_hex": self.digest.hex if self.digest else None,
            "length": self.length,
            "final_url": self.final_url,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PollRecord":
        ok = d["status"] == "ok"
        return cls(
            url_id=int(d["url_id"]),
            t=int(d["t"]),
            timestamp=float(d["timestamp"]),
            digest=Digest.from_hex("sha1", d["sha1_hex"]) if ok else None,
            length=int(d.get("length") or 0),
            error=None if ok else d["status"],
            final_url=d.get("final_url"),
        )


@dataclass(frozen=True)
class HashSeries:
    url_id: int
    records: tuple

    def __post_init__(self):
        ts = [r.t for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"url_id {self.url_id}: round indices not strictly increasing")


@dataclass(frozen=True)
class Rejection:
    url: str
    reason: str
    content_type: Optional[str] = None

    def to_json(self) -> dict:
        return {"url": self.url, "reason": self.reason,
                "content_type": self.content_type}


def _media_type(declared: Optional[str]) -> str:
    return (declared or "").split(";", 1)[0].strip().lower()


def sniff_type(content: bytes, declared: Optional[str] = None) -> str:
    """Heuristic buffer type: javascript, html, text, binary or empty."""
    if not content:
        return "empty"
    head = content[:SNIFF_WINDOW]
    lead = head.lstrip().lower()
    if lead.startswith(b"\xef\xbb\xbf"):
        lead = lead[3:].lstrip()
    if lead.startswith((b"<!doctype", b"<html")):
        return "html"
    if b"\x00" in head:
        return "binary"
    try:
        head.decode("utf-8")
        high_is_text = True
    except UnicodeDecodeError as exc:
        # a multi-byte sequence cut by the window is still text
        high_is_text = exc.start >= len(head) - 3 and exc.reason.startswith("unexpected end")
    odd = sum(1 for b in head
              if (b < 0x20 and b not in _TEXT_CONTROLS) or b == 0x7F
              or (b >= 0x80 and not high_is_text))
    if odd / len(head) > BINARY_THRESHOLD:
        return "binary"
    if _JS_TOKENS.search(head) or _media_type(declared) in JS_MEDIA_TYPES:
        return "javascript"
    return "text"


def _backref(ref: ScriptRef) -> BackRef:
    attrs = tuple(sorted(a for a in BACKREF_ATTRIBUTES if ref.tag.has(a)))
    return BackRef(second_level_domain(ref.page_url.host), attrs)


def build_pool(refs: Iterable[ScriptRef], fetcher: Fetcher,
               first_id: int = 1) -> tuple[list[PoolEntry], list[Rejection]]:
    """Download each unique cross-origin script URL once and qualify it.

    Entries qualify on a non-empty HTTP 200 body; they are numbered in order
    of first appearance in ``refs``.
    """
    by_url: dict[str, list[BackRef]] = {}
    for ref in refs:
        if not ref.cross_origin:
            raise ValueError(f"same-origin ref passed to build_pool: {ref.script_url}")
        by_url.setdefault(ref.script_url.serialize(), []).append(_backref(ref))

    urls = list(by_url)
    results = fetcher.get_many(urls)
    entries, rejections = [], []
    next_id = first_id
    for url, res in zip(urls, results):
        if not res.ok:
            rejections.append(Rejection(url, res.outcome, res.content_type))
            continue
        entries.append(PoolEntry(
            url_id=next_id,
            url=url,
            first_digest=compute_digest(res.body, "sha1"),
            first_length=len(res.body),
            content_type=res.content_type,
            sniffed_type=sniff_type(res.body, res.content_type),
            back_refs=by_url[url],
        ))
        next_id += 1
    log.info("pool: %d qualified, %d rejected", len(entries), len(rejections))
    return entries, rejections


def record_from_result(url_id: int, t: int, res: FetchResult) -> PollRecord:
    if res.ok:
        return PollRecord(url_id, t, res.timestamp,
                          digest=compute_digest(res.body, "sha1"),
                          length=len(res.body), final_url=res.final_url)
    return PollRecord(url_id, t, res.timestamp, error=res.outcome,
                      length=len(res.body), final_url=res.final_url)


def poll_round(pool: Sequence[PoolEntry], t: int, fetcher: Fetcher,
               poll_log: Optional["PollLog"] = None) -> list[PollRecord]:
    """Fetch every pool entry once as round ``t``; failures become bottoms."""
    ordered = sorted(pool, key=lambda e: e.url_id)
    results = fetcher.get_many(e.url for e in ordered)
    records = [record_from_result(e.url_id, t, r) for e, r in zip(ordered, results)]
    if poll_log is not None:
        poll_log.append(records)
    return records


# -- files -----------------------------------------------------------------

def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_pool(path: Path, entries: Iterable[PoolEntry]) -> None:
    write_jsonl(path, (e.to_json() for e in sorted(entries, key=lambda e: e.url_id)))


def read_pool(path: Path) -> list[PoolEntry]:
    return [PoolEntry.from_json(d) for d in read_jsonl(path)]


class PollLog:
    """Append-only JSON-lines log of poll records."""

    def __init__(self, path: Path):
        self.path = Path(path)

    def records(self) -> list[PollRecord]:
        if not self.path.exists():
            return []
        return [PollRecord.from_json(d) for d in read_jsonl(self.path)]

    def rounds(self) -> list[int]:
        return sorted({r.t for r in self.records()})

    def next_round(self) -> int:
        rounds = self.rounds()
        return rounds[-1] + 1 if rounds else 0

    def last_timestamp(self) -> Optional[float]:
        recs = self.records()
        return max(r.timestamp for r in recs) if recs else None

    def append(self, records: Sequence[PollRecord]) -> None:
        if not records:
            return
        existing = set(self.rounds())
        new_rounds = {r.t for r in records}
        clash = existing & new_rounds
        if clash:
            raise PollLogError(f"round(s) {sorted(clash)} already recorded")
        if existing and min(new_rounds) < max(existing):
            raise PollLogError("rounds must be appended in ascending order")
        ordered = sorted(records, key=lambda r: (r.t, r.url_id))
        with open(self.path, "a", encoding="utf-8") as fh:
            for r in ordered:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def series_by_url(records: Iterable[PollRecord]) -> dict[int, HashSeries]:
    grouped: dict[int, list[PollRecord]] = {}
    for r in records:
        grouped.setdefault(r.url_id, []).append(r)
    return {uid: HashSeries(uid, tuple(sorted(rs, key=lambda r: r.t)))
            for uid, rs in sorted(grouped.items())}
