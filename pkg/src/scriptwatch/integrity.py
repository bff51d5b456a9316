"""Set-based temporal integrity of polled hash series.

Failed polls are dropped before the remaining digests are turned into a
set; a URL kept its integrity iff exactly one distinct digest remains, and
the number of changes is the set size minus one.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from .poller import HashSeries
from .sri import Digest

INTACT, CHANGED = 0, 1


class EmptySeriesError(ValueError):
    """Every poll of a URL failed, so there is nothing to summarize."""


@dataclass(frozen=True)
class IntegritySummary:
    url_id: int
    unique_hashes: frozenset
    change_count: int
    intact: bool
    observed_rounds: int
    failed_rounds: int
    transition_count: int = 0  # auxiliary, not used for classification

    def to_json(self) -> dict:
        return {
            "url_id": self.url_id,
            "change_count": self.change_count,
            "intact": self.intact,
            "observed_rounds": self.observed_rounds,
            "failed_rounds": self.failed_rounds,
            "transition_count": self.transition_count,
            "unique_hash_hexes": sorted(d.hex for d in self.unique_hashes),
        }

    @classmethod
    def from_json(cls, d: dict) -> "IntegritySummary":
        return cls(
            url_id=int(d["url_id"]),
            unique_hashes=frozenset(Digest.from_hex("sha1", h)
                                    for h in d["unique_hash_hexes"]),
            change_count=int(d["change_count"]),
            intact=bool(d["intact"]),
            observed_rounds=int(d["observed_rounds"]),
            failed_rounds=int(d["failed_rounds"]),
            transition_count=int(d.get("transition_count", 0)),
        )


def summarize_digests(url_id: int, digests: Iterable[Optional[object]]) -> IntegritySummary:
    """Summarize a sequence where ``None`` marks a failed poll."""
    seq = list(digests)
    observed = [d for d in seq if d is not None]
    if not observed:
        raise EmptySeriesError(f"url_id {url_id}: no successful polls")
    unique = frozenset(observed)
    transitions = sum(1 for a, b in zip(observed, observed[1:]) if a != b)
    return IntegritySummary(
        url_id=url_id,
        unique_hashes=unique,
        change_count=len(unique) - 1,
        intact=len(unique) == 1,
        observed_rounds=len(observed),
        failed_rounds=len(seq) - len(observed),
        transition_count=transitions,
    )


def summarize(series: HashSeries) -> IntegritySummary:
    return summarize_digests(series.url_id, (r.digest for r in series.records))


def label(summary: IntegritySummary) -> int:
    return CHANGED if summary.change_count >= 1 else INTACT


def change_distribution(summaries: Iterable[IntegritySummary]) -> dict[int, int]:
    """Number of URLs per change count (only counts that occur)."""
    counts = Counter(s.change_count for s in summaries)
    return dict(sorted(counts.items()))
