"""Registrable (second-level) domain lookup."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Optional

from .urls import is_ipv4

log = logging.getLogger(__name__)

NOT_APPLICABLE = "-"


@dataclass(frozen=True)
class DomainSplit:
    registrable: str
    suffix: str
    fallback: bool  # True when the last-two-labels heuristic was used


class SuffixList:
    """Public-suffix lookups backed by the bundled ICANN snapshot.

    With ``use_snapshot=False`` (or when the snapshot cannot be loaded) a
    last-two-labels heuristic is used and every answer is flagged.
    """

    def __init__(self, use_snapshot: bool = True):
        self._psl = None
        if use_snapshot:
            try:
                from publicsuffixlist import PublicSuffixList
                self._psl = PublicSuffixList(only_icann=True)
            except Exception as exc:  # pragma: no cover - packaging issue
                log.warning("public suffix snapshot unavailable (%s); "
                            "falling back to last-two-labels", exc)

    @property
    def has_snapshot(self) -> bool:
        return self._psl is not None

    @functools.lru_cache(maxsize=65536)
    def split(self, host: str) -> Optional[DomainSplit]:
        host = host.lower().rstrip(".")
        if not host or is_ipv4(host):
            return None
        labels = host.split(".")
        if self._psl is not None:
            suffix = self._psl.publicsuffix(host)
            if suffix is None:
                return None
            registrable = self._psl.privatesuffix(host)
            if registrable is None:
                # host is itself a public suffix
                registrable = host
            return DomainSplit(registrable, suffix, False)
        suffix = labels[-1]
        return DomainSplit(".".join(labels[-2:]), suffix, True)


@functools.lru_cache(maxsize=None)
def default_suffix_list() -> SuffixList:
    return SuffixList()


def second_level_domain(host: str, suffixes: Optional[SuffixList] = None) -> str:
    """Return the registrable domain of ``host``.

    IPv4 literals (and anything else without a domain) map to
    ``NOT_APPLICABLE``.
    """
    split = (suffixes or default_suffix_list()).split(host)
    return NOT_APPLICABLE if split is None else split.registrable


def domain_label_count(host: str, suffixes: Optional[SuffixList] = None) -> int:
    """Number of host labels left of the public suffix, 0 for IPv4 hosts."""
    split = (suffixes or default_suffix_list()).split(host)
    if split is None:
        return 0
    n_host = len(host.lower().rstrip(".").split("."))
    n_suffix = len(split.suffix.split("."))
    return max(n_host - n_suffix, 0)


def rank_counts(counts: dict, k: Optional[int] = None) -> list[tuple[str, int]]:
    """Sort (name, count) pairs by descending count, ties alphabetically."""
    ranked = sorted(((n, c) for n, c in counts.items() if c >= 1),
                    key=lambda nc: (-nc[1], nc[0]))
    return ranked if k is None else ranked[:k]
