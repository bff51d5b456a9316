"""Descriptive tables over a finished polling run.

Everything is written as CSV or plain text so that any plotting tool can
consume it; reruns over the same inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .domains import NOT_APPLICABLE, SuffixList, rank_counts, second_level_domain
from .extract import TRACKED_ATTRIBUTES, prevalence_from_sets
from .integrity import IntegritySummary, change_distribution, label
from .poller import SNIFFED_TYPES, PoolEntry

DEFAULT_K = 15
CONTINGENCY_METRICS = ("https", "qurl", "fragment", "jspath", "qdom", "blck")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class DomainRanking:
    by_urls: list  # [(domain, distinct pool URLs hosted)]
    by_inclusions: list  # [(domain, back-references to those URLs)]


@dataclass(frozen=True)
class ContingencyTable:
    metric: str
    counts: tuple  # ((m=0 intact, m=0 changed), (m=1 intact, m=1 changed))

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


def rank_domains(pool: Sequence[PoolEntry], k: int = DEFAULT_K,
                 suffixes: Optional[SuffixList] = None) -> DomainRanking:
    if not pool:
        raise ReportError("pool is empty")
    urls: Counter = Counter()
    incl: Counter = Counter()
    for e in pool:
        d = second_level_domain(e.parsed.host, suffixes)
        if d == NOT_APPLICABLE:
            d = e.parsed.host
        urls[d] += 1
        incl[d] += len(e.back_refs)
    return DomainRanking(rank_counts(urls, k), rank_counts(incl, k))


def contingency(summaries: Iterable[IntegritySummary],
                metrics: Mapping[int, Mapping[str, int]], metric: str) -> ContingencyTable:
    """Cross-tabulate a yes/no metric against intact/changed.

    ``metrics`` maps url_id to that entry's dichotomous metric values.
    """
    if metric not in CONTINGENCY_METRICS:
        raise ReportError(f"{metric!r} is not a dichotomous metric "
                          f"(choose from {', '.join(CONTINGENCY_METRICS)})")
    cells = [[0, 0], [0, 0]]
    for s in summaries:
        value = int(metrics[s.url_id][metric])
        cells[value][label(s)] += 1
    return ContingencyTable(metric, tuple(tuple(r) for r in cells))


def attribute_prevalence_from_pool(pool: Sequence[PoolEntry]) -> dict[str, float]:
    by_url = {e.url: [set(b.attributes) for b in e.back_refs] for e in pool}
    return prevalence_from_sets(by_url, [e.url for e in pool])


def pct(value: float) -> str:
    return f"{value:.1f}"


def _csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def render_tables(pool: Sequence[PoolEntry], summaries: Sequence[IntegritySummary],
                  metrics: Mapping[int, Mapping[str, int]], rounds: int,
                  k: int = DEFAULT_K, suffixes: Optional[SuffixList] = None,
                  notes: Sequence[str] = ()) -> dict[str, str]:
    """File name -> content for the whole report directory."""
    if not pool:
        raise ReportError("pool is empty")
    if not summaries:
        raise ReportError("no summarized entries (empty poll log?)")
    files: dict[str, str] = {}

    hist = change_distribution(summaries)
    top = max([rounds - 1, *hist]) if hist else 0
    files["changes_hist.csv"] = _csv(
        [("change_count", "urls"), *((c, hist.get(c, 0)) for c in range(top + 1))])

    ranking = rank_domains(pool, k, suffixes)
    files["domains_by_urls.csv"] = _csv(
        [("rank", "domain", "urls"), *((i, d, c) for i, (d, c) in enumerate(ranking.by_urls, 1))])
    files["domains_by_inclusions.csv"] = _csv(
        [("rank", "domain", "inclusions"),
         *((i, d, c) for i, (d, c) in enumerate(ranking.by_inclusions, 1))])

    prev = attribute_prevalence_from_pool(pool)
    with_attr = {a: sum(1 for e in pool if any(a in b.attributes for b in e.back_refs))
                 for a in TRACKED_ATTRIBUTES}
    files["attribute_prevalence.csv"] = _csv(
        [("attribute", "urls", "percent"),
         *((a, with_attr[a], pct(prev[a])) for a in TRACKED_ATTRIBUTES)])

    for m in CONTINGENCY_METRICS:
        table = contingency(summaries, metrics, m)
        files[f"contingency_{m}.csv"] = _csv(
            [(m, "intact", "changed"), *((v, *table.counts[v]) for v in (0, 1))])

    types = Counter(e.sniffed_type for e in pool)
    files["sniffed_types.csv"] = _csv(
        [("sniffed_type", "urls"), *((t, types.get(t, 0)) for t in SNIFFED_TYPES)])

    changed = sum(1 for s in summaries if label(s) == 1)
    share = 100.0 * changed / len(summaries)
    lines = [
        f"pool_urls: {len(pool)}",
        f"summarized_urls: {len(summaries)}",
        f"rounds: {rounds}",
        f"changed_urls: {changed}",
        f"share_changed: {pct(share)}%",
        "change_distribution: " + ", ".join(f"{c}={n}" for c, n in hist.items()),
        "attribute_prevalence: " + ", ".join(f"{a}={pct(prev[a])}%" for a in TRACKED_ATTRIBUTES),
        "top_domains_by_urls: " + ", ".join(d for d, _ in ranking.by_urls),
        "note: script tags come from static HTML; scripts injected at run time are not seen",
        *(f"note: {n}" for n in notes),
    ]
    files["summary.txt"] = "\n".join(lines) + "\n"
    return files


def emit_report(out_dir: Path, pool: Sequence[PoolEntry],
                summaries: Sequence[IntegritySummary],
                metrics: Mapping[int, Mapping[str, int]], rounds: int,
                k: int = DEFAULT_K, suffixes: Optional[SuffixList] = None,
                notes: Sequence[str] = ()) -> list[Path]:
    files = render_tables(pool, summaries, metrics, rounds, k, suffixes, notes)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in sorted(files.items()):
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
