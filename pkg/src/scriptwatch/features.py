"""Per-URL metric vectors for change prediction.

Nine base metrics plus one dummy per top second-level domain. Count-valued
metrics are stored as ``log(count + 1)``; no further scaling is applied.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .domains import (NOT_APPLICABLE, SuffixList, default_suffix_list,
                      domain_label_count, rank_counts, second_level_domain)
from .extract import TRACKED_ATTRIBUTES
from .filters import FilterList
from .poller import SNIFFED_TYPES, PoolEntry
from .urls import parse_url

DEFAULT_TOP_K = 15
BASE_COLUMNS = ("incl", "slen", "blck", "qurl", "qdom", "nojs", "ulen", "unum", "dnum")
DICHOTOMOUS = frozenset({"blck", "qurl", "qdom", "nojs"})


def feature_columns(k: int = DEFAULT_TOP_K) -> list[str]:
    return list(BASE_COLUMNS) + [f"dtop_{i}" for i in range(1, k + 1)]


def logc(count: int) -> float:
    return math.log(count + 1)


@dataclass(frozen=True)
class FeatureVector:
    incl: float
    slen: float
    blck: int
    qurl: int
    qdom: int
    nojs: int
    ulen: float
    unum: float
    dnum: float
    dtop: tuple

    def as_list(self) -> list:
        return [self.incl, self.slen, self.blck, self.qurl, self.qdom,
                self.nojs, self.ulen, self.unum, self.dnum, *self.dtop]

    def __len__(self) -> int:
        return len(BASE_COLUMNS) + len(self.dtop)


def including_domains(entry: PoolEntry) -> list[str]:
    return sorted({b.domain for b in entry.back_refs if b.domain != NOT_APPLICABLE})


def top_domains(entries: Iterable[PoolEntry], k: int = DEFAULT_TOP_K,
                suffixes: Optional[SuffixList] = None) -> list[str]:
    """The ``k`` second-level domains hosting the most pool URLs."""
    counts = Counter(second_level_domain(e.parsed.host, suffixes) for e in entries)
    counts.pop(NOT_APPLICABLE, None)
    return [d for d, _ in rank_counts(counts, k)]


def compute_features(entry: PoolEntry, including: Sequence[str],
                     filters: FilterList, top: Sequence[str],
                     k: Optional[int] = None,
                     suffixes: Optional[SuffixList] = None) -> FeatureVector:
    suffixes = suffixes or default_suffix_list()
    k = len(top) if k is None else k
    url = entry.url
    parsed = parse_url(url)
    query = parsed.query
    including = sorted(set(including))

    qdom = 0
    if query:
        q = query.lower()
        qdom = int(any(d.lower() in q for d in including if d and d != NOT_APPLICABLE))

    sld = second_level_domain(parsed.host, suffixes)
    dtop = [0] * k
    for i, d in enumerate(top[:k]):
        if d == sld:
            dtop[i] = 1
            break

    return FeatureVector(
        incl=logc(len(including)),
        slen=logc(entry.first_length),
        blck=int(filters.match(url, including)),
        qurl=int(query is not None),
        qdom=qdom,
        nojs=int(not parsed.path.endswith(".js")),
        ulen=logc(len(url)),
        unum=logc(sum(ch in "0123456789" for ch in url)),
        dnum=logc(domain_label_count(parsed.host, suffixes)),
        dtop=tuple(dtop),
    )


def dichotomous_metrics(entry: PoolEntry, fv: FeatureVector) -> dict[str, int]:
    """The yes/no properties tabulated against integrity in reports."""
    parsed = entry.parsed
    return {
        "https": int(parsed.scheme == "https"),
        "qurl": fv.qurl,
        "fragment": int(parsed.fragment is not None),
        "jspath": 1 - fv.nojs,
        "qdom": fv.qdom,
        "blck": fv.blck,
    }


def extended_metrics(entry: PoolEntry, suffixes: Optional[SuffixList] = None) -> dict[str, int]:
    """Metrics that were evaluated and dropped from the default training set."""
    suffixes = suffixes or default_suffix_list()
    parsed = entry.parsed
    out = {}
    for attr in TRACKED_ATTRIBUTES + ("type",):
        out[f"attr_{attr}"] = int(any(attr in b.attributes for b in entry.back_refs))
    media = (entry.content_type or "").split(";", 1)[0].strip().lower() or "none"
    out[f"ctype_{media}"] = 1
    for s in SNIFFED_TYPES:
        out[f"sniff_{s}"] = int(entry.sniffed_type == s)
    split = suffixes.split(parsed.host)
    out[f"tld_{split.suffix if split else 'ipv4'}"] = 1
    out["ipv4_host"] = int(parsed.is_ipv4)
    return out


@dataclass
class FeatureRow:
    url_id: int
    vector: FeatureVector
    label: Optional[int]
    extended: dict


def build_feature_rows(entries: Sequence[PoolEntry], labels: dict,
                       filters: FilterList, k: int = DEFAULT_TOP_K,
                       suffixes: Optional[SuffixList] = None) -> list[FeatureRow]:
    """Feature rows for every entry with a label, top domains taken over the pool."""
    top = top_domains(entries, k, suffixes)
    rows = []
    for e in sorted(entries, key=lambda e: e.url_id):
        if e.url_id not in labels:
            continue
        fv = compute_features(e, including_domains(e), filters, top, k, suffixes)
        rows.append(FeatureRow(e.url_id, fv, labels[e.url_id], extended_metrics(e, suffixes)))
    return rows


def write_feature_matrix(path: Path, rows: Sequence[FeatureRow], k: int = DEFAULT_TOP_K) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["url_id", *feature_columns(k), "label"])
        for r in rows:
            w.writerow([r.url_id, *r.vector.as_list(), r.label])


def write_extended_matrix(path: Path, rows: Sequence[FeatureRow]) -> None:
    cols = sorted({c for r in rows for c in r.extended})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["url_id", *cols])
        for r in rows:
            w.writerow([r.url_id, *(r.extended.get(c, 0) for c in cols)])


def read_feature_matrix(path: Path) -> tuple[list[str], list[int], list[list[float]], list[int]]:
    """Return (feature columns, url ids, feature rows, labels)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        has_id = header[0] == "url_id"
        cols = header[1 if has_id else 0:-1]
        ids, X, y = [], [], []
        for i, row in enumerate(reader):
            if not row:
                continue
            ids.append(int(row[0]) if has_id else i)
            X.append([float(v) for v in row[1 if has_id else 0:-1]])
            y.append(int(row[-1]))
    return cols, ids, X, y
