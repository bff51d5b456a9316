"""Workspace-based stages: crawl -> poll -> analyze -> train, plus audit.

Stages communicate only through files in the workspace directory, so each
one can be rerun or replayed on its own.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import filelock

from . import classifier
from .domains import NOT_APPLICABLE, second_level_domain
from .extract import classify_refs, extract_script_tags
from .features import (DEFAULT_TOP_K, build_feature_rows, dichotomous_metrics,
                       compute_features, including_domains, read_feature_matrix,
                       top_domains, write_extended_matrix, write_feature_matrix)
from .fetch import FetchConfig, Fetcher, FetchResult
from .filters import FilterList
from .integrity import EmptySeriesError, IntegritySummary, label, summarize
from .poller import (PollLog, build_pool, poll_round, read_jsonl, read_pool,
                     series_by_url, write_jsonl, write_pool)
from .report import emit_report
from .sri import Verification, generate_integrity_attr, parse_integrity_attr, verify
from .urls import UrlError, parse_url

log = logging.getLogger(__name__)


class DataError(RuntimeError):
    """Missing or inconsistent workspace data (exit code 2)."""


class NetworkError(RuntimeError):
    """A fetch the command cannot do without failed (exit code 3)."""


@dataclass
class RunConfig:
    workspace: Path = Path("workspace")
    seeds: Optional[Path] = None
    fetch: FetchConfig = field(default_factory=FetchConfig)
    poll_interval_hours: float = 24.0
    crawl_attempts: int = 2
    top_k: int = DEFAULT_TOP_K
    filter_list: Optional[Path] = None
    max_depth: int = 15
    folds: int = 10
    repetitions: int = 100
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        self.workspace = Path(self.workspace)
        for name in ("poll_interval_hours", "crawl_attempts", "top_k", "max_depth",
                     "folds", "repetitions", "min_leaf"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        """Build from flat keys; fetch settings may sit at top level or under "fetch"."""
        fetch_names = {f.name for f in fields(FetchConfig)}
        aliases = {"timeout": "timeout_seconds", "host_delay": "host_delay_seconds"}
        fetch_kw = dict(data.get("fetch", {}))
        run_kw = {}
        for key, value in data.items():
            key = key.replace("-", "_")
            key = aliases.get(key, key)
            if key == "fetch":
                continue
            if key in fetch_names:
                fetch_kw[key] = value
            elif key in {f.name for f in fields(cls)}:
                run_kw[key] = value
            else:
                raise ValueError(f"unknown config key {key!r}")
        for p in ("workspace", "seeds", "filter_list"):
            if run_kw.get(p) is not None:
                run_kw[p] = Path(run_kw[p])
        return cls(fetch=FetchConfig(**fetch_kw), **run_kw)

    # workspace layout
    def path(self, name: str) -> Path:
        return self.workspace / name

    @property
    def pool_path(self) -> Path:
        return self.path("pool.jsonl")

    @property
    def poll_log(self) -> PollLog:
        return PollLog(self.path("poll.jsonl"))


def workspace_lock(config: RunConfig) -> filelock.FileLock:
    config.workspace.mkdir(parents=True, exist_ok=True)
    return filelock.FileLock(str(config.path(".lock")), timeout=0)


class WorkspaceBusy(DataError):
    pass


def locked(fn):
    def wrapper(config: RunConfig, *args, **kwargs):
        lock = workspace_lock(config)
        try:
            lock.acquire()
        except filelock.Timeout:
            raise WorkspaceBusy(
                f"another scriptwatch command holds {config.path('.lock')}; "
                "refusing to run concurrently") from None
        try:
            return fn(config, *args, **kwargs)
        finally:
            lock.release()
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise DataError(f"missing {what}: {path}")
    return path


def read_seeds(path: Path) -> list[str]:
    """Seed domains, one per line, normalized to second-level domains."""
    _require(path, "seeds file")
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        host = line.split("://", 1)[-1].split("/", 1)[0].lower()
        sld = second_level_domain(host)
        out.append(host if sld == NOT_APPLICABLE else sld)
    seeds = list(dict.fromkeys(out))
    if not seeds:
        raise DataError(f"seeds file {path} lists no domains")
    return seeds


def load_filters(config: RunConfig) -> FilterList:
    if config.filter_list is None:
        log.warning("no filter list configured; blck will be 0 for every URL")
        return FilterList()
    return FilterList.from_file(_require(config.filter_list, "filter list"))


# -- crawl --------------------------------------------------------------------

def fetch_page(fetcher: Fetcher, url: str, attempts: int) -> FetchResult:
    res = None
    for i in range(attempts):
        res = fetcher.get(url)
        if res.ok:
            break
        log.info("page %s attempt %d failed: %s", url, i + 1, res.outcome)
    return res


@locked
def cmd_crawl(config: RunConfig) -> dict:
    if config.seeds is None:
        raise DataError("no seeds file given (--seeds)")
    seeds = read_seeds(config.seeds)
    if config.poll_log.rounds():
        raise DataError(f"{config.poll_log.path} already holds poll rounds; "
                        "use a fresh workspace for a new crawl")
    fetcher = Fetcher(replace(config.fetch, retries=0))
    try:
        with ThreadPoolExecutor(max_workers=config.fetch.workers) as pool:
            pages = list(pool.map(
                lambda s: fetch_page(fetcher, f"http://{s}/", config.crawl_attempts), seeds))
        crawl_rows, refs = [], []
        for seed, res in zip(seeds, pages):
            row = {"seed": seed, "requested": f"http://{seed}/", "status": res.outcome,
                   "final_url": res.final_url, "scripts": 0, "cross_origin": 0}
            if res.ok:
                try:
                    page_url = parse_url(res.final_url)
                    page_refs = classify_refs(page_url, extract_script_tags(res.body))
                except UrlError as exc:
                    row["status"] = f"bad_final_url: {exc}"
                    page_refs = []
                cross = [r for r in page_refs if r.cross_origin]
                row["scripts"], row["cross_origin"] = len(page_refs), len(cross)
                refs.extend(cross)
            crawl_rows.append(row)
        reachable = sum(1 for r in crawl_rows if r["status"] == "ok")
        if reachable == 0:
            raise NetworkError(f"none of the {len(seeds)} seeds could be fetched")
        pool_fetcher = Fetcher(config.fetch)
        try:
            entries, rejections = build_pool(refs, pool_fetcher)
        finally:
            pool_fetcher.close()
    finally:
        fetcher.close()
    write_jsonl(config.path("crawl.jsonl"), crawl_rows)
    write_pool(config.pool_path, entries)
    write_jsonl(config.path("rejections.jsonl"), (r.to_json() for r in rejections))
    if not entries:
        log.warning("crawl finished with an empty polling pool")
    return {"seeds": len(seeds), "reachable": reachable, "cross_origin_refs": len(refs),
            "pool": len(entries), "rejected": len(rejections)}


# -- poll ---------------------------------------------------------------------

@locked
def cmd_poll(config: RunConfig) -> dict:
    entries = read_pool(_require(config.pool_path, "pool manifest (run crawl first)"))
    if not entries:
        raise DataError("polling pool is empty")
    plog = config.poll_log
    last = plog.last_timestamp()
    interval = config.poll_interval_hours * 3600
    if last is not None and time.time() - last < 0.5 * interval:
        log.warning("previous round ended %.0f s ago (interval %.0f s)",
                    time.time() - last, interval)
    t = plog.next_round()
    with Fetcher(config.fetch) as fetcher:
        records = poll_round(entries, t, fetcher, plog)
    ok = sum(1 for r in records if not r.is_bottom)
    return {"round": t, "records": len(records), "ok": ok, "bottom": len(records) - ok}


# -- analyze / report ---------------------------------------------------------

def _load_run(config: RunConfig):
    entries = read_pool(_require(config.pool_path, "pool manifest"))
    _require(config.poll_log.path, "poll log (run poll first)")
    records = config.poll_log.records()
    if not records:
        raise DataError(f"poll log {config.poll_log.path} is empty")
    rounds = len({r.t for r in records})
    return entries, records, rounds


def summarize_run(entries, records) -> list[IntegritySummary]:
    series = series_by_url(records)
    summaries = []
    for e in sorted(entries, key=lambda e: e.url_id):
        if e.url_id not in series:
            log.warning("url_id %d never polled", e.url_id)
            continue
        try:
            summaries.append(summarize(series[e.url_id]))
        except EmptySeriesError as exc:
            log.warning("%s; left out of the analysis", exc)
    return summaries


def _metrics(entries, summaries, filters, k):
    ids = {s.url_id for s in summaries}
    top = top_domains(entries, k)
    out = {}
    for e in entries:
        if e.url_id in ids:
            fv = compute_features(e, including_domains(e), filters, top, k)
            out[e.url_id] = dichotomous_metrics(e, fv)
    return out


def _report(config, entries, summaries, rounds, filters) -> list[Path]:
    notes = [] if config.filter_list else ["no filter list configured; blck is 0 throughout"]
    return emit_report(config.path("report"), entries, summaries,
                       _metrics(entries, summaries, filters, config.top_k),
                       rounds, config.top_k, notes=notes)


@locked
def cmd_analyze(config: RunConfig) -> dict:
    entries, records, rounds = _load_run(config)
    summaries = summarize_run(entries, records)
    if not summaries:
        raise DataError("no URL has a successful poll")
    write_jsonl(config.path("summaries.jsonl"), (s.to_json() for s in summaries))
    filters = load_filters(config)
    labels = {s.url_id: label(s) for s in summaries}
    rows = build_feature_rows(entries, labels, filters, config.top_k)
    write_feature_matrix(config.path("features.csv"), rows, config.top_k)
    write_extended_matrix(config.path("features_extended.csv"), rows)
    written = _report(config, entries, summaries, rounds, filters)
    changed = sum(labels.values())
    return {"summarized": len(summaries), "changed": changed, "rounds": rounds,
            "report_files": len(written)}


@locked
def cmd_report(config: RunConfig) -> dict:
    entries, _, rounds = _load_run(config)
    sums = [IntegritySummary.from_json(d)
            for d in read_jsonl(_require(config.path("summaries.jsonl"),
                                         "integrity summaries (run analyze first)"))]
    if not sums:
        raise DataError("summaries file is empty")
    written = _report(config, entries, sums, rounds, load_filters(config))
    return {"report_files": len(written)}


# -- train ----------------------------------------------------------------------

@locked
def cmd_train(config: RunConfig) -> dict:
    cols, _, X, y = read_feature_matrix(_require(config.path("features.csv"),
                                                 "feature matrix (run analyze first)"))
    d = classifier.Dataset(X, y, cols) if X else None
    if d is None or 0 in d.class_counts():
        raise DataError("training needs at least one changed and one intact script "
                        "in the feature matrix")
    if 2 * min(d.class_counts()) < config.folds:
        raise DataError(f"only {min(d.class_counts())} rows in the minority class; "
                        f"too few for {config.folds}-fold cross-validation")
    report = classifier.cross_validate(d, folds=config.folds, repetitions=config.repetitions,
                                       max_depth=config.max_depth, seed=config.seed,
                                       min_leaf=config.min_leaf)
    out = config.path("train")
    report.write(out)
    tree = classifier.train(classifier.undersample(d, config.seed),
                            max_depth=config.max_depth, min_leaf=config.min_leaf)
    (out / "tree.txt").write_text(tree.dumps(), encoding="utf-8")
    return {"folds": len(report.folds), "mean_accuracy": report.mean("accuracy"),
            "std_accuracy": report.std("accuracy")}


# -- audit ----------------------------------------------------------------------

@dataclass
class AuditItem:
    script_url: str
    findings: list
    verification: Optional[str] = None
    suggested_integrity: Optional[str] = None
    fetch_status: str = "ok"

    def to_json(self) -> dict:
        return dict(self.__dict__)


def cmd_audit(url: str, fetch_config: Optional[FetchConfig] = None) -> list[AuditItem]:
    """Check every cross-origin script on one page for SRI protection."""
    with Fetcher(fetch_config) as fetcher:
        page = fetcher.get(url)
        if not page.ok:
            raise NetworkError(f"could not fetch {url}: {page.outcome}")
        refs = [r for r in classify_refs(parse_url(page.final_url),
                                         extract_script_tags(page.body))
                if r.cross_origin]
        urls = [r.script_url.serialize() for r in refs]
        bodies = fetcher.get_many(urls)
    items = []
    for ref, script_url, res in zip(refs, urls, bodies):
        item = AuditItem(script_url=script_url, findings=[])
        raw = ref.tag.attributes.get("integrity")
        if not ref.tag.has("crossorigin"):
            item.findings.append("missing crossorigin")
        if not res.ok:
            item.fetch_status = res.outcome
            item.findings.append(f"script fetch failed: {res.outcome}")
            if raw is None:
                item.findings.insert(0, "missing integrity")
            items.append(item)
            continue
        if raw is None:
            item.findings.insert(0, "missing integrity")
            item.suggested_integrity = generate_integrity_attr(res.body, "sha384")
        else:
            meta = parse_integrity_attr(raw)
            result = verify(res.body, meta)
            item.verification = result.value
            if result is Verification.FAIL:
                item.findings.insert(0, "verification failed")
            elif result is Verification.NO_METADATA:
                item.findings.insert(0, "integrity attribute has no usable hash")
                item.suggested_integrity = generate_integrity_attr(res.body, "sha384")
        items.append(item)
    return items
