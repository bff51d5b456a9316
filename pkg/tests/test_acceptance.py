"""Acceptance gate: one test per criterion, each with its runtime budget.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import json
import random
import time
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np
import pytest

import inventory as inv
from e2e import common_flags, run_study
from oracles import (ABC_HEX, EMPTY_SHA256_B64, FEATURE_RULES, ORIGIN_TABLE, SRI_TRUTH_TABLE,
                     feature_fixture, naive_change_count, oracle_blocked, oracle_features,
                     oracle_top_domains)
from scriptwatch import classifier
from scriptwatch.cli import main
from scriptwatch.features import (compute_features, feature_columns, including_domains,
                                  top_domains)
from scriptwatch.filters import FilterList
from scriptwatch.integrity import summarize_digests
from scriptwatch.poller import BackRef, PoolEntry, read_jsonl
from scriptwatch.sri import (IntegrityMetadata, Verification, compute_digest,
                             generate_integrity_attr, parse_integrity_attr, verify)
from scriptwatch.urls import OriginPolicy, origin_of, parse_url, same_origin

DATA = Path(__file__).parent / "data"


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, \
                f"took {self.elapsed:.2f} s, budget {self.seconds} s"


# -- 1 -------------------------------------------------------------------------

def _oracle_origin(url: str, ignore_port: bool = False):
    p = urlsplit(url)
    scheme = p.scheme.lower()
    host = p.hostname.rstrip(".")
    if ignore_port:
        return scheme, host
    return scheme, host, p.port or {"http": 80, "https": 443}[scheme]


@pytest.mark.criterion(1, "origin algebra")
def test_origin_algebra():
    with Budget(1.0):
        assert len(ORIGIN_TABLE) == 50
        for a, b, std, ign in ORIGIN_TABLE:
            oa, ob = origin_of(parse_url(a)), origin_of(parse_url(b))
            assert same_origin(oa, ob) is std, (a, b)
            assert same_origin(oa, ob, OriginPolicy.IGNORE_PORT) is ign, (a, b)

        rnd = random.Random(1)
        hosts = ["a.com", "A.com", "b.com", "cdn.a.com", "a.com.", "10.0.0.1"]

        def gen():
            scheme = rnd.choice(["http", "https", "HTTP"])
            port = rnd.choice(["", ":80", ":443", ":8080", ":"])
            return f"{scheme}://{rnd.choice(hosts)}{port}/{rnd.randint(0, 9)}"
        urls = [gen() for _ in range(600)]
        origins = [origin_of(parse_url(u)) for u in urls]
        for _ in range(10_000):
            i, j, k = rnd.randrange(600), rnd.randrange(600), rnd.randrange(600)
            a, b, c = origins[i], origins[j], origins[k]
            for policy, ig in ((OriginPolicy.STANDARD, False), (OriginPolicy.IGNORE_PORT, True)):
                ab = same_origin(a, b, policy)
                assert same_origin(a, a, policy)
                assert ab == same_origin(b, a, policy)
                if ab and same_origin(b, c, policy):
                    assert same_origin(a, c, policy)
                assert ab == (_oracle_origin(urls[i], ig) == _oracle_origin(urls[j], ig))


# -- 2 -------------------------------------------------------------------------

@pytest.mark.criterion(2, "integrity model oracle")
def test_integrity_oracle():
    rnd = random.Random(2)
    digests = [compute_digest(bytes([i])) for i in range(12)]
    with Budget(5.0):
        checked = 0
        while checked < 10_000:
            alphabet = digests[:rnd.randint(1, 12)]
            p_bottom = rnd.random() * 0.5
            seq = [None if rnd.random() < p_bottom else rnd.choice(alphabet)
                   for _ in range(rnd.randint(1, 30))]
            if all(d is None for d in seq):
                continue
            checked += 1
            base = summarize_digests(0, seq)
            assert base.change_count == naive_change_count(seq)
            assert base.intact == (base.change_count == 0)
            perm = seq[:]
            rnd.shuffle(perm)
            assert summarize_digests(0, perm).change_count == base.change_count
            present = [d for d in seq if d is not None]
            dup = seq + [rnd.choice(present)]
            assert summarize_digests(0, dup).change_count == base.change_count
            bot = seq[:]
            bot.insert(rnd.randint(0, len(bot)), None)
            assert summarize_digests(0, bot).change_count == base.change_count


# -- 3 -------------------------------------------------------------------------

@pytest.mark.criterion(3, "fixture end-to-end")
def test_fixture_end_to_end(web, tmp_path):
    with Budget(30.0):
        ws = run_study(web, tmp_path)
        sums = read_jsonl(ws / "summaries.jsonl")
        hist = {}
        for s in sums:
            hist[s["change_count"]] = hist.get(s["change_count"], 0) + 1
        assert dict(sorted(hist.items())) == {0: 15, 9: 5} == inv.expected_histogram()
        rep = ws / "report"
        assert "share_changed: 25.0%\n" in (rep / "summary.txt").read_text()
        assert (rep / "changes_hist.csv").read_text() == inv.csv_text(
            [("change_count", "urls")] + [(c, {0: 15, 9: 5}.get(c, 0)) for c in range(10)])

        expected = {
            "domains_by_urls.csv": inv.csv_text(
                [("rank", "domain", "urls")] +
                [(i, d, c) for i, (d, c) in enumerate(inv.expected_urls_by_domain(), 1)]),
            "domains_by_inclusions.csv": inv.csv_text(
                [("rank", "domain", "inclusions")] +
                [(i, d, c) for i, (d, c) in enumerate(inv.expected_inclusions_by_domain(), 1)]),
        }
        for m in ("https", "qurl", "fragment", "jspath", "qdom", "blck"):
            cells = inv.expected_contingency(m)
            expected[f"contingency_{m}.csv"] = inv.csv_text(
                [(m, "intact", "changed"), (0, *cells[0]), (1, *cells[1])])
        for name, text in expected.items():
            assert (rep / name).read_text() == text, name

        first = {p.name: p.read_bytes() for p in sorted(rep.iterdir())}
        flags = [*common_flags(web, ws), "--filter-list", str(tmp_path / "filters.txt")]
        assert main(["analyze", *flags]) == 0
        assert {p.name: p.read_bytes() for p in sorted(rep.iterdir())} == first
        assert main(["report", *flags]) == 0
        assert {p.name: p.read_bytes() for p in sorted(rep.iterdir())} == first


# -- 4 -------------------------------------------------------------------------

@pytest.mark.criterion(4, "subresource integrity")
def test_sri_properties():
    rnd = random.Random(4)
    content_c, content_w = b"pinned", b"other"
    with Budget(5.0):
        assert compute_digest(b"", "sha256").b64 == EMPTY_SHA256_B64
        for alg, hexd in ABC_HEX.items():
            assert compute_digest(b"abc", alg).hex == hexd
        for _ in range(1000):
            content = rnd.randbytes(rnd.randint(0, 2048))
            for alg in ("sha256", "sha384", "sha512"):
                meta = parse_integrity_attr(generate_integrity_attr(content, alg))
                assert verify(content, meta) is Verification.PASS
                if content:
                    k = rnd.randrange(len(content))
                    flipped = bytearray(content)
                    flipped[k] ^= rnd.randint(1, 255)
                    assert verify(bytes(flipped), meta) is Verification.FAIL
        table_hits = 0
        for entries, want in SRI_TRUTH_TABLE:
            meta = [IntegrityMetadata(alg, compute_digest(content_c if ok else content_w, alg).b64)
                    for alg, ok in entries]
            assert verify(content_c, meta).value == want
            table_hits += 1
        assert table_hits == 8


# -- 5 -------------------------------------------------------------------------

@pytest.mark.criterion(5, "features and filter matching")
def test_features_and_filters():
    with Budget(5.0):
        assert len(feature_columns()) == 24
        rows = feature_fixture()
        assert len(rows) == 200
        entries = [PoolEntry(i, r["url"], compute_digest(b"x"), r["first_length"], None,
                             "javascript", [BackRef(d) for d in r["including"]])
                   for i, r in enumerate(rows, 1)]
        filters = FilterList.parse(FEATURE_RULES)
        top = top_domains(entries, 15)
        assert top == oracle_top_domains(rows, 15)
        for row, e in zip(rows, entries):
            got = compute_features(e, including_domains(e), filters, top, 15).as_list()
            assert len(got) == 24
            assert np.allclose(got, oracle_features(row, FEATURE_RULES, top, 15),
                               rtol=0, atol=1e-12), row["url"]

        table = [json.loads(x) for x in (DATA / "filter_truth_table.jsonl").read_text().splitlines()]
        assert len(table) == 100
        for row in table:
            assert oracle_blocked(row["rules"], row["url"], row["domains"]) is row["blocked"]
            got = FilterList.parse(row["rules"]).match(row["url"], row["domains"])
            assert got is row["blocked"], row


# -- 6 -------------------------------------------------------------------------

def _separable(n=2000, n1=600, seed=6):
    rng = np.random.default_rng(seed)
    y = np.array([1] * n1 + [0] * (n - n1))
    X = rng.uniform(0, 1, size=(n, 24))
    X[y == 1, :3] += 2.0  # class supports are disjoint in the first three columns
    return classifier.Dataset(X, y)


@pytest.mark.criterion(6, "classifier protocol")
def test_classifier_protocol():
    with Budget(120.0):
        sep = _separable()
        a = classifier.cross_validate(sep, folds=10, repetitions=100, max_depth=15, seed=0)
        assert len(a.folds) == 1000
        assert a.mean("accuracy") >= 0.99
        assert max(f.tree_depth for f in a.folds) <= 15
        b = classifier.cross_validate(sep, folds=10, repetitions=100, max_depth=15, seed=0)
        assert a.dumps() == b.dumps()

        rng = np.random.default_rng(66)
        X = rng.uniform(0, 1, size=(2000, 24))
        y = rng.permutation(np.array([0, 1] * 1000))
        noise = classifier.Dataset(X, y)
        r = classifier.cross_validate(noise, folds=10, repetitions=100, max_depth=15, seed=0)
        assert 0.45 <= r.mean("accuracy") <= 0.55
        assert max(f.tree_depth for f in r.folds) <= 15


# -- 7 -------------------------------------------------------------------------

@pytest.mark.criterion(7, "protocol conformance")
def test_protocol_conformance():
    rng = np.random.default_rng(7)
    with Budget(10.0):
        for _ in range(100):
            n = int(rng.integers(20, 400))
            n1 = int(rng.integers(10, n - 5))
            y = rng.permutation(np.array([1] * n1 + [0] * (n - n1)))
            d = classifier.Dataset(rng.normal(size=(n, 3)), y)
            seed = int(rng.integers(0, 2**31))
            s = classifier.undersample(d, seed)
            minority = min(n1, n - n1)
            assert s.class_counts() == (minority, minority)
            parts = classifier.kfold_indices(len(s), 10, np.random.default_rng(seed))
            flat = np.concatenate(parts)
            assert len(flat) == len(s) and len(set(flat.tolist())) == len(s)
            assert set(flat.tolist()) == set(range(len(s)))
            sizes = [len(p) for p in parts]
            assert max(sizes) - min(sizes) <= 1
            rep = classifier.cross_validate(d, folds=10, repetitions=1, max_depth=3, seed=seed)
            tests = [f.n_test for f in rep.folds]
            assert sum(tests) == 2 * minority and max(tests) - min(tests) <= 1
            assert all(f.n_train + f.n_test == 2 * minority for f in rep.folds)
