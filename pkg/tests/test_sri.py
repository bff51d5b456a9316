import base64
import hashlib

import pytest
from hypothesis import given, strategies as st

from scriptwatch.sri import (Digest, IntegrityMetadata, Verification, compute_digest,
                             generate_integrity_attr, parse_integrity_attr, verify)

from oracles import ABC_HEX, EMPTY_SHA256_B64, SRI_TRUTH_TABLE

CONTENT = b"console.log('pinned');\n"
OTHER = b"console.log('swapped');\n"


def entry(alg: str, content: bytes) -> IntegrityMetadata:
    return IntegrityMetadata(alg, base64.b64encode(hashlib.new(alg, content).digest()).decode())


def test_empty_sha256_vector():
    assert compute_digest(b"", "sha256").b64 == EMPTY_SHA256_B64
    assert generate_integrity_attr(b"", "sha256") == "sha256-" + EMPTY_SHA256_B64


@pytest.mark.parametrize("alg", sorted(ABC_HEX))
def test_abc_vectors(alg):
    assert compute_digest(b"abc", alg).hex == ABC_HEX[alg]


def test_digest_length_is_checked():
    with pytest.raises(ValueError):
        Digest("sha256", b"\0" * 20)
    assert Digest.from_hex("sha1", ABC_HEX["sha1"]).value == bytes.fromhex(ABC_HEX["sha1"])
    with pytest.raises(ValueError):
        compute_digest(b"", "md5")


@pytest.mark.parametrize("entries,expected", SRI_TRUTH_TABLE)
def test_strength_truth_table(entries, expected):
    meta = [entry(alg, CONTENT if ok else OTHER) for alg, ok in entries]
    assert verify(CONTENT, meta).value == expected


def test_parse_examples():
    good = generate_integrity_attr(CONTENT, "sha256")
    (m,) = parse_integrity_attr(good)
    assert m.algorithm == "sha256" and len(m.digest) == 32
    assert [x.algorithm for x in parse_integrity_attr(f"sha999-AAAA {good}")] == ["sha256"]
    assert parse_integrity_attr("") == []
    assert parse_integrity_attr("sha256-tooshort sha384 md5-abc") == []


def test_parse_options_and_case():
    b64 = compute_digest(CONTENT, "sha384").b64
    (m,) = parse_integrity_attr(f"  SHA384-{b64}?ct=application/javascript\n")
    assert m.algorithm == "sha384" and m.options == "ct=application/javascript"
    assert verify(CONTENT, [m]) is Verification.PASS


def test_unpadded_and_urlsafe_digests_decode():
    raw = hashlib.sha256(b"\xfb\xff" * 7).digest()
    std = base64.b64encode(raw).decode()
    for text in (std.rstrip("="), base64.urlsafe_b64encode(raw).decode()):
        (m,) = parse_integrity_attr("sha256-" + text)
        assert m.digest == raw


def test_only_sri_algorithms_generate():
    with pytest.raises(ValueError):
        generate_integrity_attr(CONTENT, "sha1")
    assert parse_integrity_attr("sha1-" + compute_digest(CONTENT, "sha1").b64) == []


def test_no_metadata():
    assert verify(CONTENT, []) is Verification.NO_METADATA


@given(st.binary(max_size=512), st.sampled_from(["sha256", "sha384", "sha512"]))
def test_round_trip(content, alg):
    assert verify(content, parse_integrity_attr(generate_integrity_attr(content, alg))) \
        is Verification.PASS


@given(st.binary(min_size=1, max_size=256), st.data())
def test_byte_flip_fails(content, data):
    i = data.draw(st.integers(0, len(content) - 1))
    flip = data.draw(st.integers(1, 255))
    mutated = content[:i] + bytes([content[i] ^ flip]) + content[i + 1:]
    meta = parse_integrity_attr(generate_integrity_attr(content, "sha384"))
    assert verify(mutated, meta) is Verification.FAIL


@given(st.text(max_size=200))
def test_parse_never_raises(text):
    for m in parse_integrity_attr(text):
        assert m.algorithm in ("sha256", "sha384", "sha512")
