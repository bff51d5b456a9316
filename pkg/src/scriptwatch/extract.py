"""Locate ``<script src>`` tags in raw HTML and classify their origin.

This is a forgiving tokenizer, not an HTML tree builder: start tags are
found case-insensitively anywhere in the byte stream (comments, CDATA and
script bodies included) and their attributes are read up to the closing
``>``.
"""

from __future__ import annotations

import html
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .urls import (OriginPolicy, ParsedUrl, UrlError, origin_of,
                   resolve_reference, same_origin)

log = logging.getLogger(__name__)

TRACKED_ATTRIBUTES = ("async", "defer", "crossorigin", "integrity")

_SCRIPT_OPEN = re.compile(rb"<script(?=[\s/>])", re.IGNORECASE)
_ATTR = re.compile(
    rb"""[\s/]*(?P<name>[^\s"'>/=]+)"""
    rb"""(?:\s*=\s*(?:"(?P<dq>[^"]*)"|'(?P<sq>[^']*)'|(?P<uq>[^\s>]*)))?""",
)
_WS = b" \t\n\r\f"


@dataclass(frozen=True)
class ScriptTag:
    raw_src: str
    attributes: dict = field(hash=False)  # name -> value or None
    byte_offset: int

    def has(self, name: str) -> bool:
        return name in self.attributes


@dataclass(frozen=True)
class ScriptRef:
    page_url: ParsedUrl
    script_url: ParsedUrl
    cross_origin: bool
    tag: ScriptTag


@dataclass(frozen=True)
class DroppedTag:
    tag: ScriptTag
    reason: str


def _decode(value: bytes) -> str:
    return html.unescape(value.decode("utf-8", errors="replace"))


def _parse_attributes(doc: bytes, pos: int) -> tuple[dict, int]:
    """Read attributes starting at ``pos``; return them and the end offset."""
    attrs: dict[str, Optional[str]] = {}
    n = len(doc)
    while pos < n:
        while pos < n and doc[pos] in _WS + b"/":
            pos += 1
        if pos >= n:
            break
        if doc[pos] == ord(">"):
            return attrs, pos + 1
        m = _ATTR.match(doc, pos)
        if not m or m.end() == pos:
            pos += 1  # stray quote or '=' - skip it
            continue
        name = m.group("name").decode("utf-8", errors="replace").lower()
        raw = next((m.group(g) for g in ("dq", "sq", "uq")
                    if m.group(g) is not None), None)
        if name not in attrs:
            attrs[name] = None if raw is None else _decode(raw)
        pos = m.end()
    return attrs, n


def extract_script_tags(doc: bytes) -> list[ScriptTag]:
    """Return every ``<script>`` element carrying a non-empty ``src``."""
    tags = []
    pos = 0
    while True:
        m = _SCRIPT_OPEN.search(doc, pos)
        if not m:
            break
        attrs, end = _parse_attributes(doc, m.end())
        src = attrs.get("src")
        if src is not None and src.strip():
            tags.append(ScriptTag(raw_src=src, attributes=attrs,
                                  byte_offset=m.start()))
        pos = max(end, m.end())
    return tags


def classify_refs(page: ParsedUrl, tags: Iterable[ScriptTag],
                  dropped: Optional[list] = None) -> list[ScriptRef]:
    """Resolve each tag against the visited page and flag cross-origin ones.

    Tags whose source cannot be resolved (or is not http/https) are left out;
    pass a list as ``dropped`` to collect them with a reason.
    """
    page_origin = origin_of(page)
    refs = []
    for tag in tags:
        src = tag.raw_src.strip(" \t\n\r\f")
        try:
            url = resolve_reference(page, src)
            origin = origin_of(url)
        except UrlError as exc:
            log.debug("dropping script src %r: %s", tag.raw_src, exc)
            if dropped is not None:
                dropped.append(DroppedTag(tag, str(exc)))
            continue
        cross = not same_origin(page_origin, origin, OriginPolicy.STANDARD)
        refs.append(ScriptRef(page_url=page, script_url=url,
                              cross_origin=cross, tag=tag))
    return refs


def prevalence_from_sets(attr_sets_by_url: dict, pool: Sequence[str],
                         attributes: Sequence[str] = TRACKED_ATTRIBUTES) -> dict:
    """Percentage of pool URLs with at least one back-reference per attribute.

    ``attr_sets_by_url`` maps a URL string to an iterable of attribute-name
    collections, one per including tag.
    """
    if not pool:
        raise ValueError("pool is empty")
    urls = list(dict.fromkeys(pool))
    out = {}
    for attr in attributes:
        hits = sum(1 for u in urls
                   if any(attr in s for s in attr_sets_by_url.get(u, ())))
        out[attr] = 100.0 * hits / len(urls)
    return out


def attribute_prevalence(refs: Iterable[ScriptRef], pool: Sequence[str]) -> dict:
    by_url: dict[str, list] = {}
    for ref in refs:
        by_url.setdefault(ref.script_url.serialize(), []).append(
            set(ref.tag.attributes))
    return prevalence_from_sets(by_url, pool)
