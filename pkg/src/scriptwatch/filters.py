"""Offline matching of URLs against Adblock Plus style block lists.

Supported network-rule syntax: ``||`` domain anchors, leading/trailing
``|`` anchors, ``*`` wildcards, the ``^`` separator class, plain
substrings, ``@@`` exceptions and the ``$domain=``, ``$match-case`` and
resource-type options (``script``, ``~image`` ...). A rule carrying any other
option never matches. Regular-expression rules (``/.../``) are counted as
unsupported; element-hiding rules and comments are ignored.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .urls import UrlError, parse_url

log = logging.getLogger(__name__)

RESOURCE_TYPES = frozenset({
    "script", "image", "stylesheet", "object", "xmlhttprequest",
    "object-subrequest", "subdocument", "ping", "media", "font", "other",
    "websocket", "webrtc", "document", "elemhide", "generichide",
    "genericblock", "background", "xbl", "dtd",
})
REQUEST_TYPE = "script"

_SEPARATOR = r"(?:[^\w.%\-]|$)"
_DOMAIN_ANCHOR = r"^[a-z][a-z0-9+.\-]*://(?:[^/?#]*\.)?"
_OPTION_TEXT = re.compile(r"^~?[a-z][a-z\-]*(=.*)?$")
_ANCHORED_HOST = re.compile(r"^\|\|([a-z0-9.\-]+)[\^/]")


class FilterSyntaxError(ValueError):
    pass


@dataclass
class FilterRule:
    raw: str
    pattern: str
    exception: bool = False
    match_case: bool = False
    include_types: frozenset = frozenset()
    exclude_types: frozenset = frozenset()
    include_domains: tuple = ()
    exclude_domains: tuple = ()
    supported: bool = True
    regex: Optional[re.Pattern] = field(default=None, repr=False)
    needle: str = ""  # longest literal run, for a cheap substring prefilter

    def applies_to_type(self, request_type: str = REQUEST_TYPE) -> bool:
        if self.include_types and request_type not in self.include_types:
            return False
        return request_type not in self.exclude_types

    def applies_to_context(self, domains: Iterable[str]) -> bool:
        domains = [d.lower() for d in domains]
        if not domains:
            return not self.include_domains
        for d in domains:
            if self.include_domains and not any(_domain_match(d, x) for x in self.include_domains):
                continue
            if any(_domain_match(d, x) for x in self.exclude_domains):
                continue
            return True
        return False

    def matches(self, url: str, domains: Iterable[str] = ()) -> bool:
        if not self.supported or self.regex is None:
            return False
        if not self.applies_to_type():
            return False
        if self.needle:
            hay = url if self.match_case else url.lower()
            if self.needle not in hay:
                return False
        if not self.regex.search(url):
            return False
        return self.applies_to_context(domains)


def _domain_match(domain: str, rule_domain: str) -> bool:
    return domain == rule_domain or domain.endswith("." + rule_domain)


def pattern_to_regex(pattern: str) -> str:
    """Translate a filter pattern (options already removed) to a regex."""
    out = []
    if pattern.startswith("||"):
        out.append(_DOMAIN_ANCHOR)
        pattern = pattern[2:]
    elif pattern.startswith("|"):
        out.append("^")
        pattern = pattern[1:]
    tail = ""
    if pattern.endswith("|"):
        tail = "$"
        pattern = pattern[:-1]
    for ch in pattern:
        if ch == "*":
            out.append(".*")
        elif ch == "^":
            out.append(_SEPARATOR)
        else:
            out.append(re.escape(ch))
    out.append(tail)
    return "".join(out)


def _longest_literal(pattern: str) -> str:
    core = pattern.lstrip("|").rstrip("|")
    runs = re.split(r"[*^|]", core)
    return max(runs, key=len) if runs else ""


def parse_rule(line: str) -> Optional[FilterRule]:
    """Parse one list line; ``None`` for comments and element-hiding rules.

    Raises FilterSyntaxError for lines that cannot be turned into a rule.
    """
    text = line.strip()
    if not text or text.startswith(("!", "[")):
        return None
    if any(tok in text for tok in ("##", "#@#", "#?#", "#$#")):
        return None
    rule = FilterRule(raw=text, pattern="")
    if text.startswith("@@"):
        rule.exception = True
        text = text[2:]

    options_text = None
    if "$" in text:
        head, _, maybe = text.rpartition("$")
        opts = maybe.split(",")
        if maybe and all(_OPTION_TEXT.match(o.lower()) for o in opts):
            text, options_text = head, opts
    if options_text:
        include_t, exclude_t = set(), set()
        for opt in options_text:
            name, _, value = opt.partition("=")
            neg = name.startswith("~")
            bare = name.lstrip("~").lower()
            if bare in RESOURCE_TYPES:
                (exclude_t if neg else include_t).add(bare)
            elif bare == "match-case" and not neg:
                rule.match_case = True
            elif bare == "domain" and value:
                inc, exc = [], []
                for d in value.lower().split("|"):
                    if d.startswith("~"):
                        exc.append(d[1:])
                    elif d:
                        inc.append(d)
                rule.include_domains, rule.exclude_domains = tuple(inc), tuple(exc)
            else:
                rule.supported = False
        rule.include_types = frozenset(include_t)
        rule.exclude_types = frozenset(exclude_t)

    if len(text) > 1 and text.startswith("/") and text.endswith("/"):
        rule.supported = False
        rule.pattern = text
        return rule
    rule.pattern = text
    flags = 0 if rule.match_case else re.IGNORECASE
    try:
        rule.regex = re.compile(pattern_to_regex(text), flags)
    except re.error as exc:  # pragma: no cover - escaping makes this unlikely
        raise FilterSyntaxError(f"{line!r}: {exc}") from exc
    needle = _longest_literal(text)
    rule.needle = needle if rule.match_case else needle.lower()
    return rule


@dataclass
class FilterList:
    rules: list = field(default_factory=list)
    exceptions: list = field(default_factory=list)
    ignored: int = 0  # comments and element-hiding rules
    unparseable: int = 0
    unsupported: int = 0

    def __post_init__(self):
        self._reindex()

    def _reindex(self) -> None:
        self._by_host: dict[str, list] = {}
        self._generic: list = []
        for rule in self.rules:
            m = _ANCHORED_HOST.match(rule.pattern.lower())
            if m and rule.supported:
                self._by_host.setdefault(m.group(1), []).append(rule)
            else:
                self._generic.append(rule)

    @classmethod
    def parse(cls, lines: Iterable[str]) -> "FilterList":
        fl = cls()
        for line in lines:
            try:
                rule = parse_rule(line)
            except FilterSyntaxError as exc:
                log.debug("skipping filter line: %s", exc)
                fl.unparseable += 1
                continue
            if rule is None:
                fl.ignored += 1
                continue
            if not rule.supported:
                fl.unsupported += 1
            (fl.exceptions if rule.exception else fl.rules).append(rule)
        fl._reindex()
        return fl

    @classmethod
    def from_file(cls, path: Path) -> "FilterList":
        with open(path, encoding="utf-8", errors="replace") as fh:
            return cls.parse(fh)

    def _candidates(self, url: str) -> Iterable[FilterRule]:
        try:
            host = parse_url(url).host
        except UrlError:
            host = ""
        labels = host.split(".") if host else []
        for i in range(len(labels)):
            yield from self._by_host.get(".".join(labels[i:]), ())
        yield from self._generic

    def blocking_rule(self, url: str, domains: Iterable[str] = ()) -> Optional[FilterRule]:
        """First block rule that matches, or None when unmatched or excepted."""
        domains = list(domains)
        hit = next((r for r in self._candidates(url) if r.matches(url, domains)), None)
        if hit is None:
            return None
        if any(e.matches(url, domains) for e in self.exceptions):
            return None
        return hit

    def match(self, url: str, domains: Iterable[str] = ()) -> bool:
        return self.blocking_rule(url, domains) is not None


def match_filters(url: str, filters: FilterList, domains: Iterable[str] = ()) -> bool:
    """True iff a block rule matches ``url`` and no exception rule does.

    ``domains`` are the including pages' domains, consulted by ``$domain=``.
    """
    return filters.match(url, domains)
