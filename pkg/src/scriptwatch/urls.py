"""URL parsing, origin derivation and same-origin comparison.

Only the subset of URL syntax needed for script inclusion on the web is
handled: ``scheme://[userinfo@]host[:port]/path?query#fragment`` with a
domain-name or IPv4 host. Other schemes parse into path-only URLs and are
flagged as non-fetchable.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from typing import Optional

FETCHABLE_SCHEMES = frozenset({"http", "https"})
DEFAULT_PORTS = {"http": 80, "https": 443}

_SCHEME_RE = re.compile(r"^([A-Za-z][A-Za-z0-9+.\-]*):")
_HOST_CHARS_RE = re.compile(r"^[a-z0-9_~!$&'()*+,;=%\-]+$")
_IPV4_RE = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$")


class UrlError(ValueError):
    """Raised for URLs that cannot be parsed or resolved.

    ``field`` names the offending component (scheme, host, port, ...).
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedScheme(UrlError):
    def __init__(self, scheme: str):
        super().__init__("scheme", f"unsupported scheme {scheme!r}")


class OriginPolicy(enum.Enum):
    STANDARD = "standard"
    IGNORE_PORT = "ignore-port"


@dataclass(frozen=True)
class ParsedUrl:
    scheme: str
    host: str
    path: str = ""
    port: Optional[int] = None
    userinfo: Optional[str] = None
    query: Optional[str] = None
    fragment: Optional[str] = None
    has_authority: bool = True

    @property
    def fetchable(self) -> bool:
        return self.scheme in FETCHABLE_SCHEMES and self.has_authority

    @property
    def is_ipv4(self) -> bool:
        return is_ipv4(self.host)

    def serialize(self) -> str:
        out = [self.scheme, ":"]
        if self.has_authority:
            out.append("//")
            if self.userinfo is not None:
                out += [self.userinfo, "@"]
            out.append(self.host)
            if self.port is not None:
                out += [":", str(self.port)]
        out.append(self.path)
        if self.query is not None:
            out += ["?", self.query]
        if self.fragment is not None:
            out += ["#", self.fragment]
        return "".join(out)

    def __str__(self) -> str:
        return self.serialize()


@dataclass(frozen=True, order=True)
class Origin:
    scheme: str
    host: str
    port: int


def is_ipv4(host: str) -> bool:
    m = _IPV4_RE.match(host)
    return bool(m) and all(int(octet) <= 255 for octet in m.groups())


def _split_tail(rest: str) -> tuple[str, Optional[str], Optional[str]]:
    fragment = None
    if "#" in rest:
        rest, fragment = rest.split("#", 1)
    query = None
    if "?" in rest:
        rest, query = rest.split("?", 1)
    return rest, query, fragment


def _parse_host(raw: str) -> str:
    if raw.startswith("["):
        raise UrlError("host", "IPv6 literals are not supported")
    host = raw.lower()
    if host.endswith("."):
        host = host[:-1]
    if not host:
        raise UrlError("host", "empty host")
    labels = host.split(".")
    if any(not label for label in labels):
        raise UrlError("host", f"empty label in {raw!r}")
    if not _HOST_CHARS_RE.match(host.replace(".", "")):
        raise UrlError("host", f"illegal character in {raw!r}")
    return host


def _parse_port(raw: str) -> Optional[int]:
    if raw == "":
        return None
    if not raw.isascii() or not raw.isdigit():
        raise UrlError("port", f"non-numeric port {raw!r}")
    port = int(raw)
    if not 1 <= port <= 65535:
        raise UrlError("port", f"port {port} outside 1-65535")
    return port


def parse_url(raw: str) -> ParsedUrl:
    """Parse an absolute URL; scheme and host come back lowercased."""
    if not raw:
        raise UrlError("url", "empty input")
    m = _SCHEME_RE.match(raw)
    if not m:
        raise UrlError("scheme", f"no scheme in {raw!r}")
    scheme = m.group(1).lower()
    rest = raw[m.end():]

    if not rest.startswith("//"):
        if scheme in FETCHABLE_SCHEMES:
            raise UrlError("host", f"{scheme} URL without authority")
        path, query, fragment = _split_tail(rest)
        return ParsedUrl(scheme=scheme, host="", path=path, query=query,
                         fragment=fragment, has_authority=False)

    rest = rest[2:]
    cut = len(rest)
    for sep in "/?#":
        i = rest.find(sep)
        if i != -1:
            cut = min(cut, i)
    authority, tail = rest[:cut], rest[cut:]
    path, query, fragment = _split_tail(tail)

    userinfo = None
    if "@" in authority:
        userinfo, authority = authority.rsplit("@", 1)
    hostport = authority
    port_raw = ""
    if not hostport.startswith("[") and ":" in hostport:
        hostport, port_raw = hostport.rsplit(":", 1)
    host = _parse_host(hostport)
    port = _parse_port(port_raw)
    return ParsedUrl(scheme=scheme, host=host, path=path, port=port,
                     userinfo=userinfo, query=query, fragment=fragment)


def origin_of(u: ParsedUrl) -> Origin:
    if not u.fetchable:
        raise UnsupportedScheme(u.scheme)
    port = u.port if u.port is not None else DEFAULT_PORTS[u.scheme]
    return Origin(u.scheme, u.host, port)


def same_origin(a: Origin, b: Origin,
                policy: OriginPolicy = OriginPolicy.STANDARD) -> bool:
    if policy is OriginPolicy.IGNORE_PORT:
        return a.scheme == b.scheme and a.host == b.host
    return a == b


def remove_dot_segments(path: str) -> str:
    out: list[str] = []
    while path:
        if path.startswith("../"):
            path = path[3:]
        elif path.startswith("./"):
            path = path[2:]
        elif path.startswith("/./"):
            path = path[2:]
        elif path == "/.":
            path = "/"
        elif path.startswith("/../"):
            path = path[3:]
            if out:
                out.pop()
        elif path == "/..":
            path = "/"
            if out:
                out.pop()
        elif path in (".", ".."):
            path = ""
        else:
            start = 1 if path.startswith("/") else 0
            i = path.find("/", start)
            if i == -1:
                i = len(path)
            out.append(path[:i])
            path = path[i:]
    return "".join(out)


def _merge(base: ParsedUrl, ref_path: str) -> str:
    if base.has_authority and base.path == "":
        return "/" + ref_path
    i = base.path.rfind("/")
    return base.path[: i + 1] + ref_path


def resolve_reference(base: ParsedUrl, reference: str) -> ParsedUrl:
    """Resolve ``reference`` against an absolute ``base`` (RFC 3986 5.2)."""
    if not reference:
        raise UrlError("reference", "empty reference")
    if _SCHEME_RE.match(reference):
        ref = parse_url(reference)
    elif reference.startswith("//"):
        ref = parse_url(f"{base.scheme}:{reference}")
    else:
        ref = None
    if ref is not None:
        if ref.has_authority:
            return replace(ref, path=remove_dot_segments(ref.path))
        return ref

    path, query, fragment = _split_tail(reference)
    if path == "":
        new_path = base.path
        if query is None:
            query = base.query
    elif path.startswith("/"):
        new_path = remove_dot_segments(path)
    else:
        new_path = remove_dot_segments(_merge(base, path))
    return ParsedUrl(scheme=base.scheme, host=base.host, path=new_path,
                     port=base.port, userinfo=base.userinfo, query=query,
                     fragment=fragment, has_authority=base.has_authority)
