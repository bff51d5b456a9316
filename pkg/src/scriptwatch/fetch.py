"""HTTP GETs with error classification, retries and per-host politeness."""

from __future__ import annotations

import http.cookiejar
import logging
import socket
import ssl
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import httpx

log = logging.getLogger(__name__)

DEFAULT_USER_AGENT = "scriptwatch/0.1 (+temporal integrity measurement)"

DNS, CONNECT, TIMEOUT, TLS = "dns", "connect", "timeout", "tls"
EMPTY_BODY, READ_ERROR = "empty_body", "read_error"
TRANSIENT = frozenset({DNS, CONNECT, TIMEOUT})


def http_status_class(code: int) -> str:
    return f"http_{code}"


@dataclass(frozen=True)
class FetchConfig:
    timeout_seconds: float = 30.0
    retries: int = 1
    max_redirects: int = 10
    workers: int = 16
    per_host_cap: int = 4
    host_delay_seconds: float = 0.1
    user_agent: str = DEFAULT_USER_AGENT
    proxy: Optional[str] = None
    trust_env: bool = True

    def __post_init__(self):
        for name in ("timeout_seconds", "workers", "per_host_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.retries < 0 or self.max_redirects < 0 or self.host_delay_seconds < 0:
            raise ValueError("retries, max_redirects and host_delay_seconds must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FetchResult:
    url: str
    error: Optional[str] = None  # error class, None on a completed exchange
    status_code: Optional[int] = None
    body: bytes = b""
    content_type: Optional[str] = None
    final_url: Optional[str] = None
    attempts: int = 1
    timestamp: float = field(default_factory=time.time)

    @property
    def outcome(self) -> str:
        """``"ok"`` for a non-empty 200 response, else the error class."""
        if self.error is not None:
            return self.error
        if self.status_code != 200:
            return http_status_class(self.status_code)
        if not self.body:
            return EMPTY_BODY
        return "ok"

    @property
    def ok(self) -> bool:
        return self.outcome == "ok"


def classify_exception(exc: BaseException) -> str:
    if isinstance(exc, httpx.TimeoutException) or isinstance(exc, TimeoutError):
        return TIMEOUT
    seen = set()
    cur: Optional[BaseException] = exc
    while cur is not None and id(cur) not in seen:
        seen.add(id(cur))
        if isinstance(cur, socket.gaierror):
            return DNS
        if isinstance(cur, (ssl.SSLError, ssl.CertificateError)):
            return TLS
        if isinstance(cur, (socket.timeout, TimeoutError)):
            return TIMEOUT
        cur = cur.__cause__ or cur.__context__
    text = str(exc).lower()
    if "name or service not known" in text or "nodename nor servname" in text \
            or "temporary failure in name resolution" in text:
        return DNS
    if "ssl" in text or "certificate" in text:
        return TLS
    if isinstance(exc, (httpx.ConnectError, httpx.ProxyError,
                        httpx.UnsupportedProtocol, ConnectionError)):
        return CONNECT
    return READ_ERROR


class HostGate:
    """Caps concurrent requests per host and spaces out their start times."""

    def __init__(self, cap: int, delay: float):
        self.cap = cap
        self.delay = delay
        self._lock = threading.Lock()
        self._sems: dict[str, threading.BoundedSemaphore] = {}
        self._next_start: dict[str, float] = {}

    def _sem(self, host: str) -> threading.BoundedSemaphore:
        with self._lock:
            if host not in self._sems:
                self._sems[host] = threading.BoundedSemaphore(self.cap)
            return self._sems[host]

    def acquire(self, host: str) -> None:
        self._sem(host).acquire()
        while True:
            with self._lock:
                now = time.monotonic()
                start = self._next_start.get(host, 0.0)
                if now >= start:
                    self._next_start[host] = now + self.delay
                    return
                wait = start - now
            time.sleep(wait)

    def release(self, host: str) -> None:
        self._sem(host).release()


def _no_cookies() -> http.cookiejar.CookieJar:
    return http.cookiejar.CookieJar(
        policy=http.cookiejar.DefaultCookiePolicy(allowed_domains=[]))


class Fetcher:
    """Thread-safe unconditional GET client.

    Every request is a fresh ``GET`` with ``Cache-Control: no-cache`` and no
    cookies; redirects are followed and the final URL is recorded.
    """

    def __init__(self, config: Optional[FetchConfig] = None,
                 transport: Optional[httpx.BaseTransport] = None):
        self.config = config or FetchConfig()
        c = self.config
        kwargs = {}
        if transport is not None:
            kwargs["transport"] = transport
        elif c.proxy:
            kwargs["proxy"] = c.proxy
        self._client = httpx.Client(
            follow_redirects=True,
            max_redirects=c.max_redirects,
            timeout=httpx.Timeout(c.timeout_seconds),
            headers={
                "User-Agent": c.user_agent,
                "Cache-Control": "no-cache",
                "Accept-Encoding": "gzip",
            },
            cookies=_no_cookies(),
            trust_env=c.trust_env,
            limits=httpx.Limits(max_connections=max(c.workers, 1) * 2),
            **kwargs,
        )
        self._gate = HostGate(c.per_host_cap, c.host_delay_seconds)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _once(self, url: str) -> FetchResult:
        deadline = time.monotonic() + self.config.timeout_seconds
        ts = time.time()
        try:
            with self._client.stream("GET", url) as resp:
                chunks = []
                for chunk in resp.iter_bytes():
                    chunks.append(chunk)
                    if time.monotonic() > deadline:
                        return FetchResult(url, TIMEOUT, timestamp=ts)
                return FetchResult(
                    url,
                    status_code=resp.status_code,
                    body=b"".join(chunks),
                    content_type=resp.headers.get("content-type"),
                    final_url=str(resp.url),
                    timestamp=ts,
                )
        except httpx.TooManyRedirects:
            return FetchResult(url, READ_ERROR, timestamp=ts)
        except (httpx.HTTPError, OSError) as exc:
            return FetchResult(url, classify_exception(exc), timestamp=ts)

    def get(self, url: str) -> FetchResult:
        host = httpx.URL(url).host if "://" in url else url
        attempts = 0
        while True:
            attempts += 1
            self._gate.acquire(host)
            try:
                result = self._once(url)
            finally:
                self._gate.release(host)
            if result.error not in TRANSIENT or attempts > self.config.retries:
                result.attempts = attempts
                if result.error:
                    log.debug("GET %s failed: %s", url, result.error)
                return result

    def get_many(self, urls: Iterable[str]) -> list[FetchResult]:
        """Fetch concurrently; results come back in input order."""
        urls = list(urls)
        if not urls:
            return []
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(self.get, urls))
