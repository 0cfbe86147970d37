"""URL match patterns and canonicalization.

Patterns scope what gets collected: "<all_urls>", or scheme://host/path
where scheme is http, https, or "*" (either of the two), host is exact,
"*", or "*." followed by a suffix host, and path is a glob in which "*"
matches any character sequence. Comparison URLs are canonicalized first,
so query strings and fragments never influence a match.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable
from urllib.parse import urlsplit, urlunsplit

ALL_URLS = "<all_urls>"


class PatternError(ValueError):
    pass


class BadScheme(PatternError):
    pass


class BadHostWildcard(PatternError):
    pass


class MissingPath(PatternError):
    pass


class InvalidUrl(ValueError):
    pass


@dataclass(frozen=True)
class MatchPattern:
    scheme: str  # "http" | "https" | "*" | "all-urls"
    host: str    # exact host[:port], "*", or "*." + suffix
    path: str    # glob, begins with "/"

    @property
    def is_all_urls(self) -> bool:
        return self.scheme == "all-urls"

    def __str__(self) -> str:
        if self.is_all_urls:
            return ALL_URLS
        return f"{self.scheme}://{self.host}{self.path}"


_PATTERN_RE = re.compile(r"^(?P<scheme>[^:/]*)://(?P<host>[^/]*)(?P<path>/.*)?$")


def parse_pattern(text: str) -> MatchPattern:
    """Parse one pattern string; deterministic, whitespace-sensitive."""
    if text == ALL_URLS:
        return MatchPattern("all-urls", "*", "/*")
    m = _PATTERN_RE.match(text)
    if m is None:
        raise BadScheme(f"{text!r} has no scheme://")
    scheme = m.group("scheme")
    if scheme not in ("http", "https", "*"):
        raise BadScheme(f"unsupported scheme {scheme!r}")
    host = m.group("host").lower()
    hostname, _, port = host.rpartition(":") if ":" in host else (host, "", "")
    if ":" in host:
        if not port.isdigit():
            raise BadHostWildcard(f"bad port in host {host!r}")
        # A scheme's default port is equivalent to no port at all.
        if int(port) == {"http": 80, "https": 443}.get(scheme):
            host = hostname
    else:
        hostname = host
    if not hostname:
        raise BadHostWildcard("host must be non-empty")
    if hostname != "*":
        core = hostname[2:] if hostname.startswith("*.") else hostname
        if not core or "*" in core:
            raise BadHostWildcard(
                f"{hostname!r}: wildcard allowed only as whole host or leading '*.' label"
            )
    path = m.group("path")
    if path is None:
        raise MissingPath(f"{text!r} has no path component")
    return MatchPattern(scheme, host, path)


def parse_pattern_list(text: str) -> list[MatchPattern]:
    """Parse newline-separated patterns; blank lines and # comments skipped."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(parse_pattern(line))
    return out


_PCT_RE = re.compile(r"%[0-9a-fA-F]{2}")


def normalize_url(url: str) -> str:
    """Canonical form used for every URL equality in the system.

    Lowercases scheme and host, strips default ports, fragments, and query
    strings, maps an empty path to "/", and uppercases percent-encoding.
    Idempotent: normalize_url(normalize_url(u)) == normalize_url(u).
    """
    try:
        parts = urlsplit(url)
        hostname = parts.hostname
        port = parts.port
    except ValueError as exc:
        raise InvalidUrl(f"{url!r}: {exc}") from exc
    scheme = parts.scheme.lower()
    if not scheme or hostname is None or hostname == "":
        raise InvalidUrl(f"{url!r} is not an absolute URL")
    if ":" in hostname:  # bare IPv6 form from urlsplit
        hostname = f"[{hostname}]"
    netloc = hostname
    if port is not None and port != {"http": 80, "https": 443}.get(scheme):
        netloc = f"{netloc}:{port}"
    userinfo, sep, _ = parts.netloc.rpartition("@")
    if sep:
        netloc = f"{userinfo}@{netloc}"
    path = _PCT_RE.sub(lambda p: p.group(0).upper(), parts.path or "/")
    return urlunsplit((scheme, netloc, path, "", ""))


def _host_port(normalized: str) -> tuple[str, str]:
    netloc = urlsplit(normalized).netloc.rpartition("@")[2]
    if netloc.startswith("["):  # IPv6 literal
        host, _, rest = netloc.partition("]")
        return host + "]", rest.lstrip(":")
    host, _, port = netloc.partition(":")
    return host, port


def _glob_match(glob: str, path: str) -> bool:
    regex = ".*".join(re.escape(part) for part in glob.split("*"))
    return re.fullmatch(regex, path) is not None


def matches(pattern: MatchPattern, url: str) -> bool:
    """True iff the canonicalized URL is in the pattern's scope."""
    normalized = normalize_url(url)
    scheme = urlsplit(normalized).scheme
    if scheme not in ("http", "https"):
        return False
    if pattern.is_all_urls:
        return True
    if pattern.scheme != "*" and pattern.scheme != scheme:
        return False

    host, port = _host_port(normalized)
    pat_host, pat_sep, pat_port = pattern.host.partition(":")
    if not pat_sep:
        pat_port = ""
    if port != pat_port:
        return False
    if pat_host == "*":
        pass
    elif pat_host.startswith("*."):
        suffix = pat_host[2:]
        if host != suffix and not host.endswith("." + suffix):
            return False
    elif host != pat_host:
        return False

    return _glob_match(pattern.path, urlsplit(normalized).path)


def any_match(patterns: Iterable[MatchPattern], url: str) -> bool:
    return any(matches(p, url) for p in patterns)
