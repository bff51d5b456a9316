"""Temporal integrity monitoring of cross-origin JavaScript inclusions."""

from .urls import OriginPolicy, ParsedUrl, Origin, parse_url, origin_of, same_origin, resolve_reference
from .sri import compute_digest, generate_integrity_attr, parse_integrity_attr, verify

__version__ = "0.1.0"

__all__ = [
    "OriginPolicy", "ParsedUrl", "Origin", "parse_url", "origin_of", "same_origin",
    "resolve_reference", "compute_digest", "generate_integrity_attr",
    "parse_integrity_attr", "verify",
]
