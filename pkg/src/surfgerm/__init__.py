"""Exact invariants of plane-curve germs and double-cover surface germs."""
from __future__ import annotations

__version__ = "0.1.0"
