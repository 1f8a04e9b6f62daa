"""Stable seed derivation.

Every random choice in the pipeline flows from one master seed through
this hash, so runs are reproducible across platforms and sessions.
"""

from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(*parts) -> int:
    """Collapse a tuple of ints/strings into a stable 63-bit seed."""
    token = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)
