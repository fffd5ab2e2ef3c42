"""Deterministic seed derivation.

All randomness in a trial flows from one master seed. Sub-streams are keyed
by purpose labels and indices so that any iteration, patient, or arm can be
re-simulated standalone without replaying everything before it, and so that
streams do not depend on construction order.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts: object) -> int:
    """Hash a label path into a 64-bit seed.

    Parts are joined with '/' after str() conversion, so mixed int/str keys
    are fine as long as labels themselves contain no '/'.
    """
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(*parts: object) -> random.Random:
    """A fresh deterministic RNG for the given label path."""
    return random.Random(derive_seed(*parts))
