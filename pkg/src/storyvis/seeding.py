"""Named sub-streams derived from a single master seed.

Every source of randomness in the project (dataset sampling, parameter
init, training noise, evaluation noise) draws its seed through
``derive_seed`` so that components stay independently reproducible.
"""

from __future__ import annotations

import hashlib


def derive_seed(master_seed: int, stream: str) -> int:
    """Derive a 63-bit seed for a named sub-stream of ``master_seed``."""
    digest = hashlib.sha256(f"{master_seed}/{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF
