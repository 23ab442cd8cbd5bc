"""Small shared helpers."""

from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed derived from a tuple of integers."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(ss.generate_state(1)[0])
