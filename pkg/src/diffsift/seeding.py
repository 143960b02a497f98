"""Single-seed fan-out.

Every random draw in the toolkit flows from one integer seed through a fixed
derivation: sha256 over the seed plus a purpose label, feeding a Philox
counter-based generator.  That keeps subsample manifests and lab runs
reproducible across platforms and insulates independent stages from each
other (adding draws in one stage never shifts another stage's stream).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *labels: str | int) -> int:
    """Derive a 128-bit child seed from a master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:16], "big")


def make_rng(master: int, *labels: str | int) -> np.random.Generator:
    """Philox generator keyed by the derived child seed."""
    return np.random.Generator(np.random.Philox(key=derive_seed(master, *labels)))
