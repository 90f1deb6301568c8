"""Deterministic seed derivation for ensembles of independent tasks."""
import hashlib
import json

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master, path):
    """Derive a 64-bit seed from a master seed and a label path.

    The path is hashed in order (keyed BLAKE2b, key = master seed), so
    ``derive_seed(s, ["a", 1])`` and ``derive_seed(s, [1, "a"])`` differ.
    Labels may be strings or integers.
    """
    path = list(path)
    if not path:
        raise ValueError("seed path must be nonempty")
    key = int(master & MASK64).to_bytes(8, "little")
    payload = json.dumps([_label(p) for p in path], separators=(",", ":"))
    digest = hashlib.blake2b(payload.encode(), key=key, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _label(p):
    if isinstance(p, (bool, np.bool_)):
        raise TypeError("boolean seed labels are ambiguous")
    if isinstance(p, (int, np.integer)):
        return ["i", int(p)]
    if isinstance(p, str):
        return ["s", p]
    raise TypeError(f"unsupported seed label {p!r}")


def rng_for(master, path):
    return np.random.default_rng(derive_seed(master, path))
