"""Named sub-seed derivation.

Every stochastic component draws its seed from one root seed plus a stable
name, so adding or removing a stage never perturbs another stage's random
stream. Derivation is SHA-256 based and stable across platforms and Python
builds (no reliance on hash()).
"""

import hashlib


def derive_seed(root_seed: int, name: str) -> int:
    """Return a u64 seed deterministically derived from (root_seed, name)."""
    digest = hashlib.sha256(f"{root_seed:d}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
