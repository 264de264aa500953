import numpy as np


def derive_seed(base: int, *keys: int) -> int:
    """Deterministic 32-bit child seed for ``(base, *keys)``."""
    seq = np.random.SeedSequence([int(base) & 0xFFFFFFFF, *(int(k) for k in keys)])
    return int(seq.generate_state(1)[0])


def child_rng(base: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, *keys))
