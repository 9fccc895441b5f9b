import numpy as np


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed for a (seed, *path) key, e.g. (seed, sample, variant)."""
    return int(np.random.SeedSequence([int(seed), *map(int, path)]).generate_state(1, np.uint64)[0])
