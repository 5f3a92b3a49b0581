"""
Keyed counter-based sampling streams.

Each draw is a pure function of (master seed, role, node, step): the master seed keys a
BLAKE2b hash of the remaining coordinates, and the 64-bit digest is mapped onto [1, n].
No generator state is carried between draws, so coupled twin runs and parallel sweeps
see identical indices regardless of execution order.
"""

import hashlib

import numpy as np

from .models import SampleRole

_MASK64 = (1 << 64) - 1


def _key(master_seed: int) -> bytes:
    return (int(master_seed) & _MASK64).to_bytes(8, "little")


def _word(master_seed: int, message: str) -> int:
    digest = hashlib.blake2b(message.encode(), key=_key(master_seed), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def sample_index(
    master_seed: int,
    role: SampleRole | str,
    node: int,
    step: int,
    n: int,
) -> int:
    """Draw the sample index node `node` uses at step `step`.

    Args:
        master_seed: 64-bit run seed
        role: stream role; both trajectories of a twin run use `twin-shared`
        node: 1-based node index
        step: 1-based step index
        n: samples per node

    Returns:
        Index in [1, n], uniform over the keyed stream.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    role = SampleRole(role)
    word = _word(master_seed, f"{role.value}:{node}:{step}")
    return 1 + ((word * n) >> 64)


def index_table(master_seed: int, role: SampleRole | str, m: int, T: int, n: int) -> np.ndarray:
    """Zero-based sample indices j_t(i) - 1 for steps 1..T and nodes 1..m, shape (T, m)."""
    table = np.empty((T, m), dtype=np.int64)
    for t in range(1, T + 1):
        for i in range(1, m + 1):
            table[t - 1, i - 1] = sample_index(master_seed, role, i, t, n) - 1
    return table


def derive_seed(master_seed: int, salt: str | int) -> int:
    """Derive an isolated, reproducible sub-seed from the master seed and a salt."""
    combined = f"{master_seed}-{salt}"
    return int(hashlib.sha256(combined.encode()).hexdigest(), 16) % (2**63 - 1)
