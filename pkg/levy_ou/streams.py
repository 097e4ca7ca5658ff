"""Counter-based random streams keyed by (master seed, replica, role).

Every random draw in the package comes from `stream(seed, replica, role)`.
Streams for different roles (Wiener increments, large jumps, small-jump
shells) are independent, so the Wiener and jump parts of a driving noise are
independent by construction, and any replica can be regenerated on its own.
"""

import numpy as np

ROLE_CODES = {
    "wiener": 1,
    "jumps": 2,
    "small_jumps": 3,
    "resampled_jumps": 4,
    "resampled_small_jumps": 5,
    "paths": 6,
}

_REPLICA_BITS = 32


def replica_seed(master_seed, replica):
    """Per-replica seed, injective in (master_seed, replica)."""
    master_seed = int(master_seed)
    replica = int(replica)
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    if not (0 <= replica < 2**_REPLICA_BITS):
        raise ValueError(f"replica index {replica} outside [0, 2^{_REPLICA_BITS})")
    return (master_seed << _REPLICA_BITS) | replica


def stream(master_seed, replica, role):
    """Philox generator for one (replica, role) pair."""
    try:
        code = ROLE_CODES[role]
    except KeyError:
        raise ValueError(f"Unknown stream role {role!r}; known: {sorted(ROLE_CODES)}") from None
    seq = np.random.SeedSequence([replica_seed(master_seed, replica), code])
    return np.random.Generator(np.random.Philox(seq))
