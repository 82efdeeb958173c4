"""Hash-based deterministic random generator used by the RNG core.

Output is a pure function of (seed, counter), which is what makes scenario
runs replayable byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

from .keccak import keccak_digest

SEED_SIZE = 64
OUTPUT_SIZE = 48  # 384 bits per draw


def derive_seed(material: bytes) -> bytes:
    """Normalize arbitrary seed material to the fixed 64-byte seed."""
    return keccak_digest(material)


@dataclass
class DrbgState:
    seed: bytes
    counter: int = 0

    def __post_init__(self):
        if len(self.seed) != SEED_SIZE:
            raise ValueError(f"seed must be {SEED_SIZE} bytes, got {len(self.seed)}")

    def reseed(self, material: bytes) -> None:
        self.seed = derive_seed(material)
        self.counter = 0

    def fork(self, label: bytes) -> DrbgState:
        """Derive an independent stream without disturbing this one."""
        return DrbgState(keccak_digest(self.seed + label))


def drbg_next_384(state: DrbgState) -> bytes:
    """Draw the next 48-byte value and advance the counter."""
    out = keccak_digest(state.seed + state.counter.to_bytes(8, "big"))
    state.counter += 1
    return out[:OUTPUT_SIZE]


def drbg_bytes(state: DrbgState, n: int) -> bytes:
    """Concatenate draws until ``n`` bytes are available."""
    chunks = []
    got = 0
    while got < n:
        chunk = drbg_next_384(state)
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)[:n]
