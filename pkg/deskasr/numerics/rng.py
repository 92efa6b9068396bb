"""
Seeded random number streams.

There is no global generator: every consumer (initialisation, dropout,
SpecAugment, batching) holds its own Rng, usually spawned from a run seed with
a fixed key so that adding a consumer never shifts another's stream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

ALGORITHM = "PCG64"


def _key_to_int(key: int | str) -> int:
    if isinstance(key, int):
        return key
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")


@dataclass
class Rng:
    """A PCG64 stream; same seed and same call sequence give bit-identical draws."""

    seed: int
    algorithm: str = ALGORITHM
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.algorithm != ALGORITHM:
            raise ValueError(f"Unsupported RNG algorithm '{self.algorithm}'. Supported: {ALGORITHM}")
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, key: int | str) -> "Rng":
        """Independent child stream derived from (seed, key) only."""
        seq = np.random.SeedSequence([self.seed & (2**64 - 1), _key_to_int(key) & (2**64 - 1)])
        return Rng(int(seq.generate_state(1, np.uint64)[0]))

    # -- draws ------------------------------------------------------------
    def random(self, size=None, dtype=np.float64) -> np.ndarray:
        return self.generator.random(size, dtype=dtype)

    def uniform(self, low: float, high: float, size=None, dtype=np.float64) -> np.ndarray:
        return (low + (high - low) * self.generator.random(size, dtype=np.float64)).astype(dtype)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None, dtype=np.float64) -> np.ndarray:
        return (loc + scale * self.generator.standard_normal(size, dtype=np.float64)).astype(dtype)

    def integers(self, low: int, high: int | None = None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    # -- persistence ------------------------------------------------------
    def get_state(self) -> dict:
        return {"seed": self.seed, "algorithm": self.algorithm, "state": self.generator.bit_generator.state}

    def set_state(self, state: dict) -> None:
        if state.get("algorithm", ALGORITHM) != self.algorithm:
            raise ValueError(f"RNG state is for '{state.get('algorithm')}', not '{self.algorithm}'")
        self.generator.bit_generator.state = state["state"]

    @classmethod
    def from_state(cls, state: dict) -> "Rng":
        rng = cls(int(state["seed"]), state.get("algorithm", ALGORITHM))
        rng.set_state(state)
        return rng
