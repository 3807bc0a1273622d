"""
Counter-based random streams.

A single 64-bit global seed deterministically derives one independent stream for every
(image, iteration, block, op) coordinate. The stream key is the 128-bit BLAKE2b digest of
the little-endian packing of those coordinates, used as the key of a Philox bit generator.
Derivation is stateless, so the same coordinate always yields the same draws no matter
how many other streams were consumed before it or in which order images are processed.
"""
import hashlib
import struct
from dataclasses import dataclass, replace

import numpy as np

SEED_MAX = 2**64 - 1


@dataclass(frozen=True)
class StreamKey:
    seed: int
    image: int = 0
    iteration: int = 0
    block: int = 0
    op: str = ""

    def __post_init__(self):
        if not 0 <= self.seed <= SEED_MAX:
            raise ValueError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")

    def digest(self) -> bytes:
        packed = struct.pack("<Qqqq", self.seed, self.image, self.iteration, self.block)
        return hashlib.blake2b(packed + self.op.encode("utf-8"), digest_size=16).digest()

    def generator(self) -> np.random.Generator:
        key = np.frombuffer(self.digest(), dtype="<u8").astype(np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def at(self, **coordinates) -> "StreamKey":
        return replace(self, **coordinates)


def stream(seed: int, *, image: int = 0, iteration: int = 0, block: int = 0, op: str = "") -> np.random.Generator:
    return StreamKey(seed, image, iteration, block, op).generator()
