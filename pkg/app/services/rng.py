"""
Keyed counter-based random streams.

Every stream is a Philox generator whose key is derived from
(master seed, purpose, index...) through a SeedSequence, so a stream's
values never depend on how replicates are spread over workers or on the
order in which they run.
"""

import zlib
from typing import Iterable

import numpy as np

from app.config import settings

# Purpose tags keep streams for different jobs disjoint
PURPOSE_SPIN = 1
PURPOSE_COALESCE = 2
PURPOSE_INITIAL = 3
PURPOSE_REPLICATE = 4


def purpose_tag(name: str) -> int:
    """Stable integer tag for a free-form purpose string."""
    return zlib.crc32(name.encode("utf-8"))


def _entropy_key(parts: Iterable[int]) -> list[int]:
    key = []
    for part in parts:
        value = int(part)
        # SeedSequence wants nonnegative words; fold signed coordinates
        key.append(2 * value if value >= 0 else -2 * value - 1)
    return key


def stream(seed: int | None, *key: int) -> np.random.Generator:
    """
    Generator for the stream identified by (seed, *key).

    Args:
        seed: Master seed (None -> settings.DEFAULT_SEED)
        key: Purpose tag followed by any integer indices (replicate, site coordinates, ...)
    """
    master = settings.DEFAULT_SEED if seed is None else int(seed)
    sequence = np.random.SeedSequence(entropy=master, spawn_key=tuple(_entropy_key(key)))
    return np.random.Generator(np.random.Philox(sequence))


def replicate_stream(seed: int | None, purpose: int, replicate: int) -> np.random.Generator:
    return stream(seed, purpose, replicate)


class SiteStreams:
    """
    Lazily created per-site streams for one trajectory.

    Coupled components that share a SiteStreams instance (or one built from
    the same key) see identical marks at every site.
    """

    def __init__(self, seed: int | None, *key: int):
        self.seed = seed
        self.key = key
        self._streams: dict[tuple[int, ...], np.random.Generator] = {}

    def __call__(self, site: tuple[int, ...]) -> np.random.Generator:
        generator = self._streams.get(site)
        if generator is None:
            generator = stream(self.seed, *self.key, *site)
            self._streams[site] = generator
        return generator

    def __len__(self) -> int:
        return len(self._streams)
