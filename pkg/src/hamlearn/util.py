"""Shared helpers: deterministic RNG derivation and JSON conveniences."""

import json
import struct
import zlib

import numpy as np


def derived_rng(master_seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Return a Generator whose stream depends only on (master_seed, tag, indices).

    Every stochastic path in the package derives its stream this way, so
    parallel and serial runs agree and replicates are addressable.
    """
    words = [np.uint32(master_seed & 0xFFFFFFFF),
             np.uint32((master_seed >> 32) & 0xFFFFFFFF),
             np.uint32(zlib.crc32(tag.encode("utf-8")))]
    for idx in indices:
        words.append(np.uint32(idx & 0xFFFFFFFF))
        words.append(np.uint32((int(idx) >> 32) & 0xFFFFFFFF))
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))


def float_key(t: float) -> int:
    """Stable integer key for a float (bit pattern), for stream derivation."""
    return struct.unpack("<q", struct.pack("<d", float(t)))[0]


def dump_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
