"""GF(2) linear algebra on bit-packed integer vectors.

Vectors over F_2 are stored as Python ints (bit k = coordinate k), so XOR is
vector addition and ``int.bit_count`` gives the weight.  This is all the
subsampling machinery needs: rank checks and parity inner products.
"""

import numpy as np


def parity(x: int) -> int:
    """Weight of x mod 2."""
    return x.bit_count() & 1


def dot(a: int, b: int) -> int:
    """Standard inner product over F_2 of two bit-packed vectors."""
    return (a & b).bit_count() & 1


def rank(vectors: list[int]) -> int:
    """Rank over F_2 of the set of bit-packed vectors.

    Plain elimination on the integers: each pivot clears its leading bit
    from the rest.
    """
    basis: list[int] = []
    for v in vectors:
        for p in basis:
            v = min(v, v ^ p)
        if v:
            basis.append(v)
            basis.sort(reverse=True)
    return len(basis)


def random_full_rank(rng: np.random.Generator, dim: int, count: int,
                     max_tries: int = 200) -> list[int]:
    """Sample `count` vectors in F_2^dim that are linearly independent.

    Draws uniformly and retries; for count <= dim the success probability
    per draw is at least ~0.288 so a couple of tries suffice.
    """
    if count > dim:
        raise ValueError(f"cannot fit {count} independent vectors in dimension {dim}")
    for _ in range(max_tries):
        vecs = [int(rng.integers(0, 2 ** dim)) for _ in range(count)]
        if rank(vecs) == count:
            return vecs
    raise RuntimeError("failed to sample a full-rank binary matrix")
