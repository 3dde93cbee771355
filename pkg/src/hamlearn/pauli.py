"""Pauli-label algebra on bit-packed integers.

An n-qubit Pauli word is stored as a 2n-bit integer.  Qubit i (i = 0 is the
leftmost letter of the string form) occupies bit pair (2i, 2i+1), read as a
two-bit letter code

    I = 00, X = 01, Y = 10, Z = 11,

with the high code bit at position 2i+1.  The string form concatenates the
per-qubit codes left to right, so "XZIX" has bit form "01110001".  Under
this encoding label addition is XOR (product of Pauli words up to phase),
and the commutation inner product of two labels a, b is

    <a,b> = sum_i (hi_i(a) * lo_i(b) + hi_i(b) * lo_i(a))  mod 2,

which is 0 exactly when the words commute.  Indices of dense length-4^n
coefficient arrays are these label integers.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import gf2

_LETTERS = "IXYZ"

# low code bits of the first 128 qubit pairs; plenty for any dense work here
_LOW = int("01" * 128, 2)

_SINGLE_QUBIT = (
    np.eye(2, dtype=complex),                      # I
    np.array([[0, 1], [1, 0]], dtype=complex),     # X
    np.array([[0, -1j], [1j, 0]], dtype=complex),  # Y
    np.array([[1, 0], [0, -1]], dtype=complex),    # Z
)


def low_mask(n: int) -> int:
    """Mask with the low code bit of every qubit pair set (0b0101...)."""
    return int("01" * n, 2)


def num_labels(n: int) -> int:
    return 4 ** n


def validate_label(a: int, n: int) -> None:
    if not 0 <= a < 4 ** n:
        raise ValueError(f"label {a} out of range for n={n}")


def letter_code(a: int, i: int) -> int:
    """Two-bit letter code of qubit i (0 = I, 1 = X, 2 = Y, 3 = Z)."""
    return (a >> (2 * i)) & 3


def weight(a: int, n: int) -> int:
    """Number of non-identity letters."""
    return ((a | (a >> 1)) & low_mask(n)).bit_count()


def label_add(a: int, b: int) -> int:
    """Label of the product P_a P_b, phase discarded."""
    return a ^ b


def symplectic_product(a: int, b: int) -> int:
    """Commutation inner product: 0 if P_a and P_b commute, 1 otherwise.

    Bilinear over F_2 in both arguments; distinct from binary_product,
    which pairs a label with a subsampling column.
    """
    mask = ((a >> 1) & b) ^ ((b >> 1) & a)
    return (mask & _LOW).bit_count() & 1


def binary_product(a: int, b: int) -> int:
    """Standard bitwise inner product over F_2 (used for bin hashing)."""
    return gf2.dot(a, b)


def commutes(a: int, b: int) -> bool:
    return symplectic_product(a, b) == 0


def bit_swap(a: int) -> int:
    """Swap the two bits of every qubit pair (exchanges X and Y letters).

    This involution J links the two inner products:
    <J(u), v>_commute == binary_product(u, v), so offsets J(e_k) read out
    single label bits through the commutation product.
    """
    return ((a & _LOW) << 1) | ((a >> 1) & _LOW)


def to_string(a: int, n: int) -> str:
    validate_label(a, n)
    return "".join(_LETTERS[letter_code(a, i)] for i in range(n))


def from_string(text: str) -> tuple[int, int]:
    """Parse a letter string like "XZIX"; returns (label, n)."""
    text = text.strip().upper()
    if not text:
        raise ValueError("empty Pauli string")
    a = 0
    for i, ch in enumerate(text):
        code = _LETTERS.find(ch)
        if code < 0:
            raise ValueError(f"invalid Pauli letter {ch!r} in {text!r}")
        a |= code << (2 * i)
    return a, len(text)


def to_bitstring(a: int, n: int) -> str:
    """2n-character bit form, per-qubit codes concatenated left to right."""
    validate_label(a, n)
    return "".join(format(letter_code(a, i), "02b") for i in range(n))


def from_bitstring(bits: str) -> tuple[int, int]:
    if len(bits) % 2 or not bits:
        raise ValueError("bit form must have even positive length")
    a = 0
    for i in range(len(bits) // 2):
        a |= int(bits[2 * i: 2 * i + 2], 2) << (2 * i)
    return a, len(bits) // 2


def pauli_matrix(a: int, n: int) -> np.ndarray:
    """Dense 2^n x 2^n matrix of the word (qubit 0 is the first kron factor)."""
    validate_label(a, n)
    mats = [_SINGLE_QUBIT[letter_code(a, i)] for i in range(n)]
    return reduce(np.kron, mats) if mats else np.eye(1, dtype=complex)


@dataclass(frozen=True)
class StabilizerGroup:
    """An abelian label group given by n independent commuting generators."""

    generators: tuple[int, ...]
    n: int

    def __post_init__(self):
        if len(self.generators) != self.n:
            raise ValueError("need exactly n generators")
        gens = self.generators
        for g in gens:
            validate_label(g, self.n)
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if symplectic_product(gens[i], gens[j]):
                    raise ValueError("generators must pairwise commute")
        if gf2.rank(list(gens)) != self.n:
            raise ValueError("generators must be independent over F_2")

    def elements(self) -> np.ndarray:
        """All 2^n member labels; entry e is the XOR over generators in e."""
        out = np.zeros(2 ** self.n, dtype=np.int64)
        size = 1
        for g in self.generators:
            out[size: 2 * size] = out[:size] ^ g
            size *= 2
        return out

    def coordinates(self, x: int) -> int:
        """Generator expansion of a member label, packed as n bits.

        Solves x = XOR of generators by elimination; raises if x is not in
        the group.
        """
        # reduce the generators to a sorted basis, tracking which original
        # generators each basis vector combines
        reduced: list[tuple[int, int]] = []
        for k, g in enumerate(self.generators):
            tag = 1 << k
            for rg, rt in reduced:
                if (g ^ rg) < g:
                    g, tag = g ^ rg, tag ^ rt
            reduced.append((g, tag))
            reduced.sort(key=lambda p: -p[0])
        v, acc = x, 0
        for rg, rt in reduced:
            if (v ^ rg) < v:
                v, acc = v ^ rg, acc ^ rt
        if v:
            raise ValueError("label is not a member of the group")
        return acc


def syndrome_decompose(x: int, group: StabilizerGroup) -> int:
    """Commutation syndrome of x against the generators, packed as n bits."""
    s = 0
    for k, g in enumerate(group.generators):
        s |= symplectic_product(x, g) << k
    return s


def covering_group(x: int, n: int) -> StabilizerGroup:
    """Weight-1 generator group containing P_x.

    Generator i carries the letter of x on qubit i, substituting X where x
    is the identity.  All generators act on distinct qubits, so the group
    is a product group and its stabilizer state is a product state.
    """
    validate_label(x, n)
    gens = []
    for i in range(n):
        code = letter_code(x, i)
        gens.append((code if code else 1) << (2 * i))
    return StabilizerGroup(tuple(gens), n)


def _bit_swap_perm(n: int) -> np.ndarray:
    labels = np.arange(4 ** n)
    lo = np.int64(low_mask(n))
    return ((labels & lo) << 1) | ((labels >> 1) & lo)


def _fwht(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float)
    size = out.size
    h = 1
    while h < size:
        out = out.reshape(-1, 2, h)
        top = out[:, 0, :] + out[:, 1, :]
        bot = out[:, 0, :] - out[:, 1, :]
        out = np.concatenate((top[:, None, :], bot[:, None, :]), axis=1)
        h *= 2
    return out.reshape(size)


def _check_transform_size(values: np.ndarray, max_n: int = 8) -> int:
    size = values.size
    n = max(1, (size.bit_length() - 1) // 2)
    if 4 ** n != size:
        raise ValueError("array length must be a power of 4")
    if n > max_n:
        raise ValueError(f"dense transform capped at n={max_n}")
    return n


def wht_forward(rates: np.ndarray) -> np.ndarray:
    """Fidelities from a dense rate vector: f[x] = sum_a (-1)^<x,a> p[a].

    The kernel uses the commutation inner product, realised as a pair-swap
    permutation followed by a standard fast transform.
    """
    rates = np.asarray(rates, dtype=float)
    n = _check_transform_size(rates)
    return _fwht(rates[_bit_swap_perm(n)])


def wht_inverse(fidelities: np.ndarray) -> np.ndarray:
    """Rates from a dense fidelity vector (exact inverse of wht_forward)."""
    fid = np.asarray(fidelities, dtype=float)
    n = _check_transform_size(fid)
    return (_fwht(fid) / fid.size)[_bit_swap_perm(n)]
