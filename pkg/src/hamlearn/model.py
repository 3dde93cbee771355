"""Sparse Pauli-basis Hamiltonians: container, generators, file formats."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import pauli
from .util import derived_rng

DENSE_QUBIT_CAP = 10


@dataclass(frozen=True)
class SparseHamiltonian:
    """H = sum_a s_a P_a with a sparse, identity-free coefficient map."""

    n: int
    terms: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one qubit")
        for label, coeff in self.terms.items():
            pauli.validate_label(label, self.n)
            if label == 0:
                raise ValueError("identity term is not representable (traceless convention)")
            if coeff == 0.0 or not math.isfinite(coeff):
                raise ValueError(f"coefficient for {pauli.to_string(label, self.n)} "
                                 f"must be finite and nonzero")

    @property
    def sparsity(self) -> int:
        return len(self.terms)

    def one_norm(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def gap(self) -> float:
        """Smallest squared coefficient (separation of the rate spectrum)."""
        if not self.terms:
            return 0.0
        return min(c * c for c in self.terms.values())

    def sorted_terms(self) -> list[tuple[int, float]]:
        return sorted(self.terms.items())

    def squared_rates(self) -> dict[int, float]:
        """Second-order rate map: s_a^2 on the support, -sum s^2 at identity."""
        rates = {a: c * c for a, c in self.terms.items()}
        rates[0] = -sum(rates.values())
        return rates

    def to_dense(self) -> np.ndarray:
        """Dense 2^n x 2^n Hermitian matrix; capped at n = 10."""
        if self.n > DENSE_QUBIT_CAP:
            raise ValueError(f"dense form capped at n={DENSE_QUBIT_CAP}")
        out = np.zeros((2 ** self.n, 2 ** self.n), dtype=complex)
        for label, coeff in self.sorted_terms():
            out += coeff * pauli.pauli_matrix(label, self.n)
        return out


def random_sparse(n: int, s: int, magnitude_range: tuple[float, float] = (0.1, 1.0),
                  seed: int = 0) -> SparseHamiltonian:
    """Uniform random support of s non-identity labels, uniform magnitudes,
    uniform random signs."""
    if not 0 < s < 4 ** n:
        raise ValueError("sparsity must be in [1, 4^n - 1]")
    lo, hi = magnitude_range
    if not 0 < lo <= hi:
        raise ValueError("magnitude range must satisfy 0 < lo <= hi")
    rng = derived_rng(seed, "model-random", n, s)
    support = rng.choice(4 ** n - 1, size=s, replace=False) + 1
    mags = rng.uniform(lo, hi, size=s)
    signs = rng.choice([-1.0, 1.0], size=s)
    return SparseHamiltonian(n, {int(a): float(m * sg)
                                 for a, m, sg in zip(support, mags, signs)})


def tfim_random(n: int, coupling_range: tuple[float, float] = (0.1, 1.0),
                seed: int = 0) -> SparseHamiltonian:
    """Random-coefficient transverse-field Ising chain.

    Nearest-neighbour ZZ couplings plus per-site X fields: 2n - 1 terms.
    Magnitudes are uniform in coupling_range with uniform random signs.
    """
    if n < 1:
        raise ValueError("the chain needs at least one site")
    lo, hi = coupling_range
    if not 0 < lo <= hi:
        raise ValueError("coupling range must satisfy 0 < lo <= hi")
    rng = derived_rng(seed, "model-tfim", n)
    terms: dict[int, float] = {}
    zz = 3 | (3 << 2)
    for i in range(n - 1):
        terms[zz << (2 * i)] = float(rng.uniform(lo, hi) * rng.choice([-1.0, 1.0]))
    for i in range(n):
        terms[1 << (2 * i)] = float(rng.uniform(lo, hi) * rng.choice([-1.0, 1.0]))
    return SparseHamiltonian(n, terms)


def write_hamiltonian(ham: SparseHamiltonian, path: str) -> None:
    """Write the term list; `.json` paths get the JSON mirror, else text."""
    if path.endswith(".json"):
        doc = {"n": ham.n,
               "terms": [{"pauli": pauli.to_string(a, ham.n), "coeff": c}
                         for a, c in ham.sorted_terms()]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# sparse Pauli hamiltonian, n={ham.n}\n")
        for label, coeff in ham.sorted_terms():
            fh.write(f"{pauli.to_string(label, ham.n)} {coeff!r}\n")


def read_hamiltonian(path: str) -> SparseHamiltonian:
    """Inverse of write_hamiltonian with line-precise error messages."""
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            n = int(doc["n"])
            entries = [(path, str(t["pauli"]), float(t["coeff"]))
                       for t in doc["terms"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: malformed hamiltonian JSON ({exc})") from exc
        return _assemble(n, entries)

    entries = []
    n = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected '<pauli> <coeff>', got {raw!r}")
            try:
                coeff = float(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad coefficient {parts[1]!r}") from exc
            entries.append((f"{path}:{lineno}", parts[0], coeff))
            if n is None:
                n = len(parts[0])
    if not entries:
        raise ValueError(f"{path}: no terms found")
    return _assemble(n, entries)


def _assemble(n: int, entries: list[tuple[str, str, float]]) -> SparseHamiltonian:
    terms: dict[int, float] = {}
    for where, text, coeff in entries:
        try:
            label, width = pauli.from_string(text)
        except ValueError as exc:
            raise ValueError(f"{where}: {exc}") from exc
        if width != n:
            raise ValueError(f"{where}: term {text!r} has {width} letters, expected {n}")
        if label in terms:
            raise ValueError(f"{where}: duplicate term {text!r}")
        terms[label] = coeff
    return SparseHamiltonian(n, terms)
