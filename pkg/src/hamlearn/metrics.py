"""Reconstruction-quality metrics between sparse Hamiltonians."""

from .model import SparseHamiltonian


def _abs_diff_sum(reference: SparseHamiltonian,
                  estimate: SparseHamiltonian) -> float:
    labels = set(reference.terms) | set(estimate.terms)
    return sum(abs(reference.terms.get(a, 0.0) - estimate.terms.get(a, 0.0))
               for a in labels)


def relative_error(reference: SparseHamiltonian,
                   estimate: SparseHamiltonian) -> float:
    """l1 distance over the union support, relative to the reference l1 norm."""
    if reference.n != estimate.n:
        raise ValueError("qubit counts differ")
    denom = reference.one_norm()
    if denom == 0:
        raise ValueError("reference Hamiltonian has no terms")
    return _abs_diff_sum(reference, estimate) / denom


def average_error(reference: SparseHamiltonian,
                  estimate: SparseHamiltonian) -> float:
    """l1 distance divided by the reference term count."""
    if reference.n != estimate.n:
        raise ValueError("qubit counts differ")
    if reference.sparsity == 0:
        raise ValueError("reference Hamiltonian has no terms")
    return _abs_diff_sum(reference, estimate) / reference.sparsity


def support_exact(reference: SparseHamiltonian,
                  estimate: SparseHamiltonian) -> bool:
    return set(reference.terms) == set(estimate.terms)


def sign_flips(reference: SparseHamiltonian,
               estimate: SparseHamiltonian) -> int:
    """Recovered terms whose sign disagrees with the reference (common
    support only; missing or spurious terms are support errors instead)."""
    flips = 0
    for a, c in reference.terms.items():
        if a in estimate.terms and c * estimate.terms[a] < 0:
            flips += 1
    return flips
