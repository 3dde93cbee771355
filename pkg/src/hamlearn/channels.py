"""Simulated query channels for the learner.

Two oracle flavours share a query meter and a noise description:

* AnalyticOracle answers Pauli-fidelity and expectation-value queries from
  the exact unitary (eigendecomposition of the dense Hamiltonian), with
  additive Gaussian query noise and SPAM perturbations.
* CircuitOracle answers randomized-benchmarking style sequence queries: it
  propagates Pauli coefficient vectors through random Pauli gates, a
  diagonal Pauli noise channel, and the evolution transfer matrix, then
  samples stabilizer syndrome measurements.

Fidelity here always means f_x = 2^-n Tr[P_x E(P_x)].
"""

import threading
from dataclasses import dataclass

import numpy as np

from . import pauli
from .model import SparseHamiltonian
from .util import derived_rng, float_key

CIRCUIT_QUBIT_CAP = 6


@dataclass
class NoiseConfig:
    """Noise knobs for the simulated queries.

    sigma_f:     std of additive Gaussian noise on each fidelity query.
    spam_sigma:  std of additive Gaussian noise on each expectation query.
    spam_tau:    clip bound for the expectation noise (None = unclipped).
    flip_prob:   per-qubit preparation/readout bit-flip probability
                 (structural SPAM, used by both oracle flavours).
    lambda_fidelities: dense 4^n fidelity vector of the gate noise channel
                 (circuit mode only).
    shots:       syndrome samples per benchmarking sequence.
    """

    sigma_f: float = 0.0
    spam_sigma: float = 0.0
    spam_tau: float | None = None
    flip_prob: float = 0.0
    lambda_fidelities: np.ndarray | None = None
    shots: int = 1

    def __post_init__(self):
        if self.sigma_f < 0 or self.spam_sigma < 0:
            raise ValueError("noise levels must be nonnegative")
        if not 0 <= self.flip_prob < 0.5:
            raise ValueError("flip probability must lie in [0, 0.5)")
        if self.shots < 1:
            raise ValueError("shots must be positive")
        if self.lambda_fidelities is not None:
            validate_channel_fidelities(np.asarray(self.lambda_fidelities, dtype=float))


def validate_channel_fidelities(fid: np.ndarray) -> None:
    """Check a fidelity vector describes a Pauli channel: identity entry 1,
    nonnegative underlying rate distribution."""
    rates = pauli.wht_inverse(fid)
    if abs(fid[0] - 1.0) > 1e-9:
        raise ValueError("channel fidelity at the identity label must be 1")
    if rates.min() < -1e-9:
        raise ValueError("fidelity vector is not a Pauli channel "
                         f"(negative rate {rates.min():.3g})")
    worst = float(1.0 - fid.min())
    if worst > 1 / 3 + 1e-12:
        # the ratio estimator's resolution argument needs the channel
        # residual bounded away from total depolarization
        raise ValueError(f"channel residual {worst:.3g} exceeds 1/3")


def uniform_channel(n: int, fidelity: float) -> np.ndarray:
    """Fidelity vector equal to `fidelity` on every non-identity label."""
    fid = np.full(4 ** n, float(fidelity))
    fid[0] = 1.0
    validate_channel_fidelities(fid)
    return fid


class QueryMeter:
    """Thread-safe tally of oracle usage."""

    def __init__(self):
        self._lock = threading.Lock()
        self.fidelity_queries = 0
        self.expectation_queries = 0
        self.rb_sequences = 0
        self._labels: set[int] = set()

    def count_fidelity(self, label: int, repeats: int = 1) -> None:
        with self._lock:
            self.fidelity_queries += repeats
            self._labels.add(label)

    def count_expectation(self, repeats: int = 1) -> None:
        with self._lock:
            self.expectation_queries += repeats

    def count_sequences(self, count: int) -> None:
        with self._lock:
            self.rb_sequences += count

    @property
    def distinct_fidelity_labels(self) -> int:
        with self._lock:
            return len(self._labels)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "fidelity_queries": self.fidelity_queries,
                "distinct_fidelity_labels": len(self._labels),
                "expectation_queries": self.expectation_queries,
                "rb_sequences": self.rb_sequences,
            }


def exact_pauli_fidelity(ham: SparseHamiltonian, t: float, x: int) -> float:
    """Noise-free f_x(t) for the unitary exp(-iHt), computed exactly."""
    lam, vecs = np.linalg.eigh(ham.to_dense())
    return _fidelity_from_eig(lam, vecs, x, np.array([t]), ham.n)[0]


def _fidelity_from_eig(lam: np.ndarray, vecs: np.ndarray, x: int,
                       times: np.ndarray, n: int) -> np.ndarray:
    # f_x(t) = 2^-n sum_jk |(V^+ P_x V)_jk|^2 cos((lam_j - lam_k) t),
    # manifestly even in t.
    q = vecs.conj().T @ pauli.pauli_matrix(x, n) @ vecs
    w = (q.real ** 2 + q.imag ** 2).ravel()
    gaps = (lam[:, None] - lam[None, :]).ravel()
    return np.cos(np.outer(times, gaps)) @ w / 2 ** n


def _state_vector(state: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Dense ket of a product of single-qubit Pauli eigenstates.

    `state` lists (letter_code, sign) per qubit, letter_code in {1,2,3}.
    """
    basis = {
        (1, 1): np.array([1, 1]) / np.sqrt(2),
        (1, -1): np.array([1, -1]) / np.sqrt(2),
        (2, 1): np.array([1, 1j]) / np.sqrt(2),
        (2, -1): np.array([1, -1j]) / np.sqrt(2),
        (3, 1): np.array([1, 0]),
        (3, -1): np.array([0, 1]),
    }
    psi = np.array([1.0 + 0j])
    for code, sign in state:
        psi = np.kron(psi, basis[(code, sign)].astype(complex))
    return psi


class AnalyticOracle:
    """Exact-simulation oracle with additive query noise."""

    def __init__(self, ham: SparseHamiltonian, noise: NoiseConfig | None = None,
                 seed: int = 0):
        self.ham = ham
        self.noise = noise or NoiseConfig()
        self.seed = seed
        self.meter = QueryMeter()
        self._eig = None
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.ham.n

    def norm_hint(self) -> float:
        """Coefficient 1-norm, as an energy-scale hint for time schedules."""
        return self.ham.one_norm()

    def _eigensystem(self):
        with self._lock:
            if self._eig is None:
                lam, vecs = np.linalg.eigh(self.ham.to_dense())
                self._eig = (lam, vecs)
            return self._eig

    def fidelity_curve(self, x: int, times, rep: int = 0) -> np.ndarray:
        """Noisy fidelity queries at several times for one label.

        Each (label, time) pair is one metered query; the noise stream is a
        pure function of (oracle seed, label, time, rep), so replicated and
        parallel runs are reproducible.
        """
        times = np.asarray(times, dtype=float)
        pauli.validate_label(x, self.n)
        if x == 0:
            # analytically 1; costs nothing, so it is never metered
            return np.ones_like(times)
        lam, vecs = self._eigensystem()
        exact = _fidelity_from_eig(lam, vecs, x, times, self.n)
        out = np.empty_like(exact)
        for i, (t, val) in enumerate(zip(times, exact)):
            self.meter.count_fidelity(x)
            if self.noise.sigma_f > 0:
                rng = derived_rng(self.seed, "fidelity", x, float_key(t), rep)
                val = val + rng.normal(0.0, self.noise.sigma_f)
            out[i] = val
        return out

    def fidelity_query(self, x: int, t: float, rep: int = 0) -> float:
        return float(self.fidelity_curve(x, [t], rep=rep)[0])

    def expectation_query(self, state: tuple[tuple[int, int], ...], meas: int,
                          t: float, rep: int = 0) -> float:
        """Noisy <P_meas> after evolving the product state for time t.

        Structural SPAM (flip_prob) damps the signal; the additive channel
        draws N(0, spam_sigma^2), clipped to spam_tau when set.
        """
        if len(state) != self.n:
            raise ValueError("state must specify every qubit")
        pauli.validate_label(meas, self.n)
        self.meter.count_expectation()
        lam, vecs = self._eigensystem()
        q = self.noise.flip_prob
        if q > 0:
            # preparation flips scale each qubit's Bloch component
            rho = np.array([[1.0 + 0j]])
            for code, sign in state:
                block = (np.eye(2, dtype=complex)
                         + (1 - 2 * q) * sign * pauli.pauli_matrix(code, 1))
                rho = np.kron(rho, block / 2)
            phases = np.exp(-1j * lam * t)
            u = (vecs * phases) @ vecs.conj().T
            evolved = u @ rho @ u.conj().T
            value = np.trace(pauli.pauli_matrix(meas, self.n) @ evolved).real
            value *= (1 - 2 * q) ** pauli.weight(meas, self.n)
        else:
            psi = _state_vector(state)
            phases = np.exp(-1j * lam * t)
            phi = vecs @ (phases * (vecs.conj().T @ psi))
            value = np.vdot(phi, pauli.pauli_matrix(meas, self.n) @ phi).real
        if self.noise.spam_sigma > 0:
            key = (float_key(t), rep)
            rng = derived_rng(self.seed, "expectation", meas, *key)
            delta = rng.normal(0.0, self.noise.spam_sigma)
            if self.noise.spam_tau is not None:
                delta = float(np.clip(delta, -self.noise.spam_tau, self.noise.spam_tau))
            value = value + delta
        return float(value)

    def meter_snapshot(self) -> dict:
        return self.meter.snapshot()


def transfer_matrix(ham: SparseHamiltonian, t: float) -> np.ndarray:
    """Pauli transfer matrix of exp(-iHt): R[x, y] = 2^-n Tr[P_x U P_y U+]."""
    n = ham.n
    if n > CIRCUIT_QUBIT_CAP:
        raise ValueError(f"transfer matrix capped at n={CIRCUIT_QUBIT_CAP}")
    lam, vecs = np.linalg.eigh(ham.to_dense())
    u = (vecs * np.exp(-1j * lam * t)) @ vecs.conj().T
    cols = np.empty((4 ** n, 4 ** n))
    for y in range(4 ** n):
        mat = u @ pauli.pauli_matrix(y, n) @ u.conj().T
        cols[:, y] = matrix_to_pauli_vec(mat, n).real / 2 ** n
    return cols


def matrix_to_pauli_vec(mat: np.ndarray, n: int) -> np.ndarray:
    """All traces Tr[P_x A] of a 2^n matrix, indexed by label integer."""
    if n == 0:
        return np.array([mat[0, 0]])
    half = 2 ** (n - 1)
    # qubit 0 is the first kron factor, hence the outer 2x2 block structure
    blocks = [[mat[:half, :half], mat[:half, half:]],
              [mat[half:, :half], mat[half:, half:]]]
    out = np.empty(4 ** n, dtype=complex)
    for code in range(4):
        sigma = pauli.pauli_matrix(code, 1)
        partial = (sigma[0, 0] * blocks[0][0] + sigma[0, 1] * blocks[1][0]
                   + sigma[1, 0] * blocks[0][1] + sigma[1, 1] * blocks[1][1])
        out[code::4] = matrix_to_pauli_vec(partial, n - 1)
    return out


class CircuitOracle:
    """Benchmarking-sequence sampler over product stabilizer groups.

    Tracks states as dense Pauli coefficient vectors: Pauli gates flip
    coefficient signs, the gate noise channel is diagonal in this basis,
    and interleaved evolution applies the dense transfer matrix.
    """

    def __init__(self, noise: NoiseConfig, n: int,
                 ham: SparseHamiltonian | None = None, seed: int = 0):
        if noise.lambda_fidelities is None:
            raise ValueError("circuit mode needs lambda_fidelities in NoiseConfig")
        if n > CIRCUIT_QUBIT_CAP:
            raise ValueError(f"circuit mode capped at n={CIRCUIT_QUBIT_CAP}")
        fid = np.asarray(noise.lambda_fidelities, dtype=float)
        if fid.size != 4 ** n:
            raise ValueError("lambda_fidelities length must be 4^n")
        if ham is not None and ham.n != n:
            raise ValueError("hamiltonian size does not match n")
        self.n = n
        self.ham = ham
        self.noise = noise
        self.seed = seed
        self.meter = QueryMeter()
        self._lambda = fid
        self._transfer: dict[int, np.ndarray] = {}
        self._sign_table = None
        self._lock = threading.Lock()

    def channel_fidelity(self, x: int) -> float:
        """True gate-noise fidelity at a label (for tests and references)."""
        return float(self._lambda[x])

    def _transfer_for(self, t: float) -> np.ndarray | None:
        if self.ham is None or t is None:
            return None
        key = float_key(t)
        with self._lock:
            if key not in self._transfer:
                self._transfer[key] = transfer_matrix(self.ham, t)
            return self._transfer[key]

    def _signs(self) -> np.ndarray:
        # sign_table[g, y] = (-1)^<g, y>, the action of gate g on coefficient y
        with self._lock:
            if self._sign_table is None:
                size = 4 ** self.n
                labels = np.arange(size)
                lo = np.int64(pauli.low_mask(self.n))
                g = labels[:, None]
                y = labels[None, :]
                mask = (((g >> 1) & y) ^ ((y >> 1) & g)) & lo
                par = _parity64(mask)
                self._sign_table = (1 - 2 * par).astype(np.int8)
            return self._sign_table

    def sample_rb_sequences(self, group: pauli.StabilizerGroup, m: int,
                            t: float | None, count: int, salt: int = 0
                            ) -> tuple[np.ndarray, np.ndarray]:
        """Run `count` random sequences of m+1 noisy Pauli gates.

        Each gate is followed by the noise channel and, when t is given, by
        the evolution step.  Returns (gate_sums, syndromes): the XOR of the
        sampled gate labels (one per sequence) and the sampled measurement
        syndromes, shape (count, shots), bit k for generator k.
        """
        if group.n != self.n:
            raise ValueError("group size mismatch")
        _require_product_group(group)
        rng = derived_rng(self.seed, "sequences", m, float_key(t or 0.0), salt)
        self.meter.count_sequences(count)
        size = 4 ** self.n
        members = group.elements()
        q = self.noise.flip_prob
        state = np.zeros((count, size))
        weights = np.array([pauli.weight(int(g), self.n) for g in members])
        state[:, members] = (1 - 2 * q) ** weights  # noisy product-state prep
        signs = self._signs()
        transfer = self._transfer_for(t)
        gate_sum = np.zeros(count, dtype=np.int64)
        for _ in range(m + 1):
            gates = rng.integers(0, size, size=count)
            gate_sum ^= gates
            state *= signs[gates]
            state *= self._lambda[None, :]
            if transfer is not None:
                state = state @ transfer.T
        # syndrome distribution: binary transform of the group coefficients
        probs = _fwht_rows(state[:, members]) / 2 ** self.n
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum(axis=1, keepdims=True)
        cdf = np.cumsum(probs, axis=1)
        shots = self.noise.shots
        syndromes = np.empty((count, shots), dtype=np.int64)
        for shot in range(shots):
            draws = rng.random(count)
            idx = (draws[:, None] < cdf).argmax(axis=1).astype(np.int64)
            if q > 0:
                flips = (rng.random((count, self.n)) < q).astype(np.int64)
                idx ^= (flips << np.arange(self.n)).sum(axis=1)
            syndromes[:, shot] = idx
        return gate_sum, syndromes

    def sample_rb_sequence(self, group: pauli.StabilizerGroup, m: int,
                           t: float | None = None, salt: int = 0
                           ) -> tuple[int, int]:
        sums, syn = self.sample_rb_sequences(group, m, t, count=1, salt=salt)
        return int(sums[0]), int(syn[0, 0])

    def meter_snapshot(self) -> dict:
        return self.meter.snapshot()


def _require_product_group(group: pauli.StabilizerGroup) -> None:
    seen = 0
    for g in group.generators:
        if pauli.weight(g, group.n) != 1:
            raise ValueError("circuit mode needs weight-1 generators "
                             "(product stabilizer groups)")
        qubit_mask = (g | (g >> 1)) & pauli.low_mask(group.n)
        if qubit_mask & seen:
            raise ValueError("generators must act on distinct qubits")
        seen |= qubit_mask


def _parity64(arr: np.ndarray) -> np.ndarray:
    work = arr.astype(np.int64).copy()
    for shift in (32, 16, 8, 4, 2, 1):
        work ^= work >> shift
    return (work & 1).astype(np.int8)


def _fwht_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise fast binary transform: out[., s] = sum_e (-1)^{s.e} mat[., e]."""
    out = mat.copy()
    cols = out.shape[1]
    h = 1
    while h < cols:
        out = out.reshape(out.shape[0], -1, 2, h)
        top = out[:, :, 0, :] + out[:, :, 1, :]
        bot = out[:, :, 0, :] - out[:, :, 1, :]
        out = np.stack((top, bot), axis=2).reshape(mat.shape[0], cols)
        h *= 2
    return out
