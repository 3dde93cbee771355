"""Pauli-fidelity estimation and second-order coefficient extraction.

The analytic path queries fidelities directly and regresses the even
short-time expansion per label.  The circuit path first estimates decay
bases from randomized gate sequences (reference and interleaved), takes
their ratio to isolate the evolution channel, and then runs the same
regression.  Either way the product is the per-label second-order
coefficient

    f2[x] = sum_a s_a^2 ((-1)^{<a,x>} - 1)  <=  0,

which downstream modules treat as a sparse-rate transform sample.
"""

from dataclasses import dataclass, field

import numpy as np

from . import pauli
from .channels import AnalyticOracle, CircuitOracle
from .util import derived_rng


@dataclass
class DecaySamples:
    """Fidelity samples on a shared time schedule, one series per label."""

    times: np.ndarray
    values: dict[int, np.ndarray]


@dataclass
class SecondOrderFidelity:
    """Regressed second-order coefficients with per-label diagnostics."""

    values: dict[int, float]
    raw: dict[int, float]
    stderr: dict[int, float]
    sigma_l1: float
    sigma_l2: float
    flagged: list[int] = field(default_factory=list)


@dataclass
class FidelityEstimate:
    """One decay-estimator output: residual r, base 1 - r, resolved length."""

    residual: float
    base: float
    length: int
    flagged: bool = False


def second_order_design(times: np.ndarray, fit_order: int = 2,
                        intercept: str = "fit"):
    """Design matrix of the even-order fit and the extraction row for the
    t^2 coefficient.

    Returns (X, a, l1, l2): estimate = a . values, with worst-case noise
    amplification l1 = ||a||_1 and Gaussian amplification l2 = ||a||_2.
    """
    times = np.asarray(times, dtype=float)
    if fit_order not in (2, 4, 6):
        raise ValueError("fit order must be 2, 4 or 6")
    if intercept not in ("fit", "pinned"):
        raise ValueError("intercept must be 'fit' or 'pinned'")
    powers = list(range(2, fit_order + 1, 2))
    cols = [times ** p for p in powers]
    if intercept == "fit":
        cols = [np.ones_like(times)] + cols
    x_mat = np.stack(cols, axis=1)
    if len(times) < x_mat.shape[1]:
        raise ValueError(f"need at least {x_mat.shape[1]} times for order "
                         f"{fit_order} with intercept={intercept!r}")
    if len(set(np.round(times, 15))) < x_mat.shape[1]:
        raise ValueError("times must be distinct")
    # scale columns before inverting to keep the wildly different powers tame
    scale = np.linalg.norm(x_mat, axis=0)
    pinv = np.linalg.pinv(x_mat / scale) / scale[:, None]
    row = pinv[1] if intercept == "fit" else pinv[0]
    return x_mat, row, float(np.abs(row).sum()), float(np.linalg.norm(row))


def truncation_scale(times, samples: dict[int, np.ndarray], fit_order: int,
                     intercept: str, sigma_f: float = 0.0,
                     max_probes: int = 32) -> float:
    """Typical systematic error of the t^2 coefficient from series cutoff.

    Refits up to max_probes cached series two even orders higher and reads
    the rms shift of the coefficient, with the known per-query noise
    variance subtracted so the probe reports bias rather than noise.
    Returns 0 when no higher order is available (top order or too few
    times).
    """
    labels = sorted(samples)[:max_probes]
    hi_order = fit_order + 2
    if not labels or hi_order > 6:
        return 0.0
    cols = hi_order // 2 + (1 if intercept == "fit" else 0)
    if len(times) < cols:
        return 0.0
    _, row_lo, _, _ = second_order_design(times, fit_order, intercept)
    _, row_hi, _, _ = second_order_design(times, hi_order, intercept)
    delta = row_hi - row_lo
    shifts = []
    for lab in labels:
        y = np.asarray(samples[lab], dtype=float)
        if intercept == "pinned":
            y = y - 1.0
        shifts.append(float(delta @ y))
    raw = float(np.mean(np.square(shifts)))
    noise_var = float(sigma_f * sigma_f * (delta @ delta))
    return float(np.sqrt(max(raw - noise_var, 0.0)))


def regress_second_order(samples: DecaySamples, fit_order: int = 2,
                         intercept: str = "fit") -> SecondOrderFidelity:
    """Per-label OLS on even monomials; the t^2 coefficient is the output.

    Values are clipped to be nonpositive (the exact coefficient never is
    positive); labels whose raw estimate exceeds +3 standard errors are
    flagged as inconsistent rather than silently clipped.
    """
    x_mat, row, l1, l2 = second_order_design(samples.times, fit_order, intercept)
    dof = x_mat.shape[0] - x_mat.shape[1]
    values: dict[int, float] = {}
    raw: dict[int, float] = {}
    stderr: dict[int, float] = {}
    flagged: list[int] = []
    scale = np.linalg.norm(x_mat, axis=0)
    pinv = np.linalg.pinv(x_mat / scale) / scale[:, None]
    c2_index = 1 if intercept == "fit" else 0
    for label, series in samples.values.items():
        y = np.asarray(series, dtype=float)
        if intercept == "pinned":
            y = y - 1.0
        coeffs = pinv @ y
        c2 = float(coeffs[c2_index])
        resid = y - x_mat @ coeffs
        if dof > 0:
            err = float(np.sqrt(resid @ resid / dof) * l2)
        else:
            err = float("nan")
        raw[label] = c2
        stderr[label] = err
        if c2 > 0:
            if dof > 0 and np.isfinite(err) and c2 > 3 * err:
                flagged.append(label)
            values[label] = 0.0
        else:
            values[label] = c2
    return SecondOrderFidelity(values, raw, stderr, l1, l2, flagged)


def _parity_rows(arr: np.ndarray) -> np.ndarray:
    bit = arr.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        bit ^= bit >> shift
    return bit & 1


def _sequence_statistics(oracle: CircuitOracle, group: pauli.StabilizerGroup,
                         coords: dict[int, int], m: int, t: float | None,
                         count: int, salt: int) -> dict[int, float]:
    """Mean sequence statistic per label over one shared batch."""
    gate_sums, syndromes = oracle.sample_rb_sequences(group, m, t, count, salt)
    gate_syn = np.zeros(len(gate_sums), dtype=np.int64)
    lo = pauli.low_mask(group.n)
    for k, g in enumerate(group.generators):
        mask = (((gate_sums >> 1) & g) ^ ((np.int64(g) >> 1) & gate_sums)) & lo
        gate_syn |= _parity_rows(mask) << k
    total = gate_syn[:, None] ^ syndromes
    return {x: float(1.0 - 2.0 * _parity_rows(total & e).mean())
            for x, e in coords.items()}


def _decay_estimator(oracle: CircuitOracle, group: pauli.StabilizerGroup,
                     labels, sequences: int, t: float | None = None,
                     max_length: int = 2 ** 13, salt: int = 0
                     ) -> dict[int, FidelityEstimate]:
    labels = list(labels)
    for x in labels:
        pauli.validate_label(x, group.n)
    out: dict[int, FidelityEstimate] = {}
    pending = []
    coords = {}
    for x in labels:
        if x == 0:
            out[0] = FidelityEstimate(0.0, 1.0, 0)
        else:
            coords[x] = group.coordinates(x)
            pending.append(x)
    if not pending:
        return out
    ref = _sequence_statistics(oracle, group, coords, 0, t, sequences, salt)
    m = 1
    while pending and m <= max_length:
        stats = _sequence_statistics(oracle, group,
                                     {x: coords[x] for x in pending},
                                     m, t, sequences, salt + m)
        still = []
        for x in pending:
            v, w = ref[x], stats[x]
            if v <= 0 or w <= 0:
                out[x] = FidelityEstimate(1.0, 0.0, m)
            elif w <= v / 3:
                base = (w / v) ** (1.0 / m)
                out[x] = FidelityEstimate(1.0 - base, base, m)
            else:
                still.append(x)
        pending = still
        m *= 2
    for x in pending:
        # never crossed the resolution ratio: decay too slow for the cap
        v, w = ref[x], stats[x]
        base = (w / v) ** (2.0 / m)  # m was doubled after the last batch
        out[x] = FidelityEstimate(1.0 - base, base, m // 2, flagged=True)
    return out


def festimator(oracle: CircuitOracle, group: pauli.StabilizerGroup, labels,
               sequences: int, max_length: int = 2 ** 13, salt: int = 0
               ) -> dict[int, FidelityEstimate]:
    """Gate-noise decay estimator: shared random Pauli sequences, doubling
    lengths until the statistic drops to a third of the one-gate reference."""
    return _decay_estimator(oracle, group, labels, sequences, None,
                            max_length, salt)


def hfestimator(oracle: CircuitOracle, group: pauli.StabilizerGroup, labels,
                sequences: int, t: float, max_length: int = 2 ** 13,
                salt: int = 0) -> dict[int, FidelityEstimate]:
    """Interleaved variant: every gate is followed by the evolution step, so
    the fitted base is the composite (noise x evolution) fidelity."""
    return _decay_estimator(oracle, group, labels, sequences, t,
                            max_length, salt)


def ratio_estimate(composite: dict[int, FidelityEstimate],
                   reference: dict[int, FidelityEstimate]) -> dict[int, float]:
    """Evolution fidelity as composite/reference base per label.

    Valid because the gate noise is a Pauli channel, so composite
    fidelities factor label by label.
    """
    out = {}
    for x, comp in composite.items():
        ref = reference[x]
        if ref.base <= 0:
            out[x] = float("nan")
        else:
            out[x] = comp.base / ref.base
    return out


def collect_decay_samples(oracle: AnalyticOracle, labels, times,
                          salt: int = 0) -> DecaySamples:
    """Direct noisy fidelity curves for a set of labels (analytic mode)."""
    times = np.asarray(times, dtype=float)
    values = {x: oracle.fidelity_curve(x, times, rep=salt) for x in labels}
    return DecaySamples(times, values)


def estimate_sigma_f(oracle: AnalyticOracle, label: int, t: float,
                     reps: int = 32) -> float:
    """Per-query fidelity noise level from repeated queries of one label."""
    vals = [oracle.fidelity_query(label, t, rep=1000 + i) for i in range(reps)]
    return float(np.std(vals, ddof=1))


class SecondOrderSource:
    """Deduplicated second-order fidelity map backed by an analytic oracle.

    Each distinct label is fetched once: the oracle is queried on the time
    schedule, regressed, and cached.  The instance is callable so the
    decoder can treat it as a plain transform-sample function.
    """

    def __init__(self, oracle: AnalyticOracle, t0: float, k_times: int = 5,
                 fit_order: int = 2, intercept: str = "fit", salt: int = 0):
        if t0 <= 0:
            raise ValueError("t0 must be positive")
        self.oracle = oracle
        self.times = t0 * np.arange(1, k_times + 1)
        self.fit_order = fit_order
        self.intercept = intercept
        self.salt = salt
        _, _, self.sigma_l1, self.sigma_l2 = second_order_design(
            self.times, fit_order, intercept)
        self._cache: dict[int, float] = {0: 0.0}
        self.samples: dict[int, np.ndarray] = {}
        self.flagged: set[int] = set()

    def __call__(self, label: int) -> float:
        if label not in self._cache:
            samples = collect_decay_samples(self.oracle, [label], self.times,
                                            salt=self.salt)
            fit = regress_second_order(samples, self.fit_order, self.intercept)
            self._cache[label] = fit.values[label]
            self.samples[label] = samples.values[label]
            self.flagged.update(fit.flagged)
        return self._cache[label]

    def noise_scale(self, sigma_f: float | None = None) -> float:
        """Worst-case second-order noise per label for a given (or measured)
        per-query noise level."""
        if sigma_f is None:
            probe_t = float(self.times[-1])
            sigma_f = estimate_sigma_f(self.oracle, 1, probe_t)
        return self.sigma_l1 * sigma_f

    def truncation_scale(self, sigma_f: float = 0.0) -> float:
        """Systematic error probe over the labels fetched so far."""
        return truncation_scale(self.times, self.samples, self.fit_order,
                                self.intercept, sigma_f)


class CircuitSecondOrderSource:
    """Second-order fidelity map backed by benchmarking sequences.

    Labels are batched into covering stabilizer groups; each group shares
    its reference and interleaved sequence batches across all member
    labels before the ratio and regression steps.
    """

    def __init__(self, oracle: CircuitOracle, t0: float, k_times: int = 5,
                 fit_order: int = 2, intercept: str = "fit",
                 sequences: int = 2000, max_length: int = 2 ** 13,
                 salt: int = 0):
        self.oracle = oracle
        self.times = t0 * np.arange(1, k_times + 1)
        self.fit_order = fit_order
        self.intercept = intercept
        self.sequences = sequences
        self.max_length = max_length
        self.salt = salt
        _, _, self.sigma_l1, self.sigma_l2 = second_order_design(
            self.times, fit_order, intercept)
        self._cache: dict[int, float] = {0: 0.0}
        self.samples: dict[int, np.ndarray] = {}
        self.flagged: set[int] = set()
        self._batch = 0

    def prefetch(self, labels) -> None:
        pending = [x for x in dict.fromkeys(labels) if x not in self._cache]
        while pending:
            group = pauli.covering_group(pending[0], self.oracle.n)
            members = []
            rest = []
            for x in pending:
                try:
                    group.coordinates(x)
                    members.append(x)
                except ValueError:
                    rest.append(x)
            self._fetch_group(group, members)
            pending = rest

    def _fetch_group(self, group: pauli.StabilizerGroup, labels) -> None:
        self._batch += 1
        base_salt = self.salt + (self._batch << 20)
        ref = festimator(self.oracle, group, labels, self.sequences,
                         self.max_length, salt=base_salt)
        series = {x: np.empty(len(self.times)) for x in labels}
        for i, t in enumerate(self.times):
            comp = hfestimator(self.oracle, group, labels, self.sequences,
                               float(t), self.max_length,
                               salt=base_salt + ((i + 1) << 14))
            ratios = ratio_estimate(comp, ref)
            for x in labels:
                series[x][i] = ratios[x]
        fit = regress_second_order(DecaySamples(self.times, series),
                                   self.fit_order, self.intercept)
        self._cache.update(fit.values)
        self.samples.update(series)
        self.flagged.update(fit.flagged)

    def __call__(self, label: int) -> float:
        if label not in self._cache:
            self.prefetch([label])
        return self._cache[label]

    def truncation_scale(self, sigma_f: float = 0.0) -> float:
        """Systematic error probe over the labels fetched so far."""
        return truncation_scale(self.times, self.samples, self.fit_order,
                                self.intercept, sigma_f)
