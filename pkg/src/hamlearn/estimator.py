"""End-to-end learning pipeline and the bin-exponent sweep experiment.

Stage 1 recovers squared coefficients: second-order fidelities are binned
by the subsampling decoder and peeled into a sparse rate map; square roots
give magnitudes.  Stage 2 signs them through process-equation blocks.
A scikit-learn style estimator front end wraps the functional core so
sweeps can clone and reconfigure learners the usual way.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone

from . import decoder, metrics, pauli, signs
from .channels import AnalyticOracle, CircuitOracle
from .fidelity import CircuitSecondOrderSource, SecondOrderSource
from .model import SparseHamiltonian
from .util import derived_rng

NU_FLOOR = 1e-12


@dataclass
class EstimationResult:
    """Full output of one learning run: estimate, diagnostics, metrics."""

    n: int
    seed: int
    mode: str
    config: dict
    estimate: SparseHamiltonian
    rates: dict[int, float]
    magnitudes: dict[int, float]
    sign_vector: dict[int, int]
    nu: float
    normalization_residual: float | None
    decode_rounds: int
    stuck_multitons: int
    zero_certified: int
    conflicts: int
    flags: list[str]
    warnings: list[str]
    meter: dict
    e1: float | None = None
    ea: float | None = None
    support_exact: bool | None = None
    sign_flips: int | None = None
    trace: list[dict] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.flags)

    def to_json_dict(self) -> dict:
        def label_map(d):
            return {pauli.to_string(a, self.n): v for a, v in sorted(d.items())}
        return {
            "n": self.n,
            "seed": self.seed,
            "mode": self.mode,
            "config": self.config,
            "estimate": {
                "n": self.n,
                "terms": [{"pauli": pauli.to_string(a, self.n), "coeff": c}
                          for a, c in self.estimate.sorted_terms()],
            },
            "rates": label_map(self.rates),
            "magnitudes": label_map(self.magnitudes),
            "signs": label_map(self.sign_vector),
            "nu": self.nu,
            "normalization_residual": self.normalization_residual,
            "decode_rounds": self.decode_rounds,
            "stuck_multitons": self.stuck_multitons,
            "zero_certified": self.zero_certified,
            "conflicts": self.conflicts,
            "flags": self.flags,
            "warnings": self.warnings,
            "meter": self.meter,
            "metrics": {
                "e1": self.e1,
                "ea": self.ea,
                "support_exact": self.support_exact,
                "sign_flips": self.sign_flips,
            },
        }


def _oracle_mode(oracle) -> str:
    if isinstance(oracle, AnalyticOracle) or hasattr(oracle, "fidelity_curve"):
        return "analytic"
    if isinstance(oracle, CircuitOracle) or hasattr(oracle, "sample_rb_sequences"):
        return "circuit"
    raise TypeError("oracle provides neither fidelity curves nor sequences")


def _resolve_sigma_f(oracle, mode: str, sigma_f, sequences: int) -> float:
    if sigma_f is not None:
        return float(sigma_f)
    noise = getattr(oracle, "noise", None)
    if mode == "analytic" and noise is not None:
        return float(noise.sigma_f)
    # sequence sampling: statistic std <= 1/sqrt(count*shots) per point,
    # doubled for the amplification through the ratio step
    shots = noise.shots if noise is not None else 1
    return 2.0 / np.sqrt(max(sequences * shots, 1))


def _resolve_t0(t0, sigma_f: float, norm: float, fit_order: int) -> float:
    if t0 is not None:
        if t0 <= 0:
            raise ValueError("t0 must be positive")
        return float(t0)
    # balance regression noise (growing as t0^-2) against series cutoff
    # bias (growing as norm^(order+2) * t0^order)
    raw = max(sigma_f, 1e-8) ** (1.0 / (fit_order + 2)) / max(norm, 1.0)
    return float(np.clip(raw, 1e-4, 0.1))


def _resolve_t1(t1, tau: float, norm: float) -> float:
    if t1 is not None:
        if t1 <= 0:
            raise ValueError("t1 must be positive")
        return float(t1)
    raw = np.sqrt(0.6 * max(tau, 1e-6)) / max(norm, 1.0)
    return float(np.clip(raw, 1e-4, 0.05))


def _resolve_tau(oracle, tau) -> float:
    if tau is not None:
        return float(tau)
    noise = getattr(oracle, "noise", None)
    if noise is None:
        return 0.0
    if noise.spam_tau is not None:
        return float(noise.spam_tau)
    return 3.0 * float(noise.spam_sigma)


def learn(oracle, reference: SparseHamiltonian | None = None, *, b: int,
          groups: int = 3, p1: int | None = None, repeat: int = 1,
          gamma1: float = 0.5, gamma2: float = 0.5, max_rounds: int = 32,
          t0: float | None = None, k_times: int = 5, fit_order: int = 2,
          intercept: str = "fit", sigma_f: float | None = None,
          gap: float | None = 0.01, m: int | None = None,
          t1: float | None = None, k_sign_times: int = 5,
          slope_order: int = 1, vote_blocks: int | None = None,
          sign_guard: float | None = None, tau: float | None = None,
          sequences: int = 2000, keep_trace: bool = False,
          seed: int = 0) -> EstimationResult:
    """Run the full two-stage estimation against an oracle.

    Stage 1: second-order fidelity regression feeds the subsampled bins;
    peeling returns squared coefficients, filtered at max(2 nu, gap/2).
    Stage 2: process-equation blocks sign the magnitudes (analytic oracles
    only; sequence-based oracles return unsigned magnitudes, flagged).
    Every random choice derives from `seed`, so identical configurations
    reproduce identical results bit for bit.
    """
    mode = _oracle_mode(oracle)
    n = oracle.n
    flags: list[str] = []
    warnings: list[str] = []

    sigma_f_val = _resolve_sigma_f(oracle, mode, sigma_f, sequences)
    norm = float(oracle.norm_hint()) if hasattr(oracle, "norm_hint") else 1.0
    t0_val = _resolve_t0(t0, sigma_f_val, norm, fit_order)

    if mode == "analytic":
        source = SecondOrderSource(oracle, t0_val, k_times, fit_order,
                                   intercept, salt=seed)
    else:
        source = CircuitSecondOrderSource(oracle, t0_val, k_times, fit_order,
                                          intercept, sequences=sequences,
                                          salt=seed)

    planned = decoder.plan_groups(n, b, groups, p1, repeat, seed=seed)
    if mode == "circuit":
        wanted = sorted({int(x) for g in planned
                         for x in decoder.coset_labels(g).ravel()})
        source.prefetch(wanted)
    for group in planned:
        decoder.populate_group(group, source)
    # per-bin noise scale: query noise through the regression plus the
    # measured series-cutoff bias, in quadrature, spread over B bins
    noise_part = source.sigma_l1 * sigma_f_val
    trunc_part = source.truncation_scale(sigma_f_val)
    nu = max(float(np.hypot(noise_part, trunc_part)) / np.sqrt(2 ** b),
             NU_FLOOR)
    decode = decoder.peel(planned, nu, gamma1, gamma2, max_rounds)
    rates = dict(decode.rates)
    if decode.conflicts:
        flags.append("decode-conflict")
    if decode.stuck_multitons:
        flags.append("stuck-multiton")

    # identity entry: global normalization check, never an output term
    p0 = rates.get(0)
    others = [v for a, v in rates.items() if a != 0]
    if p0 is None:
        warnings.append("identity-entry-missing")
        normalization = float(abs(sum(others))) if others else None
    else:
        normalization = float(abs(p0 + sum(others)))
    if normalization is not None:
        allowance = 4.0 * nu * np.sqrt(max(len(others), 1))
        if normalization > allowance:
            flags.append("normalization")

    floor = max(2.0 * nu, (gap / 2.0) if gap else 0.0)
    kept: dict[int, float] = {}
    for a, v in rates.items():
        if a == 0 or abs(v) < floor:
            continue
        if v < 0:
            warnings.append("negative-rate-dropped")
            continue
        kept[a] = v
    magnitudes = {a: float(np.sqrt(v)) for a, v in kept.items()}
    support = sorted(magnitudes)

    config = {
        "b": b, "groups": groups,
        "p1": planned[0].p1, "repeat": repeat,
        "gamma1": gamma1, "gamma2": gamma2, "max_rounds": max_rounds,
        "t0": t0_val, "k_times": k_times, "fit_order": fit_order,
        "intercept": intercept, "sigma_f": sigma_f_val, "gap": gap,
        "sequences": sequences if mode == "circuit" else None,
        "seed": seed,
    }

    sign_vector: dict[int, int] = {}
    t1_val = None
    if not support:
        flags.append("empty-support")
        estimate = SparseHamiltonian(n, {})
    elif mode == "circuit":
        flags.append("unsigned")
        sign_vector = {a: 1 for a in support}
        estimate = SparseHamiltonian(n, dict(magnitudes))
    else:
        s_est = len(support)
        m_val = m if m is not None else 8 * s_est
        tau_val = _resolve_tau(oracle, tau)
        t1_val = _resolve_t1(t1, tau_val, norm)
        blocks_val = vote_blocks
        if blocks_val is None:
            blocks_val = 5 if s_est >= 2 * n else 1
        if blocks_val < 1 or blocks_val % 2 == 0:
            raise ValueError("vote_blocks must be odd and positive")
        guard = sign_guard
        if guard is None:
            guard = float(np.sqrt(gap) / 2.0) if gap else 0.0
        if tau_val > 0 and m_val > t1_val * t1_val * (gap or 0.0) / tau_val ** 2:
            warnings.append("sign-equation-count-above-window")
        sign_blocks = []
        for blk in range(blocks_val):
            system = signs.build_equations(
                oracle, support, m_val, t1_val, k_times=k_sign_times,
                slope_order=slope_order, seed=seed, salt=blk)
            solution, info = signs.solve_system(system, tau=tau_val)
            if info["fallback"]:
                warnings.append("sign-solver-fallback")
            sign_blocks.append(signs.extract_signs(solution, guard))
        voted = signs.majority_vote(sign_blocks)
        for idx, a in enumerate(support):
            sgn = int(voted[idx])
            if sgn == 0:
                flags.append("undecided-sign")
                sgn = 1
            sign_vector[a] = sgn
        estimate = SparseHamiltonian(
            n, {a: sign_vector[a] * magnitudes[a] for a in support})
        config.update({"m": m_val, "t1": t1_val, "k_sign_times": k_sign_times,
                       "slope_order": slope_order, "vote_blocks": blocks_val,
                       "sign_guard": guard, "tau": tau_val})

    result = EstimationResult(
        n=n, seed=seed, mode=mode, config=config, estimate=estimate,
        rates=rates, magnitudes=magnitudes, sign_vector=sign_vector,
        nu=float(nu), normalization_residual=normalization,
        decode_rounds=decode.rounds, stuck_multitons=decode.stuck_multitons,
        zero_certified=decode.zero_certified,
        conflicts=len(decode.conflicts),
        flags=sorted(set(flags)), warnings=sorted(set(warnings)),
        meter=oracle.meter_snapshot(),
        trace=decode.trace if keep_trace else [])
    if reference is not None and reference.sparsity > 0:
        result.e1 = metrics.relative_error(reference, estimate)
        result.ea = metrics.average_error(reference, estimate)
        result.support_exact = metrics.support_exact(reference, estimate)
        result.sign_flips = metrics.sign_flips(reference, estimate)
    return result


class HamiltonianLearner(BaseEstimator):
    """Estimator wrapper around `learn` with the usual fit/get_params API.

    fit(oracle, reference=None) runs both stages and stores the outcome on
    trailing-underscore attributes; parameters mirror `learn` keyword for
    keyword so grid sweeps can clone and reconfigure instances.
    """

    def __init__(self, b: int = 4, groups: int = 3, p1: int | None = None,
                 repeat: int = 1, gamma1: float = 0.5, gamma2: float = 0.5,
                 max_rounds: int = 32, t0: float | None = None,
                 k_times: int = 5, fit_order: int = 2, intercept: str = "fit",
                 sigma_f: float | None = None, gap: float | None = 0.01,
                 m: int | None = None, t1: float | None = None,
                 k_sign_times: int = 5, slope_order: int = 1,
                 vote_blocks: int | None = None,
                 sign_guard: float | None = None, tau: float | None = None,
                 sequences: int = 2000, keep_trace: bool = False,
                 seed: int = 0):
        self.b = b
        self.groups = groups
        self.p1 = p1
        self.repeat = repeat
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.max_rounds = max_rounds
        self.t0 = t0
        self.k_times = k_times
        self.fit_order = fit_order
        self.intercept = intercept
        self.sigma_f = sigma_f
        self.gap = gap
        self.m = m
        self.t1 = t1
        self.k_sign_times = k_sign_times
        self.slope_order = slope_order
        self.vote_blocks = vote_blocks
        self.sign_guard = sign_guard
        self.tau = tau
        self.sequences = sequences
        self.keep_trace = keep_trace
        self.seed = seed

    def fit(self, oracle, reference: SparseHamiltonian | None = None):
        self.result_ = learn(oracle, reference, **self.get_params())
        self.hamiltonian_ = self.result_.estimate
        self.support_ = sorted(self.hamiltonian_.terms)
        return self

    def score(self, oracle=None, reference: SparseHamiltonian | None = None):
        """Negative relative error (higher is better); needs a reference
        either here or from fit."""
        if reference is not None:
            return -metrics.relative_error(reference, self.hamiltonian_)
        if self.result_.e1 is None:
            raise ValueError("no reference available to score against")
        return -self.result_.e1


@dataclass
class SweepRow:
    b: int
    trials: int
    q25: float | None
    q50: float | None
    q75: float | None
    iqr: float | None
    support_rate: float | None
    mean_distinct_queries: float
    stuck_frequency: float
    flagged_frequency: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    threshold_b: int | None
    results: dict[tuple[int, int], EstimationResult]

    def to_csv(self) -> str:
        header = ("b,trials,e1_q25,e1_q50,e1_q75,e1_iqr,support_rate,"
                  "mean_distinct_queries,stuck_frequency,flagged_frequency")
        lines = [header]
        for r in self.rows:
            cells = [r.b, r.trials, r.q25, r.q50, r.q75, r.iqr,
                     r.support_rate, r.mean_distinct_queries,
                     r.stuck_frequency, r.flagged_frequency]
            lines.append(",".join("" if c is None else repr(c) if isinstance(c, float) else str(c)
                                  for c in cells))
        return "\n".join(lines) + "\n"


def threshold_sweep(oracle_factory, b_values, trials: int,
                    learner: HamiltonianLearner | None = None,
                    threads: int | None = None, seed: int = 0) -> SweepResult:
    """Repeat learning across bin exponents to locate the error collapse.

    `oracle_factory(trial_seed)` returns a fresh (oracle, reference) pair;
    passing a single oracle instead reuses it with reseeded query noise
    (reference-free diagnostics only).  The threshold is the smallest b
    whose median error drops at least tenfold from the previous b.
    """
    b_values = sorted(set(int(v) for v in b_values))
    if trials < 1:
        raise ValueError("need at least one trial")
    base = learner if learner is not None else HamiltonianLearner()

    def make(trial_seed):
        if callable(oracle_factory):
            return oracle_factory(trial_seed)
        return oracle_factory, None

    def run(task):
        b, trial = task
        trial_seed = int(derived_rng(seed, "sweep", b, trial).integers(2 ** 31))
        oracle, reference = make(trial_seed)
        worker = clone(base)
        worker.set_params(b=b, seed=trial_seed)
        worker.fit(oracle, reference)
        return (b, trial), worker.result_

    tasks = [(b, trial) for b in b_values for trial in range(trials)]
    workers = threads if threads is not None else (os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(run, tasks))
    else:
        results = dict(map(run, tasks))

    rows = []
    for b in b_values:
        runs = [results[(b, trial)] for trial in range(trials)]
        errs = [r.e1 for r in runs if r.e1 is not None]
        if errs:
            q25, q50, q75 = (float(v) for v in np.percentile(errs, (25, 50, 75)))
            iqr = q75 - q25
            supp = float(np.mean([bool(r.support_exact) for r in runs]))
        else:
            q25 = q50 = q75 = iqr = supp = None
        rows.append(SweepRow(
            b, trials, q25, q50, q75, iqr, supp,
            float(np.mean([r.meter.get("distinct_fidelity_labels", 0)
                           for r in runs])),
            float(np.mean([r.stuck_multitons > 0 for r in runs])),
            float(np.mean([r.flagged for r in runs]))))

    threshold_b = None
    for prev, cur in zip(rows, rows[1:]):
        if prev.q50 is not None and cur.q50 is not None and prev.q50 > 0:
            if cur.q50 <= prev.q50 / 10.0:
                threshold_b = cur.b
                break
    return SweepResult(rows, threshold_b, results)
