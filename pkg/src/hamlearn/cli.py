"""Command-line front end: batch experiments with archivable configs.

Every subcommand reads one declarative config (JSON file via --config,
individual flags override single keys) and writes machine-readable
output.  Reruns of the same config are byte-identical; nothing here
records wall-clock time.  Exit codes: 0 success, 1 usage or runtime
error, 2 finished but flagged diagnostics.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import decoder, pauli, signs
from .channels import AnalyticOracle, CircuitOracle, NoiseConfig, uniform_channel
from .estimator import HamiltonianLearner, learn, threshold_sweep
from .model import (SparseHamiltonian, random_sparse, read_hamiltonian,
                    tfim_random, write_hamiltonian)
from .util import dump_json


class UsageError(Exception):
    pass


@dataclass
class ModelConfig:
    """Where the target Hamiltonian and its oracle come from."""

    model: str = "tfim"             # tfim | random | file
    n: int | None = None
    s: int | None = None            # sparsity for model=random
    coupling_min: float = 0.1       # tfim coupling magnitude range
    coupling_max: float = 1.0
    magnitude_min: float = 0.1      # random-model magnitude range
    magnitude_max: float = 1.0
    hamiltonian: str | None = None  # term file for model=file
    instance_seed: int | None = None  # defaults to seed
    mode: str = "analytic"          # analytic | circuit
    sigma_f: float = 0.0
    spam_sigma: float = 0.0
    spam_tau: float | None = None
    flip_prob: float = 0.0
    shots: int = 1
    lambda_fidelity: float | None = None  # uniform channel fidelity (circuit)
    sequences: int = 2000
    seed: int = 0


@dataclass
class LearnConfig(ModelConfig):
    b: int = 4
    groups: int = 3
    p1: int | None = None
    repeat: int = 1
    gamma1: float = 0.5
    gamma2: float = 0.5
    max_rounds: int = 32
    t0: float | None = None
    k_times: int = 5
    fit_order: int = 2
    intercept: str = "fit"
    gap: float | None = 0.01
    m: int | None = None
    t1: float | None = None
    k_sign_times: int = 5
    slope_order: int = 1
    vote_blocks: int | None = None
    sign_guard: float | None = None
    tau: float | None = None
    out: str | None = None
    trace: str | None = None


@dataclass
class SweepConfig(LearnConfig):
    b_min: int = 2
    b_max: int = 6
    trials: int = 10
    threads: int | None = None
    csv_out: str | None = None


@dataclass
class GenConfig:
    model: str = "tfim"
    n: int | None = None
    s: int | None = None
    coupling_min: float = 0.1
    coupling_max: float = 1.0
    magnitude_min: float = 0.1
    magnitude_max: float = 1.0
    seed: int = 0
    out: str | None = None


@dataclass
class DecodeOnlyConfig:
    table: str | None = None        # second-order value file
    n: int | None = None
    b: int = 4
    groups: int = 3
    p1: int | None = None
    repeat: int = 1
    gamma1: float = 0.5
    gamma2: float = 0.5
    max_rounds: int = 32
    nu: float = 1e-9
    gap: float | None = None
    seed: int = 0
    out: str | None = None
    trace: str | None = None


@dataclass
class SignsOnlyConfig:
    system: str | None = None       # dumped equation-system JSON
    tau: float = 0.0
    epsilon: float | None = None
    sign_guard: float = 0.0
    out: str | None = None


@dataclass
class BenchConfig:
    n_min: int = 3
    n_max: int = 7
    b: int = 4
    groups: int = 3
    p1: int | None = None
    repeat: int = 1
    out: str | None = None


_FIELD_HELP = {
    "model": "target family: tfim, random, or file",
    "n": "qubit count (tfim/random models)",
    "s": "number of terms for model=random",
    "coupling_min": "lower coupling magnitude for model=tfim",
    "coupling_max": "upper coupling magnitude for model=tfim",
    "magnitude_min": "lower coefficient magnitude for model=random",
    "magnitude_max": "upper coefficient magnitude for model=random",
    "hamiltonian": "term file path for model=file",
    "instance_seed": "seed for the model draw (defaults to seed)",
    "mode": "oracle type: analytic or circuit",
    "sigma_f": "gaussian noise level per fidelity query",
    "spam_sigma": "gaussian noise level per expectation query",
    "spam_tau": "hard bound clipping expectation noise",
    "flip_prob": "per-qubit preparation/readout flip probability",
    "shots": "readouts per sampled sequence",
    "lambda_fidelity": "uniform channel fidelity for mode=circuit",
    "sequences": "sampled sequences per decay batch (mode=circuit)",
    "seed": "master seed for everything downstream",
    "b": "bin exponent: 2^b bins per group",
    "groups": "number of subsampling groups",
    "p1": "random offsets per group (default max(8, 2n))",
    "repeat": "index-bit repetition factor: 1, 3, or 5",
    "gamma1": "zero-ton threshold slack",
    "gamma2": "single-ton threshold slack",
    "max_rounds": "peeling pass limit",
    "t0": "base time step of the fidelity schedule (default auto)",
    "k_times": "fidelity sample times per label",
    "fit_order": "even fit order for the t^2 coefficient: 2, 4, or 6",
    "intercept": "fidelity fit intercept: fit or pinned",
    "gap": "assumed smallest squared coefficient (rate filter floor)",
    "m": "process equations per sign block (default 8s)",
    "t1": "slope time step for sign equations (default auto)",
    "k_sign_times": "expectation sample times per equation",
    "slope_order": "odd slope fit order: 1, 3, or 5",
    "vote_blocks": "independent sign blocks to vote (odd; default auto)",
    "sign_guard": "abstain band for sign extraction (default sqrt(gap)/2)",
    "tau": "expectation noise bound (default from noise config)",
    "out": "output file path",
    "trace": "decoder trace output path (JSON lines)",
    "b_min": "smallest bin exponent in the sweep",
    "b_max": "largest bin exponent in the sweep",
    "trials": "independent trials per bin exponent",
    "threads": "parallel workers (default: cpu count)",
    "csv_out": "sweep table output path (CSV)",
    "table": "second-order value file (one '<Pauli> <value>' per line)",
    "nu": "per-bin noise scale for detection thresholds",
    "system": "equation-system JSON produced by a learn/signs dump",
    "epsilon": "explicit residual allowance (default from tau)",
    "n_min": "smallest qubit count to tabulate",
    "n_max": "largest qubit count to tabulate",
}


def _add_config_arguments(parser: argparse.ArgumentParser, cls) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="JSON config; flags override its keys")
    for f in dataclasses.fields(cls):
        kind = {"int | None": int, "float | None": float,
                "str | None": str, "int": int, "float": float,
                "str": str}[f.type]
        parser.add_argument("--" + f.name.replace("_", "-"),
                            dest=f.name, type=kind, default=None,
                            metavar=f.name.upper(),
                            help=_FIELD_HELP[f.name])


def _load_config(cls, args: argparse.Namespace):
    values = {}
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError("unknown config keys: " + ", ".join(unknown))
        values.update(data)
    for f in dataclasses.fields(cls):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return cls(**values)


def _build_instance(cfg) -> tuple[SparseHamiltonian, object]:
    instance_seed = cfg.instance_seed if cfg.instance_seed is not None else cfg.seed
    if cfg.model == "tfim":
        if cfg.n is None:
            raise UsageError("model=tfim needs --n")
        ham = tfim_random(cfg.n, (cfg.coupling_min, cfg.coupling_max),
                          seed=instance_seed)
    elif cfg.model == "random":
        if cfg.n is None or cfg.s is None:
            raise UsageError("model=random needs --n and --s")
        ham = random_sparse(cfg.n, cfg.s,
                            (cfg.magnitude_min, cfg.magnitude_max),
                            seed=instance_seed)
    elif cfg.model == "file":
        if cfg.hamiltonian is None:
            raise UsageError("model=file needs --hamiltonian")
        ham = read_hamiltonian(cfg.hamiltonian)
    else:
        raise UsageError(f"unknown model {cfg.model!r}")

    if cfg.mode == "analytic":
        noise = NoiseConfig(sigma_f=cfg.sigma_f, spam_sigma=cfg.spam_sigma,
                            spam_tau=cfg.spam_tau, flip_prob=cfg.flip_prob,
                            shots=cfg.shots)
        oracle = AnalyticOracle(ham, noise, seed=cfg.seed)
    elif cfg.mode == "circuit":
        fid = cfg.lambda_fidelity if cfg.lambda_fidelity is not None else 1.0
        noise = NoiseConfig(spam_sigma=cfg.spam_sigma, spam_tau=cfg.spam_tau,
                            flip_prob=cfg.flip_prob, shots=cfg.shots,
                            lambda_fidelities=uniform_channel(ham.n, fid))
        oracle = CircuitOracle(noise, ham.n, ham=ham, seed=cfg.seed)
    else:
        raise UsageError(f"unknown mode {cfg.mode!r}")
    return ham, oracle


_LEARN_KEYS = ("b", "groups", "p1", "repeat", "gamma1", "gamma2",
               "max_rounds", "t0", "k_times", "fit_order", "intercept",
               "m", "t1", "k_sign_times", "slope_order", "vote_blocks",
               "sign_guard", "tau", "sequences", "seed")


def _learn_kwargs(cfg: LearnConfig) -> dict:
    kw = {k: getattr(cfg, k) for k in _LEARN_KEYS}
    kw["gap"] = cfg.gap
    kw["sigma_f"] = cfg.sigma_f if cfg.mode == "analytic" else None
    return kw


def cmd_learn(cfg: LearnConfig) -> int:
    ham, oracle = _build_instance(cfg)
    result = learn(oracle, ham, keep_trace=cfg.trace is not None,
                   **_learn_kwargs(cfg))
    doc = result.to_json_dict()
    doc["config_input"] = dataclasses.asdict(cfg)
    if cfg.out:
        dump_json(doc, cfg.out)
    if cfg.trace:
        with open(cfg.trace, "w", encoding="utf-8") as fh:
            for event in result.trace:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
    print(f"n={result.n} terms={result.estimate.sparsity} "
          f"e1={_fmt(result.e1)} ea={_fmt(result.ea)} "
          f"support_exact={result.support_exact} "
          f"sign_flips={result.sign_flips}")
    print(f"queries: {result.meter}")
    if result.flags:
        print("flags: " + ", ".join(result.flags))
    if result.warnings:
        print("warnings: " + ", ".join(result.warnings))
    return 2 if result.flags else 0


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.6g}"


def cmd_sweep_b(cfg: SweepConfig) -> int:
    if cfg.n is None and cfg.model != "file":
        raise UsageError("sweep needs --n (or model=file)")
    if cfg.b_min < 1 or cfg.b_min > cfg.b_max:
        raise UsageError("need 1 <= b_min <= b_max")
    n = cfg.n if cfg.n is not None else read_hamiltonian(cfg.hamiltonian).n
    if cfg.b_max >= 2 * n:
        raise UsageError("b_max must stay below 2n")

    def factory(trial_seed: int):
        sub = dataclasses.replace(cfg, seed=trial_seed,
                                  instance_seed=trial_seed)
        ham, oracle = _build_instance(sub)
        return oracle, ham

    base = HamiltonianLearner(**_learn_kwargs(cfg))
    sweep = threshold_sweep(factory, range(cfg.b_min, cfg.b_max + 1),
                            cfg.trials, learner=base, threads=cfg.threads,
                            seed=cfg.seed)
    csv_text = sweep.to_csv()
    if cfg.csv_out:
        with open(cfg.csv_out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    if cfg.out:
        dump_json({
            "threshold_b": sweep.threshold_b,
            "rows": [dataclasses.asdict(r) for r in sweep.rows],
            "config_input": dataclasses.asdict(cfg),
        }, cfg.out)
    print(csv_text, end="")
    print(f"threshold_b={sweep.threshold_b}")
    return 0


def cmd_gen(cfg: GenConfig) -> int:
    if cfg.model == "tfim":
        if cfg.n is None:
            raise UsageError("model=tfim needs --n")
        ham = tfim_random(cfg.n, (cfg.coupling_min, cfg.coupling_max),
                          seed=cfg.seed)
    elif cfg.model == "random":
        if cfg.n is None or cfg.s is None:
            raise UsageError("model=random needs --n and --s")
        ham = random_sparse(cfg.n, cfg.s,
                            (cfg.magnitude_min, cfg.magnitude_max),
                            seed=cfg.seed)
    else:
        raise UsageError(f"unknown model {cfg.model!r}")
    if not cfg.out:
        raise UsageError("gen needs --out")
    write_hamiltonian(ham, cfg.out)
    print(f"wrote {ham.sparsity} terms on {ham.n} qubits to {cfg.out}")
    return 0


def read_f2_table(path: str) -> tuple[int, dict[int, float]]:
    """Second-order value file: '<PauliString> <value>' per line, with
    '#' comments; absent labels are zero."""
    table: dict[int, float] = {}
    n = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected "
                                 f"'<Pauli> <value>'")
            try:
                label, width = pauli.from_string(parts[0])
                value = float(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if n is None:
                n = width
            elif width != n:
                raise ValueError(f"{path}:{lineno}: width {width} != {n}")
            if label in table:
                raise ValueError(f"{path}:{lineno}: duplicate {parts[0]}")
            table[label] = value
    if n is None:
        raise ValueError(f"{path}: no entries")
    return n, table


def cmd_decode_only(cfg: DecodeOnlyConfig) -> int:
    if cfg.table is None:
        raise UsageError("decode-only needs --table")
    n, table = read_f2_table(cfg.table)
    if cfg.n is not None and cfg.n != n:
        raise UsageError(f"--n {cfg.n} contradicts table width {n}")
    groups = decoder.build_bins(lambda lab: table.get(lab, 0.0), n, cfg.b,
                                cfg.groups, cfg.p1, cfg.repeat, seed=cfg.seed)
    result = decoder.peel(groups, cfg.nu, cfg.gamma1, cfg.gamma2,
                          cfg.max_rounds)
    floor = max(2 * cfg.nu, (cfg.gap / 2) if cfg.gap else 0.0)
    rates = {a: v for a, v in result.rates.items()
             if a == 0 or abs(v) >= floor}
    doc = {
        "n": n,
        "rates": {pauli.to_string(a, n): v for a, v in sorted(rates.items())},
        "rounds": result.rounds,
        "stuck_multitons": result.stuck_multitons,
        "zero_certified": result.zero_certified,
        "conflicts": len(result.conflicts),
        "config_input": dataclasses.asdict(cfg),
    }
    if cfg.out:
        dump_json(doc, cfg.out)
    if cfg.trace:
        with open(cfg.trace, "w", encoding="utf-8") as fh:
            for event in result.trace:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
    print(f"recovered {len(rates)} rates in {result.rounds} rounds "
          f"(stuck={result.stuck_multitons}, "
          f"conflicts={len(result.conflicts)})")
    return 2 if (result.stuck_multitons or result.conflicts) else 0


def cmd_signs_only(cfg: SignsOnlyConfig) -> int:
    if cfg.system is None:
        raise UsageError("signs-only needs --system")
    with open(cfg.system, encoding="utf-8") as fh:
        system = signs.ProcessEquationSystem.from_json_dict(json.load(fh))
    solution, info = signs.solve_system(system, tau=cfg.tau,
                                        epsilon=cfg.epsilon)
    sign_vec = signs.extract_signs(solution, cfg.sign_guard)
    doc = {
        "n": system.n,
        "support": [pauli.to_string(a, system.n) for a in system.support],
        "solution": [float(v) for v in solution],
        "signs": [int(v) for v in sign_vec],
        "epsilon": info["epsilon"],
        "residual": info["residual"],
        "iterations": info["iterations"],
        "converged": info["converged"],
        "fallback": info["fallback"],
        "config_input": dataclasses.asdict(cfg),
    }
    if cfg.out:
        dump_json(doc, cfg.out)
    print(f"solved {len(system.support)} signs "
          f"(residual={info['residual']:.3g}, eps={info['epsilon']:.3g}, "
          f"fallback={info['fallback']})")
    return 2 if info["fallback"] else 0


def cmd_bench(cfg: BenchConfig) -> int:
    if cfg.n_min < 1 or cfg.n_min > cfg.n_max:
        raise UsageError("need 1 <= n_min <= n_max")
    rows = []
    for n in range(cfg.n_min, cfg.n_max + 1):
        if cfg.b >= 2 * n:
            raise UsageError(f"b={cfg.b} needs 2n > b; n={n} is too small")
        p1 = cfg.p1 if cfg.p1 is not None else max(8, 2 * n)
        p_total = p1 + 2 * n * cfg.repeat
        rows.append({
            "n": n, "b": cfg.b, "bins": 2 ** cfg.b, "groups": cfg.groups,
            "p1": p1, "p_total": p_total,
            "planned_queries": decoder.planned_query_count(
                n, cfg.b, cfg.groups, cfg.p1, cfg.repeat),
        })
    counts = np.array([r["planned_queries"] for r in rows], dtype=float)
    ns = np.array([r["n"] for r in rows], dtype=float)
    if len(rows) > 2 and cfg.p1 is not None:
        design = np.stack([np.ones_like(ns), ns], axis=1)
        coef, *_ = np.linalg.lstsq(design, counts, rcond=None)
        pred = design @ coef
        ss_res = float(np.sum((counts - pred) ** 2))
        ss_tot = float(np.sum((counts - counts.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot else 1.0
    else:
        r2 = None
    doc = {"rows": rows, "affine_r2": r2,
           "config_input": dataclasses.asdict(cfg)}
    if cfg.out:
        dump_json(doc, cfg.out)
    print("n,b,bins,groups,p1,p_total,planned_queries")
    for r in rows:
        print(",".join(str(r[k]) for k in
                       ("n", "b", "bins", "groups", "p1", "p_total",
                        "planned_queries")))
    if r2 is not None:
        print(f"affine_r2={r2:.6f}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_COMMANDS = {
    "learn": (LearnConfig, cmd_learn,
              "run the full two-stage estimation"),
    "sweep-b": (SweepConfig, cmd_sweep_b,
                "repeat learning across bin exponents"),
    "gen": (GenConfig, cmd_gen,
            "write a generated Hamiltonian to a term file"),
    "decode-only": (DecodeOnlyConfig, cmd_decode_only,
                    "run the peeling decoder on a value table"),
    "signs-only": (SignsOnlyConfig, cmd_signs_only,
                   "solve a dumped equation system for signs"),
    "bench": (BenchConfig, cmd_bench,
              "tabulate planned query counts"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hamlearn",
                     description="sparse Hamiltonian learning experiments")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (cls, _, blurb) in _COMMANDS.items():
        cmd = sub.add_parser(name, help=blurb, description=blurb)
        _add_config_arguments(cmd, cls)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("choose a command: " + ", ".join(_COMMANDS))
        cls, handler, _ = _COMMANDS[args.command]
        cfg = _load_config(cls, args)
        return handler(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
