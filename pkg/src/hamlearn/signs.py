"""Sign recovery for the Hamiltonian coefficients on a known support.

Squared rates fix every magnitude but erase signs.  Short-time slopes of
process expectations restore them: preparing a random product eigenstate
rho and measuring a random Pauli M after evolving for time t gives a
curve whose derivative at zero is sum_a s_a * Phi(rho, M, a) with

    Phi = i Tr(rho [P_a, M]),

an integer in {0, +-2} computable from Pauli algebra alone.  Collecting m
such rows yields a linear system for the signed coefficients, solved as a
basis-pursuit denoise program; the recovered signs are then attached to
the magnitudes from the rate stage.  Several independent equation blocks
can vote to suppress occasional solver errors.
"""

from dataclasses import dataclass

import numpy as np

from . import pauli
from .util import derived_rng

# i-exponent of the single-qubit product P_a P_b = i^PHASE[a][b] P_{a xor b}
_PHASE = (
    (0, 0, 0, 0),
    (0, 0, 1, 3),
    (0, 3, 0, 1),
    (0, 1, 3, 0),
)

_LETTERS = "IXYZ"


def product_phase(a: int, b: int, n: int) -> int:
    """i-exponent phi with P_a P_b = i^phi P_{a+b}, accumulated per qubit."""
    phase = 0
    for i in range(n):
        phase += _PHASE[pauli.letter_code(a, i)][pauli.letter_code(b, i)]
    return phase & 3


def product_expectation(letters, signs, label: int, n: int) -> int:
    """<P_label> in the product eigenstate with given per-qubit axes."""
    out = 1
    for i in range(n):
        code = pauli.letter_code(label, i)
        if code == 0:
            continue
        if code != letters[i]:
            return 0
        out *= signs[i]
    return out


def phi_entry(letters, signs, meas: int, alpha: int, n: int) -> float:
    """i Tr(rho [P_alpha, P_meas]) for a product eigenstate rho.

    Zero when the Paulis commute; otherwise the commutator is a single
    Pauli with a real prefactor, so the entry is 0 or +-2.
    """
    if pauli.commutes(alpha, meas):
        return 0.0
    phase = product_phase(alpha, meas, n)
    expect = product_expectation(letters, signs, alpha ^ meas, n)
    # [P_a, M] = 2 i^phase P_{a^m} for odd phase; i * i^1 = -1, i * i^3 = +1
    my_sign = -1.0 if phase == 1 else 1.0
    return 2.0 * my_sign * expect


@dataclass
class ProcessEquationSystem:
    """A block of slope equations Phi s = slopes over a fixed support."""

    n: int
    support: list[int]
    letters: list[list[int]]    # per row: state axis codes, one per qubit
    signs: list[list[int]]      # per row: state eigenvalue signs
    meas: list[int]
    phi: np.ndarray             # (m, len(support)) entries in {0, +-2}
    slopes: np.ndarray
    t1: float
    k_times: int
    slope_order: int
    weight_l1: float            # l1 norm of the slope-extraction row
    weight_l2: float
    fit_rms: float              # rms time-fit residual across rows

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "support": [pauli.to_string(a, self.n) for a in self.support],
            "states": [{"letters": "".join(_LETTERS[c] for c in ls),
                        "signs": sg}
                       for ls, sg in zip(self.letters, self.signs)],
            "meas": [pauli.to_string(x, self.n) for x in self.meas],
            "phi": self.phi.tolist(),
            "slopes": self.slopes.tolist(),
            "t1": self.t1,
            "k_times": self.k_times,
            "slope_order": self.slope_order,
            "weight_l1": self.weight_l1,
            "weight_l2": self.weight_l2,
            "fit_rms": self.fit_rms,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ProcessEquationSystem":
        n = int(data["n"])
        support = [pauli.from_string(s)[0] for s in data["support"]]
        letters = [[_LETTERS.index(ch) for ch in st["letters"]]
                   for st in data["states"]]
        signs = [[int(v) for v in st["signs"]] for st in data["states"]]
        meas = [pauli.from_string(s)[0] for s in data["meas"]]
        return cls(n, support, letters, signs, meas,
                   np.array(data["phi"], dtype=float),
                   np.array(data["slopes"], dtype=float),
                   float(data["t1"]), int(data["k_times"]),
                   int(data["slope_order"]), float(data["weight_l1"]),
                   float(data["weight_l2"]), float(data["fit_rms"]))


def slope_design(t1: float, k_times: int, slope_order: int):
    """Extraction row for the linear coefficient of a short-time odd fit.

    Fits value(t) ~ c0 + c1 t + c3 t^3 + ... on t_i = i * t1 (intercept
    plus odd powers up to slope_order) and returns (times, row w with
    c1 = w @ values, hat matrix for residuals).
    """
    if slope_order not in (1, 3, 5):
        raise ValueError("slope fit order must be 1, 3 or 5")
    powers = [0] + list(range(1, slope_order + 1, 2))
    if k_times < len(powers):
        raise ValueError("slope fit needs more sample times than coefficients")
    times = t1 * np.arange(1, k_times + 1)
    design = np.stack([times ** p for p in powers], axis=1)
    pinv = np.linalg.pinv(design)
    return times, pinv[1], design @ pinv


_ROW_RETRIES = 64


def build_equations(oracle, support: list[int], m: int, t1: float,
                    k_times: int = 5, slope_order: int = 1,
                    seed: int = 0, salt: int = 0) -> ProcessEquationSystem:
    """Sample m random settings and measure short-time slopes for each.

    Every row draws a uniform product eigenstate (axis and sign per qubit)
    and a uniform non-identity measurement label.  Settings whose row of
    the coefficient matrix vanishes identically carry no information about
    the support and are redrawn, up to a bounded number of retries.  Each
    kept setting queries the oracle at k_times points i * t1 and extracts
    the slope at zero by the odd-power fit.
    """
    n = oracle.n
    if t1 <= 0:
        raise ValueError("slope time step must be positive")
    if m < len(support):
        raise ValueError("need at least as many settings as support labels")
    times, w_row, hat = slope_design(t1, k_times, slope_order)
    letters_rows, signs_rows, meas_rows = [], [], []
    phi = np.zeros((m, len(support)))
    slopes = np.zeros(m)
    rss = 0.0
    for k in range(m):
        for attempt in range(_ROW_RETRIES):
            rng = derived_rng(seed, "sign-setting", salt, k, attempt)
            letters = [int(v) for v in rng.integers(1, 4, size=n)]
            sgn = [int(v) for v in rng.choice((-1, 1), size=n)]
            meas = int(rng.integers(1, 4 ** n))
            row = [phi_entry(letters, sgn, meas, alpha, n)
                   for alpha in support]
            if any(row):
                break
        phi[k] = row
        state = tuple(zip(letters, sgn))
        values = np.array([
            oracle.expectation_query(state, meas, float(t),
                                     rep=(salt << 24) + k)
            for t in times])
        slopes[k] = float(w_row @ values)
        resid = values - hat @ values
        rss += float(resid @ resid)
        letters_rows.append(letters)
        signs_rows.append(sgn)
        meas_rows.append(meas)
    fit_rms = float(np.sqrt(rss / (m * len(times))))
    return ProcessEquationSystem(
        n, list(support), letters_rows, signs_rows, meas_rows, phi, slopes,
        t1, k_times, slope_order,
        float(np.abs(w_row).sum()), float(np.linalg.norm(w_row)), fit_rms)


def regression_sigma(system: ProcessEquationSystem) -> float:
    """Dimensionless noise gain of the slope fit: for the plain linear fit
    this is sum|t_i - tbar| / sum (t_i - tbar)^2 times t1."""
    return system.weight_l1 * system.t1


def default_epsilon(system: ProcessEquationSystem, tau: float) -> float:
    """Residual allowance sqrt(m) * sigma * tau / t1 for per-query noise
    bounded by tau, floored by what least squares itself leaves behind
    (series truncation error), so the program stays feasible."""
    m = len(system.slopes)
    noise_part = np.sqrt(m) * regression_sigma(system) * tau / system.t1
    ls_sol, *_ = np.linalg.lstsq(system.phi, system.slopes, rcond=None)
    ls_resid = float(np.linalg.norm(system.phi @ ls_sol - system.slopes))
    return float(max(noise_part, 1.1 * ls_resid))


def _ellipsoid_projection(z, svd, y, eps):
    """argmin ||v - z|| subject to ||Phi v - y|| <= eps, via the SVD of Phi."""
    u_mat, sig, vt = svd
    resid = float(np.linalg.norm(u_mat @ (sig * (vt @ z)) - y))
    if resid <= eps:
        return z
    yhat = u_mat.T @ y
    zhat = vt @ z
    z_null = z - vt.T @ zhat
    pos = sig > (sig[0] * 1e-12 if sig.size else 0.0)
    fixed2 = float(y @ y - yhat @ yhat) + float(yhat[~pos] @ yhat[~pos])
    target2 = eps * eps - fixed2
    out = zhat.copy()
    if target2 <= 0:
        # allowance unreachable: fall back to the least-squares projection
        out[pos] = yhat[pos] / sig[pos]
        return vt.T @ out + z_null
    num = (sig * zhat - yhat)[pos]
    s2 = sig[pos] ** 2

    def excess(mu):
        return float(np.sum((num / (1.0 + mu * s2)) ** 2)) - target2

    hi = 1.0
    while excess(hi) > 0 and hi < 1e18:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    out[pos] = (zhat[pos] + mu * sig[pos] * yhat[pos]) / (1.0 + mu * s2)
    return vt.T @ out + z_null


def solve_bpdn(phi: np.ndarray, y: np.ndarray, eps: float, rho: float = 1.0,
               max_iter: int = 20000, tol: float = 1e-10):
    """min ||x||_1 subject to ||phi x - y||_2 <= eps, by operator splitting.

    Alternates soft-thresholding with projection onto the residual
    ellipsoid (exact via SVD plus a one-dimensional root find).  Returns
    (solution, info); info reports convergence, iterations, and the final
    residual.  eps = 0 degenerates to projection onto the affine solution
    set, which the same root-free branch handles.
    """
    m, d = phi.shape
    if len(y) != m:
        raise ValueError("right-hand side length must match the row count")
    if eps < 0:
        raise ValueError("residual allowance must be nonnegative")
    ynorm = float(np.linalg.norm(y))
    if ynorm <= eps:
        return np.zeros(d), {"converged": True, "iterations": 0,
                             "residual": ynorm}
    svd = np.linalg.svd(phi, full_matrices=False)
    x = np.zeros(d)
    v = _ellipsoid_projection(np.zeros(d), svd, y, eps)
    u = np.zeros(d)
    thresh = 1.0 / rho
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x = np.sign(v - u) * np.maximum(np.abs(v - u) - thresh, 0.0)
        v_prev = v
        v = _ellipsoid_projection(x + u, svd, y, eps)
        u += x - v
        if (np.max(np.abs(x - v)) < tol
                and np.max(np.abs(v - v_prev)) < tol):
            converged = True
            break
    residual = float(np.linalg.norm(phi @ v - y))
    return v, {"converged": converged, "iterations": it, "residual": residual}


def solve_system(system: ProcessEquationSystem, tau: float = 0.0,
                 epsilon: float | None = None):
    """BPDN solve of one equation block; falls back to least squares when
    the splitting stalls or leaves the allowance badly violated."""
    if epsilon is None:
        epsilon = default_epsilon(system, tau)
    sol, info = solve_bpdn(system.phi, system.slopes, epsilon)
    info = dict(info)
    info["epsilon"] = epsilon
    info["fallback"] = False
    if not info["converged"] or info["residual"] > max(1.5 * epsilon, 1e-9):
        ls_sol, *_ = np.linalg.lstsq(system.phi, system.slopes, rcond=None)
        ls_resid = float(np.linalg.norm(system.phi @ ls_sol - system.slopes))
        if ls_resid <= info["residual"]:
            sol = ls_sol
            info["fallback"] = True
            info["residual"] = ls_resid
    return sol, info


def extract_signs(solution: np.ndarray, gap_guard: float = 0.0) -> np.ndarray:
    """Map solved coefficients to {-1, 0, +1}; values inside the guard band
    abstain rather than cast an unreliable vote."""
    out = np.zeros(len(solution), dtype=int)
    out[solution > gap_guard] = 1
    out[solution < -gap_guard] = -1
    return out


def majority_vote(blocks: list[np.ndarray]) -> np.ndarray:
    """Per-label majority across sign blocks; exact ties stay 0."""
    if not blocks:
        raise ValueError("need at least one sign block")
    total = np.sum(blocks, axis=0)
    return np.sign(total).astype(int)
