"""Regions, convergence sweeps, turnpike profiles, receding-horizon simulation, timing benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .lambda_opt import solve_finite
from .model import LinearSystem, ProblemInstance, candidate_systems, GenerationError
from .riccati import (LAMBDA_ATOL, MAX_DOUBLINGS, RiccatiError, _feasible, gains, jtilde,
                      lambda_lower_bound)
from .steady_state import (FixedPointError, SteadyStateError, SteadyStateSolution, classify,
                           riccati_fixed_point, solve_steady_lmi)


@dataclass
class Ellipsoid:
    """The set {x : x' E x <= radius_sq}; E may be singular (unbounded directions)."""

    shape: np.ndarray
    radius_sq: float

    def contains(self, x, rtol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(x @ self.shape @ x) <= self.radius_sq * (1.0 + rtol)

    def extent(self, direction) -> float:
        """Distance from the origin to the boundary along ``direction`` (inf if unbounded)."""
        d = np.asarray(direction, dtype=float).reshape(-1)
        d = d / np.linalg.norm(d)
        q = float(d @ self.shape @ d)
        return np.inf if q <= 0.0 else float(np.sqrt(self.radius_sq / q))

    def boundary(self, num: int = 100):
        """Boundary points of a planar ellipsoid at ``num`` equally spaced angles."""
        if self.shape.shape != (2, 2):
            raise ValueError("boundary points are only defined for n = 2")
        theta = 2.0 * np.pi * np.arange(num) / num
        r = np.array([self.extent((np.cos(t), np.sin(t))) for t in theta])
        return theta, r * np.cos(theta), r * np.sin(theta)


def region_linear(inst: ProblemInstance, N: int, lambda_lo: float | None = None) -> Ellipsoid:
    """Initial states for which the boundary multiplier is optimal: x' Jt'Jt x <= alpha."""
    sys = inst.system
    if lambda_lo is None:
        lambda_lo = lambda_lower_bound(sys, N)
    Jt = jtilde(lambda_lo, N, sys, lambda_lo)
    E = Jt.T @ Jt
    return Ellipsoid(0.5 * (E + E.T), inst.alpha)


def lambda_lo_sequence(sys: LinearSystem, N_max: int, atol: float = LAMBDA_ATOL) -> np.ndarray:
    """lambda_lower_bound for N = 1..N_max, warm-starting each bisection from the previous bound."""
    out = np.empty(N_max)
    prev = lambda_lower_bound(sys, 1, atol)
    out[0] = prev
    for N in range(2, N_max + 1):
        if _feasible(prev, sys, N):
            out[N - 1] = prev
            continue
        lo, step = prev, max(1e-6, 1e-3 * max(1.0, prev))
        hi = lo + step
        for _ in range(MAX_DOUBLINGS):
            if _feasible(hi, sys, N):
                break
            lo, step = hi, 2.0 * step
            hi = lo + step
        else:
            raise RiccatiError("bracket expansion failed")
        while hi - lo > atol:
            mid = 0.5 * (lo + hi)
            if _feasible(mid, sys, N):
                hi = mid
            else:
                lo = mid
        prev = hi
        out[N - 1] = prev
    return out


@dataclass
class RegionLimit:
    """Truncated intersection of the linear regions for N = 1..N_max.

    This is an outer approximation: the limit set is the intersection over every N.
    """

    ellipsoids: list
    outer: Ellipsoid

    def __call__(self, x) -> bool:
        return all(e.contains(x) for e in self.ellipsoids)

    def first_exclusion(self, x):
        """Smallest N whose region excludes x, or None."""
        for N, e in enumerate(self.ellipsoids, start=1):
            if not e.contains(x):
                return N
        return None


def region_limit_membership(inst: ProblemInstance, N_max: int) -> RegionLimit:
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    lows = lambda_lo_sequence(inst.system, N_max)
    ells = [region_linear(inst, N, lows[N - 1]) for N in range(1, N_max + 1)]
    return RegionLimit(ells, ells[-1])


@dataclass
class SweepRow:
    N: int
    lambda_star: float
    pi_deviation: float
    lambda_deviation: float
    region: str


def convergence_sweep(inst: ProblemInstance, N_list, steady: SteadyStateSolution | None = None):
    """One finite-horizon solve per N, compared against the LMI steady state."""
    if steady is None:
        steady = solve_steady_lmi(inst)
    rows = []
    for N in N_list:
        sol = solve_finite(inst, int(N))
        rows.append(SweepRow(int(N), sol.lambda_star,
                             float(np.linalg.norm(sol.Pi0 - steady.Pi_bar)),
                             abs(sol.lambda_star - steady.lambda_bar), sol.region.value))
    return rows, steady


@dataclass
class TurnpikeProfile:
    plateau_value: np.ndarray
    plateau_start: int
    plateau_end: int
    plateau_fraction: float
    entry_layer: int
    exit_layer: int
    epsilon_used: float
    plateau_source: str = "fixed_point"
    lambda_star: float = float("nan")
    pis: list = field(default_factory=list, repr=False)

    @property
    def plateau_length(self) -> int:
        return 0 if self.plateau_end < self.plateau_start else self.plateau_end - self.plateau_start + 1


def turnpike_profile(inst: ProblemInstance, N: int, epsilon: float = 1e-6) -> TurnpikeProfile:
    """Longest run of stages with Pi_k within epsilon (relative) of the plateau value.

    The plateau value is the Riccati fixed point at lambda*(N). When that iteration loses
    concavity (a degenerate system whose multiplier sits below the steady-state value, so no
    fixed point exists) the midpoint of the slowest-changing pair of stages is used instead.
    """
    sol = solve_finite(inst, N)
    pis = sol.trajectory.pis
    source = "fixed_point"
    try:
        Pinf = riccati_fixed_point(sol.lambda_star, inst.system)
    except FixedPointError:
        source = "slowest_stage"
        steps = [np.linalg.norm(pis[k] - pis[k + 1]) for k in range(N)]
        k = int(np.argmin(steps))
        Pinf = 0.5 * (pis[k] + pis[k + 1])
    tol = epsilon * max(1.0, float(np.linalg.norm(Pinf)))
    close = [float(np.linalg.norm(P - Pinf)) <= tol for P in pis]
    best_len, best_start = 0, 0
    run_start = None
    for k, ok in enumerate(close + [False]):
        if ok and run_start is None:
            run_start = k
        elif not ok and run_start is not None:
            if k - run_start > best_len:
                best_len, best_start = k - run_start, run_start
            run_start = None
    total = N + 1
    if best_len == 0:
        start, end = 0, -1
        entry, exit_ = total, 0
    else:
        start, end = best_start, best_start + best_len - 1
        entry, exit_ = start, N - end
    return TurnpikeProfile(Pinf, start, end, best_len / total, entry, exit_, epsilon, source,
                           sol.lambda_star, pis)


@dataclass
class SimStep:
    k: int
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    budget: float
    lambda_k: float
    K: np.ndarray


@dataclass
class SimTrace:
    steps: list
    T: int
    final_state: np.ndarray


POLICIES = ("worstcase", "random", "zero")


class SimulationError(RuntimeError):
    """A per-stage solve failed during a receding-horizon run."""


def _lqr_gain(sys: LinearSystem) -> np.ndarray:
    X = sla.solve_discrete_are(sys.A, sys.B, sys.Q, sys.R)
    return -np.linalg.solve(sys.R + sys.B.T @ X @ sys.B, sys.B.T @ X @ sys.A)


def simulate_receding(inst: ProblemInstance, T: int, policy: str = "zero", seed: int = 0,
                      finite_fallback: int | None = None) -> SimTrace:
    """Re-solve from (x_k, b_k) at every stage and apply the first control of that solution.

    By default each stage solves the steady-state LMI and applies u_k = K_bar x_k, which is only
    meaningful for nondegenerate plants. With ``finite_fallback = N`` each stage instead solves the
    N-stage problem and applies its first-stage gain. Once the budget is exhausted
    (b_k <= 1e-12) the multiplier is unbounded and the control falls back to the LQR gain, the
    limit of the minimax gain as the budget goes to zero.
    """
    policy = policy.lower()
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    if T < 1:
        raise ValueError("T must be >= 1")
    sys = inst.system
    rng = np.random.default_rng(seed)
    x = inst.x0.astype(float).copy()
    b = inst.alpha
    steps = []
    for k in range(T):
        J = None
        if b > 1e-12:
            try:
                if finite_fallback is None:
                    sol = solve_steady_lmi(ProblemInstance(sys, x, b))
                    K, lam = sol.K_bar, sol.lambda_bar
                    _, J = gains(sol.Pi_bar, lam, sys)
                else:
                    fin = solve_finite(ProblemInstance(sys, x, b), finite_fallback)
                    K, J, lam = -fin.trajectory.K[0], fin.trajectory.J[0], fin.lambda_star
            except Exception as exc:
                raise SimulationError(f"stage {k}: {exc}") from exc
        else:
            K = _lqr_gain(sys)
            lam = np.inf
        u = K @ x
        if policy == "zero" or J is None:
            w = np.zeros(sys.q)
        elif policy == "worstcase":
            w = -J @ x
            e = float(w @ w)
            if e > b:
                w = w * np.sqrt(b / e)
        else:
            d = rng.normal(size=sys.q)
            w = d / np.linalg.norm(d) * np.sqrt(b / (T - k))
        steps.append(SimStep(k, x.copy(), u, w, b, lam, K))
        b = b - float(w @ w)
        x = sys.A @ x + sys.B @ u + sys.G @ w
    return SimTrace(steps, T, x)


@dataclass
class BenchResult:
    rows: list  # (n, sample, seconds)
    medians: dict
    slope: float | None
    complete: bool = True


def bench_seed(seed: int, n: int, sample: int) -> int:
    return int(np.random.SeedSequence([seed, n, sample]).generate_state(1)[0])


def fit_slope(medians: dict, dims) -> float | None:
    upper = list(dims)[len(dims) // 2:]
    upper = [n for n in upper if n in medians]
    if len(upper) < 2:
        return None
    xs = np.log(np.array(upper, dtype=float))
    ys = np.log(np.array([medians[n] for n in upper]))
    return float(np.polyfit(xs, ys, 1)[0])


def bench_complexity(dims, samples_per_dim: int, seed: int = 0, time_budget: float | None = None,
                     progress=None) -> BenchResult:
    """Median LMI solve time per dimension and the log-log slope over the upper half of dims.

    Each sample walks the random candidate sequence until the classifier reports a
    nondegenerate system; only the solve of the accepted system is kept. With a time budget the
    run stops early (also inside a solve, between Newton steps) and is marked incomplete.
    """
    dims = list(dims)
    if any(b < a for a, b in zip(dims, dims[1:])):
        raise ValueError("dims must be sorted ascending")
    if any(n < 2 for n in dims):
        raise ValueError("every dimension must be >= 2")
    start = time.perf_counter()
    deadline = None if time_budget is None else start + time_budget
    rows = []
    medians = {}
    complete = True
    for n in dims:
        times = []
        for s in range(samples_per_dim):
            if deadline is not None and time.perf_counter() > deadline:
                complete = False
                break
            found = False
            for cand in candidate_systems(n, bench_seed(seed, n, s)):
                inst = ProblemInstance(cand, np.zeros(n))
                t0 = time.perf_counter()
                try:
                    lmi = solve_steady_lmi(inst, deadline=deadline)
                except SteadyStateError:
                    if deadline is not None and time.perf_counter() > deadline:
                        complete = False
                        break
                    raise
                dt = time.perf_counter() - t0
                if classify(cand, 1.0, lmi=lmi).kind == "nondegenerate":
                    found = True
                    break
            if not complete:
                break
            if not found:
                raise GenerationError(f"no nondegenerate system for n={n}, sample={s}")
            rows.append((n, s, dt))
            times.append(dt)
            if progress is not None:
                progress(n, s, dt)
        if times:
            medians[n] = float(np.median(times))
        if not complete:
            break
    return BenchResult(rows, medians, fit_slope(medians, dims), complete)
