"""Steady-state problem: LMI route, Riccati fixed-point scan, classification, H-infinity oracle."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .model import LinearSystem, ProblemInstance, sym_sqrt
from .riccati import RiccatiError, _disturbance_norm, _solve_mixed, _sym, gains, riccati_step
from .sdp import Block, SdpProblem, SdpStatus, Var, solve_sdp, warm_t

DEGENERACY_RTOL = 1e-6
FP_TOL = 1e-12
FP_MAX_ITER = 100_000
FP_DIVERGE = 1e12
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class SteadyStateError(RuntimeError):
    pass


class FixedPointError(RiccatiError):
    pass


@dataclass
class SteadyStateSolution:
    lambda_bar: float
    chi: float
    P: np.ndarray
    F: np.ndarray
    Pi_bar: np.ndarray
    K_bar: np.ndarray  # policy u = K_bar x
    slack: float
    g_residual: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return 0.5 * (self.lambda_bar + self.chi)


@dataclass
class Classification:
    kind: str  # "nondegenerate" | "degenerate"
    slack_at_origin: float
    tolerance_used: float
    lmi: SteadyStateSolution | None = None
    scan: SteadyStateSolution | None = None


def g_residual(lam: float, Pi: np.ndarray, sys: LinearSystem) -> np.ndarray:
    """Riccati map minus identity; zero at a steady-state pair."""
    return riccati_step(Pi, lam, sys, check=False) - Pi


def _diagnose(sol: SteadyStateSolution, sys: LinearSystem) -> SteadyStateSolution:
    sol.slack = sol.lambda_bar - _disturbance_norm(sol.Pi_bar, sys)
    sol.g_residual = float(np.linalg.norm(g_residual(sol.lambda_bar, sol.Pi_bar, sys)))
    return sol


# LMI route

def _s_block(sys: LinearSystem, lam_const: float | None):
    """S(P, F, lam) as a structured block. With lam_const the multiplier is folded into the constant."""
    n, m, q = sys.n, sys.m, sys.q
    d = 3 * n + q + m
    I = np.eye(d)
    E1, E2, E3, E4 = I[:, :n], I[:, n:2 * n], I[:, 2 * n:2 * n + q], I[:, 2 * n + q:]
    Qh = np.vstack([sym_sqrt(sys.Q), np.zeros((m, n))])
    Rh = np.vstack([np.zeros((n, m)), sym_sqrt(sys.R)])
    C = E2 @ sys.G @ E3.T
    C = C + C.T + E4 @ E4.T
    scalar_terms = []
    if lam_const is None:
        scalar_terms.append((0, E3 @ E3.T))
    else:
        C = C + lam_const * (E3 @ E3.T)
    matrix_terms = [
        (2, 0.5 * E1 + E2 @ sys.A + E4 @ Qh, E1),
        (2, 0.5 * E2, E2),
        (3, -(E2 @ sys.B + E4 @ Rh), E1),
    ]
    return Block(d, C, scalar_terms, matrix_terms)


def s_matrix(P: np.ndarray, F: np.ndarray, lam: float, sys: LinearSystem) -> np.ndarray:
    """S(P, F, lam) as a dense matrix, built block by block (independent of the solver layout)."""
    n, m, q = sys.n, sys.m, sys.q
    AP = sys.A @ P - sys.B @ F
    C = np.vstack([sym_sqrt(sys.Q) @ P, -sym_sqrt(sys.R) @ F])
    Z = np.zeros
    return np.block([
        [P, AP.T, Z((n, q)), C.T],
        [AP, P, sys.G, Z((n, n + m))],
        [Z((q, n)), sys.G.T, lam * np.eye(q), Z((q, n + m))],
        [C, Z((n + m, n)), Z((n + m, q)), np.eye(n + m)],
    ])


def riccati_inequality_block(Pi: np.ndarray, K: np.ndarray, lam: float, sys: LinearSystem) -> np.ndarray:
    """[[Pi - Qbar - Abar' Pi Abar, -Abar' Pi G], [-G' Pi Abar, lam I - G' Pi G]] for u = K x."""
    Abar = sys.A + sys.B @ K
    Qbar = sys.Q + K.T @ sys.R @ K
    PG = Pi @ sys.G
    top = Pi - Qbar - Abar.T @ Pi @ Abar
    off = -Abar.T @ PG
    return _sym(np.block([[top, off], [off.T, lam * np.eye(sys.q) - sys.G.T @ PG]]))


def _t_block(inst: ProblemInstance):
    n = inst.system.n
    d = n + 1
    I = np.eye(d)
    xt = inst.scaled_state
    C = np.zeros((d, d))
    C[:n, n] = xt
    C[n, :n] = xt
    return Block(d, C, [(1, I[:, n:] @ I[n:, :])], [(2, 0.5 * I[:, :n], I[:, :n])])


def assemble_lmi(inst: ProblemInstance):
    """Return (SdpProblem, strictly feasible start). Variables: lam, chi, symmetric P, F (m x n)."""
    sys = inst.system
    n, m = sys.n, sys.m
    vars_ = [Var("lam", "scalar"), Var("chi", "scalar"), Var("P", "sym", (n, n)), Var("F", "mat", (m, n))]
    blocks = [_s_block(sys, None), _t_block(inst)]
    c = np.zeros(2 + n * (n + 1) // 2 + m * n)
    c[0] = 0.5
    c[1] = 0.5
    prob = SdpProblem(vars_, blocks, c)
    return prob, strict_feasible_point(inst, prob)


def stabilizing_gain(sys: LinearSystem) -> np.ndarray:
    """Some L with A + B L Schur stable (u = L x).

    The LQR gain for weights (Q + I, R) is preferred even when A is already stable: it keeps the
    Lyapunov matrix of the starting point small, which puts the starting multiplier close to the
    optimum. L = 0 is the fallback for a stable A.
    """
    stable = np.max(np.abs(np.linalg.eigvals(sys.A))) < 1.0
    try:
        X = sla.solve_discrete_are(sys.A, sys.B, sys.Q + np.eye(sys.n), sys.R)
        L = -np.linalg.solve(sys.R + sys.B.T @ X @ sys.B, sys.B.T @ X @ sys.A)
        if np.max(np.abs(np.linalg.eigvals(sys.A + sys.B @ L))) < 1.0:
            return L
    except (np.linalg.LinAlgError, ValueError):
        pass
    if stable:
        return np.zeros((sys.m, sys.n))
    raise SteadyStateError("no stabilizing gain: (A, B) is not stabilizable")


def strict_feasible_point(inst: ProblemInstance, prob: SdpProblem) -> np.ndarray:
    """Interior point from a stabilizing gain and a Lyapunov solve with unit slack.

    With Pi - Qbar - Abar' Pi Abar = I, the strict Riccati inequality holds as soon as
    lam I - G'Pi G > G'Pi Abar Abar' Pi G, so the multiplier is set one unit above the norm of
    G'Pi G + G'Pi Abar Abar' Pi G. The margin is doubled if a Cholesky check still fails.
    """
    sys = inst.system
    L = stabilizing_gain(sys)
    Abar = sys.A + sys.B @ L
    Qbar = sys.Q + L.T @ sys.R @ L + np.eye(sys.n)
    Pi = _sym(sla.solve_discrete_lyapunov(Abar.T, Qbar))
    P = _sym(np.linalg.inv(Pi))
    F = -L @ P
    xt = inst.scaled_state
    chi = float(xt @ Pi @ xt) + 1.0
    PAG = Abar.T @ Pi @ sys.G
    W = _sym(sys.G.T @ Pi @ sys.G + PAG.T @ PAG)
    base = float(np.linalg.eigvalsh(W)[-1]) if sys.q else 0.0
    margin = 1.0
    for _ in range(60):
        x = prob.pack({"lam": base + margin, "chi": chi, "P": P, "F": F})
        try:
            for Fb in prob.eval_blocks(x):
                np.linalg.cholesky(Fb)
            return x
        except np.linalg.LinAlgError:
            margin *= 2.0
    raise SteadyStateError("could not build a strictly feasible starting point")


POLISH_OFFSET = 1e-8


def _polish(sys: LinearSystem, lam: float, P: np.ndarray, F: np.ndarray, deadline: float | None = None):
    """At fixed lam, maximize tr(P) over the S block: picks the smallest Pi = inv(P) at that lam.

    The LMI optimum only pins P along directions that affect the objective; elsewhere the
    barrier solution sits inside a face and its inverse is not the minimal steady-state value.
    The caller passes lam slightly above the optimum: exactly at the optimum the feasible set
    of P is flat in the binding direction and Newton steps drown in roundoff.
    """
    n, m = sys.n, sys.m
    vars_p = [Var("P", "sym", (n, n)), Var("F", "mat", (m, n))]
    blk = _s_block(sys, lam)
    # variable indices shift by two because lam and chi are absent here
    blk.matrix_terms = [(vi - 2, U, V) for vi, U, V in blk.matrix_terms]
    c = np.zeros(n * (n + 1) // 2 + m * n)
    iu, ju = np.triu_indices(n)
    c[: n * (n + 1) // 2] = -(iu == ju).astype(float)
    prob = SdpProblem(vars_p, [blk], c)
    x0 = prob.pack({"P": P, "F": F})
    # the start is already near the boundary, so begin the path where it is most central
    sol = solve_sdp(prob, init=x0, t0=max(1.0, warm_t(prob, x0)), deadline=deadline)
    return prob.value(sol.x, 0), prob.value(sol.x, 1), sol


def solve_steady_lmi(inst: ProblemInstance, polish: bool = True, deadline: float | None = None) -> SteadyStateSolution:
    """Solve the LMI from its strictly feasible start, then recover the minimal Pi at the optimal lam."""
    sys = inst.system
    prob, x0 = assemble_lmi(inst)
    sol = solve_sdp(prob, init=x0, deadline=deadline)
    if sol.status != SdpStatus.OPTIMAL:
        raise SteadyStateError(f"LMI solve ended with status {sol.status.value}")
    lam = prob.value(sol.x, 0)
    P = prob.value(sol.x, 2)
    F = prob.value(sol.x, 3)
    diag = {"sdp_iterations": sol.iterations, "duality_gap": sol.duality_gap,
            "primal_residual": sol.primal_residual}
    if polish:
        P2, F2, psol = _polish(sys, lam + POLISH_OFFSET * max(1.0, lam), P, F, deadline)
        diag["polish_iterations"] = psol.iterations
        if psol.status == SdpStatus.OPTIMAL:
            P, F = P2, F2
        elif deadline is not None and time.perf_counter() > deadline:
            raise SteadyStateError("deadline passed during the polish step")
        else:
            warnings.warn(f"polish step ended with status {psol.status.value}", stacklevel=2)
    Pi = _sym(np.linalg.inv(P))
    xt = inst.scaled_state
    chi = float(xt @ Pi @ xt)
    out = SteadyStateSolution(lam, chi, P, F, Pi, -F @ Pi, 0.0, 0.0, "lmi", diag)
    _diagnose(out, sys)
    if out.g_residual > 1e-6 * max(1.0, float(np.linalg.norm(Pi))):
        out.diagnostics["g_residual_warning"] = True
        warnings.warn(f"steady-state residual {out.g_residual:.3g} at the LMI optimum", stacklevel=2)
    return out


# Fixed-point route

@dataclass
class FixedPointResult:
    Pi: np.ndarray
    status: str  # converged | infeasible | diverged | maxiter
    iterations: int


def iterate_fixed_point(lam: float, sys: LinearSystem, Pi0: np.ndarray | None = None,
                        max_iter: int = FP_MAX_ITER, tol: float = FP_TOL) -> FixedPointResult:
    """Monotone iteration Pi <- Riccati(Pi, lam) from P_f, checking concavity at every step."""
    Pi = sys.P_f.copy() if Pi0 is None else np.array(Pi0, dtype=float)
    BG = np.hstack([sys.B, sys.G])
    m, q = sys.m, sys.q
    Rpad = np.zeros((m + q, m + q))
    Rpad[:m, :m] = sys.R
    Rpad[m:, m:] = -lam * np.eye(q)
    A, Q, G = sys.A, sys.Q, sys.G
    for it in range(1, max_iter + 1):
        W = G.T @ Pi @ G
        top = W[0, 0] if q == 1 else np.linalg.eigvalsh(_sym(W))[-1]
        if top > lam * (1.0 + 1e-12):
            return FixedPointResult(Pi, "infeasible", it)
        PA = Pi @ A
        rhs = BG.T @ PA
        M = BG.T @ Pi @ BG + Rpad
        new = Q + A.T @ PA - rhs.T @ _solve_mixed(_sym(M), rhs)
        new = _sym(new)
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > FP_DIVERGE:
            return FixedPointResult(new, "diverged", it)
        step = np.linalg.norm(new - Pi)
        Pi = new
        if step <= tol * max(1.0, np.linalg.norm(Pi)):
            return FixedPointResult(Pi, "converged", it)
    return FixedPointResult(Pi, "maxiter", max_iter)


def riccati_fixed_point(lam: float, sys: LinearSystem, max_iter: int = FP_MAX_ITER) -> np.ndarray:
    res = iterate_fixed_point(lam, sys, max_iter=max_iter)
    if res.status == "infeasible":
        raise FixedPointError(f"lambda={lam} loses concavity after {res.iterations} steps")
    if res.status == "diverged":
        raise FixedPointError(f"iteration diverged at lambda={lam}")
    if res.status == "maxiter":
        warnings.warn(f"fixed-point iteration hit {max_iter} steps at lambda={lam}", stacklevel=2)
    if _disturbance_norm(res.Pi, sys) > lam * (1.0 + 1e-9) + 1e-12:
        raise FixedPointError(f"limit violates lambda >= ||G'PiG|| at lambda={lam}")
    return res.Pi


def _scan_feasible(lam: float, sys: LinearSystem, cap: int):
    res = iterate_fixed_point(lam, sys, max_iter=cap)
    if res.status == "converged":
        return _disturbance_norm(res.Pi, sys) <= lam * (1.0 + 1e-9) + 1e-12
    if res.status == "maxiter":
        return None
    return False


def steady_lambda_min(sys: LinearSystem, atol: float = 1e-10, cap: int = 5000):
    """Smallest lambda for which the fixed-point iteration converges and stays concave.

    Near a saddle-node the iteration slows down without bound; once a probe exhausts ``cap``
    steps the bisection stops and the feasible end of the bracket is returned.
    """
    lo = _disturbance_norm(sys.P_f, sys)
    step = 1.0
    hi = lo + step
    for _ in range(60):
        ok = _scan_feasible(hi, sys, FP_MAX_ITER)
        if ok:
            break
        lo = hi
        step *= 2.0
        hi = lo + step
    else:
        raise SteadyStateError("no feasible multiplier found for the fixed-point route")
    stalled = False
    while hi - lo > atol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        ok = _scan_feasible(mid, sys, cap)
        if ok is None:
            stalled = True
            break
        if ok:
            hi = mid
        else:
            lo = mid
    return hi, {"bracket": (lo, hi), "stalled": stalled}


def _golden(f, a, b, tol):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def solve_steady_scan(inst: ProblemInstance, atol: float = 1e-10) -> SteadyStateSolution:
    sys = inst.system
    xt = inst.scaled_state
    lam_min, info = steady_lambda_min(sys, atol)

    def V(lam):
        Pi = riccati_fixed_point(lam, sys)
        return 0.5 * float(xt @ Pi @ xt) + 0.5 * lam

    diag = dict(info)
    if np.allclose(xt, 0.0):
        lam = lam_min
    else:
        # bracket: grow until V increases
        v0 = V(lam_min)
        width = 1.0
        prev, cur, vcur = lam_min, lam_min + width, V(lam_min + width)
        for _ in range(60):
            if vcur > v0:
                break
            prev, width = cur, 2 * width
            cur, vcur = lam_min + width, V(lam_min + width)
        hi = cur
        grid = np.linspace(lam_min, hi, 100)
        vals = np.array([V(l) for l in grid])
        k = int(np.argmin(vals))
        d = np.diff(vals)
        scale = max(1.0, float(np.max(np.abs(vals))))
        unimodal = bool(np.all(d[:k] <= 1e-12 * scale) and np.all(d[k:] >= -1e-12 * scale))
        diag["unimodal"] = unimodal
        a = grid[max(k - 1, 0)]
        b = grid[min(k + 1, len(grid) - 1)]
        if unimodal:
            a, b = (lam_min, hi) if k in (0, len(grid) - 1) else (a, b)
        lam = _golden(V, a, b, atol * max(1.0, b))
        if V(lam_min) <= V(lam):
            lam = lam_min
    Pi = riccati_fixed_point(lam, sys)
    K, _ = gains(Pi, lam, sys)
    P = np.linalg.inv(Pi) if np.linalg.matrix_rank(Pi) == sys.n else np.full_like(Pi, np.nan)
    out = SteadyStateSolution(lam, float(xt @ Pi @ xt), P, -K @ P, Pi, -K, 0.0, 0.0, "scan", diag)
    return _diagnose(out, sys)


# Classification and H-infinity oracle

def classify(sys: LinearSystem, alpha: float = 1.0, lmi: SteadyStateSolution | None = None,
             scan: SteadyStateSolution | None = None) -> Classification:
    """Nondegenerate iff the multiplier is tight (slack ~ 0) at x0 = 0; both routes must agree."""
    inst = ProblemInstance(sys, np.zeros(sys.n), alpha)
    if lmi is None:
        lmi = solve_steady_lmi(inst)
    if scan is None:
        scan = solve_steady_scan(inst)
    tol = DEGENERACY_RTOL * max(1.0, lmi.lambda_bar)
    kind_lmi = "nondegenerate" if lmi.slack <= tol else "degenerate"
    kind_scan = "nondegenerate" if scan.slack <= DEGENERACY_RTOL * max(1.0, scan.lambda_bar) else "degenerate"
    if kind_lmi != kind_scan:
        raise SteadyStateError(f"routes disagree: LMI slack {lmi.slack:.3g}, scan slack {scan.slack:.3g}")
    return Classification(kind_lmi, lmi.slack, tol, lmi, scan)


def _hinf_feasible(gamma2: float, sys: LinearSystem) -> bool:
    BG = np.hstack([sys.B, sys.G])
    Raug = sla.block_diag(sys.R, -gamma2 * np.eye(sys.q))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X = sla.solve_discrete_are(sys.A, BG, sys.Q, Raug)
    except (np.linalg.LinAlgError, ValueError):
        return False
    if not np.all(np.isfinite(X)):
        return False
    X = _sym(X)
    scale = max(1.0, float(np.max(np.abs(X))))
    M = BG.T @ X @ BG + Raug
    try:
        res = sys.A.T @ X @ sys.A - X + sys.Q - sys.A.T @ X @ BG @ np.linalg.solve(M, BG.T @ X @ sys.A)
    except np.linalg.LinAlgError:
        return False
    if np.max(np.abs(res)) > 1e-8 * scale:
        return False
    if np.linalg.eigvalsh(X)[0] < -1e-9 * scale:
        return False
    return bool(np.linalg.eigvalsh(gamma2 * np.eye(sys.q) - sys.G.T @ X @ sys.G)[0] > 0.0)


def hinf_gamma_oracle(sys: LinearSystem, atol: float = 1e-10) -> float:
    """Infimal gamma^2 for which the standard H-infinity state-feedback DARE has an admissible solution."""
    lo, hi = 0.0, 1.0
    for _ in range(60):
        if _hinf_feasible(hi, sys):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SteadyStateError("H-infinity oracle could not bracket gamma^2")
    while hi - lo > atol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _hinf_feasible(mid, sys):
            hi = mid
        else:
            lo = mid
    return hi
