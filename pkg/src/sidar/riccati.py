"""Lambda-parameterized backward Riccati recursion, stage gains and feasibility bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .model import LinearSystem

FEAS_RTOL = 1e-9
LAMBDA_ATOL = 1e-10
MAX_DOUBLINGS = 60


class RiccatiError(ArithmeticError):
    """Raised when the recursion leaves its feasible set (lambda too small) or blows up."""


def _sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def mixed_matrix(Pi_next: np.ndarray, lam: float, sys: LinearSystem) -> np.ndarray:
    BG = np.hstack([sys.B, sys.G])
    M = BG.T @ Pi_next @ BG
    m = sys.m
    M[:m, :m] += sys.R
    M[m:, m:] -= lam * np.eye(sys.q)
    return _sym(M)


def _disturbance_norm(Pi: np.ndarray, sys: LinearSystem) -> float:
    """Largest eigenvalue of G' Pi G (the spectral norm when Pi is PSD)."""
    if sys.q == 0:
        return 0.0
    W = sys.G.T @ Pi @ sys.G
    if sys.q == 1:
        return float(W[0, 0])
    return float(np.linalg.eigvalsh(_sym(W))[-1])


def _check_concave(Pi: np.ndarray, lam: float, sys: LinearSystem, rtol: float = FEAS_RTOL):
    d = _disturbance_norm(Pi, sys)
    if d - lam > rtol * max(1.0, abs(lam), abs(d)):
        raise RiccatiError(f"G'PiG - lambda I is not negative semidefinite (excess {d - lam:.3g})")


def _solve_mixed(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # At a boundary lambda the disturbance block can make M exactly singular (B = 0 or
    # Pi_next = 0); the minimum-norm solution corresponds to the pseudoinverse form.
    try:
        X = np.linalg.solve(M, rhs)
        if np.all(np.isfinite(X)):
            return X
    except np.linalg.LinAlgError:
        pass
    return np.linalg.lstsq(M, rhs, rcond=None)[0]


def gains(Pi_next: np.ndarray, lam: float, sys: LinearSystem):
    """Stage gains (K, J); the policies are u = -K x and unconstrained worst case w = -J x."""
    BG = np.hstack([sys.B, sys.G])
    KJ = _solve_mixed(mixed_matrix(Pi_next, lam, sys), BG.T @ Pi_next @ sys.A)
    return KJ[: sys.m], KJ[sys.m:]


def riccati_step(Pi_next: np.ndarray, lam: float, sys: LinearSystem, check: bool = True) -> np.ndarray:
    if check:
        _check_concave(Pi_next, lam, sys)
    K, J = gains(Pi_next, lam, sys)
    PA = Pi_next @ sys.A
    BG = np.hstack([sys.B, sys.G])
    out = sys.Q + sys.A.T @ PA - PA.T @ BG @ np.vstack([K, J])
    return _sym(out)


def closed_loop_form(Pi_next: np.ndarray, lam: float, sys: LinearSystem) -> np.ndarray:
    """Same step written with the closed-loop matrix A - BK and a pseudoinverse in the w-block."""
    _check_concave(Pi_next, lam, sys)
    K, _ = gains(Pi_next, lam, sys)
    Abar = sys.A - sys.B @ K
    Qbar = sys.Q + K.T @ sys.R @ K
    W = sys.G.T @ Pi_next @ sys.G - lam * np.eye(sys.q)
    s = np.linalg.svd(W, compute_uv=False)
    cutoff = 1e-12 * s[0] if s.size and s[0] > 0 else 0.0
    Wp = np.linalg.pinv(W, rcond=1e-12) if cutoff > 0 else np.zeros_like(W)
    PAbar = Pi_next @ Abar
    PG = Pi_next @ sys.G
    return _sym(Qbar + Abar.T @ PAbar - PAbar.T @ sys.G @ Wp @ PG.T @ Abar)


def _feasible_scalar(lam: float, sys: LinearSystem, N: int) -> bool:
    a, b, g = float(sys.A[0, 0]), float(sys.B[0, 0]), float(sys.G[0, 0])
    q, r, p = float(sys.Q[0, 0]), float(sys.R[0, 0]), float(sys.P_f[0, 0])
    for k in range(N):
        if g * g * p > lam:
            return False
        if k == N - 1:
            break
        m11, m12, m22 = b * b * p + r, b * g * p, g * g * p - lam
        det = m11 * m22 - m12 * m12
        r1, r2 = b * p * a, g * p * a
        if det != 0.0:
            quad = (m22 * r1 * r1 - 2.0 * m12 * r1 * r2 + m11 * r2 * r2) / det
        else:
            # singular disturbance block: minimum-norm solve, as in _solve_mixed
            M = np.array([[m11, m12], [m12, m22]])
            rhs = np.array([r1, r2])
            quad = float(rhs @ np.linalg.lstsq(M, rhs, rcond=None)[0])
        p = q + a * a * p - quad
        if not np.isfinite(p) or abs(p) > 1e15:
            return False
    return True


def _feasible(lam: float, sys: LinearSystem, N: int) -> bool:
    """Every block G'Pi_{k+1}G - lam I, k = 0..N-1, negative semidefinite (no tolerance)."""
    if sys.n == sys.m == sys.q == 1:
        return _feasible_scalar(lam, sys, N)
    Pi = sys.P_f
    for k in range(N):
        if _disturbance_norm(Pi, sys) > lam:
            return False
        if k == N - 1:
            break
        Pi = riccati_step(Pi, lam, sys, check=False)
        if not np.all(np.isfinite(Pi)) or np.max(np.abs(Pi)) > 1e15:
            return False
    return True


def lambda_lower_bound(sys: LinearSystem, N: int, atol: float = LAMBDA_ATOL) -> float:
    """Smallest lambda keeping the disturbance block concave at every stage of an N-stage horizon.

    Feasibility is monotone in lambda (Pi_k(lambda) is nonincreasing), so the bound is found by
    bisection on the feasibility predicate. The feasible end of the final bracket is returned.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    lo = _disturbance_norm(sys.P_f, sys)
    if _feasible(lo, sys, N):
        return lo
    step = 1.0
    hi = lo + step
    for _ in range(MAX_DOUBLINGS):
        if _feasible(hi, sys, N):
            break
        lo = hi
        step *= 2.0
        hi = lo + step
    else:
        raise RiccatiError(f"no feasible lambda found after {MAX_DOUBLINGS} doublings")
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        if _feasible(mid, sys, N):
            hi = mid
        else:
            lo = mid
    return hi


def lambda_lower_bounds(sys: LinearSystem, N_max: int, atol: float = LAMBDA_ATOL) -> np.ndarray:
    """Bounds for N = 1..N_max by the stagewise fixed-point construction.

    Extending the horizon by one stage adds the constraint lam >= ||G' P_s(lam) G|| with
    P_s the s-step recursion from P_f. If the previous bound violates it, the root of
    h(lam) = lam - ||G' P_s(lam) G|| (nondecreasing in lam) is the new bound.
    """

    def top(lam, s):
        Pi = sys.P_f
        for _ in range(s):
            Pi = riccati_step(Pi, lam, sys, check=False)
        return _disturbance_norm(Pi, sys)

    out = np.empty(N_max)
    gamma = _disturbance_norm(sys.P_f, sys)
    out[0] = gamma
    for s in range(1, N_max):
        h = lambda lam, s=s: lam - top(lam, s)
        if h(gamma) < 0:
            lo, width = gamma, max(1.0, gamma)
            hi = lo + width
            for _ in range(MAX_DOUBLINGS):
                if _feasible(hi, sys, s + 1) and h(hi) >= 0:
                    break
                lo, width = hi, 2 * width
                hi = lo + width
            else:
                raise RiccatiError("bracket expansion failed")
            root = optimize.brentq(h, lo, hi, xtol=atol, rtol=4 * np.finfo(float).eps)
            gamma = max(root, gamma)
            # nudge onto the feasible side of the root
            while h(gamma) < 0:
                gamma += atol
        out[s] = gamma
    return out


@dataclass
class RiccatiTrajectory:
    """Pi_N .. Pi_0 stored in stage order (pis[k] is Pi_k) plus the stage gains."""

    lam: float
    pis: list
    K: list
    J: list
    lambda_lo: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.K)

    @property
    def Pi0(self) -> np.ndarray:
        return self.pis[0]


def backward(lam: float, N: int, sys: LinearSystem, rtol: float = FEAS_RTOL):
    """Raw recursion: returns (pis, Ks, Js) indexed by stage, Pi_N = P_f."""
    pis = [None] * (N + 1)
    Ks = [None] * N
    Js = [None] * N
    Pi = sys.P_f
    pis[N] = Pi
    BG = np.hstack([sys.B, sys.G])
    m = sys.m
    for k in range(N - 1, -1, -1):
        _check_concave(Pi, lam, sys, rtol)
        M = BG.T @ Pi @ BG
        M[:m, :m] += sys.R
        M[m:, m:] -= lam * np.eye(sys.q)
        PA = Pi @ sys.A
        rhs = BG.T @ PA
        KJ = _solve_mixed(_sym(M), rhs)
        Pi = _sym(sys.Q + sys.A.T @ PA - rhs.T @ KJ)
        if not np.all(np.isfinite(Pi)):
            raise RiccatiError(f"recursion produced non-finite values at stage {k}")
        pis[k] = Pi
        Ks[k] = KJ[:m]
        Js[k] = KJ[m:]
    return pis, Ks, Js


def recursion_trajectory(lam: float, N: int, sys: LinearSystem, lambda_lo: float | None = None,
                         check: bool = True) -> RiccatiTrajectory:
    if N < 1:
        raise ValueError("N must be >= 1")
    if lambda_lo is None:
        lambda_lo = lambda_lower_bound(sys, N)
    if lam < lambda_lo - 1e-12:
        raise RiccatiError(f"lambda={lam} is below the feasibility bound {lambda_lo}")
    pis, Ks, Js = backward(lam, N, sys)
    traj = RiccatiTrajectory(lam, pis, Ks, Js, lambda_lo)
    if check:
        worst_psd = min(float(np.linalg.eigvalsh(P)[0]) / max(1.0, np.linalg.norm(P, 2)) for P in pis)
        worst_mono = min(float(np.linalg.eigvalsh(pis[k] - pis[k + 1])[0]) / max(1.0, np.linalg.norm(pis[k], 2))
                         for k in range(N))
        traj.diagnostics = {
            "min_eig_rel": worst_psd,
            "min_monotone_gap_rel": worst_mono,
            "psd": worst_psd >= -1e-9,
            "monotone": worst_mono >= -1e-9,
        }
    return traj


def closed_loop_states(x0: np.ndarray, Ks, Js, sys: LinearSystem) -> np.ndarray:
    """States under u = -K_k x and w = -J_k x, shape (N+1, n)."""
    xs = np.empty((len(Ks) + 1, sys.n))
    xs[0] = x0
    for k, (K, J) in enumerate(zip(Ks, Js)):
        xs[k + 1] = (sys.A - sys.B @ K - sys.G @ J) @ xs[k]
    return xs


def jtilde(lam: float, N: int, sys: LinearSystem, lambda_lo: float | None = None) -> np.ndarray:
    """Stacked map x0 -> unconstrained worst-case disturbances, blocks J_k Phi_k."""
    traj = recursion_trajectory(lam, N, sys, lambda_lo, check=False)
    return jtilde_from(traj, sys)


def jtilde_from(traj: RiccatiTrajectory, sys: LinearSystem) -> np.ndarray:
    blocks = []
    Phi = np.eye(sys.n)
    for K, J in zip(traj.K, traj.J):
        blocks.append(J @ Phi)
        Phi = (sys.A - sys.B @ K - sys.G @ J) @ Phi
    return np.vstack(blocks)


def lqr_recursion(N: int, sys: LinearSystem) -> np.ndarray:
    """Plain finite-horizon LQR value matrix, used as a large-lambda reference."""
    Pi = sys.P_f
    for _ in range(N):
        PB = Pi @ sys.B
        Pi = _sym(sys.Q + sys.A.T @ Pi @ sys.A
                  - sys.A.T @ PB @ np.linalg.solve(sys.R + sys.B.T @ PB, PB.T @ sys.A))
    return Pi
