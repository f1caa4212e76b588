"""Outer convex problem over the multiplier and the finite-horizon solution."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ProblemInstance
from .riccati import (RiccatiError, RiccatiTrajectory, backward, lambda_lower_bound,
                      recursion_trajectory)

MAX_DOUBLINGS = 60


class Region(str, Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


@dataclass
class FiniteHorizonSolution:
    lambda_star: float
    lambda_lo: float
    trajectory: RiccatiTrajectory
    value: float
    region: Region
    worst_energy: float

    @property
    def Pi0(self) -> np.ndarray:
        return self.trajectory.Pi0


def _energy(xt: np.ndarray, Ks, Js, sys) -> float:
    # ||Jtilde x||^2 accumulated along the closed loop without forming Jtilde
    x = xt.copy()
    e = 0.0
    for K, J in zip(Ks, Js):
        w = J @ x
        e += float(w @ w)
        x = sys.A @ x - sys.B @ (K @ x) - sys.G @ w
    return e


def objective(lam: float, inst: ProblemInstance, N: int) -> float:
    xt = inst.scaled_state
    pis, _, _ = backward(lam, N, inst.system)
    return 0.5 * float(xt @ pis[0] @ xt) + 0.5 * lam


def worst_energy(lam: float, inst: ProblemInstance, N: int) -> float:
    """||Jtilde(lam) x0||^2 / alpha."""
    _, Ks, Js = backward(lam, N, inst.system)
    return _energy(inst.scaled_state, Ks, Js, inst.system)


def derivative(lam: float, inst: ProblemInstance, N: int) -> float:
    return 0.5 - 0.5 * worst_energy(lam, inst, N)


def solve_finite(inst: ProblemInstance, N: int, lambda_lo: float | None = None) -> FiniteHorizonSolution:
    sys = inst.system
    if lambda_lo is None:
        lambda_lo = lambda_lower_bound(sys, N)
    if derivative(lambda_lo, inst, N) >= 0.0:
        lam = lambda_lo
        region = Region.LINEAR
    else:
        lo = lambda_lo
        step = 1.0
        hi = lo + step
        for _ in range(MAX_DOUBLINGS):
            if derivative(hi, inst, N) >= 0.0:
                break
            lo = hi
            step *= 2.0
            hi = lambda_lo + step
        else:
            raise RiccatiError("could not bracket the optimal multiplier; x0 too large for the budget")
        while hi - lo > 1e-10 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if derivative(mid, inst, N) >= 0.0:
                hi = mid
            else:
                lo = mid
        lam = 0.5 * (lo + hi)
        region = Region.NONLINEAR
    traj = recursion_trajectory(lam, N, sys, lambda_lo)
    xt = inst.scaled_state
    value = 0.5 * float(xt @ traj.Pi0 @ xt) + 0.5 * lam
    energy = _energy(xt, traj.K, traj.J, sys)
    return FiniteHorizonSolution(lam, lambda_lo, traj, value, region, energy)


@dataclass(frozen=True)
class GridSpec:
    delta: float = 0.01
    range: float = 6.0
    budget_levels: int = 200


def dp_oracle(inst: ProblemInstance, N: int, grid: GridSpec = GridSpec()) -> float:
    """Brute-force min-max value (divided by alpha) by gridded dynamic programming.

    State is (x, remaining budget). The budget takes ``budget_levels`` equally spaced values in
    [0, alpha]; from level i the disturbance may move to any level j <= i, i.e. w = +-sqrt(b_i - b_j),
    so the remaining budget always stays on the grid. Controls are taken so that the successor
    A x + B u lands on the state grid. Values between state nodes are linearly interpolated.
    """
    s = inst.system
    if (s.n, s.m, s.q) != (1, 1, 1):
        raise ValueError("dp_oracle only handles scalar systems")
    if N < 1 or N > 3:
        raise ValueError("dp_oracle is limited to 1 <= N <= 3")
    a, b, g = float(s.A[0, 0]), float(s.B[0, 0]), float(s.G[0, 0])
    q, r, pf = float(s.Q[0, 0]), float(s.R[0, 0]), float(s.P_f[0, 0])
    alpha = inst.alpha
    x0 = float(inst.x0[0])

    npts = int(round(2 * grid.range / grid.delta)) + 1
    xs = np.linspace(-grid.range, grid.range, npts)
    L = grid.budget_levels
    budgets = np.linspace(0.0, alpha, L)

    def lift(W, levels):
        # H(s, b_i) = max over reachable budgets b_j <= b_i of W(s + g w, b_j)
        H = np.empty((npts, len(levels)))
        for col, i in enumerate(levels):
            best = np.full(npts, -np.inf)
            for j in range(i + 1):
                w = np.sqrt(max(budgets[i] - budgets[j], 0.0))
                Wj = W[:, j]
                best = np.maximum(best, np.interp(xs + g * w, xs, Wj))
                if w > 0.0:
                    best = np.maximum(best, np.interp(xs - g * w, xs, Wj))
            H[:, col] = best
        return H

    def minimize(x_pts, H):
        stage = 0.5 * q * x_pts**2
        if b == 0.0:
            return stage[:, None] + np.stack([np.interp(a * x_pts, xs, H[:, c]) for c in range(H.shape[1])], 1)
        u = (xs[None, :] - a * x_pts[:, None]) / b
        ucost = 0.5 * r * u**2
        out = np.empty((len(x_pts), H.shape[1]))
        for c in range(H.shape[1]):
            out[:, c] = np.min(ucost + H[None, :, c], axis=1)
        return stage[:, None] + out

    W = np.tile(0.5 * pf * xs[:, None] ** 2, (1, L))
    all_levels = list(range(L))
    for _ in range(N - 1):
        W = minimize(xs, lift(W, all_levels))
    H0 = lift(W, [L - 1])
    return float(minimize(np.array([x0]), H0)[0, 0]) / alpha
