"""Algebraic identities behind the recursion and the LMI, checked on random draws."""

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from sidar.model import LinearSystem
from sidar.riccati import closed_loop_form, riccati_step
from sidar.steady_state import riccati_inequality_block, s_matrix

from conftest import random_psd, random_system

TOL = 1e-9


def test_two_forms_of_the_step_agree():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        s = random_system(rng)
        Pi = random_psd(rng, s.n, rng.uniform(0.1, 3.0))
        lam = float(np.linalg.eigvalsh(s.G.T @ Pi @ s.G)[-1]) + rng.uniform(0.01, 3.0)
        a = riccati_step(Pi, lam, s)
        b = closed_loop_form(Pi, lam, s)
        worst = max(worst, np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a)))
    assert worst <= TOL


def _lmi_draw(rng):
    """Random (sys, Pi > 0, K, lam) whose Riccati-inequality block is PSD roughly half the time."""
    s = random_system(rng, pf=False)
    K = rng.normal(size=(s.m, s.n)) * 0.5
    Abar = s.A + s.B @ K
    rho = np.max(np.abs(np.linalg.eigvals(Abar)))
    scale = rng.uniform(0.3, 0.95) / max(rho, 1e-12)
    A = (s.A + s.B @ K) * scale - s.B @ K
    s = LinearSystem(A, s.B, s.G, s.Q, s.R, s.P_f)
    Abar = s.A + s.B @ K
    Qbar = s.Q + K.T @ s.R @ K
    c = rng.uniform(-0.3, 1.0)
    Pi = solve_discrete_lyapunov(Abar.T, Qbar + c * np.eye(s.n))
    Pi = 0.5 * (Pi + Pi.T)
    if np.linalg.eigvalsh(Pi)[0] <= 1e-3:
        Pi = Pi + (1e-3 - np.linalg.eigvalsh(Pi)[0]) * np.eye(s.n)
    top = float(np.linalg.eigvalsh(s.G.T @ Pi @ s.G)[-1])
    lam = top * rng.uniform(0.8, 3.0) + rng.uniform(0.0, 1.0)
    return s, Pi, K, lam


def test_lmi_equivalent_to_riccati_inequality():
    rng = np.random.default_rng(7)
    agree = {True: 0, False: 0}
    for _ in range(500):
        s, Pi, K, lam = _lmi_draw(rng)
        P = np.linalg.inv(Pi)
        S = s_matrix(P, -K @ P, lam, s)
        W = riccati_inequality_block(Pi, K, lam, s)
        es = np.linalg.eigvalsh(0.5 * (S + S.T))[0] / max(1.0, np.linalg.norm(S, 2))
        ew = np.linalg.eigvalsh(W)[0] / max(1.0, np.linalg.norm(W, 2))
        psd_s, psd_w = es >= -TOL, ew >= -TOL
        assert psd_s == psd_w, (es, ew)
        agree[psd_s] += 1
    assert agree[True] >= 50 and agree[False] >= 50


def test_strict_lmi_equivalent_to_strict_riccati_inequality():
    rng = np.random.default_rng(8)
    agree = {True: 0, False: 0}
    for _ in range(500):
        s, Pi, K, lam = _lmi_draw(rng)
        P = np.linalg.inv(Pi)
        S = s_matrix(P, -K @ P, lam, s)
        W = riccati_inequality_block(Pi, K, lam, s)
        es = np.linalg.eigvalsh(0.5 * (S + S.T))[0] / max(1.0, np.linalg.norm(S, 2))
        ew = np.linalg.eigvalsh(W)[0] / max(1.0, np.linalg.norm(W, 2))
        pd_s, pd_w = es > TOL, ew > TOL
        assert pd_s == pd_w, (es, ew)
        agree[pd_s] += 1
    assert agree[True] >= 50 and agree[False] >= 50


def _block_draw(rng):
    a, c = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    X = rng.normal(size=(a + c, a + c))
    M = X @ X.T + rng.uniform(-1.5, 0.5) * np.eye(a + c)
    return M[:a, :a], M[:a, a:], M[a:, a:]


def test_schur_complement_strict():
    rng = np.random.default_rng(9)
    for _ in range(500):
        A, B, C = _block_draw(rng)
        if abs(np.linalg.det(C)) < 1e-6:
            continue
        M = np.block([[A, B], [B.T, C]])
        lhs = np.linalg.eigvalsh(M)[0] > TOL
        S = A - B @ np.linalg.solve(C, B.T)
        rhs = np.linalg.eigvalsh(C)[0] > TOL and np.linalg.eigvalsh(0.5 * (S + S.T))[0] > TOL
        assert lhs == rhs


def test_schur_complement_semidefinite():
    rng = np.random.default_rng(10)
    for _ in range(500):
        A, B, C = _block_draw(rng)
        C = C + (1e-2 - min(0.0, np.linalg.eigvalsh(C)[0])) * np.eye(len(C))  # C > 0
        M = np.block([[A, B], [B.T, C]])
        S = A - B @ np.linalg.solve(C, B.T)
        assert (np.linalg.eigvalsh(M)[0] >= -TOL) == (np.linalg.eigvalsh(0.5 * (S + S.T))[0] >= -TOL)
