"""Dense log-det barrier solver for SDPs with affine PSD block constraints.

Decision variables are scalars, symmetric matrices (stored as svec with sqrt(2) scaling on the
off-diagonal) or general matrices (column-major vec). Each block is

    F(x) = C + sum_i x_i E_i + sum_j (U_j X_j V_j' + V_j X_j' U_j')

so structured LMIs never have to materialize one coefficient matrix per matrix entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
import time

import numpy as np
from scipy import linalg as sla

ARMIJO = 0.01
BACKTRACK = 0.5
MAX_NEWTON = 500


class SdpStatus(str, Enum):
    OPTIMAL = "optimal"
    MAXITER = "maxiter"
    INFEASIBLE = "infeasible"


class SdpError(RuntimeError):
    pass


@dataclass
class Var:
    name: str
    kind: str  # "scalar" | "sym" | "mat"
    shape: tuple = (1, 1)
    offset: int = 0

    @property
    def size(self) -> int:
        if self.kind == "scalar":
            return 1
        if self.kind == "sym":
            n = self.shape[0]
            return n * (n + 1) // 2
        return self.shape[0] * self.shape[1]

    @property
    def raw_size(self) -> int:
        return 1 if self.kind == "scalar" else self.shape[0] * self.shape[1]


def _svec_index(n: int):
    iu, ju = np.triu_indices(n)
    ia = iu + n * ju  # column-major position of (i, j)
    ib = ju + n * iu  # position of (j, i)
    w = np.where(iu == ju, 0.5, 1.0 / np.sqrt(2.0))
    return ia, ib, w


@lru_cache(maxsize=None)
def _triu(n: int):
    iu, ju = np.triu_indices(n)
    return iu, ju, np.where(iu == ju, 1.0, np.sqrt(2.0))


def svec(X: np.ndarray) -> np.ndarray:
    iu, ju, scale = _triu(X.shape[0])
    return X[iu, ju] * scale


def smat(v: np.ndarray, n: int) -> np.ndarray:
    iu, ju, scale = _triu(n)
    X = np.zeros((n, n))
    X[iu, ju] = v / scale
    X[ju, iu] = v / scale
    return X


@dataclass
class Block:
    dim: int
    const: np.ndarray
    scalar_terms: list = field(default_factory=list)  # (var index, E)
    matrix_terms: list = field(default_factory=list)  # (var index, U, V)


@dataclass
class SdpProblem:
    """minimize c'x subject to every block F_b(x) being PSD."""

    vars: list
    blocks: list
    c: np.ndarray

    def __post_init__(self):
        off = 0
        for v in self.vars:
            v.offset = off
            off += v.size
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.size != off:
            raise ValueError(f"objective has length {self.c.size}, expected {off}")
        for b in self.blocks:
            if b.const.shape != (b.dim, b.dim):
                raise ValueError("block constant has wrong shape")
            for vi, E in b.scalar_terms:
                if self.vars[vi].kind != "scalar" or E.shape != (b.dim, b.dim):
                    raise ValueError("bad scalar term")
                if not np.allclose(E, E.T):
                    raise ValueError("coefficient matrices must be symmetric")
            for vi, U, V in b.matrix_terms:
                r, cdim = self.vars[vi].shape
                if U.shape != (b.dim, r) or V.shape != (b.dim, cdim):
                    raise ValueError("bad matrix term shapes")

    @property
    def num_scalars(self) -> int:
        return sum(v.size for v in self.vars)

    @property
    def total_dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @classmethod
    def dense(cls, c, blocks):
        """Plain form: blocks given as (C, [F_1, ..., F_k]) meaning C + sum x_i F_i."""
        c = np.asarray(c, dtype=float).reshape(-1)
        k = c.size
        vars_ = [Var(f"x{i}", "scalar") for i in range(k)]
        out = []
        for C, Fs in blocks:
            C = np.atleast_2d(np.asarray(C, dtype=float))
            if len(Fs) != k:
                raise ValueError("one coefficient matrix per variable is required")
            terms = [(i, np.atleast_2d(np.asarray(F, dtype=float))) for i, F in enumerate(Fs)]
            out.append(Block(C.shape[0], C, terms, []))
        return cls(vars_, out, c)

    def value(self, x: np.ndarray, i: int) -> np.ndarray | float:
        v = self.vars[i]
        seg = x[v.offset: v.offset + v.size]
        if v.kind == "scalar":
            return float(seg[0])
        if v.kind == "sym":
            return smat(seg, v.shape[0])
        return seg.reshape(v.shape, order="F")

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.num_scalars)
        for v in self.vars:
            val = values[v.name]
            if v.kind == "scalar":
                x[v.offset] = float(val)
            elif v.kind == "sym":
                x[v.offset: v.offset + v.size] = svec(np.asarray(val, dtype=float))
            else:
                x[v.offset: v.offset + v.size] = np.asarray(val, dtype=float).ravel(order="F")
        return x

    def eval_block(self, b: Block, x: np.ndarray) -> np.ndarray:
        F = b.const.copy()
        for vi, E in b.scalar_terms:
            F += self.value(x, vi) * E
        for vi, U, V in b.matrix_terms:
            T = U @ self.value(x, vi) @ V.T
            F += T + T.T
        return 0.5 * (F + F.T)

    def eval_blocks(self, x: np.ndarray) -> list:
        return [self.eval_block(b, x) for b in self.blocks]


@dataclass
class SdpSolution:
    x: np.ndarray
    objective_value: float
    duality_gap: float
    primal_residual: float
    iterations: int
    status: SdpStatus
    merit_history: list = field(default_factory=list, repr=False)


@dataclass
class SdpDiagnostics:
    objective_value: float
    primal_residual: float
    block_min_eigs: list


def check_solution(prob: SdpProblem, sol) -> SdpDiagnostics:
    """Recompute block eigenvalues and the objective from scratch."""
    x = sol.x if hasattr(sol, "x") else np.asarray(sol, dtype=float)
    eigs = [float(np.linalg.eigvalsh(F)[0]) for F in prob.eval_blocks(x)]
    return SdpDiagnostics(float(prob.c @ x), min(eigs) if eigs else 0.0, eigs)


class _Barrier:
    """-sum log det F_b(x) with gradient and Hessian in decision coordinates."""

    def __init__(self, prob: SdpProblem):
        self.p = prob
        self.sv = {}
        for i, v in enumerate(prob.vars):
            if v.kind == "sym":
                self.sv[i] = _svec_index(v.shape[0])

    def _rows(self, vi: int, G: np.ndarray) -> np.ndarray:
        # raw (vec) coordinates -> decision coordinates along axis 0
        if vi in self.sv:
            ia, ib, w = self.sv[vi]
            return w[:, None] * (G[ia] + G[ib]) if G.ndim == 2 else w * (G[ia] + G[ib])
        return G

    def _cols(self, vi: int, G: np.ndarray) -> np.ndarray:
        if vi in self.sv:
            ia, ib, w = self.sv[vi]
            return (G[:, ia] + G[:, ib]) * w[None, :]
        return G

    def chol(self, x):
        out = []
        for F in self.p.eval_blocks(x):
            try:
                out.append(np.linalg.cholesky(F))
            except np.linalg.LinAlgError:
                return None
        return out

    def value(self, x) -> float:
        Ls = self.chol(x)
        if Ls is None:
            return np.inf
        return -sum(2.0 * np.sum(np.log(np.diag(L))) for L in Ls)

    def derivatives(self, x, Ls):
        p = self.p
        nv = p.num_scalars
        g = np.zeros(nv)
        H = np.zeros((nv, nv))
        for b, L in zip(p.blocks, Ls):
            Z = sla.cho_solve((L, True), np.eye(b.dim))
            Z = 0.5 * (Z + Z.T)
            # scalar terms
            if b.scalar_terms:
                idx = np.array([p.vars[vi].offset for vi, _ in b.scalar_terms])
                Es = np.stack([E for _, E in b.scalar_terms])
                ZE = np.einsum("ij,kjl->kil", Z, Es)
                ZEZ = np.einsum("kil,lm->kim", ZE, Z)
                np.add.at(g, idx, -np.einsum("kii->k", ZE))
                Hss = ZEZ.reshape(len(idx), -1) @ Es.reshape(len(idx), -1).T
                np.add.at(H, (idx[:, None], idx[None, :]), Hss)
            else:
                ZEZ = None
            mt = b.matrix_terms
            ZU = [Z @ U for _, U, _ in mt]
            ZV = [Z @ V for _, _, V in mt]
            for t, (vt, Ut, Vt) in enumerate(mt):
                var_t = p.vars[vt]
                sl_t = slice(var_t.offset, var_t.offset + var_t.size)
                Gm = -2.0 * Ut.T @ ZV[t]
                g[sl_t] += self._rows(vt, Gm.ravel(order="F"))
                # cross terms with scalar variables
                if ZEZ is not None:
                    for k, (vs, _) in enumerate(b.scalar_terms):
                        raw = 2.0 * (Ut.T @ ZEZ[k] @ Vt).ravel(order="F")
                        col = self._rows(vt, raw)
                        o = p.vars[vs].offset
                        H[sl_t, o] += col
                        H[o, sl_t] += col
                ra, ca = var_t.shape
                for s in range(t, len(mt)):
                    vs, Us, Vs = mt[s]
                    var_s = p.vars[vs]
                    rb, cb = var_s.shape
                    al = Vs.T @ ZU[t]  # cb x ra
                    be = Vt.T @ ZU[s]  # ca x rb
                    ga = Us.T @ ZU[t]  # rb x ra
                    de = Vt.T @ ZV[s]  # ca x cb
                    T = np.einsum("da,bc->badc", al, be) + np.einsum("ca,bd->badc", ga, de)
                    raw = 2.0 * T.reshape(ca * ra, cb * rb)
                    blk = self._cols(vs, self._rows(vt, raw))
                    sl_s = slice(var_s.offset, var_s.offset + var_s.size)
                    H[sl_t, sl_s] += blk
                    if s != t:
                        H[sl_s, sl_t] += blk.T
        return g, 0.5 * (H + H.T)


def _newton_direction(H, rhs):
    # Near the optimum the Hessian is numerically semidefinite; a Jacobi-scaled diagonal shift
    # keeps Cholesky usable (an eigendecomposition costs an order of magnitude more).
    d = np.sqrt(np.maximum(np.diag(H), np.finfo(float).tiny))
    Hs = H / d[:, None] / d[None, :]
    shift = 0.0
    for _ in range(8):
        try:
            c = sla.cho_factor(Hs + shift * np.eye(len(d)) if shift else Hs, lower=True,
                               check_finite=False)
            return sla.cho_solve(c, rhs / d, check_finite=False) / d
        except np.linalg.LinAlgError:
            shift = 1e-14 if shift == 0.0 else shift * 100.0
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, 1e-14 * max(1.0, w[-1]))
    return V @ ((V.T @ rhs) / w)


def _logdet_sum(Ls) -> float:
    return sum(2.0 * np.sum(np.log(np.diag(L))) for L in Ls)


def _barrier_solve(prob: SdpProblem, x0: np.ndarray, t0: float = 1.0, mu: float = 10.0,
                   rel_gap: float = 1e-9, max_newton: int = MAX_NEWTON, stop=None,
                   inner_tol: float = 1e-10, max_inner: int = 60, deadline: float | None = None):
    bar = _Barrier(prob)
    x = x0.copy()
    Ls = bar.chol(x)
    if Ls is None:
        raise SdpError("initial point is not strictly feasible")
    m_total = prob.total_dim
    t = t0
    newton = 0
    merit = []
    status = SdpStatus.MAXITER
    while True:
        hist = []
        prev_dec = np.inf
        for _ in range(max_inner):
            if newton >= max_newton:
                break
            if deadline is not None and time.perf_counter() > deadline:
                newton = max_newton  # reported as MAXITER
                break
            g, H = bar.derivatives(x, Ls)
            grad = t * prob.c + g
            dx = _newton_direction(H, -grad)
            dec = float(-grad @ dx)
            f0 = t * float(prob.c @ x) - _logdet_sum(Ls)
            if not hist:
                hist.append(f0)
            if dec / 2.0 <= inner_tol:
                break
            # Inside the quadratic region a full step is safe for a self-concordant barrier;
            # there the merit change is below roundoff of t*c'x, so Armijo is not tested.
            pure = dec < 0.0625
            if pure and dec > 0.5 * prev_dec:
                break  # stalled at roundoff level
            prev_dec = dec
            step = 1.0
            accepted = False
            while step > 1e-12:
                xn = x + step * dx
                Ln = bar.chol(xn)
                if Ln is not None:
                    fn = t * float(prob.c @ xn) - _logdet_sum(Ln)
                    if pure or fn <= f0 + ARMIJO * step * float(grad @ dx):
                        accepted = True
                        break
                step *= BACKTRACK
            newton += 1
            if not accepted:
                break
            x, Ls = xn, Ln
            hist.append(fn)
            if stop is not None and stop(x):
                merit.append(hist)
                return x, t, newton, merit, "stopped"
        merit.append(hist)
        obj = float(prob.c @ x)
        if m_total / t <= rel_gap * max(1.0, abs(obj)):
            status = SdpStatus.OPTIMAL
            break
        if newton >= max_newton:
            status = SdpStatus.MAXITER
            break
        t *= mu
    return x, t, newton, merit, status


def _phase_one(prob: SdpProblem, max_newton: int, radius: float = 1e4):
    """Find a strictly feasible point by minimizing s subject to F_b(x) + s I PSD.

    Every variable is also confined to a spectral-norm ball of the given radius; without it the
    auxiliary problem has flat directions along which Newton steps run off to infinity.
    """
    vars_ = [Var(v.name, v.kind, v.shape) for v in prob.vars] + [Var("_s", "scalar")]
    si = len(vars_) - 1
    blocks = [Block(b.dim, b.const, b.scalar_terms + [(si, np.eye(b.dim))], b.matrix_terms)
              for b in prob.blocks]
    for i, v in enumerate(prob.vars):
        r, c = v.shape
        d = r + c
        E_top = np.eye(d)[:, :r]
        E_bot = np.eye(d)[:, r:]
        if v.kind == "scalar":
            blocks.append(Block(2, radius * np.eye(2), [(i, np.array([[0.0, 1.0], [1.0, 0.0]]))], []))
        else:
            blocks.append(Block(d, radius * np.eye(d), [], [(i, E_top, E_bot)]))
    nv = prob.num_scalars
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    aux = SdpProblem(vars_, blocks, c)
    x = np.zeros(nv + 1)
    worst = min(float(np.linalg.eigvalsh(F)[0]) for F in prob.eval_blocks(x[:nv]))
    x[-1] = max(0.0, -worst) + 1.0
    xa, t, newton, _, status = _barrier_solve(aux, x, max_newton=max_newton,
                                               stop=lambda z: z[-1] < 0.0)
    if status == "stopped":
        return xa[:nv], newton
    if status == SdpStatus.OPTIMAL and xa[-1] < 0.0:
        return xa[:nv], newton
    return None, newton


def warm_t(prob: SdpProblem, x: np.ndarray) -> float:
    """Barrier parameter for which x is closest to central: argmin_t of ||t c + g|| in the H^-1 norm."""
    bar = _Barrier(prob)
    Ls = bar.chol(x)
    if Ls is None:
        raise SdpError("point is not strictly feasible")
    g, H = bar.derivatives(x, Ls)
    Hc = _newton_direction(H, prob.c)
    t = -float(g @ Hc) / float(prob.c @ Hc)
    return t if np.isfinite(t) else 1.0


def solve_sdp(prob: SdpProblem, init: np.ndarray | None = None, rel_gap: float = 1e-9,
              max_newton: int = MAX_NEWTON, t0: float = 1.0, deadline: float | None = None) -> SdpSolution:
    """Barrier method from t = t0 (default 1), t multiplied by 10 after each centering.

    ``deadline`` is an absolute time.perf_counter() value; past it the solve stops with MAXITER.
    """
    used = 0
    if init is None:
        x0, used = _phase_one(prob, max_newton)
        if x0 is None:
            return SdpSolution(np.zeros(prob.num_scalars), float("nan"), float("inf"), float("nan"),
                               used, SdpStatus.INFEASIBLE)
    else:
        x0 = np.asarray(init, dtype=float).copy()
    x, t, newton, merit, status = _barrier_solve(prob, x0, t0=t0, rel_gap=rel_gap,
                                                 max_newton=max(1, max_newton - used), deadline=deadline)
    diag = check_solution(prob, x)
    return SdpSolution(x, float(prob.c @ x), prob.total_dim / t, diag.primal_residual,
                       newton + used, SdpStatus(status), merit)
