"""System data, assumption checks, random generation and JSON ingestion."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PSD_RTOL = 1e-10
SYM_RTOL = 1e-12
RANK_RTOL = 1e-10


class SystemFileError(ValueError):
    """Raised when a system file cannot be parsed into a problem instance."""


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _symmetrize(M: np.ndarray, name: str) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > SYM_RTOL * scale:
        warnings.warn(f"{name} is not symmetric (max asymmetry {asym:.3g}); averaging with its transpose",
                      stacklevel=3)
    if asym > 0.0:
        return 0.5 * (M + M.T)
    return M


def sym_sqrt(M: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix (negative eigenvalues clamped to 0)."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def numerical_rank(M: np.ndarray) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0] * max(M.shape)))


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Plant x+ = A x + B u + G w with stage weights Q, R and terminal weight P_f."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P_f: np.ndarray
    name: str = ""

    def __post_init__(self):
        mats = {}
        for key in ("A", "B", "G", "Q", "R", "P_f"):
            mats[key] = _as_matrix(getattr(self, key), key)
        A, B, G = mats["A"], mats["B"], mats["G"]
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or G.shape[0] != n:
            raise ValueError(f"B and G need {n} rows, got {B.shape} and {G.shape}")
        m, q = B.shape[1], G.shape[1]
        if mats["Q"].shape != (n, n) or mats["P_f"].shape != (n, n):
            raise ValueError("Q and P_f must be n x n")
        if mats["R"].shape != (m, m):
            raise ValueError(f"R must be {m} x {m}, got {mats['R'].shape}")
        for key in ("Q", "R", "P_f"):
            mats[key] = _symmetrize(mats[key], key)
        for key in ("Q", "P_f"):
            w = np.linalg.eigvalsh(mats[key])
            if w.size and w[0] < -PSD_RTOL * max(1.0, float(np.max(np.abs(w)))):
                raise ValueError(f"{key} must be positive semidefinite (min eigenvalue {w[0]:.3g})")
        if m and np.linalg.eigvalsh(mats["R"])[0] <= 0.0:
            raise ValueError("R must be positive definite")
        for key, val in mats.items():
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.G.shape[1]

    def with_terminal(self, P_f: np.ndarray) -> "LinearSystem":
        return LinearSystem(self.A, self.B, self.G, self.Q, self.R, P_f, self.name)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    system: LinearSystem
    x0: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.system.n,):
            raise ValueError(f"x0 must have length {self.system.n}, got {x0.shape}")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 has non-finite entries")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def scaled_state(self) -> np.ndarray:
        """The state enters every solution as x0 / sqrt(alpha)."""
        return self.x0 / np.sqrt(self.alpha)

    def replace(self, x0=None, alpha=None) -> "ProblemInstance":
        return ProblemInstance(self.system,
                               self.x0 if x0 is None else x0,
                               self.alpha if alpha is None else alpha)


@dataclass
class ValidationReport:
    stabilizable: bool
    detectable: bool
    range_inclusion: bool
    terminal_coupling: bool
    q_pd: bool
    pf_pd: bool
    messages: list[str] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all((self.stabilizable, self.detectable, self.range_inclusion,
                    self.terminal_coupling, self.q_pd, self.pf_pd))


def _pbh(A: np.ndarray, X: np.ndarray) -> bool:
    """True when every eigenvalue of A with modulus >= 1 passes rank [A - mu I, X] = n."""
    n = A.shape[0]
    for mu in np.linalg.eigvals(A):
        if abs(mu) >= 1.0 - 1e-12:
            if numerical_rank(np.hstack([A - mu * np.eye(n), X.astype(complex)])) < n:
                return False
    return True


def validate(sys: LinearSystem) -> ValidationReport:
    """Check the standing assumptions. Failures become flags and messages, never exceptions."""
    msgs = []
    stab = _pbh(sys.A, sys.B)
    det = _pbh(sys.A.T, sym_sqrt(sys.Q).T)
    if not stab:
        msgs.append("(A, B) is not stabilizable")
    if not det:
        msgs.append("(A, Q) is not detectable")
    rng = numerical_rank(np.hstack([sys.B, sys.G])) == numerical_rank(sys.B)
    if not rng:
        msgs.append("range of G is not contained in range of B")
    coupling = float(np.linalg.norm(sys.G.T @ sys.P_f @ sys.G, 2)) > 1e-12 if sys.q else False
    if not coupling:
        msgs.append("G' P_f G = 0")
    q_pd = bool(np.linalg.eigvalsh(sys.Q)[0] > 0)
    pf_pd = bool(np.linalg.eigvalsh(sys.P_f)[0] > 0)
    if not q_pd:
        msgs.append("Q is not positive definite")
    if not pf_pd:
        msgs.append("P_f is not positive definite")
    return ValidationReport(stab, det, rng, coupling, q_pd, pf_pd, msgs)


# The five example plants; all use P_f = 0.
def _scalar(a, b, g, r, q, name):
    m = lambda v: np.array([[float(v)]])
    return LinearSystem(m(a), m(b), m(g), m(q), m(r), m(0.0), name)


def example_system(k: int) -> LinearSystem:
    if k == 1:
        return _scalar(1, 1, 1, 1, 1, "system1")
    if k == 2:
        return _scalar(0.5, 1, 1, 1, 0.2, "system2")
    if k == 3:
        return _scalar(0.5, 0, 1, 1, 0.2, "system3")
    I2 = np.eye(2)
    if k == 4:
        return LinearSystem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [1.0, 1.0]]),
                            I2, I2, I2, np.zeros((2, 2)), "system4")
    if k == 5:
        return LinearSystem(np.array([[1.0, 1.0], [0.0, 0.5]]), np.array([[1.0, 0.0], [0.0, 0.25]]),
                            I2, I2, I2, np.zeros((2, 2)), "system5")
    raise ValueError(f"no example system {k}")


class GenerationError(RuntimeError):
    pass


def _random_candidate(n: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.uniform(-1.0, 1.0, size=(n, n))
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    return A * (0.9 / rho)


def random_stable_system(n: int, seed: int, check: bool = True, max_attempts: int = 50) -> LinearSystem:
    """Random plant with spectral radius 0.9 and B = G = Q = R = P_f = I.

    With ``check`` the candidate is resampled from a seed derived from ``(seed, attempt)``
    until the steady-state classifier reports it nondegenerate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    I = np.eye(n)
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        sys = LinearSystem(_random_candidate(n, rng), I, I, I, I, I, f"random_n{n}_s{seed}_a{attempt}")
        if not check:
            return sys
        from .steady_state import classify
        if classify(sys, 1.0).kind == "nondegenerate":
            return sys
    raise GenerationError(f"no nondegenerate system for n={n}, seed={seed} in {max_attempts} attempts")


def candidate_systems(n: int, seed: int, max_attempts: int = 50):
    """Yield the same candidate sequence random_stable_system walks through."""
    I = np.eye(n)
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        yield LinearSystem(_random_candidate(n, rng), I, I, I, I, I, f"random_n{n}_s{seed}_a{attempt}")


# JSON system files

_MATRIX_KEYS = ("A", "B", "G", "Q", "R", "P_f")


def load_system(path) -> ProblemInstance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemFileError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SystemFileError(f"{path}: top level must be an object")
    missing = [k for k in _MATRIX_KEYS if k not in data]
    if missing:
        raise SystemFileError(f"{path}: missing keys {missing}")
    try:
        sys = LinearSystem(*(data[k] for k in _MATRIX_KEYS), name=str(data.get("name", path.stem)))
        x0 = data.get("x0", np.zeros(sys.n))
        return ProblemInstance(sys, x0, float(data.get("alpha", 1.0)))
    except (ValueError, TypeError) as exc:
        raise SystemFileError(f"{path}: {exc}") from exc


def system_to_dict(inst: ProblemInstance) -> dict:
    s = inst.system
    out = {"name": s.name}
    for k in _MATRIX_KEYS:
        out[k] = getattr(s, k).tolist()
    out["alpha"] = inst.alpha
    out["x0"] = inst.x0.tolist()
    return out


def save_system(inst: ProblemInstance, path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(inst), indent=1) + "\n")
