"""Discrete-time LTI models, trajectories and structural checks.

Systems are square (as many inputs as outputs) and start from rest, x_0 = 0.
Trajectories are stored one row per time step.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionError,
    NotObservableError,
    SchemaError,
    SingularFeedthrough,
    UnitCirclePole,
)

RANK_TOL = 1e-8
FEEDTHROUGH_TOL = 1e-10


class OperatorKind(enum.Enum):
    """Which input-output operator of the model a gain refers to.

    TRUNCATED_LIMIT is the limit of the finite-horizon operators; its storage
    certificate must be nonnegative. L2 is the operator on square-summable
    sequences and admits an indefinite certificate.
    """

    TRUNCATED_LIMIT = "trunc"
    L2 = "l2"

    @property
    def requires_psd(self) -> bool:
        return self is OperatorKind.TRUNCATED_LIMIT

    @classmethod
    def parse(cls, value) -> "OperatorKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown operator kind {value!r}; use 'trunc' or 'l2'") from None


def _as_matrix(value, name: str, shape=None) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if shape is not None and arr.size == 0 and 0 in shape:
        arr = arr.reshape(shape)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={arr.ndim}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Minimal realisation (A, B, C, D) with equal input and output counts."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _as_matrix(self.D, "D")
        m = D.shape[0]
        A = _as_matrix(self.A, "A", shape=(0, 0))
        n = A.shape[0]
        B = _as_matrix(self.B, "B", shape=(n, m))
        C = _as_matrix(self.C, "C", shape=(m, n))
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if D.shape != (m, m):
            raise DimensionError(f"D must be square (inputs == outputs), got {D.shape}")
        if B.shape != (n, m):
            raise DimensionError(f"B must be {n}x{m}, got {B.shape}")
        if C.shape != (m, n):
            raise DimensionError(f"C must be {m}x{n}, got {C.shape}")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[0]

    @classmethod
    def static(cls, D) -> "StateSpace":
        D = np.atleast_2d(np.asarray(D, dtype=float))
        m = D.shape[0]
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)), D)

    def spectral_radius(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCD"}

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpace":
        missing = [k for k in "ABCD" if k not in data]
        if missing:
            raise SchemaError(f"state-space model is missing field(s) {', '.join(missing)}")
        try:
            return cls(*(data[k] for k in "ABCD"))
        except (DimensionError, ValueError, TypeError) as exc:
            raise SchemaError(f"invalid state-space model: {exc}") from exc

    def __repr__(self) -> str:
        return f"StateSpace(n={self.n}, m={self.m})"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Input/output samples, shape (N, m) each."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        y = np.array(self.y, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if u.shape != y.shape or u.ndim != 2:
            raise DimensionError(f"u and y must have the same (N, m) shape, got {u.shape} and {y.shape}")
        if u.shape[0] < 1:
            raise DimensionError("trajectory must contain at least one sample")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def to_dict(self) -> dict:
        return {"u": self.u.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        if "u" not in data or "y" not in data:
            raise SchemaError("trajectory needs both 'u' and 'y'")
        try:
            return cls(data["u"], data["y"])
        except (DimensionError, ValueError, TypeError) as exc:
            raise SchemaError(f"invalid trajectory: {exc}") from exc


def simulate(ss: StateSpace, u) -> Trajectory:
    """Run the model from rest on the input rows of `u`."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != ss.m:
        raise DimensionError(f"input must have {ss.m} column(s), got shape {u.shape}")
    N = u.shape[0]
    y = u @ ss.D.T
    if ss.n:
        x = np.zeros(ss.n)
        for k in range(N):
            y[k] += ss.C @ x
            x = ss.A @ x + ss.B @ u[k]
    return Trajectory(u, y)


def numerical_rank(M: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def observability_matrix(ss: StateSpace, depth: int) -> np.ndarray:
    blocks = []
    CA = ss.C
    for _ in range(depth):
        blocks.append(CA)
        CA = CA @ ss.A
    return np.vstack(blocks)


def lag(ss: StateSpace, rank_tol: float = RANK_TOL) -> int:
    """Smallest observability depth reaching rank n (0 for static gains)."""
    if ss.n == 0:
        return 0
    for depth in range(1, ss.n + 1):
        if numerical_rank(observability_matrix(ss, depth), rank_tol) == ss.n:
            return depth
    raise NotObservableError(f"(A, C) is not observable: rank stays below n={ss.n}")


def hankel(u, L: int) -> np.ndarray:
    """Depth-L block Hankel matrix; block row i holds u_i ... u_{N-L+i}."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    N, m = u.shape
    if L < 1 or L > N:
        raise DimensionError(f"Hankel depth must satisfy 1 <= L <= N={N}, got {L}")
    cols = N - L + 1
    H = np.empty((m * L, cols))
    for i in range(L):
        H[i * m:(i + 1) * m] = u[i:i + cols].T
    return H


def is_persistently_exciting(u, L: int, rank_tol: float = RANK_TOL) -> bool:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    m = u.shape[1]
    H = hankel(u, L)
    if H.shape[1] < m * L:
        return False
    return numerical_rank(H, rank_tol) == m * L


def pe_order(u, rank_tol: float = RANK_TOL) -> int:
    """Largest L for which `u` is persistently exciting (0 if none)."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    best = 0
    for L in range(1, u.shape[0] + 1):
        if not is_persistently_exciting(u, L, rank_tol):
            break
        best = L
    return best


def shift_output(ss: StateSpace, alpha: float) -> StateSpace:
    """Realisation of the operator minus alpha times identity."""
    if alpha == 0:
        return ss
    return StateSpace(ss.A, ss.B, ss.C, ss.D - alpha * np.eye(ss.m))


def inverse_system(ss: StateSpace, tol: float = FEEDTHROUGH_TOL) -> StateSpace:
    s = np.linalg.svd(ss.D, compute_uv=False)
    if s[-1] <= tol * max(s[0], np.finfo(float).tiny):
        raise SingularFeedthrough(f"D is singular (smallest singular value {s[-1]:.3g})")
    Dinv = np.linalg.inv(ss.D)
    return StateSpace(ss.A - ss.B @ Dinv @ ss.C, ss.B @ Dinv, -Dinv @ ss.C, Dinv)


def freq_response(ss: StateSpace, theta, pole_tol: float = 1e-10) -> np.ndarray:
    """C (e^{i theta} I - A)^{-1} B + D.

    Scalar theta gives an (m, m) array; an array of K angles gives (K, m, m).
    """
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0
    th = np.atleast_1d(theta)
    G = np.broadcast_to(ss.D.astype(complex), (th.size, ss.m, ss.m)).copy()
    if ss.n:
        z = np.exp(1j * th)
        M = z[:, None, None] * np.eye(ss.n) - ss.A
        smin = np.linalg.svd(M, compute_uv=False)[:, -1]
        if np.any(smin <= pole_tol * max(1.0, np.linalg.norm(ss.A, 2))):
            bad = th[np.argmin(smin)]
            raise UnitCirclePole(f"A has an eigenvalue on the unit circle near theta={bad:.6g}")
        X = np.linalg.solve(M, np.broadcast_to(ss.B, (th.size, ss.n, ss.m)))
        G += ss.C @ X
    return G[0] if scalar else G


# -- file formats -------------------------------------------------------------

def load_state_space(path) -> StateSpace:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object with fields A, B, C, D")
    return StateSpace.from_dict(data)


def save_state_space(ss: StateSpace, path) -> None:
    Path(path).write_text(json.dumps(ss.to_dict(), indent=2) + "\n")


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _load_trajectory_csv(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object with fields u and y")
    return Trajectory.from_dict(data)


def _load_trajectory_csv(path: Path) -> Trajectory:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        m = len(header) // 2
        expected = [f"u_{i}" for i in range(1, m + 1)] + [f"y_{i}" for i in range(1, m + 1)]
        if m == 0 or header != expected:
            raise SchemaError(f"{path}: line 1: header must be {','.join(expected) or 'u_1,y_1'}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 * m:
                raise SchemaError(f"{path}: line {lineno}: expected {2 * m} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no samples")
    data = np.array(rows)
    return Trajectory(data[:, :m], data[:, m:])


def save_trajectory(traj: Trajectory, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        m = traj.m
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"u_{i}" for i in range(1, m + 1)] + [f"y_{i}" for i in range(1, m + 1)])
            for uk, yk in zip(traj.u, traj.y):
                w.writerow([repr(float(v)) for v in np.r_[uk, yk]])
    else:
        path.write_text(json.dumps(traj.to_dict()) + "\n")
