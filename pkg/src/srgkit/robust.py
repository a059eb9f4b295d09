"""Gain bounds that hold for every system consistent with noisy data.

The data are assumed to come from a difference-operator model

    y_k = Ct xi_k + Dt u_k + Bv v_k,

with xi_k the window of the last l inputs and outputs, unknown (Ct, Dt) and
a noise sequence V = (v_l, ..., v_{N-1}) in the quadratic set

    V Q V' + V S + S' V' + R >= 0,   Q < 0.

All (Ct, Dt) that explain the data with admissible noise form a matrix
ellipsoid.  The gain LMI is imposed on every member of that set with one
S-procedure multiplier tau >= 0.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, IndefiniteQbar, SchemaError, SingularConsistency
from .gains_data import DataMatrices, _ratio, shift_data
from .gains_ss import GainBounds, reciprocal
from .lti import OperatorKind, StateSpace, Trajectory, lag, observability_matrix, simulate
from .sdp import GainOptions, LmiConstraint, LmiProblem, threshold

INVERSE_TOL = 1e-8


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _frozen(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={arr.ndim}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Quadratic noise set (Q, S, R) and the channel Bv through which v_k enters y_k."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    Bv: np.ndarray

    def __post_init__(self):
        Q, S, R, Bv = (_frozen(getattr(self, k), k) for k in ("Q", "S", "R", "Bv"))
        cols, mv = S.shape
        if Q.shape != (cols, cols) or R.shape != (mv, mv) or Bv.shape[1] != mv:
            raise DimensionError(
                f"inconsistent noise model: Q {Q.shape}, S {S.shape}, R {R.shape}, Bv {Bv.shape}")
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max(initial=0))):
                raise ValueError(f"{name} must be symmetric")
        if cols and np.linalg.eigvalsh(Q)[-1] >= 0:
            raise ValueError("Q must be negative definite")
        for name, M in (("Q", Q), ("S", S), ("R", R), ("Bv", Bv)):
            object.__setattr__(self, name, M)

    @property
    def columns(self) -> int:
        return self.Q.shape[0]

    @property
    def m_v(self) -> int:
        return self.R.shape[0]

    def quadratic_form(self, V) -> np.ndarray:
        """V Q V' + V S + S' V' + R for noise samples V (m_v x (N-l))."""
        V = np.asarray(V, dtype=float)
        return _sym(V @ self.Q @ V.T + V @ self.S + self.S.T @ V.T + self.R)

    def contains(self, V, tol: float = 1e-10) -> bool:
        F = self.quadratic_form(V)
        return bool(np.linalg.eigvalsh(F)[0] >= -tol * max(1.0, np.abs(self.R).max()))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("Q", "S", "R", "Bv")}

    def digest(self) -> str:
        h = hashlib.sha256()
        for k in ("Q", "S", "R", "Bv"):
            M = np.ascontiguousarray(getattr(self, k))
            h.update(repr(M.shape).encode())
            h.update(M.tobytes())
        return h.hexdigest()

    @classmethod
    def from_dict(cls, data: dict, *, N: int | None = None, l: int | None = None,
                  m: int | None = None) -> "NoiseModel":
        """Parse the matrix form or the {"ball": {"v_bar": x}} shortcut.

        The shortcut needs the data size (N, l, m) to expand.
        """
        if not isinstance(data, dict):
            raise SchemaError("noise model must be a JSON object")
        if "ball" in data:
            ball = data["ball"]
            if not isinstance(ball, dict) or "v_bar" not in ball:
                raise SchemaError("ball noise needs {'ball': {'v_bar': radius}}")
            if None in (N, l, m):
                raise SchemaError("ball noise shortcut needs the trajectory length, l and m")
            try:
                return ball_noise_model(float(ball["v_bar"]), N, l, m)
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"invalid ball noise: {exc}") from exc
        missing = [k for k in ("Q", "S", "R", "Bv") if k not in data]
        if missing:
            raise SchemaError(f"noise model is missing {', '.join(missing)}")
        try:
            return cls(data["Q"], data["S"], data["R"], data["Bv"])
        except (DimensionError, ValueError, TypeError) as exc:
            raise SchemaError(f"invalid noise model: {exc}") from exc


def load_noise_model(path, *, N=None, l=None, m=None) -> NoiseModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return NoiseModel.from_dict(data, N=N, l=l, m=m)


def ball_noise_model(v_bar: float, N: int, l: int, m: int) -> NoiseModel:
    """Noise with |v_k| <= v_bar at every step: Q = -I, S = 0, R = v_bar^2 (N - l) I, Bv = I."""
    if not v_bar > 0:
        raise ValueError(f"v_bar must be positive, got {v_bar}")
    cols = N - l
    if cols < 1:
        raise DimensionError(f"need N > l, got N={N}, l={l}")
    return NoiseModel(-np.eye(cols), np.zeros((cols, m)), v_bar ** 2 * cols * np.eye(m), np.eye(m))


def sample_ball_noise(m: int, N: int, v_bar: float, seed=None) -> np.ndarray:
    """N i.i.d. samples, uniform on the m-dimensional ball of radius v_bar."""
    if v_bar < 0:
        raise ValueError(f"v_bar must be nonnegative, got {v_bar}")
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((N, m))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = v_bar * rng.random(N) ** (1.0 / m)
    return d * r[:, None]


@dataclass(frozen=True, eq=False)
class ExtendedKnown:
    """Known rows (At, Bt) of the window update xi_{k+1} = (At xi + Bt u; y_k)."""

    At: np.ndarray
    Bt: np.ndarray
    l: int
    m: int

    def advance(self, xi, u) -> np.ndarray:
        return self.At @ xi + self.Bt @ u


def build_extended_known(l: int, m: int) -> ExtendedKnown:
    if l < 1 or m < 1:
        raise DimensionError(f"need l >= 1 and m >= 1, got l={l}, m={m}")
    ml = m * l
    At = np.zeros((2 * ml - m, 2 * ml))
    Bt = np.zeros((2 * ml - m, m))
    # input window: drop u_{k-l}, append u_k
    At[:ml - m, m:ml] = np.eye(ml - m)
    Bt[ml - m:ml] = np.eye(m)
    # output window minus its newest sample y_k, which is the unknown row
    At[ml:, ml + m:] = np.eye(ml - m)
    return ExtendedKnown(At, Bt, l, m)


@dataclass(frozen=True, eq=False)
class ConsistencySet:
    """All Omega = (Ct, Dt) that explain the data with admissible noise.

    Stored around the least-squares type centre Omega_c:

        Omega in Sigma  <=>  Rhat + (Omega - Omega_c) Qbar (Omega - Omega_c)' >= 0,

    with Qbar < 0.  In the coordinates (z, w - Omega_c z) the matrix whose
    inverse defines the set is block diagonal, diag(Qbar, Rhat), so a tiny
    noise bound does not spoil the Qbar block.  Qbar is kept as a square
    root, Qbar = -root' root, since its condition number is the square of
    that of the data.  Qt, St, Rt are the blocks of the same set in plain
    (z, w) coordinates.
    """

    center: np.ndarray
    root: np.ndarray
    Rhat: np.ndarray
    l: int
    m: int

    @property
    def Qbar(self) -> np.ndarray:
        return -_sym(self.root.T @ self.root)

    @property
    def Qbar_inv(self) -> np.ndarray:
        Wi = np.linalg.inv(self.root)
        return -_sym(Wi @ Wi.T)

    @property
    def Qt(self) -> np.ndarray:
        Ri = np.linalg.inv(self.Rhat)
        return _sym(self.Qbar_inv + self.center.T @ Ri @ self.center)

    @property
    def St(self) -> np.ndarray:
        return -self.center.T @ np.linalg.inv(self.Rhat)

    @property
    def Rt(self) -> np.ndarray:
        return _sym(np.linalg.inv(self.Rhat))

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.Qt, self.St], [self.St.T, self.Rt]])

    def form(self, Ct, Dt) -> np.ndarray:
        """Rhat + Delta Qbar Delta' for Delta = (Ct, Dt) - centre; PSD iff (Ct, Dt) is in the set."""
        Delta = np.hstack([np.atleast_2d(Ct), np.atleast_2d(Dt)]) - self.center
        return _sym(self.Rhat + Delta @ self.Qbar @ Delta.T)

    def contains(self, Ct, Dt, tol: float = 1e-9) -> bool:
        return bool(np.linalg.eigvalsh(self.form(Ct, Dt))[0] >= -tol * np.linalg.norm(self.Rhat, 2))

    def shifted(self, alpha: float) -> "ConsistencySet":
        """The set for data with y replaced by y - alpha u.

        The shift maps the regressor z = (xi, u) to K z and leaves the
        residual Y - Omega_c Z unchanged, so Rhat stays and only Qbar and the
        centre move.
        """
        if alpha == 0:
            return self
        ml, m = self.m * self.l, self.m
        K = np.eye(2 * ml + m)
        K[ml:2 * ml, :ml] = -alpha * np.eye(ml)
        Eu = np.zeros((m, 2 * ml + m))
        Eu[:, 2 * ml:] = np.eye(m)
        Ki = np.linalg.inv(K)
        return ConsistencySet((self.center - alpha * Eu) @ Ki, self.root @ K.T, self.Rhat, self.l, self.m)


def _check_inverse(M: np.ndarray, name: str, tol: float) -> None:
    try:
        Mi = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise SingularConsistency(f"{name} is singular: {exc}") from exc
    err = np.abs(M @ Mi - np.eye(M.shape[0])).max()
    if not err <= tol:
        raise SingularConsistency(
            f"{name} is numerically singular (max |M M^-1 - I| = {err:.3g}, "
            f"condition number {np.linalg.cond(M):.3g})")


def build_consistency_set(dm: DataMatrices, noise: NoiseModel,
                          inverse_tol: float = INVERSE_TOL) -> ConsistencySet:
    """Matrix ellipsoid of difference-operator coefficients consistent with the data.

    With Z = (Xi; U) the regressor and Q = -L L', the centre is the weighted
    least-squares fit of (Y L - Bv S' L^-T) on Z L, and Rhat is the noise
    quadratic form evaluated at the fit residual E = Y - Omega_c Z.
    """
    cols, m = dm.columns, dm.m
    if noise.columns != cols:
        raise DimensionError(f"noise model covers {noise.columns} samples, data has {cols} columns")
    if noise.Bv.shape[0] != m:
        raise DimensionError(f"Bv must have {m} rows, got {noise.Bv.shape[0]}")
    Z = np.vstack([dm.Xi, dm.U])
    Y, Bv, Q, S = dm.Y, noise.Bv, noise.Q, noise.S
    L = np.linalg.cholesky(-Q)
    ZL = Z @ L
    # ZL ZL' = W' W without forming the product
    W = np.linalg.qr(ZL.T, mode="r")
    if W.shape[0] < W.shape[1]:
        raise SingularConsistency(f"only {cols} data columns for {W.shape[1]} regressors")
    _check_inverse(W, "square root of the data-weighted noise matrix", inverse_tol)
    # Qbar = -W'W is negative definite iff W is nonsingular; testing W avoids
    # the rounding of the explicit product, whose condition number is squared
    sv = np.linalg.svd(W, compute_uv=False)
    if not sv[-1] > W.shape[0] * np.finfo(float).eps * sv[0]:
        raise IndefiniteQbar(
            f"data-weighted noise matrix is not negative definite (root singular values "
            f"{sv[0]:.3g} .. {sv[-1]:.3g}); "
            "the stacked window/input data lack full row rank. Use a longer, richer trajectory "
            "or check the lag bound l")
    target = Y @ L - Bv @ np.linalg.solve(L, S).T
    center = np.linalg.lstsq(ZL.T, target.T, rcond=None)[0].T
    E = Y - center @ Z
    Rhat = _sym(E @ Q @ E.T + E @ S @ Bv.T + Bv @ S.T @ E.T + Bv @ noise.R @ Bv.T)
    _check_inverse(Rhat, "residual noise matrix", inverse_tol)
    return ConsistencySet(center, W, Rhat, dm.l, m)


def robust_gain_lmi(cs: ConsistencySet, kind, which: str) -> LmiProblem:
    """Robust LMI for every member of the consistency set.

    Written in the coordinates (xi, u, omega) with y_k = Omega_c (xi; u) + s omega,
    where s**2 = |Rhat|; the S-procedure term is then diag(Qbar^-1, s**2 Rhat^-1).
    which="max": t = gamma**2.  which="min": t = 1 / zeta**2, with P and tau
    divided by zeta**2 as in the model-based case.
    """
    kind = OperatorKind.parse(kind)
    l, m = cs.l, cs.m
    p = 2 * m * l
    q = p + m
    k = q + m
    s = math.sqrt(np.linalg.norm(cs.Rhat, 2))
    # (xi, u, y) = W (xi, u, omega)
    W = np.eye(k)
    W[q:, :q] = cs.center
    W[q:, q:] = s * np.eye(m)
    ek = build_extended_known(l, m)
    L1 = np.hstack([np.eye(p), np.zeros((p, 2 * m))])
    L2 = np.zeros((p, k))
    L2[:p - m, :p] = ek.At
    L2[:p - m, p:q] = ek.Bt
    L2[p - m:, q:] = np.eye(m)
    Fu = np.zeros((m, k))
    Fu[:, p:q] = np.eye(m)
    Fy = np.zeros((m, k))
    Fy[:, q:] = np.eye(m)
    Fu, Fy, L1, L2 = Fu @ W, Fy @ W, L1 @ W, L2 @ W
    if which == "max":
        const, gain = Fy.T @ Fy, -Fu.T @ Fu
    elif which == "min":
        const, gain = Fu.T @ Fu, -Fy.T @ Fy
    else:
        raise ValueError(f"which must be 'max' or 'min', got {which!r}")
    M = np.zeros((k, k))
    M[:q, :q] = cs.Qbar_inv
    M[q:, q:] = s ** 2 * np.linalg.inv(cs.Rhat)
    # tau is free, so only the direction of M matters
    M = _sym(M / np.linalg.norm(M, 2))
    con = LmiConstraint(_sym(const), ((L2, 1.0), (L1, -1.0)), (-M,), gain_term=_sym(gain))
    return LmiProblem(p, (con,), psd=kind.requires_psd, n_scalars=1,
                      label=f"robust-{which}-{kind.value}")


def _consistency(dm, noise, cs):
    return cs if cs is not None else build_consistency_set(dm, noise)


def robust_max_gain(dm: DataMatrices, noise: NoiseModel | None, kind=OperatorKind.L2,
                    opts: GainOptions | None = None, *, consistency: ConsistencySet | None = None) -> float:
    """Upper bound on the max gain of every system consistent with the data (inf if none)."""
    opts = opts or GainOptions()
    cs = _consistency(dm, noise, consistency)
    hi = max(2.0 * _ratio(dm.Y, dm.U), 1e-3)
    return threshold(robust_gain_lmi(cs, kind, "max"), opts, hi).value


def robust_min_gain(dm: DataMatrices, noise: NoiseModel | None, kind=OperatorKind.L2,
                    opts: GainOptions | None = None, *, consistency: ConsistencySet | None = None) -> float:
    """Lower bound on the min gain of every system consistent with the data."""
    opts = opts or GainOptions()
    cs = _consistency(dm, noise, consistency)
    r = _ratio(dm.U, dm.Y)
    hi = 2.0 * r if math.isfinite(r) and r > 0 else 1.0
    return reciprocal(threshold(robust_gain_lmi(cs, kind, "min"), opts, hi).value)


def robust_gain_annulus(dm: DataMatrices, noise: NoiseModel | None, alpha: float, kind=OperatorKind.L2,
                        opts: GainOptions | None = None, *,
                        consistency: ConsistencySet | None = None) -> GainBounds:
    opts = opts or GainOptions()
    kind = OperatorKind.parse(kind)
    cs = _consistency(dm, noise, consistency).shifted(alpha)
    shifted = shift_data(dm, alpha)
    gamma = robust_max_gain(shifted, None, kind, opts, consistency=cs)
    zeta = robust_min_gain(shifted, None, kind, opts, consistency=cs)
    return GainBounds(min(zeta, gamma), gamma, alpha, kind, opts.rel_tol)


# -- simulation and fixtures -----------------------------------------------------

def difference_coefficients(ss: StateSpace, l: int | None = None):
    """(Ct, Dt) with y_k = Ct xi_k + Dt u_k on every noise-free trajectory.

    Uses the pseudo-inverse of the depth-l observability matrix, so for
    l above the lag this is one of several valid choices.
    """
    l = lag(ss) if l is None else l
    n, m = ss.n, ss.m
    if l < 1:
        raise DimensionError("difference coefficients need l >= 1")
    if n == 0:
        return np.zeros((m, 2 * m * l)), ss.D.copy()
    O = observability_matrix(ss, l)
    # y-window = O x_{k-l} + T u-window;  x_k = A^l x_{k-l} + R u-window
    T = np.zeros((m * l, m * l))
    for i in range(l):
        T[i * m:(i + 1) * m, i * m:(i + 1) * m] = ss.D
        for j in range(i):
            T[i * m:(i + 1) * m, j * m:(j + 1) * m] = O[(i - j - 1) * m:(i - j) * m] @ ss.B
    Rl = np.hstack([np.linalg.matrix_power(ss.A, l - 1 - j) @ ss.B for j in range(l)])
    CAl = ss.C @ np.linalg.matrix_power(ss.A, l)
    Op = np.linalg.pinv(O)
    Cy = CAl @ Op
    Cu = ss.C @ Rl - Cy @ T
    return np.hstack([Cu, Cy]), ss.D.copy()


def simulate_noisy(ss: StateSpace, u, noise_seq, Bv=None, l: int | None = None) -> Trajectory:
    """Simulate y_k = Ct xi_k + Dt u_k + Bv v_k.

    The first l samples come from the model started at rest (plus Bv v_k);
    after that the difference-operator recursion takes over, so the data are
    exactly consistent with the true coefficients and the given noise.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    v = np.asarray(noise_seq, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    Bv = np.eye(ss.m) if Bv is None else np.atleast_2d(np.asarray(Bv, dtype=float))
    if u.ndim != 2 or u.shape[1] != ss.m:
        raise DimensionError(f"input must have {ss.m} column(s), got shape {u.shape}")
    if v.shape[0] != u.shape[0] or Bv.shape != (ss.m, v.shape[1]):
        raise DimensionError(f"noise {v.shape} and Bv {Bv.shape} do not fit input {u.shape}")
    N, m = u.shape
    l = lag(ss) if l is None else l
    if l == 0:
        return Trajectory(u, u @ ss.D.T + v @ Bv.T)
    Ct, Dt = difference_coefficients(ss, l)
    head = min(l, N)
    y = np.empty((N, m))
    y[:head] = simulate(ss, u[:head]).y + v[:head] @ Bv.T
    for k in range(head, N):
        xi = np.concatenate([u[k - l:k].ravel(), y[k - l:k].ravel()])
        y[k] = Ct @ xi + Dt @ u[k] + Bv @ v[k]
    return Trajectory(u, y)


def fit_difference_coefficients(dm: DataMatrices):
    """Least-squares (Ct, Dt) from data; a debugging aid, not used by the bounds."""
    H = np.vstack([dm.Xi, dm.U])
    Omega = np.linalg.lstsq(H.T, dm.Y.T, rcond=None)[0].T
    p = dm.Xi.shape[0]
    return Omega[:, :p], Omega[:, p:]
