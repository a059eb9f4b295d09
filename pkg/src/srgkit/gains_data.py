"""Gains of an unknown system from one noise-free input-output trajectory.

With l at least the lag, the window of the last l inputs and outputs

    xi_k = (u_{k-l}, ..., u_{k-1}, y_{k-l}, ..., y_{k-1})

is a state.  The gain LMIs are then written in xi, with the data matrices
standing in for (A, B, C, D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PreconditionError
from .gains_ss import GainBounds, reciprocal
from .lti import RANK_TOL, OperatorKind, Trajectory, is_persistently_exciting
from .sdp import GainOptions, LmiConstraint, LmiProblem, threshold


@dataclass(frozen=True, eq=False)
class DataMatrices:
    """Xi, Xi_plus (2ml x (N-l)) and U, Y (m x (N-l)) built from one trajectory."""

    Xi: np.ndarray
    XiPlus: np.ndarray
    U: np.ndarray
    Y: np.ndarray
    l: int
    m: int
    N: int

    @property
    def columns(self) -> int:
        return self.U.shape[1]

    def inputs(self) -> np.ndarray:
        """Recover the full input sequence u_0 ... u_{N-1} as an (N, m) array."""
        head = self.Xi[: self.m * self.l, 0].reshape(self.l, self.m)
        return np.vstack([head, self.U.T])

    def outputs(self) -> np.ndarray:
        ml = self.m * self.l
        head = self.Xi[ml:, 0].reshape(self.l, self.m)
        return np.vstack([head, self.Y.T])


def build_data_matrices(traj: Trajectory, l: int) -> DataMatrices:
    N, m = traj.N, traj.m
    if l < 1:
        raise DimensionError(f"lag bound l must be at least 1, got {l}")
    if N < l + 2:
        raise PreconditionError(f"trajectory too short: N={N} < l + 2 = {l + 2}")
    cols = N - l
    u, y = traj.u, traj.y

    def windows(start):
        # column j stacks samples start+j ... start+j+l-1
        ub = np.vstack([u[start + i:start + i + cols].T for i in range(l)])
        yb = np.vstack([y[start + i:start + i + cols].T for i in range(l)])
        return np.vstack([ub, yb])

    Xi = windows(0)
    XiPlus = windows(1)
    return DataMatrices(Xi, XiPlus, u[l:].T.copy(), y[l:].T.copy(), l, m, N)


def shift_data(data, alpha: float):
    """Replace every output y_k by y_k - alpha u_k (Trajectory or DataMatrices)."""
    if alpha == 0:
        return data
    if isinstance(data, Trajectory):
        return Trajectory(data.u, data.y - alpha * data.u)
    if isinstance(data, DataMatrices):
        ml = data.m * data.l
        Xi = data.Xi.copy()
        XiPlus = data.XiPlus.copy()
        Xi[ml:] -= alpha * Xi[:ml]
        XiPlus[ml:] -= alpha * XiPlus[:ml]
        return DataMatrices(Xi, XiPlus, data.U, data.Y - alpha * data.U, data.l, data.m, data.N)
    raise TypeError(f"cannot shift {type(data).__name__}")


def range_basis(Z: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of Z.

    Columns are normalised first; this leaves the column space unchanged but
    keeps early samples visible when the data grows (unstable systems).
    """
    norms = np.linalg.norm(Z, axis=0)
    keep = norms > 0
    if not np.any(keep):
        return np.zeros((Z.shape[0], 0))
    Zn = Z[:, keep] / norms[keep]
    Uz, s, _ = np.linalg.svd(Zn, full_matrices=False)
    r = int(np.sum(s > rank_tol * s[0]))
    return Uz[:, :r]


def data_gain_lmi(dm: DataMatrices, kind, which: str, rank_tol: float = RANK_TOL) -> LmiProblem:
    """Data LMI in up-set form: t = gamma**2 for "max", t = 1/zeta**2 for "min".

    The (N-l)-sized inequality Z' M Z <= 0 only sees the column space of the
    stacked data Z = (Xi+; Xi; Y; U), so it is posed on an orthonormal basis of
    that space.
    """
    kind = OperatorKind.parse(kind)
    p = dm.Xi.shape[0]
    m = dm.m
    Z = np.vstack([dm.XiPlus, dm.Xi, dm.Y, dm.U])
    Bz = range_basis(Z, rank_tol)
    Lp, L0 = Bz[:p], Bz[p:2 * p]
    Ly, Lu = Bz[2 * p:2 * p + m], Bz[2 * p + m:]
    if which == "max":
        const, gain = Ly.T @ Ly, -Lu.T @ Lu
    elif which == "min":
        const, gain = Lu.T @ Lu, -Ly.T @ Ly
    else:
        raise ValueError(f"which must be 'max' or 'min', got {which!r}")
    con = LmiConstraint(const, ((Lp, 1.0), (L0, -1.0)), gain_term=gain)
    return LmiProblem(p, (con,), psd=kind.requires_psd, label=f"data-{which}-{kind.value}")


def check_excitation(dm: DataMatrices, n: int | None) -> None:
    """Require persistency of excitation of order n + l + 1 when n is known."""
    if n is None:
        return
    order = n + dm.l + 1
    if not is_persistently_exciting(dm.inputs(), order):
        raise PreconditionError(
            f"input is not persistently exciting of order n + l + 1 = {order}; "
            "use a longer or richer input trajectory")


def _ratio(num: np.ndarray, den: np.ndarray) -> float:
    d = np.linalg.norm(den)
    return np.linalg.norm(num) / d if d > 0 else 1.0


def max_gain_data(dm: DataMatrices, kind=OperatorKind.L2, opts: GainOptions | None = None,
                  *, n: int | None = None) -> float:
    opts = opts or GainOptions()
    check_excitation(dm, n)
    hi = max(2.0 * _ratio(dm.Y, dm.U), 1e-3)
    return threshold(data_gain_lmi(dm, kind, "max"), opts, hi).value


def min_gain_data(dm: DataMatrices, kind=OperatorKind.L2, opts: GainOptions | None = None,
                  *, n: int | None = None) -> float:
    opts = opts or GainOptions()
    check_excitation(dm, n)
    r = _ratio(dm.U, dm.Y)
    hi = 2.0 * r if math.isfinite(r) and r > 0 else 1.0
    return reciprocal(threshold(data_gain_lmi(dm, kind, "min"), opts, hi).value)


def gain_annulus_data(dm: DataMatrices, alpha: float, kind=OperatorKind.L2,
                      opts: GainOptions | None = None, *, n: int | None = None) -> GainBounds:
    opts = opts or GainOptions()
    kind = OperatorKind.parse(kind)
    check_excitation(dm, n)
    shifted = shift_data(dm, alpha)
    gamma = max_gain_data(shifted, kind, opts)
    zeta = min_gain_data(shifted, kind, opts)
    return GainBounds(min(zeta, gamma), gamma, alpha, kind, opts.rel_tol)
