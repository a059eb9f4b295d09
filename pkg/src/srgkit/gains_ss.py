"""Minimum and maximum gains from a state-space model.

The max-gain inequality is the bounded-real LMI in (A, B, C, D); the min-gain
inequality flips the sign of the output term.  Requiring P >= 0 gives the gains
of the truncated-limit operator; a sign-indefinite P gives the gains of the
l2 operator.  Shifted gains (operator minus alpha I) use D - alpha I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import UnitCirclePole
from .lti import OperatorKind, StateSpace, freq_response, shift_output
from .sdp import GainOptions, LmiConstraint, LmiProblem, threshold

ORACLE_BRACKET_GRID = 512
# above this condition number of D the min-gain LMI stays in (x, u) coordinates
INVERSE_COND_LIMIT = 1e6


@dataclass(frozen=True)
class GainBounds:
    """Annulus radii zeta <= |z - alpha| <= gamma for one shift alpha."""

    zeta: float
    gamma: float
    alpha: float = 0.0
    kind: OperatorKind = OperatorKind.L2
    rel_tol: float = 0.0

    def __post_init__(self):
        if self.zeta < 0 or self.gamma < 0:
            raise ValueError(f"gains must be nonnegative, got zeta={self.zeta}, gamma={self.gamma}")
        slack = self.rel_tol * max(1.0, self.gamma if math.isfinite(self.gamma) else 1.0)
        if self.zeta > self.gamma + slack:
            raise ValueError(f"min gain {self.zeta} exceeds max gain {self.gamma}")


def gain_lmi(ss: StateSpace, kind: OperatorKind, which: str) -> LmiProblem:
    """Gain LMI whose feasible set is an up-set in the parameter t.

    which="max": t = gamma**2 and the LMI is the bounded-real inequality.
    which="min": t = 1 / zeta**2; this is the min-gain inequality divided by
    zeta**2 (P rescaled accordingly), which turns "only zeta = 0 works" into
    infeasibility for all t.  When D is invertible the inequality is further
    written in (x, y) coordinates, u = D^-1 (y - C x).  That is the
    bounded-real LMI of the inverse system, whose scaling does not degrade
    when the minimum gain is tiny.
    """
    kind = OperatorKind.parse(kind)
    n, m = ss.n, ss.m
    AB = np.hstack([ss.A, ss.B])
    I0 = np.hstack([np.eye(n), np.zeros((n, m))])
    CD = np.hstack([ss.C, ss.D])
    E = np.zeros((n + m, n + m))
    E[n:, n:] = np.eye(m)
    if which == "max":
        const, gain = CD.T @ CD, -E
    elif which == "min":
        const, gain = E, -CD.T @ CD
    else:
        raise ValueError(f"which must be 'max' or 'min', got {which!r}")
    congruences = ((AB, 1.0), (I0, -1.0)) if n else ()
    if which == "min" and m and np.linalg.cond(ss.D) < INVERSE_COND_LIMIT:
        Dinv = np.linalg.inv(ss.D)
        T = np.block([[np.eye(n), np.zeros((n, m))], [-Dinv @ ss.C, Dinv]])
        const, gain = T.T @ const @ T, T.T @ gain @ T
        congruences = tuple((L @ T, w) for L, w in congruences)
    con = LmiConstraint(const, congruences, gain_term=gain)
    return LmiProblem(n, (con,), psd=kind.requires_psd, label=f"ss-{which}-{kind.value}")


def _oracle(ss: StateSpace):
    if ss.n and np.any(np.abs(np.abs(np.linalg.eigvals(ss.A)) - 1.0) < 1e-8):
        return None
    try:
        return gain_freq_oracle(ss, 0.0, ORACLE_BRACKET_GRID)
    except UnitCirclePole:
        return None


def _fallback_hi(ss: StateSpace) -> float:
    return 10.0 * (np.linalg.norm(ss.D, 2) + np.linalg.norm(ss.B, 2) * np.linalg.norm(ss.C, 2)) + 1.0


def reciprocal(g: float) -> float:
    """Map the threshold of a min-gain problem (1 / zeta) back to zeta."""
    return 0.0 if math.isinf(g) else (math.inf if g == 0 else 1.0 / g)


def max_gain(ss: StateSpace, kind=OperatorKind.L2, opts: GainOptions | None = None) -> float:
    """Infimal gamma for which the bounded-real LMI is feasible (inf if none)."""
    opts = opts or GainOptions()
    oracle = _oracle(ss)
    hi = max(1.5 * oracle.gamma, 1e-3) if oracle else _fallback_hi(ss)
    return threshold(gain_lmi(ss, kind, "max"), opts, hi).value


def min_gain(ss: StateSpace, kind=OperatorKind.L2, opts: GainOptions | None = None) -> float:
    """Supremal zeta for which the min-gain LMI is feasible (0 if only zeta = 0)."""
    opts = opts or GainOptions()
    oracle = _oracle(ss)
    hi = 2.0 / oracle.zeta if oracle and oracle.zeta > 0 else 1.0
    return reciprocal(threshold(gain_lmi(ss, kind, "min"), opts, hi).value)


def gain_annulus(ss: StateSpace, alpha: float, kind=OperatorKind.L2,
                 opts: GainOptions | None = None) -> GainBounds:
    opts = opts or GainOptions()
    kind = OperatorKind.parse(kind)
    shifted = shift_output(ss, alpha)
    gamma = max_gain(shifted, kind, opts)
    zeta = min_gain(shifted, kind, opts)
    return GainBounds(min(zeta, gamma), gamma, alpha, kind, opts.rel_tol)


def gain_freq_oracle(ss: StateSpace, alpha: float = 0.0, grid_size: int = 10_000,
                     refine: bool = False) -> GainBounds:
    """Extreme singular values of G(e^{i theta}) - alpha I over a uniform grid on [0, pi].

    With refine=True the grid extrema are polished by a bounded scalar search
    between the neighbouring grid points.
    """
    theta = np.linspace(0.0, np.pi, grid_size)
    shift = alpha * np.eye(ss.m)
    G = freq_response(ss, theta) - shift
    s = np.linalg.svd(G, compute_uv=False)
    zeta, gamma = float(s[:, -1].min()), float(s[:, 0].max())
    if refine and grid_size > 2:
        def sv(th, idx):
            return np.linalg.svd(freq_response(ss, th) - shift, compute_uv=False)[idx]

        i = int(np.argmin(s[:, -1]))
        lo, hi = theta[max(i - 1, 0)], theta[min(i + 1, grid_size - 1)]
        r = minimize_scalar(lambda th: sv(th, -1), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-12})
        zeta = min(zeta, float(r.fun))
        i = int(np.argmax(s[:, 0]))
        lo, hi = theta[max(i - 1, 0)], theta[min(i + 1, grid_size - 1)]
        r = minimize_scalar(lambda th: -sv(th, 0), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-12})
        gamma = max(gamma, float(-r.fun))
    return GainBounds(zeta, gamma, alpha, OperatorKind.L2)
