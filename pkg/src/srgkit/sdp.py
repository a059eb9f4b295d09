"""LMI feasibility and gain-threshold search.

An :class:`LmiProblem` has one symmetric matrix unknown ``P`` (optionally
constrained ``P >= 0``), a few nonnegative scalar unknowns and a list of
constraints, each of the form::

    const + sum_i w_i L_i' P L_i + sum_j s_j G_j + t E  <=  -margin * I

where ``t`` is a gain parameter (gamma**2, or 1/zeta**2 for minimum gains),
arranged so that the feasible set in ``t`` is an up-set.  ``t`` is either
fixed (feasibility queries driven by bisection) or optimised directly.

Solving goes through a narrow backend interface with two implementations:
:class:`ClarabelBackend` (default, direct conic data) and :class:`CvxpyBackend`
(any cvxpy solver).  Every feasible answer is re-checked here with a
symmetric eigenvalue computation, independent of the solver's own report.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
import os
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NonMonotoneError, SolverInconclusive

log = logging.getLogger(__name__)

DEFAULT_SOLVER = "CLARABEL"
FALLBACK_SOLVERS = ("CVXOPT",)
# the fallback only matters for hard instances; long runs there rarely converge
FALLBACK_MAX_ITERS = 25


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INCONCLUSIVE = "inconclusive"


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class LmiConstraint:
    """One matrix inequality, required to be <= -margin * I."""

    const: np.ndarray
    congruences: tuple = ()  # (L, weight) pairs: weight * L' P L
    multipliers: tuple = ()  # one entry per scalar unknown, a matrix or None
    gain_term: np.ndarray | None = None

    def __post_init__(self):
        const = np.asarray(self.const, dtype=float)
        k = const.shape[0]
        if const.shape != (k, k):
            raise ValueError(f"constraint constant must be square, got {const.shape}")
        asym = np.max(np.abs(const - const.T), initial=0.0)
        if asym > 1e-9 * max(1.0, np.max(np.abs(const), initial=0.0)):
            raise ValueError(f"constraint constant is not symmetric (max asymmetry {asym:.3g})")
        object.__setattr__(self, "const", _sym(const))
        for L, _w in self.congruences:
            if L.shape[1] != k:
                raise ValueError(f"congruence factor has {L.shape[1]} columns, constraint is {k}x{k}")
        for G in self.multipliers:
            if G is not None and G.shape != (k, k):
                raise ValueError("multiplier matrix does not match constraint size")
        if self.gain_term is not None and self.gain_term.shape != (k, k):
            raise ValueError("gain term does not match constraint size")

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def scale(self, t: float | None = None) -> float:
        """Norm of the constant part (including t * E when t is given), at least 1."""
        if not self.size:
            return 1.0
        K = self.const if (t is None or self.gain_term is None) else self.const + t * self.gain_term
        return max(1.0, float(np.linalg.norm(K, 2)))

    def evaluate(self, P, scalars=(), t: float | None = None) -> np.ndarray:
        out = self.const.copy()
        for L, w in self.congruences:
            out += w * (L.T @ P @ L)
        for s, G in zip(scalars, self.multipliers):
            if G is not None:
                out += s * G
        if self.gain_term is not None:
            if t is None:
                raise ValueError("gain parameter t is required to evaluate this constraint")
            out += t * self.gain_term
        return _sym(out)


@dataclass(frozen=True, eq=False)
class LmiProblem:
    p: int
    constraints: tuple
    psd: bool = False
    n_scalars: int = 0
    eps_rel: float = 1e-9
    label: str = ""
    # scales the strict margin refers to; fixed() pins them to the scales
    # before t is folded in, so the margin does not grow with the gain
    margin_scales: tuple | None = None

    def __post_init__(self):
        if self.p < 0 or self.eps_rel < 0:
            raise ValueError("p and eps must be nonnegative")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for c in self.constraints:
            for L, _w in c.congruences:
                if L.shape[0] != self.p:
                    raise ValueError(f"congruence factor has {L.shape[0]} rows, P is {self.p}x{self.p}")
            if len(c.multipliers) not in (0, self.n_scalars):
                raise ValueError("each constraint needs one multiplier slot per scalar unknown")

    @property
    def has_gain(self) -> bool:
        return any(c.gain_term is not None for c in self.constraints)

    def margins(self) -> list[float]:
        scales = self.margin_scales or [c.scale() for c in self.constraints]
        return [self.eps_rel * sc for sc in scales]

    def fixed(self, t: float) -> "LmiProblem":
        """Fold the gain parameter into the constants."""
        cons = []
        for c in self.constraints:
            const = c.const if c.gain_term is None else c.const + t * c.gain_term
            cons.append(replace(c, const=const, gain_term=None))
        scales = self.margin_scales or tuple(c.scale() for c in self.constraints)
        return replace(self, constraints=tuple(cons), margin_scales=scales)

    def residual(self, P, scalars=(), t=None) -> float:
        """Largest eigenvalue over all constraints, each normalised by its base scale.

        The base scale excludes the gain term, so a large t does not loosen
        the check.
        """
        scales = self.margin_scales or [c.scale() for c in self.constraints]
        worst = -math.inf
        for c, sc in zip(self.constraints, scales):
            if c.size == 0:
                continue
            lam = np.linalg.eigvalsh(c.evaluate(P, scalars, t))[-1]
            worst = max(worst, lam / sc)
        return worst

    def dump(self) -> str:
        """Plain-text listing: dimension header then row-major values per block."""
        lines = [f"# LMI {self.label or 'problem'} p={self.p} psd={int(self.psd)} "
                 f"scalars={self.n_scalars} eps_rel={self.eps_rel:.17g}"]

        def block(name, M):
            M = np.atleast_2d(M)
            lines.append(f"{name} {M.shape[0]} {M.shape[1]}")
            lines.extend(" ".join(f"{v:.17g}" for v in row) for row in M)

        for i, c in enumerate(self.constraints):
            block(f"constraint {i} const", c.const)
            for j, (L, w) in enumerate(c.congruences):
                lines.append(f"congruence {i}.{j} weight {w:.17g}")
                block("L", L)
            for j, G in enumerate(c.multipliers):
                if G is not None:
                    block(f"multiplier {i}.{j}", G)
            if c.gain_term is not None:
                block(f"gain {i}", c.gain_term)
        return "\n".join(lines) + "\n"


@dataclass
class FeasibilityResult:
    status: Status
    P: np.ndarray | None = None
    scalars: tuple = ()
    residual: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


@dataclass
class OptimumResult:
    status: Status
    t: float | None = None
    P: np.ndarray | None = None
    scalars: tuple = ()
    diagnostics: dict = field(default_factory=dict)


class CvxpyBackend:
    """Reference backend on top of cvxpy.

    Feasibility problems are compiled once per LMI structure with the constants
    as parameters, so bisection and alpha sweeps reuse the canonicalisation.
    The cache is per thread.
    """

    def __init__(self, solver: str | None = None, fallbacks=None, **solver_opts):
        self.solver = (solver or DEFAULT_SOLVER).upper()
        if fallbacks is None:
            fallbacks = tuple(f for f in FALLBACK_SOLVERS if f != self.solver)
        self.fallbacks = tuple(f.upper() for f in fallbacks)
        self.solver_opts = solver_opts
        self._local = threading.local()

    @property
    def name(self) -> str:
        return f"cvxpy:{self.solver}"

    cache_size = 64

    def _cache(self) -> OrderedDict:
        cache = getattr(self._local, "cache", None)
        if cache is None:
            cache = self._local.cache = OrderedDict()
        return cache

    @staticmethod
    def _key(prob: LmiProblem) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(repr((prob.p, prob.psd, prob.n_scalars)).encode())
        for c in prob.constraints:
            h.update(repr(("c", c.size, c.gain_term is not None)).encode())
            for L, w in c.congruences:
                h.update(repr((L.shape, w)).encode())
                h.update(np.ascontiguousarray(L).tobytes())
            for G in c.multipliers:
                h.update(b"-" if G is None else np.ascontiguousarray(G).tobytes())
            if c.gain_term is not None:
                h.update(np.ascontiguousarray(c.gain_term).tobytes())
        return h.hexdigest()

    def _build(self, prob: LmiProblem, parametrised: bool, sense: str | None = None):
        import cvxpy as cp

        if prob.p == 0:
            P = None
        elif prob.psd:
            P = cp.Variable((prob.p, prob.p), PSD=True)
        else:
            P = cp.Variable((prob.p, prob.p), symmetric=True)
        s = cp.Variable(prob.n_scalars, nonneg=True) if prob.n_scalars else None
        t = cp.Variable() if sense else None
        params, cons = [], []
        for c, margin in zip(prob.constraints, prob.margins()):
            if c.size == 0:
                continue
            if parametrised:
                K = cp.Parameter((c.size, c.size), symmetric=True)
                params.append(K)
            else:
                K = c.const + margin * np.eye(c.size)
            expr = K
            for L, w in c.congruences:
                expr = expr + w * (L.T @ P @ L)
            for j, G in enumerate(c.multipliers):
                if G is not None:
                    expr = expr + s[j] * G
            if t is not None and c.gain_term is not None:
                expr = expr + t * c.gain_term
            cons.append(0.5 * (expr + expr.T) << 0)
        if sense == "min":
            cons.append(t >= 0)
            objective = cp.Minimize(t)
        elif sense == "max":
            objective = cp.Maximize(t)
        else:
            objective = cp.Minimize(0)
        return cp.Problem(objective, cons), P, s, t, params

    def _solve(self, problem):
        err = None
        for i, solver in enumerate((self.solver, *self.fallbacks)):
            opts = self.solver_opts if i == 0 else {}
            try:
                with warnings.catch_warnings():
                    # inaccurate solutions are caught by witness verification
                    warnings.simplefilter("ignore", UserWarning)
                    problem.solve(solver=solver, **opts)
            except (KeyboardInterrupt, SystemExit):
                raise
            except BaseException as exc:  # noqa: BLE001 - Rust solver panics are BaseExceptions
                err = f"{solver}: {type(exc).__name__}: {exc}"
                log.debug("solver failure: %s", err)
                continue
            if problem.status not in ("solver_error", None):
                return problem.status, err
        return "solver_error", err

    def feasible(self, prob: LmiProblem) -> FeasibilityResult:
        cache = self._cache()
        key = self._key(prob)
        if key in cache:
            cache.move_to_end(key)
        else:
            cache[key] = self._build(prob, parametrised=True)
            if len(cache) > self.cache_size:
                cache.popitem(last=False)
        problem, P, s, _t, params = cache[key]
        it = iter(params)
        for c, margin in zip(prob.constraints, prob.margins()):
            if c.size:
                next(it).value = c.const + margin * np.eye(c.size)
        status, err = self._solve(problem)
        return self._result(status, err, P, s)

    def _result(self, status, err, P, s) -> FeasibilityResult:
        diag = {"backend": self.name, "solver_status": status}
        if err:
            diag["error"] = err
        if status in ("optimal", "optimal_inaccurate") and (P is None or P.value is not None):
            scalars = tuple(np.atleast_1d(s.value)) if s is not None else ()
            return FeasibilityResult(Status.FEASIBLE, _value(P), scalars, diagnostics=diag)
        if status == "infeasible":
            return FeasibilityResult(Status.INFEASIBLE, diagnostics=diag)
        return FeasibilityResult(Status.INCONCLUSIVE, diagnostics=diag)

    def optimize(self, prob: LmiProblem, sense: str) -> OptimumResult:
        problem, P, s, t, _ = self._build(prob, parametrised=False, sense=sense)
        status, err = self._solve(problem)
        diag = {"backend": self.name, "solver_status": status}
        if err:
            diag["error"] = err
        if status in ("optimal", "optimal_inaccurate") and t.value is not None:
            scalars = tuple(np.atleast_1d(s.value)) if s is not None else ()
            return OptimumResult(Status.FEASIBLE, float(t.value), _value(P), scalars, diag)
        if status == "infeasible":
            return OptimumResult(Status.INFEASIBLE, diagnostics=diag)
        return OptimumResult(Status.INCONCLUSIVE, diagnostics=diag)


class ClarabelBackend:
    """Direct conic formulation for Clarabel, without a modelling layer.

    P is parametrised by its upper triangle; each constraint becomes one
    PSD-triangle cone.  Feasibility is posed as margin maximisation,

        minimise lam  s.t.  M_c(P) <= lam * scale_c * I,  lam >= -1,

    which is strictly feasible and bounded, so the solver always has a
    well-posed problem; the LMI holds with the required margin exactly when
    lam <= -eps_rel.  Unclear reports go to the fallback backend, if set.
    """

    name = "clarabel"

    def __init__(self, fallback=None, **settings):
        self.fallback = fallback
        self.settings = settings

    @staticmethod
    def _svec_index(k: int):
        # upper triangle, column by column, as Clarabel expects
        j, i = np.tril_indices(k)
        scale = np.where(i == j, 1.0, math.sqrt(2.0))
        return i, j, scale

    def _columns(self, c: LmiConstraint, p: int) -> np.ndarray:
        """svec of sum_w w L' B L for every basis matrix B of the P unknown."""
        i, j, _ = self._svec_index(p)
        M = np.zeros((len(i), c.size, c.size))
        for L, w in c.congruences:
            outer = L[i][:, :, None] * L[j][:, None, :]
            M += w * np.where((i == j)[:, None, None], outer, outer + outer.transpose(0, 2, 1))
        return M

    def _problem(self, prob: LmiProblem, sense: str | None):
        import clarabel
        from scipy import sparse

        p, ns = prob.p, prob.n_scalars
        npv = p * (p + 1) // 2
        nvar = npv + ns + 1
        rows, b, cones = [], [], []
        scales = prob.margin_scales or [c.scale() for c in prob.constraints]
        for c, margin, sc_c in zip(prob.constraints, prob.margins(), scales):
            k = c.size
            if k == 0:
                continue
            ri, rj, sc = self._svec_index(k)

            def svec(M):
                return M[..., ri, rj] * sc

            A = np.zeros((len(ri), nvar))
            if p:
                A[:, :npv] = svec(self._columns(c, p)).T
            for s_idx, G in enumerate(c.multipliers):
                if G is not None:
                    A[:, npv + s_idx] = svec(G)
            if sense == "margin":
                A[:, -1] = -sc_c * svec(np.eye(k))
                b.append(-svec(c.const))
            else:
                if c.gain_term is not None:
                    A[:, -1] = svec(c.gain_term)
                b.append(-svec(c.const + margin * np.eye(k)))
            rows.append(A)
            cones.append(clarabel.PSDTriangleConeT(k))
        if prob.psd and p:
            _, _, sc = self._svec_index(p)
            A = np.zeros((npv, nvar))
            A[:, :npv] = -np.diag(sc)
            rows.append(A)
            b.append(np.zeros(npv))
            cones.append(clarabel.PSDTriangleConeT(p))
        # scalars >= 0, t >= 0 when minimised, lam >= -1
        signs = list(range(npv, npv + ns)) + ([nvar - 1] if sense in ("min", "margin") else [])
        if signs:
            A = np.zeros((len(signs), nvar))
            A[np.arange(len(signs)), signs] = -1.0
            rows.append(A)
            bs = np.zeros(len(signs))
            if sense == "margin":
                bs[-1] = 1.0
            b.append(bs)
            cones.append(clarabel.NonnegativeConeT(len(signs)))
        q = np.zeros(nvar)
        if sense:
            q[-1] = -1.0 if sense == "max" else 1.0
        A = sparse.csc_matrix(np.vstack(rows))
        return sparse.csc_matrix((nvar, nvar)), q, A, np.concatenate(b), cones

    def _run(self, prob: LmiProblem, sense: str | None):
        import clarabel

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        for key, val in self.settings.items():
            setattr(settings, key, val)
        try:
            solver = clarabel.DefaultSolver(*self._problem(prob, sense), settings)
            sol = solver.solve()
        except (KeyboardInterrupt, SystemExit):
            raise
        except BaseException as exc:  # noqa: BLE001 - Rust panics are BaseExceptions
            return "error", None, f"{type(exc).__name__}: {exc}"
        status = str(sol.status).rsplit(".", 1)[-1]
        if status == "Solved" or (status == "AlmostSolved" and sense == "margin"):
            return "solved", np.asarray(sol.x), None
        if status == "PrimalInfeasible":
            return "infeasible", None, None
        return "inconclusive", None, status

    def _split(self, prob: LmiProblem, x: np.ndarray):
        p = prob.p
        npv = p * (p + 1) // 2
        P = np.zeros((p, p))
        if p:
            j, i = np.tril_indices(p)
            P[i, j] = x[:npv]
            P[j, i] = x[:npv]
        return P, tuple(x[npv:npv + prob.n_scalars])

    def feasible(self, prob: LmiProblem) -> FeasibilityResult:
        diag = {"backend": self.name}
        status, x, err = self._run(prob, "margin")
        if status == "solved":
            diag["margin"] = -float(x[-1])
            if x[-1] <= -prob.eps_rel:
                P, scalars = self._split(prob, x)
                return FeasibilityResult(Status.FEASIBLE, P, scalars, diagnostics=diag)
        # A small optimal margin is not proof of infeasibility when the
        # optimum needs a huge P, so only the fixed-margin form may say no.
        status, x, err = self._run(prob, None)
        diag["solver_status"] = status
        if status == "solved":
            P, scalars = self._split(prob, x)
            return FeasibilityResult(Status.FEASIBLE, P, scalars, diagnostics=diag)
        if status == "infeasible":
            return FeasibilityResult(Status.INFEASIBLE, diagnostics=diag)
        if self.fallback is not None:
            res = self.fallback.feasible(prob)
            res.diagnostics["primary"] = f"{self.name}: {err}"
            return res
        diag["error"] = err
        return FeasibilityResult(Status.INCONCLUSIVE, diagnostics=diag)

    def optimize(self, prob: LmiProblem, sense: str) -> OptimumResult:
        status, x, err = self._run(prob, sense)
        diag = {"backend": self.name, "solver_status": status}
        if status == "solved":
            P, scalars = self._split(prob, x)
            return OptimumResult(Status.FEASIBLE, float(x[-1]), P, scalars, diag)
        if status == "infeasible":
            return OptimumResult(Status.INFEASIBLE, diagnostics=diag)
        if self.fallback is not None:
            res = self.fallback.optimize(prob, sense)
            res.diagnostics["primary"] = f"{self.name}: {err}"
            return res
        diag["error"] = err
        return OptimumResult(Status.INCONCLUSIVE, diagnostics=diag)


def _value(P) -> np.ndarray:
    return np.zeros((0, 0)) if P is None else np.array(P.value)


_default_backend = None
_default_name = None
_default_lock = threading.Lock()


def make_backend(solver: str | None = None):
    """Backend for a solver name.

    "CLARABEL" (the default) uses the direct formulation with cvxpy/CVXOPT
    as fallback; any other name is passed to cvxpy.
    """
    solver = (solver or DEFAULT_SOLVER).upper()
    if solver == "CLARABEL":
        return ClarabelBackend(fallback=CvxpyBackend("CVXOPT", fallbacks=(), max_iters=FALLBACK_MAX_ITERS))
    return CvxpyBackend(solver)


def default_backend():
    """Backend selected by the SRGKIT_SOLVER environment variable."""
    global _default_backend, _default_name
    solver = os.environ.get("SRGKIT_SOLVER", DEFAULT_SOLVER).upper()
    with _default_lock:
        if _default_backend is None or _default_name != solver:
            _default_backend, _default_name = make_backend(solver), solver
        return _default_backend


def _verify(prob: LmiProblem, P, scalars, t, eps_verify: float) -> tuple[bool, float]:
    """Re-check a witness; the sign constraints are enforced by repairing it.

    A slightly indefinite P (when P >= 0 is required) is replaced by
    P + delta I and negative multipliers by zero before the constraint
    eigenvalues are measured, so no tolerance is granted on P itself.
    """
    if prob.psd and prob.p:
        P = _sym(P)
        lam = np.linalg.eigvalsh(P)[0]
        if lam < 0:
            P = P - lam * np.eye(prob.p)
    scalars = tuple(max(0.0, float(s)) for s in scalars)
    res = prob.residual(P, scalars, t)
    return bool(res <= eps_verify), float(res)


def check_feasible(prob: LmiProblem, backend=None, eps_verify: float = 1e-7, retry: bool = True) -> FeasibilityResult:
    """Decide feasibility of a problem whose gain parameter is already fixed.

    A FEASIBLE answer always carries a witness whose constraint eigenvalues
    were re-checked here. Solver trouble yields INCONCLUSIVE after one retry
    with a relaxed margin.
    """
    if prob.has_gain:
        raise ValueError("fix the gain parameter (LmiProblem.fixed) before checking feasibility")
    backend = backend or default_backend()
    if not any(c.size for c in prob.constraints):
        return FeasibilityResult(Status.FEASIBLE, np.zeros((prob.p, prob.p)), (0.0,) * prob.n_scalars, -math.inf)
    res = backend.feasible(prob)
    if res.status is Status.FEASIBLE:
        ok, r = _verify(prob, res.P, res.scalars, None, eps_verify)
        res.residual = r
        if not ok:
            res.diagnostics["rejected_witness_residual"] = r
            res.status = Status.INCONCLUSIVE
    if res.status is Status.INCONCLUSIVE and retry and prob.eps_rel > 0:
        relaxed = replace(prob, eps_rel=prob.eps_rel * 1e-2)
        again = check_feasible(relaxed, backend, eps_verify, retry=False)
        again.diagnostics["retried"] = True
        return again
    return res


# bracket expansion factor while looking for a feasible (or infeasible) end
GROWTH = 4.0
# half-width of the bisection bracket placed around a direct-solve estimate
GUESS_BAND = 1e-4


@dataclass(frozen=True)
class GainOptions:
    """Numerical settings for gain searches.

    method is "bisect" (feasibility only) or "direct" (gamma**2 / zeta**2 as
    the SDP objective).  With strict=False an inconclusive solve counts as
    "not certified" and the search carries on, so every reported gain is still
    backed by a verified witness (or is the trivial bound); strict=True raises
    SolverInconclusive instead.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    eps_rel: float = 1e-9
    eps_verify: float = 1e-7
    cap: float = 1e6
    method: str = "bisect"
    strict: bool = False
    backend: object = None

    def get_backend(self):
        return self.backend or default_backend()


@dataclass(frozen=True)
class GainSearch:
    value: float
    lo: float
    hi: float
    evaluations: int
    method: str
    inconclusive: int = 0


def bisect_gain(predicate: Callable[[float], FeasibilityResult], lo: float, hi: float, *,
                increasing: bool = True, rel_tol: float = 1e-6, abs_tol: float = 1e-12,
                cap: float = 1e6, strict: bool = True) -> GainSearch:
    """Locate the feasibility threshold of a monotone predicate.

    increasing=True: feasible set is an up-set (maximum gain); returns the
    smallest feasible value found (an upper bound), or inf when even `cap`
    is infeasible.  increasing=False: feasible set is a down-set (minimum
    gain); returns the largest feasible value found (a lower bound), or 0
    when `lo` itself is infeasible.

    Inconclusive answers raise when strict, otherwise they are treated as
    infeasible (they never certify anything) and left out of the
    monotonicity guard.
    """
    seen_feasible: list[float] = []
    seen_infeasible: list[float] = []
    count = unsure = 0

    def query(x):
        nonlocal count, unsure
        count += 1
        r = predicate(x)
        if r.status is Status.INCONCLUSIVE:
            if strict:
                raise SolverInconclusive(f"solver inconclusive at {x:.10g}", bracket=(lo, hi),
                                         diagnostics=r.diagnostics)
            unsure += 1
            log.debug("inconclusive at %.10g treated as not certified", x)
            return False
        ok = r.feasible
        if increasing:
            bad = (ok and any(y > x for y in seen_infeasible)) or (not ok and any(y < x for y in seen_feasible))
        else:
            bad = (ok and any(y < x for y in seen_infeasible)) or (not ok and any(y > x for y in seen_feasible))
        if bad:
            raise NonMonotoneError(f"feasibility is not monotone around {x:.10g}")
        (seen_feasible if ok else seen_infeasible).append(x)
        return ok

    if increasing:
        hi = min(hi, cap)
        while not query(hi):
            if hi >= cap:
                return GainSearch(math.inf, hi, math.inf, count, "bisect", unsure)
            lo, hi = hi, min(GROWTH * hi, cap)
        # a positive lower end is only a guess until shown infeasible
        while lo > 0 and hi - lo > max(rel_tol * hi, abs_tol) and query(lo):
            hi, lo = lo, (0.5 * lo if lo > abs_tol else 0.0)
    else:
        if not query(lo):
            return GainSearch(0.0, 0.0, lo, count, "bisect", unsure)
        while query(hi):
            if hi >= cap:
                return GainSearch(hi, hi, math.inf, count, "bisect", unsure)
            lo, hi = hi, min(GROWTH * hi, cap)

    while hi - lo > max(rel_tol * hi, abs_tol):
        mid = 0.5 * (lo + hi)
        if query(mid) == increasing:
            hi = mid
        else:
            lo = mid
    value = hi if increasing else lo
    return GainSearch(value, lo, hi, count, "bisect", unsure)


def threshold(prob: LmiProblem, opts: GainOptions, hi: float, lo: float = 0.0) -> GainSearch:
    """Smallest g with the problem feasible at t = g**2.

    The gain term must enter with a negative semidefinite coefficient so that
    the feasible set in t is an up-set.  Returns inf when nothing up to
    ``opts.cap`` is feasible.
    """
    backend = opts.get_backend()
    prob = replace(prob, eps_rel=opts.eps_rel)
    if opts.method == "direct":
        return _direct(prob, opts, backend)
    if opts.method != "bisect":
        raise ValueError(f"unknown gain method {opts.method!r}")

    def predicate(g):
        return check_feasible(prob.fixed(g * g), backend, opts.eps_verify)

    guess = _estimate(prob, opts, backend)
    if guess is not None:
        lo, hi = guess * (1.0 - GUESS_BAND), guess * (1.0 + GUESS_BAND)
    res = bisect_gain(predicate, lo, max(hi, lo), increasing=True, rel_tol=opts.rel_tol,
                      abs_tol=opts.abs_tol, cap=opts.cap, strict=opts.strict)
    if res.inconclusive:
        log.info("%s: %d inconclusive solves treated as not certified", prob.label, res.inconclusive)
    return res


def _estimate(prob: LmiProblem, opts: GainOptions, backend) -> float | None:
    """Starting point for the bisection from one direct solve, or None."""
    try:
        g = _direct(prob, opts, backend).value
    except SolverInconclusive:
        return None
    return g if 0 < g < opts.cap else None


def _direct(prob: LmiProblem, opts: GainOptions, backend) -> GainSearch:
    r = backend.optimize(prob, "min")
    if r.status is Status.INFEASIBLE:
        return GainSearch(math.inf, 0.0, math.inf, 1, "direct")
    if r.status is Status.INCONCLUSIVE:
        raise SolverInconclusive(f"direct optimisation inconclusive for {prob.label or 'LMI'}",
                                 diagnostics=r.diagnostics)
    ok, res = _verify(prob, r.P, r.scalars, r.t, opts.eps_verify)
    if not ok:
        raise SolverInconclusive(f"optimiser witness failed verification (residual {res:.3g})",
                                 diagnostics=r.diagnostics)
    g = math.sqrt(max(r.t, 0.0))
    if g > opts.cap:
        return GainSearch(math.inf, g, math.inf, 1, "direct")
    return GainSearch(g, g, g, 1, "direct")
