"""Command-line front end: simulate, srg, check and reproduce.

Exit codes: 0 success, 2 bad input file or arguments, 3 solver could not
decide, 4 data precondition failed (excitation, lag, consistency set).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    NotObservableError,
    PreconditionError,
    ProfileError,
    SchemaError,
    SingularFeedthrough,
    SolverInconclusive,
)
from .gains_data import build_data_matrices, check_excitation, gain_annulus_data
from .gains_ss import gain_annulus, max_gain
from .geometry import (
    GainProfile,
    SrgRegion,
    Window,
    compute_profile,
    default_alpha_grid,
    default_window,
    rasterize,
    region_contains,
    write_region,
)
from .lti import (
    OperatorKind,
    StateSpace,
    Trajectory,
    is_persistently_exciting,
    lag,
    load_state_space,
    load_trajectory,
    pe_order,
    save_trajectory,
    simulate,
)
from .models import highpass, lowpass, unstable_mimo
from .robust import (
    ball_noise_model,
    build_consistency_set,
    load_noise_model,
    robust_gain_annulus,
    sample_ball_noise,
    simulate_noisy,
)
from .sdp import GainOptions

EXIT_OK, EXIT_SCHEMA, EXIT_SOLVER, EXIT_PRECONDITION = 0, 2, 3, 4

log = logging.getLogger("srgkit")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


# -- inputs -------------------------------------------------------------------

def make_input(spec: str, N: int, m: int, rng=None) -> np.ndarray:
    """prbs, gaussian, impulse or file:PATH (trajectory file; its u is used)."""
    rng = np.random.default_rng(rng)
    if spec == "prbs":
        return rng.choice([-1.0, 1.0], size=(N, m))
    if spec == "gaussian":
        return rng.standard_normal((N, m))
    if spec == "impulse":
        u = np.zeros((N, m))
        u[0] = 1.0
        return u
    if spec.startswith("file:"):
        path = Path(spec[5:])
        if path.suffix.lower() == ".csv":
            u = load_trajectory(path).u
        else:
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
            if not isinstance(data, dict) or "u" not in data:
                raise SchemaError(f"{path}: expected a JSON object with field u")
            u = np.array(data["u"], dtype=float)
            if u.ndim == 1:
                u = u[:, None]
        if u.ndim != 2 or u.shape[1] != m:
            raise SchemaError(f"{path}: input must have {m} column(s), got shape {u.shape}")
        return u
    raise SchemaError(f"unknown input spec {spec!r}; use prbs, gaussian, impulse or file:PATH")


def parse_noise(spec: str | None, N: int, l: int, m: int):
    """ball:V_BAR or file:PATH -> NoiseModel (None when spec is None)."""
    if spec is None:
        return None
    if spec.startswith("ball:"):
        try:
            v_bar = float(spec[5:])
        except ValueError:
            raise SchemaError(f"bad noise radius in {spec!r}") from None
        if not v_bar > 0:
            raise SchemaError("noise radius must be positive")
        return ball_noise_model(v_bar, N, l, m)
    if spec.startswith("file:"):
        return load_noise_model(spec[5:], N=N, l=l, m=m)
    raise SchemaError(f"unknown noise spec {spec!r}; use ball:V_BAR or file:PATH")


def _ball_radius(spec: str | None) -> float:
    if spec is None:
        return 0.0
    if spec.startswith("ball:"):
        return float(spec[5:])
    if spec.startswith("file:"):
        data = json.loads(Path(spec[5:]).read_text())
        if isinstance(data, dict) and "ball" in data:
            return float(data["ball"]["v_bar"])
    raise SchemaError("simulation noise must be a ball (ball:V_BAR or a file with a 'ball' entry)")


# -- SRG pipeline --------------------------------------------------------------

@dataclass
class RunConfig:
    mode: str
    kind: OperatorKind = OperatorKind.L2
    model: str | None = None
    traj: str | None = None
    alpha_count: int = 101
    alpha_window: tuple | None = None
    alphas: tuple | None = None
    window: Window | None = None
    res: tuple = (400, 400)
    l: int | None = None
    n: int | None = None
    noise: str | None = None
    l_from_n: bool = False
    seed: int | None = None
    rel_tol: float = 1e-6
    conservative: bool = False
    out: str = "srg-out"

    def __post_init__(self):
        self.kind = OperatorKind.parse(self.kind)
        if self.mode not in ("ss", "data", "robust"):
            raise SchemaError(f"unknown mode {self.mode!r}")
        if self.mode == "ss" and not self.model:
            raise SchemaError("mode ss needs --model")
        if self.mode in ("data", "robust") and not self.traj:
            raise SchemaError(f"mode {self.mode} needs --traj")
        if self.mode == "robust" and not self.noise:
            raise SchemaError("mode robust needs --noise")
        if self.l_from_n:
            if self.n is None:
                raise SchemaError("--l-from-n needs --n")
            if self.l is not None and self.l != self.n:
                raise SchemaError("give either --l or --l-from-n, not both")
            self.l = self.n


@dataclass
class SrgResult:
    profile: GainProfile
    region: SrgRegion
    report: dict


def _gain_setup(cfg: RunConfig, opts: GainOptions, diagnostics: dict):
    """Return (gain_fn, gamma at alpha=0 for the l2 kind or None, inputs)."""
    inputs = {}
    if cfg.mode == "ss":
        ss = load_state_space(cfg.model)
        inputs["model"] = {"path": str(cfg.model), "sha256": sha256_file(cfg.model)}
        try:
            diagnostics["lag"] = lag(ss)
        except NotObservableError as exc:
            diagnostics["lag"] = None
            diagnostics["lag_error"] = str(exc)

        def fn(a):
            return gain_annulus(ss, a, cfg.kind, opts)

        return fn, lambda: max_gain(ss, OperatorKind.L2, opts), inputs
    traj = load_trajectory(cfg.traj)
    inputs["trajectory"] = {"path": str(cfg.traj), "sha256": sha256_file(cfg.traj)}
    l = cfg.l
    if l is None:
        raise SchemaError("data modes need --l, or --n with --l-from-n (n bounds the lag)")
    dm = build_data_matrices(traj, l)
    diagnostics.update({"l": l, "l_from_n": cfg.l_from_n, "n": cfg.n, "N": traj.N, "pe_order": pe_order(traj.u)})
    if cfg.n is not None:
        diagnostics["pe_required"] = cfg.n + l + 1
    else:
        diagnostics["pe_check"] = "skipped: state dimension unknown"
    if cfg.mode == "data":
        check_excitation(dm, cfg.n)

        def fn(a):
            return gain_annulus_data(dm, a, cfg.kind, opts)

        def g0():
            return gain_annulus_data(dm, 0.0, OperatorKind.L2, opts).gamma

        return fn, g0, inputs
    noise = parse_noise(cfg.noise, traj.N, l, traj.m)
    if cfg.noise.startswith("file:"):
        inputs["noise"] = {"path": cfg.noise[5:], "sha256": sha256_file(cfg.noise[5:])}
    diagnostics["noise_digest"] = noise.digest()
    cs = build_consistency_set(dm, noise)

    def fn(a):
        return robust_gain_annulus(dm, None, a, cfg.kind, opts, consistency=cs)

    def g0():
        return robust_gain_annulus(dm, None, 0.0, OperatorKind.L2, opts, consistency=cs).gamma

    return fn, g0, inputs


def alpha_grid_for(cfg: RunConfig, gain_fn, gamma0_l2):
    """The alpha grid and the gain at alpha=0 used to size it."""
    if cfg.alphas is not None:
        return np.array(sorted(cfg.alphas), dtype=float), None
    if cfg.alpha_window is not None:
        return default_alpha_grid(math.nan, cfg.alpha_count, cfg.alpha_window), None
    g0 = gain_fn(0.0).gamma
    if not math.isfinite(g0):
        # unbounded for this kind; size the grid by the l2 gain instead
        g0 = gamma0_l2()
    return default_alpha_grid(g0, cfg.alpha_count), g0


def run_srg(cfg: RunConfig, opts: GainOptions | None = None, write: bool = True) -> SrgResult:
    opts = opts or GainOptions(rel_tol=cfg.rel_tol)
    t0 = time.perf_counter()
    diagnostics: dict = {}
    gain_fn, gamma0_l2, inputs = _gain_setup(cfg, opts, diagnostics)
    alphas, g0 = alpha_grid_for(cfg, gain_fn, gamma0_l2)
    out = Path(cfg.out)
    try:
        profile = compute_profile(gain_fn, alphas, kind=cfg.kind)
    except ProfileError as exc:
        if write and exc.partial:
            out.mkdir(parents=True, exist_ok=True)
            part = GainProfile([b.alpha for b in exc.partial], [b.zeta for b in exc.partial],
                               [b.gamma for b in exc.partial], cfg.kind)
            (out / "profile.partial.csv").write_text(part.to_csv())
        raise
    finite = profile.gammas[np.isfinite(profile.gammas)]
    tol = cfg.rel_tol * max(1.0, float(finite.max()) if finite.size else 1.0)
    profile = GainProfile(profile.alphas, profile.zetas, profile.gammas, cfg.kind, tol)
    window = cfg.window
    if window is None:
        if profile.includes_infinity:
            h = 1.2 * (g0 if g0 is not None and math.isfinite(g0) else gamma0_l2())
            window = Window(-h, h, -h, h)
        else:
            window = default_window(profile)
    region = rasterize(profile, window, cfg.res, cfg.conservative)
    report = {
        "version": __version__,
        "mode": cfg.mode,
        "kind": cfg.kind.value,
        "seed": cfg.seed,
        "alpha_grid": [float(a) for a in profile.alphas],
        "window": list(window.as_tuple()),
        "resolution": list(cfg.res),
        "conservative": cfg.conservative,
        "tolerances": {"rel_tol": opts.rel_tol, "abs_tol": opts.abs_tol, "eps_rel": opts.eps_rel,
                       "eps_verify": opts.eps_verify, "cap": opts.cap, "profile_tol": tol},
        "gains": [{"alpha": e.alpha, "zeta": _json_num(e.zeta), "gamma": _json_num(e.gamma)} for e in profile],
        "includes_infinity": region.includes_infinity,
        "diagnostics": diagnostics,
        "inputs": inputs,
        "lipschitz_violation": profile.lipschitz_violation(),
    }
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "profile.csv").write_text(profile.to_csv())
        files = {"profile": str(out / "profile.csv")}
        files.update({f"region_{k}": v for k, v in write_region(region, out / "region",
                                                                 title=f"{cfg.mode} {cfg.kind.value}").items()})
        report["outputs"] = {k: {"path": v, "sha256": sha256_file(v)} for k, v in files.items()}
    report["seconds"] = round(time.perf_counter() - t0, 3)
    if write:
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return SrgResult(profile, region, report)


# -- reproduction bundles ----------------------------------------------------------

@dataclass(frozen=True)
class Example:
    model: StateSpace
    kinds: tuple
    alpha_window: tuple
    window: Window
    N: int = 200
    v_bar: float = 0.05
    seed: int = 7


def examples() -> dict:
    fig3_window = Window(-0.8, 1.6, -1.2, 1.2)
    return {
        "fig2": Example(unstable_mimo(), (OperatorKind.TRUNCATED_LIMIT, OperatorKind.L2),
                        (-7.0, 7.0), Window(-8.0, 8.0, -8.0, 8.0)),
        "fig3-low": Example(lowpass(), (OperatorKind.L2,), (-1.2, 1.2), fig3_window),
        "fig3-high": Example(highpass(), (OperatorKind.L2,), (-1.2, 1.2), fig3_window),
    }


def example_trajectory(ex: Example, v_bar: float | None = None, seed: int | None = None) -> Trajectory:
    """Gaussian input, ball noise of radius v_bar, both drawn from `seed`."""
    seed = ex.seed if seed is None else seed
    v_bar = ex.v_bar if v_bar is None else v_bar
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((ex.N, ex.model.m))
    v = sample_ball_noise(ex.model.m, ex.N, v_bar, rng)
    return simulate_noisy(ex.model, u, v)


def reproduce(name: str, out, alpha_count: int = 101, res=(400, 400), opts: GainOptions | None = None,
              write: bool = True) -> dict:
    """Nominal and robust regions for one example, plus the containment verdicts."""
    ex = examples()[name]
    opts = opts or GainOptions()
    if write:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
    traj = example_trajectory(ex)
    l = lag(ex.model)
    dm = build_data_matrices(traj, l)
    cs = build_consistency_set(dm, ball_noise_model(ex.v_bar, ex.N, l, ex.model.m))
    alphas = default_alpha_grid(math.nan, alpha_count, ex.alpha_window)
    verdict = {"example": name, "seed": ex.seed, "v_bar": ex.v_bar, "N": ex.N, "l": l,
               "alpha_window": list(ex.alpha_window), "alpha_count": alpha_count,
               "window": list(ex.window.as_tuple()), "resolution": list(res), "panels": {}}
    regions = {}
    for kind in ex.kinds:
        prof = {
            "nominal": compute_profile(lambda a: gain_annulus(ex.model, a, kind, opts), alphas, kind=kind),
            "robust": compute_profile(lambda a: robust_gain_annulus(dm, None, a, kind, opts, consistency=cs),
                                      alphas, kind=kind),
        }
        panel = {}
        for which, p in prof.items():
            finite = p.gammas[np.isfinite(p.gammas)]
            tol = opts.rel_tol * max(1.0, float(finite.max()) if finite.size else 1.0)
            p = GainProfile(p.alphas, p.zetas, p.gammas, kind, tol)
            plain = rasterize(p, ex.window, res)
            cons = rasterize(p, ex.window, res, conservative=True)
            regions[(kind.value, which)] = (plain, cons)
            panel[which] = {"cells": int(plain.mask.sum()), "includes_infinity": plain.includes_infinity}
            if write:
                stem = out / f"{name}-{kind.value}-{which}"
                (stem.parent / f"{stem.name}-profile.csv").write_text(p.to_csv())
                write_region(plain, stem, title=f"{name} {which} {kind.value}")
        panel["robust_contains_nominal"] = region_contains(regions[(kind.value, "robust")][1],
                                                           regions[(kind.value, "nominal")][1])
        verdict["panels"][kind.value] = panel
    if write:
        (out / f"{name}-verdict.json").write_text(json.dumps(verdict, indent=2) + "\n")
    verdict["regions"] = regions
    return verdict


# -- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    ss = load_state_space(args.model)
    rng = np.random.default_rng(args.seed)
    u = make_input(args.input, args.N, ss.m, rng)
    if args.noise:
        v = sample_ball_noise(ss.m, u.shape[0], _ball_radius(args.noise), rng)
        traj = simulate_noisy(ss, u, v)
    else:
        traj = simulate(ss, u)
    save_trajectory(traj, args.out)
    return EXIT_OK


def cmd_srg(args) -> int:
    cfg = RunConfig(
        mode=args.mode, kind=args.kind, model=args.model, traj=args.traj,
        alpha_count=args.alpha_count, alpha_window=args.alpha_window, alphas=args.alphas, window=args.window,
        res=args.res, l=args.l, n=args.n, l_from_n=args.l_from_n, noise=args.noise, seed=args.seed,
        rel_tol=args.rel_tol, conservative=args.conservative, out=args.out)
    result = run_srg(cfg)
    print(json.dumps({"includes_infinity": result.region.includes_infinity,
                      "cells": int(result.region.mask.sum()),
                      "report": str(Path(cfg.out) / "report.json")}))
    return EXIT_OK


def check_report(traj: Trajectory, l: int | None, n: int | None, ss: StateSpace | None) -> dict:
    rep = {"N": traj.N, "m": traj.m, "pe_order": pe_order(traj.u)}
    if ss is not None:
        rep["lag"] = lag(ss)
        rep["n"] = ss.n
        n = ss.n if n is None else n
    if l is not None:
        rep["l"] = l
        rep[f"pe_order_{l}"] = is_persistently_exciting(traj.u, l) if l <= traj.N else False
    if n is not None and l is not None:
        order = n + l + 1
        ok = order <= traj.N and is_persistently_exciting(traj.u, order)
        rep["required_pe_order"] = order
        rep["pe_ok"] = ok
        rep["message"] = f"PE of order {order}: {'yes' if ok else 'no'}"
    elif l is not None:
        ok = rep[f"pe_order_{l}"]
        rep["message"] = f"{'PE' if ok else 'not PE'} of order {l}"
    if n is None:
        rep["guidance"] = ("state dimension unknown: the data route needs excitation of order n + l + 1, "
                           "where n is the number of states of a minimal realisation; any upper bound on n "
                           "is a valid choice for both n and l")
    return rep


def cmd_check(args) -> int:
    traj = load_trajectory(args.traj)
    ss = load_state_space(args.model) if args.model else None
    rep = check_report(traj, args.l, args.n, ss)
    print(json.dumps(rep, indent=2))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    verdict = reproduce(args.example, args.out, args.alpha_count, args.res)
    verdict.pop("regions")
    print(json.dumps(verdict, indent=2))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected two numbers a,b") from None
    if not a < b:
        raise argparse.ArgumentTypeError("expected a < b")
    return (a, b)


def _floats(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None
    if len(set(vals)) != len(vals):
        raise argparse.ArgumentTypeError("alphas must be distinct")
    return vals


def _res(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected WxH") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return (w, h)


def _window(text):
    try:
        return Window.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srgkit", description="Scaled relative graphs of discrete-time LTI systems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a model to a trajectory file")
    s.add_argument("--model", required=True)
    s.add_argument("--input", default="gaussian", help="prbs, gaussian, impulse or file:PATH")
    s.add_argument("--N", type=int, default=200)
    s.add_argument("--noise", help="ball:V_BAR or file:PATH with a ball entry")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("srg", help="gain profile and SRG raster")
    s.add_argument("--mode", choices=("ss", "data", "robust"), required=True)
    s.add_argument("--kind", choices=("trunc", "l2"), default="l2")
    s.add_argument("--model")
    s.add_argument("--traj")
    s.add_argument("--alpha-count", type=int, default=101)
    s.add_argument("--alpha-window", type=_pair)
    s.add_argument("--alphas", type=_floats, help="explicit comma-separated alpha grid")
    s.add_argument("--window", type=_window)
    s.add_argument("--res", type=_res, default=(400, 400))
    s.add_argument("--l", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--l-from-n", action="store_true", help="use the state dimension as the lag bound")
    s.add_argument("--noise")
    s.add_argument("--seed", type=int)
    s.add_argument("--rel-tol", type=float, default=1e-6)
    s.add_argument("--conservative", action="store_true")
    s.add_argument("--out", default="srg-out")
    s.set_defaults(func=cmd_srg)

    s = sub.add_parser("check", help="excitation and lag diagnostics")
    s.add_argument("--traj", required=True)
    s.add_argument("--l", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--model")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("reproduce", help="regenerate an example figure bundle")
    s.add_argument("example", choices=sorted(examples()))
    s.add_argument("--out", default="reproduce-out")
    s.add_argument("--alpha-count", type=int, default=101)
    s.add_argument("--res", type=_res, default=(400, 400))
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProfileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = _exit_code(exc.cause)
        return 1 if code is None else code
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code


def _exit_code(exc):
    if isinstance(exc, (SchemaError, FileNotFoundError)):
        return EXIT_SCHEMA
    if isinstance(exc, SolverInconclusive):
        return EXIT_SOLVER
    if isinstance(exc, (PreconditionError, NotObservableError, SingularFeedthrough)):
        return EXIT_PRECONDITION
    return None


if __name__ == "__main__":
    sys.exit(main())
