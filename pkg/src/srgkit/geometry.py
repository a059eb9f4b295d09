"""SRG regions as intersections of shifted annuli, and their rasters.

A gain profile lists, for real shifts alpha, the min and max gain of the
shifted operator.  Each entry confines the SRG to the annulus
zeta <= |z - alpha| <= gamma; the region is the intersection of all of them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from skimage import measure

from .errors import ProfileError
from .gains_ss import GainBounds
from .lti import OperatorKind


@dataclass(frozen=True)
class ProfileEntry:
    alpha: float
    zeta: float
    gamma: float


@dataclass(frozen=True, eq=False)
class GainProfile:
    """Annulus radii over an increasing alpha grid.

    `tol` is an absolute error bar on every radius; conservative rasters
    widen the annuli by it.
    """

    alphas: np.ndarray
    zetas: np.ndarray
    gammas: np.ndarray
    kind: OperatorKind = OperatorKind.L2
    tol: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a, z, g = (np.array(v, dtype=float).ravel() for v in (self.alphas, self.zetas, self.gammas))
        if not (a.size == z.size == g.size) or a.size == 0:
            raise ValueError("profile needs the same positive number of alphas, zetas and gammas")
        if np.any(np.diff(a) <= 0):
            raise ValueError("profile alphas must be strictly increasing")
        if np.any(z < 0) or np.any(g < 0) or np.any(np.isnan(z)) or np.any(np.isnan(g)):
            raise ValueError("gains must be nonnegative numbers")
        if np.any(z > g + self.tol):
            i = int(np.argmax(z - g))
            raise ValueError(f"zeta > gamma at alpha={a[i]:g}")
        for name, v in (("alphas", a), ("zetas", z), ("gammas", g)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "kind", OperatorKind.parse(self.kind))

    def __len__(self) -> int:
        return self.alphas.size

    def __iter__(self):
        for a, z, g in zip(self.alphas, self.zetas, self.gammas):
            yield ProfileEntry(float(a), float(z), float(g))

    @property
    def includes_infinity(self) -> bool:
        return bool(np.all(np.isinf(self.gammas)))

    def gamma_at(self, alpha: float) -> float:
        hit = np.flatnonzero(self.alphas == alpha)
        if not hit.size:
            raise KeyError(alpha)
        return float(self.gammas[hit[0]])

    def lipschitz_violation(self) -> float:
        """Largest amount by which adjacent finite gammas break |dgamma| <= |dalpha| + 2 tol."""
        g = self.gammas
        ok = np.isfinite(g[:-1]) & np.isfinite(g[1:])
        if not np.any(ok):
            return 0.0
        excess = np.abs(np.diff(g))[ok] - np.diff(self.alphas)[ok] - 2 * self.tol
        return float(max(0.0, excess.max()))

    def subset(self, idx) -> "GainProfile":
        idx = np.sort(np.asarray(idx))
        return GainProfile(self.alphas[idx], self.zetas[idx], self.gammas[idx], self.kind, self.tol, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "zeta", "gamma"])
        for e in self:
            w.writerow([_fmt(e.alpha), _fmt(e.zeta), _fmt(e.gamma)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, kind=OperatorKind.L2, tol: float = 0.0) -> "GainProfile":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([float(r["alpha"]) for r in rows], [float(r["zeta"]) for r in rows],
                   [float(r["gamma"]) for r in rows], kind, tol)


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def profile_from_bounds(bounds: Iterable[GainBounds], tol: float = 0.0) -> GainProfile:
    bounds = sorted(bounds, key=lambda b: b.alpha)
    kind = bounds[0].kind if bounds else OperatorKind.L2
    return GainProfile([b.alpha for b in bounds], [b.zeta for b in bounds],
                       [b.gamma for b in bounds], kind, tol)


def membership(z, profile: GainProfile, tol: float = 0.0):
    """Whether z lies in every annulus of the profile (scalar or array z).

    A positive tol widens each annulus by tol on both sides.
    """
    z = np.asarray(z, dtype=complex)
    inside = np.ones(z.shape, dtype=bool)
    for a, lo, hi in zip(profile.alphas, profile.zetas, profile.gammas):
        d = np.abs(z - a)
        inside &= (d >= lo - tol) & (d <= hi + tol)
    return bool(inside) if inside.ndim == 0 else inside


def default_alpha_grid(gamma0: float, count: int = 101, window=None) -> np.ndarray:
    """count points uniformly on [-1.1 gamma0, 1.1 gamma0], or on `window` when given or gamma0 is inf."""
    if count < 1:
        raise ValueError("count must be positive")
    if window is not None:
        lo, hi = (float(v) for v in window)
    elif math.isfinite(gamma0):
        lo, hi = -1.1 * gamma0, 1.1 * gamma0
    else:
        raise ValueError("gain at alpha=0 is infinite; give an explicit alpha window")
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    grid = np.linspace(lo, hi, count)
    if count % 2 and lo == -hi:
        grid[count // 2] = 0.0
    return grid


def compute_profile(gain_fn: Callable[[float], GainBounds], alphas, tol: float = 0.0,
                    kind=None, map_fn=map) -> GainProfile:
    """Evaluate gain_fn on every alpha; `map_fn` may be a parallel map.

    A failure is re-raised as ProfileError naming the alpha, with the entries
    that were completed attached.
    """
    alphas = [float(a) for a in alphas]
    done: list[GainBounds] = []

    def one(a):
        try:
            return gain_fn(a)
        except Exception as exc:
            raise ProfileError(a, exc, done) from exc

    for b in map_fn(one, alphas):
        done.append(b)
    kind = OperatorKind.parse(kind) if kind is not None else (done[0].kind if done else OperatorKind.L2)
    return GainProfile(alphas, [b.zeta for b in done], [b.gamma for b in done], kind, tol)


@dataclass(frozen=True)
class Window:
    re0: float
    re1: float
    im0: float
    im1: float

    def __post_init__(self):
        for name in ("re0", "re1", "im0", "im1"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.re0 < self.re1 and self.im0 < self.im1):
            raise ValueError(f"empty window {self}")

    @classmethod
    def parse(cls, text: str) -> "Window":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("window needs four numbers re0,re1,im0,im1")
        return cls(*parts)

    def as_tuple(self):
        return (self.re0, self.re1, self.im0, self.im1)


def default_window(profile: GainProfile) -> Window:
    """Square of half-width 1.2 gamma(0) around the real midpoint of the region's shadow.

    The shadow [max(alpha - gamma), min(alpha + gamma)] is where the outer
    circles leave room on the real axis.
    """
    fin = np.isfinite(profile.gammas)
    if not np.any(fin):
        raise ValueError("all gains are infinite; give an explicit window")
    a, g = profile.alphas[fin], profile.gammas[fin]
    i0 = int(np.argmin(np.abs(a)))
    half = 1.2 * max(g[i0], 1e-9)
    lo, hi = np.max(a - g), np.min(a + g)
    c = 0.5 * (lo + hi) if lo <= hi else float(a[i0])
    return Window(c - half, c + half, -half, half)


@dataclass(frozen=True, eq=False)
class SrgRegion:
    """Boolean raster of the region; row 0 is the top (largest imaginary part)."""

    window: Window
    mask: np.ndarray
    includes_infinity: bool = False
    conservative: bool = False

    @property
    def resolution(self):
        return (self.mask.shape[1], self.mask.shape[0])

    def centers(self):
        return cell_centers(self.window, self.resolution)

    def to_csv(self) -> str:
        re, im = self.centers()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "inside"])
        for i in range(self.mask.shape[0]):
            for j in range(self.mask.shape[1]):
                w.writerow([repr(float(re[j])), repr(float(im[i])), int(self.mask[i, j])])
        return buf.getvalue()

    def to_pgm(self) -> str:
        """Plain (P2) graymap: 0 inside, 255 outside."""
        H, W = self.mask.shape
        rows = [" ".join("0" if v else "255" for v in row) for row in self.mask]
        return f"P2\n# includes_infinity={int(self.includes_infinity)}\n{W} {H}\n255\n" + "\n".join(rows) + "\n"

    def to_svg(self, size: int = 400, title: str | None = None) -> str:
        return region_svg(self, size, title)


def cell_centers(window: Window, resolution):
    """Real parts per column and imaginary parts per row (top row first).

    Offsets are taken from the window centre, so a window symmetric about
    the real axis yields imaginary parts that are exact negatives.
    """
    W, H = resolution
    if W < 1 or H < 1:
        raise ValueError(f"resolution must be positive, got {resolution}")
    dx = (window.re1 - window.re0) / W
    dy = (window.im1 - window.im0) / H
    cx = 0.5 * (window.re0 + window.re1)
    cy = 0.5 * (window.im0 + window.im1)
    re = cx + (np.arange(W) + 0.5 - W / 2) * dx
    im = cy - (np.arange(H) + 0.5 - H / 2) * dy
    return re, im


def rasterize(profile: GainProfile, window: Window, resolution=(400, 400),
              conservative: bool = False) -> SrgRegion:
    """Mark cells whose centre is in every annulus.

    conservative=True marks a cell when, for each alpha separately, some
    point of the cell lies in the annulus widened by profile.tol.  That mask
    contains every cell the true region touches.
    """
    W, H = resolution
    re, im = cell_centers(window, resolution)
    mask = np.ones((H, W), dtype=bool)
    if conservative:
        hx = 0.5 * (window.re1 - window.re0) / W
        hy = 0.5 * (window.im1 - window.im0) / H
        tol = profile.tol
        ay = np.abs(im)[:, None]
        near_y = np.maximum(ay - hy, 0.0)
        far_y = ay + hy
    for a, lo, hi in zip(profile.alphas, profile.zetas, profile.gammas):
        dxr = np.abs(re - a)[None, :]
        if conservative:
            dmin = np.hypot(np.maximum(dxr - hx, 0.0), near_y)
            dmax = np.hypot(dxr + hx, far_y)
            mask &= (dmax >= lo - tol) & (dmin <= hi + tol)
        else:
            d = np.hypot(dxr, im[:, None])
            mask &= (d >= lo) & (d <= hi)
    return SrgRegion(window, mask, profile.includes_infinity, conservative)


def region_contains(outer: SrgRegion, inner: SrgRegion) -> bool:
    if outer.window != inner.window or outer.mask.shape != inner.mask.shape:
        raise ValueError("regions must share window and resolution")
    if inner.includes_infinity and not outer.includes_infinity:
        return False
    return bool(np.all(outer.mask | ~inner.mask))


def region_svg(region: SrgRegion, size: int = 400, title: str | None = None) -> str:
    """Filled region outline (marching squares on the mask) with axes."""
    H, W = region.mask.shape
    win = region.window
    sx, sy = size / W, size / H
    padded = np.pad(region.mask.astype(float), 1)
    paths = []
    for c in measure.find_contours(padded, 0.5):
        # contour coordinates are (row, col) in the padded array
        pts = " ".join(f"{(x - 0.5) * sx:.2f},{(y - 0.5) * sy:.2f}" for y, x in c)
        paths.append(f"M {pts} Z")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    if title:
        out.append(f"<title>{title}</title>")
    out.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    if paths:
        out.append(f'<path d="{" ".join(paths)}" fill="#b0b0b0" stroke="black" '
                   f'stroke-width="1" fill-rule="evenodd"/>')
    if win.re0 <= 0 <= win.re1:
        x0 = (0 - win.re0) / (win.re1 - win.re0) * size
        out.append(f'<line x1="{x0:.2f}" y1="0" x2="{x0:.2f}" y2="{size}" stroke="#404040" stroke-width="0.5"/>')
    if win.im0 <= 0 <= win.im1:
        y0 = (win.im1 - 0) / (win.im1 - win.im0) * size
        out.append(f'<line x1="0" y1="{y0:.2f}" x2="{size}" y2="{y0:.2f}" stroke="#404040" stroke-width="0.5"/>')
    out.append(f'<text x="4" y="{size - 4}" font-size="10">re [{win.re0:.3g}, {win.re1:.3g}], '
               f'im [{win.im0:.3g}, {win.im1:.3g}]</text>')
    if region.includes_infinity:
        out.append('<text x="4" y="12" font-size="10">includes the point at infinity</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_region(region: SrgRegion, stem, title: str | None = None) -> dict:
    """Write <stem>.csv, <stem>.pgm and <stem>.svg; return the paths."""
    stem = Path(stem)
    paths = {}
    for ext, text in (("csv", region.to_csv()), ("pgm", region.to_pgm()), ("svg", region.to_svg(title=title))):
        p = stem.with_suffix(f".{ext}")
        p.write_text(text)
        paths[ext] = str(p)
    return paths
