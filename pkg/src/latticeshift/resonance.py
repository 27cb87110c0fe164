"""Bragg-type resonances of the six-beam lattice and shift-cancelling angles.

A reciprocal vector ``G`` scatters the probe (wavevector ``x_hat``, units of
k0) into a propagating mode when ``|x_hat - G| = 1``, i.e.
``|G|^2 - 2 G_x = 0``. For the six-beam lattice ``G_x = 2 sin(theta)/kappa``,
``G_y = 2 cos(theta)/kappa`` and ``G_z = 2/kappa``, so the condition reads

    n_x^2 sin^2(theta) + n_y^2 cos^2(theta) + n_z^2 = kappa n_x sin(theta)
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import bisect

from .errors import DomainError, NoCrossingError
from .lattice import SR87_KAPPA, LatticeGeometry

#: Default bound on ``|n_i|`` in the resonance search.
DEFAULT_MAX_INDEX = 4
#: Roots closer than this (radians) are treated as one resonance.
MERGE_TOL = 1e-6


@dataclass(frozen=True)
class ResonanceSolution:
    """Angle ``theta0`` (radians) where reciprocal vector ``n`` is resonant.

    ``degenerate`` lists other index triples with the same root.
    """

    n: tuple[int, int, int]
    theta: float
    residual: float
    degenerate: tuple[tuple[int, int, int], ...] = field(default=())

    @property
    def theta_over_pi(self) -> float:
        return self.theta / math.pi


def bragg_residual(geom: LatticeGeometry, n) -> float:
    """``|G|^2 - 2 G_x`` (units of k0^2) for ``G = (n_x G_x, n_y G_y, n_z G_z)``."""
    n = tuple(int(v) for v in n)
    if n == (0, 0, 0):
        raise DomainError("reciprocal index triple must be nonzero")
    G = [ni * gi for ni, gi in zip(n, geom.reciprocal)]
    return G[0] ** 2 + G[1] ** 2 + G[2] ** 2 - 2.0 * G[0]


def _residual_theta(theta: float, n, kappa: float) -> float:
    # same value as bragg_residual(build_six_beam_lattice(theta, kappa), n)
    s, c = math.sin(theta), math.cos(theta)
    nx, ny, nz = n
    return 4.0 / kappa**2 * (nx * nx * s * s + ny * ny * c * c + nz * nz) - 4.0 * nx * s / kappa


def find_resonant_angles(kappa: float = SR87_KAPPA, theta_range=(0.05 * math.pi, 0.25 * math.pi),
                         max_index: int = DEFAULT_MAX_INDEX, scan_points: int = 2001) -> list[ResonanceSolution]:
    """All resonant angles inside ``theta_range`` for ``|n_i| <= max_index``, ``n_x >= 1``.

    Each residual is scanned on ``scan_points`` angles and every sign change is
    refined by bisection. Tangent (double) roots without a sign change are not
    reported.
    """
    lo, hi = (float(v) for v in theta_range)
    if max_index < 1:
        raise DomainError(f"max_index must be >= 1, got {max_index}")
    if not (0.0 < lo < hi < math.pi / 2):
        raise DomainError(f"theta range must satisfy 0 < lo < hi < pi/2, got ({lo}, {hi})")
    grid = np.linspace(lo, hi, scan_points)
    s, c = np.sin(grid), np.cos(grid)
    found = []
    rng = range(-max_index, max_index + 1)
    for n in itertools.product(range(1, max_index + 1), rng, rng):
        nx, ny, nz = n
        r = 4.0 / kappa**2 * (nx * nx * s * s + ny * ny * c * c + nz * nz) - 4.0 * nx * s / kappa
        for k in np.flatnonzero(np.sign(r[:-1]) * np.sign(r[1:]) <= 0):
            if r[k] == 0.0 and k > 0:
                continue  # already taken as the right end of the previous interval
            a, b = grid[k], grid[k + 1]
            if r[k] == 0.0:
                th = a
            elif r[k + 1] == 0.0:
                th = b
            else:
                th = bisect(_residual_theta, a, b, args=(n, kappa), xtol=1e-15, rtol=8.9e-16, maxiter=200)
            res = _residual_theta(th, n, kappa)
            if abs(res) <= 1e-10:
                found.append(ResonanceSolution(n=n, theta=float(th), residual=float(res)))
    return _merge(found)


def _norm_key(sol: ResonanceSolution):
    return (sum(v * v for v in sol.n), tuple(-v for v in sol.n))


def _merge(found: list[ResonanceSolution]) -> list[ResonanceSolution]:
    found.sort(key=lambda s: s.theta)
    groups: list[list[ResonanceSolution]] = []
    for sol in found:
        if groups and sol.theta - groups[-1][0].theta <= MERGE_TOL:
            groups[-1].append(sol)
        else:
            groups.append([sol])
    out = []
    for grp in groups:
        grp.sort(key=_norm_key)
        best = grp[0]
        out.append(ResonanceSolution(n=best.n, theta=best.theta, residual=best.residual,
                                     degenerate=tuple(s.n for s in grp[1:])))
    return out


# --------------------------------------------------------------------------
# scaling law

@dataclass(frozen=True)
class ScalingEstimate:
    """``N^(2/3) / beta``; meaningful only as an order of magnitude."""

    value: float
    order_of_magnitude: bool = True


def beta_from_cell_volume(cell_volume: float) -> float:
    """``beta`` defined by the density ``1/V = 1/(beta lambda0)^3`` with ``lambda0 = 2 pi``."""
    if not cell_volume > 0:
        raise DomainError("cell volume must be positive")
    return cell_volume ** (1.0 / 3.0) / (2.0 * math.pi)


def scaling_estimate(n_atoms: float, beta: float) -> ScalingEstimate:
    """Resonant shift scale ``N^(2/3) / beta`` (units of Gamma)."""
    if not n_atoms >= 1:
        raise DomainError(f"N must be >= 1, got {n_atoms}")
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    return ScalingEstimate(value=n_atoms ** (2.0 / 3.0) / beta)


# --------------------------------------------------------------------------
# zero crossings

@dataclass(frozen=True)
class ZeroShift:
    """A shift-cancelling angle.

    ``shift`` is the residual value at ``theta``, ``peak`` the largest
    ``|shift|`` seen while scanning the bracket and ``crossings`` every sign
    change found there, of which ``theta`` is the flattest.
    """

    theta: float
    shift: float
    peak: float
    crossings: tuple[float, ...]
    slope: float


def _refine_crossing(fn, a: float, fa: float, b: float, fb: float, tol: float,
                     maxiter: int = 200) -> tuple[float, float]:
    """Secant steps safeguarded by bisection until ``|fn| <= tol``."""
    best = (a, fa) if abs(fa) < abs(fb) else (b, fb)
    for _ in range(maxiter):
        if abs(best[1]) <= tol or b - a <= 4e-16 * max(abs(a), abs(b)):
            break
        x = b - fb * (b - a) / (fb - fa)
        lo, hi = a + 0.1 * (b - a), b - 0.1 * (b - a)
        if not lo <= x <= hi:
            x = 0.5 * (a + b)
        fx = fn(x)
        if abs(fx) < abs(best[1]):
            best = (x, fx)
        if fx == 0.0:
            break
        if np.sign(fx) == np.sign(fa):
            a, fa = x, fx
        else:
            b, fb = x, fx
    return best


def find_zero_shift(shift: Callable[[float], float], bracket: tuple[float, float],
                    samples: int = 65, rel_tol: float = 1e-8) -> ZeroShift:
    """Shift-cancelling angle inside ``bracket``.

    The bracket is scanned at ``samples`` points. Every sign change is refined
    to ``|shift| <= rel_tol * peak``. Resonances also cross zero, with a
    steep slope, so the crossing with the smallest ``|d shift / d theta|`` is
    returned. Raises :class:`NoCrossingError` when no sign change is seen.
    """
    lo, hi = (float(v) for v in bracket)
    if not hi > lo:
        raise DomainError(f"empty bracket ({lo}, {hi})")
    grid = np.linspace(lo, hi, max(int(samples), 2))
    vals = np.array([shift(x) for x in grid])
    if not np.all(np.isfinite(vals)):
        raise DomainError("shift function returned non-finite values")
    peak = float(np.max(np.abs(vals)))
    tol = rel_tol * peak
    roots = []
    for k in range(len(grid) - 1):
        fa, fb = vals[k], vals[k + 1]
        if fa == 0.0:
            roots.append((grid[k], 0.0))
        elif fa * fb < 0:
            roots.append(_refine_crossing(shift, grid[k], fa, grid[k + 1], fb, tol))
    if vals[-1] == 0.0:
        roots.append((grid[-1], 0.0))
    if not roots:
        raise NoCrossingError(f"no sign change of the shift on ({lo}, {hi}); widen the bracket")
    h = 1e-3 * (hi - lo) / max(len(grid) - 1, 1)
    slopes = [abs(shift(r + h) - shift(r - h)) / (2 * h) for r, _ in roots]
    i = int(np.argmin(slopes))
    return ZeroShift(theta=float(roots[i][0]), shift=float(roots[i][1]), peak=peak,
                     crossings=tuple(float(r) for r, _ in roots), slope=float(slopes[i]))


def resonant_theta_closed_form(n_x: int, kappa: float = SR87_KAPPA) -> Optional[float]:
    """Root of the ``(n_x, 0, 0)`` condition, ``sin(theta) = kappa / n_x``, or None."""
    s = kappa / n_x
    return math.asin(s) if 0 < s < 1 else None
