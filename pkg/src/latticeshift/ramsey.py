"""Ramsey signal chain: coherences before the second pulse, signals, peak shift.

Rates are in units of Gamma and lengths in 1/k0. For atom ``a`` the
coherence ``<sigma_a^+>`` just before the second pulse is expanded to second
order in Gamma; with ``h_ab = f_ab - i g_ab`` and ``e_ab = exp(i (x_a - x_b))``
the exact-in-gamma form is

    <sigma_a^+> = 1/2 exp(-i x_a) sin(2 Omega tau) exp(-(i delta + gamma/2) t)
                  [1 - (t/2)(1 + C_a) + (t^2/8)(1 + C_a)
                   + t^2/2 sum_b h_ab (-A_ab - 2 B_ab phi2(gamma t))]

where ``phi2(x) = (exp(-x) + x - 1)/x^2`` and ``A``, ``B``, ``C`` are the pair
terms built in :func:`coherence_terms`. The commonly printed form carries the
opposite sign on ``A_ab``; that sign disagrees with both the small-gamma
expansion and exact density-matrix evolution, so the corrected sign is used.

Because the interaction part of the dynamics conserves excitation number,
``<sigma_a^+>`` depends on the detuning only through ``exp(-i delta t)``. The
effective signal is then an exact sinusoid in ``delta`` and its stationary
point sits at ``arg(sum_a exp(i x_a) <sigma_a^+>)/t``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import BracketError, DegenerateFringeError, DomainError
from .kernels import f_and_g
from .lattice import AtomSample
from .shift import RamseyParams

# below this gamma*t the dephasing factor phi2 uses its Taylor series
_PHI2_SERIES_BELOW = 1e-6


def independent_signal(n_atoms: int, pulse_area: float, detuning: float, interrogation: float,
                       dephasing: float = 0.0):
    """Inversion signal of ``N`` independent atoms after the Ramsey sequence.

    ``-N [eps (1 - e^{-t}) + e^{-t} eps^2 + e^{-(1+gamma) t/2} sin^2(2 Omega tau) cos(delta t)]``
    with ``eps = cos(2 Omega tau)``. ``detuning`` may be an array.

    >>> independent_signal(3, 0.3, 1.0, 0.0)
    -3.0
    """
    if n_atoms < 1:
        raise DomainError(f"need at least one atom, got {n_atoms}")
    eps = math.cos(2.0 * pulse_area)
    s2 = math.sin(2.0 * pulse_area) ** 2
    t = interrogation
    d = np.asarray(detuning, dtype=float)
    out = -n_atoms * (eps * -math.expm1(-t) + math.exp(-t) * eps**2
                      + math.exp(-(1.0 + dephasing) * t / 2.0) * s2 * np.cos(d * t))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PairMatrices:
    """Per-pair kernels of one sample, zero on the diagonal.

    ``h = f - i g``, ``quadrature[a, j] = f cos(x_aj) + g sin(x_aj)`` and
    ``x`` the probe-axis coordinates. Tests pass zero matrices to switch off
    the interactions exactly.
    """

    x: np.ndarray
    f: np.ndarray
    g: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return self.f - 1j * self.g

    @property
    def quadrature(self) -> np.ndarray:
        dx = self.x[:, None] - self.x[None, :]
        return self.f * np.cos(dx) + self.g * np.sin(dx)

    @classmethod
    def from_sample(cls, sample: AtomSample) -> "PairMatrices":
        pos = sample.positions
        n = len(pos)
        if n < 1:
            raise DomainError("sample has no atoms")
        f = np.zeros((n, n))
        g = np.zeros((n, n))
        if n > 1:
            iu = np.triu_indices(n, 1)
            fv, gv = f_and_g(pos[iu[0]] - pos[iu[1]])
            f[iu] = fv
            g[iu] = gv
            f = f + f.T
            g = g + g.T
        return cls(x=pos[:, 0].copy(), f=f, g=g)

    @classmethod
    def uncoupled(cls, x) -> "PairMatrices":
        x = np.asarray(x, dtype=float)
        z = np.zeros((len(x), len(x)))
        return cls(x=x, f=z, g=z.copy())


@dataclass(frozen=True)
class CoherenceTerms:
    """Pair and single-atom terms of the second-order coherence.

    ``A`` and ``B`` are ``(N, N)`` with zero diagonal; ``C`` and ``phi`` have
    length ``N``. ``A`` follows the printed definition; its sign in the
    coherence is corrected in :func:`coherence_perturbative_full`.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    phi: np.ndarray


def _pairs(sample_or_pairs) -> PairMatrices:
    if isinstance(sample_or_pairs, PairMatrices):
        return sample_or_pairs
    return PairMatrices.from_sample(sample_or_pairs)


def coherence_terms(sample: Union[AtomSample, PairMatrices], params: RamseyParams) -> CoherenceTerms:
    """Evaluate ``A_ab``, ``B_ab``, ``C_a`` and ``phi_a``."""
    pm = _pairs(sample)
    n = len(pm.x)
    eps, t = params.pulse_error, params.interrogation
    s2 = 1.0 - eps**2
    h = pm.h
    f = pm.f
    e = np.exp(1j * (pm.x[:, None] - pm.x[None, :]))
    off = ~np.eye(n, dtype=bool)
    dq = pm.quadrature
    # sum_{j != a, b} D_aj, one value per ordered pair (a, b)
    d_excl = dq.sum(axis=1)[:, None] - dq
    # sum_{j != a, b} h_bj exp(i(x_a - x_j)) = e^{i x_a} (h e^{-i x})_b - h_ba
    q = h @ np.exp(-1j * pm.x)
    t_ab = np.exp(1j * pm.x)[:, None] * q[None, :] - h.T
    A = (-0.75 * e * eps + 0.5 * e + 0.25 * np.conj(h) - 0.5 * f * eps - 0.25 * t_ab * eps**2) * off
    B = 0.25 * e * s2 * d_excl * off
    C = eps * np.sum(h * e, axis=1)
    phi = np.sum(h * e * (0.5 * t * eps + 0.25 * t**2 * (1.0 + 0.5 * np.conj(h * e) + 0.5 * d_excl)) * off,
                 axis=1)
    return CoherenceTerms(A=A, B=B, C=C, phi=phi)


def _phi2(x: float) -> float:
    """``(exp(-x) + x - 1) / x**2`` with its limit 1/2 at x = 0."""
    if x < _PHI2_SERIES_BELOW:
        return 0.5 - x / 6.0 + x * x / 24.0
    return (math.expm1(-x) + x) / (x * x)


def _select(values: np.ndarray, atom: Optional[int]):
    if atom is None:
        return values
    if not 0 <= atom < len(values):
        raise DomainError(f"atom index {atom} out of range for {len(values)} atoms")
    return complex(values[atom])


def coherence_perturbative_full(sample, params: RamseyParams, atom: Optional[int] = None):
    """Second-order-in-Gamma coherence, exact in the dephasing rate.

    Returns ``<sigma_a^+>`` for ``atom`` or the array over all atoms. ``sample``
    may also be a :class:`PairMatrices`.
    """
    pm = _pairs(sample)
    terms = coherence_terms(pm, params)
    t, gam = params.interrogation, params.dephasing
    inner = np.sum(pm.h * (-terms.A - 2.0 * terms.B * _phi2(gam * t)), axis=1)
    bracket = 1.0 - 0.5 * t * (1.0 + terms.C) + t * t / 8.0 * (1.0 + terms.C) + 0.5 * t * t * inner
    pref = 0.5 * params.sin2 * np.exp(-1j * pm.x) * np.exp(-(1j * params.detuning + 0.5 * gam) * t)
    return _select(pref * bracket, atom)


def coherence_simplified(sample, params: RamseyParams, atom: Optional[int] = None):
    """Small-gamma, small-``eps`` coherence ``1/2 e^{-i x_a} sin(2 Omega tau) e^{-i delta t} (1 - t/2 + t^2/8 - phi_a)``."""
    if abs(params.pulse_error) > 0.3:
        warnings.warn(f"simplified coherence assumes |eps| << 1 (got {params.pulse_error})", stacklevel=2)
    pm = _pairs(sample)
    t = params.interrogation
    phi = coherence_terms(pm, params).phi
    pref = 0.5 * params.sin2 * np.exp(-1j * pm.x) * np.exp(-1j * params.detuning * t)
    return _select(pref * (1.0 - 0.5 * t + t * t / 8.0 - phi), atom)


# --------------------------------------------------------------------------
# signals

@dataclass(frozen=True)
class SignalCurve:
    """Signal sampled on a strictly increasing detuning grid (units of Gamma).

    ``n_atoms`` sets the contrast threshold used by :func:`extract_peak_shift`.
    """

    detuning: np.ndarray
    signal: np.ndarray
    n_atoms: int = 1

    def __post_init__(self):
        d = np.asarray(self.detuning, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if d.ndim != 1 or d.shape != s.shape:
            raise DomainError("detuning and signal must be 1-d arrays of equal length")
        if len(d) < 5:
            raise DomainError(f"a signal curve needs at least 5 points, got {len(d)}")
        if np.any(np.diff(d) <= 0):
            raise DomainError("detuning grid must be strictly increasing")
        object.__setattr__(self, "detuning", d)
        object.__setattr__(self, "signal", s)

    @property
    def contrast(self) -> float:
        return float(self.signal.max() - self.signal.min())


CoherenceSource = Union[str, Callable[[RamseyParams], np.ndarray]]


def _coherence_fn(pm: PairMatrices, coherence: CoherenceSource):
    if coherence == "full":
        return lambda p: coherence_perturbative_full(pm, p)
    if coherence == "simplified":
        return lambda p: coherence_simplified(pm, p)
    if callable(coherence):
        return coherence
    raise DomainError(f"unknown coherence source {coherence!r}")


def effective_signal_value(sample, params: RamseyParams, detuning: float,
                           coherence: CoherenceSource = "full") -> float:
    """``S`` at a single detuning; see :func:`effective_signal`."""
    pm = _pairs(sample)
    c = _coherence_fn(pm, coherence)(params.with_(detuning=float(detuning)))
    return -2.0 * params.sin2 * float(np.real(np.sum(np.exp(1j * pm.x) * c)))


def effective_signal(sample: AtomSample, params: RamseyParams, detuning,
                     coherence: CoherenceSource = "full") -> SignalCurve:
    """``S(delta) = -2 sin(2 Omega tau) Re sum_a e^{i x_a} <sigma_a^+>`` on a grid.

    ``coherence`` is ``"full"``, ``"simplified"`` or a callable mapping
    :class:`RamseyParams` to the array of coherences.
    """
    grid = np.asarray(detuning, dtype=float)
    if grid.size == 0:
        raise DomainError("empty detuning grid")
    pm = _pairs(sample)
    _coherence_fn(pm, coherence)
    vals = [effective_signal_value(pm, params, d, coherence) for d in grid]
    return SignalCurve(detuning=grid, signal=np.array(vals), n_atoms=len(pm.x))


def _stationary_nearest_zero(candidates) -> float:
    c = np.asarray(candidates, dtype=float)
    if c.size == 0:
        raise BracketError("no sign change of dS/d(delta) in range")
    return float(c[np.argmin(np.abs(c))])


def extract_peak_shift(source, bracket: Optional[tuple[float, float]] = None, samples: int = 64,
                       n_atoms: Optional[int] = None, full_output: bool = False):
    """Stationary point of the signal nearest zero detuning.

    ``source`` is a :class:`SignalCurve` or a callable ``S(delta)``. For a
    curve, sign changes of a cubic-spline derivative are located and the
    spline root is taken. For a callable, ``bracket`` is scanned at
    ``samples`` points and each sign change of a central-difference derivative
    is refined with Brent's method. With ``full_output`` the return value is
    ``(delta_p, uncertainty)``.
    """
    if isinstance(source, SignalCurve):
        d, s = source.detuning, source.signal
        scale = n_atoms or source.n_atoms
        _check_contrast(source.contrast, scale)
        ds = CubicSpline(d, s).derivative()
        roots = ds.roots(extrapolate=False)
        roots = roots[(roots > d[0]) & (roots < d[-1])]
        # keep genuine extrema, not tangent points
        h = 1e-6 * (d[-1] - d[0])
        roots = [r for r in roots if ds(r - h) * ds(r + h) < 0]
        dp = _stationary_nearest_zero(roots)
        # compare with a three-point parabola through the nearest samples
        i = int(np.clip(np.searchsorted(d, dp), 1, len(d) - 2))
        err = abs(dp - _parabola_vertex(d[i - 1:i + 2], s[i - 1:i + 2]))
        return (dp, err) if full_output else dp
    if not callable(source):
        raise DomainError("source must be a SignalCurve or a callable")
    if bracket is None:
        raise DomainError("a detuning bracket is required for callable signals")
    lo, hi = (float(x) for x in bracket)
    if not hi > lo:
        raise DomainError(f"empty bracket ({lo}, {hi})")
    grid = np.linspace(lo, hi, max(int(samples), 5))
    vals = np.array([source(x) for x in grid])
    _check_contrast(float(vals.max() - vals.min()), n_atoms or max(1.0, float(np.max(np.abs(vals)))))
    step = 1e-4 * (hi - lo)
    deriv = lambda x: (source(x + step) - source(x - step)) / (2.0 * step)  # noqa: E731
    dv = np.array([deriv(x) for x in grid])
    roots = []
    for k in range(len(grid) - 1):
        if dv[k] == 0.0:
            roots.append(grid[k])
        elif dv[k] * dv[k + 1] < 0:
            roots.append(brentq(deriv, grid[k], grid[k + 1], xtol=1e-14 * (hi - lo), rtol=1e-15))
    dp = _stationary_nearest_zero(roots)
    return (dp, 1e-14 * (hi - lo)) if full_output else dp


def _check_contrast(contrast: float, scale: float) -> None:
    if not contrast > 1e-12 * scale:
        raise DegenerateFringeError(f"fringe contrast {contrast:.3g} below threshold {1e-12 * scale:.3g}")


def _parabola_vertex(x, y) -> float:
    c = np.polyfit(x - x[1], y, 2)
    if c[0] == 0.0:
        return float(x[1])
    return float(x[1] - c[1] / (2.0 * c[0]))


def analytic_peak_shift(coherences, x, interrogation: float) -> float:
    """Peak shift of a signal whose coherences scale as ``exp(-i delta t)``.

    ``coherences`` are evaluated at zero detuning; the result is
    ``arg(sum_a e^{i x_a} <sigma_a^+>) / t``.
    """
    if not interrogation > 0:
        raise DomainError("interrogation time must be positive")
    z = np.sum(np.exp(1j * np.asarray(x)) * np.asarray(coherences))
    return float(np.angle(z)) / interrogation


def write_signal_csv(path, curve: SignalCurve, peak: Optional[float] = None) -> None:
    """Write ``delta_over_gamma,signal`` rows and an optional peak footer."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta_over_gamma", "signal"])
        for d, s in zip(curve.detuning, curve.signal):
            w.writerow([f"{d:.17g}", f"{s:.17g}"])
        if peak is not None:
            fh.write(f"# delta_p_over_gamma={peak:.17g}\n")


def read_signal_csv(path) -> tuple[SignalCurve, Optional[float]]:
    """Inverse of :func:`write_signal_csv`."""
    peak = None
    rows = []
    with open(Path(path)) as fh:
        for line in fh:
            if line.startswith("# delta_p_over_gamma="):
                peak = float(line.split("=", 1)[1])
            elif line.startswith("#") or line.startswith("delta_over_gamma"):
                continue
            elif line.strip():
                rows.append([float(v) for v in line.split(",")])
    arr = np.array(rows)
    return SignalCurve(detuning=arr[:, 0], signal=arr[:, 1]), peak
