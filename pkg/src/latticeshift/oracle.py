"""Exact density-matrix simulation of the Ramsey sequence for a few atoms.

Each atom has basis ``(|e>, |g>)`` and atom 0 is the most significant factor
of the tensor product. In the frame rotating with the probe,

    d rho/dt = -i [H, rho] - 1/2 sum_{a,b} f_ab ({s+_a s-_b, rho} - 2 s-_b rho s+_a)
               - gamma/4 sum_a (rho - sz_a rho sz_a)

with ``H = -delta/2 sum_a sz_a + 1/2 sum_{a != b} g_ab s+_a s-_b`` and
``f_aa = 1``. The superoperator is applied matrix-free: the decay part is
written with jump operators from the eigenvectors of the symmetric ``f``
matrix and the dephasing part is an elementwise mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import CapacityError, DomainError, IntegratorError
from .lattice import AtomSample
from .ramsey import PairMatrices, SignalCurve, extract_peak_shift
from .shift import RamseyParams

#: Largest atom number accepted by default (64 x 64 density matrices).
N_MAX = 6

RTOL = 1e-10
ATOL = 1e-12

_SP = np.array([[0.0, 1.0], [0.0, 0.0]])  # |e><g|
_SZ = np.diag([1.0, -1.0])


def _site_op(op: np.ndarray, a: int, n: int) -> np.ndarray:
    mats = [np.eye(2)] * n
    mats[a] = op
    return reduce(np.kron, mats)


def _z_diagonals(n: int) -> np.ndarray:
    """``z[a, i]`` = eigenvalue of ``sz_a`` on basis state ``i``."""
    i = np.arange(2**n)
    bits = (i[None, :] >> (n - 1 - np.arange(n))[:, None]) & 1
    return 1.0 - 2.0 * bits


def raising_ops(n: int) -> list[np.ndarray]:
    return [_site_op(_SP, a, n) for a in range(n)]


def ground_state(n: int) -> np.ndarray:
    """Density matrix of all atoms in ``|g>``."""
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[-1, -1] = 1.0
    return rho


@dataclass(frozen=True)
class Liouvillian:
    """Matrix-free master-equation generator for ``n`` atoms.

    ``f`` must have a unit diagonal; ``g`` must be symmetric with zero
    diagonal. Rates are in units of Gamma.
    """

    f: np.ndarray
    g: np.ndarray
    detuning: float = 0.0
    dephasing: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        g = np.asarray(self.g, dtype=float)
        n = f.shape[0]
        if f.shape != (n, n) or g.shape != (n, n):
            raise DomainError("coupling matrices must be square and of equal size")
        if not np.allclose(f, f.T, rtol=0, atol=1e-14) or not np.allclose(g, g.T, rtol=0, atol=1e-14):
            raise DomainError("coupling matrices must be symmetric")
        if np.any(np.diag(g) != 0.0):
            raise DomainError("g must have a zero diagonal")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        sp = raising_ops(n)
        sm = [s.T for s in sp]
        z = _z_diagonals(n)
        ham = -0.5 * self.detuning * np.diag(z.sum(axis=0)).astype(complex)
        decay = np.zeros_like(ham)
        for a in range(n):
            for b in range(n):
                pair = sp[a] @ sm[b]
                if a != b and g[a, b] != 0.0:
                    ham = ham + 0.5 * g[a, b] * pair
                if f[a, b] != 0.0:
                    decay = decay + f[a, b] * pair
        lam, vec = np.linalg.eigh(f)
        jumps = [(float(lam[k]), sum(vec[b, k] * sm[b] for b in range(n))) for k in range(n)]
        object.__setattr__(self, "_n", n)
        object.__setattr__(self, "_ham", ham)
        object.__setattr__(self, "_k", -1j * ham - 0.5 * decay)
        object.__setattr__(self, "_jumps", [(l, j) for l, j in jumps if l != 0.0])
        # 2 * (number of atoms whose sz differs between row and column state)
        mask = 0.5 * np.sum(1.0 - z[:, :, None] * z[:, None, :], axis=0)
        object.__setattr__(self, "_dephase", 0.5 * self.dephasing * mask)

    @property
    def n_atoms(self) -> int:
        return self._n

    @property
    def hamiltonian(self) -> np.ndarray:
        return self._ham

    def apply(self, rho: np.ndarray) -> np.ndarray:
        k = self._k
        out = k @ rho + rho @ k.conj().T
        for lam, j in self._jumps:
            out += lam * (j @ rho @ j.T)
        if self.dephasing:
            out -= self._dephase * rho
        return out

    def matrix(self) -> np.ndarray:
        """Dense superoperator acting on row-major ``vec(rho)``; for tests only."""
        d = 2**self._n
        cols = []
        for i in range(d * d):
            e = np.zeros(d * d, dtype=complex)
            e[i] = 1.0
            cols.append(self.apply(e.reshape(d, d)).ravel())
        return np.array(cols).T


def build_liouvillian(sample: AtomSample, params: RamseyParams, n_max: int = N_MAX) -> Liouvillian:
    """Generator for ``sample`` with the detuning and dephasing of ``params``."""
    n = sample.n_atoms
    if n < 1:
        raise DomainError("sample has no atoms")
    if n > n_max:
        raise CapacityError(f"oracle limited to {n_max} atoms (got {n})")
    pm = PairMatrices.from_sample(sample)
    f = pm.f + np.eye(n)
    return Liouvillian(f=f, g=pm.g, detuning=params.detuning, dephasing=params.dephasing)


def pulse_unitary(x, pulse_area: float) -> np.ndarray:
    """Product of per-atom blocks ``[[c, e^{i x} s], [-e^{-i x} s, c]]``."""
    c, s = math.cos(pulse_area), math.sin(pulse_area)
    blocks = [np.array([[c, np.exp(1j * xa) * s], [-np.exp(-1j * xa) * s, c]]) for xa in np.asarray(x)]
    return reduce(np.kron, blocks)


def apply_pulse(rho: np.ndarray, x, pulse_area: float, direction: str = "forward") -> np.ndarray:
    """``U rho U^dagger`` (forward) or ``U^dagger rho U`` (inverse)."""
    u = pulse_unitary(x, pulse_area)
    if direction == "forward":
        return u @ rho @ u.conj().T
    if direction == "inverse":
        return u.conj().T @ rho @ u
    raise DomainError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def check_density_matrix(rho: np.ndarray, herm_tol: float = 1e-10, trace_tol: float = 1e-10,
                         pos_tol: float = 1e-8) -> dict:
    """Hermiticity, trace and positivity diagnostics; ``ok`` combines them."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    tr = abs(complex(np.trace(rho)) - 1.0)
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    return {"hermiticity": herm, "trace_error": tr, "min_eigenvalue": min_eig,
            "ok": herm <= herm_tol and tr <= trace_tol and min_eig >= -pos_tol}


def evolve(rho: np.ndarray, liouv: Liouvillian, interrogation: float, rtol: float = RTOL,
           atol: float = ATOL) -> np.ndarray:
    """Integrate the master equation over ``interrogation`` (units of 1/Gamma).

    Uses the adaptive eighth-order Dormand-Prince scheme on the complex
    density matrix; raises :class:`IntegratorError` on failure.
    """
    if not interrogation >= 0.0:
        raise DomainError(f"interrogation time must be >= 0, got {interrogation}")
    rho = np.asarray(rho, dtype=complex)
    if interrogation == 0.0:
        return rho.copy()
    shape = rho.shape

    def rhs(_, y):
        return liouv.apply(y.reshape(shape)).ravel()

    sol = solve_ivp(rhs, (0.0, interrogation), rho.ravel(), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegratorError(f"integration failed after {sol.nfev} evaluations: {sol.message}")
    out = sol.y[:, -1].reshape(shape)
    # the generator preserves Hermiticity; remove round-off drift
    return 0.5 * (out + out.conj().T)


def rotate_detuning(rho: np.ndarray, detuning: float, interrogation: float) -> np.ndarray:
    """Apply the free precession ``exp(i delta t sum sz / 2)``.

    The rest of the generator conserves excitation number and commutes with
    this rotation, so evolving at zero detuning and rotating is exact.
    """
    n = int(round(math.log2(rho.shape[0])))
    m = _z_diagonals(n).sum(axis=0)
    ph = np.exp(0.5j * detuning * interrogation * m)
    return ph[:, None] * rho * ph.conj()[None, :]


@dataclass(frozen=True)
class OracleSignal:
    """Both signal routes on one detuning grid.

    ``inversion`` is the total population inversion after the second pulse;
    ``effective`` is ``-2 sin(2 Omega tau) Re sum_a e^{i x_a} <sigma_a^+>``
    evaluated just before it.
    """

    inversion: SignalCurve
    effective: SignalCurve


class _Protocol:
    """One evolution at zero detuning, reused for every detuning."""

    def __init__(self, sample: AtomSample, params: RamseyParams, n_max: int = N_MAX):
        liouv = build_liouvillian(sample, params.with_(detuning=0.0), n_max=n_max)
        n = sample.n_atoms
        self.n = n
        self.x = sample.positions[:, 0].copy()
        self.params = params
        rho0 = apply_pulse(ground_state(n), self.x, params.pulse_area, "forward")
        self.rho_t = evolve(rho0, liouv, params.interrogation)
        self.u = pulse_unitary(self.x, params.pulse_area)
        self.sz_total = _z_diagonals(n).sum(axis=0)
        sp = raising_ops(n)
        self.phased_sp = sum(np.exp(1j * xa) * s for xa, s in zip(self.x, sp))

    def state(self, detuning: float) -> np.ndarray:
        return rotate_detuning(self.rho_t, detuning, self.params.interrogation)

    def inversion(self, detuning: float) -> float:
        rho_f = self.u.conj().T @ self.state(detuning) @ self.u
        return float(np.real(np.sum(self.sz_total * np.diag(rho_f))))

    def effective(self, detuning: float) -> float:
        z = np.trace(self.phased_sp @ self.state(detuning))
        return float(-2.0 * self.params.sin2 * np.real(z))

    def coherences(self, detuning: float = 0.0) -> np.ndarray:
        rho = self.state(detuning)
        return np.array([np.trace(s @ rho) for s in raising_ops(self.n)])


def oracle_coherences(sample: AtomSample, params: RamseyParams, n_max: int = N_MAX) -> np.ndarray:
    """``<sigma_a^+>`` just before the second pulse at ``params.detuning``."""
    return _Protocol(sample, params, n_max).coherences(params.detuning)


def ramsey_experiment(sample: AtomSample, params: RamseyParams, detuning, method: str = "rotate",
                      n_max: int = N_MAX) -> OracleSignal:
    """Full pulse, evolution, inverse-pulse sequence on a detuning grid.

    ``method="rotate"`` evolves once and applies the exact free-precession
    rotation per detuning; ``method="direct"`` integrates afresh at each
    detuning. Both give the same result to integrator tolerance.
    """
    grid = np.asarray(detuning, dtype=float)
    n = sample.n_atoms
    if method == "rotate":
        proto = _Protocol(sample, params, n_max)
        inv = [proto.inversion(d) for d in grid]
        eff = [proto.effective(d) for d in grid]
    elif method == "direct":
        if n > n_max:
            raise CapacityError(f"oracle limited to {n_max} atoms (got {n})")
        x = sample.positions[:, 0]
        u = pulse_unitary(x, params.pulse_area)
        rho0 = apply_pulse(ground_state(n), x, params.pulse_area, "forward")
        sz = _z_diagonals(n).sum(axis=0)
        phased = sum(np.exp(1j * xa) * s for xa, s in zip(x, raising_ops(n)))
        inv, eff = [], []
        for d in grid:
            rho_t = evolve(rho0, build_liouvillian(sample, params.with_(detuning=float(d)), n_max),
                           params.interrogation)
            rho_f = u.conj().T @ rho_t @ u
            inv.append(float(np.real(np.sum(sz * np.diag(rho_f)))))
            eff.append(float(-2.0 * params.sin2 * np.real(np.trace(phased @ rho_t))))
    else:
        raise DomainError(f"unknown method {method!r}")
    return OracleSignal(inversion=SignalCurve(grid, np.array(inv), n_atoms=n),
                        effective=SignalCurve(grid, np.array(eff), n_atoms=n))


def oracle_peak_shift(sample: AtomSample, params: RamseyParams, route: str = "effective",
                      n_max: int = N_MAX, samples: int = 64) -> float:
    """Peak shift (units of Gamma) from the exact signal.

    The stationary point nearest zero is searched on one fringe period,
    ``|delta| < pi / t``, with the signal evaluated as a closure.
    """
    t = params.interrogation
    if not t > 0:
        raise DomainError("interrogation time must be positive to define a fringe")
    proto = _Protocol(sample, params, n_max)
    fn = {"effective": proto.effective, "inversion": proto.inversion}.get(route)
    if fn is None:
        raise DomainError(f"route must be 'effective' or 'inversion', got {route!r}")
    span = math.pi / t
    return extract_peak_shift(fn, bracket=(-span, span), samples=samples, n_atoms=sample.n_atoms)
