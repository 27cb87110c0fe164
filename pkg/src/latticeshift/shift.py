"""Perturbative Ramsey line shift from dipole-dipole interactions.

For atoms at positions ``r_a`` (units of 1/k0) the shift in units of the
single-atom decay rate is

    delta_p = 1/N sum_a sum_{b!=a} U_ab [eps/2 + (Gt/4)(1 + 1/2 sum_{j!=a,b} D_aj)]

with ``U_ab = pair_energy(r_a - r_b)``, ``D_aj = quadrature_coupling(r_a - r_j)``,
``eps = cos(2 Omega tau)`` and ``Gt`` the interrogation time. The first term
is the zeroth-order (pulse-error) shift; the second is first order in ``Gt``.

For a site-centred sphere on an orthorhombic lattice the zeroth-order term
collapses onto lattice vectors, ``(eps/2N) sum_R U(R) N(R)``, where
``U(R) = g(R) cos(R_x)`` and ``N(R)`` counts ordered pairs separated by R.
``N(R)`` is the autocorrelation of the sphere's indicator function; it is even
in every axis, so it is computed on one octant with type-I discrete cosine
transforms and rounded to exact integers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.fft

from .errors import CapacityError, DomainError
from .kernels import energy_and_quadrature, f_and_g
from .lattice import AtomSample, DensityProfile, LatticeGeometry, SphereColumns, sphere_columns

#: Default guard for the O(N^2) pair loop.
BRUTE_MAX_ATOMS = 3000
#: Default guard for the full variance (number of sphere sites).
VARIANCE_MAX_SITES = 5_000_000
#: Default guard for the FFT shift of an arbitrary occupancy (grid points).
SAMPLE_FFT_MAX_POINTS = 40_000_000

_CHUNK = 2_000_000


def fsum(values) -> float:
    """Correctly rounded sum; independent of element order."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


@dataclass(frozen=True)
class RamseyParams:
    """Ramsey sequence parameters in units where the decay rate is 1.

    ``pulse_error`` is ``eps = cos(2 Omega tau)``, ``interrogation`` is
    ``Gamma t``, ``dephasing`` is ``gamma/Gamma`` and ``detuning`` is
    ``delta/Gamma``.
    """

    pulse_error: float = 0.0
    interrogation: float = 0.0
    dephasing: float = 0.0
    detuning: float = 0.0

    def __post_init__(self):
        if not abs(self.pulse_error) <= 1.0:
            raise DomainError(f"|pulse_error| must be <= 1, got {self.pulse_error}")
        if not self.interrogation >= 0.0:
            raise DomainError(f"interrogation time must be >= 0, got {self.interrogation}")
        if not self.dephasing >= 0.0:
            raise DomainError(f"dephasing must be >= 0, got {self.dephasing}")

    @property
    def pulse_area(self) -> float:
        """``Omega tau`` in [0, pi/2] such that ``cos(2 Omega tau) = eps``."""
        return 0.5 * math.acos(self.pulse_error)

    @property
    def sin2(self) -> float:
        """``sin(2 Omega tau)``."""
        return math.sqrt(max(0.0, 1.0 - self.pulse_error**2))

    def with_(self, **changes) -> "RamseyParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ShiftResult:
    """Shift components in units of Gamma; ``total == zeroth + first``."""

    zeroth: float
    first: float
    method: str
    n_atoms: int
    seed: Optional[int] = None
    flags: tuple[str, ...] = ()
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.zeroth + self.first)


def _validity_flags(total: float, params: RamseyParams) -> tuple[str, ...]:
    flags = []
    if params.interrogation > 0.1:
        flags.append("interrogation_outside_perturbative_regime")
    if abs(total * params.interrogation) > 0.3:
        flags.append("phase_outside_perturbative_regime")
    return tuple(flags)


# --------------------------------------------------------------------------
# direct pair sums

def pair_row_sums(positions: np.ndarray):
    """Per-atom sums over the other atoms.

    Returns ``(u, d, ud)`` with ``u[a] = sum_b U_ab``, ``d[a] = sum_b D_ab`` and
    ``ud[a] = sum_b U_ab D_ab`` (all ``b != a``). Row sums are correctly rounded.
    """
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    u = np.zeros(n)
    d = np.zeros(n)
    ud = np.zeros(n)
    if n < 2:
        return u, d, ud
    block = max(1, _CHUNK // n)
    for start in range(0, n, block):
        stop = min(n, start + block)
        v = pos[start:stop, None, :] - pos[None, :, :]
        rows = np.arange(stop - start)
        diag = rows + start
        v[rows, diag] = (1.0, 0.0, 0.0)
        uu, dd = energy_and_quadrature(v)
        uu[rows, diag] = 0.0
        dd[rows, diag] = 0.0
        for k in range(stop - start):
            u[start + k] = fsum(uu[k])
            d[start + k] = fsum(dd[k])
            ud[start + k] = fsum(uu[k] * dd[k])
    return u, d, ud


def shift_brute(sample: AtomSample, params: RamseyParams, max_atoms: int = BRUTE_MAX_ATOMS) -> ShiftResult:
    """Shift from the explicit double sum over atoms, O(N^2).

    The triple sum in the cooperative-decay factor is factored as
    ``sum_{j!=a,b} D_aj = sum_{j!=a} D_aj - D_ab``.
    """
    n = sample.n_atoms
    if n == 0:
        raise DomainError("sample has no atoms")
    if n > max_atoms:
        raise CapacityError(f"shift_brute limited to {max_atoms} atoms (got {n}); "
                            "raise max_atoms or use the restructured lattice sum")
    u, d, ud = pair_row_sums(sample.positions)
    eps, gt = params.pulse_error, params.interrogation
    zeroth = 0.5 * eps * fsum(u) / n
    first = 0.25 * gt * fsum(u * (1.0 + 0.5 * d) - 0.5 * ud) / n
    flags = _validity_flags(zeroth + first, params)
    return ShiftResult(zeroth=zeroth, first=first, method="brute", n_atoms=n, seed=sample.seed, flags=flags)


# --------------------------------------------------------------------------
# lattice-vector restructuring

def _dct_length(n: int) -> int:
    """Half-period K >= 2n + 1 with a fast FFT length 2K."""
    k = 2 * n + 1
    while True:
        L = scipy.fft.next_fast_len(2 * k, real=True)
        if L % 2 == 0:
            return L // 2
        k = (L + 1) // 2


def _octant_indicator(cols: SphereColumns, shape) -> np.ndarray:
    nx, ny, nz = cols.extent
    hw = cols.halfwidth[ny:, nz:]
    ix = np.arange(shape[0])[:, None, None]
    chi = np.zeros(shape)
    chi[:, : ny + 1, : nz + 1] = (ix <= hw[None, :, :]).astype(float)
    return chi


def _octant_weights(shape) -> np.ndarray:
    w = [np.where(np.arange(s) == 0, 1.0, 2.0) for s in shape]
    return w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]


@dataclass(frozen=True)
class PairHistogram:
    """Ordered pair counts ``N(R)`` for a fully filled site-centred sphere.

    ``counts[i, j, k]`` holds ``N(R)`` for ``R = (i, j, k)`` lattice steps; the
    sphere is symmetric under each axis reflection so other octants follow by
    ``N(R) = N(|R_x|, |R_y|, |R_z|)``. ``counts[0, 0, 0]`` is the site count.
    """

    geometry: LatticeGeometry
    counts: np.ndarray
    n_sites: int

    def count(self, R) -> int:
        i, j, k = (abs(int(x)) for x in R)
        s = self.counts.shape
        if i >= s[0] or j >= s[1] or k >= s[2]:
            return 0
        return int(self.counts[i, j, k])

    @property
    def weights(self) -> np.ndarray:
        """Number of lattice vectors represented by each octant entry."""
        return _octant_weights(self.counts.shape)

    def total_pairs(self) -> int:
        """``sum_{R != 0} N(R)``; equals ``N (N - 1)``."""
        w = self.weights.astype(np.int64)
        return int(np.sum(w * self.counts) - self.counts[0, 0, 0])

    def vectors(self) -> np.ndarray:
        """Cartesian lattice vectors of the octant grid, shape ``counts.shape + (3,)``."""
        axes = [np.arange(s) * a for s, a in zip(self.counts.shape, self.geometry.a)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def pair_histogram(geom: LatticeGeometry, profile: DensityProfile) -> PairHistogram:
    """All ``N(R)`` for the fully filled sphere of ``profile``."""
    cols = sphere_columns(geom, profile.radius)
    ext = cols.extent
    K = [_dct_length(n) for n in ext]
    chi = _octant_indicator(cols, [k + 1 for k in K])
    coef = scipy.fft.dctn(chi, type=1)
    auto = scipy.fft.idctn(coef * coef, type=1)
    auto = auto[: 2 * ext[0] + 1, : 2 * ext[1] + 1, : 2 * ext[2] + 1]
    counts = np.rint(auto)
    if np.max(np.abs(auto - counts)) > 1e-3:
        raise ArithmeticError("pair histogram transform lost integer precision")
    counts = counts.astype(np.int64)
    counts[counts < 0] = 0
    return PairHistogram(geometry=geom, counts=counts, n_sites=cols.count)


def pair_count(geom: LatticeGeometry, profile: DensityProfile, R) -> int:
    """Number of sites ``r`` with ``r`` and ``r + R`` both inside the sphere.

    Works column by column: two x-columns hold the index intervals
    ``[-m1, m1]`` and ``[-m2, m2]``; shifting by ``R_x`` their overlap length
    is ``min(m1, m2 - R_x) - max(-m1, -m2 - R_x) + 1``.
    """
    rx, ry, rz = (int(x) for x in R)
    if rx == 0 and ry == 0 and rz == 0:
        raise DomainError("pair_count requires a nonzero lattice vector")
    cols = sphere_columns(geom, profile.radius)
    hw = cols.halfwidth
    _, ny, nz = cols.extent
    sy, sz = hw.shape
    # column (iy, iz) pairs with column (iy + ry, iz + rz)
    y0, y1 = max(0, -ry), min(sy, sy - ry)
    z0, z1 = max(0, -rz), min(sz, sz - rz)
    if y0 >= y1 or z0 >= z1:
        return 0
    m1 = hw[y0:y1, z0:z1]
    m2 = hw[y0 + ry:y1 + ry, z0 + rz:z1 + rz]
    lo = np.maximum(-m1, -m2 - rx)
    hi = np.minimum(m1, m2 - rx)
    ok = (m1 >= 0) & (m2 >= 0)
    return int(np.sum(np.where(ok, np.clip(hi - lo + 1, 0, None), 0)))


def lattice_energy(hist: PairHistogram) -> np.ndarray:
    """``U(R) = g(R) cos(R_x)`` on the octant grid with ``U(0) = 0``."""
    v = hist.vectors()
    v[0, 0, 0] = (1.0, 0.0, 0.0)
    _, g = f_and_g(v)
    u = g * np.cos(v[..., 0])
    u[0, 0, 0] = 0.0
    return u


def _lattice_pair_sum(hist: PairHistogram, values: np.ndarray) -> float:
    """``sum_{R != 0} values(R) N(R)`` over all octants, correctly rounded."""
    terms = hist.weights * values * hist.counts
    terms[0, 0, 0] = 0.0
    return fsum(terms)


def shift_restructured_perfect(geom: LatticeGeometry, profile: DensityProfile, eps: float,
                               hist: Optional[PairHistogram] = None) -> ShiftResult:
    """Zeroth-order shift of a fully filled sphere via the lattice-vector sum.

    ``first`` is 0 and the result carries the ``zeroth_order_only`` flag.
    """
    if profile.filling != 1.0:
        raise DomainError("shift_restructured_perfect needs P = 1; use mean_shift_imperfect")
    if not abs(eps) <= 1.0:
        raise DomainError(f"|eps| must be <= 1, got {eps}")
    hist = hist or pair_histogram(geom, profile)
    x = _lattice_pair_sum(hist, lattice_energy(hist))
    zeroth = 0.5 * eps * x / hist.n_sites
    return ShiftResult(zeroth=zeroth, first=0.0, method="restructured", n_atoms=hist.n_sites,
                       flags=("zeroth_order_only",))


def mean_shift_imperfect(geom: LatticeGeometry, profile: DensityProfile, eps: float,
                         hist: Optional[PairHistogram] = None, method: str = "lattice") -> float:
    """Ensemble-mean zeroth-order shift for independent site filling ``P``.

    ``<delta_p> = (eps / 2<N>) sum_R U(R) <N(R)>`` with ``<N(R)> = P^2 N_sites(R)``
    and ``<N> = P M`` the expected atom count of the M enumerated sites.
    ``method="overlap"`` replaces ``N_sites(R)`` by the analytic overlap volume
    of two spheres divided by the cell volume; it is an approximation.
    """
    P = profile.filling
    hist = hist or pair_histogram(geom, profile)
    u = lattice_energy(hist)
    if method == "lattice":
        x = _lattice_pair_sum(hist, u)
    elif method == "overlap":
        r0 = profile.radius
        d = np.linalg.norm(hist.vectors(), axis=-1)
        vol = np.where(d < 2 * r0, math.pi / 12.0 * (4 * r0 + d) * (2 * r0 - d) ** 2, 0.0)
        terms = hist.weights * u * vol / geom.cell_volume
        terms[0, 0, 0] = 0.0
        x = fsum(terms)
    else:
        raise DomainError(f"unknown method {method!r}")
    return 0.5 * eps * P * x / hist.n_sites


def variance_diffuse(geom: LatticeGeometry, profile: DensityProfile, eps: float,
                     hist: Optional[PairHistogram] = None) -> float:
    """Leading (pair-coincidence) term of the shift variance for ``P << 1``.

    ``(eps / 2<N>)^2 * 2 sum_R U(R)^2 P^2 N_sites(R)``.
    """
    P = profile.filling
    if P > 0.2:
        warnings.warn(f"diffuse variance assumes P << 1 (got P = {P})", stacklevel=2)
    hist = hist or pair_histogram(geom, profile)
    u = lattice_energy(hist)
    s2 = _lattice_pair_sum(hist, u * u)
    mean_n = P * hist.n_sites
    return (0.5 * eps / mean_n) ** 2 * 2.0 * P * P * s2


def site_fields(geom: LatticeGeometry, profile: DensityProfile) -> tuple[np.ndarray, np.ndarray]:
    """``W_i = sum_{j != i} U(r_j - r_i)`` over the fully filled sphere.

    Returned on the site octant together with the multiplicity of each entry
    (0 for points outside the sphere); ``W`` is even in every axis.
    """
    cols = sphere_columns(geom, profile.radius)
    ext = cols.extent
    K = [_dct_length(n) for n in ext]
    shape = [k + 1 for k in K]
    chi = _octant_indicator(cols, shape)
    axes = [np.arange(s) * a for s, a in zip(shape, geom.a)]
    v = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    v[0, 0, 0] = (1.0, 0.0, 0.0)
    _, g = f_and_g(v)
    u = g * np.cos(v[..., 0])
    u[0, 0, 0] = 0.0
    # U beyond 2n in any axis never links two sites; drop it to avoid aliasing
    for ax, n in enumerate(ext):
        sl = [slice(None)] * 3
        sl[ax] = slice(2 * n + 1, None)
        u[tuple(sl)] = 0.0
    w = scipy.fft.idctn(scipy.fft.dctn(chi, type=1) * scipy.fft.dctn(u, type=1), type=1)
    mult = _octant_weights(shape) * chi
    sl = (slice(0, ext[0] + 1), slice(0, ext[1] + 1), slice(0, ext[2] + 1))
    return w[sl], mult[sl]


def variance_full(geom: LatticeGeometry, profile: DensityProfile, eps: float,
                  hist: Optional[PairHistogram] = None, max_sites: int = VARIANCE_MAX_SITES) -> float:
    """Exact variance of the zeroth-order shift under independent filling.

    With ``X = sum_{i != j} U_ij n_i n_j`` and Bernoulli(P) occupations,

        Var X = 2 P^2 (1 - P^2) sum_{i != j} U_ij^2
              + 4 P^3 (1 - P) sum_i sum_{j != i} sum_{l != i, j} U_ij U_il

    which is the lattice-vector double sum over ``R, R'`` with its four
    single-overlap corrections and the double-overlap term, regrouped per site:
    the triple sum equals ``sum_i W_i^2 - sum_{i != j} U_ij^2``. The variance of
    the shift is ``(eps / 2<N>)^2 Var X``.
    """
    P = profile.filling
    hist = hist or pair_histogram(geom, profile)
    if hist.n_sites > max_sites:
        raise CapacityError(f"variance_full limited to {max_sites} sites (got {hist.n_sites}); "
                            "use variance_diffuse for P << 1")
    if P == 1.0:
        return 0.0
    u = lattice_energy(hist)
    s2 = _lattice_pair_sum(hist, u * u)
    w, mult = site_fields(geom, profile)
    sw2 = fsum(mult * w * w)
    var_x = 2.0 * P**2 * (1.0 - P**2) * s2 + 4.0 * P**3 * (1.0 - P) * (sw2 - s2)
    mean_n = P * hist.n_sites
    return (0.5 * eps / mean_n) ** 2 * var_x


def shift_restructured_sample(sample: AtomSample, eps: float,
                              max_points: int = SAMPLE_FFT_MAX_POINTS) -> ShiftResult:
    """Zeroth-order shift of an arbitrary set of occupied lattice sites.

    Uses ``X = sum_i n_i (U * n)_i`` with the convolution done by FFT on a
    zero-padded index box. Requires ``sample.indices`` and ``sample.geometry``.
    """
    if sample.indices is None or sample.geometry is None:
        raise DomainError("shift_restructured_sample needs a lattice sample (indices and geometry)")
    n = sample.n_atoms
    if n == 0:
        raise DomainError("sample has no atoms")
    idx = sample.indices - sample.indices.min(axis=0)
    span = idx.max(axis=0)
    shape = [scipy.fft.next_fast_len(int(2 * s + 1), real=True) for s in span]
    if math.prod(shape) > max_points:
        raise CapacityError(f"FFT grid of {math.prod(shape)} points exceeds {max_points}")
    occ = np.zeros(shape)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = 1.0
    # lattice vectors in FFT wrap-around order
    axes = [np.where(np.arange(s) <= s // 2, np.arange(s), np.arange(s) - s) * a
            for s, a in zip(shape, sample.geometry.a)]
    v = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    v[0, 0, 0] = (1.0, 0.0, 0.0)
    _, g = f_and_g(v)
    u = g * np.cos(v[..., 0])
    u[0, 0, 0] = 0.0
    field_ = scipy.fft.irfftn(scipy.fft.rfftn(occ) * scipy.fft.rfftn(u), s=shape)
    x = fsum(field_[idx[:, 0], idx[:, 1], idx[:, 2]])
    return ShiftResult(zeroth=0.5 * eps * x / n, first=0.0, method="restructured", n_atoms=n,
                       seed=sample.seed, flags=("zeroth_order_only",))
