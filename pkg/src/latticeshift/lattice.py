"""Six-beam tetragonal lattice, spherical samples and random occupancy.

Lengths are in units of ``1/k0`` (so the probe wavevector is 1) and the
trapping wavevector is ``k_L = 1/kappa`` with ``kappa = k0/k_L``. Four beams
in the x-y plane at angles ``+-theta`` from the y axis plus a counter-
propagating pair along z give lattice constants

    a_x = pi / (k_L sin(theta)),  a_y = pi / (k_L cos(theta)),  a_z = pi / k_L

Spherical samples are centred on a lattice site and sites are always
returned in lexicographic order of their integer indices ``(ix, iy, iz)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError

#: Magic-wavelength ratio k0/k_L for 87Sr.
SR87_KAPPA = 1.07

#: Documented constant for the surface term in the sphere site count,
#: ``|M - 4 pi r0^3 / (3 V)| <= SITE_COUNT_SLACK * M**(2/3)``.
SITE_COUNT_SLACK = 3.0


@dataclass(frozen=True)
class LatticeGeometry:
    """Orthorhombic lattice with constants ``a`` (units of 1/k0).

    ``theta`` and ``kappa`` are set when the geometry comes from
    :func:`build_six_beam_lattice`; other orthorhombic lattices can be built
    with :meth:`from_constants` for testing and for explicit-position studies.
    """

    a: tuple[float, float, float]
    theta: Optional[float] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        a = tuple(float(x) for x in self.a)
        if len(a) != 3 or not all(math.isfinite(x) and x > 0 for x in a):
            raise DomainError(f"lattice constants must be three finite positive numbers, got {self.a}")
        object.__setattr__(self, "a", a)

    @classmethod
    def from_constants(cls, ax: float, ay: float, az: float) -> "LatticeGeometry":
        return cls(a=(ax, ay, az))

    @property
    def reciprocal(self) -> tuple[float, float, float]:
        """Primitive reciprocal lengths ``G_i = 2 pi / a_i`` (units of k0)."""
        return tuple(2.0 * math.pi / x for x in self.a)

    @property
    def cell_volume(self) -> float:
        ax, ay, az = self.a
        return ax * ay * az

    def positions(self, indices) -> np.ndarray:
        """Cartesian positions of integer lattice indices, shape ``(M, 3)``."""
        return np.asarray(indices, dtype=float) * np.asarray(self.a)


def build_six_beam_lattice(theta: float, kappa: float = SR87_KAPPA) -> LatticeGeometry:
    """Lattice formed by six beams at half-angle ``theta`` (radians).

    >>> g = build_six_beam_lattice(math.pi / 4, 1.0)
    >>> round(g.a[0] / math.pi, 12), round(g.a[2] / math.pi, 12)
    (1.414213562373, 1.0)
    """
    if not theta > 0.0:
        raise DomainError(f"theta must be > 0 (lower bound), got {theta}")
    if not theta < math.pi / 2:
        raise DomainError(f"theta must be < pi/2 (upper bound), got {theta}")
    if not kappa > 0.0 or not math.isfinite(kappa):
        raise DomainError(f"kappa must be positive and finite, got {kappa}")
    # k_L = 1/kappa in units of k0
    a = (math.pi * kappa / math.sin(theta), math.pi * kappa / math.cos(theta), math.pi * kappa)
    return LatticeGeometry(a=a, theta=float(theta), kappa=float(kappa))


@dataclass(frozen=True)
class DensityProfile:
    """Uniform sphere of filling ``P`` holding ``mean_atoms`` atoms on average.

    The radius satisfies ``r0 = (3 <N> V / (4 pi P))**(1/3)``. Use
    :meth:`for_geometry` or :meth:`from_radius` rather than passing the
    radius by hand.
    """

    mean_atoms: float
    filling: float
    cell_volume: float
    radius: float

    def __post_init__(self):
        if not 0.0 < self.filling <= 1.0:
            raise DomainError(f"filling P must satisfy 0 < P <= 1, got {self.filling}")
        if not self.mean_atoms > 0 or not self.cell_volume > 0:
            raise DomainError("mean_atoms and cell_volume must be positive")
        expected = _radius(self.mean_atoms, self.cell_volume, self.filling)
        if abs(self.radius - expected) > 1e-12 * expected:
            raise DomainError(f"radius {self.radius} inconsistent with <N>, V, P (expected {expected})")

    @classmethod
    def for_geometry(cls, geom: LatticeGeometry, mean_atoms: float, filling: float = 1.0) -> "DensityProfile":
        v = geom.cell_volume
        if not 0.0 < filling <= 1.0:
            raise DomainError(f"filling P must satisfy 0 < P <= 1, got {filling}")
        return cls(mean_atoms=float(mean_atoms), filling=float(filling), cell_volume=v,
                   radius=_radius(mean_atoms, v, filling))

    @classmethod
    def from_radius(cls, radius: float, cell_volume: float, filling: float = 1.0) -> "DensityProfile":
        if not 0.0 < filling <= 1.0:
            raise DomainError(f"filling P must satisfy 0 < P <= 1, got {filling}")
        mean_atoms = 4.0 * math.pi * radius**3 * filling / (3.0 * cell_volume)
        return cls(mean_atoms=mean_atoms, filling=float(filling), cell_volume=float(cell_volume),
                   radius=_radius(mean_atoms, cell_volume, filling))


def _radius(mean_atoms: float, cell_volume: float, filling: float) -> float:
    return (3.0 * mean_atoms * cell_volume / (4.0 * math.pi * filling)) ** (1.0 / 3.0)


def _inside(geom: LatticeGeometry, ix, iy, iz, radius: float):
    # single membership predicate shared by every enumeration path
    ax, ay, az = geom.a
    return (ix * ax) ** 2 + (iy * ay) ** 2 + (iz * az) ** 2 < radius**2


@dataclass(frozen=True)
class SphereColumns:
    """Sphere sites grouped into x-columns.

    Column ``(iy, iz)`` holds the sites ``-m <= ix <= m`` with
    ``m = halfwidth[iy + ny, iz + nz]``; empty columns have ``m = -1``.
    """

    geometry: LatticeGeometry
    radius: float
    extent: tuple[int, int, int]
    halfwidth: np.ndarray

    @property
    def count(self) -> int:
        return int(np.sum(2 * self.halfwidth + 1, where=self.halfwidth >= 0))


def sphere_columns(geom: LatticeGeometry, radius: float) -> SphereColumns:
    ax, ay, az = geom.a
    nx, ny, nz = (int(math.floor(radius / x)) + 1 for x in (ax, ay, az))
    iy = np.arange(-ny, ny + 1)[:, None]
    iz = np.arange(-nz, nz + 1)[None, :]
    rem = radius**2 - (iy * ay) ** 2 - (iz * az) ** 2
    m = np.where(rem > 0, np.floor(np.sqrt(np.clip(rem, 0, None)) / ax), -1).astype(np.int64)
    # round-off repair against the canonical predicate
    for _ in range(2):
        over = (m >= 0) & ~_inside(geom, m, iy, iz, radius)
        m = np.where(over, m - 1, m)
        under = _inside(geom, m + 1, iy, iz, radius)
        m = np.where(under, m + 1, m)
    m = np.maximum(m, -1)
    # crop empty outer rows so that extent is tight
    occ_y = np.flatnonzero((m >= 0).any(axis=1))
    occ_z = np.flatnonzero((m >= 0).any(axis=0))
    ty = ny - int(abs(occ_y - ny).max()) if occ_y.size else ny
    tz = nz - int(abs(occ_z - nz).max()) if occ_z.size else nz
    m = m[ty:m.shape[0] - ty, tz:m.shape[1] - tz]
    ny, nz = ny - ty, nz - tz
    nx = max(int(m.max()), 0)
    return SphereColumns(geometry=geom, radius=float(radius), extent=(nx, ny, nz), halfwidth=m)


@dataclass(frozen=True)
class Sites:
    """Lattice sites inside a sphere in canonical order."""

    geometry: LatticeGeometry
    indices: np.ndarray
    radius: float

    @property
    def positions(self) -> np.ndarray:
        return self.geometry.positions(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def enumerate_sites(geom: LatticeGeometry, profile: DensityProfile) -> Sites:
    """All lattice points with ``|r| < r0`` around a site at the origin."""
    cols = sphere_columns(geom, profile.radius)
    nx, ny, nz = cols.extent
    ix = np.arange(-nx, nx + 1)[:, None, None]
    mask = np.abs(ix) <= cols.halfwidth[None, :, :]
    idx = np.argwhere(mask)
    idx -= np.array([nx, ny, nz])
    return Sites(geometry=geom, indices=idx.astype(np.int64), radius=profile.radius)


@dataclass(frozen=True)
class AtomSample:
    """Occupied positions for one realisation (units of 1/k0).

    ``indices`` and ``geometry`` are present when the sample was drawn from a
    lattice; ``seed`` is ``None`` for deterministic (fully filled) samples.
    """

    positions: np.ndarray
    seed: Optional[int] = None
    indices: Optional[np.ndarray] = None
    geometry: Optional[LatticeGeometry] = field(default=None, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise DomainError(f"positions must have shape (N, 3), got {pos.shape}")
        object.__setattr__(self, "positions", pos)

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    @classmethod
    def from_sites(cls, sites: Sites) -> "AtomSample":
        return cls(positions=sites.positions, indices=sites.indices, geometry=sites.geometry)


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Counter-based Philox4x64 generator; the documented RNG of this package."""
    return np.random.Generator(np.random.Philox(seed))


def sample_occupancy(sites: Sites, filling: float, seed: Optional[int]) -> AtomSample:
    """Keep each site independently with probability ``filling``.

    Site ``i`` (canonical order) is kept when the ``i``-th draw of
    ``Generator(Philox(seed)).random(M)`` is below ``filling``.
    """
    if not 0.0 < filling <= 1.0:
        raise DomainError(f"filling P must satisfy 0 < P <= 1, got {filling}")
    if filling == 1.0:
        keep = np.ones(len(sites), dtype=bool)
    else:
        keep = make_rng(seed).random(len(sites)) < filling
    idx = sites.indices[keep]
    return AtomSample(positions=sites.geometry.positions(idx), seed=seed, indices=idx,
                      geometry=sites.geometry)


def write_sites_csv(path, indices: np.ndarray, geom: LatticeGeometry) -> None:
    """Write ``ix,iy,iz,x,y,z`` rows with 17 significant digits."""
    pos = geom.positions(indices)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ix", "iy", "iz", "x", "y", "z"])
        for i, r in zip(indices, pos):
            w.writerow([int(i[0]), int(i[1]), int(i[2])] + [f"{x:.17g}" for x in r])


def read_sites_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_sites_csv`; returns ``(indices, positions)``."""
    rows = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    return rows[:, :3].astype(np.int64), rows[:, 3:]
