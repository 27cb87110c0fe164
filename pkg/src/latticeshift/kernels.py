"""Dipole coupling kernels for z-polarised two-level atoms.

All separations are dimensionless (``k0 * r``). For a separation vector
``v`` with length ``v`` and polar angle ``theta`` measured from the z axis:

    f(v) =  3/2 [sin^2(theta) sin(v)/v + (3cos^2(theta) - 1)(sin(v)/v^3 - cos(v)/v^2)]
    g(v) = -3/2 [sin^2(theta) cos(v)/v + (3cos^2(theta) - 1)(cos(v)/v^3 + sin(v)/v^2)]

``f`` sets the cooperative decay between two atoms and ``g`` the coherent
excitation exchange. Coincident atoms are rejected: ``g`` has a genuine
``1/v^3`` pole and upstream code must drop self terms explicitly.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

#: Limit of ``f`` as the separation goes to zero (independent decay).
F_AT_ZERO = 1.0

# Below this length f is evaluated from its Taylor series; the direct
# bracket sin(v)/v^3 - cos(v)/v^2 cancels two O(1/v^2) terms.
_SERIES_CUTOFF = 0.1
_SERIES_TERMS = 8

# sin(v)/v = sum_n (-1)^n v^2n / (2n+1)!
_SINC_COEF = np.array([(-1.0) ** n / math.factorial(2 * n + 1) for n in range(_SERIES_TERMS)])
# sin(v)/v^3 - cos(v)/v^2 = sum_{n>=1} (-1)^(n+1) 2n v^(2n-2) / (2n+1)!
_NEAR_COEF = np.array(
    [(-1.0) ** (n + 1) * 2 * n / math.factorial(2 * n + 1) for n in range(1, _SERIES_TERMS + 1)]
)


def _geometry(v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 3:
        raise DomainError(f"separation vectors must have 3 components, got shape {v.shape}")
    r = np.sqrt(np.einsum("...i,...i->...", v, v))
    if np.any(r == 0.0):
        raise DomainError("coincident atoms: separation |v| = 0 is not allowed")
    cos2 = (v[..., 2] / r) ** 2
    return r, cos2, v[..., 0]


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def _f_from(r, cos2, sin_r, cos_r):
    sin2 = 1.0 - cos2
    quad = 3.0 * cos2 - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        far = sin_r / r
        near = sin_r / r**3 - cos_r / r**2
    small = r < _SERIES_CUTOFF
    if np.any(small):
        x2 = (r[small] if np.ndim(r) else r) ** 2
        far_s = np.polynomial.polynomial.polyval(x2, _SINC_COEF)
        near_s = np.polynomial.polynomial.polyval(x2, _NEAR_COEF)
        if np.ndim(r):
            far = np.array(far, copy=True)
            near = np.array(near, copy=True)
            far[small] = far_s
            near[small] = near_s
        else:
            far, near = far_s, near_s
    return 1.5 * (sin2 * far + quad * near)


def _g_from(r, cos2, sin_r, cos_r):
    sin2 = 1.0 - cos2
    quad = 3.0 * cos2 - 1.0
    return -1.5 * (sin2 * cos_r / r + quad * (cos_r / r**3 + sin_r / r**2))


def f_and_g(v):
    """Return ``(f(v), g(v))`` sharing the trigonometric work.

    ``v`` is a single 3-vector or an array of shape ``(..., 3)``.
    """
    r, cos2, _ = _geometry(v)
    sin_r, cos_r = np.sin(r), np.cos(r)
    return (
        _scalar_or_array(_f_from(r, cos2, sin_r, cos_r)),
        _scalar_or_array(_g_from(r, cos2, sin_r, cos_r)),
    )


def f_kernel(v):
    """Cooperative-decay kernel ``f``; tends to 1 as ``|v| -> 0``."""
    r, cos2, _ = _geometry(v)
    return _scalar_or_array(_f_from(r, cos2, np.sin(r), np.cos(r)))


def g_kernel(v):
    """Coherent-exchange kernel ``g``; diverges like ``1/|v|^3``."""
    r, cos2, _ = _geometry(v)
    return _scalar_or_array(_g_from(r, cos2, np.sin(r), np.cos(r)))


def pair_energy(v):
    """Dimensionless interaction energy ``g cos(v_x) - f sin(v_x)``.

    This is the energy of dipole ``a`` in the field of dipole ``b`` when both
    are driven with the probe phase ``exp(i k x)``; ``v = k (r_a - r_b)``.
    """
    f, g = f_and_g(v)
    vx = np.asarray(v, dtype=float)[..., 0]
    return _scalar_or_array(g * np.cos(vx) - f * np.sin(vx))


def quadrature_coupling(v):
    """Component ``f cos(v_x) + g sin(v_x)`` that drives cooperative decay."""
    f, g = f_and_g(v)
    vx = np.asarray(v, dtype=float)[..., 0]
    return _scalar_or_array(f * np.cos(vx) + g * np.sin(vx))


def energy_and_quadrature(v):
    """Return ``(pair_energy(v), quadrature_coupling(v))`` in one pass."""
    r, cos2, vx = _geometry(v)
    sin_r, cos_r = np.sin(r), np.cos(r)
    f = _f_from(r, cos2, sin_r, cos_r)
    g = _g_from(r, cos2, sin_r, cos_r)
    c, s = np.cos(vx), np.sin(vx)
    return _scalar_or_array(g * c - f * s), _scalar_or_array(f * c + g * s)


def classical_field_z(v):
    """z component of the field radiated by a z dipole, prefactors removed.

    Returns ``exp(i v) [sin^2(theta)/v + (3cos^2(theta) - 1)(1/v^3 - i/v^2)]``.
    With this normalisation ``1.5 * classical_field_z(v) == i f(v) - g(v)``, so

        pair_energy(v)         == -Re[exp(-i v_x) * 1.5 * classical_field_z(v)]
        quadrature_coupling(v) ==  Im[exp(-i v_x) * 1.5 * classical_field_z(v)]
    """
    r, cos2, _ = _geometry(v)
    profile = (1.0 - cos2) / r + (3.0 * cos2 - 1.0) * (1.0 / r**3 - 1j / r**2)
    out = np.exp(1j * r) * profile
    return complex(out) if np.ndim(out) == 0 else out
