"""Quasi-energy bands, Bloch decomposition, and group velocities.

Two independent routes are provided and cross-validated in the tests:

* the generic *oracle* route: build U(k), factor out a global phase if the
  determinant is not 1, and read off d0 and d from traces
  (U = d0 I - i d.sigma, E = arccos(d0), n = d/|d|);
* protocol-specific *analytic* forms rho(k), d(k), and dE/dk_i, hand-derived
  from the element products (see scripts/verify_closed_forms.py for the exact
  symbolic verification of every formula).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import GaplessError, InvalidInputError, UnsupportedProtocolError
from .protocols import ProtocolSpec, build_unitary, registry_lookup

EPS_GAP = 1e-9  # |d| at or below this counts as a gap closing

AXES = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


def bloch_split(U):
    """(d0, d, phase) for batched 2x2 unitaries, U = e^{i phase}(d0 I - i d.sigma).

    The global phase (half the determinant's argument) is zero for the
    registered protocols, which are special-unitary by construction.
    """
    U = np.asarray(U, dtype=complex)
    if U.shape[-2:] != (2, 2):
        raise InvalidInputError(f"expected 2x2 unitaries, got shape {U.shape}")
    det = U[..., 0, 0] * U[..., 1, 1] - U[..., 0, 1] * U[..., 1, 0]
    phase = 0.5 * np.angle(det)
    V = U * np.exp(-1j * phase)[..., None, None]
    tr = V[..., 0, 0] + V[..., 1, 1]
    tr_x = V[..., 0, 1] + V[..., 1, 0]
    tr_y = 1j * (V[..., 0, 1] - V[..., 1, 0])
    tr_z = V[..., 0, 0] - V[..., 1, 1]
    d0 = 0.5 * tr.real
    d = np.stack([-0.5 * tr_x.imag, -0.5 * tr_y.imag, -0.5 * tr_z.imag], axis=-1)
    return d0, d, phase


@dataclass
class Bands:
    """Bloch decomposition and + band energy on a batch of momenta."""

    d0: np.ndarray
    d: np.ndarray
    e_plus: np.ndarray
    phase: np.ndarray

    @property
    def gapless(self) -> np.ndarray:
        return np.linalg.norm(self.d, axis=-1) <= EPS_GAP

    @property
    def n(self) -> np.ndarray:
        """Unit Bloch vector; NaN where the gap is closed."""
        norm = np.linalg.norm(self.d, axis=-1)
        safe = np.where(norm > EPS_GAP, norm, np.nan)
        return self.d / safe[..., None]


def bands_from_unitary(U) -> Bands:
    """Oracle decomposition of 2x2 unitaries into (d0, d, e_plus)."""
    d0, d, phase = bloch_split(U)
    e_plus = np.arccos(np.clip(d0, -1.0, 1.0))
    return Bands(d0=d0, d=d, e_plus=e_plus, phase=phase)


def oracle_bands(spec_or_id, k, *, angles=None, T=None) -> Bands:
    """Build the protocol unitary and decompose it (two-band protocols only)."""
    spec = _resolve(spec_or_id, angles, T)
    if spec.bands != 2:
        raise UnsupportedProtocolError(
            f"{spec.id!r} is a four-band protocol; use su2.quasi_energies on build_unitary")
    U = build_unitary(spec, k, angles=angles, T=T)
    return bands_from_unitary(U)


def _resolve(spec_or_id, angles=None, T=None) -> ProtocolSpec:
    if isinstance(spec_or_id, ProtocolSpec):
        return spec_or_id
    bind = {} if (angles is None or _has_arrays(angles)) else dict(angles)
    T_bind = 1 if (T is None or np.ndim(T) > 0) else int(T)
    return registry_lookup(spec_or_id, T=T_bind, angles=bind)


def _has_arrays(angles) -> bool:
    return any(np.ndim(v) > 0 for v in angles.values())


# -- analytic closed forms -----------------------------------------------------
#
# kappa_j = cos(T j / 2), lambda_j = sin(T j / 2) for each rotation angle j.
# Every rho/d/velocity below is the exact trace expansion of the element
# product; scripts/verify_closed_forms.py re-derives each one symbolically
# and is the authority in case of doubt.


def _kl(T, theta):
    half = 0.5 * np.multiply(T, theta)
    return np.cos(half), np.sin(half)


def _ang(angles, spec_or_id, *symbols):
    try:
        return [np.asarray(angles[s], dtype=float) for s in symbols]
    except KeyError as err:
        raise InvalidInputError(f"angle {err.args[0]!r} required for {spec_or_id!r}") from None


def _k_components(k, dim):
    k = np.asarray(k, dtype=float)
    if dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    if k.shape[-1] != dim:
        raise InvalidInputError(f"momentum must have {dim} components, got shape {k.shape}")
    return [k[..., i] for i in range(dim)]


def _rho_1d_phs(angles, T, k):
    (alpha, beta) = _ang(angles, "1d-phs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    (kx,) = _k_components(k, 1)
    return ka * kb * np.cos(2 * kx) - la * lb * np.cos(kx)


def _d_1d_phs(angles, T, k):
    (alpha, beta) = _ang(angles, "1d-phs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    (kx,) = _k_components(k, 1)
    dx = -la * kb * np.sin(kx)
    dy = la * kb * np.cos(kx) + ka * lb
    dz = la * lb * np.sin(kx) - 2 * ka * kb * np.cos(kx) * np.sin(kx)
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_1d_phs(angles, T, k, axis):
    (alpha, beta) = _ang(angles, "1d-phs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    (kx,) = _k_components(k, 1)
    return -2 * ka * kb * np.sin(2 * kx) + la * lb * np.sin(kx)


def _rho_1d_chs(angles, T, k):
    (alpha, beta) = _ang(angles, "1d-chs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    (kx,) = _k_components(k, 1)
    s_ab = la * kb + ka * lb  # sin(T(alpha+beta)/2)
    return (-0.5 * la * lb * (1 + np.cos(kx)) + ka * kb * np.cos(kx)
            + s_ab * np.sin(kx) / np.sqrt(2))


def _d_1d_chs(angles, T, k):
    (alpha, beta) = _ang(angles, "1d-chs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    (kx,) = _k_components(k, 1)
    s_ab = la * kb + ka * lb
    dx = 0.5 * lb * (np.sqrt(2) * ka * np.sin(kx) + la * (1 - np.cos(kx)))
    dy = la * kb / np.sqrt(2) + 0.5 * lb * (la * np.sin(kx) + np.sqrt(2) * ka * np.cos(kx))
    # the -2 kappa kappa term carries sin(kx); dropping it breaks A.n = 0
    dz = 0.5 * (la * lb * np.sin(kx) - 2 * ka * kb * np.sin(kx)) + s_ab * np.cos(kx) / np.sqrt(2)
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_1d_chs(angles, T, k, axis):
    return _d_1d_chs(angles, T, k)[..., 2]


def _rho_2d_phs(angles, T, k):
    (alpha, beta) = _ang(angles, "2d-phs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    cb = np.cos(np.multiply(T, beta))  # the beta coin acts twice per period
    sb = np.sin(np.multiply(T, beta))
    kx, ky = _k_components(k, 2)
    return (ka * (cb * np.cos(kx) * np.cos(kx + 2 * ky) - np.sin(kx) * np.sin(kx + 2 * ky))
            - la * sb * np.cos(kx) ** 2)


def _d_2d_phs(angles, T, k):
    (alpha, beta) = _ang(angles, "2d-phs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kx, ky = _k_components(k, 2)
    dx = 2 * lb * np.sin(kx) * (ka * kb * np.cos(kx + 2 * ky) - la * lb * np.cos(kx))
    dy = (la * kb ** 2 - la * lb ** 2 * np.cos(2 * kx)
          + 2 * ka * kb * lb * np.cos(kx) * np.cos(kx + 2 * ky))
    dz = (la * kb * lb * np.sin(2 * kx)
          - ka * (kb ** 2 * np.sin(2 * (kx + ky)) + lb ** 2 * np.sin(2 * ky)))
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_2d_phs(angles, T, k, axis):
    (alpha, beta) = _ang(angles, "2d-phs", "alpha", "beta")
    ka, la = _kl(T, alpha)
    cb = np.cos(np.multiply(T, beta))
    sb = np.sin(np.multiply(T, beta))
    kx, ky = _k_components(k, 2)
    if axis == 0:
        return -ka * (1 + cb) * np.sin(2 * kx + 2 * ky) + la * sb * np.sin(2 * kx)
    return -2 * ka * (cb * np.cos(kx) * np.sin(kx + 2 * ky) + np.sin(kx) * np.cos(kx + 2 * ky))


def _rho_2d_nosym(angles, T, k):
    (alpha, beta, gamma) = _ang(angles, "2d-nosym", "alpha", "beta", "gamma")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kg, lg = _kl(T, gamma)
    kx, ky = _k_components(k, 2)
    r2 = np.sqrt(2)
    return (r2 * la / 2 * (kb * kg * np.sin(2 * kx + 2 * ky) - lb * kg
                           - kb * lg * np.cos(2 * ky) - lb * lg * np.sin(2 * kx))
            + ka * (kb * kg * np.cos(2 * kx + 2 * ky) - lb * lg * np.cos(2 * kx)))


def _d_2d_nosym(angles, T, k):
    (alpha, beta, gamma) = _ang(angles, "2d-nosym", "alpha", "beta", "gamma")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kg, lg = _kl(T, gamma)
    kx, ky = _k_components(k, 2)
    r2 = np.sqrt(2)
    dx = (r2 * la / 2 * (kb * lg * np.cos(2 * kx) - lb * kg * np.cos(2 * kx + 2 * ky)
                         - lb * lg * np.sin(2 * ky))
          + ka * (lb * kg * np.sin(2 * kx + 2 * ky) - kb * lg * np.sin(2 * kx)))
    dy = (r2 * la / 2 * (kb * kg + kb * lg * np.sin(2 * kx)
                         + lb * kg * np.sin(2 * kx + 2 * ky) - lb * lg * np.cos(2 * ky))
          + ka * (kb * lg * np.cos(2 * kx) + lb * kg * np.cos(2 * kx + 2 * ky)))
    dz = (r2 * la / 2 * (kb * kg * np.cos(2 * kx + 2 * ky) + kb * lg * np.sin(2 * ky)
                         + lb * lg * np.cos(2 * kx))
          - ka * (lb * lg * np.sin(2 * kx) + kb * kg * np.sin(2 * kx + 2 * ky)))
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_2d_nosym(angles, T, k, axis):
    (alpha, beta, gamma) = _ang(angles, "2d-nosym", "alpha", "beta", "gamma")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kg, lg = _kl(T, gamma)
    kx, ky = _k_components(k, 2)
    r2 = np.sqrt(2)
    if axis == 0:
        return (r2 * la * (kb * kg * np.cos(2 * kx + 2 * ky) - lb * lg * np.cos(2 * kx))
                + 2 * ka * (lb * lg * np.sin(2 * kx) - kb * kg * np.sin(2 * kx + 2 * ky)))
    return (r2 * la * kb * (kg * np.cos(2 * kx + 2 * ky) + lg * np.sin(2 * ky))
            - 2 * ka * kb * kg * np.sin(2 * kx + 2 * ky))


def _rho_3d_simple(angles, T, k):
    (beta,) = _ang(angles, "3d-simple", "beta")
    kb, lb = _kl(T, beta)
    K = np.asarray(k, dtype=float).sum(axis=-1)
    return kb * np.cos(K)


def _d_3d_simple(angles, T, k):
    (beta,) = _ang(angles, "3d-simple", "beta")
    kb, lb = _kl(T, beta)
    K = np.asarray(k, dtype=float).sum(axis=-1)
    return np.stack(np.broadcast_arrays(lb * np.sin(K), lb * np.cos(K), -kb * np.sin(K)), axis=-1)


def _drho_3d_simple(angles, T, k, axis):
    (beta,) = _ang(angles, "3d-simple", "beta")
    kb, lb = _kl(T, beta)
    K = np.asarray(k, dtype=float).sum(axis=-1)
    return -kb * np.sin(K)


def _split_coeffs(angles, T):
    (alpha, beta, gamma) = _ang(angles, "3d-split", "alpha", "beta", "gamma")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kg, lg = _kl(T, gamma)
    return ka, la, kb, lb, kg, lg


def _rho_3d_split(angles, T, k):
    ka, la, kb, lb, kg, lg = _split_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    return (ka * kb * kg * np.cos(x + y + z) - kg * la * lb * np.cos(x - y - z)
            - lg * la * kb * np.cos(x - y + z) - lg * ka * lb * np.cos(x + y - z))


def _d_3d_split(angles, T, k):
    ka, la, kb, lb, kg, lg = _split_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    dx = (lb * (ka * kg * np.sin(x + y + z) - la * lg * np.sin(x - y + z))
          - kb * (la * kg * np.sin(x - y - z) + ka * lg * np.sin(x + y - z)))
    dy = (kb * (la * kg * np.cos(x - y - z) + ka * lg * np.cos(x + y - z))
          + lb * (ka * kg * np.cos(x + y + z) - la * lg * np.cos(x - y + z)))
    dz = (lg * (la * kb * np.sin(x - y + z) - ka * lb * np.sin(x + y - z))
          - kg * (la * lb * np.sin(x - y - z) + ka * kb * np.sin(x + y + z)))
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_3d_split(angles, T, k, axis):
    ka, la, kb, lb, kg, lg = _split_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    c1, c2, c3, c4 = ka * kb * kg, kg * la * lb, lg * la * kb, lg * ka * lb
    signs = {0: (1, 1, 1), 1: (-1, -1, 1), 2: (-1, 1, -1)}[axis]
    return (-c1 * np.sin(x + y + z) + signs[0] * c2 * np.sin(x - y - z)
            + signs[1] * c3 * np.sin(x - y + z) + signs[2] * c4 * np.sin(x + y - z))


def _phs3_coeffs(angles, T):
    (alpha, beta, gamma, zeta) = _ang(angles, "3d-phs", "alpha", "beta", "gamma", "zeta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kg, lg = _kl(T, gamma)
    kz, lz = _kl(T, zeta)
    return ka, la, kb, lb, kg, lg, kz, lz


def _rho_3d_phs(angles, T, k):
    ka, la, kb, lb, kg, lg, kz, lz = _phs3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    return (ka * kb * (kg * kz * np.cos(2 * (x + y + z)) - lg * lz * np.cos(2 * (x + z)))
            - ka * lb * (lg * kz * np.cos(2 * x) + kg * lz * np.cos(2 * (x + y)))
            - la * kb * (lg * kz * np.cos(2 * (y + z)) + kg * lz * np.cos(2 * z))
            - la * lb * (kg * kz - lg * lz * np.cos(2 * y)))


def _d_3d_phs(angles, T, k):
    ka, la, kb, lb, kg, lg, kz, lz = _phs3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    dx = (-ka * kb * lg * kz * np.sin(2 * x) - ka * kb * kg * lz * np.sin(2 * (x + y))
          + ka * lb * kg * kz * np.sin(2 * (x + y + z)) - ka * lb * lg * lz * np.sin(2 * (x + z))
          + la * kb * lg * lz * np.sin(2 * y) - la * lb * lg * kz * np.sin(2 * (y + z))
          - la * lb * kg * lz * np.sin(2 * z))
    dy = (la * kb * kg * kz + ka * kb * lg * kz * np.cos(2 * x)
          + ka * kb * kg * lz * np.cos(2 * (x + y)) + ka * lb * kg * kz * np.cos(2 * (x + y + z))
          - ka * lb * lg * lz * np.cos(2 * (x + z)) - la * kb * lg * lz * np.cos(2 * y)
          - la * lb * lg * kz * np.cos(2 * (y + z)) - la * lb * kg * lz * np.cos(2 * z))
    dz = (ka * kb * lg * lz * np.sin(2 * (x + z)) + la * lb * lg * lz * np.sin(2 * y)
          + la * kb * lg * kz * np.sin(2 * (y + z)) + la * kb * kg * lz * np.sin(2 * z)
          - ka * lb * lg * kz * np.sin(2 * x) - ka * lb * kg * lz * np.sin(2 * (x + y))
          - ka * kb * kg * kz * np.sin(2 * (x + y + z)))
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_3d_phs(angles, T, k, axis):
    ka, la, kb, lb, kg, lg, kz, lz = _phs3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    if axis == 0:
        return 2 * ka * (lb * lg * kz * np.sin(2 * x) + lb * kg * lz * np.sin(2 * (x + y))
                         - kb * kg * kz * np.sin(2 * (x + y + z))
                         + kb * lg * lz * np.sin(2 * (x + z)))
    if axis == 1:
        return 2 * (ka * lb * kg * lz * np.sin(2 * (x + y))
                    - ka * kb * kg * kz * np.sin(2 * (x + y + z))
                    - la * lb * lg * lz * np.sin(2 * y)
                    + la * kb * lg * kz * np.sin(2 * (y + z)))
    return 2 * kb * (ka * lg * lz * np.sin(2 * (x + z)) + la * lg * kz * np.sin(2 * (y + z))
                     + la * kg * lz * np.sin(2 * z) - ka * kg * kz * np.sin(2 * (x + y + z)))


def _chs3_coeffs(angles, T):
    (alpha, beta, gamma) = _ang(angles, "3d-chs", "alpha", "beta", "gamma")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kg, lg = _kl(T, gamma)
    return ka, la, kb, lb, kg, lg


def _rho_3d_chs(angles, T, k):
    ka, la, kb, lb, kg, lg = _chs3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    r8 = 2 * np.sqrt(2)
    p1 = 2 * la * kb * kg + 2 * ka * lb * kg + 2 * ka * kb * lg - la * lb * lg
    p2 = 2 * ka * kb * kg - la * lb * kg - la * kb * lg - ka * lb * lg
    return (p1 * np.sin(x + y + z) / r8
            - 0.5 * (la * lb * kg * np.cos(x - y - z) + ka * lb * lg * np.cos(x + y - z)
                     + la * kb * lg * np.cos(x - y + z))
            + 0.5 * p2 * np.cos(x + y + z)
            + (np.sin(x - y - z) - np.sin(x + y - z) - np.sin(x - y + z)) * la * lb * lg / r8)


def _d_3d_chs(angles, T, k):
    ka, la, kb, lb, kg, lg = _chs3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    r8 = 2 * np.sqrt(2)
    lll = la * lb * lg
    dx = ((lll - 2 * ka * kb * lg) * np.sin(x + y - z) / r8
          - (2 * la * kb * kg + lll) * np.sin(x - y - z) / r8
          + (2 * ka * lb * kg - lll) * np.sin(x + y + z) / r8
          - lll * np.sin(x - y + z) / r8
          + (ka * lb * lg + la * kb * lg) * np.cos(x + y - z) / 2
          + (la * lb * kg - la * kb * lg) * np.cos(x - y - z) / 2
          - (la * lb * kg + ka * lb * lg) * np.cos(x + y + z) / 2)
    dy = ((la * kb * lg + ka * lb * lg) * np.sin(x + y - z) / 2
          + (la * lb * kg - la * kb * lg) * np.sin(x - y - z) / 2
          + (la * lb * kg + ka * lb * lg) * np.sin(x + y + z) / 2
          + (2 * ka * lb * kg - lll) * np.cos(x + y + z) / r8
          + (2 * la * kb * kg + lll) * np.cos(x - y - z) / r8
          + (2 * ka * kb * lg - lll) * np.cos(x + y - z) / r8
          - lll * np.cos(x - y + z) / r8)
    dz = (0.5 * (la * kb * lg * np.sin(x - y + z) - la * lb * kg * np.sin(x - y - z)
                 - ka * lb * lg * np.sin(x + y - z))
          + (la * lb * kg + la * kb * lg + ka * lb * lg - 2 * ka * kb * kg)
          * np.sin(x + y + z) / 2
          + (2 * la * kb * kg + 2 * ka * lb * kg + 2 * ka * kb * lg - lll)
          * np.cos(x + y + z) / r8
          + (np.cos(x + y - z) - np.cos(x - y - z) - np.cos(x - y + z)) * lll / r8)
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_3d_chs(angles, T, k, axis):
    ka, la, kb, lb, kg, lg = _chs3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    r8 = 2 * np.sqrt(2)
    lll = la * lb * lg
    p1 = 2 * la * kb * kg + 2 * ka * lb * kg + 2 * ka * kb * lg - lll
    p2 = 2 * ka * kb * kg - la * lb * kg - la * kb * lg - ka * lb * lg
    ca, cb, cc = la * lb * kg, ka * lb * lg, la * kb * lg
    sa, sb, sc = {0: (1, 1, 1), 1: (-1, 1, -1), 2: (-1, -1, 1)}[axis]
    ta, tb, tc = {0: (1, -1, -1), 1: (-1, -1, 1), 2: (-1, 1, -1)}[axis]
    return (p1 * np.cos(x + y + z) / r8 - 0.5 * p2 * np.sin(x + y + z)
            + 0.5 * (sa * ca * np.sin(x - y - z) + sb * cb * np.sin(x + y - z)
                     + sc * cc * np.sin(x - y + z))
            + (ta * np.cos(x - y - z) + tb * np.cos(x + y - z)
               + tc * np.cos(x - y + z)) * lll / r8)


def _nosym3_coeffs(angles, T):
    (alpha, beta, gamma, zeta) = _ang(angles, "3d-nosym", "alpha", "beta", "gamma", "zeta")
    ka, la = _kl(T, alpha)
    kb, lb = _kl(T, beta)
    kg, lg = _kl(T, gamma)
    kz, lz = _kl(T, zeta)
    return ka, la, kb, lb, kg, lg, kz, lz


def _rho_3d_nosym(angles, T, k):
    ka, la, kb, lb, kg, lg, kz, lz = _nosym3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    r2 = np.sqrt(2)
    return (ka * kb * kg * kz * np.cos(2 * (x + y + z))
            + la * kb * kg * kz * np.sin(2 * (x + y + z)) / r2
            + (lz * np.cos(2 * y) - kz * np.sin(2 * x)) * la * lb * lg / r2
            - la * lb * kg * kz / r2
            - ka * lb * lg * kz * np.cos(2 * x)
            - ka * lb * kg * lz * np.cos(2 * (x + y))
            - ka * kb * lg * lz * np.cos(2 * (x + z))
            - la / r2 * (lb * kg * lz * np.sin(2 * (x + y)) + kb * lg * lz * np.sin(2 * (x + z))
                         + kb * lg * kz * np.cos(2 * (y + z)) + kb * kg * lz * np.cos(2 * z)))


def _d_3d_nosym(angles, T, k):
    ka, la, kb, lb, kg, lg, kz, lz = _nosym3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    r2 = np.sqrt(2)
    dx = (ka * lb * kg * kz * np.sin(2 * (x + y + z))
          - la * lb * kg * kz * np.cos(2 * (x + y + z)) / r2
          - ka * kb * kg * lz * np.sin(2 * (x + y))
          + la * lb * lg / r2 * (lz * np.cos(2 * (x + z)) - kz * np.sin(2 * (y + z)))
          - ka * lb * lg * lz * np.sin(2 * (x + z))
          - ka * kb * lg * kz * np.sin(2 * x)
          + la / r2 * (kb * lg * kz * np.cos(2 * x) + kb * lg * lz * np.sin(2 * y)
                       - lb * kg * lz * np.sin(2 * z) + kb * kg * lz * np.cos(2 * (x + y))))
    dy = (la * lb * kg * kz * np.sin(2 * (x + y + z)) / r2
          + ka * lb * kg * kz * np.cos(2 * (x + y + z))
          + la * kb * kg * kz / r2
          + ka * kb * lg * kz * np.cos(2 * x)
          - la * lb * lg / r2 * (lz * np.sin(2 * (x + z)) + kz * np.cos(2 * (y + z)))
          + ka * kb * kg * lz * np.cos(2 * (x + y))
          - ka * lb * lg * lz * np.cos(2 * (x + z))
          + la / r2 * (kb * kg * lz * np.sin(2 * (x + y)) + kb * lg * kz * np.sin(2 * x)
                       - kb * lg * lz * np.cos(2 * y) - lb * kg * lz * np.cos(2 * z)))
    dz = (la * kb * kg * kz * np.cos(2 * (x + y + z)) / r2
          - ka * kb * kg * kz * np.sin(2 * (x + y + z))
          + (kz * np.cos(2 * x) + lz * np.sin(2 * y)) * la * lb * lg / r2
          + ka * kb * lg * lz * np.sin(2 * (x + z))
          - ka * lb * lg * kz * np.sin(2 * x)
          - ka * lb * kg * lz * np.sin(2 * (x + y))
          + la / r2 * (lb * kg * lz * np.cos(2 * (x + y)) - kb * lg * lz * np.cos(2 * (x + z))
                       + kb * lg * kz * np.sin(2 * (y + z)) + kb * kg * lz * np.sin(2 * z)))
    return np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1)


def _drho_3d_nosym(angles, T, k, axis):
    ka, la, kb, lb, kg, lg, kz, lz = _nosym3_coeffs(angles, T)
    x, y, z = _k_components(k, 3)
    r2 = np.sqrt(2)
    common = (-2 * ka * kb * kg * kz * np.sin(2 * (x + y + z))
              + r2 * la * kb * kg * kz * np.cos(2 * (x + y + z)))
    if axis == 0:
        return (common
                - r2 * la * lb * lg * kz * np.cos(2 * x)
                + 2 * ka * lb * lg * kz * np.sin(2 * x)
                + 2 * ka * lb * kg * lz * np.sin(2 * (x + y))
                + 2 * ka * kb * lg * lz * np.sin(2 * (x + z))
                - r2 * la * (lb * kg * lz * np.cos(2 * (x + y))
                             + kb * lg * lz * np.cos(2 * (x + z))))
    if axis == 1:
        return (common
                - r2 * la * lb * lg * lz * np.sin(2 * y)
                + 2 * ka * lb * kg * lz * np.sin(2 * (x + y))
                - r2 * la * lb * kg * lz * np.cos(2 * (x + y))
                + r2 * la * kb * lg * kz * np.sin(2 * (y + z)))
    return (common
            + 2 * ka * kb * lg * lz * np.sin(2 * (x + z))
            - r2 * la * kb * lg * lz * np.cos(2 * (x + z))
            + r2 * la * kb * lg * kz * np.sin(2 * (y + z))
            + r2 * la * kb * kg * lz * np.sin(2 * z))


CLOSED_FORM_IDS = ("1d-phs", "1d-chs", "2d-phs", "2d-nosym", "3d-simple",
                   "3d-split", "3d-phs", "3d-chs", "3d-nosym")

_RHO = {"1d-phs": _rho_1d_phs, "1d-chs": _rho_1d_chs, "2d-phs": _rho_2d_phs,
        "2d-nosym": _rho_2d_nosym, "3d-simple": _rho_3d_simple,
        "3d-split": _rho_3d_split, "3d-phs": _rho_3d_phs,
        "3d-chs": _rho_3d_chs, "3d-nosym": _rho_3d_nosym}
_D = {"1d-phs": _d_1d_phs, "1d-chs": _d_1d_chs, "2d-phs": _d_2d_phs,
      "2d-nosym": _d_2d_nosym, "3d-simple": _d_3d_simple,
      "3d-split": _d_3d_split, "3d-phs": _d_3d_phs,
      "3d-chs": _d_3d_chs, "3d-nosym": _d_3d_nosym}
_DRHO = {"1d-phs": _drho_1d_phs, "1d-chs": _drho_1d_chs, "2d-phs": _drho_2d_phs,
         "2d-nosym": _drho_2d_nosym, "3d-simple": _drho_3d_simple,
         "3d-split": _drho_3d_split, "3d-phs": _drho_3d_phs,
         "3d-chs": _drho_3d_chs, "3d-nosym": _drho_3d_nosym}


def _closed(table, pid):
    try:
        return table[pid]
    except KeyError:
        raise UnsupportedProtocolError(
            f"no analytic form registered for {pid!r}; available: {sorted(_RHO)}") from None


def rho_closed_form(pid: str, angles: Mapping, T, k):
    """Analytic cos(E_+) for the registered two-band protocols."""
    return _closed(_RHO, pid)(angles, T, np.asarray(k, dtype=float))


def d_closed_form(pid: str, angles: Mapping, T, k):
    """Analytic Bloch vector d (the +-band convention of the oracle route)."""
    return _closed(_D, pid)(angles, T, np.asarray(k, dtype=float))


def n_closed_form(pid: str, angles: Mapping, T, k):
    """Normalized analytic Bloch vector; raises GaplessError at closings."""
    d = d_closed_form(pid, angles, T, k)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm <= EPS_GAP):
        raise GaplessError(f"gap closed for {pid!r}: |d| <= {EPS_GAP}")
    return d / norm[..., None]


def drho_closed_form(pid: str, angles: Mapping, T, k, axis):
    ax = AXES.get(axis)
    if ax is None:
        raise InvalidInputError(f"unknown momentum axis {axis!r}")
    return _closed(_DRHO, pid)(angles, T, np.asarray(k, dtype=float), ax)


def group_velocity_closed(pid: str, angles: Mapping, T, k, axis):
    """Analytic dE_+/dk_axis = -(d rho/d k_axis)/sqrt(1 - rho^2)."""
    rho = rho_closed_form(pid, angles, T, k)
    s2 = 1.0 - rho ** 2
    if np.any(s2 <= EPS_GAP ** 2):
        raise GaplessError(f"group velocity ill-defined for {pid!r}: bands touch")
    return -drho_closed_form(pid, angles, T, k, axis) / np.sqrt(s2)


def group_velocity_numeric(spec_or_id, k, axis, *, angles=None, T=None, h: float = 1e-5):
    """Central finite difference of the + band along a momentum axis."""
    spec = _resolve(spec_or_id, angles, T)
    ax = AXES.get(axis)
    if ax is None or ax >= spec.dimension:
        raise InvalidInputError(f"axis {axis!r} invalid for a {spec.dimension}d protocol")
    k = np.asarray(k, dtype=float)
    if spec.dimension == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    step = np.zeros(spec.dimension)
    step[ax] = h
    plus = oracle_bands(spec, k + step, angles=angles, T=T)
    minus = oracle_bands(spec, k - step, angles=angles, T=T)
    if np.any(plus.gapless) or np.any(minus.gapless):
        raise GaplessError("finite-difference stencil touches a gap closing")
    return (plus.e_plus - minus.e_plus) / (2 * h)


def match_global_sign(d_ref, d_other):
    """Best global sign s minimizing ||d_ref - s*d_other||; returns (s, max_err)."""
    d_ref = np.asarray(d_ref, float)
    d_other = np.asarray(d_other, float)
    err_plus = np.abs(d_ref - d_other).max()
    err_minus = np.abs(d_ref + d_other).max()
    return (1, err_plus) if err_plus <= err_minus else (-1, err_minus)
