"""Momentum-space walk protocols: coins, shifts, and the one-step unitary.

A protocol is an ordered tuple of coin and shift elements stored in
*application order* (the first element acts on the state first; the matrix
product multiplies them from the left).  Coins are SU(2) rotations whose
effective angle scales with the step number T.  Shifts are diagonal
momentum-space phase matrices diag(exp(i u.k), exp(i d.k)) with integer
coefficient vectors u, d, so every registered protocol is exactly
2*pi-periodic in each momentum component.

Four-band protocols are built from a two-band base walk by giving the walker
a flavor index.  Because transposition and complex conjugation of a
position-space operator map to transposition/conjugation *at reversed
momentum*, the flavor blocks are assembled as

    transpose_block:  diag(U(k), U(-k)^T)
    conjugate_block:  diag(U(k), U(-k)^*)
    trs_sandwich:     diag(U(k), 1) exp(-i tau_y sigma_y phi/2) diag(1, U(-k)^T)

which keeps the four-band quasi-energy spectrum symmetric under k -> -k.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple, Union

import numpy as np

from .errors import InvalidInputError, UnknownProtocolError
from .su2 import SIGMA_Y, TAU_Y, block_diag2, pauli_exp, tensor

AXIS_Y = (0.0, 1.0, 0.0)
AXIS_NU = (0.0, math.sqrt(0.5), math.sqrt(0.5))

ANGLE_SYMBOLS = ("alpha", "beta", "gamma", "zeta")


@dataclass(frozen=True)
class Coin:
    """SU(2) rotation by T*angle about a fixed axis."""

    symbol: str
    axis: Tuple[float, float, float] = AXIS_Y


@dataclass(frozen=True)
class Shift:
    """diag(exp(i up.k), exp(i down.k)) with integer phase coefficients."""

    up: Tuple[int, ...]
    down: Tuple[int, ...]


Element = Union[Coin, Shift]


def shift_both(dim: int, *axes: int) -> Shift:
    """Spin-conditioned shift moving both components: exp(i (sum_a k_a) sigma_z)."""
    e = [0] * dim
    for a in axes:
        e[a] = 1
    return Shift(up=tuple(e), down=tuple(-x for x in e))


def shift_up_phase(dim: int, axis: int) -> Shift:
    """Half shift diag(exp(i k_axis), 1), i.e. exp(i k/2 (sigma_z + 1))."""
    e = [0] * dim
    e[axis] = 1
    return Shift(up=tuple(e), down=tuple([0] * dim))


def shift_down_phase(dim: int, axis: int) -> Shift:
    """Half shift diag(1, exp(-i k_axis)), i.e. exp(i k/2 (sigma_z - 1))."""
    e = [0] * dim
    e[axis] = -1
    return Shift(up=tuple([0] * dim), down=tuple(e))


@dataclass(frozen=True)
class ProtocolSpec:
    """A registered walk protocol with bound step number and rotation angles."""

    id: str
    dimension: int
    elements: Tuple[Element, ...]
    T: int = 1
    angles: Mapping[str, float] = field(default_factory=dict)
    doubled: Optional[str] = None  # None | transpose_block | conjugate_block | trs_sandwich
    phi: float = math.pi / 2  # only used by trs_sandwich

    @property
    def symbols(self) -> Tuple[str, ...]:
        seen = []
        for el in self.elements:
            if isinstance(el, Coin) and el.symbol not in seen:
                seen.append(el.symbol)
        return tuple(seen)

    @property
    def bands(self) -> int:
        return 4 if self.doubled else 2

    def with_params(self, T: Optional[int] = None, phi: Optional[float] = None,
                    **angles: float) -> "ProtocolSpec":
        new_T = self.T if T is None else T
        if not (isinstance(new_T, (int, np.integer)) and not isinstance(new_T, bool)):
            raise InvalidInputError(f"step number T must be an integer, got {new_T!r}")
        if new_T < 1:
            raise InvalidInputError(f"step number T must be >= 1, got {new_T}")
        known = set(self.symbols)
        for sym in angles:
            if sym not in known:
                raise InvalidInputError(
                    f"protocol {self.id!r} has no angle {sym!r}; it uses {sorted(known)}")
        merged = dict(self.angles)
        merged.update({sym: float(v) for sym, v in angles.items()})
        return replace(self, T=int(new_T), angles=merged,
                       phi=self.phi if phi is None else float(phi))


def _spec(pid, dim, elements, doubled=None):
    spec = ProtocolSpec(id=pid, dimension=dim, elements=tuple(elements), doubled=doubled)
    return replace(spec, angles={sym: 0.0 for sym in spec.symbols})


def _registry() -> dict:
    cy, cn = (lambda s: Coin(s, AXIS_Y)), (lambda s: Coin(s, AXIS_NU))
    sb = shift_both
    su, sd = shift_up_phase, shift_down_phase

    one_d_phs = [sb(1, 0), cy("beta"), su(1, 0), cy("alpha"), sd(1, 0)]
    one_d_chs = [cn("beta"), su(1, 0), cn("alpha"), sd(1, 0)]
    two_d_phs = [cy("beta"), sb(2, 0, 1), cy("alpha"), sb(2, 1), cy("beta"), sb(2, 0)]
    two_d_nosym = [cy("beta"), sb(2, 0, 1), cn("alpha"), sb(2, 0), cy("gamma"), sb(2, 1)]
    three_d_phs = [cy("beta"), sb(3, 0, 1, 2), cy("alpha"), sb(3, 0),
                   cy("gamma"), sb(3, 1), cy("zeta"), sb(3, 2)]
    three_d_chs = [cn("beta"), sb(3, 0), cn("alpha"), sb(3, 1), cn("gamma"), sb(3, 2)]
    three_d_nosym = [cy("beta"), sb(3, 0, 1, 2), cn("alpha"), sb(3, 0),
                     cy("gamma"), sb(3, 1), cy("zeta"), sb(3, 2)]

    entries = [
        _spec("1d-simple", 1, [cy("beta"), sb(1, 0)]),
        _spec("1d-split", 1, [cy("beta"), su(1, 0), cy("alpha"), sd(1, 0)]),
        _spec("1d-phs", 1, one_d_phs),
        _spec("1d-diii", 1, one_d_phs, doubled="transpose_block"),
        _spec("1d-chs", 1, one_d_chs),
        _spec("1d-cii", 1, one_d_chs, doubled="transpose_block"),
        _spec("2d-simple", 2, [cy("beta"), sb(2, 0), sb(2, 1)]),
        _spec("2d-split", 2, [cy("beta"), sb(2, 0), cy("alpha"), sb(2, 1)]),
        _spec("2d-phs", 2, two_d_phs),
        _spec("2d-diii", 2, two_d_phs, doubled="transpose_block"),
        _spec("2d-nosym", 2, two_d_nosym),
        _spec("2d-aii", 2, two_d_nosym, doubled="trs_sandwich"),
        _spec("2d-c", 2, two_d_nosym, doubled="conjugate_block"),
        _spec("3d-simple", 3, [cy("beta"), sb(3, 0), sb(3, 1), sb(3, 2)]),
        _spec("3d-split", 3, [cy("beta"), sb(3, 0), cy("alpha"), sb(3, 1),
                              cy("gamma"), sb(3, 2)]),
        _spec("3d-phs", 3, three_d_phs),
        _spec("3d-diii", 3, three_d_phs, doubled="transpose_block"),
        _spec("3d-chs", 3, three_d_chs),
        _spec("3d-cii", 3, three_d_chs, doubled="transpose_block"),
        _spec("3d-nosym", 3, three_d_nosym),
        _spec("3d-aii", 3, three_d_nosym, doubled="trs_sandwich"),
        _spec("3d-c", 3, three_d_nosym, doubled="conjugate_block"),
    ]
    return {spec.id: spec for spec in entries}


REGISTRY = _registry()
PROTOCOL_IDS = tuple(REGISTRY)


def registry_lookup(pid: str, T: int = 1, angles: Optional[Mapping[str, float]] = None,
                    phi: Optional[float] = None) -> ProtocolSpec:
    """Return the registered protocol with the given step number and angles bound."""
    try:
        template = REGISTRY[pid]
    except KeyError:
        raise UnknownProtocolError(
            f"unknown protocol id {pid!r}; valid ids: {', '.join(PROTOCOL_IDS)}") from None
    return template.with_params(T=T, phi=phi, **dict(angles or {}))


def step_independent_reduction(spec: ProtocolSpec) -> ProtocolSpec:
    """Rewrite the spec to step number 1 (the step-independent-coin walk)."""
    return replace(spec, T=1)


def _as_momenta(spec: ProtocolSpec, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if spec.dimension == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    if k.ndim == 0 or k.shape[-1] != spec.dimension:
        raise InvalidInputError(
            f"momentum must have trailing dimension {spec.dimension} for {spec.id!r},"
            f" got shape {k.shape}")
    return k


def _coin_matrix(el: Coin, spec: ProtocolSpec, k: np.ndarray, angles, T, step_scaled: bool):
    try:
        theta = angles[el.symbol]
    except KeyError:
        raise InvalidInputError(f"angle {el.symbol!r} missing for protocol {spec.id!r}") from None
    theta = np.asarray(theta, dtype=float)
    eff = T * theta if step_scaled else theta
    eff = np.broadcast_to(np.asarray(eff, dtype=float), k.shape[:-1])
    return pauli_exp(el.axis, eff)


def _shift_matrix(el: Shift, k: np.ndarray):
    up = k @ np.asarray(el.up, dtype=float)
    down = k @ np.asarray(el.down, dtype=float)
    out = np.zeros(k.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(1j * up)
    out[..., 1, 1] = np.exp(1j * down)
    return out


def _base_unitary(spec: ProtocolSpec, k: np.ndarray, angles, T, step_scaled: bool):
    U = None
    for el in spec.elements:
        if isinstance(el, Coin):
            M = _coin_matrix(el, spec, k, angles, T, step_scaled)
        else:
            M = _shift_matrix(el, k)
        U = M if U is None else M @ U
    return U


def _sandwich_wall(phi: float) -> np.ndarray:
    """exp(-i tau_y sigma_y phi/2)."""
    g = tensor(TAU_Y, SIGMA_Y)
    return math.cos(phi / 2) * np.eye(4, dtype=complex) - 1j * math.sin(phi / 2) * g


def build_unitary(spec: ProtocolSpec, k, *, angles: Optional[Mapping] = None,
                  T=None, _step_scaled: bool = True) -> np.ndarray:
    """Momentum-space one-step unitary U(k); batched over leading axes of k.

    `angles` values and `T` may be arrays broadcastable against the momentum
    batch shape (useful for random-sample sweeps).  They default to the values
    bound in the spec.
    """
    k = _as_momenta(spec, k)
    ang = dict(spec.angles)
    if angles:
        ang.update(angles)
    T_eff = spec.T if T is None else T
    if np.any(np.asarray(T_eff) < 1):
        raise InvalidInputError("step number T must be >= 1")

    if spec.doubled is None:
        return _base_unitary(spec, k, ang, T_eff, _step_scaled)

    Uk = _base_unitary(spec, k, ang, T_eff, _step_scaled)
    Um = _base_unitary(spec, -k, ang, T_eff, _step_scaled)
    if spec.doubled == "transpose_block":
        return block_diag2(Uk, np.swapaxes(Um, -1, -2))
    if spec.doubled == "conjugate_block":
        return block_diag2(Uk, Um.conj())
    if spec.doubled == "trs_sandwich":
        eye = np.broadcast_to(np.eye(2, dtype=complex), Uk.shape)
        left = block_diag2(Uk, eye)
        right = block_diag2(eye, np.swapaxes(Um, -1, -2))
        return left @ _sandwich_wall(spec.phi) @ right
    raise InvalidInputError(f"unknown doubling {spec.doubled!r}")


def step_independent_unitary(spec: ProtocolSpec, k, *, angles=None) -> np.ndarray:
    """Dedicated evaluation path for step-independent coins (no T scaling)."""
    return build_unitary(step_independent_reduction(spec), k, angles=angles, _step_scaled=False)


# -- serialization ------------------------------------------------------------

def to_document(spec: ProtocolSpec) -> dict:
    doc = {"id": spec.id, "T": spec.T, "angles": {s: spec.angles[s] for s in spec.symbols}}
    if spec.doubled:
        doc["doubled"] = spec.doubled
    if spec.doubled == "trs_sandwich":
        doc["phi"] = spec.phi
    return doc


def from_document(doc: Mapping) -> ProtocolSpec:
    spec = registry_lookup(doc["id"], T=int(doc.get("T", 1)),
                           angles=doc.get("angles") or {}, phi=doc.get("phi"))
    declared = doc.get("doubled")
    if declared is not None and declared != spec.doubled:
        raise InvalidInputError(
            f"document says doubled={declared!r} but registry has {spec.doubled!r} for {spec.id!r}")
    return spec


def dumps(spec: ProtocolSpec) -> str:
    return json.dumps(to_document(spec), sort_keys=True)


def loads(text: str) -> ProtocolSpec:
    return from_document(json.loads(text))
