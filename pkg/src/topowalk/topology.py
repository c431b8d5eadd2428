"""Gap closings, boundary-state taxonomy, winding and Chern numbers.

Conventions
-----------
* The gap function is g(k) = min(E_+, pi - E_+): bands touch only at
  quasi-energy 0 or pi.
* Dirac-vs-arc discrimination follows the band shape at the closing: a
  closing is a Dirac cone when, along every momentum axis, the gap grows
  linearly (slope >= DIRAC_MIN_SLOPE) and a pure linear fit over the
  FIT_WINDOW leaves a relative RMS residual <= DIRAC_RESIDUAL_REL.  Exact
  cone configurations sit at ~1e-10 relative residual while generic
  (arc-type) touches sit at ~1e-5, so the 1e-6 threshold separates them by
  orders of magnitude on the bundled fixtures.
* Winding numbers use the right-handed frame (e1, e2, A) built on the chiral
  axis A; counterclockwise in (e1, e2) counts +1.
* Chern numbers are the degree of n_hat: T^2 -> S^2 summed from signed
  plaquette solid angles over the protocol's *minimal* momentum torus (many
  registered walks are exactly pi-periodic per axis; over the full
  [-pi, pi)^2 square the degree would simply repeat).  The orientation
  constant is fixed so the two-band 2D particle-hole walk at
  T=2, alpha=pi/3, beta=pi/4 carries Chern number +1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BoundaryStateError, InvalidInputError
from .protocols import ProtocolSpec, Shift, build_unitary, registry_lookup
from .spectrum import EPS_GAP, bands_from_unitary
from .symmetry import chiral_axis

EPS_FLAT = 1e-8
FIT_WINDOW = 0.05
DIRAC_MIN_SLOPE = 0.1
DIRAC_RESIDUAL_REL = 1e-6
MERGE_TOL = 1e-6
QUANT_TOL = 0.02
HIGH_SYMMETRY_TOL = 1e-6
CHERN_ORIENTATION = -1.0  # fixes the reference 2D PHS fixture to +1


@dataclass(frozen=True)
class GapPoint:
    k: Tuple[float, ...]
    quasi_energy: float  # 0.0 or pi
    residual: float  # |d| at the refined point


@dataclass
class BoundaryClassification:
    kind: str  # dirac_type_one | dirac_type_two | fermi_arc | flat_band | unclassified
    evidence: Dict = field(default_factory=dict)


@dataclass(frozen=True)
class WindingResult:
    w: int
    raw: float


@dataclass(frozen=True)
class ChernResult:
    c: int
    raw: float


def _resolve(spec_or_id, angles=None, T=None) -> ProtocolSpec:
    if isinstance(spec_or_id, ProtocolSpec):
        spec = spec_or_id
    else:
        spec = registry_lookup(spec_or_id)
    if angles or T is not None:
        spec = spec.with_params(T=T, **dict(angles or {}))
    return spec


def gap_function(spec: ProtocolSpec):
    """g(k) = min(E_+, pi - E_+), vectorized over momenta."""

    def g(k):
        b = bands_from_unitary(build_unitary(spec, k))
        return np.minimum(b.e_plus, np.pi - b.e_plus)

    return g


def _d_norm(spec: ProtocolSpec, k) -> np.ndarray:
    b = bands_from_unitary(build_unitary(spec, k))
    return np.linalg.norm(b.d, axis=-1)


def _batched_golden_axis(g, pts: np.ndarray, axis: int, width: float,
                         iters: int = 64) -> np.ndarray:
    """Golden-section descent along one axis for a whole batch of points."""
    invphi = (math.sqrt(5) - 1) / 2
    a = pts[:, axis] - width
    b = pts[:, axis] + width

    def eval_at(x):
        q = pts.copy()
        q[:, axis] = x
        return g(q)

    for _ in range(iters):
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        left = eval_at(c) < eval_at(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    out = pts.copy()
    out[:, axis] = 0.5 * (a + b)
    return out


def find_gap_closings(spec_or_id, *, angles=None, T=None, grid_n: int = 64,
                      refine_tol: float = EPS_GAP) -> List[GapPoint]:
    """Locate band touchings: coarse scan for local minima of |d|, then
    batched per-axis golden-section coordinate descent; duplicates merged.

    |d| = sin(E_+) vanishes exactly where the bands touch (E in {0, pi}) and,
    unlike min(E, pi - E), it stays fully resolved near a closing: arccos
    loses half the significant digits there.
    """
    spec = _resolve(spec_or_id, angles, T)
    if grid_n < 32:
        raise InvalidInputError("grid_n must be >= 32 per axis")
    dim = spec.dimension
    axes = [np.linspace(-np.pi, np.pi, grid_n, endpoint=False)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    k = np.stack([m.ravel() for m in mesh], axis=-1)

    def g(pts):
        return _d_norm(spec, pts)

    vals = g(k).reshape([grid_n] * dim)

    local_min = np.ones_like(vals, dtype=bool)
    for ax in range(dim):
        local_min &= vals <= np.roll(vals, 1, axis=ax)
        local_min &= vals <= np.roll(vals, -1, axis=ax)
    # only minima plausibly refinable to a closing: a touching cone of slope
    # <= 2 per axis stays below ~2*sqrt(dim)*cell within one grid cell
    cell = 2 * np.pi / grid_n
    cand = np.argwhere(local_min & (vals < 2 * np.sqrt(dim) * cell))

    points = []
    if cand.size:
        pts = -np.pi + cand.astype(float) * cell
        for _ in range(8):  # coordinate-descent passes (clean cones need 2)
            for ax in range(dim):
                pts = _batched_golden_axis(g, pts, ax, cell)
        resid = _d_norm(spec, pts)
        e_plus = bands_from_unitary(build_unitary(spec, pts)).e_plus
        for i in range(pts.shape[0]):
            if resid[i] <= refine_tol:
                qe = 0.0 if e_plus[i] < np.pi / 2 else np.pi
                pt_wrapped = tuple(((x + np.pi) % (2 * np.pi)) - np.pi for x in pts[i])
                points.append(GapPoint(k=pt_wrapped, quasi_energy=qe,
                                       residual=float(resid[i])))

    merged: List[GapPoint] = []
    for p in sorted(points, key=lambda p: (p.quasi_energy,) + p.k):
        dup = False
        for q in merged:
            delta = [abs((a - b + np.pi) % (2 * np.pi) - np.pi) for a, b in zip(p.k, q.k)]
            if max(delta) < MERGE_TOL and p.quasi_energy == q.quasi_energy:
                dup = True
                break
        if not dup:
            merged.append(p)
    return merged


def _band_variation(spec: ProtocolSpec, grid_n: int = 64) -> float:
    dim = spec.dimension
    axes = [np.linspace(-np.pi, np.pi, grid_n, endpoint=False)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    k = np.stack([m.ravel() for m in mesh], axis=-1)
    e = bands_from_unitary(build_unitary(spec, k)).e_plus
    return float(e.max() - e.min())


def _fit_closing(spec: ProtocolSpec, k0: np.ndarray, axis: int):
    """One-sided linear fits of the gap along +-axis: (slope, rel_residual)."""
    g = gap_function(spec)
    s = np.linspace(FIT_WINDOW / 20, FIT_WINDOW, 20)
    out = []
    for sign in (1.0, -1.0):
        pts = np.tile(k0, (s.size, 1))
        pts[:, axis] += sign * s
        gp = g(pts)
        slope = float((gp @ s) / (s @ s))
        scale = max(abs(slope) * FIT_WINDOW, 1e-300)
        resid = float(np.sqrt(np.mean((gp - slope * s) ** 2)) / scale)
        out.append((abs(slope), resid))
    return out


def _is_high_symmetry_set(momenta: Sequence[Tuple[float, ...]], targets) -> bool:
    for kpt in momenta:
        ok = any(
            all(abs((x - t + np.pi) % (2 * np.pi) - np.pi) < HIGH_SYMMETRY_TOL
                for x, t in zip(kpt, tgt))
            for tgt in targets)
        if not ok:
            return False
    return True


def classify_boundary(spec_or_id, *, angles=None, T=None,
                      gap_points: Optional[List[GapPoint]] = None,
                      grid_n: int = 64) -> List[BoundaryClassification]:
    """Classify the gapless configuration at fixed parameters.

    Returns a flat-band record if the + band is constant over the BZ;
    otherwise one record per gap closing.  1D Dirac closings are subtyped by
    the complete gapless set: {0, +-pi} -> type one, including +-pi/2 ->
    type two.
    """
    spec = _resolve(spec_or_id, angles, T)
    variation = _band_variation(spec, grid_n=grid_n)
    if variation <= EPS_FLAT:
        e0 = float(bands_from_unitary(build_unitary(
            spec, np.zeros((1, spec.dimension)))).e_plus[0])
        return [BoundaryClassification(kind="flat_band",
                                       evidence={"band_variation": variation,
                                                 "energy": e0})]
    if gap_points is None:
        gap_points = find_gap_closings(spec, grid_n=grid_n)
    if not gap_points:
        return []

    results = []
    gapless_set = [p.k for p in gap_points]
    for p in gap_points:
        k0 = np.asarray(p.k, dtype=float)
        fits = {ax: _fit_closing(spec, k0, ax) for ax in range(spec.dimension)}
        slopes = {ax: [f[0] for f in fits[ax]] for ax in fits}
        resids = {ax: [f[1] for f in fits[ax]] for ax in fits}
        dirac = all(
            min(slopes[ax]) >= DIRAC_MIN_SLOPE and max(resids[ax]) <= DIRAC_RESIDUAL_REL
            for ax in fits)
        evidence = {"k": p.k, "quasi_energy": p.quasi_energy,
                    "slopes": slopes, "linear_fit_rel_residual": resids,
                    "gapless_set": gapless_set}
        if dirac:
            if spec.dimension == 1:
                type_one_set = [(0.0,), (np.pi,)]
                type_two_set = type_one_set + [(np.pi / 2,), (-np.pi / 2,)]
                if _is_high_symmetry_set(gapless_set, type_one_set):
                    kind = "dirac_type_one"
                elif _is_high_symmetry_set(gapless_set, type_two_set):
                    kind = "dirac_type_two"
                else:
                    kind = "unclassified"
            else:
                kind = "dirac_type_one"
        else:
            max_slope = max(max(slopes[ax]) for ax in slopes)
            kind = "fermi_arc" if max_slope > 0 else "unclassified"
        results.append(BoundaryClassification(kind=kind, evidence=evidence))
    return results


def momentum_period(spec: ProtocolSpec, axis: int) -> float:
    """Minimal p with U(k + p e_axis) = U(k) exactly: pi or 2 pi.

    A shift element contributes a global sign under k -> k + pi e_axis iff its
    two integer phases match mod 2; the walk is pi-periodic iff every element
    does and the signs cancel.
    """
    total = 0
    for el in spec.elements:
        if not isinstance(el, Shift):
            continue
        u, d = el.up[axis], el.down[axis]
        if (u - d) % 2 != 0:
            return 2 * np.pi
        total += u
    return np.pi if total % 2 == 0 else 2 * np.pi


def _plane_basis(A: np.ndarray):
    v0 = np.array([0.0, 0.0, 1.0]) if abs(A[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(A, v0)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(A, e1)  # (e1, e2, A) right-handed: e1 x e2 = A
    return e1, e2


def winding_number(spec_or_id, *, angles=None, T=None, grid_n: int = 256,
                   axis_vector=None) -> WindingResult:
    """Winding of the in-plane Bloch vector around the origin (1D chiral walks)."""
    spec = _resolve(spec_or_id, angles, T)
    if spec.dimension != 1 or spec.bands != 2:
        raise InvalidInputError("winding_number needs a two-band 1D protocol")
    A = np.asarray(axis_vector, dtype=float) if axis_vector is not None else chiral_axis(spec)
    e1, e2 = _plane_basis(A)
    period = momentum_period(spec, 0)
    k = np.linspace(-np.pi, -np.pi + period, grid_n, endpoint=False)[:, None]
    d = bands_from_unitary(build_unitary(spec, k)).d
    x, y = d @ e1, d @ e2
    r = np.hypot(x, y)
    if r.min() <= EPS_GAP:
        raise BoundaryStateError(
            f"winding undefined: the d loop passes the origin (min |d_perp| = {r.min():.2e})")
    theta = np.arctan2(y, x)
    dtheta = np.diff(np.concatenate([theta, theta[:1]]))
    dtheta = (dtheta + np.pi) % (2 * np.pi) - np.pi
    raw = float(dtheta.sum() / (2 * np.pi))
    w = int(round(raw))
    if abs(raw - w) > QUANT_TOL:
        raise BoundaryStateError(
            f"winding not quantized: raw = {raw:.4f} (loop too close to the origin)")
    return WindingResult(w=w, raw=raw)


def _solid_angle(a, b, c):
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = (1.0 + np.einsum("...i,...i->...", a, b)
           + np.einsum("...i,...i->...", b, c)
           + np.einsum("...i,...i->...", c, a))
    return 2.0 * np.arctan2(num, den)


def chern_number(spec_or_id, *, angles=None, T=None, grid_n: int = 64) -> ChernResult:
    """Degree of n_hat over the minimal 2D momentum torus (plaquette solid angles)."""
    spec = _resolve(spec_or_id, angles, T)
    if spec.dimension != 2 or spec.bands != 2:
        raise InvalidInputError("chern_number needs a two-band 2D protocol")
    px, py = momentum_period(spec, 0), momentum_period(spec, 1)
    ax = np.linspace(-np.pi, -np.pi + px, grid_n, endpoint=False)
    ay = np.linspace(-np.pi, -np.pi + py, grid_n, endpoint=False)
    KX, KY = np.meshgrid(ax, ay, indexing="ij")
    k = np.stack([KX, KY], axis=-1)
    d = bands_from_unitary(build_unitary(spec, k)).d
    norm = np.linalg.norm(d, axis=-1)
    if norm.min() <= EPS_GAP:
        raise BoundaryStateError(
            f"Chern number undefined: d passes the origin (min |d| = {norm.min():.2e})")
    n = d / norm[..., None]
    n1 = n
    n2 = np.roll(n, -1, axis=0)
    n3 = np.roll(np.roll(n, -1, axis=0), -1, axis=1)
    n4 = np.roll(n, -1, axis=1)
    omega = _solid_angle(n1, n2, n3) + _solid_angle(n1, n3, n4)
    raw = float(CHERN_ORIENTATION * omega.sum() / (4 * np.pi))
    c = int(round(raw))
    if abs(raw - c) > QUANT_TOL:
        raise BoundaryStateError(
            f"Chern number not quantized: raw = {raw:.4f} (gap closing between nodes?)")
    return ChernResult(c=c, raw=raw)


@dataclass
class SweepSample:
    value: float
    gapped: bool
    invariant: Optional[int] = None
    raw: Optional[float] = None
    status: str = "ok"  # ok | boundary


def phase_boundary_trace(spec_or_id, symbol: str, values, *, angles=None, T=None,
                         grid_n: int = 64, invariant: Optional[str] = None,
                         linked=None) -> List[SweepSample]:
    """Sweep one angle: report gap status and, when defined, the invariant.

    invariant: None (auto: winding for chiral 1D, chern for 2D, else skip),
    "winding", "chern", or "none".
    """
    spec = _resolve(spec_or_id, angles, T)
    if invariant is None:
        if spec.dimension == 2 and spec.bands == 2:
            invariant = "chern"
        elif spec.dimension == 1 and spec.bands == 2:
            try:
                chiral_axis(spec)
                invariant = "winding"
            except Exception:
                invariant = "none"
        else:
            invariant = "none"
    out = []
    for v in np.asarray(values, dtype=float):
        bound = {symbol: float(v)}
        if linked:
            for sym, (on, scale, offset) in linked.items():
                if on == symbol:
                    bound[sym] = scale * float(v) + offset
        sample_spec = spec.with_params(**bound)
        closings = find_gap_closings(sample_spec, grid_n=max(grid_n, 32))
        if closings:
            out.append(SweepSample(value=float(v), gapped=False, status="boundary"))
            continue
        sample = SweepSample(value=float(v), gapped=True)
        try:
            if invariant == "winding":
                res = winding_number(sample_spec, grid_n=grid_n)
                sample.invariant, sample.raw = res.w, res.raw
            elif invariant == "chern":
                res = chern_number(sample_spec, grid_n=grid_n)
                sample.invariant, sample.raw = res.c, res.raw
        except BoundaryStateError:
            sample.status = "boundary"
            sample.gapped = False
        out.append(sample)
    return out
