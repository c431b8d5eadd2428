"""Small dense complex linear algebra for two- and four-level unitaries.

Pauli algebra, SU(2) exponentials, eigen-decomposition with a fixed ordering
and phase convention, and 2x2 Kronecker products.  Everything acts on the
trailing (..., n, n) axes, so momentum grids batch for free.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InvalidInputError

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

# tau_i: the same matrices acting on the flavor index of four-band protocols
TAU_0, TAU_X, TAU_Y, TAU_Z = SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z

UNITARITY_TOL = 1e-12
EIG_TOL = 1e-10
AXIS_TOL = 1e-12


def unit_axis(axis) -> np.ndarray:
    """Validate and return a rotation axis as a float 3-vector of unit norm."""
    a = np.asarray(axis, dtype=float)
    if a.shape != (3,):
        raise InvalidInputError(f"rotation axis must be a 3-vector, got shape {a.shape}")
    if abs(np.linalg.norm(a) - 1.0) > AXIS_TOL:
        raise InvalidInputError(f"rotation axis must be normalized, got |axis| = {np.linalg.norm(a)!r}")
    return a


def unitarity_defect(U) -> float:
    """max over the batch of ||U^dag U - I||_max."""
    U = np.asarray(U, dtype=complex)
    n = U.shape[-1]
    prod = np.swapaxes(U, -1, -2).conj() @ U
    return float(np.abs(prod - np.eye(n)).max())


def is_unitary(U, tol: float = UNITARITY_TOL) -> bool:
    return unitarity_defect(U) <= tol


def require_unitary(U, what: str = "matrix", tol: float = UNITARITY_TOL) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.shape[-1] != U.shape[-2]:
        raise InvalidInputError(f"{what} must be square, got shape {U.shape}")
    defect = unitarity_defect(U)
    if defect > tol:
        raise InvalidInputError(f"{what} is not unitary: ||U^dag U - I||_max = {defect:.3e} > {tol:.1e}")
    return U


def pauli_exp(axis, angle) -> np.ndarray:
    """exp(-i*angle/2 * axis.sigma) = cos(angle/2) I - i sin(angle/2) axis.sigma.

    `angle` may be an array; the result has shape angle.shape + (2, 2).
    """
    a = unit_axis(axis)
    ang = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(ang)):
        raise InvalidInputError("rotation angle must be finite")
    half = 0.5 * ang
    gen = a[0] * SIGMA_X + a[1] * SIGMA_Y + a[2] * SIGMA_Z
    return np.cos(half)[..., None, None] * SIGMA_0 - 1j * np.sin(half)[..., None, None] * gen


def tensor(A, B) -> np.ndarray:
    """Kronecker product of 2x2 blocks: (A tensor B), batched over leading axes."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape[-2:] != (2, 2) or B.shape[-2:] != (2, 2):
        raise InvalidInputError(f"tensor expects 2x2 factors, got {A.shape} and {B.shape}")
    out = np.einsum("...ij,...kl->...ikjl", A, B)
    return out.reshape(*out.shape[:-4], 4, 4)


def block_diag2(A, B) -> np.ndarray:
    """[[A, 0], [0, B]] for batched 2x2 blocks."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    shape = np.broadcast_shapes(A.shape[:-2], B.shape[:-2])
    out = np.zeros(shape + (4, 4), dtype=complex)
    out[..., :2, :2] = A
    out[..., 2:, 2:] = B
    return out


def _phase_fix(vec: np.ndarray) -> np.ndarray:
    """Rotate a vector's global phase so its first significant entry is real positive."""
    idx = np.flatnonzero(np.abs(vec) > 1e-10)
    j = idx[0] if idx.size else int(np.argmax(np.abs(vec)))
    ph = vec[j] / abs(vec[j])
    return vec / ph


def eig_unitary(U):
    """Eigen-decomposition of a (batched) unitary matrix.

    Returns (values, vectors) with eigenvalues sorted by principal argument in
    (-pi, pi], descending; ties broken by the phase-fixed eigenvector's
    lexicographic order.  vectors[..., :, i] is the i-th eigenvector, phase
    fixed so its first significant component is real positive.

    Uses a complex Schur decomposition, which keeps eigenvectors orthonormal
    even for degenerate spectra.
    """
    U = require_unitary(U, what="eig_unitary input")
    n = U.shape[-1]
    flat = U.reshape(-1, n, n)
    vals = np.empty(flat.shape[:1] + (n,), dtype=complex)
    vecs = np.empty_like(flat)
    for m in range(flat.shape[0]):
        T, Z = scipy.linalg.schur(flat[m], output="complex")
        lam = np.diag(T).copy()
        V = Z.copy()
        cols = [_phase_fix(V[:, i]) for i in range(n)]
        args = np.angle(lam)
        # primary key: argument descending; secondary: lexicographic vector order
        keys = []
        for i in range(n):
            v = cols[i]
            keys.append((-args[i],) + tuple(np.round(v.view(float), 9)))
        order = sorted(range(n), key=lambda i: keys[i])
        vals[m] = lam[order]
        for out_i, i in enumerate(order):
            vecs[m, :, out_i] = cols[i]
    vals = vals.reshape(U.shape[:-2] + (n,))
    vecs = vecs.reshape(U.shape)
    return vals, vecs


def quasi_energies(U) -> np.ndarray:
    """Quasi-energies E_j = i ln(lambda_j) of a batched unitary, sorted ascending.

    Convention: an eigenvalue exp(-iE) carries quasi-energy +E, so
    E_j = -arg(lambda_j) in (-pi, pi].
    """
    U = np.asarray(U, dtype=complex)
    lam = np.linalg.eigvals(U)
    return np.sort(-np.angle(lam), axis=-1)
