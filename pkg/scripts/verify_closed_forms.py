#!/usr/bin/env python3
"""Symbolic cross-check of the analytic band formulas.

For every two-band protocol with hand-coded analytic forms, this script

1. builds the momentum-space step unitary symbolically (entries are Laurent
   polynomials in X = exp(i k_x), ...),
2. extracts d0 and d exactly from traces,
3. differentiates d0 per momentum axis,
4. compares sympy-lambdified results against the shipped numpy
   implementations at random parameter points.

A max deviation at double-precision roundoff (~1e-12) certifies that the
formulas in topowalk.spectrum are the exact trace expansions of the element
products.  Run time is a couple of minutes (symbolic 4-angle products are
large); pass --quick to sample fewer points.
"""
import argparse
import sys

import numpy as np
import sympy as sp

from topowalk import registry_lookup
from topowalk.protocols import AXIS_NU, AXIS_Y, Coin, Shift
from topowalk.spectrum import CLOSED_FORM_IDS, d_closed_form, drho_closed_form, rho_closed_form

I = sp.I
S2 = sp.sqrt(2)
SIG = {
    "x": sp.Matrix([[0, 1], [1, 0]]),
    "y": sp.Matrix([[0, -I], [I, 0]]),
    "z": sp.Matrix([[1, 0], [0, -1]]),
}
ID2 = sp.eye(2)

K_SYMS = sp.symbols("kx ky kz")
X_SYMS = sp.symbols("X Y Z")
KL = {s: sp.symbols(f"kap_{s} lam_{s}", real=True) for s in ("alpha", "beta", "gamma", "zeta")}


def coin_matrix(coin: Coin):
    kap, lam = KL[coin.symbol]
    if tuple(coin.axis) == AXIS_Y:
        gen = SIG["y"]
    elif tuple(coin.axis) == AXIS_NU:
        gen = (SIG["y"] + SIG["z"]) / S2
    else:
        raise ValueError(f"unexpected coin axis {coin.axis}")
    return kap * ID2 - I * lam * gen


def shift_matrix(shift: Shift, dim: int):
    up = sp.Integer(1)
    down = sp.Integer(1)
    for i in range(dim):
        up *= X_SYMS[i] ** shift.up[i]
        down *= X_SYMS[i] ** shift.down[i]
    return sp.Matrix([[up, 0], [0, down]])


def symbolic_unitary(pid: str):
    spec = registry_lookup(pid)
    U = ID2
    for el in spec.elements:
        M = coin_matrix(el) if isinstance(el, Coin) else shift_matrix(el, spec.dimension)
        U = M * U
    return spec, U


def conj_laurent(expr):
    subs = {X_SYMS[i]: 1 / X_SYMS[i] for i in range(3)}
    subs[I] = -I
    return expr.subs(subs, simultaneous=True)


def bloch_symbolic(U):
    tr = sp.expand(U.trace())
    d0 = sp.expand((tr + conj_laurent(tr)) / 4)
    d = []
    for j in "xyz":
        trj = sp.expand((SIG[j] * U).trace())
        d.append(sp.expand(-(trj - conj_laurent(trj)) / (4 * I)))
    return d0, d


def on_circle(expr, dim):
    subs = {X_SYMS[i]: sp.exp(I * K_SYMS[i]) for i in range(dim)}
    return expr.subs(subs)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="sample 50 points instead of 400")
    args = ap.parse_args(argv)
    n_pts = 50 if args.quick else 400
    rng = np.random.default_rng(20240811)
    worst_overall = 0.0

    for pid in CLOSED_FORM_IDS:
        spec, U = symbolic_unitary(pid)
        dim = spec.dimension
        d0, d = bloch_symbolic(U)
        d0_k = on_circle(d0, dim)
        d_k = [on_circle(c, dim) for c in d]
        drho_k = [sp.diff(d0_k, K_SYMS[ax]) for ax in range(dim)]

        kl_syms = [KL[s] for s in spec.symbols]
        flat_syms = [s for pair in kl_syms for s in pair] + list(K_SYMS[:dim])
        f_d0 = sp.lambdify(flat_syms, d0_k, "numpy")
        f_d = [sp.lambdify(flat_syms, c, "numpy") for c in d_k]
        f_dr = [sp.lambdify(flat_syms, c, "numpy") for c in drho_k]

        angles = {s: rng.uniform(-np.pi, np.pi, n_pts) for s in spec.symbols}
        T = rng.integers(1, 13, n_pts).astype(float)
        k = rng.uniform(-np.pi, np.pi, (n_pts, dim))
        args_num = []
        for s in spec.symbols:
            half = 0.5 * T * angles[s]
            args_num += [np.cos(half), np.sin(half)]
        args_num += [k[:, i] for i in range(dim)]

        worst = 0.0
        worst = max(worst, np.abs(np.real(f_d0(*args_num))
                                  - rho_closed_form(pid, angles, T, k)).max())
        d_ship = d_closed_form(pid, angles, T, k)
        for ax in range(dim):
            worst = max(worst, np.abs(np.real(f_d[ax](*args_num)) - d_ship[..., ax]).max())
            worst = max(worst, np.abs(np.real(f_dr[ax](*args_num))
                                      - drho_closed_form(pid, angles, T, k, ax)).max())
        worst_overall = max(worst_overall, worst)
        status = "ok" if worst < 1e-11 else "MISMATCH"
        print(f"{pid:10s} max deviation {worst:9.2e}  {status}")

    if worst_overall >= 1e-11:
        print("symbolic cross-check FAILED", file=sys.stderr)
        return 1
    print("all analytic forms match the symbolic trace expansion")
    return 0


if __name__ == "__main__":
    sys.exit(main())
