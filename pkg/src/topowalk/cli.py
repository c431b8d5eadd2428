"""Command-line driver: deterministic band/invariant/symmetry sweeps.

Subcommands
-----------
bands          CSV of + band energy and group velocity over momentum grids
invariant      CSV of winding (1D chiral) or Chern (2D) numbers along a sweep
classify-gaps  JSON of gap closings and boundary-state taxonomy along a sweep
symmetry       JSON classification records; --golden diffs against the
               bundled reference table

Exit codes: 0 success, 2 usage/config error, 3 numerical diagnostic,
1 golden-table mismatch.  Identical configs produce byte-identical artifacts
for any worker count: rows are computed per sweep value (pure functions) and
merged in sweep order.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

import numpy as np

from .config import SCHEMA, SweepConfig, config_from_dict
from .errors import (BoundaryStateError, ClassificationError, InvalidInputError,
                     UnknownProtocolError, WalkError)
from .protocols import PROTOCOL_IDS, build_unitary, registry_lookup, step_independent_unitary
from .spectrum import CLOSED_FORM_IDS, EPS_GAP, bands_from_unitary
from . import spectrum, symmetry, topology



def _f(x) -> str:
    """Shortest round-trip decimal for a float."""
    return repr(float(x))


def _num(text, flag: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InvalidInputError(f"{flag} expects a number, got {text!r}") from None


def _momentum_grid(dim: int, n: int) -> np.ndarray:
    axes = [np.linspace(-np.pi, np.pi, n, endpoint=False)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _bands_value_rows(doc: dict, value) -> list:
    cfg = config_from_dict(doc)
    spec = cfg.spec_at(value)
    dim = spec.dimension
    k = _momentum_grid(dim, cfg.grid)
    if cfg.step_independent:
        U = step_independent_unitary(spec, k)
    else:
        U = build_unitary(spec, k)
    b = bands_from_unitary(U)
    gapless = np.linalg.norm(b.d, axis=-1) <= EPS_GAP

    vel = np.full((k.shape[0], dim), np.nan)
    ill = np.zeros(k.shape[0], dtype=bool)
    if spec.id in CLOSED_FORM_IDS:
        rho = spectrum.rho_closed_form(spec.id, spec.angles, spec.T, k)
        s = np.sqrt(np.maximum(1.0 - rho ** 2, 0.0))
        for ax in range(dim):
            drho = spectrum.drho_closed_form(spec.id, spec.angles, spec.T, k, ax)
            with np.errstate(divide="ignore", invalid="ignore"):
                vel[:, ax] = np.where(gapless, np.nan, -drho / s)
    else:
        h = 1e-5
        for ax in range(dim):
            step = np.zeros(dim)
            step[ax] = h
            bp = bands_from_unitary(build_unitary(spec, k + step))
            bm = bands_from_unitary(build_unitary(spec, k - step))
            bad = ((np.linalg.norm(bp.d, axis=-1) <= EPS_GAP)
                   | (np.linalg.norm(bm.d, axis=-1) <= EPS_GAP))
            ill |= bad & ~gapless
            vel[:, ax] = np.where(bad, np.nan, (bp.e_plus - bm.e_plus) / (2 * h))

    rows = []
    sval = _f(value) if cfg.sweep_symbol != "T" else str(int(value))
    for i in range(k.shape[0]):
        cells = [sval] + [_f(k[i, a]) for a in range(dim)] + [_f(b.e_plus[i])]
        if gapless[i]:
            cells += ["" for _ in range(dim)] + ["gapless"]
        elif ill[i]:
            cells += ["" for _ in range(dim)] + ["ill_defined_velocity"]
        else:
            cells += [_f(vel[i, a]) for a in range(dim)] + ["gapped"]
        rows.append(",".join(cells))
    return rows


def _invariant_value_rows(doc: dict, value) -> list:
    cfg = config_from_dict(doc)
    spec = cfg.spec_at(value)
    sval = _f(value) if cfg.sweep_symbol != "T" else str(int(value))
    closings = topology.find_gap_closings(spec, grid_n=max(cfg.grid, 32))
    if closings:
        return [f"{sval},,,boundary"]
    try:
        if spec.dimension == 1:
            res = topology.winding_number(spec, grid_n=cfg.grid)
            return [f"{sval},{res.w},{_f(res.raw)},ok"]
        res = topology.chern_number(spec, grid_n=cfg.grid)
        return [f"{sval},{res.c},{_f(res.raw)},ok"]
    except BoundaryStateError:
        return [f"{sval},,,boundary"]


def _classify_value_record(doc: dict, value) -> dict:
    cfg = config_from_dict(doc)
    spec = cfg.spec_at(value)
    points = topology.find_gap_closings(spec, grid_n=max(cfg.grid, 32))
    classes = topology.classify_boundary(spec, gap_points=points, grid_n=max(cfg.grid, 32))
    return {
        "sweep_value": float(value) if cfg.sweep_symbol != "T" else int(value),
        "gap_points": [
            {"k": [float(x) for x in p.k], "quasi_energy": float(p.quasi_energy),
             "residual": float(p.residual)} for p in points],
        "classifications": [
            {"kind": c.kind, "evidence": _jsonable(c.evidence)} for c in classes],
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _map_values(doc: dict, values, fn, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, [doc] * len(values), values))
    return [fn(doc, v) for v in values]


def _write_text(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _build_config(args) -> SweepConfig:
    doc = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    if args.protocol:
        doc["protocol"] = args.protocol
    if args.steps is not None:
        doc["steps"] = args.steps
    if args.grid is not None:
        doc["grid"] = args.grid
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.out is not None:
        doc["out"] = args.out
    if getattr(args, "phi", None) is not None:
        doc["phi"] = args.phi
    if getattr(args, "step_independent", False):
        doc["step_independent"] = True
    angles = dict(doc.get("angles") or {})
    for item in args.set or []:
        if "=" not in item:
            raise InvalidInputError(f"--set expects symbol=value, got {item!r}")
        sym, val = item.split("=", 1)
        angles[sym.strip()] = _num(val, "--set")
    if angles:
        doc["angles"] = angles
    if args.sweep:
        parts = args.sweep.split(":")
        if len(parts) != 4:
            raise InvalidInputError("--sweep expects symbol:start:stop:count")
        doc["sweep"] = {"symbol": parts[0], "start": _num(parts[1], "--sweep"),
                        "stop": _num(parts[2], "--sweep"),
                        "count": int(_num(parts[3], "--sweep"))}
    for item in args.link or []:
        try:
            sym, rest = item.split("=", 1)
            on, scale, offset = rest.split(":")
        except ValueError:
            raise InvalidInputError("--link expects symbol=on:scale:offset") from None
        doc.setdefault("linked", {})[sym.strip()] = {
            "on": on.strip(), "scale": _num(scale, "--link"),
            "offset": _num(offset, "--link")}
    doc.setdefault("schema", SCHEMA)
    return config_from_dict(doc).validate()


def _cmd_bands(args) -> int:
    cfg = _build_config(args)
    spec = registry_lookup(cfg.protocol)
    if spec.bands != 2:
        raise InvalidInputError(
            f"bands output is defined for two-band protocols; {cfg.protocol!r} has four bands")
    dim = spec.dimension
    header = (["sweep_param"] + [f"k{i+1}" for i in range(dim)] + ["e_plus"]
              + [f"v_k{i+1}" for i in range(dim)] + ["status"])
    doc = _cfg_doc(cfg)
    chunks = _map_values(doc, cfg.sweep_values(), _bands_value_rows, cfg.workers)
    lines = [",".join(header)]
    for chunk in chunks:
        lines.extend(chunk)
    _write_text(cfg.out, "\n".join(lines) + "\n")
    return 0


def _cmd_invariant(args) -> int:
    cfg = _build_config(args)
    spec = registry_lookup(cfg.protocol)
    if spec.dimension == 3:
        raise InvalidInputError("invariants are computed for 1D (winding) and 2D (Chern) only")
    if spec.bands != 2:
        raise InvalidInputError("invariant sweeps need a two-band protocol")
    if spec.dimension == 1:
        try:
            symmetry.chiral_axis(symmetry._ensure_generic_angles(spec))
        except (ClassificationError, KeyError) as err:
            raise InvalidInputError(
                f"winding needs a chiral protocol with a momentum-independent axis:"
                f" {err}") from None
    doc = _cfg_doc(cfg)
    chunks = _map_values(doc, cfg.sweep_values(), _invariant_value_rows, cfg.workers)
    lines = ["sweep_param,invariant,raw,status"]
    for chunk in chunks:
        lines.extend(chunk)
    _write_text(cfg.out, "\n".join(lines) + "\n")
    return 0


def _cmd_classify_gaps(args) -> int:
    cfg = _build_config(args)
    spec = registry_lookup(cfg.protocol)
    if spec.bands != 2:
        raise InvalidInputError("gap classification needs a two-band protocol")
    doc = _cfg_doc(cfg)
    records = _map_values(doc, cfg.sweep_values(), _classify_value_record, cfg.workers)
    payload = {"schema": SCHEMA, "command": "classify-gaps",
               "protocol": cfg.protocol, "records": records}
    _write_text(cfg.out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def _golden_table() -> list:
    with resources.files("topowalk.fixtures").joinpath("classification_table.json").open(
            "r", encoding="utf-8") as fh:
        return json.load(fh)["records"]


def _cmd_symmetry(args) -> int:
    ids = list(args.ids or [])
    if not ids or ids == ["all"]:
        ids = list(PROTOCOL_IDS)
    for pid in ids:
        if pid not in PROTOCOL_IDS:
            raise UnknownProtocolError(
                f"unknown protocol id {pid!r}; valid ids: {', '.join(PROTOCOL_IDS)}")
    reports = [symmetry.classify(pid) for pid in ids]
    payload = {"schema": SCHEMA, "command": "symmetry",
               "records": [r.as_record() for r in reports]}
    _write_text(args.out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    if args.golden:
        golden = {row["protocol"]: row for row in _golden_table()}
        mismatches = []
        for r in reports:
            want = golden.get(r.protocol)
            got = r.canonical()
            if want is None:
                mismatches.append(f"{r.protocol}: missing from the reference table")
            elif any(got[k] != want[k] for k in got):
                mismatches.append(f"{r.protocol}: got {got}, reference {want}")
        if mismatches:
            for line in mismatches:
                print(f"golden mismatch: {line}", file=sys.stderr)
            return 1
    return 0


def _cfg_doc(cfg: SweepConfig) -> dict:
    doc = {
        "schema": SCHEMA,
        "protocol": cfg.protocol,
        "steps": cfg.steps,
        "angles": dict(cfg.angles),
        "sweep": {"symbol": cfg.sweep_symbol, "start": cfg.sweep_start,
                  "stop": cfg.sweep_stop, "count": cfg.sweep_count},
        "grid": cfg.grid,
        "workers": cfg.workers,
    }
    if cfg.linked:
        doc["linked"] = {sym: {"on": l.on, "scale": l.scale, "offset": l.offset}
                         for sym, l in cfg.linked.items()}
    if cfg.phi is not None:
        doc["phi"] = cfg.phi
    if cfg.step_independent:
        doc["step_independent"] = True
    return doc


def _add_sweep_options(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON sweep config (flags override fields)")
    p.add_argument("--protocol", help="registry id, e.g. 1d-phs")
    p.add_argument("--set", action="append", metavar="SYM=VAL",
                   help="fix a rotation angle (repeatable)")
    p.add_argument("--sweep", metavar="SYM:START:STOP:COUNT",
                   help="swept parameter (an angle symbol or T)")
    p.add_argument("--link", action="append", metavar="SYM=ON:SCALE:OFFSET",
                   help="tie an angle to the swept one: SYM = SCALE*ON + OFFSET")
    p.add_argument("--steps", type=int, help="step number T")
    p.add_argument("--grid", type=int, help="momentum grid size per axis")
    p.add_argument("--phi", type=float, help="flavor-mixing angle of trs_sandwich protocols")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--step-independent", action="store_true", dest="step_independent",
                   help="evaluate through the dedicated step-independent coin path (T=1)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="topowalk",
        description="band, invariant, and symmetry sweeps for split-step walk protocols")
    sub = parser.add_subparsers(dest="command", required=True)

    p_bands = sub.add_parser("bands", help="energy/velocity CSV over momentum grids")
    _add_sweep_options(p_bands)
    p_bands.set_defaults(fn=_cmd_bands)

    p_inv = sub.add_parser("invariant", help="winding/Chern CSV along a sweep")
    _add_sweep_options(p_inv)
    p_inv.set_defaults(fn=_cmd_invariant)

    p_cls = sub.add_parser("classify-gaps", help="gap closings and boundary taxonomy (JSON)")
    _add_sweep_options(p_cls)
    p_cls.set_defaults(fn=_cmd_classify_gaps)

    p_sym = sub.add_parser("symmetry", help="classification records (JSON)")
    p_sym.add_argument("ids", nargs="*", help="protocol ids, or 'all'")
    p_sym.add_argument("--golden", action="store_true",
                       help="diff against the bundled reference table; exit 1 on mismatch")
    p_sym.add_argument("--out", help="output path (default stdout)")
    p_sym.set_defaults(fn=_cmd_symmetry)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InvalidInputError, UnknownProtocolError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (FileNotFoundError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except WalkError as err:
        print(f"numerical diagnostic: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
