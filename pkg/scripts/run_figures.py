#!/usr/bin/env python3
"""Regenerate every bundled figure dataset at desk scale.

Runs each fixtures/figN.cfg through the CLI and drops the CSV/JSON artifacts
into an output directory (default: figure_data/).
"""
import argparse
import pathlib
import sys

from topowalk.cli import main as cli_main
from topowalk.config import load_config

COMMANDS = {
    "fig1": "bands", "fig2": "classify-gaps", "fig3": "bands", "fig4": "bands",
    "fig5": "bands", "fig6": "invariant", "fig7": "bands", "fig8": "bands",
    "fig9": "bands", "fig10": "invariant", "fig11": "invariant",
}


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--fixtures", default="fixtures", help="fixture directory")
    ap.add_argument("--out-dir", default="figure_data")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", help="subset of fixture names, e.g. fig6 fig10")
    args = ap.parse_args(argv)

    fixture_dir = pathlib.Path(args.fixtures)
    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    names = args.only or sorted(COMMANDS, key=lambda s: int(s[3:]))
    for name in names:
        cfg_path = fixture_dir / f"{name}.cfg"
        cfg = load_config(str(cfg_path)).validate()
        out_path = out_dir / (cfg.out or f"{name}.out")
        rc = cli_main([COMMANDS[name], "--config", str(cfg_path),
                       "--out", str(out_path), "--workers", str(args.workers)])
        print(f"{name}: {COMMANDS[name]} -> {out_path} (exit {rc})")
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
