"""Command line entry point: ``mhdgn run|converge|musweep|snapshot-dump``.

Exit codes: 0 success, 1 solver/IO error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .core import MHDGNError
from .io import read_snapshot


def _print(obj):
    print(json.dumps(obj, indent=2, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def cmd_run(args):
    _print(harness.run_simulation(harness.load_config(args.config)))


def cmd_converge(args):
    _print(harness.converge(harness.load_config(args.config)))


def cmd_musweep(args):
    cfg = harness.load_config(args.config)
    result = harness.musweep(cfg)
    harness._write_json(harness.output_dir(cfg.get("run", "name")) / "summary.json", result)
    _print(result)


def cmd_dump(args):
    fields, t = read_snapshot(args.file)
    print(f"t = {t!r}")
    for name, a in fields.items():
        print(f"{name:>8s} shape={'x'.join(map(str, a.shape))} min={np.min(a):.6e} max={np.max(a):.6e}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mhdgn", description="Shallow MHD / magnetic Green-Naghdi solvers")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("run", cmd_run, "run a configured scenario"),
                               ("converge", cmd_converge, "convergence study"),
                               ("musweep", cmd_musweep, "residual mu-sweep")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("snapshot-dump", help="summarize a snapshot file")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_dump)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except harness.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (MHDGNError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
