"""Command line entry point ``torus-lab``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 inconclusive checks present.  On any error a machine-readable
``error.json`` is written to the output directory and echoed on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import _io
from .experiments import SUBCOMMANDS, ConfigError, Inconclusive, NumericFailure, Runner, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torus-lab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="experiment configuration (JSON)")
    p.add_argument("--out", default=None, help="output directory (default: ./torus-lab-out)")
    p.add_argument("--workers", type=int, default=None, help="worker processes for orbit scans")
    p.add_argument("--seed", type=int, default=None, help="seed for sampled initial conditions")
    return p


def _fail(out, code, kind, msg):
    err = {"error": kind, "message": msg, "exit_code": code}
    try:
        os.makedirs(out, exist_ok=True)
        _io.dump(err, os.path.join(out, "error.json"))
    except OSError:
        pass
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or "torus-lab-out"
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg["workers"] = args.workers
        if args.seed is not None:
            cfg["seed"] = args.seed
        runner = Runner(cfg, out)
        runner.run(args.subcommand)
    except ConfigError as exc:
        return _fail(out, EXIT_CONFIG, "config", str(exc))
    except Inconclusive as exc:
        return _fail(out, EXIT_INCONCLUSIVE, "inconclusive", str(exc))
    except (NumericFailure, ArithmeticError, ValueError, RuntimeError) as exc:
        return _fail(out, EXIT_NUMERIC, "numeric", f"{type(exc).__name__}: {exc}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
