"""Command line entry point.

Argument parsing and thread-count plumbing happen before numpy is
imported so that BLAS pools are sized by --threads (default 1, which
keeps runs reproducible bit for bit).

Exit codes: 0 success, 1 invalid input or config, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_modes(text: str):
    try:
        modes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mode list: {text!r}")
    if not modes or any(n < 0 for n in modes):
        raise argparse.ArgumentTypeError(f"bad mode list: {text!r}")
    return modes


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="axonwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "simulate": "run the 2-d surface model and store snapshots",
        "front": "construct the traveling front profile",
        "spectrum": "linearize about the front and report spectra",
        "dist": "track distance to the front manifold over a run",
        "sweep": "compare the standard geometries in one run",
        "info": "print the resolved configuration and derived scales",
    }
    for name, help_text in specs.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="TOML config file")
        cmd.add_argument("--out", default=None, help="output directory override")
        cmd.add_argument("--threads", type=int, default=1,
                         help="BLAS/OpenMP thread count (default 1)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="seed override for randomized probes")
        if name == "spectrum":
            cmd.add_argument("--modes", type=_parse_modes, default=None,
                             help="comma-separated angular mode numbers")
        if name == "sweep":
            cmd.add_argument("--parallelism", type=int, default=1,
                             help="worker processes for sweep members")
    return parser


_COMMAND_KIND = {
    "simulate": "simulate2d",
    "front": "front1d",
    "spectrum": "spectrum",
    "dist": "distance",
    "sweep": "sweep",
    "info": None,
}


def _set_thread_env(threads: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", 1)
    if threads < 1:
        print("axonwave: error: --threads must be at least 1", file=sys.stderr)
        return 1
    _set_thread_env(threads)

    # Heavy imports after the env vars are pinned.
    from . import config as config_mod
    from . import runner

    try:
        cfg = config_mod.parse_config(args.config, kind=_COMMAND_KIND[args.command])
        if args.seed is not None and args.seed < 0:
            raise config_mod.ConfigError("--seed must be nonnegative")
        if args.command == "info":
            print(runner.run_info(cfg))
            return 0
        if args.command == "simulate":
            manifest = runner.run_simulate(cfg, out_dir=args.out)
        elif args.command == "front":
            manifest = runner.run_front(cfg, out_dir=args.out)
        elif args.command == "spectrum":
            manifest = runner.run_spectrum(
                cfg, out_dir=args.out, modes=args.modes, seed=args.seed
            )
        elif args.command == "dist":
            manifest = runner.run_distance(cfg, out_dir=args.out)
        else:
            manifest = runner.run_sweep(
                cfg, out_dir=args.out, parallelism=args.parallelism
            )
    except ValueError as exc:
        print(f"axonwave: error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"axonwave: failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(manifest.get("results", {}), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
