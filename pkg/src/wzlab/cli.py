"""Command line entry point: one binary, four subcommands.

    wzlab noise --config CFG [--out DIR] [--replicas N] [--threads N]
    wzlab solve --config CFG ...
    wzlab rates --config CFG ...
    wzlab check [--config CFG]

--config accepts a file path or the bare name of a bundled preset.  Exit
codes: 0 pass, 1 invariant/acceptance failure, 2 config error, 3 solver
instability.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, load_config, preset_names
from .runner import run_check, run_noise, run_rates, run_solve

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wzlab",
        description="Wong-Zakai approximation laboratory for SPDEs on a periodic 1-D domain.",
        epilog=f"bundled presets: {', '.join(preset_names())}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("noise", "driver-path sweep: approximation metrics and fitted rates"),
        ("solve", "solve the coupled equations for one replica and dump trajectories"),
        ("rates", "coupled-error sweep across replicas with rate reports"),
        ("check", "run the invariant suite"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=(name != "check"),
                       help="config JSON path or bundled preset name")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--replicas", type=int, default=None, help="override replica count")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config is not None:
            cfg = load_config(args.config)
            if cfg.mode is not None and cfg.mode != args.command:
                raise ConfigError(f"config.mode is {cfg.mode!r} but the {args.command!r} "
                                  "subcommand was invoked")
            if args.replicas is not None:
                if args.replicas < 1:
                    raise ConfigError("--replicas must be >= 1")
                cfg = replace(cfg, replicas=args.replicas)

        if args.command == "check":
            result = run_check(cfg)
            ok = result.all_checks_pass
            print(f"{sum(1 for _, p, _ in result.check_results if p)}"
                  f"/{len(result.check_results)} checks passed")
            return EXIT_OK if ok else EXIT_FAIL

        out_dir = args.out or cfg.out_dir
        if out_dir is None:
            raise ConfigError("out_dir: set it in the config or pass --out")
        threads = max(1, args.threads)

        if args.command == "noise":
            result = run_noise(cfg, out_dir, threads)
        elif args.command == "rates":
            result = run_rates(cfg, out_dir, threads)
        else:
            result = run_solve(cfg, out_dir, threads)

        for rep in result.reports:
            flag = "pass" if rep.passed else "FAIL"
            print(f"[{flag}] {rep.quantity}: median kappa {rep.median_kappa:.4f} "
                  f"(threshold {rep.threshold:.3f}, iqr {rep.iqr:.4f})")
        if result.unstable_cells:
            print(f"{len(result.unstable_cells)} cell(s) aborted as unstable; "
                  "see manifest.json", file=sys.stderr)
            return EXIT_UNSTABLE
        return EXIT_OK if result.all_reports_pass else EXIT_FAIL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
