"""``calibrate`` command line entry point.

Exit codes: 0 success, 1 configuration error, 2 at least one failed cell
(or failed acceptance criterion for ``check``).
"""

from __future__ import annotations

import argparse
import logging
import sys
import textwrap

from .harness import (CONFIG_KEYS, ConfigError, emit_interval_table, emit_report,
                      load_config, run_experiment, run_interval_comparison)
from .synthetic import GENERATORS

EXIT_OK, EXIT_CONFIG, EXIT_CELL = 0, 1, 2


def _config_help():
    lines = ["config file keys (flat 'key = value', lists comma separated, '#' comments):"]
    for key, (default, desc) in CONFIG_KEYS.items():
        lines.append(f"  {key:<20} {desc} [default: {default}]")
    lines.append("")
    lines.append("environment: CALIB_THREADS caps the number of worker processes.")
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the config-error code rather than argparse's 2,
    which is reserved for failed cells."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(
        prog="calibrate",
        description="Recalibrate regression predictors and evaluate them over a grid.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the experiment grid and write reports",
                         epilog=_config_help(),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("--config", required=True, help="path to the config file")

    iv = sub.add_parser("intervals", help="compare conformal and credible intervals",
                        epilog=_config_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    iv.add_argument("--config", required=True, help="path to the config file")
    iv.add_argument("--level", type=float, default=None,
                    help="coverage level in (0, 1); overrides the config 'level' key")

    ck = sub.add_parser("check", help="run the acceptance criteria")
    ck.add_argument("--config", required=True,
                    help="config file; only output_dir is used (acceptance.txt is written there)")
    ck.add_argument("--only", default=None,
                    help="comma-separated criterion numbers to run (default: all)")

    ds = sub.add_parser("datasets", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="datasets_command", required=True, parser_class=_Parser)
    ds_sub.add_parser("list", help="list the built-in synthetic generators")
    return p


def _cmd_run(args):
    cfg = load_config(args.config)
    report = run_experiment(cfg)
    for path in emit_report(report):
        print(f"wrote {path}")
    bad = report.failures
    if bad:
        print(f"{len(bad)} of {len(report.rows)} cells failed", file=sys.stderr)
        return EXIT_CELL
    return EXIT_OK


def _cmd_intervals(args):
    cfg = load_config(args.config)
    level = cfg.level if args.level is None else args.level
    if not 0 < level < 1:
        raise ConfigError("--level must lie in (0, 1)")
    try:
        table = run_interval_comparison(cfg, c=level)
    except ConfigError:
        raise
    except Exception as exc:
        print(f"interval comparison failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CELL
    print(f"{'dataset':<20} {'base':<14} {'conf.width':>10} {'conf.cov':>9} "
          f"{'cred.width':>10} {'cred.cov':>9} {'ratio':>7}")
    for r in table:
        print(f"{r['dataset']:<20} {r['base']:<14} {r['conformal_width']:>10.4f} "
              f"{r['conformal_coverage']:>9.4f} {r['credible_width']:>10.4f} "
              f"{r['credible_coverage']:>9.4f} {r['width_ratio']:>7.3f}")
    print(f"wrote {emit_interval_table(table, cfg.output_dir)}")
    return EXIT_OK


def _cmd_check(args):
    from pathlib import Path

    from .acceptance import CRITERIA, run_all

    cfg = load_config(args.config)
    selected = None
    if args.only:
        try:
            selected = [int(t) for t in args.only.split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"--only expects criterion numbers, got {args.only!r}") from None
        unknown = set(selected) - set(CRITERIA)
        if unknown:
            raise ConfigError(f"unknown criteria {sorted(unknown)}")
    results = run_all(selected, echo=print)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "acceptance.txt").write_text("\n".join(r.line() for r in results) + "\n")
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_CELL if failed else EXIT_OK


def _cmd_datasets(args):
    for name, gen in GENERATORS.items():
        print(f"{name:<14} d={gen.d}  {gen.description}")
    print(textwrap.dedent("""
        Options: name:n=<rows>:seed=<seed>:d=<features>, e.g. hetero:n=5000:seed=3.
        Any CSV path is also accepted (numeric columns, label last)."""))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "intervals": _cmd_intervals, "check": _cmd_check,
            "datasets": _cmd_datasets}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
