#!/usr/bin/env python3
"""
cli_runner.py

Command line entry point for the verification suites.

Commands:
- derivatives     analytic vs numerical derivatives, symmetry, Taylor, order growth, δ-coefficients
- locality        locality verdicts against the expected classification table
- identities      FTC, Taylor with integral remainder, Poincaré identities, EL gradient, exactness
- peetre          mollifiers, Peetre ratios, jet determination, k-locality
- counterexample  partial additivity without locality, with the explicit witness
- zoo             the functional zoo with metadata
- all             every suite named by --suite (default: all of them)

Configuration precedence (lowest first): defaults, environment (FUNCLAB_*,
loaded with load_dotenv), --config key=value file, flags.

Exit codes: 0 success, 2 a check outside tolerance or a misclassification,
3 usage or configuration error.

Supports: --dry-run, --pdf
"""

import os
import sys
import logging
import argparse
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from dotenv import dotenv_values, load_dotenv

_repo_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if _repo_root not in sys.path:
    sys.path.insert(0, _repo_root)

from peetre_probe import DEFAULT_LAMBDAS  # noqa: E402
from services.suite_service import SUITE_NAMES, TOLERANCE_DEFAULTS, run_suite  # noqa: E402

EXIT_OK = 0
EXIT_FAILURE = 2
EXIT_CONFIG = 3

CONFIG_KEYS = ("grid", "seed", "suite", "out", "peetre_grid", "lambdas", "counterexample_n", "trials")
TOL_PREFIX = "tol."


class ConfigError(ValueError):
    """Rejected configuration: unknown key, bad value or empty selection."""


@dataclass
class RunConfig:
    grid: int = 2048
    seed: int = 1234
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(TOLERANCE_DEFAULTS))
    suite: List[str] = field(default_factory=lambda: ["all"])
    out_dir: str = "reports"
    peetre_grid: int = 16384
    lambdas: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    counterexample_n: int = 2
    trials: int = 50
    pdf: bool = False
    dry_run: bool = False

    def selected_suites(self) -> List[str]:
        if self.suite == ["all"]:
            return list(SUITE_NAMES)
        return list(self.suite)


# -----------------------------
# Config parsing
# -----------------------------

def _int(name: str, value) -> int:
    try:
        out = int(str(value).strip())
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if out < 0 and name != "seed":
        raise ConfigError(f"{name} must be non-negative, got {out}")
    return out


def _float(name: str, value) -> float:
    try:
        out = float(str(value).strip())
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not out > 0.0:
        raise ConfigError(f"{name} must be > 0, got {out}")
    return out


def _suite_list(value: str) -> List[str]:
    names = [s.strip() for s in str(value).split(",") if s.strip()]
    if not names:
        raise ConfigError("Empty suite selection")
    unknown = [s for s in names if s != "all" and s not in SUITE_NAMES]
    if unknown:
        raise ConfigError(f"Unknown suite(s) {', '.join(unknown)}; expected any of {', '.join(SUITE_NAMES)}")
    return ["all"] if "all" in names else names


def _set_tolerance(config: RunConfig, name: str, value) -> None:
    if name not in TOLERANCE_DEFAULTS:
        raise ConfigError(f"Unknown tolerance {name!r}; expected one of {', '.join(TOLERANCE_DEFAULTS)}")
    config.tolerances[name] = _float(f"tolerance {name}", value)


def _apply(config: RunConfig, key: str, value) -> None:
    """Set one key=value pair using the config-file vocabulary."""
    if key.startswith(TOL_PREFIX):
        _set_tolerance(config, key[len(TOL_PREFIX):], value)
    elif key in ("grid", "peetre_grid", "counterexample_n", "trials", "seed"):
        setattr(config, key, _int(key, value))
    elif key == "suite":
        config.suite = _suite_list(value)
    elif key == "out":
        config.out_dir = str(value).strip()
    elif key == "lambdas":
        lams = [_float("lambda", v) for v in str(value).split(",") if v.strip()]
        if not lams:
            raise ConfigError("lambdas must list at least one value")
        config.lambdas = lams
    else:
        raise ConfigError(f"Unknown config key {key!r}; expected one of {', '.join(CONFIG_KEYS)} or tol.<NAME>")


def apply_environment(config: RunConfig) -> None:
    env_map = {"FUNCLAB_GRID": "grid", "FUNCLAB_SEED": "seed", "FUNCLAB_OUT_DIR": "out"}
    for var, key in env_map.items():
        value = os.getenv(var)
        if value:
            _apply(config, key, value)


def apply_config_file(config: RunConfig, path: str) -> None:
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}")
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigError(f"Config line {key!r} has no value; expected key=value")
        _apply(config, key.strip(), value)


def build_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    apply_environment(config)
    if args.config:
        apply_config_file(config, args.config)

    if args.grid is not None:
        _apply(config, "grid", args.grid)
    if args.seed is not None:
        _apply(config, "seed", args.seed)
    if args.out is not None:
        _apply(config, "out", args.out)
    if args.suite is not None:
        _apply(config, "suite", args.suite)
    if args.counterexample_n is not None:
        _apply(config, "counterexample_n", args.counterexample_n)
    if args.trials is not None:
        _apply(config, "trials", args.trials)
    for item in args.tol or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol expects NAME=VALUE, got {item!r}")
        _set_tolerance(config, name.strip(), value)

    config.pdf = args.pdf
    config.dry_run = args.dry_run
    if args.command != "all":
        config.suite = [args.command]
    if config.counterexample_n < 2:
        raise ConfigError(f"counterexample_n must be ≥ 2, got {config.counterexample_n}")
    if config.trials < 1:
        raise ConfigError(f"trials must be ≥ 1, got {config.trials}")
    return config


# -----------------------------
# CLI
# -----------------------------

class SuiteArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_CONFIG instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", type=str, default=None, help="Grid size N (default 2048).")
    parser.add_argument("--seed", type=str, default=None, help="Base RNG seed (default 1234).")
    parser.add_argument(
        "--tol", action="append", default=None, metavar="NAME=VALUE",
        help=f"Override a tolerance; repeatable. Names: {', '.join(TOLERANCE_DEFAULTS)}.",
    )
    parser.add_argument("--suite", type=str, default=None, help="Comma list of suites for the 'all' command.")
    parser.add_argument("--out", type=str, default=None, help="Output directory (default reports).")
    parser.add_argument("--config", type=str, default=None, help="key=value config file.")
    parser.add_argument("--counterexample-n", dest="counterexample_n", type=str, default=None,
                        help="Exponent N of the counterexample (default 2).")
    parser.add_argument("--trials", type=str, default=None, help="Trials per locality probe (default 50).")
    parser.add_argument("--pdf", action="store_true", help="Also render <command>.pdf.")
    parser.add_argument("--dry-run", action="store_true", help="Run every check without writing files.")


def build_parser() -> argparse.ArgumentParser:
    parser = SuiteArgumentParser(description="Verification suites for functionals on the circle.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in SUITE_NAMES + ("all",):
        _add_common(sub.add_parser(name, help=f"Run the {name} suite." if name != "all" else "Run every selected suite."))
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


# -----------------------------
# Main
# -----------------------------

def _run_command(name: str, config: RunConfig) -> int:
    payload = run_suite(name, config)
    return EXIT_OK if payload["passed"] else EXIT_FAILURE


def cmd_derivatives(config: RunConfig) -> int:
    return _run_command("derivatives", config)


def cmd_locality(config: RunConfig) -> int:
    return _run_command("locality", config)


def cmd_identities(config: RunConfig) -> int:
    return _run_command("identities", config)


def cmd_peetre(config: RunConfig) -> int:
    return _run_command("peetre", config)


def cmd_counterexample(config: RunConfig) -> int:
    """Also prints the explicit witness summary to stdout."""
    payload = run_suite("counterexample", config)
    print(payload["summary"])
    return EXIT_OK if payload["passed"] else EXIT_FAILURE


def cmd_zoo(config: RunConfig) -> int:
    return _run_command("zoo", config)


COMMANDS = {
    "derivatives": cmd_derivatives,
    "locality": cmd_locality,
    "identities": cmd_identities,
    "peetre": cmd_peetre,
    "counterexample": cmd_counterexample,
    "zoo": cmd_zoo,
}


def run(config: RunConfig) -> int:
    failed = [name for name in config.selected_suites() if COMMANDS[name](config) != EXIT_OK]
    if failed:
        logging.error(f"[cli] Failed suites: {', '.join(failed)}")
        return EXIT_FAILURE
    logging.info("[cli] All suites passed.")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("FUNCLAB_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    args = parse_args(argv)
    try:
        config = build_config(args)
    except ConfigError as e:
        logging.error(f"[cli] {e}")
        return EXIT_CONFIG

    logging.info(f"[cli] {args.command}: grid={config.grid} seed={config.seed} out={config.out_dir}")
    try:
        return run(config)
    except ValueError as e:
        logging.error(f"[cli] Invalid input: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
