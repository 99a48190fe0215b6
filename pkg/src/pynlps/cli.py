"""Command-line entry point: ``pynlps <subcommand> --config run.toml [--set key=value ...]``.

Exit codes: 0 success, 1 validation error, 2 solver error, 3 verification
gate failure.  Failures print one ``ERROR <code> <module>::<op> <message>``
line on standard error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from . import __version__
from .errors import GateFailure, InvalidParameter, NLPSError, VerificationError
from .nlps import NLPS
from .utils import io

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors become validation errors (exit 1) instead of argparse's exit 2."""

    def error(self, message: str):
        raise InvalidParameter(message, "cli::run")


def _configure_logging(verbose: bool, quiet: bool) -> None:
    root = logging.getLogger("pynlps")
    handler = next((h for h in root.handlers if getattr(h, "_pynlps", False)), None)
    if handler is None:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._pynlps = True
        root.addHandler(handler)
    else:
        handler.setStream(sys.stderr)
    root.setLevel(logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _solve_linear(run: NLPS, args) -> Dict[str, Any]:
    u, report = run.solve_linear()
    run.write_outputs(u, {"command": "solve-linear", "report": report.to_dict()})
    return report.to_dict()


def _solve_quasilinear(run: NLPS, args) -> Dict[str, Any]:
    u, report = run.solve_quasilinear()
    run.write_outputs(u, {"command": "solve-quasilinear", "report": report.to_dict()})
    return report.to_dict()


def _solve_fullnl(run: NLPS, args) -> Dict[str, Any]:
    u, report = run.solve_fullnl(args.variant)
    run.write_outputs(u, {"command": "solve-fullnl", "report": report.to_dict()})
    return report.to_dict()


def _quasilinearize(run: NLPS, args) -> Dict[str, Any]:
    induced = run.quasilinearize()
    out = {"induced": induced.skeleton()}
    run.write_outputs(None, {"command": "quasilinearize", "report": out})
    return out


def _norms(run: NLPS, args) -> Dict[str, Any]:
    field = None
    if args.field is not None:
        field, _ = io.read_nltf(args.field)
    out = run.norms(field)
    run.write_outputs(None, {"command": "norms", "report": out})
    return out


def _verify_mms(run: NLPS, args) -> Dict[str, Any]:
    out = run.verify_mms().to_dict()
    run.write_outputs(None, {"command": "verify-mms", "report": out})
    return out


def _check_equivalence(run: NLPS, args) -> Dict[str, Any]:
    out = run.check_equivalence()
    run.write_outputs(run.field, {"command": "check-equivalence", "report": out})
    return out


def _convergence(run: NLPS, args) -> Dict[str, Any]:
    result = run.convergence()
    out = result.to_dict()
    run.write_outputs(None, {"command": "convergence", "report": out})
    if "csv" in run.config["output"]["formats"]:
        path = run.output_dir / "convergence.csv"
        result.to_frame().to_csv(path, index=False, float_format=io.FLOAT_FORMAT, lineterminator="\n")
    return out


def _check_ellipticity(run: NLPS, args) -> Dict[str, Any]:
    out = run.check_ellipticity()
    run.write_outputs(None, {"command": "check-ellipticity", "report": out})
    if not out["ellipticity"]["passed"]:
        worst = out["ellipticity"]["worst_case"]
        raise GateFailure(f"ellipticity fails: min ratio {out['ellipticity']['min_ratio']:.4g} "
                          f"({worst.get('which')} symbol at t={worst.get('t')}, s={worst.get('s')})",
                          "systems::check_ellipticity")
    return out


COMMANDS: Dict[str, Callable[[NLPS, argparse.Namespace], Dict[str, Any]]] = {
    "solve-linear": _solve_linear,
    "solve-quasilinear": _solve_quasilinear,
    "solve-fullnl": _solve_fullnl,
    "quasilinearize": _quasilinearize,
    "norms": _norms,
    "verify-mms": _verify_mms,
    "check-equivalence": _check_equivalence,
    "convergence": _convergence,
    "check-ellipticity": _check_ellipticity,
}

HELP = {
    "solve-linear": "solve a nonlocal linear system",
    "solve-quasilinear": "solve a quasilinear system by fixed-point iteration",
    "solve-fullnl": "solve a fully nonlinear problem by quasilinearization",
    "quasilinearize": "print the induced quasilinear system of a fully nonlinear problem",
    "norms": "Hölder norms of a solution (solved, or read with --field)",
    "verify-mms": "manufactured-solution gate",
    "check-equivalence": "compare the spatial and temporal quasilinearization routes",
    "convergence": "observed convergence orders on a grid sequence",
    "check-ellipticity": "ellipticity and regularity-assumption estimates",
}


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = _ArgumentParser(prog="pynlps", description="Solvers and checks for nonlocal parabolic systems.")
    parser.add_argument("--version", action="version", version=f"pynlps {__version__}")
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run config (.json or .toml)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. grid.n_tau=128")
    common.add_argument("--threads", type=int, help="worker threads per level (1 = bit-deterministic serial)")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common], help=HELP[name])
        if name == "solve-fullnl":
            cmd.add_argument("--variant", choices=["spatial", "temporal"])
        if name == "norms":
            cmd.add_argument("--field", type=Path, help="NLTF file to measure instead of solving")
    return parser.parse_args(argv)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse *argv*, dispatch the subcommand and map errors to exit codes."""
    nlps = None
    try:
        args = _parse_args(argv)
        _configure_logging(args.verbose, args.quiet)
        if args.config is None and not args.overrides:
            raise InvalidParameter("no configuration: pass --config or --set problem.preset=<name>", "cli::run")
        nlps = NLPS.from_file(args.config, args.overrides, args.threads)
        COMMANDS[args.command](nlps, args)
        logger.info("%s finished; artifacts in %s", args.command, nlps.output_dir)
        return 0
    except NLPSError as exc:
        if isinstance(exc, VerificationError) and nlps is not None and nlps.report:
            nlps.write_outputs(None, {"report": nlps.report, "error": exc.error_line()})
        print(exc.error_line(), file=sys.stderr)
        return exc.exit_code


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
