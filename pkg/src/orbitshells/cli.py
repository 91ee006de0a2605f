"""Command-line interface.

Every file argument accepts ``-`` for stdin/stdout, so the JSON stages pipe:

    orbitshells synth --seed 1 | orbitshells invariants - | orbitshells recover - \\
        | orbitshells align - truth.json

Exit status: 0 success, 1 usage error (bad flags, unreadable or malformed
input), 2 numerical failure (rank-deficient or infeasible system).  Failures
print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, model
from .errors import FormatError, InfeasibleError, NumericalError, RankDeficientError
from .invariants import bundle_from_dict, bundle_to_dict, compute_invariants
from .model import (
    COMPLEX,
    REAL,
    ExpansionConfig,
    coefficients_from_dict,
    coefficients_to_dict,
    expand_volume,
    load_volume,
    random_coefficients,
    render_volume,
)
from .recovery import RecoveryOptions, min_shells_bound, rank_audit, recover
from .rotation import align

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# io helpers


def _read_json(path: str):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise UsageError(str(exc)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


def _write_text(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).write_text(text)


def _write_json(path: str | None, obj) -> None:
    _write_text(path, json.dumps(obj) + "\n")


def _read_coeffs(path):
    return coefficients_from_dict(_read_json(path))


def _read_volume(path, fmt):
    if path == "-":
        raise UsageError("volumes cannot be read from stdin")
    return load_volume(path, fmt)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(a):
    coeffs = random_coefficients(a.seed, a.ellmax, a.shells, a.basis)
    _write_json(a.output, coefficients_to_dict(coeffs))


def cmd_expand(a):
    grid = _read_volume(a.volume, a.format)
    coeffs, cond = expand_volume(grid, ExpansionConfig(a.ellmax, a.shells, a.regularization))
    if a.basis == COMPLEX:
        coeffs = coeffs.to_complex()
    _write_json(a.output, coefficients_to_dict(coeffs))
    logging.getLogger(__name__).info("expansion design condition %.4g", cond)


def cmd_render(a):
    grid = render_volume(_read_coeffs(a.coefficients), a.size)
    if a.output in (None, "-"):
        raise UsageError("render needs --output FILE (binary volume)")
    model.save_volume(grid, a.output)


def cmd_invariants(a):
    _write_json(a.output, bundle_to_dict(compute_invariants(_read_coeffs(a.coefficients))))


def cmd_recover(a):
    bundle = bundle_from_dict(_read_json(a.bundle), allow_missing=True)
    known = _read_coeffs(a.known_low) if a.known_low else None
    opts = RecoveryOptions(known_low_frequencies=known, rcond_threshold=a.rcond,
                           use_all_equations=not a.subset_mode)
    coeffs, report = recover(bundle, opts)
    _write_json(a.output, coefficients_to_dict(coeffs))
    if a.report:
        _write_json(a.report, report.to_dict())


def cmd_align(a):
    if a.estimate == "-" and a.truth == "-":
        raise UsageError("only one of the two inputs may be stdin")
    res = align(_read_coeffs(a.estimate), _read_coeffs(a.truth))
    out = {
        "alpha": res.rotation.alpha,
        "beta": res.rotation.beta,
        "gamma": res.rotation.gamma,
        "reflected": res.reflected,
        "relative_error": res.relative_error,
        "warning": res.warning,
    }
    _write_json(a.output, out)


def cmd_rank_audit(a):
    res = rank_audit(a.ellmax, a.shells, a.trials, a.seed, use_all=not a.subset_mode, rcond=a.rcond)
    _write_json(a.output, res)


def cmd_cond_table(a):
    grid = _read_volume(a.volume, a.format)
    rows = harness.condition_table(grid, a.ellmax, a.shells, use_all=not a.subset_mode)
    _write_text(a.output, harness.condition_rows_to_csv(rows))


def cmd_noise_exp(a):
    try:
        cfg = harness.NoiseExperimentConfig.from_file(a.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {exc}") from None
    if a.full_recovery:
        cfg.full_recovery = True
    if a.seed is not None:
        cfg.seed = a.seed
    table = harness.noise_experiment(cfg)
    _write_text(a.output, table.to_csv())
    for r in table.rows:
        if r.error:
            sys.stderr.write(json.dumps({"shells": r.shells, "error": r.error}) + "\n")


def cmd_bound(a):
    _write_text(a.output, f"{min_shells_bound(a.n, a.ellmax)}\n")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orbitshells", description="Shell-basis expansion, rotation invariants and recovery.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out(sp):
        sp.add_argument("-o", "--output", default=None, help="output file (default stdout)")

    s = sub.add_parser("synth", help="random coefficients")
    s.add_argument("--ellmax", type=int, default=10)
    s.add_argument("--shells", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--basis", choices=[REAL, COMPLEX], default=REAL)
    out(s)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("expand", help="volume -> coefficients")
    s.add_argument("volume")
    s.add_argument("--ellmax", type=int, default=10)
    s.add_argument("--shells", type=int, default=8)
    s.add_argument("--format", choices=[model.RAW_F64, model.MRC], default=model.RAW_F64)
    s.add_argument("--regularization", type=float, default=0.0)
    s.add_argument("--basis", choices=[REAL, COMPLEX], default=REAL)
    out(s)
    s.set_defaults(func=cmd_expand)

    s = sub.add_parser("render", help="coefficients -> volume (raw_f64)")
    s.add_argument("coefficients")
    s.add_argument("--size", type=int, default=31)
    out(s)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("invariants", help="coefficients -> invariant bundle")
    s.add_argument("coefficients")
    out(s)
    s.set_defaults(func=cmd_invariants)

    s = sub.add_parser("recover", help="bundle -> coefficients by frequency marching")
    s.add_argument("bundle")
    s.add_argument("--known-low", default=None, help="coefficient file supplying l = 0, 1")
    s.add_argument("--rcond", type=float, default=1e-10)
    s.add_argument("--subset-mode", action="store_true", help="use only the constructive pair set")
    s.add_argument("--report", default=None, help="write the recovery report (JSON) here")
    out(s)
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("align", help="best rotation of ESTIMATE onto TRUTH")
    s.add_argument("estimate")
    s.add_argument("truth")
    out(s)
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("rank-audit", help="rank of marching systems for random signals")
    s.add_argument("--ellmax", type=int, default=16)
    s.add_argument("--shells", type=int, default=3)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rcond", type=float, default=1e-10)
    s.add_argument("--subset-mode", action="store_true")
    out(s)
    s.set_defaults(func=cmd_rank_audit)

    s = sub.add_parser("cond-table", help="per-l, per-R condition numbers (CSV)")
    s.add_argument("volume")
    s.add_argument("--format", choices=[model.RAW_F64, model.MRC], default=model.RAW_F64)
    s.add_argument("--ellmax", type=int, default=10)
    s.add_argument("--shells", type=int, nargs="+", default=[3, 4, 5])
    s.add_argument("--subset-mode", action="store_true")
    out(s)
    s.set_defaults(func=cmd_cond_table)

    s = sub.add_parser("noise-exp", help="noise-averaging study from a config file (CSV)")
    s.add_argument("config")
    s.add_argument("--full-recovery", action="store_true", help="recover l = 0, 1 instead of using the truth")
    s.add_argument("--seed", type=int, default=None, help="override the config seed")
    out(s)
    s.set_defaults(func=cmd_noise_exp)

    s = sub.add_parser("bound", help="minimum shell count for SO(n) recovery")
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--ellmax", type=int, required=True)
    out(s)
    s.set_defaults(func=cmd_bound)
    return p


def _error_payload(exc: Exception, kind: str) -> dict:
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, (InfeasibleError, RankDeficientError)):
        for name in ("ell", "num_equations", "rank", "num_unknowns", "condition"):
            if hasattr(exc, name):
                payload[name] = getattr(exc, name)
    return payload


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(json.dumps({"error": "usage", "type": "UsageError", "message": str(exc)}) + "\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericalError as exc:
        sys.stderr.write(json.dumps(_error_payload(exc, "numerical")) + "\n")
        return EXIT_NUMERICAL
    except (UsageError, ValueError, OSError) as exc:
        sys.stderr.write(json.dumps(_error_payload(exc, "usage")) + "\n")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
