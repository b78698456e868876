"""Command-line front end.

Verbs: ``run``, ``sweep``, ``montecarlo``, ``locc-replay``.
Exit codes: 0 success, 1 statistical-test failure, 2 validation error,
3 internal assertion.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .cavity import CavityParams, optimal_times, run_cavity_protocol
from .errors import SolverError, WDistillError
from .locc import cavity_session, protocol1_session, protocol2_session, read_log, replay
from .montecarlo import PROTOCOLS, compare_frequencies, report_from_counts, simulate_trials
from .protocols import (
    Classification,
    WCoefficients,
    analytic_probabilities,
    run_protocol1,
    run_protocol2,
    totals_by_class,
    w_state,
)
from .statevec import concurrence, fidelity, partial_trace

log = logging.getLogger("wdistill")

EXIT_OK, EXIT_STAT_FAIL, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2, 3
RENORM_TOL = 1e-6
SWEEP_CSV_VERSION = "wdistill-sweep/1"
SWEEP_COLUMNS = ["a2", "b2", "c2", "p_w", "p_bell", "p_fail", "p_w_simulated", "max_abs_error"]


class ValidationError(WDistillError, ValueError):
    """Bad command-line input."""


# -- coefficient handling ----------------------------------------------------


def _parse_triple(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValidationError(f"expected three comma-separated values, got {text!r}")
    try:
        return [float(Fraction(p)) for p in parts]
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"cannot parse coefficients {text!r}") from None


def coefficients_from_args(amp: str | None, sq: str | None, allow_unsorted: bool = False):
    """Build validated coefficients from ``--amp`` or ``--sq``.

    Returns ``(coeffs, permutation)`` where ``permutation[i]`` is the input
    position that ended up in slot ``i`` of ``(a, b, c)``.
    """
    if (amp is None) == (sq is None):
        raise ValidationError("give exactly one of --amp or --sq")
    if sq is not None:
        squares = _parse_triple(sq)
        if min(squares) < 0:
            raise ValidationError("squared coefficients must be non-negative")
        values = [math.sqrt(x) for x in squares]
    else:
        values = _parse_triple(amp)
        if min(values) < 0:
            raise ValidationError("amplitudes must be non-negative (a >= b >= c >= 0)")
    perm = [0, 1, 2]
    if not (values[0] >= values[1] >= values[2]):
        if not allow_unsorted:
            raise ValidationError(
                "ordering invariant a >= b >= c violated by "
                f"({values[0]:.6g}, {values[1]:.6g}, {values[2]:.6g}); pass --allow-unsorted to relabel"
            )
        perm = sorted(range(3), key=lambda i: -values[i])
        values = [values[i] for i in perm]
        log.warning("sorted coefficients descending; permutation %s", perm)
    norm2 = sum(v * v for v in values)
    if abs(norm2 - 1.0) > RENORM_TOL:
        raise ValidationError(f"normalization a^2 + b^2 + c^2 = 1 violated: sum is {norm2:.12g}")
    if abs(norm2 - 1.0) > 1e-12:
        log.warning("renormalizing coefficients (a^2 + b^2 + c^2 = %.12g)", norm2)
        values = [v / math.sqrt(norm2) for v in values]
    coeffs = WCoefficients(*values)
    if coeffs.degenerate:
        log.warning("c = 0: the W state cannot be extracted (success probability 0)")
    return coeffs, perm


def _cavity_params(args) -> CavityParams:
    omega = args.omega
    omega0 = args.omega0 if args.omega0 is not None else omega
    return CavityParams(omega=omega, omega0=omega0, epsilon=args.epsilon, n_max=args.n_max, frame=args.frame)


# -- run -----------------------------------------------------------------------


def _branch_row(outcome) -> dict:
    fid = conc = None
    post = outcome.post_state
    if post is not None:
        fid = fidelity(post, w_state(post.labels))
        conc = concurrence(partial_trace(post, ["2", "3"]))
    return {
        "label": outcome.branch_label,
        "probability": outcome.probability,
        "classification": outcome.classification.value,
        "fidelity": fid,
        "concurrence": conc,
        "ket": post.ket_string() if post is not None else None,
    }


def build_run_result(protocol: str, coeffs: WCoefficients, params: CavityParams | None = None) -> dict:
    """Structured result of one exact protocol run (the JSON schema of ``run``)."""
    if protocol == "protocol1":
        outcomes = run_protocol1(coeffs)
    elif protocol == "protocol2":
        outcomes = run_protocol2(coeffs)
    elif protocol == "cavity":
        outcomes = run_cavity_protocol(coeffs, params or CavityParams())
    else:
        raise ValidationError(f"unknown protocol {protocol!r}")
    totals = totals_by_class(outcomes)
    a2, b2, c2 = coeffs.squares
    result = {
        "protocol": protocol,
        "coefficients": {"a2": a2, "b2": b2, "c2": c2},
        "branches": [_branch_row(o) for o in outcomes],
        "summary": {
            "p_w": totals[Classification.W_SUCCESS],
            "p_bell": totals[Classification.BELL_SUCCESS],
            "p_fail": totals[Classification.FAILURE],
        },
        "analytic": analytic_probabilities(coeffs).as_dict(),
    }
    if protocol == "cavity":
        params = params or CavityParams()
        times = optimal_times(coeffs, params.epsilon)
        result["cavity"] = {"dt1": times.dt1, "dt2": times.dt2, "frame": params.frame}
    return result


def _emit(result: dict, fmt: str, out) -> None:
    if fmt == "json":
        json.dump(result, out, indent=2)
        out.write("\n")
    elif fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["label", "probability", "classification", "fidelity", "concurrence"])
        for b in result["branches"]:
            w.writerow([b["label"], _num(b["probability"]), b["classification"], _num(b["fidelity"]), _num(b["concurrence"])])
    else:
        co = result["coefficients"]
        out.write(f"protocol {result['protocol']}  a^2={co['a2']:.6g} b^2={co['b2']:.6g} c^2={co['c2']:.6g}\n")
        if "cavity" in result:
            cav = result["cavity"]
            out.write(f"interaction times dt1={cav['dt1']:.9g} dt2={cav['dt2']:.9g} ({cav['frame']} frame)\n")
        out.write(f"{'branch':<16}{'probability':>14}  {'class':<13}{'fidelity':>10}{'concurrence':>13}  state |123>\n")
        for b in result["branches"]:
            fid = "-" if b["fidelity"] is None else f"{b['fidelity']:.6f}"
            con = "-" if b["concurrence"] is None else f"{b['concurrence']:.6f}"
            out.write(f"{b['label']:<16}{b['probability']:>14.9f}  {b['classification']:<13}{fid:>10}{con:>13}  {b['ket'] or '-'}\n")
        s = result["summary"]
        out.write(f"p_w={s['p_w']:.12g} p_bell={s['p_bell']:.12g} p_fail={s['p_fail']:.12g}\n")


def _num(x) -> str:
    return "" if x is None else format(x, ".17g")


def _default_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("WDISTILL_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"WDISTILL_SEED must be an integer, got {env!r}") from None
    return None


def cmd_run(args) -> int:
    coeffs, perm = coefficients_from_args(args.amp, args.sq, args.allow_unsorted)
    params = _cavity_params(args) if args.protocol == "cavity" else None
    result = build_run_result(args.protocol, coeffs, params)
    if perm != [0, 1, 2]:
        result["permutation"] = perm
    if args.locc_log:
        seed = _default_seed(args.seed)
        rng = np.random.default_rng(seed)
        if args.protocol == "protocol1":
            session = protocol1_session(coeffs, rng=rng)
        elif args.protocol == "protocol2":
            session = protocol2_session(coeffs, rng=rng)
        else:
            session = cavity_session(coeffs, params, rng=rng)
        session.write_log(args.locc_log)
    _emit(result, args.format, sys.stdout)
    return EXIT_OK


# -- sweep ---------------------------------------------------------------------


def _parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(Fraction(parts[0]))])
        if len(parts) == 3:
            start, stop, num = float(Fraction(parts[0])), float(Fraction(parts[1])), int(parts[2])
            if num < 1:
                raise ValueError
            return np.linspace(start, stop, num)
    except (ValueError, ZeroDivisionError):
        pass
    raise ValidationError(f"grid must be VALUE or START:STOP:NUM, got {text!r}")


def sweep_grid(c2_spec: str, b2_spec: str | None, protocol: str = "protocol1") -> list[tuple[float, float, float]]:
    """Valid ``(a2, b2, c2)`` points, sorted by ``(c2, b2)``.

    Protocol 2 additionally needs ``b > 0``.
    """
    points = []
    for c2 in _parse_range(c2_spec):
        b2_values = [(1.0 - c2) / 2.0] if b2_spec is None else _parse_range(b2_spec)
        for b2 in b2_values:
            a2 = (1.0 - c2) / 2.0 if b2_spec is None else 1.0 - b2 - c2
            if protocol == "protocol2" and b2 <= 0:
                continue
            if c2 >= 0 and b2 >= c2 and a2 >= b2:
                points.append((float(a2), float(b2), float(c2)))
    return sorted(set(points), key=lambda p: (p[2], p[1]))


def sweep_rows(protocol: str, points, params: CavityParams | None = None) -> list[dict]:
    rows = []
    for a2, b2, c2 in points:
        coeffs = WCoefficients.from_squares(a2, b2, c2)
        sim = build_run_result(protocol, coeffs, params)["summary"]
        exact = analytic_probabilities(coeffs)
        if protocol == "protocol2":
            ref = {"p_w": exact.p_w, "p_bell": exact.p_bell, "p_fail": exact.p_fail}
        else:
            ref = {"p_w": exact.p_w, "p_bell": 0.0, "p_fail": 1.0 - exact.p_w}
        err = max(abs(sim[k] - ref[k]) for k in ref)
        rows.append(dict(a2=a2, b2=b2, c2=c2, **ref, p_w_simulated=sim["p_w"], max_abs_error=err))
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    """Write rows atomically (temp file in the target directory, then rename)."""
    buf = io.StringIO()
    buf.write(f"# {SWEEP_CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([format(r[k], ".17g") for k in SWEEP_COLUMNS])
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_sweep_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(lines)]


def cmd_sweep(args) -> int:
    points = sweep_grid(args.c2, args.b2, args.protocol)
    if not points:
        raise ValidationError("grid is empty after restricting to a^2 >= b^2 >= c^2 >= 0")
    params = _cavity_params(args) if args.protocol == "cavity" else None
    rows = sweep_rows(args.protocol, points, params)
    write_sweep_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


# -- montecarlo ------------------------------------------------------------------


def cmd_montecarlo(args) -> int:
    coeffs, perm = coefficients_from_args(args.amp, args.sq, args.allow_unsorted)
    params = _cavity_params(args) if args.protocol == "cavity" else None
    seed = _default_seed(args.seed)
    if args.force_counts:
        try:
            w, b, f = (int(x) for x in args.force_counts.split(","))
        except ValueError:
            raise ValidationError("--force-counts takes three integers W,BELL,FAIL") from None
        report = report_from_counts(
            args.protocol, coeffs, {"W_SUCCESS": w, "BELL_SUCCESS": b, "FAILURE": f}, seed
        )
    else:
        if args.trials < 1:
            raise ValidationError("--trials must be >= 1")
        report = simulate_trials(args.protocol, coeffs, args.trials, seed, params, workers=args.workers)
    verdict = compare_frequencies(report, args.threshold)
    result = build_run_result(args.protocol, coeffs, params)
    if perm != [0, 1, 2]:
        result["permutation"] = perm
    mc = report.to_dict()
    mc["z_scores"] = {k: v for k, v in mc["z_scores"].items() if v is not None}
    mc["threshold"] = verdict.threshold
    mc["passed"] = verdict.passed
    mc["impossible"] = list(verdict.impossible)
    result["montecarlo"] = mc
    json.dump(result, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK if verdict.passed else EXIT_STAT_FAIL


# -- locc-replay -----------------------------------------------------------------


def cmd_locc_replay(args) -> int:
    try:
        events = read_log(args.log)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"cannot read session log {args.log}: {exc}") from None
    session = replay(events)
    st = session.state
    result = {
        "events": len(session.log),
        "violations": session.violations,
        "owners": dict(session.registry),
        "final_state": {
            "labels": list(st.labels),
            "dims": list(st.dims),
            "amplitudes": [[float(z.real), float(z.imag)] for z in st.amplitudes],
            "ket": st.ket_string(),
        },
    }
    json.dump(result, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _add_coeff_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--amp", help="amplitudes a,b,c (fractions allowed, e.g. 1/2)")
    g.add_argument("--sq", help="squared amplitudes a2,b2,c2 (e.g. 1/3,1/3,1/3)")
    p.add_argument("--allow-unsorted", action="store_true", help="sort coefficients descending and report the permutation")


def _add_protocol_args(p):
    p.add_argument("--protocol", choices=PROTOCOLS, default="protocol1")
    p.add_argument("--frame", choices=("interaction", "lab"), default="interaction")
    p.add_argument("--epsilon", type=float, default=1.0, help="atom-field coupling (rad per unit time)")
    p.add_argument("--omega", type=float, default=0.0, help="cavity angular frequency")
    p.add_argument("--omega0", type=float, default=None, help="atomic angular frequency (defaults to --omega)")
    p.add_argument("--n-max", type=int, default=1, help="Fock truncation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wdistill", description="W-class state distillation simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="exact branch enumeration of one protocol")
    _add_coeff_args(p)
    _add_protocol_args(p)
    p.add_argument("--format", choices=("json", "csv", "human"), default="human")
    p.add_argument("--seed", type=int, default=None, help="seed for the sampled session log")
    p.add_argument("--locc-log", default=None, help="also write a sampled LOCC session log (JSON lines)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="probability table over a coefficient grid")
    _add_protocol_args(p)
    p.add_argument("--c2", required=True, help="c^2 grid: VALUE or START:STOP:NUM")
    p.add_argument("--b2", default=None, help="b^2 grid; omit for the a = b line")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("montecarlo", help="sampled trials with a z-test against the analytic law")
    _add_coeff_args(p)
    _add_protocol_args(p)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None, help="master seed (default: $WDISTILL_SEED)")
    p.add_argument("--threshold", type=float, default=4.0, help="|z| bound for a pass")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--force-counts", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("locc-replay", help="replay a session log and print the final state")
    p.add_argument("log", help="JSON-lines session log")
    p.set_defaults(func=cmd_locc_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (WDistillError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AssertionError as exc:
        print(f"internal assertion: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
