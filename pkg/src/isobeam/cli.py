"""Command-line interface.

Subcommands ``solve`` (deterministic equivalents only), ``mc`` (Monte Carlo
only), ``sweep`` (both) and ``stream-search``. Exit status is 0 on success,
1 for invalid input and 2 when a computation failed.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_scenario
from .errors import InputError, IsobeamError, NumericalError
from .fixed_point import SolverConfig
from .metrics import to_unit
from .montecarlo import METRICS, replicate_samples, summarize
from .scenarios import (
    InterferenceChannelSpec,
    ScenarioSpec,
    rate_with_interference_det,
    realize,
    snr_db_to_sigma2,
    stream_control_search,
)

log = logging.getLogger("isobeam")

SWEEP_HEADER = ["snr_db", "metric", "det_value", "mc_mean", "mc_std", "mc_stderr",
                "n_reps", "unit", "status"]
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def parse_snr(text):
    """``"0,10,20"`` or an inclusive range ``"start:stop:step"``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3 or parts[2] == 0:
                raise ValueError
            start, stop, step = parts
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            if count < 1:
                raise ValueError
            return [start + i * step for i in range(count)]
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid SNR list or range: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty SNR list")
    return values


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x))


def _run_sweep(spec, snr_db, n_reps, seed, det, unit, cfg, workers):
    """Rows of the sweep table and the JSON diagnostics."""
    scn = realize(spec)
    sigma2 = [float(s) for s in snr_db_to_sigma2(snr_db)]
    stats = None
    mc_error = None
    if n_reps > 0:
        try:
            samples = replicate_samples(scn, n_reps, seed, sigma2, METRICS, workers)
            stats = [{m: summarize(samples[:, i, j], m, seed) for j, m in enumerate(METRICS)}
                     for i in range(len(sigma2))]
        except IsobeamError as exc:
            mc_error = exc
    rows, diag, failed = [], [], []
    for i, (db, s2) in enumerate(zip(snr_db, sigma2)):
        det_vals, status, info = {}, "ok", {"snr_db": db, "sigma2": s2}
        if det:
            try:
                res = rate_with_interference_det(scn, s2, cfg)
                det_vals = {"mutual_info": res.mutual_info, "mmse_sum_rate": res.mmse_sum_rate}
                if res.mmse_sum_rate > res.mutual_info + 1e-12:
                    # only guaranteed in the large-system limit
                    log.warning("snr %s dB: deterministic MMSE rate exceeds mutual information",
                                db)
                sols = [res.solution] + ([res.interference_solution]
                                         if res.interference_solution is not None else [])
                info["solver"] = [{"outer_iters": s.outer_iters, "residual": s.residual}
                                  for s in sols]
            except IsobeamError as exc:
                status = f"error: {type(exc).__name__}: {exc}"
                failed.append(exc)
        if mc_error is not None:
            status = f"error: {type(mc_error).__name__}: {mc_error}"
        for m in METRICS:
            row = {"snr_db": _fmt(db), "metric": m, "unit": unit, "status": status,
                   "det_value": _fmt(to_unit(det_vals[m], unit)) if m in det_vals else "",
                   "mc_mean": "", "mc_std": "", "mc_stderr": "",
                   "n_reps": str(n_reps) if n_reps > 0 else ""}
            if stats is not None:
                st = stats[i][m]
                row.update(mc_mean=_fmt(to_unit(st.mean, unit)),
                           mc_std=_fmt(to_unit(st.std_dev, unit)),
                           mc_stderr=_fmt(to_unit(st.std_err, unit)))
            rows.append(row)
        diag.append(info)
    if mc_error is not None:
        failed.append(mc_error)
    return rows, diag, failed


def _write_csv(rows, header, stream, summary=None):
    writer = csv.DictWriter(stream, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if summary:
        stream.write(summary + "\n")


def _emit(args, rows, header, payload, summary=None):
    buf = io.StringIO()
    _write_csv(rows, header, buf, summary)
    text = buf.getvalue()
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8", newline="\n")
        if args.json:
            out.with_suffix(".json").write_text(json.dumps(payload, indent=2) + "\n",
                                                encoding="utf-8")
    elif args.json:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(text)


def _solver_config(args):
    kw = {}
    if args.tol is not None:
        kw["tol"] = args.tol
    if args.max_iter is not None:
        kw["max_outer"] = kw["max_inner"] = args.max_iter
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _grid(args, spec):
    snr = args.snr_db if args.snr_db is not None else list(spec.snr_db)
    if not snr:
        raise InputError("no SNR grid: pass --snr-db or set snr_db in the scenario")
    return snr


def cmd_table(args, det, default_reps):
    spec = parse_scenario(args.scenario)
    if not isinstance(spec, ScenarioSpec):
        raise InputError(f"{args.command} needs a quasi_static or fading scenario")
    n_reps = default_reps if args.reps is None else args.reps
    if n_reps < 0 or (not det and n_reps < 1):
        raise InputError("--reps must be >= 1 for mc and >= 0 otherwise")
    snr = _grid(args, spec)
    rows, diag, failed = _run_sweep(spec, snr, n_reps, args.seed, det, args.unit,
                                    _solver_config(args), args.workers)
    payload = {"scenario": spec.name, "command": args.command, "seed": args.seed,
               "n_reps": n_reps, "unit": args.unit, "rows": rows, "diagnostics": diag}
    _emit(args, rows, SWEEP_HEADER, payload)
    if failed:
        for exc in failed:
            log.error("%s", exc)
        return EXIT_INPUT if all(isinstance(e, InputError) for e in failed) else EXIT_NUMERICAL
    return EXIT_OK


def cmd_stream_search(args):
    spec = parse_scenario(args.scenario)
    if not isinstance(spec, InterferenceChannelSpec):
        raise InputError("stream-search needs an interference_channel scenario")
    snr = _grid(args, spec)
    if len(snr) != 1:
        raise InputError("stream-search takes a single SNR value")
    sigma2 = float(snr_db_to_sigma2(snr[0]))
    res = stream_control_search(spec, sigma2, _solver_config(args), workers=args.workers)
    rows = []
    m1, m2 = res.table.shape
    for n1 in range(1, m1 + 1):
        for n2 in range(1, m2 + 1):
            v = res.table[n1 - 1, n2 - 1]
            rows.append({"n1": n1, "n2": n2,
                         "sum_rate": "" if np.isnan(v) else _fmt(to_unit(v, args.unit))})
    best = (f"# best n1={res.best[0]} n2={res.best[1]} "
            f"sum_rate={_fmt(to_unit(res.objective, args.unit))} unit={args.unit} "
            f"snr_db={_fmt(snr[0])}")
    payload = {"scenario": spec.name, "snr_db": snr[0], "unit": args.unit,
               "best": list(res.best), "objective": to_unit(res.objective, args.unit),
               "rows": rows, "failures": [{"cell": list(c), "error": e} for c, e in res.failures]}
    _emit(args, rows, ["n1", "n2", "sum_rate"], payload, summary=best)
    for cell, err in res.failures:
        log.error("cell %s: %s", cell, err)
    return EXIT_NUMERICAL if res.failures else EXIT_OK


def build_parser():
    parser = _Parser(prog="isobeam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"solve": "deterministic equivalents on an SNR grid",
             "mc": "Monte Carlo estimates on an SNR grid",
             "sweep": "deterministic equivalents and Monte Carlo side by side",
             "stream-search": "best stream pair of an interference channel"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenario", required=True,
                       help="scenario file, or the name of a bundled one")
        p.add_argument("--snr-db", type=parse_snr, help="list 0,10,20 or range -5:30:5")
        p.add_argument("--tol", type=float, help="fixed-point tolerance (default 1e-10)")
        p.add_argument("--max-iter", type=int, help="iteration cap for every loop")
        p.add_argument("--unit", choices=("nats", "bits"), default="nats")
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--json", action="store_true",
                       help="also write a JSON mirror with diagnostics")
        if name != "stream-search":
            p.add_argument("--reps", type=int)
            p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_table(args, det=True, default_reps=0)
        if args.command == "mc":
            return cmd_table(args, det=False, default_reps=1000)
        if args.command == "sweep":
            return cmd_table(args, det=True, default_reps=1000)
        return cmd_stream_search(args)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except NumericalError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
