"""Command-line interface.

Exit codes: 0 success, 1 usage error (bad flags or parameter values),
2 data error (unreadable input, degenerate cells, failed self-test).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Sequence

from . import acceptance
from .data import ListDesign, summarize_cells, validate
from .dgp import DgpParams
from .errors import ListCombineError
from .estimators import Method, combined_estimate, direct_estimate, standard_list_estimate, variance_reduction
from .io import SCHEMA_VERSION, QuestionEstimates, dataset_csv, group_records, load_csv, power_csv, render_report
from .placebo import PlaceboTest, cross_study_difference, fisher_from_reports, run_batch
from .simulation import GridSpec, generate_dataset, power_test_one_grid, power_test_two

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 and sends help to stderr."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _alpha(text: str) -> float:
    v = _probability(text)
    if v in (0.0, 1.0):
        raise argparse.ArgumentTypeError("alpha must lie strictly between 0 and 1")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _j_items(text: str) -> dict[str | None, int]:
    """``4`` applies to every question; ``q1=4,q2=3`` sets lengths per question."""
    if "=" not in text:
        return {None: _positive_int(text)}
    out: dict[str | None, int] = {}
    for part in text.split(","):
        q, _, j = part.partition("=")
        if not q.strip():
            raise argparse.ArgumentTypeError(f"bad --j-items entry {part!r}")
        out[q.strip()] = _positive_int(j)
    return out


def _axis(cast):
    """Parse ``a,b,c`` or an inclusive range ``start:stop:step``."""

    def parse(text: str):
        try:
            if ":" in text:
                start, stop, step = (float(x) for x in text.split(":"))
                if step <= 0 or stop < start:
                    raise ValueError
                k = int(round((stop - start) / step))
                return [cast(round(start + i * step, 10)) for i in range(k + 1)]
            return [cast(x) for x in text.split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a list or start:stop:step range, got {text!r}") from None

    return parse


def _mapping(values: Sequence[str] | None) -> dict[str, str]:
    out = {}
    for item in values or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--column expects canonical=header, got {item!r}")
        out[key.strip()] = val.strip()
    return out


def _threads(value: int | None) -> int:
    return value if value else (os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="listcombine", description="Combined list-experiment and direct-question prevalence analysis.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def common(p, data=True):
        p.add_argument("--format", choices=("text", "json", "csv"), default="text")
        p.add_argument("--output", "-o", help="write to this file instead of standard output")
        p.add_argument("--alpha", type=_alpha, default=0.05)
        if data:
            p.add_argument("--input", "-i", required=True, help="long-format respondent CSV")
            p.add_argument("--j-items", type=_j_items, default={None: 4},
                           help="control-list length: N or q1=N,q2=M (default 4)")
            p.add_argument("--question", action="append", help="restrict to this question id (repeatable)")
            p.add_argument("--study", action="append", help="restrict to this study label (repeatable)")
            p.add_argument("--column", action="append", metavar="NAME=HEADER",
                           help="map a canonical column to a differently named header")

    p = sub.add_parser("estimate", help="direct, standard-list and combined estimates per question")
    common(p)
    p.add_argument("--variance-form", choices=("gamma", "cells"), default="gamma")

    p = sub.add_parser("placebo", help="placebo tests of the design assumptions")
    common(p)
    p.add_argument("--test", choices=("one", "two", "both"), default="one")
    p.add_argument("--fisher", action="store_true", help="combine p-values across questions within each study")

    p = sub.add_parser("compare-studies", help="differences in estimates between two studies")
    common(p)
    p.add_argument("--study-a")
    p.add_argument("--study-b")
    p.add_argument("--method", choices=("direct", "standard", "combined", "all"), default="all")

    p = sub.add_parser("simulate", help="generate a synthetic dataset as CSV")
    p.add_argument("--output", "-o")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mu", type=_probability, required=True)
    p.add_argument("--p-truthful", type=_probability, required=True)
    p.add_argument("--gamma", type=_probability, default=0.5)
    p.add_argument("--j-items", type=_positive_int, default=4)
    p.add_argument("--w-success", type=_probability, default=0.4)
    p.add_argument("--w-shift", type=float, default=0.0, help="added to the baseline success rate when X = 1")
    p.add_argument("--share-false-confessors", type=_probability, default=0.0)
    p.add_argument("--share-liars", type=_probability, default=0.0)
    p.add_argument("--share-design-affected", type=_probability, default=0.0)
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--n-yes", type=int, help="fix the number of 'Yes' answerers (conditional mode)")
    p.add_argument("--question-id", default="sim")

    p = sub.add_parser("power", help="placebo-test power by simulation or normal approximation")
    p.add_argument("--format", choices=("text", "json", "csv"), default="csv")
    p.add_argument("--output", "-o")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--test", choices=("one", "two"), required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=_positive_int, default=1000)
    p.add_argument("--threads", type=int, default=0, help="worker threads (default: all cores)")
    g = p.add_argument_group("Test I grid")
    g.add_argument("--grid", choices=("share", "variability"),
                   help="full default surface: share sweep, or baseline success sweep at share 0.20")
    g.add_argument("--n-yes", type=_axis(int), default=None)
    g.add_argument("--violation", choices=("false-confessor", "liar", "design-affected"), default="false-confessor")
    g.add_argument("--share", type=_axis(float), default=None)
    g.add_argument("--w-success", type=_axis(float), default=None)
    g.add_argument("--step", type=float, default=0.01)
    g.add_argument("--j-items", type=_positive_int, default=4)
    g.add_argument("--gamma", type=_probability, default=0.5)
    g = p.add_argument_group("Test II")
    g.add_argument("--p1", type=_probability)
    g.add_argument("--p0", type=_probability)
    g.add_argument("--n1", type=_positive_int)
    g.add_argument("--n0", type=_positive_int)
    g.add_argument("--mode", choices=("analytic", "simulated"), default="analytic")
    g.add_argument("--continuity-correction", action="store_true")
    g.add_argument("--pooled-null", action="store_true")

    p = sub.add_parser("selftest", help="run the acceptance checks at reduced replicate counts")
    p.add_argument("--scale", type=float, default=0.1, help="replicate multiplier in (0, 1]")
    p.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--only", type=int, action="append", help="run only this criterion number (repeatable)")
    parser.subcommands = sub.choices
    return parser


def _emit(payload: bytes, path: str | None) -> None:
    if path:
        with open(path, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()


def _load_groups(args):
    records = load_csv(args.input, _mapping(args.column))
    groups = group_records(records)
    if args.question:
        groups = {k: v for k, v in groups.items() if k[0] in args.question}
    if args.study:
        groups = {k: v for k, v in groups.items() if k[1] in args.study}
    if not groups:
        raise ListCombineError("no rows match the requested question/study selection")
    out = {}
    for (question, study), recs in groups.items():
        j = args.j_items.get(question, args.j_items.get(None))
        if j is None:
            raise UsageError(f"no list length given for question {question!r}")
        out[(question, study)] = validate(recs, ListDesign(j, args.alpha), question)
    return out


def _labelled(report, question, study):
    return replace(report, question=question, study=study)


def _estimate_group(ds, question, study, alpha, form) -> QuestionEstimates:
    cells = summarize_cells(ds)
    d = _labelled(direct_estimate(cells, alpha), question, study)
    s = _labelled(standard_list_estimate(cells, alpha), question, study)
    c = _labelled(combined_estimate(cells, alpha, form), question, study)
    red = variance_reduction(s.std_error, c.std_error) if s.std_error > 0 else None
    return QuestionEstimates(question, study, d, s, c, red, dict(ds.exclusions))


def cmd_estimate(args) -> int:
    groups = _load_groups(args)
    rows = [_estimate_group(ds, q, st, args.alpha, args.variance_form) for (q, st), ds in groups.items()]
    for (q, st), ds in groups.items():
        if ds.n_excluded:
            reasons = ", ".join(f"{k}: {v}" for k, v in sorted(ds.exclusions.items()))
            sys.stderr.write(f"{q}{'' if st is None else f' [{st}]'}: excluded {ds.n_excluded} ({reasons})\n")
    _emit(render_report(rows, args.format), args.output)
    return EXIT_OK


def cmd_placebo(args) -> int:
    groups = _load_groups(args)
    tests = {"one": [PlaceboTest.ONE], "two": [PlaceboTest.TWO], "both": [PlaceboTest.ONE, PlaceboTest.TWO]}[args.test]
    out = []
    studies: dict[str | None, dict[str, object]] = {}
    for (q, st), ds in groups.items():
        studies.setdefault(st, {})[q] = summarize_cells(ds)
    for test in tests:
        for st, summaries in studies.items():
            reports, failed = run_batch(summaries, test, args.alpha)
            for q, reason in failed.items():
                sys.stderr.write(f"{q}{'' if st is None else f' [{st}]'}: {test.value} not run: {reason}\n")
            labelled = {q: _labelled(r, q, st) for q, r in reports.items()}
            out.extend(labelled.values())
            if args.fisher:
                if not labelled:
                    raise ListCombineError(f"no testable questions for the {test.value} Fisher combination")
                res = fisher_from_reports(labelled, failed)
                label = test.value if st is None else f"{test.value} {st}"
                out.append((res, label))
    if not out:
        raise ListCombineError("no question could be tested")
    _emit(render_report(out, args.format), args.output)
    return EXIT_OK


def cmd_compare(args) -> int:
    groups = _load_groups(args)
    studies = []
    for (_, st) in groups:
        if st not in studies:
            studies.append(st)
    a = args.study_a if args.study_a is not None else (studies[0] if len(studies) == 2 else None)
    b = args.study_b if args.study_b is not None else (studies[1] if len(studies) == 2 else None)
    if a is None or b is None:
        raise UsageError(f"found studies {studies}; name two with --study-a and --study-b")
    methods = {"direct": [Method.DIRECT], "standard": [Method.STANDARD], "combined": [Method.COMBINED],
               "all": [Method.DIRECT, Method.STANDARD, Method.COMBINED]}[args.method]
    est_fn = {Method.DIRECT: lambda c: direct_estimate(c, args.alpha),
              Method.STANDARD: lambda c: standard_list_estimate(c, args.alpha),
              Method.COMBINED: lambda c: combined_estimate(c, args.alpha)}
    questions = [q for (q, st) in groups if st == a and (q, b) in groups]
    if not questions:
        raise ListCombineError(f"no question appears in both study {a!r} and study {b!r}")
    out = []
    for q in questions:
        ca, cb = summarize_cells(groups[(q, a)]), summarize_cells(groups[(q, b)])
        for m in methods:
            ra = _labelled(est_fn[m](ca), q, a)
            rb = _labelled(est_fn[m](cb), q, b)
            out.append(cross_study_difference(ra, rb))
    _emit(render_report(out, args.format), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        params = DgpParams(
            mu=args.mu, p_truthful=args.p_truthful, gamma=args.gamma, j_items=args.j_items,
            w_success=args.w_success, share_false_confessors=args.share_false_confessors,
            share_liars=args.share_liars, share_design_affected=args.share_design_affected,
            n=args.n, n_yes=args.n_yes, w_shift=args.w_shift,
        )
    except ListCombineError as exc:
        raise UsageError(str(exc)) from exc
    ds = generate_dataset(params, args.seed, args.question_id)
    _emit(dataset_csv(ds), args.output)
    return EXIT_OK


def _power_grid(args) -> GridSpec:
    if args.grid == "share":
        grid = GridSpec.share_sweep(args.violation, args.step)
    elif args.grid == "variability":
        grid = GridSpec.variability_panel(args.step)
    else:
        grid = GridSpec(violation_type=args.violation)
    changes = {"j_items": args.j_items, "gamma": args.gamma}
    if args.n_yes is not None:
        changes["n_yes"] = tuple(args.n_yes)
    w = args.w_success
    share = args.share
    if args.grid == "variability" or (w is not None and len(w) > 1):
        changes["axis"] = "w_success"
        if w is not None:
            changes["values"] = tuple(w)
        if share is not None:
            if len(share) != 1:
                raise UsageError("a baseline-success sweep takes a single --share")
            changes["fixed_share"] = share[0]
    else:
        if share is not None:
            changes["values"] = tuple(share)
        if w is not None:
            changes["w_success"] = w[0]
    try:
        return replace(grid, **changes)
    except ListCombineError as exc:
        raise UsageError(str(exc)) from exc


def cmd_power(args) -> int:
    if args.test == "one":
        if args.seed is None:
            raise UsageError("--seed is required for simulated power")
        grid = _power_grid(args)
        cells = power_test_one_grid(grid, args.replicates, args.alpha, args.seed, _threads(args.threads))
        payload = power_csv(cells) if args.format == "csv" else render_report(cells, args.format)
        _emit(payload, args.output)
        return EXIT_OK
    missing = [f"--{k}" for k in ("p1", "p0", "n1", "n0") if getattr(args, k) is None]
    if missing:
        raise UsageError(f"Test II power needs {', '.join(missing)}")
    if args.mode == "simulated" and args.seed is None:
        raise UsageError("--seed is required for simulated power")
    if args.n1 < 2 or args.n0 < 2:
        raise UsageError("each arm needs at least two respondents")
    power = power_test_two(args.p1, args.p0, args.n1, args.n0, args.alpha, args.mode, args.replicates,
                           args.seed or 0, args.continuity_correction, args.pooled_null)
    fields = {"p1": args.p1, "p0": args.p0, "n1": args.n1, "n0": args.n0, "alpha": args.alpha,
              "mode": args.mode, "replicates": args.replicates if args.mode == "simulated" else None,
              "seed": args.seed if args.mode == "simulated" else None, "power": float(power)}
    _emit(_render_fields(fields, args.format), args.output)
    return EXIT_OK


def _render_fields(fields: dict, fmt: str) -> bytes:
    if fmt == "json":
        return (json.dumps({"schema_version": SCHEMA_VERSION, **fields, "diagnostics": []}, indent=2) + "\n").encode()
    if fmt == "csv":
        head = ",".join(fields)
        row = ",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in fields.values())
        return f"{head}\n{row}\n".encode()
    lines = [f"{k}: {v:.3f}" if isinstance(v, float) else f"{k}: {v}" for k, v in fields.items() if v is not None]
    return ("\n".join(lines) + "\n").encode()


def cmd_selftest(args) -> int:
    if not 0.0 < args.scale <= 1.0:
        raise UsageError("--scale must lie in (0, 1]")
    only = set(args.only or [])
    known = {c[0] for c in acceptance.CRITERIA}
    if only - known:
        raise UsageError(f"unknown criterion number(s): {sorted(only - known)}")
    results = []
    for num, *_ in acceptance.CRITERIA:
        if only and num not in only:
            continue
        res = acceptance.run_criterion(num, args.scale, args.seed, _threads(args.threads))
        print(res.line(), flush=True)
        results.append(res)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed at scale {args.scale:g}")
    return EXIT_OK if passed == len(results) else EXIT_DATA


COMMANDS = {
    "estimate": cmd_estimate,
    "placebo": cmd_placebo,
    "compare-studies": cmd_compare,
    "simulate": cmd_simulate,
    "power": cmd_power,
    "selftest": cmd_selftest,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.subcommands[args.command].print_help(sys.stderr)
        sys.stderr.write(f"listcombine {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (ListCombineError, OSError) as exc:
        sys.stderr.write(f"listcombine {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
