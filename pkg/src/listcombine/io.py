"""CSV ingestion and report serialization.

Input is long format: one row per respondent per question. Text output
rounds to three decimals; JSON and CSV carry full precision (``repr`` of the
float, which round-trips exactly).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .data import Dataset, RawRecord
from .errors import EmptyFile, EmptyInput, MissingColumn, UnparseableCell
from .estimators import EstimateReport
from .placebo import FisherResult, PlaceboReport
from .simulation import PowerCell

SCHEMA_VERSION = "listcombine/1"
REQUIRED_COLUMNS = ("y_direct", "z_treat", "v_count")
OPTIONAL_COLUMNS = ("respondent_id", "question_id", "study", "attention_failed")
MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "."})
POWER_COLUMNS = ("n_yes", "violation_type", "share_or_wsuccess", "replicates", "power", "seed")


def _parse_int(text: str, row: int, column: str) -> int | None:
    s = text.strip()
    if s.lower() in MISSING_TOKENS:
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        f = float(s)
    except ValueError:
        raise UnparseableCell(row, column, text) from None
    if not f.is_integer():
        raise UnparseableCell(row, column, text)
    return int(f)


def _parse_flag(text: str, row: int, column: str) -> bool:
    s = text.strip().lower()
    if s in ("", "0", "false", "no", "f", "n", "na"):
        return False
    if s in ("1", "true", "yes", "t", "y"):
        return True
    raise UnparseableCell(row, column, text)


def _optional_text(text: str | None) -> str | None:
    if text is None:
        return None
    s = text.strip()
    return None if s.lower() in MISSING_TOKENS else s


def load_csv(path: str | Path, mapping: Mapping[str, str] | None = None) -> list[RawRecord]:
    """Read respondent rows from ``path``.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row.
    mapping : mapping, optional
        Canonical column name to header name in the file, for files whose
        headers differ (``{"v_count": "count"}``).

    Returns
    -------
    list of RawRecord
        Blank and ``NA`` cells become ``None`` so :func:`~listcombine.data.validate`
        can count them. Row numbers are 1-based data rows.

    Raises
    ------
    EmptyFile
        No header, or a header with no data rows.
    MissingColumn
        A required column is absent.
    UnparseableCell
        A numeric cell holds something other than an integer or NA.
    """
    mapping = dict(mapping or {})
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        col = {name: mapping.get(name, name) for name in REQUIRED_COLUMNS + OPTIONAL_COLUMNS}
        missing = [name for name in REQUIRED_COLUMNS if col[name] not in header]
        if missing:
            raise MissingColumn(f"{path}: missing required column(s) {', '.join(missing)}")
        present = {name for name in OPTIONAL_COLUMNS if col[name] in header}
        out = []
        for i, row in enumerate(reader, start=1):
            if not any((v or "").strip() for v in row.values() if isinstance(v, str)):
                continue
            get = lambda name: row.get(col[name]) or ""
            out.append(RawRecord(
                respondent_id=_optional_text(get("respondent_id")) if "respondent_id" in present else None,
                y_direct=_parse_int(get("y_direct"), i, col["y_direct"]),
                z_treat=_parse_int(get("z_treat"), i, col["z_treat"]),
                v_count=_parse_int(get("v_count"), i, col["v_count"]),
                question_id=(_optional_text(get("question_id")) or "q1") if "question_id" in present else "q1",
                study=_optional_text(get("study")) if "study" in present else None,
                attention_failed=_parse_flag(get("attention_failed"), i, col["attention_failed"])
                if "attention_failed" in present else False,
                row=i,
            ))
    if not out:
        raise EmptyFile(f"{path}: header but no data rows")
    return out


def group_records(records: Iterable[RawRecord]) -> dict[tuple[str, str | None], list[RawRecord]]:
    """Split records by ``(question_id, study)`` in order of first appearance."""
    groups: dict[tuple[str, str | None], list[RawRecord]] = {}
    for r in records:
        groups.setdefault((r.question_id, r.study), []).append(r)
    return groups


def dataset_csv(datasets: Dataset | Sequence[Dataset]) -> bytes:
    """Serialize datasets in the input schema (round-trips through :func:`load_csv`)."""
    if isinstance(datasets, Dataset):
        datasets = [datasets]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["respondent_id", "question_id", "study", "y_direct", "z_treat", "v_count"])
    for ds in datasets:
        for r in ds.records:
            w.writerow([r.id, ds.question_id, r.study or "", r.y_direct, r.z_treat, r.v_count])
    return buf.getvalue().encode()


def write_csv(datasets: Dataset | Sequence[Dataset], path: str | Path) -> None:
    Path(path).write_bytes(dataset_csv(datasets))


# ---------------------------------------------------------------------------
# report rendering

@dataclass(frozen=True)
class QuestionEstimates:
    """The three prevalence estimates for one question, plus the variance reduction."""

    question: str
    study: str | None
    direct: EstimateReport
    standard: EstimateReport
    combined: EstimateReport
    variance_reduction: float | None
    excluded: Mapping[str, int] | None = None


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _estimate_dict(r: EstimateReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "method": r.method.value,
        "estimate": _num(r.estimate),
        "std_error": _num(r.std_error),
        "ci_low": _num(r.ci_low),
        "ci_high": _num(r.ci_high),
        "n_used": r.n_used,
        "alpha": r.alpha,
        "question": r.question,
        "study": r.study,
        "diagnostics": list(r.diagnostics),
    }


def _placebo_dict(r: PlaceboReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "test": r.test.value,
        "statistic": _num(r.statistic),
        "std_error": _num(r.std_error),
        "p_value": _num(r.p_value),
        "null_value": r.null_value,
        "n_used": r.n_used,
        "cell_sizes": list(r.cell_sizes),
        "question": r.question,
        "study": r.study,
        "method": r.method,
        "diagnostics": list(r.flags),
    }


def _fisher_dict(r: FisherResult, label: str | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "test": "Fisher",
        "study": label,
        "statistic": _num(r.statistic),
        "p_value": _num(r.p_value),
        "df": r.df,
        "questions_used": list(r.used),
        "questions_dropped": list(r.dropped),
        "diagnostics": [],
    }


def _power_dict(c: PowerCell) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n_yes": c.n_yes,
        "violation_type": c.panel,
        "share_or_wsuccess": c.share_or_wsuccess,
        "replicates": c.replicates,
        "power": float(c.power),
        "seed": c.seed,
        "diagnostics": [],
    }


def report_to_dict(report) -> dict:
    if isinstance(report, EstimateReport):
        return _estimate_dict(report)
    if isinstance(report, PlaceboReport):
        return _placebo_dict(report)
    if isinstance(report, QuestionEstimates):
        return {
            "schema_version": SCHEMA_VERSION,
            "question": report.question,
            "study": report.study,
            "direct": _estimate_dict(report.direct),
            "standard": _estimate_dict(report.standard),
            "combined": _estimate_dict(report.combined),
            "variance_reduction": _num(report.variance_reduction),
            "excluded": dict(report.excluded or {}),
            "diagnostics": [],
        }
    if isinstance(report, tuple) and len(report) == 2 and isinstance(report[0], FisherResult):
        return _fisher_dict(*report)
    if isinstance(report, FisherResult):
        return _fisher_dict(report)
    if isinstance(report, PowerCell):
        return _power_dict(report)
    raise TypeError(f"cannot render {type(report).__name__}")


def _json(reports: list) -> str:
    dicts = [report_to_dict(r) for r in reports]
    doc = dicts[0] if len(dicts) == 1 else {"schema_version": SCHEMA_VERSION, "reports": dicts}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, object]]:
    out = []
    for k, v in d.items():
        if k in ("schema_version", "question", "study"):
            continue
        if isinstance(v, dict):
            if k == "excluded":
                out.extend((f"excluded:{reason}", n) for reason, n in v.items())
            else:
                out.extend(_flatten(v, f"{prefix}{k}."))
        elif isinstance(v, list):
            out.append((prefix + k, ";".join(str(x) for x in v)))
        else:
            out.append((prefix + k, v))
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["question", "study", "kind", "field", "value"])
    for r in reports:
        d = report_to_dict(r)
        kind = d.get("test") or d.get("method") or ("estimates" if "combined" in d else "power")
        for field, value in _flatten(d):
            w.writerow([d.get("question") or "", d.get("study") or "", kind, field, _cell(value)])
    return buf.getvalue()


def _f3(x) -> str:
    return "NA" if x is None or not math.isfinite(x) else f"{x:.3f}"


def _p3(p: float) -> str:
    return "<0.001" if p < 0.0005 else f"{p:.3f}"


def _label(question, study) -> str:
    return question if study is None else f"{question} [{study}]"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    fmt = lambda cells: "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(cells))
    lines = [fmt(header), "  ".join("-" * w for w in widths)]
    lines.extend(fmt(r) for r in rows)
    return lines


def _text(reports: list) -> str:
    blocks: list[list[str]] = []
    est = [r for r in reports if isinstance(r, QuestionEstimates)]
    single = [r for r in reports if isinstance(r, EstimateReport)]
    placebo = [r for r in reports if isinstance(r, PlaceboReport)]
    fisher = [r for r in reports if isinstance(r, (FisherResult, tuple))]
    power = [r for r in reports if isinstance(r, PowerCell)]
    if est:
        rows = []
        for q in est:
            rows.append([
                _label(q.question, q.study),
                f"{_f3(q.direct.estimate)} ({_f3(q.direct.std_error)})",
                f"{_f3(q.standard.estimate)} ({_f3(q.standard.std_error)})",
                f"{_f3(q.combined.estimate)} ({_f3(q.combined.std_error)})",
                "NA" if q.variance_reduction is None else f"{100 * q.variance_reduction:.1f}",
            ])
        lines = ["Prevalence estimates (standard errors in parentheses)"]
        lines += _table(["Question", "Direct", "Standard List", "Combined List", "% Reduction"], rows)
        ns = sorted({q.combined.n_used for q in est})
        lines.append(f"n = {ns[0]}" if len(ns) == 1 else "n = " + ", ".join(str(n) for n in ns))
        notes = [f"  {_label(q.question, q.study)}: {', '.join(c for c in q.combined.diagnostics)}"
                 for q in est if q.combined.diagnostics]
        if notes:
            lines += ["Diagnostics (combined):"] + notes
        blocks.append(lines)
    if single:
        rows = [[_label(r.question or "", r.study) if r.question else r.method.value, r.method.value,
                 _f3(r.estimate), _f3(r.std_error), _f3(r.ci_low), _f3(r.ci_high), str(r.n_used),
                 ",".join(r.diagnostics)] for r in single]
        blocks.append(_table(["Question", "Method", "Estimate", "SE", "CI low", "CI high", "n", "Diagnostics"], rows))
    by_test: dict[str, list[PlaceboReport]] = {}
    for r in placebo:
        by_test.setdefault(r.test.value, []).append(r)
    titles = {"TestI": ("Placebo Test I", "beta"), "TestII": ("Placebo Test II", "delta"),
              "CrossStudy": ("Differences between studies", "Difference")}
    for test, rs in by_test.items():
        title, col = titles[test]
        if test == "CrossStudy":
            rows = [[r.question or "", r.method or "", _f3(r.statistic), _f3(r.std_error), _p3(r.p_value)] for r in rs]
            lines = [title + (f" ({rs[0].study})" if rs[0].study else "")]
            lines += _table(["Question", "Method", col, "SE", "p"], rows)
        else:
            rows = [[_label(r.question or "", r.study), _f3(r.statistic), _f3(r.std_error), _p3(r.p_value),
                     str(r.n_used)] for r in rs]
            lines = [title] + _table(["Question", col, "SE", "p", "n"], rows)
        flagged = [f"  {_label(r.question or '', r.study)}: {', '.join(r.flags)}" for r in rs if r.flags]
        if flagged:
            lines += ["Flags:"] + flagged
        blocks.append(lines)
    for item in fisher:
        res, label = item if isinstance(item, tuple) else (item, None)
        line = (f"Fisher combination{f' [{label}]' if label else ''}: chi2 = {_f3(res.statistic)}, "
                f"df = {res.df}, p = {_p3(res.p_value)}")
        lines = [line]
        if res.dropped:
            lines.append("  dropped (untestable): " + ", ".join(res.dropped))
        blocks.append(lines)
    if power:
        rows = [[str(c.n_yes), c.panel, _f3(c.share_or_wsuccess), str(c.replicates), _f3(c.power), str(c.seed)]
                for c in power]
        blocks.append(_table(list(POWER_COLUMNS), rows))
    return "\n\n".join("\n".join(b) for b in blocks) + "\n"


def render_report(reports, fmt: str = "text") -> bytes:
    """Serialize one or more reports as ``text``, ``json`` or ``csv`` bytes.

    Accepts :class:`EstimateReport`, :class:`QuestionEstimates`,
    :class:`PlaceboReport`, :class:`FisherResult` (optionally paired with a
    study label as a tuple) and :class:`PowerCell`. A single report renders
    as one JSON object; several are wrapped in ``{"schema_version", "reports"}``.
    """
    if isinstance(reports, tuple) and reports and isinstance(reports[0], FisherResult):
        reports = [reports]
    elif not isinstance(reports, (list, tuple)):
        reports = [reports]
    reports = list(reports)
    if not reports:
        raise EmptyInput("nothing to render")
    if fmt == "json":
        return _json(reports).encode()
    if fmt == "csv":
        return _csv(reports).encode()
    if fmt == "text":
        return _text(reports).encode()
    raise ValueError(f"unknown format {fmt!r}")


def power_csv(cells: Iterable[PowerCell]) -> bytes:
    """Long-format power surface for external plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POWER_COLUMNS)
    for c in cells:
        w.writerow([c.n_yes, c.panel, repr(float(c.share_or_wsuccess)), c.replicates, repr(float(c.power)), c.seed])
    return buf.getvalue().encode()
