"""Serialization of audit results: JSON envelope, text table, plot data.

JSON carries full float precision; text output shows bits to four
decimals. Floats survive a JSON round trip exactly, so
``ReportEnvelope.from_dict(env.to_dict()) == env``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .attribution import AttributionReport, SubsetTable, subset_order
from .pid import PidResult

SCHEMA_VERSION = 1
DIGITS = 4


def table_to_rows(table: SubsetTable) -> list[dict]:
    return [{"mask": m, "features": list(table.names(m)), "value": table.entries[m],
             "truncated": m in table.truncated}
            for m in subset_order(table.n) if m in table.entries]


def attribution_to_dict(r: AttributionReport) -> dict:
    t = r.subset_table
    return {
        "mode": r.mode,
        "features": list(t.features),
        "per_feature": dict(r.per_feature),
        "total_disparity": r.total_disparity,
        "explained": r.explained,
        "unexplained": r.unexplained,
        "subset_table": {"kind": t.kind, "epsilon": t.epsilon, "entries": table_to_rows(t)},
        "truncation_log": r.truncation_log,
        "warnings": list(r.warnings),
        "solves": r.solves,
        "nonconverged": [list(s) for s in r.nonconverged],
    }


def attribution_from_dict(d: dict) -> AttributionReport:
    st = d["subset_table"]
    table = SubsetTable(
        tuple(d["features"]), st["kind"],
        {e["mask"]: e["value"] for e in st["entries"]},
        {e["mask"] for e in st["entries"] if e["truncated"]},
        st["epsilon"],
    )
    return AttributionReport(
        mode=d["mode"],
        per_feature=dict(d["per_feature"]),
        total_disparity=d["total_disparity"],
        explained=d["explained"],
        unexplained=d["unexplained"],
        subset_table=table,
        truncation_log=list(d["truncation_log"]),
        warnings=list(d["warnings"]),
        solves=d["solves"],
        nonconverged=[tuple(s) for s in d["nonconverged"]],
    )


@dataclass
class ReportEnvelope:
    """Everything an audit or decomposition run produced.

    ``reports`` maps a mode name (``distributional``, ``interventional``
    or ``pid``) to its payload.
    """

    mode: str
    config: dict
    reports: dict
    warnings: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        payload = {}
        for k, r in self.reports.items():
            payload[k] = r.to_dict() if isinstance(r, PidResult) else attribution_to_dict(r)
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "mode": self.mode,
            "config": self.config,
            "report": payload,
            "warnings": list(self.warnings),
            "timings": dict(self.timings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportEnvelope":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {d.get('schema_version')!r}")
        reports = {}
        for k, r in d["report"].items():
            reports[k] = PidResult(**r) if k == "pid" else attribution_from_dict(r)
        return cls(mode=d["mode"], config=d["config"], reports=reports,
                   warnings=list(d["warnings"]), timings=dict(d["timings"]),
                   tool_version=d["tool_version"], schema_version=d["schema_version"])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    @classmethod
    def loads(cls, text: str) -> "ReportEnvelope":
        return cls.from_dict(json.loads(text))


def format_bits(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.{DIGITS}f}"


def contributions_text(r: AttributionReport) -> str:
    """Per-feature table sorted by contribution (descending)."""
    label = "PotentContri" if r.mode == "distributional" else "Contri"
    ranked = sorted(r.per_feature.items(), key=lambda kv: (-kv[1], kv[0]))
    width = max(len("total I(Z;Y)"), *(len(f) for f in r.per_feature))
    lines = [f"# {r.mode} attribution (bits)", f"{'feature':<{width}}  {label:>12}"]
    lines += [f"{f:<{width}}  {format_bits(v):>12}" for f, v in ranked]
    lines.append(f"{'total I(Z;Y)':<{width}}  {format_bits(r.total_disparity):>12}")
    lines.append(f"{'explained':<{width}}  {format_bits(r.explained):>12}")
    if r.unexplained is not None:
        lines.append(f"{'unexplained':<{width}}  {format_bits(r.unexplained):>12}")
    return "\n".join(lines) + "\n"


def pid_text(res: PidResult, residuals: dict | None = None) -> str:
    rows = [("uni_a_given_b", res.uni_a_given_b), ("uni_b_given_a", res.uni_b_given_a),
            ("red", res.red), ("syn", res.syn), ("total", res.total)]
    lines = [f"{k:<14} {format_bits(v)}" for k, v in rows]
    for k, v in (residuals or {}).items():
        lines.append(f"{k:<14} {v:.3e}")
    return "\n".join(lines) + "\n"


def write_plot_data(out_dir, r: AttributionReport, prefix: str) -> list[Path]:
    """CSV of subset values and CSV of per-feature contributions."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    subsets = out_dir / f"{prefix}_subsets.csv"
    with subsets.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset", "size", "value_bits", "truncated"])
        for e in table_to_rows(r.subset_table):
            w.writerow(["{" + ",".join(e["features"]) + "}", len(e["features"]),
                        repr(e["value"]), int(e["truncated"])])
    features = out_dir / f"{prefix}_features.csv"
    with features.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "contribution_bits"])
        for f in r.subset_table.features:
            w.writerow([f, repr(r.per_feature[f])])
    return [subsets, features]
