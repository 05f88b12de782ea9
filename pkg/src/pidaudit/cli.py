"""Command-line interface: ``pidaudit audit | pid | generate``.

Exit codes: 0 success, 1 error (a JSON object is written to stderr),
2 success with solver-quality or determinism warnings.

Options may also come from ``--config FILE``, a plain ``key = value``
file using the long option names (``#`` starts a comment). Flags given on
the command line win over the file, which wins over built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .attribution import (AttributionConfig, interventional_contributions,
                          potential_contributions)
from .datasets import (GENERATORS, AuditSchema, DataError, SyntheticSpec, default_samples, generate,
                       load_csv, load_pmf_csv, parse_cell, write_csv, write_pmf_csv)
from .dist import JointDistribution, conditional_mutual_info, estimate_joint, marginalize, mutual_info
from .oracle import parse_oracle
from .pid import SolverConfig, decompose
from .report import ReportEnvelope, contributions_text, pid_text, write_plot_data

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the
    # warning exit code
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _samples(text):
    text = str(text).strip()
    return "analytic" if text == "analytic" else int(text)


def _names(text):
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


def _assignments(text, convert=parse_cell):
    out = {}
    for part in _names(text):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"expected NAME=VALUE, got {part!r}")
        out[key.strip()] = convert(value.strip())
    return out


def _bins(text):
    return _assignments(text, int)


def _flag(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


# name -> (type, default); every entry is settable by flag and config file
OPTIONS = {
    "input": (str, None),
    "input_format": (str, "auto"),
    "generate": (str, None),
    "samples": (_samples, None),
    "seed": (int, 0),
    "protected": (str, None),
    "decision": (str, None),
    "features": (_names, None),
    "bins": (_bins, {}),
    "binning": (str, "quantile"),
    "smoothing": (float, 0.0),
    "mode": (str, "distributional"),
    "oracle": (str, None),
    "timeout": (float, 30.0),
    "baseline": (_assignments, {}),
    "check_determinism": (_flag, False),
    "epsilon": (float, 0.0),
    "jobs": (int, 1),
    "solver": (str, "barrier"),
    "tol": (float, 1e-9),
    "plot_data": (_flag, False),
    "out_dir": (str, "."),
    "z": (str, None),
    "a": (str, None),
    "b": (_names, None),
}


def read_config(path) -> dict:
    """Parse a ``key = value`` file into typed options."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep or key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unrecognised setting {raw.strip()!r}")
        try:
            out[key] = OPTIONS[key][0](value.strip())
        except ValueError as e:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {e}") from None
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config file over defaults."""
    opts = {k: d for k, (_, d) in OPTIONS.items()}
    if getattr(args, "config", None):
        opts.update(read_config(args.config))
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    return opts


def _add_input(p):
    g = p.add_argument_group("input")
    g.add_argument("--input", help="CSV of data rows, or of pmf cells with a 'probability' column")
    g.add_argument("--input-format", choices=("auto", "rows", "pmf"))
    g.add_argument("--generate", choices=sorted(GENERATORS), help="use a built-in synthetic generator")
    g.add_argument("--samples", type=_samples, help="sample count or 'analytic' (exact pmf)")
    g.add_argument("--seed", type=int)
    g.add_argument("--bins", type=_bins, help="COL=K[,COL=K...] numeric columns to discretize")
    g.add_argument("--binning", choices=("quantile", "equal_width"))
    g.add_argument("--smoothing", type=float, help="additive pseudo-count per joint cell")
    g.add_argument("--config", help="key = value settings file")
    g.add_argument("--out-dir")
    g.add_argument("--solver", choices=("barrier", "alternating"))
    g.add_argument("--tol", type=float, help="solver tolerance in bits")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pidaudit", description="Attribute decision disparity I(Z;Y) to features.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("audit", help="per-feature attribution of I(Z;Y)")
    _add_input(p)
    p.add_argument("--protected")
    p.add_argument("--decision")
    p.add_argument("--features", type=_names, help="comma-separated feature columns")
    p.add_argument("--mode", choices=("distributional", "interventional", "both"))
    p.add_argument("--oracle", help="builtin:<first|diff|sum|xor>, exec:<command> or table:<csv>")
    p.add_argument("--timeout", type=float, help="seconds per model batch")
    p.add_argument("--baseline", type=_assignments, help="FEATURE=VALUE imputation overrides")
    p.add_argument("--check-determinism", action="store_const", const=True)
    p.add_argument("--epsilon", type=float, help="early-truncation threshold in bits (0 = off)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--plot-data", action="store_const", const=True,
                   help="write subset/feature CSVs and PNG charts to --out-dir")

    p = sub.add_parser("pid", help="decompose I(Z;(A,B)) into unique, redundant, synergistic parts")
    _add_input(p)
    p.add_argument("--z")
    p.add_argument("--a")
    p.add_argument("--b", type=_names, help="comma-separated columns grouped into B")
    p.add_argument("--json", action="store_true", help="print the JSON report instead of text")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("name", choices=sorted(GENERATORS))
    p.add_argument("--samples", type=_samples)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--analytic", action="store_true", help="write the exact pmf")
    p.add_argument("--output", "-o", help="output CSV (default <name>.csv)")
    return parser


def _header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        try:
            return [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise DataError(f"{path} is empty") from None


def _schema(opts, fallback: AuditSchema | None) -> AuditSchema:
    z = opts["protected"] or (fallback and fallback.protected)
    y = opts["decision"] or (fallback and fallback.decision)
    x = opts["features"] or (fallback and fallback.features)
    if not (z and y and x):
        raise UsageError("--protected, --decision and --features are required for --input data")
    return AuditSchema(z, y, tuple(x), bins=opts["bins"], binning=opts["binning"])


def load_distribution(opts, columns_for) -> tuple[JointDistribution, object]:
    """Joint pmf for the run plus the generator ground truth (or None).

    ``columns_for(fallback_schema)`` returns the columns to keep.
    """
    if bool(opts["input"]) == bool(opts["generate"]):
        raise UsageError("give exactly one of --input or --generate")
    if opts["generate"]:
        name = opts["generate"]
        samples = opts["samples"] if opts["samples"] is not None else default_samples(name)
        data = generate(SyntheticSpec(name, samples, opts["seed"]))
        cols = columns_for(data.schema)
        if data.dist is not None:
            return marginalize(data.dist, cols), data
        return estimate_joint(data.rows, cols, smoothing=opts["smoothing"]), data
    path = opts["input"]
    fmt = opts["input_format"]
    if fmt == "auto":
        fmt = "pmf" if "probability" in _header(path) else "rows"
    cols = columns_for(None)
    if fmt == "pmf":
        if opts["bins"]:
            raise UsageError("--bins applies to row data, not pmf files")
        return marginalize(load_pmf_csv(path), cols), None
    schema = AuditSchema(cols[0], cols[-1], tuple(cols[1:-1]), bins=opts["bins"], binning=opts["binning"])
    rows, alphabets = load_csv(path, schema)
    return estimate_joint(rows, cols, alphabets=alphabets, smoothing=opts["smoothing"]), None


def _solver(opts) -> SolverConfig:
    return SolverConfig(method=opts["solver"], tol=opts["tol"], seed=opts["seed"])


def cmd_audit(opts) -> int:
    timings = {}
    t0 = time.perf_counter()
    schema_box = {}

    def columns_for(fallback):
        schema = _schema(opts, fallback)
        schema_box["schema"] = schema
        return list(schema.columns)

    dist, _ = load_distribution(opts, columns_for)
    schema = schema_box["schema"]
    timings["load"] = time.perf_counter() - t0
    modes = ["distributional", "interventional"] if opts["mode"] == "both" else [opts["mode"]]
    if "interventional" in modes and not opts["oracle"]:
        raise UsageError("interventional mode needs --oracle")
    cfg = AttributionConfig(epsilon=opts["epsilon"], solver=_solver(opts), jobs=opts["jobs"],
                            baselines=opts["baseline"] or None,
                            check_determinism=opts["check_determinism"], seed=opts["seed"])
    reports, warnings, info = {}, [], []
    for mode in modes:
        t = time.perf_counter()
        if mode == "distributional":
            r = potential_contributions(dist, schema, cfg)
            if r.truncation_log:
                pruned = sum(len(e["pruned"]) for e in r.truncation_log)
                info.append(f"truncation: {pruned} subsets assigned I(Z;Y) without solving (epsilon={cfg.epsilon})")
        else:
            with parse_oracle(opts["oracle"], schema.features, opts["timeout"]) as oracle:
                r = interventional_contributions(dist, oracle, schema, cfg)
        timings[mode] = time.perf_counter() - t
        reports[mode] = r
        warnings += [f"{mode}: {w}" for w in r.warnings]
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in opts.items()}
    env = ReportEnvelope(mode=opts["mode"], config=config, reports=reports,
                         warnings=warnings + info, timings=timings)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    t = time.perf_counter()
    text = "".join(contributions_text(r) for r in reports.values())
    (out / "contributions.txt").write_text(text, encoding="utf-8")
    if opts["plot_data"]:
        from .plotting import plot_features, plot_subsets
        for mode, r in reports.items():
            write_plot_data(out, r, mode)
            plot_subsets(r, out / f"{mode}_subsets.png")
            plot_features(r, out / f"{mode}_features.png")
    timings["write"] = time.perf_counter() - t
    (out / "report.json").write_text(env.dumps(), encoding="utf-8")
    sys.stdout.write(text)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for note in info:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_WARN if warnings else EXIT_OK


def cmd_pid(opts, as_json=False) -> int:
    names = {}

    def columns_for(fallback):
        z = opts["z"] or (fallback and fallback.protected)
        a = opts["a"] or (fallback and fallback.decision)
        b = opts["b"] or (fallback and fallback.features)
        if not (z and a and b):
            raise UsageError("--z, --a and --b are required")
        names.update(z=z, a=a, b=list(b))
        return [z, a, *b]

    t0 = time.perf_counter()
    dist, _ = load_distribution(opts, columns_for)
    z, a, b = names["z"], names["a"], names["b"]
    res = decompose(dist, z, a, b, _solver(opts))
    elapsed = time.perf_counter() - t0
    residuals = res.residuals(mutual_info(dist, z, a), conditional_mutual_info(dist, z, a, b))
    warnings = [] if res.converged else [f"solver did not converge (gap {res.objective_gap_estimate:.3g})"]
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in opts.items()}
    env = ReportEnvelope(mode="pid", config=config, reports={"pid": res}, warnings=warnings,
                         timings={"solve": elapsed})
    if opts["out_dir"] != ".":
        out = Path(opts["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(env.dumps(), encoding="utf-8")
    if as_json:
        sys.stdout.write(env.dumps() + "\n")
    else:
        sys.stdout.write(pid_text(res, {f"residual_{k}": v for k, v in residuals.items()}))
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_WARN if warnings else EXIT_OK


def cmd_generate(args) -> int:
    samples = "analytic" if args.analytic else args.samples
    if samples is None:
        samples = default_samples(args.name)
    data = generate(SyntheticSpec(args.name, samples, args.seed))
    path = Path(args.output or f"{args.name}.csv")
    if data.dist is not None:
        write_pmf_csv(path, data.dist)
    else:
        write_csv(path, data.rows, data.columns)
    print(path)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "generate":
            return cmd_generate(args)
        opts = resolve(args)
        if args.command == "audit":
            return cmd_audit(opts)
        return cmd_pid(opts, as_json=args.json)
    except SystemExit as e:
        # --help / --version
        return e.code if isinstance(e.code, int) else EXIT_OK
    except Exception as e:  # noqa: BLE001 -- every failure becomes a JSON error
        err = {"error": type(e).__name__, "message": str(e)}
        for attr in ("line", "column"):
            if getattr(e, attr, None) is not None:
                err[attr] = getattr(e, attr)
        print(json.dumps(err), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
