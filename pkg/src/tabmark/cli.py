"""Command-line interface: ``tabmark <subcommand> ...``.

Exit codes: 0 success / watermarked, 1 not watermarked, 2 usage or data
error, 3 query budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .attacks import AttackConfig, add_noise, drop_columns, spoof_fractional, truncate_dataset
from .bench import DEFAULT_GRIDS, BenchSpec, run_bench
from .dataset import TabularDataset, load_csv, numeric_columns, write_csv
from .detector import DetectionReport, QueryBudget, RowSample, detect_blind, detect_with_manifest
from .embedder import WatermarkManifest, WatermarkParams, embed
from .errors import BudgetExhausted, WatermarkError
from .metrics import fidelity_report
from .pairing import ImportanceVector, PairingPlan, load_importance_csv, make_plan, surrogate_importance

EXIT_OK, EXIT_NOT_WATERMARKED, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _secret(args) -> int:
    raw = args.secret_hex or os.environ.get("WM_SECRET_HEX") or "0"
    try:
        value = int(raw, 16)
    except ValueError:
        raise UsageError(f"secret {raw!r} is not hexadecimal") from None
    if not 0 <= value < 2**64:
        raise UsageError("secret must fit in 64 bits (at most 16 hex digits)")
    return value


def _decimals(token: str) -> int:
    t = token.strip().lower()
    if "e" in t or "." not in t:
        return 0
    return len(t.split(".", 1)[1])


def _pick_columns(path: Path, args, mode: str) -> list[str]:
    if args.columns:
        return [c.strip() for c in args.columns.split(",") if c.strip()]
    numeric = numeric_columns(path)
    if mode != "fractional":
        return numeric
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    picked = []
    for name in numeric:
        j = header.index(name)
        if any(_decimals(r[j]) >= args.min_decimals for r in body):
            picked.append(name)
    return picked


def _importance(args, ds: TabularDataset) -> ImportanceVector | None:
    if getattr(args, "importance_file", None):
        return load_importance_csv(args.importance_file, ds.names)
    label = getattr(args, "label_col", None)
    if label:
        full = load_csv(args.input, select=numeric_columns(args.input))
        imp = surrogate_importance(full, full.index(label))
        return ImportanceVector(np.array([imp.scores[full.index(n)] for n in ds.names]))
    return None


def _plan(args, ds: TabularDataset) -> PairingPlan:
    cols = ds.n_cols
    imp = _importance(args, ds)
    if args.pairing != "uniform" and imp is None:
        print("note: no importance scores given; pairing columns in file order", file=sys.stderr)
        imp = ImportanceVector(np.ones(cols))
    usable = cols - cols % 2
    if usable < 2:
        raise UsageError("need at least two columns to pair")
    if usable != cols:
        # leave out the least important column
        order = imp.ranking() if imp is not None else np.arange(cols)
        drop = int(order[-1])
        keep = [i for i in range(cols) if i != drop]
        print(f"note: odd column count; leaving {ds.names[drop]!r} unpaired", file=sys.stderr)
        sub_imp = ImportanceVector(imp.scores[keep]) if imp is not None else None
        sub = make_plan(usable, args.pairing, args.seed, sub_imp)
        return PairingPlan(tuple((keep[k], keep[v]) for k, v in sub.pairs), sub.scheme, sub.rng_seed)
    return make_plan(cols, args.pairing, args.seed, imp)


def _emit(args, payload: dict) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, default=str))


def _write_json(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")


def _config(args) -> dict:
    skip = {"func", "secret_hex"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_embed(args) -> int:
    secret = _secret(args)
    names = _pick_columns(Path(args.input), args, args.mode)
    ds = load_csv(args.input, select=names)
    plan = _plan(args, ds)
    params = WatermarkParams(args.bins, secret, args.mode, args.replacement_seed)
    ds_w, manifest = embed(
        ds, plan, params, normalize=args.mode == "unit", threads=args.threads, decimals=args.decimals
    )
    write_csv(ds_w, args.out, decimals=args.decimals)
    payload = manifest.to_json()
    payload["config"] = _config(args)
    _write_json(args.manifest, payload)
    _emit(args, {"output": args.out, "manifest": payload})
    return EXIT_OK


def _report_payload(report: DetectionReport, args) -> dict:
    payload = report.to_json()
    payload["p_value"] = report.p_value
    payload["config"] = _config(args)
    return payload


def cmd_detect(args) -> int:
    secret = _secret(args)
    sample = RowSample(args.sample_rows, args.sample_seed) if args.sample_rows else None
    if args.manifest and not args.blind:
        manifest = WatermarkManifest.loads(Path(args.manifest).read_text(encoding="utf-8"), secret)
        ds = load_csv(args.input, select=[n for p in manifest.pair_names for n in p])
        report = detect_with_manifest(ds, manifest, args.alpha, args.divisor, sample)
    elif args.blind:
        names = [c.strip() for c in args.columns.split(",")] if args.columns else numeric_columns(args.input)
        ds = load_csv(args.input, select=names)
        params = WatermarkParams(args.bins, secret, args.mode)
        imp = _importance(args, ds)
        budget = QueryBudget(args.query_budget) if args.query_budget is not None else None
        order = args.order or ("importance" if imp is not None else "index")
        try:
            report = detect_blind(
                ds, params, args.alpha, args.z_stop, sample, order, imp, budget, args.divisor, threads=args.threads
            )
        except BudgetExhausted as e:
            payload = _report_payload(e.report, args)
            payload["verdict"] = "budget_exhausted"
            _write_json(args.report, payload)
            _emit(args, payload)
            print(f"error: {e}", file=sys.stderr)
            return EXIT_BUDGET
    else:
        raise UsageError("detect needs --manifest (owner mode) or --blind")
    payload = _report_payload(report, args)
    _write_json(args.report, payload)
    _emit(args, payload)
    if not args.json:
        print(f"{report.verdict} (tests={report.tests_executed}, p={report.p_value:.3g})")
    return EXIT_OK if report.watermarked else EXIT_NOT_WATERMARKED


def cmd_attack(args) -> int:
    if args.kind == "spoof":
        if not args.reference:
            raise UsageError("--kind spoof needs --reference")
        return cmd_spoof(args)
    config = AttackConfig(args.kind, args.p, args.dist, args.sigma, args.fraction, args.seed)
    names = [c.strip() for c in args.columns.split(",")] if args.columns else numeric_columns(args.input)
    ds = load_csv(args.input, select=names)
    if args.kind == "truncate":
        out = truncate_dataset(ds, args.p)
    elif args.kind == "noise":
        out = add_noise(ds, args.dist, args.sigma, args.fraction, args.seed, clamp=args.clamp)
    else:
        imp = _importance(args, ds)
        if imp is None:
            raise UsageError("--kind drop_columns needs --importance-file or --label-col")
        out = drop_columns(ds, imp, args.keep_fraction)
    write_csv(out, args.out, decimals=args.decimals)
    record = {"attack": config.to_json(), "input": args.input, "output": args.out, "columns": out.names, "config": _config(args)}
    _write_json(args.record, record)
    _emit(args, record)
    return EXIT_OK


def cmd_spoof(args) -> int:
    names = [c.strip() for c in args.columns.split(",")] if args.columns else numeric_columns(args.input)
    S = load_csv(args.input, select=names)
    W = load_csv(args.reference, select=names)
    out = spoof_fractional(S, W, args.fraction, args.seed)
    write_csv(out, args.out, decimals=args.decimals)
    record = {
        "attack": {"kind": "spoof", "fraction": args.fraction, "seed": args.seed},
        "input": args.input,
        "reference": args.reference,
        "output": args.out,
        "config": _config(args),
    }
    _write_json(args.record, record)
    _emit(args, record)
    return EXIT_OK


def cmd_metrics(args) -> int:
    names = [c.strip() for c in args.columns.split(",")] if args.columns else numeric_columns(args.original)
    X = load_csv(args.original, select=names)
    Xw = load_csv(args.watermarked, select=names)
    n = args.pairs or X.n_cols // 2
    rep = fidelity_report(X, Xw, n, args.bins, args.delta, args.k)
    payload = {
        "linf": rep.linf,
        "mse": rep.mse,
        "wasserstein_k": rep.wasserstein_k,
        "bound_linf": rep.bound_linf,
        "bound_wasserstein": rep.bound_wasserstein,
        "within_bounds": list(rep.within_bounds),
        "config": _config(args),
    }
    _write_json(args.report, payload)
    print(json.dumps(payload, indent=2, default=str))
    return EXIT_OK


def _parse_grid(items: Sequence[str] | None) -> dict:
    grid = {}
    for item in items or ():
        key, _, values = item.partition("=")
        if not values:
            raise UsageError(f"grid entry {item!r} must look like key=v1,v2")
        grid[key] = [float(v) if any(ch in v for ch in ".e") else int(v) for v in values.split(",")]
    return grid


def cmd_bench(args) -> int:
    spec = BenchSpec(args.name, _parse_grid(args.grid), args.trials, args.seed)
    summary = run_bench(spec, args.out)
    _emit(args, summary)
    if not args.json:
        print(f"wrote {Path(args.out) / args.name}")
    return EXIT_OK


def cmd_pair(args) -> int:
    names = [c.strip() for c in args.columns.split(",")] if args.columns else numeric_columns(args.input)
    ds = load_csv(args.input, select=names)
    plan = _plan(args, ds)
    payload = plan.to_json(ds.names)
    payload["config"] = _config(args)
    _write_json(args.out, payload)
    print(json.dumps(payload, indent=2, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabmark", description="Pairwise red/green watermarks for numeric tables.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, secret=True):
        p.add_argument("--json", action="store_true", help="machine-readable output on stdout")
        p.add_argument("--columns", help="comma-separated column names to use")
        if secret:
            p.add_argument("--secret-hex", help="64-bit secret in hex (or set WM_SECRET_HEX)")

    def threads(p):
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    def pairing(p):
        p.add_argument("--pairing", choices=["uniform", "fi_adjacent", "fi_sampled"], default="fi_adjacent")
        p.add_argument("--importance-file", help="CSV of name,score rows")
        p.add_argument("--label-col", help="derive importance from |correlation| with this column")
        p.add_argument("--seed", type=int, default=0, help="pairing seed")

    p = sub.add_parser("embed", help="watermark a CSV file")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--mode", choices=["unit", "fractional"], default="fractional")
    p.add_argument("--min-decimals", type=int, default=2)
    p.add_argument("--replacement-seed", type=int)
    p.add_argument("--decimals", type=int)
    common(p)
    pairing(p)
    threads(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="test a CSV file for the watermark")
    p.add_argument("input")
    p.add_argument("--manifest")
    p.add_argument("--blind", action="store_true")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--mode", choices=["unit", "fractional"], default="fractional")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--divisor", choices=["n2", "tests"], default="n2")
    p.add_argument("--z-stop", type=float)
    p.add_argument("--sample-rows", type=int)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--query-budget", type=int)
    p.add_argument("--order", choices=["importance", "index"])
    p.add_argument("--importance-file")
    p.add_argument("--label-col")
    p.add_argument("--report", help="write the JSON report here")
    common(p)
    threads(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("attack", help="apply truncation, noise, column dropping or spoofing")
    p.add_argument("input")
    p.add_argument("--kind", choices=["truncate", "noise", "drop_columns", "spoof"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--dist", choices=["gaussian", "uniform"], default="gaussian")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--keep-fraction", type=float, default=0.8)
    p.add_argument("--clamp", action="store_true", help="clip noisy values into [0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference", help="watermarked reference CSV (spoof only)")
    p.add_argument("--importance-file")
    p.add_argument("--label-col")
    p.add_argument("--record", help="write the JSON attack record here")
    p.add_argument("--decimals", type=int)
    common(p, secret=False)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("spoof", help="fractional-replacement spoofing against a reference")
    p.add_argument("input")
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record")
    p.add_argument("--decimals", type=int)
    common(p, secret=False)
    p.set_defaults(func=cmd_spoof)

    p = sub.add_parser("metrics", help="fidelity of a watermarked file against its original")
    p.add_argument("original")
    p.add_argument("watermarked")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--pairs", type=int)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--k", type=float, default=1)
    p.add_argument("--report")
    common(p, secret=False)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="run a synthetic benchmark")
    p.add_argument("name", choices=sorted(DEFAULT_GRIDS))
    p.add_argument("--out", default="bench_out")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", nargs="*", help="override grid, e.g. bin_size=0.1,0.01")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pair", help="print a pairing plan for a CSV file")
    p.add_argument("input")
    p.add_argument("--out")
    common(p, secret=False)
    pairing(p)
    p.set_defaults(func=cmd_pair)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (WatermarkError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
