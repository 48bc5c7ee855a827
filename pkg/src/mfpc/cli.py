"""Command-line front end: ``datagen``, ``fit``, ``grid`` and ``eval``.

Exit status is 0 on success, 2 when an input file is missing (or the
arguments do not parse) and 1 for every other error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .core import kernel_p_grid, linear_p_grid
from .errors import MFPCError, MissingFile
from .generators import generate
from .io import dump_model, fmt, load_labels, save_csv, save_flat_model, save_labels
from .metrics import MetricReport
from .runner import METHODS, USES, RunSpec, execute, report_row, resolve_data, run_row

log = logging.getLogger("mfpc")

RESULT_COLUMNS = (
    "method", "dataset", "c1", "c2", "mu", "p", "seed", "ari", "nmi", "runtime_seconds", "status",
)
DEFAULT_C_GRID = [2.0**i for i in range(-8, 8)]
DEFAULT_MU_GRID = [2.0**i for i in range(-10, 6)]


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_json(path: Path, record: dict[str, Any]) -> None:
    text = json.dumps({k: _json_value(v) for k, v in record.items()}, indent=2)
    path.write_text(text + "\n", encoding="utf-8")


def results_csv(rows: Sequence[dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        w.writerow([_cell(row[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def best_by_nmi(rows: Sequence[dict[str, Any]]) -> Optional[dict[str, Any]]:
    """First row with the highest NMI among successful rows."""
    best = None
    for row in rows:
        if row["status"] != "ok" or row["nmi"] is None:
            continue
        if best is None or row["nmi"] > best["nmi"]:
            best = row
    return best


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(not np.isfinite(v) or v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("grid values must be positive")
    return vals


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("grid must not be empty")
    return vals


def _method_list(text: str) -> list[str]:
    vals = [t.strip().lower() for t in text.split(",") if t.strip()]
    bad = [v for v in vals if v not in METHODS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"methods must be among {', '.join(METHODS)}")
    return vals


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV path, generator name or benchmark name")
    p.add_argument("--unlabeled", action="store_true", help="the CSV has no label column")
    p.add_argument("--k", type=int, default=None, help="cluster count (default: number of classes)")
    p.add_argument("--sigma", type=float, default=100.0, help="unit-ball penalty weight")
    p.add_argument("--kernel", choices=("linear", "gaussian"), default="linear")
    p.add_argument("--reduced-size", type=int, default=None, help="reduced kernel basis size")
    p.add_argument("--init", choices=("nng", "random", "file"), default="nng")
    p.add_argument("--init-file", default=None, help="1-based labels for --init file")
    p.add_argument("--neighbors", type=int, default=5, help="neighbors in the NNG initializer")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtimes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfpc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="write a synthetic dataset as CSV")
    p.add_argument("name", help="haws, lpe, sine2 or spiral")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("fit", help="fit one method with one parameter setting")
    _add_common(p)
    p.add_argument("--method", choices=METHODS, default="mfpc")
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--p", type=int, default=1, help="projection columns (MFPC) or flat codimension")
    p.add_argument("--mu", type=float, default=None, help="gaussian kernel width")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diagnostics", action="store_true", help="also write CCCP traces and defects")

    p = sub.add_parser("grid", help="evaluate every combination of a parameter grid")
    _add_common(p)
    p.add_argument("--methods", type=_method_list, default=["mfpc"])
    p.add_argument("--c1-grid", type=_float_list, default=DEFAULT_C_GRID)
    p.add_argument("--c2-grid", type=_float_list, default=DEFAULT_C_GRID)
    p.add_argument("--mu-grid", type=_float_list, default=DEFAULT_MU_GRID)
    p.add_argument("--p-grid", type=_int_list, default=None)
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("pred", help="predicted labels file")
    p.add_argument("truth", help="true labels file (or labeled data CSV)")
    return parser


def _load(args: argparse.Namespace, seed: int = 0):
    name, data = resolve_data(args.data, seed, labeled=not args.unlabeled)
    k = args.k if args.k is not None else data.n_classes
    if k is None:
        raise MFPCError("--k is required when the data has no labels")
    init_labels = load_labels(args.init_file) if args.init == "file" and args.init_file else None
    return name, data, k, init_labels


def _save_model(path: Path, spec: RunSpec, model: Any) -> None:
    header = {"c1": spec.c1, "c2": spec.c2, "sigma": spec.sigma, "p": spec.p, "seed": spec.seed}
    if spec.method == "mfpc":
        save_flat_model(path, model, header)
        return
    if spec.method == "kmeans":
        mats = {"centers": np.asarray(model).T}
    elif hasattr(model, "w"):
        mats = {"w": model.w, "b": model.b[:, None]}
        if model.nu is not None:
            mats["nu"] = model.nu
    else:
        mats = {f"W{i + 1}": model.W[i] for i in range(model.k)}
        mats["gamma"] = model.gamma
    path.write_text(dump_model(mats, {"k": spec.k, **header}, spec.method), encoding="utf-8")


def cmd_datagen(args: argparse.Namespace) -> int:
    data = generate(args.name, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(out, data)
    print(f"wrote {data.n_samples} samples to {out}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    name, data, k, init_labels = _load(args, args.seed)
    spec = RunSpec(
        args.method, k, args.c1, args.c2, args.sigma, args.p, args.kernel, args.mu,
        args.reduced_size, args.init, args.seed, args.neighbors,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcome = execute(spec, data, init_labels)
    save_labels(out_dir / "labels.csv", outcome.labels)
    _save_model(out_dir / "model.txt", spec, outcome.model)
    record = report_row(spec, name, outcome, data.labels, timing=args.timing)
    record.update(
        k=k, sigma=spec.sigma, kernel=spec.kernel, reduced_size=spec.reduced_size,
        init=spec.init, **outcome.extra,
    )
    write_json(out_dir / "metrics.json", record)
    if args.diagnostics and outcome.fit_result is not None:
        res = outcome.fit_result
        lines = ["outer,cluster,column,iteration,objective,constraint_violation"]
        for (o, i, l), tr in sorted(res.per_column_traces.items()):
            for t, (_, f, v) in enumerate(tr.iterates):
                lines.append(f"{o},{i + 1},{l + 1},{t},{fmt(f)},{fmt(v)}")
        (out_dir / "traces.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        diag = dict(res.diagnostics)
        diag["objective_history"] = res.overall_objective_history
        (out_dir / "diagnostics.json").write_text(json.dumps(diag, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({kk: _json_value(v) for kk, v in record.items()}))
    return 0


def grid_specs(args: argparse.Namespace, k: int, n_features: int) -> list[RunSpec]:
    """All combinations, ordered lexicographically over (c1, c2, mu, p, seed) per method."""
    specs = []
    gaussian = args.kernel == "gaussian"
    for method in args.methods:
        used = USES[method]
        c1s = args.c1_grid if "c1" in used else [1.0]
        c2s = args.c2_grid if "c2" in used else [1.0]
        mus = args.mu_grid if gaussian and method != "kmeans" else [None]
        if "p" in used:
            ps = args.p_grid or (kernel_p_grid() if gaussian else linear_p_grid(n_features))
        else:
            ps = [1]
        seeds = args.seeds if method in ("kmeans",) or args.init == "random" else args.seeds[:1]
        for c1, c2, mu, p, seed in itertools.product(c1s, c2s, mus, ps, seeds):
            specs.append(
                RunSpec(
                    method, k, c1, c2, args.sigma, p,
                    "gaussian" if mu is not None else "linear", mu,
                    args.reduced_size, args.init, seed, args.neighbors,
                )
            )
    return specs


def cmd_grid(args: argparse.Namespace) -> int:
    name, data, k, init_labels = _load(args)
    specs = grid_specs(args, k, data.n_features)
    jobs = [(s, name, data, init_labels, args.timing) for s in specs]
    log.info("running %d combinations on %s with %d worker(s)", len(jobs), name, args.workers)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(run_row, jobs, chunksize=1))
    else:
        rows = [run_row(j) for j in jobs]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(results_csv(rows), encoding="utf-8")
    best = best_by_nmi(rows)
    summary = {"combinations": len(rows), "failed": sum(r["status"] != "ok" for r in rows)}
    if best is not None:
        summary.update(best=best)
    (out_dir / "best.json").write_text(
        json.dumps(summary, indent=2, default=_json_value) + "\n", encoding="utf-8"
    )
    print(json.dumps(best if best is not None else summary, default=_json_value))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    pred = load_labels(args.pred)
    truth = load_labels(args.truth)
    rep = MetricReport.compare(truth, pred)
    print(json.dumps({"ari": rep.ari, "nmi": rep.nmi}))
    return 0


COMMANDS = {"datagen": cmd_datagen, "fit": cmd_fit, "grid": cmd_grid, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except MissingFile as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MFPCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
