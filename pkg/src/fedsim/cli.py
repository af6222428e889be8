"""Command-line entry point: ``fedsim run|sweep|compare|gradcheck|selfcheck``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, load_config, resolve_axis, with_value
from .orchestrator import METRIC_COLUMNS, ConfigError, ExperimentResult, run_experiment, thread_count

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(value) -> str:
    """Shortest decimal that reads back to the same float; ints stay ints; None is empty."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def write_metrics(path: Path, result: ExperimentResult) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for seed in sorted(result.streams):
            for r in result.streams[seed]:
                row = r.row(seed)
                w.writerow([fmt(row[c]) for c in METRIC_COLUMNS])


def read_metrics(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: empty metrics file") from None
        rows = [dict(zip(header, (parse_cell(c) for c in line))) for line in reader if line]
    return header, rows


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def execute(config, out: Path) -> tuple[ExperimentResult, dict]:
    """Run ``config`` and write metrics.csv, summary.json and manifest.json under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    result = run_experiment(config, threads=thread_count())
    paths = {name: str(out / name) for name in ("metrics.csv", "summary.json", "manifest.json")}
    write_metrics(out / "metrics.csv", result)
    summary = result.summary()
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json", {
        "config_hash": config_hash(config),
        "config": config.as_dict(),
        "seeds": list(config.seeds),
        "started": started,
        "finished": _now(),
        "outputs": paths,
        "version": __version__,
    })
    return result, summary


def _report_errors(result: ExperimentResult) -> int:
    for seed, msg in sorted(result.errors.items()):
        print(f"seed {seed} failed: {msg}", file=sys.stderr)
    return EXIT_RUNTIME if result.errors else EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config, args.set)
    result, summary = execute(config, Path(args.out))
    if result.streams:
        print(f"final train_loss {summary['final_train_loss_mean']:.6g}  "
              f"test_acc {summary['final_test_acc_mean']:.4f}  -> {args.out}")
    return _report_errors(result)


SWEEP_COLUMNS = ("value", "final_train_loss", "final_test_acc", "best_train_loss",
                 "best_test_acc", "final_consistency", "failed_seeds")


def cmd_sweep(args) -> int:
    axis = resolve_axis(args.axis)
    raw = [v for v in (s.strip() for s in args.values.split(",")) if v]
    if not raw:
        raise UsageError("sweep needs at least one value")
    base = load_config(args.config, args.set)
    from .config import apply_override
    values = [apply_override(f"{axis}={v}")[1] for v in raw]
    configs = [with_value(base, axis, v) for v in values]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("axis",) + SWEEP_COLUMNS)
        for text, cfg in zip(raw, configs):
            result, s = execute(cfg, out / f"{axis}={text}")
            status = max(status, _report_errors(result))
            if not result.streams:
                w.writerow((axis, text, "", "", "", "", "", len(result.errors)))
                continue
            w.writerow((axis, text, fmt(s["final_train_loss_mean"]), fmt(s["final_test_acc_mean"]),
                        fmt(s["best_train_loss_mean"]), fmt(s["best_test_acc_mean"]),
                        fmt(s["final_consistency_mean"]), len(result.errors)))
            print(f"{axis}={text}: final train_loss {s['final_train_loss_mean']:.6g}, "
                  f"best test_acc {s['best_test_acc_mean']:.4f}")
    return status


def rounds_per_seed(rows: list[dict], key: str, target: float) -> dict:
    reached: dict = {}
    for r in rows:
        seed = r["seed"]
        reached.setdefault(seed, math.inf)
        hit = r[key] <= target if key == "train_loss" else r[key] >= target
        if hit and reached[seed] == math.inf:
            reached[seed] = r["round"]
    return reached


def cmd_compare(args) -> int:
    files = list(dict.fromkeys(str(Path(f)) for f in args.files))
    if len(files) < 2:
        raise UsageError("compare needs at least two distinct metrics files")
    header0 = None
    table = []
    for f in files:
        try:
            header, rows = read_metrics(f)
        except OSError as exc:
            raise UsageError(f"{f}: {exc.strerror}") from None
        if header0 is None:
            header0 = header
        elif header != header0:
            raise UsageError(f"{f}: columns {header} differ from {files[0]}: {header0}")
        if args.key not in header:
            raise UsageError(f"{f}: no column {args.key!r}")
        per_seed = rounds_per_seed(rows, args.key, args.target)
        table.append((f, float(np.median(list(per_seed.values()))) if per_seed else math.inf))

    best = min(r for _, r in table)
    lines = []
    for f, r in table:
        if math.isinf(r):
            ratio = math.inf
        else:
            ratio = r / best
        lines.append((f, "inf" if math.isinf(r) else f"{r:g}", "inf" if math.isinf(ratio) else f"{ratio:.2f}"))
    width = max(len(f) for f, _, _ in lines)
    print(f"{'file':<{width}}  {'rounds':>7}  speedup  ({args.key} target {args.target:g})")
    for f, r, ratio in lines:
        print(f"{f:<{width}}  {r:>7}  {ratio + ('x' if ratio != 'inf' else ''):>7}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("file", "key", "target", "rounds", "ratio_to_best"))
        for f, r, ratio in lines:
            w.writerow((f, args.key, fmt(args.target), r, ratio))
    return EXIT_OK


def _print_checks(checks) -> int:
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} passed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def cmd_gradcheck(args) -> int:
    from .selfcheck import gradcheck_suite
    return _print_checks(gradcheck_suite(args.checks, args.tol, args.seed))


def cmd_selfcheck(args) -> int:
    import warnings

    from .selfcheck import identity_suite
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _print_checks(identity_suite(full=not args.quick))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedsim", description=__doc__)
    p.add_argument("--version", action="version", version=f"fedsim {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. method.alpha=0.05 (repeatable)")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run one sub-experiment per value of a config key")
    s.add_argument("config")
    s.add_argument("--axis", required=True, help="dotted key, e.g. method.alpha or run.K")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", default="sweep_out")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="rounds-to-target across metrics files")
    c.add_argument("files", nargs="+")
    c.add_argument("--key", choices=("train_loss", "test_acc"), default="train_loss")
    c.add_argument("--target", type=float, required=True)
    c.add_argument("--out", default="compare.csv")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    g.add_argument("--checks", type=int, default=100)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    k = sub.add_parser("selfcheck", help="exact identity suite")
    k.add_argument("--quick", action="store_true", help="shorten the full-length monotonicity run")
    k.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"fedsim {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level report
        print(f"fedsim {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
