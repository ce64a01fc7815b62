"""``fapl`` command line: gen-data, train, eval, compare, sweep-lambda.

Experiments are defined by a JSON config file; flags only pick the command,
the config, the output directory, the seed, and ``--override key=value``.
On failure a single ``fapl-error: <Token>: <message>`` line goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data import load_csv, save_csv
from .errors import FaplError, InputError, ShapeError
from .experiment import REPORT_FIELDS, DataSplits, ExperimentConfig, build_report, evaluate, make_data, run_experiment
from .model import load_checkpoint, save_checkpoint
from .trainer import train

log = logging.getLogger("fapl")

LABELED_CSV = "labeled.csv"
UNLABELED_CSV = "unlabeled.csv"
HELDOUT_CSV = "heldout.csv"
RESOLVED = "config.resolved.json"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> ExperimentConfig:
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "out", None) is not None:
        overrides.append(f"out={json.dumps(args.out)}")
    return ExperimentConfig.load(args.config, overrides)


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    data = make_data(cfg)
    save_csv(data.labeled, out / LABELED_CSV)
    save_csv(data.unlabeled, out / UNLABELED_CSV)
    save_csv(data.heldout, out / HELDOUT_CSV)
    cfg.dump(out / RESOLVED)
    data_seed, unl_seed, train_seed = cfg.seeds()
    _write_json(out / "manifest.json", {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "seed": cfg.seed,
        "seeds": {"data": data_seed, "unlabeled": unl_seed, "train": train_seed},
        "counts": {"labeled": len(data.labeled), "unlabeled": len(data.unlabeled), "heldout": len(data.heldout)},
        "files": [LABELED_CSV, UNLABELED_CSV, HELDOUT_CSV],
    })
    return 0


def _load_data_dir(path) -> DataSplits:
    d = Path(path)
    labeled = load_csv(d / LABELED_CSV)
    unl_path = d / UNLABELED_CSV
    unlabeled = load_csv(unl_path) if unl_path.exists() else None
    held_path = d / HELDOUT_CSV
    heldout = load_csv(held_path) if held_path.exists() else None
    if unlabeled is None:
        from .data import Dataset
        unlabeled = Dataset.empty(labeled.d_in, labeled.K)
    return DataSplits(labeled, unlabeled, heldout)


def _check_data(cfg: ExperimentConfig, data: DataSplits) -> None:
    if data.labeled.d_in != cfg.d_in or data.labeled.K != cfg.K:
        raise ShapeError(
            f"data has d_in={data.labeled.d_in}, K={data.labeled.K}; config expects d_in={cfg.d_in}, K={cfg.K}"
        )


def _train_to(out: Path, cfg: ExperimentConfig, data: DataSplits):
    tc = cfg.train_config(cfg.seeds()[2])
    result = train(tc, data.labeled, data.unlabeled)
    with (out / "train_log.jsonl").open("w") as fh:
        for rec in result.history.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with (out / "pseudo_label_accuracy.jsonl").open("w") as fh:
        for epoch, acc in enumerate(result.history.pseudo_label_accuracy, start=1):
            fh.write(json.dumps({"epoch": epoch, "pseudo_label_accuracy": acc}, sort_keys=True) + "\n")
    # the output location is not part of the experiment's identity
    identity = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    save_checkpoint(out / "checkpoint.json", result.params, result.centers.centers, identity)
    cfg.dump(out / RESOLVED)
    return result


def cmd_train(args) -> int:
    cfg = _load_config(args)
    data = _load_data_dir(args.data)
    _check_data(cfg, data)
    _train_to(_outdir(cfg), cfg, data)
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    params, _, chash = load_checkpoint(args.checkpoint)
    heldout = load_csv(Path(args.data) / HELDOUT_CSV if Path(args.data).is_dir() else args.data)
    if params.d_in != heldout.d_in:
        raise ShapeError(f"checkpoint expects d_in={params.d_in}, data has d_in={heldout.d_in}")
    metrics = evaluate(cfg, params, heldout)
    pla = None
    pla_path = Path(args.checkpoint).with_name("pseudo_label_accuracy.jsonl")
    if pla_path.exists():
        lines = pla_path.read_text().splitlines()
        if lines:
            pla = json.loads(lines[-1])["pseudo_label_accuracy"]
    out = _outdir(cfg)
    report = build_report(cfg, metrics, pla)
    report["checkpoint_config_hash"] = chash
    _write_json(out / "report.json", report)
    cfg.dump(out / RESOLVED)
    return 0


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _run_point(cfg_dict: dict):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        report, _ = run_experiment(cfg)
        return cfg_dict, report, None
    except FaplError as exc:
        return cfg_dict, None, f"{exc.token}: {exc}"


def _row(report: dict) -> dict:
    row = {k: report[k] for k in REPORT_FIELDS if k != "lam"}
    row["lambda"] = report["lam"]
    return row


CSV_FIELDS = ["kind", "scheme", "seed", "lambda", "n_unlabeled", "rank1", "rank5", "rank10", "mAP",
              "intra_class_variance", "pseudo_label_accuracy", "n_runs"]
METRICS = ["rank1", "rank5", "rank10", "mAP", "intra_class_variance", "pseudo_label_accuracy"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _summaries(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["scheme"], r["lambda"], r["n_unlabeled"]), []).append(r)
    out = []
    for (scheme, lam, n_unl), rs in sorted(groups.items()):
        for kind, fn in (("mean", np.mean), ("std", np.std)):
            s = {"kind": kind, "scheme": scheme, "seed": None, "lambda": lam, "n_unlabeled": n_unl, "n_runs": len(rs)}
            for m in METRICS:
                vals = [r[m] for r in rs if r[m] is not None]
                s[m] = float(fn(vals)) if vals else None
            out.append(s)
    return out


def _sweep(base: ExperimentConfig, points: list[dict], jobs: int, out: Path, name: str) -> int:
    dicts = [{**base.to_dict(), **p} for p in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_point, dicts))
    else:
        results = [_run_point(d) for d in dicts]
    rows, failures = [], []
    for cfg_dict, report, err in results:
        if err is None:
            rows.append({"kind": "run", **_row(report), "n_runs": 1})
        else:
            failures.append({k: cfg_dict[k] for k in ("scheme", "seed", "lam", "n_unlabeled")} | {"error": err})
    rows.sort(key=lambda r: (r["scheme"], r["seed"], r["lambda"], r["n_unlabeled"]))
    with (out / f"{name}.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows + _summaries(rows):
            w.writerow({k: _fmt(r.get(k)) for k in CSV_FIELDS})
    base.dump(out / RESOLVED)
    if failures:
        _write_json(out / f"{name}.failures.json", failures)
        for f in failures:
            print(f"failed run: {f}", file=sys.stderr)
        raise SweepFailed(f"{len(failures)} of {len(dicts)} runs failed")
    return 0


class SweepFailed(FaplError):
    pass


def _int_list(text: str) -> list[int]:
    vals = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            vals.extend(range(int(lo), int(hi) + 1))
        elif part:
            vals.append(int(part))
    if not vals:
        raise InputError(f"empty list {text!r}")
    return vals


def _float_list(text: str) -> list[float]:
    vals = [float(p) for p in text.split(",") if p.strip()]
    if not vals:
        raise InputError(f"empty list {text!r}")
    return vals


def _str_list(text: str) -> list[str]:
    vals = [p.strip() for p in text.split(",") if p.strip()]
    if not vals:
        raise InputError(f"empty list {text!r}")
    return vals


def cmd_compare(args) -> int:
    base = _load_config(args)
    schemes = _str_list(args.schemes) if args.schemes else [base.scheme]
    seeds = _int_list(args.seeds) if args.seeds else [base.seed]
    n_unl = _int_list(args.n_unlabeled) if args.n_unlabeled else [base.n_unlabeled]
    points = [
        {"scheme": sc, "seed": s, "n_unlabeled": n}
        for sc in schemes for s in seeds for n in n_unl
    ]
    for p in points:
        base.replace(**p)  # validate every point before running any
    return _sweep(base, points, args.jobs, _outdir(base), "compare")


def cmd_sweep_lambda(args) -> int:
    base = _load_config(args)
    lambdas = _float_list(args.lambdas)
    seeds = _int_list(args.seeds) if args.seeds else [base.seed]
    points = [{"lam": lam, "seed": s} for lam in lambdas for s in seeds]
    for p in points:
        base.replace(**p)
    return _sweep(base, points, args.jobs, _outdir(base), "sweep_lambda")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fapl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config (defaults fill omissions)")
        p.add_argument("--out", help="output directory (overrides config 'out')")
        p.add_argument("--seed", type=int, help="overrides config 'seed'")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", help="override a scalar config field")
        return p

    p = common(sub.add_parser("gen-data", help="write labeled/unlabeled/held-out CSVs and a manifest"))
    p.set_defaults(func=cmd_gen_data)

    p = common(sub.add_parser("train", help="train on a gen-data directory"))
    p.add_argument("--data", required=True, help="directory holding labeled.csv [and unlabeled.csv]")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="retrieval report for a checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="held-out CSV, or a gen-data directory")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("compare", help="train+eval for every (scheme, seed, n_unlabeled)"))
    p.add_argument("--schemes", help="comma-separated scheme tokens")
    p.add_argument("--seeds", help="comma-separated seeds or ranges, e.g. 0-9")
    p.add_argument("--n-unlabeled", help="comma-separated unlabeled counts")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = common(sub.add_parser("sweep-lambda", help="train+eval for every (lambda, seed)"))
    p.add_argument("--lambdas", default="1e-3,1e-4,1e-5")
    p.add_argument("--seeds", help="comma-separated seeds or ranges, e.g. 0-9")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep_lambda)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except FaplError as exc:
        print(f"fapl-error: {exc.token}: {exc}", file=sys.stderr)
        return 2 if exc.token == "ConfigError" else 1
    except OSError as exc:
        print(f"fapl-error: OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
