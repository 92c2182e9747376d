"""Command-line driver: ``hdsf train``, ``hdsf bench`` and ``hdsf check``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels, reference
from .core import ALGORITHMS, HdsError, TrainConfig, UsageError
from .ingest import FORMATS, Dataset, load_dataset, parse_ratings, save_dataset, split
from .partition import balance_report, partition
from .persistence import save_model
from .scheduler import SchedTrace
from .trainers import EPOCH_FIELDS, Instrumentation, time_to_best, train

log = logging.getLogger("hdsf")

BENCH_FIELDS = ("algo", "threads", "repeat", "final_rmse", "final_mae", "time_to_best_s")
SUMMARY_FIELDS = ("algo", "threads", "repeats", "rmse_mean", "rmse_std", "mae_mean", "mae_std",
                  "time_to_best_mean", "time_to_best_std")
SYNTHETIC = ("planted", "powerlaw")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("HDSF_THREADS", "1")))
    except ValueError:
        return 1


def _clamp(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    return lo, hi


def _csv_list(kind):
    def parse(text: str) -> list:
        return [kind(x) for x in text.split(",") if x]
    return parse


def _add_data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="rating file")
    src.add_argument("--synthetic", choices=SYNTHETIC, help="generate a synthetic matrix instead of reading --data")
    p.add_argument("--format", choices=FORMATS, default="movielens-dat", help="rating file format (default: %(default)s)")
    p.add_argument("--split", type=float, default=0.7, help="train fraction (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="split and training seed (default: %(default)s)")
    p.add_argument("--cache", type=Path, help="dataset cache file; read if present, written otherwise")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rank", type=int, default=16, help="latent dimension D (default: %(default)s)")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="regularization (default: 5e-2)")
    p.add_argument("--eta", type=float, default=None, help="learning rate (default: 1e-4)")
    p.add_argument("--gamma", type=float, default=None, help="NAG momentum (default: 0.9)")
    p.add_argument("--epochs", type=int, default=100, help="maximum epochs (default: %(default)s)")
    p.add_argument("--patience", type=int, default=10,
                   help="stop after this many epochs without RMSE gain of 1e-5; 0 disables (default: %(default)s)")
    p.add_argument("--clamp", type=_clamp, default=None, metavar="LO,HI", help="clamp predictions when evaluating")
    p.add_argument("--partition", choices=("equal", "balanced"), default=None,
                   help="override the algorithm's blocking scheme")
    p.add_argument("--optimizer", choices=("sgd", "nag"), default=None,
                   help="override the algorithm's update rule")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdsf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model and log per-epoch test error")
    t.add_argument("--algo", choices=ALGORITHMS, default="a2psgd", help="algorithm (default: %(default)s)")
    t.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads (default: $HDSF_THREADS or 1)")
    _add_data_args(t)
    _add_model_args(t)
    t.add_argument("--log-file", type=Path, help="write the epoch CSV here instead of stdout")
    t.add_argument("--save-model", type=Path, help="write the trained factors to this path")
    t.add_argument("--force", action="store_true", help="overwrite an existing --save-model file")
    t.add_argument("--report-balance", nargs="?", const="-", default=None, metavar="PATH",
                   help="write the block balance report as JSON (stderr when no PATH)")
    t.add_argument("--trace-sched", type=Path, help="append scheduler events to this CSV")
    t.set_defaults(func=run_train)

    b = sub.add_parser("bench", help="repeat training over algorithms and thread counts")
    b.add_argument("--algos", type=_csv_list(str), default=["a2psgd", "fpsgd"],
                   help="comma-separated algorithms (default: a2psgd,fpsgd)")
    b.add_argument("--threads", type=_csv_list(int), default=[_default_threads()],
                   help="comma-separated thread counts (default: $HDSF_THREADS or 1)")
    b.add_argument("--repeats", type=int, default=3, help="runs per cell (default: %(default)s)")
    b.add_argument("--preset", choices=sorted(reference.HPARAMS), default=None,
                   help="per-algorithm lambda/eta/gamma; explicit flags take precedence")
    _add_data_args(b)
    _add_model_args(b)
    b.add_argument("--out", type=Path, help="per-run CSV (default: stdout)")
    b.add_argument("--summary", type=Path, help="mean/std summary CSV (default: stderr table)")
    b.set_defaults(func=run_bench)

    c = sub.add_parser("check", help="compare bench output with published accuracy")
    c.add_argument("bench_csv", type=Path)
    c.add_argument("--dataset", choices=sorted(reference.ACCURACY), default="ml1m")
    c.add_argument("--tol", type=float, default=0.01, help="absolute tolerance (default: %(default)s)")
    c.set_defaults(func=run_check)
    return parser


# -- helpers -----------------------------------------------------------------

def load_data(args) -> Dataset:
    if args.cache is not None and args.cache.exists():
        ds = load_dataset(args.cache)
        if ds.meta.get("seed") == args.seed and ds.meta.get("train_fraction") == args.split:
            return ds
        log.info("cache %s was built with different split settings; rebuilding", args.cache)
    if args.synthetic is not None:
        from . import synthetic
        gen = synthetic.planted_low_rank if args.synthetic == "planted" else synthetic.power_law
        raw = gen(seed=args.seed).triples()
        ds = split(raw, args.split, args.seed, source=f"synthetic:{args.synthetic}")
    else:
        ds = split(parse_ratings(args.data, args.format), args.split, args.seed, source=str(args.data))
    if args.cache is not None:
        save_dataset(ds, args.cache)
    return ds


def _resolve_hparams(args, algo: str) -> tuple[float, float, float]:
    lam, eta, gamma = 5e-2, 1e-4, 0.9
    preset = getattr(args, "preset", None)
    if preset is not None and algo in reference.HPARAMS[preset]:
        lam, eta, gamma = reference.HPARAMS[preset][algo]
    lam = args.lam if args.lam is not None else lam
    eta = args.eta if args.eta is not None else eta
    gamma = args.gamma if args.gamma is not None else gamma
    return lam, eta, gamma


def make_config(args, algo: str, threads: int, seed: int) -> TrainConfig:
    lam, eta, gamma = _resolve_hparams(args, algo)
    return TrainConfig(lam=lam, eta=eta, gamma=gamma, d=args.rank, threads=threads,
                       max_epochs=args.epochs, seed=seed, algorithm=algo, clamp=args.clamp,
                       patience=args.patience, partition=args.partition, optimizer=args.optimizer)


def write_epoch_csv(logs, fh) -> None:
    w = csv.writer(fh)
    w.writerow(EPOCH_FIELDS)
    for lg in logs:
        w.writerow([lg.epoch, f"{lg.wall_time_s:.6f}", repr(lg.rmse), repr(lg.mae),
                    repr(lg.train_loss), lg.block_updates])


def derive_seed(seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1, dtype=np.uint64)[0] >> 1)


# -- subcommands -------------------------------------------------------------

def run_train(args) -> int:
    ds = load_data(args)
    cfg = make_config(args, args.algo, args.threads, args.seed)
    inst = Instrumentation(trace=SchedTrace() if args.trace_sched else None)

    if args.report_balance is not None:
        if args.algo in ("a2psgd", "fpsgd", "dsgd"):
            scheme = cfg.partition or ("balanced" if args.algo == "a2psgd" else "equal")
        else:
            scheme = cfg.partition or "balanced"
        side = cfg.threads if args.algo == "dsgd" else None
        report = balance_report(partition(ds.train, cfg.threads, scheme, side))
        report["scheme"] = scheme
        text = json.dumps(report, indent=2)
        if args.report_balance == "-":
            print(text, file=sys.stderr)
        else:
            Path(args.report_balance).write_text(text + "\n")

    model, logs = train(ds, cfg, inst=inst)

    if args.log_file:
        with open(args.log_file, "w", newline="") as fh:
            write_epoch_csv(logs, fh)
        summary_out = sys.stdout
    else:
        write_epoch_csv(logs, sys.stdout)
        summary_out = sys.stderr
    if inst.trace is not None:
        inst.trace.dump(args.trace_sched)
    if args.save_model:
        save_model(model, {"rows": ds.row_ids, "cols": ds.col_ids}, args.save_model, force=args.force)
    last = logs[-1]
    print(f"algo={args.algo} threads={cfg.threads} epochs={last.epoch} rmse={last.rmse:.6f} "
          f"mae={last.mae:.6f} train_time_s={last.wall_time_s:.3f}", file=summary_out)
    return 0


def _mean_std(xs: list[float]) -> tuple[float, float]:
    arr = np.asarray(xs, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def run_bench(args) -> int:
    for algo in args.algos:
        if algo not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    ds = load_data(args)
    runs = []
    for algo in args.algos:
        for threads in args.threads:
            for rep in range(args.repeats):
                cfg = make_config(args, algo, threads, derive_seed(args.seed, rep))
                _, logs = train(ds, cfg)
                last = logs[-1]
                runs.append({"algo": algo, "threads": threads, "repeat": rep,
                             "final_rmse": last.rmse, "final_mae": last.mae,
                             "time_to_best_s": time_to_best(logs)})
                log.info("bench %s threads=%d repeat=%d rmse=%.6f", algo, threads, rep, last.rmse)

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_FIELDS)
        w.writeheader()
        for r in runs:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    finally:
        if args.out:
            out.close()

    rows = summarize(runs)
    if args.summary:
        with open(args.summary, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
            w.writeheader()
            w.writerows(rows)
    else:
        for r in rows:
            print(f"{r['algo']:>10} x{r['threads']:<3} RMSE {r['rmse_mean']:.4f}±{r['rmse_std']:.2e}  "
                  f"MAE {r['mae_mean']:.4f}±{r['mae_std']:.2e}  "
                  f"time-to-best {r['time_to_best_mean']:.2f}±{r['time_to_best_std']:.2f}s", file=sys.stderr)
    return 0


def summarize(runs: list[dict]) -> list[dict]:
    cells: dict[tuple, list[dict]] = {}
    for r in runs:
        cells.setdefault((r["algo"], int(r["threads"])), []).append(r)
    rows = []
    for (algo, threads), rs in cells.items():
        rm, rsd = _mean_std([float(r["final_rmse"]) for r in rs])
        mm, msd = _mean_std([float(r["final_mae"]) for r in rs])
        tm, tsd = _mean_std([float(r["time_to_best_s"]) for r in rs])
        rows.append({"algo": algo, "threads": threads, "repeats": len(rs), "rmse_mean": rm, "rmse_std": rsd,
                     "mae_mean": mm, "mae_std": msd, "time_to_best_mean": tm, "time_to_best_std": tsd})
    return rows


def read_bench(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(BENCH_FIELDS) - set(rows[0]):
        raise UsageError(f"{path}: missing bench columns {sorted(set(BENCH_FIELDS) - set(rows[0]))}")
    return rows


def check_bench(rows: list[dict], dataset: str, tol: float) -> list[tuple[str, str, float, float, bool]]:
    """Compare per-algorithm mean RMSE/MAE against the published figures."""
    expected = reference.ACCURACY[dataset]
    results = []
    for s in summarize(rows):
        if s["algo"] not in expected:
            continue
        ref_rmse, ref_mae = expected[s["algo"]]
        for metric, got, ref in (("rmse", s["rmse_mean"], ref_rmse), ("mae", s["mae_mean"], ref_mae)):
            results.append((f"{s['algo']}@{s['threads']}", metric, got, ref, abs(got - ref) <= tol))
    return results


def run_check(args) -> int:
    results = check_bench(read_bench(args.bench_csv), args.dataset, args.tol)
    if not results:
        print("no rows for known algorithms", file=sys.stderr)
        return 1
    for name, metric, got, ref, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} {metric}={got:.4f} expected {ref:.4f} ± {args.tol}")
    return 0 if all(r[-1] for r in results) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", _kernels.BACKEND)
    try:
        return args.func(args)
    except HdsError as exc:
        print(f"hdsf: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"hdsf: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
