"""``geossl`` command-line tool.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import default_statistic, features, fit_basic, knn_regress
from .checkpoint import ConfigMismatchError, read_checkpoint, write_checkpoint
from .config import CONFIG_KINDS, ConfigError, PretrainPlan, TrainPlan, preset
from .contrastive import NumericalError
from .data.container import directory_checksum
from .data.features import impute_record, normalize
from .data.io import read_dataset, write_dataset
from .data.records import MODES, DataError
from .data.synthetic import WorldParams, gen_synthetic_world
from .encoders import MissingValuesError
from .experiments import ablation_grid, run_ablation, run_pretrain
from .finetune import FinetuneResult, finetune, split
from .metrics import METRIC_NAMES, MetricError, evaluate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PREDICTION_HEADER = ["model", "approach", "location_id", "observed", "predicted"]

log = logging.getLogger("geossl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- output helpers

def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _num(x):
    """Full-precision float text; empty for undefined metrics."""
    return "" if x is None else repr(float(x))


def _out_dir(path: str, force: bool = True) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_id(cfg, approach: str) -> str:
    return f"{cfg.encoder.name}/{cfg.toggles}/{approach}"


def finetune_report(res: FinetuneResult) -> dict:
    cfg = res.model.cfg
    return {
        "approach": res.approach,
        "config": cfg.encoder.name,
        "toggles": str(cfg.toggles),
        "model": cfg.to_dict(),
        "folds": [{"fold": f.fold, "split": f.report.split, "best_epoch": f.best_epoch,
                   "metrics": f.report.metrics_dict()} for f in res.folds],
        "selected": {"fold": res.selected_fold, "split": "test", "metrics": res.test_report.metrics_dict()},
    }


# ---------------------------------------------------------------- subcommands

def _model_config(args, toggles=None, config=None):
    over = {}
    if getattr(args, "temperature", None) is not None:
        over["temperature"] = args.temperature
    return preset(args.preset, config or args.config, toggles or args.toggles, **over)


def _train_plan(args) -> TrainPlan:
    return TrainPlan(epochs=args.epochs, batch_size=args.batch, lr=args.lr, lr_min=args.lr / 100,
                     seed=args.seed, folds=args.folds, freeze_encoders=args.freeze_encoders,
                     label_cap=args.label_cap)


def _pretrain_plan(args, epochs=None) -> PretrainPlan:
    return PretrainPlan(epochs=args.epochs if epochs is None else epochs, batch_size=args.batch,
                        lr=args.lr, lr_min=args.lr / 100, seed=args.seed)


def cmd_gen_data(args) -> int:
    out = _out_dir(args.out, args.force)
    params = WorldParams(size=args.size, patch=args.patch, n_labeled=args.labeled,
                         n_unlabeled=args.unlabeled, mode=args.mode, noise=args.noise)
    world = gen_synthetic_world(args.seed, params)
    manifest = write_dataset(out, world.to_dataset())
    c = manifest["counts"]
    print(f"wrote {out}: mode={manifest['mode']} labeled={c['labeled']} unlabeled={c['unlabeled']} "
          f"total={c['total']} patch={manifest['image_size']} months={manifest['series_length']}")
    print(f"checksum {directory_checksum(out)}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    ds = read_dataset(args.dataset)
    if len(ds) == 0:
        raise DataError(f"{args.dataset}: dataset is empty")
    cfg = _model_config(args)
    out = _out_dir(args.out)
    ckpt, result = run_pretrain(ds.records, cfg, _pretrain_plan(args))
    write_checkpoint(out / "checkpoint", ckpt)
    write_csv(out / "pretrain_loss.csv", ["epoch", "step", "loss"],
              [(e, s, _num(l)) for e, s, l in result.history])
    print(f"pretrained {cfg.encoder.name} on {ckpt.meta['n_records']} records, "
          f"{len(result.history)} steps, final loss {result.final_loss}")
    return EXIT_OK


def _write_finetune_outputs(out: Path, res: FinetuneResult) -> dict:
    report = finetune_report(res)
    write_json(out / "report.json", report)
    mid = _model_id(res.model.cfg, res.approach)
    write_csv(out / "predictions.csv", PREDICTION_HEADER,
              [(mid, res.approach, i, _num(y), _num(p)) for i, y, p in res.predictions])
    write_csv(out / "history.csv", ["fold", "epoch", "lr", "train_loss", "val_rmse"],
              [(h["fold"], h["epoch"], _num(h["lr"]), _num(h["train_loss"]), _num(h["val_rmse"]))
               for h in res.history])
    return report


def cmd_finetune(args) -> int:
    ds = read_dataset(args.dataset)
    if not ds.labeled:
        raise DataError(f"{args.dataset}: no labeled records")
    cfg = _model_config(args)
    init = None if args.init in (None, "none") else read_checkpoint(args.init)
    res = finetune(ds.records, cfg, _train_plan(args), init=init)
    out = _out_dir(args.out)
    report = _write_finetune_outputs(out, res)
    m = report["selected"]["metrics"]
    print(f"{res.approach} {cfg.encoder.name}/{cfg.toggles}: test RMSE {m['rmse']:.4f} "
          f"R2 {m['r2_percent']}% (fold {res.selected_fold})")
    return EXIT_OK


ABLATION_HEADER = ["row", "approach", "config", "toggles"] + list(METRIC_NAMES) + ["n", "seed"]


def cmd_ablate(args) -> int:
    ds = read_dataset(args.dataset)
    if not ds.labeled:
        raise DataError(f"{args.dataset}: no labeled records")
    cells = ablation_grid()
    if args.configs:
        keep = set(args.configs.split(","))
        cells = [c for c in cells if c.config in keep]
    over = {} if args.temperature is None else {"temperature": args.temperature}
    pre_epochs = args.pretrain_epochs if args.pretrain_epochs is not None else args.epochs
    results = run_ablation(ds.records, args.preset, _train_plan(args), _pretrain_plan(args, pre_epochs),
                           cells, over)
    out = _out_dir(args.out)
    rows = []
    for i, (cell, res) in enumerate(results):
        m = res.test_report.metrics_dict()
        rows.append([i, cell.approach, cell.config, cell.toggles] + [_num(m[k]) for k in METRIC_NAMES]
                    + [m["n"], m["seed"]])
    write_csv(out / "ablation.csv", ABLATION_HEADER, rows)
    write_csv(out / "predictions.csv", PREDICTION_HEADER,
              [(c.cell_id, c.approach, i, _num(y), _num(p)) for c, r in results for i, y, p in r.predictions])
    print(f"wrote {len(rows)} ablation rows to {out / 'ablation.csv'}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    ds = read_dataset(args.dataset)
    labeled = ds.labeled
    if not labeled:
        raise DataError(f"{args.dataset}: no labeled records")
    train, val, test = split(labeled, (0.6, 0.2, 0.2), args.seed)
    train = train + val
    statistic = args.statistic or default_statistic(ds.mode)
    y_tr = np.array([r.soc for r in train])
    y_te = np.array([r.soc for r in test])
    basic = fit_basic(y_tr, statistic)
    tr_recs, stats = normalize([impute_record(r) for r in train])
    te_recs, _ = normalize([impute_record(r) for r in test], stats)
    k = min(args.k, len(train))
    knn = knn_regress(features(te_recs), features(tr_recs), y_tr,
                      np.array([r.location_id for r in train]), k)
    out = _out_dir(args.out)
    reports = {"basic": evaluate(y_te, basic.predict(len(test)), args.seed),
               f"knn{k}": evaluate(y_te, knn, args.seed)}
    write_json(out / "report.json", {
        "approach": "baseline", "statistic": statistic, "basic_value": basic.value,
        "models": {name: {"split": "test", "metrics": r.metrics_dict()} for name, r in reports.items()},
    })
    preds = [("basic", "baseline", r.location_id, _num(r.soc), _num(basic.value)) for r in test]
    preds += [(f"knn{k}", "baseline", r.location_id, _num(r.soc), _num(p)) for r, p in zip(test, knn)]
    write_csv(out / "predictions.csv", PREDICTION_HEADER, preds)
    for name, r in reports.items():
        print(f"{name}: RMSE {r.rmse:.4f} R2 {r.r2_percent}%")
    return EXIT_OK


def read_predictions(path: str) -> dict[str, list[tuple[str, int, float, float]]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DataError(f"{path}: empty prediction file")
    if rows[0] != PREDICTION_HEADER:
        raise DataError(f"{path}: header {rows[0]} does not match {PREDICTION_HEADER}")
    if len(rows) == 1:
        raise DataError(f"{path}: prediction file has no rows")
    groups: dict[str, list] = {}
    for row in rows[1:]:
        if len(row) != len(PREDICTION_HEADER):
            raise DataError(f"{path}: malformed row {row}")
        groups.setdefault(row[0], []).append((row[1], int(row[2]), float(row[3]), float(row[4])))
    return groups


def cmd_report(args) -> int:
    merged: dict[str, list] = {}
    for path in args.inputs:
        for model, rows in read_predictions(path).items():
            if model in merged:
                raise DataError(f"model {model!r} appears in more than one input")
            merged[model] = rows
    out = _out_dir(args.out)
    table = []
    scatter = []
    for model in sorted(merged):
        rows = merged[model]
        y = np.array([r[2] for r in rows])
        p = np.array([r[3] for r in rows])
        m = evaluate(y, p).metrics_dict()
        table.append([model, rows[0][0]] + [_num(m[k]) for k in METRIC_NAMES] + [m["n"]])
        scatter += [(model, r[1], _num(r[2]), _num(r[3])) for r in rows]
    write_csv(out / "summary.csv", ["model", "approach"] + list(METRIC_NAMES) + ["n"], table)
    write_csv(out / "scatter.csv", ["model", "location_id", "observed", "predicted"], scatter)
    for row in table:
        print(",".join(str(v) for v in row))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p, epochs=50, batch=32, lr=1e-4):
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch", type=int, default=batch)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--config", choices=sorted(CONFIG_KINDS), default="vit-trans")
    p.add_argument("--toggles", default="1111")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")


def _finetune_flags(p):
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--freeze-encoders", action="store_true")
    p.add_argument("--label-cap", type=float, default=None,
                   help="drop labels at or above this value (87 selects mineral soils)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="geossl", description="Cross-modal contrastive pretraining and SOC regression.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a planted-correlation synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=MODES, default="lucas-like")
    g.add_argument("--labeled", type=int, default=200)
    g.add_argument("--unlabeled", type=int, default=5000)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--size", type=int, default=256)
    g.add_argument("--patch", type=int, default=16)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="contrastive pretraining on the dataset's unlabeled records")
    _common(p, batch=64)
    p.set_defaults(func=cmd_pretrain)

    f = sub.add_parser("finetune", help="k-fold RMSLE fine-tuning and test evaluation")
    _common(f)
    _finetune_flags(f)
    f.add_argument("--init", default="none", help="checkpoint directory, or 'none' for random init")
    f.set_defaults(func=cmd_finetune)

    a = sub.add_parser("ablate", help="feature-toggle x encoder-config grid")
    _common(a)
    _finetune_flags(a)
    a.add_argument("--pretrain-epochs", type=int, default=None)
    a.add_argument("--configs", default=None, help="comma-separated subset of configs")
    a.set_defaults(func=cmd_ablate)

    b = sub.add_parser("baseline", help="Basic (mean/median) and kNN baselines")
    b.add_argument("--dataset", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--statistic", choices=("mean", "median"), default=None)
    b.add_argument("--k", type=int, default=5)
    b.set_defaults(func=cmd_baseline)

    r = sub.add_parser("report", help="merge predictions CSVs into summary and scatter tables")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("geossl: a subcommand is required (see --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigMismatchError, MissingValuesError, MetricError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:
        cause = getattr(exc, "cause", None)
        if isinstance(cause, NumericalError):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        if isinstance(cause, (DataError, ConfigMismatchError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())
