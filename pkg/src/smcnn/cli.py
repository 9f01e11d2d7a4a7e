"""
smcnn command line: gen | prep | train | eval | bench | baseline | table.

Exit codes: 0 success, 1 usage or configuration, 2 I/O, 3 file format,
4 degenerate data. Reports go to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, config, container
from .errors import ConfigError, DegenerateDataError, FormatError, SmcnnError
from .evaluation import EvalReport, bench, evaluate
from .model import (build_sm_cnn, init_params, load_checkpoint, predict_proba,
                    save_checkpoint)
from .nn import DEFECT
from .preprocess import WindowSample, preprocess_window, record_windows
from .synthgen import generate_dataset
from .training import history_csv, split_dataset, train

EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_DEGENERATE = 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sidecar(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.name + suffix)


def _write_text(path, text: str) -> None:
    Path(path).write_text(text)


def _load_cfg(args) -> config.RunConfig:
    overrides = list(args.set or [])
    for flag, key in getattr(args, "_flag_keys", {}).items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return config.load(args.config, overrides)


def _split(labels, cfg: config.RunConfig):
    return split_dataset(labels, cfg.train.split_ratio, cfg.train.seed)


def _window_metadata(path) -> list[dict] | None:
    meta = _sidecar(path, ".windows.json")
    return json.loads(meta.read_text())["windows"] if meta.exists() else None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    ds = generate_dataset(cfg.generator, cfg.size.n_defect, cfg.size.n_normal)
    values = np.stack([r.values for r in ds.records]) if ds.records else \
        np.zeros((0, cfg.generator.record_length, cfg.generator.channel_count))
    container.write(args.out, container.Container(values, ds.labels))
    truth = {
        "metadata": ds.metadata,
        "defects": [[dataclasses.asdict(d) for d in r.defects] for r in ds.records],
    }
    _write_text(_sidecar(args.out, ".truth.json"), json.dumps(truth, indent=1) + "\n")
    meta = ds.metadata
    print(f"records: {len(ds.records)} (defect {meta['n_defect']}, normal {meta['n_normal']})")
    print(f"seed: {meta['seed']}")
    print(f"snr_nominal: {meta['snr_nominal']:.3f} ({meta['snr_convention']})")
    print(f"written: {args.out}")
    return 0


def cmd_prep(args) -> int:
    cfg = _load_cfg(args)
    data = container.read(args.inp)
    truth_path = _sidecar(args.inp, ".truth.json")
    centers = None
    if truth_path.exists():
        defects = json.loads(truth_path.read_text())["defects"]
        if len(defects) != len(data.labels):
            raise FormatError(f"{truth_path} lists {len(defects)} records, "
                              f"container holds {len(data.labels)}")
        centers = [[d["axial_center"] for d in rec] for rec in defects]
    windows: list[WindowSample] = []
    for i, (rec, label) in enumerate(zip(data.values, data.labels)):
        if centers is not None:
            windows += record_windows(rec, cfg.preprocess, defect_centers=centers[i], record_index=i)
        else:
            windows += record_windows(rec, cfg.preprocess, record_label=int(label), record_index=i)
    W, N = cfg.preprocess.window_length, data.shape[2]
    values = np.stack([w.values for w in windows]) if windows else np.zeros((0, W, N))
    labels = np.array([w.label for w in windows], dtype=np.uint8)
    container.write(args.out, container.Container(values, labels))
    meta = {"windows": [{"record": w.source_record, "offset": w.source_offset, "scale": w.scale}
                        for w in windows]}
    _write_text(_sidecar(args.out, ".windows.json"), json.dumps(meta) + "\n")
    if args.csv:
        rows = ["window,label,record,offset,t," + ",".join(f"ch{c}" for c in range(N))]
        for k, w in enumerate(windows):
            for t, row in enumerate(w.values):
                rows.append(f"{k},{w.label},{w.source_record},{w.source_offset},{t},"
                            + ",".join(repr(float(v)) for v in row))
        _write_text(args.csv, "\n".join(rows) + "\n")
    print(f"windows: {len(windows)} (defect {int(labels.sum())}, normal {int(len(labels) - labels.sum())})")
    print(f"shape: {W}x{N}")
    print(f"written: {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    data = container.read(args.windows)
    train_idx, test_idx = _split(data.labels, cfg)
    _, T, C = data.shape
    arch = build_sm_cnn(channels=C, length=T)
    params0 = init_params(arch, cfg.train.seed)
    params, history = train(arch, params0, data.values[train_idx],
                            data.labels[train_idx], cfg.train_config())
    save_checkpoint(arch, params, args.out)
    split = {"ratio": cfg.train.split_ratio, "seed": cfg.train.seed,
             "train": train_idx.tolist(), "test": test_idx.tolist()}
    _write_text(_sidecar(args.out, ".split.json"), json.dumps(split) + "\n")
    table = history_csv(history)
    if args.history:
        _write_text(args.history, table)
    sys.stdout.write(table)
    return 0


def _report_files(report: EvalReport, prefix) -> None:
    if prefix:
        _write_text(f"{prefix}.txt", report.to_text())
        _write_text(f"{prefix}.csv", report.to_csv())
        if report.roc_points:
            _write_text(f"{prefix}.roc.csv", report.roc_csv())


def _test_indices(args, labels, cfg) -> np.ndarray:
    split_path = Path(args.split) if args.split else None
    if split_path is None and getattr(args, "checkpoint", None):
        candidate = _sidecar(args.checkpoint, ".split.json")
        split_path = candidate if candidate.exists() else None
    if split_path is not None:
        test = np.array(json.loads(split_path.read_text())["test"], dtype=np.int64)
        if len(test) and (test.min() < 0 or test.max() >= len(labels)):
            raise FormatError(f"{split_path} indexes past the {len(labels)} windows")
        return test
    return _split(labels, cfg)[1]


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    data = container.read(args.windows)
    arch, params = load_checkpoint(args.checkpoint)
    test = _test_indices(args, data.labels, cfg)
    if len(test) == 0:
        raise DegenerateDataError("no windows to evaluate")
    scores = predict_proba(arch, params, data.values[test])[:, DEFECT]
    y = data.labels[test]
    preds = (scores >= 0.5).astype(np.uint8)
    roc = len(np.unique(y)) == 2
    report = evaluate(preds, y, scores if roc else None, method="sm-cnn")
    _report_files(report, args.out)
    sys.stdout.write(report.to_text())
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_cfg(args)
    data = container.read(args.windows)
    train_idx, test_idx = _split(data.labels, cfg)
    if args.split:
        split = json.loads(Path(args.split).read_text())
        train_idx = np.array(split["train"], dtype=np.int64)
        test_idx = np.array(split["test"], dtype=np.int64)
    X, y = data.values, data.labels
    if args.which == "pca-threshold":
        meta = _window_metadata(args.windows)
        if meta is not None and len(meta) == len(X):
            scale = np.array([m["scale"] for m in meta], dtype=np.float64)
            X = X.astype(np.float64) * scale[:, None, None]
        else:
            print("warning: no window scale sidecar; thresholding normalized windows",
                  file=sys.stderr)
        model = baselines.fit_pca_threshold(X[train_idx], y[train_idx])
        scores = model.statistics(X[test_idx])
        preds = model.detector.predict(scores)
    else:
        T = X.shape[1]
        arch = baselines.build_1d_cnn(T)
        x1, y1 = baselines.channels_as_samples(X[train_idx], y[train_idx])
        params, _ = train(arch, init_params(arch, cfg.train.seed), x1, y1, cfg.train_config())
        scores = baselines.mean_defect_probability(X[test_idx], arch, params)
        preds = (scores >= 0.5).astype(np.uint8)
    roc = len(np.unique(y[test_idx])) == 2
    report = evaluate(preds, y[test_idx], scores if roc else None, method=args.which)
    _report_files(report, args.out)
    sys.stdout.write(report.to_text())
    return 0


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    arch, params = load_checkpoint(args.checkpoint)
    T, C, _ = arch.input_shape
    if args.dataset:
        records = container.read(args.dataset).values
    else:
        gen = cfg.generator
        if gen.channel_count != C:
            raise ConfigError(f"generator has {gen.channel_count} channels, model expects {C}")
        ds = generate_dataset(gen, cfg.bench.windows // 2, cfg.bench.windows - cfg.bench.windows // 2)
        records = np.stack([r.values for r in ds.records])
    raw = [rec[:T] for rec in records[:cfg.bench.windows] if len(rec) >= T]
    if not raw:
        raise DegenerateDataError(f"no record holds a full {T}-sample window")
    report = bench(arch, params, raw, lambda w: preprocess_window(w, cfg.preprocess),
                   repeats=cfg.bench.repeats, warmup=cfg.bench.warmup, inner=cfg.bench.inner)
    if args.out:
        _write_text(f"{args.out}.txt", report.to_text())
        _write_text(f"{args.out}.csv", report.to_csv())
    sys.stdout.write(report.to_text())
    return 0


def cmd_table(args) -> int:
    reports = []
    for path in args.reports:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != set(EvalReport.CSV_FIELDS):
            raise FormatError(f"{path} is not an evaluation report CSV")
        reports += rows
    text = ",".join(EvalReport.CSV_FIELDS) + "\n" + "".join(
        ",".join(r[k] for k in EvalReport.CSV_FIELDS) + "\n" for r in reports)
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, **flags) -> None:
    p.add_argument("--config", help=f"config file (default: ${config.ENV_VAR} or built-in defaults)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")
    keys = {}
    for flag, (key, typ, help_) in flags.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, help=help_)
        keys[flag] = key
    p.set_defaults(_flag_keys=keys)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smcnn", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic record container")
    p.add_argument("--out", required=True)
    _common(p, seed=("generator.seed", int, "dataset seed"),
            n_defect=("generator.n_defect", int, "number of flawed records"),
            n_normal=("generator.n_normal", int, "number of clean records"),
            record_length=("generator.record_length", int, "samples per record"))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("prep", help="preprocess records into normalized windows")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write every window sample as CSV rows")
    _common(p, stride=("preprocess.stride", int, "window stride"))
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train SM-CNN on the training split")
    p.add_argument("--windows", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="per-epoch CSV path")
    _common(p, seed=("train.seed", int, "split, init and shuffle seed"),
            epochs=("train.epochs", int, "epochs"),
            learning_rate=("train.learning_rate", float, "Adam step size"),
            augment=("train.augment", str, "true/false"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    p.add_argument("--windows", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", help="split JSON (default: <checkpoint>.split.json)")
    p.add_argument("--out", help="report prefix for .txt/.csv/.roc.csv")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="single-thread latency, params and FLOPs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help="raw record container to draw windows from")
    p.add_argument("--out", help="report prefix for .txt/.csv")
    _common(p, repeats=("bench.repeats", int, "timed repetitions"))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("baseline", help="train and evaluate a reference detector")
    p.add_argument("--windows", required=True)
    p.add_argument("--which", required=True, choices=["pca-threshold", "cnn1d"])
    p.add_argument("--split", help="split JSON written by train")
    p.add_argument("--out", help="report prefix for .txt/.csv/.roc.csv")
    _common(p, seed=("train.seed", int, "split and init seed"),
            epochs=("train.epochs", int, "epochs for cnn1d"))
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("table", help="merge report CSVs into one table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"smcnn {args.command}: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DegenerateDataError as exc:
        print(f"smcnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"smcnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SmcnnError, ValueError) as exc:
        print(f"smcnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
