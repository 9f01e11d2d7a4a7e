"""
Classification metrics, ROC/AUC and the latency / complexity benchmark.

Defect is the positive class throughout.
"""
from __future__ import annotations

import platform
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import BenchmarkError, DegenerateDataError
from .model import flop_count, param_count, predict_proba


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(predictions, labels) -> ConfusionMatrix:
    p = np.asarray(predictions).astype(np.int64).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if len(p) != len(y):
        raise ValueError(f"{len(p)} predictions for {len(y)} labels")
    if len(p) == 0:
        raise ValueError("nothing to evaluate")
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (y == 1))),
        fp=int(np.sum((p == 1) & (y == 0))),
        fn=int(np.sum((p == 0) & (y == 1))),
        tn=int(np.sum((p == 0) & (y == 0))),
    )


@dataclass
class EvalReport:
    method: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    cm: ConfusionMatrix
    undefined: frozenset = frozenset()
    auc: float | None = None
    roc_points: list[tuple[float, float]] = field(default_factory=list)

    CSV_FIELDS = ("method", "n", "accuracy", "precision", "recall", "f1", "auc",
                  "tp", "fp", "fn", "tn", "undefined")

    def row(self) -> dict:
        return {
            "method": self.method, "n": self.cm.total,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "auc": "" if self.auc is None else self.auc,
            "tp": self.cm.tp, "fp": self.cm.fp, "fn": self.cm.fn, "tn": self.cm.tn,
            "undefined": ";".join(sorted(self.undefined)),
        }

    def to_text(self) -> str:
        return "".join(f"{k}: {_fmt(v)}\n" for k, v in self.row().items())

    def to_csv(self) -> str:
        row = self.row()
        return ",".join(self.CSV_FIELDS) + "\n" + ",".join(_fmt(row[k]) for k in self.CSV_FIELDS) + "\n"

    def roc_csv(self) -> str:
        return "fpr,tpr\n" + "".join(f"{x!r},{y!r}\n" for x, y in self.roc_points)


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def metrics(cm: ConfusionMatrix, method: str = "") -> EvalReport:
    """Accuracy, precision, recall and F1; zero denominators give 0 and a flag."""
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    undefined = set()
    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        undefined.add("precision")
    if cm.tp + cm.fn:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        undefined.add("recall")
    if cm.tp:
        # equals 2pr/(p+r), evaluated on counts to avoid a second rounding
        f1 = 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn)
    else:
        f1 = 0.0
        undefined.add("f1")
    return EvalReport(method, accuracy, precision, recall, f1, cm, frozenset(undefined))


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC points from (0, 0) to (1, 1), one step per distinct score, and the
    trapezoidal area under them."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    P = int(np.sum(y == 1))
    N = int(np.sum(y == 0))
    if P == 0 or N == 0:
        raise DegenerateDataError("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each block of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(y == 1)[ends]
    fps = np.cumsum(y == 0)[ends]
    tpr = np.r_[0, tps] / P
    fpr = np.r_[0, fps] / N
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


def evaluate(predictions, labels, scores=None, method: str = "") -> EvalReport:
    report = metrics(confusion(predictions, labels), method)
    if scores is not None:
        report.roc_points, report.auc = roc_auc(scores, labels)
    return report


def merge_reports_csv(reports: Sequence[EvalReport]) -> str:
    lines = [",".join(EvalReport.CSV_FIELDS)]
    for r in reports:
        row = r.row()
        lines.append(",".join(_fmt(row[k]) for k in EvalReport.CSV_FIELDS))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# benchmark
# --------------------------------------------------------------------------

PUBLISHED_FOOTNOTE = (
    "published SM-CNN figures: 1.48M params, 0.166 GFLOPs, 8.8 ms preprocessing, "
    "2.6 ms inference, 87.72 FPS (hardware-specific). The param figure here is "
    "counted from the layer table itself; its dense 12288->128 layer alone holds "
    "1,572,992 parameters, so 1.48M cannot match that table."
)


@dataclass
class BenchReport:
    preprocess_ms_per_window: float
    inference_ms_per_window: float
    param_count: int
    mac_count: int
    flop_count: int
    environment: str
    repeats: int
    warmup: int
    footnote: str = PUBLISHED_FOOTNOTE

    @property
    def fps(self) -> float:
        return 1000.0 / self.inference_ms_per_window

    @property
    def fps_e2e(self) -> float:
        return 1000.0 / (self.preprocess_ms_per_window + self.inference_ms_per_window)

    def items(self) -> list[tuple[str, object]]:
        return [
            ("preprocess_ms", self.preprocess_ms_per_window),
            ("inference_ms", self.inference_ms_per_window),
            ("fps", self.fps),
            ("fps_e2e", self.fps_e2e),
            ("params", self.param_count),
            ("macs", self.mac_count),
            ("flops", self.flop_count),
            ("gflops", self.flop_count / 1e9),
            ("repeats", self.repeats),
            ("warmup", self.warmup),
            ("environment", self.environment),
        ]

    def to_text(self) -> str:
        body = "".join(f"{k}: {_fmt(v)}\n" for k, v in self.items())
        return body + f"note: {self.footnote}\n"

    def to_csv(self) -> str:
        keys, vals = zip(*self.items())
        vals = ['"' + str(v).replace('"', "'") + '"' if k == "environment" else _fmt(v)
                for k, v in zip(keys, vals)]
        return ",".join(keys) + "\n" + ",".join(vals) + "\n"


def environment_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return (f"cpu={cpu}; python={platform.python_version()}; numpy={np.__version__}; "
            f"os={platform.system()} {platform.release()}; threads=1")


def time_call(fn: Callable[[], object], repeats: int = 100, warmup: int = 10,
              inner: int = 1) -> float:
    """Median wall-clock milliseconds of one ``fn()`` call.

    Each timed repetition runs ``fn`` ``inner`` times back to back.
    """
    if repeats < 1 or inner < 1:
        raise ValueError("repeats and inner must be >= 1")
    for _ in range(warmup):
        fn()
    resolution_ns = max(time.get_clock_info("perf_counter").resolution * 1e9, 1.0)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        for _ in range(inner):
            fn()
        samples.append(time.perf_counter_ns() - t0)
    median_ns = statistics.median(samples)
    if median_ns < 100 * resolution_ns:
        raise BenchmarkError(
            f"measured span {median_ns} ns is under 100x the timer resolution "
            f"({resolution_ns:.0f} ns); raise the inner repetition count")
    return median_ns / inner / 1e6


def bench(arch, params, raw_windows: Sequence[np.ndarray], preprocess: Callable,
          repeats: int = 100, warmup: int = 10, inner: int = 1) -> BenchReport:
    """Single-threaded per-window latency of preprocessing and inference.

    ``raw_windows`` are raw (W, N) segments; ``preprocess`` maps one of them
    to a network input. Calls cycle through the windows.
    """
    if len(raw_windows) < 1:
        raise ValueError("need at least one window")
    if repeats < 100 or warmup < 10:
        raise ValueError("bench needs repeats >= 100 and warmup >= 10")
    inputs = [preprocess(w) for w in raw_windows]
    k = {"pre": 0, "inf": 0}

    def run_pre():
        preprocess(raw_windows[k["pre"] % len(raw_windows)])
        k["pre"] += 1

    def run_inf():
        predict_proba(arch, params, inputs[k["inf"] % len(inputs)])
        k["inf"] += 1

    with threadpool_limits(limits=1):
        pre_ms = time_call(run_pre, repeats, warmup, inner)
        inf_ms = time_call(run_inf, repeats, warmup, inner)
    macs, flops = flop_count(arch)
    return BenchReport(pre_ms, inf_ms, param_count(arch), macs, flops,
                       environment_descriptor(), repeats, warmup)
