"""Engine benchmark harness and model inspection.

Timing is taken over whole-dataset passes with a monotonic clock; warmup
passes are discarded and the median of the timed passes is reported.
Passes are interleaved across engines and variants rather than run in
blocks.  Work
counters (words/literals examined, early exits) are deterministic and are
the architecture-independent evidence; wall time is secondary.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numba
import numpy as np

from .booleanize import permute_dataset
from .core import ActionModel, BoolDataset, DataError, InvariantError, check_compatible
from .engines import ALL_ENGINES, EngineKind, PreparedInputs, RawRun, run_engine
from .formats import dataset_to_bytes, model_to_bytes
from .reorder import reorder


class EngineDisagreement(InvariantError):
    pass


@dataclass
class BenchRow:
    engine: str
    reordered: bool
    pass_times_ns: list
    total_wall_ns: int
    per_sample_mean_ns: Optional[float]
    per_sample_median_ns: Optional[float]
    mean_words_examined_per_clause: float
    mean_literals_examined_per_clause: float
    early_exit_rate: float
    accuracy: Optional[float]
    time_reduction_percent: Optional[float] = None


@dataclass
class BenchReport:
    n_samples: int
    repeats: int
    warmup: int
    parallel: bool
    model_fingerprint: str
    dataset_fingerprint: str
    rows: list = field(default_factory=list)
    reorder_overhead_ns: Optional[int] = None
    environment: dict = field(default_factory=dict)

    def row(self, engine, reordered: bool = False) -> BenchRow:
        engine = EngineKind.parse(engine).value
        for r in self.rows:
            if r.engine == engine and r.reordered == reordered:
                return r
        raise KeyError((engine, reordered))

    def to_dict(self) -> dict:
        doc = asdict(self)
        if self.reorder_overhead_ns is None:
            del doc["reorder_overhead_ns"]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchReport":
        doc = dict(doc)
        rows = [BenchRow(**r) for r in doc.pop("rows")]
        return cls(rows=rows, **doc)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f for f in BenchRow.__dataclass_fields__ if f != "pass_times_ns"]
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            d = asdict(r)
            d.pop("pass_times_ns")
            w.writerow(d)
        return buf.getvalue()


def time_reduction_percent(t_engine: float, t_baseline: float) -> float:
    return 100.0 * (1.0 - t_engine / t_baseline)


def _fingerprint(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


def _per_sample_times(prepared: PreparedInputs, engine: EngineKind) -> list:
    times = []
    for i in range(prepared.n_samples):
        one = PreparedInputs(prepared.model, prepared.packed[i : i + 1])
        if not engine.is_bitwise:
            one._unpacked = prepared.unpacked[i : i + 1]
        times.append(run_engine(one, engine).wall_ns)
    return times


def _check_agreement(runs: dict) -> None:
    (ref_key, ref), *rest = runs.items()
    for key, run in rest:
        if not np.array_equal(run.predictions, ref.predictions):
            bad = int(np.flatnonzero(run.predictions != ref.predictions)[0])
            raise EngineDisagreement(
                f"{key} predicts {run.predictions[bad]} for sample {bad}, "
                f"{ref_key} predicts {ref.predictions[bad]}"
            )
        if not np.array_equal(run.class_sums, ref.class_sums):
            raise EngineDisagreement(f"{key} class sums differ from {ref_key}")


def run_bench(
    model: ActionModel,
    dataset: BoolDataset,
    engines: Iterable = ALL_ENGINES,
    repeats: int = 9,
    warmup: int = 3,
    with_reorder: bool = False,
    calibration: Optional[BoolDataset] = None,
    parallel: bool = False,
    per_sample: bool = True,
) -> BenchReport:
    """Time each engine, optionally also on a reordered model/dataset pair.

    Every engine (and variant) must agree on every prediction and class sum
    before anything is timed; otherwise :class:`EngineDisagreement` is
    raised.  ``calibration`` defaults to ``dataset`` for the reorder
    statistics.
    """
    if repeats < 1 or warmup < 0:
        raise ValueError("repeats must be >= 1 and warmup >= 0")
    engines = [EngineKind.parse(e) for e in engines]
    check_compatible(model, dataset)
    dataset.check_labels(model.shape.n_classes)

    variants = [(False, PreparedInputs(model, dataset.samples))]
    overhead = None
    if with_reorder:
        if model.permutation is not None or dataset.permuted_with is not None:
            raise DataError("--with-reorder needs an unpermuted model and dataset")
        calib = dataset if calibration is None else calibration
        result = reorder(model, calib)
        start = time.perf_counter_ns()
        permuted = permute_dataset(dataset, result.permutation.order)
        overhead = result.overhead_ns + time.perf_counter_ns() - start
        variants.append((True, PreparedInputs(result.model, permuted.samples)))

    runs: dict[tuple, RawRun] = {}
    for reordered, prepared in variants:
        for e in engines:
            runs[(e.value, reordered)] = run_engine(prepared, e, parallel=parallel)
    _check_agreement(runs)

    report = BenchReport(
        n_samples=dataset.n_samples,
        repeats=repeats,
        warmup=warmup,
        parallel=parallel,
        model_fingerprint=_fingerprint(model_to_bytes(model)),
        dataset_fingerprint=_fingerprint(dataset_to_bytes(dataset)),
        reorder_overhead_ns=overhead,
        environment={
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba": numba.__version__,
            "machine": platform.machine(),
            "processor": platform.processor(),
        },
    )
    configs = [(reordered, prepared, e) for reordered, prepared in variants for e in engines]
    for _ in range(warmup):
        for _, prepared, e in configs:
            run_engine(prepared, e, parallel=parallel)
    # round-robin so drift and background load hit every configuration alike
    passes_by_config = {(e.value, reordered): [] for reordered, _, e in configs}
    for _ in range(repeats):
        for reordered, prepared, e in configs:
            passes_by_config[(e.value, reordered)].append(run_engine(prepared, e, parallel=parallel).wall_ns)

    n = max(dataset.n_samples, 1)
    clauses = n * model.shape.n_classes * model.shape.clauses_per_class
    for reordered, prepared in variants:
        for e in engines:
            passes = passes_by_config[(e.value, reordered)]
            counts = runs[(e.value, reordered)]
            examined = int(counts.examined.sum())
            sample_times = _per_sample_times(prepared, e) if per_sample and dataset.n_samples else None
            total = int(statistics.median(passes))
            report.rows.append(
                BenchRow(
                    engine=e.value,
                    reordered=reordered,
                    pass_times_ns=passes,
                    total_wall_ns=total,
                    per_sample_mean_ns=total / n if dataset.n_samples else None,
                    per_sample_median_ns=float(np.median(sample_times)) if sample_times else None,
                    mean_words_examined_per_clause=(examined if e.is_bitwise else 0) / clauses,
                    mean_literals_examined_per_clause=(0 if e.is_bitwise else examined) / clauses,
                    early_exit_rate=int(counts.early_exits.sum()) / clauses,
                    accuracy=float(np.mean(counts.predictions == dataset.labels))
                    if dataset.n_samples
                    else None,
                )
            )
    if EngineKind.BASELINE in engines:
        base = report.row(EngineKind.BASELINE, False).total_wall_ns
        for r in report.rows:
            r.time_reduction_percent = time_reduction_percent(r.total_wall_ns, base) if base else None
    return report


def inspect_model(model: ActionModel) -> dict:
    s = model.shape
    counts = model.include_counts()
    bits = model.unpacked_actions
    if model.permutation is not None:
        # report per original literal position
        bits = bits[..., np.argsort(model.permutation)]
    p_include = bits.sum(axis=(0, 1)) / (s.n_classes * s.clauses_per_class)
    hist, edges = np.histogram(p_include, bins=10, range=(0.0, 1.0))
    return {
        "summary": s.describe(),
        "n_bool_features": s.n_bool_features,
        "n_literals": s.n_literals,
        "n_classes": s.n_classes,
        "clauses_per_class": s.clauses_per_class,
        "words_per_row": s.words_per_row,
        "include_counts_per_class": counts.sum(axis=1).tolist(),
        "empty_clauses": int((~model.nonempty).sum()),
        "mean_p_include": float(p_include.mean()) if p_include.size else 0.0,
        "p_include_histogram": {"edges": edges.tolist(), "counts": hist.tolist()},
        "permuted": model.permutation is not None,
        "permutation_fingerprint": model.fingerprint,
        "thermometer": None
        if model.thermometer is None
        else {"raw_features": model.thermometer.n_raw_features, "bins": model.thermometer.bins},
        "metadata": model.metadata,
    }


def format_inspection(info: dict) -> str:
    lines = [
        info["summary"],
        f"permutation: {'present' if info['permuted'] else 'none'}",
        f"empty clauses: {info['empty_clauses']}",
        f"mean P(include): {info['mean_p_include']:.4f}",
        "includes per class: " + " ".join(str(c) for c in info["include_counts_per_class"]),
        "P(include) histogram:",
    ]
    edges = info["p_include_histogram"]["edges"]
    for lo, hi, c in zip(edges, edges[1:], info["p_include_histogram"]["counts"]):
        lines.append(f"  [{lo:.1f}, {hi:.1f}) {c}")
    if info["thermometer"]:
        th = info["thermometer"]
        lines.append(f"thermometer: {th['raw_features']} raw features × {th['bins']} bins")
    return "\n".join(lines)


def format_report(report: BenchReport) -> str:
    lines = [
        f"{report.n_samples} samples, median of {report.repeats} passes "
        f"({report.warmup} warmup)",
        f"{'engine':<12} {'reorder':<8} {'pass ms':>10} {'reduct %':>9} "
        f"{'words/cl':>9} {'lits/cl':>9} {'exit rate':>9}",
    ]
    for r in report.rows:
        red = "" if r.time_reduction_percent is None else f"{r.time_reduction_percent:9.2f}"
        lines.append(
            f"{r.engine:<12} {str(r.reordered):<8} {r.total_wall_ns / 1e6:10.3f} {red:>9} "
            f"{r.mean_words_examined_per_clause:9.3f} {r.mean_literals_examined_per_clause:9.2f} "
            f"{r.early_exit_rate:9.3f}"
        )
    if report.reorder_overhead_ns is not None:
        lines.append(f"reorder overhead: {report.reorder_overhead_ns / 1e6:.3f} ms")
    return "\n".join(lines)
