"""Acceptance gate: one test per criterion, summarized at the end of the run.

Each test carries a ``criterion`` marker; conftest prints a PASS/FAIL line
per criterion in the terminal summary.
"""

import io
import time

import numpy as np
import pytest

from helpers import (
    IRIS_FLOOR,
    IRIS_SHAPE,
    MNIST_FLOOR,
    MNIST_SHAPE,
    random_bools,
    random_dataset,
    random_model,
    reference_clause_outputs,
)
from tmfast.bench import run_bench
from tmfast.booleanize import emit_dataset, permute_dataset
from tmfast.core import (
    ActionModel,
    MagicError,
    ModelShape,
    ShapeError,
    TruncatedError,
    VersionError,
    padding_mask,
)
from tmfast.engines import ALL_ENGINES, EngineKind, clause_matrix, clause_outputs, predict_batch
from tmfast.formats import (
    dataset_from_bytes,
    dataset_to_bytes,
    model_from_bytes,
    model_to_bytes,
    read_dataset,
    read_model,
    write_dataset,
    write_model,
)
from tmfast.reorder import include_prob, reorder


def _report(line: str) -> None:
    print(f"  {line}")


def _all_rows(n: int) -> np.ndarray:
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(np.uint8)


@pytest.mark.criterion(1, "engine equivalence (exhaustive n<=10, 10^4 random cases)")
def test_engine_equivalence():
    start = time.perf_counter()
    for n in range(1, 11):
        rows = _all_rows(n)
        oracle = rows.any(axis=1)[None, :] & np.all((1 - rows[None]) | rows[:, None], axis=2)
        for e in ALL_ENGINES:
            got = clause_matrix(e, rows, rows)
            assert np.array_equal(got, oracle), f"{e.value} disagrees at n_literals={n}"

    rng = np.random.default_rng(1)
    cases = 0
    for shape, n_models, n_inputs in ((IRIS_SHAPE, 50, 100), (MNIST_SHAPE, 20, 250)):
        for _ in range(n_models):
            bools = random_bools(rng, n_inputs, shape.n_bool_features, p_one=rng.uniform(0.2, 0.8))
            model = random_model(
                rng, shape, p_include=rng.uniform(0.005, 0.2), anchors=bools[: n_inputs // 2]
            )
            data = emit_dataset(bools, np.zeros(n_inputs, dtype=np.int64))
            expected = reference_clause_outputs(model, data.literal_bits())
            sums = None
            for e in ALL_ENGINES:
                outs = clause_outputs(model, data.samples, e)
                assert np.array_equal(outs, expected), f"{e.value} clause outputs at {shape.describe()}"
                res = predict_batch(model, data, e)
                if sums is None:
                    sums, preds = res.class_sums, res.predictions
                assert np.array_equal(res.class_sums, sums)
                assert np.array_equal(res.predictions, preds)
            cases += n_inputs
    assert cases >= 10_000
    elapsed = time.perf_counter() - start
    _report(f"{cases} random cases, exhaustive n=1..10, {elapsed:.1f} s")
    assert elapsed < 120


def _assert_invariant(model, calibration, test):
    result = reorder(model, calibration)
    permuted = permute_dataset(test, result.permutation.order)
    for e in ALL_ENGINES:
        plain = predict_batch(model, test, e)
        reordered = predict_batch(result.model, permuted, e)
        assert np.array_equal(plain.predictions, reordered.predictions)
        assert np.array_equal(plain.class_sums, reordered.class_sums)


@pytest.mark.criterion(2, "reorder prediction invariance (200 random triples + trained models)")
def test_reorder_invariance(iris_trained, iris_split, mnist_trained, mnist_split):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    for _ in range(200):
        shape = ModelShape(int(rng.integers(1, 80)), int(rng.integers(1, 6)), 2 * int(rng.integers(1, 9)))
        test_bools = random_bools(rng, 40, shape.n_bool_features)
        model = random_model(rng, shape, p_include=rng.uniform(0.01, 0.3), anchors=test_bools[:20])
        calib = random_dataset(rng, int(rng.integers(1, 60)), shape.n_bool_features, shape.n_classes)
        test = emit_dataset(test_bools, rng.integers(0, shape.n_classes, 40))
        _assert_invariant(model, calib, test)
    _assert_invariant(iris_trained["model"], iris_split[0], iris_split[1])
    _assert_invariant(mnist_trained["model"], mnist_split[0], mnist_split[1])
    elapsed = time.perf_counter() - start
    _report(f"200 random triples + Iris + MNIST in {elapsed:.1f} s")
    assert elapsed < 120


@pytest.mark.criterion(3, "padding neutrality (10^3 random pad masks per shape)")
def test_padding_neutrality():
    rng = np.random.default_rng(3)
    for n_bool in (1, 5, 17, 33, 50, 790):
        shape = ModelShape(n_bool, 2, 8)
        bools = random_bools(rng, 1000, n_bool)
        model = random_model(rng, shape, p_include=0.05, anchors=bools[:200])
        clean = emit_dataset(bools, np.zeros(1000, dtype=np.int64)).samples
        pad = padding_mask(shape.n_literals)
        assert pad.any(), "shape has no padding to fuzz"
        noise = rng.integers(0, 2**32, size=clean.shape, dtype=np.uint64).astype(np.uint32)
        dirty = clean | (noise & pad)
        assert not np.array_equal(dirty, clean)
        for e in ALL_ENGINES:
            assert np.array_equal(clause_outputs(model, dirty, e), clause_outputs(model, clean, e))


@pytest.fixture(scope="module")
def mnist_bench(mnist_trained, mnist_split):
    train_data, test_data, _ = mnist_split
    return run_bench(
        mnist_trained["model"],
        test_data,
        ALL_ENGINES,
        repeats=9,
        warmup=3,
        with_reorder=True,
        calibration=train_data,
        per_sample=False,
    )


SPEED_FLOORS = {EngineKind.BITWISE_EE: 80.0, EngineKind.BITWISE: 70.0, EngineKind.EARLY_EXIT: 30.0}


@pytest.mark.criterion(4, "speedup vs baseline on MNIST (ee>=80, bitwise>=70, early-exit>=30)")
def test_speedup(mnist_bench):
    assert mnist_bench.n_samples >= 2000
    for engine, floor in SPEED_FLOORS.items():
        got = mnist_bench.row(engine, False).time_reduction_percent
        _report(f"{engine.value}: {got:.2f}% (floor {floor})")
        assert got >= floor, f"{engine.value} time reduction {got:.2f}% < {floor}%"


def _spread_pct(row, baseline_ns):
    times = np.asarray(row.pass_times_ns, dtype=np.float64)
    return 100.0 * (times.max() - times.min()) / 2.0 / baseline_ns


@pytest.mark.criterion(5, "reorder gain on MNIST (words -10%, time reduction not worse)")
def test_reorder_gain(mnist_bench):
    plain = mnist_bench.row(EngineKind.BITWISE_EE, False)
    reordered = mnist_bench.row(EngineKind.BITWISE_EE, True)
    words_drop = 100.0 * (1 - reordered.mean_words_examined_per_clause / plain.mean_words_examined_per_clause)
    _report(
        f"words/clause {plain.mean_words_examined_per_clause:.2f} -> "
        f"{reordered.mean_words_examined_per_clause:.2f} ({words_drop:.1f}% fewer)"
    )
    assert words_drop >= 10.0

    base = mnist_bench.row(EngineKind.BASELINE, False).total_wall_ns
    gain = reordered.time_reduction_percent - plain.time_reduction_percent
    noise = max(_spread_pct(plain, base), _spread_pct(reordered, base))
    _report(
        f"time reduction {plain.time_reduction_percent:.2f}% -> "
        f"{reordered.time_reduction_percent:.2f}% (noise band {noise:.3f} points)"
    )
    assert gain >= 0 or abs(gain) <= noise, "reordered pipeline slower beyond measurement noise"


@pytest.mark.criterion(6, "accuracy: Iris >= 0.90, MNIST 10k/2k >= 0.88 (best of 5 seeds)")
def test_accuracy(iris_trained, mnist_trained):
    for name, run, floor in (("Iris", iris_trained, IRIS_FLOOR), ("MNIST", mnist_trained, MNIST_FLOOR)):
        tried = ", ".join(f"seed {s}: {a:.4f}" for s, a in run["tried"])
        _report(f"{name}: best {run['accuracy']:.4f} ({tried})")
        assert run["accuracy"] >= floor


@pytest.mark.criterion(7, "include sparsity: mean p_include < 0.5")
def test_include_sparsity(iris_trained, mnist_trained):
    for name, run in (("Iris", iris_trained), ("MNIST", mnist_trained)):
        mean = float(include_prob(run["model"]).mean())
        _report(f"{name}: mean p_include {mean:.4f}")
        assert mean < 0.5


@pytest.mark.criterion(8, "format round-trips and designated error classes")
def test_format_round_trips(tmp_path, iris_trained, iris_split):
    rng = np.random.default_rng(8)
    model = iris_trained["model"]
    reordered = reorder(model, iris_split[0]).model
    empty = ActionModel(IRIS_SHAPE, np.zeros((3, 16, 3), dtype=np.uint32))
    for m in (model, reordered, empty, random_model(rng, MNIST_SHAPE)):
        blob = model_to_bytes(m)
        assert model_from_bytes(blob) == m
        write_model(m, tmp_path / "m.tmbm")
        assert (tmp_path / "m.tmbm").read_bytes() == blob
        assert model_to_bytes(read_model(tmp_path / "m.tmbm")) == blob

    train_data = iris_split[0]
    permuted = permute_dataset(train_data, reorder(model, train_data).permutation.order)
    for d in (train_data, permuted, train_data.subset(slice(0, 0))):
        blob = dataset_to_bytes(d)
        assert dataset_from_bytes(blob) == d
        write_dataset(d, tmp_path / "d.tmx")
        assert dataset_to_bytes(read_dataset(tmp_path / "d.tmx")) == blob

    blob = model_to_bytes(model)
    with pytest.raises(MagicError):
        model_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(VersionError):
        model_from_bytes(blob[:4] + b"\x02" + blob[5:])
    for cut in (0, 3, 10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(TruncatedError):
            model_from_bytes(blob[:cut])
    dblob = dataset_to_bytes(train_data)
    with pytest.raises(MagicError):
        dataset_from_bytes(b"TMBM" + dblob[4:])
    with pytest.raises(TruncatedError):
        dataset_from_bytes(dblob[:-3])
    with pytest.raises(ShapeError):
        read_dataset(io.BytesIO(dblob), n_classes=2)
