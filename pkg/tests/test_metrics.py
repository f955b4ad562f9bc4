import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedmail.engine import EpochRecord, FLRunRecord
from fedmail.metrics import (
    ConfusionMatrix,
    confusion,
    derive_metrics,
    emit_csv,
    emit_json_summary,
    emit_plot,
    load_metrics_csv,
    valid_plot_metrics,
)

P, L = 1, 0


# --- confusion ---

def test_confusion_perfect():
    cm = confusion([P, P, L, L], [P, P, L, L])
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == (2, 0, 2, 0)


def test_confusion_all_negative_predictor():
    cm = confusion([L, L, L, L], [P, P, L, L])
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == (0, 0, 2, 2)


def test_confusion_mixed_hand_count():
    cm = confusion([P, L, P, L], [P, P, L, L])
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == (1, 1, 1, 1)


def test_confusion_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        confusion([P], [P, L])


# --- derive_metrics ---

def test_derive_perfect():
    m = derive_metrics(ConfusionMatrix(tp=2, fp=0, tn=2, fn=0))
    assert m == {
        "accuracy": 1.0, "fpr": 0.0, "fnr": 0.0,
        "precision": 1.0, "recall": 1.0, "f1": 1.0,
    }


def test_derive_uniform_half():
    m = derive_metrics(ConfusionMatrix(tp=1, fp=1, tn=1, fn=1))
    assert all(m[k] == 0.5 for k in ("accuracy", "fpr", "fnr", "precision", "recall", "f1"))


def test_derive_undefined_markers():
    # no predicted positives: precision and f1 are undefined, not 0 or NaN
    m = derive_metrics(ConfusionMatrix(tp=0, fp=0, tn=3, fn=2))
    assert m["precision"] is None and m["f1"] is None
    assert m["accuracy"] == 0.6 and m["fnr"] == 1.0
    # single-class (all legitimate) test set: fnr/recall undefined
    m2 = derive_metrics(ConfusionMatrix(tp=0, fp=1, tn=4, fn=0))
    assert m2["fnr"] is None and m2["recall"] is None


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_derive_agrees_with_bruteforce_recount(pairs):
    preds = [p for p, _ in pairs]
    labels = [l for _, l in pairs]
    m = derive_metrics(confusion(preds, labels))
    # independent recount straight from the raw pairs
    tp = sum(1 for p, l in pairs if p == 1 and l == 1)
    fp = sum(1 for p, l in pairs if p == 1 and l == 0)
    tn = sum(1 for p, l in pairs if p == 0 and l == 0)
    fn = sum(1 for p, l in pairs if p == 0 and l == 1)
    assert m["accuracy"] == (tp + tn) / len(pairs)
    assert m["fpr"] == (fp / (fp + tn) if fp + tn else None)
    assert m["fnr"] == (fn / (fn + tp) if fn + tp else None)
    assert m["precision"] == (tp / (tp + fp) if tp + fp else None)
    assert m["recall"] == (tp / (tp + fn) if tp + fn else None)
    if m["precision"] not in (None, 0) or m["recall"] not in (None, 0):
        if m["precision"] is not None and m["recall"] is not None:
            expected_f1 = 2 * tp / (2 * tp + fp + fn)
            assert m["f1"] == pytest.approx(expected_f1, rel=1e-12)


def test_metric_ranges_valid():
    rng = np.random.default_rng(0)
    for _ in range(100):
        preds = rng.integers(0, 2, size=20)
        labels = rng.integers(0, 2, size=20)
        m = derive_metrics(confusion(preds, labels))
        for key in ("accuracy", "fpr", "fnr"):
            if m[key] is not None:
                assert 0.0 <= m[key] <= 1.0


# --- record fixtures for emission ---

def _metrics(acc=0.75, precision=0.5):
    return {
        "accuracy": acc, "fpr": 0.125, "fnr": 1 / 3,
        "precision": precision, "recall": 2 / 3,
        "f1": None if precision is None else 0.571428571,
    }


def _record(n_epochs=2, n_clients=2, with_undefined=False):
    rec = FLRunRecord(num_clients=n_clients, model_bytes=100)
    for e in range(n_epochs):
        precision = None if (with_undefined and e == 0) else 0.5
        per_client = {k: _metrics(acc=0.5 + 0.1 * k, precision=precision) for k in range(1, n_clients + 1)}
        rec.epochs.append(
            EpochRecord(
                epoch=e,
                params_hash=f"hash{e}",
                active=tuple(range(1, n_clients + 1)),
                local=per_client,
                global_=per_client,
                local_avg=_metrics(precision=precision),
                global_avg=_metrics(precision=precision),
                bytes_up={k: 100 for k in range(1, n_clients + 1)},
                bytes_down={k: 100 for k in range(1, n_clients + 1)},
            )
        )
    return rec


# --- emit_csv ---

def test_csv_empty_record_header_only(tmp_path):
    path = tmp_path / "m.csv"
    emit_csv(_record(n_epochs=0), path)
    assert path.read_bytes() == b"epoch,scope,client_id,metric,value\r\n"


def test_csv_reemission_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rec = _record(3, 2)
    emit_csv(rec, a)
    emit_csv(rec, b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_undefined_metric_is_empty_cell(tmp_path):
    path = tmp_path / "m.csv"
    emit_csv(_record(1, 1, with_undefined=True), path)
    rows = load_metrics_csv(path)
    precision_rows = [r for r in rows if r["metric"] == "precision"]
    assert precision_rows and all(r["value"] is None for r in precision_rows)
    f1_rows = [r for r in rows if r["metric"] == "f1"]
    assert all(r["value"] is None for r in f1_rows)


def test_csv_roundtrip_9_significant_digits(tmp_path):
    path = tmp_path / "m.csv"
    rec = _record(2, 2)
    emit_csv(rec, path)
    rows = load_metrics_csv(path)
    by_key = {(r["epoch"], r["scope"], r["client_id"], r["metric"]): r["value"] for r in rows}
    for er in rec.epochs:
        for k, m in er.global_.items():
            for name, value in m.items():
                got = by_key[(er.epoch, "global", k, name)]
                if value is None:
                    assert got is None
                else:
                    assert got == pytest.approx(value, rel=1e-9)


def test_csv_row_order_stable(tmp_path):
    path = tmp_path / "m.csv"
    emit_csv(_record(2, 2), path)
    rows = load_metrics_csv(path)
    keys = [(r["epoch"], r["scope"], r["client_id"] or -1, r["metric"]) for r in rows]
    assert keys == sorted(keys)


def test_csv_unwritable_path_has_context():
    with pytest.raises(OSError, match="metrics CSV"):
        emit_csv(_record(1, 1), "/nonexistent-dir/x.csv")


# --- emit_plot ---

def test_plot_single_epoch_has_markers(tmp_path):
    path = tmp_path / "p.svg"
    emit_plot(_record(n_epochs=1), "global_accuracy", path)
    svg = path.read_text()
    assert svg.startswith("<svg")
    assert "<circle" in svg


def test_plot_deterministic(tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    rec = _record(4, 3)
    emit_plot(rec, "local_f1", a)
    emit_plot(rec, "local_f1", b)
    assert a.read_bytes() == b.read_bytes()


def test_plot_series_count_clients_plus_average(tmp_path):
    path = tmp_path / "p.svg"
    rec = _record(5, 5)
    emit_plot(rec, "global_accuracy", path)
    svg = path.read_text()
    for k in range(1, 6):
        assert f">client {k}</text>" in svg
    assert ">average</text>" in svg


def test_plot_unknown_metric_lists_valid_names(tmp_path):
    with pytest.raises(ValueError) as err:
        emit_plot(_record(1, 1), "bogus", tmp_path / "p.svg")
    for name in valid_plot_metrics():
        assert name in str(err.value)


# --- emit_json_summary ---

def test_json_summary_schema_and_determinism(tmp_path):
    import json

    a, b = tmp_path / "a.json", tmp_path / "b.json"
    rec = _record(3, 2)
    emit_json_summary(rec, a)
    emit_json_summary(rec, b)
    assert a.read_bytes() == b.read_bytes()
    obj = json.loads(a.read_text())
    assert set(obj) == {"final_epoch", "per_client", "averages", "ledger"}
    assert obj["final_epoch"] == 2
    assert set(obj["per_client"]) == {"1", "2"}
    assert obj["ledger"]["model_bytes"] == 100
    assert obj["ledger"]["bytes_per_active_client_per_epoch"] == 200
    assert obj["ledger"]["bytes_up_total"]["1"] == 300
