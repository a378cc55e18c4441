import json
import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subthz import io as dio
from subthz.io import CirRecord, DatasetError, TapRow
from subthz.metrics import MetricRecord
from subthz.sounding import ChannelImpulseResponse, MultipathTap

rows = st.builds(
    TapRow,
    st.floats(0.0, 1e4),
    st.floats(-200.0, 50.0),
    st.floats(0.0, 359.999),
)
records = st.builds(
    CirRecord,
    st.text(min_size=1, max_size=20),
    st.floats(0.01, 14.0),
    st.floats(0.1, 60.0),
    st.floats(0.0, 359.0),
    st.floats(1e-4, 1.0),
    st.lists(rows, max_size=6).map(tuple),
    st.none() | st.floats(-150.0, 0.0),
)


def sample_record(i=0):
    taps = [MultipathTap(3.3e-9, 1e-4, 180.0), MultipathTap(5.1e-9, 2.5e-7, 160.0)]
    return CirRecord.from_taps(f"g15-los-d1-r{i}", 1.0, 15.0, taps)


@given(records)
def test_record_json_round_trip(rec):
    again = dio.parse_cir_record(json.loads(dio.dumps_cir(rec)))
    assert again == rec
    assert dio.dumps_cir(again) == dio.dumps_cir(rec)


def test_file_round_trip_is_byte_identical(tmp_path):
    recs = [sample_record(i) for i in range(5)]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    dio.write_cir_jsonl(a, recs)
    back = dio.ingest_cir_dataset(a)
    assert back == recs
    dio.write_cir_jsonl(b, back)
    assert a.read_bytes() == b.read_bytes()


def test_tap_units_round_trip():
    tap = MultipathTap(12.5e-9, 3.2e-6, 45.0)
    again = TapRow.from_tap(tap).to_tap()
    assert again.delay == pytest.approx(tap.delay, rel=1e-15)
    assert again.power == pytest.approx(tap.power, rel=1e-14)
    assert again.aoa == tap.aoa


def _lines(*objs):
    return "\n".join(o if isinstance(o, str) else json.dumps(o) for o in objs) + "\n"


def test_bad_lines_reported_with_numbers(tmp_path):
    good = sample_record().to_dict()
    neg_delay = json.loads(json.dumps(good))
    neg_delay["taps"][0]["delay_ns"] = -1.0
    inf_power = json.loads(json.dumps(good))
    inf_power["taps"][0]["power_db"] = -math.inf  # zero power, serialized as -Infinity
    missing = {k: v for k, v in good.items() if k != "distance_m"}
    path = tmp_path / "bad.jsonl"
    path.write_text(_lines(good, neg_delay, "{not json", inf_power, missing, good))
    with pytest.raises(DatasetError) as info:
        dio.ingest_cir_dataset(path)
    assert [n for n, _ in info.value.errors] == [2, 3, 4, 5]
    assert "line 2" in str(info.value)
    recs, errors = dio.ingest_cir_dataset(path, partial=True)
    assert len(recs) == 2 and len(errors) == 4


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(scenario_id=3),
        lambda d: d.update(distance_m=0),
        lambda d: d.update(time_step_ns="x"),
        lambda d: d.update(rx_gain_dbi=True),
        lambda d: d.update(taps={}),
        lambda d: d["taps"][0].update(aoa_deg=360.0),
        lambda d: d["taps"][1].pop("power_db"),
    ],
)
def test_schema_violations(mutate):
    d = sample_record().to_dict()
    mutate(d)
    with pytest.raises(ValueError):
        dio.parse_cir_record(d)


def test_noise_floor_may_be_null():
    d = sample_record().to_dict()
    assert d["noise_floor_db"] is None
    assert dio.parse_cir_record(d).noise_floor_db is None
    d.pop("noise_floor_db")
    with pytest.raises(ValueError):
        dio.parse_cir_record(d)


def test_from_cir():
    cir = ChannelImpulseResponse(
        np.zeros(4), 25e-12, taps=(MultipathTap(0.0, 1.0),), noise_floor=-70.0
    )
    rec = CirRecord.from_cir("s", 2.0, 21.0, cir, rotation_deg=30.0)
    assert rec.time_step_ns == pytest.approx(0.025)
    assert rec.noise_floor_db == -70.0 and rec.rotation_deg == 30.0


# ---------------------------------------------------------------------------
# metric CSV


def metric(i=0, **kw):
    base = dict(
        scenario_id=f"s{i}", distance=2.0, rx_gain=15.0, los=True, path_loss=80.123456,
        k_factor=21.5, rms_ds=0.64712, mean_delay=3.3333, rms_as=1.234, mean_aoa=179.995,
    )
    base.update(kw)
    return MetricRecord(**base)


def test_metric_csv_format(tmp_path):
    p = tmp_path / "m.csv"
    dio.write_metrics_csv(p, [metric(), metric(1, los=False, k_factor=math.inf, rms_as=-0.0)])
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0].split(",") == dio.METRIC_HEADER
    assert lines[1] == "s0,2.000,15.00,true,80.12,21.50,0.647,3.333,1.23,180.00"
    assert lines[2].split(",")[3:6] == ["false", "80.12", "inf"]
    assert lines[2].split(",")[8] == "0.00"


def test_metric_csv_round_trip_is_idempotent(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    dio.write_metrics_csv(a, [metric(i, path_loss=70 + i / 7) for i in range(10)])
    dio.write_metrics_csv(b, dio.read_metrics_csv(a))
    assert a.read_bytes() == b.read_bytes()


def test_metric_csv_rejects_bad_rows(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(",".join(dio.METRIC_HEADER) + "\ns,1,2,maybe,1,1,1,1,1,1\n")
    with pytest.raises(DatasetError):
        dio.read_metrics_csv(p)
    p.write_text("a,b\n")
    with pytest.raises(ValueError):
        dio.read_metrics_csv(p)


def test_cdf_csv(tmp_path):
    p = tmp_path / "c.csv"
    dio.write_cdf_csv(p, [0.1, 0.2], [0.5, 1.0], "rms_ds")
    assert p.read_text() == "rms_ds,probability\n0.1,0.5\n0.2,1.0\n"


def test_write_json_refuses_nan(tmp_path):
    with pytest.raises(ValueError):
        dio.write_json(tmp_path / "x.json", {"a": math.nan})


def test_profile_round_trip(tmp_path):
    prof = (np.arange(8) + 1j * np.arange(8)[::-1]).astype(complex) / 7
    cir = ChannelImpulseResponse(prof, 25e-12, noise_floor=-60.5)
    side = dio.write_profile(tmp_path / "p.bin", cir, scenario_id="x")
    assert json.loads(side.read_text())["scenario_id"] == "x"
    back = dio.read_profile(tmp_path / "p.bin")
    np.testing.assert_allclose(back.profile, prof, rtol=1e-6)
    assert back.time_step == pytest.approx(25e-12)
    assert back.noise_floor == -60.5


def test_ingest_performance(tmp_path):
    path = tmp_path / "big.jsonl"
    rec = sample_record()
    line = dio.dumps_cir(rec) + "\n"
    path.write_text(line * 100_000)
    start = time.perf_counter()
    recs = dio.ingest_cir_dataset(path)
    elapsed = time.perf_counter() - start
    assert len(recs) == 100_000
    assert elapsed < 10.0
