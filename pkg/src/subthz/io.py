"""Dataset persistence: CIR JSON-lines, metric CSV, CDF tables, raw profiles."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .metrics import MetricRecord
from .sounding import ChannelImpulseResponse, MultipathTap

METRIC_HEADER = (
    "scenario_id,distance_m,rx_gain_dbi,los,path_loss_db,k_factor_db,"
    "rms_ds_ns,mean_delay_ns,rms_as_deg,mean_aoa_deg"
).split(",")


class DatasetError(ValueError):
    def __init__(self, errors: Sequence[tuple[int, str]]):
        self.errors = list(errors)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.errors[:20])
        more = f" (+{len(self.errors) - 20} more)" if len(self.errors) > 20 else ""
        super().__init__(f"{len(self.errors)} malformed record(s): {lines}{more}")


class TapRow(NamedTuple):
    delay_ns: float
    power_db: float
    aoa_deg: float

    def to_tap(self) -> MultipathTap:
        return MultipathTap(self.delay_ns * 1e-9, 10 ** (self.power_db / 10), self.aoa_deg)

    @classmethod
    def from_tap(cls, tap: MultipathTap) -> "TapRow":
        return cls(tap.delay * 1e9, 10 * math.log10(tap.power), tap.aoa)


@dataclass(frozen=True)
class CirRecord:
    """One CIR as stored on disk. Values are kept in their on-disk units so a
    read/write cycle reproduces the file byte for byte."""

    scenario_id: str
    distance_m: float
    rx_gain_dbi: float
    rotation_deg: float
    time_step_ns: float
    taps: tuple
    noise_floor_db: Optional[float] = None

    def to_taps(self) -> list[MultipathTap]:
        return [row.to_tap() for row in self.taps]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "distance_m": self.distance_m,
            "rx_gain_dbi": self.rx_gain_dbi,
            "rotation_deg": self.rotation_deg,
            "time_step_ns": self.time_step_ns,
            "taps": [
                {"delay_ns": r.delay_ns, "power_db": r.power_db, "aoa_deg": r.aoa_deg}
                for r in self.taps
            ],
            "noise_floor_db": self.noise_floor_db,
        }

    @classmethod
    def from_taps(
        cls,
        scenario_id: str,
        distance_m: float,
        rx_gain_dbi: float,
        taps: Iterable[MultipathTap],
        *,
        rotation_deg: float = 0.0,
        time_step_ns: float = 0.025,
        noise_floor_db: Optional[float] = None,
    ) -> "CirRecord":
        return cls(
            scenario_id,
            float(distance_m),
            float(rx_gain_dbi),
            float(rotation_deg),
            float(time_step_ns),
            tuple(TapRow.from_tap(t) for t in taps),
            noise_floor_db,
        )

    @classmethod
    def from_cir(cls, scenario_id, distance_m, rx_gain_dbi, cir: ChannelImpulseResponse,
                 rotation_deg: float = 0.0) -> "CirRecord":
        return cls.from_taps(
            scenario_id, distance_m, rx_gain_dbi, cir.taps,
            rotation_deg=rotation_deg, time_step_ns=cir.time_step * 1e9,
            noise_floor_db=cir.noise_floor,
        )


def _number(obj, key, *, allow_none=False):
    value = obj.get(key) if isinstance(obj, dict) else None
    if value is None and allow_none and key in obj:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{key!r} must be a number")
    if not math.isfinite(value):
        raise ValueError(f"{key!r} must be finite")
    return float(value)


def parse_cir_record(obj) -> CirRecord:
    """Validate one decoded JSON object and build a CirRecord."""
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    sid = obj.get("scenario_id")
    if not isinstance(sid, str):
        raise ValueError("'scenario_id' must be a string")
    distance = _number(obj, "distance_m")
    if distance <= 0:
        raise ValueError("'distance_m' must be positive")
    time_step = _number(obj, "time_step_ns")
    if time_step <= 0:
        raise ValueError("'time_step_ns' must be positive")
    raw_taps = obj.get("taps")
    if not isinstance(raw_taps, list):
        raise ValueError("'taps' must be a list")
    rows = []
    for i, t in enumerate(raw_taps):
        try:
            row = TapRow(_number(t, "delay_ns"), _number(t, "power_db"), _number(t, "aoa_deg"))
        except ValueError as exc:
            raise ValueError(f"tap {i}: {exc}") from None
        if row.delay_ns < 0:
            raise ValueError(f"tap {i}: negative delay")
        if not 0 <= row.aoa_deg < 360:
            raise ValueError(f"tap {i}: AoA outside [0, 360)")
        rows.append(row)
    return CirRecord(
        sid,
        distance,
        _number(obj, "rx_gain_dbi"),
        _number(obj, "rotation_deg"),
        time_step,
        tuple(rows),
        _number(obj, "noise_floor_db", allow_none=True),
    )


def dumps_cir(record: CirRecord) -> str:
    return json.dumps(record.to_dict(), allow_nan=False, separators=(",", ":"))


def write_cir_jsonl(path, records: Iterable[CirRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_cir(rec))
            fh.write("\n")
            n += 1
    return n


def ingest_cir_dataset(path, partial: bool = False):
    """Read a CIR JSON-lines file, revalidating every record.

    Strict mode raises DatasetError listing every malformed line. With
    ``partial`` the valid records are returned together with the
    ``(line_number, message)`` list.
    """
    records: list[CirRecord] = []
    errors: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_cir_record(json.loads(line)))
            except ValueError as exc:  # includes JSONDecodeError
                errors.append((lineno, str(exc)))
    if partial:
        return records, errors
    if errors:
        raise DatasetError(errors)
    return records


# ---------------------------------------------------------------------------
# metric CSV


def _fmt(value: float, digits: int) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    out = f"{value:.{digits}f}"
    return "0." + "0" * digits if out == "-0." + "0" * digits else out


def metric_row(rec: MetricRecord) -> list[str]:
    return [
        rec.scenario_id,
        _fmt(rec.distance, 3),
        _fmt(rec.rx_gain, 2),
        "true" if rec.los else "false",
        _fmt(rec.path_loss, 2),
        _fmt(rec.k_factor, 2),
        _fmt(rec.rms_ds, 3),
        _fmt(rec.mean_delay, 3),
        _fmt(rec.rms_as, 2),
        _fmt(rec.mean_aoa, 2),
    ]


def write_metrics_csv(path, records: Iterable[MetricRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_HEADER)
        for rec in records:
            writer.writerow(metric_row(rec))
            n += 1
    return n


def read_metrics_csv(path) -> list[MetricRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRIC_HEADER:
            raise ValueError(f"unexpected metric CSV header: {header}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(METRIC_HEADER):
                raise DatasetError([(lineno, f"expected {len(METRIC_HEADER)} fields")])
            if row[3] not in ("true", "false"):
                raise DatasetError([(lineno, "los must be 'true' or 'false'")])
            try:
                nums = [float(x) for x in row[1:3] + row[4:]]
            except ValueError as exc:
                raise DatasetError([(lineno, str(exc))]) from None
            out.append(MetricRecord(row[0], nums[0], nums[1], row[3] == "true", *nums[2:]))
    return out


def write_cdf_csv(path, values, probabilities, value_name: str = "value") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([value_name, "probability"])
        for v, p in zip(values, probabilities):
            writer.writerow([repr(float(v)), repr(float(p))])


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# raw profiles


def write_profile(path, cir: ChannelImpulseResponse, **meta) -> Path:
    """Little-endian complex64 samples at ``path`` plus ``path.json`` sidecar."""
    path = Path(path)
    data = np.asarray(cir.profile, dtype="<c8")
    path.write_bytes(data.tobytes())
    sidecar = {
        "dtype": "<c8",
        "n_samples": int(data.size),
        "time_step_ns": cir.time_step * 1e9,
        "noise_floor_db": cir.noise_floor,
        **meta,
    }
    side = path.with_name(path.name + ".json")
    write_json(side, sidecar)
    return side


def read_profile(path) -> ChannelImpulseResponse:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text(encoding="utf-8"))
    if meta.get("dtype") != "<c8":
        raise ValueError(f"unsupported profile dtype {meta.get('dtype')!r}")
    data = np.frombuffer(path.read_bytes(), dtype="<c8")
    if data.size != meta["n_samples"]:
        raise ValueError("profile length does not match its sidecar")
    return ChannelImpulseResponse(
        profile=data.astype(complex),
        time_step=meta["time_step_ns"] * 1e-9,
        noise_floor=meta.get("noise_floor_db"),
    )


def csv_text(rows: Sequence[dict]) -> str:
    """Rows of equal keys as CSV text (full float precision)."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in row.items()}
        )
    return buf.getvalue()
