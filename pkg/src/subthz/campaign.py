"""Synthetic measurement campaign: simulate, estimate, fit, report."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as dio
from .fitting import FitError, empirical_cdf, fit_distribution, fit_gain_curve, fit_log_distance
from .metrics import MetricRecord, metric_record
from .model import (
    CONFERENCE_ROOM,
    MEASURED_GAINS,
    ExtrapolationWarning,
    Scenario,
    SynthesisParams,
    ds_of_gain,
    kfactor_of_gain,
    parse_key_values,
    ple_of_gain,
    scenario_from_mapping,
    synthesize_channel,
)
from .sounding import MultipathTap, SoundingConfig, sound_channel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    output_dir: Path = Path("campaign_out")
    gains: tuple = MEASURED_GAINS
    distances: tuple = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
    los_conditions: tuple = (True,)
    realizations: int = 100
    seed: int = 0
    rotation_step: Optional[float] = None  # degrees; None -> receive beamwidth
    quantize_aoa: bool = True
    scenario: Scenario = CONFERENCE_ROOM
    synthesis: SynthesisParams = SynthesisParams()
    pl0_mode: str = "fixed_friis"
    sound: bool = False
    snr_db: float = 25.0
    dynamic_range_db: float = 60.0
    workers: int = 1

    def validate(self) -> None:
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if not self.gains:
            raise ConfigError("at least one receive gain is required")
        if any(g <= 0 for g in self.gains):
            raise ConfigError("gains must be positive")
        if not self.distances:
            raise ConfigError("at least one distance is required")
        diag = math.hypot(self.scenario.room_width, self.scenario.room_depth)
        for d in self.distances:
            if not 0 < d <= diag:
                raise ConfigError(f"distance {d} m is outside (0, {diag:.2f}] m")
        if not self.los_conditions:
            raise ConfigError("at least one LoS condition is required")
        if self.rotation_step is not None and self.rotation_step <= 0:
            raise ConfigError("rotation_step must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.pl0_mode not in ("fixed_friis", "free"):
            raise ConfigError(f"unknown pl0_mode {self.pl0_mode!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _los_list(text: str) -> tuple:
    t = text.strip().lower()
    return {"los": (True,), "nlos": (False,), "both": (True, False)}.get(t) or _bad(text)


def _bad(text):
    raise ConfigError(f"los must be 'los', 'nlos' or 'both', got {text!r}")


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


_CAMPAIGN_KEYS = {
    "output_dir": Path,
    "gains": _floats,
    "distances": _floats,
    "los_conditions": _los_list,
    "los": _los_list,
    "realizations": int,
    "seed": int,
    "rotation_step": float,
    "quantize_aoa": _bool,
    "pl0_mode": str.strip,
    "sound": _bool,
    "snr_db": float,
    "dynamic_range_db": float,
    "workers": int,
}


def campaign_from_mapping(values: dict, base: CampaignConfig = CampaignConfig()) -> CampaignConfig:
    """Build a config from ``key = value`` strings; scenario and synthesis keys pass through."""
    updates = {}
    scenario_keys = {}
    synth_updates = {}
    synth_fields = {f.name: f.type for f in fields(SynthesisParams)}
    for key, raw in values.items():
        name = key.strip().replace("-", "_")
        try:
            if name in _CAMPAIGN_KEYS:
                target = "los_conditions" if name == "los" else name
                updates[target] = _CAMPAIGN_KEYS[name](raw)
            elif name in synth_fields:
                text = raw.strip()
                if name == "weighting":
                    synth_updates[name] = text
                elif text.lower() in ("", "none"):
                    synth_updates[name] = None
                elif name in ("tuning_draws", "tuning_seed"):
                    synth_updates[name] = int(text)
                else:
                    synth_updates[name] = float(text)
            else:
                scenario_keys[name] = raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    unknown = [k for k in scenario_keys if k not in {f.name for f in fields(Scenario)}]
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    try:
        scenario = scenario_from_mapping(scenario_keys, base.scenario)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return replace(
        base, scenario=scenario, synthesis=replace(base.synthesis, **synth_updates), **updates
    )


def load_campaign_config(path, base: CampaignConfig = CampaignConfig()) -> CampaignConfig:
    return campaign_from_mapping(parse_key_values(Path(path).read_text(encoding="utf-8")), base)


# ---------------------------------------------------------------------------


def realization_seed(seed: int, *indices: int) -> int:
    return int(np.random.SeedSequence([seed, *indices]).generate_state(1)[0])


def _condition(los: bool) -> str:
    return "los" if los else "nlos"


def _quantize(aoa: float, step: float) -> float:
    return (round(aoa / step) * step) % 360.0


def attach_aoa(found, generating):
    """Give each detected tap the azimuth of the generating tap nearest in
    excess delay (the rotation sweep resolves each path at its own angle)."""
    first = min(t.delay for t in generating)
    return [
        MultipathTap(
            t.delay, t.power, min(generating, key=lambda s: abs(s.delay - first - t.delay)).aoa
        )
        for t in found
    ]


def _run_point(task):
    cfg, gi, di, ci = task
    gain, distance, los = cfg.gains[gi], cfg.distances[di], cfg.los_conditions[ci]
    scenario = replace(cfg.scenario, rx_gain=gain, distance=distance, los=los)
    step = cfg.rotation_step or scenario.beamwidth
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        for r in range(cfg.realizations):
            seed = realization_seed(cfg.seed, gi, di, ci, r)
            real = synthesize_channel(scenario, seed, cfg.synthesis)
            taps = list(real.taps)
            if cfg.quantize_aoa:
                taps = [MultipathTap(t.delay, t.power, _quantize(t.aoa, step)) for t in taps]
            sid = f"g{gain:g}-{_condition(los)}-d{distance:g}-r{r}"
            if cfg.sound:
                cir = sound_channel(
                    taps, snr_db=cfg.snr_db, rng_seed=seed, dynamic_range_db=cfg.dynamic_range_db
                )
                found = attach_aoa(cir.taps, taps)
                rec = dio.CirRecord.from_taps(
                    sid, distance, gain, found,
                    time_step_ns=cir.time_step * 1e9, noise_floor_db=cir.noise_floor,
                )
            else:
                rec = dio.CirRecord.from_taps(
                    sid, distance, gain, taps, time_step_ns=SoundingConfig().time_step * 1e9
                )
            metrics = metric_record(
                sid, distance, gain, los, rec.to_taps(),
                tx_power_dbm=scenario.tx_power, tx_gain_dbi=scenario.tx_gain,
                weighting=cfg.synthesis.weighting,
            )
            out.append((rec, metrics))
    return out


@dataclass
class CampaignReport:
    output_dir: Path
    n_records: int
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def simulate(cfg: CampaignConfig):
    """All (CirRecord, MetricRecord) pairs in deterministic gain/condition/distance order."""
    tasks = [
        (cfg, gi, di, ci)
        for gi in range(len(cfg.gains))
        for ci in range(len(cfg.los_conditions))
        for di in range(len(cfg.distances))
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_run_point, tasks))
    else:
        chunks = [_run_point(t) for t in tasks]
    return [pair for chunk in chunks for pair in chunk]


def _gain_curve_entry(name, form, gains, values, closed_form):
    entry = {"metric": name}
    try:
        fit = fit_gain_curve(gains, values, form)
        entry.update(fit.to_dict())
        fitted = [float(fit(g)) for g in gains]
    except (FitError, ValueError) as exc:
        entry.update({"form": form, "error": str(exc), "n_points": len(gains)})
        fitted = None
    entry["gains_dbi"] = list(gains)
    entry["measured"] = list(values)
    entry["fitted"] = fitted
    entry["closed_form"] = [closed_form(g) for g in gains]
    return entry


def _monotone(values, increasing: bool) -> bool:
    pairs = zip(values, values[1:])
    return all(b > a for a, b in pairs) if increasing else all(b < a for a, b in pairs)


def analyze(cfg: CampaignConfig, metrics: list[MetricRecord], out: Path) -> tuple[list, dict]:
    """Write CDF tables and fit reports; return (relative file names, summary)."""
    files = []
    (out / "cdf").mkdir(parents=True, exist_ok=True)
    (out / "fits").mkdir(parents=True, exist_ok=True)
    gains = list(cfg.gains)
    per_gain = {}
    distributions = []
    ple, kmean, ds_mean = {}, {}, {True: {}, False: {}}

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        for g in gains:
            for los in cfg.los_conditions:
                cond = _condition(los)
                group = [m for m in metrics if m.rx_gain == g and m.los == los]
                tag = f"g{g:g}_{cond}"
                ld = fit_log_distance(
                    [m.distance for m in group], [m.path_loss for m in group], cfg.pl0_mode,
                    frequency=cfg.scenario.carrier_frequency,
                )
                name = f"fits/log_distance_{tag}.json"
                dio.write_json(out / name, {
                    "form": "log_distance", "rx_gain_dbi": g, "los": los,
                    "pl0_db": ld.pl0, "n": ld.n, "sigma_db": ld.sigma, "d0_m": ld.d0,
                    "pl0_mode": cfg.pl0_mode, "n_points": len(group),
                })
                files.append(name)

                k = np.array([m.k_factor for m in group])
                ds = np.array([m.rms_ds for m in group])
                as_ = np.array([m.rms_as for m in group])
                finite_k = k[np.isfinite(k)]
                series = {"rms_ds": ds, "rms_as": as_}
                if los:
                    series["k_factor"] = finite_k
                for metric, values in series.items():
                    if values.size == 0:
                        continue
                    name = f"cdf/{metric}_{tag}.csv"
                    dio.write_cdf_csv(out / name, *empirical_cdf(values), value_name=metric)
                    files.append(name)
                fits = {"rms_ds": ("exponential", ds), "rms_as": ("normal", as_)}
                if los:
                    fits["k_factor"] = ("normal", finite_k)
                for metric, (family, values) in fits.items():
                    entry = {"rx_gain_dbi": g, "los": los, "metric": metric}
                    try:
                        entry.update(fit_distribution(values, family).to_dict())
                    except ValueError as exc:
                        entry.update({"family": family, "error": str(exc)})
                    distributions.append(entry)

                ds_mean[los][g] = float(ds.mean())
                stats = {
                    "n_records": len(group),
                    "ple": ld.n,
                    "ple_closed_form": ple_of_gain(g),
                    "mean_rms_ds_ns": float(ds.mean()),
                    "ds_closed_form_ns": ds_of_gain(g, los),
                }
                if los:
                    ple[g] = ld.n
                    kmean[g] = float(finite_k.mean()) if finite_k.size else math.inf
                    stats["mean_k_factor_db"] = kmean[g]
                    stats["k_closed_form_db"] = kfactor_of_gain(g)
                    stats["k_infinite_count"] = int(k.size - finite_k.size)
                per_gain[tag] = stats

        dio.write_json(out / "fits/distributions.json", distributions)
        files.append("fits/distributions.json")

        curves = []
        if ple and len(ple) >= 4:
            curves.append(("ple", "two_exponential", ple, ple_of_gain))
        if kmean and len(kmean) >= 3 and all(math.isfinite(v) for v in kmean.values()):
            curves.append(("k_factor", "quadratic", kmean, kfactor_of_gain))
        for los in cfg.los_conditions:
            if len(ds_mean[los]) >= 3:
                curves.append((f"rms_ds_{_condition(los)}", "quadratic", ds_mean[los],
                               lambda g, los=los: ds_of_gain(g, los)))
        curve_report = []
        for name, form, table, closed in curves:
            gs = sorted(table)
            entry = _gain_curve_entry(name, form, gs, [table[g] for g in gs], closed)
            fname = f"fits/gain_curve_{name}.json"
            dio.write_json(out / fname, entry)
            files.append(fname)
            curve_report.append(entry)

    ordered = sorted(gains)
    trends = {}
    if ple:
        trends["ple_increases_with_gain"] = _monotone([ple[g] for g in ordered if g in ple], True)
    if kmean:
        trends["k_increases_with_gain"] = _monotone([kmean[g] for g in ordered if g in kmean], True)
    for los in cfg.los_conditions:
        trends[f"rms_ds_{_condition(los)}_decreases_with_gain"] = _monotone(
            [ds_mean[los][g] for g in ordered], False
        )
    if len(cfg.los_conditions) == 2:
        trends["nlos_ds_exceeds_los_ds"] = all(ds_mean[False][g] > ds_mean[True][g] for g in gains)
    summary = {
        "n_records": len(metrics),
        "per_gain": per_gain,
        "gain_curves": curve_report,
        "trends": trends,
    }
    return files, summary


def run_campaign(cfg: CampaignConfig) -> CampaignReport:
    """Run the full pipeline and write every artifact under ``cfg.output_dir``.

    The summary is written last. Outputs depend only on the config and seed.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = simulate(cfg)
    records = [p[0] for p in pairs]
    metrics = [p[1] for p in pairs]
    dio.write_cir_jsonl(out / "cirs.jsonl", records)
    dio.write_metrics_csv(out / "metrics.csv", metrics)
    files = ["cirs.jsonl", "metrics.csv"]
    more, summary = analyze(cfg, metrics, out)
    files += more
    summary["files"] = files + ["summary.json"]
    dio.write_json(out / "summary.json", summary)
    return CampaignReport(out, len(records), files + ["summary.json"], summary)
