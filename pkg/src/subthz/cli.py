"""Command-line front end.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines; any
flag given on the command line wins over the file. Outputs default to the
directory named by ``SUBTHZ_OUTPUT_DIR`` (or ``./subthz_out``).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as dio
from .beam import ApertureSpec, GaussianBeam, beam_profile_table, waist_from_gain, wavelength
from .campaign import (
    CampaignConfig,
    ConfigError,
    analyze,
    attach_aoa,
    campaign_from_mapping,
    run_campaign,
    simulate,
)
from .fitting import FitError
from .metrics import WEIGHTINGS, metric_record
from .model import (
    CONFERENCE_ROOM,
    ExtrapolationWarning,
    SynthesisParams,
    beamwidth_of_gain,
    ds_of_gain,
    friis_pl0,
    kfactor_of_gain,
    parse_key_values,
    ple_of_gain,
    synthesize_channel,
)
from .sounding import (
    FrameNotFoundError,
    MultipathTap,
    SequenceError,
    SoundingConfig,
    apply_multipath,
    build_tx_frame,
    detect_peaks,
    extract_cir,
)

ENV_OUTPUT_DIR = "SUBTHZ_OUTPUT_DIR"
PROG = "subthz"


def default_output_dir() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_DIR) or "subthz_out")


def _config_values(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    return parse_key_values(Path(args.config).read_text(encoding="utf-8"))


def _campaign_config(args) -> CampaignConfig:
    """File values first, then explicit flags on top."""
    cfg = campaign_from_mapping(_config_values(args))
    flags = {}
    for name in ("gains", "distances", "realizations", "seed", "rotation_step", "pl0_mode",
                 "snr_db", "dynamic_range_db", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            flags[name] = tuple(value) if isinstance(value, list) else value
    if getattr(args, "condition", None):
        flags["los_conditions"] = {"los": (True,), "nlos": (False,), "both": (True, False)}[
            args.condition
        ]
    if getattr(args, "sound", False):
        flags["sound"] = True
    if getattr(args, "no_quantize_aoa", False):
        flags["quantize_aoa"] = False
    cfg = replace(cfg, **flags)
    scen = {}
    for flag, name in (("tx_power_dbm", "tx_power"), ("tx_gain_dbi", "tx_gain"),
                       ("frequency_ghz", "carrier_frequency")):
        value = getattr(args, flag, None)
        if value is not None:
            scen[name] = value * 1e9 if name == "carrier_frequency" else value
    synth = {}
    if getattr(args, "weighting", None):
        synth["weighting"] = args.weighting
    if getattr(args, "delay_resolution_ns", None) is not None:
        synth["delay_resolution"] = args.delay_resolution_ns * 1e-9
    return replace(
        cfg,
        scenario=replace(cfg.scenario, **scen),
        synthesis=replace(cfg.synthesis, **synth),
    )


def _output_path(args, default_name: str) -> Path:
    if getattr(args, "output", None):
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
    out = Path(args.output_dir) if getattr(args, "output_dir", None) else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out / default_name


def _parse_tap(text: str) -> MultipathTap:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"tap must be DELAY_NS:POWER_DB[:AOA_DEG], got {text!r}")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric tap {text!r}") from None
    delay, power_db = nums[0], nums[1]
    aoa = nums[2] if len(nums) == 3 else 0.0
    try:
        return MultipathTap(delay * 1e-9, 10 ** (power_db / 10), aoa)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_sound(args) -> int:
    cfg = _campaign_config(args)
    gain = args.gain if args.gain is not None else cfg.scenario.rx_gain
    distance = args.distance if args.distance is not None else cfg.scenario.distance
    los = cfg.los_conditions[0]
    scenario = replace(cfg.scenario, rx_gain=gain, distance=distance, los=los)
    taps = args.tap or list(synthesize_channel(scenario, args.seed, cfg.synthesis).taps)
    sounding = SoundingConfig()
    try:
        rx = apply_multipath(build_tx_frame(sounding), taps, args.snr_db, args.seed, cfg=sounding)
    except ValueError as exc:
        if args.tap:
            raise
        raise ValueError(f"{exc}; synthesized delays are long, try --weighting power") from None
    cir = extract_cir(rx, sounding, n_average=args.averages, averaging=args.averaging)
    found = attach_aoa(detect_peaks(cir, args.dynamic_range_db), taps)
    cir = replace(cir, taps=tuple(found))
    sid = args.scenario_id or f"g{gain:g}-{'los' if los else 'nlos'}-d{distance:g}-sound"
    record = dio.CirRecord.from_cir(sid, distance, gain, cir)
    path = _output_path(args, "cir.jsonl")
    dio.write_cir_jsonl(path, [record])
    if args.profile:
        dio.write_profile(args.profile, cir, scenario_id=sid)
    print(f"{len(found)} taps, noise floor {cir.noise_floor:.2f} dB -> {path}")
    return 0


def cmd_synth(args) -> int:
    cfg = _campaign_config(args)
    cfg.validate()
    pairs = simulate(cfg)
    path = _output_path(args, "cirs.jsonl")
    n = dio.write_cir_jsonl(path, [p[0] for p in pairs])
    print(f"{n} CIR records -> {path}")
    return 0


def cmd_estimate(args) -> int:
    if args.partial:
        records, errors = dio.ingest_cir_dataset(args.input, partial=True)
        for lineno, msg in errors:
            print(f"{PROG}: skipped line {lineno}: {msg}", file=sys.stderr)
    else:
        records = dio.ingest_cir_dataset(args.input)
    metrics = []
    for rec in records:
        if not rec.taps:
            raise ValueError(f"record {rec.scenario_id!r} has no taps")
        if args.condition == "auto":
            los = "nlos" not in rec.scenario_id.lower()
        else:
            los = args.condition == "los"
        metrics.append(metric_record(
            rec.scenario_id, rec.distance_m, rec.rx_gain_dbi, los, rec.to_taps(),
            tx_power_dbm=args.tx_power_dbm, tx_gain_dbi=args.tx_gain_dbi,
            weighting=args.weighting,
        ))
    path = _output_path(args, "metrics.csv")
    dio.write_metrics_csv(path, metrics)
    print(f"{len(metrics)} metric records -> {path}")
    return 0


def cmd_fit(args) -> int:
    metrics = dio.read_metrics_csv(args.input)
    if not metrics:
        raise ValueError("metric file has no records")
    out = Path(args.output_dir) if args.output_dir else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    cfg = replace(
        CampaignConfig(),
        gains=tuple(sorted({m.rx_gain for m in metrics})),
        los_conditions=tuple(sorted({m.los for m in metrics}, reverse=True)),
        pl0_mode=args.pl0_mode,
        scenario=replace(CONFERENCE_ROOM, carrier_frequency=args.frequency_ghz * 1e9),
    )
    files, summary = analyze(cfg, metrics, out)
    summary["files"] = files + ["summary.json"]
    dio.write_json(out / "summary.json", summary)
    print(f"{len(files) + 1} files -> {out}")
    return 0


def cmd_beam(args) -> int:
    lam = wavelength(args.frequency_ghz * 1e9)
    if args.waist_mm is not None:
        w0 = args.waist_mm * 1e-3
    else:
        w0 = waist_from_gain(args.gain, args.efficiency, lam)
    beam = GaussianBeam(w0, lam)
    radius = args.aperture_radius_mm * 1e-3 if args.aperture_radius_mm is not None else w0
    z = np.linspace(args.z_min, args.z_max, args.points)
    rows = beam_profile_table(
        beam, ApertureSpec(radius), z,
        reference_distance=args.reference_distance, geometry=args.geometry,
    )
    text = dio.csv_text(rows)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_campaign(args) -> int:
    cfg = _campaign_config(args)
    out = Path(args.output_dir) if args.output_dir else default_output_dir()
    cfg = replace(cfg, output_dir=out)
    report = run_campaign(cfg)
    print(f"{report.n_records} CIR records, {len(report.files)} files -> {report.output_dir}")
    return 0


def cmd_eval(args) -> int:
    rows = []
    pl0 = friis_pl0(args.frequency_ghz * 1e9)
    for g in args.gains:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ExtrapolationWarning)
            n = ple_of_gain(g)
            entry = {
                "gain_dbi": g,
                "ple": n,
                "k_factor_db": kfactor_of_gain(g),
                "rms_ds_los_ns": ds_of_gain(g, True),
                "rms_ds_nlos_ns": ds_of_gain(g, False),
                "beamwidth_deg": beamwidth_of_gain(g),
            }
        if caught:
            print(f"{PROG}: warning: {caught[0].message}", file=sys.stderr)
        for d in args.distances:
            rows.append({"distance_m": d, **entry, "path_loss_db": pl0 + 10 * n * math.log10(d)})
    if args.format == "json":
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
    else:
        sys.stdout.write(dio.csv_text(rows))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_campaign_flags(p, *, grid=True):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--seed", type=int, required=True, help="master RNG seed (required)")
    if grid:
        p.add_argument("--gains", type=float, nargs="+", help="receive gains in dBi")
        p.add_argument("--distances", type=float, nargs="+", help="link distances in m")
        p.add_argument("--realizations", type=int, help="realizations per grid point")
        p.add_argument("--rotation-step", type=float, help="AoA quantization in degrees")
        p.add_argument("--no-quantize-aoa", action="store_true")
        p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--condition", choices=("los", "nlos", "both"))
    p.add_argument("--weighting", choices=WEIGHTINGS)
    p.add_argument("--delay-resolution-ns", type=float)
    p.add_argument("--tx-power-dbm", type=float)
    p.add_argument("--tx-gain-dbi", type=float)
    p.add_argument("--frequency-ghz", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sound", help="simulate one sounder measurement")
    _add_campaign_flags(p, grid=False)
    p.add_argument("--gain", type=float, help="receive gain in dBi")
    p.add_argument("--distance", type=float, help="link distance in m")
    p.add_argument("--tap", type=_parse_tap, action="append",
                   help="DELAY_NS:POWER_DB[:AOA_DEG]; repeat for more taps")
    p.add_argument("--snr-db", type=float, default=25.0)
    p.add_argument("--dynamic-range-db", type=float, default=30.0)
    p.add_argument("--averages", type=int, help="body windows to average (default all)")
    p.add_argument("--averaging", choices=("coherent", "magnitude"), default="coherent")
    p.add_argument("--scenario-id")
    p.add_argument("--output", help="CIR JSON-lines file")
    p.add_argument("--output-dir")
    p.add_argument("--profile", help="also write the raw complex profile here")
    p.set_defaults(func=cmd_sound)

    p = sub.add_parser("synth", help="generate an ensemble of synthetic CIRs")
    _add_campaign_flags(p)
    p.add_argument("--output", help="CIR JSON-lines file")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="compute metrics from a CIR file")
    p.add_argument("--input", required=True, help="CIR JSON-lines file")
    p.add_argument("--output", help="metric CSV file")
    p.add_argument("--output-dir")
    p.add_argument("--partial", action="store_true", help="skip malformed lines")
    p.add_argument("--condition", choices=("auto", "los", "nlos"), default="auto",
                   help="auto: NLoS when the scenario id contains 'nlos'")
    p.add_argument("--tx-power-dbm", type=float, default=CONFERENCE_ROOM.tx_power)
    p.add_argument("--tx-gain-dbi", type=float, default=CONFERENCE_ROOM.tx_gain)
    p.add_argument("--weighting", choices=WEIGHTINGS, default=SynthesisParams().weighting)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", help="fit distributions and gain curves to a metric CSV")
    p.add_argument("--input", required=True, help="metric CSV file")
    p.add_argument("--output-dir")
    p.add_argument("--pl0-mode", choices=("fixed_friis", "free"), default="fixed_friis")
    p.add_argument("--frequency-ghz", type=float, default=140.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("beam", help="Gaussian-beam profile table as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gain", type=float, help="antenna gain in dBi (waist from gain)")
    src.add_argument("--waist-mm", type=float)
    p.add_argument("--efficiency", type=float, default=0.45)
    p.add_argument("--frequency-ghz", type=float, default=140.0)
    p.add_argument("--aperture-radius-mm", type=float, help="default: the waist")
    p.add_argument("--geometry", choices=("line", "disk"), default="line")
    p.add_argument("--z-min", type=float, default=0.1)
    p.add_argument("--z-max", type=float, default=8.0)
    p.add_argument("--points", type=int, default=80)
    p.add_argument("--reference-distance", type=float, default=1.0)
    p.add_argument("--output", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_beam)

    p = sub.add_parser("campaign", help="simulate, estimate, fit and report")
    _add_campaign_flags(p)
    p.add_argument("--pl0-mode", choices=("fixed_friis", "free"))
    p.add_argument("--sound", action="store_true", help="pass every CIR through the sounder")
    p.add_argument("--snr-db", type=float)
    p.add_argument("--dynamic-range-db", type=float)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("eval", help="evaluate the closed-form gain models")
    p.add_argument("--gains", type=float, nargs="+", required=True)
    p.add_argument("--distances", type=float, nargs="+", default=[1.0])
    p.add_argument("--frequency-ghz", type=float, default=140.0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, FitError, SequenceError, FrameNotFoundError) as exc:
        print(f"{PROG} {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
