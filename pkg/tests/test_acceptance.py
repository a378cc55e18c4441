"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL row that is printed in the terminal summary
("acceptance criteria" section), then asserts.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from subthz import io as dio
from subthz.beam import (
    ApertureSpec,
    GaussianBeam,
    aperture_integral,
    beam_geometry,
    field_at,
    waist_from_gain,
)
from subthz.campaign import CampaignConfig, run_campaign
from subthz.fitting import fit_gain_curve, fit_log_distance
from subthz.metrics import ensemble_k_factor, k_factor, metric_record, rms_angular_spread, rms_delay_spread
from subthz.model import MEASURED_GAINS, ds_of_gain, friis_pl0, kfactor_of_gain, ple_of_gain
from subthz.sounding import (
    MultipathTap,
    apply_multipath,
    build_tx_frame,
    detect_peaks,
    extract_cir,
    generate_mseq,
    periodic_autocorrelation,
)

NS = 1e-9
LAM = 299792458.0 / 140e9


def rel_err(got, want):
    return abs(got - want) / abs(want)


# ---------------------------------------------------------------------------
# 1: closed forms


def hand_ple(g):
    return 1.811 * math.exp(0.001018 * g) - 30.15 * math.exp(-0.2437 * g)


def hand_k(g):
    return 0.03576 * g * g - 1.246 * g + 32.1


def hand_ds_los(g):
    return 0.00118 * g * g - 0.08012 * g + 1.583


def hand_ds_nlos(g):
    return 0.001444 * g * g - 0.1964 * g + 6.101


def test_closed_form_reproduction(acceptance):
    worst = 0.0
    for g in MEASURED_GAINS:
        worst = max(
            worst,
            rel_err(ple_of_gain(g), hand_ple(g)),
            rel_err(kfactor_of_gain(g), hand_k(g)),
            rel_err(ds_of_gain(g, True), hand_ds_los(g)),
            rel_err(ds_of_gain(g, False), hand_ds_nlos(g)),
        )
    spots = (
        abs(ple_of_gain(15) - 1.059) < 1e-3
        and abs(kfactor_of_gain(38) - 36.39) < 1e-2
        and abs(ds_of_gain(38, True) - 0.242) < 1e-3
        and abs(ds_of_gain(15, False) - 3.48) < 1e-2
    )
    ok = worst <= 1e-9 and spots
    acceptance(1, "closed-form reproduction", ok, f"max rel err {worst:.1e}, spot values {spots}")
    assert ok


# ---------------------------------------------------------------------------
# 2: curve-fit round trip


def sig_equal(a, b, digits=6):
    if a == b:
        return True
    scale = 10 ** (math.floor(math.log10(max(abs(a), abs(b)))) - digits + 1)
    return abs(a - b) <= scale / 2


def test_curve_fit_round_trip(acceptance):
    g4 = np.array(MEASURED_GAINS)
    quads = {
        "k_factor": ((0.03576, -1.246, 32.1), hand_k),
        "ds_los": ((0.00118, -0.08012, 1.583), hand_ds_los),
        "ds_nlos": ((0.001444, -0.1964, 6.101), hand_ds_nlos),
    }
    ple = (1.811, 0.001018, -30.15, -0.2437)
    start = time.perf_counter()
    quad_ok = True
    for want, fn in quads.values():
        fit = fit_gain_curve(g4, [fn(g) for g in g4], "quadratic")
        quad_ok &= all(sig_equal(a, b) for a, b in zip(fit.coefficients, want))
    g6 = [15.0, 18.0, 21.0, 25.0, 30.0, 38.0]
    fit = fit_gain_curve(g6, [hand_ple(g) for g in g6], "two_exponential")
    elapsed = time.perf_counter() - start
    exp_err = max(rel_err(a, b) for a, b in zip(fit.coefficients, ple))
    ok = quad_ok and exp_err <= 1e-4 and elapsed < 1.0
    acceptance(
        2, "curve-fit round trip", ok,
        f"quadratics 6 s.f. {quad_ok}, two-exp rel err {exp_err:.1e}, {elapsed:.2f} s",
    )
    assert ok


# ---------------------------------------------------------------------------
# 3: sounder loopback


def random_channel(rng, dt=25e-12, span_ns=40.0, min_gap=8):
    n = int(rng.integers(1, 9))
    lags = []
    while len(lags) < n:
        cand = int(rng.integers(0, int(span_ns * NS / dt)))
        if all(abs(cand - lag) >= min_gap for lag in lags):
            lags.append(cand)
    powers_db = rng.uniform(-30.0, 0.0, n)
    powers_db[int(rng.integers(n))] = 0.0
    return [MultipathTap(lag * dt, 10 ** (p / 10)) for lag, p in zip(lags, powers_db)]


def test_sounder_correctness(acceptance, sounding_cfg, tx_frame):
    rng = np.random.default_rng(31337)
    start = time.perf_counter()
    failures = []
    worst_delay = worst_power = 0.0
    for trial in range(100):
        truth = sorted(random_channel(rng), key=lambda t: t.delay)
        rx = apply_multipath(tx_frame, truth, 25.0, trial)
        found = detect_peaks(extract_cir(rx, sounding_cfg), 30.0)
        t0 = truth[0].delay
        if len(found) != len(truth):
            failures.append((trial, len(truth), len(found)))
            continue
        for want, got in zip(truth, sorted(found, key=lambda t: t.delay)):
            worst_delay = max(worst_delay, abs(got.delay_ns - (want.delay - t0) / NS))
            worst_power = max(worst_power, abs(got.power_db - want.power_db))
    elapsed = time.perf_counter() - start

    mseq_ok = True
    for degree in range(3, 14):
        n = (1 << degree) - 1
        acf = periodic_autocorrelation(generate_mseq(degree))
        mseq_ok &= len(acf) == n and acf[0] == n and bool(np.all(acf[1:] == -1))

    ok = not failures and worst_delay <= 0.05 and worst_power <= 0.5 and mseq_ok and elapsed < 120
    acceptance(
        3, "sounder correctness", ok,
        f"tap-count misses {len(failures)}/100, worst delay err {worst_delay:.3f} ns, "
        f"worst power err {worst_power:.3f} dB, m-seq degrees 3-13 {mseq_ok}, {elapsed:.0f} s",
    )
    assert ok, failures[:5]


# ---------------------------------------------------------------------------
# 4: averaging gain


def test_averaging_gain(acceptance, sounding_cfg, tx_frame):
    gains = []
    for seed in range(5):
        rx = apply_multipath(tx_frame, [MultipathTap(0.0, 1.0)], 0.0, 100 + seed)
        single = extract_cir(rx, sounding_cfg, n_average=1).noise_floor
        full = extract_cir(rx, sounding_cfg, n_average=16).noise_floor
        gains.append(single - full)
    mean = float(np.mean(gains))
    ok = abs(mean - 12.0) <= 1.0
    acceptance(4, "averaging gain", ok, f"16-rep floor improvement {mean:.2f} dB (per seed {np.round(gains, 2).tolist()})")
    assert ok


# ---------------------------------------------------------------------------
# 5: beam optics


def test_beam_optics_limits(acceptance):
    b = GaussianBeam(4e-3, LAM)
    zr = b.rayleigh_range
    far = max(
        abs(abs(field_at(b, 0.0, m * zr)) ** 2 * (m * zr) ** 2 / zr**2 - 1)
        for m in (20, 50, 200, 1000)
    )
    w, big_r, gouy = beam_geometry(b, zr)
    geometry_err = max(rel_err(w, math.sqrt(2) * b.waist), rel_err(big_r, 2 * zr), rel_err(gouy, math.pi / 4))

    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(100):
        beam = GaussianBeam(float(rng.uniform(1e-3, 0.08)), LAM)
        ap = ApertureSpec(float(rng.uniform(1e-3, 0.3)))
        z = float(rng.uniform(0.05, 10.0))
        geometry = str(rng.choice(["line", "disk"]))
        coh = aperture_integral(beam, ap, z, "coherent", geometry)
        inc = aperture_integral(beam, ap, z, "incoherent", geometry)
        violations += coh > inc * (1 + 1e-9)

    w15 = waist_from_gain(15.0, 0.45, LAM)
    w38 = waist_from_gain(38.0, 0.45, LAM)
    gap38 = 1 - w38 / 59e-3
    ok = (
        far <= 0.01
        and geometry_err <= 1e-12
        and violations == 0
        and abs(w15 / 4e-3 - 1) <= 0.02
        and 0 < gap38 <= 0.04
    )
    acceptance(
        5, "beam-optics limits", ok,
        f"far-field dev {far:.1e}, z_R identities err {geometry_err:.0e}, coherent>incoherent {violations}/100, "
        f"w0(15)={w15 * 1e3:.2f} mm, w0(38)={w38 * 1e3:.2f} mm ({gap38:.1%} below 59 mm)",
    )
    assert ok


# ---------------------------------------------------------------------------
# 6: estimator recovery


def test_estimator_recovery(acceptance):
    rng = np.random.default_rng(606)
    d = rng.uniform(1.0, 10.0, 1000)
    pl = friis_pl0() + 10 * 1.5 * np.log10(d) + rng.normal(0.0, 2.0, d.size)
    fit = fit_log_distance(d, pl)

    m = 20
    ensemble = []
    for _ in range(10_000):
        amp = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * math.sqrt(0.1 / m / 2)
        ensemble.append(
            [MultipathTap(0.0, 1.0)] + [MultipathTap((i + 1) * NS, float(abs(a) ** 2)) for i, a in enumerate(amp)]
        )
    k_ens = ensemble_k_factor(ensemble)
    k_mean = float(np.mean([k_factor(t) for t in ensemble]))
    ok = abs(fit.n - 1.5) <= 0.05 and abs(fit.sigma - 2.0) <= 0.15 and abs(k_ens - 10.0) <= 0.5 and abs(k_mean - 10.0) <= 0.5
    acceptance(
        6, "estimator recovery", ok,
        f"n={fit.n:.3f}, sigma={fit.sigma:.3f} dB, K ensemble {k_ens:.2f} dB, K mean {k_mean:.2f} dB",
    )
    assert ok


# ---------------------------------------------------------------------------
# 7: model-estimator closure


@pytest.mark.slow
def test_model_estimator_closure(acceptance, tmp_path):
    # 8 distances x 1250 = 10^4 realizations per gain and condition
    cfg = CampaignConfig(output_dir=tmp_path / "closure", realizations=1250, los_conditions=(True, False), seed=7)
    start = time.perf_counter()
    summary = run_campaign(cfg).summary
    elapsed = time.perf_counter() - start
    per = summary["per_gain"]
    worst_k = worst_ds = worst_n = 0.0
    for g in MEASURED_GAINS:
        los, nlos = per[f"g{g:g}_los"], per[f"g{g:g}_nlos"]
        assert los["n_records"] == nlos["n_records"] == 10_000
        worst_k = max(worst_k, abs(los["mean_k_factor_db"] - kfactor_of_gain(g)))
        for cond, los_flag in ((los, True), (nlos, False)):
            worst_ds = max(worst_ds, rel_err(cond["mean_rms_ds_ns"], ds_of_gain(g, los_flag)))
            worst_n = max(worst_n, abs(cond["ple"] - ple_of_gain(g)))
    trends = summary["trends"]
    ok = worst_k <= 1.0 and worst_ds <= 0.10 and worst_n <= 0.1 and all(trends.values()) and elapsed < 600
    acceptance(
        7, "model-estimator closure", ok,
        f"worst K dev {worst_k:.2f} dB, worst DS dev {worst_ds:.1%}, worst PLE dev {worst_n:.3f}, "
        f"trends {sorted(k for k, v in trends.items() if v)}, {elapsed:.0f} s",
    )
    assert ok, trends


# ---------------------------------------------------------------------------
# 8: metric oracles


def test_metric_oracles(acceptance):
    ds, _ = rms_delay_spread([MultipathTap(0.0, 1.0), MultipathTap(2 * NS, 1.0)])
    ds_power, _ = rms_delay_spread([MultipathTap(0.0, 1.0), MultipathTap(2 * NS, 1.0)], "power")
    spread, mean = rms_angular_spread([MultipathTap(0.0, 1.0, 0.0), MultipathTap(NS, 1.0, 90.0)])
    ok = ds == 1.0 and ds_power == 1.0 and spread == 45.0 and mean == 45.0
    acceptance(8, "metric oracles", ok, f"DS {ds!r} ns, AS {spread!r} deg (mean {mean!r})")
    assert ok


# ---------------------------------------------------------------------------
# 9: determinism and I/O


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_determinism_and_round_trip(acceptance, tmp_path):
    def cfg(name, seed=21):
        return CampaignConfig(
            output_dir=tmp_path / name, distances=(1.0, 2.5, 6.0), realizations=4,
            los_conditions=(True, False), seed=seed,
        )

    a = tree_bytes(run_campaign(cfg("a")).output_dir)
    b = tree_bytes(run_campaign(cfg("b")).output_dir)
    c = tree_bytes(run_campaign(cfg("c", seed=22)).output_dir)
    identical = a == b and a["cirs.jsonl"] != c["cirs.jsonl"]

    out = tmp_path / "a"
    recs = dio.ingest_cir_dataset(out / "cirs.jsonl")
    dio.write_cir_jsonl(tmp_path / "again.jsonl", recs)
    jsonl_ok = (tmp_path / "again.jsonl").read_bytes() == a["cirs.jsonl"]
    metrics = [
        metric_record(r.scenario_id, r.distance_m, r.rx_gain_dbi, "-nlos-" not in r.scenario_id, r.to_taps())
        for r in recs
    ]
    dio.write_metrics_csv(tmp_path / "again.csv", metrics)
    csv_ok = (tmp_path / "again.csv").read_bytes() == a["metrics.csv"]
    dio.write_metrics_csv(tmp_path / "twice.csv", dio.read_metrics_csv(tmp_path / "again.csv"))
    csv_ok &= (tmp_path / "twice.csv").read_bytes() == a["metrics.csv"]
    summary_ok = json.loads(a["summary.json"])["n_records"] == len(recs)

    ok = identical and jsonl_ok and csv_ok and summary_ok
    acceptance(
        9, "determinism and I/O", ok,
        f"byte-identical reruns {identical}, JSONL round trip {jsonl_ok}, CSV round trip {csv_ok}, {len(recs)} records",
    )
    assert ok
