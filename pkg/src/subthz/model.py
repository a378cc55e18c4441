"""Gain-parameterized closed-form channel models and stochastic tap synthesis."""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .beam import SPEED_OF_LIGHT
from .fitting import LogDistanceFit
from .metrics import rms_delay_spread, weighted_spread
from .sounding import MultipathTap

MEASURED_GAINS = (15.0, 21.0, 25.0, 38.0)
CALIBRATED_RANGE = (15.0, 38.0)
# half-power beamwidths (deg) of the measured receive antennas
MEASURED_BEAMWIDTHS = {15.0: 30.0, 21.0: 11.0, 25.0: 10.0, 38.0: 2.0}

PLE_COEFFS = (1.811, 0.001018, -30.15, -0.2437)  # a e^(b g) + c e^(d g)
KFACTOR_COEFFS = (0.03576, -1.246, 32.1)  # dB
DS_LOS_COEFFS = (0.00118, -0.08012, 1.583)  # ns
DS_NLOS_COEFFS = (0.001444, -0.1964, 6.101)  # ns


class ExtrapolationWarning(UserWarning):
    pass


def _check_range(g: float) -> None:
    lo, hi = CALIBRATED_RANGE
    if not lo <= g <= hi:
        warnings.warn(
            f"gain {g} dBi is outside the fitted range [{lo}, {hi}] dBi",
            ExtrapolationWarning,
            stacklevel=3,
        )


def friis_pl0(frequency: float = 140e9, d0: float = 1.0) -> float:
    """Free-space path loss 20 log10(4 pi d0 / lambda) in dB."""
    if frequency <= 0 or d0 <= 0:
        raise ValueError("frequency and d0 must be positive")
    return 20 * math.log10(4 * math.pi * d0 * frequency / SPEED_OF_LIGHT)


def log_distance_pl(d: float, fit: LogDistanceFit, shadowing_draw: float = 0.0) -> float:
    if d <= 0:
        raise ValueError("distance must be positive")
    return fit.pl0 + 10 * fit.n * math.log10(d / fit.d0) + shadowing_draw


def ple_of_gain(g: float) -> float:
    _check_range(g)
    a, b, c, d = PLE_COEFFS
    return a * math.exp(b * g) + c * math.exp(d * g)


def _quadratic(coeffs, g):
    a, b, c = coeffs
    return a * g * g + b * g + c


def kfactor_of_gain(g: float) -> float:
    """Mean Rician K-factor (dB) for receive gain ``g`` dBi."""
    _check_range(g)
    return _quadratic(KFACTOR_COEFFS, g)


def ds_of_gain(g: float, los: bool) -> float:
    """Mean RMS delay spread (ns) for receive gain ``g`` dBi."""
    _check_range(g)
    return _quadratic(DS_LOS_COEFFS if los else DS_NLOS_COEFFS, g)


def beamwidth_of_gain(g: float) -> float:
    """Measured beamwidth where known, otherwise sqrt(41253 / G) degrees."""
    if g in MEASURED_BEAMWIDTHS:
        return MEASURED_BEAMWIDTHS[g]
    return math.sqrt(41253.0 / 10 ** (g / 10))


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    carrier_frequency: float = 140e9
    tx_power: float = 13.0
    tx_gain: float = 15.0
    rx_gain: float = 15.0
    rx_beamwidth: Optional[float] = None
    distance: float = 1.0
    los: bool = True
    room_width: float = 10.0
    room_depth: float = 10.0
    tx_height: float = 2.0
    rx_height: float = 1.0

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError("distance must be positive")
        diag = math.hypot(self.room_width, self.room_depth)
        if self.distance > diag:
            raise ValueError(f"distance {self.distance} m exceeds the room diagonal {diag:.2f} m")
        if self.rx_gain <= 0 or self.tx_gain <= 0:
            raise ValueError("antenna gains must be positive")

    @property
    def beamwidth(self) -> float:
        return self.rx_beamwidth if self.rx_beamwidth is not None else beamwidth_of_gain(self.rx_gain)

    @property
    def los_delay(self) -> float:
        return self.distance / SPEED_OF_LIGHT


CONFERENCE_ROOM = Scenario()


def _coerce(text: str, kind):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on", "los"):
            return True
        if low in ("0", "false", "no", "off", "nlos"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if text.lower() in ("", "none"):
        return None
    return float(text)


def parse_key_values(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[main]\n" + text)
    return dict(parser["main"])


def scenario_from_mapping(values: dict[str, str], base: Scenario = CONFERENCE_ROOM) -> Scenario:
    kinds = {f.name: (bool if f.name == "los" else float) for f in fields(Scenario)}
    updates = {}
    for key, raw in values.items():
        name = key.strip().replace("-", "_")
        if name in kinds:
            updates[name] = _coerce(raw, kinds[name])
    return replace(base, **updates)


def load_scenario(path) -> Scenario:
    return scenario_from_mapping(parse_key_values(Path(path).read_text()))


# ---------------------------------------------------------------------------
# synthesis


@dataclass(frozen=True)
class SynthesisParams:
    """Stochastic knobs of the tap generator.

    The shadowing, K-factor spread, tap count and angular-spread defaults are
    placeholders, not measured values.
    """

    shadowing_sigma_db: float = 2.0
    k_sigma_db: float = 3.0
    mean_scatter_taps: float = 8.0
    k_factor_db: Optional[float] = None  # fixed K instead of the gain curve
    as_mean_deg: float = 10.0
    as_sigma_deg: float = 5.0
    los_azimuth_deg: float = 180.0
    weighting: str = "as_printed"
    dynamic_range_db: Optional[float] = None
    delay_resolution: Optional[float] = None  # seconds; snaps delays, keeps taps distinct
    tuning_draws: int = 20000
    tuning_seed: int = 12345


@dataclass(frozen=True)
class ChannelRealization:
    taps: tuple
    scenario: Scenario
    seed: int
    los_only: bool = False  # scatter pruned away by the dynamic range


def _structure(rng, los: bool, params: SynthesisParams, k_mean: float):
    """Unit-delay-scale draws shared by synthesis and decay tuning."""
    if los:
        k_db = params.k_factor_db if params.k_factor_db is not None else rng.normal(
            k_mean, params.k_sigma_db
        )
    else:
        k_db = None
    if los and math.isinf(k_db) and k_db > 0:
        return k_db, np.zeros(0), np.zeros(0)
    m = max(1, int(rng.poisson(params.mean_scatter_taps)))
    if not los:
        m += 1
    arrivals = np.sort(rng.exponential(1.0, m))
    rel = np.exp(-arrivals)
    return k_db, arrivals, rel / rel.sum()


def _unit_taps(los: bool, k_db, arrivals, rel, scale=1.0):
    """(excess delay, power) pairs with total LoS-or-total power 1."""
    if los:
        scatter = rel * 10 ** (-k_db / 10) if arrivals.size else rel
        delays = np.concatenate([[0.0], arrivals * scale])
        powers = np.concatenate([[1.0], scatter])
    else:
        delays = arrivals * scale
        powers = rel
    return delays, powers


@lru_cache(maxsize=64)
def _unit_delay_spread(los: bool, k_mean: float, params: SynthesisParams) -> float:
    """Mean RMS delay spread (ns) of the generator at unit decay constant (1 ns)."""
    rng = np.random.default_rng(params.tuning_seed)
    total = 0.0
    for _ in range(params.tuning_draws):
        k_db, arrivals, rel = _structure(rng, los, params, k_mean)
        delays, powers = _unit_taps(los, k_db, arrivals, rel)
        taps = [MultipathTap(d * 1e-9, p) for d, p in zip(delays, powers)]
        total += rms_delay_spread(taps, params.weighting)[0]
    return total / params.tuning_draws


def decay_constant(g: float, los: bool, params: SynthesisParams = SynthesisParams()) -> float:
    """Exponential PDP decay constant (ns) whose ensemble-mean RMS delay spread is ds_of_gain."""
    target = ds_of_gain(g, los)
    if target <= 0:
        raise ValueError(f"delay-spread model is non-positive at {g} dBi")
    k_mean = kfactor_of_gain(g) if los else 0.0
    unit = _unit_delay_spread(los, k_mean, replace(params, dynamic_range_db=None))
    if unit <= 0:
        raise ValueError("generator has zero delay spread at this setting")
    return target / unit


def _snap(delays: np.ndarray, resolution: float, first_free: int) -> np.ndarray:
    taken = set(range(first_free))
    out = np.empty_like(delays)
    for i, d in enumerate(delays):
        idx = max(first_free, int(round(d / resolution)))
        while idx in taken:
            idx += 1
        taken.add(idx)
        out[i] = idx * resolution
    return out


def synthesize_channel(
    scenario: Scenario, rng_seed: int, params: SynthesisParams = SynthesisParams()
) -> ChannelRealization:
    """Draw one tap list whose ensemble statistics follow the gain models.

    The LoS (or, for NLoS, total) received power follows the log-distance
    law with the gain-dependent exponent plus Gaussian shadowing. Scatter
    taps arrive with exponentially distributed excess delays and
    exponentially decaying powers; their total sits K dB below the LoS
    tap. The decay constant is tuned so the mean RMS delay spread matches
    the delay-spread model under ``params.weighting``.
    """
    g = scenario.rx_gain
    rng = np.random.default_rng(rng_seed)
    n = ple_of_gain(g)
    fit = LogDistanceFit(friis_pl0(scenario.carrier_frequency), n, params.shadowing_sigma_db)
    chi = rng.normal(0.0, params.shadowing_sigma_db)
    pl = log_distance_pl(scenario.distance, fit, chi)
    ref_dbm = scenario.tx_power + scenario.tx_gain + g - pl
    ref_mw = 10 ** (ref_dbm / 10)

    k_mean = kfactor_of_gain(g) if scenario.los else 0.0
    k_db, arrivals, rel = _structure(rng, scenario.los, params, k_mean)
    scale_ns = decay_constant(g, scenario.los, params) if arrivals.size else 0.0
    delays_ns, powers = _unit_taps(scenario.los, k_db, arrivals, rel, scale_ns)
    powers = powers * ref_mw

    los_delay = scenario.los_delay
    excess = delays_ns * 1e-9
    if params.delay_resolution:
        res = params.delay_resolution
        base = round(los_delay / res) * res
        if scenario.los:
            excess = np.concatenate([[0.0], _snap(excess[1:], res, 1)])
        else:
            excess = _snap(excess, res, 1)
        los_delay = base
    delays = los_delay + excess

    # azimuths: offsets scaled to hit a drawn angular-spread target
    target_as = max(0.0, rng.normal(params.as_mean_deg, params.as_sigma_deg))
    m = len(delays)
    near = rng.random(m) < 0.5
    half = min(scenario.beamwidth, 180.0)
    offsets = np.where(near, rng.uniform(-half, half, m), rng.uniform(-180.0, 180.0, m))
    if scenario.los:
        offsets[0] = 0.0
    unit_as = weighted_spread(offsets, powers / powers.max(), params.weighting)[0] if m > 1 else 0.0
    if unit_as > 0:
        limit = 179.9 / np.max(np.abs(offsets))
        offsets = offsets * min(target_as / unit_as, limit)
    aoas = (params.los_azimuth_deg + offsets) % 360.0

    taps = [MultipathTap(float(d), float(p), float(a)) for d, p, a in zip(delays, powers, aoas)]
    los_only = False
    if params.dynamic_range_db is not None and len(taps) > 1:
        strongest = max(t.power for t in taps)
        floor = strongest * 10 ** (-params.dynamic_range_db / 10)
        kept = [t for t in taps if t.power >= floor]
        los_only = scenario.los and len(kept) == 1 and len(taps) > 1
        taps = kept
    return ChannelRealization(tuple(taps), scenario, rng_seed, los_only)
