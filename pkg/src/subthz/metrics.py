"""Channel metrics computed from discrete multipath taps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .sounding import ChannelImpulseResponse, MultipathTap

WEIGHTINGS = ("as_printed", "power")


@dataclass(frozen=True)
class MetricRecord:
    scenario_id: str
    distance: float
    rx_gain: float
    los: bool
    path_loss: float
    k_factor: float
    rms_ds: float
    mean_delay: float
    rms_as: float
    mean_aoa: float


def _taps_of(source) -> Sequence[MultipathTap]:
    if isinstance(source, ChannelImpulseResponse):
        return source.taps
    return list(source)


def received_power_dbm(taps: Sequence[MultipathTap]) -> float:
    if not taps:
        raise ValueError("no taps to sum")
    return 10 * math.log10(math.fsum(t.power for t in taps))


def path_loss_from_cir(
    cir, tx_power_dbm: float, tx_gain_dbi: float, rx_gain_dbi: float
) -> float:
    """Link-budget path loss: Tx power plus both antenna gains minus received power.

    ``cir`` is a ChannelImpulseResponse or a tap sequence; tap powers are mW.
    """
    taps = _taps_of(cir)
    if not taps:
        raise ValueError("path loss needs at least one tap")
    return tx_power_dbm + tx_gain_dbi + rx_gain_dbi - received_power_dbm(taps)


def los_index(taps: Sequence[MultipathTap], los_delay: Optional[float] = None,
              window: float = 0.2e-9) -> int:
    """Index of the line-of-sight tap.

    With ``los_delay`` (seconds) the earliest tap within ``window`` of it is
    chosen; otherwise, or if none qualifies, the strongest tap.
    """
    if los_delay is not None:
        near = [i for i, t in enumerate(taps) if abs(t.delay - los_delay) <= window]
        if near:
            return min(near, key=lambda i: taps[i].delay)
    return max(range(len(taps)), key=lambda i: taps[i].power)


def k_factor(taps: Sequence[MultipathTap], los_delay: Optional[float] = None) -> float:
    """Rician K-factor in dB: LoS power over the summed power of all other taps.

    A lone tap has no scatter power and returns ``math.inf``.
    """
    taps = list(taps)
    if not taps:
        raise ValueError("K-factor needs at least one tap")
    if len(taps) == 1:
        return math.inf
    i = los_index(taps, los_delay)
    scatter = math.fsum(t.power for j, t in enumerate(taps) if j != i)
    return 10 * math.log10(taps[i].power / scatter)


def ensemble_k_factor(realizations: Iterable[Sequence[MultipathTap]]) -> float:
    """Pooled K-factor in dB: mean LoS power over mean scatter power."""
    los_total = 0.0
    scatter_total = 0.0
    for taps in realizations:
        taps = list(taps)
        i = los_index(taps)
        los_total += taps[i].power
        scatter_total += math.fsum(t.power for j, t in enumerate(taps) if j != i)
    if scatter_total == 0:
        return math.inf
    return 10 * math.log10(los_total / scatter_total)


def weighted_spread(values: np.ndarray, powers: np.ndarray, weighting: str):
    """(spread, mean): power-weighted mean, spread about it under ``weighting``."""
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    mean = float(np.sum(values * powers) / np.sum(powers))
    w = powers**2 if weighting == "as_printed" else powers
    var = float(np.sum((values - mean) ** 2 * w) / np.sum(w))
    return math.sqrt(max(var, 0.0)), mean


def rms_delay_spread(taps: Sequence[MultipathTap], weighting: str = "as_printed"):
    """RMS delay spread and mean delay, both in ns.

    The mean delay is power weighted. With ``as_printed`` the spread about it
    uses squared-power weights; ``power`` uses plain power weights.
    """
    if not taps:
        raise ValueError("delay spread needs at least one tap")
    delays = np.array([t.delay for t in taps]) * 1e9
    powers = np.array([t.power for t in taps])
    # shift for numerical conditioning; the spread is shift invariant
    origin = delays.min()
    spread, mean = weighted_spread(delays - origin, powers / powers.max(), weighting)
    return spread, mean + origin


def rms_angular_spread(
    taps: Sequence[MultipathTap], weighting: str = "as_printed", circular: bool = False
):
    """RMS azimuth spread and mean AoA in degrees.

    The default treats angles as plain numbers on [0, 360), so paths at 350
    and 10 degrees average to 180. ``circular`` measures offsets on the
    circle around the power-weighted circular mean instead.
    """
    if not taps:
        raise ValueError("angular spread needs at least one tap")
    angles = np.array([t.aoa for t in taps])
    powers = np.array([t.power for t in taps])
    powers = powers / powers.max()
    if not circular:
        return weighted_spread(angles, powers, weighting)
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    rad = np.deg2rad(angles)
    mean = math.degrees(math.atan2(np.sum(powers * np.sin(rad)), np.sum(powers * np.cos(rad))))
    mean %= 360.0
    offsets = (angles - mean + 180.0) % 360.0 - 180.0
    w = powers**2 if weighting == "as_printed" else powers
    spread = math.sqrt(float(np.sum(offsets**2 * w) / np.sum(w)))
    return spread, mean


def metric_record(
    scenario_id: str,
    distance: float,
    rx_gain: float,
    los: bool,
    taps: Sequence[MultipathTap],
    *,
    tx_power_dbm: float = 13.0,
    tx_gain_dbi: float = 15.0,
    weighting: str = "as_printed",
) -> MetricRecord:
    ds, mean_delay = rms_delay_spread(taps, weighting)
    as_, mean_aoa = rms_angular_spread(taps, weighting)
    return MetricRecord(
        scenario_id=scenario_id,
        distance=distance,
        rx_gain=rx_gain,
        los=los,
        path_loss=path_loss_from_cir(taps, tx_power_dbm, tx_gain_dbi, rx_gain),
        k_factor=k_factor(taps),
        rms_ds=ds,
        mean_delay=mean_delay,
        rms_as=as_,
        mean_aoa=mean_aoa,
    )
