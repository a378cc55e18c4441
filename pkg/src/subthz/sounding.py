"""Spread-spectrum sliding-correlator sounder simulation.

The transmit frame is a long m-sequence header followed by a shorter
m-sequence repeated several times, BPSK modulated and shaped with a
root-raised-cosine filter. The receiver locates the header, circularly
correlates each body repetition against a local replica, averages the
profiles and picks discrete taps out of the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import signal

# Primitive generator polynomials, bit i set <=> x^i term present.
DEFAULT_POLYNOMIALS = {
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10000011,
    8: 0b100011101,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: (1 << 12) | (1 << 6) | (1 << 4) | (1 << 1) | 1,
    13: (1 << 13) | (1 << 4) | (1 << 3) | (1 << 1) | 1,
    14: (1 << 14) | (1 << 10) | (1 << 6) | (1 << 1) | 1,
    15: (1 << 15) | (1 << 1) | 1,
    16: (1 << 16) | (1 << 12) | (1 << 3) | (1 << 1) | 1,
}


class SequenceError(ValueError):
    """Raised when an LFSR polynomial does not produce a maximal-length sequence."""


class FrameNotFoundError(RuntimeError):
    """Raised when the header correlation peak does not clear the sync threshold."""


@dataclass(frozen=True)
class SoundingConfig:
    header_degree: int = 13
    body_degree: int = 12
    body_repetitions: int = 16
    chip_rate: float = 1.0e10
    rrc_rolloff: float = 1.0
    samples_per_chip: int = 4
    rrc_span_chips: int = 10
    header_polynomial: Optional[int] = None
    body_polynomial: Optional[int] = None

    def __post_init__(self):
        if self.header_degree < 2 or self.body_degree < 2:
            raise ValueError("sequence degrees must be >= 2")
        if self.body_repetitions < 1:
            raise ValueError("body_repetitions must be >= 1")
        if self.chip_rate <= 0:
            raise ValueError("chip_rate must be positive")
        if not 0 < self.rrc_rolloff <= 1:
            raise ValueError("rrc_rolloff must lie in (0, 1]")
        if self.samples_per_chip < 2:
            raise ValueError("samples_per_chip must be >= 2")
        if self.rrc_span_chips < 2 or self.rrc_span_chips % 2:
            raise ValueError("rrc_span_chips must be an even integer >= 2")

    @property
    def header_length(self) -> int:
        return (1 << self.header_degree) - 1

    @property
    def body_length(self) -> int:
        return (1 << self.body_degree) - 1

    @property
    def frame_chips(self) -> int:
        return self.header_length + self.body_repetitions * self.body_length

    @property
    def sample_rate(self) -> float:
        return self.samples_per_chip * self.chip_rate

    @property
    def time_step(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def bandwidth(self) -> float:
        """Occupied two-sided bandwidth of the shaped signal in Hz."""
        return (1.0 + self.rrc_rolloff) * self.chip_rate

    @property
    def period_samples(self) -> int:
        return self.body_length * self.samples_per_chip


@dataclass(frozen=True)
class MultipathTap:
    """One resolved propagation path.

    ``delay`` is in seconds, ``power`` is linear (the simulator works in mW,
    so 10*log10(power) reads as dBm), ``aoa`` is the azimuth in degrees.
    """

    delay: float
    power: float
    aoa: float = 0.0

    def __post_init__(self):
        if not self.delay >= 0:
            raise ValueError(f"tap delay must be >= 0, got {self.delay}")
        if not (self.power > 0 and math.isfinite(self.power)):
            raise ValueError(f"tap power must be positive and finite, got {self.power}")
        if not 0 <= self.aoa < 360:
            raise ValueError(f"tap AoA must lie in [0, 360), got {self.aoa}")

    @property
    def delay_ns(self) -> float:
        return self.delay * 1e9

    @property
    def power_db(self) -> float:
        return 10.0 * math.log10(self.power)


@dataclass(frozen=True)
class ChannelImpulseResponse:
    profile: np.ndarray
    time_step: float
    taps: tuple = ()
    noise_floor: Optional[float] = None
    config: Optional[SoundingConfig] = field(default=None, compare=False)

    @property
    def power_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(np.abs(self.profile) ** 2)

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.profile)) * self.time_step


# ---------------------------------------------------------------------------
# m-sequences


def _lfsr_bits(degree: int, polynomial: int, seed: int) -> np.ndarray:
    n = (1 << degree) - 1
    feedback_mask = polynomial & n
    bits = np.empty(n, dtype=np.int8)
    state = seed
    for k in range(n):
        bits[k] = state & 1
        fb = (state & feedback_mask).bit_count() & 1
        state = (state >> 1) | (fb << (degree - 1))
        if state == seed and k < n - 1:
            raise SequenceError(
                f"polynomial {polynomial:#x} is not primitive: period {k + 1} < {n}"
            )
    if state != seed:
        raise SequenceError(f"polynomial {polynomial:#x} does not return to the seed state")
    return bits


@lru_cache(maxsize=64)
def _mseq_cached(degree: int, polynomial: int, seed: int) -> np.ndarray:
    chips = 1.0 - 2.0 * _lfsr_bits(degree, polynomial, seed)
    chips.setflags(write=False)
    return chips


def generate_mseq(degree: int, polynomial: Optional[int] = None, seed: int = 1) -> np.ndarray:
    """Maximal-length LFSR sequence mapped to bipolar chips (bit 0 -> +1, bit 1 -> -1).

    ``polynomial`` is a bitmask whose bit i is the coefficient of x^i; it must
    include both the x^degree and the constant term. ``seed`` holds the first
    ``degree`` output bits (LSB first).
    """
    if polynomial is None:
        try:
            polynomial = DEFAULT_POLYNOMIALS[degree]
        except KeyError:
            raise ValueError(f"no default polynomial for degree {degree}") from None
    if degree < 2:
        raise ValueError("degree must be >= 2")
    if polynomial >> degree != 1:
        raise SequenceError(f"polynomial {polynomial:#x} is not of degree {degree}")
    if not polynomial & 1:
        raise SequenceError("polynomial without a constant term cannot be primitive")
    if not 0 < seed < (1 << degree):
        raise ValueError(f"seed must be a nonzero {degree}-bit value")
    return _mseq_cached(degree, polynomial, seed).copy()


def periodic_autocorrelation(chips: np.ndarray) -> np.ndarray:
    """Periodic autocorrelation over all lags (rounded, the inputs are integers)."""
    spectrum = np.fft.fft(chips)
    return np.rint(np.fft.ifft(np.abs(spectrum) ** 2).real).astype(np.int64)


# ---------------------------------------------------------------------------
# pulse shaping


def rrc_pulse(t, rolloff: float) -> np.ndarray:
    """Root-raised-cosine impulse response at times ``t`` given in chip periods."""
    t = np.asarray(t, dtype=float)
    b = rolloff
    h = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_sing = np.isclose(np.abs(4 * b * t), 1.0, atol=1e-12)
    rest = ~(at_zero | at_sing)
    h[at_zero] = 1.0 - b + 4 * b / np.pi
    h[at_sing] = (b / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )
    tr = t[rest]
    num = np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    den = np.pi * tr * (1 - (4 * b * tr) ** 2)
    h[rest] = num / den
    return h


def rrc_taps(samples_per_chip: int, rolloff: float, span_chips: int) -> np.ndarray:
    """Truncated RRC filter normalized to unit energy (one chip in, unit energy out)."""
    half = span_chips * samples_per_chip // 2
    t = np.arange(-half, half + 1) / samples_per_chip
    h = rrc_pulse(t, rolloff)
    return h / np.sqrt(np.sum(h**2))


def shape_chips(chips: np.ndarray, cfg: SoundingConfig, trim: bool = True) -> np.ndarray:
    """Upsample chips and filter them with the RRC pulse.

    With ``trim`` the filter delay is removed and the output holds exactly
    ``len(chips) * samples_per_chip`` samples, chip k peaking at sample
    k * samples_per_chip.
    """
    h = _rrc(cfg)
    sps = cfg.samples_per_chip
    y = signal.upfirdn(h, np.asarray(chips, dtype=complex), up=sps)
    if not trim:
        return y
    delay = (len(h) - 1) // 2
    out = np.zeros(len(chips) * sps, dtype=complex)
    seg = y[delay : delay + len(out)]
    out[: len(seg)] = seg
    return out


def _shape_periodic(chips: np.ndarray, cfg: SoundingConfig) -> np.ndarray:
    h = _rrc(cfg)
    sps = cfg.samples_per_chip
    n = len(chips) * sps
    up = np.zeros(n, dtype=complex)
    up[::sps] = chips
    kernel = np.zeros(n, dtype=complex)
    delay = (len(h) - 1) // 2
    np.add.at(kernel, (np.arange(len(h)) - delay) % n, h)
    return np.fft.ifft(np.fft.fft(up) * np.fft.fft(kernel))


@lru_cache(maxsize=8)
def _rrc(cfg: SoundingConfig) -> np.ndarray:
    return rrc_taps(cfg.samples_per_chip, cfg.rrc_rolloff, cfg.rrc_span_chips)


def _header_chips(cfg: SoundingConfig) -> np.ndarray:
    return generate_mseq(cfg.header_degree, cfg.header_polynomial)


def _body_chips(cfg: SoundingConfig) -> np.ndarray:
    return generate_mseq(cfg.body_degree, cfg.body_polynomial)


@lru_cache(maxsize=8)
def _header_waveform(cfg: SoundingConfig) -> np.ndarray:
    return shape_chips(_header_chips(cfg), cfg)


@dataclass(frozen=True)
class _Replica:
    spectrum: np.ndarray  # conj FFT of the periodic body replica
    energy: float
    pulse: np.ndarray  # normalized circular autocorrelation of the replica


@lru_cache(maxsize=8)
def _replica(cfg: SoundingConfig) -> _Replica:
    template = _shape_periodic(_body_chips(cfg), cfg)
    spec = np.fft.fft(template)
    energy = float(np.sum(np.abs(template) ** 2))
    pulse = np.fft.ifft(np.abs(spec) ** 2) / energy
    return _Replica(np.conj(spec), energy, pulse)


def system_pulse(cfg: SoundingConfig) -> np.ndarray:
    """CIR produced by a single unit tap at lag 0 (one body period long)."""
    return _replica(cfg).pulse.copy()


def build_tx_frame(cfg: SoundingConfig = SoundingConfig()) -> np.ndarray:
    """RRC-shaped BPSK frame: header followed by ``body_repetitions`` body periods."""
    chips = np.concatenate([_header_chips(cfg), np.tile(_body_chips(cfg), cfg.body_repetitions)])
    return shape_chips(chips, cfg)


# ---------------------------------------------------------------------------
# channel


def apply_multipath(
    frame: np.ndarray,
    taps: Sequence[MultipathTap],
    snr_db: float,
    rng_seed: int,
    *,
    cfg: SoundingConfig = SoundingConfig(),
    max_excess_delay: float = 200e-9,
    offset_samples: int = 0,
) -> np.ndarray:
    """Superpose delayed, scaled copies of ``frame`` and add complex white noise.

    Delays snap to the nearest sample. The noise variance is set so that the
    per-sample SNR relative to the strongest tap equals ``snr_db``; pass
    ``math.inf`` for a noiseless channel. The stream is padded by
    ``max_excess_delay`` after the frame and ``offset_samples`` before it.
    """
    if not taps:
        raise ValueError("at least one tap is required")
    if math.isnan(snr_db):
        raise ValueError("snr_db must not be NaN")
    dt = cfg.time_step
    lags = [int(round(t.delay / dt)) for t in taps]
    for tap, lag in zip(taps, lags):
        if tap.delay > max_excess_delay:
            raise ValueError(
                f"tap delay {tap.delay * 1e9:.3f} ns exceeds max excess delay "
                f"{max_excess_delay * 1e9:.3f} ns"
            )
    tail = int(math.ceil(max_excess_delay / dt)) + 1
    n = offset_samples + len(frame) + tail
    rx = np.zeros(n, dtype=complex)
    for tap, lag in zip(taps, lags):
        start = offset_samples + lag
        rx[start : start + len(frame)] += math.sqrt(tap.power) * frame
    if math.isinf(snr_db) and snr_db > 0:
        return rx
    signal_power = max(t.power for t in taps) * float(np.mean(np.abs(frame) ** 2))
    noise_var = signal_power / 10 ** (snr_db / 10)
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return rx + noise * math.sqrt(noise_var / 2)


def apply_hardware_response(rx: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Filter a stream with an FIR front-end response (lag 0 = response[0])."""
    return signal.lfilter(np.asarray(response, dtype=complex), [1.0], rx)


# ---------------------------------------------------------------------------
# receiver


def extract_cir(
    rx: np.ndarray,
    cfg: SoundingConfig = SoundingConfig(),
    *,
    n_average: Optional[int] = None,
    averaging: str = "coherent",
    sync_threshold_db: float = 15.0,
    hardware_response: Optional[np.ndarray] = None,
    regularization: float = 1e-6,
) -> ChannelImpulseResponse:
    """Synchronize on the header and recover one body period of the CIR.

    The profile is normalized by the replica energy (pulse energy times
    sequence length), so a unit-gain channel peaks at 0 dB. Lag 0 is the
    path the header locked onto (the strongest one).
    """
    if averaging not in ("coherent", "magnitude"):
        raise ValueError(f"unknown averaging mode {averaging!r}")
    reps = cfg.body_repetitions if n_average is None else n_average
    if not 1 <= reps <= cfg.body_repetitions:
        raise ValueError(f"n_average must lie in [1, {cfg.body_repetitions}]")

    header = _header_waveform(cfg)
    rx = np.asarray(rx, dtype=complex)
    if len(rx) < len(header):
        raise FrameNotFoundError("stream is shorter than the frame header")
    corr = np.abs(signal.correlate(rx, header, mode="valid", method="fft"))
    start = int(np.argmax(corr))
    ratio_db = 20 * math.log10(corr[start] / max(np.sqrt(np.mean(corr**2)), 1e-300))
    if ratio_db < sync_threshold_db:
        raise FrameNotFoundError(
            f"header peak {ratio_db:.1f} dB above the correlation RMS, "
            f"sync threshold is {sync_threshold_db:.1f} dB"
        )

    period = cfg.period_samples
    body_start = start + cfg.header_length * cfg.samples_per_chip
    if body_start + reps * period > len(rx):
        raise FrameNotFoundError("stream ends before the requested body repetitions")
    segments = rx[body_start : body_start + reps * period].reshape(reps, period)

    replica = _replica(cfg)
    spectra = np.fft.fft(segments, axis=1) * replica.spectrum
    if hardware_response is not None:
        h = np.fft.fft(np.asarray(hardware_response, dtype=complex), period)
        spectra = spectra * np.conj(h) / (np.abs(h) ** 2 + regularization)
    profiles = np.fft.ifft(spectra, axis=1) / replica.energy
    if averaging == "coherent":
        profile = profiles.mean(axis=0)
    else:
        profile = np.abs(profiles).mean(axis=0).astype(complex)

    return ChannelImpulseResponse(
        profile=profile,
        time_step=cfg.time_step,
        noise_floor=estimate_noise_floor(profile),
        config=cfg,
    )


def estimate_noise_floor(profile: np.ndarray) -> float:
    """Noise floor in dB from the median sample power.

    The median of an exponential variable is ln 2 times its mean; the few
    samples occupied by taps barely move the median.
    """
    power = np.abs(profile) ** 2
    return 10 * math.log10(max(float(np.median(power)) / math.log(2), 1e-300))


def detect_peaks(
    cir: ChannelImpulseResponse,
    dynamic_range_db: float = 30.0,
    *,
    margin_db: float = 6.0,
    aoa: float = 0.0,
    max_taps: int = 128,
    min_shape_match: float = 0.9,
) -> list[MultipathTap]:
    """Extract discrete taps by iterative global-maximum search.

    Each pass picks the strongest residual sample outside a one-chip
    exclusion window around earlier picks, refits all picked amplitudes
    jointly against the sounder's system pulse and subtracts them. The
    threshold is max(global peak - dynamic range, noise floor + margin).
    Candidates whose residual neighbourhood correlates with the system pulse
    below ``min_shape_match`` are skipped, which merges paths closer than
    the chip duration into one tap.
    Delays are excess delays: the earliest detected tap sits at 0.
    """
    if dynamic_range_db <= 0:
        raise ValueError("dynamic_range_db must be positive")
    profile = np.asarray(cir.profile, dtype=complex)
    if profile.size == 0:
        raise ValueError("empty CIR profile")
    n = len(profile)
    cfg = cir.config
    sps = cfg.samples_per_chip if cfg is not None else 1
    pulse = _replica(cfg).pulse if cfg is not None and n == cfg.period_samples else None

    floor_db = cir.noise_floor if cir.noise_floor is not None else -math.inf
    peak_db = 10 * math.log10(float(np.max(np.abs(profile) ** 2)) or 1e-300)
    threshold = 10 ** (max(peak_db - dynamic_range_db, floor_db + margin_db) / 10)

    picks: list[int] = []
    blocked = np.zeros(n, dtype=bool)
    residual = profile.copy()
    amps = np.zeros(0, dtype=complex)
    offsets = np.arange(-(sps - 1), sps)
    for _ in range(4 * max_taps):
        if len(picks) >= max_taps:
            break
        power = np.abs(residual) ** 2
        power[blocked] = 0.0
        k = int(np.argmax(power))
        if power[k] < threshold:
            break
        blocked[(k + offsets) % n] = True
        # leftovers of unresolved (sub-chip) structure do not look like a pulse
        if pulse is not None and _shape_match(residual, pulse, k, sps) < min_shape_match:
            continue
        picks.append(k)
        if pulse is None:
            amps = profile[picks]
            continue
        amps = _fit_amplitudes(profile, pulse, picks)
        residual = profile - _synthesize(pulse, picks, amps)

    if not picks:
        return []
    # drop refitted taps that sank below threshold, then refit the rest
    while True:
        powers = np.abs(amps) ** 2
        keep = powers >= max(threshold, powers.max() * 10 ** (-dynamic_range_db / 10))
        if keep.all():
            break
        picks = [p for p, kp in zip(picks, keep) if kp]
        amps = profile[picks] if pulse is None else _fit_amplitudes(profile, pulse, picks)

    lags = np.array(picks)
    strongest = lags[np.argmax(np.abs(amps))]
    rel = (lags - strongest + n // 2) % n - n // 2
    rel -= rel.min()
    order = np.argsort(rel, kind="stable")
    return [
        MultipathTap(delay=float(rel[i]) * cir.time_step, power=float(abs(amps[i]) ** 2), aoa=aoa)
        for i in order
    ]


def _shape_match(residual: np.ndarray, pulse: np.ndarray, k: int, half_width: int) -> float:
    n = len(pulse)
    offsets = np.arange(-half_width, half_width + 1)
    seg = residual[(k + offsets) % n]
    ref = pulse[offsets % n]
    denom = np.vdot(seg, seg).real * np.vdot(ref, ref).real
    return float(abs(np.vdot(ref, seg)) ** 2 / denom) if denom > 0 else 0.0


def _columns(pulse: np.ndarray, picks: Sequence[int]) -> np.ndarray:
    return np.stack([np.roll(pulse, k) for k in picks], axis=1)


def _fit_amplitudes(profile: np.ndarray, pulse: np.ndarray, picks: Sequence[int]) -> np.ndarray:
    amps, *_ = np.linalg.lstsq(_columns(pulse, picks), profile, rcond=None)
    return amps


def _synthesize(pulse: np.ndarray, picks: Sequence[int], amps: np.ndarray) -> np.ndarray:
    return _columns(pulse, picks) @ amps


def sound_channel(
    taps: Sequence[MultipathTap],
    cfg: SoundingConfig = SoundingConfig(),
    *,
    snr_db: float = 25.0,
    rng_seed: int = 0,
    dynamic_range_db: float = 30.0,
    aoa: float = 0.0,
    **channel_kwargs,
) -> ChannelImpulseResponse:
    """Full loopback: frame -> multipath channel -> CIR with detected taps."""
    rx = apply_multipath(build_tx_frame(cfg), taps, snr_db, rng_seed, cfg=cfg, **channel_kwargs)
    cir = extract_cir(rx, cfg)
    found = detect_peaks(cir, dynamic_range_db, aoa=aoa)
    return ChannelImpulseResponse(
        profile=cir.profile,
        time_step=cir.time_step,
        taps=tuple(found),
        noise_floor=cir.noise_floor,
        config=cfg,
    )
