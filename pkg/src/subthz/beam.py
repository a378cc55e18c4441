"""Gaussian-beam near-field model and finite-aperture power coupling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.constants import c as SPEED_OF_LIGHT

WAVEGUIDE_CORRECTION = 0.81  # ~8/pi^2, non-uniform field across the guide


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


def wavelength(frequency: float) -> float:
    return SPEED_OF_LIGHT / frequency


def rayleigh_range(w0: float, wavelength: float) -> float:
    if w0 <= 0 or wavelength <= 0:
        raise ValueError("waist and wavelength must be positive")
    return math.pi * w0**2 / wavelength


@dataclass(frozen=True)
class GaussianBeam:
    waist: float
    wavelength: float
    e0: complex = 1.0

    def __post_init__(self):
        if self.waist <= 0 or self.wavelength <= 0:
            raise ValueError("waist and wavelength must be positive")

    @classmethod
    def at_frequency(cls, waist: float, frequency: float = 140e9, e0: complex = 1.0):
        return cls(waist, wavelength(frequency), e0)

    @property
    def rayleigh_range(self) -> float:
        return rayleigh_range(self.waist, self.wavelength)

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength


@dataclass(frozen=True)
class ApertureSpec:
    radius: float
    efficiency: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("aperture radius must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")


class BeamGeometry(NamedTuple):
    width: float
    curvature: float  # +inf at the waist plane
    gouy: float


def beam_geometry(beam: GaussianBeam, z: float) -> BeamGeometry:
    """Beam radius w(z), wavefront curvature radius R(z) and Gouy phase at ``z``."""
    if z < 0:
        raise ValueError("z must be >= 0")
    zr = beam.rayleigh_range
    width = beam.waist * math.sqrt(1 + (z / zr) ** 2)
    curvature = math.inf if z == 0 else (z**2 + zr**2) / z
    return BeamGeometry(width, curvature, math.atan(z / zr))


def field_at(beam: GaussianBeam, r, z: float):
    """Complex field at transverse offset ``r`` and propagation distance ``z``.

    Phase convention exp(-j(kz + k r^2 / 2R + gouy)).
    """
    if z <= 0:
        raise ValueError("z must be positive")
    w, big_r, gouy = beam_geometry(beam, z)
    k = beam.wavenumber
    r = np.asarray(r, dtype=float)
    amp = beam.e0 * (beam.waist / w) * np.exp(-(r**2) / w**2)
    phase = k * z + k * r**2 / (2 * big_r) + gouy
    out = amp * np.exp(-1j * phase)
    return out if out.ndim else complex(out)


def _quad(fn, upper: float, tol: float) -> float:
    value, err = integrate.quad(fn, 0.0, upper, epsabs=tol, epsrel=1e-10, limit=500)
    if err > max(tol, 1e-9 * abs(value)):
        raise QuadratureError(
            f"quadrature did not converge: estimated error {err:.3e} > {tol:.3e}", err
        )
    return value


def aperture_integral(
    beam: GaussianBeam,
    aperture: ApertureSpec,
    z: float,
    mode: str = "coherent",
    geometry: str = "line",
) -> float:
    """Field integral over the receiving aperture.

    ``coherent``: |integral of E|^2, phases included.
    ``incoherent``: (integral of |E|)^2, the same field summed in phase.
    ``intercepted``: integral of |E|^2, power crossing the aperture.

    ``line`` integrates over [-radius, radius]; ``disk`` over a circular
    aperture of that radius. Integration stops at 5 w(z).
    """
    if mode not in ("coherent", "incoherent", "intercepted"):
        raise ValueError(f"unknown mode {mode!r}")
    if geometry not in ("line", "disk"):
        raise ValueError(f"unknown geometry {geometry!r}")
    w = beam_geometry(beam, z).width
    upper = min(aperture.radius, 5 * w)
    on_axis = abs(field_at(beam, 0.0, z))

    if geometry == "line":
        weight = lambda r: 2.0  # noqa: E731  symmetric about r = 0
    else:
        weight = lambda r: 2 * math.pi * r  # noqa: E731

    if mode == "coherent":
        tol = 1e-9 * on_axis * w
        re = _quad(lambda r: weight(r) * field_at(beam, r, z).real, upper, tol)
        im = _quad(lambda r: weight(r) * field_at(beam, r, z).imag, upper, tol)
        return re**2 + im**2
    if mode == "incoherent":
        tol = 1e-9 * on_axis * w
        return _quad(lambda r: weight(r) * abs(field_at(beam, r, z)), upper, tol) ** 2
    tol = 1e-9 * on_axis**2 * w
    return _quad(lambda r: weight(r) * abs(field_at(beam, r, z)) ** 2, upper, tol)


def coupled_power(
    beam: GaussianBeam,
    aperture: ApertureSpec,
    z: float,
    *,
    reference_distance: float = 1.0,
    mode: str = "coherent",
    geometry: str = "line",
) -> float:
    """Aperture integral at ``z`` relative to the same integral at the reference distance."""
    if z <= 0:
        raise ValueError("z must be positive")
    ref = aperture_integral(beam, aperture, reference_distance, mode, geometry)
    return aperture_integral(beam, aperture, z, mode, geometry) / ref


def total_power(beam: GaussianBeam, z: float, geometry: str = "disk") -> float:
    """Closed-form integral of |E|^2 over the whole transverse plane (or line)."""
    w = beam_geometry(beam, z).width
    peak = abs(beam.e0) ** 2 * (beam.waist / w) ** 2
    if geometry == "disk":
        return peak * math.pi * w**2 / 2
    return peak * math.sqrt(math.pi / 2) * w


def intercepted_fraction(
    beam: GaussianBeam, aperture: ApertureSpec, z: float, geometry: str = "disk"
) -> float:
    """Share of the beam power that crosses the aperture."""
    return aperture_integral(beam, aperture, z, "intercepted", geometry) / total_power(
        beam, z, geometry
    )


def waveguide_gain(a: float, b: float, wavelength: float) -> float:
    """Gain in dBi of an open rectangular waveguide with broad/narrow walls a, b."""
    if a <= 0 or b <= 0 or wavelength <= 0:
        raise ValueError("dimensions and wavelength must be positive")
    return 10 * math.log10(WAVEGUIDE_CORRECTION * 4 * math.pi * a * b / wavelength**2)


def waist_from_gain(gain_dbi: float, efficiency: float, wavelength: float) -> float:
    """Gaussian waist equivalent to a circular aperture of the given gain.

    Physical area A = G lambda^2 / (4 pi eta), radius r = sqrt(A / pi),
    waist w0 = sqrt(2) r.
    """
    if gain_dbi <= 0:
        raise ValueError("gain must be positive in dBi")
    if not 0 < efficiency <= 1:
        raise ValueError("efficiency must lie in (0, 1]")
    area = 10 ** (gain_dbi / 10) * wavelength**2 / (4 * math.pi * efficiency)
    return math.sqrt(2) * math.sqrt(area / math.pi)


def beam_profile_table(
    beam: GaussianBeam,
    aperture: ApertureSpec,
    distances,
    *,
    reference_distance: float = 1.0,
    geometry: str = "line",
) -> list[dict]:
    """Rows of z, w, R, Gouy phase, on-axis intensity and coupled power (both dB)."""
    ref_axis = abs(field_at(beam, 0.0, reference_distance)) ** 2
    rows = []
    for z in distances:
        geo = beam_geometry(beam, z)
        axis = abs(field_at(beam, 0.0, z)) ** 2
        coupled = coupled_power(
            beam, aperture, z, reference_distance=reference_distance, geometry=geometry
        )
        rows.append(
            {
                "z_m": float(z),
                "w_m": float(geo.width),
                "R_m": float(geo.curvature),
                "gouy_rad": float(geo.gouy),
                "on_axis_db": 10 * math.log10(axis / ref_axis),
                "coupled_db": 10 * math.log10(coupled),
            }
        )
    return rows
