"""Physical <-> dimensionless soliton units.

Physical units used throughout the package: time in ps, distance in km,
power in W (field amplitude in sqrt(W)), frequency in GHz, dispersion
parameter D in ps/(nm km), Kerr coefficient in 1/(W km).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import SampledField

C_KM_PER_S = 2.998e5
# km/s and nm/ps share the same numeric value
C_NM_PER_PS = C_KM_PER_S
FWHM_PER_T0 = 1.763


@dataclass(frozen=True)
class FiberParams:
    dispersion_D: float = 4.5
    attenuation_alpha: float = 0.2
    kerr_gamma: float = 1.6
    center_wavelength: float = 1550.0
    span_length: float = 50.0

    def __post_init__(self):
        if self.dispersion_D < 0:
            raise ValueError("dispersion_D must be >= 0 (anomalous regime)")
        if self.attenuation_alpha < 0:
            raise ValueError("attenuation_alpha must be >= 0")
        if self.kerr_gamma < 0:
            raise ValueError("kerr_gamma must be >= 0")
        if self.span_length <= 0:
            raise ValueError("span_length must be positive")

    @property
    def alpha_np(self) -> float:
        """Power attenuation in nepers-per-km (1/km)."""
        return self.attenuation_alpha * math.log(10) / 10.0

    @property
    def carrier_frequency_thz(self) -> float:
        return C_KM_PER_S / self.center_wavelength

    def delta_lambda_nm(self, delta_f_ghz: float) -> float:
        """Wavelength spacing equivalent to a frequency spacing at the center wavelength."""
        lam_m = self.center_wavelength * 1e-9
        return delta_f_ghz * 1e9 * lam_m**2 / (C_KM_PER_S * 1e3) * 1e9


@dataclass(frozen=True)
class NormScales:
    T0: float
    L0: float
    P0: float
    beta2: float

    def __post_init__(self):
        if not self.beta2 < 0:
            raise ValueError("beta2 must be negative (anomalous dispersion)")
        if abs(self.L0 - self.T0**2 / abs(self.beta2)) > 1e-12 * self.L0:
            raise ValueError("inconsistent scales: L0 != T0^2/|beta2|")

    def freq_to_norm(self, f_ghz: float) -> float:
        """Physical baseband frequency (GHz) -> normalized angular frequency."""
        return 2 * np.pi * f_ghz * 1e-3 * self.T0

    def xi_for_offset(self, f_ghz: float) -> float:
        """Real part of the eigenvalue of a soliton carried at offset ``f_ghz``.

        The scattering problem is written so that a carrier exp(j w t) maps
        to Re(lambda) = -w / 2.
        """
        return -0.5 * self.freq_to_norm(f_ghz)


def beta2_from_D(params: FiberParams) -> float:
    """Group-velocity dispersion beta2 in ps^2/km from D (ps/(nm km))."""
    lam = params.center_wavelength
    return -params.dispersion_D * lam**2 / (2 * np.pi * C_NM_PER_PS)


def derive_scales(params: FiberParams, t_fwhm: float) -> NormScales:
    if t_fwhm <= 0:
        raise ValueError("t_fwhm must be positive")
    beta2 = beta2_from_D(params)
    if not beta2 < 0:
        raise ValueError("non-anomalous dispersion: bright solitons need D > 0")
    if params.kerr_gamma <= 0:
        raise ValueError("kerr_gamma must be positive to define a soliton power scale")
    T0 = t_fwhm / FWHM_PER_T0
    L0 = T0**2 / abs(beta2)
    P0 = 1.0 / (params.kerr_gamma * L0)
    return NormScales(T0=T0, L0=L0, P0=P0, beta2=beta2)


def to_normalized(field: SampledField, scales: NormScales) -> SampledField:
    return SampledField(
        field.samples / math.sqrt(scales.P0),
        field.t_start / scales.T0,
        field.dt / scales.T0,
        dict(field.meta),
    )


def to_physical(field: SampledField, scales: NormScales) -> SampledField:
    return SampledField(
        field.samples * math.sqrt(scales.P0),
        field.t_start * scales.T0,
        field.dt * scales.T0,
        dict(field.meta),
    )


def dbm_to_w(p_dbm: float) -> float:
    return 1e-3 * 10 ** (p_dbm / 10)


def w_to_dbm(p_w: float) -> float:
    return 10 * np.log10(p_w / 1e-3)
