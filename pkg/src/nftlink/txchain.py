"""Behavioral model of the photonic-integrated multiplexing transmitter.

Filters are applied in the frequency domain using the complex response of
an analog prototype (true phase), shifted to the filter center.  Frequencies
are in GHz and times in ps, so ``fftfreq(n, dt) * 1e3`` gives GHz.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from .field import SampledField
from .norm import C_KM_PER_S, dbm_to_w, w_to_dbm

log = logging.getLogger(__name__)

PLANCK = 6.62607015e-34


@dataclass(frozen=True)
class DacModel:
    bits: int = 6
    bandwidth: float = 20.0
    rate: float = 92.0

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("DAC needs at least 1 bit")
        if not self.rate > 2 * self.bandwidth:
            raise ValueError("DAC rate must exceed twice its analog bandwidth")


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "chebyshev1"
    order: int = 4
    bw_3db: float = 17.5
    center: float = 0.0
    ripple_db: float = 0.5

    def __post_init__(self):
        if self.kind not in ("chebyshev1", "gaussian", "butterworth"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not self.bw_3db > 0:
            raise ValueError("bw_3db must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")

    def at(self, center: float) -> "FilterSpec":
        return FilterSpec(self.kind, self.order, self.bw_3db, center, self.ripple_db)


@dataclass(frozen=True)
class EdfaModel:
    gain_db: Optional[float] = None
    nf_db: float = 5.0
    center_frequency: float = C_KM_PER_S / 1550.0

    def __post_init__(self):
        if self.gain_db is not None and self.gain_db > 0 and self.nf_db < 10 * math.log10(2):
            raise ValueError("noise figure below the 3 dB quantum limit")


# PIC power budget per carrier, in order of traversal (dB, negative = loss).
# The monitor-tap loss is not itemized in the source budget; it is the
# residual that closes the chain on the stated -20.6 dBm off-chip peak.
PIC_LOSS_LEDGER = (
    ("comb line power", -6.0),
    ("45 GHz line-select filter IL", -2.0),
    ("pre-PIC EDFA to 10 dBm injection", 18.0),
    ("input grating coupler IL", -3.0),
    ("2nd-order CROW OADM IL", -1.6),
    ("IQ-MZM IL and modulation penalty", -13.5),
    ("optical delay line IL", -3.0),
    ("4th-order CROW Chebyshev mux IL", -2.0),
    ("MMI combiner", -3.0),
    ("output grating coupler IL", -3.0),
    ("monitor taps", -1.5),
)
PIC_OUTPUT_PEAK_DBM = -20.6


def ledger_output_dbm(ledger=PIC_LOSS_LEDGER) -> float:
    return float(sum(v for _, v in ledger))


def _lowpass_response(spec: FilterSpec, f_ghz: np.ndarray) -> np.ndarray:
    """Complex baseband response at frequency offset ``f_ghz`` from the center."""
    half = spec.bw_3db / 2
    if not np.isfinite(half):
        return np.ones_like(f_ghz, dtype=complex)
    if spec.kind == "gaussian":
        return np.exp(-0.5 * math.log(2) * (f_ghz / half) ** 2).astype(complex)
    w = 2 * np.pi * f_ghz
    if spec.kind == "chebyshev1":
        eps = math.sqrt(10 ** (spec.ripple_db / 10) - 1)
        # -3 dB point of the ripple-normalized prototype
        w3 = math.cosh(math.acosh(1 / eps) / spec.order) if eps < 1 else 1.0
        z, p, k = sps.cheby1(spec.order, spec.ripple_db, 2 * np.pi * half / w3, analog=True, output="zpk")
    else:
        z, p, k = sps.butter(spec.order, 2 * np.pi * half, analog=True, output="zpk")
    # even-order type I sits at -ripple at DC; the passband maximum is 0 dB
    _, h = sps.freqs_zpk(z, p, k, worN=w)
    return h


def filter_response(spec: FilterSpec, f_ghz: np.ndarray) -> np.ndarray:
    return _lowpass_response(spec, np.asarray(f_ghz, dtype=float) - spec.center)


def group_delay(spec: FilterSpec, f_ghz: float | None = None) -> float:
    """Group delay in ps at ``f_ghz`` (default: the filter center)."""
    f = spec.center if f_ghz is None else f_ghz
    df = 1e-3
    h = filter_response(spec, np.array([f - df, f + df]))
    dphi = np.angle(h[1] / h[0])
    return float(-dphi / (2 * np.pi * 2 * df) * 1e3)


def apply_filter(field: SampledField, spec: FilterSpec) -> SampledField:
    """Multiply the spectrum by the filter response centered at ``spec.center``."""
    fs = 1e3 / field.dt
    if np.isfinite(spec.bw_3db) and fs <= 2 * (abs(spec.center) + spec.bw_3db):
        raise ValueError(
            f"sampling rate {fs:.1f} GS/s too low for a filter at {spec.center} GHz "
            f"with {spec.bw_3db} GHz bandwidth"
        )
    f = np.fft.fftfreq(field.n, field.dt) * 1e3
    h = filter_response(spec, f)
    return field.replace(samples=np.fft.ifft(np.fft.fft(field.samples) * h))


def shift_frequency(field: SampledField, f_ghz: float) -> SampledField:
    """Multiply by exp(j 2 pi f t) on the absolute time axis."""
    return field.replace(samples=field.samples * np.exp(2j * np.pi * f_ghz * 1e-3 * field.t))


def resample(field: SampledField, rate_gsps: float) -> SampledField:
    """Periodic Fourier resampling to (approximately) ``rate_gsps``.

    The record duration is preserved; the returned dt is duration / n.
    """
    n_new = int(round(field.duration * rate_gsps * 1e-3))
    if n_new == field.n:
        return field
    x = sps.resample(field.samples, n_new)
    return field.replace(samples=x, dt=field.duration / n_new)


def quantize(x: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    """Mid-tread uniform quantizer with 2**bits levels over [-FS, FS)."""
    if full_scale == 0:
        return np.zeros_like(x)
    step = 2 * full_scale / 2**bits
    idx = np.clip(np.round(x / step), -(2 ** (bits - 1)), 2 ** (bits - 1) - 1)
    return idx * step


def dac_convert(field: SampledField, model: DacModel, full_scale: Optional[float] = None) -> SampledField:
    """Resample to the DAC rate, quantize I and Q, then apply the analog roll-off."""
    x = resample(field, model.rate)
    if full_scale is None:
        full_scale = float(max(np.max(np.abs(x.samples.real)), np.max(np.abs(x.samples.imag))))
    y = quantize(x.samples.real, model.bits, full_scale) + 1j * quantize(x.samples.imag, model.bits, full_scale)
    out = x.replace(samples=y)
    return apply_filter(out, dac_filter(model))


def dac_filter(model: DacModel) -> FilterSpec:
    return FilterSpec("butterworth", 2, 2 * model.bandwidth, 0.0)


def multiplex(
    channels: Sequence[SampledField],
    centers: Sequence[float],
    mux_filter: FilterSpec = FilterSpec(),
    mmi_loss_db: float = 3.0,
) -> SampledField:
    """Filter each channel at its carrier, combine even/odd buses, apply the MMI loss.

    Even and odd channels travel on separate buses, so adjacent channels are
    never passed through each other's filters.
    """
    if not channels:
        raise ValueError("nothing to multiplex")
    ref = channels[0]
    for ch in channels[1:]:
        if ch.n != ref.n or ch.dt != ref.dt or ch.t_start != ref.t_start:
            raise ValueError("channels must share one time grid")
    if len(centers) != len(channels):
        raise ValueError("one filter center per channel required")
    buses = [np.zeros(ref.n, dtype=complex), np.zeros(ref.n, dtype=complex)]
    for k, (ch, fc) in enumerate(zip(channels, centers)):
        buses[k % 2] += apply_filter(ch, mux_filter.at(fc)).samples
    loss = 10 ** (-mmi_loss_db / 20)
    return ref.replace(samples=(buses[0] + buses[1]) * loss)


def ase_psd(gain_lin: float, nf_db: float, center_thz: float) -> float:
    """One-sided single-polarization ASE density in W/Hz, (G-1) h nu n_sp."""
    nsp = 10 ** (nf_db / 10) / 2
    return (gain_lin - 1) * PLANCK * center_thz * 1e12 * nsp


def edfa(
    field: SampledField,
    model: EdfaModel,
    rng: np.random.Generator,
    target_avg_power_dbm: Optional[float] = None,
) -> SampledField:
    """Amplify and add circular white Gaussian ASE over the simulation bandwidth.

    In target mode the gain is chosen so that the expected output power
    (signal plus ASE) equals the target.
    """
    p_in = field.mean_power()
    fs_hz = 1e12 / field.dt
    if target_avg_power_dbm is not None:
        p_out = dbm_to_w(target_avg_power_dbm)
        unit = PLANCK * model.center_frequency * 1e12 * 10 ** (model.nf_db / 10) / 2 * fs_hz
        if p_in <= 0:
            raise ValueError("cannot solve EDFA gain for a zero-power input")
        gain = (p_out + unit) / (p_in + unit)
        if gain < 1:
            raise ValueError(
                f"target {target_avg_power_dbm:.2f} dBm below input {w_to_dbm(p_in):.2f} dBm; "
                "the amplifier does not attenuate"
            )
    else:
        gain = 10 ** ((model.gain_db or 0.0) / 10)
        if gain < 1:
            raise ValueError("EDFA gain below 0 dB")
    x = field.samples * math.sqrt(gain)
    if gain > 1:
        var = ase_psd(gain, model.nf_db, model.center_frequency) * fs_hz
        noise = rng.standard_normal((2, field.n)) * math.sqrt(var / 2)
        x = x + noise[0] + 1j * noise[1]
    return field.replace(samples=x, edfa_gain_db=10 * math.log10(gain))


def set_peak_power(field: SampledField, peak_dbm: float) -> SampledField:
    p = np.max(field.power)
    if p == 0:
        return field
    return field.replace(samples=field.samples * math.sqrt(dbm_to_w(peak_dbm) / p))


def pic_transmit(
    baseband: Sequence[SampledField],
    carriers: Sequence[float],
    mux_filter: FilterSpec = FilterSpec(),
    peak_dbm: float = PIC_OUTPUT_PEAK_DBM,
    mmi_loss_db: float = 3.0,
) -> SampledField:
    """Upconvert, set each channel's off-chip peak to ``peak_dbm`` and multiplex."""
    loss = 10 ** (-mmi_loss_db / 10)
    shaped = []
    for ch, fc in zip(baseband, carriers):
        up = shift_frequency(ch, fc)
        p_filt = np.max(apply_filter(up, mux_filter.at(fc)).power)
        scale = math.sqrt(dbm_to_w(peak_dbm) / (p_filt * loss)) if p_filt > 0 else 0.0
        shaped.append(up.replace(samples=up.samples * scale))
    return multiplex(shaped, carriers, mux_filter, mmi_loss_db)
