"""Fundamental-soliton synthesis, QPSK mapping and per-channel frame assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import SampledField
from .norm import FWHM_PER_T0, NormScales

# Gray-coded QPSK: (b0, b1) -> phase in degrees
QPSK_PHASES = {(0, 0): 45.0, (0, 1): 135.0, (1, 1): -135.0, (1, 0): -45.0}
QPSK_BASE_MAGNITUDE = 1.0
DAC_RATE_GSPS = 92.0


@dataclass(frozen=True)
class SolitonParams:
    """Target nonlinear spectrum of one fundamental soliton.

    ``b_target`` is the coefficient the forward transform returns when the
    time axis is shifted so that ``center_time`` is the origin; its modulus
    sets the envelope offset log|b| / (2 Im lam) from that origin.
    ``carrier_offset`` is an extra frequency shift in cycles per time unit,
    applied about ``center_time``.
    """

    lam: complex = 0.5j
    b_target: complex = 1.0 + 0j
    center_time: float = 0.0
    carrier_offset: float = 0.0

    def __post_init__(self):
        if not self.lam.imag > 0:
            raise ValueError("soliton eigenvalue must lie in the upper half plane")
        if not abs(self.b_target) > 0:
            raise ValueError("|b_target| must be positive")

    @property
    def envelope_center(self) -> float:
        return self.center_time + math.log(abs(self.b_target)) / (2 * self.lam.imag)

    @property
    def observed_lambda(self) -> complex:
        """Eigenvalue after the carrier offset, Re shifted by -pi * offset."""
        return self.lam - math.pi * self.carrier_offset

    def b_on_grid(self) -> complex:
        """b seen by a forward transform on the absolute time axis (no carrier offset)."""
        return self.b_target * np.exp(-2j * self.lam * self.center_time)


@dataclass(frozen=True)
class FramePlan:
    n_channels: int = 4
    delta_T: float = 250.0
    delta_f: float = 10.0
    downtime: float = 0.0

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")
        if self.delta_T < 0 or self.downtime < 0:
            raise ValueError("delta_T and downtime must be non-negative")

    @property
    def window(self) -> float:
        return self.n_channels * self.delta_T + self.downtime

    @property
    def f_sym(self) -> float:
        """4-pulse symbol rate in GBd (window in ps)."""
        return 1e3 / self.window

    def carrier(self, channel: int) -> float:
        """Carrier offset in GHz, symmetric about the band center."""
        return (channel - (self.n_channels - 1) / 2) * self.delta_f

    def slot_time(self, channel: int) -> float:
        return channel * self.delta_T


def delta_k_from_spacing(delta_f_ghz: float, t_fwhm_ps: float) -> float:
    """Normalized eigenvalue spacing for a carrier spacing, pi * df * T_FWHM / 1.763."""
    return math.pi * delta_f_ghz * 1e-3 * t_fwhm_ps / FWHM_PER_T0


def spacing_from_delta_k(delta_k: float, T0_ps: float) -> float:
    """Carrier spacing in GHz for a normalized spacing delta_k."""
    return delta_k / (math.pi * T0_ps) * 1e3


def soliton_waveform(p: SolitonParams, t: np.ndarray, period: float | None = None) -> np.ndarray:
    """Closed-form sech envelope; with ``period`` the time distance wraps."""
    eta = p.lam.imag
    xi = p.lam.real
    t0 = math.log(abs(p.b_target)) / (2 * eta)
    # b = -exp(-j theta) exp(-2 j lam t0) for q = 2 eta sech(2 eta (t - t0)) exp(-2 j xi t + j theta)
    theta = math.pi - np.angle(p.b_target) - 2 * xi * t0
    tau = np.asarray(t, dtype=float) - p.center_time
    if period is not None:
        tau = (tau + period / 2) % period - period / 2
    env = 2 * eta / np.cosh(np.clip(2 * eta * (tau - t0), -700, 700))
    q = env * np.exp(1j * (theta - 2 * xi * tau))
    if p.carrier_offset:
        q = q * np.exp(2j * math.pi * p.carrier_offset * tau)
    return q


def fundamental_soliton(p: SolitonParams, grid: SampledField | tuple) -> SampledField:
    """Sample a fundamental soliton on ``grid`` (a field or ``(t_start, dt, n)``).

    Rejects grids whose edges cut the envelope above 1e-6 of its peak.
    """
    if isinstance(grid, SampledField):
        t_start, dt, n = grid.t_start, grid.dt, grid.n
    else:
        t_start, dt, n = grid
    t = t_start + dt * np.arange(n)
    eta = p.lam.imag
    c = p.envelope_center
    edge = min(c - t[0], t[-1] - c)
    if edge < 0 or 1 / math.cosh(min(2 * eta * edge, 700)) > 1e-6:
        raise ValueError("time grid too short: soliton tails truncated above 1e-6 of peak")
    return SampledField(soliton_waveform(p, t), t_start, dt)


def qpsk_map(bits) -> np.ndarray:
    """Gray-coded QPSK b coefficients with fixed magnitude."""
    bits = np.asarray(bits, dtype=int).ravel()
    if bits.size % 2:
        raise ValueError("QPSK mapping needs an even number of bits")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    pairs = bits.reshape(-1, 2)
    phases = np.empty(len(pairs))
    for key, deg in QPSK_PHASES.items():
        phases[(pairs[:, 0] == key[0]) & (pairs[:, 1] == key[1])] = deg
    return QPSK_BASE_MAGNITUDE * np.exp(1j * np.deg2rad(phases))


def qpsk_demap(b) -> np.ndarray:
    """Quadrant decision of arg(b); inverse of :func:`qpsk_map`."""
    b = np.asarray(b)
    out = np.empty((b.size, 2), dtype=np.int8)
    out[:, 0] = (b.imag < 0).astype(np.int8)
    out[:, 1] = (b.real < 0).astype(np.int8)
    # (0,0)=+45, (0,1)=+135, (1,1)=-135, (1,0)=-45
    return out.ravel()


def split_channels(symbols: np.ndarray, n_channels: int) -> np.ndarray:
    """Round-robin symbols into an (n_channels, n_windows) array."""
    symbols = np.asarray(symbols)
    if symbols.size % n_channels:
        raise ValueError("symbol count must be a multiple of the channel count")
    return symbols.reshape(-1, n_channels).T


def assemble_channel(
    symbols,
    plan: FramePlan,
    channel_index: int,
    scales: NormScales,
    dt: float,
    with_carrier: bool = True,
    t_offset: float = 0.0,
) -> SampledField:
    """Physical field (ps, sqrt(W)) of one channel's soliton train.

    Window ``k`` starts at ``k * plan.window``; the channel's pulse sits at
    ``channel_index * delta_T`` inside it.  The burst is periodic with
    period ``len(symbols) * plan.window``, matching the split-step grid.
    """
    if not 0 <= channel_index < plan.n_channels:
        raise ValueError("channel_index out of range")
    if plan.window < plan.n_channels * plan.delta_T:
        raise ValueError("window shorter than n_channels * delta_T")
    symbols = np.atleast_1d(np.asarray(symbols, dtype=complex))
    n_windows = symbols.size
    period = n_windows * plan.window
    n = int(round(period / dt))
    dt = period / n
    t = t_offset + dt * np.arange(n)
    tn = t / scales.T0
    out = np.zeros(n, dtype=complex)
    half_span = 30.0  # normalized half-width of the support evaluated per pulse
    for k, b in enumerate(symbols):
        center = (k * plan.window + plan.slot_time(channel_index)) / scales.T0
        p = SolitonParams(0.5j, b, center)
        tau = (tn - center + period / scales.T0 / 2) % (period / scales.T0) - period / scales.T0 / 2
        sel = np.abs(tau) < half_span
        out[sel] += soliton_waveform(p, center + tau[sel])
    out *= math.sqrt(scales.P0)
    if with_carrier:
        out *= np.exp(2j * math.pi * plan.carrier(channel_index) * 1e-3 * t)
    return SampledField(out, t_offset, dt, {"channel": channel_index})
