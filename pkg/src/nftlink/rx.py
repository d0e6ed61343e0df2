"""Per-channel coherent receivers with NFT-domain detection and BER counting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .field import SampledField
from .nft import DiscreteEigen, NumericalRangeError, refine_eigenvalue
from .norm import NormScales
from .pulse import FramePlan, qpsk_demap
from .txchain import FilterSpec, apply_filter, resample, shift_frequency

SD_FEC_LIMIT = 2.2e-2
HD_FEC_LIMIT = 3.8e-3
ERASED = -1

RX_FILTER = FilterSpec("gaussian", 1, 7.0)
ADC_RATE_GSPS = 80.0

SYMBOL_CSV_COLUMNS = (
    "channel", "window", "lam_re", "lam_im", "b_re", "b_im",
    "aprime_re", "aprime_im", "bit0", "bit1", "ref0", "ref1", "erasure",
)


@dataclass(frozen=True)
class RxConfig:
    lo_frequencies: tuple
    optical_filter: FilterSpec = RX_FILTER
    adc_rate: float = ADC_RATE_GSPS
    window: float = 1000.0

    @classmethod
    def for_plan(cls, plan: FramePlan, **kw) -> "RxConfig":
        return cls(tuple(plan.carrier(k) for k in range(plan.n_channels)), window=plan.window, **kw)

    def check_plan(self, plan: FramePlan):
        grid = tuple(plan.carrier(k) for k in range(plan.n_channels))
        if len(grid) != len(self.lo_frequencies) or not np.allclose(grid, self.lo_frequencies):
            raise ValueError("receiver LOs must sit on the transmitted carrier grid")


@dataclass(frozen=True)
class FeatureVector:
    d_aprime_re: float
    d_aprime_im: float
    d_lambda_re: float
    d_lambda_im: float
    b_re: float
    b_im: float

    def deviations(self) -> np.ndarray:
        return np.array([self.d_aprime_re, self.d_aprime_im, self.d_lambda_re, self.d_lambda_im])


ZERO_FEATURE = FeatureVector(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class RxSymbol:
    channel: int
    window_index: int
    eigen: Optional[DiscreteEigen]
    feature: FeatureVector
    decided_bits: tuple

    @property
    def erasure(self) -> bool:
        return self.eigen is None

    @property
    def b(self) -> complex:
        return complex("nan") if self.eigen is None else self.eigen.b


@dataclass
class BerResult:
    ber: float
    n_bits: int
    errors: float
    error_positions: np.ndarray
    per_channel: dict = field(default_factory=dict)

    @property
    def sd_fec_pass(self) -> bool:
        return self.ber < SD_FEC_LIMIT

    @property
    def hd_fec_pass(self) -> bool:
        return self.ber < HD_FEC_LIMIT


def demux_channel(fld: SampledField, cfg: RxConfig, channel: int) -> SampledField:
    """Downconvert to the nominal carrier, filter and sample at the ADC rate."""
    bb = shift_frequency(fld, -cfg.lo_frequencies[channel])
    bb = apply_filter(bb, cfg.optical_filter.at(0.0))
    return resample(bb, cfg.adc_rate)


def truncate_window(
    fld: SampledField,
    window_index: int,
    plan: FramePlan,
    channel: int,
    delay: float = 0.0,
) -> SampledField:
    """One repetition period centered on the channel's nominal pulse.

    The burst is treated as periodic.  ``delay`` is the channel's nominal
    group delay (ps), and the returned time axis is relative to the pulse
    center.
    """
    n_windows = int(round(fld.duration / plan.window))
    if not 0 <= window_index < n_windows:
        raise IndexError(f"window {window_index} outside burst of {n_windows} windows")
    n_w = int(round(plan.window / fld.dt))
    center = window_index * plan.window + plan.slot_time(channel) + delay
    first = center - plan.window / 2
    i0 = int(round((first - fld.t_start) / fld.dt))
    idx = (i0 + np.arange(n_w)) % fld.n
    t0 = fld.t_start + i0 * fld.dt - center
    return SampledField(fld.samples[idx], t0, fld.dt, {"channel": channel, "window": window_index})


def normalize_window(fld: SampledField, scales: NormScales, power_ref: Optional[float] = None) -> SampledField:
    """Dimensionless window; ``power_ref`` (W) replaces P0 as the power unit."""
    p = scales.P0 if power_ref is None else power_ref
    return SampledField(fld.samples / math.sqrt(p), fld.t_start / scales.T0, fld.dt / scales.T0, dict(fld.meta))


def detect_symbol(
    fld: SampledField,
    tx_lambda: complex,
    scales: NormScales,
    tx_a_prime: Optional[complex] = None,
    phase_offset: float = 0.0,
    channel: int = 0,
    window_index: int = 0,
    power_ref: Optional[float] = None,
) -> RxSymbol:
    """NFT detection of one truncated window given in physical units.

    The eigenvalue nearest the transmitted one is refined by Newton's method;
    when none converges the symbol is an erasure.
    """
    if tx_a_prime is None:
        tx_a_prime = 1 / (2j * tx_lambda.imag)
    q = normalize_window(fld, scales, power_ref)
    eig = None
    for seed in (tx_lambda, tx_lambda + 0.1j, tx_lambda - 0.2j):
        try:
            eig = refine_eigenvalue(q, seed)
        except NumericalRangeError:
            eig = None
        if eig is not None and eig.lam.imag > 0.02 and abs(eig.lam - tx_lambda) < 1.0:
            break
        eig = None
    if eig is None:
        return RxSymbol(channel, window_index, None, ZERO_FEATURE, (ERASED, ERASED))
    dap = tx_a_prime - eig.a_prime
    dl = tx_lambda - eig.lam
    feat = FeatureVector(dap.real, dap.imag, dl.real, dl.imag, eig.b.real, eig.b.imag)
    bits = tuple(int(x) for x in qpsk_demap(eig.b * np.exp(-1j * phase_offset)))
    return RxSymbol(channel, window_index, eig, feat, bits)


def estimate_phase_offset(b_rx: np.ndarray, b_tx: np.ndarray) -> float:
    """Constant rotation aligning received to transmitted b (least squares)."""
    b_rx = np.asarray(b_rx)
    ok = np.isfinite(b_rx)
    if not ok.any():
        return 0.0
    r = b_rx[ok] / np.abs(b_rx[ok]) * np.conj(np.asarray(b_tx)[ok])
    return float(np.angle(r.sum()))


def decide(b: np.ndarray, phase_offset: float = 0.0) -> np.ndarray:
    """QPSK bits of (possibly corrected) b; non-finite entries become erasures."""
    b = np.asarray(b, dtype=complex)
    bits = qpsk_demap(np.where(np.isfinite(b), b, 1) * np.exp(-1j * phase_offset)).reshape(-1, 2).astype(int)
    bits[~np.isfinite(b)] = ERASED
    return bits.ravel()


def ber_count(decided, reference, channels: Optional[Sequence[int]] = None) -> BerResult:
    """Bit error ratio; an erased bit (``ERASED``) counts as half an error.

    ``channels`` (one entry per bit) enables the per-channel breakdown.
    """
    d = np.asarray(decided).ravel()
    r = np.asarray(reference).ravel()
    if d.shape != r.shape:
        raise ValueError(f"length mismatch: {d.size} decided vs {r.size} reference bits")
    err = np.where(d == ERASED, 0.5, (d != r).astype(float))
    n = d.size
    res = BerResult(float(err.sum() / n) if n else 0.0, n, float(err.sum()), np.flatnonzero(err))
    if channels is not None:
        ch = np.asarray(channels).ravel()
        if ch.shape != d.shape:
            raise ValueError("one channel label per bit required")
        for c in np.unique(ch):
            m = ch == c
            res.per_channel[int(c)] = float(err[m].mean())
    return res


def write_symbols_csv(path, symbols: Sequence[RxSymbol], reference_bits: dict):
    """Per-symbol records; ``reference_bits[(channel, window)]`` is the sent pair."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SYMBOL_CSV_COLUMNS)
        for s in sorted(symbols, key=lambda s: (s.channel, s.window_index)):
            e = s.eigen
            vals = [math.nan] * 6 if e is None else [
                e.lam.real, e.lam.imag, e.b.real, e.b.imag, e.a_prime.real, e.a_prime.imag
            ]
            ref = reference_bits[(s.channel, s.window_index)]
            w.writerow(
                [s.channel, s.window_index]
                + [f"{v:.10g}" for v in vals]
                + [s.decided_bits[0], s.decided_bits[1], ref[0], ref[1], int(s.erasure)]
            )
