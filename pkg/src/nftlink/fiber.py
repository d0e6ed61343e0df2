"""Split-step propagation over amplified spans and collision kinematics.

The envelope follows the engineering phasor convention E = Re{A exp(+j w0 t)},
so a positive baseband offset is a higher optical frequency.  In that
convention the scalar NLSE with loss reads

    dA/dz = -alpha/2 A + j beta2/2 d2A/dt2 - j gamma |A|^2 A

and, with beta2 < 0, higher-frequency channels arrive earlier.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .field import SampledField
from .norm import FiberParams, NormScales, beta2_from_D, w_to_dbm
from .pulse import FramePlan
from .txchain import EdfaModel, FilterSpec, apply_filter, edfa, shift_frequency

log = logging.getLogger(__name__)


class CoarseStepWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class StepControl:
    mode: str = "fixed"
    step_km: float = 0.1
    max_phase: float = 0.05

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError("step mode must be 'fixed' or 'adaptive'")
        if self.step_km <= 0 or self.max_phase <= 0:
            raise ValueError("step size and phase bound must be positive")


@dataclass(frozen=True)
class LinkConfig:
    fiber: FiberParams = FiberParams()
    n_spans: int = 0
    span_amp: EdfaModel = EdfaModel(nf_db=5.0)
    launch_power_dbm: Optional[float] = None
    step_control: StepControl = StepControl()
    noise: bool = True

    def __post_init__(self):
        if self.n_spans < 0:
            raise ValueError("n_spans must be >= 0")
        if self.launch_power_dbm is not None and not np.isfinite(self.launch_power_dbm):
            raise ValueError("launch power must be finite")


@dataclass
class CollisionMap:
    pairs: dict = field(default_factory=dict)
    complete: list = field(default_factory=list)
    degenerate: bool = False


def ssfm_span(
    fld: SampledField,
    fiber: FiberParams,
    step_control: StepControl = StepControl(),
    length_km: Optional[float] = None,
    beta2: Optional[float] = None,
) -> SampledField:
    """Symmetric split-step solution of the lossy NLSE over one span."""
    L = fiber.span_length if length_km is None else length_km
    b2 = beta2_from_D(fiber) if beta2 is None else beta2
    gamma = fiber.kerr_gamma
    alpha = fiber.alpha_np
    w = 2 * np.pi * np.fft.fftfreq(fld.n, fld.dt)
    A = fld.samples.copy()
    if L == 0:
        return fld

    def leff(h):
        return h if alpha == 0 else (1 - math.exp(-alpha * h)) / alpha

    if step_control.mode == "fixed":
        n_steps = max(1, math.ceil(L / step_control.step_km - 1e-9))
        h = L / n_steps
        half = np.exp(-0.5j * b2 * w**2 * (h / 2))
        full = half * half
        decay = math.exp(-alpha * h / 2)
        Le = leff(h)
        worst = 0.0
        Af = sfft.fft(A) * half
        for i in range(n_steps):
            A = sfft.ifft(Af)
            P = A.real**2 + A.imag**2
            worst = max(worst, gamma * float(P.max()) * Le)
            A = A * np.exp(-1j * gamma * Le * P) * decay
            Af = sfft.fft(A)
            Af *= half if i == n_steps - 1 else full
            if i % 64 == 0 and not np.all(np.isfinite(Af)):
                raise FloatingPointError("NaN/Inf during split-step propagation")
        A = sfft.ifft(Af)
        if worst > step_control.max_phase:
            warnings.warn(
                f"nonlinear phase per step {worst:.3g} rad exceeds {step_control.max_phase} rad",
                CoarseStepWarning,
                stacklevel=2,
            )
    else:
        z = 0.0
        while z < L - 1e-12:
            P = np.abs(A) ** 2
            pmax = float(P.max())
            h = step_control.step_km
            if gamma * pmax > 0:
                h = min(h, step_control.max_phase / (gamma * pmax))
            h = min(h, L - z)
            half = np.exp(-0.5j * b2 * w**2 * (h / 2))
            A = sfft.ifft(sfft.fft(A) * half)
            P = np.abs(A) ** 2
            A = A * np.exp(-1j * gamma * leff(h) * P) * math.exp(-alpha * h / 2)
            A = sfft.ifft(sfft.fft(A) * half)
            z += h
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("NaN/Inf during split-step propagation")
    return fld.replace(samples=A)


def propagate_link(
    fld: SampledField,
    cfg: LinkConfig,
    rng: Optional[np.random.Generator] = None,
    sink=None,
    keep_taps: bool = True,
) -> list:
    """Alternate span propagation and loss-compensating amplification.

    Returns ``[launch, after span 1, ..., after span N]``; ``sink`` (if given)
    is called as ``sink(span_index, field)`` for every tap.  With
    ``keep_taps=False`` only the launch and final fields are kept.
    """
    if cfg.launch_power_dbm is not None:
        p = w_to_dbm(fld.mean_power())
        if abs(p - cfg.launch_power_dbm) > 0.01:
            raise ValueError(
                f"field average power {p:.3f} dBm differs from launch power "
                f"{cfg.launch_power_dbm:.3f} dBm"
            )
    if cfg.noise and rng is None and cfg.n_spans > 0:
        raise ValueError("a random generator is required for noisy amplification")
    gain_db = cfg.fiber.attenuation_alpha * cfg.fiber.span_length
    amp = EdfaModel(gain_db=gain_db, nf_db=cfg.span_amp.nf_db, center_frequency=cfg.span_amp.center_frequency)
    taps = [fld]
    if sink is not None:
        sink(0, fld)
    cur = fld
    for k in range(1, cfg.n_spans + 1):
        cur = ssfm_span(cur, cfg.fiber, cfg.step_control)
        if cfg.noise:
            cur = edfa(cur, amp, rng)
        else:
            cur = cur.replace(samples=cur.samples * 10 ** (gain_db / 20))
        cur = cur.replace(span_index=k)
        if keep_taps or k == cfg.n_spans:
            taps.append(cur)
        if sink is not None:
            sink(k, cur)
    return taps


def path_average_factor(fiber: FiberParams) -> float:
    """alpha L / (1 - exp(-alpha L)); tends to 1 for a lossless fiber."""
    aL = fiber.alpha_np * fiber.span_length
    if aL < 1e-12:
        return 1.0
    return aL / (1 - math.exp(-aL))


def launch_power_for_soliton(plan: FramePlan, scales: NormScales, fiber: FiberParams) -> float:
    """Average launch power (dBm) of one window of fundamental solitons."""
    energy = plan.n_channels * 2 * scales.P0 * scales.T0  # W ps
    p_avg = energy / plan.window * path_average_factor(fiber)
    return w_to_dbm(p_avg)


def walkoff_rates(plan: FramePlan, fiber: FiberParams) -> np.ndarray:
    """Group-delay slope of each channel relative to band center, ps/km."""
    b2 = beta2_from_D(fiber)
    f_thz = np.array([plan.carrier(k) for k in range(plan.n_channels)]) * 1e-3
    return b2 * 2 * np.pi * f_thz


def _circular_spread(x: np.ndarray, period: float) -> np.ndarray:
    """Length of the shortest arc holding all points; x has shape (n_z, n_ch)."""
    s = np.sort(np.mod(x, period), axis=1)
    gaps = np.diff(s, axis=1)
    wrap = period - (s[:, -1] - s[:, 0])
    biggest = np.maximum(gaps.max(axis=1) if gaps.shape[1] else 0.0, wrap)
    return period - biggest


def collisions_from_positions(
    z: np.ndarray, x: np.ndarray, period: float, t_fwhm: float
) -> CollisionMap:
    """Pair and complete collisions from unwrapped positions ``x[z, channel]``."""
    n_ch = x.shape[1]
    cmap = CollisionMap()
    for i in range(n_ch):
        for j in range(i + 1, n_ch):
            d = (x[:, j] - x[:, i]) / period
            hits = []
            k = np.floor(d)
            for s in np.flatnonzero(k[1:] != k[:-1]):
                level = max(k[s], k[s + 1])
                z_hit = z[s] + (level - d[s]) / (d[s + 1] - d[s]) * (z[s + 1] - z[s])
                if z_hit > 0:
                    hits.append(float(z_hit))
            if hits:
                cmap.pairs[(i, j)] = sorted(hits)
    if n_ch > 1:
        spread = _circular_spread(x, period)
        inside = spread < t_fwhm
        edges = np.flatnonzero(np.diff(inside.astype(int)))
        starts = list(np.flatnonzero(inside[:1])) + [e + 1 for e in edges if not inside[e]]
        for s0 in starts:
            s1 = s0
            while s1 + 1 < len(inside) and inside[s1 + 1]:
                s1 += 1
            seg = slice(s0, s1 + 1)
            best = s0 + int(np.argmin(spread[seg]))
            if z[best] > 0:
                cmap.complete.append(float(z[best]))
    return cmap


def collision_map(
    plan: FramePlan,
    fiber: FiberParams,
    max_distance: float,
    t_fwhm: float = 67.0,
    resolution: float = 0.25,
) -> CollisionMap:
    """Kinematic collision prediction from linear group-velocity walk-off."""
    v = walkoff_rates(plan, fiber)
    z = np.arange(0.0, max_distance + resolution / 2, resolution)
    x0 = np.array([plan.slot_time(k) for k in range(plan.n_channels)])
    x = x0[None, :] + z[:, None] * v[None, :]
    cmap = collisions_from_positions(z, x, plan.window, t_fwhm)
    first = min((h[0] for h in cmap.pairs.values()), default=None)
    if first is not None and first < resolution * 2:
        cmap.degenerate = True
        log.warning("collision distance below the %.3g km resolution; walk-off degenerate", resolution)
    return cmap


def channel_peak_positions(
    fld: SampledField,
    plan: FramePlan,
    rx_filter: FilterSpec = FilterSpec("gaussian", 1, 7.0),
) -> np.ndarray:
    """Per-channel pulse position (ps, modulo the window) of a periodic burst."""
    n_win = int(round(fld.duration / plan.window))
    spw = fld.n // n_win
    if spw * n_win != fld.n:
        raise ValueError("burst must hold an integer number of samples per window")
    out = np.empty(plan.n_channels)
    for k in range(plan.n_channels):
        bb = apply_filter(shift_frequency(fld, -plan.carrier(k)), rx_filter)
        prof = bb.power.reshape(n_win, spw).sum(axis=0)
        i = int(np.argmax(prof))
        y0, y1, y2 = prof[i - 1], prof[i], prof[(i + 1) % spw]
        den = y0 - 2 * y1 + y2
        frac = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        out[k] = (fld.t_start + (i + frac) * fld.dt) % plan.window
    return out


def track_collisions(
    taps: list,
    distances: np.ndarray,
    plan: FramePlan,
    t_fwhm: float = 67.0,
    resolution: float = 0.25,
) -> tuple[CollisionMap, np.ndarray]:
    """Collision map measured from split-step taps by peak tracking."""
    pos = np.array([channel_peak_positions(f, plan) for f in taps])
    pos = np.unwrap(pos, axis=0, period=plan.window)
    z = np.arange(distances[0], distances[-1] + resolution / 2, resolution)
    x = np.column_stack([np.interp(z, distances, pos[:, k]) for k in range(plan.n_channels)])
    return collisions_from_positions(z, x, plan.window, t_fwhm), pos
