"""Uniformly sampled complex envelope shared by every stage of the chain."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SampledField:
    """Complex baseband samples on the grid ``t_start + k * dt``.

    The unit system (ps / sqrt(W) or dimensionless) is whatever the caller
    uses consistently within one call chain.
    """

    samples: np.ndarray
    t_start: float
    dt: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("a sampled field needs a 1-D array of at least 2 samples")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("sampled field contains non-finite values")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def t(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n)

    @property
    def duration(self) -> float:
        return self.n * self.dt

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def energy(self) -> float:
        """Integral of |q|^2 as sum * dt (exact for periodic records)."""
        return float(np.sum(self.power) * self.dt)

    def mean_power(self) -> float:
        return float(np.mean(self.power))

    def freqs(self) -> np.ndarray:
        """FFT frequencies (cycles per time unit) in numpy ordering."""
        return np.fft.fftfreq(self.n, self.dt)

    def replace(self, samples=None, t_start=None, dt=None, **meta) -> "SampledField":
        return SampledField(
            self.samples if samples is None else samples,
            self.t_start if t_start is None else t_start,
            self.dt if dt is None else dt,
            {**self.meta, **meta},
        )

    def __len__(self):
        return self.n
