"""Forward nonlinear Fourier transform of sampled, dimensionless signals.

Sign conventions (see ``_zs_kernel``): a(lam) -> 1 far from the signal, the
discrete eigenvalues are the zeros of a in the upper half plane, and a
carrier exp(j w t) appears at Re(lam) = -w/2.  In the low-power limit
q_hat(xi) ~ -conj(Q(-2 xi)) with Q(w) = int q(t) exp(-j w t) dt.

The signal is taken to be zero outside the sampled interval.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _zs_kernel
from .field import SampledField

log = logging.getLogger(__name__)

TOL_A = 1e-8
MAX_NEWTON = 50
MERGE_RADIUS = 1e-6
DEFAULT_GRID = (41, 21)

_SQ3 = np.sqrt(3.0)
_C1, _C2 = 0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6
_A1, _A2 = 0.25 + _SQ3 / 6, 0.25 - _SQ3 / 6


class NumericalRangeError(ArithmeticError):
    """Exponential factors of the scattering solution left the float range."""


@dataclass(frozen=True)
class DiscreteEigen:
    lam: complex
    b: complex
    a_prime: complex

    @property
    def q_tilde(self) -> complex:
        return self.b / self.a_prime

    @property
    def amplitude(self) -> float:
        return 2 * self.lam.imag

    @property
    def timing(self) -> float:
        """Envelope center of an isolated fundamental soliton, log|q~| / (2 Im lam)."""
        return float(np.log(abs(self.q_tilde)) / (2 * self.lam.imag))


@dataclass(frozen=True)
class ContinuousSpectrum:
    xi_grid: np.ndarray
    q_hat: np.ndarray

    def __post_init__(self):
        if self.xi_grid.size > 1 and np.any(np.diff(self.xi_grid) <= 0):
            raise ValueError("xi_grid must be strictly increasing")


@dataclass
class NftSpectrum:
    discrete: list
    continuous: Optional[ContinuousSpectrum] = None
    failed_seeds: list = field(default_factory=list)
    expected_count: Optional[int] = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([d.lam for d in self.discrete], dtype=complex)


@dataclass(frozen=True)
class SearchRegion:
    """Axis-aligned rectangle of the upper half plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def contains(self, lam: complex, pad: float = 0.0) -> bool:
        return (
            self.re_min - pad <= lam.real <= self.re_max + pad
            and self.im_min - pad <= lam.imag <= self.im_max + pad
        )


class _Prepared:
    """Gauss-point potentials for one signal, reused across many lambdas."""

    def __init__(self, q: SampledField):
        x = q.samples
        if not np.all(np.isfinite(x)):
            raise ValueError("signal contains non-finite samples")
        n = x.size
        # cubic Lagrange interpolation on (n-1, n, n+1, n+2), zero outside the record
        padded = np.concatenate(([0], x, [0, 0]))
        p0, p1, p2, p3 = padded[:-3], padded[1:-2], padded[2:-1], padded[3:]
        p0, p1, p2, p3 = p0[: n - 1], p1[: n - 1], p2[: n - 1], p3[: n - 1]

        def lagrange(u):
            return (
                p0 * (-u * (u - 1) * (u - 2) / 6)
                + p1 * ((u + 1) * (u - 1) * (u - 2) / 2)
                + p2 * (-(u + 1) * u * (u - 2) / 2)
                + p3 * ((u + 1) * u * (u - 1) / 6)
            )

        g1, g2 = lagrange(_C1), lagrange(_C2)
        self.qa = np.ascontiguousarray(2 * (_A1 * g1 + _A2 * g2), dtype=np.complex128)
        self.qb = np.ascontiguousarray(2 * (_A2 * g1 + _A1 * g2), dtype=np.complex128)
        self.h = float(q.dt)
        t = q.t
        self.t_first = float(t[0])
        self.t_last = float(t[-1])
        p = np.abs(x) ** 2
        if p.sum() > 0:
            centroid = float(np.sum(t * p) / p.sum())
            self.m = int(np.clip(round((centroid - t[0]) / q.dt), 0, n - 1))
        else:
            self.m = n // 2
        self.energy = float(np.trapezoid(p, dx=q.dt))

    def full(self, lams) -> np.ndarray:
        lams = np.ascontiguousarray(np.atleast_1d(lams), dtype=np.complex128)
        return _zs_kernel.scatter_many(
            self.qa, self.qb, self.h, self.t_first, self.t_last, self.m, lams
        )

    def a(self, lams) -> np.ndarray:
        lams = np.ascontiguousarray(np.atleast_1d(lams), dtype=np.complex128)
        return _zs_kernel.a_many(self.qa, self.qb, self.h, self.t_first, self.t_last, self.m, lams)


def _prepared(q) -> _Prepared:
    return q if isinstance(q, _Prepared) else _Prepared(q)


def scatter_coeffs(q: SampledField, lam: complex) -> tuple[complex, complex, complex]:
    """Return ``(a, b, a_prime)`` at a single point of the closed upper half plane.

    On the real axis b is the full scattering coefficient.  Above it, b is the
    forward-backward ratio of the Jost solutions, which equals b(lam) at a
    discrete eigenvalue and is what the receiver detects.
    """
    if lam.imag < 0:
        raise ValueError("lambda must lie in the closed upper half plane")
    row = _prepared(q).full([lam])[0]
    _check_status(row, lam)
    b = row[3] if lam.imag < 1e-12 else row[2]
    return complex(row[0]), complex(b), complex(row[1])


def _check_status(row, lam):
    status = int(row[5].real)
    if status == 1:
        raise NumericalRangeError(f"overflow evaluating a({lam})")
    if status == 2 and lam.imag > 0:
        raise NumericalRangeError(f"overflow evaluating b({lam})")


def _newton(prep: _Prepared, seed: complex, tol_a=TOL_A, max_iter=MAX_NEWTON):
    lam = complex(seed)
    for _ in range(max_iter):
        row = prep.full([lam])[0]
        a, ap = row[0], row[1]
        if not (np.isfinite(a) and np.isfinite(ap)) or int(row[5].real) == 1:
            return None
        if abs(a) < tol_a:
            return lam, row
        if ap == 0:
            return None
        step = a / ap
        # damp very long steps, they usually jump across the real axis
        if abs(step) > 0.5:
            step *= 0.5 / abs(step)
        lam = lam - step
        if lam.imag <= 0:
            lam = complex(lam.real, 1e-3)
    row = prep.full([lam])[0]
    if abs(row[0]) < tol_a:
        return lam, row
    return None


def refine_eigenvalue(q, seed: complex, tol_a=TOL_A) -> Optional[DiscreteEigen]:
    """Newton iteration on a(lam) from one seed; None if it does not converge."""
    prep = _prepared(q)
    res = _newton(prep, seed, tol_a)
    if res is None:
        return None
    lam, row = res
    if lam.imag <= 0:
        return None
    return DiscreteEigen(lam=complex(lam), b=complex(row[2]), a_prime=complex(row[1]))


def count_zeros(q, region: SearchRegion, n_init: int = 256, max_points: int = 40000) -> int:
    """Number of zeros of a(lam) inside ``region`` by the argument principle.

    The contour is refined until no phase increment between consecutive
    points exceeds pi/4.
    """
    prep = _prepared(q)
    corners = [
        complex(region.re_min, region.im_min),
        complex(region.re_max, region.im_min),
        complex(region.re_max, region.im_max),
        complex(region.re_min, region.im_max),
    ]
    w = region.re_max - region.re_min
    hgt = region.im_max - region.im_min
    per = 2 * (w + hgt)
    pts = []
    for k in range(4):
        z0, z1 = corners[k], corners[(k + 1) % 4]
        length = abs(z1 - z0)
        nk = max(8, int(n_init * length / per))
        pts.append(z0 + (z1 - z0) * np.arange(nk) / nk)
    z = np.concatenate(pts)
    z = np.append(z, z[0])
    a = prep.a(z)
    while True:
        if not np.all(np.isfinite(a)):
            raise NumericalRangeError("overflow on the counting contour")
        dphi = np.angle(a[1:] / a[:-1])
        bad = np.flatnonzero(np.abs(dphi) > np.pi / 4)
        if bad.size == 0 or z.size > max_points:
            break
        mid = 0.5 * (z[bad] + z[bad + 1])
        amid = prep.a(mid)
        z = np.insert(z, bad + 1, mid)
        a = np.insert(a, bad + 1, amid)
    if z.size > max_points:
        log.warning("argument-principle contour hit the point budget; count may be unreliable")
    return int(round(np.sum(dphi) / (2 * np.pi)))


def _grid_seeds(prep: _Prepared, region: SearchRegion, nre: int, nim: int) -> list:
    re = np.linspace(region.re_min, region.re_max, nre)
    im = np.linspace(region.im_min, region.im_max, nim)
    R, I = np.meshgrid(re, im, indexing="ij")
    lams = (R + 1j * I).ravel()
    mag = np.abs(prep.a(lams)).reshape(R.shape)
    padded = np.pad(mag, 1, constant_values=np.inf)
    is_min = np.ones_like(mag, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = padded[1 + di : 1 + di + nre, 1 + dj : 1 + dj + nim]
            is_min &= mag <= shifted
    idx = np.argwhere(is_min)
    order = np.argsort(mag[is_min])
    return [complex(R[i, j], I[i, j]) for i, j in idx[order]]


def _merge(found: list, radius=MERGE_RADIUS) -> list:
    out = []
    for d in found:
        if all(abs(d.lam - o.lam) > radius for o in out):
            out.append(d)
    return out


def canonical_sort(eigs: list) -> list:
    return sorted(eigs, key=lambda d: (round(d.lam.real, 9), d.lam.imag))


def find_eigenvalues(
    q,
    seeds: Sequence[complex] = (),
    search_region: Optional[SearchRegion] = None,
    grid: tuple[int, int] = DEFAULT_GRID,
    tol_a: float = TOL_A,
    max_refine: int = 3,
) -> NftSpectrum:
    """Discrete eigenvalues from Newton seeds and, optionally, a region scan.

    With a region, the grid local minima of |a| are refined and the result is
    checked against the argument-principle count; the grid is densified up to
    ``max_refine`` times while eigenvalues are missing.
    """
    prep = _prepared(q)
    found, failed = [], []
    if prep.energy == 0:
        return NftSpectrum([], failed_seeds=list(seeds), expected_count=0)
    for s in seeds:
        d = refine_eigenvalue(prep, s, tol_a)
        if d is None:
            failed.append(complex(s))
        else:
            found.append(d)
    found = _merge(found)
    expected = None
    if search_region is not None:
        expected = count_zeros(prep, search_region)
        nre, nim = grid
        for attempt in range(max_refine + 1):
            inside = [d for d in found if search_region.contains(d.lam)]
            if len(inside) >= expected:
                break
            for s in _grid_seeds(prep, search_region, nre, nim):
                if any(abs(s - d.lam) < 1e-3 for d in found):
                    continue
                d = refine_eigenvalue(prep, s, tol_a)
                if d is not None and search_region.contains(d.lam, pad=1e-9):
                    found = _merge(found + [d])
            inside = [d for d in found if search_region.contains(d.lam)]
            if len(inside) >= expected:
                break
            nre, nim = 2 * nre - 1, 2 * nim - 1
        inside = [d for d in found if search_region.contains(d.lam)]
        if len(inside) != expected:
            log.warning(
                "found %d eigenvalues in region, argument principle counts %d",
                len(inside),
                expected,
            )
    return NftSpectrum(canonical_sort(found), failed_seeds=failed, expected_count=expected)


def default_xi_grid(q: SampledField, n: int = 4001, margin: float = 2.0) -> np.ndarray:
    """Real grid covering the signal's linear bandwidth (xi = -w/2)."""
    spec = np.abs(np.fft.fft(q.samples)) ** 2
    w = 2 * np.pi * np.fft.fftfreq(q.n, q.dt)
    if spec.max() == 0:
        lim = margin
    else:
        lim = 0.5 * np.max(np.abs(w[spec > 1e-14 * spec.max()])) + margin
        lim = min(lim, np.pi / (2 * q.dt))
    return np.linspace(-lim, lim, n)


def continuous_spectrum(q, xi_grid: Optional[np.ndarray] = None) -> ContinuousSpectrum:
    if xi_grid is None:
        xi_grid = default_xi_grid(q)
    xi_grid = np.asarray(xi_grid, dtype=float)
    prep = _prepared(q)
    ab = _zs_kernel.ab_real(prep.qa, prep.qb, prep.h, prep.t_first, prep.t_last,
                            np.ascontiguousarray(xi_grid))
    return ContinuousSpectrum(xi_grid=xi_grid, q_hat=ab[:, 1] / ab[:, 0])


def energy_decomposition(q: SampledField, spectrum: NftSpectrum) -> tuple[float, float, float]:
    """Total, discrete and continuous energy of ``q``.

    E_disc = 4 sum Im(lam); E_cont = (1/pi) int log(1 + |q_hat|^2) dxi.
    """
    E = q.energy()
    E_disc = 4.0 * float(sum(d.lam.imag for d in spectrum.discrete))
    cont = spectrum.continuous
    if cont is None:
        cont = continuous_spectrum(q)
    E_cont = float(np.trapezoid(np.log1p(np.abs(cont.q_hat) ** 2), cont.xi_grid) / np.pi)
    return E, E_disc, E_cont


def nft(q: SampledField, region: Optional[SearchRegion] = None, seeds=(), xi_grid=None) -> NftSpectrum:
    """Convenience wrapper: discrete search plus continuous spectrum."""
    spec = find_eigenvalues(q, seeds=seeds, search_region=region)
    spec.continuous = continuous_spectrum(q, xi_grid)
    return spec


def region_for(q: SampledField, im_min: float = 1e-3, pad: float = 1.0) -> SearchRegion:
    """Rectangle sure to contain every eigenvalue above ``im_min``.

    Im(lam) is bounded by E/4; the real range follows the signal bandwidth.
    """
    spec = np.abs(np.fft.fft(q.samples)) ** 2
    w = 2 * np.pi * np.fft.fftfreq(q.n, q.dt)
    sig = spec > 1e-6 * spec.max()
    xi = -0.5 * w[sig]
    return SearchRegion(
        float(xi.min() - pad), float(xi.max() + pad), im_min, q.energy() / 4 + 0.1
    )
