"""Eigenvalue outcomes of linearly superposed fundamental solitons."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .field import SampledField
from .nft import SearchRegion, find_eigenvalues
from .norm import FWHM_PER_T0
from .pulse import SolitonParams, soliton_waveform

log = logging.getLogger(__name__)

TOL_K = 0.05
TOL_IM = 0.05
IM_MIN = 0.02
SAMPLES_PER_T0 = 64
QPSK_DEG = (45.0, 135.0, -135.0, -45.0)
LABELS = ("merging", "fusion", "copropagation", "mixed")


@dataclass(frozen=True)
class SuperpositionCase:
    """Pulses ``i`` at eigenvalue ``lambdas[i]``, centered at ``i * delta_T`` T_FWHM
    (the group is centered on t = 0), with carrier phase ``i * delta_phi`` at
    its center unless explicit ``phases`` (degrees) are given."""

    lambdas: tuple
    delta_T: float
    delta_phi: float = 0.0
    phases: Optional[tuple] = None

    def __post_init__(self):
        if len(self.lambdas) < 1:
            raise ValueError("at least one pulse required")
        if any(abs(complex(l).imag - 0.5) > 1e-12 for l in self.lambdas):
            raise ValueError("input eigenvalues must have imaginary part 0.5")
        if self.delta_T < 0:
            raise ValueError("delta_T must be non-negative")
        if self.phases is not None and len(self.phases) != len(self.lambdas):
            raise ValueError("one phase per pulse required")

    @classmethod
    def uniform(cls, n: int, delta_k: float, delta_T: float, delta_phi: float = 0.0, phases=None):
        re = [(i - (n - 1) / 2) * delta_k for i in range(n)]
        return cls(tuple(complex(r, 0.5) for r in re), delta_T, delta_phi,
                   None if phases is None else tuple(phases))

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def delta_k(self) -> float:
        re = sorted(complex(l).real for l in self.lambdas)
        return float(np.mean(np.diff(re))) if len(re) > 1 else 0.0

    def centers(self) -> np.ndarray:
        step = self.delta_T * FWHM_PER_T0
        return (np.arange(self.n) - (self.n - 1) / 2) * step

    def pulse_phases(self) -> np.ndarray:
        deg = np.arange(self.n) * self.delta_phi if self.phases is None else np.asarray(self.phases, float)
        return np.deg2rad(deg)


@dataclass
class OutcomeLabel:
    kind: str
    post_eigenvalues: list
    continuum_energy_fraction: float
    diagnostics: list = field(default_factory=list)


def default_grid(case: SuperpositionCase) -> tuple:
    """(t_start, dt, n): 64 samples per T0 over six times the pulse extent."""
    c = case.centers()
    extent = (c.max() - c.min()) + 2 * FWHM_PER_T0
    half = max(3 * extent, (c.max() - c.min()) / 2 + 16.0)
    dt = 1.0 / SAMPLES_PER_T0
    n = int(math.ceil(2 * half / dt)) + 1
    return (-half, dt, n)


def superpose(case: SuperpositionCase, grid=None) -> SampledField:
    if grid is None:
        grid = default_grid(case)
    t_start, dt, n = (grid.t_start, grid.dt, grid.n) if isinstance(grid, SampledField) else grid
    t = t_start + dt * np.arange(n)
    q = np.zeros(n, dtype=complex)
    for lam, tc, ph in zip(case.lambdas, case.centers(), case.pulse_phases()):
        lam = complex(lam)
        edge = min(tc - t[0], t[-1] - tc)
        if edge < 0 or 1 / math.cosh(min(2 * lam.imag * edge, 700)) > 1e-6:
            raise ValueError("grid does not cover every pulse down to 1e-6 of its peak")
        # phase ph at the pulse center: theta = pi - arg b
        p = SolitonParams(lam, -np.exp(-1j * ph), float(tc))
        q += soliton_waveform(p, t)
    return SampledField(q, t_start, dt)


def analysis_region(case: SuperpositionCase, q: SampledField, im_min: float = IM_MIN) -> SearchRegion:
    re = [complex(l).real for l in case.lambdas]
    return SearchRegion(min(re) - 1.0, max(re) + 1.0, im_min, q.energy() / 4 + 0.1)


def post_eigenvalues(case: SuperpositionCase, grid=None, im_min: float = IM_MIN):
    q = superpose(case, grid)
    spec = find_eigenvalues(q, seeds=[complex(l) for l in case.lambdas],
                            search_region=analysis_region(case, q, im_min))
    eigs = [d.lam for d in spec.discrete if d.lam.imag > im_min]
    diag = []
    if spec.expected_count is not None and spec.expected_count != len(eigs):
        diag.append(f"argument principle counts {spec.expected_count}, found {len(eigs)}")
    E = q.energy()
    frac = max(0.0, min(1.0, 1 - 4 * sum(l.imag for l in eigs) / E)) if E > 0 else 0.0
    return sorted(eigs, key=lambda l: (l.real, l.imag)), frac, diag


def distinct_real_count(eigs, tol_k: float = TOL_K) -> int:
    """Number of groups of eigenvalues whose real parts differ by more than ``tol_k``."""
    re = np.sort([l.real for l in eigs])
    return 0 if re.size == 0 else 1 + int(np.sum(np.diff(re) > tol_k))


def label_eigenvalues(eigs, n_inputs: int, tol_k: float = TOL_K, tol_im: float = TOL_IM, im0: float = 0.5) -> str:
    if not eigs:
        return "mixed"
    re = np.array([l.real for l in eigs])
    im = np.array([l.imag for l in eigs])
    if len(eigs) < n_inputs:
        if len(eigs) == 1 and im[0] > im0 + tol_im:
            return "fusion"
        return "mixed"
    if len(eigs) > n_inputs:
        return "mixed"
    if n_inputs == 1:
        return "merging"
    same_im = np.ptp(im) <= tol_im
    distinct_re = np.min(np.diff(np.sort(re))) > tol_k
    same_re = np.ptp(re) <= tol_k
    distinct_im = np.min(np.diff(np.sort(im))) > tol_im
    if same_im and distinct_re:
        return "merging"
    if same_re and distinct_im:
        return "copropagation"
    return "mixed"


def classify_outcome(case: SuperpositionCase, tol_k: float = TOL_K, tol_im: float = TOL_IM,
                     im_min: float = IM_MIN, grid=None) -> OutcomeLabel:
    try:
        eigs, frac, diag = post_eigenvalues(case, grid, im_min)
    except (ArithmeticError, ValueError) as exc:
        return OutcomeLabel("mixed", [], float("nan"), [f"eigenvalue search failed: {exc}"])
    kind = label_eigenvalues(eigs, case.n, tol_k, tol_im)
    if diag:
        kind = "mixed"
    return OutcomeLabel(kind, eigs, frac, diag)


def sweep_two(delta_k: Sequence[float], delta_T: Sequence[float], delta_phi: Sequence[float], **kw):
    """Labels on the (delta_k, delta_T, delta_phi) grid plus one row per point."""
    labels = np.empty((len(delta_k), len(delta_T), len(delta_phi)), dtype=object)
    rows = []
    for (i, dk), (j, dT), (m, dp) in itertools.product(enumerate(delta_k), enumerate(delta_T), enumerate(delta_phi)):
        out = classify_outcome(SuperpositionCase.uniform(2, dk, dT, dp), **kw)
        labels[i, j, m] = out.kind
        rows.append({"delta_k": dk, "delta_T": dT, "delta_phi": dp, "label": out.kind,
                     "n_eig": len(out.post_eigenvalues), "continuum_fraction": out.continuum_energy_fraction,
                     "eigenvalues": out.post_eigenvalues})
    return labels, rows


def qpsk_phase_combinations(n: int = 4):
    return list(itertools.product(QPSK_DEG, repeat=n))


def sweep_four(delta_T: Iterable[float], phases="zero", delta_k: float = 1.2) -> list:
    """Post-superposition eigenvalues of four pulses for each delta_T.

    ``phases`` is ``"zero"`` (all in phase), ``"qpsk"`` (all 256 combinations)
    or an explicit list of per-pulse phase tuples in degrees.
    """
    if phases == "zero":
        combos = [(0.0,) * 4]
    elif phases == "qpsk":
        combos = qpsk_phase_combinations(4)
    else:
        combos = [tuple(p) for p in phases]
    rows = []
    for dT in delta_T:
        for ph in combos:
            case = SuperpositionCase.uniform(4, delta_k, float(dT), phases=ph)
            try:
                eigs, frac, diag = post_eigenvalues(case)
            except (ArithmeticError, ValueError) as exc:
                eigs, frac, diag = [], float("nan"), [str(exc)]
            rows.append({"delta_T": float(dT), "phases": ph, "n_eig": len(eigs),
                         "n_re": distinct_real_count(eigs),
                         "continuum_fraction": frac, "eigenvalues": eigs, "diagnostics": diag})
    return rows


def count_transitions(rows: list, key: str = "n_re") -> dict:
    """delta_T midpoints where ``key`` (a count column) changes, keyed by (before, after)."""
    rows = sorted(rows, key=lambda r: r["delta_T"])
    out = {}
    for a, b in zip(rows, rows[1:]):
        if a[key] != b[key]:
            out.setdefault((a[key], b[key]), []).append(0.5 * (a["delta_T"] + b["delta_T"]))
    return out


def eigen_histogram(rows: list, re_edges, im_edges) -> np.ndarray:
    lam = np.array([l for r in rows for l in r["eigenvalues"]], dtype=complex)
    h, _, _ = np.histogram2d(lam.real, lam.imag, bins=[re_edges, im_edges])
    return h


def _fmt_eigs(eigs) -> str:
    return " ".join(f"{l.real:.8f}{l.imag:+.8f}j" for l in eigs)


TWO_CSV_COLUMNS = ("delta_k", "delta_T", "delta_phi", "label", "n_eig", "continuum_fraction", "eigenvalues")
FOUR_CSV_COLUMNS = ("delta_T", "phi0", "phi1", "phi2", "phi3", "n_eig", "continuum_fraction", "eigenvalues")


def write_two_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TWO_CSV_COLUMNS)
        for r in rows:
            w.writerow([f"{r['delta_k']:.6g}", f"{r['delta_T']:.6g}", f"{r['delta_phi']:.6g}", r["label"],
                        r["n_eig"], f"{r['continuum_fraction']:.6g}", _fmt_eigs(r["eigenvalues"])])


def write_four_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FOUR_CSV_COLUMNS)
        for r in rows:
            w.writerow([f"{r['delta_T']:.6g}"] + [f"{p:g}" for p in r["phases"]]
                       + [r["n_eig"], f"{r['continuum_fraction']:.6g}", _fmt_eigs(r["eigenvalues"])])


def bisect_transition(lo: float, hi: float, delta_k: float = 1.2, phases=(0.0,) * 4, tol: float = 1e-3,
                      im_min: float = IM_MIN, distinct_re: bool = True) -> float:
    """delta_T inside [lo, hi] where the four-pulse eigenvalue count changes.

    With ``distinct_re`` eigenvalues sharing a real part (within tol_k) count once.
    """

    def count(dT):
        eigs = post_eigenvalues(SuperpositionCase.uniform(4, delta_k, dT, phases=phases), im_min=im_min)[0]
        return distinct_real_count(eigs) if distinct_re else len(eigs)

    n_lo, n_hi = count(lo), count(hi)
    if n_lo == n_hi:
        raise ValueError(f"no count change between {lo} and {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count(mid) == n_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
