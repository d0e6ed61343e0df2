"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from nftlink.analysis import SuperpositionCase, bisect_transition, classify_outcome, superpose, sweep_four
from nftlink.config import preset_config
from nftlink.eq import mmse_fit, nn_jacobian, nn_predict, zero_nn
from nftlink.experiment import report_csv, run_experiment, transmit
from nftlink.field import SampledField
from nftlink.fiber import collision_map, launch_power_for_soliton, propagate_link, track_collisions
from nftlink.nft import energy_decomposition, find_eigenvalues, nft, region_for
from nftlink.norm import FiberParams, derive_scales
from nftlink.pulse import FramePlan, SolitonParams, delta_k_from_spacing, fundamental_soliton

FIBER = FiberParams()
SCALES = derive_scales(FIBER, 67.0)


def test_criterion_01_satsuma_yajima(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    t = np.arange(-20, 20, 1 / 64)
    for A in (1.0, 1.5, 2.0):
        q = SampledField(A / np.cosh(t) + 0j, t[0], 1 / 64)
        want = [1j * (A - k + 0.5) for k in range(1, int(math.floor(A + 0.5)) + 1) if A - k + 0.5 > 0]
        got = find_eigenvalues(q, search_region=region_for(q, im_min=0.05)).eigenvalues
        if len(got) != len(want):
            worst = math.inf
            break
        worst = max(worst, np.max(np.abs(np.sort_complex(np.array(got)) - np.sort_complex(np.array(want)))))
    dt = time.perf_counter() - t0
    verdict(1, worst < 1e-4 and dt < 10, f"max |lambda - j(A-k+1/2)| = {worst:.2e} (< 1e-4), {dt:.1f} s (< 10 s)")


def test_criterion_02_parseval_on_superpositions(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 5))
        case = SuperpositionCase.uniform(n, float(rng.uniform(0.3, 2.0)), float(rng.uniform(0.2, 2.0)),
                                         phases=tuple(rng.uniform(0, 360, n)))
        q = superpose(case)
        spec = nft(q, region=region_for(q, im_min=1e-3), seeds=list(case.lambdas))
        E, Ed, Ec = energy_decomposition(q, spec)
        worst = max(worst, abs(E - Ed - Ec) / E)
    dt = time.perf_counter() - t0
    verdict(2, worst < 1e-3 and dt < 60, f"max |E - E_disc - E_cont| / E = {worst:.2e} (< 1e-3), {dt:.0f} s (< 60 s)")


def test_criterion_03_round_trip(verdict):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    err_lam = err_b = 0.0
    for _ in range(100):
        b = np.exp(1j * np.deg2rad(rng.choice([45.0, 135.0, -135.0, -45.0])))
        tc = float(rng.uniform(-5, 5))
        q = fundamental_soliton(SolitonParams(0.5j, b, tc), (-30.0, 1 / 64, 3841))
        d = find_eigenvalues(q, seeds=[0.5j]).discrete[0]
        err_lam = max(err_lam, abs(d.lam - 0.5j))
        err_b = max(err_b, abs(np.angle(d.b * np.exp(2j * d.lam * tc) / b)))
    dt = time.perf_counter() - t0
    verdict(3, err_lam < 1e-6 and err_b < 1e-3 and dt < 60,
            f"max lambda error {err_lam:.1e} (< 1e-6), max arg b error {err_b:.1e} rad (< 1e-3), {dt:.0f} s")


def test_criterion_04_four_eigenvalue_transitions(verdict):
    t0 = time.perf_counter()
    found = [bisect_transition(lo, hi) for lo, hi in ((0.05, 0.2), (0.2, 0.4), (0.5, 1.0))]
    dt = time.perf_counter() - t0
    ok = all(abs(f - w) <= 0.02 for f, w in zip(found, (0.135, 0.27, 0.78))) and dt < 600
    verdict(4, ok, "transitions at dT/T_FWHM = " + ", ".join(f"{f:.3f}" for f in found)
            + f" (want 0.135, 0.27, 0.78 +- 0.02), {dt:.0f} s")


@pytest.mark.parametrize("dT", [1.5, 2.0])
def test_criterion_05_qpsk_combinations_stay_put(verdict, dT):
    t0 = time.perf_counter()
    rows = sweep_four([dT], phases="qpsk")
    init = np.array([-1.8, -0.6, 0.6, 1.8]) + 0.5j
    worst = 0.0
    for r in rows:
        eigs = np.array(r["eigenvalues"])
        if len(eigs) != 4:
            worst = math.inf
            break
        worst = max(worst, np.max(np.abs(np.sort_complex(eigs) - init)))
    dt = time.perf_counter() - t0
    verdict(5, len(rows) == 256 and worst <= 0.05 and dt < 1800,
            f"dT/T_FWHM = {dT}: {len(rows)} combinations, max eigenvalue shift {worst:.4f} (<= 0.05), {dt:.0f} s")


def test_criterion_06_merging_onset(verdict):
    t0 = time.perf_counter()
    phases = np.arange(0.0, 360.0, 30.0)
    onset = None
    for dk in np.round(np.arange(0.5, 2.501, 0.05), 2):
        if all(classify_outcome(SuperpositionCase.uniform(2, dk, 0.6, p)).kind == "merging" for p in phases):
            onset = float(dk)
            break
    dt = time.perf_counter() - t0
    ok = onset is not None and abs(onset - 0.75) <= 0.05 and dt < 600
    verdict(6, ok, f"merging for all phases from dk = {onset} at dT/T_FWHM = 0.6 (want 0.75 +- 0.05), {dt:.0f} s")


def test_criterion_07_spacing_and_launch_powers(verdict):
    t0 = time.perf_counter()
    dk = delta_k_from_spacing(10.0, 67.0)
    plans = {"sim1": FramePlan(4, 250.0), "sim2": FramePlan(4, 150.0), "sim3": FramePlan(4, 100.0, 10.0, 100.0)}
    stated = {"sim1": 2.66, "sim2": 4.88, "sim3": 5.67}
    p = {k: launch_power_for_soliton(v, SCALES, FIBER) for k, v in plans.items()}
    dev = max(abs(p[k] - stated[k]) for k in p)
    diff = p["sim3"] - p["sim1"]
    dt = time.perf_counter() - t0
    ok = abs(dk - 1.2) <= 0.01 and dev <= 0.5 and abs(diff - 3.01) <= 0.02 and dt < 1
    verdict(7, ok, f"dk = {dk:.4f}, launch powers " + "/".join(f"{p[k]:.2f}" for k in sorted(p))
            + f" dBm (max dev {dev:.2f} dB), sim3 - sim1 = {diff:.3f} dB")


def test_criterion_08_collision_structure(verdict):
    t0 = time.perf_counter()
    base = preset_config("sim2")
    cfg = preset_config("sim2", n_bits=128, n_training=8, distances=(0.0,), link=replace(base.link, noise=False))
    tx = transmit(cfg, SCALES)
    taps = []
    propagate_link(tx.field, cfg.link, None, sink=lambda k, f: taps.append(f), keep_taps=False)
    z = np.arange(len(taps)) * cfg.link.fiber.span_length
    measured, _ = track_collisions(taps, z, cfg.plan)
    kin = collision_map(cfg.plan, FIBER, 2400.0)
    dt = time.perf_counter() - t0
    checks = []
    for name, c in (("kinematic", kin.complete), ("split-step", measured.complete)):
        checks.append(len(c) >= 2 and abs(c[0] - 450) <= 50 and abs(c[1] - 2000) <= 150)
    agree = (len(kin.complete) >= 2 and len(measured.complete) >= 2
             and all(abs(m - k) <= 0.1 * k for m, k in zip(measured.complete[:2], kin.complete[:2])))
    ok = all(checks) and agree and dt < 900
    verdict(8, ok, f"kinematic {kin.complete[:2]} km, split-step {measured.complete[:2]} km "
            f"(want 450 +- 50 and 2000 +- 150, agreement within 10%), {dt:.0f} s")


def _ber_not_above(lo, hi, n):
    """lo <= hi within a two-sided binomial 95% interval on the difference."""
    p = 0.5 * (lo + hi)
    margin = 1.96 * math.sqrt(max(p * (1 - p), 0.0) * 2 / n)
    return lo - hi <= margin


def test_criterion_09_ber_structure(verdict):
    t0 = time.perf_counter()
    cfg = preset_config("sim2", distances=(1000.0, 1650.0, 1950.0, 2250.0),
                        equalizers=("none", "mmse-single", "mmse-multi"))
    rep = run_experiment(cfg)
    ber = {(d, e): rep.ber(d, e) for d in cfg.distances for e in cfg.equalizers}
    n = rep.row(1000.0, "none")["n_bits"]
    peak = ber[1950.0, "none"] > ber[1650.0, "none"] and ber[1950.0, "none"] > ber[2250.0, "none"]
    order = (_ber_not_above(ber[1000.0, "mmse-single"], ber[1000.0, "none"], n)
             and _ber_not_above(ber[1000.0, "mmse-multi"], ber[1000.0, "mmse-single"], n))
    dt = time.perf_counter() - t0
    verdict(9, peak and order and dt < 7200,
            f"no-eq BER 1650/1950/2250 km = {ber[1650.0, 'none']:.2e}/{ber[1950.0, 'none']:.2e}/"
            f"{ber[2250.0, 'none']:.2e}; 1000 km none/single/multi = {ber[1000.0, 'none']:.2e}/"
            f"{ber[1000.0, 'mmse-single']:.2e}/{ber[1000.0, 'mmse-multi']:.2e} ({n} bits), {dt:.0f} s")


def test_criterion_10_equalizer_math(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    L = np.array([[1.0, 0, 0, 0], [0.5, 0.9, 0, 0], [-0.4, 0.3, 0.8, 0], [0.2, -0.6, 0.1, 0.6]])
    X = rng.normal(size=(100_000, 4)) @ L.T
    w = np.array([0.7, -0.3, 1.2, 0.5])
    T = np.column_stack([X @ w, X @ w[::-1]]) + 0.2 * rng.normal(size=(100_000, 2))
    # closed form from the generating covariance: Sigma^-1 Sigma w = w
    m = mmse_fit(X, T)
    rel = max(np.max(np.abs(m.c - w) / np.abs(w)), np.max(np.abs(m.d - w[::-1]) / np.abs(w)))

    W1, W2 = rng.normal(size=(5, 5)), rng.normal(size=(2, 6))
    Xs = rng.normal(size=(8, 4))
    J = nn_jacobian(W1, W2, Xs)
    theta = np.concatenate([W1.ravel(), W2.ravel()])

    def out(th):
        net = zero_nn(4, 5)
        net.W1[:], net.W2[:] = th[:25].reshape(5, 5), th[25:].reshape(2, 6)
        return nn_predict(net, Xs).ravel()

    h = 1e-6
    fd = np.column_stack([(out(theta + h * e) - out(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
    jac = np.max(np.abs(fd - J)) / np.max(np.abs(J))

    Xe = rng.normal(size=(10_000, 4))
    c = mmse_fit(Xe, np.column_stack([2 * Xe[:, 3], rng.normal(size=10_000)])).c
    cerr = np.max(np.abs(c - [0, 0, 0, 2]))
    dt = time.perf_counter() - t0
    verdict(10, rel < 0.02 and jac < 1e-5 and cerr < 1e-3 and dt < 300,
            f"MMSE weights within {rel:.2%} of closed form, Jacobian error {jac:.1e}, "
            f"c = 2*dlambda_I recovered within {cerr:.1e}, {dt:.1f} s")


def test_criterion_11_determinism(verdict, tmp_path):
    cfg = preset_config("sim1", distances=(0.0, 150.0), nn_max_epochs=3)
    t0 = time.perf_counter()
    a = run_experiment(cfg)
    t1 = time.perf_counter()
    b = run_experiment(cfg)
    t2 = time.perf_counter()
    same = report_csv(a) == report_csv(b) and a.to_json() == b.to_json()
    verdict(11, same and (t2 - t1) < 2 * (t1 - t0) + 5,
            f"two sim1 runs (all equalizers, seed {cfg.seed}) byte-identical: {same}; "
            f"{t1 - t0:.0f} s and {t2 - t1:.0f} s")
