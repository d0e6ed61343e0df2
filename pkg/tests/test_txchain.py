import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nftlink.field import SampledField
from nftlink.norm import dbm_to_w, w_to_dbm
from nftlink.txchain import (
    PIC_LOSS_LEDGER,
    PIC_OUTPUT_PEAK_DBM,
    DacModel,
    EdfaModel,
    FilterSpec,
    apply_filter,
    ase_psd,
    dac_convert,
    dac_filter,
    edfa,
    filter_response,
    group_delay,
    ledger_output_dbm,
    multiplex,
    pic_transmit,
    quantize,
    resample,
)

from oracles import chebyshev1_edge_for_3db, chebyshev1_mag


def noise_field(seed, n=4096, dt=1 / 160 * 1e3):
    rng = np.random.default_rng(seed)
    return SampledField(rng.normal(size=n) + 1j * rng.normal(size=n), 0.0, dt)


def test_quantizer_high_resolution():
    x = np.sin(np.linspace(0, 20, 5000))
    y = quantize(x, 16, 1.0)
    sqnr = 10 * np.log10(np.mean(x**2) / np.mean((x - y) ** 2))
    assert sqnr > 90


def test_quantizer_six_bit_sqnr():
    # largest unclipped sine of a 64-level mid-tread quantizer has amplitude 31/32;
    # oracle 6.02 * 6 + 1.76 + 20 log10(31/32) = 37.6 dB
    n = np.arange(200_000)
    amp = 31 / 32
    x = amp * np.sin(2 * np.pi * 0.0123457 * n)
    y = quantize(x, 6, 1.0)
    sqnr = 10 * np.log10(np.mean(x**2) / np.mean((x - y) ** 2))
    assert sqnr == pytest.approx(6.02 * 6 + 1.76 + 20 * np.log10(amp), abs=0.3)


def test_quantizer_mid_tread_zero():
    assert np.all(quantize(np.zeros(10), 6, 1.0) == 0)
    assert np.all(quantize(np.ones(3), 6, 0.0) == 0)


def test_all_pass_filter():
    f = noise_field(1)
    out = apply_filter(f, FilterSpec("gaussian", 1, math.inf))
    assert np.allclose(out.samples, f.samples, atol=1e-12)


def test_chebyshev_matches_closed_form():
    f = np.linspace(-40, 40, 801)
    edge = chebyshev1_edge_for_3db(4, 0.5, 8.75)
    ref = chebyshev1_mag(f, 4, 0.5, edge)
    got = np.abs(filter_response(FilterSpec(), f))
    assert np.allclose(got, ref, rtol=1e-10, atol=1e-14)


def test_chebyshev_stopband_and_3db():
    spec = FilterSpec(center=15.0)
    h = np.abs(filter_response(spec, np.array([15.0 + 8.75, 15.0 - 8.75, 15.0 + 17.5, 15.0 - 17.5])))
    db = 20 * np.log10(h)
    assert db[:2] == pytest.approx([-3.0103, -3.0103], abs=1e-3)
    assert np.all(db[2:] <= -20)


def test_gaussian_3db_points():
    spec = FilterSpec("gaussian", 1, 7.0)
    db = 20 * np.log10(np.abs(filter_response(spec, np.array([-3.5, 0.0, 3.5, 7.0]))))
    assert db == pytest.approx([-3.0103, 0.0, -3.0103, -12.0412], abs=1e-3)


def test_group_delays():
    # frozen from the analog prototypes (finite-difference phase slope)
    assert group_delay(FilterSpec()) == pytest.approx(53.79, abs=0.01)
    assert group_delay(FilterSpec().at(-15.0)) == pytest.approx(53.79, abs=0.01)
    assert group_delay(dac_filter(DacModel())) == pytest.approx(11.25, abs=0.01)
    assert group_delay(FilterSpec("gaussian", 1, 7.0)) == pytest.approx(0.0, abs=1e-9)


def test_filter_rejects_undersampling():
    f = SampledField(np.zeros(64, complex), 0.0, 1e3 / 20)
    with pytest.raises(ValueError):
        apply_filter(f, FilterSpec(center=15.0))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 200))
def test_filter_is_lti(seed, shift):
    a, b = noise_field(seed), noise_field(seed + 1)
    spec = FilterSpec(center=5.0)
    lhs = apply_filter(a.replace(samples=2 * a.samples + 3j * b.samples), spec).samples
    rhs = 2 * apply_filter(a, spec).samples + 3j * apply_filter(b, spec).samples
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)
    rolled = apply_filter(a.replace(samples=np.roll(a.samples, shift)), spec).samples
    assert np.allclose(rolled, np.roll(apply_filter(a, spec).samples, shift), atol=1e-10)


def test_resample_keeps_duration_and_band_limited_signal():
    t = np.arange(1000) * 1e3 / 160
    x = np.exp(2j * np.pi * 4.8e-3 * t)  # 4.8 GHz: 30 cycles over the record
    f = SampledField(x, 0.0, t[1])
    r = resample(f, 80.0)
    assert r.n == 500
    assert r.duration == pytest.approx(f.duration)
    assert np.allclose(r.samples, np.exp(2j * np.pi * 4.8e-3 * r.t), atol=1e-9)


def test_dac_convert_rate_and_fidelity():
    t = np.arange(2048) * 1e3 / 160
    x = np.exp(-(((t - t.mean()) / 40) ** 2)).astype(complex)
    out = dac_convert(SampledField(x, 0.0, t[1]), DacModel())
    assert 1e3 / out.dt == pytest.approx(92.0, rel=1e-3)
    # same path without the quantizer: the difference is quantization noise only
    ref = apply_filter(resample(SampledField(x, 0.0, t[1]), 92.0), dac_filter(DacModel()))
    sqnr = 20 * np.log10(np.linalg.norm(ref.samples) / np.linalg.norm(out.samples - ref.samples))
    assert sqnr > 30


def test_multiplex_single_and_coherent():
    f = noise_field(3)
    spec = FilterSpec()
    one = multiplex([f], [0.0], spec, mmi_loss_db=3.0)
    assert np.allclose(one.samples, apply_filter(f, spec).samples * 10 ** (-3 / 20))
    two = multiplex([f, f], [0.0, 0.0], spec, mmi_loss_db=0.0)
    assert np.allclose(two.samples, 2 * apply_filter(f, spec).samples)


def test_multiplex_linear_and_checks():
    f, g = noise_field(4), noise_field(5)
    a = multiplex([f, g], [-5.0, 5.0])
    b = multiplex([f.replace(samples=2.5 * f.samples), g.replace(samples=2.5 * g.samples)], [-5.0, 5.0])
    assert np.allclose(b.samples, 2.5 * a.samples)
    with pytest.raises(ValueError):
        multiplex([], [])
    with pytest.raises(ValueError):
        multiplex([f, g], [0.0])
    with pytest.raises(ValueError):
        multiplex([f, g.replace(t_start=1.0)], [0.0, 1.0])


def test_loss_ledger_reaches_stated_peak():
    assert ledger_output_dbm() == pytest.approx(PIC_OUTPUT_PEAK_DBM, abs=0.1)
    assert PIC_LOSS_LEDGER[0] == ("comb line power", -6.0)


def test_pic_output_peak_per_channel():
    t = np.arange(4096) * 1e3 / 160
    base = []
    for k in range(4):
        c = 200 + 250 * k
        base.append(SampledField((1 / np.cosh((t - c) / 38.0)).astype(complex), 0.0, t[1]))
    out = pic_transmit(base, [-15.0, -5.0, 5.0, 15.0])
    for k in range(4):
        c = 200 + 250 * k
        sel = np.abs(t - c - 54) < 60
        assert w_to_dbm(out.power[sel].max()) == pytest.approx(-20.6, abs=0.3)


def test_edfa_unity_gain_is_identity():
    f = noise_field(6)
    out = edfa(f, EdfaModel(gain_db=0.0), np.random.default_rng(0))
    assert np.array_equal(out.samples, f.samples)


def test_edfa_noise_psd_monte_carlo():
    model = EdfaModel(gain_db=10.0, nf_db=5.0)
    rng = np.random.default_rng(11)
    z = SampledField(np.zeros(1024, complex), 0.0, 1e3 / 160)
    fs = 160e9
    psd = np.mean([np.mean(edfa(z, model, rng).power) / fs for _ in range(1000)])
    assert psd == pytest.approx(ase_psd(10.0, 5.0, model.center_frequency), rel=0.05)


def test_edfa_noise_isotropic():
    model = EdfaModel(gain_db=20.0, nf_db=5.0)
    z = SampledField(np.zeros(100_000, complex), 0.0, 1e3 / 160)
    x = edfa(z, model, np.random.default_rng(12)).samples
    s = np.std(x.real)
    assert abs(x.real.mean()) < 3 * s / math.sqrt(x.size)
    assert abs(x.imag.mean()) < 3 * s / math.sqrt(x.size)
    assert np.var(x.real) == pytest.approx(np.var(x.imag), rel=0.05)


def test_edfa_target_mode_gain():
    t = np.arange(8192) * 1e3 / 160
    x = np.sqrt(dbm_to_w(-20.6)) * np.exp(2j * np.pi * 0.003 * t)
    f = SampledField(x, 0.0, t[1])
    out = edfa(f, EdfaModel(nf_db=5.0), np.random.default_rng(0), target_avg_power_dbm=2.66)
    assert out.meta["edfa_gain_db"] == pytest.approx(23.26, abs=0.05)
    with pytest.raises(ValueError):
        edfa(f, EdfaModel(), np.random.default_rng(0), target_avg_power_dbm=-30.0)


def test_edfa_rejects_sub_quantum_nf():
    with pytest.raises(ValueError):
        EdfaModel(gain_db=10.0, nf_db=2.0)
