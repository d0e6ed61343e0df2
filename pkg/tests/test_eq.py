import math

import numpy as np
import pytest

from nftlink.eq import (
    LayoutMismatch,
    MmseModel,
    build_features,
    correct_b,
    load_model,
    mmse_apply,
    mmse_fit,
    nn_apply,
    nn_jacobian,
    nn_loss,
    nn_predict,
    nn_train,
    save_model,
    wrap_phase,
    zero_nn,
)
from nftlink.nft import DiscreteEigen
from nftlink.rx import FeatureVector, RxSymbol


def sym(c, k, dev=(0.0, 0.0, 0.0, 0.0), b=1 + 0j):
    if b is None:
        return RxSymbol(c, k, None, FeatureVector(0, 0, 0, 0, 0, 0), (-1, -1))
    return RxSymbol(c, k, DiscreteEigen(0.5j, b, 1j), FeatureVector(*dev, b.real, b.imag), (0, 0))


def grid(n_ch=4, n_win=5, seed=0):
    rng = np.random.default_rng(seed)
    g = np.empty((n_ch, n_win), dtype=object)
    for c in range(n_ch):
        for k in range(n_win):
            g[c, k] = sym(c, k, tuple(rng.normal(size=4)), complex(*rng.normal(size=2)))
    return g


def test_wrap_phase_half_open():
    assert wrap_phase(np.pi) == pytest.approx(np.pi)
    assert wrap_phase(-np.pi) == pytest.approx(np.pi)
    assert wrap_phase(3 * np.pi / 2) == pytest.approx(-np.pi / 2)


@pytest.mark.parametrize("scope,dim", [("single", 4), ("multi", 16), ("neighbors", 48)])
def test_feature_counts(scope, dim):
    fs = build_features(grid(), scope)
    assert fs.X.shape == (20, dim) and len(fs.layout) == dim
    assert build_features(grid(), scope, with_b=True).X.shape[1] == dim + 2


def test_multi_and_neighbor_layout():
    g = grid()
    multi = build_features(g, "multi")
    # row for (channel 2, window 3) holds all four channels of window 3
    row = multi.X[2 * 5 + 3]
    assert np.allclose(row.reshape(4, 4), [g[c, 3].feature.deviations() for c in range(4)])
    nb = build_features(g, "neighbors")
    r = nb.X[1 * 5 + 0].reshape(3, 4, 4)
    assert np.all(r[0] == 0) and np.allclose(r[2, 1], g[1, 1].feature.deviations())
    assert list(np.flatnonzero(nb.padded.reshape(4, 5)[0])) == [0, 4]
    assert not build_features(g, "multi").padded.any()


def test_targets_and_erasures():
    g = grid(1, 3)
    g[0, 1] = sym(0, 1, b=None)
    b_tx = np.array([[1j, 1j, -1 + 0j]])
    fs = build_features(g, "single", b_tx=b_tx)
    assert list(fs.valid) == [True, False, True]
    assert np.all(fs.X[1] == 0)
    br = g[0, 0].b
    assert fs.targets[0, 0] == pytest.approx(1 - abs(br))
    assert fs.targets[0, 1] == pytest.approx(wrap_phase(np.pi / 2 - np.angle(br)))
    assert np.all(np.isnan(fs.targets[1]))
    with pytest.raises(ValueError):
        build_features(g, "everything")


def test_phase_offset_derotation():
    g = grid(2, 3)
    a = build_features(g, "single", with_b=True)
    b = build_features(g, "single", phase_offset=np.array([0.0, 0.7]), with_b=True)
    assert np.allclose(b.b_rx[:3], a.b_rx[:3])
    assert np.allclose(b.b_rx[3:], a.b_rx[3:] * np.exp(-0.7j))


def test_mmse_closed_form_on_jointly_gaussian_data():
    rng = np.random.default_rng(1)
    L = np.array([[1.0, 0, 0, 0], [0.6, 0.8, 0, 0], [-0.3, 0.2, 0.9, 0], [0.1, -0.5, 0.4, 0.7]])
    X = rng.normal(size=(100_000, 4)) @ L.T
    w_a, w_p = np.array([0.5, -1.0, 2.0, 0.3]), np.array([1.5, 0.4, -0.8, 1.0])
    T = np.column_stack([X @ w_a, X @ w_p]) + 0.1 * rng.normal(size=(100_000, 2))
    m = mmse_fit(X, T)
    # closed form: cov(n)^-1 E[n t] = w for t = w.n + independent noise
    assert np.allclose(m.c, w_a, rtol=0.02)
    assert np.allclose(m.d, w_p, rtol=0.02)


def test_mmse_recovers_exact_linear_target():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(5000, 4))
    T = np.column_stack([2 * X[:, 3], np.zeros(5000)])
    m = mmse_fit(X, T)
    assert m.c == pytest.approx([0, 0, 0, 2], abs=1e-3)
    b = np.exp(1j * rng.uniform(-np.pi, np.pi, 5000))
    b_tx = (np.abs(b) + T[:, 0]) * np.exp(1j * np.angle(b))
    assert np.max(np.abs(np.abs(mmse_apply(m, X, b)) - np.abs(b_tx))) < 1e-6


def test_mmse_independent_targets_give_small_weights():
    rng = np.random.default_rng(3)
    n = 20_000
    m = mmse_fit(rng.normal(size=(n, 4)), rng.normal(size=(n, 2)))
    # standard error of each weight is 1 / sqrt(n)
    assert np.linalg.norm(m.c) < 3 * math.sqrt(4 / n)
    assert np.linalg.norm(m.d) < 3 * math.sqrt(4 / n)


def test_mmse_halves_phase_error_on_correlated_channel():
    rng = np.random.default_rng(4)
    n = 20_000
    X = rng.normal(size=(n, 4)) * 0.05
    dphi = 2.0 * X[:, 2] + rng.normal(size=n) * 0.04
    m = mmse_fit(X[:5000], np.column_stack([np.zeros(n), dphi])[:5000])
    resid = dphi[5000:] - X[5000:] @ m.d
    assert np.sqrt(np.mean(resid**2)) < 0.5 * np.sqrt(np.mean(dphi[5000:] ** 2))


def test_mmse_never_worse_on_training_set():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(400, 4))
    T = np.column_stack([np.sin(X[:, 0]), X[:, 1] * X[:, 2]])
    m = mmse_fit(X, T)
    assert np.mean((T[:, 0] - X @ m.c) ** 2) <= np.mean(T[:, 0] ** 2)
    assert np.mean((T[:, 1] - X @ m.d) ** 2) <= np.mean(T[:, 1] ** 2)


def test_mmse_preconditions():
    rng = np.random.default_rng(6)
    with pytest.raises(ValueError):
        mmse_fit(rng.normal(size=(39, 4)), np.zeros((39, 2)))
    with pytest.raises(np.linalg.LinAlgError):
        mmse_fit(np.zeros((100, 4)), np.zeros((100, 2)))  # ridge vanishes with the trace
    with pytest.raises(ValueError):
        MmseModel("single", np.zeros(4), np.zeros(3), ("a",) * 4)


def test_mmse_zero_features_and_layout_check():
    m = MmseModel("single", np.array([1.0, 2, 3, 4]), np.array([4.0, 3, 2, 1]), ("a", "b", "c", "d"))
    b = np.array([1 + 1j, -0.5j])
    assert np.allclose(mmse_apply(m, np.zeros((2, 4)), b), b)
    with pytest.raises(LayoutMismatch):
        mmse_apply(m, np.zeros((2, 16)), b)
    with pytest.raises(LayoutMismatch):
        mmse_apply(m, np.zeros((2, 4)), b, layout=("a", "b", "c", "x"))


def test_correct_b_polar():
    assert correct_b(np.array([1j]), np.array([1.0]), np.array([np.pi / 2]))[0] == pytest.approx(-2.0)


def test_nn_jacobian_matches_finite_differences():
    rng = np.random.default_rng(7)
    W1, W2 = rng.normal(size=(5, 4)), rng.normal(size=(2, 6))
    X = rng.normal(size=(6, 3))
    J = nn_jacobian(W1, W2, X)
    theta = np.concatenate([W1.ravel(), W2.ravel()])
    h = 1e-6

    def out(th):
        m = zero_nn(3, 5)
        m.W1[:], m.W2[:] = th[:20].reshape(5, 4), th[20:].reshape(2, 6)
        return nn_predict(m, X).ravel()

    fd = np.column_stack([(out(theta + h * e) - out(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
    assert np.max(np.abs(fd - J)) / np.max(np.abs(J)) < 1e-5


def test_nn_lm_steps_are_monotone_and_deterministic():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(300, 4))
    T = np.column_stack([np.tanh(X[:, 0]), 0.3 * X[:, 1]])
    a = nn_train(X, T, seed=3, hidden=8, max_epochs=30)
    assert np.all(np.diff(a.history) <= 0)
    b = nn_train(X, T, seed=3, hidden=8, max_epochs=30)
    assert np.array_equal(a.W1, b.W1) and np.array_equal(a.W2, b.W2)
    c = nn_train(X, T, seed=4, hidden=8, max_epochs=30)
    assert not np.array_equal(a.W1, c.W1)


def test_nn_fits_product_target_linear_cannot():
    rng = np.random.default_rng(9)
    X = rng.uniform(-1, 1, size=(2000, 2))
    T = np.column_stack([X[:, 0] * X[:, 1], np.zeros(2000)])
    Xt = rng.uniform(-1, 1, size=(1000, 2))
    Tt = Xt[:, 0] * Xt[:, 1]
    m = mmse_fit(X, T)
    lin_rms = np.sqrt(np.mean((Tt - Xt @ m.c) ** 2))
    nn = nn_train(X, T, seed=0, hidden=10, max_epochs=100)
    nn_rms = np.sqrt(np.mean((Tt - nn_predict(nn, Xt)[:, 0]) ** 2))
    assert nn_rms < 0.1 * lin_rms


def test_nn_matches_mmse_on_linear_target():
    rng = np.random.default_rng(10)
    w = np.array([0.4, -0.2, 0.1, 0.3])
    X = rng.normal(size=(3000, 4))
    T = np.column_stack([X @ w, X @ w[::-1]]) * 0.2 + 0.02 * rng.normal(size=(3000, 2))
    Xt = rng.normal(size=(2000, 4))
    Tt = np.column_stack([Xt @ w, Xt @ w[::-1]]) * 0.2 + 0.02 * rng.normal(size=(2000, 2))
    m = mmse_fit(X, T)
    lin = np.sqrt(np.mean((Tt - np.column_stack([Xt @ m.c, Xt @ m.d])) ** 2))
    nn = nn_train(X, T, seed=1, hidden=10, max_epochs=60)
    got = np.sqrt(nn_loss(nn, Xt, Tt) / Tt.size)
    assert got == pytest.approx(lin, rel=0.10)


def test_nn_training_loss_is_reproducible():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(200, 3))
    T = np.column_stack([X[:, 0] ** 2, X[:, 1]]) * 0.1
    m = nn_train(X, T, seed=0, hidden=5, max_epochs=20, holdout=0.0)
    assert nn_loss(m, X, T) == pytest.approx(m.train_loss, rel=1e-12)


def test_zero_nn_is_identity_and_layout_checked():
    m = zero_nn(6, layout=tuple("abcdef"))
    b = np.array([1 + 2j, -0.3j])
    X = np.random.default_rng(0).normal(size=(2, 6))
    assert np.allclose(nn_apply(m, X, b), b)
    assert m.hidden == 100 and m.input_dim == 6
    with pytest.raises(LayoutMismatch):
        nn_apply(m, X, b, layout=tuple("abcdeg"))
    with pytest.raises(LayoutMismatch):
        nn_apply(m, X[:, :4], b)


def test_model_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    X = rng.normal(size=(200, 4))
    T = rng.normal(size=(200, 2)) * 0.1
    for model in (mmse_fit(X, T, layout=tuple("wxyz")), nn_train(X, T, hidden=4, max_epochs=3)):
        p = tmp_path / "m.json"
        save_model(model, p)
        back = load_model(p)
        assert type(back) is type(model)
        assert back.feature_layout == model.feature_layout
        b = np.exp(1j * rng.uniform(-3, 3, 200))
        apply = mmse_apply if isinstance(model, MmseModel) else nn_apply
        assert np.array_equal(apply(back, X, b), apply(model, X, b))
    with pytest.raises(TypeError):
        save_model(object(), tmp_path / "x.json")
