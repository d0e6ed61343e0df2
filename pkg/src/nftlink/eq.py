"""Linear MMSE and small neural-network equalizers acting on received b.

Both estimate an amplitude offset and a phase offset for b from the
deviation of the received eigenvalue and a' from their transmitted values.
The corrected coefficient is (|b| + dA) exp(j (arg b + dphi)).
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .rx import RxSymbol

log = logging.getLogger(__name__)

SCOPES = ("single", "multi", "neighbors")
DEV_NAMES = ("d_aprime_re", "d_aprime_im", "d_lambda_re", "d_lambda_im")
RIDGE_EPS = 1e-8


class LayoutMismatch(ValueError):
    pass


def wrap_phase(x):
    """Map to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


@dataclass
class FeatureSet:
    X: np.ndarray
    targets: np.ndarray  # columns: dA, dphi; NaN where unknown
    layout: tuple
    b_rx: np.ndarray
    valid: np.ndarray
    padded: np.ndarray
    channel: np.ndarray
    window: np.ndarray

    def subset(self, mask) -> "FeatureSet":
        return FeatureSet(
            self.X[mask], self.targets[mask], self.layout, self.b_rx[mask], self.valid[mask],
            self.padded[mask], self.channel[mask], self.window[mask],
        )


def _layout(scope: str, n_channels: int, with_b: bool) -> tuple:
    if scope == "single":
        names = [f"{n}" for n in DEV_NAMES]
    elif scope == "multi":
        names = [f"ch{c}.{n}" for c in range(n_channels) for n in DEV_NAMES]
    elif scope == "neighbors":
        names = [f"w{o:+d}.ch{c}.{n}" for o in (-1, 0, 1) for c in range(n_channels) for n in DEV_NAMES]
    else:
        raise ValueError(f"unknown scope {scope!r}")
    if with_b:
        names += ["b_re", "b_im"]
    return tuple(names)


def build_features(
    symbols: np.ndarray,
    scope: str = "single",
    b_tx: Optional[np.ndarray] = None,
    phase_offset: Optional[np.ndarray] = None,
    with_b: bool = False,
) -> FeatureSet:
    """Feature rows for every (channel, window) of a symbol grid.

    ``symbols`` is an (n_channels, n_windows) object array of ``RxSymbol``.
    Received b is de-rotated by the per-channel ``phase_offset`` before the
    targets and the optional b inputs are formed.  Erased symbols contribute
    zero deviations and are marked invalid.
    """
    symbols = np.asarray(symbols, dtype=object)
    n_ch, n_win = symbols.shape
    rot = np.zeros(n_ch) if phase_offset is None else np.asarray(phase_offset, dtype=float)
    dev = np.zeros((n_ch, n_win, 4))
    b = np.full((n_ch, n_win), np.nan + 0j)
    for c in range(n_ch):
        for k in range(n_win):
            s: RxSymbol = symbols[c, k]
            if not s.erasure:
                dev[c, k] = s.feature.deviations()
                b[c, k] = s.b * np.exp(-1j * rot[c])
    valid = np.isfinite(b)
    padded = np.zeros((n_ch, n_win), dtype=bool)
    if scope == "single":
        feats = dev
    elif scope == "multi":
        feats = np.broadcast_to(dev.transpose(1, 0, 2).reshape(1, n_win, 4 * n_ch), (n_ch, n_win, 4 * n_ch))
    elif scope == "neighbors":
        per_win = dev.transpose(1, 0, 2).reshape(n_win, 4 * n_ch)
        z = np.zeros((1, 4 * n_ch))
        prev = np.vstack([z, per_win[:-1]])
        nxt = np.vstack([per_win[1:], z])
        feats = np.broadcast_to(np.hstack([prev, per_win, nxt])[None], (n_ch, n_win, 12 * n_ch))
        padded[:, 0] = padded[:, -1] = True
    else:
        raise ValueError(f"unknown scope {scope!r}")
    X = np.asarray(feats).reshape(n_ch * n_win, -1)
    if with_b:
        bb = np.where(valid, b, 0).reshape(-1)
        X = np.hstack([X, np.column_stack([bb.real, bb.imag])])
    targets = np.full((n_ch * n_win, 2), np.nan)
    if b_tx is not None:
        bt = np.asarray(b_tx).reshape(-1)
        br = b.reshape(-1)
        targets[:, 0] = np.abs(bt) - np.abs(br)
        targets[:, 1] = wrap_phase(np.angle(bt) - np.angle(br))
    ch, win = np.meshgrid(np.arange(n_ch), np.arange(n_win), indexing="ij")
    return FeatureSet(
        X, targets, _layout(scope, n_ch, with_b), b.reshape(-1), valid.reshape(-1),
        padded.reshape(-1), ch.reshape(-1), win.reshape(-1),
    )


def correct_b(b_rx: np.ndarray, d_amp: np.ndarray, d_phase: np.ndarray) -> np.ndarray:
    return (np.abs(b_rx) + d_amp) * np.exp(1j * (np.angle(b_rx) + d_phase))


@dataclass
class MmseModel:
    scope: str
    c: np.ndarray
    d: np.ndarray
    feature_layout: tuple

    def __post_init__(self):
        if not len(self.c) == len(self.d) == len(self.feature_layout):
            raise ValueError("weight vectors must match the feature layout")


def mmse_fit(X: np.ndarray, targets: np.ndarray, layout: Sequence[str] = (), scope: str = "single") -> MmseModel:
    """Least-squares linear estimator w = E[n n^T]^-1 E[n t] for both targets.

    The ridge term eps * trace / dim guards near-singular moment matrices.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(targets, dtype=float)
    n, dim = X.shape
    if not layout:
        layout = tuple(f"f{i}" for i in range(dim))
    if n < 10 * dim:
        raise ValueError(f"{n} samples for {dim} features; need at least {10 * dim}")
    R = X.T @ X / n
    ridge = RIDGE_EPS * np.trace(R) / dim
    R = R + ridge * np.eye(dim)
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError(f"feature moment matrix singular (cond={cond:.3g}, ridge={ridge:.3g})")
    W = np.linalg.solve(R, X.T @ T / n)
    return MmseModel(scope, W[:, 0].copy(), W[:, 1].copy(), tuple(layout))


def _check_layout(expected, got):
    if got is not None and tuple(got) != tuple(expected):
        raise LayoutMismatch(f"feature layout mismatch: model {len(expected)} features, input {len(got)}")


def mmse_apply(model: MmseModel, X: np.ndarray, b_rx: np.ndarray, layout: Optional[Sequence[str]] = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_layout(model.feature_layout, layout)
    if X.shape[1] != len(model.c):
        raise LayoutMismatch(f"expected {len(model.c)} features, got {X.shape[1]}")
    return correct_b(np.asarray(b_rx), X @ model.c, X @ model.d)


# ---------------------------------------------------------------- network


@dataclass
class NnModel:
    W1: np.ndarray  # (hidden, input_dim + 1), last column is the input bias
    W2: np.ndarray  # (n_out, hidden + 1), last column is the output bias
    x_mean: np.ndarray
    x_scale: np.ndarray
    feature_layout: tuple
    train_loss: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1] - 1

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def n_params(self) -> int:
        return self.W1.size + self.W2.size


def _sigmoid(x):
    return 0.5 * (1 + np.tanh(0.5 * x))


def _unpack(theta, hidden, din, nout):
    k = hidden * (din + 1)
    return theta[:k].reshape(hidden, din + 1), theta[k:].reshape(nout, hidden + 1)


def _forward(W1, W2, Xs):
    xb = np.hstack([Xs, np.ones((Xs.shape[0], 1))])
    h = _sigmoid(xb @ W1.T)
    hb = np.hstack([h, np.ones((h.shape[0], 1))])
    return hb @ W2.T, xb, h, hb


def _residuals(W1, W2, Xs, T):
    y = _forward(W1, W2, Xs)[0]
    r = y - T
    r[:, 1] = wrap_phase(r[:, 1])
    return r


def nn_jacobian(W1, W2, Xs) -> np.ndarray:
    """d(outputs)/d(params), rows ordered sample-major then output."""
    y, xb, h, hb = _forward(W1, W2, Xs)
    n, nout = y.shape
    hidden, din1 = W1.shape
    J = np.zeros((n, nout, W1.size + W2.size))
    dh = h * (1 - h)
    for o in range(nout):
        # w.r.t. W1[j, i]: W2[o, j] * h'_j * xb_i
        g = (W2[o, :hidden] * dh)[:, :, None] * xb[:, None, :]
        J[:, o, : W1.size] = g.reshape(n, -1)
        J[:, o, W1.size + o * (hidden + 1): W1.size + (o + 1) * (hidden + 1)] = hb
    return J.reshape(n * nout, -1)


def _init(rng, din, hidden, nout):
    W1 = rng.uniform(-1, 1, (hidden, din + 1)) / math.sqrt(din + 1)
    W2 = rng.uniform(-1, 1, (nout, hidden + 1)) / math.sqrt(hidden + 1)
    return W1, W2


def nn_train(
    X: np.ndarray,
    targets: np.ndarray,
    seed: int = 0,
    hidden: int = 100,
    layout: Sequence[str] = (),
    max_epochs: int = 200,
    holdout: float = 0.1,
    patience: int = 10,
    mu0: float = 1e-2,
    mu_max: float = 1e10,
) -> NnModel:
    """Levenberg-Marquardt training on the sum of squared (wrapped) residuals.

    A random ``holdout`` fraction is used for early stopping; the weights
    with the lowest validation loss are returned.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(targets, dtype=float)
    rng = np.random.default_rng(seed)
    n, din = X.shape
    nout = T.shape[1]
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    Xs = (X - x_mean) / x_scale
    perm = rng.permutation(n)
    n_val = int(round(holdout * n)) if n >= 20 else 0
    val, tr = perm[:n_val], perm[n_val:]
    W1, W2 = _init(rng, din, hidden, nout)
    theta = np.concatenate([W1.ravel(), W2.ravel()])

    def loss(th, idx):
        a, b = _unpack(th, hidden, din, nout)
        r = _residuals(a, b, Xs[idx], T[idx])
        return float(np.sum(r * r))

    cur = loss(theta, tr)
    best = (loss(theta, val) if n_val else cur, theta.copy())
    history = [cur]
    mu = mu0
    stall = 0
    for _ in range(max_epochs):
        a, b = _unpack(theta, hidden, din, nout)
        J = nn_jacobian(a, b, Xs[tr])
        r = _residuals(a, b, Xs[tr], T[tr]).ravel()
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        accepted = False
        while mu <= mu_max:
            try:
                step = np.linalg.solve(A + mu * np.diag(np.maximum(diag, 1e-12)), g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            trial = theta - step
            new = loss(trial, tr)
            if new <= cur:
                theta, cur = trial, new
                mu = max(mu / 10, 1e-12)
                accepted = True
                break
            mu *= 10
        if not accepted:
            warnings.warn("Levenberg-Marquardt damping overflow; returning best validation model", RuntimeWarning)
            break
        history.append(cur)
        v = loss(theta, val) if n_val else cur
        if v < best[0]:
            best = (v, theta.copy())
            stall = 0
        else:
            stall += 1
            if n_val and stall >= patience:
                break
    W1, W2 = _unpack(best[1], hidden, din, nout)
    if not layout:
        layout = tuple(f"f{i}" for i in range(din))
    model = NnModel(W1.copy(), W2.copy(), x_mean, x_scale, tuple(layout), history=history)
    model.train_loss = nn_loss(model, X[tr], T[tr])
    return model


def nn_predict(model: NnModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.input_dim:
        raise LayoutMismatch(f"expected {model.input_dim} features, got {X.shape[1]}")
    return _forward(model.W1, model.W2, (X - model.x_mean) / model.x_scale)[0]


def nn_loss(model: NnModel, X, T) -> float:
    y = nn_predict(model, X)
    r = y - np.asarray(T, dtype=float)
    r[:, 1] = wrap_phase(r[:, 1])
    return float(np.sum(r * r))


def nn_apply(model: NnModel, X: np.ndarray, b_rx: np.ndarray, layout: Optional[Sequence[str]] = None) -> np.ndarray:
    _check_layout(model.feature_layout, layout)
    y = nn_predict(model, X)
    return correct_b(np.asarray(b_rx), y[:, 0], y[:, 1])


def zero_nn(input_dim: int, hidden: int = 100, layout: Sequence[str] = ()) -> NnModel:
    """Network whose output is identically zero (identity correction)."""
    return NnModel(
        np.zeros((hidden, input_dim + 1)), np.zeros((2, hidden + 1)),
        np.zeros(input_dim), np.ones(input_dim),
        tuple(layout) or tuple(f"f{i}" for i in range(input_dim)),
    )


# ---------------------------------------------------------------- storage


def save_model(model, path):
    if isinstance(model, MmseModel):
        doc = {"kind": "mmse", "scope": model.scope, "feature_layout": list(model.feature_layout),
               "c": model.c.tolist(), "d": model.d.tolist()}
    elif isinstance(model, NnModel):
        doc = {"kind": "nn", "feature_layout": list(model.feature_layout),
               "hidden": model.hidden, "input_dim": model.input_dim,
               "x_mean": model.x_mean.tolist(), "x_scale": model.x_scale.tolist(),
               "W1": model.W1.tolist(), "W2": model.W2.tolist(), "train_loss": model.train_loss}
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path):
    doc = json.loads(Path(path).read_text())
    if doc["kind"] == "mmse":
        return MmseModel(doc["scope"], np.array(doc["c"]), np.array(doc["d"]), tuple(doc["feature_layout"]))
    if doc["kind"] == "nn":
        return NnModel(np.array(doc["W1"]), np.array(doc["W2"]), np.array(doc["x_mean"]),
                       np.array(doc["x_scale"]), tuple(doc["feature_layout"]), doc.get("train_loss", float("nan")))
    raise ValueError(f"unknown model kind {doc['kind']!r}")
