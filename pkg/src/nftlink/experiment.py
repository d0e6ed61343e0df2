"""End-to-end transmission runs: bits -> PIC transmitter -> link -> NFT receivers -> equalizers."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.fft import next_fast_len

from . import eq as eqmod
from .config import ExperimentConfig, config_to_ini
from .fiber import collision_map, path_average_factor, propagate_link
from .field import SampledField
from .norm import beta2_from_D, dbm_to_w, derive_scales
from .pulse import assemble_channel, qpsk_map
from .rx import (
    HD_FEC_LIMIT,
    SD_FEC_LIMIT,
    ber_count,
    decide,
    demux_channel,
    detect_symbol,
    estimate_phase_offset,
    truncate_window,
)
from .txchain import dac_convert, dac_filter, edfa, group_delay, pic_transmit, resample

log = logging.getLogger(__name__)

GUARD_WINDOWS = 2
TX_LAMBDA = 0.5j

REPORT_COLUMNS = (
    "distance_km", "equalizer", "channel", "ber", "errors", "n_bits", "erasures",
    "mean_abs_dlambda", "mean_abs_daprime", "sd_fec_pass", "hd_fec_pass",
)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def stream(seed: int, stage: str) -> np.random.Generator:
    """Independent generator per named stage: seed xor crc32(stage)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed) ^ zlib.crc32(stage.encode())))


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    collisions: dict = field(default_factory=dict)
    config_echo: str = ""
    seed: int = 0
    aborted: Optional[str] = None
    notes: list = field(default_factory=list)

    def ber(self, distance: float, equalizer: str = "none", channel="all") -> float:
        for r in self.rows:
            if r["distance_km"] == distance and r["equalizer"] == equalizer and r["channel"] == channel:
                return r["ber"]
        raise KeyError((distance, equalizer, channel))

    def row(self, distance, equalizer="none", channel="all") -> dict:
        for r in self.rows:
            if r["distance_km"] == distance and r["equalizer"] == equalizer and r["channel"] == channel:
                return r
        raise KeyError((distance, equalizer, channel))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))


# ---------------------------------------------------------------- transmitter


@dataclass
class Transmission:
    field: SampledField
    bits: np.ndarray  # (n_ch, n_data, 2)
    b_tx: np.ndarray  # (n_ch, n_data)
    first_data: int
    n_total: int
    tx_delay: float
    power_ref: float


def transmit(cfg: ExperimentConfig, scales) -> Transmission:
    plan = cfg.plan
    n_ch = plan.n_channels
    n_data = cfg.n_windows
    n_total = next_fast_len(n_data + 2 * GUARD_WINDOWS)
    first = GUARD_WINDOWS
    bits = stream(cfg.seed, "bits").integers(0, 2, size=(n_ch, n_data, 2))
    guard_bits = stream(cfg.seed, "guard").integers(0, 2, size=(n_ch, n_total - n_data, 2))
    dt = 1e3 / cfg.sim_rate
    b_tx = np.empty((n_ch, n_data), dtype=complex)
    baseband = []
    for c in range(n_ch):
        data = qpsk_map(bits[c].ravel())
        guard = qpsk_map(guard_bits[c].ravel())
        b_tx[c] = data
        sym = np.concatenate([guard[:first], data, guard[first:]])
        ch = assemble_channel(sym, plan, c, scales, dt, with_carrier=False)
        analog = dac_convert(ch, cfg.dac)
        baseband.append(resample(analog, cfg.sim_rate))
    carriers = [plan.carrier(c) for c in range(n_ch)]
    chip = pic_transmit(baseband, carriers, cfg.mux_filter, cfg.pic_peak_dbm)
    target = cfg.link.launch_power_dbm
    if target is None:
        from .fiber import launch_power_for_soliton

        target = launch_power_for_soliton(plan, scales, cfg.link.fiber)
    if cfg.link.noise:
        boosted = edfa(chip, cfg.tx_edfa, stream(cfg.seed, "tx_noise"), target_avg_power_dbm=target)
    else:
        boosted = chip
    # launch power control: exact average power at the fiber input
    launch = boosted.replace(samples=boosted.samples * math.sqrt(dbm_to_w(target) / boosted.mean_power()))
    tx_delay = group_delay(cfg.mux_filter.at(0.0)) + group_delay(dac_filter(cfg.dac))
    power_ref = scales.P0 * path_average_factor(cfg.link.fiber)
    return Transmission(launch, bits, b_tx, first, n_total, tx_delay, power_ref)


# ---------------------------------------------------------------- receiver


def receive(fld: SampledField, distance: float, cfg: ExperimentConfig, tx: Transmission, scales) -> np.ndarray:
    """Detected symbols as an (n_channels, n_data) object array."""
    plan = cfg.plan
    b2 = beta2_from_D(cfg.link.fiber)
    out = np.empty((plan.n_channels, cfg.n_windows), dtype=object)
    for c in range(plan.n_channels):
        bb = demux_channel(fld, cfg.rx, c)
        delay = tx.tx_delay + b2 * 2 * math.pi * plan.carrier(c) * 1e-3 * distance
        for k in range(cfg.n_windows):
            w = truncate_window(bb, tx.first_data + k, plan, c, delay)
            out[c, k] = detect_symbol(w, TX_LAMBDA, scales, channel=c, window_index=k, power_ref=tx.power_ref)
    return out


def _equalize(name: str, symbols, b_tx, offsets, n_train, cfg, rng_seed) -> np.ndarray:
    """Corrected (de-rotated) b for every symbol, shape (n_ch, n_win)."""
    n_ch, n_win = symbols.shape
    if name == "none":
        fs = eqmod.build_features(symbols, "single", b_tx, offsets)
        return fs.b_rx.reshape(n_ch, n_win)
    if name.startswith("mmse-"):
        scope = name.split("-", 1)[1]
        fs = eqmod.build_features(symbols, scope, b_tx, offsets)
    else:
        fs = eqmod.build_features(symbols, "single", b_tx, offsets, with_b=True)
    out = fs.b_rx.copy()
    for c in range(n_ch):
        rows = fs.channel == c
        train = rows & (fs.window < n_train) & fs.valid
        use = rows & fs.valid
        if name.startswith("mmse-"):
            model = eqmod.mmse_fit(fs.X[train], fs.targets[train], fs.layout, scope)
            out[use] = eqmod.mmse_apply(model, fs.X[use], fs.b_rx[use], fs.layout)
        else:
            model = eqmod.nn_train(fs.X[train], fs.targets[train], seed=rng_seed + c,
                                   hidden=cfg.nn_hidden, layout=fs.layout, max_epochs=cfg.nn_max_epochs)
            out[use] = eqmod.nn_apply(model, fs.X[use], fs.b_rx[use], fs.layout)
    return out.reshape(n_ch, n_win)


def evaluate(symbols, distance: float, cfg: ExperimentConfig, tx: Transmission) -> list:
    n_ch, n_win = symbols.shape
    n_train = cfg.n_training
    b_rx = np.array([[s.b for s in row] for row in symbols])
    offsets = np.array([estimate_phase_offset(b_rx[c, :n_train], tx.b_tx[c, :n_train]) for c in range(n_ch)])
    erased = np.array([[s.erasure for s in row] for row in symbols])
    dlam = np.array([[abs(complex(s.feature.d_lambda_re, s.feature.d_lambda_im)) for s in row] for row in symbols])
    dap = np.array([[abs(complex(s.feature.d_aprime_re, s.feature.d_aprime_im)) for s in row] for row in symbols])
    nn_seed = int(stream(cfg.seed, f"nn@{distance:g}").integers(0, 2**31))
    rows = []
    for name in cfg.equalizers:
        b_corr = _equalize(name, symbols, tx.b_tx, offsets, n_train, cfg, nn_seed)
        dec = np.stack([decide(b_corr[c]).reshape(-1, 2) for c in range(n_ch)])
        test_dec = dec[:, n_train:]
        test_ref = tx.bits[:, n_train:]
        ch_lab = np.broadcast_to(np.arange(n_ch)[:, None, None], test_ref.shape)
        res = ber_count(test_dec, test_ref, ch_lab)
        test = np.s_[:, n_train:]
        ok = ~erased[test]

        def row(channel, ber, errors, nbits, er, dl, da):
            return {
                "distance_km": float(distance), "equalizer": name, "channel": channel,
                "ber": float(ber), "errors": float(errors), "n_bits": int(nbits), "erasures": int(er),
                "mean_abs_dlambda": float(dl), "mean_abs_daprime": float(da),
                "sd_fec_pass": bool(ber < SD_FEC_LIMIT), "hd_fec_pass": bool(ber < HD_FEC_LIMIT),
            }

        for c in range(n_ch):
            m = ~erased[c, n_train:]
            ber_c = res.per_channel[c]
            nb = test_ref[c].size
            rows.append(row(c, ber_c, ber_c * nb, nb, int((~m).sum()),
                            dlam[c, n_train:][m].mean() if m.any() else math.nan,
                            dap[c, n_train:][m].mean() if m.any() else math.nan))
        rows.append(row("all", res.ber, res.errors, res.n_bits, int((~ok).sum()),
                        dlam[test][ok].mean() if ok.any() else math.nan,
                        dap[test][ok].mean() if ok.any() else math.nan))
    return rows


# ---------------------------------------------------------------- orchestration


def run_experiment(cfg: ExperimentConfig, tap_sink=None) -> RunReport:
    """Run the full chain and evaluate every equalizer at every requested distance."""
    cfg.check_budget()
    report = RunReport(config_echo=config_to_ini(cfg), seed=cfg.seed)
    stage = "setup"
    try:
        scales = derive_scales(cfg.link.fiber, cfg.t_fwhm)
        cm = collision_map(cfg.plan, cfg.link.fiber, max(cfg.distances, default=0.0) + cfg.link.fiber.span_length,
                           cfg.t_fwhm)
        report.collisions = {
            "complete_km": [round(z, 3) for z in cm.complete],
            "pairs_km": {f"{i}-{j}": [round(z, 3) for z in v] for (i, j), v in sorted(cm.pairs.items())},
            "degenerate": cm.degenerate,
        }
        stage = "transmitter"
        tx = transmit(cfg, scales)
        span = cfg.link.fiber.span_length
        wanted = {int(round(d / span)): float(d) for d in cfg.distances}
        results = {}

        def sink(k, fld):
            nonlocal stage
            if tap_sink is not None:
                tap_sink(k, fld)
            if k in wanted:
                stage = f"receiver@{wanted[k]:g}km"
                symbols = receive(fld, wanted[k], cfg, tx, scales)
                stage = f"equalizers@{wanted[k]:g}km"
                results[k] = evaluate(symbols, wanted[k], cfg, tx)
                log.info("evaluated %g km", wanted[k])
            stage = "link"

        n_needed = max(wanted, default=0)
        link = cfg.link if n_needed == cfg.link.n_spans else type(cfg.link)(
            cfg.link.fiber, n_needed, cfg.link.span_amp, cfg.link.launch_power_dbm,
            cfg.link.step_control, cfg.link.noise)
        stage = "link"
        propagate_link(tx.field, link, stream(cfg.seed, "link_noise"), sink=sink, keep_taps=False)
        for k in sorted(results):
            report.rows.extend(results[k])
    except Exception as exc:  # noqa: BLE001 - report which stage failed
        report.aborted = f"{stage}: {type(exc).__name__}: {exc}"
        log.error("run aborted in %s", report.aborted)
        raise StageError(stage, exc) from exc
    return report


# ---------------------------------------------------------------- rendering


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6e}"
    return str(v)


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def report_summary(report: RunReport) -> str:
    lines = []
    if report.aborted:
        lines.append(f"RUN ABORTED: {report.aborted}")
    eqs = list(dict.fromkeys(r["equalizer"] for r in report.rows))
    dists = sorted({r["distance_km"] for r in report.rows})
    lines.append(f"seed {report.seed}; SD-FEC limit {SD_FEC_LIMIT:g}, HD-FEC limit {HD_FEC_LIMIT:g}")
    head = f"{'km':>7} " + " ".join(f"{e:>22}" for e in eqs)
    lines.append(head)
    for d in dists:
        cells = []
        for e in eqs:
            r = report.row(d, e)
            flag = ("S" if r["sd_fec_pass"] else "-") + ("H" if r["hd_fec_pass"] else "-")
            cells.append(f"{r['ber']:>16.3e} [{flag}]")
        lines.append(f"{d:>7.0f} " + " ".join(f"{c:>22}" for c in cells))
    lines.append("[S] below SD-FEC limit, [H] below HD-FEC limit")
    if report.collisions:
        lines.append(f"predicted complete collisions (km): {report.collisions.get('complete_km')}")
    return "\n".join(lines) + "\n"


def report_render(report: RunReport, out_dir=None) -> str:
    """Summary text; with ``out_dir`` also write report.csv, summary.txt, report.json, config.ini."""
    text = report_summary(report)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report_csv(report))
        (out / "summary.txt").write_text(text)
        (out / "report.json").write_text(report.to_json())
        (out / "config.ini").write_text(report.config_echo)
    return text
