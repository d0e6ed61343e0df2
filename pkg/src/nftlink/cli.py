"""Command-line entry point: ``nftlink run|sweep|nft|report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, config_to_ini, load_config
from .experiment import RunReport, StageError, report_render, run_experiment
from .nft import continuous_spectrum, energy_decomposition, find_eigenvalues, region_for
from .norm import FiberParams, derive_scales
from .rx import normalize_window
from .sigio import TapWriter, read_signal

log = logging.getLogger("nftlink")


def _range(text: str) -> np.ndarray:
    """``start:stop:n`` (inclusive linspace), a comma list, or empty."""
    text = (text or "").strip()
    if not text:
        return np.array([])
    if ":" in text:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array([float(x) for x in text.split(",")])


def cmd_run(args) -> int:
    cfg = load_config(args.config, preset=args.preset, seed=args.seed, paper_scale=args.paper_scale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_to_ini(cfg))
    sink = TapWriter(out / "taps", cfg.link.fiber.carrier_frequency_thz) if args.save_taps else None
    try:
        report = run_experiment(cfg, tap_sink=sink)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report_render(report, out), end="")
    return 0


def cmd_sweep(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "two-eigen":
        dk, dT, dp = _range(args.delta_k), _range(args.delta_T), _range(args.delta_phi)
        _, rows = analysis.sweep_two(dk, dT, dp)
        path = out / "sweep_two.csv"
        analysis.write_two_csv(path, rows)
    else:
        phases = "qpsk" if args.all_phases else "zero"
        rows = analysis.sweep_four(_range(args.delta_T), phases=phases, delta_k=args.dk4)
        path = out / "sweep_four.csv"
        analysis.write_four_csv(path, rows)
    print(f"{len(rows)} rows -> {path}")
    return 0


def cmd_nft(args) -> int:
    fld = read_signal(args.signal)
    if args.physical:
        scales = derive_scales(FiberParams(), args.t_fwhm)
        fld = normalize_window(fld, scales)
    region = region_for(fld)
    spec = find_eigenvalues(fld, search_region=region)
    spec.continuous = continuous_spectrum(fld)
    E, Ed, Ec = energy_decomposition(fld, spec)
    doc = {
        "eigenvalues": [[d.lam.real, d.lam.imag] for d in spec.discrete],
        "b": [[d.b.real, d.b.imag] for d in spec.discrete],
        "a_prime": [[d.a_prime.real, d.a_prime.imag] for d in spec.discrete],
        "expected_count": spec.expected_count,
        "energy": E, "energy_discrete": Ed, "energy_continuous": Ec,
    }
    text = json.dumps(doc, indent=1)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "nft.json").write_text(text)
        with open(out / "continuous.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("xi", "qhat_re", "qhat_im"))
            for x, v in zip(spec.continuous.xi_grid, spec.continuous.q_hat):
                w.writerow((f"{x:.10g}", f"{v.real:.10g}", f"{v.imag:.10g}"))
    print(text)
    return 0


def cmd_report(args) -> int:
    src = Path(args.report)
    if src.is_dir():
        src = src / "report.json"
    report = RunReport.from_json(src.read_text())
    print(report_render(report, args.out), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nftlink", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="simulate a transmission experiment")
    r.add_argument("--config", help="INI configuration file")
    r.add_argument("--preset", choices=("sim1", "sim2", "sim3"))
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="run_out")
    r.add_argument("--paper-scale", action="store_true", help="320,000 bits over 60 spans (hours)")
    r.add_argument("--save-taps", action="store_true", help="write every span tap as a signal file")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="soliton superposition sweeps")
    s.add_argument("kind", choices=("two-eigen", "four-eigen"))
    s.add_argument("--delta-k", default="0.5:1.5:11", help="start:stop:n or comma list")
    s.add_argument("--delta-T", default="0:2:41", help="in units of T_FWHM")
    s.add_argument("--delta-phi", default="0:345:24", help="degrees")
    s.add_argument("--all-phases", action="store_true", help="four-eigen: all 256 QPSK combinations")
    s.add_argument("--dk4", type=float, default=1.2, help="four-eigen eigenvalue spacing")
    s.add_argument("--out", default="sweep_out")
    s.set_defaults(func=cmd_sweep)

    n = sub.add_parser("nft", help="nonlinear spectrum of a signal file")
    n.add_argument("signal")
    n.add_argument("--physical", action="store_true", help="signal is in ps / sqrt(W); normalize first")
    n.add_argument("--t-fwhm", type=float, default=67.0)
    n.add_argument("--out")
    n.set_defaults(func=cmd_nft)

    q = sub.add_parser("report", help="re-render a saved run report")
    q.add_argument("report", help="report.json or a run output directory")
    q.add_argument("--out")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
