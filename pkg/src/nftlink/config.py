"""Experiment configuration: the three simulation presets and an INI file format."""

from __future__ import annotations

import configparser
import io
import logging
import warnings
from dataclasses import dataclass, replace

from .fiber import LinkConfig, StepControl
from .norm import FiberParams
from .pulse import FramePlan
from .rx import RxConfig
from .txchain import DacModel, EdfaModel, FilterSpec, PIC_OUTPUT_PEAK_DBM

log = logging.getLogger(__name__)

EQUALIZERS = ("none", "mmse-single", "mmse-multi", "mmse-neighbors", "nn")
PRESETS = ("sim1", "sim2", "sim3", "custom")

# preset -> (delta_T ps, downtime ps, launch power dBm, desk tap spacing km, max distance km)
PRESET_TABLE = {
    "sim1": (250.0, 0.0, 2.66, 150.0, 3000.0),
    "sim2": (150.0, 0.0, 4.88, 150.0, 2400.0),
    "sim3": (100.0, 100.0, 5.67, 150.0, 2400.0),
}
DESK_BITS = 8000
FULL_BITS = 320_000
FULL_SPANS = 60
SECONDS_PER_SAMPLE_STEP = 8e-8


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "custom"
    plan: FramePlan = FramePlan()
    link: LinkConfig = LinkConfig()
    rx: RxConfig = RxConfig(lo_frequencies=tuple(FramePlan().carrier(k) for k in range(4)))
    dac: DacModel = DacModel()
    mux_filter: FilterSpec = FilterSpec()
    pic_peak_dbm: float = PIC_OUTPUT_PEAK_DBM
    tx_edfa: EdfaModel = EdfaModel(nf_db=5.0)
    t_fwhm: float = 67.0
    sim_rate: float = 160.0
    equalizers: tuple = EQUALIZERS
    n_bits: int = DESK_BITS
    n_training: int = 500
    seed: int = 0
    distances: tuple = (0.0,)
    nn_hidden: int = 100
    nn_max_epochs: int = 100
    runtime_budget_s: float = 3600.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        bad = [e for e in self.equalizers if e not in EQUALIZERS]
        if bad:
            raise ConfigError(f"unknown equalizers {bad}")
        per_window = 2 * self.plan.n_channels
        if self.n_bits <= 0 or self.n_bits % per_window:
            raise ConfigError(f"n_bits must be a positive multiple of {per_window}")
        if not 0 < self.n_training < self.n_windows:
            raise ConfigError(f"n_training must lie in (0, {self.n_windows}) windows")
        span = self.link.fiber.span_length
        for d in self.distances:
            if d < 0 or abs(d / span - round(d / span)) > 1e-9:
                raise ConfigError(f"distance {d} km is not a span boundary")
            if round(d / span) > self.link.n_spans:
                raise ConfigError(f"distance {d} km beyond the {self.link.n_spans}-span link")
        self.rx.check_plan(self.plan)
        if self.sim_rate <= 2 * (abs(self.plan.carrier(0)) + self.mux_filter.bw_3db):
            raise ConfigError("simulation rate too low for the multiplex bandwidth")
        if self.preset in PRESET_TABLE:
            dT, down, p, _, _ = PRESET_TABLE[self.preset]
            locked = {
                "plan.delta_T": (self.plan.delta_T, dT),
                "plan.downtime": (self.plan.downtime, down),
                "plan.n_channels": (self.plan.n_channels, 4),
                "plan.delta_f": (self.plan.delta_f, 10.0),
                "link.launch_power_dbm": (self.link.launch_power_dbm, p),
            }
            for k, (have, want) in locked.items():
                if have is None or abs(have - want) > 1e-9:
                    raise ConfigError(f"preset {self.preset} locks {k} = {want}, got {have}")

    @property
    def n_windows(self) -> int:
        return self.n_bits // (2 * self.plan.n_channels)

    def estimated_runtime_s(self) -> float:
        from scipy.fft import next_fast_len

        n_samples = next_fast_len(self.n_windows + 4) * self.plan.window * self.sim_rate * 1e-3
        steps = self.link.fiber.span_length / self.link.step_control.step_km
        return self.link.n_spans * steps * n_samples * SECONDS_PER_SAMPLE_STEP

    def check_budget(self) -> bool:
        est = self.estimated_runtime_s()
        if est > self.runtime_budget_s:
            warnings.warn(
                f"estimated propagation time {est:.0f} s exceeds the {self.runtime_budget_s:.0f} s budget",
                RuntimeWarning,
                stacklevel=2,
            )
            return False
        return True


def preset_config(name: str, paper_scale: bool = False, **overrides) -> ExperimentConfig:
    """Configuration for one preset simulation at desk (default) or full scale."""
    if name not in PRESET_TABLE:
        raise ConfigError(f"no preset named {name!r}")
    dT, down, p, tap, max_d = PRESET_TABLE[name]
    plan = FramePlan(4, dT, 10.0, down)
    fiber = FiberParams()
    n_spans = FULL_SPANS if paper_scale else int(round(max_d / fiber.span_length))
    link = LinkConfig(fiber, n_spans, EdfaModel(nf_db=5.0), p, StepControl(), True)
    if paper_scale:
        distances = tuple(float(k * fiber.span_length) for k in range(n_spans + 1))
        n_bits = FULL_BITS
        n_training = 10_000 // 4
    else:
        distances = tuple(float(d) for d in _frange(0.0, max_d, tap))
        n_bits = DESK_BITS
        n_training = DESK_BITS // 16
    kw = dict(preset=name, plan=plan, link=link, rx=RxConfig.for_plan(plan), n_bits=n_bits,
              n_training=n_training, distances=distances)
    kw.update(overrides)
    return ExperimentConfig(**kw)


def _frange(start, stop, step):
    n = int(round((stop - start) / step))
    return [start + k * step for k in range(n + 1)]


# ---------------------------------------------------------------- INI


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    if text.startswith("every"):
        # every <step> up to <stop>
        _, step, stop = text.split()
        return tuple(_frange(0.0, float(stop), float(step)))
    return tuple(float(x) for x in text.replace(",", " ").split())


def load_config(path_or_text, preset: str | None = None, seed: int | None = None,
                paper_scale: bool = False) -> ExperimentConfig:
    """Parse an INI file (or text); ``preset``/``seed`` override the file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        cp.read_string(path_or_text)
    elif path_or_text is not None:
        with open(path_or_text) as fh:
            cp.read_file(fh)
    known = {"experiment", "plan", "fiber", "link", "tx", "rx", "nn"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    ex = cp["experiment"] if cp.has_section("experiment") else {}
    name = preset or ex.get("preset", "custom")
    if name in PRESET_TABLE:
        base = preset_config(name, paper_scale)
    else:
        base = ExperimentConfig()
    get = lambda sec, key, conv, default: conv(cp.get(sec, key)) if cp.has_option(sec, key) else default

    plan = FramePlan(
        get("plan", "n_channels", int, base.plan.n_channels),
        get("plan", "delta_T", float, base.plan.delta_T),
        get("plan", "delta_f", float, base.plan.delta_f),
        get("plan", "downtime", float, base.plan.downtime),
    )
    bf = base.link.fiber
    fiber = FiberParams(
        get("fiber", "dispersion_D", float, bf.dispersion_D),
        get("fiber", "attenuation_alpha", float, bf.attenuation_alpha),
        get("fiber", "kerr_gamma", float, bf.kerr_gamma),
        get("fiber", "center_wavelength", float, bf.center_wavelength),
        get("fiber", "span_length", float, bf.span_length),
    )
    bl = base.link
    lp = cp.get("link", "launch_power_dbm", fallback=None)
    link = LinkConfig(
        fiber,
        get("link", "n_spans", int, bl.n_spans),
        EdfaModel(nf_db=get("link", "nf_db", float, bl.span_amp.nf_db)),
        bl.launch_power_dbm if lp is None else (None if lp.strip().lower() == "auto" else float(lp)),
        StepControl(
            get("link", "step_mode", str, bl.step_control.mode),
            get("link", "step_km", float, bl.step_control.step_km),
            get("link", "max_phase", float, bl.step_control.max_phase),
        ),
        cp.getboolean("link", "noise", fallback=bl.noise),
    )
    dac = DacModel(
        get("tx", "dac_bits", int, base.dac.bits),
        get("tx", "dac_bandwidth", float, base.dac.bandwidth),
        get("tx", "dac_rate", float, base.dac.rate),
    )
    mux = FilterSpec(
        get("tx", "mux_kind", str, base.mux_filter.kind),
        get("tx", "mux_order", int, base.mux_filter.order),
        get("tx", "mux_bw", float, base.mux_filter.bw_3db),
        0.0,
        get("tx", "mux_ripple_db", float, base.mux_filter.ripple_db),
    )
    rx = RxConfig(
        tuple(plan.carrier(k) for k in range(plan.n_channels)),
        FilterSpec("gaussian", 1, get("rx", "filter_bw", float, base.rx.optical_filter.bw_3db)),
        get("rx", "adc_rate", float, base.rx.adc_rate),
        plan.window,
    )
    eqs = ex.get("equalizers") if ex else None
    dist = ex.get("distances_km") if ex else None
    return ExperimentConfig(
        preset=name,
        plan=plan,
        link=link,
        rx=rx,
        dac=dac,
        mux_filter=mux,
        pic_peak_dbm=get("tx", "pic_peak_dbm", float, base.pic_peak_dbm),
        tx_edfa=EdfaModel(nf_db=get("tx", "edfa_nf_db", float, base.tx_edfa.nf_db)),
        t_fwhm=get("experiment", "t_fwhm", float, base.t_fwhm),
        sim_rate=get("experiment", "sim_rate", float, base.sim_rate),
        equalizers=tuple(e.strip() for e in eqs.split(",") if e.strip()) if eqs else base.equalizers,
        n_bits=get("experiment", "n_bits", int, base.n_bits),
        n_training=get("experiment", "n_training", int, base.n_training),
        seed=seed if seed is not None else get("experiment", "seed", int, base.seed),
        distances=_floats(dist) if dist is not None else base.distances,
        nn_hidden=get("nn", "hidden", int, base.nn_hidden),
        nn_max_epochs=get("nn", "max_epochs", int, base.nn_max_epochs),
        runtime_budget_s=get("experiment", "runtime_budget_s", float, base.runtime_budget_s),
    )


def _num(x) -> str:
    return repr(float(x))


def config_to_ini(cfg: ExperimentConfig) -> str:
    """Full echo of a configuration; ``load_config`` of the result is lossless."""
    cp = configparser.ConfigParser()
    cp["experiment"] = {
        "preset": cfg.preset,
        "seed": str(cfg.seed),
        "n_bits": str(cfg.n_bits),
        "n_training": str(cfg.n_training),
        "equalizers": ", ".join(cfg.equalizers),
        "distances_km": " ".join(_num(d) for d in cfg.distances),
        "t_fwhm": _num(cfg.t_fwhm),
        "sim_rate": _num(cfg.sim_rate),
        "runtime_budget_s": _num(cfg.runtime_budget_s),
    }
    p = cfg.plan
    cp["plan"] = {"n_channels": str(p.n_channels), "delta_T": _num(p.delta_T),
                  "delta_f": _num(p.delta_f), "downtime": _num(p.downtime)}
    f = cfg.link.fiber
    cp["fiber"] = {"dispersion_D": _num(f.dispersion_D), "attenuation_alpha": _num(f.attenuation_alpha),
                   "kerr_gamma": _num(f.kerr_gamma), "center_wavelength": _num(f.center_wavelength),
                   "span_length": _num(f.span_length)}
    l = cfg.link
    cp["link"] = {"n_spans": str(l.n_spans), "nf_db": _num(l.span_amp.nf_db),
                  "launch_power_dbm": "auto" if l.launch_power_dbm is None else _num(l.launch_power_dbm),
                  "step_mode": l.step_control.mode, "step_km": _num(l.step_control.step_km),
                  "max_phase": _num(l.step_control.max_phase), "noise": str(l.noise).lower()}
    cp["tx"] = {"dac_bits": str(cfg.dac.bits), "dac_bandwidth": _num(cfg.dac.bandwidth),
                "dac_rate": _num(cfg.dac.rate), "mux_kind": cfg.mux_filter.kind,
                "mux_order": str(cfg.mux_filter.order), "mux_bw": _num(cfg.mux_filter.bw_3db),
                "mux_ripple_db": _num(cfg.mux_filter.ripple_db), "pic_peak_dbm": _num(cfg.pic_peak_dbm),
                "edfa_nf_db": _num(cfg.tx_edfa.nf_db)}
    cp["rx"] = {"filter_bw": _num(cfg.rx.optical_filter.bw_3db), "adc_rate": _num(cfg.rx.adc_rate)}
    cp["nn"] = {"hidden": str(cfg.nn_hidden), "max_epochs": str(cfg.nn_max_epochs)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
