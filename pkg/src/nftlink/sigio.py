"""Raw complex64 signal files with a one-line JSON header.

Layout::

    NFTLINK-SIGNAL 1\\n
    {"dt": ..., "t_start": ..., "center_frequency_thz": ..., "span_index": ..., "n": ...}\\n
    <n little-endian complex64 samples>
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .field import SampledField

MAGIC = b"NFTLINK-SIGNAL 1\n"
_HEADER_KEYS = ("dt", "t_start", "center_frequency_thz", "span_index")


def write_signal(path, fld: SampledField, center_frequency_thz: float | None = None, span_index: int | None = None):
    header = {
        "dt": fld.dt,
        "t_start": fld.t_start,
        "center_frequency_thz": center_frequency_thz if center_frequency_thz is not None else fld.meta.get("center_frequency_thz"),
        "span_index": span_index if span_index is not None else fld.meta.get("span_index"),
        "n": fld.n,
        "units": {"time": "ps", "field": "sqrt(W)"},
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(fld.samples, dtype="<c8").tobytes())


def read_signal(path) -> SampledField:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a signal file (bad magic)")
    end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC):end])
    data = np.frombuffer(raw[end + 1:], dtype="<c8")
    if data.size != header["n"]:
        raise ValueError(f"{path}: header says {header['n']} samples, found {data.size}")
    meta = {k: header[k] for k in _HEADER_KEYS[2:] if header.get(k) is not None}
    return SampledField(data.astype(complex), float(header["t_start"]), float(header["dt"]), meta)


class TapWriter:
    """``propagate_link`` sink writing ``span_NNN.sig`` files into a directory."""

    def __init__(self, directory, center_frequency_thz: float | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.center = center_frequency_thz

    def __call__(self, span_index: int, fld: SampledField):
        write_signal(self.directory / f"span_{span_index:03d}.sig", fld, self.center, span_index)
