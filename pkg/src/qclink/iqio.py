"""Raw IQ binary dump: little-endian float32, interleaved I,Q, one file per
polarization, with a plain-text sidecar header."""

from pathlib import Path

import numpy as np

from .core import IQStream, Units

HEADER_SUFFIX = ".hdr"


def write_iq(path, stream: IQStream):
    path = Path(path)
    inter = np.empty(2 * len(stream), dtype="<f4")
    inter[0::2] = stream.samples.real
    inter[1::2] = stream.samples.imag
    inter.tofile(path)
    header = (f"sample_rate_hz: {stream.sample_rate_hz!r}\n"
              f"units: {stream.units.value}\n"
              f"length: {len(stream)}\n")
    path.with_suffix(path.suffix + HEADER_SUFFIX).write_text(header)


def read_iq(path) -> IQStream:
    path = Path(path)
    fields = {}
    for line in path.with_suffix(path.suffix + HEADER_SUFFIX).read_text().splitlines():
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    inter = np.fromfile(path, dtype="<f4")
    n = int(fields["length"])
    if inter.size != 2 * n:
        raise ValueError(f"file length {inter.size // 2} disagrees with header {n}")
    samples = inter[0::2].astype(np.float64) + 1j * inter[1::2].astype(np.float64)
    return IQStream(samples=samples,
                    sample_rate_hz=float(fields["sample_rate_hz"]),
                    units=Units(fields["units"]))
