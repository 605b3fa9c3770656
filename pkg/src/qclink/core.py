"""Shared domain types, QPSK mapping and the deterministic randomness contract.

Unit convention (shot-noise units, SNU): the vacuum (shot) noise variance per
quadrature is 1.  A calibrated record with all signals off and the local
oscillator on therefore has per-quadrature variance 1 + v_el.  The modulation
variance V_A of a QPSK alphabet is the per-quadrature variance of the symbol
quadratures, so a frame carrying V_A has point magnitude sqrt(V_A) and
quadrature values +/- sqrt(V_A / 2).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Units(Enum):
    ARBITRARY = "arbitrary"
    SNU_SQRT = "snu_sqrt"


@dataclass
class IQStream:
    """Uniformly sampled complex baseband record."""

    samples: np.ndarray
    sample_rate_hz: float
    units: Units = Units.ARBITRARY

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.samples.size == 0:
            raise ValueError("IQStream requires at least one sample")

    def __len__(self):
        return self.samples.size


@dataclass
class SymbolFrame:
    """QPSK symbol sequence: integer indices plus the complex points."""

    indices: np.ndarray
    points: np.ndarray
    baud_rate_hz: float
    amplitude: float

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.points = np.asarray(self.points, dtype=np.complex128)
        if self.baud_rate_hz <= 0:
            raise ValueError("baud_rate_hz must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")

    def __len__(self):
        return self.indices.size


# Gray mapping, fixed: bit pair (b0, b1) -> quadrant index.
# 00 -> 0, 01 -> 1, 11 -> 2, 10 -> 3; index k sits at angle pi/4 + k*pi/2.
_INDEX_TO_GRAY = np.array([0b00, 0b01, 0b11, 0b10], dtype=np.int64)
# Bit distance between decided index i and reference index j.
_BIT_ERRORS = np.array(
    [[bin(int(_INDEX_TO_GRAY[i]) ^ int(_INDEX_TO_GRAY[j])).count("1")
      for j in range(4)] for i in range(4)],
    dtype=np.int64,
)

CONSTELLATION = np.exp(1j * (np.pi / 4 + np.arange(4) * np.pi / 2))


# pair_table[b0][b1]: 00->0, 01->1, 11->2, 10->3
_PAIR_TABLE = np.array([[0, 1], [3, 2]], dtype=np.int64)


def bits_to_indices(bits):
    """Gray-map an even-length bit sequence onto QPSK quadrant indices."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % 2 != 0:
        raise ValueError("bit count must be even")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    return _PAIR_TABLE[bits[0::2], bits[1::2]]


def indices_to_bits(indices):
    """Inverse of :func:`bits_to_indices`."""
    indices = np.asarray(indices, dtype=np.int64)
    gray = _INDEX_TO_GRAY[indices]
    out = np.empty(2 * indices.size, dtype=np.int64)
    out[0::2] = gray >> 1
    out[1::2] = gray & 1
    return out


def qpsk_map(bits, amplitude, baud_rate_hz):
    """Map bits onto a QPSK :class:`SymbolFrame` with the fixed Gray code."""
    indices = bits_to_indices(bits)
    points = amplitude * CONSTELLATION[indices]
    return SymbolFrame(indices=indices, points=points,
                       baud_rate_hz=baud_rate_hz, amplitude=amplitude)


def frame_from_indices(indices, amplitude, baud_rate_hz):
    indices = np.asarray(indices, dtype=np.int64)
    return SymbolFrame(indices=indices, points=amplitude * CONSTELLATION[indices],
                       baud_rate_hz=baud_rate_hz, amplitude=amplitude)


def qpsk_hard_decision(points):
    """Quadrant decision. Points exactly on an axis go to the lower index.

    Boundary rule: I-axis positive half -> 0, Q-axis positive half -> 0,
    I-axis negative half -> 1, Q-axis negative half -> 2, origin -> 0.
    """
    points = np.asarray(points)
    re = points.real
    im = points.imag
    idx = np.empty(points.shape, dtype=np.int64)
    upper = im > 0
    lower = im < 0
    axis = im == 0
    idx[upper] = np.where(re[upper] < 0, 1, 0)
    idx[lower] = np.where(re[lower] < 0, 2, 3)
    # im == 0: boundary between quadrants 0/3 (re > 0) or 1/2 (re < 0)
    idx[axis] = np.where(re[axis] < 0, 1, 0)
    # re == 0, im < 0 is the 2/3 boundary -> 2; the vectorized branch above
    # already yields 2 there since re < 0 is False only for re >= 0.
    sel = (re == 0) & (im < 0)
    idx[sel] = 2
    return idx


@dataclass
class BerReport:
    bit_errors: int
    bit_count: int
    ber: float


def ber(decided, reference):
    """Count Gray-mapped bit errors between two QPSK index sequences."""
    decided = np.asarray(decided, dtype=np.int64)
    reference = np.asarray(reference, dtype=np.int64)
    if decided.size != reference.size:
        raise ValueError("decided and reference lengths differ")
    errors = int(_BIT_ERRORS[decided, reference].sum())
    count = 2 * decided.size
    return BerReport(bit_errors=errors, bit_count=count, ber=errors / count)


def seed_sequence(seed):
    """Root :class:`numpy.random.SeedSequence` for a run.

    All stochastic operations draw from generators derived from one root via
    ``spawn``; identical seed and call structure gives bit-identical output.
    """
    return np.random.SeedSequence(int(seed))


def rng_from(seedseq):
    return np.random.default_rng(seedseq)
