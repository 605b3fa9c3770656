"""Transmit-side DSP: RRC pulse shaping, digital frequency shifting and
synthesis of the dual-channel (classical + quantum) waveform.

The synthesized streams are complex baseband relative to the receiver LO.
Both channels share one sample clock; the classical channel runs at sps
``sample_rate / baud_c`` (5 at the default plan) and the quantum channel at
``sample_rate / baud_q`` (80).  Symbol ``i`` of either channel is centered on
sample ``i * sps`` of its stream, which makes timing transfer between the two
channels a pure index computation.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .core import IQStream, SymbolFrame, Units, qpsk_map


@dataclass
class PulseShape:
    """Unit-energy root-raised-cosine FIR pulse."""

    rolloff: float
    span_symbols: int
    sps: int
    taps: np.ndarray


def rrc_taps(rolloff, span_symbols, sps):
    """Root-raised-cosine taps over ``span_symbols`` symbols at ``sps``.

    The two removable singularities of the closed form (t = 0 and
    t = +/- Ts/(4*rolloff)) are evaluated by their analytic limits.  Taps are
    normalized to unit energy so the tx/matched-filter cascade is a Nyquist
    raised cosine with unit symbol-instant gain.
    """
    if not 0 < rolloff < 1:
        raise ValueError("rolloff must be in (0, 1)")
    if sps < 1:
        raise ValueError("sps must be >= 1")
    if span_symbols < 8 or span_symbols % 2 != 0:
        raise ValueError("span_symbols must be even and >= 8")

    n = span_symbols * sps
    t = np.arange(-n // 2, n // 2 + 1) / sps  # symbol units
    b = rolloff
    taps = np.empty_like(t)

    at_zero = t == 0
    sing = np.isclose(np.abs(4 * b * t), 1.0, rtol=0, atol=1e-12)
    regular = ~(at_zero | sing)

    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    den = np.pi * tr * (1 - (4 * b * tr) ** 2)
    taps[regular] = num / den
    taps[at_zero] = 1 - b + 4 * b / np.pi
    taps[sing] = (b / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )

    taps /= np.sqrt(np.sum(taps**2))
    return PulseShape(rolloff=rolloff, span_symbols=span_symbols, sps=sps, taps=taps)


def pulse_shape(frame: SymbolFrame, shape: PulseShape, trim_same=False):
    """Zero-stuffed upsampling by ``shape.sps`` followed by RRC filtering.

    With ``trim_same`` the output is cut to ``len(frame) * sps`` samples with
    symbol ``i`` centered on sample ``i * sps``; otherwise the full
    convolution (length ``len(frame)*sps + len(taps) - 1``) is returned and
    symbol ``i`` is centered on sample ``i*sps + (len(taps)-1)//2``.
    """
    sps = shape.sps
    up = np.zeros(len(frame) * sps, dtype=np.complex128)
    up[::sps] = frame.points
    out = fftconvolve(up, shape.taps)
    if trim_same:
        half = (len(shape.taps) - 1) // 2
        out = out[half:half + len(frame) * sps]
    return IQStream(samples=out, sample_rate_hz=frame.baud_rate_hz * sps)


def frequency_shift(stream: IQStream, shift_hz, phase0=0.0, start_index=0):
    """Multiply by exp(j*(2*pi*shift*t + phase0)), t = (start_index + k)/fs.

    ``start_index`` keeps the phase continuous when a long record is
    processed in slices.
    """
    fs = stream.sample_rate_hz
    if abs(shift_hz) >= fs / 2:
        raise ValueError("shift would alias: |shift_hz| must be < fs/2")
    if shift_hz == 0 and phase0 == 0:
        return IQStream(stream.samples.copy(), fs, stream.units)
    k = np.arange(start_index, start_index + len(stream), dtype=np.float64)
    rot = np.exp(1j * (2 * np.pi * shift_hz * k / fs + phase0))
    return IQStream(stream.samples * rot, fs, stream.units)


@dataclass
class ChannelPlan:
    """One frequency-multiplexed channel of the transmit plan."""

    baud_hz: float
    rolloff: float
    shift_hz: float
    amplitude: float  # per-symbol point magnitude (sqrt(V_A) for the quantum channel)
    tx_noise_dbc: Optional[float] = None  # white tx noise floor, dB relative to mean signal power


@dataclass
class TxPlan:
    classical: ChannelPlan
    quantum: ChannelPlan
    sample_rate_hz: float
    span_symbols: int = 64  # low roll-off needs a long pulse for low cascade ISI

    def __post_init__(self):
        for ch in (self.classical, self.quantum):
            sps = self.sample_rate_hz / ch.baud_hz
            if abs(sps - round(sps)) > 1e-9:
                raise ValueError("sample_rate_hz must be an integer multiple of each baud rate")
        bw_c = (1 + self.classical.rolloff) * self.classical.baud_hz / 2
        bw_q = (1 + self.quantum.rolloff) * self.quantum.baud_hz / 2
        if abs(self.classical.shift_hz - self.quantum.shift_hz) <= bw_c + bw_q:
            raise ValueError("channel spectral supports overlap")

    @property
    def sps_classical(self):
        return round(self.sample_rate_hz / self.classical.baud_hz)

    @property
    def sps_quantum(self):
        return round(self.sample_rate_hz / self.quantum.baud_hz)

    def shape_classical(self):
        return rrc_taps(self.classical.rolloff, self.span_symbols, self.sps_classical)

    def shape_quantum(self):
        return rrc_taps(self.quantum.rolloff, self.span_symbols, self.sps_quantum)


@dataclass
class TxTruth:
    """Ground truth retained for oracle-based testing and parameter estimation."""

    classical_frame: SymbolFrame
    quantum_frame: SymbolFrame
    origin_sample: int = 0  # sample index of symbol 0's center, both channels


@dataclass
class TxOutput:
    x_pol: IQStream  # classical path
    y_pol: IQStream  # quantum path
    truth: TxTruth


def synthesize(plan: TxPlan, classical_bits, quantum_bits, rng=None) -> TxOutput:
    """Shape, scale and frequency-shift both channels onto their polarizations.

    The classical channel optionally carries a white tx noise floor
    (``tx_noise_dbc``, modeling DAC noise); it is what physically leaks into
    the quantum band under imperfect polarization separation.
    """
    c = plan.classical
    q = plan.quantum
    n_c = len(classical_bits) // 2
    n_q = len(quantum_bits) // 2
    if n_c * plan.sps_classical != n_q * plan.sps_quantum:
        raise ValueError("classical and quantum frames must span the same duration")

    frame_c = qpsk_map(classical_bits, c.amplitude, c.baud_hz)
    frame_q = qpsk_map(quantum_bits, q.amplitude, q.baud_hz)

    x = pulse_shape(frame_c, plan.shape_classical(), trim_same=True).samples
    y = pulse_shape(frame_q, plan.shape_quantum(), trim_same=True).samples

    if c.tx_noise_dbc is not None:
        if rng is None:
            raise ValueError("tx_noise_dbc set but no rng provided")
        mean_power = c.amplitude**2 / plan.sps_classical
        sigma2 = mean_power * 10 ** (c.tx_noise_dbc / 10)
        noise = rng.normal(scale=np.sqrt(sigma2 / 2), size=(2, x.size))
        x = x + noise[0] + 1j * noise[1]

    fs = plan.sample_rate_hz
    x_pol = frequency_shift(IQStream(x, fs), c.shift_hz)
    y_pol = frequency_shift(IQStream(y, fs), q.shift_hz)
    return TxOutput(x_pol=x_pol, y_pol=y_pol,
                    truth=TxTruth(classical_frame=frame_c, quantum_frame=frame_q))
