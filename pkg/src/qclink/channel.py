"""Physical impairments between transmitter and receiver.

Composition order in :func:`propagate`: loss -> laser phase noise -> carrier
frequency offset (common, plus a differential jitter term on the quantum
channel) -> classical-to-quantum leakage -> detection noise -> quantization.

Detection noise fixes the unit system: shot noise is injected as white
complex Gaussian noise with per-quadrature per-sample variance 1, so after
any unit-energy receive filter one shot-noise unit is again variance 1 per
quadrature.  Electronic noise has variance ``10**(-clearance_db/10)``.

Every capture carries a ``truth`` record (injected transmittance, phase and
frequency trajectories, per-component in-band excess noise).  Receiver DSP
never reads it; it exists for tests and truth bookkeeping only.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .core import IQStream, Units
from .txdsp import PulseShape, TxOutput, TxPlan, frequency_shift


class CaptureMode(Enum):
    DATA = "data"
    CAL_SHOT = "cal_shot"    # LO on, all signals off
    CAL_DARK = "cal_dark"    # LO off: electronic noise only
    CAL_LEAK = "cal_leak"    # LO on, classical on, quantum off


@dataclass
class JitterSpec:
    """Slow fluctuation of the classical/quantum channel spacing.

    Modeled as block-constant: one Gauss-Markov draw per block (correlation
    time of one block), applied to the quantum channel only.
    """

    rms_hz: float = 0.0
    mean_hz: float = 0.0
    correlation_blocks: float = 1.0


@dataclass
class ChannelParams:
    length_km: float = 15.0
    loss_db_per_km: float = 0.2
    linewidth_tx_hz: float = 100.0
    linewidth_lo_hz: float = 100.0
    f_offset_hz: float = 0.0
    jitter: JitterSpec = field(default_factory=JitterSpec)
    leakage_db: float = -np.inf
    clearance_db: float = 13.0
    enob: float = 6.0
    eta: float = 1.0
    extra_xi_snu: float = 0.0  # configured residual channel excess noise (DATA only)
    full_scale_classical: Optional[float] = None  # None disables quantization
    full_scale_quantum: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.transmittance <= 1:
            raise ValueError("transmittance out of (0, 1]")
        if not 0 < self.eta <= 1:
            raise ValueError("eta out of (0, 1]")
        if self.clearance_db <= 0:
            raise ValueError("clearance_db must be positive")

    @property
    def transmittance(self):
        return 10 ** (-self.length_km * self.loss_db_per_km / 10)

    @property
    def v_el_snu(self):
        return 10 ** (-self.clearance_db / 10)

    @property
    def linewidth_total_hz(self):
        return self.linewidth_tx_hz + self.linewidth_lo_hz


@dataclass
class CaptureTruth:
    """Hidden ground truth; read by tests, never by receiver DSP."""

    transmittance: float = 1.0
    eta: float = 1.0
    phase_track: Optional[np.ndarray] = None
    freq_offset_common_hz: float = 0.0
    freq_offset_quantum_hz: float = 0.0
    xi_components_snu: dict = field(default_factory=dict)
    clip_fraction: dict = field(default_factory=dict)
    tx: Optional[TxOutput] = None


@dataclass
class RxCapture:
    classical_path: IQStream
    quantum_path: IQStream
    mode: CaptureMode
    truth: CaptureTruth


def apply_loss(stream: IQStream, transmittance):
    """Scale amplitudes by sqrt(T)."""
    if not 0 < transmittance <= 1:
        raise ValueError("transmittance out of (0, 1]")
    return IQStream(stream.samples * np.sqrt(transmittance),
                    stream.sample_rate_hz, stream.units)


def wiener_phase(n, linewidth_hz, sample_rate_hz, rng, theta0=0.0):
    """Wiener phase trajectory with increment variance 2*pi*linewidth/fs."""
    if linewidth_hz == 0:
        return np.full(n, theta0)
    var = 2 * np.pi * linewidth_hz / sample_rate_hz
    steps = rng.normal(scale=np.sqrt(var), size=n)
    steps[0] = 0.0
    return theta0 + np.cumsum(steps)


def apply_phase_noise(stream: IQStream, linewidth_hz, rng, theta=None):
    """Multiply by exp(j*theta_k), theta a Wiener process.

    Returns ``(stream, theta)``; pass ``theta`` explicitly to apply an
    identical realization to a second stream (common laser/LO).
    """
    if linewidth_hz < 0:
        raise ValueError("linewidth must be nonnegative")
    if theta is None:
        theta = wiener_phase(len(stream), linewidth_hz, stream.sample_rate_hz, rng)
    if linewidth_hz == 0 and np.all(theta == 0):
        return stream, theta
    return IQStream(stream.samples * np.exp(1j * theta),
                    stream.sample_rate_hz, stream.units), theta


def apply_frequency_offset(stream: IQStream, f_offset_hz, start_index=0):
    """Constant frequency offset, phase-continuous in absolute sample time."""
    return frequency_shift(stream, f_offset_hz, start_index=start_index)


def apply_leakage(quantum: IQStream, classical: IQStream, leakage_db):
    """Add the residual classical field: quantum + 10**(db/20) * classical."""
    if np.isinf(leakage_db) and leakage_db < 0:
        return quantum
    if len(quantum) != len(classical) or quantum.sample_rate_hz != classical.sample_rate_hz:
        raise ValueError("streams must share length and sample rate")
    g = 10 ** (leakage_db / 20)
    return IQStream(quantum.samples + g * classical.samples,
                    quantum.sample_rate_hz, quantum.units)


def add_detection_noise(stream: IQStream, clearance_db, eta, rng, lo_on=True):
    """Scale by sqrt(eta), add shot noise (1 SNU/quadrature, if LO on) plus
    electronic noise (10**(-clearance/10) SNU/quadrature, always)."""
    if not 0 < eta <= 1:
        raise ValueError("eta out of (0, 1]")
    var = (1.0 if lo_on else 0.0) + 10 ** (-clearance_db / 10)  # per quadrature
    noise = rng.normal(scale=np.sqrt(var), size=(2, len(stream)))
    out = np.sqrt(eta) * stream.samples + noise[0] + 1j * noise[1]
    return IQStream(out, stream.sample_rate_hz, stream.units)


def quantize(stream: IQStream, enob, full_scale):
    """Uniform mid-rise quantizer, 2**round(enob) levels per quadrature over
    [-full_scale, +full_scale], clipping at the rails.

    Returns ``(stream, clip_fraction)``.
    """
    if full_scale <= 0:
        raise ValueError("full_scale must be positive")
    if enob <= 1:
        raise ValueError("enob must exceed 1")
    levels = 2 ** round(enob)
    delta = 2 * full_scale / levels

    def q(x):
        idx = np.floor(x / delta)
        clipped = np.clip(idx, -levels // 2, levels // 2 - 1)
        nclip = np.count_nonzero(idx != clipped)
        return (clipped + 0.5) * delta, nclip

    qi, ci = q(stream.samples.real)
    qq, cq = q(stream.samples.imag)
    clip_fraction = (ci + cq) / (2 * len(stream))
    return IQStream(qi + 1j * qq, stream.sample_rate_hz, stream.units), clip_fraction


def _inband_variance(samples, fs, shift_hz, shape: PulseShape):
    """Per-quadrature variance of a component inside the quantum band:
    derotate to baseband, matched-filter, sample at symbol spacing."""
    base = frequency_shift(IQStream(samples, fs), -shift_hz)
    filt = fftconvolve(base.samples, shape.taps, mode="same")
    sym = filt[::shape.sps]
    m = shape.span_symbols  # drop filter edge transients
    sym = sym[m:-m] if sym.size > 2 * m else sym
    return 0.5 * (np.var(sym.real) + np.var(sym.imag))


def propagate(tx: TxOutput, params: ChannelParams, mode: CaptureMode, rng,
              plan: Optional[TxPlan] = None, jitter_hz=0.0, start_index=0,
              track_truth=True) -> RxCapture:
    """Run the full impairment chain for one block.

    ``jitter_hz`` is the block-constant differential spacing fluctuation on
    the quantum channel (drawn by the caller so cross-block correlation is
    under its control).  ``plan`` is needed for in-band truth bookkeeping of
    the leakage / extra-noise / quantization contributions.
    """
    fs = tx.x_pol.sample_rate_hz
    n = len(tx.x_pol)
    T = params.transmittance
    truth = CaptureTruth(transmittance=T, eta=params.eta, tx=tx,
                         freq_offset_common_hz=params.f_offset_hz,
                         freq_offset_quantum_hz=params.f_offset_hz + jitter_hz)

    classical_on = mode in (CaptureMode.DATA, CaptureMode.CAL_LEAK)
    quantum_on = mode is CaptureMode.DATA
    lo_on = mode is not CaptureMode.CAL_DARK

    zero = np.zeros(n, dtype=np.complex128)
    x = tx.x_pol.samples if classical_on else zero
    y = tx.y_pol.samples if quantum_on else zero

    # loss (common fiber)
    x = np.sqrt(T) * x
    y = np.sqrt(T) * y

    # laser + LO phase noise, common to both paths
    theta = wiener_phase(n, params.linewidth_total_hz, fs, rng)
    if params.linewidth_total_hz > 0:
        rot = np.exp(1j * theta)
        x = x * rot
        y = y * rot
    truth.phase_track = theta

    # carrier frequency offset; spacing jitter differentially on the quantum path
    k = np.arange(start_index, start_index + n, dtype=np.float64)
    if params.f_offset_hz != 0:
        x = x * np.exp(1j * 2 * np.pi * params.f_offset_hz * k / fs)
    fq = params.f_offset_hz + jitter_hz
    if fq != 0:
        y = y * np.exp(1j * 2 * np.pi * fq * k / fs)

    # classical leakage into the quantum path
    g = 10 ** (params.leakage_db / 20) if np.isfinite(params.leakage_db) else 0.0
    leak = g * x if (g > 0 and classical_on) else None
    if leak is not None:
        y = y + leak

    # configured residual channel excess noise, tied to quantum operation
    if quantum_on and params.extra_xi_snu > 0:
        extra = rng.normal(scale=np.sqrt(params.extra_xi_snu), size=(2, n))
        extra = extra[0] + 1j * extra[1]
        y = y + extra
    else:
        extra = None

    x_s = add_detection_noise(IQStream(x, fs), params.clearance_db, params.eta, rng, lo_on)
    y_s = add_detection_noise(IQStream(y, fs), params.clearance_db, params.eta, rng, lo_on)

    if params.full_scale_classical is not None:
        pre_q = y_s.samples.copy()
        x_s, clip_x = quantize(x_s, params.enob, params.full_scale_classical)
        y_s, clip_y = quantize(y_s, params.enob, params.full_scale_quantum)
        truth.clip_fraction = {"classical": clip_x, "quantum": clip_y}
        quant_err = y_s.samples - pre_q
    else:
        quant_err = None

    if track_truth and plan is not None:
        shape_q = plan.shape_quantum()
        eta = params.eta
        comps = {}
        if leak is not None:
            comps["leakage"] = eta * _inband_variance(leak, fs, plan.quantum.shift_hz, shape_q)
        if extra is not None:
            comps["extra"] = eta * params.extra_xi_snu
        if quant_err is not None:
            comps["quantization"] = _inband_variance(quant_err, fs, plan.quantum.shift_hz, shape_q)
        truth.xi_components_snu = comps

    return RxCapture(classical_path=x_s, quantum_path=y_s, mode=mode, truth=truth)
