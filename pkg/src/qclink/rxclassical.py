"""Classical-channel receiver DSP.

Chain: coarse frequency correction -> matched filter -> downsampling-phase
search -> CMA SISO equalizer (5 -> 1 sample/symbol) -> Viterbi&Viterbi
4th-power carrier frequency estimation -> V&V phase estimation -> hard
decision and BER.  The report exports the total carrier phase correction on
an absolute sample-time axis so the quantum chain can reuse it.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.signal import fftconvolve

from .core import IQStream, SymbolFrame, ber, qpsk_hard_decision
from .txdsp import PulseShape, TxPlan, frequency_shift


@dataclass
class CmaConfig:
    num_taps: int = 21
    step_size: float = 5e-4
    warmup_symbols: int = 4000
    target_modulus: float = 1.0
    divergence_error: float = 0.5  # mean CM error bound after warmup

    def __post_init__(self):
        if self.num_taps % 2 == 0 or self.num_taps < 1:
            raise ValueError("num_taps must be odd and positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass
class CarrierEstimate:
    f_hat_hz: float
    phase_track: np.ndarray  # unwrapped, one per symbol
    vv_window: int
    ambiguous: bool = False
    cycle_slip: bool = False


@dataclass
class ClassicalRxReport:
    decided: np.ndarray
    ber_report: object
    carrier: CarrierEstimate
    timing_index: int
    taps: np.ndarray
    # absolute capture-sample index and total phase correction per equalized
    # symbol; the quantum chain interpolates these across the known spacing
    symbol_sample_idx: np.ndarray = None
    total_phase: np.ndarray = None
    lag_symbols: int = 0
    rotation_quadrants: int = 0
    valid: slice = None
    flags: list = field(default_factory=list)


def coarse_freq_correct(stream: IQStream, f_known_hz):
    """Shift the known deterministic channel offset down to baseband."""
    return frequency_shift(stream, -f_known_hz)


def matched_filter(stream: IQStream, shape: PulseShape):
    """Convolve with the (symmetric) RRC taps; 'same' mode keeps symbol
    centers on the same sample indices as the input."""
    out = fftconvolve(stream.samples, shape.taps, mode="same")
    return IQStream(out, stream.sample_rate_hz, stream.units)


def timing_search(stream: IQStream, sps):
    """Downsampling phase in [0, sps) maximizing mean symbol-instant power."""
    energies = [np.mean(np.abs(stream.samples[p::sps]) ** 2) for p in range(sps)]
    return int(np.argmax(energies))


@njit(cache=True)
def _cma_kernel(x, sps, offset, num_taps, mu, r2, n_sym):
    half = num_taps // 2
    w = np.zeros(num_taps, dtype=np.complex128)
    w[half] = 1.0
    y = np.empty(n_sym, dtype=np.complex128)
    err = np.empty(n_sym, dtype=np.float64)
    for m in range(n_sym):
        c = offset + m * sps
        acc = 0.0 + 0.0j
        for i in range(num_taps):
            acc += w[i] * x[c - half + i]
        y[m] = acc
        e = np.abs(acc) ** 2 - r2
        err[m] = e * e
        grad = mu * e * acc
        for i in range(num_taps):
            w[i] -= grad * np.conj(x[c - half + i])
    return y, w, err


def cma_equalize(stream: IQStream, sps, phase, cfg: CmaConfig):
    """Fractionally spaced CMA equalizer emitting one output per symbol.

    The input is normalized to unit symbol-instant power so the constant
    ``target_modulus`` and ``step_size`` are scale-free.  Output symbol ``m``
    is centered on input sample ``phase + m*sps``.  Returns
    ``(symbols, taps, error_curve, diverged)``.
    """
    half = cfg.num_taps // 2
    x = stream.samples
    n_sym = (len(x) - phase - 1) // sps + 1
    if n_sym <= cfg.warmup_symbols:
        raise ValueError("input too short for CMA warmup")
    scale = np.sqrt(np.mean(np.abs(x[phase::sps]) ** 2))
    if scale == 0:
        raise ValueError("zero-power input")
    xp = np.concatenate([np.zeros(half, dtype=np.complex128),
                         x / scale,
                         np.zeros(half, dtype=np.complex128)])
    y, w, err = _cma_kernel(xp, sps, phase + half, cfg.num_taps,
                            cfg.step_size, cfg.target_modulus**2, n_sym)
    tail = err[cfg.warmup_symbols:]
    diverged = bool(np.mean(tail) > cfg.divergence_error) or not np.all(np.isfinite(tail))
    return y, w, err, diverged


def _refine_tone(z, f0, fs):
    """Maximize |sum z * exp(-j2pi f k / fs)| near f0 by golden-section."""
    k = np.arange(z.size)

    def mag(f):
        return -np.abs(np.dot(z, np.exp(-2j * np.pi * f * k / fs)))

    span = fs / z.size  # one DFT bin
    lo, hi = f0 - span, f0 + span
    gr = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = mag(c), mag(d)
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = mag(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = mag(d)
    return 0.5 * (a + b)


def vv_cfe(symbols, baud_hz, zero_pad=4):
    """4th-power carrier frequency estimation.

    Raises the symbols to the 4th power, locates the dominant tone by a
    zero-padded DFT peak with parabolic interpolation plus a golden-section
    polish, and divides by 4.  Unambiguous only for |offset| < baud/8; an
    estimate at the edge of that range is flagged.
    """
    z = np.asarray(symbols) ** 4
    n = z.size
    nfft = int(2 ** np.ceil(np.log2(n * zero_pad)))
    spec = np.fft.fft(z, nfft)
    mag = np.abs(spec)
    peak = int(np.argmax(mag))
    # parabolic interpolation on log magnitude
    m0, m1, m2 = mag[(peak - 1) % nfft], mag[peak], mag[(peak + 1) % nfft]
    if m0 > 0 and m2 > 0:
        l0, l1, l2 = np.log(m0), np.log(m1), np.log(m2)
        denom = l0 - 2 * l1 + l2
        frac = 0.5 * (l0 - l2) / denom if denom != 0 else 0.0
    else:
        frac = 0.0
    f4 = (peak + frac) / nfft * baud_hz
    if f4 > baud_hz / 2:
        f4 -= baud_hz
    f4 = _refine_tone(z, f4, baud_hz)
    f_hat = f4 / 4
    ambiguous = abs(f_hat) >= 0.999 * baud_hz / 8
    return f_hat, ambiguous


def vv_cpe(symbols, window):
    """4th-power phase estimation over a moving window.

    Returns ``(phase_track, corrected, cycle_slip)``; the track is
    unwrap(arg(moving sum of s^4))/4 and carries an unresolved pi/2 ambiguity
    (a constant per block, removed later against known symbols).
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    z = np.asarray(symbols) ** 4
    kernel = np.ones(window)
    acc = fftconvolve(z, kernel, mode="same")
    # the 4th power of the pi/4 + k*pi/2 alphabet sits at angle pi, so the
    # modulation-free carrier term is -|a|^4 * exp(j*4*phi)
    phase = np.unwrap(np.angle(-acc)) / 4
    corrected = symbols * np.exp(-1j * phase)
    slip = bool(np.max(np.abs(np.diff(phase))) > np.pi / 4) if phase.size > 1 else False
    return phase, corrected, slip


def sync_reference(symbols, reference_points, max_lag=64):
    """Resolve the delay and pi/2 rotation against a known reference.

    Correlates over integer lags in [-max_lag, max_lag]; the peak's complex
    phase, quantized to a quadrant, gives the rotation.  Returns
    ``(lag, rotation_quadrants)`` such that
    ``symbols[m] * exp(-j*rot*pi/2)`` estimates ``reference[m - lag]``.
    """
    n = min(symbols.size, reference_points.size, 20000)
    s = symbols[:n]
    r = reference_points[:n]
    best = (0, 0.0 + 0j)
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            c = np.vdot(r[: n - lag], s[lag:n])
        else:
            c = np.vdot(r[-lag:n], s[: n + lag])
        if abs(c) > abs(best[1]):
            best = (lag, c)
    lag, c = best
    rot = int(np.round(np.angle(c) / (np.pi / 2))) % 4
    return lag, rot


def classical_receive(capture_stream: IQStream, plan: TxPlan, cfg: CmaConfig,
                      reference: SymbolFrame, vv_window=65) -> ClassicalRxReport:
    """Full classical chain on one captured block.

    ``reference`` is the known transmitted frame (data is known at the
    receiver for BER measurement and for resolving the equalizer delay and
    pi/2 ambiguity, standing in for a per-block known header).
    """
    flags = []
    sps = plan.sps_classical
    fs = plan.sample_rate_hz
    base = coarse_freq_correct(capture_stream, plan.classical.shift_hz)
    mf = matched_filter(base, plan.shape_classical())
    phase_idx = timing_search(mf, sps)
    y, taps, err, diverged = cma_equalize(mf, sps, phase_idx, cfg)
    if diverged:
        flags.append("cma_divergence")

    w = cfg.warmup_symbols
    f_hat, ambiguous = vv_cfe(y[w:], plan.classical.baud_hz)
    if ambiguous:
        flags.append("cfe_ambiguity")

    # symbol m of y sits on capture sample phase_idx + m*sps
    u = phase_idx + np.arange(y.size) * sps
    derot = y * np.exp(-2j * np.pi * f_hat * u / fs)
    phase_track, corrected, slip = vv_cpe(derot, vv_window)

    # compare aligned segments (skip warmup on both sides) so the residual
    # lag is just the small equalizer/filter delay
    lag, rot = sync_reference(corrected[w:], reference.points[w:],
                              max_lag=4 * cfg.num_taps)
    corrected = corrected * np.exp(-1j * rot * np.pi / 2)

    # align with the reference: corrected[m] estimates reference[m - lag]
    edge = plan.span_symbols
    start = max(w, lag + edge)
    stop = min(y.size, reference.points.size + lag - edge)
    decided = qpsk_hard_decision(corrected[start:stop])
    report_ber = ber(decided, reference.indices[start - lag:stop - lag])
    carrier = CarrierEstimate(f_hat_hz=f_hat, phase_track=phase_track,
                              vv_window=vv_window, ambiguous=ambiguous,
                              cycle_slip=slip)
    if slip:
        flags.append("cycle_slip")
    total_phase = 2 * np.pi * f_hat * u / fs + phase_track + rot * np.pi / 2
    return ClassicalRxReport(
        decided=decided, ber_report=report_ber, carrier=carrier,
        timing_index=phase_idx, taps=taps,
        symbol_sample_idx=u, total_phase=total_phase,
        lag_symbols=lag, rotation_quadrants=rot,
        valid=slice(start, stop), flags=flags)
