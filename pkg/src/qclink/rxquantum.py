"""Quantum-channel DSP driven by classical-channel estimates.

The quantum chain has no pilots of its own: carrier frequency and phase come
from the classical receiver (transferred across the known channel spacing),
timing from the classical downsampling index, and the only quantum-side
corrections are a small residual frequency offset (minimizing excess noise
over revealed symbols) and a global covariance-maximizing phase rotation.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .calibration import NoiseCalibration, to_snu
from .channel import RxCapture
from .core import SymbolFrame
from .rxclassical import ClassicalRxReport
from .txdsp import TxPlan, frequency_shift


class QuantumDspError(ValueError):
    pass


@dataclass
class QuantumSymbols:
    """Downsampled quantum-band record in sqrt(SNU), one point per symbol."""

    symbols: np.ndarray
    baud_hz: float
    sample_idx: np.ndarray  # capture-sample index of each symbol center
    timing_index: int


@dataclass
class RevealedSet:
    """Symbols disclosed for parameter estimation (and reused for the
    residual frequency / phase search)."""

    indices: np.ndarray
    alice: np.ndarray  # ground-truth tx points, sqrt(SNU)
    bob: np.ndarray
    fraction: float

    def __post_init__(self):
        if self.indices.size == 0:
            raise QuantumDspError("revealed set is empty")
        if np.any(np.diff(self.indices) <= 0):
            raise QuantumDspError("revealed indices must be strictly increasing")


@dataclass
class EstimationReport:
    t_hat: float
    xi_hat_snu: float
    ci3_t: float
    ci3_xi: float
    n_revealed: int
    residual_variance: float
    block_id: int = -1


def quantum_front_end(capture: RxCapture, cal: NoiseCalibration,
                      classical: ClassicalRxReport, plan: TxPlan) -> QuantumSymbols:
    """SNU rescaling, frequency and phase transfer from the classical
    channel, matched filtering and classical-assisted downsampling."""
    if classical is None:
        raise QuantumDspError("quantum processing requires the classical report")
    cal.validate()
    shape = plan.shape_quantum()
    sps_q = plan.sps_quantum
    sps_c = plan.sps_classical
    ratio = sps_q // sps_c

    stream = to_snu(capture.quantum_path, cal)
    base = frequency_shift(stream, -plan.quantum.shift_hz)
    filt = fftconvolve(base.samples, shape.taps, mode="same")

    # timing transferred from the classical chain
    p_c = classical.timing_index
    timing = (p_c * ratio) % sps_q
    sym = filt[timing::sps_q]
    idx = timing + np.arange(sym.size) * sps_q

    # carrier transfer: classical symbol sitting on the same capture sample
    # as quantum symbol k is m = (idx - p_c) / sps_c
    m = (idx - p_c) // sps_c
    m = np.clip(m, 0, classical.total_phase.size - 1)
    sym = sym * np.exp(-1j * classical.total_phase[m])

    return QuantumSymbols(symbols=sym, baud_hz=plan.quantum.baud_hz,
                          sample_idx=idx, timing_index=timing)


def reveal(qsym: QuantumSymbols, truth_frame: SymbolFrame, fraction,
           skip_edge=0, warmup_quantum=0) -> RevealedSet:
    """Disclose an evenly spaced fraction of the symbols for estimation.

    ``warmup_quantum`` excludes symbols whose classical counterpart falls in
    the equalizer warmup.
    """
    if not 0 < fraction <= 1:
        raise QuantumDspError("fraction must be in (0, 1]")
    stride = max(1, round(1 / fraction))
    n = min(qsym.symbols.size, truth_frame.points.size)
    lo = max(skip_edge, warmup_quantum)
    hi = n - skip_edge
    if hi <= lo:
        raise QuantumDspError("no symbols left to reveal")
    indices = np.arange(lo, hi, stride)
    return RevealedSet(indices=indices,
                       alice=truth_frame.points[indices],
                       bob=qsym.symbols[indices],
                       fraction=1.0 / stride)


def _xi_objective(alice, bob_rot, v_el_snu, trusted):
    """Excess-noise value after the closed-form optimal phase rotation."""
    theta = np.angle(np.vdot(alice, bob_rot))
    b = bob_rot * np.exp(-1j * theta)
    xa = np.concatenate([alice.real, alice.imag])
    xb = np.concatenate([b.real, b.imag])
    t = np.dot(xa, xb) / np.dot(xa, xa)
    resid = xb - t * xa
    s2 = np.var(resid)
    xi = s2 - 1.0 - (v_el_snu if trusted else 0.0)
    return xi


@dataclass
class ResidualSearch:
    span_hz: float = 5000.0
    coarse_step_hz: float = 50.0


def residual_fo_correct(qsym: QuantumSymbols, revealed: RevealedSet,
                        search: ResidualSearch, v_el_snu=0.0, trusted=True):
    """Incremental residual frequency-offset correction.

    Scans candidate offsets over ``+/- span_hz`` minimizing the excess-noise
    estimate on the revealed pairs (each candidate evaluated at its own
    optimal global phase), then refines by golden-section.  Returns
    ``(f_res_hz, corrected QuantumSymbols, boundary_flag)``.
    """
    t_rev = revealed.indices / qsym.baud_hz

    def xi_of(df):
        rot = revealed.bob * np.exp(-2j * np.pi * df * t_rev)
        return _xi_objective(revealed.alice, rot, v_el_snu, trusted)

    grid = np.arange(-search.span_hz, search.span_hz + search.coarse_step_hz,
                     search.coarse_step_hz)
    costs = np.array([xi_of(f) for f in grid])
    k = int(np.argmin(costs))
    boundary = k in (0, grid.size - 1)

    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    gr = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = xi_of(c), xi_of(d)
    for _ in range(40):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = xi_of(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = xi_of(d)
    f_res = 0.5 * (a + b)

    t_all = np.arange(qsym.symbols.size) / qsym.baud_hz
    corrected = QuantumSymbols(
        symbols=qsym.symbols * np.exp(-2j * np.pi * f_res * t_all),
        baud_hz=qsym.baud_hz, sample_idx=qsym.sample_idx,
        timing_index=qsym.timing_index)
    return f_res, corrected, boundary


def phase_align(qsym: QuantumSymbols, revealed: RevealedSet):
    """Global rotation maximizing the Alice-Bob covariance.

    Closed form: theta = arg(sum conj(alice) * bob).  Returns
    ``(theta, corrected QuantumSymbols)``.
    """
    bob = qsym.symbols[revealed.indices]
    c = np.vdot(revealed.alice, bob)
    if abs(c) == 0:
        raise QuantumDspError("zero covariance: no signal to align")
    theta = float(np.angle(c))
    corrected = QuantumSymbols(symbols=qsym.symbols * np.exp(-1j * theta),
                               baud_hz=qsym.baud_hz, sample_idx=qsym.sample_idx,
                               timing_index=qsym.timing_index)
    return theta, corrected


def estimate_parameters(qsym: QuantumSymbols, revealed: RevealedSet,
                        v_el_snu, trusted_receiver=True, n0_rel_var=0.0,
                        block_id=-1) -> EstimationReport:
    """Per-quadrature regression x_B = t * x_A + z, pooled over I and Q.

    ``xi_hat`` is the residual variance beyond shot noise (and beyond the
    calibrated electronic noise when the receiver is trusted); it is not
    clamped at zero.  The 3-sigma intervals combine the standard regression /
    chi-squared formulas with the propagated shot-noise-calibration
    uncertainty ``n0_rel_var``.
    """
    if revealed.indices.size < 100:
        raise QuantumDspError("need at least 100 revealed symbols")
    bob = qsym.symbols[revealed.indices]
    xa = np.concatenate([revealed.alice.real, revealed.alice.imag])
    xb = np.concatenate([bob.real, bob.imag])
    n = xa.size

    sxx = np.dot(xa, xa)
    t_hat = np.dot(xa, xb) / sxx
    resid = xb - t_hat * xa
    s2 = np.var(resid)
    xi = s2 - 1.0 - (v_el_snu if trusted_receiver else 0.0)

    sigma_t = np.sqrt(s2 / sxx)
    # residual-variance uncertainty plus SNU-conversion uncertainty; the
    # conversion scales the whole measured variance, so its relative error
    # enters with weight (s2 and the subtracted noise terms)
    var_s2 = 2.0 * s2**2 / (n - 1)
    var_cal = n0_rel_var * s2**2
    sigma_xi = np.sqrt(var_s2 + var_cal)
    return EstimationReport(t_hat=float(t_hat), xi_hat_snu=float(xi),
                            ci3_t=float(3 * sigma_t), ci3_xi=float(3 * sigma_xi),
                            n_revealed=int(revealed.indices.size),
                            residual_variance=float(s2), block_id=block_id)
