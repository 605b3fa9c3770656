"""Interleaved shot-noise / electronic-noise calibration and SNU conversion.

Calibration variances are computed after the *same* front-end filtering as
quantum data (quantum-band derotation, RRC matched filter, symbol-spaced
downsampling), so the shot-noise reference sees identical filtering and the
conversion to shot-noise units is unbiased.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .channel import CaptureMode, RxCapture
from .core import IQStream, Units
from .txdsp import TxPlan, frequency_shift


class CalibrationError(ValueError):
    pass


@dataclass
class NoiseCalibration:
    v_dark: float        # electronic-noise variance, capture units^2 per quadrature
    v_shot_total: float  # shot + electronic variance, capture units^2
    n_dark: int          # quadrature sample counts behind each estimate
    n_shot: int
    block_id: int = -1

    @property
    def n0(self):
        """One shot-noise unit in capture units^2."""
        return self.v_shot_total - self.v_dark

    @property
    def v_el_snu(self):
        return self.v_dark / self.n0

    @property
    def n0_rel_var(self):
        """First-order relative variance of the n0 estimate (chi-squared)."""
        return (2 * self.v_shot_total**2 / self.n_shot
                + 2 * self.v_dark**2 / self.n_dark) / self.n0**2

    def validate(self):
        if not self.v_shot_total > self.v_dark > 0:
            raise CalibrationError(
                f"invalid calibration: v_shot_total={self.v_shot_total:.3g} "
                f"must exceed v_dark={self.v_dark:.3g} > 0")
        return self


def quantum_band_symbols(capture: RxCapture, plan: TxPlan, timing_index=0):
    """Quantum front-end filtering of a capture: derotate the quantum band to
    baseband, matched-filter (quantum roll-off), downsample at symbol rate."""
    shape = plan.shape_quantum()
    base = frequency_shift(capture.quantum_path, -plan.quantum.shift_hz)
    filt = fftconvolve(base.samples, shape.taps, mode="same")
    sym = filt[timing_index::shape.sps]
    edge = plan.span_symbols
    return sym[edge:-edge] if sym.size > 2 * edge else sym


def _pooled_variance(symbols):
    return 0.5 * (np.var(symbols.real) + np.var(symbols.imag)), 2 * symbols.size


def calibrate(dark: RxCapture, shot: RxCapture, plan: TxPlan, block_id=-1) -> NoiseCalibration:
    """Estimate v_dark, v_shot_total and n0 from a CAL_DARK and CAL_SHOT pair."""
    if dark.mode is not CaptureMode.CAL_DARK:
        raise CalibrationError("dark capture must have mode CAL_DARK")
    if shot.mode is not CaptureMode.CAL_SHOT:
        raise CalibrationError("shot capture must have mode CAL_SHOT")
    v_dark, n_dark = _pooled_variance(quantum_band_symbols(dark, plan))
    v_shot, n_shot = _pooled_variance(quantum_band_symbols(shot, plan))
    return NoiseCalibration(v_dark=v_dark, v_shot_total=v_shot,
                            n_dark=n_dark, n_shot=n_shot,
                            block_id=block_id).validate()


def to_snu(values, cal: NoiseCalibration):
    """Rescale quadrature amplitudes into sqrt(SNU).

    Accepts an :class:`IQStream` (returns a stream tagged SNU_SQRT) or a bare
    complex array.
    """
    cal.validate()
    s = 1.0 / np.sqrt(cal.n0)
    if isinstance(values, IQStream):
        return IQStream(values.samples * s, values.sample_rate_hz, Units.SNU_SQRT)
    return np.asarray(values) * s


def leakage_excess(leak: RxCapture, cal: NoiseCalibration, plan: TxPlan):
    """Excess noise (SNU) in the quantum band with the quantum signal off and
    the classical channel on: variance beyond shot + electronic noise."""
    if leak.mode is not CaptureMode.CAL_LEAK:
        raise CalibrationError("capture must have mode CAL_LEAK")
    cal.validate()
    v, n = _pooled_variance(quantum_band_symbols(leak, plan))
    xi = v / cal.n0 - 1.0 - cal.v_el_snu
    # 3 sigma statistical bound on a null estimate
    sigma = (v / cal.n0) * np.sqrt(2.0 / n + cal.n0_rel_var)
    flagged = xi < -3 * sigma
    return xi, flagged
