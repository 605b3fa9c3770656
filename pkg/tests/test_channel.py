"""Channel impairments: loss, phase noise, offsets, leakage, detection noise,
quantization and the propagate composition."""

import numpy as np
import pytest

from qclink.channel import (CaptureMode, ChannelParams, JitterSpec,
                            add_detection_noise, apply_frequency_offset,
                            apply_leakage, apply_loss, apply_phase_noise,
                            propagate, quantize, wiener_phase)
from qclink.core import IQStream, rng_from, seed_sequence
from qclink.txdsp import ChannelPlan, TxPlan, synthesize


def _plan():
    return TxPlan(
        classical=ChannelPlan(baud_hz=4e9, rolloff=0.1, shift_hz=4e9,
                              amplitude=9.5, tx_noise_dbc=-20.0),
        quantum=ChannelPlan(baud_hz=250e6, rolloff=0.2, shift_hz=1e9,
                            amplitude=np.sqrt(0.49)),
        sample_rate_hz=20e9, span_symbols=64)


def _params(**kw):
    defaults = dict(length_km=15.0, loss_db_per_km=0.2, linewidth_tx_hz=0.0,
                    linewidth_lo_hz=0.0, leakage_db=-np.inf, clearance_db=13.0,
                    extra_xi_snu=0.0)
    defaults.update(kw)
    return ChannelParams(**defaults)


def test_transmittance_values():
    p = _params()
    # 15 km at 0.2 dB/km is 3 dB total
    assert p.transmittance == pytest.approx(10 ** -0.3, rel=1e-12)
    assert _params(length_km=0.0).transmittance == 1.0
    assert p.v_el_snu == pytest.approx(10 ** -1.3, rel=1e-12)


def test_apply_loss_scales_power():
    s = IQStream(np.full(100, 2.0 + 0j), 1.0)
    out = apply_loss(s, 0.25)
    assert np.allclose(out.samples, 1.0)
    with pytest.raises(ValueError):
        apply_loss(s, 0.0)
    with pytest.raises(ValueError):
        apply_loss(s, 1.5)


def test_wiener_phase_increment_statistics():
    rng = rng_from(seed_sequence(0))
    theta = wiener_phase(200000, linewidth_hz=1e5, sample_rate_hz=1e9, rng=rng)
    inc = np.diff(theta)
    expected_var = 2 * np.pi * 1e5 / 1e9
    assert np.var(inc) == pytest.approx(expected_var, rel=0.05)
    assert theta[0] == 0.0
    flat = wiener_phase(100, 0.0, 1e9, rng, theta0=0.3)
    assert np.all(flat == 0.3)


def test_phase_noise_shared_realization():
    rng = rng_from(seed_sequence(1))
    a = IQStream(np.ones(1000, dtype=complex), 1e9)
    b = IQStream(np.full(1000, 2.0 + 0j), 1e9)
    out_a, theta = apply_phase_noise(a, 1e4, rng)
    out_b, theta_b = apply_phase_noise(b, 1e4, rng, theta=theta)
    assert np.array_equal(theta, theta_b)
    assert np.allclose(out_b.samples / out_a.samples, 2.0)
    assert np.allclose(np.abs(out_a.samples), 1.0)


def test_frequency_offset_tone():
    fs = 1e6
    s = IQStream(np.ones(1000, dtype=complex), fs)
    out = apply_frequency_offset(s, 1e3)
    k = np.arange(1000)
    assert np.allclose(out.samples, np.exp(2j * np.pi * 1e3 * k / fs))


def test_leakage_adds_scaled_field():
    q = IQStream(np.zeros(10, dtype=complex), 1.0)
    c = IQStream(np.full(10, 1.0 + 1.0j), 1.0)
    out = apply_leakage(q, c, -20.0)
    assert np.allclose(out.samples, 0.1 * (1 + 1j))
    same = apply_leakage(q, c, -np.inf)
    assert np.allclose(same.samples, 0.0)


def test_detection_noise_variance_levels():
    rng = rng_from(seed_sequence(2))
    zero = IQStream(np.zeros(400000, dtype=complex), 1.0)
    lo_on = add_detection_noise(zero, clearance_db=13.0, eta=1.0, rng=rng)
    v_on = 0.5 * (np.var(lo_on.samples.real) + np.var(lo_on.samples.imag))
    assert v_on == pytest.approx(1.0 + 10 ** -1.3, rel=0.01)
    lo_off = add_detection_noise(zero, clearance_db=13.0, eta=1.0, rng=rng,
                                 lo_on=False)
    v_off = 0.5 * (np.var(lo_off.samples.real) + np.var(lo_off.samples.imag))
    assert v_off == pytest.approx(10 ** -1.3, rel=0.02)


def test_detection_noise_eta_scales_signal_only():
    rng = rng_from(seed_sequence(3))
    sig = IQStream(np.full(200000, 10.0 + 0j), 1.0)
    out = add_detection_noise(sig, clearance_db=13.0, eta=0.25, rng=rng)
    assert np.mean(out.samples.real) == pytest.approx(5.0, abs=0.02)
    v = 0.5 * (np.var(out.samples.real) + np.var(out.samples.imag))
    assert v == pytest.approx(1.0 + 10 ** -1.3, rel=0.02)


def test_quantize_known_codes():
    # 2-bit mid-rise over [-1, 1]: levels at -0.75, -0.25, +0.25, +0.75
    s = IQStream(np.array([0.1 + 0.6j, -0.3 - 0.9j, 0.9 + 0j]), 1.0)
    out, clip = quantize(s, enob=2, full_scale=1.0)
    # mid-rise: no zero level, an exact 0 lands on +delta/2
    assert np.allclose(out.samples, [0.25 + 0.75j, -0.25 - 0.75j, 0.75 + 0.25j])
    assert clip == 0.0


def test_quantize_clipping_fraction():
    s = IQStream(np.array([5.0 + 0j, 0.0 + 5.0j, 0.1 + 0.1j, -5.0 - 5.0j]), 1.0)
    out, clip = quantize(s, enob=3, full_scale=1.0)
    # 4 clipped quadratures out of 8
    assert clip == pytest.approx(0.5)
    assert np.max(np.abs(out.samples.real)) <= 1.0


def test_quantize_validation():
    s = IQStream(np.ones(4), 1.0)
    with pytest.raises(ValueError):
        quantize(s, 6, 0.0)
    with pytest.raises(ValueError):
        quantize(s, 1, 1.0)


def _tx(plan, n_q, seed):
    rng = rng_from(seed_sequence(seed))
    n_c = n_q * 16
    return synthesize(plan, rng.integers(0, 2, 2 * n_c),
                      rng.integers(0, 2, 2 * n_q), rng)


def test_propagate_modes_gate_signals():
    """Identical noise realizations (same seed, same draw sequence) isolate
    the per-mode signal content as a power difference against CAL_SHOT."""
    plan = _plan()
    tx = _tx(plan, 256, 10)
    p = _params(clearance_db=60.0, leakage_db=-13.0)
    def run(mode):
        return propagate(tx, p, mode, rng_from(seed_sequence(11)), plan=plan)
    data = run(CaptureMode.DATA)
    dark = run(CaptureMode.CAL_DARK)
    shot = run(CaptureMode.CAL_SHOT)
    leak = run(CaptureMode.CAL_LEAK)
    pow_q = lambda c: np.mean(np.abs(c.quantum_path.samples) ** 2)
    pow_c = lambda c: np.mean(np.abs(c.classical_path.samples) ** 2)
    T = p.transmittance
    p_classical = T * 9.5**2 * 1.01 / 5  # signal plus -20 dBc tx noise
    assert pow_c(data) - pow_c(shot) == pytest.approx(p_classical, rel=0.05)
    assert pow_c(leak) - pow_c(shot) == pytest.approx(p_classical, rel=0.05)
    assert pow_q(data) - pow_q(shot) == pytest.approx(
        T * 0.49 / 80 + 10 ** -1.3 * p_classical, rel=0.1)
    assert pow_q(leak) - pow_q(shot) == pytest.approx(
        10 ** -1.3 * p_classical, rel=0.1)   # quantum off, leakage remains
    assert pow_c(dark) < 0.01                # LO off: electronic noise only
    assert data.truth.transmittance == pytest.approx(10 ** -0.3)


def test_propagate_truth_components_scale_with_leakage():
    plan = _plan()
    tx = _tx(plan, 512, 12)
    strong = propagate(tx, _params(leakage_db=-13.0),
                       CaptureMode.DATA, rng_from(seed_sequence(13)), plan=plan)
    weak = propagate(tx, _params(leakage_db=-23.0),
                     CaptureMode.DATA, rng_from(seed_sequence(13)), plan=plan)
    ratio = strong.truth.xi_components_snu["leakage"] / weak.truth.xi_components_snu["leakage"]
    assert ratio == pytest.approx(10.0, rel=1e-6)


def test_propagate_extra_noise_data_only():
    plan = _plan()
    tx = _tx(plan, 256, 14)
    p = _params(extra_xi_snu=0.01)
    data = propagate(tx, p, CaptureMode.DATA, rng_from(seed_sequence(15)), plan=plan)
    shot = propagate(tx, p, CaptureMode.CAL_SHOT, rng_from(seed_sequence(15)), plan=plan)
    assert data.truth.xi_components_snu["extra"] == pytest.approx(0.01)
    assert "extra" not in shot.truth.xi_components_snu


def test_propagate_quantization_bookkeeping():
    plan = _plan()
    tx = _tx(plan, 512, 16)
    p = _params(leakage_db=-13.0, extra_xi_snu=0.0065,
                full_scale_classical=25.0, full_scale_quantum=4.2)
    cap = propagate(tx, p, CaptureMode.DATA, rng_from(seed_sequence(17)), plan=plan)
    assert 0 <= cap.truth.clip_fraction["quantum"] < 0.01
    assert cap.truth.xi_components_snu["quantization"] > 0
    # ENOB 6 in-band quantization noise stays well below a shot-noise unit
    assert cap.truth.xi_components_snu["quantization"] < 0.05


def test_jitter_spec_defaults():
    j = JitterSpec()
    assert j.rms_hz == 0.0 and j.correlation_blocks == 1.0
