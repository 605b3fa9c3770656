"""Classical receiver: equalization, carrier recovery, synchronization."""

import numpy as np
import pytest

from qclink.core import (IQStream, frame_from_indices, qpsk_hard_decision,
                         qpsk_map, rng_from, seed_sequence)
from qclink.rxclassical import (CmaConfig, classical_receive, cma_equalize,
                                matched_filter, sync_reference, timing_search,
                                vv_cfe, vv_cpe)
from qclink.txdsp import ChannelPlan, TxPlan, pulse_shape, rrc_taps


def _plan(amplitude=9.5):
    return TxPlan(
        classical=ChannelPlan(baud_hz=4e9, rolloff=0.1, shift_hz=4e9,
                              amplitude=amplitude),
        quantum=ChannelPlan(baud_hz=250e6, rolloff=0.2, shift_hz=1e9,
                            amplitude=0.0),
        sample_rate_hz=20e9, span_symbols=64)


def _shaped_frame(n_sym, seed, plan):
    rng = rng_from(seed_sequence(seed))
    bits = rng.integers(0, 2, 2 * n_sym)
    frame = qpsk_map(bits, plan.classical.amplitude, plan.classical.baud_hz)
    wave = pulse_shape(frame, plan.shape_classical(), trim_same=True)
    return frame, wave


def _qpsk_symbols(n, seed, snr_db=None):
    rng = rng_from(seed_sequence(seed))
    pts = np.exp(1j * (np.pi / 4 + (np.pi / 2) * rng.integers(0, 4, n)))
    if snr_db is not None:
        sigma = np.sqrt(10 ** (-snr_db / 10) / 2)
        pts = pts + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return pts


def test_timing_search_finds_symbol_instant():
    plan = _plan()
    frame, wave = _shaped_frame(2000, 0, plan)
    mf = matched_filter(wave, plan.shape_classical())
    assert timing_search(mf, plan.sps_classical) == 0
    shifted = IQStream(np.roll(mf.samples, 3), mf.sample_rate_hz)
    assert timing_search(shifted, plan.sps_classical) == 3


def test_cma_identity_channel_fixed_point():
    """On an ISI-free constant-modulus input the center-spike start is already
    near the optimum: taps stay a spike and decisions are error-free."""
    plan = _plan()
    cfg = CmaConfig(warmup_symbols=1000)
    frame, wave = _shaped_frame(6000, 1, plan)
    mf = matched_filter(wave, plan.shape_classical())
    y, w, err, diverged = cma_equalize(mf, plan.sps_classical, 0, cfg)
    assert not diverged
    center = cfg.num_taps // 2
    assert np.abs(w[center]) > 10 * np.max(np.abs(np.delete(w, center)))
    lag, rot = sync_reference(y[1000:], frame.points[1000:] / plan.classical.amplitude)
    aligned = y[1000:] * np.exp(-1j * rot * np.pi / 2)
    sl = slice(1100, 5800)
    decided = qpsk_hard_decision(aligned[sl])
    assert np.array_equal(decided, frame.indices[sl.start - lag + 1000:sl.stop - lag + 1000])


def test_cma_corrects_isi_channel():
    """Symbol-spaced two-tap channel with a strong rotated echo, noiseless:
    unequalized decisions err, equalized decisions are clean.  (A weak real
    echo never flips noiseless QPSK signs, so the echo must be strong and
    rotated for the premise to hold.)"""
    plan = _plan()
    sps = plan.sps_classical
    cfg = CmaConfig(warmup_symbols=2000)
    frame, wave = _shaped_frame(20000, 2, plan)
    x = wave.samples
    distorted = x + 0.75 * np.exp(-1j * np.pi / 4) * np.roll(x, sps)
    mf = matched_filter(IQStream(distorted, wave.sample_rate_hz),
                        plan.shape_classical())
    # the raw matched-filter output errs
    raw = mf.samples[::sps][3000:19000] / plan.classical.amplitude
    raw_err = np.mean(qpsk_hard_decision(raw) != frame.indices[3000:19000])
    assert raw_err > 0.001
    y, w, err, diverged = cma_equalize(mf, sps, 0, cfg)
    assert not diverged
    lag, rot = sync_reference(y[3000:], frame.points[3000:] / plan.classical.amplitude)
    aligned = y * np.exp(-1j * rot * np.pi / 2)
    sl = slice(5000, 19000)  # leave settling room beyond the nominal warmup
    decided = qpsk_hard_decision(aligned[sl])
    assert np.array_equal(decided, frame.indices[sl.start - lag:sl.stop - lag])


def test_cma_rejects_short_input():
    plan = _plan()
    frame, wave = _shaped_frame(500, 3, plan)
    with pytest.raises(ValueError):
        cma_equalize(wave, plan.sps_classical, 0, CmaConfig(warmup_symbols=4000))


def test_vv_cfe_recovers_offset():
    baud = 4e9
    n = 50000
    f0 = 2.3456e6
    pts = _qpsk_symbols(n, 4, snr_db=15.0)
    k = np.arange(n)
    rotated = pts * np.exp(2j * np.pi * f0 * k / baud)
    f_hat, ambiguous = vv_cfe(rotated, baud)
    assert not ambiguous
    assert abs(f_hat - f0) < baud / 1e5


def test_vv_cfe_quarter_rotation_invariance():
    baud = 4e9
    pts = _qpsk_symbols(20000, 5, snr_db=12.0)
    k = np.arange(pts.size)
    rotated = pts * np.exp(2j * np.pi * 1e6 * k / baud)
    f_a, _ = vv_cfe(rotated, baud)
    f_b, _ = vv_cfe(rotated * 1j, baud)
    assert abs(f_a - f_b) < 1e-12 * baud


def test_vv_cfe_flags_near_ambiguity_edge():
    baud = 4e9
    pts = _qpsk_symbols(20000, 6)
    k = np.arange(pts.size)
    edge = baud / 8 * 0.9999
    rotated = pts * np.exp(2j * np.pi * edge * k / baud)
    _, ambiguous = vv_cfe(rotated, baud)
    assert ambiguous


def test_vv_cpe_tracks_slow_phase():
    pts = _qpsk_symbols(30000, 7, snr_db=20.0)
    k = np.arange(pts.size)
    drift = 0.4 * np.sin(2 * np.pi * k / 15000.0)
    track, corrected, slip = vv_cpe(pts * np.exp(1j * drift), window=65)
    assert not slip
    # the estimate carries a constant pi/2-grid offset; compare after removal
    err = track[200:-200] - drift[200:-200]
    err = err - np.round(np.mean(err) / (np.pi / 2)) * (np.pi / 2)
    assert np.std(err) < 0.05
    assert np.max(np.abs(err - np.mean(err))) < 0.2


def test_vv_cpe_quarter_rotation_invariance():
    pts = _qpsk_symbols(5000, 8, snr_db=15.0)
    track_a, _, _ = vv_cpe(pts, window=33)
    track_b, _, _ = vv_cpe(pts * np.exp(1j * np.pi / 2), window=33)
    delta = track_b - track_a
    delta = delta - delta[0]
    assert np.max(np.abs(delta)) < 1e-12


def test_vv_cpe_window_validation():
    with pytest.raises(ValueError):
        vv_cpe(np.ones(10, dtype=complex), window=4)


def test_sync_reference_lag_and_rotation():
    rng = rng_from(seed_sequence(9))
    ref = frame_from_indices(rng.integers(0, 4, 4000), 1.0, 1.0).points
    for true_lag, true_rot in ((7, 1), (-12, 3), (0, 0)):
        shifted = np.roll(ref, true_lag) * np.exp(1j * true_rot * np.pi / 2)
        lag, rot = sync_reference(shifted, ref, max_lag=32)
        assert (lag, rot) == (true_lag, true_rot)


def test_classical_receive_clean_channel():
    """Full chain, no channel impairments at all: zero bit errors and a
    near-zero frequency estimate."""
    from qclink.txdsp import synthesize
    plan = _plan()
    rng = rng_from(seed_sequence(10))
    n_q = 2048
    n_c = n_q * 16
    tx = synthesize(plan, rng.integers(0, 2, 2 * n_c),
                    np.zeros(2 * n_q, dtype=np.int64))
    cfg = CmaConfig(warmup_symbols=4000)
    report = classical_receive(tx.x_pol, plan, cfg, tx.truth.classical_frame)
    assert report.ber_report.bit_errors == 0
    assert report.flags == []
    assert abs(report.carrier.f_hat_hz) < 50.0
    assert report.timing_index == 0


def test_classical_receive_offset_and_noise():
    """50 kHz offset, shot noise and a modest amplitude: the chain still
    decides correctly and localizes the offset."""
    from qclink.channel import CaptureMode, ChannelParams, propagate
    from qclink.txdsp import synthesize
    plan = _plan()
    rng = rng_from(seed_sequence(11))
    n_q = 8192
    tx = synthesize(plan, rng.integers(0, 2, 2 * n_q * 16),
                    np.zeros(2 * n_q, dtype=np.int64))
    params = ChannelParams(length_km=15.0, linewidth_tx_hz=0.0,
                           linewidth_lo_hz=0.0, f_offset_hz=50e3)
    cap = propagate(tx, params, CaptureMode.DATA, rng, plan=plan,
                    track_truth=False)
    report = classical_receive(cap.classical_path, plan,
                               CmaConfig(warmup_symbols=4000),
                               tx.truth.classical_frame)
    assert report.ber_report.ber < 1e-3
    assert report.carrier.f_hat_hz == pytest.approx(50e3, abs=50.0)
    assert report.total_phase.size == report.symbol_sample_idx.size
