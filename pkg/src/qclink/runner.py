"""Experiment orchestration: configuration, block scheduling with
interleaved calibration, end-to-end execution and metrics persistence.

Determinism contract: every stochastic quantity is drawn from a generator
spawned from the run's root seed along a fixed tree (per scheduled block,
per purpose), and emitted timestamps are simulated time (cumulative block
duration), so identical config + seed reproduces byte-identical outputs.
"""

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import calibration as calib
from . import iqio
from .channel import (CaptureMode, ChannelParams, JitterSpec, RxCapture,
                      propagate, wiener_phase)
from .core import IQStream, seed_sequence
from .rxclassical import ClassicalRxReport, CmaConfig, classical_receive
from .rxquantum import (QuantumDspError, ResidualSearch, RevealedSet,
                        estimate_parameters, phase_align, quantum_front_end,
                        residual_fo_correct, reveal)
from .security import SecurityParams, key_rate, null_key_threshold
from .txdsp import ChannelPlan, TxOutput, TxPlan, synthesize


class ConfigError(ValueError):
    pass


@dataclass
class ClassicalChannelConfig:
    baud_hz: float = 4e9
    rolloff: float = 0.1
    shift_hz: float = 4e9
    amplitude: float = 9.5
    tx_noise_dbc: Optional[float] = -20.0


@dataclass
class QuantumChannelConfig:
    baud_hz: float = 250e6
    rolloff: float = 0.2
    shift_hz: float = 1e9
    va_snu: float = 0.49


@dataclass
class ChannelConfig:
    length_km: float = 15.0
    loss_db_per_km: float = 0.2
    linewidth_tx_hz: float = 100.0
    linewidth_lo_hz: float = 100.0
    f_offset_hz: float = 50e3
    jitter_rms_hz: float = 200.0
    jitter_mean_hz: float = 0.0
    jitter_correlation_blocks: float = 1.0
    leakage_db: float = -13.0
    clearance_db: float = 13.0
    enob: float = 6.0
    eta: float = 1.0
    extra_xi_snu: float = 0.0065
    quantize: bool = True
    full_scale_sigmas: float = 4.0


@dataclass
class CmaSection:
    num_taps: int = 21
    step_size: float = 5e-4
    warmup_symbols: int = 4000


@dataclass
class ResidualSection:
    span_hz: float = 5000.0
    coarse_step_hz: float = 50.0


@dataclass
class SecuritySection:
    beta: float = 0.95
    deduct_revealed: bool = False


@dataclass
class ExperimentConfig:
    seed: int = 12345
    sample_rate_hz: float = 20e9
    span_symbols: int = 64
    blocks: int = 20
    quantum_symbols_per_block: int = 12500
    calibration_every: int = 5
    revealed_fraction: float = 0.5
    trusted_receiver: bool = True
    vv_window: int = 65
    quantum_enabled: bool = True
    out_dir: Optional[str] = None
    dump_iq: bool = False
    classical: ClassicalChannelConfig = field(default_factory=ClassicalChannelConfig)
    quantum: QuantumChannelConfig = field(default_factory=QuantumChannelConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    cma: CmaSection = field(default_factory=CmaSection)
    residual_search: ResidualSection = field(default_factory=ResidualSection)
    security: SecuritySection = field(default_factory=SecuritySection)

    def __post_init__(self):
        if self.blocks < 1 or self.quantum_symbols_per_block < 64:
            raise ConfigError("blocks >= 1 and quantum_symbols_per_block >= 64 required")
        if not 0 < self.revealed_fraction <= 1:
            raise ConfigError("revealed_fraction must be in (0, 1]")
        if self.calibration_every < 1:
            raise ConfigError("calibration_every must be >= 1")
        # delegate physical invariants
        self.tx_plan()
        self.channel_params()
        n_classical = self.classical_symbols_per_block()
        if self.cma.warmup_symbols >= n_classical // 2:
            raise ConfigError("CMA warmup must be shorter than half a block")

    # ---- derived objects ----

    def tx_plan(self) -> TxPlan:
        c = self.classical
        q = self.quantum
        return TxPlan(
            classical=ChannelPlan(baud_hz=c.baud_hz, rolloff=c.rolloff,
                                  shift_hz=c.shift_hz, amplitude=c.amplitude,
                                  tx_noise_dbc=c.tx_noise_dbc),
            quantum=ChannelPlan(baud_hz=q.baud_hz, rolloff=q.rolloff,
                                shift_hz=q.shift_hz, amplitude=np.sqrt(q.va_snu)),
            sample_rate_hz=self.sample_rate_hz,
            span_symbols=self.span_symbols)

    def classical_symbols_per_block(self):
        plan = self.tx_plan()
        ratio = plan.sps_quantum // plan.sps_classical
        return self.quantum_symbols_per_block * ratio

    def channel_params(self) -> ChannelParams:
        ch = self.channel
        params = ChannelParams(
            length_km=ch.length_km, loss_db_per_km=ch.loss_db_per_km,
            linewidth_tx_hz=ch.linewidth_tx_hz, linewidth_lo_hz=ch.linewidth_lo_hz,
            f_offset_hz=ch.f_offset_hz,
            jitter=JitterSpec(rms_hz=ch.jitter_rms_hz, mean_hz=ch.jitter_mean_hz,
                              correlation_blocks=ch.jitter_correlation_blocks),
            leakage_db=ch.leakage_db, clearance_db=ch.clearance_db,
            enob=ch.enob, eta=ch.eta, extra_xi_snu=ch.extra_xi_snu)
        if ch.quantize:
            sc, sq = self._expected_path_sigmas(params)
            params.full_scale_classical = ch.full_scale_sigmas * sc
            params.full_scale_quantum = ch.full_scale_sigmas * sq
        return params

    def _expected_path_sigmas(self, params: ChannelParams):
        """Analytic per-quadrature std of each digitized path at the DATA
        operating point; fixes the (hardware-constant) quantizer ranges."""
        plan = self.tx_plan()
        T = params.transmittance
        eta = params.eta
        noise = 1.0 + params.v_el_snu
        ntx = 10 ** (self.classical.tx_noise_dbc / 10) if self.classical.tx_noise_dbc is not None else 0.0
        p_c = eta * T * self.classical.amplitude**2 * (1 + ntx) / (2 * plan.sps_classical)
        g2 = 10 ** (params.leakage_db / 10) if np.isfinite(params.leakage_db) else 0.0
        p_q = eta * (T * self.quantum.va_snu / (2 * plan.sps_quantum)
                     + g2 * p_c / eta + params.extra_xi_snu)
        return np.sqrt(p_c + noise), np.sqrt(p_q + noise)


_SECTION_TYPES = {
    "classical": ClassicalChannelConfig,
    "quantum": QuantumChannelConfig,
    "channel": ChannelConfig,
    "cma": CmaSection,
    "residual_search": ResidualSection,
    "security": SecuritySection,
}


def config_from_dict(data) -> ExperimentConfig:
    if data is None:
        raise ConfigError("empty configuration")
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    kwargs = {}
    valid = set(ExperimentConfig.__dataclass_fields__)
    for key, value in data.items():
        if key not in valid:
            raise ConfigError(f"unknown configuration key: {key!r}")
        if key in _SECTION_TYPES:
            cls = _SECTION_TYPES[key]
            section_valid = set(cls.__dataclass_fields__)
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            for sub in value:
                if sub not in section_valid:
                    raise ConfigError(f"unknown configuration key: {key}.{sub}")
            kwargs[key] = cls(**value)
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    data = yaml.safe_load(path.read_text())
    return config_from_dict(data)


def paper_15km_config(**overrides) -> ExperimentConfig:
    """Bundled preset for the 15 km operating point (desk scale)."""
    cfg = ExperimentConfig()
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _spawn_rngs(seedseq, n):
    return [np.random.default_rng(c) for c in seedseq.spawn(n)]


def _zero_tx(plan: TxPlan, n_samples):
    from .core import SymbolFrame
    from .txdsp import TxTruth
    zeros = np.zeros(n_samples, dtype=np.complex128)
    frame = None
    return TxOutput(
        x_pol=IQStream(zeros, plan.sample_rate_hz),
        y_pol=IQStream(zeros.copy(), plan.sample_rate_hz),
        truth=TxTruth(classical_frame=frame, quantum_frame=frame))


def _schedule(cfg: ExperimentConfig):
    """Block mode sequence: one DARK and one LEAK up front, then a SHOT
    calibration every ``calibration_every`` DATA blocks."""
    modes = [CaptureMode.CAL_DARK]
    if cfg.quantum_enabled:
        modes.append(CaptureMode.CAL_LEAK)
    remaining = cfg.blocks
    while remaining > 0:
        if cfg.quantum_enabled:
            modes.append(CaptureMode.CAL_SHOT)
        chunk = min(cfg.calibration_every, remaining)
        modes.extend([CaptureMode.DATA] * chunk)
        remaining -= chunk
    return modes


def process_data_block(capture: RxCapture, cfg: ExperimentConfig, cal,
                       plan: TxPlan, block_id=-1):
    """Classical + quantum DSP for one DATA capture. Returns a record dict."""
    cma_cfg = CmaConfig(num_taps=cfg.cma.num_taps, step_size=cfg.cma.step_size,
                        warmup_symbols=cfg.cma.warmup_symbols)
    rec = {"block_id": block_id, "mode": capture.mode.value, "flags": []}
    report = classical_receive(capture.classical_path, plan, cma_cfg,
                               capture.truth.tx.truth.classical_frame,
                               vv_window=cfg.vv_window)
    rec["ber"] = report.ber_report.ber
    rec["bit_errors"] = report.ber_report.bit_errors
    rec["bit_count"] = report.ber_report.bit_count
    rec["f_hat_hz"] = report.carrier.f_hat_hz
    rec["timing_index"] = report.timing_index
    rec["flags"].extend(report.flags)

    if not cfg.quantum_enabled:
        return rec
    ratio = plan.sps_quantum // plan.sps_classical
    try:
        qsym = quantum_front_end(capture, cal, report, plan)
        revealed = reveal(qsym, capture.truth.tx.truth.quantum_frame,
                          cfg.revealed_fraction, skip_edge=cfg.span_symbols + 8,
                          warmup_quantum=cfg.cma.warmup_symbols // ratio + 2)
        if cfg.residual_search.span_hz > 0:
            search = ResidualSearch(span_hz=cfg.residual_search.span_hz,
                                    coarse_step_hz=cfg.residual_search.coarse_step_hz)
            f_res, qc, boundary = residual_fo_correct(
                qsym, revealed, search, v_el_snu=cal.v_el_snu,
                trusted=cfg.trusted_receiver)
            if boundary:
                rec["flags"].append("residual_fo_boundary")
        else:
            f_res, qc = 0.0, qsym
        rev2 = RevealedSet(revealed.indices, revealed.alice,
                           qc.symbols[revealed.indices], revealed.fraction)
        theta, qc2 = phase_align(qc, rev2)
        rev3 = RevealedSet(revealed.indices, revealed.alice,
                           qc2.symbols[revealed.indices], revealed.fraction)
        est = estimate_parameters(qc2, rev3, cal.v_el_snu,
                                  trusted_receiver=cfg.trusted_receiver,
                                  n0_rel_var=cal.n0_rel_var, block_id=block_id)
        rec.update({"f_res_hz": f_res, "theta": theta, "t_hat": est.t_hat,
                    "xi_hat_snu": est.xi_hat_snu, "ci3_xi": est.ci3_xi,
                    "ci3_t": est.ci3_t, "n_revealed": est.n_revealed})
    except QuantumDspError as exc:
        rec["flags"].append(f"quantum_dsp: {exc}")
    return rec


def _truth_xi_record(capture: RxCapture, cal_quant_inband):
    """Injected excess noise visible to the estimator: in-band leakage +
    configured extra noise + quantization noise differential against the
    shot-noise calibration reference."""
    comps = dict(capture.truth.xi_components_snu)
    if "quantization" in comps and cal_quant_inband is not None:
        comps["quantization"] = comps["quantization"] - cal_quant_inband
    comps["total"] = float(sum(comps.values()))
    return comps


def run_experiment(cfg: ExperimentConfig, post_hoc_linewidth_hz=None,
                   progress=None, iq_dir=None) -> MetricsLog:
    """Run the configured schedule and aggregate metrics.

    With ``post_hoc_linewidth_hz`` every DATA capture is additionally
    reprocessed after multiplying the stored streams by an extra Wiener
    phase of that combined linewidth (off-the-shelf-laser emulation on
    recorded data); the record then carries ``xi_hat_posthoc_snu``.
    """
    plan = cfg.tx_plan()
    params = cfg.channel_params()
    n_q = cfg.quantum_symbols_per_block
    n_c = cfg.classical_symbols_per_block()
    n_samples = n_q * plan.sps_quantum
    block_seconds = n_samples / plan.sample_rate_hz

    root = seed_sequence(cfg.seed)
    jitter_rng = np.random.default_rng(root.spawn(1)[0])
    block_root = root.spawn(1)[0]

    modes = _schedule(cfg)
    block_seeds = block_root.spawn(len(modes))

    jit = params.jitter
    rho = np.exp(-1.0 / max(jit.correlation_blocks, 1e-9))
    jitter_state = jit.mean_hz + jit.rms_hz * jitter_rng.standard_normal()

    log = MetricsLog()
    dark_capture = None
    shot_stats = []
    cal = None
    cal_quant_inband = None
    xi_leak_records = []
    sim_time = 0.0

    for block_id, (mode, seedseq) in enumerate(zip(modes, block_seeds)):
        rngs = _spawn_rngs(seedseq, 5)
        needs_tx = mode in (CaptureMode.DATA, CaptureMode.CAL_LEAK)
        if needs_tx:
            bits_c = rngs[0].integers(0, 2, 2 * n_c)
            if cfg.quantum_enabled and cfg.quantum.va_snu > 0:
                bits_q = rngs[1].integers(0, 2, 2 * n_q)
            else:
                bits_q = np.zeros(2 * n_q, dtype=np.int64)
            tx = synthesize(plan, bits_c, bits_q, rngs[2])
        else:
            tx = _zero_tx(plan, n_samples)

        if mode is CaptureMode.DATA:
            jitter_state = (jit.mean_hz + rho * (jitter_state - jit.mean_hz)
                            + np.sqrt(max(1 - rho**2, 0.0)) * jit.rms_hz
                            * jitter_rng.standard_normal())
            jitter_hz = jitter_state
        else:
            jitter_hz = 0.0

        capture = propagate(tx, params, mode, rngs[3], plan=plan,
                            jitter_hz=jitter_hz,
                            track_truth=cfg.quantum_enabled)
        if iq_dir is not None:
            iq_dir = Path(iq_dir)
            iq_dir.mkdir(parents=True, exist_ok=True)
            stem = f"block{block_id:04d}_{mode.value}"
            iqio.write_iq(iq_dir / f"{stem}_classical.iq", capture.classical_path)
            iqio.write_iq(iq_dir / f"{stem}_quantum.iq", capture.quantum_path)
        rec = {"block_id": block_id, "mode": mode.value, "flags": [],
               "time_s": sim_time}

        if mode is CaptureMode.CAL_DARK:
            dark_capture = capture
        elif mode is CaptureMode.CAL_SHOT:
            try:
                single = calib.calibrate(dark_capture, capture, plan,
                                         block_id=block_id)
                # pool successive shot calibrations: the shot-noise reference
                # error is common to every data block using it, so averaging
                # across calibration blocks shrinks a run-wide bias
                shot_stats.append((single.v_shot_total, single.n_shot))
                n_tot = sum(n for _, n in shot_stats)
                v_pooled = sum(v * n for v, n in shot_stats) / n_tot
                cal = calib.NoiseCalibration(
                    v_dark=single.v_dark, v_shot_total=v_pooled,
                    n_dark=single.n_dark, n_shot=n_tot,
                    block_id=block_id).validate()
                cal_quant_inband = capture.truth.xi_components_snu.get("quantization")
                rec.update({"v_dark": cal.v_dark, "v_shot_total": cal.v_shot_total,
                            "n0": cal.n0, "v_el_snu": cal.v_el_snu,
                            "n0_rel_var": cal.n0_rel_var})
            except calib.CalibrationError as exc:
                rec["flags"].append(f"calibration: {exc}")
        elif mode is CaptureMode.CAL_LEAK:
            if cal is not None:
                xi_leak, flagged = calib.leakage_excess(capture, cal, plan)
                rec["xi_leak_snu"] = xi_leak
                if flagged:
                    rec["flags"].append("negative_leakage_estimate")
                xi_leak_records.append(xi_leak)
            else:
                rec["xi_leak_pending"] = True
                rec["_leak_capture"] = capture  # resolved after first SHOT
        elif mode is CaptureMode.DATA:
            if cal is None and cfg.quantum_enabled:
                rec["flags"].append("no_valid_calibration")
            else:
                data_rec = process_data_block(capture, cfg, cal, plan,
                                              block_id=block_id)
                data_rec.pop("block_id")
                data_rec.pop("mode")
                rec["flags"].extend(data_rec.pop("flags"))
                rec.update(data_rec)
                if cfg.quantum_enabled:
                    rec["truth_xi_snu"] = _truth_xi_record(capture, cal_quant_inband)
                    rec["truth_jitter_hz"] = jitter_hz
                if post_hoc_linewidth_hz is not None:
                    noisy = _add_stored_phase_noise(capture, post_hoc_linewidth_hz,
                                                    rngs[4])
                    ph_rec = process_data_block(noisy, cfg, cal, plan,
                                                block_id=block_id)
                    rec["xi_hat_posthoc_snu"] = ph_rec.get("xi_hat_snu")
                    rec["ber_posthoc"] = ph_rec.get("ber")
                    rec["flags"].extend(f"posthoc_{f}" for f in ph_rec["flags"])

        sim_time += block_seconds
        log.records.append(rec)
        if progress is not None:
            progress(rec)

    # LEAK blocks scheduled before the first SHOT: evaluate with the first calibration
    for rec in log.records:
        if rec.pop("xi_leak_pending", False):
            capture = rec.pop("_leak_capture")
            if cal is not None:
                xi_leak, flagged = calib.leakage_excess(capture, cal, plan)
                rec["xi_leak_snu"] = xi_leak
                if flagged:
                    rec["flags"].append("negative_leakage_estimate")
                xi_leak_records.append(xi_leak)

    log.summary = _summarize(cfg, log.records, xi_leak_records)
    return log


def _add_stored_phase_noise(capture: RxCapture, linewidth_hz, rng) -> RxCapture:
    """Multiply both stored paths by one extra Wiener phase realization."""
    fs = capture.classical_path.sample_rate_hz
    theta = wiener_phase(len(capture.classical_path), linewidth_hz, fs, rng)
    rot = np.exp(1j * theta)
    return RxCapture(
        classical_path=IQStream(capture.classical_path.samples * rot, fs,
                                capture.classical_path.units),
        quantum_path=IQStream(capture.quantum_path.samples * rot, fs,
                              capture.quantum_path.units),
        mode=capture.mode, truth=capture.truth)


def _summarize(cfg: ExperimentConfig, records, xi_leak_records):
    data = [r for r in records if r["mode"] == CaptureMode.DATA.value]
    ok = [r for r in data if not r["flags"]]
    flagged = len(data) - len(ok)
    summary = {
        "data_blocks": len(data),
        "flagged_blocks": flagged,
        "mean_ber": None,
        "mean_xi_snu": None,
        "mean_xi_posthoc_snu": None,
        "mean_t_hat": None,
        "mean_v_el_snu": None,
        "mean_xi_leak_snu": float(np.mean(xi_leak_records)) if xi_leak_records else None,
        "mean_truth_xi_snu": None,
        "key_rate": None,
    }
    bits = sum(r.get("bit_count", 0) for r in ok)
    if bits:
        summary["mean_ber"] = sum(r.get("bit_errors", 0) for r in ok) / bits
    xis = [r["xi_hat_snu"] for r in ok if "xi_hat_snu" in r]
    cal_recs = [r for r in records
                if r["mode"] == CaptureMode.CAL_SHOT.value and "v_el_snu" in r]
    if cal_recs:
        summary["mean_v_el_snu"] = float(np.mean([r["v_el_snu"] for r in cal_recs]))
    if xis:
        summary["mean_xi_snu"] = float(np.mean(xis))
        summary["mean_t_hat"] = float(np.mean([r["t_hat"] for r in ok]))
        truths = [r["truth_xi_snu"]["total"] for r in ok if "truth_xi_snu" in r]
        if truths:
            summary["mean_truth_xi_snu"] = float(np.mean(truths))
        post = [r["xi_hat_posthoc_snu"] for r in ok
                if r.get("xi_hat_posthoc_snu") is not None]
        if post:
            summary["mean_xi_posthoc_snu"] = float(np.mean(post))
        t_est = max(min(summary["mean_t_hat"] ** 2 / cfg.channel.eta, 1.0), 1e-12)
        sec = SecurityParams(
            va_snu=cfg.quantum.va_snu, transmittance=t_est,
            xi_snu=max(summary["mean_xi_snu"], 0.0), eta=cfg.channel.eta,
            v_el_snu=summary["mean_v_el_snu"] or 0.0,
            beta=cfg.security.beta, baud_hz=cfg.quantum.baud_hz,
            revealed_fraction=cfg.revealed_fraction,
            deduct_revealed=cfg.security.deduct_revealed)
        report = key_rate(sec)
        try:
            xi_null = null_key_threshold(sec)
        except Exception:
            xi_null = None
        summary["key_rate"] = {
            "mutual_information_bits": report.mutual_information,
            "holevo_bound_bits": report.holevo_bound,
            "key_rate_per_symbol": report.key_rate_per_symbol,
            "key_rate_bps": report.key_rate_bps,
            "xi_null_snu": xi_null,
        }
    return summary


# ---- output emission ----

def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def emit_outputs(log: MetricsLog, cfg: ExperimentConfig, out_dir):
    """Write JSON-lines records, the run summary and CSV plot series."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "records.jsonl", "w") as fh:
        for rec in log.records:
            fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
    with open(out / "summary.json", "w") as fh:
        json.dump(log.summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    with open(out / "config_echo.yaml", "w") as fh:
        yaml.safe_dump(asdict(cfg), fh, sort_keys=True)

    with open(out / "xi_blocks.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "xi", "ci_low", "ci_high"])
        for rec in log.records:
            if rec["mode"] == CaptureMode.DATA.value and "xi_hat_snu" in rec:
                xi = rec["xi_hat_snu"]
                ci = rec.get("ci3_xi", 0.0)
                writer.writerow([rec["block_id"], repr(xi),
                                 repr(xi - ci), repr(xi + ci)])

    _emit_spectrum_csv(cfg, out / "spectrum.csv")
    _emit_threshold_csv(cfg, log, out / "keyrate_vs_xi.csv")


def _emit_spectrum_csv(cfg: ExperimentConfig, path):
    """Periodogram of a short noiseless tx block (combined channels)."""
    from scipy.signal import welch
    plan = cfg.tx_plan()
    n_q = min(cfg.quantum_symbols_per_block, 2048)
    n_c = n_q * (plan.sps_quantum // plan.sps_classical)
    root = seed_sequence(cfg.seed).spawn(3)[2]
    rngs = _spawn_rngs(root, 3)
    bits_c = rngs[0].integers(0, 2, 2 * n_c)
    bits_q = rngs[1].integers(0, 2, 2 * n_q)
    tx = synthesize(plan, bits_c, bits_q, rngs[2])
    combined = tx.x_pol.samples + tx.y_pol.samples
    freqs, psd = welch(combined, fs=plan.sample_rate_hz, nperseg=4096,
                       return_onesided=False)
    order = np.argsort(freqs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", "psd"])
        for i in order:
            writer.writerow([repr(float(freqs[i])), repr(float(psd[i]))])


def _emit_threshold_csv(cfg: ExperimentConfig, log: MetricsLog, path):
    t_est = cfg.channel_params().transmittance
    summary_key = (log.summary or {}).get("key_rate") or {}
    sec = SecurityParams(va_snu=cfg.quantum.va_snu, transmittance=t_est,
                         xi_snu=0.0, eta=cfg.channel.eta,
                         v_el_snu=cfg.channel_params().v_el_snu,
                         beta=cfg.security.beta, baud_hz=cfg.quantum.baud_hz)
    try:
        xi_null = null_key_threshold(sec)
    except Exception:
        xi_null = 0.05
    grid = np.linspace(0.0, 1.5 * xi_null, 61)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xi_snu", "k_per_symbol", "k_bps"])
        for xi in grid:
            rep = key_rate(replace(sec, xi_snu=float(xi)))
            writer.writerow([repr(float(xi)), repr(rep.key_rate_raw),
                             repr(rep.key_rate_raw * cfg.quantum.baud_hz)])


def set_config_value(cfg: ExperimentConfig, dotted_key, value):
    """Return a copy of ``cfg`` with ``section.key`` (or a top-level key)
    replaced; used by the sweep CLI."""
    parts = dotted_key.split(".")
    if len(parts) == 1:
        if parts[0] not in ExperimentConfig.__dataclass_fields__:
            raise ConfigError(f"unknown sweep key {dotted_key!r}")
        return replace(cfg, **{parts[0]: value})
    if len(parts) == 2 and parts[0] in _SECTION_TYPES:
        section = getattr(cfg, parts[0])
        if parts[1] not in type(section).__dataclass_fields__:
            raise ConfigError(f"unknown sweep key {dotted_key!r}")
        return replace(cfg, **{parts[0]: replace(section, **{parts[1]: value})})
    raise ConfigError(f"unknown sweep key {dotted_key!r}")
