"""Experiment harness: configuration, Monte-Carlo runs, persistence.

Configs are flat ``key = value`` text files layered on top of a named
profile (``desk`` or ``paper``); unknown keys are errors so typos cannot
silently fall back to profile defaults. All outputs are plot-ready CSV or
JSON. With a fixed base seed and a single worker the emitted CSV bytes are
reproducible run to run.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import SystemConfig, assemble_channel, sample_channel
from .coherence import (
    CoherenceReport,
    PilotDesign,
    build_sensing_matrix,
    coherence_report,
)
from .dictionary import GridSpec, build_dictionaries
from .errors import ConfigError
from .estimator import SOLVERS, nmse, reconstruct_channel, snr_sigma2, synthesize_measurement
from .optimizer import (
    OptimizationTrace,
    OptimizerConfig,
    gaussian_init,
    loss,
    loss_gradient,
    optimize,
    sweep_lambda,
)

__all__ = [
    "ChannelModelConfig",
    "EvaluationConfig",
    "ExperimentConfig",
    "TrialRecord",
    "profile_config",
    "load_experiment_config",
    "save_design",
    "load_design",
    "save_trace",
    "run_design",
    "make_baseline_design",
    "run_baseline",
    "run_estimate",
    "run_report",
    "run_gradcheck",
    "run_sweep",
    "median_difference_ci",
]

# Seed-sequence stream tags; they decorrelate RNG streams that share a base
# seed (channel draws, measurement noise, baseline generation, gradcheck).
_NOISE_STREAM = 1
_BASELINE_STREAM = 2
_GRADCHECK_STREAM = 3


@dataclass(frozen=True)
class ChannelModelConfig:
    num_paths: int
    rician_k_db: float

    def __post_init__(self) -> None:
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")


@dataclass(frozen=True)
class EvaluationConfig:
    snr_db_list: tuple[float, ...]
    num_trials: int
    solver: str
    max_sparsity: int

    def __post_init__(self) -> None:
        if not self.snr_db_list:
            raise ValueError("snr_db_list must be non-empty")
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"unsupported solver '{self.solver}' (known: {sorted(SOLVERS)})")
        if self.max_sparsity < 1:
            raise ValueError("max_sparsity must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    grids: GridSpec
    optimizer: OptimizerConfig
    channel: ChannelModelConfig
    evaluation: EvaluationConfig
    base_seed: int
    methods: tuple[str, ...]


@dataclass(frozen=True)
class TrialRecord:
    """One Monte-Carlo estimation outcome."""

    method: str
    snr_db: float
    trial_index: int
    seed: int
    nmse: float
    elapsed_ms: float


_DESK_PROFILE = {
    "carrier_freq_hz": 3.5e9,
    "bandwidth_hz": 1.92e6,
    "num_subcarriers": 16,
    "num_tx": 8,
    "num_rx": 4,
    "seq_len": 4,
    "total_power": 512.0,
    "num_delay_taps": 8,
    "tx_spacing_wavelengths": 0.5,
    "rx_spacing_wavelengths": 0.5,
    "g_theta": 8,
    "g_phi": 16,
    "g_tau": 16,
    "p": 4,
    "q": 1.0,
    "lambda_bar": 1.5,
    # Slightly larger step than the full-scale default: the desk problem is
    # small enough that T=2000 then reaches the converged plateau.
    "learning_rate": 3e-3,
    "iterations": 2000,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "opt_seed": 0,
    "zero_threshold_rel": 1e-3,
    "num_paths": 3,
    "rician_k_db": 10.0,
    "snr_db_list": (0.0, 5.0, 10.0, 15.0, 20.0),
    "num_trials": 200,
    "solver": "omp",
    "max_sparsity": 3,
    "base_seed": 0,
    "methods": ("optimized", "gauss_random"),
}

_PAPER_PROFILE = {
    **_DESK_PROFILE,
    "num_subcarriers": 64,
    "num_tx": 32,
    "num_rx": 8,
    "seq_len": 8,
    "total_power": 16384.0,
    "num_delay_taps": 16,
    "g_theta": 16,
    "g_phi": 64,
    "g_tau": 32,
    "iterations": 20_000,
    "num_paths": 6,
    "max_sparsity": 6,
    "snr_db_list": (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
}

PROFILES = {"desk": _DESK_PROFILE, "paper": _PAPER_PROFILE}

_INT_KEYS = {
    "num_subcarriers",
    "num_tx",
    "num_rx",
    "seq_len",
    "num_delay_taps",
    "g_theta",
    "g_phi",
    "g_tau",
    "p",
    "iterations",
    "opt_seed",
    "num_paths",
    "num_trials",
    "max_sparsity",
    "base_seed",
}
_FLOAT_KEYS = {
    "carrier_freq_hz",
    "bandwidth_hz",
    "total_power",
    "tx_spacing_wavelengths",
    "rx_spacing_wavelengths",
    "q",
    "lambda_bar",
    "learning_rate",
    "beta1",
    "beta2",
    "eps",
    "zero_threshold_rel",
    "rician_k_db",
}
_STR_KEYS = {"solver"}
_FLOAT_LIST_KEYS = {"snr_db_list"}
_STR_LIST_KEYS = {"methods"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _FLOAT_LIST_KEYS | _STR_LIST_KEYS


def _parse_value(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _STR_KEYS:
            return raw
        if key in _FLOAT_LIST_KEYS:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if key in _STR_LIST_KEYS:
            return tuple(v.strip() for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse value '{raw}'") from exc
    raise ConfigError(key, "unknown configuration key")


def _config_from_values(values: dict) -> ExperimentConfig:
    try:
        system = SystemConfig(
            carrier_freq_hz=values["carrier_freq_hz"],
            bandwidth_hz=values["bandwidth_hz"],
            num_subcarriers=values["num_subcarriers"],
            num_tx=values["num_tx"],
            num_rx=values["num_rx"],
            seq_len=values["seq_len"],
            total_power=values["total_power"],
            num_delay_taps=values["num_delay_taps"],
            tx_spacing_wavelengths=values["tx_spacing_wavelengths"],
            rx_spacing_wavelengths=values["rx_spacing_wavelengths"],
        )
        grids = GridSpec(
            g_theta=values["g_theta"], g_phi=values["g_phi"], g_tau=values["g_tau"]
        )
        opt = OptimizerConfig(
            p=values["p"],
            q=values["q"],
            lambda_bar=values["lambda_bar"],
            learning_rate=values["learning_rate"],
            iterations=values["iterations"],
            beta1=values["beta1"],
            beta2=values["beta2"],
            eps=values["eps"],
            seed=values["opt_seed"],
            zero_threshold_rel=values["zero_threshold_rel"],
        )
        chan = ChannelModelConfig(
            num_paths=values["num_paths"], rician_k_db=values["rician_k_db"]
        )
        ev = EvaluationConfig(
            snr_db_list=tuple(values["snr_db_list"]),
            num_trials=values["num_trials"],
            solver=values["solver"],
            max_sparsity=values["max_sparsity"],
        )
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from exc
    return ExperimentConfig(
        system=system,
        grids=grids,
        optimizer=opt,
        channel=chan,
        evaluation=ev,
        base_seed=values["base_seed"],
        methods=tuple(values["methods"]),
    )


def profile_config(name: str) -> ExperimentConfig:
    """Built-in parameter profile; ``desk`` is test-sized, ``paper`` full-scale."""
    if name not in PROFILES:
        raise ConfigError("profile", f"unknown profile '{name}'")
    return _config_from_values(dict(PROFILES[name]))


def load_experiment_config(
    profile: str = "desk",
    config_path: str | Path | None = None,
    seed_override: int | None = None,
) -> ExperimentConfig:
    """Merge a profile with optional file overrides and a seed override."""
    if profile not in PROFILES:
        raise ConfigError("profile", f"unknown profile '{profile}'")
    values = dict(PROFILES[profile])
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError("config", f"no such config file: {path}")
        for line_no, line in enumerate(path.read_text().splitlines(), start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError("config", f"line {line_no} is not 'key = value': {line!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in _ALL_KEYS:
                raise ConfigError(key, "unknown configuration key")
            values[key] = _parse_value(key, raw)
    if seed_override is not None:
        values["base_seed"] = int(seed_override)
        values["opt_seed"] = int(seed_override)
    return _config_from_values(values)


# ---------------------------------------------------------------------------
# Persistence


def save_design(design: PilotDesign, path: str | Path) -> None:
    """Write a design as JSON with blocks concatenated over subcarriers."""
    full = design.full_matrix()
    payload = {
        "K": design.num_subcarriers,
        "M": design.seq_len,
        "Nt": design.num_tx,
        "Pt": design.total_power,
        "allocation": list(design.allocation),
        "x_real": full.real.tolist(),
        "x_imag": full.imag.tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_design(path: str | Path) -> PilotDesign:
    """Read a design JSON, validating shape and power consistency."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("design", f"no such design file: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("design", f"malformed JSON in {path}: {exc}") from exc
    try:
        k, m, nt, pt = payload["K"], payload["M"], payload["Nt"], payload["Pt"]
        full = np.asarray(payload["x_real"]) + 1j * np.asarray(payload["x_imag"])
        allocation = tuple(int(v) for v in payload["allocation"])
    except (KeyError, TypeError) as exc:
        raise ConfigError("design", f"missing or invalid field in {path}: {exc}") from exc
    if full.shape != (nt, k * m):
        raise ConfigError("design", f"pilot matrix shape {full.shape} != ({nt}, {k * m})")
    blocks = full.reshape(nt, k, m).transpose(1, 0, 2)
    power = float(np.sum(np.abs(blocks) ** 2))
    if abs(power - pt) > 1e-9 * max(pt, 1.0):
        raise ConfigError("design", f"stored power {power} != declared Pt {pt}")
    return PilotDesign(blocks=blocks, allocation=allocation, total_power=float(pt))


def save_trace(trace: OptimizationTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss", "f_term", "g_term", "grad_norm"])
        for row in zip(trace.iterations, trace.loss, trace.f_term, trace.g_term, trace.grad_norm):
            writer.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])),
                             repr(float(row[3])), repr(float(row[4]))])


def save_report(report: CoherenceReport, out_dir: str | Path, stem: str = "") -> dict:
    """Write the two CDF CSVs plus the JSON summary; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = f"{stem}_" if stem else ""
    paths = {
        "inner": out / f"{prefix}inner_product_cdf.csv",
        "norm": out / f"{prefix}column_norm_cdf.csv",
        "summary": out / f"{prefix}coherence_summary.json",
    }
    with open(paths["inner"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "value"])
        for v in report.inner_product_cdf:
            writer.writerow(["inner_product", repr(float(v))])
    with open(paths["norm"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "value"])
        for v in report.column_norm_cdf:
            writer.writerow(["column_norm", repr(float(v))])
    paths["summary"].write_text(json.dumps(report.summary_dict(), indent=2) + "\n")
    return paths


# ---------------------------------------------------------------------------
# Commands


def run_design(cfg: ExperimentConfig, out_dir: str | Path, trace_every: int = 1) -> dict:
    """Optimize a design from a Gaussian start; persist design/trace/summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sys_cfg = cfg.system
    dicts = build_dictionaries(cfg.grids, sys_cfg)
    x0 = gaussian_init(
        sys_cfg.num_subcarriers, sys_cfg.num_tx, sys_cfg.seq_len, cfg.optimizer.seed
    )
    design, trace = optimize(
        x0, dicts, cfg.optimizer, sys_cfg.total_power, trace_every=trace_every
    )
    design_path = out / "design_optimized.json"
    save_design(design, design_path)
    trace_path = out / "trace.csv"
    save_trace(trace, trace_path)
    report = coherence_report(design, dicts, cfg.optimizer.p)
    report_paths = save_report(report, out, stem="optimized")
    return {"design": design_path, "trace": trace_path, **report_paths}


def make_baseline_design(cfg: ExperimentConfig, target_q: int, seed) -> PilotDesign:
    """Gaussian pilot blocks on a uniformly random subcarrier subset."""
    sys_cfg = cfg.system
    k = sys_cfg.num_subcarriers
    if not 1 <= target_q <= k:
        raise ValueError(f"target allocation size {target_q} out of range 1..{k}")
    rng = np.random.default_rng(seed)
    allocation = tuple(sorted(int(v) for v in rng.choice(k, size=target_q, replace=False)))
    blocks = np.zeros((k, sys_cfg.num_tx, sys_cfg.seq_len), dtype=complex)
    for idx in allocation:
        blocks[idx] = rng.standard_normal((sys_cfg.num_tx, sys_cfg.seq_len)) + 1j * rng.standard_normal(
            (sys_cfg.num_tx, sys_cfg.seq_len)
        )
    power = float(np.sum(np.abs(blocks) ** 2))
    blocks *= np.sqrt(sys_cfg.total_power / power)
    return PilotDesign(
        blocks=blocks, allocation=allocation, total_power=sys_cfg.total_power
    )


def run_baseline(cfg: ExperimentConfig, target_q: int, out_path: str | Path) -> Path:
    design = make_baseline_design(cfg, target_q, (cfg.base_seed, _BASELINE_STREAM))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_design(design, out_path)
    return out_path


def _check_design_compat(cfg: ExperimentConfig, tag: str, design: PilotDesign) -> None:
    sys_cfg = cfg.system
    if design.num_subcarriers != sys_cfg.num_subcarriers:
        raise ConfigError(tag, "design K does not match the system config")
    if design.num_tx != sys_cfg.num_tx:
        raise ConfigError(tag, "design Nt does not match the system config")
    if design.seq_len != sys_cfg.seq_len:
        raise ConfigError(tag, "design M does not match the system config")
    if abs(design.total_power - sys_cfg.total_power) > 1e-6 * sys_cfg.total_power:
        raise ConfigError(tag, "design Pt does not match the system config")
    if not design.allocation:
        raise ConfigError(tag, "design has an empty allocation")


def run_estimate(
    cfg: ExperimentConfig,
    design_paths,
    out_dir: str | Path,
    threads: int = 1,
    allow_mixed: bool = False,
    timing: bool = False,
) -> dict:
    """Monte-Carlo NMSE evaluation of one or more designs.

    Per (method, SNR, trial): draw a channel with seed ``base_seed +
    trial``, synthesize the noisy measurement, solve with OMP, score NMSE.
    Channels are shared across methods and SNRs at equal trial index, so
    comparisons are paired. Writes ``trials.csv`` and ``summary.csv``; the
    volatile per-trial timing column is emitted only when ``timing`` is on.
    """
    designs: list[tuple[str, PilotDesign]] = []
    for p in design_paths:
        tag = _method_tag(p)
        if any(t == tag for t, _ in designs):
            raise ConfigError(tag, "duplicate method tag among design files")
        design = load_design(p)
        _check_design_compat(cfg, tag, design)
        designs.append((tag, design))
    if not designs:
        raise ConfigError("designs", "at least one design is required")
    sizes = {len(d.allocation) for _, d in designs}
    if len(sizes) > 1 and not allow_mixed:
        raise ConfigError(
            "designs",
            f"allocation sizes differ across designs ({sorted(sizes)}); the SNR "
            "definition depends on Q, pass allow_mixed to override",
        )

    sys_cfg = cfg.system
    dicts = build_dictionaries(cfg.grids, sys_cfg)
    operators = {tag: build_sensing_matrix(d, dicts) for tag, d in designs}
    ev = cfg.evaluation
    solve = SOLVERS[ev.solver]

    # One channel per trial index, shared by every method and SNR point.
    channels = []
    for trial in range(ev.num_trials):
        realization = sample_channel(
            sys_cfg, cfg.channel.num_paths, cfg.channel.rician_k_db, cfg.base_seed + trial
        )
        channels.append(assemble_channel(realization, sys_cfg))

    tasks = [
        (tag, design, snr, trial)
        for tag, design in designs
        for snr in ev.snr_db_list
        for trial in range(ev.num_trials)
    ]

    def run_one(task) -> TrialRecord:
        tag, design, snr, trial = task
        seed = cfg.base_seed + trial
        h = channels[trial]
        sigma2 = snr_sigma2(
            sys_cfg.total_power, sys_cfg.num_tx, sys_cfg.seq_len, len(design.allocation), snr
        )
        started = time.perf_counter()
        meas = synthesize_measurement(h, design, sigma2, (seed, _NOISE_STREAM))
        est = solve(meas.y, operators[tag], ev.max_sparsity)
        h_hat = reconstruct_channel(est, dicts)
        value = nmse(h.stacked, h_hat.stacked)
        elapsed = (time.perf_counter() - started) * 1e3
        return TrialRecord(
            method=tag, snr_db=snr, trial_index=trial, seed=seed, nmse=value, elapsed_ms=elapsed
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run_one, tasks))
    else:
        records = [run_one(t) for t in tasks]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials_path = out / "trials.csv"
    with open(trials_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["method", "snr_db", "trial_index", "seed", "nmse"]
        if timing:
            header.append("elapsed_ms")
        writer.writerow(header)
        for rec in records:
            row = [rec.method, repr(float(rec.snr_db)), rec.trial_index, rec.seed,
                   repr(float(rec.nmse))]
            if timing:
                row.append(repr(float(rec.elapsed_ms)))
            writer.writerow(row)

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "snr_db", "num_trials", "nmse_median", "nmse_mean"])
        for tag, _ in designs:
            for snr in ev.snr_db_list:
                vals = np.asarray(
                    [r.nmse for r in records if r.method == tag and r.snr_db == snr]
                )
                writer.writerow(
                    [tag, repr(float(snr)), vals.size,
                     repr(float(np.median(vals))), repr(float(np.mean(vals)))]
                )
    return {"trials": trials_path, "summary": summary_path, "records": records}


def _method_tag(path: str | Path) -> str:
    tag = Path(path).stem
    return tag[len("design_") :] if tag.startswith("design_") else tag


def run_report(cfg: ExperimentConfig, design_path: str | Path, out_dir: str | Path) -> dict:
    design = load_design(design_path)
    tag = _method_tag(design_path)
    _check_design_compat(cfg, tag, design)
    dicts = build_dictionaries(cfg.grids, cfg.system)
    report = coherence_report(design, dicts, cfg.optimizer.p)
    return save_report(report, out_dir, stem=tag)


def run_gradcheck(
    cfg: ExperimentConfig, num_pairs: int = 10, step: float = 1e-5, tol: float = 1e-4
) -> list[dict]:
    """Central-difference check of the closed-form gradient.

    For each random (X, direction) pair the directional derivative of the
    loss must match 2 Re<grad, direction> within ``tol`` relative error.
    """
    sys_cfg = cfg.system
    dicts = build_dictionaries(cfg.grids, sys_cfg)
    rng = np.random.default_rng((cfg.base_seed, _GRADCHECK_STREAM))
    shape = (sys_cfg.num_subcarriers, sys_cfg.num_tx, sys_cfg.seq_len)
    results = []
    for i in range(num_pairs):
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        delta = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        delta /= np.linalg.norm(delta)
        grad = loss_gradient(x, dicts, cfg.optimizer)
        analytic = 2.0 * float(np.real(np.vdot(grad, delta)))
        plus = loss(x + step * delta, dicts, cfg.optimizer)
        minus = loss(x - step * delta, dicts, cfg.optimizer)
        fd = (plus - minus) / (2.0 * step)
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-30)
        results.append({"pair": i, "fd": fd, "analytic": analytic, "rel_err": rel,
                        "ok": rel <= tol})
    return results


def run_sweep(
    cfg: ExperimentConfig,
    lambda_values,
    out_dir: str | Path,
    target_q: int | None = None,
    trace_every: int = 1,
) -> dict:
    """Optimize across penalty weights; persist designs and a sweep table."""
    sys_cfg = cfg.system
    dicts = build_dictionaries(cfg.grids, sys_cfg)
    outcome = sweep_lambda(
        lambda_values,
        dicts,
        cfg.optimizer,
        sys_cfg.total_power,
        sys_cfg.seq_len,
        target_allocation_size=target_q,
        trace_every=trace_every,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / "sweep.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda_bar", "allocation_size", "mutual_coherence", "design_file"])
        for i, row in enumerate(outcome.rows):
            name = f"design_lambda_{i}.json"
            save_design(row.design, out / name)
            writer.writerow(
                [repr(row.lambda_bar), row.allocation_size, repr(row.coherence), name]
            )
    meta = {"selected": None}
    if outcome.selected is not None:
        idx = outcome.rows.index(outcome.selected)
        meta["selected"] = f"design_lambda_{idx}.json"
    (out / "sweep_summary.json").write_text(json.dumps(meta, indent=2) + "\n")
    return {"table": table_path, "outcome": outcome}


def median_difference_ci(
    a, b, n_boot: int = 2000, seed: int = 0, confidence: float = 0.95
) -> tuple[float, float]:
    """Paired bootstrap CI for median(a) - median(b) over shared trial indices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("paired samples must share a non-empty shape")
    rng = np.random.default_rng(seed)
    n = a.size
    idx = rng.integers(0, n, (n_boot, n))
    diffs = np.median(a[idx], axis=1) - np.median(b[idx], axis=1)
    tail = (1.0 - confidence) / 2.0
    return (
        float(np.quantile(diffs, tail)),
        float(np.quantile(diffs, 1.0 - tail)),
    )
