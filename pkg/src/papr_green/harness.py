"""Config-driven experiments with seeded Monte Carlo drops, CSV tables and SVG figures.

A run is fully described by a :class:`ScenarioConfig`. Every drop draws its
randomness from ``SeedSequence([base_seed, drop])``, so a drop's numbers do
not depend on how many drops run or on which worker runs them. Results are
collected in drop order before anything is written.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import multiprocessing
import types
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from .channel_env import StackedOperator, generate_channels, place_nodes, rayleigh_channels
from .dan_allocator import (DanScenario, DinkelbachParams, _waterfill,
                            evaluate_constant_eta_baseline, marginal_rates,
                            optimize_allocation)
from .errors import (ConfigError, ConvergenceError, InputError, RankDeficientError,
                     UndefinedPaprError)
from .mimo_rnn import (EnergyModel, FitraParams, MimoScenario, RnnParams, RnnState,
                       energy_sweep, gradient, objective)
from .pa_energy import PaModel, calibrate_c2
from .papr_baselines import ClipConfig, PtsConfig, clip_stages, pts_reduce_batch
from .plots import plot_csv
from .signal_core import (analytic_papr_quantile_db, ccdf_estimate, constellation,
                          papr_db_batch, random_symbols, synthesize)

__all__ = [
    "EXPERIMENTS", "GeometryConfig", "WaveformConfig", "PaConfig", "PaprConfig", "DanConfig",
    "MimoEnergyConfig", "MimoConfig", "MonteCarloConfig", "ScenarioConfig", "RunReport",
    "parse_config", "config_from_dict", "config_echo", "drop_seeds", "run_experiment",
    "content_hash",
]

EXPERIMENTS = ("ccdf_baselines", "ee_vs_rrh", "waveform_compare", "ee_vs_nt", "validate")
SOLVER_ERRORS = (ConvergenceError, RankDeficientError, InputError, UndefinedPaprError,
                 np.linalg.LinAlgError, FloatingPointError)

# Desk-scale defaults that differ between experiments.
_DEFAULT_SUBCARRIERS = {"ccdf_baselines": 128, "ee_vs_rrh": 64, "waveform_compare": 32,
                        "ee_vs_nt": 32, "validate": 128}
_DEFAULT_CONSTELLATION = {"ccdf_baselines": "qpsk", "ee_vs_rrh": "qpsk",
                          "waveform_compare": "qam16", "ee_vs_nt": "qam16", "validate": "qpsk"}


def _positive(obj, *names):
    for n in names:
        v = getattr(obj, n)
        vals = v if isinstance(v, tuple) else (v,)
        if any(x is not None and not x > 0 for x in vals):
            raise ConfigError("must be positive", n)


@dataclass(frozen=True)
class GeometryConfig:
    cell_radius_m: float = 2000.0
    rrh_counts: tuple[int, ...] = (5, 8, 10, 12, 15)
    n_ms: int = 20
    n_taps: int = 6
    pathloss_exponent: float = 3.7
    decay_db_per_tap: float = 3.0

    def __post_init__(self):
        _positive(self, "cell_radius_m", "rrh_counts", "n_ms", "n_taps", "pathloss_exponent")
        if not self.rrh_counts:
            raise ConfigError("needs at least one entry", "rrh_counts")


@dataclass(frozen=True)
class WaveformConfig:
    n_subcarriers: int | None = None  # None: per-experiment desk-scale default
    oversampling: int = 4
    constellation: str | None = None  # None: qpsk for the DAN study, qam16 for massive MIMO
    delta_f_hz: float = 15e3
    noise_dbm_per_hz: float = -174.0

    def __post_init__(self):
        _positive(self, "n_subcarriers", "oversampling", "delta_f_hz")
        if self.constellation is not None:
            try:
                constellation(self.constellation)
            except InputError as exc:
                raise ConfigError(str(exc), "constellation") from None

    @property
    def noise_w_per_sc(self) -> float:
        return 10 ** ((self.noise_dbm_per_hz - 30.0) / 10.0) * self.delta_f_hz


@dataclass(frozen=True)
class PaConfig:
    c1: float = 0.05
    c2: float | None = None  # None: calibrated so equal allocation gives calibration_eta
    calibration_eta: float = 0.35
    calibration_subcarriers: int = 128
    p_t: float = 1.0
    eta_max: float = 0.785
    static_power_w: float = 10.0  # per active RRH
    site_power_w: float = 50.0
    eta_constant: float = 0.35  # baseline efficiency

    def __post_init__(self):
        _positive(self, "c1", "calibration_eta", "calibration_subcarriers", "p_t", "eta_max",
                  "eta_constant")
        if self.static_power_w < 0 or self.site_power_w < 0:
            raise ConfigError("static powers must be non-negative", "static_power_w")


@dataclass(frozen=True)
class PaprConfig:
    clip_ratios: tuple[float, ...] = (0.8, 1.6)
    clip_iterations: int = 1
    pts_subblocks: tuple[int, ...] = (2, 4, 8)
    threshold_min_db: float = 0.0
    threshold_max_db: float = 14.0
    threshold_step_db: float = 0.05
    proposed_rrh: int = 5  # RRHs in the allocation behind the "proposed" CCDF curve

    def __post_init__(self):
        _positive(self, "clip_ratios", "clip_iterations", "pts_subblocks", "threshold_step_db",
                  "proposed_rrh")
        if not self.threshold_max_db > self.threshold_min_db:
            raise ConfigError("must exceed threshold_min_db", "threshold_max_db")


@dataclass(frozen=True)
class DanConfig:
    max_groups: int | None = None  # None: min(K, M, 4)
    corr_threshold: float = 0.4
    solver: DinkelbachParams = DinkelbachParams()

    def __post_init__(self):
        _positive(self, "max_groups")


@dataclass(frozen=True)
class MimoEnergyConfig:
    total_power_w: float = 1.0
    path_gain: float = 1e-11
    bits_cap: float | None = None  # None: bits per constellation symbol
    static_power_w: float = 0.0  # per antenna

    def __post_init__(self):
        _positive(self, "total_power_w", "path_gain", "bits_cap")
        if self.static_power_w < 0:
            raise ConfigError("must be non-negative", "static_power_w")


@dataclass(frozen=True)
class MimoConfig:
    antenna_counts: tuple[int, ...] = (16, 32, 64)
    n_antennas: int = 64  # waveform_compare
    n_users: int = 8
    rnn: RnnParams = RnnParams()
    fitra: FitraParams = FitraParams()
    energy: MimoEnergyConfig = MimoEnergyConfig()

    def __post_init__(self):
        _positive(self, "antenna_counts", "n_antennas", "n_users")
        if not self.antenna_counts:
            raise ConfigError("needs at least one entry", "antenna_counts")


@dataclass(frozen=True)
class MonteCarloConfig:
    n_drops: int = 20
    n_symbols: int = 10000
    base_seed: int = 0

    def __post_init__(self):
        _positive(self, "n_drops", "n_symbols")
        if self.base_seed < 0:
            raise ConfigError("must be non-negative", "base_seed")


@dataclass(frozen=True)
class ScenarioConfig:
    experiment: str
    geometry: GeometryConfig = GeometryConfig()
    waveform: WaveformConfig = WaveformConfig()
    pa: PaConfig = PaConfig()
    papr: PaprConfig = PaprConfig()
    dan: DanConfig = DanConfig()
    mimo: MimoConfig = MimoConfig()
    monte_carlo: MonteCarloConfig = MonteCarloConfig()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of "
                              f"{', '.join(EXPERIMENTS)}", "experiment")


@dataclass(frozen=True)
class RunReport:
    csv_paths: tuple
    svg_paths: tuple
    config_echo: dict
    content_hash: str
    failure_rate: float = 0.0
    passed: bool = True  # validate: every oracle check passed
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------- config parsing

def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _type_name(tp):
    return getattr(tp, "__name__", str(tp))


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError("must not be null", path)
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if value is None:
        raise ConfigError(f"expected {_type_name(tp)}, got null", path)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {type(value).__name__}", path)
        item = typing.get_args(tp)[0]
        return tuple(_coerce(item, v, f"{path}[{i}]") for i, v in enumerate(value))
    if is_dataclass(tp):
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {type(value).__name__}", path)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {type(value).__name__}", path)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {type(value).__name__}", path)
        if not math.isfinite(value):
            raise ConfigError("must be finite", path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {type(value).__name__}", path)
        return value
    raise ConfigError(f"unsupported field type {tp!r}", path)


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", path)
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in fields(cls) if f.init}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", _join(path, key))
    kwargs = {}
    for name, f in known.items():
        if name in data:
            kwargs[name] = _coerce(hints[name], data[name], _join(path, name))
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError("missing required key", _join(path, name))
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(exc.message, _join(path, exc.key_path)) from None
    except (InputError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path) from None


def _resolve(cfg: ScenarioConfig) -> ScenarioConfig:
    """Fill the experiment-dependent defaults so the echo is fully explicit."""
    exp = cfg.experiment
    wf = cfg.waveform
    wf = replace(wf,
                 n_subcarriers=wf.n_subcarriers or _DEFAULT_SUBCARRIERS[exp],
                 constellation=(wf.constellation or _DEFAULT_CONSTELLATION[exp]).lower())
    pa = cfg.pa
    if pa.c2 is None:
        pa = replace(pa, c2=float(calibrate_c2(pa.calibration_eta, pa.c1, pa.calibration_subcarriers,
                                               wf.delta_f_hz, pa.p_t)))
    energy = cfg.mimo.energy
    if energy.bits_cap is None:
        bits = math.log2(constellation(wf.constellation).points.size)
        energy = replace(energy, bits_cap=float(bits))
    return replace(cfg, waveform=wf, pa=pa, mimo=replace(cfg.mimo, energy=energy))


def config_from_dict(data: dict) -> ScenarioConfig:
    """Validated, fully resolved config from parsed JSON."""
    return _resolve(_build(ScenarioConfig, data))


def parse_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_dict(data)


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def config_echo(cfg: ScenarioConfig) -> dict:
    """JSON-ready dict of the resolved config; ``config_from_dict`` inverts it."""
    return _plain(asdict(cfg))


# ---------------------------------------------------------------- seeds, pool, output

def drop_seeds(base_seed: int, drop: int, n: int = 3) -> list[int]:
    """Independent 64-bit seeds for one drop, hashed from ``(base_seed, drop)``."""
    state = np.random.SeedSequence([base_seed, drop]).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def _map_ordered(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks)), mp_context=ctx) as pool:
        return list(pool.map(fn, tasks))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def content_hash(paths) -> str:
    """Tree-style hash over the blob hashes of ``paths`` keyed by file name."""
    h = hashlib.sha1()
    for p in sorted(Path(p) for p in paths):
        h.update(f"{p.name} {_blob_hash(p.read_bytes())}\n".encode())
    return h.hexdigest()


def _median(vals):
    v = [x for x in vals if x is not None and math.isfinite(x)]
    return float(np.median(v)) if v else math.nan


def _status(exc) -> str:
    return f"failed:{type(exc).__name__}"


# ---------------------------------------------------------------- model builders

def _pa_model(cfg: ScenarioConfig) -> PaModel:
    pa = cfg.pa
    return PaModel(c1=pa.c1, c2=pa.c2, delta_f_hz=cfg.waveform.delta_f_hz, p_t=pa.p_t,
                   eta_max=pa.eta_max)


def _dan_scenario(cfg: ScenarioConfig, n_rrh: int, n_subcarriers: int, seeds) -> DanScenario:
    g = cfg.geometry
    geo = place_nodes(n_rrh, g.n_ms, g.cell_radius_m, seed=seeds[0])
    ch = generate_channels(geo, n_subcarriers, n_taps=g.n_taps, pathloss_exponent=g.pathloss_exponent,
                           seed=seeds[1], decay_db_per_tap=g.decay_db_per_tap)
    return DanScenario(ch, pa=_pa_model(cfg), noise_w_per_sc=cfg.waveform.noise_w_per_sc,
                       static_power_w=cfg.pa.static_power_w, site_power_w=cfg.pa.site_power_w,
                       max_groups=cfg.dan.max_groups, corr_threshold=cfg.dan.corr_threshold,
                       eta_constant=cfg.pa.eta_constant)


def _energy_model(cfg: ScenarioConfig) -> EnergyModel:
    e = cfg.mimo.energy
    return EnergyModel(total_power_w=e.total_power_w, path_gain=e.path_gain,
                       noise_w_per_sc=cfg.waveform.noise_w_per_sc, delta_f_hz=cfg.waveform.delta_f_hz,
                       bits_cap=e.bits_cap, static_power_w=e.static_power_w, pa=_pa_model(cfg))


def _thresholds(p: PaprConfig) -> np.ndarray:
    n = int(round((p.threshold_max_db - p.threshold_min_db) / p.threshold_step_db))
    return np.round(p.threshold_min_db + p.threshold_step_db * np.arange(n + 1), 10)


# ---------------------------------------------------------------- ccdf_baselines

def _ccdf_names(cfg):
    p = cfg.papr
    names = ["original"] + [f"clip_{cr:g}" for cr in p.clip_ratios]
    names += [f"pts_{v}" for v in p.pts_subblocks] + ["proposed"]
    return names


def _ccdf_chunk(task):
    cfg, drop, size = task
    wf, p = cfg.waveform, cfg.papr
    seeds = drop_seeds(cfg.monte_carlo.base_seed, drop)
    rng = np.random.default_rng(seeds[2])
    sym = random_symbols(rng, (size, wf.n_subcarriers), constellation(wf.constellation))
    out = {"original": papr_db_batch(synthesize(sym, wf.oversampling))}
    for cr in p.clip_ratios:
        stages = clip_stages(sym, ClipConfig(cr, p.clip_iterations), wf.oversampling)
        out[f"clip_{cr:g}"] = papr_db_batch(stages[-1].filtered)
        out[f"clip_{cr:g}_prefilter"] = papr_db_batch(stages[-1].clipped)
    for v in p.pts_subblocks:
        waves, _ = pts_reduce_batch(sym, PtsConfig(v), wf.oversampling)
        out[f"pts_{v}"] = papr_db_batch(waves)
    status = "ok"
    try:
        sol = optimize_allocation(_dan_scenario(cfg, p.proposed_rrh, wf.n_subcarriers, seeds),
                                  cfg.dan.solver)
        rows = sol.power.p[sol.power.p.sum(axis=1) > 0]
        if rows.shape[0] == 0:
            raise InputError("allocation switched every RRH off")
        # Each symbol is sent by one active RRH with that RRH's power profile.
        profile = np.sqrt(rows[np.arange(size) % rows.shape[0]])
        out["proposed"] = papr_db_batch(synthesize(sym * profile, wf.oversampling))
    except SOLVER_ERRORS as exc:
        status = _status(exc)
        out["proposed"] = np.empty(0)
    return out, status


def _run_ccdf(cfg, out_dir, threads):
    mc = cfg.monte_carlo
    n_chunks = min(mc.n_drops, mc.n_symbols)
    sizes = [len(a) for a in np.array_split(np.arange(mc.n_symbols), n_chunks)]
    results = _map_ordered(_ccdf_chunk, [(cfg, d, s) for d, s in enumerate(sizes)], threads)
    names = _ccdf_names(cfg)
    extra = [f"clip_{cr:g}_prefilter" for cr in cfg.papr.clip_ratios]
    samples = {k: np.concatenate([r[0][k] for r in results]) for k in names + extra}
    th = _thresholds(cfg.papr)
    curves = {k: ccdf_estimate(samples[k], th) for k in names + extra if samples[k].size}
    nan_col = np.full(th.size, np.nan)

    def col(k):
        return curves[k].probabilities if k in curves else nan_col

    main = _write_csv(out_dir / "ccdf_baselines.csv", ["threshold_db"] + [f"ccdf_{k}" for k in names],
                      [[t] + [col(k)[i] for k in names] for i, t in enumerate(th)])
    pre_names = [f"clip_{cr:g}" for cr in cfg.papr.clip_ratios]
    pre = _write_csv(out_dir / "ccdf_clip_prefilter.csv",
                     ["threshold_db"] + [f"ccdf_{k}" for k in pre_names],
                     [[t] + [col(k + "_prefilter")[i] for k in pre_names] for i, t in enumerate(th)])
    levels = (1e-1, 1e-2, 1e-3)
    summary_rows = []
    for k in names + extra:
        lv = [curves[k].level_at(q) if k in curves else math.nan for q in levels]
        summary_rows.append([k, int(samples[k].size)] + lv)
    summ = _write_csv(out_dir / "papr_summary.csv",
                      ["scheme", "n_samples", "papr_db_at_1e-1", "papr_db_at_1e-2", "papr_db_at_1e-3"],
                      summary_rows)
    status = _write_csv(out_dir / "drop_status.csv", ["drop", "n_symbols", "proposed_status"],
                        [[d, sizes[d], r[1]] for d, r in enumerate(results)])
    svg = out_dir / "ccdf_baselines.svg"
    plot_csv(main, svg, "threshold_db", [f"ccdf_{k}" for k in names],
             "CCDF of PAPR", "PAPR threshold (dB)", "P(PAPR > threshold)",
             labels=[k.replace("_", " ") for k in names], logy=True)
    failures = sum(r[1] != "ok" for r in results) / len(results)
    levels_1e3 = {k: r[4] for k, r in zip(names + extra, summary_rows)}
    return [main, pre, summ, status], [svg], failures, {"papr_db_at_1e-3": levels_1e3}


# ---------------------------------------------------------------- ee_vs_rrh

_RRH_HEADER = ["drop", "n_rrh", "method", "ee_bits_per_joule", "ee_nominal_bits_per_joule",
               "sum_rate_bps", "pa_power_w", "static_power_w", "active_rrh", "mean_active_eta",
               "iterations", "converged", "status"]


def _rrh_drop(task):
    cfg, drop = task
    seeds = drop_seeds(cfg.monte_carlo.base_seed, drop)
    rows = []
    # Placements nest across RRH counts, so each method restarts from its
    # solution at the next smaller count: extra RRHs can always stay off.
    previous = {}
    for m in sorted(cfg.geometry.rrh_counts):
        try:
            scen = _dan_scenario(cfg, m, cfg.waveform.n_subcarriers, seeds)
        except SOLVER_ERRORS as exc:
            rows += [[drop, m, meth] + [math.nan] * 7 + [0, False, _status(exc)]
                     for meth in ("proposed", "constant_eta")]
            continue
        for meth, fn in (("proposed", optimize_allocation), ("constant_eta", evaluate_constant_eta_baseline)):
            try:
                sol = fn(scen, cfg.dan.solver, warm_start=previous.get(meth))
            except SOLVER_ERRORS as exc:
                rows.append([drop, m, meth] + [math.nan] * 7 + [0, False, _status(exc)])
                continue
            previous[meth] = sol
            rep = sol.report
            active = sol.active_rrh
            eta = float(np.mean(rep.per_antenna_eta[active])) if active.any() else math.nan
            nominal = float(sol.ee_trace[-1]) if sol.ee_trace else math.nan
            rows.append([drop, m, meth, rep.efficiency_bits_per_joule, nominal, rep.sum_rate_bps,
                         rep.pa_power_w, rep.static_power_w, int(active.sum()), eta,
                         sol.iterations, sol.converged, "ok"])
    return rows


def _run_ee_vs_rrh(cfg, out_dir, threads):
    drops = _map_ordered(_rrh_drop, [(cfg, d) for d in range(cfg.monte_carlo.n_drops)], threads)
    rows = [r for d in drops for r in d]
    per_drop = _write_csv(out_dir / "ee_vs_rrh_drops.csv", _RRH_HEADER, rows)
    agg = []
    for m in cfg.geometry.rrh_counts:
        sel = {meth: [r for r in rows if r[1] == m and r[2] == meth and r[-1] == "ok"]
               for meth in ("proposed", "constant_eta")}
        prop = _median([r[3] for r in sel["proposed"]])
        base = _median([r[3] for r in sel["constant_eta"]])
        nominal = _median([r[4] for r in sel["constant_eta"]])
        ratios = {r[0]: r[3] for r in sel["proposed"]}
        per = [ratios[r[0]] / r[3] for r in sel["constant_eta"] if r[0] in ratios and r[3] > 0]
        agg.append([m, prop, base, nominal, prop / base if base > 0 else math.nan, _median(per),
                    len(sel["proposed"]), len(sel["constant_eta"])])
    header = ["n_rrh", "ee_proposed_median", "ee_constant_eta_median", "ee_constant_eta_nominal_median",
              "ratio_of_medians", "median_ratio", "n_ok_proposed", "n_ok_constant_eta"]
    table = _write_csv(out_dir / "ee_vs_rrh.csv", header, agg)
    svg = out_dir / "ee_vs_rrh.svg"
    plot_csv(table, svg, "n_rrh", header[1:4], "Energy efficiency over the number of RRHs",
             "number of RRHs", "energy efficiency (bit/J)",
             labels=["proposed (PA-aware)", "constant eta, actual", "constant eta, nominal"], markers=True)
    failures = sum(r[-1] != "ok" for r in rows) / max(len(rows), 1)
    return [per_drop, table], [svg], failures, {"table": agg}


# ---------------------------------------------------------------- massive MIMO

_NT_HEADER = ["drop", "n_antennas", "method", "worst_papr_db", "median_antenna_papr_db",
              "mui_residual", "mui_residual_sq", "ee_bits_per_joule", "sum_rate_bps",
              "converged", "iterations", "status"]
_METHODS = ("ls", "rnn", "fitra")


def _mimo_scenario(cfg: ScenarioConfig) -> MimoScenario:
    wf, mm, g = cfg.waveform, cfg.mimo, cfg.geometry
    return MimoScenario(n_users=mm.n_users, n_subcarriers=wf.n_subcarriers, n_taps=g.n_taps,
                        decay_db_per_tap=g.decay_db_per_tap, oversampling=wf.oversampling,
                        energy=_energy_model(cfg), rnn=mm.rnn, fitra=mm.fitra)


def _mimo_drop(task):
    cfg, drop, counts, trace_antenna = task
    wf, mm = cfg.waveform, cfg.mimo
    seeds = drop_seeds(cfg.monte_carlo.base_seed, drop)
    rng = np.random.default_rng(seeds[2])
    s = random_symbols(rng, (mm.n_users, wf.n_subcarriers), constellation(wf.constellation))
    scen = _mimo_scenario(cfg)
    rows, traces = [], {}
    for nt in counts:
        for meth in _METHODS:
            try:
                (r,) = energy_sweep([nt], scen, meth, s, seeds[1])
            except SOLVER_ERRORS as exc:
                rows.append([drop, nt, meth] + [math.nan] * 6 + [False, 0, _status(exc)])
                continue
            rows.append([drop, nt, meth, r.worst_papr_db, r.median_papr_db, r.mui_residual,
                         r.mui_residual**2, r.ee_bits_per_joule, r.sum_rate_bps, r.converged,
                         r.iterations, "ok"])
            if trace_antenna is not None:
                wave = synthesize(r.bins[trace_antenna], wf.oversampling)
                traces[meth] = np.abs(wave) / np.sqrt(np.mean(np.abs(wave) ** 2))
    return rows, traces


def _mimo_aggregate(rows, counts):
    agg = []
    for nt in counts:
        line = [nt]
        for key in (3, 7, 5):
            for meth in _METHODS:
                line.append(_median([r[key] for r in rows if r[1] == nt and r[2] == meth and r[-1] == "ok"]))
        line += [sum(1 for r in rows if r[1] == nt and r[2] == "rnn" and r[-1] == "ok" and r[9])]
        agg.append(line)
    header = ["n_antennas"] + [f"{q}_{m}" for q in ("worst_papr_db", "ee_bits_per_joule", "mui_residual")
                               for m in _METHODS] + ["n_converged_rnn"]
    return header, agg


def _run_mimo(cfg, out_dir, threads, compare: bool):
    mm = cfg.mimo
    counts = (mm.n_antennas,) if compare else mm.antenna_counts
    tasks = [(cfg, d, counts, 0 if compare and d == 0 else None) for d in range(cfg.monte_carlo.n_drops)]
    results = _map_ordered(_mimo_drop, tasks, threads)
    rows = [r for res in results for r in res[0]]
    stem = "waveform_compare" if compare else "ee_vs_nt"
    per_drop = _write_csv(out_dir / f"{stem}_drops.csv", _NT_HEADER, rows)
    header, agg = _mimo_aggregate(rows, counts)
    table = _write_csv(out_dir / f"{stem}.csv", header, agg)
    csvs, svgs = [per_drop, table], []
    if compare:
        traces = results[0][1]
        n = max((t.size for t in traces.values()), default=0)
        wave_rows = [[i] + [float(traces[m][i]) if m in traces else math.nan for m in _METHODS]
                     for i in range(n)]
        wave = _write_csv(out_dir / "waveform_trace.csv", ["sample"] + [f"amplitude_{m}" for m in _METHODS],
                          wave_rows)
        csvs.append(wave)
        svg = out_dir / "waveform_compare.svg"
        plot_csv(wave, svg, "sample", [f"amplitude_{m}" for m in _METHODS],
                 "Transmit waveform of antenna 0 (drop 0)", "sample (oversampled)",
                 "amplitude / rms", labels=["LS", "RNN", "FITRA"])
        svgs.append(svg)
    else:
        for q, title, unit in (("ee_bits_per_joule", "Energy efficiency", "energy efficiency (bit/J)"),
                               ("worst_papr_db", "Worst-antenna PAPR", "median worst-antenna PAPR (dB)")):
            svg = out_dir / f"{stem}_{q}.svg"
            plot_csv(table, svg, "n_antennas", [f"{q}_{m}" for m in _METHODS],
                     f"{title} over the number of transmit antennas", "transmit antennas", unit,
                     labels=["LS", "RNN", "FITRA"], markers=True)
            svgs.append(svg)
    failures = sum(r[-1] != "ok" for r in rows) / max(len(rows), 1)
    return csvs, svgs, failures, {"table": agg, "header": header}


# ---------------------------------------------------------------- validate

def _check_analytic_ccdf(cfg):
    wf, mc = cfg.waveform, cfg.monte_carlo
    rng = np.random.default_rng(drop_seeds(mc.base_seed, 0)[2])
    papr = np.empty(0)
    left = max(mc.n_symbols, 100000)  # the 1e-3 tail needs about 100 exceedances
    while left:
        b = min(left, 20000)
        sym = random_symbols(rng, (b, wf.n_subcarriers), constellation(wf.constellation))
        papr = np.concatenate([papr, papr_db_batch(synthesize(sym, 1))])
        left -= b
    rows = []
    for q in (1e-2, 1e-3):
        emp = float(np.quantile(papr, 1.0 - q))
        ref = analytic_papr_quantile_db(wf.n_subcarriers, q)
        rows.append([f"analytic_ccdf_offset_db_at_{q:g}", abs(emp - ref), 0.2])
    return rows


def _check_gradient(cfg, points: int = 100):
    """Worst relative error of the analytic gradient against central differences."""
    rng = np.random.default_rng(drop_seeds(cfg.monte_carlo.base_seed, 1)[0])
    params = RnnParams(lam=1.3)
    worst = 0.0
    for nt, mr, nc in ((4, 2, 4), (16, 4, 8)):
        g = rayleigh_channels(nt, mr, nc, min(cfg.geometry.n_taps, nc), seed=int(rng.integers(2**31)))
        op = StackedOperator(np.transpose(g, (2, 1, 0)), oversampling=2)
        s = rng.standard_normal((mr, nc)) + 1j * rng.standard_normal((mr, nc))
        for _ in range(points):
            x = rng.standard_normal(op.input_shape) + 1j * rng.standard_normal(op.input_shape)
            # Put y in the widest gap between sample powers so no probe crosses a kink.
            mags = np.sort(np.abs(x).ravel() ** 2)
            i = int(np.argmax(np.diff(mags)))
            gap = mags[i + 1] - mags[i]
            y = float(0.5 * (mags[i] + mags[i + 1]))
            gx, gy = gradient(RnnState(x, y), op, s, params)
            d = rng.standard_normal(op.input_shape) + 1j * rng.standard_normal(op.input_shape)
            h = min(1e-5, gap / (100.0 * np.max(np.abs(x)) * np.max(np.abs(d))))
            fd = (objective(RnnState(x + h * d, y), op, s, params)
                  - objective(RnnState(x - h * d, y), op, s, params)) / (2 * h)
            an = 2.0 * np.vdot(np.asarray(gx).reshape(op.input_shape), d).real
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
            hy = gap / 100.0
            fdy = (objective(RnnState(x, y + hy), op, s, params)
                   - objective(RnnState(x, y - hy), op, s, params)) / (2 * hy)
            worst = max(worst, abs(fdy - gy) / max(abs(gy), 1.0))
    return [["gradient_relative_error", worst, 1e-5]]


def _check_kkt(cfg):
    rng = np.random.default_rng(drop_seeds(cfg.monte_carlo.base_seed, 2)[0])
    worst = 0.0
    for _ in range(20):
        n, g = 16, 2
        price = rng.uniform(0.05, 2.0, n)
        amp = rng.uniform(0.0, 3.0, (n, g))
        c = rng.uniform(0.1, 20.0, (n, g))
        row, nu = _waterfill(price, amp, c, 1.0, 200)
        deriv = marginal_rates(row, amp, c) - price
        on = row > 1e-9
        scale = max(1.0, float(np.max(price)) + nu)
        if on.any():
            worst = max(worst, float(np.max(np.abs(deriv[on] - nu))) / scale)
        if (~on).any():
            worst = max(worst, float(max(0.0, np.max(deriv[~on] - nu))) / scale)
    return [["waterfill_kkt_residual", worst, 1e-5]]


def _run_validate(cfg, out_dir, threads):
    rows = _check_analytic_ccdf(cfg) + _check_gradient(cfg) + _check_kkt(cfg)
    table = [[name, value, tol, value <= tol] for name, value, tol in rows]
    path = _write_csv(out_dir / "validate.csv", ["check", "value", "tolerance", "passed"], table)
    passed = all(r[3] for r in table)
    return [path], [], 0.0, {"checks": table, "passed": passed}


# ---------------------------------------------------------------- entry point

_RUNNERS = {
    "ccdf_baselines": _run_ccdf,
    "ee_vs_rrh": _run_ee_vs_rrh,
    "waveform_compare": lambda c, o, t: _run_mimo(c, o, t, compare=True),
    "ee_vs_nt": lambda c, o, t: _run_mimo(c, o, t, compare=False),
    "validate": _run_validate,
}


def run_experiment(cfg: ScenarioConfig, out_dir="papr_green_out", threads: int = 1) -> RunReport:
    """Run ``cfg`` and write its tables, figures and ``report.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = config_echo(cfg)
    (out / "config_echo.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    csvs, svgs, failures, summary = _RUNNERS[cfg.experiment](cfg, out, max(int(threads), 1))
    digest = content_hash(csvs)
    passed = bool(summary.get("passed", True))
    report = RunReport(tuple(str(p) for p in csvs), tuple(str(p) for p in svgs), echo, digest,
                       float(failures), passed, summary)
    meta = {"experiment": cfg.experiment, "csv": [Path(p).name for p in csvs],
            "svg": [Path(p).name for p in svgs], "content_hash": digest,
            "failure_rate": report.failure_rate, "passed": passed}
    (out / "report.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return report
