"""Batch driver: configuration, experiment orchestration and data emission.

Configuration is YAML. Hamiltonians are Pauli coefficient lists ``[c0, cx, cy, cz]``
in units of ``hbar``/second. Any key can be overridden from the environment with
``QUBITSEQ_<KEY>``; nested keys join with a double underscore, e.g.
``QUBITSEQ_MODEL__TAU=0.001``. Values are parsed as YAML scalars.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .algebra import (
    DomainError,
    bloch_vector,
    from_bloch,
    from_pauli,
    is_hermitian,
    min_eigenvalue,
    purity,
    trace,
    trace_distance,
)
from .continuum import (
    ContinuumModel,
    discrete_to_continuum_convergence,
    integrate_master,
    run_sme_ensemble,
    simulate_sme_paths,
)
from .difference import step_appendix_c, step_first_order
from .exact import check_commutator_bounds, run_nonselective
from .model import ModelParams, check_regime, derive
from .nseries import NSeriesConfig, nseries_nonselective

log = logging.getLogger("qubitseq")

SCHEMA_VERSION = 1
EXPERIMENTS = ("exact", "nseries", "difference", "master", "sme", "compare", "converge", "bounds")
ENV_PREFIX = "QUBITSEQ_"
CSV_COLUMNS = ("time", "method", "sx", "sy", "sz", "purity", "trace_dev", "s_readout")
U64 = 2**64
EXECUTION_ONLY = ("out_dir", "threads")


class ConfigError(ValueError):
    """All validation problems of a configuration, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InvariantFailure(RuntimeError):
    def __init__(self, failed: list[str]):
        self.failed = failed
        super().__init__("failed checks: " + ", ".join(failed))


@dataclass
class ModelSection:
    p1: float | None = None
    p2: float | None = None
    p0: float | None = None
    delta_p: float | None = None
    gamma: float | None = None
    tau: float = 0.01
    H: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    Hplus: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    Hminus: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    hbar: float = 1.0


@dataclass
class SimulationConfig:
    experiment: str = "compare"
    model: ModelSection = field(default_factory=ModelSection)
    N: int = 10
    Delta_t: float | None = None  # defaults to N * tau
    dt: float = 1e-3
    t_final: float = 1.0
    n_trajectories: int = 1000
    seed: int = 0
    s_points: int = 1601
    s_halfwidth_sd: float = 10.0
    use_qnumber_width: bool = False
    initial_state: list[float] = field(default_factory=lambda: [1.0, 0.0, 0.0])
    out_dir: str = "out"
    per_trajectory_csv: bool = False
    scheme: str = "euler"
    abort_below: float = -0.25
    record_every: int = 1
    tau_list: list[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    bound_constant: float = 10.0
    threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def echo(self) -> dict:
        """Config as written to outputs; execution-only keys are left out so that
        files do not depend on where or with how many threads they were produced."""
        d = self.to_dict()
        for k in EXECUTION_ONLY:
            d.pop(k)
        return d

    def model_params(self) -> ModelParams:
        m = self.model
        kw = dict(H=from_pauli(*m.H), Hplus=from_pauli(*m.Hplus), Hminus=from_pauli(*m.Hminus), hbar=m.hbar)
        if m.p1 is not None and m.p2 is not None:
            return ModelParams(p1=m.p1, p2=m.p2, tau=m.tau, **kw)
        if m.delta_p is not None:
            return ModelParams.from_p0(m.p0, m.delta_p, m.tau, **kw)
        return ModelParams.from_gamma(m.gamma, m.p0, m.tau, **kw)

    @property
    def delta_t(self) -> float:
        return self.Delta_t if self.Delta_t is not None else self.N * self.model.tau

    @property
    def rho0(self):
        return from_bloch(self.initial_state)


def _default_doc() -> dict:
    return SimulationConfig().to_dict()


def _merge(base: dict, over: dict, path: str, problems: list[str]) -> dict:
    out = dict(base)
    for k, v in over.items():
        if k not in base:
            problems.append(f"unknown key '{path}{k}'")
        elif isinstance(base[k], dict):
            if not isinstance(v, dict):
                problems.append(f"'{path}{k}' must be a mapping")
            else:
                out[k] = _merge(base[k], v, f"{path}{k}.", problems)
        else:
            out[k] = v
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    over: dict = {}
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = key[len(ENV_PREFIX):].split("__")
        node = over
        for p in parts[:-1]:
            node = node.setdefault(_env_key(p), {})
        node[_env_key(parts[-1])] = yaml.safe_load(environ[key])
    return over


def _env_key(name: str) -> str:
    # environment names are upper case; map back to the dataclass spelling
    known = {f.name.lower(): f.name for f in fields(SimulationConfig)}
    known.update({f.name.lower(): f.name for f in fields(ModelSection)})
    return known.get(name.lower(), name.lower())


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(doc: dict) -> SimulationConfig:
    """Build a config from a merged document, collecting every problem."""
    problems: list[str] = []
    m = doc["model"] = dict(doc["model"])
    if all(m[k] is None for k in ("p1", "p2", "p0", "delta_p", "gamma")):
        m["p0"], m["gamma"] = 0.5, 1.0
        log.info("no measurement strength configured; using model.p0=0.5, model.gamma=1.0")

    def num(path, x, lo=None, hi=None, positive=False, optional=False):
        if x is None and optional:
            return
        if not _is_num(x):
            problems.append(f"{path} must be a finite number, got {x!r}")
        elif positive and not x > 0:
            problems.append(f"{path} must be > 0, got {x}")
        elif (lo is not None and x < lo) or (hi is not None and x > hi):
            problems.append(f"{path}={x} outside [{lo}, {hi}]")

    if doc["experiment"] not in EXPERIMENTS:
        problems.append(f"experiment '{doc['experiment']}' not one of {', '.join(EXPERIMENTS)}")
    for k in ("p1", "p2", "p0"):
        num(f"model.{k}", m[k], 0.0, 1.0, optional=True)
    num("model.delta_p", m["delta_p"], 0.0, 1.0, optional=True)
    num("model.gamma", m["gamma"], 0.0, None, optional=True)
    num("model.tau", m["tau"], positive=True)
    num("model.hbar", m["hbar"], positive=True)
    for k in ("H", "Hplus", "Hminus"):
        v = m[k]
        if not (isinstance(v, list) and len(v) == 4 and all(_is_num(c) for c in v)):
            problems.append(f"model.{k} must be 4 real Pauli coefficients [c0, cx, cy, cz]")

    # measurement strength: p1/p2, or p0 with delta_p or gamma
    have_pair = m["p1"] is not None and m["p2"] is not None
    if (m["p1"] is None) != (m["p2"] is None):
        problems.append("model.p1 and model.p2 must be given together")
    if have_pair and all(_is_num(m[k]) for k in ("p1", "p2")):
        if m["p1"] > m["p2"]:
            problems.append(f"model.p1={m['p1']} exceeds model.p2={m['p2']}")
        if _is_num(m["delta_p"]) and not math.isclose(m["delta_p"], m["p2"] - m["p1"], abs_tol=1e-12):
            problems.append(f"conflict: model.delta_p={m['delta_p']} but p2-p1={m['p2'] - m['p1']}")
        if _is_num(m["p0"]) and not math.isclose(m["p0"], 0.5 * (m["p1"] + m["p2"]), abs_tol=1e-12):
            problems.append(f"conflict: model.p0={m['p0']} but (p1+p2)/2={0.5 * (m['p1'] + m['p2'])}")
        if m["gamma"] is not None:
            problems.append("conflict: model.gamma given together with p1/p2")
    elif not have_pair:
        if m["p0"] is None:
            problems.append("missing model.p0 (or model.p1 and model.p2)")
        if (m["delta_p"] is None) == (m["gamma"] is None):
            problems.append("give exactly one of model.delta_p and model.gamma with model.p0")

    for k in ("N", "n_trajectories", "s_points", "record_every", "threads"):
        v = doc[k]
        if not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
            problems.append(f"{k} must be a positive integer, got {v!r}")
    for k in ("dt", "t_final", "s_halfwidth_sd", "bound_constant"):
        num(k, doc[k], positive=True)
    num("Delta_t", doc["Delta_t"], positive=True, optional=True)
    num("abort_below", doc["abort_below"])
    seed = doc["seed"]
    if not (isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < U64):
        problems.append(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    r = doc["initial_state"]
    if not (isinstance(r, list) and len(r) == 3 and all(_is_num(c) for c in r)):
        problems.append("initial_state must be a Bloch vector [x, y, z]")
    elif math.sqrt(sum(c * c for c in r)) > 1.0 + 1e-12:
        problems.append(f"initial_state: |Bloch vector| = {math.sqrt(sum(c * c for c in r)):.6g} > 1")
    tl = doc["tau_list"]
    if not (isinstance(tl, list) and len(tl) >= 2 and all(_is_num(t) and t > 0 for t in tl)):
        problems.append("tau_list must be a list of at least 2 positive numbers")
    if doc["scheme"] not in ("euler", "milstein"):
        problems.append(f"scheme must be 'euler' or 'milstein', got {doc['scheme']!r}")
    for k in ("use_qnumber_width", "per_trajectory_csv"):
        if not isinstance(doc[k], bool):
            problems.append(f"{k} must be true or false")
    if problems:
        raise ConfigError(problems)

    cfg = SimulationConfig(**{**doc, "model": ModelSection(**m)})
    try:
        cfg.model_params()
    except DomainError as exc:
        raise ConfigError([f"model: {exc}"]) from None
    return cfg


def config_from_dict(raw: dict | None, environ=None) -> SimulationConfig:
    problems: list[str] = []
    doc = _merge(_default_doc(), raw or {}, "", problems)
    doc = _merge(doc, env_overrides(environ), "env:", problems)
    for k, v in doc.items():
        if k != "model" and v == _default_doc()[k] and k not in (raw or {}):
            log.debug("default %s = %r", k, v)
    try:
        cfg = validate(doc)
    except ConfigError as exc:
        raise ConfigError(problems + exc.problems) from None
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path, environ=None) -> SimulationConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path} is not valid YAML: {exc}"]) from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError([f"{path} must hold a key-value mapping"])
    return config_from_dict(raw, environ)


@dataclass
class Series:
    time: list[float] = field(default_factory=list)
    bloch: list[np.ndarray] = field(default_factory=list)
    purity: list[float] = field(default_factory=list)
    trace_dev: list[float] = field(default_factory=list)
    s_readout: list[float] = field(default_factory=list)

    def add(self, t: float, rho, s: float = math.nan) -> None:
        self.time.append(float(t))
        self.bloch.append(bloch_vector(rho))
        self.purity.append(float(purity(rho)))
        self.trace_dev.append(float(abs(trace(rho) - 1.0)))
        self.s_readout.append(float(s))

    def add_bloch(self, t: float, r, s: float = math.nan) -> None:
        r = np.asarray(r, dtype=float)
        self.time.append(float(t))
        self.bloch.append(r)
        self.purity.append(float(0.5 * (1.0 + r @ r)))
        self.trace_dev.append(0.0)
        self.s_readout.append(float(s))

    def column(self, k: int) -> np.ndarray:
        return np.array([b[k] for b in self.bloch])


@dataclass
class EvolutionReport:
    experiment: str
    config: SimulationConfig
    series: dict[str, Series] = field(default_factory=dict)
    states: dict[str, list] = field(default_factory=dict)
    distances: dict[str, tuple[list[float], list[float]]] = field(default_factory=dict)
    regime: dict = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    wall_clock: dict[str, float] = field(default_factory=dict)
    trajectories: list = field(default_factory=list)
    readout_samples: np.ndarray | None = None

    @property
    def failed_checks(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def summary(self) -> dict:
        # wall-clock times are logged, not emitted, so outputs stay byte-identical
        return {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "experiment": self.experiment,
            "seed": self.config.seed,
            "config": self.config.echo(),
            "regime": self.regime,
            "final_distances": {k: v[1][-1] for k, v in self.distances.items() if v[1]},
            "max_distances": {k: max(v[1]) for k, v in self.distances.items() if v[1]},
            "results": self.results,
            "checks": self.checks,
            "failed_checks": self.failed_checks,
        }


def _record(report: EvolutionReport, method: str, t: float, rho, s: float = math.nan) -> None:
    report.series.setdefault(method, Series()).add(t, rho, s)
    report.states.setdefault(method, []).append(np.asarray(rho))


def _pair_distance(report: EvolutionReport, a: str, b: str) -> None:
    """Trace distance between two methods at their common times."""
    ta = {round(t, 12): i for i, t in enumerate(report.series[a].time)}
    times, vals = [], []
    for j, t in enumerate(report.series[b].time):
        i = ta.get(round(t, 12))
        if i is not None:
            times.append(t)
            vals.append(float(trace_distance(report.states[a][i], report.states[b][j])))
    report.distances[f"{a}-{b}"] = (times, vals)


def _steps(total: float, step: float, what: str) -> int:
    n = int(round(total / step))
    if n < 1 or not math.isclose(n * step, total, rel_tol=1e-9):
        raise DomainError(f"t_final={total} is not a whole number of {what}={step}")
    return n


def _run_exact(report, cfg, model, every_steps=None):
    n = _steps(cfg.t_final, model.tau, "tau")
    every = every_steps or cfg.record_every
    states = run_nonselective(cfg.rho0, model, n)
    for k in range(0, n + 1, every):
        _record(report, "exact", k * model.tau, states[k])
    if n % every:
        _record(report, "exact", n * model.tau, states[n])


def _run_master(report, cfg, cm, every_time=None):
    n = _steps(cfg.t_final, cfg.dt, "dt")
    every = cfg.record_every if every_time is None else max(1, int(round(every_time / cfg.dt)))
    states = integrate_master(cfg.rho0, cm, cfg.t_final, cfg.dt)
    for k in range(0, n + 1, every):
        _record(report, "master", k * cfg.dt, states[k])
    if n % every:
        _record(report, "master", n * cfg.dt, states[n])


def _check_nseries_timing(cfg, model):
    if not math.isclose(cfg.delta_t, cfg.N * model.tau, rel_tol=1e-9):
        raise DomainError(f"Delta_t={cfg.delta_t} differs from N*tau={cfg.N * model.tau}")


def _run_coarse(report, cfg, model, method, step):
    n = _steps(cfg.t_final, cfg.delta_t, "Delta_t")
    rho = cfg.rho0
    _record(report, method, 0.0, rho)
    for k in range(1, n + 1):
        rho = step(rho)
        _record(report, method, k * cfg.delta_t, rho)


def _nseries(report, cfg, params, model):
    _check_nseries_timing(cfg, model)
    ncfg = NSeriesConfig(
        N=cfg.N, s_points=cfg.s_points, s_halfwidth_sd=cfg.s_halfwidth_sd, use_qnumber_width=cfg.use_qnumber_width
    )
    _run_coarse(report, cfg, model, "nseries", lambda r: nseries_nonselective(r, model, cfg.delta_t, ncfg))
    _run_exact(report, cfg, model, every_steps=cfg.N)
    _pair_distance(report, "exact", "nseries")


def _difference(report, cfg, params, model):
    _check_nseries_timing(cfg, model)
    _run_coarse(report, cfg, model, "first_order", lambda r: step_first_order(r, model, cfg.delta_t))
    _run_coarse(report, cfg, model, "appendix_c", lambda r: step_appendix_c(r, model, cfg.delta_t, cfg.N))
    _run_exact(report, cfg, model, every_steps=cfg.N)
    _pair_distance(report, "exact", "first_order")
    _pair_distance(report, "exact", "appendix_c")


def _compare(report, cfg, params, model):
    """Exact sequence, coarse difference law and master equation on a shared time grid."""
    _check_nseries_timing(cfg, model)
    cm = ContinuumModel.from_model(model)
    _run_exact(report, cfg, model, every_steps=cfg.N)
    _run_coarse(report, cfg, model, "first_order", lambda r: step_first_order(r, model, cfg.delta_t))
    _run_master(report, cfg, cm, every_time=cfg.delta_t)
    _pair_distance(report, "exact", "first_order")
    _pair_distance(report, "first_order", "master")
    _pair_distance(report, "exact", "master")
    times, vals = report.distances["exact-master"]
    i = int(np.argmax(vals))
    report.results["max_distance_exact_master"] = vals[i]
    report.results["max_distance_time"] = times[i]
    report.results["tau"] = model.tau


def _sme(report, cfg, params, model):
    cm = ContinuumModel.from_model(model)
    kw = dict(scheme=cfg.scheme, abort_below=cfg.abort_below)
    ens = run_sme_ensemble(cfg.rho0, cm, cfg.t_final, cfg.dt, cfg.n_trajectories, cfg.seed, threads=cfg.threads, **kw)
    every = cfg.record_every
    n = len(ens.times) - 1
    idx = list(range(0, n + 1, every)) + ([n] if n % every else [])
    ser = report.series.setdefault("sme_mean", Series())
    for k in idx:
        s = ens.mean_readout[k - 1] if k > 0 else math.nan
        ser.add_bloch(ens.times[k], ens.mean_bloch[k], s)
    _run_master(report, cfg, cm)
    mz = report.series["master"]
    sem = ens.sem_bloch[idx]
    dev = np.stack(ser.bloch) - np.stack(mz.bloch)
    z = np.where(sem > 0, np.abs(dev) / np.where(sem > 0, sem, 1.0), np.where(np.abs(dev) > 1e-12, np.inf, 0.0))
    report.results["max_z_score"] = float(z.max())
    report.results["min_eigenvalue"] = float(ens.min_eigenvalues.min())
    report.results["aborted_paths"] = int(ens.aborted.sum())
    report.results["final_mean_bloch"] = ens.mean_bloch[-1].tolist()
    report.results["final_sem_bloch"] = ens.sem_bloch[-1].tolist()
    report.readout_samples = ens.path_mean_readout
    report.checks["sme_no_aborted_paths"] = bool(not ens.aborted.any())
    if cfg.per_trajectory_csv:
        report.trajectories = simulate_sme_paths(cfg.rho0, cm, cfg.t_final, cfg.dt, cfg.n_trajectories, cfg.seed, **kw)


def _exact(report, cfg, params, model):
    _run_exact(report, cfg, model)


def _master(report, cfg, params, model):
    _run_master(report, cfg, ContinuumModel.from_model(model))


def _converge(report, cfg, params, model):
    gamma = model.gamma
    rep = discrete_to_continuum_convergence(params, gamma, sorted(cfg.tau_list, reverse=True), cfg.t_final, cfg.rho0, cfg.dt)
    report.results["convergence"] = rep.as_dict()
    report.checks["converge_monotone"] = rep.monotone
    report.results["slope_fit"] = {
        "slope": rep.slope,
        "intercept": float(np.polyfit(np.log(rep.taus), np.log(rep.distances), 1)[1]),
    }


def _bounds(report, cfg, params, model):
    rep = check_commutator_bounds(model, cfg.N, constant=cfg.bound_constant)
    report.results["bounds"] = rep.as_dict()
    report.checks["bounds_within"] = bool(rep.within)


RUNNERS = {
    "exact": _exact,
    "nseries": _nseries,
    "difference": _difference,
    "master": _master,
    "sme": _sme,
    "compare": _compare,
    "converge": _converge,
    "bounds": _bounds,
}


def _state_checks(report: EvolutionReport) -> None:
    for method, states in report.states.items():
        arr = np.stack(states)
        report.checks[f"{method}_trace"] = bool(np.all(np.abs(trace(arr) - 1.0) <= 1e-9))
        report.checks[f"{method}_hermitian"] = bool(all(is_hermitian(r, 1e-9) for r in arr))
        if method in ("exact", "master", "nseries"):
            report.checks[f"{method}_positive"] = bool(np.min(min_eigenvalue(arr)) >= -1e-9)
    for name, (_, vals) in report.distances.items():
        report.checks[f"distance_range_{name}"] = bool(all(0.0 <= v <= 1.0 + 1e-12 for v in vals))


def run_experiment(cfg: SimulationConfig, out_dir: str | Path | None = None, write: bool = True) -> EvolutionReport:
    """Run ``cfg.experiment`` and (optionally) write CSV, JSON and plot data.

    Any failure removes the files written by this call.
    """
    params = cfg.model_params()
    model = derive(params)
    report = EvolutionReport(experiment=cfg.experiment, config=cfg)
    regime = check_regime(params, cfg.N)
    report.regime = regime.as_dict()
    for c in regime.flagged():
        log.warning("regime: %s = %.3g (%s)", c.name, c.value, c.status)
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.experiment](report, cfg, params, model)
    except DomainError as exc:
        raise DomainError(f"{cfg.experiment}: {exc}") from exc
    report.wall_clock[cfg.experiment] = time.perf_counter() - t0
    log.info("%s finished in %.2f s", cfg.experiment, report.wall_clock[cfg.experiment])
    _state_checks(report)
    if write:
        write_outputs(report, Path(out_dir if out_dir is not None else cfg.out_dir))
    return report


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _config_echo(cfg: SimulationConfig) -> list[str]:
    text = yaml.safe_dump(cfg.echo(), sort_keys=True, default_flow_style=None)
    return ["# qubitseq " + __version__, *("# " + line for line in text.splitlines())]


def _write_text(path: Path, lines, written: list[Path]) -> None:
    written.append(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def write_outputs(report: EvolutionReport, out: Path) -> list[Path]:
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        name = report.experiment
        rows = [*_config_echo(report.config), ",".join(CSV_COLUMNS)]
        for method in sorted(report.series):
            ser = report.series[method]
            for i, t in enumerate(ser.time):
                b = ser.bloch[i]
                vals = (t, method, b[0], b[1], b[2], ser.purity[i], ser.trace_dev[i], ser.s_readout[i])
                rows.append(",".join(_fmt(v) for v in vals))
        _write_text(out / f"{name}.csv", rows, written)
        if report.trajectories:
            rows = [*_config_echo(report.config), "path,time,sx,sy,sz,s_readout,dW"]
            for p in report.trajectories:
                for k in range(len(p.readout)):
                    b = bloch_vector(p.states[k + 1]) if p.states is not None and k + 1 < len(p.states) else [math.nan] * 3
                    rows.append(",".join(_fmt(v) for v in (p.index, p.times[k + 1], *b, p.readout[k], p.noise[k])))
            _write_text(out / f"{name}_trajectories.csv", rows, written)
        text = json.dumps(report.summary(), indent=2, sort_keys=True, default=_json_default)
        _write_text(out / f"{name}_summary.json", [text], written)
        written.extend(emit_plot_data(report, out))
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _two_col(path: Path, header: str, xs, ys, written: list[Path]) -> None:
    _write_text(path, [f"# {header}", *(f"{_fmt(x)} {_fmt(y)}" for x, y in zip(xs, ys))], written)


def emit_plot_data(report: EvolutionReport, out_dir: str | Path) -> list[Path]:
    """Plain-text ``.dat`` series plus ``manifest.json`` describing each file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    manifest = {}
    try:
        for method in sorted(report.series):
            ser = report.series[method]
            f = out / f"bloch_z_{method}.dat"
            _two_col(f, f"time <sz> ({method})", ser.time, ser.column(2), written)
            manifest[f.name] = f"<sz> against time, {method}"
        for i, name in enumerate(sorted(report.distances)):
            times, vals = report.distances[name]
            f = out / ("distance.dat" if i == 0 else f"distance_{name}.dat")
            _two_col(f, f"time trace_distance ({name})", times, vals, written)
            manifest[f.name] = f"trace distance {name} against time"
        if report.readout_samples is not None and np.all(np.isfinite(report.readout_samples)):
            counts, edges = np.histogram(report.readout_samples, bins=max(10, int(math.sqrt(len(report.readout_samples)))))
            f = out / "readout_hist.dat"
            lines = ["# bin_left bin_right count"]
            lines += [f"{_fmt(a)} {_fmt(b)} {int(c)}" for a, b, c in zip(edges[:-1], edges[1:], counts)]
            _write_text(f, lines, written)
            manifest[f.name] = "histogram of per-path time-averaged readout"
        conv = report.results.get("convergence")
        if conv:
            f = out / "slope_fit.dat"
            fit = report.results["slope_fit"]
            lines = [f"# tau distance fitted (slope {_fmt(fit['slope'])})"]
            for t, d in zip(conv["taus"], conv["distances"]):
                lines.append(f"{_fmt(t)} {_fmt(d)} {_fmt(math.exp(fit['intercept']) * t ** fit['slope'])}")
            _write_text(f, lines, written)
            manifest[f.name] = "exact-vs-master distance per tau with log-log fit"
        f = out / "manifest.json"
        _write_text(f, [json.dumps(manifest, indent=2, sort_keys=True)], written)
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written
