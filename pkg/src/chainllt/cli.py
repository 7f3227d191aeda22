"""Experiment orchestration: config parsing, dispatch, artifact emission.

One experiment per invocation.  Configs are TOML with a strict schema
(unknown keys are rejected); every output artifact embeds the config hash,
seed, module tolerances and the thresholds in force, and reruns of the
same config produce byte-identical files.

Exit codes: 0 all checks passed, 1 a check reported FAIL, 2 usage or
config error, 3 numeric failure inside a routine.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import verify
from .errors import ChainLLTError, ConfigError, NumericError, UsageError
from .kernel import PropagatorConfig
from .model import (GeneratorModel, dyadic_mixing_time, ergodicity_certificate,
                    make_model)
from .observable import Observable, center
from .spectral import nonarithmetic_scan, rebase_sampling
from .variance import hessian_fd, lambda_gradient_check, sigma_total

MODULE_TOLERANCES = {
    "row_sum": 1e-12,
    "stationarity": 1e-10,
    "ode_refine": 1e-6,
    "eigen_gap": 1e-3,
    "poisson_residual": 1e-8,
    "duhamel_residual": 1e-6,
}

DEFAULT_THRESHOLDS = {
    "sup_deviation": 0.05,
    "eigprod_deviation": 0.01,
    "eigprod_slack": 1.2,
    "nagaev_extra": 1e-3,
    "scan_tol": 1e-6,
    "decay_rate": 0.95,
    "decay_r2": 0.99,
}

EXPERIMENT_KINDS = ("check-model", "scan-spectrum", "sigma", "nagaev",
                    "eigprod", "llt", "llt-rho", "fastslow")

_MODEL_KEYS = {"labels", "rates", "mixing_time"}
_OBSERVABLE_KEYS = {"dimension", "coeffs", "auto_center", "max_degree"}
_EXPERIMENT_KEYS = {
    "kind", "seed", "reps", "T_list", "t_grid", "tau_grid", "rho_list",
    "eps_list", "t_final", "u_factors", "alpha_points", "steps", "method",
    "fd_step", "quadrature_points", "target_norm", "threads", "kernel_width",
    "scan_t_grid", "duhamel_paths", "thresholds", "decay_T_list",
    "dump_replicas",
}
_FASTSLOW_KEYS = {"A", "v_coeffs"}
_OUTPUT_KEYS = {"dir"}
_SECTIONS = {"model": _MODEL_KEYS, "observable": _OBSERVABLE_KEYS,
             "experiment": _EXPERIMENT_KEYS, "fastslow": _FASTSLOW_KEYS,
             "output": _OUTPUT_KEYS}


@dataclass
class ExperimentConfig:
    """Parsed experiment description with every knob defaulted."""

    raw: dict
    sha256: str
    kind: str | None
    seed: int = 12345
    reps: int = 100_000
    T_list: tuple[float, ...] = (50.0, 200.0)
    t_grid: tuple[tuple[float, ...], ...] = ()
    tau_grid: tuple[tuple[float, ...], ...] = ((1.0,),)
    rho_list: tuple[float, ...] = (0.0, 0.25, 0.5)
    eps_list: tuple[float, ...] = (0.005,)
    t_final: float = 1.0
    u_factors: tuple[tuple[float, ...], ...] | None = None
    alpha_points: int = 33
    steps: int = 256
    method: str = "cf4"
    fd_step: float = 1e-3
    quadrature_points: int = 17
    target_norm: float = 0.5
    threads: int = 0
    kernel_width: float = 1.0
    scan_t_grid: tuple[float, ...] = (0.5, 1.0, 2.0)
    duhamel_paths: int = 50
    decay_T_list: tuple[float, ...] = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    thresholds: dict = field(default_factory=dict)
    labels: tuple[str, ...] | None = None
    rates: tuple = ()
    mixing_time: float = 1.0
    dimension: int = 1
    coeffs: tuple = ()
    auto_center: bool = True
    max_degree: int = 16
    dump_replicas: bool = False
    A: tuple = (((0.0,),),)
    v_coeffs: tuple = ()
    out_dir: str = "out"

    @property
    def effective_threads(self) -> int:
        env = os.environ.get("CHAINLLT_THREADS")
        if env:
            return max(1, int(env))
        if self.threads > 0:
            return self.threads
        return os.cpu_count() or 1

    def threshold(self, name: str) -> float:
        return float(self.thresholds.get(name, DEFAULT_THRESHOLDS[name]))

    def propagator(self) -> PropagatorConfig:
        return PropagatorConfig(method=self.method, steps=self.steps)


def _reject_unknown(table: dict, allowed: set[str], where: str):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where}]")


def _as_vector_grid(values) -> tuple[tuple[float, ...], ...]:
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.append(tuple(float(x) for x in v))
        else:
            out.append((float(v),))
    return tuple(out)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomllib.loads(blob.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    unknown_sections = set(data) - set(_SECTIONS)
    if unknown_sections:
        raise ConfigError(f"unknown section(s) {sorted(unknown_sections)}")
    for name, allowed in _SECTIONS.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ConfigError(f"[{name}] must be a table")
            _reject_unknown(data[name], allowed, name)

    cfg = ExperimentConfig(raw=data, sha256=hashlib.sha256(blob).hexdigest(),
                           kind=None)
    model_tab = data.get("model", {})
    if "labels" in model_tab:
        cfg.labels = tuple(str(x) for x in model_tab["labels"])
    cfg.rates = tuple(tuple(r) for r in model_tab.get("rates", ()))
    cfg.mixing_time = float(model_tab.get("mixing_time", 1.0))

    obs_tab = data.get("observable", {})
    cfg.dimension = int(obs_tab.get("dimension", 1))
    cfg.coeffs = tuple(obs_tab.get("coeffs", ()))
    cfg.auto_center = bool(obs_tab.get("auto_center", True))
    cfg.max_degree = int(obs_tab.get("max_degree", 16))

    exp = data.get("experiment", {})
    if "kind" in exp:
        kind = str(exp["kind"])
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        cfg.kind = kind
    for key, cast in (("seed", int), ("reps", int), ("t_final", float),
                      ("alpha_points", int), ("steps", int), ("fd_step", float),
                      ("quadrature_points", int), ("target_norm", float),
                      ("threads", int), ("kernel_width", float),
                      ("duhamel_paths", int), ("method", str),
                      ("dump_replicas", bool)):
        if key in exp:
            setattr(cfg, key, cast(exp[key]))
    for key in ("T_list", "rho_list", "eps_list", "scan_t_grid", "decay_T_list"):
        if key in exp:
            setattr(cfg, key, tuple(float(x) for x in exp[key]))
    if "t_grid" in exp:
        cfg.t_grid = _as_vector_grid(exp["t_grid"])
    if "tau_grid" in exp:
        cfg.tau_grid = _as_vector_grid(exp["tau_grid"])
    if "u_factors" in exp:
        cfg.u_factors = _as_vector_grid(exp["u_factors"])
    if "thresholds" in exp:
        bad = set(exp["thresholds"]) - set(DEFAULT_THRESHOLDS)
        if bad:
            raise ConfigError(f"unknown threshold(s) {sorted(bad)}")
        cfg.thresholds = {k: float(v) for k, v in exp["thresholds"].items()}

    fs = data.get("fastslow", {})
    if "A" in fs:
        cfg.A = tuple(fs["A"])
    if "v_coeffs" in fs:
        cfg.v_coeffs = tuple(fs["v_coeffs"])

    cfg.out_dir = str(data.get("output", {}).get("dir", "out"))
    return cfg


def _build_model(cfg: ExperimentConfig) -> GeneratorModel:
    if not cfg.rates:
        raise ConfigError("validate_generator: [model] rates must be non-empty")
    labels = cfg.labels
    if labels is None:
        seen = []
        for frm, to, _ in cfg.rates:
            for name in (str(frm), str(to)):
                if name not in seen:
                    seen.append(name)
        labels = tuple(seen)
    index = {name: i for i, name in enumerate(labels)}
    n = len(labels)
    G = np.zeros((n, n))
    for frm, to, rate in cfg.rates:
        frm, to = str(frm), str(to)
        if frm not in index or to not in index:
            raise ConfigError(f"validate_generator: unknown state in rate {frm}->{to}")
        if frm == to:
            raise ConfigError(f"validate_generator: self-rate on state {frm}")
        G[index[frm], index[to]] += float(rate)
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(G, -G.sum(axis=1))
    try:
        return make_model(G, labels, mixing_time=cfg.mixing_time)
    except UsageError as exc:
        raise ConfigError(f"validate_generator: {exc}") from exc


def _build_observable(cfg: ExperimentConfig, model: GeneratorModel,
                      coeffs=None) -> Observable:
    """Read the d x n table: coeffs[j][x] is an ascending coefficient list."""
    table = coeffs if coeffs is not None else cfg.coeffs
    if not table:
        raise ConfigError("observable coefficients missing")
    n = model.n
    d = cfg.dimension
    if len(table) != d:
        raise ConfigError(f"observable table has {len(table)} output rows, "
                          f"dimension says {d}")
    max_len = max(len(poly) for out_row in table for poly in out_row)
    arr = np.zeros((d, n, max_len))
    for j, out_row in enumerate(table):
        if len(out_row) != n:
            raise ConfigError(f"output {j} lists {len(out_row)} states, model has {n}")
        for x, poly in enumerate(out_row):
            arr[j, x, :len(poly)] = [float(c) for c in poly]
    try:
        b = Observable(arr, max_degree=cfg.max_degree)
        return center(b, model.require_nu()) if cfg.auto_center else b
    except UsageError as exc:
        raise ConfigError(f"Observable: {exc}") from exc


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _meta(cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    meta = {
        "config_sha256": cfg.sha256,
        "seed": cfg.seed,
        "tolerances": json.dumps(MODULE_TOLERANCES, sort_keys=True),
        "thresholds": json.dumps({k: cfg.threshold(k) for k in DEFAULT_THRESHOLDS},
                                 sort_keys=True),
    }
    if extra:
        meta.update(extra)
    return meta


def _write_csv(path: Path, meta: dict, header: list[str], rows) -> None:
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _write_summary(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_fmt) + "\n",
                    encoding="utf-8", newline="\n")


def _summary(cfg: ExperimentConfig, experiment: str, verdict: str, **extra) -> dict:
    payload = {
        "experiment": experiment,
        "config_sha256": cfg.sha256,
        "seed": cfg.seed,
        "verdict": verdict,
        "tolerances": MODULE_TOLERANCES,
        "thresholds": {k: cfg.threshold(k) for k in DEFAULT_THRESHOLDS},
    }
    payload.update(extra)
    return payload


def _vec_str(t) -> str:
    return ";".join(repr(float(c)) for c in t)


# ---------------------------------------------------------------------------
# Experiment dispatchers
# ---------------------------------------------------------------------------

def _run_check_model(cfg, out: Path) -> int:
    model = _build_model(cfg)
    cert = ergodicity_certificate(model, cfg.mixing_time)
    dyadic = dyadic_mixing_time(model, 0.5)
    rebase = rebase_sampling(model, cfg.target_norm)
    nu = model.require_nu()
    print(f"nu = ({', '.join(repr(float(x)) for x in nu)})")
    print(f"certificate at horizon {cfg.mixing_time} = {cert!r}")
    print(f"smallest dyadic horizon with certificate <= 0.5: {dyadic!r}")
    print(f"step multiple for remainder norm <= {cfg.target_norm}: {rebase}")
    _write_csv(out / "model.csv", _meta(cfg),
               ["state", "label", "nu"],
               [[i, model.labels[i], float(nu[i])] for i in range(model.n)])
    passed = cert < 1.0
    _write_summary(out / "summary.json", _summary(
        cfg, "check-model", "PASS" if passed else "FAIL",
        certificate=cert, mixing_time=cfg.mixing_time,
        dyadic_mixing_time=dyadic, rebase_multiple=rebase,
        nu=[float(x) for x in nu]))
    return 0 if passed else 1


def _run_scan(cfg, out: Path) -> int:
    model = _build_model(cfg)
    b = _build_observable(cfg, model)
    if not cfg.t_grid:
        raise ConfigError("nonarithmetic_scan: experiment t_grid must be non-empty")
    report = nonarithmetic_scan(model, b, [np.asarray(t) for t in cfg.t_grid],
                                np.linspace(0.0, 1.0, cfg.alpha_points),
                                tol=cfg.threshold("scan_tol"),
                                threads=cfg.effective_threads)
    rows = []
    for r in report.rows:
        zero = all(c == 0.0 for c in r.t)
        row_verdict = "sanity" if zero else (
            "pass" if r.radius < 1.0 - report.tol else "fail")
        rows.append([_vec_str(r.t), r.alpha, r.radius, row_verdict])
    _write_csv(out / "scan.csv", _meta(cfg), ["t", "alpha", "spectral_radius", "verdict"], rows)
    _write_summary(out / "summary.json", _summary(
        cfg, "scan-spectrum", report.verdict, tol=report.tol,
        sanity_ok=report.sanity_ok,
        max_radius_nonzero=report.max_radius_nonzero(),
        note="finite grid: evidence on the scanned compact set only"))
    print(f"scan verdict: {report.verdict}")
    return 0 if report.passed else 1


def _run_sigma(cfg, out: Path) -> int:
    model = _build_model(cfg)
    b = _build_observable(cfg, model)
    sigma = sigma_total(model, b, points=cfg.quadrature_points,
                        threads=cfg.effective_threads)
    fd = hessian_fd(model, b, 0.5, h=cfg.fd_step)
    grad = lambda_gradient_check(model, b, 0.25, 0.75, h=cfg.fd_step,
                                 cfg=cfg.propagator())
    d = b.d
    header = ["alpha"] + [f"hess_{i}{j}" for i in range(d) for j in range(d)]
    rows = [[a] + [float(H[i, j]) for i in range(d) for j in range(d)]
            for a, H in sigma.per_alpha]
    _write_csv(out / "sigma_alpha.csv", _meta(cfg), header, rows)
    _write_summary(out / "summary.json", _summary(
        cfg, "sigma", "PASS", route=sigma.route,
        cov=sigma.cov.tolist(), factor=sigma.factor.tolist(),
        det_factor=sigma.det,
        fd_cross_check_alpha_half=fd.tolist(),
        fd_gradient_magnitude=grad.tolist(),
        quadrature_points=cfg.quadrature_points))
    print(f"cov = {sigma.cov.tolist()}")
    return 0


def _run_nagaev(cfg, out: Path) -> int:
    model = _build_model(cfg)
    b = _build_observable(cfg, model)
    bank = verify.default_bank(model, b.d, cfg.kernel_width)
    t_grid = cfg.t_grid or _as_vector_grid(np.linspace(-3.0, 3.0, 13))
    report = verify.nagaev_check(model, b, [np.asarray(t) for t in t_grid],
                                 cfg.T_list, bank, cfg.reps, cfg.seed,
                                 cfg.propagator(),
                                 extra_tol=cfg.threshold("nagaev_extra"))
    rows = [[_vec_str(r.t), r.T, r.f, r.mu, r.mc.real, r.mc.imag, r.se,
             r.operator.real, r.operator.imag, r.deviation, r.bound, r.ok]
            for r in report.rows]
    _write_csv(out / "nagaev.csv", _meta(cfg),
               ["t", "T", "f", "mu", "mc_re", "mc_im", "se",
                "op_re", "op_im", "deviation", "bound", "ok"], rows)
    if cfg.dump_replicas:
        _dump_replicas(cfg, model, b, out)
    _write_summary(out / "summary.json", _summary(
        cfg, "nagaev", "PASS" if report.passed else "FAIL", reps=cfg.reps,
        cells=len(report.rows),
        max_deviation=max(r.deviation for r in report.rows)))
    print(f"nagaev verdict: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def _dump_replicas(cfg, model, b, out: Path) -> None:
    """Optional replica-level stream of (replica, integral, final state)."""
    from .simulate import PolynomialAccumulator, sample_ensemble, stream_key
    T = float(cfg.T_list[0])
    nu = model.require_nu()
    S, X = sample_ensemble(model, PolynomialAccumulator(b, T), T, nu,
                           cfg.reps, cfg.seed, stream_key("replica-dump", T))
    header = ["replica"] + [f"S_{j}" for j in range(S.shape[1])] + ["final_state"]
    rows = ([i] + [float(v) for v in S[i]] + [int(X[i])] for i in range(S.shape[0]))
    _write_csv(out / "replicas.csv", _meta(cfg, {"T": repr(T), "mu": "nu"}),
               header, rows)


def _run_eigprod(cfg, out: Path) -> int:
    model = _build_model(cfg)
    b = _build_observable(cfg, model)
    report = verify.eigprod_check(model, b, [np.asarray(t) for t in cfg.tau_grid],
                                  cfg.T_list, cfg=cfg.propagator(),
                                  threshold=cfg.threshold("eigprod_deviation"),
                                  slack=cfg.threshold("eigprod_slack"))
    rows = [[_vec_str(r.tau), r.T, r.product.real, r.product.imag,
             r.target, r.deviation] for r in report.rows]
    _write_csv(out / "eigprod.csv", _meta(cfg),
               ["tau", "T", "product_re", "product_im", "target", "deviation"], rows)
    _write_summary(out / "summary.json", _summary(
        cfg, "eigprod", "PASS" if report.passed else "FAIL",
        threshold=report.threshold, slack=report.slack))
    print(f"eigprod verdict: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def _llt_rows(reports) -> list[list]:
    rows = []
    for rep in reports:
        for r in rep.rows:
            rows.append([rep.T, rep.rho, r.mu, _vec_str(r.u), r.f, r.g,
                         r.lhs, r.se, r.rhs, r.deviation])
    return rows


_LLT_HEADER = ["T", "rho", "mu", "u", "f", "g", "lhs", "se", "rhs", "deviation"]


def _run_llt(cfg, out: Path) -> int:
    model = _build_model(cfg)
    b = _build_observable(cfg, model)
    bank = verify.default_bank(model, b.d, cfg.kernel_width)
    if cfg.u_factors is not None:
        bank = verify.TestBank(bank.f_bank, bank.g_bank, bank.mu_bank,
                               cfg.u_factors, bank.C)
    verdict = verify.llt_check(model, b, bank, cfg.T_list, cfg.reps, cfg.seed,
                               sup_threshold=cfg.threshold("sup_deviation"),
                               scan_t_grid=cfg.scan_t_grid)
    _write_csv(out / "llt.csv", _meta(cfg), _LLT_HEADER, _llt_rows(verdict.reports))
    if cfg.dump_replicas and verdict.reports:
        _dump_replicas(cfg, model, b, out)
    _write_summary(out / "summary.json", _summary(
        cfg, "llt", "PASS" if verdict.passed else "FAIL",
        reason=verdict.reason, scan_verdict=verdict.scan_verdict,
        sup_threshold=verdict.sup_threshold,
        sup_deviation_by_T={repr(r.T): r.sup_deviation for r in verdict.reports},
        note="finite bank: uniformity over u, f, mu sampled, not certified"))
    print(f"llt verdict: {'PASS' if verdict.passed else 'FAIL'}"
          + (f" ({verdict.reason})" if verdict.reason else ""))
    return 0 if verdict.passed else 1


def _run_llt_rho(cfg, out: Path) -> int:
    model = _build_model(cfg)
    b = _build_observable(cfg, model)
    bank = verify.default_bank(model, b.d, cfg.kernel_width)
    if cfg.u_factors is not None:
        bank = verify.TestBank(bank.f_bank, bank.g_bank, bank.mu_bank,
                               cfg.u_factors, bank.C)
    verdict = verify.llt_rho_check(model, b, cfg.rho_list, bank, cfg.T_list,
                                   cfg.reps, cfg.seed,
                                   sup_threshold=cfg.threshold("sup_deviation"),
                                   scan_t_grid=cfg.scan_t_grid)
    rows = []
    for rho, v in verdict.verdicts:
        rows.extend(_llt_rows(v.reports))
    _write_csv(out / "llt_rho.csv", _meta(cfg), _LLT_HEADER, rows)
    _write_summary(out / "summary.json", _summary(
        cfg, "llt-rho", "PASS" if verdict.passed else "FAIL",
        continuity_ok=verdict.continuity_ok,
        lipschitz_bound=verdict.lipschitz_bound,
        max_covariance_jump=verdict.max_jump,
        rho_list=list(cfg.rho_list)))
    print(f"llt-rho verdict: {'PASS' if verdict.passed else 'FAIL'}")
    return 0 if verdict.passed else 1


def _run_fastslow(cfg, out: Path) -> int:
    model = _build_model(cfg)
    if not cfg.v_coeffs:
        raise ConfigError("fastslow: [fastslow] v_coeffs missing")
    v = _build_observable(cfg, model, coeffs=cfg.v_coeffs)
    A = np.asarray(cfg.A, dtype=float)
    bank = verify.default_bank(model, v.d, cfg.kernel_width)
    if cfg.u_factors is not None:
        bank = verify.TestBank(bank.f_bank, bank.g_bank, bank.mu_bank,
                               cfg.u_factors, bank.C)
    verdict = verify.fastslow_llt_check(model, A, v, cfg.eps_list, cfg.t_final,
                                        bank, cfg.reps, cfg.seed,
                                        sup_threshold=cfg.threshold("sup_deviation"),
                                        duhamel_paths=cfg.duhamel_paths)
    _write_csv(out / "fastslow.csv", _meta(cfg), _LLT_HEADER, _llt_rows(verdict.reports))
    _write_summary(out / "summary.json", _summary(
        cfg, "fastslow", "PASS" if verdict.passed else "FAIL",
        applicable=verdict.applicable, reason=verdict.reason,
        max_duhamel_residual=verdict.max_duhamel_residual,
        eps_list=list(cfg.eps_list), t_final=cfg.t_final))
    print(f"fastslow verdict: {'PASS' if verdict.passed else 'FAIL'}")
    return 0 if verdict.passed else 1


_DISPATCH = {
    "check-model": _run_check_model,
    "scan-spectrum": _run_scan,
    "sigma": _run_sigma,
    "nagaev": _run_nagaev,
    "eigprod": _run_eigprod,
    "llt": _run_llt,
    "llt-rho": _run_llt_rho,
    "fastslow": _run_fastslow,
}


def run(cfg: ExperimentConfig, kind: str, out_dir: str | None = None) -> int:
    """Dispatch one experiment; returns the process exit code."""
    if cfg.kind is not None and cfg.kind != kind:
        raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {kind!r}")
    out = Path(os.environ.get("CHAINLLT_OUTPUT_DIR") or out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _DISPATCH[kind](cfg, out)


def describe(cfg: ExperimentConfig) -> int:
    """Print the execution plan and effective settings without computing."""
    kind = cfg.kind
    if kind is None:
        raise ConfigError("describe needs experiment.kind in the config")
    total_floor = sum(int(math.floor(T)) for T in cfg.T_list)
    n_t = len(cfg.t_grid) or 13
    mu_count = 2
    plan: list[str] = [f"experiment: {kind}"]
    if kind == "check-model":
        plan += ["1. validate_generator + invariant_measure",
                 "2. ergodicity_certificate at the configured horizon",
                 "3. dyadic mixing-time search, rebase multiple"]
    elif kind == "scan-spectrum":
        cells = (n_t + 1) * cfg.alpha_points
        plan += [f"1. frozen-kernel spectral radii: {cells} eigensolves"]
    elif kind == "sigma":
        plan += [f"1. {cfg.quadrature_points} Green-Kubo solves (quadrature nodes)",
                 "2. FD cross-check at alpha = 0.5, gradient check"]
    elif kind == "nagaev":
        plan += [f"1. MC ensembles: {len(cfg.T_list) * mu_count} x {cfg.reps} paths"
                 f" (path-seconds ~ {cfg.reps * sum(cfg.T_list) * mu_count:.3g})",
                 f"2. operator products: {n_t} frequencies x {total_floor} unit builds"]
    elif kind == "eigprod":
        plan += [f"1. {len(cfg.tau_grid)} x {total_floor} operator builds + eigensolves"]
    elif kind == "llt":
        plan += ["1. non-arithmetic scan (fail-fast guard)",
                 f"2. sigma_total: {cfg.quadrature_points} Green-Kubo solves",
                 f"3. MC: {len(cfg.T_list) * mu_count} ensembles x {cfg.reps} paths"
                 f" (path-seconds ~ {cfg.reps * sum(cfg.T_list) * mu_count:.3g})"]
    elif kind == "llt-rho":
        horizon = sum((1.0 - r) * T for r in cfg.rho_list for T in cfg.T_list)
        plan += ["1. non-arithmetic scan (fail-fast guard)",
                 f"2. sigma_total on [rho, 1] for rho in {list(cfg.rho_list)}",
                 f"3. MC: {len(cfg.rho_list) * len(cfg.T_list) * mu_count} ensembles"
                 f" x {cfg.reps} paths (path-seconds ~ {cfg.reps * mu_count * horizon:.3g})"]
    elif kind == "fastslow":
        plan += ["1. fundamental-matrix weight on a dense grid",
                 "2. sigma_total on the effective observable",
                 f"3. {cfg.duhamel_paths} single-path identity checks",
                 f"4. MC: {len(cfg.eps_list) * mu_count} ensembles x {cfg.reps} paths"]
    plan.append("outputs: CSV table(s) + summary.json in the output directory")
    for line in plan:
        print(line)
    print("effective settings:")
    skip = {"raw", "thresholds", "coeffs", "rates", "v_coeffs", "A"}
    for key in sorted(vars(cfg)):
        if key in skip:
            continue
        print(f"  {key} = {getattr(cfg, key)!r}")
    print(f"  thresholds = {json.dumps({k: cfg.threshold(k) for k in DEFAULT_THRESHOLDS}, sort_keys=True)}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chainllt",
        description="Spectral and Monte Carlo checks for time-modulated "
                    "Markov chain functionals")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS + ("describe",):
        p = sub.add_parser(kind)
        p.add_argument("config", help="TOML experiment config")
        p.add_argument("--output-dir", default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "describe":
            return describe(cfg)
        return run(cfg, args.command, args.output_dir)
    except UsageError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ChainLLTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
