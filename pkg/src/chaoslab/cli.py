"""Command-line interface: ``chaoslab <command> [options]``.

Exit status: 0 success, 2 configuration error, 3 numerical failure
(divergence, degeneracy, accuracy, embedding), 4 inconclusive result.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import (AccuracyError, ChaosLabError, ConfigurationError, DataError, DegeneracyError,
                     DivergenceError, DomainError, EmbeddingError, EvaluationError, ExcludedCaseWarning,
                     ResolutionError)
from .report import SCHEMA_VERSION, ExperimentReport
from .rng import check_seed, env_seed

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 2, 3, 4
COMMANDS = ("moments", "variance", "field", "clt", "ascl", "contractions", "conditions")


@dataclass
class RunConfig:
    """Resolved configuration; every report embeds it in full."""

    command: str
    model: str = "exponential"
    d: int = 1
    alpha: Optional[float] = None
    mu: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    phi: str = "hermite:2"
    domain: Optional[str] = None
    q: str = "8..128"
    signed: bool = True
    r_max: Optional[float] = None
    t: List[float] = field(default_factory=lambda: [4.0, 64.0])
    T: float = 1e4
    horizons: List[float] = field(default_factory=list)
    g: List[str] = field(default_factory=lambda: ["cos", "sin", "clamp2", "gauss_bump"])
    N: Optional[int] = None
    K: int = 4096
    h: Optional[float] = None
    n: int = 64
    n_reps: int = 2000
    n_samples: int = 2_000_000
    k1: Optional[int] = None
    k2: Optional[int] = None
    m: Optional[int] = None
    K_cap: Optional[int] = None
    carrier: Optional[str] = None
    drop_first_chaos: bool = False
    seed: int = 0
    threads: int = 1
    output: Optional[str] = None
    format: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"config schema {self.schema_version} unsupported (expected {SCHEMA_VERSION})")
        if self.model not in ("berry", "exponential", "whittle_matern", "cauchy"):
            raise ConfigurationError(f"unknown model {self.model!r}")
        if self.d < 1:
            raise ConfigurationError("dimension d must be >= 1")
        if self.model == "berry" and self.d < 2:
            raise ConfigurationError("the Berry model needs d >= 2")
        if self.domain is None:
            self.domain = "ball" if self.model == "berry" else "box"
        if self.domain not in ("ball", "box"):
            raise ConfigurationError("domain must be 'ball' or 'box'")
        if self.format is None:
            self.format = "csv" if self.command in ("moments",) else "json"
        if self.format not in ("csv", "json"):
            raise ConfigurationError("format must be csv or json")
        if self.carrier is None:
            self.carrier = "planewave" if self.model == "berry" else "circulant"
        if self.carrier not in ("circulant", "planewave"):
            raise ConfigurationError("carrier must be circulant or planewave")
        if any(t <= 0 for t in self.t) or self.T <= 1:
            raise ConfigurationError("domain dilations must be positive and T > 1")
        if self.n_reps < 2 or self.n_samples < 100 or self.n < 1 or self.K < 1:
            raise ConfigurationError("n_reps >= 2, n_samples >= 100, n >= 1 and K >= 1 are required")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if self.h is not None and self.h <= 0:
            raise ConfigurationError("grid spacing h must be positive")
        from .limits import G_BY_NAME

        unknown = [g for g in self.g if g not in G_BY_NAME]
        if unknown:
            raise ConfigurationError(f"unknown test functions {unknown}; choose from {sorted(G_BY_NAME)}")
        self.seed = check_seed(self.seed)
        # build once so malformed model and observable specs fail before any work
        self.build_model()
        self.build_observable()
        return self

    def build_model(self):
        from .specialfn import CovarianceModel

        spec = {"kind": self.model, "d": self.d}
        for key in ("alpha", "mu", "beta", "gamma"):
            if getattr(self, key) is not None:
                spec[key] = getattr(self, key)
        return CovarianceModel.from_dict(spec)

    def build_observable(self):
        from .hermite import parse_observable

        return parse_observable(self.phi)

    def build_domain(self, t: float = 1.0):
        from .functionals import DomainSpec

        return DomainSpec(self.domain, float(t), self.d)


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def _csv_floats(s: str) -> List[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _csv_words(s: str) -> List[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: configuration error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chaoslab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS
    common = _Parser(add_help=False)
    common.add_argument("--config", default=S, help="JSON file with option values")
    common.add_argument("--model", default=S, choices=["berry", "exponential", "whittle_matern", "cauchy"])
    common.add_argument("--d", type=int, default=S)
    common.add_argument("--alpha", type=float, default=S)
    common.add_argument("--mu", type=float, default=S)
    common.add_argument("--beta", type=float, default=S)
    common.add_argument("--gamma", type=float, default=S)
    common.add_argument("--phi", default=S, help="hermite:q | indicator:u | coeffs:a0,a1,...")
    common.add_argument("--domain", default=S, choices=["ball", "box"])
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--threads", type=int, default=S)
    common.add_argument("--output", "-o", default=S)
    common.add_argument("--format", default=S, choices=["csv", "json"])
    common.add_argument("--h", type=float, default=S)

    sp = sub.add_parser("moments", parents=[common], help="moment table and log-log slope in q")
    sp.add_argument("--q", default=S, help="range lo..hi or comma list")
    sp.add_argument("--absolute", dest="signed", action="store_false", default=S)
    sp.add_argument("--r-max", dest="r_max", type=float, default=S)

    sp = sub.add_parser("variance", parents=[common], help="exact variance with per-chaos terms")
    sp.add_argument("--t", type=_csv_floats, default=S)
    sp.add_argument("--N", type=int, default=S)

    sp = sub.add_parser("field", parents=[common], help="sample a field on a lattice")
    sp.add_argument("--n", type=int, default=S, help="points per axis")
    sp.add_argument("--carrier", default=S, choices=["circulant", "planewave"])
    sp.add_argument("--K", type=int, default=S)

    sp = sub.add_parser("clt", parents=[common], help="replicate CLT experiment")
    sp.add_argument("--t", type=_csv_floats, default=S)
    sp.add_argument("--n-reps", dest="n_reps", type=int, default=S)
    sp.add_argument("--N", type=int, default=S)
    sp.add_argument("--carrier", default=S, choices=["circulant", "planewave"])
    sp.add_argument("--K", type=int, default=S)
    sp.add_argument("--drop-first-chaos", dest="drop_first_chaos", action="store_true", default=S)

    sp = sub.add_parser("ascl", parents=[common], help="single-path log-average experiment")
    sp.add_argument("--T", type=float, default=S)
    sp.add_argument("--horizons", type=_csv_floats, default=S)
    sp.add_argument("--g", type=_csv_words, default=S)
    sp.add_argument("--carrier", default=S, choices=["circulant", "planewave"])
    sp.add_argument("--K", type=int, default=S)

    sp = sub.add_parser("contractions", parents=[common], help="Monte Carlo contraction integrals")
    sp.add_argument("--t", type=_csv_floats, default=S)
    sp.add_argument("--k1", type=int, default=S)
    sp.add_argument("--k2", type=int, default=S)
    sp.add_argument("--m", type=int, default=S, help="estimate xi_m instead of one h_t")
    sp.add_argument("--K-cap", dest="K_cap", type=int, default=S)
    sp.add_argument("--n-samples", dest="n_samples", type=int, default=S)

    sub.add_parser("conditions", parents=[common], help="check decay and local-exponent conditions")
    return p


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    values = {}
    cfg_path = getattr(ns, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {cfg_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
        unknown = sorted(set(data) - _FIELD_NAMES)
        if unknown:
            raise ConfigurationError(f"unknown config keys {unknown}")
        if data.get("command", ns.command) != ns.command:
            raise ConfigurationError("config command differs from the invoked subcommand")
        values.update(data)
    values.update({k: v for k, v in vars(ns).items() if k != "config"})
    values["command"] = ns.command
    seed = env_seed(values.get("seed", 0))
    values["seed"] = 0 if seed is None else seed
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    return cfg.validate()


# --------------------------------------------------------------------------
# commands


def _default_output(cfg: RunConfig) -> str:
    return cfg.output or f"chaoslab_{cfg.command}.{cfg.format}"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_manifest(cfg: RunConfig, path: str) -> None:
    """Sidecar ``<path>.manifest.json`` for artifacts that cannot carry the config themselves."""
    rep = ExperimentReport({"run": asdict(cfg), "model": cfg.build_model().to_dict()}, [{"artifact": path}])
    _write(path + ".manifest.json", rep.to_json())


def _emit_report(cfg: RunConfig, rep: ExperimentReport) -> str:
    rep.config["run"] = asdict(cfg)
    path = _default_output(cfg)
    if cfg.format == "json":
        _write(path, rep.to_json())
    else:
        _write(path, rep.to_csv())
        _write_manifest(cfg, path)
    return path


def cmd_moments(cfg: RunConfig):
    from .covmoments import INFINITE, moment_slope

    model = cfg.build_model()
    r_max = INFINITE if cfg.r_max is None else cfg.r_max
    fit = moment_slope(model, cfg.q, cfg.signed, r_max)
    path = _default_output(cfg)
    if cfg.format == "csv":
        _write(path, fit.table.to_csv())
        _write_manifest(cfg, path)
    else:
        rows = [{"q": e.q, "r_max": str(e.r_max), "signed": e.signed, "value": e.value, "err": e.err}
                for e in fit.table.entries]
        rep = ExperimentReport({"experiment": "moments", "model": model.to_dict()}, rows)
        rep.results.append({"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual})
        path = _emit_report(cfg, rep)
    extra = ""
    if model.kind == "berry" and model.d == 2 and isinstance(r_max, type(INFINITE)):
        c = fit.limit_constant
        extra = (f" q*moment={c:.4f} (plane; 4*pi={4 * math.pi:.4f}) radial={c / (2 * math.pi):.4f}"
                 f" plane/(2pi)^2={c / (4 * math.pi ** 2):.4f}")
    return f"slope={fit.slope:.4f}{extra} file={path}", EXIT_OK


def cmd_variance(cfg: RunConfig):
    from .functionals import exact_variance

    model, obs = cfg.build_model(), cfg.build_observable()
    rows = []
    for t in cfg.t:
        v = exact_variance(model, obs.expansion, cfg.build_domain(t), cfg.N)
        rows.append({"t": t, "sigma2": v.total, "err": v.err, "N": v.N,
                     "terms": {str(q): x for q, x in v.terms.items()}, "tail_bound": v.tail_bound})
    rep = ExperimentReport({"experiment": "variance", "model": model.to_dict(), "phi": obs.name}, rows)
    if len(rows) >= 2:
        x, y = np.log(cfg.t), np.log([r["sigma2"] for r in rows])
        slope = float(np.polyfit(x, y, 1)[0])
        rep.results.append({"loglog_slope": slope})
        summary = f"loglog_slope={slope:.4f}"
    else:
        summary = f"sigma2={rows[0]['sigma2']:.6g}"
    return f"{summary} file={_emit_report(cfg, rep)}", EXIT_OK


def cmd_field(cfg: RunConfig):
    from .fieldgen import GridField, LatticeSpec, circulant_sample, eval_field, make_planewave
    from .functionals import default_spacing

    model = cfg.build_model()
    h = cfg.h or default_spacing(model)
    lat = LatticeSpec(tuple([0.0] * cfg.d), h, tuple([cfg.n] * cfg.d))
    if cfg.carrier == "planewave":
        if model.kind != "berry":
            raise ConfigurationError("plane-wave carriers synthesise Berry fields only")
        basis = make_planewave(cfg.d, cfg.K, seed=cfg.seed)
        gf = GridField(lat, eval_field(basis, lat.points()).reshape(lat.shape), cfg.seed, model,
                       {"carrier": "planewave", "K": cfg.K})
    else:
        gf = circulant_sample(model, lat, cfg.seed)
    path = cfg.output or ("chaoslab_field.csv" if cfg.format == "csv" else "chaoslab_field.bin")
    if cfg.format == "csv":
        _write(path, gf.to_csv())
    else:
        with open(path, "wb") as fh:
            fh.write(gf.to_bytes())
    _write_manifest(cfg, path)
    return f"points={lat.size} sample_var={float(np.var(gf.values)):.4f} file={path}", EXIT_OK


def cmd_clt(cfg: RunConfig):
    from .limits import CLTOptions, clt_experiment

    model, obs = cfg.build_model(), cfg.build_observable()
    opts = CLTOptions(cfg.drop_first_chaos, cfg.N, cfg.carrier, cfg.h, cfg.K, cfg.threads)
    rep = clt_experiment(model, obs, cfg.build_domain(), cfg.t, cfg.n_reps, cfg.seed, opts)
    w = " ".join(f"W1(t={r['t']:g})={r['W1']:.4f}" for r in rep.results)
    return f"{w} file={_emit_report(cfg, rep)}", EXIT_OK


def cmd_ascl(cfg: RunConfig):
    from .limits import G_BY_NAME, ascl_path, log_averages

    model, obs = cfg.build_model(), cfg.build_observable()
    gl = [G_BY_NAME[g] for g in cfg.g]
    grid, F = ascl_path(model, obs, cfg.build_domain(), cfg.T, cfg.seed, cfg.carrier, cfg.h,
                        horizons=cfg.horizons, K=cfg.K)
    rows = []
    for T in sorted(set(cfg.horizons) | {cfg.T}):
        rows.extend(la.to_dict() for la in log_averages(grid, F, T, gl))
    rep = ExperimentReport({"experiment": "ascl", "model": model.to_dict(), "phi": obs.name,
                            "expansion_digest": obs.expansion.digest()}, rows)
    last = [r for r in rows if r["T"] == cfg.T]
    s = " ".join(f"nu({r['g']})={r['value']:.4f}" for r in last)
    return f"{s} file={_emit_report(cfg, rep)}", EXIT_OK


def cmd_contractions(cfg: RunConfig):
    from .contractions import h_estimate, xi_estimate

    model, obs = cfg.build_model(), cfg.build_observable()
    rows, status = [], EXIT_OK
    for t in cfg.t:
        if cfg.m is not None:
            xi = xi_estimate(model, obs.expansion, t, cfg.m, cfg.K_cap, cfg.n_samples, cfg.seed,
                             cfg.build_domain(), threads=cfg.threads)
            rows.append({"t": t, "xi": xi.value, "stderr": xi.stderr, "argmax": list(xi.argmax),
                         "cap_residual": xi.cap_residual, "inconclusive": xi.inconclusive})
            if xi.inconclusive:
                status = EXIT_INCONCLUSIVE
        else:
            k1 = cfg.k1 or 1
            k2 = cfg.k2 or 1
            rows.append(h_estimate(model, k1, k2, t, cfg.build_domain(), cfg.n_samples, cfg.seed,
                                   threads=cfg.threads).to_dict())
    rep = ExperimentReport({"experiment": "contractions", "model": model.to_dict()}, rows)
    key = "xi" if cfg.m is not None else "mean"
    s = " ".join(f"{key}(t={r['t']:g})={r[key]:.4g}" for r in rows)
    if status == EXIT_INCONCLUSIVE:
        s += " inconclusive: tail residual exceeds the measured supremum"
    return f"{s} file={_emit_report(cfg, rep)}", status


def cmd_conditions(cfg: RunConfig):
    from .specialfn import check_unit_bound, fit_cond5, fit_cond6

    model = cfg.build_model()
    c5 = fit_cond5(model)
    rows = [{"condition": "unit_bound", "passed": check_unit_bound(model)}]
    parts = []
    rows.append({"condition": "cond5", "delta": c5.exponent, "C1": c5.constant, "passed": c5.passed,
                 "worst_ratio": c5.worst_margin})
    parts.append(f"cond5 delta={c5.exponent:g} {'pass' if c5.passed else 'FAIL'}")
    if model.cond6 is not None:
        c6 = fit_cond6(model)
        rows.append({"condition": "cond6", "alpha": c6.exponent, "C2": c6.constant, "eps": c6.radius,
                     "passed": c6.passed, "worst_slack": c6.worst_margin})
        parts.append(f"cond6 alpha={c6.exponent:g} {'pass' if c6.passed else 'FAIL'}")
    rep = ExperimentReport({"experiment": "conditions", "model": model.to_dict()}, rows)
    ok = all(r["passed"] for r in rows)
    return f"{', '.join(parts)} file={_emit_report(cfg, rep)}", EXIT_OK if ok else EXIT_NUMERIC


_HANDLERS = {
    "moments": cmd_moments, "variance": cmd_variance, "field": cmd_field, "clt": cmd_clt,
    "ascl": cmd_ascl, "contractions": cmd_contractions, "conditions": cmd_conditions,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ExcludedCaseWarning)
            summary, status = _HANDLERS[cfg.command](cfg)
        for w in caught:
            if issubclass(w.category, ExcludedCaseWarning):
                print(f"WARNING: {w.message}", file=sys.stderr)
            else:
                warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
        print(summary)
        return status
    except (ConfigurationError, DomainError, ResolutionError, DataError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, DegeneracyError, AccuracyError, EmbeddingError, EvaluationError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ChaosLabError as exc:  # pragma: no cover - all subclasses mapped above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
