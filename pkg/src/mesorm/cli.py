"""Command-line front door: density curves, edge data, predictions,
Monte Carlo simulation, self testing, and report re-rendering.

One INI-style config grammar is shared by every verb::

    [ensemble]
    kind = deformed_wigner          ; or sample_covariance
    n = 1000
    m = 500                         ; sample_covariance only
    beta = 1                        ; 1 or 2 (sample_covariance: 1)
    entry_law = gaussian            ; gaussian|rademacher|uniform|three_point
    m2 = 2.0                        ; diagonal variance (deformed_wigner)
    W4 = 3.0                        ; fourth moment of sqrt(N) h_ij
    deformation = -0.5:0.5, 0.5:0.5 ; atoms loc:weight | zero | identity
                                    ; | file:relative/path.txt
    seed = 0

    [test_function]
    preset = bump                   ; bump|cosine_window|cubic_spline_hat
    radius = 1.0
    E0 = 0.0                        ; ignored when location = edge:*
    eta0 = 0.03                     ; float, or scale rule like  N^-0.4

    [experiment]
    trials = 400
    base_seed = 1
    workers = 0                     ; 0 -> $MESORM_WORKERS or cpu count
    location = bulk                 ; bulk | edge:right | edge:left
    var_rtol = 0.25
    height_scale = 1.0

    [output]
    dir = runs
    format = json,csv,svg

Unknown sections or keys are hard errors.  Exit codes: 0 success,
1 usage/config error, 2 model assumption violation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import __version__
from .cltengine import ScaledTestFunction, contour_for, \
    finite_bias, finite_variance_Vf, limit_bulk_variance, limit_edge_mean, \
    limit_edge_variance, preset_test_function, TEST_FUNCTION_PRESETS
from .freeconv import SolverError
from .harness import ExperimentConfig, build_model, edge_experiment, \
    export_report, load_report, normality_verdict, run_directory, \
    run_experiment
from .kernels import KernelContext, KernelPoleError
from .spectra import AtomicMeasure, EnsembleSpec, ModelAssumptionError, \
    MomentProfile, build_atomic_measure, check_regularity, load_measure_file

__all__ = ["main", "ConfigError", "load_config"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """Bad config file, unknown key, or malformed override."""


_GRAMMAR = {
    "ensemble": {"kind", "n", "m", "beta", "entry_law", "m2", "W4",
                 "deformation", "seed"},
    "test_function": {"preset", "radius", "E0", "eta0"},
    "experiment": {"trials", "base_seed", "workers", "location",
                   "var_rtol", "height_scale"},
    "output": {"dir", "format"},
}


def _parse_deformation(text: str, base_dir: str) -> AtomicMeasure:
    text = text.strip()
    if text in ("zero", "identity"):
        loc = 0.0 if text == "zero" else 1.0
        return build_atomic_measure([loc], [1.0])
    if text.startswith("file:"):
        path = text[5:].strip()
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_measure_file(path)
    locs, wts = [], []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            loc, wt = part.split(":")
            locs.append(float(loc))
            wts.append(float(wt))
        except ValueError as exc:
            raise ConfigError(
                f"bad deformation atom {part!r}, want loc:weight") from exc
    if not locs:
        raise ConfigError("deformation has no atoms")
    return build_atomic_measure(locs, wts)


def _parse_eta0(text: str, n: int) -> float:
    text = text.strip().lower()
    if text.startswith("n^"):
        return float(n) ** float(text[2:])
    return float(text)


class Config:
    """Validated config: ensemble spec, test function, experiment knobs."""

    def __init__(self, ensemble: EnsembleSpec, tf: ScaledTestFunction,
                 experiment: dict, output: dict):
        self.ensemble = ensemble
        self.tf = tf
        self.experiment = experiment
        self.output = output


def _to_int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{where} wants an integer, got {raw!r}") from exc


def _to_float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where} wants a number, got {raw!r}") from exc


def load_config(path: str, overrides=()) -> Config:
    """Parse + validate a config file and apply SECTION.KEY=VALUE overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys are case-sensitive (W4, E0)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in parser.sections():
        if section not in _GRAMMAR:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _GRAMMAR[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(
                f"override {item!r} must look like section.key=value")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in _GRAMMAR or key not in _GRAMMAR[section]:
            raise ConfigError(f"override names unknown key {target!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    if not parser.has_section("ensemble"):
        raise ConfigError("config needs an [ensemble] section")
    ens = parser["ensemble"]
    kind = ens.get("kind", "deformed_wigner").strip()
    if kind not in ("deformed_wigner", "sample_covariance"):
        raise ConfigError(f"unknown ensemble kind {kind!r}")
    n = _to_int(ens.get("n", "1000"), "ensemble.n")
    beta = _to_int(ens.get("beta", "1"), "ensemble.beta")
    entry_law = ens.get("entry_law", "gaussian").strip()
    default_m2 = "2.0" if (beta == 1 and kind == "deformed_wigner") else "1.0"
    m2 = _to_float(ens.get("m2", default_m2), "ensemble.m2")
    w4_raw = ens.get("W4", None)
    base_dir = os.path.dirname(os.path.abspath(path))
    deformation = _parse_deformation(
        ens.get("deformation", "zero" if kind == "deformed_wigner"
                else "identity"), base_dir)
    seed = _to_int(ens.get("seed", "0"), "ensemble.seed")
    m = _to_int(ens["m"], "ensemble.m") if "m" in ens else None
    try:
        if w4_raw is None:
            moments = MomentProfile.for_law(beta=beta, entry_law=entry_law,
                                            m2=m2)
        else:
            moments = MomentProfile(beta=beta, entry_law=entry_law, m2=m2,
                                    W4=_to_float(w4_raw, "ensemble.W4"))
        spec = EnsembleSpec(kind, n, deformation, moments, m=m, seed=seed)
    except (ValueError, ModelAssumptionError) as exc:
        raise ConfigError(str(exc)) from exc

    tfs = parser["test_function"] if parser.has_section("test_function") \
        else {}
    preset = (tfs.get("preset", "bump") or "bump").strip()
    if preset not in TEST_FUNCTION_PRESETS:
        raise ConfigError(
            f"unknown test_function preset {preset!r}; have "
            f"{sorted(TEST_FUNCTION_PRESETS)}")
    radius = _to_float(tfs.get("radius", "1.0"), "test_function.radius")
    e0 = _to_float(tfs.get("E0", "0.0"), "test_function.E0")
    eta0_raw = tfs.get("eta0", "n^-0.5")
    try:
        eta0 = _parse_eta0(eta0_raw, n)
    except ValueError as exc:
        raise ConfigError(
            f"test_function.eta0 wants a number or N^p, got "
            f"{eta0_raw!r}") from exc
    if eta0 <= 0:
        raise ConfigError("test_function.eta0 must be positive")
    tf = preset_test_function(preset, E0=e0, eta0=eta0, radius=radius)

    exps = parser["experiment"] if parser.has_section("experiment") else {}
    location_raw = (exps.get("location", "bulk") or "bulk").strip()
    if location_raw == "bulk":
        location, edge_side = "bulk", "right"
    elif location_raw in ("edge:right", "edge:left", "edge"):
        location = "edge"
        edge_side = location_raw.split(":")[1] if ":" in location_raw \
            else "right"
    else:
        raise ConfigError(
            f"experiment.location wants bulk|edge:right|edge:left, got "
            f"{location_raw!r}")
    experiment = {
        "trials": _to_int(exps.get("trials", "400"), "experiment.trials"),
        "base_seed": _to_int(exps.get("base_seed", "1"),
                             "experiment.base_seed"),
        "workers": _to_int(exps.get("workers", "0"), "experiment.workers"),
        "location": location,
        "edge_side": edge_side,
        "var_rtol": _to_float(exps.get("var_rtol", "0.25"),
                              "experiment.var_rtol"),
        "height_scale": _to_float(exps.get("height_scale", "1.0"),
                                  "experiment.height_scale"),
    }

    outs = parser["output"] if parser.has_section("output") else {}
    formats = tuple(f.strip() for f in
                    (outs.get("format", "json,csv,svg") or "").split(",")
                    if f.strip())
    for f in formats:
        if f not in ("json", "csv", "svg"):
            raise ConfigError(f"unknown output format {f!r}")
    output = {"dir": (outs.get("dir", "runs") or "runs").strip(),
              "format": formats}
    return Config(spec, tf, experiment, output)


def _apply_common_overrides(cfg: Config, args) -> Config:
    import dataclasses as dc

    if args.seed is not None:
        cfg.ensemble = dc.replace(cfg.ensemble, seed=args.seed)
        cfg.experiment["base_seed"] = args.seed
    if args.workers is not None:
        cfg.experiment["workers"] = args.workers
    if args.out is not None:
        cfg.output["dir"] = args.out
    if getattr(args, "format", None):
        cfg.output["format"] = tuple(f.strip()
                                     for f in args.format.split(","))
    return cfg


def _model_and_ctx(cfg: Config):
    model = build_model(cfg.ensemble)
    ctx = KernelContext.from_profile(model, cfg.ensemble.moments)
    return model, ctx


def _resolved_tf(cfg: Config, model) -> ScaledTestFunction:
    if cfg.experiment["location"] == "edge":
        e0 = model.edges[1] if cfg.experiment["edge_side"] == "right" \
            else model.edges[0]
        return cfg.tf.recentred(e0)
    return cfg.tf


# ---------------------------------------------------------------------------
# verbs

def cmd_density(cfg: Config, args) -> int:
    model, _ = _model_and_ctx(cfg)
    lo, hi = model.edges[0] - 0.5, model.edges[1] + 0.5
    x = np.linspace(lo, hi, 2000)
    rho = model.density_grid(x)
    outdir = cfg.output["dir"]
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "density.csv")
    with open(csv_path, "w") as fh:
        fh.write("x,rho\n")
        for xi, ri in zip(x, rho):
            fh.write(f"{float(xi)!r},{float(ri)!r}\n")
    svg_path = os.path.join(outdir, "density.svg")
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.subplots()
    ax.plot(x, rho, "-", lw=1.2)
    for e in model.edges:
        ax.axvline(e, color="0.4", ls="--", lw=0.8)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    mass = float(np.trapezoid(rho, x))
    print(f"edges: [{model.edges[0]!r}, {model.edges[1]!r}]")
    print(f"curve mass (trapezoid on 2000 points): {mass:.6f}")
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def cmd_edges(cfg: Config, args) -> int:
    model, _ = _model_and_ctx(cfg)
    gamma = cfg.ensemble.gamma if cfg.ensemble.kind == "sample_covariance" \
        else None
    reg = check_regularity(cfg.ensemble.deformation, cfg.ensemble.kind,
                           gamma=gamma)
    payload = {
        "kind": model.kind,
        "edges": [float(e) for e in model.edges],
        "regularity": {"ok": reg.ok, "margin": reg.margin,
                       "detail": reg.detail},
        "edge_data": {
            side: {"location": ed.location, "zeta": ed.zeta, "c": ed.c,
                   "hard": ed.hard}
            for side, ed in model.edge_data.items()
        },
    }
    text = json.dumps(payload, indent=2)
    print(text)
    outdir = cfg.output["dir"]
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "edges.json"), "w") as fh:
        fh.write(text + "\n")
    return EXIT_OK


def cmd_predict(cfg: Config, args) -> int:
    model, ctx = _model_and_ctx(cfg)
    tf = _resolved_tf(cfg, model)
    n = cfg.ensemble.n
    spec = contour_for(model, tf, n,
                       height_scale=cfg.experiment["height_scale"])
    beta = cfg.ensemble.moments.beta
    if cfg.experiment["location"] == "bulk":
        v_limit = limit_bulk_variance(tf, beta)
        mean_limit = 0.0
    else:
        v_limit = limit_edge_variance(tf, beta,
                                      side=cfg.experiment["edge_side"])
        mean_limit = limit_edge_mean(tf, beta, kind=model.kind)
    payload = {
        "model": {"kind": model.kind,
                  "edges": [float(e) for e in model.edges]},
        "ctx": {"beta": beta, "m2": ctx.m2, "W4": ctx.W4,
                "K4": ctx.K4 if model.kind == "sample_covariance" else None},
        "E0": tf.E0,
        "eta0": tf.eta0,
        "tau": spec.tau,
        "outer_height": spec.outer_height,
        "V_finite": finite_variance_Vf(ctx, tf, spec),
        "V_limit": v_limit,
        "bias_finite": finite_bias(ctx, tf, spec),
        "bias_limit": mean_limit,
        "mean_limit": mean_limit,
    }
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out is not None:
        os.makedirs(cfg.output["dir"], exist_ok=True)
        path = os.path.join(cfg.output["dir"], "predict.json")
        with open(path, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(cfg: Config, args) -> int:
    exp_cfg = ExperimentConfig(
        ensemble=cfg.ensemble,
        tf=cfg.tf,
        trials=cfg.experiment["trials"],
        location=cfg.experiment["location"],
        edge_side=cfg.experiment["edge_side"],
        base_seed=cfg.experiment["base_seed"],
        workers=cfg.experiment["workers"],
        var_rtol=cfg.experiment["var_rtol"],
        height_scale=cfg.experiment["height_scale"],
    )
    runner = edge_experiment if exp_cfg.location == "edge" else run_experiment
    report = runner(exp_cfg)
    outdir = run_directory(cfg.output["dir"], report)
    export_report(report, outdir, formats=cfg.output["format"])
    emp, th = report.empirical, report.theory
    print(f"run directory: {outdir}")
    print(f"trials used: {emp['trials_used']} "
          f"(failures: {len(report.failures)})")
    print(f"empirical mean {emp['mean']:+.5f} (se {emp['se_mean']:.5f}); "
          f"predicted mean {th['bias_finite']:+.5f} "
          f"(limit {th['mean_limit']:+.5f})")
    print(f"empirical variance {emp['variance']:.5f} "
          f"(se {emp['se_variance']:.5f}); predicted {th['V_finite']:.5f} "
          f"(limit {th['V_limit']:.5f})")
    print(f"KS p-value {report.ks['pvalue']:.4f}")
    verdict = normality_verdict(report)
    print(f"normality verdict: {'pass' if verdict.passed else 'FAIL'}")
    for r in verdict.reasons:
        print(f"  reason: {r}")
    for a in verdict.annotations:
        print(f"  note: {a}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.report_json)
    outdir = args.out or os.path.dirname(os.path.abspath(args.report_json))
    formats = tuple(f.strip() for f in (args.format or "svg").split(","))
    written = export_report(report, outdir, formats=formats)
    verdict = normality_verdict(report)
    emp, th = report.empirical, report.theory
    print(f"schema {report.schema}, created {report.created}, "
          f"hash {report.run_hash}")
    print(f"mean {emp['mean']:+.5f} vs {th['bias_finite']:+.5f}; "
          f"variance {emp['variance']:.5f} vs {th['V_finite']:.5f}; "
          f"KS p {report.ks['pvalue']:.4f}")
    print(f"normality verdict: {'pass' if verdict.passed else 'FAIL'}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest

def _selftest_checks(inject_failure: bool):
    """Desk-scale invariant suite; each check returns None or raises."""
    from . import selftest as st

    checks = list(st.ALL_CHECKS)
    if inject_failure:
        checks.append(("injected-failure", st.injected_failure))
    return checks


def cmd_selftest(args) -> int:
    checks = _selftest_checks(args.inject_failure)
    failures = 0
    width = max(len(name) for name, _ in checks)
    import time as _time

    for name, fn in checks:
        t0 = _time.time()
        try:
            fn()
            status = "pass"
        except Exception as exc:  # noqa: BLE001  report and continue
            status = f"FAIL ({type(exc).__name__}: {exc})"
            failures += 1
        dt = _time.time() - t0
        timing = f"  [{dt * 1e3:8.1f} ms]" if args.verbose else ""
        print(f"{name:<{width}}  {status}{timing}")
    print(f"{len(checks) - failures}/{len(checks)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# wiring

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mesorm",
        description="Deterministic mesoscopic CLT predictions for deformed "
                    "Wigner and sample covariance ensembles, with seeded "
                    "Monte Carlo verification.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_config_verb(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to INI config file")
        p.add_argument("--set", dest="overrides", action="append",
                       default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--seed", type=int, default=None,
                       help="override ensemble seed and experiment base_seed")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", default=None,
                       help="comma-separated subset of json,csv,svg")
        return p

    add_config_verb("density", "tabulate and plot the equilibrium density")
    add_config_verb("edges", "print support endpoints and edge data as JSON")
    add_config_verb("predict", "compute variance/bias predictions, no "
                               "sampling")
    add_config_verb("simulate", "run the seeded Monte Carlo experiment")

    p = sub.add_parser("selftest", help="run desk-scale invariant checks")
    p.add_argument("--verbose", "-v", action="store_true",
                   help="per-check timings")
    p.add_argument("--inject-failure", action="store_true",
                   help=argparse.SUPPRESS)

    p = sub.add_parser("report", help="re-render exports from a saved "
                                      "report.json")
    p.add_argument("report_json", help="path to report.json")
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="svg")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        if args.verb == "selftest":
            return cmd_selftest(args)
        if args.verb == "report":
            return cmd_report(args)
        cfg = load_config(args.config, overrides=args.overrides)
        cfg = _apply_common_overrides(cfg, args)
        if args.verb == "density":
            return cmd_density(cfg, args)
        if args.verb == "edges":
            return cmd_edges(cfg, args)
        if args.verb == "predict":
            return cmd_predict(cfg, args)
        if args.verb == "simulate":
            return cmd_simulate(cfg, args)
        parser.error(f"unhandled verb {args.verb!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelAssumptionError as exc:
        print(f"model assumption violated: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (SolverError, KernelPoleError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
