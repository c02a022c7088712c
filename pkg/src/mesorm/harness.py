"""Monte Carlo experiment orchestration and Gaussianity verdicts.

An experiment fixes an ensemble recipe, a scaled test function, and a
location (bulk energy or a spectral edge), draws seeded independent
matrices, and compares the centered linear statistics against the
deterministic predictions: finite-scale contour variance and bias plus
their closed-form limits.  Reports serialize to JSON/CSV/SVG and round
trip losslessly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .cltengine import ScaledTestFunction, contour_for, finite_bias, \
    finite_variance_Vf, limit_bulk_variance, limit_edge_mean, \
    limit_edge_variance
from .freeconv import FreeConvolutionModel, additive_model, \
    multiplicative_model
from .kernels import KernelContext
from .linstat import centering_integral, linear_statistic, sample_spectrum
from .spectra import EnsembleSpec

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "Verdict",
    "CHARFN_LAMBDAS",
    "REPORT_SCHEMA",
    "build_model",
    "run_experiment",
    "edge_experiment",
    "summarize_trials",
    "normality_verdict",
    "export_report",
    "load_report",
    "run_directory",
    "resolve_workers",
]

REPORT_SCHEMA = "mesorm.report.v1"
CHARFN_LAMBDAS = (0.25, 0.5, 1.0, 2.0)


def resolve_workers(requested: int = 0) -> int:
    """Worker count: explicit > MESORM_WORKERS > cpu count."""
    if requested > 0:
        return requested
    env = os.environ.get("MESORM_WORKERS", "").strip()
    if env:
        n = int(env)
        if n > 0:
            return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Recipe for one Monte Carlo experiment."""

    ensemble: EnsembleSpec
    tf: ScaledTestFunction
    trials: int = 400
    location: str = "bulk"          # "bulk" | "edge"
    edge_side: str = "right"
    base_seed: int = 1
    workers: int = 0
    var_rtol: float = 0.25          # declared variance tolerance vs theory
    height_scale: float = 1.0
    predictions: bool = True        # False: skip contour work, limits only

    def __post_init__(self):
        if self.trials < 30:
            raise ValueError("need at least 30 trials")
        if self.location not in ("bulk", "edge"):
            raise ValueError(f"unknown location {self.location!r}")
        if self.edge_side not in ("left", "right"):
            raise ValueError(f"unknown edge side {self.edge_side!r}")
        if not 0.0 < self.var_rtol < 1.0:
            raise ValueError("var_rtol must be in (0, 1)")


@dataclass
class ExperimentReport:
    """Everything one experiment produced, serialization-ready."""

    schema: str
    config: dict
    theory: dict
    centering: float
    values: np.ndarray
    seeds: np.ndarray
    failures: list
    empirical: dict
    ks: dict
    charfn: list
    degenerate: bool
    runtime_seconds: float
    created: str
    run_hash: str

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["values"] = [float(v) for v in self.values]
        d["seeds"] = [int(s) for s in self.seeds]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        d = dict(d)
        d["values"] = np.array(d["values"], dtype=float)
        d["seeds"] = np.array(d["seeds"], dtype=int)
        d["failures"] = [tuple(f) for f in d["failures"]]
        return cls(**d)


def build_model(ensemble: EnsembleSpec) -> FreeConvolutionModel:
    if ensemble.kind == "deformed_wigner":
        return additive_model(ensemble.deformation)
    return multiplicative_model(ensemble.deformation, ensemble.gamma)


def _admissibility_warnings(cfg: ExperimentConfig, model, tf):
    n = cfg.ensemble.n
    if cfg.location == "bulk":
        kappa0 = min(abs(tf.E0 - e) for e in model.edges)
        if tf.eta0 * math.sqrt(tf.eta0 + kappa0) < 1.0 / n:
            warnings.warn(
                "eta0 * sqrt(eta0 + kappa0) below 1/N: outside the "
                "guaranteed regime, predictions may not be meaningful",
                UserWarning, stacklevel=3)
    else:
        lo, hi = n ** (-2.0 / 3.0 + 0.01), n ** -0.01
        if not lo <= tf.eta0 <= hi:
            warnings.warn(
                f"edge experiment wants eta0 in [N^(-2/3+c), N^(-c)] "
                f"~ [{lo:.3g}, {hi:.3g}], got {tf.eta0:.3g}",
                UserWarning, stacklevel=3)


def _predictions(cfg: ExperimentConfig, model, ctx, tf) -> dict:
    spec = contour_for(model, tf, cfg.ensemble.n,
                       height_scale=cfg.height_scale)
    beta = cfg.ensemble.moments.beta
    if cfg.location == "bulk":
        v_lim = limit_bulk_variance(tf, beta)
        mean_lim = 0.0
    else:
        v_lim = limit_edge_variance(tf, beta, side=cfg.edge_side)
        mean_lim = limit_edge_mean(tf, beta, kind=model.kind)
    if cfg.predictions:
        v_fin = finite_variance_Vf(ctx, tf, spec)
        b_fin = finite_bias(ctx, tf, spec)
    else:
        v_fin, b_fin = v_lim, mean_lim
    return {
        "V_finite": v_fin,
        "V_limit": v_lim,
        "bias_finite": b_fin,
        "mean_limit": mean_lim,
        "bias_limit": mean_lim,
        "finite_scale": bool(cfg.predictions),
        "tau": spec.tau,
        "outer_height": spec.outer_height,
        "E0": tf.E0,
        "eta0": tf.eta0,
    }


def _two_pass_variance(values: np.ndarray) -> float:
    mean = math.fsum(values.tolist()) / values.size
    return math.fsum(((v - mean) ** 2 for v in values.tolist())) \
        / (values.size - 1)


def summarize_trials(values: np.ndarray, theory: dict) -> tuple[dict, dict, list, bool]:
    """(empirical moments, KS result, characteristic function rows, degenerate)."""
    values = np.asarray(values, dtype=float)
    t = values.size
    mean = float(np.mean(values))
    var = float(np.var(values, ddof=1))
    var2 = _two_pass_variance(values)
    if abs(var - var2) > 1e-12 * max(var, 1e-300):
        raise RuntimeError(
            f"variance estimators disagree: {var!r} vs {var2!r}")
    degenerate = bool(np.all(values == 0.0))
    empirical = {
        "trials_used": int(t),
        "mean": mean,
        "variance": var,
        "skewness": float(stats.skew(values)) if not degenerate else 0.0,
        "excess_kurtosis": float(stats.kurtosis(values)) if not degenerate else 0.0,
        "se_mean": math.sqrt(var / t),
        "se_variance": var * math.sqrt(2.0 / (t - 1)),
        "se_skewness": math.sqrt(6.0 / t),
        "se_excess_kurtosis": math.sqrt(24.0 / t),
    }
    if degenerate:
        ks = {"statistic": float("nan"), "pvalue": float("nan")}
    else:
        # known-parameters null from the finite-scale predictions
        res = stats.kstest(values, "norm",
                           args=(theory["bias_finite"],
                                 math.sqrt(theory["V_finite"])))
        ks = {"statistic": float(res.statistic), "pvalue": float(res.pvalue)}
    charfn = []
    centered = values - mean
    for lam in CHARFN_LAMBDAS:
        phi = np.mean(np.exp(1j * lam * centered))
        pred = math.exp(-0.5 * lam * lam * theory["V_limit"])
        charfn.append({
            "lambda": lam,
            "emp_re": float(phi.real),
            "emp_im": float(phi.imag),
            "pred": pred,
            "abs_err": float(abs(phi - pred)),
        })
    return empirical, ks, charfn, degenerate


def _config_snapshot(cfg: ExperimentConfig, model, tf) -> dict:
    # tf is the window the trials actually used (edge runs recentre it)
    ens = cfg.ensemble
    mu = ens.deformation
    return {
        "kind": ens.kind,
        "n": ens.n,
        "m": ens.m,
        "beta": ens.moments.beta,
        "entry_law": ens.moments.entry_law,
        "m2": ens.moments.m2,
        "W4": ens.moments.W4,
        "deformation_locations": [float(a) for a in mu.locations],
        "deformation_weights": [float(w) for w in mu.weights],
        "edges": [float(e) for e in model.edges],
        "tf_preset": tf.name,
        "tf_radius": tf.radius,
        "E0": tf.E0,
        "eta0": tf.eta0,
        "trials": cfg.trials,
        "location": cfg.location,
        "edge_side": cfg.edge_side,
        "base_seed": cfg.base_seed,
        "workers": cfg.workers,
        "var_rtol": cfg.var_rtol,
        "height_scale": cfg.height_scale,
    }


def _run_hash(snapshot: dict) -> str:
    blob = json.dumps(snapshot, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Sample, diagonalize, center, aggregate, and attach predictions.

    Trial k uses seed base_seed + k; the reduction is an ordered fold over
    trial indices, so reports are identical for any worker count.
    """
    t_start = time.time()
    model = build_model(cfg.ensemble)
    tf = cfg.tf
    if cfg.location == "edge":
        e0 = model.edges[1] if cfg.edge_side == "right" else model.edges[0]
        tf = tf.recentred(e0)
    _admissibility_warnings(cfg, model, tf)
    ctx = KernelContext.from_profile(model, cfg.ensemble.moments)
    theory = _predictions(cfg, model, ctx, tf)
    dim = cfg.ensemble.m if cfg.ensemble.kind == "sample_covariance" \
        else cfg.ensemble.n
    centering = centering_integral(model, tf, dim)

    seeds = np.arange(cfg.base_seed, cfg.base_seed + cfg.trials)

    def trial(k: int):
        try:
            s = sample_spectrum(replace(cfg.ensemble, seed=int(seeds[k])),
                                verify=(k == 0))
            return linear_statistic(s, tf) - centering, None
        except Exception as exc:  # noqa: BLE001  recorded, not fatal
            return math.nan, f"{type(exc).__name__}: {exc}"

    workers = resolve_workers(cfg.workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        outcomes = list(ex.map(trial, range(cfg.trials)))
    failures = [(k, msg) for k, (_, msg) in enumerate(outcomes)
                if msg is not None]
    if len(failures) > 0.05 * cfg.trials:
        raise RuntimeError(
            f"{len(failures)}/{cfg.trials} trials failed; first: "
            f"{failures[0][1]}")
    values = np.array([v for v, msg in outcomes if msg is None])

    empirical, ks, charfn, degenerate = summarize_trials(values, theory)
    snapshot = _config_snapshot(cfg, model, tf)
    return ExperimentReport(
        schema=REPORT_SCHEMA,
        config=snapshot,
        theory=theory,
        centering=centering,
        values=values,
        seeds=np.array([int(seeds[k]) for k, (_, msg) in enumerate(outcomes)
                        if msg is None]),
        failures=failures,
        empirical=empirical,
        ks=ks,
        charfn=charfn,
        degenerate=degenerate,
        runtime_seconds=time.time() - t_start,
        created=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        run_hash=_run_hash(snapshot),
    )


def edge_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """run_experiment with the window pinned to a solved spectral edge."""
    if cfg.location != "edge":
        cfg = replace(cfg, location="edge")
    return run_experiment(cfg)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    reasons: tuple = ()
    annotations: tuple = ()


def normality_verdict(report: ExperimentReport, alpha: float = 0.01) -> Verdict:
    """Gaussianity gate: KS (known parameters), mean, moment bounds, variance.

    KS needs at least 100 trials; below that it is skipped and annotated.
    The mean gate is 3 standard errors: KS alone is nearly blind to a
    3 SE location shift at desk-scale trial counts.
    """
    emp = report.empirical
    t = emp["trials_used"]
    reasons, notes = [], []
    if report.degenerate:
        return Verdict(False, ("degenerate: all trials identically zero",))
    if t >= 100:
        if not report.ks["pvalue"] >= alpha:
            reasons.append(
                f"KS p-value {report.ks['pvalue']:.4g} < alpha {alpha}")
    else:
        notes.append(f"KS skipped: {t} < 100 trials")
    mean_bound = 3.0 * emp["se_mean"]
    if abs(emp["mean"] - report.theory["bias_finite"]) > mean_bound:
        reasons.append(
            f"mean {emp['mean']:.4g} departs from theory "
            f"{report.theory['bias_finite']:.4g} by more than 3 SE "
            f"({mean_bound:.4g})")
    skew_bound = 4.0 * math.sqrt(6.0 / t)
    if abs(emp["skewness"]) > skew_bound:
        reasons.append(
            f"|skewness| {abs(emp['skewness']):.3f} > {skew_bound:.3f}")
    kurt_bound = 4.0 * math.sqrt(24.0 / t)
    if abs(emp["excess_kurtosis"]) > kurt_bound:
        reasons.append(
            f"|excess kurtosis| {abs(emp['excess_kurtosis']):.3f} > "
            f"{kurt_bound:.3f}")
    v_theory = report.theory["V_limit"]
    rtol = report.config["var_rtol"]
    if abs(emp["variance"] - v_theory) > rtol * v_theory:
        reasons.append(
            f"variance {emp['variance']:.4g} departs from theory "
            f"{v_theory:.4g} by more than {rtol:.0%}")
    return Verdict(not reasons, tuple(reasons), tuple(notes))


# ---------------------------------------------------------------------------
# persistence

def run_directory(base: str, report: ExperimentReport) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    path = os.path.join(base, f"{stamp}-{report.run_hash}")
    os.makedirs(path, exist_ok=True)
    return path


def export_report(report: ExperimentReport, outdir,
                  formats=("json", "csv", "svg")) -> list:
    """Write report.json / trials.csv / hist.svg + qq.svg / config.snapshot."""
    outdir = str(outdir)
    os.makedirs(outdir, exist_ok=True)
    written = []

    def _path(name):
        p = os.path.join(outdir, name)
        written.append(p)
        return p

    try:
        if "json" in formats:
            with open(_path("report.json"), "w") as fh:
                json.dump(report.to_dict(), fh, indent=2)
            with open(_path("config.snapshot"), "w") as fh:
                json.dump(report.config, fh, indent=2, sort_keys=True)
        if "csv" in formats:
            with open(_path("trials.csv"), "w") as fh:
                fh.write("trial,seed,value\n")
                for k, (seed, v) in enumerate(zip(report.seeds,
                                                  report.values)):
                    fh.write(f"{k},{int(seed)},{float(v)!r}\n")
        if "svg" in formats:
            _plot_report(report, _path("hist.svg"), _path("qq.svg"))
    except OSError as exc:
        raise OSError(f"cannot write report under {outdir!r}: {exc}") from exc
    return written


def _plot_report(report: ExperimentReport, hist_path, qq_path):
    from matplotlib.figure import Figure

    vals = report.values
    mu = report.theory["bias_finite"]
    sd = math.sqrt(report.theory["V_finite"])

    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.subplots()
    ax.hist(vals, bins=max(10, vals.size // 20), density=True,
            alpha=0.6, color="#4878d0", label="trials")
    grid = np.linspace(vals.min() - sd, vals.max() + sd, 400)
    ax.plot(grid, stats.norm.pdf(grid, mu, sd), "k-", lw=1.5,
            label="predicted normal")
    ax.set_xlabel("centered linear statistic")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(hist_path, format="svg")

    fig = Figure(figsize=(4.5, 4.5))
    ax = fig.subplots()
    q = (np.arange(1, vals.size + 1) - 0.5) / vals.size
    ax.plot(stats.norm.ppf(q, mu, sd), np.sort(vals), ".", ms=3)
    lim = [min(vals.min(), mu - 3 * sd), max(vals.max(), mu + 3 * sd)]
    ax.plot(lim, lim, "k--", lw=1)
    ax.set_xlabel("predicted quantiles")
    ax.set_ylabel("empirical quantiles")
    fig.tight_layout()
    fig.savefig(qq_path, format="svg")


def load_report(path) -> ExperimentReport:
    with open(path) as fh:
        return ExperimentReport.from_dict(json.load(fh))
