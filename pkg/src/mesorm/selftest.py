"""Desk-scale invariant checks behind ``mesorm selftest``.

Every check is a zero-argument callable that raises on failure.  They
recheck the load-bearing identities of each module in seconds, not the
full statistical acceptance runs.
"""

from __future__ import annotations

import math
import tempfile

import numpy as np

from . import cltengine as ce
from . import freeconv as fc
from . import harness as hn
from . import kernels as kn
from . import linstat as ls
from .spectra import EnsembleSpec, MomentProfile, build_atomic_measure

__all__ = ["ALL_CHECKS", "injected_failure"]


def _require(ok: bool, msg: str):
    if not ok:
        raise AssertionError(msg)


def check_semicircle():
    mu0 = build_atomic_measure([0.0], [1.0])
    model = fc.additive_model(mu0)
    rng = np.random.default_rng(1)
    z = rng.uniform(-3, 3, 40) + 1j * rng.uniform(1e-3, 2.0, 40)
    err = np.max(np.abs(model.m_grid(z) - fc.semicircle_m(z)))
    _require(err < 1e-10, f"semicircle transform error {err:.2e}")
    _require(abs(model.edges[0] + 2) < 1e-10 and abs(model.edges[1] - 2) < 1e-10,
             f"semicircle edges {model.edges}")
    x = np.linspace(-2, 2, 3001)
    mass = np.trapezoid(model.density_grid(x), x)
    _require(abs(mass - 1) < 1e-4, f"density mass {mass}")


def check_marchenko_pastur():
    gamma = 0.5
    model = fc.multiplicative_model(build_atomic_measure([1.0], [1.0]), gamma)
    lo, hi = (1 - math.sqrt(gamma)) ** 2, (1 + math.sqrt(gamma)) ** 2
    _require(abs(model.edges[0] - lo) < 1e-9 and abs(model.edges[1] - hi) < 1e-9,
             f"MP edges {model.edges}")
    x = np.linspace(lo + 1e-3, hi - 1e-3, 200)
    rho = model.density_grid(x)
    closed = np.sqrt((x - lo) * (hi - x)) / (2 * np.pi * gamma * x)
    err = np.max(np.abs(rho - closed))
    _require(err < 1e-6, f"MP density error {err:.2e}")


def check_shift_covariance():
    c = 0.7
    model = fc.additive_model(build_atomic_measure([c], [1.0]))
    z = np.array([0.3 + 0.2j, -1.0 + 1.0j, 2.5 + 0.01j])
    err = np.max(np.abs(model.m_grid(z) - fc.semicircle_m(z - c)))
    _require(err < 1e-10, f"shift covariance error {err:.2e}")


def check_subordination():
    mu = build_atomic_measure([-1.0, 0.2, 0.9], [0.3, 0.45, 0.25])
    model = fc.additive_model(mu)
    ctx = kn.KernelContext(model, beta=1, m2=2.0, W4=3.0)
    z1, z2 = 0.4 + 0.3j, -0.2 + 0.15j
    m1, m2 = model.m(z1), model.m(z2)
    direct = kn.eval_I(ctx, z1, z2)
    closed = 1.0 - (z1 - z2) / ((z1 + m1) - (z2 + m2))
    _require(abs(direct - closed) < 1e-10,
             f"subordination identity error {abs(direct - closed):.2e}")


def check_transform_derivatives():
    mu = build_atomic_measure([-0.5, 0.5], [0.5, 0.5])
    model = fc.additive_model(mu)
    z = 0.3 + 0.05j
    d1, d2 = model.m_derivatives(z)
    h = 1e-5  # second difference amplifies roundoff by 1/h^2
    fd1 = (model.m(z + h) - model.m(z - h)) / (2 * h)
    fd2 = (model.m(z + h) - 2 * model.m(z) + model.m(z - h)) / h ** 2
    _require(abs(d1 - fd1) / abs(d1) < 1e-6, "m' mismatch vs finite diff")
    _require(abs(d2 - fd2) / abs(d2) < 1e-4, "m'' mismatch vs finite diff")


def check_variance_limit_forms():
    tf = ce.bump(0.0, 1.0)
    v1 = ce.limit_bulk_variance(tf, 1)
    v2 = ce.limit_bulk_variance(tf, 2)
    _require(abs(v1 - 2 * v2) < 1e-12, "beta scaling of bulk limit")
    _require(v1 > 0, "bulk limit positive")


def check_hs_reconstruction():
    tf = ce.bump(0.0, 0.05)
    lam = tf.E0 + 0.4 * tf.eta0
    val = ce.hs_reconstruct(tf, lam)
    _require(abs(val - tf.f(lam)) < 1e-4,
             f"HS reconstruction error {abs(val - tf.f(lam)):.2e}")


def check_contour_variance_bulk():
    mu = build_atomic_measure([-0.5, 0.5], [0.5, 0.5])
    model = fc.additive_model(mu)
    ctx = kn.KernelContext(model, beta=1, m2=2.0, W4=3.0)
    tf = ce.bump(0.0, 0.1)
    v = ce.finite_variance_Vf(ctx, tf, ce.contour_for(model, tf, 1000))
    lim = ce.limit_bulk_variance(tf, 1)
    _require(abs(v - lim) < 0.02 * lim,
             f"bulk contour variance {v} vs limit {lim}")


def check_contour_bias():
    mu = build_atomic_measure([-0.5, 0.5], [0.5, 0.5])
    model = fc.additive_model(mu)
    ctx = kn.KernelContext(model, beta=1, m2=2.0, W4=3.0)
    tf = ce.bump(0.0, 0.05)
    b = ce.finite_bias(ctx, tf, ce.contour_for(model, tf, 1000))
    _require(abs(b) < 1e-4, f"bulk bias {b}")
    n = 10 ** 6
    tfe = ce.bump(model.edges[1], n ** -0.4)
    be = ce.finite_bias(ctx, tfe, ce.contour_for(model, tfe, n))
    _require(0.2 < be < 0.3, f"edge bias {be} not near 1/4")


def check_eigensolver():
    s = ls.eigenvalues(np.array([[0.0, 1.0], [1.0, 0.0]]))
    _require(np.allclose(s.eigenvalues, [-1.0, 1.0]), "2x2 spectrum")
    mu0 = build_atomic_measure([0.0], [1.0])
    spec = EnsembleSpec("deformed_wigner", 300, mu0, MomentProfile(), seed=2)
    top = ls.sample_spectrum(spec, verify=True).eigenvalues[-1]
    _require(abs(top - 2.0) < 0.2, f"GOE top eigenvalue {top}")


def check_centering():
    model = fc.additive_model(build_atomic_measure([0.0], [1.0]))
    tf = ce.bump(0.0, 0.1)
    val = ls.centering_integral(model, tf, 1000)
    from numpy.polynomial.legendre import leggauss

    xs, ws = leggauss(400)
    x = 0.1 * xs
    w = 0.1 * ws
    oracle = 1000 * np.sum(w * tf.f(x) * np.sqrt(4 - x ** 2) / (2 * np.pi))
    _require(abs(val - oracle) < 1e-5 * abs(oracle),
             f"centering {val} vs oracle {oracle}")


def check_local_law():
    mu = build_atomic_measure([-0.5, 0.5], [0.5, 0.5])
    model = fc.additive_model(mu)
    spec = EnsembleSpec("deformed_wigner", 300, mu, MomentProfile(), seed=4)
    s = ls.sample_spectrum(spec)
    grid = np.linspace(-1.2, 1.2, 13) + 0.1j
    r = ls.local_law_residual(s, model, grid)
    _require(r < 4.0, f"local law residual {r}")


def check_harness_determinism():
    mu = build_atomic_measure([-0.5, 0.5], [0.5, 0.5])
    ens = EnsembleSpec("deformed_wigner", 120, mu, MomentProfile(), seed=0)
    tf = ce.bump(0.0, 0.2)
    reports = [
        hn.run_experiment(hn.ExperimentConfig(ens, tf, trials=30,
                                              base_seed=9, workers=w,
                                              predictions=False))
        for w in (1, 3)
    ]
    _require(np.array_equal(reports[0].values, reports[1].values),
             "per-trial values depend on worker count")


def _synthetic_report(shift_se: float = 0.0) -> hn.ExperimentReport:
    theory = {"V_finite": 0.4, "V_limit": 0.4, "bias_finite": 0.0,
              "mean_limit": 0.0, "bias_limit": 0.0, "tau": 0.3,
              "outer_height": 1e-3, "E0": 0.0, "eta0": 0.03}
    rng = np.random.default_rng(123)
    t = 400
    values = rng.normal(theory["bias_finite"], math.sqrt(theory["V_finite"]),
                        t)
    values += shift_se * math.sqrt(theory["V_finite"] / t)
    empirical, ks, charfn, degenerate = hn.summarize_trials(values, theory)
    return hn.ExperimentReport(
        schema=hn.REPORT_SCHEMA, config={"var_rtol": 0.25},
        theory=theory, centering=0.0, values=values,
        seeds=np.arange(t), failures=[], empirical=empirical, ks=ks,
        charfn=charfn, degenerate=degenerate, runtime_seconds=0.0,
        created="1970-01-01T00:00:00Z", run_hash="00000000")


def check_verdict_null():
    verdict = hn.normality_verdict(_synthetic_report())
    _require(verdict.passed, f"null verdict failed: {verdict.reasons}")


def check_report_roundtrip():
    report = _synthetic_report()
    import json
    import os

    with tempfile.TemporaryDirectory() as td:
        hn.export_report(report, td)
        again = hn.load_report(os.path.join(td, "report.json"))
        _require(again.to_dict() == report.to_dict(),
                 "report JSON round trip not exact")
        import xml.etree.ElementTree as ET

        ET.parse(os.path.join(td, "hist.svg"))
        ET.parse(os.path.join(td, "qq.svg"))
        with open(os.path.join(td, "trials.csv")) as fh:
            rows = sum(1 for _ in fh)
        _require(rows == report.values.size + 1, "CSV row count")
        json.load(open(os.path.join(td, "config.snapshot")))


def injected_failure():
    raise AssertionError("tolerance corrupted to 0 (injected)")


ALL_CHECKS = [
    ("semicircle-recovery", check_semicircle),
    ("marchenko-pastur-recovery", check_marchenko_pastur),
    ("shift-covariance", check_shift_covariance),
    ("subordination-identity", check_subordination),
    ("transform-derivatives", check_transform_derivatives),
    ("variance-limit-forms", check_variance_limit_forms),
    ("hs-reconstruction", check_hs_reconstruction),
    ("contour-variance-bulk", check_contour_variance_bulk),
    ("contour-bias", check_contour_bias),
    ("eigensolver", check_eigensolver),
    ("centering-integral", check_centering),
    ("local-law-residual", check_local_law),
    ("harness-determinism", check_harness_determinism),
    ("verdict-null", check_verdict_null),
    ("report-roundtrip", check_report_roundtrip),
]
