"""Test-function machinery, contour quadrature, and closed-form limits."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mesorm.cltengine import ContourSpec, TEST_FUNCTION_PRESETS, bump, \
    chi_cutoff, chi_cutoff_prime, contour_boundary_value, contour_for, \
    finite_bias, finite_variance_Vf, \
    hs_dbar, hs_extension, hs_reconstruct, limit_bulk_variance, \
    limit_edge_mean, limit_edge_variance, preset_test_function
from mesorm.kernels import KernelContext
from mesorm.spectra import MomentProfile

# frozen Fourier-functional oracles for the bump profile, beta = 1
BULK_LIMIT_BUMP = 0.42161643440890917
EDGE_LIMIT_BUMP = 0.27866990338492204


@pytest.fixture(scope="module")
def goe_ctx(two_point_model):
    return KernelContext(two_point_model, beta=1, m2=2.0, W4=3.0)


@pytest.fixture(scope="module")
def gue_ctx(two_point_model):
    prof = MomentProfile.for_law(beta=2)
    return KernelContext(two_point_model, beta=2, m2=prof.m2, W4=prof.W4)


# ---------------------------------------------------------------------------
# scaled test functions

@pytest.mark.parametrize("name", sorted(TEST_FUNCTION_PRESETS))
def test_presets_compactly_supported(name):
    tf = preset_test_function(name)
    assert tf.g0 == pytest.approx(1.0)
    edge = tf.radius * (1.0 - 1e-9)
    assert abs(tf.g(edge)) < 1e-6
    assert tf.g(tf.radius + 0.5) == 0.0
    assert tf.gp(tf.radius + 0.5) == 0.0
    assert tf.gpp(-tf.radius - 2.0) == 0.0


@settings(max_examples=80, deadline=None)
@given(name=st.sampled_from(sorted(TEST_FUNCTION_PRESETS)),
       x=st.floats(-0.93, 0.93))
def test_preset_derivatives_match_finite_differences(name, x):
    tf = preset_test_function(name)
    h = 1e-6
    fd1 = (tf.g(x + h) - tf.g(x - h)) / (2 * h)
    fd2 = (tf.gp(x + h) - tf.gp(x - h)) / (2 * h)
    assert tf.gp(x) == pytest.approx(fd1, rel=2e-5, abs=1e-7)
    assert tf.gpp(x) == pytest.approx(fd2, rel=2e-5, abs=1e-6)


def test_scaling_and_recentring():
    tf = bump(E0=1.5, eta0=0.02)
    assert tf.f(1.5) == tf.g0
    assert tf.f(1.5 + 0.02 * 0.3) == pytest.approx(tf.g(0.3))
    assert tf.fp(1.5 + 0.02 * 0.3) == pytest.approx(tf.gp(0.3) / 0.02)
    moved = tf.recentred(-0.5)
    assert moved.eta0 == tf.eta0
    assert moved.f(-0.5) == tf.g0
    lo, hi = moved.window
    assert (lo, hi) == pytest.approx((-0.5 - 0.02, -0.5 + 0.02))


# ---------------------------------------------------------------------------
# almost-analytic extension

def test_chi_cutoff_plateau_and_support():
    y = np.array([-2.5, -2.0, -0.5, 0.0, 0.99, 1.0, 2.0, 3.0])
    chi = chi_cutoff(y)
    assert chi[np.abs(y) >= 2.0].tolist() == [0.0, 0.0, 0.0, 0.0]
    assert chi[np.abs(y) <= 1.0].tolist() == [1.0, 1.0, 1.0, 1.0]
    mid = np.linspace(1.0, 2.0, 101)
    fd = np.gradient(chi_cutoff(mid), mid)
    assert np.allclose(chi_cutoff_prime(mid)[1:-1], fd[1:-1], atol=0.01)


def test_hs_extension_on_thin_lines():
    tf = bump(E0=0.0, eta0=1.0)
    x = np.linspace(-0.9, 0.9, 7)
    h = 0.05
    two_term = hs_extension(tf, x, h)
    assert np.allclose(two_term, tf.f(x) + 1j * h * tf.fp(x), atol=1e-14)
    second = contour_boundary_value(tf, x, h)
    assert np.allclose(second, two_term - 0.5 * h * h * tf.fpp(x), atol=1e-14)
    # dbar of the two-term extension below the cutoff ramp: (i y / 2) f''
    db = hs_dbar(tf, x, h)
    assert np.allclose(db, 0.5j * h * tf.fpp(x), atol=1e-12)


def test_hs_reconstructs_point_values():
    tf = bump(E0=0.3, eta0=0.05)
    assert hs_reconstruct(tf, 0.3) == pytest.approx(tf.g0, abs=1e-4)
    assert hs_reconstruct(tf, 0.3 + 0.02) == pytest.approx(
        tf.f(0.32), abs=1e-4)
    assert hs_reconstruct(tf, 0.3 + 0.3) == pytest.approx(0.0, abs=1e-6)


# ---------------------------------------------------------------------------
# closed-form limits

def test_bulk_limit_frozen_value():
    tf = bump()
    assert limit_bulk_variance(tf, 1) == pytest.approx(BULK_LIMIT_BUMP, rel=1e-9)


def test_edge_limit_frozen_value():
    tf = bump()
    assert limit_edge_variance(tf, 1) == pytest.approx(EDGE_LIMIT_BUMP, rel=1e-9)


@pytest.mark.parametrize("name", sorted(TEST_FUNCTION_PRESETS))
def test_limits_beta_scaling(name):
    tf = preset_test_function(name)
    assert limit_bulk_variance(tf, 2) == pytest.approx(
        limit_bulk_variance(tf, 1) / 2.0, rel=1e-12)
    assert limit_edge_variance(tf, 2) == pytest.approx(
        limit_edge_variance(tf, 1) / 2.0, rel=1e-12)


def test_edge_limit_side_symmetry():
    tf = bump()  # even profile: both edges see the same h
    assert limit_edge_variance(tf, 1, side="left") == pytest.approx(
        limit_edge_variance(tf, 1, side="right"), rel=1e-12)
    with pytest.raises(ValueError):
        limit_edge_variance(tf, 1, side="top")


def test_edge_mean_limits():
    tf = bump()
    assert limit_edge_mean(tf, 1, "additive") == 0.25
    assert limit_edge_mean(tf, 2, "additive") == 0.0
    assert limit_edge_mean(tf, 1, "sample_covariance") == 0.25


# ---------------------------------------------------------------------------
# contour geometry

def test_contour_spec_height_rule():
    tf = bump(E0=0.0, eta0=0.01)
    kappa0 = 2.0
    spec = ContourSpec.auto(tf, kappa0, 1000)
    assert spec.outer_height == pytest.approx(
        min(0.1 * 0.01, 1e-3 * math.sqrt(kappa0 + 0.01)))
    assert spec.inner_height == spec.outer_height / 2
    assert spec.pole_guard == spec.outer_height / 4
    assert 1000.0 ** -spec.tau * 0.01 == pytest.approx(spec.outer_height)


def test_contour_for_uses_window_edge_distance(two_point_model):
    tf = bump(E0=0.0, eta0=0.01)
    spec = contour_for(two_point_model, tf, 1000)
    kappa0 = two_point_model.edges[1] - 0.01
    assert spec.outer_height == pytest.approx(
        min(1e-3, 1e-3 * math.sqrt(kappa0 + 0.01)))


# ---------------------------------------------------------------------------
# finite-scale contour values

def test_finite_variance_near_limit_bulk(goe_ctx):
    tf = bump(E0=0.0, eta0=0.1)
    spec = contour_for(goe_ctx, tf, 1000)
    v = finite_variance_Vf(goe_ctx, tf, spec)
    assert v >= -1e-8
    assert v == pytest.approx(BULK_LIMIT_BUMP, rel=0.02)


def test_finite_variance_beta2_halves(goe_ctx, gue_ctx):
    tf = bump(E0=0.0, eta0=0.05)
    spec = contour_for(goe_ctx, tf, 1000)
    v1 = finite_variance_Vf(goe_ctx, tf, spec)
    v2 = finite_variance_Vf(gue_ctx, tf, spec)
    assert v2 == pytest.approx(v1 / 2.0, rel=0.05)


def test_height_robustness_bulk(goe_ctx):
    tf = bump(E0=0.0, eta0=0.01)
    full = contour_for(goe_ctx, tf, 1000)
    half = contour_for(goe_ctx, tf, 1000, height_scale=0.5)
    v_full = finite_variance_Vf(goe_ctx, tf, full)
    v_half = finite_variance_Vf(goe_ctx, tf, half)
    assert v_half == pytest.approx(v_full, rel=0.02)
    b_full = finite_bias(goe_ctx, tf, full)
    b_half = finite_bias(goe_ctx, tf, half)
    assert b_half == pytest.approx(b_full, rel=0.02)


def test_bulk_bias_negligible(goe_ctx):
    tf = bump(E0=0.0, eta0=0.01)
    spec = contour_for(goe_ctx, tf, 1000)
    assert abs(finite_bias(goe_ctx, tf, spec)) <= 0.05 * tf.g0


def test_edge_bias_sokhotski_plemelj(goe_ctx):
    n = 10 ** 6
    tf = bump(E0=float(goe_ctx.model.edges[1]), eta0=n ** -0.4)
    spec = contour_for(goe_ctx, tf, n)
    b = finite_bias(goe_ctx, tf, spec)
    assert b == pytest.approx(0.25, rel=0.15)
    left = bump(E0=float(goe_ctx.model.edges[0]), eta0=n ** -0.4)
    assert finite_bias(goe_ctx, left, contour_for(goe_ctx, left, n)) == \
        pytest.approx(b, rel=1e-6)


def test_edge_bias_vanishes_for_gue(gue_ctx):
    n = 10 ** 6
    tf = bump(E0=float(gue_ctx.model.edges[1]), eta0=n ** -0.4)
    spec = contour_for(gue_ctx, tf, n)
    assert finite_bias(gue_ctx, tf, spec) == 0.0


def test_sample_edge_bias(sample_two_point_model):
    ctx = KernelContext(sample_two_point_model, beta=1)
    n = 10 ** 6
    tf = bump(E0=float(sample_two_point_model.edges[1]), eta0=n ** -0.4)
    spec = contour_for(ctx, tf, n)
    assert finite_bias(ctx, tf, spec) == pytest.approx(0.25, rel=0.15)
