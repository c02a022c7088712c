"""Free-convolution transforms: solver oracles, edges, densities, derivatives."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mesorm.freeconv import EdgeData, density_at, \
    edges_additive, m_derivative_multiplicative, m_derivatives_additive, \
    multiplicative_model, solve_m_additive, solve_m_multiplicative
from mesorm.spectra import build_atomic_measure

from conftest import random_upper_z, semicircle_m_closed

DELTA0 = build_atomic_measure([(0.0, 1.0)])
IDENTITY = build_atomic_measure([(1.0, 1.0)])


# ---------------------------------------------------------------------------
# additive solver against the semicircle closed form

def test_semicircle_named_values():
    assert solve_m_additive(DELTA0, 2j) == pytest.approx(
        1j * (math.sqrt(2.0) - 1.0), abs=1e-12)
    assert solve_m_additive(DELTA0, 1j) == pytest.approx(
        1j * (math.sqrt(5.0) - 1.0) / 2.0, abs=1e-12)


def test_semicircle_random_points():
    rng = np.random.default_rng(0)
    for z in random_upper_z(rng, 100):
        z = complex(z)
        assert abs(solve_m_additive(DELTA0, z) - semicircle_m_closed(z)) < 1e-10


def test_translation_covariance():
    c = 0.7
    shifted = build_atomic_measure([(c, 1.0)])
    for z in (2j, 1.5 + 0.3j, -1.0 + 0.05j):
        assert solve_m_additive(shifted, z) == pytest.approx(
            semicircle_m_closed(z - c), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(
    locs=st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=4, unique=True),
    e=st.floats(-4.0, 4.0),
    eta=st.floats(1e-3, 5.0),
    sign=st.sampled_from([1.0, -1.0]))
def test_herglotz_and_conjugate_symmetry(locs, e, eta, sign):
    mu = build_atomic_measure(locs, np.full(len(locs), 1.0 / len(locs)))
    z = complex(e, sign * eta)
    m = solve_m_additive(mu, z)
    assert math.copysign(1.0, m.imag) == math.copysign(1.0, z.imag)
    assert abs(solve_m_additive(mu, z.conjugate()) - m.conjugate()) < 1e-12


def test_stieltjes_decay(two_point_model):
    eta = 1e4
    val = abs(1j * eta * two_point_model.m(1j * eta) + 1.0)
    assert val <= 2.0 * 0.5 / eta


def test_stability_bound(two_point_model):
    # margin of the two-point measure is 3.0, well above the 0.1 hypothesis
    lo, hi = two_point_model.edges
    worst = math.inf
    for e in np.linspace(lo - 0.5, hi + 0.5, 31):
        for eta in (1e-3, 1e-2, 0.1, 1.0):
            m = two_point_model.m(complex(e, eta))
            worst = min(worst, min(abs(a - complex(e, eta) - m)
                                   for a in two_point_model.measure.locations))
    assert worst >= 0.01


# ---------------------------------------------------------------------------
# multiplicative solver against the gamma = const quadratic

def _mp_quadratic_m(z, gamma):
    """Upper-half-plane root of 1 + (z - 1 + gamma) m + gamma z m^2 = 0."""
    a, b, c = gamma * z, z - 1.0 + gamma, 1.0
    r1 = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    r2 = (-b - np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return r1 if r1.imag > 0 else r2


@pytest.mark.parametrize("gamma,z", [(1.0, 2 + 1j), (0.25, 1 + 0.5j)])
def test_mp_quadratic_oracle(gamma, z):
    m, _ = solve_m_multiplicative(IDENTITY, gamma, z)
    assert m == pytest.approx(_mp_quadratic_m(z, gamma), abs=1e-10)


def test_companion_transform_identity():
    for gamma in (0.25, 0.5, 1.0):
        for z in (2 + 1j, 0.5 + 0.1j, 4 - 0.3j):
            m, fm = solve_m_multiplicative(IDENTITY, gamma, z)
            assert fm - gamma * m - (gamma - 1.0) / z == pytest.approx(0, abs=1e-12)


# ---------------------------------------------------------------------------
# edges

def test_semicircle_edges():
    lo, hi, data = edges_additive(DELTA0)
    assert (lo, hi) == pytest.approx((-2.0, 2.0), abs=1e-12)
    assert data["plus"].zeta == pytest.approx(1.0, abs=1e-12)
    assert data["plus"].c == pytest.approx(1.0, abs=1e-10)


def test_shifted_semicircle_edges():
    lo, hi, _ = edges_additive(build_atomic_measure([(0.3, 1.0)]))
    assert (lo, hi) == pytest.approx((-1.7, 2.3), abs=1e-12)


def test_two_point_edges_frozen(two_point_model):
    # brute-force bisection oracle, frozen: F'(zeta) = 0 on (0.5, 10)
    assert two_point_model.edges[1] == pytest.approx(2.201834737520806, abs=1e-11)
    assert two_point_model.edges[0] == pytest.approx(-2.201834737520806, abs=1e-11)
    plus = two_point_model.edge_data["plus"]
    assert plus.zeta == pytest.approx(1.2712298784187062, abs=1e-11)
    assert plus.c == pytest.approx(0.9205903462520506, abs=1e-9)


@pytest.mark.parametrize("gamma", [0.25, 0.5, 1.0])
def test_mp_edges(gamma):
    model = multiplicative_model(IDENTITY, gamma)
    lo, hi = model.edges
    assert hi == pytest.approx((1 + math.sqrt(gamma)) ** 2, abs=1e-9)
    assert lo == pytest.approx((1 - math.sqrt(gamma)) ** 2, abs=1e-9)


def test_mp_hard_edge():
    model = multiplicative_model(IDENTITY, 1.0)
    assert model.edges == pytest.approx((0.0, 4.0), abs=1e-9)
    assert model.edge_data["minus"].hard
    assert model.edge_data["plus"] == EdgeData(
        side="plus", location=4.0, zeta=0.5, c=0.25, hard=False)


def test_sample_two_point_edges_frozen(sample_two_point_model):
    # grid+bisection oracle on H(xi) = 2 over (0, 1/4) and (1, infinity)
    lo, hi = sample_two_point_model.edges
    assert lo == pytest.approx(0.12222414167554335, abs=1e-10)
    assert hi == pytest.approx(9.29994995023861, abs=1e-9)


def test_square_root_edge_expansion(two_point_model):
    plus = two_point_model.edge_data["plus"]
    hi = two_point_model.edges[1]
    gaps = []
    for t in (1e-2, 1e-3, 1e-4):
        z = complex(hi, t)
        ratio = (z + two_point_model.m(z) - plus.zeta) / np.sqrt(complex(z - hi))
        gaps.append(abs(ratio - plus.c))
    assert gaps[0] > gaps[1] > gaps[2]


def test_im_m_square_root_scaling(two_point_model):
    lo, hi = two_point_model.edges
    eta = 1e-4
    for e in np.linspace(lo, hi, 41):
        kappa = min(abs(e - lo), abs(e - hi))
        ratio = two_point_model.m(complex(e, eta)).imag / math.sqrt(kappa + eta)
        assert 1.0 / 20.0 <= ratio <= 20.0


# ---------------------------------------------------------------------------
# densities

def test_semicircle_density_values(semicircle_model):
    assert density_at(semicircle_model, 0.0) == pytest.approx(1 / math.pi, abs=1e-8)
    assert density_at(semicircle_model, 2.0) == pytest.approx(0.0, abs=1e-4)
    assert density_at(semicircle_model, 2.5) == 0.0
    assert density_at(semicircle_model, -3.0) == 0.0


def test_mp_density_closed_form(mp_quarter_model):
    gamma = 0.25
    for e in (0.3, 0.5, 1.0, 2.0):
        closed = math.sqrt((e - 0.25) * (2.25 - e)) / (2 * math.pi * gamma * e)
        assert density_at(mp_quarter_model, e) == pytest.approx(closed, abs=1e-6)


@pytest.mark.parametrize("fixture", [
    "two_point_model", "semicircle_model", "sample_two_point_model"])
def test_density_mass(fixture, request):
    model = request.getfixturevalue(fixture)
    lo, hi = model.edges
    grid = np.linspace(lo, hi, 4000)
    rho = model.density_grid(grid)
    assert np.all(rho[1:-1] > 0)
    assert np.trapezoid(rho, grid) == pytest.approx(1.0, abs=1e-4)


# ---------------------------------------------------------------------------
# derivatives

def _fd(fn, z, h=1e-5):
    return (fn(z + h) - fn(z - h)) / (2 * h)


def test_additive_derivatives_fd(two_point_model):
    for z in (2j, 0.3 + 0.4j, -1.2 + 0.25j):
        mp, mpp = m_derivatives_additive(two_point_model, z)
        assert mp == pytest.approx(_fd(two_point_model.m, z), rel=1e-8)
        fd2 = _fd(lambda u: m_derivatives_additive(two_point_model, u)[0], z)
        assert mpp == pytest.approx(fd2, rel=1e-6)


def test_additive_derivative_off_support(semicircle_model):
    mp, _ = m_derivatives_additive(semicircle_model, 10.0 + 0j)
    assert mp.imag == pytest.approx(0.0, abs=1e-12)
    assert mp.real > 0


def test_multiplicative_derivative_fd(mp_quarter_model):
    z = 1 + 1j
    fmp = m_derivative_multiplicative(mp_quarter_model, z)
    fd = _fd(lambda u: mp_quarter_model.frak_m(u), z)
    assert fmp == pytest.approx(fd, rel=1e-6)
    conj = m_derivative_multiplicative(mp_quarter_model, z.conjugate())
    assert conj == pytest.approx(fmp.conjugate(), abs=1e-10)


def test_multiplicative_derivative_edge_scale(sample_two_point_model):
    plus = sample_two_point_model.edge_data["plus"]
    z = complex(sample_two_point_model.edges[1] + 0.01, 1e-9)
    fmp = m_derivative_multiplicative(sample_two_point_model, z)
    pred = plus.c / (2 * math.sqrt(0.01))
    assert pred / 3.0 <= abs(fmp) <= 3.0 * pred
