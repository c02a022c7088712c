"""Atomic measures, regularity checks, and seeded matrix sampling."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mesorm.spectra import EnsembleSpec, MomentProfile, \
    build_atomic_measure, check_regularity, load_measure_file, sample_matrix


# ---------------------------------------------------------------------------
# build_atomic_measure

def test_single_atom():
    mu = build_atomic_measure([(0.0, 1.0)])
    assert mu.locations.tolist() == [0.0]
    assert mu.weights.tolist() == [1.0]
    assert mu.moment(0) == 1.0


def test_two_atoms_normalized():
    mu = build_atomic_measure([(-0.5, 1.0), (0.5, 1.0)])
    assert mu.locations.tolist() == [-0.5, 0.5]
    assert mu.weights.tolist() == [0.5, 0.5]


def test_relative_weights_normalized():
    mu = build_atomic_measure([(1, 2), (2, 1), (3, 1)])
    assert mu.weights.tolist() == [0.5, 0.25, 0.25]


def test_builder_rejects_bad_input():
    with pytest.raises(ValueError):
        build_atomic_measure([])
    with pytest.raises(ValueError):
        build_atomic_measure([(math.inf, 1.0)])
    with pytest.raises(ValueError):
        build_atomic_measure([(0.0, 0.0)])
    with pytest.raises(ValueError):
        build_atomic_measure([(0.0, -1.0)])


def test_builder_merges_duplicate_locations():
    mu = build_atomic_measure([(1.0, 1.0), (1.0 + 1e-14, 1.0), (2.0, 2.0)])
    assert mu.locations.tolist() == [1.0, 2.0]
    assert mu.weights.tolist() == [0.5, 0.5]


@given(st.lists(
    st.tuples(st.floats(-50, 50), st.floats(1e-3, 1e3)),
    min_size=1, max_size=8))
def test_builder_always_sorted_and_normalized(points):
    mu = build_atomic_measure(points)
    assert np.all(np.diff(mu.locations) > 0)
    assert np.all(mu.weights > 0)
    assert abs(mu.weights.sum() - 1.0) < 1e-12
    assert abs(mu.moment(0) - 1.0) < 1e-12


def test_measure_file_round_trip(tmp_path):
    path = tmp_path / "mu.txt"
    path.write_text("# population spectrum\n1.0 0.5\n4.0 0.5  # heavy atom\n")
    mu = load_measure_file(path)
    assert mu.locations.tolist() == [1.0, 4.0]
    assert mu.weights.tolist() == [0.5, 0.5]
    bad = tmp_path / "bad.txt"
    bad.write_text("1.0 0.5 extra\n")
    with pytest.raises(ValueError, match="location weight"):
        load_measure_file(bad)


# ---------------------------------------------------------------------------
# regularity

def test_regularity_two_point_margin(two_point_measure):
    rep = check_regularity(two_point_measure, "deformed_wigner")
    assert rep.ok
    # inf over [-1/2, 1/2] of the inverse-square transform is 4, at x = 0
    assert rep.margin == pytest.approx(3.0, abs=1e-6)


def test_regularity_critical_two_point():
    mu = build_atomic_measure([(-1.0, 1.0), (1.0, 1.0)])
    rep = check_regularity(mu, "deformed_wigner")
    assert not rep.ok
    assert rep.margin == pytest.approx(0.0, abs=1e-6)


def test_regularity_sample_hard_edge():
    mu = build_atomic_measure([(1.0, 1.0)])
    rep = check_regularity(mu, "sample_covariance", gamma=1.0)
    assert rep.ok
    assert "hard edge" in rep.detail


def test_regularity_margin_monotone_under_shrinking():
    rng = np.random.default_rng(11)
    for _ in range(5):
        k = rng.integers(2, 5)
        locs = np.sort(rng.uniform(-0.6, 0.6, k))
        locs += np.arange(k) * 1e-3  # keep atoms distinct
        w = rng.uniform(0.2, 1.0, k)
        base = check_regularity(build_atomic_measure(locs, w), "deformed_wigner")
        for s in (0.9, 0.5):
            shrunk = check_regularity(
                build_atomic_measure(s * locs, w), "deformed_wigner")
            assert shrunk.margin >= base.margin - 1e-9


# ---------------------------------------------------------------------------
# sampling

def _wigner_spec(n, seed=7, beta=1, entry_law="gaussian", W4=None):
    profile = MomentProfile.for_law(beta=beta, entry_law=entry_law) \
        if W4 is None else MomentProfile(beta, entry_law, 2.0 / beta, W4)
    return EnsembleSpec("deformed_wigner", n,
                        build_atomic_measure([(0.0, 1.0)]), profile, seed=seed)


def test_wigner_symmetric_exactly():
    h = sample_matrix(_wigner_spec(4, seed=7))
    assert np.array_equal(h, h.T)


def test_wigner_hermitian_beta2():
    h = sample_matrix(_wigner_spec(6, seed=3, beta=2))
    assert np.iscomplexobj(h)
    assert np.array_equal(h, h.conj().T)


def test_sampling_deterministic():
    a = sample_matrix(_wigner_spec(32, seed=5))
    b = sample_matrix(_wigner_spec(32, seed=5))
    assert np.array_equal(a, b)
    c = sample_matrix(_wigner_spec(32, seed=6))
    assert not np.array_equal(a, c)


def test_offdiagonal_mean_clt_bound():
    n = 2000
    h = sample_matrix(_wigner_spec(n, seed=1))
    iu = np.triu_indices(n, 1)
    entries = math.sqrt(n) * h[iu]
    assert abs(entries.mean()) <= 3.0 / math.sqrt(n * (n - 1) / 2)
    assert entries.var() == pytest.approx(1.0, rel=0.01)


def test_diagonal_carries_deformation():
    mu = build_atomic_measure([(-0.5, 1.0), (0.5, 1.0)])
    spec = EnsembleSpec("deformed_wigner", 64, mu, MomentProfile(), seed=2)
    h = sample_matrix(spec)
    diag = spec.diagonal()
    assert sorted(set(diag.tolist())) == [-0.5, 0.5]
    # re-sampling with A = 0 and adding the diagonal reproduces H exactly
    h0 = sample_matrix(EnsembleSpec(
        "deformed_wigner", 64, build_atomic_measure([(0.0, 1.0)]),
        MomentProfile(), seed=2))
    assert np.allclose(h - np.diag(diag), h0)


def test_sample_covariance_psd():
    spec = EnsembleSpec("sample_covariance", 3,
                        build_atomic_measure([(1.0, 1.0)]),
                        MomentProfile(), m=3, seed=1)
    q = sample_matrix(spec)
    assert np.linalg.eigvalsh(q).min() >= -1e-12


def test_rademacher_fourth_moment():
    n = 1500  # ~1.1e6 off-diagonal entries
    h = sample_matrix(_wigner_spec(n, seed=9, entry_law="rademacher"))
    iu = np.triu_indices(n, 1)
    entries = math.sqrt(n) * h[iu]
    assert np.mean(entries ** 4) == pytest.approx(1.0, rel=0.01)


def test_three_point_law_range():
    h = sample_matrix(_wigner_spec(50, entry_law="three_point", W4=5.0))
    assert np.array_equal(h, h.T)
    with pytest.raises(ValueError, match="three_point"):
        sample_matrix(_wigner_spec(10, entry_law="three_point", W4=0.5))


def test_for_law_requires_explicit_w4_for_three_point():
    with pytest.raises(ValueError, match="fourth moment"):
        MomentProfile.for_law(beta=1, entry_law="three_point")


def test_for_law_gue_moments():
    prof = MomentProfile.for_law(beta=2)
    assert prof.m2 == 1.0
    assert prof.W4 == 2.0
