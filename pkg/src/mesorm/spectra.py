"""Ensemble descriptions: atomic deformation measures, entry-moment
profiles, and seeded matrix sampling.

Two ensemble kinds are supported.  ``deformed_wigner`` is a Wigner matrix
plus a deterministic diagonal drawn from an atomic measure; the entries of
sqrt(N) H have unit variance off the diagonal, second moment ``m2`` on the
diagonal, and fourth moment ``W4`` off the diagonal.  ``sample_covariance``
is S^(1/2) X X^T S^(1/2) with X an M x N matrix of iid real entries of
variance 1/N and fourth cumulant ``K4``, and S diagonal with atoms from the
population measure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

__all__ = [
    "AtomicMeasure",
    "MomentProfile",
    "EnsembleSpec",
    "RegularityReport",
    "build_atomic_measure",
    "load_measure_file",
    "check_regularity",
    "sample_matrix",
]

_MERGE_TOL = 1e-12


class ModelAssumptionError(ValueError):
    """An ensemble fails a structural assumption (regularity, moments)."""


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely supported probability measure sum_i w_i delta_{a_i}.

    Locations are strictly increasing, weights positive and summing to one.
    Construct through :func:`build_atomic_measure`.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "locations", np.asarray(self.locations, float))
        object.__setattr__(self, "weights", np.asarray(self.weights, float))

    @property
    def support_min(self) -> float:
        return float(self.locations[0])

    @property
    def support_max(self) -> float:
        return float(self.locations[-1])

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.locations ** k))

    def __iter__(self):
        return iter(zip(self.locations, self.weights))


def build_atomic_measure(locations, weights=None) -> AtomicMeasure:
    """Normalize, sort and deduplicate an atomic measure.

    Accepts either a list of (location, weight) pairs or separate
    location/weight arrays.  Weights must be positive; they are divided
    by their sum, so relative masses suffice.  Locations closer than
    1e-12 are merged (weights added).
    """
    if weights is None:
        pairs = np.asarray(list(locations), dtype=float)
        if pairs.ndim != 2 or pairs.shape[0] == 0 or pairs.shape[1] != 2:
            raise ValueError("expected a nonempty list of (location, weight) pairs")
        locs, w = pairs[:, 0], pairs[:, 1]
    else:
        locs = np.asarray(locations, dtype=float)
        w = np.asarray(weights, dtype=float)
    if locs.ndim != 1 or w.shape != locs.shape or locs.size == 0:
        raise ValueError("locations and weights must be matching 1-d arrays")
    if not np.all(np.isfinite(locs)) or not np.all(np.isfinite(w)):
        raise ValueError("locations and weights must be finite")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    w = w / w.sum()
    order = np.argsort(locs, kind="stable")
    locs, w = locs[order], w[order]
    out_l, out_w = [locs[0]], [w[0]]
    for a, wt in zip(locs[1:], w[1:]):
        if a - out_l[-1] <= _MERGE_TOL:
            out_w[-1] += wt
        else:
            out_l.append(a)
            out_w.append(wt)
    return AtomicMeasure(np.array(out_l), np.array(out_w))


def load_measure_file(path) -> AtomicMeasure:
    """Read a two-column 'location weight' text file ('#' starts a comment)."""
    locs, weights = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'location weight', got {raw!r}")
            locs.append(float(parts[0]))
            weights.append(float(parts[1]))
    if not locs:
        raise ValueError(f"{path}: no atoms found")
    return build_atomic_measure(locs, weights)


# ---------------------------------------------------------------------------
# moment profiles and entry laws

_ENTRY_LAWS = ("gaussian", "rademacher", "uniform", "three_point")


@dataclass(frozen=True)
class MomentProfile:
    """Moments of the scaled entry distribution.

    For deformed Wigner, ``m2`` is E[(sqrt(N) H_ii)^2] and ``W4`` is
    E[|sqrt(N) H_ij|^4].  For sample covariance, ``K4`` is the fourth
    cumulant of sqrt(N) X_ij (variance is fixed to one).  ``beta`` is 1
    for real symmetric, 2 for complex Hermitian.
    """

    beta: int = 1
    entry_law: str = "gaussian"
    m2: float = 2.0
    W4: float = 3.0

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ValueError("beta must be 1 or 2")
        if self.entry_law not in _ENTRY_LAWS:
            raise ValueError(f"unknown entry law {self.entry_law!r}; "
                             f"choose from {_ENTRY_LAWS}")
        law_w4 = _law_w4(self.entry_law, self.beta, self.W4)
        if abs(law_w4 - self.W4) > 1e-12:
            raise ValueError(
                f"entry law {self.entry_law!r} with beta={self.beta} has "
                f"W4={law_w4}, profile declares {self.W4}")

    @property
    def K4(self) -> float:
        """Fourth cumulant of the real scaled entry (beta=1 only)."""
        if self.beta != 1:
            raise ValueError("K4 is defined for real (beta=1) entries")
        return float(self.W4 - 3.0)

    @classmethod
    def for_law(cls, beta: int = 1, entry_law: str = "gaussian",
                m2: float | None = None) -> "MomentProfile":
        """Profile with the W4 implied by the law; three_point needs W4."""
        if entry_law == "three_point":
            raise ValueError("three_point has a free fourth moment; "
                             "construct MomentProfile with explicit W4")
        w4 = _law_w4(entry_law, beta, 0.0)
        if m2 is None:
            m2 = 2.0 / beta
        return cls(beta=beta, entry_law=entry_law, m2=m2, W4=w4)


def _law_w4(entry_law: str, beta: int, requested: float) -> float:
    """Fourth moment of |scaled entry| implied by the law (and beta)."""
    base = {"gaussian": 3.0, "rademacher": 1.0, "uniform": 1.8}
    if entry_law in base:
        m4 = base[entry_law]
    else:  # three_point: symmetric mixture on {-v, 0, v}, tunable m4 in [1, 9]
        if beta == 1:
            m4 = requested
        else:
            m4 = 2.0 * requested - 1.0
        if not 1.0 - 1e-12 <= m4 <= 9.0 + 1e-12:
            raise ValueError("three_point law reaches W4 in [1, 9] (beta=1) "
                             "or [1, 5] (beta=2) only")
    if beta == 1:
        return m4
    return (m4 + 1.0) / 2.0


def _draw_entries(rng: np.random.Generator, law: str, m4: float, shape) -> np.ndarray:
    """Iid draws with mean 0, variance 1, fourth moment m4 (real law)."""
    if law == "gaussian":
        return rng.standard_normal(shape)
    if law == "rademacher":
        return rng.integers(0, 2, shape).astype(float) * 2.0 - 1.0
    if law == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
    if law == "three_point":
        # P(+-v) = p/2 with v = 1/sqrt(p) gives variance 1 and m4 = 1/p
        p = 1.0 / m4
        v = 1.0 / np.sqrt(p)
        u = rng.random(shape)
        x = np.zeros(shape)
        x[u < p / 2] = v
        x[(u >= p / 2) & (u < p)] = -v
        return x
    raise ValueError(f"unknown entry law {law!r}")


# ---------------------------------------------------------------------------
# ensemble specification

@dataclass(frozen=True)
class EnsembleSpec:
    """Everything needed to sample one matrix deterministically."""

    kind: str
    n: int
    deformation: AtomicMeasure
    moments: MomentProfile = field(default_factory=MomentProfile)
    m: int | None = None          # sample_covariance: matrix is m x m
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("deformed_wigner", "sample_covariance"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.kind == "sample_covariance":
            if self.m is None:
                raise ValueError("sample_covariance needs m")
            if self.moments.beta != 1:
                raise ModelAssumptionError(
                    "sample covariance ensembles are real (beta=1) only")
            if np.any(self.deformation.locations <= 0):
                raise ModelAssumptionError(
                    "population eigenvalues must be positive")
            dim = self.m
        else:
            dim = self.n
        counts = self.deformation.weights * dim
        if np.any(np.abs(counts - np.round(counts)) > 1e-9):
            raise ValueError(
                "deformation atom weights times the matrix dimension must be "
                f"integers; got multiplicities {counts}")

    @property
    def gamma(self) -> float:
        if self.kind != "sample_covariance":
            raise ValueError("gamma is defined for sample_covariance only")
        return self.m / self.n

    def diagonal(self) -> np.ndarray:
        """Deterministic deformation diagonal realized with exact multiplicities."""
        dim = self.m if self.kind == "sample_covariance" else self.n
        counts = np.round(self.deformation.weights * dim).astype(int)
        return np.repeat(self.deformation.locations, counts)


# ---------------------------------------------------------------------------
# regularity of the deformation

@dataclass(frozen=True)
class RegularityReport:
    ok: bool
    margin: float
    detail: str = ""


def _grid_infimum(fn, lo: float, hi: float, n_grid: int = 4001) -> float:
    """Infimum of fn over [lo, hi] by dense grid plus local golden refinement."""
    from scipy.optimize import minimize_scalar

    xs = np.linspace(lo, hi, n_grid)
    vals = fn(xs)
    k = int(np.argmin(vals))
    best = float(vals[k])
    a = xs[max(0, k - 1)]
    b = xs[min(n_grid - 1, k + 1)]
    if b > a:
        res = minimize_scalar(lambda x: float(fn(np.array([x]))[0]),
                              bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def check_regularity(measure: AtomicMeasure, kind: str,
                     gamma: float | None = None) -> RegularityReport:
    """Check the square-root edge condition for the deformation.

    For ``deformed_wigner`` the condition is
    inf_x sum_i w_i / (a_i - x)^2 > 1 over the smallest interval containing
    the support.  For ``sample_covariance`` it is
    inf_x sum_i w_i (t_i x / (1 - t_i x))^2 > 1/gamma over
    [1/t_max, 1/t_min].  Returns the infimum margin (may be +inf for a
    single atom, where the interval is degenerate).
    """
    locs, w = measure.locations, measure.weights
    if kind == "deformed_wigner":
        lo, hi = measure.support_min, measure.support_max
        if hi - lo <= _MERGE_TOL:
            return RegularityReport(True, np.inf, "single atom")

        def fn(x):
            with np.errstate(divide="ignore"):
                return np.sum(w[None, :] / (locs[None, :] - x[:, None]) ** 2, axis=1)

        # the infimum is attained strictly between atoms; atoms are poles
        inf_val = _grid_infimum(fn, lo, hi)
        margin = inf_val - 1.0
        return RegularityReport(margin > 0, margin,
                                f"inf of the inverse-square transform is {inf_val:.6g}")
    if kind == "sample_covariance":
        if gamma is None or gamma <= 0:
            raise ValueError("sample_covariance regularity needs gamma > 0")
        t_min, t_max = measure.support_min, measure.support_max
        if t_min <= 0:
            raise ModelAssumptionError("population eigenvalues must be positive")
        detail = "hard edge at zero (gamma = 1)" if abs(gamma - 1.0) < 1e-12 else ""
        if t_max - t_min <= _MERGE_TOL:
            return RegularityReport(True, np.inf, detail or "single atom")
        lo, hi = 1.0 / t_max, 1.0 / t_min

        def fn(x):
            tx = locs[None, :] * x[:, None]
            return np.sum(w[None, :] * (tx / (1.0 - tx)) ** 2, axis=1)

        # endpoints are poles; trim an epsilon inward
        eps = 1e-9 * (hi - lo)
        inf_val = _grid_infimum(fn, lo + eps, hi - eps)
        margin = inf_val - 1.0 / gamma
        return RegularityReport(margin > 0, margin,
                                detail or f"inf of the edge functional is {inf_val:.6g}")
    raise ValueError(f"unknown ensemble kind {kind!r}")


# ---------------------------------------------------------------------------
# sampling

def sample_matrix(spec: EnsembleSpec) -> np.ndarray:
    """Draw the matrix described by ``spec``; bit-identical for equal seeds."""
    rng = np.random.default_rng(spec.seed)
    prof = spec.moments
    if spec.kind == "deformed_wigner":
        n = spec.n
        m4 = _entry_component_m4(prof)
        if prof.beta == 1:
            x = _draw_entries(rng, prof.entry_law, m4, (n, n))
            h = np.triu(x, 1)
            h = h + h.T
            diag = np.sqrt(prof.m2) * _draw_entries(rng, prof.entry_law, m4, (n,))
            h[np.diag_indices(n)] = diag
            h /= np.sqrt(n)
        else:
            xr = _draw_entries(rng, prof.entry_law, m4, (n, n))
            xi = _draw_entries(rng, prof.entry_law, m4, (n, n))
            h = np.triu(xr + 1j * xi, 1) / np.sqrt(2.0)
            h = h + h.conj().T
            diag = np.sqrt(prof.m2) * _draw_entries(rng, prof.entry_law, m4, (n,))
            h[np.diag_indices(n)] = diag
            h /= np.sqrt(n)
        return h + np.diag(spec.diagonal().astype(h.real.dtype))
    # sample covariance
    m, n = spec.m, spec.n
    m4 = _entry_component_m4(prof)
    x = _draw_entries(rng, prof.entry_law, m4, (m, n)) / np.sqrt(n)
    sqrt_sigma = np.sqrt(spec.diagonal())
    y = sqrt_sigma[:, None] * x
    return y @ y.T


def _entry_component_m4(prof: MomentProfile) -> float:
    """Fourth moment of the real component law reproducing the profile's W4."""
    if prof.entry_law != "three_point":
        return {"gaussian": 3.0, "rademacher": 1.0, "uniform": 1.8}[prof.entry_law]
    if prof.beta == 1:
        return prof.W4
    return 2.0 * prof.W4 - 1.0
