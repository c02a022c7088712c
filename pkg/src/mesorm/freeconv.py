"""Free convolution measures via their Stieltjes transforms.

Additive model: the transform m(z) of mu_A boxplus semicircle solves the
finite-N Pastur equation

    m(z) = sum_i w_i / (a_i - z - m(z)),   Im m(z) > 0 on the upper plane.

Multiplicative model: for a population measure mu_S with atoms (s_i, w_i)
and dimension ratio gamma = M/N, the companion transform fm(z) solves

    gamma - 1 - z fm(z) = gamma sum_i w_i / (1 + s_i fm(z)),

and the spectral transform of the M x M matrix is
m(z) = (fm(z) - (gamma - 1)/z) / gamma.

Both equations are solved by a safeguarded Newton iteration with geometric
continuation in Im z, starting from the closed semicircle form (additive)
or from i (multiplicative).  Plain damped fixed-point iteration stalls near
the spectral edges, where the contraction rate degrades like
1 - O(sqrt(kappa + eta)); the Newton direction removes that obstruction and
the backtracking safeguard (step halved whenever the residual grows or the
iterate leaves the upper half-plane) keeps the damped-iteration robustness.

Edges of the support are located by bracketed root finding on the derivative
of the inverse transform, never by scanning the density.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
from scipy.optimize import brentq

from .spectra import AtomicMeasure, check_regularity, ModelAssumptionError

__all__ = [
    "StieltjesSolverConfig",
    "EdgeData",
    "FreeConvolutionModel",
    "SolverError",
    "additive_model",
    "multiplicative_model",
    "solve_m_additive",
    "solve_m_multiplicative",
    "edges_additive",
    "edges_multiplicative",
    "density_at",
    "m_derivatives_additive",
    "m_derivative_multiplicative",
    "semicircle_m",
]

_DENSITY_ETA = 1e-9


class SolverError(RuntimeError):
    """The fixed-point solve or a quadrature failed to converge."""


@dataclass(frozen=True)
class StieltjesSolverConfig:
    max_iter: int = 100_000
    tol: float = 1e-12
    damping: float = 1.0
    continuation_steps: int = 24
    # points-times-atoms budget per vectorized chunk
    chunk_budget: int = 8_000_000


def semicircle_m(z):
    """Closed-form semicircle transform m(z) = (-z + sqrt(z^2 - 4)) / 2.

    Branch chosen so that Im m > 0 for Im z > 0 and m(x) is real with
    m ~ -1/x for large real |x|.
    """
    z = np.asarray(z, dtype=complex)
    s = np.sqrt(z * z - 4.0)
    r1 = 0.5 * (-z + s)
    r2 = 0.5 * (-z - s)
    # Herglotz branch off the real axis; the root inside the unit disk on it
    # (the two roots have product 1, and m ~ -1/z at infinity)
    pick_r2 = np.where(z.imag > 0, r1.imag <= 0,
                       np.where(z.imag < 0, r1.imag >= 0,
                                np.abs(r1) > np.abs(r2)))
    m = np.where(pick_r2, r2, r1)
    if m.ndim == 0:
        return complex(m)
    return m


# ---------------------------------------------------------------------------
# vectorized sums over the atoms

def _chunks(n_points: int, n_atoms: int, budget: int):
    step = max(1024, budget // max(1, n_atoms))
    for lo in range(0, n_points, step):
        yield slice(lo, min(n_points, lo + step))


def _additive_sums(locs, w, zpm, n_orders):
    """S_k = sum_i w_i / (a_i - (z+m))^k for k = 1..n_orders."""
    den = locs[None, :] - zpm[:, None]
    inv = 1.0 / den
    out = []
    cur = inv
    for _ in range(n_orders):
        out.append(cur @ w)
        cur = cur * inv
    return out


def _newton_additive(locs, w, z, m0, cfg):
    """One continuation rung: solve the Pastur equation at fixed z (array)."""
    m = np.array(m0, dtype=complex, copy=True)
    bad = ~(m.imag > 0)
    if bad.any():
        m[bad] = 1j
    s1, s2 = _additive_sums(locs, w, z + m, 2)
    res = s1 - m
    for _ in range(200):
        if np.all(np.abs(res) <= cfg.tol):
            return m
        denom = 1.0 - s2
        small = np.abs(denom) < 1e-300
        if small.any():
            denom = np.where(small, 1e-300, denom)
        step = res / denom
        t = np.full(m.shape, cfg.damping)
        absres = np.abs(res)
        cand = m + step
        for _ in range(60):
            s1c, s2c = _additive_sums(locs, w, z + cand, 2)
            cres = s1c - cand
            ok = (cand.imag > 0) & (np.abs(cres) <= absres * (1.0 - 0.1 * t) + cfg.tol)
            if ok.all():
                break
            t = np.where(ok, t, 0.5 * t)
            cand = m + t * step
        m, res, s1, s2 = cand, cres, s1c, s2c
    raise SolverError("Pastur solve did not reach the residual tolerance")


def _solve_additive_upper(locs, w, z, cfg):
    """Solve on an array of strictly upper-half-plane points."""
    z = np.asarray(z, dtype=complex)
    eta = z.imag
    if np.any(eta <= 0):
        raise ValueError("all points must have Im z > 0")
    out = np.empty(z.shape, dtype=complex)
    flat = z.ravel()
    for sl in _chunks(flat.size, locs.size, cfg.chunk_budget):
        zc = flat[sl]
        eta_t = zc.imag
        eta_0 = np.maximum(1.0, eta_t)
        mean_a = float(np.dot(w, locs))
        m = semicircle_m(zc.real + 1j * eta_0 - mean_a)
        m = np.atleast_1d(np.asarray(m, dtype=complex))
        K = max(1, cfg.continuation_steps)
        for k in range(1, K + 1):
            eta_k = eta_0 * (eta_t / eta_0) ** (k / K)
            m = _newton_additive(locs, w, zc.real + 1j * eta_k, m, cfg)
        out.ravel()[sl] = m
    return out


def _multiplicative_residual(locs, w, gamma, z, fm):
    return gamma - 1.0 - z * fm - gamma * ((1.0 / (1.0 + locs[None, :] * fm[:, None])) @ w)


def _newton_multiplicative(locs, w, gamma, z, fm0, cfg):
    fm = np.array(fm0, dtype=complex, copy=True)
    bad = ~(fm.imag > 0)
    if bad.any():
        fm[bad] = 1j
    res = _multiplicative_residual(locs, w, gamma, z, fm)
    for _ in range(200):
        if np.all(np.abs(res) <= cfg.tol):
            return fm
        one_p = 1.0 + locs[None, :] * fm[:, None]
        dG = -z + gamma * ((locs[None, :] / one_p ** 2) @ w)
        small = np.abs(dG) < 1e-300
        if small.any():
            dG = np.where(small, 1e-300, dG)
        step = -res / dG
        t = np.full(fm.shape, cfg.damping)
        absres = np.abs(res)
        cand = fm + step
        for _ in range(60):
            cres = _multiplicative_residual(locs, w, gamma, z, cand)
            ok = (cand.imag > 0) & (np.abs(cres) <= absres * (1.0 - 0.1 * t) + cfg.tol)
            if ok.all():
                break
            t = np.where(ok, t, 0.5 * t)
            cand = fm + t * step
        fm, res = cand, cres
    raise SolverError("companion transform solve did not converge")


def _solve_multiplicative_upper(locs, w, gamma, z, cfg):
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("all points must have Im z > 0")
    out = np.empty(z.shape, dtype=complex)
    flat = z.ravel()
    for sl in _chunks(flat.size, locs.size, cfg.chunk_budget):
        zc = flat[sl]
        eta_t = zc.imag
        eta_0 = np.maximum(1.0, eta_t)
        fm = np.full(zc.shape, 1j, dtype=complex)
        K = max(1, cfg.continuation_steps)
        fm = _newton_multiplicative(locs, w, gamma, zc.real + 1j * eta_0, fm, cfg)
        for k in range(1, K + 1):
            eta_k = eta_0 * (eta_t / eta_0) ** (k / K)
            fm = _newton_multiplicative(locs, w, gamma, zc.real + 1j * eta_k, fm, cfg)
        out.ravel()[sl] = fm
    return out


# ---------------------------------------------------------------------------
# edges

@dataclass(frozen=True)
class EdgeData:
    """Square-root edge description.

    ``location`` is the edge of the support.  ``zeta`` is the critical point
    of the inverse transform (zeta_pm = L_pm + m(L_pm) additively,
    xi_pm = -fm(E_pm) multiplicatively).  ``c`` is the square-root
    coefficient of the transform expansion at the edge; ``hard`` marks the
    gamma = 1 hard edge at zero where no expansion exists.
    """

    side: str
    location: float
    zeta: float | None
    c: float | None
    hard: bool = False


def _require_regular(measure, kind, gamma=None):
    rep = check_regularity(measure, kind, gamma)
    if not rep.ok:
        raise ModelAssumptionError(
            f"deformation fails the square-root edge condition "
            f"(margin {rep.margin:.3g}); {rep.detail}")


def edges_additive(mu: AtomicMeasure) -> tuple[float, float, dict]:
    """Support endpoints of mu boxplus semicircle and their edge data."""
    _require_regular(mu, "deformed_wigner")
    locs, w = mu.locations, mu.weights

    def fprime(zeta):
        return 1.0 - np.sum(w / (locs - zeta) ** 2)

    def fval(zeta):
        return zeta - np.sum(w / (locs - zeta))

    a_lo, a_hi = mu.support_min, mu.support_max
    # sum w/(a-zeta)^2 = 1 forces |zeta - support| <= 1
    zeta_p = brentq(fprime, a_hi + 1e-9, a_hi + 1.0 + 1e-6, xtol=1e-14, rtol=8.9e-16)
    zeta_m = brentq(fprime, a_lo - 1.0 - 1e-6, a_lo - 1e-9, xtol=1e-14, rtol=8.9e-16)
    L_p, L_m = fval(zeta_p), fval(zeta_m)
    s3_p = np.sum(w / (locs - zeta_p) ** 3)     # negative at the right edge
    s3_m = np.sum(w / (locs - zeta_m) ** 3)     # positive at the left edge
    if not (s3_p < 0 < s3_m):
        raise SolverError("edge curvature has the wrong sign; measure not one-cut?")
    data = {
        "plus": EdgeData("plus", L_p, zeta_p, float((-s3_p) ** -0.5)),
        "minus": EdgeData("minus", L_m, zeta_m, float(s3_m ** -0.5)),
    }
    return L_m, L_p, data


def edges_multiplicative(mu_s: AtomicMeasure, gamma: float) -> tuple[float, float, dict]:
    """Support endpoints of the free multiplicative model, with edge data.

    The critical points solve H(xi) = sum_i w_i (s_i xi / (1 - s_i xi))^2
    = 1/gamma on the monotone branches; E_pm = F(xi_pm) with
    F(xi) = 1/xi + gamma sum_i w_i s_i / (1 - s_i xi).  At gamma = 1 the
    lower edge is the hard edge at zero.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    _require_regular(mu_s, "sample_covariance", gamma)
    locs, w = mu_s.locations, mu_s.weights
    s_min, s_max = mu_s.support_min, mu_s.support_max

    def H(xi):
        t = locs * xi
        return np.sum(w * (t / (1.0 - t)) ** 2)

    def F(xi):
        return 1.0 / xi + gamma * np.sum(w * locs / (1.0 - locs * xi))

    def Fpp(xi):
        return 2.0 * gamma * np.sum(w * locs ** 2 / (xi * (1.0 - locs * xi) ** 3))

    target = 1.0 / gamma
    # right edge: H increases from 0 to +inf on (0, 1/s_max)
    hi = 1.0 / s_max
    lo = hi * 1e-12
    while H(lo) > target:
        lo *= 1e-3
    b = hi * (1.0 - 1e-13)
    xi_p = brentq(lambda x: H(x) - target, lo, b, xtol=1e-15, rtol=8.9e-16)
    E_p = F(xi_p)
    cpp = Fpp(xi_p)
    if cpp <= 0:
        raise SolverError("right edge curvature must be positive")
    data = {"plus": EdgeData("plus", float(E_p), float(xi_p), float(np.sqrt(2.0 / cpp)))}

    if abs(gamma - 1.0) < 1e-12:
        E_m = 0.0
        data["minus"] = EdgeData("minus", 0.0, None, None, hard=True)
    elif gamma < 1.0:
        # H decreases from +inf to 1 on (1/s_min, inf); root exists since 1/gamma > 1
        lo = (1.0 / s_min) * (1.0 + 1e-12)
        while H(lo) < target:
            lo = 1.0 / s_min + (lo - 1.0 / s_min) * 1e-3
        hi = (1.0 / s_min) * 2.0
        while H(hi) > target:
            hi *= 2.0
            if hi > 1e18:
                raise SolverError("left edge bracket not found")
        xi_m = brentq(lambda x: H(x) - target, lo, hi, xtol=1e-15, rtol=8.9e-16)
        E_m = F(xi_m)
        cmm = Fpp(xi_m)
        if cmm >= 0:
            raise SolverError("left edge curvature must be negative")
        data["minus"] = EdgeData("minus", float(E_m), float(xi_m),
                                 float(np.sqrt(-2.0 / cmm)))
    else:
        # gamma > 1: H decreases from 1 to 0 on (-inf, 0); root since 1/gamma < 1
        hi = -1e-12 / s_max
        while H(hi) > target:
            hi *= 1e-3
        lo = -2.0 / s_min
        while H(lo) < target:
            lo *= 2.0
            if lo < -1e18:
                raise SolverError("left edge bracket not found")
        xi_m = brentq(lambda x: H(x) - target, lo, hi, xtol=1e-15, rtol=8.9e-16)
        E_m = F(xi_m)
        cmm = Fpp(xi_m)
        if cmm >= 0:
            raise SolverError("left edge curvature must be negative")
        data["minus"] = EdgeData("minus", float(E_m), float(xi_m),
                                 float(np.sqrt(-2.0 / cmm)))
    if E_m >= E_p:
        raise SolverError("edges out of order")
    return float(E_m), float(E_p), data


def additive_derivs_from(measure: AtomicMeasure, z, m) -> tuple:
    """(m', m'') from an already solved transform value array."""
    z = np.asarray(z, dtype=complex)
    m = np.asarray(m, dtype=complex)
    _, s2, s3 = _additive_sums(measure.locations, measure.weights, z + m, 3)
    denom = 1.0 - s2
    if np.any(np.abs(denom) < 1e-14):
        raise SolverError("derivative evaluation too close to an edge")
    mp = s2 / denom
    mpp = 2.0 * (1.0 + mp) ** 3 * s3
    return mp, mpp


def multiplicative_derivs_from(measure: AtomicMeasure, gamma: float, z, fm) -> tuple:
    """(fm', fm'') from an already solved companion transform array."""
    z = np.asarray(z, dtype=complex)
    fm = np.asarray(fm, dtype=complex)
    locs, w = measure.locations, measure.weights
    one_p = 1.0 + locs[None, :] * fm[:, None]
    t1 = (locs[None, :] / one_p ** 2) @ w
    t2 = (locs[None, :] ** 2 / one_p ** 3) @ w
    denom = z - gamma * t1
    if np.any(np.abs(denom) < 1e-14):
        raise SolverError("derivative evaluation too close to an edge")
    fmp = -fm / denom
    fmpp = 2.0 * fmp ** 2 / fm + 2.0 * gamma * t2 * fmp ** 3 / fm
    return fmp, fmpp


# ---------------------------------------------------------------------------
# the model object

@dataclass
class FreeConvolutionModel:
    """Solved free-convolution model with memoized transform evaluations.

    ``kind`` is 'additive' or 'multiplicative'.  The scalar accessor
    :meth:`m` caches upper-half-plane evaluations; grid accessors bypass
    the cache.  All cached values satisfy Im m > 0 and the equation
    residual is below the solver tolerance.
    """

    kind: str
    measure: AtomicMeasure
    gamma: float | None = None
    config: StieltjesSolverConfig = field(default_factory=StieltjesSolverConfig)
    edges: tuple[float, float] = (0.0, 0.0)
    edge_data: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)

    # -- transform evaluation -------------------------------------------

    def _upper(self, z_flat: np.ndarray) -> np.ndarray:
        """Companion transform on upper-half-plane points (fm for
        multiplicative, m for additive)."""
        if self.kind == "additive":
            return _solve_additive_upper(self.measure.locations,
                                         self.measure.weights, z_flat, self.config)
        return _solve_multiplicative_upper(self.measure.locations,
                                           self.measure.weights, self.gamma,
                                           z_flat, self.config)

    def base_grid(self, z) -> np.ndarray:
        """m (additive) or fm (multiplicative) on an array, Im z != 0."""
        z = np.asarray(z, dtype=complex)
        out = np.empty(z.shape, dtype=complex)
        upper = z.imag > 0
        lower = z.imag < 0
        if np.any(~upper & ~lower):
            raise ValueError("grid evaluation requires Im z != 0")
        if upper.any():
            out[upper] = self._upper(z[upper])
        if lower.any():
            out[lower] = np.conj(self._upper(np.conj(z[lower])))
        return out

    def base(self, z: complex) -> complex:
        """Scalar cached variant of :meth:`base_grid`; handles real z
        outside the support by bracketed inversion."""
        z = complex(z)
        if z.imag == 0.0:
            return self._base_real(z.real)
        key = z if z.imag > 0 else np.conj(z)
        if key not in self.cache:
            self.cache[key] = complex(self._upper(np.array([key]))[0])
        val = self.cache[key]
        return val if z.imag > 0 else np.conj(val)

    def _base_real(self, x: float) -> complex:
        lo, hi = self.edges
        locs, w = self.measure.locations, self.measure.weights
        if self.kind == "additive":
            if lo - 1e-12 <= x <= hi + 1e-12:
                raise ValueError("real-axis evaluation requires z outside the support")
            def fval(zeta):
                return zeta - np.sum(w / (locs - zeta)) - x
            if x > hi:
                zeta = brentq(fval, self.edge_data["plus"].zeta, x,
                              xtol=1e-15, rtol=8.9e-16)
            else:
                zeta = brentq(fval, x, self.edge_data["minus"].zeta,
                              xtol=1e-15, rtol=8.9e-16)
            return complex(zeta - x)
        # multiplicative: invert F on the real monotone branch
        if lo - 1e-12 <= x <= hi + 1e-12 or x <= 0:
            raise ValueError("real-axis evaluation requires z > 0 outside the support")
        def F(xi):
            return 1.0 / xi + self.gamma * np.sum(w * locs / (1.0 - locs * xi)) - x
        if x > hi:
            xi_p = self.edge_data["plus"].zeta
            xi = brentq(F, 1e-300 + xi_p * 1e-9, xi_p, xtol=1e-15, rtol=8.9e-16)
        else:
            ed = self.edge_data["minus"]
            if ed.hard or ed.zeta is None:
                raise ValueError("no real branch below a hard edge")
            lo_b = ed.zeta * (1.0 + 1e-12) if ed.zeta > 0 else ed.zeta - 1.0
            hi_b = ed.zeta * 2.0 if ed.zeta > 0 else -1e-12
            while F(hi_b) > 0:
                hi_b = hi_b * 2.0 if ed.zeta > 0 else hi_b * 0.5
                if abs(hi_b) > 1e18 or abs(hi_b) < 1e-250:
                    raise SolverError("real-axis bracket not found")
            xi = brentq(F, lo_b, hi_b, xtol=1e-15, rtol=8.9e-16)
        return complex(-xi)

    def m(self, z: complex) -> complex:
        """Stieltjes transform of the spectral measure."""
        base = self.base(z)
        if self.kind == "additive":
            return base
        z = complex(z)
        return (base - (self.gamma - 1.0) / z) / self.gamma

    def m_grid(self, z) -> np.ndarray:
        base = self.base_grid(z)
        if self.kind == "additive":
            return base
        z = np.asarray(z, dtype=complex)
        return (base - (self.gamma - 1.0) / z) / self.gamma

    def frak_m(self, z: complex) -> complex:
        if self.kind != "multiplicative":
            raise ValueError("companion transform exists for multiplicative models")
        return self.base(z)

    # -- derivatives -----------------------------------------------------

    def base_with_derivatives(self, z) -> tuple:
        """(m, m', m'') arrays of the companion transform, one solve."""
        z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
        if z_arr.size < 4:
            base = np.array([self.base(zz) for zz in z_arr])
        else:
            base = self.base_grid(z_arr)
        if self.kind == "additive":
            d1, d2 = additive_derivs_from(self.measure, z_arr, base)
        else:
            d1, d2 = multiplicative_derivs_from(self.measure, self.gamma,
                                                z_arr, base)
        return base, d1, d2

    def m_derivatives(self, z) -> tuple:
        """(m', m'') for the additive model from the solved transform.

        m' = S2/(1 - S2) and m'' = 2 (1 + m')^3 S3 with
        S_k = sum_i w_i (a_i - z - m)^{-k}.
        """
        if self.kind != "additive":
            raise ValueError("use frak_m_derivatives for multiplicative models")
        _, mp, mpp = self.base_with_derivatives(z)
        if np.isscalar(z) or np.asarray(z).ndim == 0:
            return complex(mp[0]), complex(mpp[0])
        return mp, mpp

    def frak_m_derivatives(self, z) -> tuple:
        """(fm', fm'') for the multiplicative model.

        fm' = -fm / (z - gamma sum_i w_i s_i/(1 + s_i fm)^2) and
        fm'' = 2 fm'^2/fm + 2 gamma sum_i w_i s_i^2/(1 + s_i fm)^3 fm'^3/fm.
        """
        if self.kind != "multiplicative":
            raise ValueError("use m_derivatives for additive models")
        _, fmp, fmpp = self.base_with_derivatives(z)
        if np.isscalar(z) or np.asarray(z).ndim == 0:
            return complex(fmp[0]), complex(fmpp[0])
        return fmp, fmpp

    # -- density ---------------------------------------------------------

    def density_grid(self, E) -> np.ndarray:
        """Density of the spectral measure at real points, by continuation
        down to Im z = 1e-9.  Zero outside the support."""
        E = np.atleast_1d(np.asarray(E, dtype=float))
        lo, hi = self.edges
        out = np.zeros(E.shape)
        inside = (E >= lo - _DENSITY_ETA) & (E <= hi + _DENSITY_ETA)
        if self.kind == "multiplicative":
            inside &= np.abs(E) > 1e-12
        if inside.any():
            z = E[inside] + 1j * _DENSITY_ETA
            out[inside] = np.maximum(0.0, self.m_grid(z).imag) / np.pi
        return out

    def density_at(self, E: float) -> float:
        return float(self.density_grid(np.array([float(E)]))[0])

    # -- misc -------------------------------------------------------------

    def window_edge_distance(self, E0: float, half_width: float) -> float:
        """Distance from [E0 - hw, E0 + hw] to the nearest support edge."""
        lo, hi = self.edges
        d = min(abs(E0 - half_width - lo), abs(E0 + half_width - lo),
                abs(E0 - half_width - hi), abs(E0 + half_width - hi))
        if E0 - half_width <= lo <= E0 + half_width or \
           E0 - half_width <= hi <= E0 + half_width:
            return 0.0
        return d


def additive_model(mu: AtomicMeasure,
                   config: StieltjesSolverConfig | None = None) -> FreeConvolutionModel:
    config = config or StieltjesSolverConfig()
    lo, hi, data = edges_additive(mu)
    return FreeConvolutionModel("additive", mu, None, config, (lo, hi), data)


def multiplicative_model(mu_s: AtomicMeasure, gamma: float,
                         config: StieltjesSolverConfig | None = None) -> FreeConvolutionModel:
    config = config or StieltjesSolverConfig()
    lo, hi, data = edges_multiplicative(mu_s, gamma)
    return FreeConvolutionModel("multiplicative", mu_s, float(gamma), config,
                                (lo, hi), data)


# ---------------------------------------------------------------------------
# operation-style wrappers

def solve_m_additive(mu: AtomicMeasure, z,
                     config: StieltjesSolverConfig | None = None):
    """Pastur-equation transform at z (scalar or array), Im z != 0."""
    config = config or StieltjesSolverConfig()
    z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(z_arr.imag == 0):
        raise ValueError("solve_m_additive requires Im z != 0")
    out = np.empty(z_arr.shape, dtype=complex)
    up = z_arr.imag > 0
    if up.any():
        out[up] = _solve_additive_upper(mu.locations, mu.weights, z_arr[up], config)
    if (~up).any():
        out[~up] = np.conj(_solve_additive_upper(mu.locations, mu.weights,
                                                 np.conj(z_arr[~up]), config))
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return complex(out[0])
    return out


def solve_m_multiplicative(mu_s: AtomicMeasure, gamma: float, z,
                           config: StieltjesSolverConfig | None = None):
    """Returns (m, fm) at z for the multiplicative model, Im z != 0."""
    config = config or StieltjesSolverConfig()
    z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(z_arr.imag == 0):
        raise ValueError("solve_m_multiplicative requires Im z != 0")
    fm = np.empty(z_arr.shape, dtype=complex)
    up = z_arr.imag > 0
    if up.any():
        fm[up] = _solve_multiplicative_upper(mu_s.locations, mu_s.weights,
                                             gamma, z_arr[up], config)
    if (~up).any():
        fm[~up] = np.conj(_solve_multiplicative_upper(mu_s.locations, mu_s.weights,
                                                      gamma, np.conj(z_arr[~up]),
                                                      config))
    m = (fm - (gamma - 1.0) / z_arr) / gamma
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return complex(m[0]), complex(fm[0])
    return m, fm


def density_at(model: FreeConvolutionModel, E: float) -> float:
    return model.density_at(E)


def m_derivatives_additive(model: FreeConvolutionModel, z):
    return model.m_derivatives(z)


def m_derivative_multiplicative(model: FreeConvolutionModel, z):
    """First derivative of the companion transform fm."""
    return model.frak_m_derivatives(z)[0]
