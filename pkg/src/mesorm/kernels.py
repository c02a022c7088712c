"""Two-point variance kernels and one-point bias densities.

Additive model, with g_i(z) = 1/(a_i - z - m(z)) and
I(z1, z2) = sum_i w_i g_i(z1) g_i(z2):

    K(z1,z2) = d1 d2 [ (m2 - 2/beta) I + (W4 - 1 - 2/beta) I^2 / 2 ]
               + (2/beta) d1 [ (1 - I)^{-1} d2 I ]

    b(z) = (2/beta - 1) (1 - I_s)^{-1} I_s' + (m2 - 2/beta) I_s'
           + (W4 - 1 - 2/beta) I_s I_s'

where I_s(z) = I(z, z) and all derivatives are evaluated through the
solved transform (1 + m') factors.  (1 - I)^{-1} is computed from the
subordination identity 1 + (m1 - m2)/(z1 - z2), and (1 - I_s)^{-1} = 1 + m'.

Sample covariance model, with fm the companion transform:

    K(z1,z2) = 2 [ fm1' fm2' / (fm1 - fm2)^2 - (z1 - z2)^{-2} ]
               + K4 gamma fm1' fm2' sum_i w_i s_i^2 /
                 ((1 + fm1 s_i)^2 (1 + fm2 s_i)^2)

    b(z) = ( fm'^2 / fm + K4 fm fm' ) sum_i w_i gamma s_i^2 / (1 + fm s_i)^3

The batch entry points take presolved transform values so that contour
quadratures never re-enter the fixed-point solver.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .freeconv import FreeConvolutionModel
from .spectra import MomentProfile

__all__ = [
    "KernelContext",
    "KernelPoleError",
    "eval_I",
    "eval_Is",
    "eval_I_derivatives",
    "eval_K_additive",
    "eval_b_additive",
    "eval_K_sample",
    "eval_b_sample",
    "b_sample_first_term_reduced",
]

_POLE_TOL = 1e-12


class KernelPoleError(ValueError):
    """Kernel evaluated too close to the z1 = z2 pole."""


@dataclass(frozen=True)
class KernelContext:
    """Model plus the entry moments entering the kernel coefficients."""

    model: FreeConvolutionModel
    beta: int = 1
    m2: float = 2.0
    W4: float = 3.0
    K4: float = 0.0

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ValueError("beta must be 1 or 2")

    @classmethod
    def from_profile(cls, model: FreeConvolutionModel,
                     profile: MomentProfile) -> "KernelContext":
        if model.kind == "additive":
            return cls(model, profile.beta, profile.m2, profile.W4)
        return cls(model, profile.beta, K4=profile.K4)

    # kernel coefficient shorthands; the complex Hermitian case is the
    # real case with m2 - 2 -> m2 - 1, W4 - 3 -> W4 - 2 and prefactor 1
    @property
    def c_diag(self) -> float:
        return self.m2 - 2.0 / self.beta

    @property
    def c_quartic(self) -> float:
        return self.W4 - 1.0 - 2.0 / self.beta

    @property
    def c_lead(self) -> float:
        return 2.0 / self.beta

    @property
    def gamma(self) -> float:
        return self.model.gamma


def _atoms(ctx):
    return ctx.model.measure.locations, ctx.model.measure.weights


# ---------------------------------------------------------------------------
# additive kernel pieces (batch forms take presolved transforms)

def _g_factors(locs, zpm):
    return 1.0 / (locs[None, :] - zpm[:, None])


def i_sums_batch(locs, w, z1, m1, z2, m2):
    """(I, S21, S12, S22) with S_jk = sum w g1^j g2^k."""
    g1 = _g_factors(locs, z1 + m1)
    g2 = _g_factors(locs, z2 + m2)
    I = (g1 * g2) @ w
    s21 = (g1 * g1 * g2) @ w
    s12 = (g1 * g2 * g2) @ w
    s22 = (g1 * g1 * g2 * g2) @ w
    return I, s21, s12, s22


def kernel_additive_batch(ctx, z1, m1, mp1, z2, m2, mp2, guard=_POLE_TOL):
    """Additive kernel on paired arrays of presolved points."""
    locs, w = _atoms(ctx)
    dz = z1 - z2
    if np.any(np.abs(dz) < guard):
        raise KernelPoleError("kernel requested within the pole guard of z1 = z2")
    I, s21, s12, s22 = i_sums_batch(locs, w, z1, m1, z2, m2)
    d1 = (1.0 + mp1) * s21
    d2 = (1.0 + mp2) * s12
    d12 = (1.0 + mp1) * (1.0 + mp2) * s22
    inv_one_minus_I = 1.0 + (m1 - m2) / dz
    return (ctx.c_diag * d12
            + ctx.c_quartic * (I * d12 + d1 * d2)
            + ctx.c_lead * (inv_one_minus_I * d12 + inv_one_minus_I ** 2 * d1 * d2))


def bias_additive_batch(ctx, z, m, mp):
    """Additive bias density b(z) on presolved points."""
    locs, w = _atoms(ctx)
    g = _g_factors(locs, z + m)
    i_s = (g * g) @ w
    s3 = (g * g * g) @ w
    isp = 2.0 * (1.0 + mp) * s3
    inv_one_minus_is = 1.0 + mp          # subordination identity
    return ((ctx.c_lead - 1.0) * inv_one_minus_is * isp
            + ctx.c_diag * isp
            + ctx.c_quartic * i_s * isp)


def kernel_sample_batch(ctx, z1, fm1, fmp1, z2, fm2, fmp2, guard=_POLE_TOL):
    """Sample covariance kernel on paired arrays of presolved points."""
    locs, w = _atoms(ctx)
    dz = z1 - z2
    if np.any(np.abs(dz) < guard):
        raise KernelPoleError("kernel requested within the pole guard of z1 = z2")
    dfm = fm1 - fm2
    if np.any(np.abs(dfm) < 1e-300):
        raise KernelPoleError("companion transforms coincide off the diagonal")
    one1 = 1.0 + locs[None, :] * fm1[:, None]
    one2 = 1.0 + locs[None, :] * fm2[:, None]
    t12 = (locs[None, :] ** 2 / (one1 ** 2 * one2 ** 2)) @ w
    return (2.0 * (fmp1 * fmp2 / dfm ** 2 - 1.0 / dz ** 2)
            + ctx.K4 * ctx.gamma * fmp1 * fmp2 * t12)


def bias_sample_batch(ctx, z, fm, fmp):
    locs, w = _atoms(ctx)
    one = 1.0 + locs[None, :] * fm[:, None]
    s = ctx.gamma * ((locs[None, :] ** 2 / one ** 3) @ w)
    return (fmp ** 2 / fm + ctx.K4 * fm * fmp) * s


# ---------------------------------------------------------------------------
# scalar operations

def _solved_pair(ctx, z1, z2):
    model = ctx.model
    if model.kind == "additive":
        m1, m2 = model.base(z1), model.base(z2)
        mp1 = model.m_derivatives(z1)[0]
        mp2 = model.m_derivatives(z2)[0]
    else:
        m1, m2 = model.base(z1), model.base(z2)
        mp1 = model.frak_m_derivatives(z1)[0]
        mp2 = model.frak_m_derivatives(z2)[0]
    return m1, mp1, m2, mp2


def eval_I(ctx: KernelContext, z1: complex, z2: complex) -> complex:
    """Direct-sum two-point function I(z1, z2) = sum_i w_i g_i(z1) g_i(z2)."""
    locs, w = _atoms(ctx)
    m1 = ctx.model.base(z1)
    m2 = ctx.model.base(z2)
    g1 = 1.0 / (locs - z1 - m1)
    g2 = 1.0 / (locs - z2 - m2)
    return complex(np.sum(w * g1 * g2))


def eval_Is(ctx: KernelContext, z: complex) -> complex:
    """Diagonal I_s(z) = sum_i w_i g_i(z)^2; satisfies |I_s| <= 1."""
    locs, w = _atoms(ctx)
    m = ctx.model.base(z)
    g = 1.0 / (locs - z - m)
    return complex(np.sum(w * g * g))


def eval_I_derivatives(ctx: KernelContext, z1: complex, z2: complex) -> tuple:
    """(d1 I, d2 I, d1 d2 I) by the direct atom sums."""
    locs, w = _atoms(ctx)
    m1, mp1, m2, mp2 = _solved_pair(ctx, z1, z2)
    g1 = 1.0 / (locs - z1 - m1)
    g2 = 1.0 / (locs - z2 - m2)
    d1 = (1.0 + mp1) * np.sum(w * g1 * g1 * g2)
    d2 = (1.0 + mp2) * np.sum(w * g1 * g2 * g2)
    d12 = (1.0 + mp1) * (1.0 + mp2) * np.sum(w * g1 * g1 * g2 * g2)
    return complex(d1), complex(d2), complex(d12)


def eval_K_additive(ctx: KernelContext, z1: complex, z2: complex) -> complex:
    if ctx.model.kind != "additive":
        raise ValueError("additive kernel needs an additive model")
    m1, mp1, m2, mp2 = _solved_pair(ctx, z1, z2)
    out = kernel_additive_batch(ctx, np.array([z1]), np.array([m1]), np.array([mp1]),
                                np.array([z2]), np.array([m2]), np.array([mp2]))
    return complex(out[0])


def eval_b_additive(ctx: KernelContext, z: complex) -> complex:
    if ctx.model.kind != "additive":
        raise ValueError("additive bias needs an additive model")
    m = ctx.model.base(z)
    mp = ctx.model.m_derivatives(z)[0]
    return complex(bias_additive_batch(ctx, np.array([z]), np.array([m]),
                                       np.array([mp]))[0])


def eval_K_sample(ctx: KernelContext, z1: complex, z2: complex) -> complex:
    if ctx.model.kind != "multiplicative":
        raise ValueError("sample kernel needs a multiplicative model")
    fm1, fmp1, fm2, fmp2 = _solved_pair(ctx, z1, z2)
    out = kernel_sample_batch(ctx, np.array([z1]), np.array([fm1]), np.array([fmp1]),
                              np.array([z2]), np.array([fm2]), np.array([fmp2]))
    return complex(out[0])


def eval_b_sample(ctx: KernelContext, z: complex) -> complex:
    if ctx.model.kind != "multiplicative":
        raise ValueError("sample bias needs a multiplicative model")
    fm = ctx.model.base(z)
    fmp = ctx.model.frak_m_derivatives(z)[0]
    return complex(bias_sample_batch(ctx, np.array([z]), np.array([fm]),
                                     np.array([fmp]))[0])


def b_sample_first_term_reduced(ctx: KernelContext, z: complex) -> complex:
    """First bias term via the transform reduction fm''/(2 fm') - fm'/fm.

    Equals (fm'^2/fm) sum_i w_i gamma s_i^2/(1 + fm s_i)^3; exposed as an
    independent route for validation.
    """
    fm = ctx.model.base(z)
    fmp, fmpp = ctx.model.frak_m_derivatives(z)
    return complex(fmpp / (2.0 * fmp) - fmp / fm)
