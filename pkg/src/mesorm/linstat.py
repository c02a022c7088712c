"""Spectra of sampled matrices and mesoscopic linear eigenvalue statistics.

A sampled matrix enters as a dense self-adjoint array, leaves as a sorted
spectrum tagged with a digest of the generating recipe.  On top of that:
the linear statistic sum_i g((lambda_i - E0)/eta0), its deterministic
centering dim * int f rho, and the scaled local-law residual
|m_N - m| * N * Im z used as a sanity diagnostic for sampled ensembles.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._quad import graded_breaks, merge_breaks, panel_nodes, uniform_breaks
from .cltengine import ScaledTestFunction
from .freeconv import FreeConvolutionModel, SolverError
from .spectra import EnsembleSpec

__all__ = [
    "SpectrumSample",
    "spec_digest",
    "eigenvalues",
    "sample_spectrum",
    "save_spectrum",
    "load_spectrum",
    "linear_statistic",
    "centering_integral",
    "local_law_residual",
]


def spec_digest(spec: EnsembleSpec) -> str:
    """Stable hex digest of an ensemble recipe including its seed."""
    mu = spec.deformation
    parts = [
        spec.kind,
        str(spec.n),
        str(spec.m),
        str(spec.seed),
        str(spec.moments.beta),
        spec.moments.entry_law,
        repr(float(spec.moments.m2)),
        repr(float(spec.moments.W4)),
        mu.locations.tobytes().hex(),
        mu.weights.tobytes().hex(),
    ]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SpectrumSample:
    """Sorted spectrum of one sampled matrix."""

    eigenvalues: np.ndarray
    spec_hash: str = ""

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a nonempty 1-d array")
        if np.any(np.diff(lam) < 0):
            lam = np.sort(lam)
        object.__setattr__(self, "eigenvalues", lam)

    def __len__(self):
        return self.eigenvalues.size


def eigenvalues(matrix: np.ndarray, spec: EnsembleSpec | None = None,
                verify: bool = True) -> SpectrumSample:
    """Full spectrum of a dense self-adjoint matrix.

    With ``verify`` three eigenpairs (bottom, middle, top) are recomputed
    with their vectors and the residuals |Hv - lambda v| checked against
    1e-8 * ||H||.
    """
    matrix = np.asarray(matrix)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError("matrix must be square")
    herm_err = np.max(np.abs(matrix - matrix.conj().T))
    if herm_err > 1e-10 * max(1.0, np.max(np.abs(matrix))):
        raise ValueError(f"matrix is not self-adjoint (defect {herm_err:.2e})")
    lam = np.linalg.eigvalsh(matrix)
    if verify and n >= 2:
        scale = max(np.max(np.abs(lam)), 1e-300)
        for idx in {0, n // 2, n - 1}:
            w, v = scipy.linalg.eigh(matrix, subset_by_index=[idx, idx])
            res = np.linalg.norm(matrix @ v[:, 0] - w[0] * v[:, 0])
            if res > 1e-8 * scale * math.sqrt(n):
                raise SolverError(
                    f"eigenpair residual {res:.2e} at index {idx}")
    digest = spec_digest(spec) if spec is not None else ""
    return SpectrumSample(lam, digest)


def sample_spectrum(spec: EnsembleSpec, verify: bool = False) -> SpectrumSample:
    """Draw the matrix for ``spec`` and diagonalize it."""
    from .spectra import sample_matrix

    return eigenvalues(sample_matrix(spec), spec, verify=verify)


def save_spectrum(s: SpectrumSample, path) -> None:
    """Write a spectrum; ``.npz`` suffix selects binary, anything else CSV."""
    path = str(path)
    if path.endswith(".npz"):
        np.savez(path, eigenvalues=s.eigenvalues,
                 spec_hash=np.array(s.spec_hash))
        return
    with open(path, "w") as fh:
        fh.write(f"# spec_hash: {s.spec_hash}\n")
        for lam in s.eigenvalues:
            fh.write(f"{float(lam)!r}\n")


def load_spectrum(path) -> SpectrumSample:
    path = str(path)
    if path.endswith(".npz"):
        with np.load(path) as data:
            return SpectrumSample(data["eigenvalues"],
                                  str(data["spec_hash"]))
    digest = ""
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                if "spec_hash:" in line:
                    digest = line.split("spec_hash:", 1)[1].strip()
                continue
            if line:
                values.append(float(line))
    return SpectrumSample(np.array(values), digest)


def linear_statistic(s: SpectrumSample, tf: ScaledTestFunction) -> float:
    """sum_i g((lambda_i - E0)/eta0), summed with compensated arithmetic."""
    return math.fsum(tf.f(s.eigenvalues).tolist())


def centering_integral(model: FreeConvolutionModel, tf: ScaledTestFunction,
                       dim: int) -> float:
    """dim * int f(x) rho(x) dx over the window clipped to the support.

    Eigenvalue-count normalization: ``dim`` is the matrix dimension whose
    spectrum the density describes (N for deformed Wigner, M for sample
    covariance).  Panels are graded toward any support edge inside the
    window; the result is accepted once panel halving moves it by less
    than 1e-4 * eta0 * dim * max|g|.
    """
    lo, hi = tf.window
    lo = max(lo, model.edges[0])
    hi = min(hi, model.edges[1])
    if hi <= lo:
        return 0.0

    def quad(refine):
        width = min(tf.eta0 / 4.0, (hi - lo) / 16.0) / refine
        breaks = uniform_breaks(lo, hi, width)
        for e in model.edges:
            if lo <= e <= hi:
                fine = max(1e-12, 1e-6 * tf.eta0) / refine
                breaks = merge_breaks(breaks, graded_breaks(
                    lo, hi, e, fine=fine, max_width=width))
        x, w = panel_nodes(breaks, 16)
        rho = model.density_grid(x)
        return float(np.sum(w * tf.f(x) * rho))

    gmax = float(np.max(np.abs(tf.g(np.linspace(-tf.radius, tf.radius, 257)))))
    tol = 1e-4 * tf.eta0 * dim * max(gmax, 1e-300)
    v1 = quad(1)
    v2 = quad(2)
    if abs(dim * (v2 - v1)) > tol:
        raise SolverError(
            f"centering quadrature not converged: {dim * v1!r} vs {dim * v2!r}")
    return dim * v2


def local_law_residual(s: SpectrumSample, model: FreeConvolutionModel,
                       grid) -> float:
    """max over the grid of |m_N(z) - m(z)| * N * Im z.

    m_N is the empirical Stieltjes transform of the sample.  Purely
    diagnostic; thresholds live with the callers.
    """
    z = np.asarray(grid, dtype=complex).ravel()
    if np.any(z.imag <= 0):
        raise ValueError("residual grid must lie in the upper half plane")
    lam = s.eigenvalues
    m_emp = np.mean(1.0 / (lam[None, :] - z[:, None]), axis=1)
    m_fc = model.m_grid(z)
    return float(np.max(np.abs(m_emp - m_fc) * len(s) * z.imag))
