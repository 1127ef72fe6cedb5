"""Truncated Fock-basis backend: Gaussian to Fock conversion, Uhlmann fidelity
and Wigner functions (shot-noise units, x = a + a^dagger)."""

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln

from cv_erasure_code.core.exceptions import DimensionMismatchError, ProtocolError
from cv_erasure_code.core.logging import get_logger
from cv_erasure_code.fock.schemas import (
    DEFAULT_CUTOFF,
    TRUNCATION_WARN,
    FockDensityMatrix,
    PhaseSpaceGrid,
    WignerGrid,
)
from cv_erasure_code.gaussian.schemas import GaussianMixture, GaussianState

logger = get_logger(__name__)

CORE_EIGEN_CUTOFF = 1e-14
BRANCH_CHUNK = 2048
COV_DECIMALS = 10
MEAN_DECIMALS = 12


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def _check_cutoff(dim: int) -> None:
    if dim < 1:
        raise DimensionMismatchError(
            message=f"Fock cutoff must be >= 1, got {dim}",
            details=[{"field": "dim", "message": "cutoff too small", "code": "cutoff"}],
        )


def _wrap(rho: np.ndarray) -> FockDensityMatrix:
    rho = 0.5 * (rho + rho.conj().T)
    deficit = float(min(max(1.0 - np.trace(rho).real, 0.0), 1.0))
    warn = deficit > TRUNCATION_WARN
    if warn:
        logger.warning("Fock cutoff truncates the state", dim=rho.shape[0], trace_deficit=deficit)
    return FockDensityMatrix(entries=rho, trace_deficit=deficit, truncation_warning=warn)


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """e^(-|alpha|^2/2) alpha^n / sqrt(n!) for n < dim."""
    amps = np.empty(dim, dtype=complex)
    amps[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        amps[n] = amps[n - 1] * alpha / np.sqrt(n)
    return amps


def coherent_fock(alpha: complex, dim: int = DEFAULT_CUTOFF) -> FockDensityMatrix:
    """Projector onto |alpha>, truncated; the tail mass is reported as deficit."""
    _check_cutoff(dim)
    amps = coherent_amplitudes(complex(alpha), dim)
    return _wrap(np.outer(amps, amps.conj()))


def displacement_elements(alphas: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """
    Closed-form <m|D(alpha)|n> for a batch of amplitudes.

    Returns:
        np.ndarray: shape (B, rows, cols).
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    lo = np.minimum(m, n)
    k = np.abs(m - n)
    r2 = np.abs(alphas)[:, None, None] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        log_abs = np.log(np.abs(alphas))[:, None, None]
        log_pow = np.where(k == 0, 0.0, k * log_abs)
    log_mag = -0.5 * r2 + 0.5 * (gammaln(lo + 1) - gammaln(np.maximum(m, n) + 1)) + log_pow
    phase_angle = np.angle(alphas)[:, None, None]
    # m >= n carries alpha^k, m < n carries (-alpha*)^k
    phase = np.where(
        m >= n, np.exp(1j * k * phase_angle), (-1.0) ** k * np.exp(-1j * k * phase_angle)
    )
    lag = eval_genlaguerre(lo, k, r2)
    return np.exp(log_mag) * phase * lag


def squeezed_thermal_core(cov: np.ndarray, dim: int) -> np.ndarray:
    """
    Zero-mean single-mode Gaussian state with covariance ``cov`` in the Fock basis.

    The covariance is split into a thermal factor sqrt(det V) and a squeezing
    of strength r along the eigenvector of its smallest eigenvalue. Operators
    are exponentiated at twice ``dim`` and cropped.
    """
    work = 2 * dim
    nu = float(np.sqrt(max(np.linalg.det(cov), 1.0)))
    n_th = 0.5 * (nu - 1.0)
    evals, evecs = np.linalg.eigh(cov)
    r = 0.25 * np.log(max(evals[1], 1e-300) / max(evals[0], 1e-300))
    theta = float(np.arctan2(evecs[1, 0], evecs[0, 0]))

    k = np.arange(work)
    if n_th > 0.0:
        thermal = np.diag(n_th**k / (n_th + 1.0) ** (k + 1))
    else:
        thermal = np.zeros((work, work))
        thermal[0, 0] = 1.0
    if r > 1e-14:
        a = annihilation(work)
        squeeze = expm(0.5 * r * (a @ a - a.T @ a.T))
        thermal = squeeze @ thermal @ squeeze.T
    core = thermal[:dim, :dim].astype(complex)
    rot = np.exp(1j * theta * np.arange(dim))
    return rot[:, None] * core * rot.conj()[None, :]


def _core_vectors(cov: np.ndarray, dim: int) -> np.ndarray:
    """Columns sqrt(lambda_j) psi_j spanning the zero-mean core."""
    core = squeezed_thermal_core(cov, dim)
    evals, evecs = np.linalg.eigh(0.5 * (core + core.conj().T))
    keep = evals > CORE_EIGEN_CUTOFF * max(evals.max(), 1e-300)
    return evecs[:, keep] * np.sqrt(evals[keep])


def _displaced_sum(weights: np.ndarray, means: np.ndarray, cov: np.ndarray, dim: int) -> np.ndarray:
    """Sum_b w_b D(alpha_b) rho_core D(alpha_b)^dagger cropped to ``dim``."""
    work = 2 * dim
    vecs = _core_vectors(cov, work)
    alphas = 0.5 * (means[:, 0] + 1j * means[:, 1])
    rho = np.zeros((dim, dim), dtype=complex)
    for start in range(0, len(weights), BRANCH_CHUNK):
        stop = start + BRANCH_CHUNK
        disp = displacement_elements(alphas[start:stop], dim, work)
        cols = np.einsum("bmw,wj->bmj", disp, vecs) * np.sqrt(weights[start:stop])[:, None, None]
        flat = cols.transpose(1, 0, 2).reshape(dim, -1)
        rho += flat @ flat.conj().T
    return rho


def gaussian_to_fock(s: GaussianState, dim: int = DEFAULT_CUTOFF) -> FockDensityMatrix:
    """
    Single-mode Gaussian state as a truncated density matrix.

    The state is built as D(alpha) S(r, theta) rho_thermal S^dagger D^dagger
    with (alpha, r, theta, n_th) read off the mean and covariance.
    """
    _check_cutoff(dim)
    if s.num_modes != 1:
        raise DimensionMismatchError(
            message="Only single-mode states are converted to the Fock basis",
            details=[{"field": "state", "message": f"{s.num_modes} modes", "code": "num_modes"}],
        )
    rho = _displaced_sum(np.ones(1), s.mean[None, :], s.cov, dim)
    return _wrap(rho)


def _merge_identical(weights: np.ndarray, means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys, inverse = np.unique(np.round(means, MEAN_DECIMALS), axis=0, return_inverse=True)
    merged = np.zeros(len(keys))
    np.add.at(merged, inverse.ravel(), weights)
    return merged, keys


def mixture_to_fock(mix: GaussianMixture, dim: int = DEFAULT_CUTOFF) -> FockDensityMatrix:
    """
    Normalized weighted sum of the branch conversions.

    Branches sharing a covariance reuse one squeezed-thermal core; identical
    branches are merged first.
    """
    _check_cutoff(dim)
    if mix.num_modes != 1:
        raise DimensionMismatchError(message="mixture_to_fock expects single-mode branches")
    total = mix.total_mass
    if len(mix) == 0 or total <= 0.0:
        raise ProtocolError(
            message="Cannot convert a mixture without probability mass",
            details=[{"field": "mix", "message": "zero total weight", "code": "zero_mass"}],
        )
    weights = mix.weights / total
    cov_keys, groups = np.unique(
        np.round(mix.covs.reshape(len(mix), -1), COV_DECIMALS), axis=0, return_inverse=True
    )
    groups = groups.ravel()
    rho = np.zeros((dim, dim), dtype=complex)
    merged_count = 0
    for g in range(len(cov_keys)):
        sel = groups == g
        w, means = _merge_identical(weights[sel], mix.means[sel])
        keep = w > 0.0
        merged_count += int(keep.sum())
        rho += _displaced_sum(w[keep], means[keep], mix.covs[sel][0], dim)
    logger.debug(
        "Mixture converted to Fock basis",
        dim=dim,
        branches=len(mix),
        merged=merged_count,
        covariance_groups=len(cov_keys),
    )
    return _wrap(rho)


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(rho)
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T


def uhlmann_fidelity(a: FockDensityMatrix, b: FockDensityMatrix) -> float:
    """[Tr sqrt(sqrt(a) b sqrt(a))]^2 after renormalizing both to unit trace."""
    if a.dim != b.dim:
        raise DimensionMismatchError(
            message="Density matrices have different cutoffs",
            details=[{"field": "dim", "message": f"{a.dim} != {b.dim}", "code": "dim"}],
        )
    ra = a.normalized().entries
    rb = b.normalized().entries
    sa = _psd_sqrt(ra)
    inner = sa @ rb @ sa
    evals = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(min(np.sqrt(evals).sum() ** 2, 1.0))


def photon_number(rho: FockDensityMatrix) -> float:
    n = np.arange(rho.dim)
    return float(np.dot(n, np.diag(rho.entries).real) / rho.trace)


def wigner_from_fock(rho: FockDensityMatrix, grid: PhaseSpaceGrid | None = None) -> WignerGrid:
    """
    Wigner function in shot-noise units, normalized so that it integrates to
    the trace over the (x, p) plane.

    Uses the Laguerre expansion with alpha = (x + i p) / 2.
    """
    grid = grid or PhaseSpaceGrid()
    x, p = grid.x, grid.p
    xx, pp = np.meshgrid(x, p, indexing="ij")
    alpha = 0.5 * (xx + 1j * pp)
    b = 4.0 * np.abs(alpha) ** 2
    entries = rho.entries
    w = np.zeros_like(b)
    for m in range(rho.dim):
        if entries[m, m] != 0:
            w += np.real(entries[m, m]) * (-1) ** m * eval_genlaguerre(m, 0, b)
        for n in range(m + 1, rho.dim):
            if entries[m, n] == 0:
                continue
            coeff = (-1) ** m * np.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
            w += 2.0 * np.real(
                entries[m, n] * coeff * (2.0 * alpha) ** (n - m) * eval_genlaguerre(m, n - m, b)
            )
    # 2/pi in the alpha plane, d^2alpha = dx dp / 4
    values = w * np.exp(-0.5 * b) / (2.0 * np.pi)
    return WignerGrid(x=x, p=p, values=values)
