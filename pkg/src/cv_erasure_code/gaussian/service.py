"""Gaussian-state engine: states, linear optics, erasure/loss maps, homodyne
conditioning and closed-form overlaps.

Conventions: x = a + a^dagger, p = -i(a - a^dagger), so the vacuum has unit
variance (shot-noise units) and a coherent state |alpha> has mean
(2 Re alpha, 2 Im alpha). Modes are interleaved (x1, p1, x2, p2, ...).
"""

from collections.abc import Sequence

import numpy as np
from scipy.linalg import block_diag

from cv_erasure_code.core.exceptions import DimensionMismatchError, UnphysicalStateError
from cv_erasure_code.core.logging import get_logger
from cv_erasure_code.gaussian.schemas import (
    AffineConditional,
    GaussianState,
    SymplecticTransform,
)

logger = get_logger(__name__)

DEGENERATE_VAR = 1e-12


def _check_mode(num_modes: int, mode: int) -> None:
    if not 0 <= mode < num_modes:
        raise DimensionMismatchError(
            message=f"Mode index {mode} out of range for {num_modes} modes",
            details=[{"field": "mode", "message": "index out of range", "code": "mode_range"}],
        )


def _block(mode: int) -> slice:
    return slice(2 * mode, 2 * mode + 2)


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def vacuum(num_modes: int = 1) -> GaussianState:
    return GaussianState(mean=np.zeros(2 * num_modes), cov=np.eye(2 * num_modes))


def coherent_mean(alpha: complex) -> np.ndarray:
    alpha = complex(alpha)
    return np.array([2.0 * alpha.real, 2.0 * alpha.imag])


def coherent_state(alpha: complex) -> GaussianState:
    """Coherent state |alpha>: mean (2 Re alpha, 2 Im alpha), identity covariance."""
    return GaussianState(mean=coherent_mean(alpha), cov=np.eye(2))


def squeezed_vacuum(
    squeeze_db: float, antisqueeze_db: float | None = None, angle: float = 0.0
) -> GaussianState:
    """
    Single-mode squeezed vacuum from measured squeezing levels.

    Args:
        squeeze_db (float): Noise reduction below shot noise, positive dB.
        antisqueeze_db (float, optional): Excess noise of the conjugate quadrature.
            Defaults to ``squeeze_db`` (pure state).
        angle (float): Rotation of the squeezed quadrature; 0 squeezes x.

    Returns:
        GaussianState: cov = R(angle) diag(10^(-s/10), 10^(a/10)) R(angle)^T.

    Raises:
        UnphysicalStateError: If the variance product is below 1.
    """
    if antisqueeze_db is None:
        antisqueeze_db = squeeze_db
    v_sq = 10.0 ** (-squeeze_db / 10.0)
    v_anti = 10.0 ** (antisqueeze_db / 10.0)
    if v_sq * v_anti < 1.0 - 1e-12:
        raise UnphysicalStateError(
            message="Squeezer violates the uncertainty principle",
            details=[
                {
                    "field": "antisqueeze_db",
                    "message": f"variance product {v_sq * v_anti:.4g} < 1",
                    "code": "unphysical_squeezer",
                }
            ],
        )
    rot = rotation_matrix(angle)
    cov = rot @ np.diag([v_sq, v_anti]) @ rot.T
    return GaussianState(mean=np.zeros(2), cov=0.5 * (cov + cov.T))


def tensor(states: Sequence[GaussianState]) -> GaussianState:
    """Product state; mode order follows the input order."""
    return GaussianState(
        mean=np.concatenate([s.mean for s in states]),
        cov=block_diag(*[s.cov for s in states]),
    )


def identity_transform(num_modes: int) -> SymplecticTransform:
    return SymplecticTransform(S=np.eye(2 * num_modes), d=np.zeros(2 * num_modes))


def displacement(d: Sequence[float]) -> SymplecticTransform:
    d = np.asarray(d, dtype=float)
    return SymplecticTransform(S=np.eye(d.shape[0]), d=d)


def _passive_block(u: complex) -> np.ndarray:
    """Quadrature action of a -> u a."""
    return np.array([[u.real, -u.imag], [u.imag, u.real]])


def beam_splitter(
    n_modes: int, i: int, j: int, transmittance: float, phase: float = 0.0
) -> SymplecticTransform:
    """
    Beam splitter on modes ``i`` and ``j``.

    The ladder operators transform as
    ``a_i -> t a_i - r e^{-i phase} a_j`` and ``a_j -> r e^{i phase} a_i + t a_j``
    with ``t = sqrt(T)``, ``r = sqrt(1 - T)``. Balanced means ``T = 1/2``.
    """
    _check_mode(n_modes, i)
    _check_mode(n_modes, j)
    if i == j:
        raise DimensionMismatchError(
            message="Beam splitter needs two distinct modes",
            details=[{"field": "j", "message": "i == j", "code": "same_mode"}],
        )
    if not 0.0 <= transmittance <= 1.0:
        raise UnphysicalStateError(message=f"Transmittance {transmittance} outside [0, 1]")
    t = np.sqrt(transmittance)
    r = np.sqrt(1.0 - transmittance)
    u = np.array([[t, -r * np.exp(-1j * phase)], [r * np.exp(1j * phase), t]])
    S = np.eye(2 * n_modes)
    for a, row in ((i, 0), (j, 1)):
        for b, col in ((i, 0), (j, 1)):
            S[_block(a), _block(b)] = _passive_block(complex(u[row, col]))
    return SymplecticTransform(S=S, d=np.zeros(2 * n_modes))


def phase_shift(n_modes: int, mode: int, angle: float) -> SymplecticTransform:
    """Rotation a -> a e^{-i angle}; rotates the phase-space picture by ``-angle``."""
    _check_mode(n_modes, mode)
    S = np.eye(2 * n_modes)
    S[_block(mode), _block(mode)] = _passive_block(np.exp(-1j * angle))
    return SymplecticTransform(S=S, d=np.zeros(2 * n_modes))


def mode_permutation(order: Sequence[int]) -> SymplecticTransform:
    """Transform whose output mode ``k`` is input mode ``order[k]``."""
    n = len(order)
    if sorted(order) != list(range(n)):
        raise DimensionMismatchError(message=f"{list(order)} is not a permutation of {n} modes")
    S = np.zeros((2 * n, 2 * n))
    for k, src in enumerate(order):
        S[_block(k), _block(src)] = np.eye(2)
    return SymplecticTransform(S=S, d=np.zeros(2 * n))


def apply(t: SymplecticTransform, s: GaussianState) -> GaussianState:
    """mean -> S mean + d, cov -> S cov S^T."""
    if t.num_modes != s.num_modes:
        raise DimensionMismatchError(
            message=f"Transform acts on {t.num_modes} modes, state has {s.num_modes}",
            details=[{"field": "state", "message": "mode count mismatch", "code": "dim"}],
        )
    cov = t.S @ s.cov @ t.S.T
    return GaussianState(mean=t.S @ s.mean + t.d, cov=0.5 * (cov + cov.T))


def loss_channel(s: GaussianState, mode: int, eta: float) -> GaussianState:
    """
    Pure-loss (attenuation) channel with transmission ``eta`` on one mode.

    The mode's mean block scales by sqrt(eta), its covariance block becomes
    eta V + (1 - eta) I and its cross-covariances scale by sqrt(eta).
    """
    _check_mode(s.num_modes, mode)
    if not 0.0 <= eta <= 1.0:
        raise UnphysicalStateError(
            message=f"Loss transmission {eta} outside [0, 1]",
            details=[{"field": "eta", "message": "must lie in [0, 1]", "code": "eta_range"}],
        )
    x = np.ones(2 * s.num_modes)
    x[_block(mode)] = np.sqrt(eta)
    noise = np.zeros(2 * s.num_modes)
    noise[_block(mode)] = 1.0 - eta
    cov = x[:, None] * s.cov * x[None, :] + np.diag(noise)
    return GaussianState(mean=x * s.mean, cov=cov)


def replace_with_vacuum(s: GaussianState, mode: int) -> GaussianState:
    """Trace out ``mode`` and put a vacuum back in the same position (erasure)."""
    _check_mode(s.num_modes, mode)
    mean = s.mean.copy()
    cov = s.cov.copy()
    mean[_block(mode)] = 0.0
    cov[_block(mode), :] = 0.0
    cov[:, _block(mode)] = 0.0
    cov[_block(mode), _block(mode)] = np.eye(2)
    return GaussianState(mean=mean, cov=cov)


def marginal(s: GaussianState, modes: Sequence[int]) -> GaussianState:
    for m in modes:
        _check_mode(s.num_modes, m)
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in modes]).astype(int)
    return GaussianState(mean=s.mean[idx], cov=s.cov[np.ix_(idx, idx)])


def quadrature_row(num_modes: int, mode: int, angle: float) -> np.ndarray:
    """Row vector selecting x cos(angle) + p sin(angle) on ``mode``."""
    q = np.zeros(2 * num_modes)
    q[2 * mode] = np.cos(angle)
    q[2 * mode + 1] = np.sin(angle)
    return q


def condition_on_quadratures(
    s: GaussianState, measurements: Sequence[tuple[int, float]]
) -> AffineConditional:
    """
    Jointly condition on ideal homodyne measurements of several modes.

    Args:
        s (GaussianState): State before detection.
        measurements: ``(mode, angle)`` pairs, one per detected mode.

    Returns:
        AffineConditional: Outcome distribution and the affine map to the
            state of the unmeasured modes (Schur complement update).
    """
    measured = [m for m, _ in measurements]
    if len(set(measured)) != len(measured):
        raise DimensionMismatchError(message="A mode can only be measured once")
    for m in measured:
        _check_mode(s.num_modes, m)
    kept = [m for m in range(s.num_modes) if m not in measured]
    if not kept:
        raise DimensionMismatchError(message="At least one mode must remain unmeasured")

    Q = np.stack([quadrature_row(s.num_modes, m, a) for m, a in measurements])
    keep_idx = np.concatenate([[2 * m, 2 * m + 1] for m in kept]).astype(int)

    outcome_mean = Q @ s.mean
    outcome_cov = Q @ s.cov @ Q.T
    cross = s.cov[keep_idx] @ Q.T

    degenerate = bool(np.linalg.eigvalsh(outcome_cov).min() < DEGENERATE_VAR)
    if degenerate:
        logger.warning(
            "Degenerate homodyne outcome variance, using pseudoinverse",
            measurements=list(measurements),
        )
        inv = np.linalg.pinv(outcome_cov, rcond=DEGENERATE_VAR, hermitian=True)
    else:
        inv = np.linalg.inv(outcome_cov)

    gain = cross @ inv
    cond_cov = s.cov[np.ix_(keep_idx, keep_idx)] - gain @ cross.T
    return AffineConditional(
        base_mean=s.mean[keep_idx],
        gain=gain,
        cond_cov=0.5 * (cond_cov + cond_cov.T),
        outcome_mean=outcome_mean,
        outcome_cov=0.5 * (outcome_cov + outcome_cov.T),
        modes=tuple(kept),
        degenerate=degenerate,
    )


def homodyne_condition(
    s: GaussianState, mode: int, angle: float
) -> tuple[float, float, AffineConditional]:
    """
    Ideal homodyne detection of x cos(angle) + p sin(angle) on one mode.

    Returns:
        tuple: (outcome mean, outcome variance, conditional map over the
            remaining modes). The measured mode is removed.
    """
    if s.num_modes < 2:
        raise DimensionMismatchError(
            message="Homodyne conditioning needs at least two modes",
            details=[{"field": "state", "message": "single-mode state", "code": "num_modes"}],
        )
    cond = condition_on_quadratures(s, [(mode, angle)])
    return float(cond.outcome_mean[0]), float(cond.outcome_cov[0, 0]), cond


def coherent_overlap(s: GaussianState, alpha: complex) -> float:
    """
    <alpha|rho|alpha> for a single-mode Gaussian state.

    Equals 2/sqrt(det(V + I)) exp(-delta^T (V + I)^-1 delta / 2) with
    delta = mean - (2 Re alpha, 2 Im alpha); for pure states it is the fidelity.
    """
    if s.num_modes != 1:
        raise DimensionMismatchError(message="coherent_overlap expects a single-mode state")
    return float(coherent_overlaps(s.mean[None, :], s.cov[None, :, :], alpha)[0])


def coherent_overlaps(means: np.ndarray, covs: np.ndarray, alpha: complex) -> np.ndarray:
    """Vectorised ``coherent_overlap`` over stacked single-mode branches."""
    m = covs + np.eye(2)
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    delta = means - coherent_mean(alpha)
    # 2x2 inverse written out to keep it batched
    quad = (
        m[:, 1, 1] * delta[:, 0] ** 2
        - (m[:, 0, 1] + m[:, 1, 0]) * delta[:, 0] * delta[:, 1]
        + m[:, 0, 0] * delta[:, 1] ** 2
    ) / det
    return 2.0 / np.sqrt(det) * np.exp(-0.5 * quad)
