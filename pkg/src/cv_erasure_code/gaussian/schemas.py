from collections.abc import Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-9
SYMPLECTIC_TOL = 1e-10


def _frozen_array(v, dtype=float) -> np.ndarray:
    arr = np.array(v, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def symplectic_form(num_modes: int) -> np.ndarray:
    """Standard symplectic form for the interleaved (x1, p1, ..., xN, pN) ordering."""
    return np.kron(np.eye(num_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a covariance matrix, ascending, one per mode."""
    n = cov.shape[0] // 2
    omega = symplectic_form(n)
    eig = np.abs(np.linalg.eigvals(1j * omega @ cov))
    # eigenvalues come in +/- pairs
    return np.sort(eig)[::2]


def _scale(matrix: np.ndarray) -> float:
    return max(1.0, float(np.abs(matrix).max(initial=0.0)))


class GaussianState(BaseModel):
    """
    N-mode Gaussian state in shot-noise units (vacuum variance 1).

    Attributes:
        mean (np.ndarray): First moments, ordered x1, p1, ..., xN, pN.
        cov (np.ndarray): Symmetric 2N x 2N covariance matrix.
    """

    mean: np.ndarray = Field(..., description="Quadrature means (x1, p1, ...)")
    cov: np.ndarray = Field(..., description="Quadrature covariance matrix")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("mean", "cov", mode="before")
    @classmethod
    def as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def check_physical(self) -> "GaussianState":
        dim = self.mean.shape[0]
        if self.mean.ndim != 1 or dim == 0 or dim % 2:
            raise ValueError("mean must be a non-empty vector of even length")
        if self.cov.shape != (dim, dim):
            raise ValueError(f"cov must be {dim}x{dim}, got {self.cov.shape}")
        scale = _scale(self.cov)
        if not np.allclose(self.cov, self.cov.T, rtol=0.0, atol=SYMMETRY_TOL * scale):
            raise ValueError("cov is not symmetric")
        nu = symplectic_eigenvalues(self.cov)
        if nu[0] < 1.0 - PHYSICALITY_TOL * scale:
            raise ValueError(
                f"cov violates the uncertainty principle (min symplectic eigenvalue {nu[0]:.6g})"
            )
        return self

    @property
    def num_modes(self) -> int:
        return self.mean.shape[0] // 2

    @property
    def symplectic_eigenvalues(self) -> np.ndarray:
        return symplectic_eigenvalues(self.cov)

    @property
    def purity(self) -> float:
        """Tr(rho^2) = 1/sqrt(det V) in shot-noise units."""
        return float(1.0 / np.sqrt(np.linalg.det(self.cov)))

    def __repr__(self) -> str:
        return f"<GaussianState(num_modes={self.num_modes}, mean={self.mean.round(4).tolist()})>"


class SymplecticTransform(BaseModel):
    """
    Linear-optics map acting on quadratures: r -> S r + d.

    Attributes:
        S (np.ndarray): 2N x 2N symplectic matrix.
        d (np.ndarray): Displacement vector of length 2N.
    """

    S: np.ndarray = Field(..., description="Symplectic matrix")
    d: np.ndarray = Field(..., description="Displacement vector")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("S", "d", mode="before")
    @classmethod
    def as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def check_symplectic(self) -> "SymplecticTransform":
        dim = self.d.shape[0]
        if self.S.shape != (dim, dim) or dim % 2:
            raise ValueError(f"S must be {dim}x{dim} with even dimension")
        omega = symplectic_form(dim // 2)
        residual = np.abs(self.S @ omega @ self.S.T - omega).max()
        if residual >= SYMPLECTIC_TOL:
            raise ValueError(f"S is not symplectic (residual {residual:.3g})")
        return self

    @property
    def num_modes(self) -> int:
        return self.d.shape[0] // 2

    def then(self, other: "SymplecticTransform") -> "SymplecticTransform":
        """Compose: apply ``self`` first, then ``other``."""
        return SymplecticTransform(S=other.S @ self.S, d=other.S @ self.d + other.d)

    def inverse(self) -> "SymplecticTransform":
        s_inv = np.linalg.inv(self.S)
        return SymplecticTransform(S=s_inv, d=-s_inv @ self.d)


class AffineConditional(BaseModel):
    """
    Post-measurement state of the unmeasured modes as an affine function of
    the outcomes.

    For outcomes ``o`` the remaining modes have mean
    ``base_mean + gain @ (o - outcome_mean)`` and covariance ``cond_cov``,
    which does not depend on ``o``. The outcomes themselves are Gaussian with
    ``outcome_mean`` and ``outcome_cov``.
    """

    base_mean: np.ndarray
    gain: np.ndarray = Field(..., description="2M x k outcome coefficients")
    cond_cov: np.ndarray
    outcome_mean: np.ndarray
    outcome_cov: np.ndarray
    modes: tuple[int, ...] = Field(..., description="Original indices of kept modes")
    degenerate: bool = Field(default=False, description="Pseudoinverse was needed")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("base_mean", "gain", "cond_cov", "outcome_mean", "outcome_cov", mode="before")
    @classmethod
    def as_array(cls, v):
        return _frozen_array(v)

    @property
    def gain_vector(self) -> np.ndarray:
        """Gain column for a single measured quadrature."""
        return self.gain[:, 0]

    def means_at(self, outcomes: np.ndarray) -> np.ndarray:
        """Conditional means for a batch of outcomes, shape (B, k) -> (B, 2M)."""
        delta = np.atleast_2d(outcomes) - self.outcome_mean
        return self.base_mean + delta @ self.gain.T

    def state_at(self, outcome: Sequence[float]) -> GaussianState:
        return GaussianState(mean=self.means_at(np.asarray(outcome, float))[0], cov=self.cond_cov)

    def averaged(self) -> GaussianState:
        """Unconditional state of the kept modes (law of total covariance)."""
        cov = self.cond_cov + self.gain @ self.outcome_cov @ self.gain.T
        return GaussianState(mean=self.base_mean, cov=0.5 * (cov + cov.T))

    def select(self, positions: Sequence[int]) -> "AffineConditional":
        """Restrict to a subset of kept modes (positions within ``modes``)."""
        idx = np.concatenate([[2 * p, 2 * p + 1] for p in positions]).astype(int)
        return AffineConditional(
            base_mean=self.base_mean[idx],
            gain=self.gain[idx],
            cond_cov=self.cond_cov[np.ix_(idx, idx)],
            outcome_mean=self.outcome_mean,
            outcome_cov=self.outcome_cov,
            modes=tuple(self.modes[p] for p in positions),
            degenerate=self.degenerate,
        )


class GaussianMixture(BaseModel):
    """
    Weighted set of Gaussian branches stored column-wise.

    Weights need not sum to one: their total is the probability mass that the
    mixture carries (e.g. the success probability after post-selection).
    Branches are kept as stacked arrays because post-selection produces
    hundreds of thousands of them.
    """

    weights: np.ndarray = Field(..., description="Branch weights, shape (B,)")
    means: np.ndarray = Field(..., description="Branch means, shape (B, 2N)")
    covs: np.ndarray = Field(..., description="Branch covariances, shape (B, 2N, 2N)")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("weights", "means", "covs", mode="before")
    @classmethod
    def as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def check_branches(self) -> "GaussianMixture":
        b = self.weights.shape[0]
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")
        if self.means.ndim != 2 or self.means.shape[0] != b:
            raise ValueError("means must have shape (B, 2N)")
        dim = self.means.shape[1]
        if self.covs.shape != (b, dim, dim):
            raise ValueError("covs must have shape (B, 2N, 2N)")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        if self.weights.sum() > 1.0 + 1e-9:
            raise ValueError("total mixture mass exceeds 1")
        return self

    @classmethod
    def from_branches(cls, branches: Sequence[tuple[float, GaussianState]]) -> "GaussianMixture":
        return cls(
            weights=[w for w, _ in branches],
            means=np.stack([s.mean for _, s in branches]),
            covs=np.stack([s.cov for _, s in branches]),
        )

    @classmethod
    def empty(cls, num_modes: int = 1) -> "GaussianMixture":
        dim = 2 * num_modes
        return cls(weights=np.zeros(0), means=np.zeros((0, dim)), covs=np.zeros((0, dim, dim)))

    @classmethod
    def concat(cls, parts: Sequence["GaussianMixture"]) -> "GaussianMixture":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            weights=np.concatenate([p.weights for p in parts]),
            means=np.concatenate([p.means for p in parts]),
            covs=np.concatenate([p.covs for p in parts]),
        )

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def num_modes(self) -> int:
        return self.means.shape[1] // 2

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def branches(self) -> Iterator[tuple[float, GaussianState]]:
        for w, m, c in zip(self.weights, self.means, self.covs):
            yield float(w), GaussianState(mean=m, cov=c)

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(weights=self.weights * factor, means=self.means, covs=self.covs)

    def normalized(self) -> "GaussianMixture":
        return self.scaled(1.0 / self.total_mass)

    def marginal(self, modes: Sequence[int]) -> "GaussianMixture":
        idx = np.concatenate([[2 * m, 2 * m + 1] for m in modes]).astype(int)
        return GaussianMixture(
            weights=self.weights,
            means=self.means[:, idx],
            covs=self.covs[:, idx][:, :, idx],
        )
