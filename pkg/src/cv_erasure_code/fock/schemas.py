import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

HERMITIAN_TOL = 1e-10
EIGEN_TOL = 1e-9
TRACE_TOL = 1e-9
TRUNCATION_WARN = 0.05
DEFAULT_CUTOFF = 30


class FockDensityMatrix(BaseModel):
    """
    Single-mode density matrix in the truncated Fock basis |0>, ..., |D-1>.

    Attributes:
        entries (np.ndarray): Complex D x D matrix.
        trace_deficit (float): Probability mass that fell beyond the cutoff
            when the matrix was produced. A normalized copy keeps the value.
        truncation_warning (bool): Set when the deficit exceeds 0.05.
    """

    entries: np.ndarray = Field(..., description="Complex D x D matrix")
    trace_deficit: float = Field(default=0.0, ge=0.0, le=1.0)
    truncation_warning: bool = False

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("entries", mode="before")
    @classmethod
    def as_array(cls, v):
        arr = np.array(v, dtype=complex, copy=True)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def check_density(self) -> "FockDensityMatrix":
        rho = self.entries
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise ValueError(f"entries must be square, got shape {rho.shape}")
        if np.abs(rho - rho.conj().T).max() > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        lowest = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        if lowest < -EIGEN_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lowest:.3g}")
        trace = float(np.trace(rho).real)
        if trace > 1.0 + TRACE_TOL:
            raise ValueError(f"trace {trace:.12f} exceeds 1")
        return self

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    @property
    def diagonal(self) -> np.ndarray:
        return np.clip(np.diag(self.entries).real, 0.0, None)

    def normalized(self) -> "FockDensityMatrix":
        """Unit-trace copy; the recorded truncation deficit is kept."""
        return FockDensityMatrix(
            entries=self.entries / self.trace,
            trace_deficit=self.trace_deficit,
            truncation_warning=self.truncation_warning,
        )

    def __repr__(self) -> str:
        return f"<FockDensityMatrix(dim={self.dim}, trace_deficit={self.trace_deficit:.3g})>"


class PhaseSpaceGrid(BaseModel):
    """Rectangular (x, p) grid in shot-noise units, endpoints included."""

    x_min: float = -8.0
    x_max: float = 8.0
    p_min: float = -8.0
    p_max: float = 8.0
    points: int = Field(default=161, ge=2, description="Points per axis")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_bounds(self) -> "PhaseSpaceGrid":
        if not (self.x_min < self.x_max and self.p_min < self.p_max):
            raise ValueError("grid bounds must be increasing")
        if not all(np.isfinite([self.x_min, self.x_max, self.p_min, self.p_max])):
            raise ValueError("grid bounds must be finite")
        return self

    @classmethod
    def centered(cls, center: tuple[float, float], half_width: float, points: int = 161):
        cx, cp = center
        return cls(
            x_min=cx - half_width,
            x_max=cx + half_width,
            p_min=cp - half_width,
            p_max=cp + half_width,
            points=points,
        )

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.points)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.points)


class WignerGrid(BaseModel):
    """Wigner function sampled on a grid; ``values[i, j]`` is W(x[i], p[j])."""

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("x", "p", "values", mode="before")
    @classmethod
    def as_array(cls, v):
        arr = np.array(v, dtype=float, copy=True)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def check_shape(self) -> "WignerGrid":
        if self.values.shape != (self.x.shape[0], self.p.shape[0]):
            raise ValueError("values must have shape (len(x), len(p))")
        return self

    def integral(self) -> float:
        """Trapezoidal integral over the grid."""
        return float(np.trapezoid(np.trapezoid(self.values, self.p, axis=1), self.x))

    def x_marginal(self) -> np.ndarray:
        return np.trapezoid(self.values, self.p, axis=1)

    def rows(self):
        """(x, p, w) triples in row-major order."""
        for i, xv in enumerate(self.x):
            for j, pv in enumerate(self.p):
                yield float(xv), float(pv), float(self.values[i, j])
