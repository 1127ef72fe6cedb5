from collections.abc import Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from cv_erasure_code.fock.schemas import DEFAULT_CUTOFF, FockDensityMatrix


class QuadratureSample(BaseModel):
    """One homodyne outcome: local-oscillator phase and quadrature value (SNU)."""

    theta: float = Field(..., description="LO phase in radians")
    value: float = Field(..., description="Quadrature value in SNU")

    model_config = ConfigDict(frozen=True)


class QuadratureSamples(BaseModel):
    """A homodyne record stored column-wise."""

    theta: np.ndarray
    values: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("theta", "values", mode="before")
    @classmethod
    def as_array(cls, v):
        arr = np.array(v, dtype=float, copy=True).ravel()
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def check_lengths(self) -> "QuadratureSamples":
        if self.theta.shape != self.values.shape:
            raise ValueError("theta and values must have the same length")
        return self

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[QuadratureSample]:
        for t, v in zip(self.theta, self.values):
            yield QuadratureSample(theta=float(t), value=float(v))


class TomographyConfig(BaseModel):
    """
    Maximum-likelihood settings.

    Attributes:
        cutoff (int): Fock cutoff D of the reconstruction.
        max_iters (int): Iteration cap.
        tolerance (float): Stop once the mean log-likelihood gains less than this.
        phase_bins (int): Number of LO phase bins over [0, 2 pi).
        value_bins (int): Number of quadrature bins.
        value_range (float): Minimum half range of the value bins in SNU; widened
            to cover the data.
        quad_nodes (int): Gauss-Legendre nodes per value bin.
        min_dilution (float): Smallest dilution tried before the iteration stops.
    """

    cutoff: int = Field(default=DEFAULT_CUTOFF, ge=2)
    max_iters: int = Field(default=2000, ge=1)
    tolerance: float = Field(default=1e-9, gt=0.0)
    phase_bins: int = Field(default=64, ge=1)
    value_bins: int = Field(default=200, ge=2)
    value_range: float = Field(default=8.0, gt=0.0)
    quad_nodes: int = Field(default=8, ge=1)
    min_dilution: float = Field(default=1e-8, gt=0.0)

    model_config = ConfigDict(frozen=True, extra="forbid")


class Reconstruction(BaseModel):
    """Result of a MaxLik run."""

    rho: FockDensityMatrix
    iterations: int
    log_likelihood: list[float] = Field(default_factory=list, description="Mean LL per iterate")
    converged: bool = False
    degenerate: bool = Field(default=False, description="All samples fell into one bin")
    diluted_steps: int = 0
    value_half_range: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def monotone(self) -> bool:
        ll = np.asarray(self.log_likelihood)
        return bool(np.all(np.diff(ll) >= -1e-12))
