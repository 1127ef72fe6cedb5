from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from cv_erasure_code.erasure.schemas import RegionKind
from cv_erasure_code.fock.schemas import DEFAULT_CUTOFF, FockDensityMatrix, WignerGrid
from cv_erasure_code.tomography.schemas import QuadratureSamples, Reconstruction

SCENARIOS = ("fig2ad", "fig2e", "fig3", "fig4", "tomography")
ARMS = ("entangled", "vacuum")


def parse_grid(value) -> list[float]:
    """
    Parse ``start:stop:step`` (stop inclusive) or ``a,b,c`` into a list.

    Raises:
        ValueError: On malformed input or a non-positive step.
    """
    if isinstance(value, (list, tuple, np.ndarray)):
        return [float(v) for v in value]
    if isinstance(value, (int, float)):
        return [float(value)]
    text = str(value).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid '{text}' must look like start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"grid '{text}' needs step > 0 and stop >= start")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    return [float(p) for p in text.split(",") if p.strip()]


class ScenarioParams(BaseModel):
    """
    Flat scenario parameters. Defaults follow the reference experiment:
    alpha = 3 + 3i, squeezers 3.4 / 2.7 dB with 5 dB antisqueezing, a 2 dB
    two-mode resource for the theory arm, visibility 0.98, P_E = 0.25,
    threshold 0.8 (vacuum variance 1/2 convention, 0.8 sqrt(2) SNU) and a
    30-photon cutoff.
    """

    # signals
    alpha: complex = Field(default=3 + 3j, description="Signal-1 coherent amplitude")
    signal2: complex = Field(default=0j, description="Signal-2 coherent amplitude")
    output: int = Field(default=0, ge=0, le=1, description="Output whose fidelity is reported")

    # resource and imperfections
    model: Literal["theory", "experimental"] = "theory"
    ancilla: Literal["both", "entangled", "vacuum"] = "both"
    two_mode_db: float = Field(default=2.0, ge=0.0)
    squeeze_db_1: float = Field(default=3.4, ge=0.0)
    squeeze_db_2: float = Field(default=2.7, ge=0.0)
    antisqueeze_db: float = Field(default=5.0, ge=0.0)
    visibility: float = Field(default=0.98, ge=0.0, le=1.0)
    detection_efficiency: float = Field(default=1.0, ge=0.0, le=1.0)

    # deterministic correction
    erased_channel: int = Field(default=2, ge=1, le=4)
    gains: list[float] = Field(default_factory=lambda: parse_grid("0:4:0.01"))
    scan_gain: float = Field(default=1.97, ge=0.0, description="Gain of the phase-scan run")
    histogram_bins: int = Field(default=100, ge=2)

    # post-selection
    p_e: float = Field(default=0.25, ge=0.0, le=1.0)
    pe_grid: list[float] = Field(default_factory=lambda: parse_grid("0:0.5:0.05"))
    threshold: float = Field(default=0.8, ge=0.0)
    thresholds: list[float] = Field(default_factory=lambda: parse_grid("0.2:2.0:0.2"))
    threshold_units: Literal["snu", "vacuum_half"] = Field(
        default="vacuum_half", description="vacuum_half thresholds are scaled by sqrt(2) into SNU"
    )
    region_kind: RegionKind = RegionKind.CORNER_REJECT
    grid_cells: int = Field(default=201, ge=3)
    grid_half_width: float = Field(default=6.0, gt=0.0)
    fock_grid_cells: int = Field(default=61, ge=3)

    # Fock space and tomography
    cutoff: int = Field(default=DEFAULT_CUTOFF, ge=2)
    validation_cutoff: int = Field(default=45, ge=0, description="0 disables the check")
    wigner: bool = False
    n_samples: int = Field(default=220_000, ge=1)
    replicates: int = Field(default=1, ge=1)
    max_iters: int = Field(default=2000, ge=1)
    phase_bins: int = Field(default=64, ge=1)
    value_bins: int = Field(default=200, ge=2)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("gains", "pe_grid", "thresholds", mode="before")
    @classmethod
    def grid(cls, v):
        return parse_grid(v)

    @field_validator("pe_grid")
    @classmethod
    def probabilities(cls, v: list[float]) -> list[float]:
        if any(not 0.0 <= p <= 1.0 for p in v):
            raise ValueError("erasure probabilities must lie in [0, 1]")
        return v

    @field_validator("gains", "thresholds")
    @classmethod
    def non_negative(cls, v: list[float]) -> list[float]:
        if any(g < 0.0 for g in v):
            raise ValueError("values must be non-negative")
        return v

    def threshold_snu(self, threshold: float | None = None) -> float:
        """Threshold in SNU; ``vacuum_half`` values are scaled by sqrt(2)."""
        th = self.threshold if threshold is None else threshold
        return th * np.sqrt(2.0) if self.threshold_units == "vacuum_half" else th

    @property
    def arms(self) -> tuple[str, ...]:
        return ARMS if self.ancilla == "both" else (self.ancilla,)

    def echo(self) -> dict[str, str]:
        """Flat ``key -> value`` strings that parse back into the same params."""
        out = {}
        for key, value in self.model_dump(mode="python").items():
            if isinstance(value, list):
                out[key] = ",".join(repr(float(v)) for v in value)
            elif isinstance(value, complex):
                out[key] = repr(value).strip("()")
            elif isinstance(value, bool):
                out[key] = "true" if value else "false"
            elif isinstance(value, RegionKind):
                out[key] = value.value
            else:
                out[key] = str(value)
        return out


class ScenarioResult(BaseModel):
    """One row of a sweep."""

    scenario: str
    arm: str
    param_name: str
    param_value: float
    fidelity: float = Field(..., ge=0.0, le=1.0)
    success_prob: float | None = Field(default=None, ge=0.0, le=1.0)
    trace_deficit: float = Field(default=0.0, ge=0.0)
    seed: int
    wall_time: float = Field(default=0.0, ge=0.0, description="Seconds spent on the point")
    output2_fidelity: float | None = Field(default=None, ge=0.0, le=1.0)
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)

    @field_validator("fidelity", "success_prob", "output2_fidelity", mode="before")
    @classmethod
    def clip_roundoff(cls, v):
        # quadrature sums may land a few ulps outside [0, 1]
        if v is not None and -1e-9 < float(v) < 1.0 + 1e-9:
            return min(max(float(v), 0.0), 1.0)
        return v


class SyndromeHistogram(BaseModel):
    """
    Sampled marginal of one syndrome quadrature with its analytic density and
    the shot-noise (vacuum) density at the bin centres.
    """

    quadrature: Literal["x", "p"]
    edges: np.ndarray
    density: np.ndarray
    analytic_density: np.ndarray
    shot_noise_density: np.ndarray
    sample_mean: float
    sample_variance: float
    analytic_mean: float
    analytic_variance: float

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def rows(self):
        yield from zip(
            self.centers.tolist(),
            self.density.tolist(),
            self.analytic_density.tolist(),
            self.shot_noise_density.tolist(),
        )


class Fig2adReport(BaseModel):
    """Phase-scan homodyne traces and syndrome histograms of one deterministic run."""

    traces: dict[str, QuadratureSamples]
    histograms: dict[str, SyndromeHistogram]
    results: list[ScenarioResult]

    model_config = ConfigDict(arbitrary_types_allowed=True)


class Fig2eReport(BaseModel):
    results: list[ScenarioResult]
    best_gain: dict[str, float] = Field(default_factory=dict)
    best_fidelity: dict[str, float] = Field(default_factory=dict)


class Fig3Report(BaseModel):
    """Density-matrix snapshots of the P_E = 0.25 comparison."""

    snapshots: dict[str, FockDensityMatrix]
    fidelities: dict[str, float]
    analytic_fidelities: dict[str, float] = Field(default_factory=dict)
    validation_fidelities: dict[str, float] = Field(default_factory=dict)
    wigner: dict[str, WignerGrid] = Field(default_factory=dict)
    results: list[ScenarioResult]

    model_config = ConfigDict(arbitrary_types_allowed=True)


class Fig4Report(BaseModel):
    results: list[ScenarioResult]
    crossover_pe: dict[str, float | None] = Field(
        default_factory=dict, description="P_E where each arm meets the baseline"
    )


class TomographyReport(BaseModel):
    reconstructions: list[Reconstruction]
    fidelities: list[float]
    median_fidelity: float
    spread: float = Field(default=0.0, description="Max minus min over replicates")
    truth_trace_deficit: float = 0.0
    results: list[ScenarioResult]

    model_config = ConfigDict(arbitrary_types_allowed=True)


class CheckResult(BaseModel):
    """Outcome of one validation check."""

    name: str
    passed: bool
    value: float | None = None
    expected: str = ""
    observed: dict[str, float] = Field(default_factory=dict)
    note: str = ""
    elapsed: float = 0.0
