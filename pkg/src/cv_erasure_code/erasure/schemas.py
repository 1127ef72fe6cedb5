from enum import Enum
from itertools import product

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.stats import multivariate_normal

from cv_erasure_code.gaussian.schemas import GaussianMixture

NUM_CHANNELS = 4


# 1. Resource and code parameters
class SqueezerParams(BaseModel):
    """
    One single-mode squeezer feeding the EPR source.

    Attributes:
        squeeze_db (float): Noise reduction below shot noise (positive dB).
        antisqueeze_db (float, optional): Conjugate excess noise; defaults to the
            pure-state value ``squeeze_db``.
    """

    squeeze_db: float = Field(default=0.0, ge=0.0, description="Squeezing in dB")
    antisqueeze_db: float | None = Field(default=None, ge=0.0, description="Antisqueezing in dB")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def resolved_antisqueeze_db(self) -> float:
        return self.squeeze_db if self.antisqueeze_db is None else self.antisqueeze_db

    @model_validator(mode="after")
    def check_physical(self) -> "SqueezerParams":
        if self.resolved_antisqueeze_db < self.squeeze_db - 1e-12:
            raise ValueError("antisqueeze_db must be >= squeeze_db for a physical squeezer")
        return self


class CodeParams(BaseModel):
    """
    Everything needed to prepare, transmit and decode the four-mode code.

    Attributes:
        alpha (complex): Coherent amplitude of signal 1.
        signal2 (complex): Coherent amplitude of signal 2 (vacuum by default).
        squeezers (tuple): The two squeezers interfering into the EPR pair.
        visibility (float): Interference visibility of the encoding beam splitters.
        detection_efficiency (float): Efficiency of the syndrome homodyne detectors.
    """

    alpha: complex = Field(default=3 + 3j, description="Signal-1 coherent amplitude")
    signal2: complex = Field(default=0j, description="Signal-2 coherent amplitude")
    squeezers: tuple[SqueezerParams, SqueezerParams] = Field(
        default=(SqueezerParams(), SqueezerParams()), description="EPR squeezers"
    )
    visibility: float = Field(default=1.0, ge=0.0, le=1.0)
    detection_efficiency: float = Field(default=1.0, ge=0.0, le=1.0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @classmethod
    def pure(cls, two_mode_db: float, alpha: complex = 3 + 3j, **kwargs) -> "CodeParams":
        """Ideal resource: two pure squeezers at ``two_mode_db`` each."""
        sq = SqueezerParams(squeeze_db=two_mode_db)
        return cls(alpha=alpha, squeezers=(sq, sq), **kwargs)

    @classmethod
    def vacuum_ancilla(cls, alpha: complex = 3 + 3j, **kwargs) -> "CodeParams":
        """Entanglement-free variant: the EPR pair is replaced by vacua."""
        return cls.pure(0.0, alpha=alpha, **kwargs)


# 2. Channel events
class ErasurePattern(BaseModel):
    """Which of the four channels are blocked (channel k is ``blocked[k - 1]``)."""

    blocked: tuple[bool, bool, bool, bool] = Field(default=(False, False, False, False))

    model_config = ConfigDict(frozen=True)

    @classmethod
    def single(cls, channel: int) -> "ErasurePattern":
        if not 1 <= channel <= NUM_CHANNELS:
            raise ValueError(f"channel must be in 1..{NUM_CHANNELS}, got {channel}")
        return cls(blocked=tuple(k == channel - 1 for k in range(NUM_CHANNELS)))

    @classmethod
    def all_patterns(cls) -> list["ErasurePattern"]:
        """The sixteen patterns in a fixed order (binary count over channels 1..4)."""
        return [cls(blocked=bits) for bits in product((False, True), repeat=NUM_CHANNELS)]

    @property
    def num_erased(self) -> int:
        return sum(self.blocked)

    @property
    def erased_channels(self) -> tuple[int, ...]:
        return tuple(k + 1 for k, b in enumerate(self.blocked) if b)

    def probability(self, p_e: float) -> float:
        k = self.num_erased
        return p_e**k * (1.0 - p_e) ** (NUM_CHANNELS - k)

    @property
    def label(self) -> str:
        return "".join("x" if b else "-" for b in self.blocked)


class Syndrome(BaseModel):
    """Joint measurement outcome in shot-noise units."""

    x_m: float
    p_m: float

    model_config = ConfigDict(frozen=True)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.p_m])


class SyndromeDistribution(BaseModel):
    """Two-dimensional Gaussian law of (x_m, p_m)."""

    mean: np.ndarray
    cov: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("mean", "cov", mode="before")
    @classmethod
    def as_array(cls, v):
        arr = np.array(v, dtype=float)
        arr.flags.writeable = False
        return arr

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def pdf(self, points: np.ndarray) -> np.ndarray:
        return multivariate_normal(mean=self.mean, cov=self.cov, allow_singular=True).pdf(points)


# 3. Correction and post-selection controls
class FeedforwardGain(BaseModel):
    """Displacement gain G; quadratures are displaced by sqrt(G) times the outcome."""

    g: float = Field(default=0.0, ge=0.0)

    model_config = ConfigDict(frozen=True)

    @property
    def amplitude(self) -> float:
        return float(np.sqrt(self.g))


class FeedforwardSigns(BaseModel):
    """Per-pattern feedforward direction: which output is displaced and with which signs."""

    target: int = Field(..., ge=0, le=1, description="Output index (0 or 1)")
    sign_x: int = Field(..., description="+1 or -1")
    sign_p: int = Field(..., description="+1 or -1")

    model_config = ConfigDict(frozen=True)

    @field_validator("sign_x", "sign_p")
    @classmethod
    def unit_sign(cls, v: int) -> int:
        if v not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        return v


class RegionKind(str, Enum):
    CORNER_REJECT = "corner_reject"
    BOX_ACCEPT = "box_accept"


class AcceptanceRule(BaseModel):
    """
    Post-selection rule on the syndrome plane (threshold in SNU).

    ``corner_reject`` discards only when both |x_m| and |p_m| exceed the
    threshold; ``box_accept`` keeps only outcomes with both inside it.
    """

    threshold: float = Field(default=0.8, ge=0.0)
    region_kind: RegionKind = Field(default=RegionKind.CORNER_REJECT)

    model_config = ConfigDict(frozen=True)

    def accepts(self, x_m: np.ndarray, p_m: np.ndarray) -> np.ndarray:
        inside_x = np.abs(x_m) <= self.threshold
        inside_p = np.abs(p_m) <= self.threshold
        if self.region_kind is RegionKind.BOX_ACCEPT:
            return inside_x & inside_p
        return inside_x | inside_p

    def accepted_fraction(
        self, x_edges: tuple[np.ndarray, np.ndarray], p_edges: tuple[np.ndarray, np.ndarray]
    ) -> np.ndarray:
        """
        Exact accepted area fraction of rectangular cells.

        Args:
            x_edges: (lower, upper) x edges of the cells, broadcastable.
            p_edges: (lower, upper) p edges of the cells, broadcastable.
        """
        fx = _inside_fraction(*x_edges, self.threshold)
        fp = _inside_fraction(*p_edges, self.threshold)
        if self.region_kind is RegionKind.BOX_ACCEPT:
            return fx * fp
        return 1.0 - (1.0 - fx) * (1.0 - fp)


def _inside_fraction(lo: np.ndarray, hi: np.ndarray, th: float) -> np.ndarray:
    overlap = np.clip(np.minimum(hi, th) - np.maximum(lo, -th), 0.0, None)
    return overlap / (hi - lo)


class QuadratureGrid(BaseModel):
    """
    Midpoint grid over the syndrome plane.

    The grid is centred on each pattern's syndrome mean. Its half width is
    ``half_width`` SNU, widened to ``min_sigmas`` standard deviations when
    the distribution is broader and narrowed to ``max_sigmas`` when it is
    much sharper.
    """

    cells: int = Field(default=201, ge=3, description="Cells per axis")
    half_width: float = Field(default=6.0, gt=0.0, description="Half width in SNU")
    min_sigmas: float = Field(default=5.0, gt=0.0)
    max_sigmas: float = Field(default=8.0, gt=0.0)

    model_config = ConfigDict(frozen=True)

    def axis_half_width(self, sigma: float) -> float:
        return max(self.min_sigmas * sigma, min(self.half_width, self.max_sigmas * sigma))


# 4. Protocol outputs
class PatternAcceptance(BaseModel):
    """
    Post-selected output of one erasure pattern, independent of P_E.

    ``branches`` carries one Gaussian per accepted syndrome cell with weight
    equal to the accepted probability of that cell within the pattern.
    """

    pattern: ErasurePattern
    syndrome: SyndromeDistribution
    branches: GaussianMixture
    accepted_mass: float = Field(..., ge=0.0)
    grid_mass: float = Field(..., ge=0.0, description="Grid quadrature of the full pdf")
    widened: bool = False

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class PatternTable(BaseModel):
    """All sixteen pattern acceptances for one (params, rule, grid) combination."""

    entries: list[PatternAcceptance]
    output: int = Field(default=0, ge=0, le=1)

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def success_probability(self, p_e: float) -> float:
        return float(sum(e.pattern.probability(p_e) * e.accepted_mass for e in self.entries))

    def mixture(self, p_e: float) -> GaussianMixture:
        return GaussianMixture.concat(
            [e.branches.scaled(e.pattern.probability(p_e)) for e in self.entries]
        )
