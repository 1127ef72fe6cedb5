from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from cv_erasure_code.experiments.schemas import ScenarioParams

CSV_HEADER = (
    "scenario",
    "arm",
    "param_name",
    "param_value",
    "fidelity",
    "success_prob",
    "trace_deficit",
    "seed",
)

SCENARIO_DESCRIPTIONS = {
    "fig2ad": "Phase scans of input, erased and corrected outputs; syndrome histograms",
    "fig2e": "Deterministic correction: fidelity versus gain, with and without entanglement",
    "fig3": "Density-matrix snapshots at P_E = 0.25: input, uncorrected, corrected arms",
    "fig4": "Post-selected fidelity versus erasure probability and threshold, with baseline",
    "tomography": "Homodyne sampling and MaxLik reconstruction of the corrected output",
}


class RunConfig(BaseModel):
    """
    Fully resolved command line request.

    Attributes:
        command (str): ``run``, ``list-scenarios`` or ``validate``.
        scenario (str, optional): Scenario id for ``run``.
        params (ScenarioParams): Scenario parameters after precedence resolution.
        overrides (dict): The flat key=value overrides that were applied.
        seed (int): Master seed, 64-bit.
        output_dir (Path): Where result files go.
        output_format (str): ``csv`` or ``json``.
        full (bool): ``validate --full`` adds the long tomography check.
    """

    command: Literal["run", "list-scenarios", "validate"] = "run"
    scenario: str | None = None
    params: ScenarioParams = Field(default_factory=ScenarioParams)
    overrides: dict[str, str] = Field(default_factory=dict)
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: Path = Path("results")
    output_format: Literal["csv", "json"] = "csv"
    full: bool = False

    model_config = ConfigDict(frozen=True)

    def echo(self) -> dict[str, str]:
        """Flat provenance record that ``parse_config`` reads back."""
        record = {
            "scenario": self.scenario or "",
            "seed": str(self.seed),
            "format": self.output_format,
        }
        record.update(self.params.echo())
        return record
