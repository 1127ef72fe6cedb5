# Keep sweeps small and logs quiet before any package imports
import os

os.environ["CVQEC_MAX_WORKERS"] = "2"
os.environ["CVQEC_LOG_LEVEL"] = "WARNING"

# Now import the rest
import pytest

from cv_erasure_code.core.config import Settings
from cv_erasure_code.erasure.schemas import CodeParams
from cv_erasure_code.experiments.schemas import ScenarioParams

ALPHA = 3 + 3j


@pytest.fixture
def settings(tmp_path) -> Settings:
    """Settings writing into a per-test directory."""
    return Settings(output_dir=tmp_path / "results", max_workers=2)


@pytest.fixture(scope="session")
def entangled_params() -> CodeParams:
    """Ideal 2 dB resource with the reference amplitude."""
    return CodeParams.pure(2.0, alpha=ALPHA)


@pytest.fixture(scope="session")
def vacuum_params() -> CodeParams:
    return CodeParams.vacuum_ancilla(alpha=ALPHA)


@pytest.fixture
def quick_params() -> ScenarioParams:
    """Scenario parameters with coarse grids so CLI and service tests stay fast."""
    return ScenarioParams(
        gains="0:4:0.5",
        pe_grid="0:0.5:0.25",
        thresholds="0.4,0.8",
        grid_cells=41,
        fock_grid_cells=21,
        cutoff=20,
        validation_cutoff=0,
        n_samples=2000,
        max_iters=30,
        phase_bins=16,
        value_bins=60,
    )
