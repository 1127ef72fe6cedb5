"""In-process acceptance and property checks behind ``cv-erasure-code validate``."""

import time
from collections.abc import Callable, Iterator
from functools import lru_cache

import numpy as np

from cv_erasure_code.core.logging import bind_run_context, get_logger, get_tracer
from cv_erasure_code.erasure.schemas import AcceptanceRule, CodeParams, QuadratureGrid
from cv_erasure_code.erasure.service import (
    deterministic_fidelity,
    mixture_fidelity_to_coherent,
    probabilistic_protocol,
    single_channel_baseline,
    single_channel_mixture,
    unity_gain,
)
from cv_erasure_code.experiments.schemas import ARMS, CheckResult, Fig4Report, ScenarioParams
from cv_erasure_code.experiments.service import ScenarioService
from cv_erasure_code.fock.service import (
    coherent_fock,
    gaussian_to_fock,
    mixture_to_fock,
    uhlmann_fidelity,
)
from cv_erasure_code.gaussian.schemas import GaussianState
from cv_erasure_code.gaussian.service import (
    apply,
    beam_splitter,
    coherent_overlap,
    condition_on_quadratures,
    loss_channel,
    marginal,
    squeezed_vacuum,
    tensor,
)
from cv_erasure_code.tomography.service import sample_homodyne

logger = get_logger(__name__)

ALPHA = 3 + 3j
GAIN_GRID = np.round(np.arange(0.0, 4.0 + 1e-9, 0.01), 10)

Check = Callable[[], CheckResult]


def _check(name: str, passed: bool, value: float | None, expected: str) -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), value=value, expected=expected)


def baseline_fock() -> CheckResult:
    exact = single_channel_baseline(ALPHA, 0.25)
    mix = single_channel_mixture(ALPHA, 0.25)
    errors = []
    for dim in (30, 45):
        rho = mixture_to_fock(mix, dim)
        errors.append(abs(uhlmann_fidelity(coherent_fock(ALPHA, dim), rho) - exact))
    return _check(
        "baseline_fock",
        errors[0] < 5e-3 and errors[1] < 1e-6,
        errors[1],
        "|F - 0.75| < 5e-3 at cutoff 30 and < 1e-6 at cutoff 45",
    )


def perfect_correction() -> CheckResult:
    params = CodeParams.pure(60.0, alpha=ALPHA, signal2=1 - 2j)
    worst = min(
        max(
            deterministic_fidelity(params, ch, g, output=0 if ch <= 2 else 1)
            for g in (1.9, unity_gain(), 2.1)
        )
        for ch in range(1, 5)
    )
    return _check("perfect_correction", worst >= 0.999, worst, ">= 0.999 for every channel")


def classical_benchmark() -> CheckResult:
    """
    The 1/2 bound holds for the vacuum arm at unity gain. Over the whole sweep
    a reduced gain trades added noise against a mean offset and beats 1/2 for
    a known amplitude; that peak is reported in ``observed`` and ``note``.
    """
    vacuum_params = CodeParams.vacuum_ancilla(alpha=ALPHA)
    vac = [deterministic_fidelity(vacuum_params, 2, g) for g in GAIN_GRID]
    ent = [deterministic_fidelity(CodeParams.pure(2.0, alpha=ALPHA), 2, g) for g in GAIN_GRID]
    unity = int(np.argmin(np.abs(GAIN_GRID - unity_gain())))
    vac_best, ent_best = int(np.argmax(vac)), int(np.argmax(ent))
    passed = (
        vac[unity] <= 0.501 and ent[ent_best] > 0.52 and abs(GAIN_GRID[ent_best] - 1.97) <= 0.5
    )
    note = ""
    if vac[vac_best] > 0.501:
        note = (
            f"vacuum arm peaks at {vac[vac_best]:.4f} (G = {GAIN_GRID[vac_best]:.2f}) for the "
            "fixed amplitude; the 0.5 bound is enforced at unity gain"
        )
        logger.warning("Vacuum arm exceeds 1/2 below unity gain", peak=vac[vac_best])
    return CheckResult(
        name="classical_benchmark",
        passed=bool(passed),
        value=ent[ent_best],
        expected="vacuum arm <= 0.501 at unity gain; 2 dB arm peak > 0.52 within 0.5 of G = 1.97",
        observed={
            "vacuum_unity": vac[unity],
            "vacuum_max": vac[vac_best],
            "vacuum_max_gain": float(GAIN_GRID[vac_best]),
            "entangled_max": ent[ent_best],
            "entangled_max_gain": float(GAIN_GRID[ent_best]),
        },
        note=note,
    )


@lru_cache(maxsize=1)
def default_fig4() -> Fig4Report:
    """P_E sweep of the default scenario parameters, shared by the fig4 checks."""
    return ScenarioService(ScenarioParams()).run_fig4(thresholds=[])


def probabilistic_ordering() -> CheckResult:
    report = default_fig4()
    p_e = ScenarioParams().p_e
    fids = {
        r.arm: r.fidelity
        for r in report.results
        if r.param_name == "p_e" and np.isclose(r.param_value, p_e) and r.arm in ARMS
    }
    ent, vac = fids["entangled"], fids["vacuum"]
    passed = ent > vac > 0.75 and 0.77 <= ent <= 0.90 and 0.75 <= vac <= 0.82
    return _check("probabilistic_ordering", passed, ent, "F_ent > F_vac > 0.75, bracketed")


def vacuum_crossover() -> CheckResult:
    x = default_fig4().crossover_pe.get("vacuum")
    return _check(
        "vacuum_crossover", x is not None and 0.20 <= x <= 0.35, x, "crossover P_E in [0.20, 0.35]"
    )


def symplectic_invariance() -> CheckResult:
    state = tensor([squeezed_vacuum(3.0), squeezed_vacuum(1.0, 4.0, 0.3)])
    state = loss_channel(state, 0, 0.7)
    out = apply(beam_splitter(2, 0, 1, 0.3, 0.4), state)
    err = float(np.abs(out.symplectic_eigenvalues - state.symplectic_eigenvalues).max())
    return _check(
        "symplectic_invariance", err < 1e-9, err, "eigenvalues unchanged by passive optics"
    )


def conditioning_total_law() -> CheckResult:
    state = apply(beam_splitter(2, 0, 1, 0.5), tensor([squeezed_vacuum(4.0), squeezed_vacuum(2.0)]))
    cond = condition_on_quadratures(state, [(1, 0.0)])
    averaged = cond.averaged()
    kept = marginal(state, [0])
    err = float(np.abs(averaged.cov - kept.cov).max() + np.abs(averaged.mean - kept.mean).max())
    return _check("conditioning_total_law", err < 1e-10, err, "average over outcomes = marginal")


def fock_cross_oracle() -> CheckResult:
    state = apply(beam_splitter(2, 0, 1, 0.5), tensor([squeezed_vacuum(3.0), squeezed_vacuum(3.0)]))
    state = marginal(state, [0])
    shifted = GaussianState(mean=[1.0, -0.6], cov=state.cov)
    alpha = 0.4 - 0.2j
    err = abs(
        uhlmann_fidelity(coherent_fock(alpha, 40), gaussian_to_fock(shifted, 40))
        - coherent_overlap(shifted, alpha)
    )
    return _check("fock_cross_oracle", err < 1e-4, err, "Uhlmann = coherent overlap within 1e-4")


def grid_convergence() -> CheckResult:
    params = CodeParams.pure(2.0, alpha=ALPHA)
    rule = AcceptanceRule(threshold=ScenarioParams().threshold_snu())
    fids = []
    for cells in (201, 301):
        mix, _ = probabilistic_protocol(params, 0.25, rule, QuadratureGrid(cells=cells))
        fids.append(mixture_fidelity_to_coherent(mix, ALPHA))
    err = abs(fids[0] - fids[1])
    return _check("grid_convergence", err < 1e-3, err, "201 vs 301 cells within 1e-3")


def seeded_reproducibility() -> CheckResult:
    mix = single_channel_mixture(ALPHA, 0.25)
    a = sample_homodyne(mix, 2000, seed=11)
    b = sample_homodyne(mix, 2000, seed=11)
    same = np.array_equal(a.values, b.values) and np.array_equal(a.theta, b.theta)
    return _check("seeded_reproducibility", same, None, "identical samples for a fixed seed")


def tomography_end_to_end() -> CheckResult:
    report = ScenarioService(ScenarioParams(replicates=1)).run_tomography_demo()
    recon = report.reconstructions[0]
    passed = report.median_fidelity > 0.97 and recon.monotone
    return _check(
        "tomography_end_to_end",
        passed,
        report.median_fidelity,
        "fidelity > 0.97 with a monotone log-likelihood",
    )


CHECKS: list[tuple[str, Check]] = [
    ("baseline_fock", baseline_fock),
    ("perfect_correction", perfect_correction),
    ("classical_benchmark", classical_benchmark),
    ("probabilistic_ordering", probabilistic_ordering),
    ("vacuum_crossover", vacuum_crossover),
    ("symplectic_invariance", symplectic_invariance),
    ("conditioning_total_law", conditioning_total_law),
    ("fock_cross_oracle", fock_cross_oracle),
    ("grid_convergence", grid_convergence),
    ("seeded_reproducibility", seeded_reproducibility),
]
FULL_CHECKS: list[tuple[str, Check]] = [("tomography_end_to_end", tomography_end_to_end)]


def run_checks(full: bool = False) -> Iterator[CheckResult]:
    """Run every check in order, timing each; ``full`` adds the long tomography run."""
    tracer = get_tracer()
    for name, check in CHECKS + (FULL_CHECKS if full else []):
        with bind_run_context(check=name), tracer.start_as_current_span(f"validate.{name}"):
            start = time.perf_counter()
            result = check()
            result = result.model_copy(update={"elapsed": time.perf_counter() - start})
            log = logger.info if result.passed else logger.warning
            log("Check finished", passed=result.passed, value=result.value, note=result.note)
        yield result
