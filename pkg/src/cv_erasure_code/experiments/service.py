import contextvars
import hashlib
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np
from opentelemetry import context as otel_context
from scipy.stats import norm

from cv_erasure_code.core.config import Settings, get_settings
from cv_erasure_code.core.logging import get_logger, get_tracer
from cv_erasure_code.erasure.schemas import (
    AcceptanceRule,
    CodeParams,
    ErasurePattern,
    FeedforwardGain,
    QuadratureGrid,
    SqueezerParams,
)
from cv_erasure_code.erasure.service import (
    deterministic_correct,
    feedforward_sign_table,
    mixture_fidelity_to_coherent,
    pattern_table,
    probabilistic_protocol,
    single_channel_baseline,
    single_channel_mixture,
    transmit,
)
from cv_erasure_code.experiments.schemas import (
    Fig2adReport,
    Fig2eReport,
    Fig3Report,
    Fig4Report,
    ScenarioParams,
    ScenarioResult,
    SyndromeHistogram,
    TomographyReport,
)
from cv_erasure_code.fock.schemas import PhaseSpaceGrid
from cv_erasure_code.fock.service import (
    coherent_fock,
    mixture_to_fock,
    uhlmann_fidelity,
    wigner_from_fock,
)
from cv_erasure_code.gaussian.schemas import GaussianMixture
from cv_erasure_code.gaussian.service import (
    coherent_mean,
    coherent_overlap,
    coherent_state,
    marginal,
)
from cv_erasure_code.tomography.schemas import TomographyConfig
from cv_erasure_code.tomography.service import maxlik_reconstruct, sample_homodyne

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")

BASELINE_ARM = "single_channel"


def derive_seed(master_seed: int, scenario: str, index: int) -> int:
    """64-bit seed for one sweep point, a pure function of its coordinates."""
    digest = hashlib.blake2b(f"{master_seed}:{scenario}:{index}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def crossover(
    xs: Sequence[float], arm: Sequence[float], baseline: Sequence[float]
) -> float | None:
    """First x where ``arm - baseline`` turns negative, linearly interpolated."""
    diff = np.asarray(arm) - np.asarray(baseline)
    for k in range(1, len(diff)):
        if diff[k - 1] >= 0.0 > diff[k]:
            x0, x1 = xs[k - 1], xs[k]
            return float(x0 + (x1 - x0) * diff[k - 1] / (diff[k - 1] - diff[k]))
    return None


def syndrome_histogram(
    quadrature: str, values: np.ndarray, mean: float, variance: float, bins: int
) -> SyndromeHistogram:
    """
    Density histogram of sampled syndrome values against the analytic
    marginal and the unit-variance shot-noise curve.
    """
    half = 5.0 * max(np.sqrt(variance), 1.0)
    density, edges = np.histogram(
        values, bins=bins, range=(mean - half, mean + half), density=True
    )
    centers = 0.5 * (edges[:-1] + edges[1:])
    return SyndromeHistogram(
        quadrature=quadrature,
        edges=edges,
        density=density,
        analytic_density=norm.pdf(centers, loc=mean, scale=np.sqrt(variance)),
        shot_noise_density=norm.pdf(centers),
        sample_mean=float(values.mean()),
        sample_variance=float(values.var(ddof=1)),
        analytic_mean=float(mean),
        analytic_variance=float(variance),
    )


class ScenarioService:
    """
    Runs the figure scenarios for one parameter set and master seed.

    Sweep points execute on a thread pool; results are gathered in input
    order so output does not depend on the number of workers.
    """

    def __init__(
        self,
        params: ScenarioParams | None = None,
        seed: int | None = None,
        settings: Settings | None = None,
    ):
        self.settings = settings or get_settings()
        self.params = params or ScenarioParams()
        self.seed = self.settings.default_seed if seed is None else seed
        self.tracer = get_tracer()

    # helpers
    def code_params(self, arm: str) -> CodeParams:
        """Physical parameters of one arm under the configured model."""
        p = self.params
        if p.model == "theory":
            if arm == "vacuum":
                return CodeParams.vacuum_ancilla(alpha=p.alpha, signal2=p.signal2)
            return CodeParams.pure(p.two_mode_db, alpha=p.alpha, signal2=p.signal2)
        if arm == "vacuum":
            squeezers = (SqueezerParams(), SqueezerParams())
        else:
            squeezers = (
                SqueezerParams(squeeze_db=p.squeeze_db_1, antisqueeze_db=p.antisqueeze_db),
                SqueezerParams(squeeze_db=p.squeeze_db_2, antisqueeze_db=p.antisqueeze_db),
            )
        return CodeParams(
            alpha=p.alpha,
            signal2=p.signal2,
            squeezers=squeezers,
            visibility=p.visibility,
            detection_efficiency=p.detection_efficiency,
        )

    def rule(self, threshold: float | None = None) -> AcceptanceRule:
        return AcceptanceRule(
            threshold=self.params.threshold_snu(threshold), region_kind=self.params.region_kind
        )

    def grid(self, cells: int | None = None) -> QuadratureGrid:
        return QuadratureGrid(
            cells=cells or self.params.grid_cells, half_width=self.params.grid_half_width
        )

    @property
    def target_alpha(self) -> complex:
        return self.params.alpha if self.params.output == 0 else self.params.signal2

    def _map(self, scenario: str, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        parent = otel_context.get_current()

        def run(item: T) -> R:
            with self.tracer.start_as_current_span(f"{scenario}.point", context=parent):
                return fn(item)

        # one context copy per point: workers keep the bound scenario and seed
        contexts = [contextvars.copy_context() for _ in items]
        with ThreadPoolExecutor(max_workers=self.settings.max_workers) as pool:
            return list(pool.map(lambda ctx, item: ctx.run(run, item), contexts, items))

    # scenarios
    def run_fig2ad(self) -> Fig2adReport:
        """
        Phase scans of the input, the erased output and the corrected output
        at ``scan_gain``, plus histograms of the two syndrome quadratures.
        """
        p = self.params
        arm = "vacuum" if p.ancilla == "vacuum" else "entangled"
        pattern = ErasurePattern.single(p.erased_channel)
        target = feedforward_sign_table()[p.erased_channel].target
        alpha = (p.alpha, p.signal2)[target]

        with self.tracer.start_as_current_span("scenario.fig2ad"):
            outputs, syndrome = transmit(self.code_params(arm), pattern)
            corrected = deterministic_correct(
                outputs, syndrome, FeedforwardGain(g=p.scan_gain), pattern
            )
            states = {
                "input": coherent_state(alpha),
                "uncorrected": marginal(outputs.averaged(), [target]),
                "corrected": marginal(corrected, [target]),
            }
            seeds = {name: derive_seed(self.seed, "fig2ad", k) for k, name in enumerate(states)}

            def scan(name: str):
                mix = GaussianMixture.from_branches([(1.0, states[name])])
                return sample_homodyne(mix, p.n_samples, seeds[name])

            traces = dict(zip(states, self._map("fig2ad", scan, list(states))))

            rng = np.random.default_rng(derive_seed(self.seed, "fig2ad:syndrome", 0))
            draws = rng.multivariate_normal(syndrome.mean, syndrome.cov, size=p.n_samples)
            histograms = {
                q: syndrome_histogram(
                    q, draws[:, k], syndrome.mean[k], syndrome.cov[k, k], p.histogram_bins
                )
                for k, q in enumerate(("x", "p"))
            }

        results = [
            ScenarioResult(
                scenario="fig2ad",
                arm=name,
                param_name="gain",
                param_value=p.scan_gain,
                fidelity=coherent_overlap(state, alpha),
                seed=seeds[name],
            )
            for name, state in states.items()
        ]
        logger.info(
            "Phase scans and syndrome histograms ready",
            channel=p.erased_channel,
            gain=p.scan_gain,
            syndrome_variance=[h.sample_variance for h in histograms.values()],
        )
        return Fig2adReport(traces=traces, histograms=histograms, results=results)

    def run_fig2e(self, gains: Sequence[float] | None = None) -> Fig2eReport:
        """
        Deterministic correction of a single erasure versus feedforward gain,
        with and without entanglement. Exact Gaussian evaluation.
        """
        gains = list(self.params.gains if gains is None else gains)
        pattern = ErasurePattern.single(self.params.erased_channel)
        results: list[ScenarioResult] = []
        best_gain, best_fid = {}, {}
        with self.tracer.start_as_current_span("scenario.fig2e"):
            for arm in self.params.arms:
                code = self.code_params(arm)
                outputs, syndrome = transmit(code, pattern)

                def point(indexed: tuple[int, float]) -> ScenarioResult:
                    index, g = indexed
                    start = time.perf_counter()
                    state = deterministic_correct(outputs, syndrome, FeedforwardGain(g=g), pattern)
                    fids = [
                        coherent_overlap(marginal(state, [k]), a)
                        for k, a in enumerate((code.alpha, code.signal2))
                    ]
                    other = 1 - self.params.output
                    return ScenarioResult(
                        scenario="fig2e",
                        arm=arm,
                        param_name="gain",
                        param_value=g,
                        fidelity=fids[self.params.output],
                        output2_fidelity=fids[1] if other == 1 else None,
                        seed=derive_seed(self.seed, f"fig2e:{arm}", index),
                        wall_time=time.perf_counter() - start,
                    )

                rows = self._map("fig2e", point, list(enumerate(gains)))
                results.extend(rows)
                top = max(rows, key=lambda r: r.fidelity)
                best_gain[arm], best_fid[arm] = top.param_value, top.fidelity
                logger.info(
                    "Gain sweep finished",
                    arm=arm,
                    channel=self.params.erased_channel,
                    points=len(rows),
                    best_gain=top.param_value,
                    best_fidelity=top.fidelity,
                )
        return Fig2eReport(results=results, best_gain=best_gain, best_fidelity=best_fid)

    def run_fig3(self, p_e: float | None = None, threshold: float | None = None) -> Fig3Report:
        """
        Fock-basis snapshots at one erasure probability: the input, the
        uncorrected single channel and the post-selected outputs of each arm.
        """
        p = self.params
        p_e = p.p_e if p_e is None else p_e
        alpha = self.target_alpha
        rule = self.rule(threshold)
        grid = self.grid(p.fock_grid_cells)

        mixtures = {"uncorrected": single_channel_mixture(alpha, p_e)}
        with self.tracer.start_as_current_span("scenario.fig3"):
            success = {}
            for arm in p.arms:
                mixtures[arm], success[arm] = probabilistic_protocol(
                    self.code_params(arm), p_e, rule, grid, p.output
                )

            def convert(dim: int) -> dict:
                snaps = {"input": coherent_fock(alpha, dim)}
                names = list(mixtures)
                mats = self._map("fig3", lambda n: mixture_to_fock(mixtures[n], dim), names)
                snaps.update(zip(names, mats))
                return snaps

            snapshots = convert(p.cutoff)
            fidelities = {
                name: uhlmann_fidelity(snapshots["input"], rho) for name, rho in snapshots.items()
            }
            analytic = {
                name: mixture_fidelity_to_coherent(mix, alpha) for name, mix in mixtures.items()
            }
            validation = {}
            if p.validation_cutoff:
                wide = convert(p.validation_cutoff)
                validation = {
                    name: uhlmann_fidelity(wide["input"], rho) for name, rho in wide.items()
                }
            wigner = {}
            if p.wigner:
                cx, cp = coherent_mean(alpha)
                # centred on the coherent peak, wide enough to include the vacuum branch
                half = 2.0 * abs(alpha) + 5.0
                wgrid = PhaseSpaceGrid.centered((float(cx), float(cp)), half)
                wigner = {name: wigner_from_fock(rho, wgrid) for name, rho in snapshots.items()}

        results = [
            ScenarioResult(
                scenario="fig3",
                arm=name,
                param_name="p_e",
                param_value=p_e,
                fidelity=fidelities[name],
                success_prob=success.get(name, 1.0 if name == "uncorrected" else None),
                trace_deficit=snapshots[name].trace_deficit,
                seed=derive_seed(self.seed, "fig3", index),
                degenerate=snapshots[name].truncation_warning,
            )
            for index, name in enumerate(snapshots)
        ]
        logger.info("Density-matrix snapshots ready", p_e=p_e, fidelities=fidelities)
        return Fig3Report(
            snapshots=snapshots,
            fidelities=fidelities,
            analytic_fidelities=analytic,
            validation_fidelities=validation,
            wigner=wigner,
            results=results,
        )

    def run_fig4(
        self,
        pe_grid: Sequence[float] | None = None,
        thresholds: Sequence[float] | None = None,
    ) -> Fig4Report:
        """
        Post-selected fidelity versus erasure probability and versus threshold,
        with the unprotected channel as baseline.
        """
        p = self.params
        pe_grid = list(p.pe_grid if pe_grid is None else pe_grid)
        thresholds = list(p.thresholds if thresholds is None else thresholds)
        alpha = self.target_alpha
        results: list[ScenarioResult] = []
        curves: dict[str, list[float]] = {}

        with self.tracer.start_as_current_span("scenario.fig4"):
            baseline = [single_channel_baseline(alpha, pe) for pe in pe_grid]
            curves[BASELINE_ARM] = baseline
            results.extend(
                ScenarioResult(
                    scenario="fig4",
                    arm=BASELINE_ARM,
                    param_name="p_e",
                    param_value=pe,
                    fidelity=f,
                    success_prob=1.0,
                    seed=derive_seed(self.seed, f"fig4:{BASELINE_ARM}", k),
                )
                for k, (pe, f) in enumerate(zip(pe_grid, baseline))
            )

            for arm in p.arms:
                table = pattern_table(self.code_params(arm), self.rule(), self.grid(), p.output)

                def pe_point(indexed: tuple[int, float]) -> ScenarioResult:
                    index, pe = indexed
                    start = time.perf_counter()
                    success = table.success_probability(pe)
                    fid = mixture_fidelity_to_coherent(table.mixture(pe), alpha)
                    return ScenarioResult(
                        scenario="fig4",
                        arm=arm,
                        param_name="p_e",
                        param_value=pe,
                        fidelity=fid,
                        success_prob=success,
                        seed=derive_seed(self.seed, f"fig4:{arm}:p_e", index),
                        wall_time=time.perf_counter() - start,
                    )

                rows = self._map("fig4", pe_point, list(enumerate(pe_grid)))
                curves[arm] = [r.fidelity for r in rows]
                results.extend(rows)

                def th_point(indexed: tuple[int, float], arm: str = arm) -> ScenarioResult:
                    index, th = indexed
                    start = time.perf_counter()
                    mix, success = probabilistic_protocol(
                        self.code_params(arm), p.p_e, self.rule(th), self.grid(), p.output
                    )
                    return ScenarioResult(
                        scenario="fig4",
                        arm=arm,
                        param_name="threshold",
                        param_value=th,
                        fidelity=mixture_fidelity_to_coherent(mix, alpha),
                        success_prob=success,
                        seed=derive_seed(self.seed, f"fig4:{arm}:threshold", index),
                        wall_time=time.perf_counter() - start,
                    )

                results.extend(self._map("fig4", th_point, list(enumerate(thresholds))))

        crossings = {
            arm: crossover(pe_grid, curves[arm], baseline) for arm in p.arms
        }
        logger.info("Erasure and threshold sweeps finished", crossover_pe=crossings)
        return Fig4Report(results=results, crossover_pe=crossings)

    def run_tomography_demo(self, n_samples: int | None = None) -> TomographyReport:
        """
        Sample the corrected output, reconstruct it by MaxLik and compare with
        the analytic mixture. One reconstruction per replicate seed.
        """
        p = self.params
        n = p.n_samples if n_samples is None else n_samples
        arm = "vacuum" if p.ancilla == "vacuum" else "entangled"
        config = TomographyConfig(
            cutoff=p.cutoff,
            max_iters=p.max_iters,
            phase_bins=p.phase_bins,
            value_bins=p.value_bins,
        )
        with self.tracer.start_as_current_span("scenario.tomography"):
            mix, success = probabilistic_protocol(
                self.code_params(arm), p.p_e, self.rule(), self.grid(p.fock_grid_cells), p.output
            )
            truth = mixture_to_fock(mix, p.cutoff)
            seeds = [derive_seed(self.seed, "tomography", r) for r in range(p.replicates)]

            def replicate(seed: int):
                start = time.perf_counter()
                recon = maxlik_reconstruct(sample_homodyne(mix, n, seed), config)
                return recon, uhlmann_fidelity(recon.rho, truth), time.perf_counter() - start

            runs = self._map("tomography", replicate, seeds)

        fidelities = [f for _, f, _ in runs]
        results = [
            ScenarioResult(
                scenario="tomography",
                arm=arm,
                param_name="n_samples",
                param_value=float(n),
                fidelity=fid,
                success_prob=success,
                trace_deficit=truth.trace_deficit,
                seed=seed,
                wall_time=elapsed,
                degenerate=recon.degenerate or not recon.monotone,
            )
            for seed, (recon, fid, elapsed) in zip(seeds, runs)
        ]
        report = TomographyReport(
            reconstructions=[r for r, _, _ in runs],
            fidelities=fidelities,
            median_fidelity=float(np.median(fidelities)),
            spread=float(np.ptp(fidelities)),
            truth_trace_deficit=truth.trace_deficit,
            results=results,
        )
        logger.info(
            "Tomography demo finished",
            samples=n,
            replicates=p.replicates,
            median_fidelity=report.median_fidelity,
        )
        return report

    def run(self, scenario: str):
        """Dispatch by scenario id."""
        runners = {
            "fig2ad": self.run_fig2ad,
            "fig2e": self.run_fig2e,
            "fig3": self.run_fig3,
            "fig4": self.run_fig4,
            "tomography": self.run_tomography_demo,
        }
        return runners[scenario]()
