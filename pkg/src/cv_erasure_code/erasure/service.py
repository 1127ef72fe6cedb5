"""The four-mode erasure code.

Circuit (mode indices in brackets):

* EPR: two squeezers (p-squeezed [0], x-squeezed [1]) meet on a balanced
  beam splitter, giving correlated x1 - x2 and p1 + p2.
* Encoding: signal 1 with EPR half 1 -> channels 1, 2; signal 2 with EPR
  half 2 -> channels 3, 4 (one balanced beam splitter per pair).
* Decoding: the inverse beam splitters return (output 1, ancilla 1) and
  (output 2, ancilla 2); the ancillas meet on a balanced beam splitter and
  x is measured on one port, p on the other.
"""

from functools import lru_cache
from itertools import product

import numpy as np

from cv_erasure_code.core.exceptions import DimensionMismatchError, ProtocolError
from cv_erasure_code.core.logging import get_logger
from cv_erasure_code.erasure.schemas import (
    AcceptanceRule,
    CodeParams,
    ErasurePattern,
    FeedforwardGain,
    FeedforwardSigns,
    PatternAcceptance,
    PatternTable,
    QuadratureGrid,
    SyndromeDistribution,
)
from cv_erasure_code.gaussian.schemas import AffineConditional, GaussianMixture, GaussianState
from cv_erasure_code.gaussian.service import (
    apply,
    beam_splitter,
    coherent_overlap,
    coherent_overlaps,
    coherent_state,
    condition_on_quadratures,
    loss_channel,
    marginal,
    mode_permutation,
    replace_with_vacuum,
    squeezed_vacuum,
    tensor,
)

logger = get_logger(__name__)

BALANCED = 0.5
SYNDROME_X_MODE = 1
SYNDROME_P_MODE = 3
# reference code used to fix feedforward signs in the infinite-squeezing limit
SIGN_REFERENCE_DB = 60.0
SIGN_REFERENCE_ALPHA = 1 + 1j
SIGN_REFERENCE_GAINS = np.linspace(0.0, 4.0, 401)


def unity_gain() -> float:
    """Gain at which the corrected output reproduces the input mean (G = 2)."""
    return 2.0


def make_epr(params: CodeParams) -> GaussianState:
    """
    Two-mode squeezed resource from the two configured squeezers.

    Imperfect visibility v is modelled as loss 1 - v^2 on each EPR half.
    """
    sq_p, sq_x = params.squeezers
    s1 = squeezed_vacuum(sq_p.squeeze_db, sq_p.resolved_antisqueeze_db, np.pi / 2)
    s2 = squeezed_vacuum(sq_x.squeeze_db, sq_x.resolved_antisqueeze_db, 0.0)
    epr = apply(beam_splitter(2, 0, 1, BALANCED), tensor([s1, s2]))
    if params.visibility < 1.0:
        eta = params.visibility**2
        for mode in (0, 1):
            epr = loss_channel(epr, mode, eta)
    return epr


def encode(signal1: GaussianState, signal2: GaussianState, epr: GaussianState) -> GaussianState:
    """Interfere each signal with one EPR half; returns channels 1..4 as modes 0..3."""
    if signal1.num_modes != 1 or signal2.num_modes != 1 or epr.num_modes != 2:
        raise DimensionMismatchError(
            message="encode expects two single-mode signals and a two-mode EPR state",
            details=[
                {
                    "field": "inputs",
                    "message": f"got {signal1.num_modes}, {signal2.num_modes}, {epr.num_modes}",
                    "code": "dim",
                }
            ],
        )
    state = tensor([signal1, signal2, epr])
    # reorder to (signal1, epr1, signal2, epr2)
    state = apply(mode_permutation([0, 2, 1, 3]), state)
    state = apply(beam_splitter(4, 0, 1, BALANCED), state)
    return apply(beam_splitter(4, 2, 3, BALANCED), state)


def encode_params(params: CodeParams) -> GaussianState:
    return encode(coherent_state(params.alpha), coherent_state(params.signal2), make_epr(params))


def erase(state4: GaussianState, pattern: ErasurePattern) -> GaussianState:
    """Replace every blocked channel by vacuum."""
    for channel in pattern.erased_channels:
        state4 = replace_with_vacuum(state4, channel - 1)
    return state4


def decode_and_syndrome(
    state4: GaussianState, detection_efficiency: float = 1.0
) -> tuple[AffineConditional, SyndromeDistribution]:
    """
    Undo the encoding beam splitters and perform the joint syndrome measurement.

    Returns:
        tuple: Conditional map for (output 1, output 2) as a function of
            (x_m, p_m), and the syndrome distribution.
    """
    if state4.num_modes != 4:
        raise DimensionMismatchError(message="decode expects the four-channel state")
    inverse = beam_splitter(4, 0, 1, BALANCED).then(beam_splitter(4, 2, 3, BALANCED)).inverse()
    state = apply(inverse, state4)
    state = apply(beam_splitter(4, SYNDROME_X_MODE, SYNDROME_P_MODE, BALANCED), state)
    if detection_efficiency < 1.0:
        for mode in (SYNDROME_X_MODE, SYNDROME_P_MODE):
            state = loss_channel(state, mode, detection_efficiency)
    outputs = condition_on_quadratures(
        state, [(SYNDROME_X_MODE, 0.0), (SYNDROME_P_MODE, np.pi / 2)]
    )
    syndrome = SyndromeDistribution(mean=outputs.outcome_mean, cov=outputs.outcome_cov)
    return outputs, syndrome


def transmit(params: CodeParams, pattern: ErasurePattern):
    """Encode with ``params``, erase ``pattern`` and decode."""
    return decode_and_syndrome(erase(encode_params(params), pattern), params.detection_efficiency)


def apply_feedforward(
    outputs: AffineConditional,
    syndrome: SyndromeDistribution,
    gain: FeedforwardGain,
    signs: FeedforwardSigns,
) -> GaussianState:
    """
    Displace the target output by sqrt(G) (sign_x x_m, sign_p p_m) and average
    over the syndrome.

    With F the feedforward matrix the result has mean base + F o_mean and
    covariance cond_cov + (K + F) Sigma (K + F)^T, K being the conditional gain.
    """
    feed = np.zeros_like(outputs.gain)
    row = 2 * signs.target
    feed[row, 0] = signs.sign_x * gain.amplitude
    feed[row + 1, 1] = signs.sign_p * gain.amplitude
    net = outputs.gain + feed
    mean = outputs.base_mean + feed @ syndrome.mean
    cov = outputs.cond_cov + net @ syndrome.cov @ net.T
    return GaussianState(mean=mean, cov=0.5 * (cov + cov.T))


@lru_cache(maxsize=1)
def feedforward_sign_table() -> dict[int, FeedforwardSigns]:
    """
    Feedforward direction for each single-channel erasure.

    Found by brute force over the four sign combinations at near-infinite
    squeezing: the best combination reaches unit fidelity, the others do not.
    """
    reference = CodeParams.pure(SIGN_REFERENCE_DB, alpha=SIGN_REFERENCE_ALPHA, signal2=SIGN_REFERENCE_ALPHA)
    table = {}
    for channel in range(1, 5):
        outputs, syndrome = transmit(reference, ErasurePattern.single(channel))
        target = 0 if channel <= 2 else 1
        best = None
        for sx, sp in product((1, -1), repeat=2):
            signs = FeedforwardSigns(target=target, sign_x=sx, sign_p=sp)
            fid = max(
                coherent_overlap(
                    marginal(
                        apply_feedforward(outputs, syndrome, FeedforwardGain(g=g), signs),
                        [target],
                    ),
                    SIGN_REFERENCE_ALPHA,
                )
                for g in SIGN_REFERENCE_GAINS
            )
            if best is None or fid > best[0]:
                best = (fid, signs)
        table[channel] = best[1]
        logger.debug(
            "Feedforward signs fixed",
            channel=channel,
            target=target,
            sign_x=best[1].sign_x,
            sign_p=best[1].sign_p,
            reference_fidelity=best[0],
        )
    return table


def deterministic_correct(
    outputs: AffineConditional,
    syndrome: SyndromeDistribution,
    gain: FeedforwardGain,
    pattern: ErasurePattern,
) -> GaussianState:
    """
    Deterministic feedforward correction for a known single erasure.

    Args:
        outputs: Conditional outputs from ``decode_and_syndrome``.
        syndrome: Syndrome distribution from ``decode_and_syndrome``.
        gain: Displacement gain G.
        pattern: The erasure pattern (location known at protocol level).

    Returns:
        GaussianState: Exact two-mode output state averaged over the syndrome.

    Raises:
        ProtocolError: If two or more channels were erased.
    """
    if pattern.num_erased >= 2:
        raise ProtocolError(
            message="Deterministic correction handles at most one erasure",
            details=[
                {
                    "field": "pattern",
                    "message": f"channels {pattern.erased_channels} erased",
                    "code": "multiple_erasures",
                }
            ],
        )
    if pattern.num_erased == 0:
        return outputs.averaged()
    signs = feedforward_sign_table()[pattern.erased_channels[0]]
    return apply_feedforward(outputs, syndrome, gain, signs)


def deterministic_fidelity(
    params: CodeParams, channel: int, gain: float, output: int = 0
) -> float:
    """Fidelity of one corrected output to its input coherent state."""
    pattern = ErasurePattern.single(channel)
    outputs, syndrome = transmit(params, pattern)
    state = deterministic_correct(outputs, syndrome, FeedforwardGain(g=gain), pattern)
    target_alpha = params.alpha if output == 0 else params.signal2
    return coherent_overlap(marginal(state, [output]), target_alpha)


def _pattern_acceptance(
    params: CodeParams,
    pattern: ErasurePattern,
    rule: AcceptanceRule,
    grid: QuadratureGrid,
    output: int,
) -> PatternAcceptance:
    outputs, syndrome = transmit(params, pattern)
    cond = outputs.select([output])

    sigma = syndrome.std
    half = np.array([grid.axis_half_width(s) for s in sigma])
    widened = bool(np.any(half > grid.half_width))
    if widened:
        logger.warning(
            "Syndrome grid widened to cover the distribution",
            pattern=pattern.label,
            half_width=half.tolist(),
        )
    edges = [
        np.linspace(m - h, m + h, grid.cells + 1) for m, h in zip(syndrome.mean, half)
    ]
    centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
    xc, pc = np.meshgrid(centers[0], centers[1], indexing="ij")
    points = np.column_stack([xc.ravel(), pc.ravel()])
    area = np.diff(edges[0])[0] * np.diff(edges[1])[0]

    raw = syndrome.pdf(points).reshape(xc.shape) * area
    grid_mass = float(raw.sum())
    if grid_mass <= 0.0:
        raise ProtocolError(
            message="Syndrome grid carries no probability mass",
            details=[{"field": "grid", "message": pattern.label, "code": "zero_mass"}],
        )
    # midpoint masses on coarse grids overshoot; each pattern's cells sum to 1
    mass = raw / grid_mass
    accept = rule.accepted_fraction(
        (edges[0][:-1, None], edges[0][1:, None]),
        (edges[1][None, :-1], edges[1][None, 1:]),
    )
    weights = (mass * accept).ravel()
    keep = weights > 0.0
    means = cond.means_at(points[keep])
    covs = np.broadcast_to(cond.cond_cov, (means.shape[0], 2, 2))
    branches = GaussianMixture(weights=weights[keep], means=means, covs=covs)
    return PatternAcceptance(
        pattern=pattern,
        syndrome=syndrome,
        branches=branches,
        accepted_mass=min(float(weights.sum()), 1.0),
        grid_mass=grid_mass,
        widened=widened,
    )


def pattern_table(
    params: CodeParams,
    rule: AcceptanceRule,
    grid: QuadratureGrid | None = None,
    output: int = 0,
) -> PatternTable:
    """Post-selected branches of all sixteen patterns, to be weighted by P_E later."""
    grid = grid or QuadratureGrid()
    entries = [
        _pattern_acceptance(params, pattern, rule, grid, output)
        for pattern in ErasurePattern.all_patterns()
    ]
    logger.debug(
        "Pattern table built",
        threshold=rule.threshold,
        region=rule.region_kind.value,
        cells=grid.cells,
        branches=sum(len(e.branches) for e in entries),
    )
    return PatternTable(entries=entries, output=output)


def probabilistic_protocol(
    params: CodeParams,
    p_e: float,
    rule: AcceptanceRule,
    grid: QuadratureGrid | None = None,
    output: int = 0,
) -> tuple[GaussianMixture, float]:
    """
    Post-selected transmission over the stochastic erasure channel.

    Every pattern i has probability P_i = p_e^k (1 - p_e)^(4 - k). Accepted
    syndrome cells become Gaussian branches of the output state weighted by
    P_i times their accepted probability.

    Returns:
        tuple: (accepted mixture of the chosen output, success probability).
    """
    if not 0.0 <= p_e <= 1.0:
        raise ProtocolError(message=f"Erasure probability {p_e} outside [0, 1]")
    table = pattern_table(params, rule, grid, output)
    return table.mixture(p_e), table.success_probability(p_e)


def single_channel_baseline(alpha: complex, p_e: float) -> float:
    """Fidelity of the unprotected channel: (1 - p_e) + p_e exp(-|alpha|^2)."""
    return (1.0 - p_e) + p_e * float(np.exp(-abs(alpha) ** 2))


def single_channel_mixture(alpha: complex, p_e: float) -> GaussianMixture:
    """(1 - p_e)|alpha><alpha| + p_e|0><0| as a two-branch mixture."""
    return GaussianMixture.from_branches(
        [(1.0 - p_e, coherent_state(alpha)), (p_e, coherent_state(0))]
    )


def mixture_fidelity_to_coherent(mix: GaussianMixture, alpha: complex) -> float:
    """Fidelity of the renormalised mixture to |alpha> (linear in the branches)."""
    if mix.num_modes != 1:
        raise DimensionMismatchError(message="mixture fidelity expects single-mode branches")
    total = mix.total_mass
    if len(mix) == 0 or total <= 0.0:
        raise ProtocolError(
            message="Mixture carries no probability mass",
            details=[{"field": "mix", "message": "zero total weight", "code": "zero_mass"}],
        )
    overlaps = coherent_overlaps(mix.means, mix.covs, alpha)
    return float(np.dot(mix.weights, overlaps) / total)
