import numpy as np
import pytest
from pydantic import ValidationError
from scipy.optimize import minimize_scalar

from cv_erasure_code.core.exceptions import ProtocolError
from cv_erasure_code.erasure.schemas import (
    AcceptanceRule,
    CodeParams,
    ErasurePattern,
    FeedforwardGain,
    QuadratureGrid,
    RegionKind,
    SqueezerParams,
)
from cv_erasure_code.erasure.service import (
    decode_and_syndrome,
    deterministic_correct,
    deterministic_fidelity,
    encode_params,
    erase,
    feedforward_sign_table,
    make_epr,
    mixture_fidelity_to_coherent,
    pattern_table,
    probabilistic_protocol,
    single_channel_baseline,
    single_channel_mixture,
    transmit,
    unity_gain,
)
from cv_erasure_code.gaussian.schemas import GaussianMixture
from cv_erasure_code.gaussian.service import coherent_overlap, coherent_overlaps, marginal

ALPHA = 3 + 3j


def test_squeezer_params_validation():
    """Antisqueezing defaults to the squeezing level and cannot undercut it."""
    assert SqueezerParams(squeeze_db=3.4).resolved_antisqueeze_db == 3.4
    with pytest.raises(ValidationError):
        SqueezerParams(squeeze_db=3.0, antisqueeze_db=2.0)


def test_epr_resource_correlations():
    """The resource has squeezed x1 - x2 and p1 + p2."""
    epr = make_epr(CodeParams.pure(3.0))
    c = epr.cov
    assert c[0, 0] + c[2, 2] - 2 * c[0, 2] == pytest.approx(2 * 10**-0.3)
    assert c[1, 1] + c[3, 3] + 2 * c[1, 3] == pytest.approx(2 * 10**-0.3)


def test_visibility_degrades_resource():
    """Imperfect visibility adds noise to the EPR correlations."""
    ideal = make_epr(CodeParams.pure(3.0)).cov
    lossy = make_epr(CodeParams.pure(3.0, visibility=0.9)).cov
    assert lossy[0, 0] + lossy[2, 2] - 2 * lossy[0, 2] > ideal[0, 0] + ideal[2, 2] - 2 * ideal[0, 2]


def test_erasure_patterns():
    """Sixteen patterns whose probabilities sum to one."""
    patterns = ErasurePattern.all_patterns()
    assert len(patterns) == 16
    assert len(set(p.label for p in patterns)) == 16
    assert sum(p.probability(0.3) for p in patterns) == pytest.approx(1.0)
    single = ErasurePattern.single(3)
    assert single.erased_channels == (3,)
    assert single.label == "--x-"
    assert single.probability(0.25) == pytest.approx(0.25 * 0.75**3)
    with pytest.raises(ValueError):
        ErasurePattern.single(5)


def test_no_erasure_is_transparent():
    """Without erasures the decoder returns both signals untouched."""
    params = CodeParams.pure(2.0, alpha=ALPHA, signal2=1 - 1j)
    outputs, syndrome = transmit(params, ErasurePattern())
    state = deterministic_correct(outputs, syndrome, FeedforwardGain(g=2.0), ErasurePattern())
    assert np.allclose(state.mean, [6.0, 6.0, 2.0, -2.0])
    assert np.allclose(state.cov, np.eye(4))
    assert np.allclose(syndrome.mean, 0.0)


def test_erasure_shifts_syndrome():
    """An erased channel displaces the syndrome in proportion to alpha."""
    params = CodeParams.pure(2.0, alpha=ALPHA)
    _, clean = transmit(params, ErasurePattern())
    _, hit = transmit(params, ErasurePattern.single(2))
    assert np.linalg.norm(hit.mean) > 1.5
    assert np.all(hit.std > clean.std)


def test_erase_then_decode_matches_transmit():
    params = CodeParams.pure(1.0, alpha=1j)
    pattern = ErasurePattern.single(4)
    direct, _ = decode_and_syndrome(erase(encode_params(params), pattern))
    via, _ = transmit(params, pattern)
    assert np.allclose(direct.base_mean, via.base_mean)
    assert np.allclose(direct.cond_cov, via.cond_cov)


def test_feedforward_sign_table():
    """Each single erasure gets a target output and a sign pair."""
    table = feedforward_sign_table()
    assert set(table) == {1, 2, 3, 4}
    assert [table[ch].target for ch in (1, 2, 3, 4)] == [0, 0, 1, 1]
    assert (table[1].sign_x, table[1].sign_p) == (1, 1)
    assert (table[2].sign_x, table[2].sign_p) == (-1, -1)


@pytest.mark.parametrize("channel", [1, 2, 3, 4])
def test_perfect_correction_limit(channel):
    """Near-infinite squeezing at unity gain repairs any single erasure."""
    params = CodeParams.pure(60.0, alpha=ALPHA, signal2=-2 + 1j)
    output = 0 if channel <= 2 else 1
    assert deterministic_fidelity(params, channel, unity_gain(), output) >= 0.999


def test_untouched_output_keeps_full_fidelity():
    """Erasing channel 3 leaves output 1 exact whatever the gain."""
    params = CodeParams.pure(2.0, alpha=ALPHA)
    for g in (0.0, 1.0, 2.0):
        assert deterministic_fidelity(params, 3, g, output=0) == pytest.approx(1.0)


def test_unity_gain_fidelities(entangled_params, vacuum_params):
    """At G = 2: vacuum ancillas hit the classical 1/2, 2 dB gives 1 / (1 + 10^-0.2)."""
    assert unity_gain() == 2.0
    assert deterministic_fidelity(vacuum_params, 2, 2.0) == pytest.approx(0.5, abs=1e-9)
    expected = 1.0 / (1.0 + 10**-0.2)
    assert deterministic_fidelity(entangled_params, 2, 2.0) == pytest.approx(expected, abs=1e-9)


def test_entangled_gain_optimum(entangled_params):
    """The entangled arm beats the benchmark with an optimum near G = 1.97."""
    gains = np.round(np.arange(0.0, 4.0 + 1e-9, 0.01), 10)
    fids = [deterministic_fidelity(entangled_params, 2, g) for g in gains]
    best = int(np.argmax(fids))
    assert fids[best] > 0.6
    assert abs(gains[best] - 1.97) <= 0.5


def test_zero_gain_arms_close(entangled_params, vacuum_params):
    """Without feedforward both arms deliver a half-amplitude output."""
    ent = deterministic_fidelity(entangled_params, 2, 0.0)
    vac = deterministic_fidelity(vacuum_params, 2, 0.0)
    assert vac == pytest.approx(np.exp(-4.5))
    assert ent < 0.05
    assert ent == pytest.approx(vac, abs=1e-3)


def test_deterministic_rejects_double_erasure(entangled_params):
    pattern = ErasurePattern(blocked=(True, True, False, False))
    outputs, syndrome = transmit(entangled_params, pattern)
    with pytest.raises(ProtocolError):
        deterministic_correct(outputs, syndrome, FeedforwardGain(g=2.0), pattern)


def test_acceptance_rule_regions():
    """corner_reject drops outcomes outside in both quadratures; box_accept needs both inside."""
    x = np.array([0.1, 1.0, 1.0, 0.1])
    p = np.array([0.1, 0.1, 1.0, 1.0])
    corner = AcceptanceRule(threshold=0.8)
    box = AcceptanceRule(threshold=0.8, region_kind=RegionKind.BOX_ACCEPT)
    assert corner.accepts(x, p).tolist() == [True, True, False, True]
    assert box.accepts(x, p).tolist() == [True, False, False, False]


def test_accepted_fraction_of_cells():
    """Cells straddling the threshold are accepted in proportion to their overlap."""
    rule = AcceptanceRule(threshold=1.0, region_kind=RegionKind.BOX_ACCEPT)
    frac = rule.accepted_fraction(
        (np.array([0.5, 0.0, 2.0]), np.array([1.5, 0.5, 3.0])),
        (np.array([0.0, 0.0, 0.0]), np.array([0.5, 0.5, 0.5])),
    )
    assert np.allclose(frac, [0.5, 1.0, 0.0])
    corner = AcceptanceRule(threshold=1.0)
    frac = corner.accepted_fraction(
        (np.array([2.0]), np.array([3.0])), (np.array([0.5]), np.array([1.5]))
    )
    assert np.allclose(frac, [0.5])


def test_quadrature_grid_widening():
    grid = QuadratureGrid(half_width=6.0, min_sigmas=5.0, max_sigmas=8.0)
    assert grid.axis_half_width(0.5) == pytest.approx(4.0)
    assert grid.axis_half_width(1.0) == pytest.approx(6.0)
    assert grid.axis_half_width(2.0) == pytest.approx(10.0)


def test_pattern_table_masses(entangled_params):
    """Per-pattern grids capture the syndrome law; accepted mass never exceeds it."""
    rule = AcceptanceRule(threshold=0.8)
    table = pattern_table(entangled_params, rule, QuadratureGrid(cells=101))
    assert len(table.entries) == 16
    for entry in table.entries:
        assert entry.grid_mass == pytest.approx(1.0, abs=1e-3)
        assert 0.0 <= entry.accepted_mass <= 1.0 + 1e-12
    assert table.success_probability(0.0) == pytest.approx(table.entries[0].accepted_mass)
    assert table.mixture(0.25).total_mass == pytest.approx(table.success_probability(0.25))


def test_probabilistic_ordering(entangled_params, vacuum_params):
    """At P_E = 0.25, threshold 0.8 in vacuum-half units: F_ent > F_vac > 0.75, bracketed."""
    rule = AcceptanceRule(threshold=0.8 * np.sqrt(2.0))
    ent_mix, ent_success = probabilistic_protocol(entangled_params, 0.25, rule)
    vac_mix, vac_success = probabilistic_protocol(vacuum_params, 0.25, rule)
    f_ent = mixture_fidelity_to_coherent(ent_mix, ALPHA)
    f_vac = mixture_fidelity_to_coherent(vac_mix, ALPHA)
    assert f_ent > f_vac > 0.75
    assert 0.77 <= f_ent <= 0.90
    assert 0.75 <= f_vac <= 0.82
    assert 0.0 < vac_success <= 1.0
    assert 0.0 < ent_success <= 1.0


@pytest.mark.parametrize("cells", [3, 5, 11, 41])
def test_unbounded_threshold_accepts_everything(entangled_params, cells):
    """Even coarse grids give success probability 1 and a valid mixture."""
    rule = AcceptanceRule(threshold=1e6)
    table = pattern_table(entangled_params, rule, QuadratureGrid(cells=cells))
    assert table.success_probability(0.25) == pytest.approx(1.0, abs=1e-12)
    assert table.mixture(0.25).total_mass <= 1.0 + 1e-9
    for entry in table.entries:
        assert entry.accepted_mass == pytest.approx(1.0, abs=1e-12)


def test_unbounded_threshold_matches_unselected_output(entangled_params):
    """With nothing rejected the output is the syndrome-averaged decoder output."""
    p_e = 0.25
    mix, success = probabilistic_protocol(entangled_params, p_e, AcceptanceRule(threshold=1e6))
    expected = 0.0
    for pattern in ErasurePattern.all_patterns():
        outputs, _ = transmit(entangled_params, pattern)
        state = marginal(outputs.averaged(), [0])
        expected += pattern.probability(p_e) * coherent_overlap(state, ALPHA)
    assert success == pytest.approx(1.0, abs=1e-12)
    assert mixture_fidelity_to_coherent(mix, ALPHA) == pytest.approx(expected, abs=1e-4)


def test_box_threshold_monotone(entangled_params):
    """Lowering a box threshold raises fidelity and lowers success probability."""
    fids, succ = [], []
    for th in (0.4, 0.8, 1.2, 2.0):
        rule = AcceptanceRule(threshold=th, region_kind=RegionKind.BOX_ACCEPT)
        grid = QuadratureGrid(cells=101)
        mix, success = probabilistic_protocol(entangled_params, 0.25, rule, grid)
        fids.append(mixture_fidelity_to_coherent(mix, ALPHA))
        succ.append(success)
    assert all(a >= b - 1e-9 for a, b in zip(fids, fids[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(succ, succ[1:]))


def test_probabilistic_rejects_bad_probability(entangled_params):
    with pytest.raises(ProtocolError):
        probabilistic_protocol(entangled_params, 1.5, AcceptanceRule())


def test_single_channel_baseline():
    """(1 - p_e) + p_e e^(-|alpha|^2), also reached through the mixture."""
    assert single_channel_baseline(ALPHA, 0.25) == pytest.approx(0.75 + 0.25 * np.exp(-18))
    mix = single_channel_mixture(ALPHA, 0.25)
    assert mixture_fidelity_to_coherent(mix, ALPHA) == pytest.approx(
        single_channel_baseline(ALPHA, 0.25)
    )


def test_zero_mass_mixture_rejected():
    with pytest.raises(ProtocolError):
        mixture_fidelity_to_coherent(GaussianMixture.empty(), ALPHA)


def test_detection_efficiency_lowers_fidelity():
    ideal = CodeParams.pure(3.0, alpha=ALPHA)
    lossy = CodeParams.pure(3.0, alpha=ALPHA, detection_efficiency=0.8)
    assert deterministic_fidelity(lossy, 2, 2.0) < deterministic_fidelity(ideal, 2, 2.0)


def test_corrected_output_marginal_is_single_mode(entangled_params):
    pattern = ErasurePattern.single(1)
    outputs, syndrome = transmit(entangled_params, pattern)
    state = deterministic_correct(outputs, syndrome, FeedforwardGain(g=2.0), pattern)
    assert marginal(state, [0]).num_modes == 1


def test_optimal_gain_fidelity_grows_with_squeezing():
    """Deterministic fidelity at the best gain never drops as squeezing increases."""
    best = []
    for db in range(0, 11):
        params = CodeParams.pure(float(db), alpha=ALPHA)
        res = minimize_scalar(
            lambda g: -deterministic_fidelity(params, 2, g),
            bounds=(0.0, 4.0),
            method="bounded",
            options={"xatol": 1e-6},
        )
        best.append(-res.fun)
    assert all(b >= a - 1e-6 for a, b in zip(best, best[1:]))
    assert best[-1] > best[0] + 0.3


def test_post_selection_matches_monte_carlo(entangled_params):
    """Grid mixture and sampled syndromes agree on fidelity and success probability."""
    p_e, draws = 0.25, 200_000
    rule = AcceptanceRule(threshold=0.8 * np.sqrt(2.0))
    mix, success = probabilistic_protocol(entangled_params, p_e, rule)
    grid_fidelity = mixture_fidelity_to_coherent(mix, ALPHA)

    rng = np.random.default_rng(2024)
    patterns = ErasurePattern.all_patterns()
    counts = rng.multinomial(draws, [pt.probability(p_e) for pt in patterns])
    overlaps = []
    for pattern, count in zip(patterns, counts):
        if not count:
            continue
        outputs, syndrome = transmit(entangled_params, pattern)
        outcomes = rng.multivariate_normal(syndrome.mean, syndrome.cov, size=count)
        kept = outcomes[rule.accepts(outcomes[:, 0], outcomes[:, 1])]
        cond = outputs.select([0])
        covs = np.broadcast_to(cond.cond_cov, (len(kept), 2, 2))
        overlaps.append(coherent_overlaps(cond.means_at(kept), covs, ALPHA))
    overlaps = np.concatenate(overlaps)

    rate = len(overlaps) / draws
    rate_se = np.sqrt(rate * (1.0 - rate) / draws)
    assert abs(rate - success) < 3 * rate_se + 1e-4
    fid_se = overlaps.std(ddof=1) / np.sqrt(len(overlaps))
    assert abs(overlaps.mean() - grid_fidelity) < 3 * fid_se + 5e-4
