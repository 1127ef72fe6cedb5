import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import norm, poisson

from cv_erasure_code.core.exceptions import DimensionMismatchError, ProtocolError
from cv_erasure_code.erasure.service import single_channel_baseline, single_channel_mixture
from cv_erasure_code.fock.schemas import FockDensityMatrix, PhaseSpaceGrid
from cv_erasure_code.fock.service import (
    annihilation,
    coherent_fock,
    displacement_elements,
    gaussian_to_fock,
    mixture_to_fock,
    photon_number,
    uhlmann_fidelity,
    wigner_from_fock,
)
from cv_erasure_code.gaussian.schemas import GaussianMixture, GaussianState
from cv_erasure_code.gaussian.service import (
    apply,
    coherent_state,
    phase_shift,
    squeezed_vacuum,
    vacuum,
)


def quadrature_variances(rho: FockDensityMatrix) -> tuple[float, float]:
    a = annihilation(rho.dim)
    x = a + a.T
    p = -1j * (a - a.T)
    r = rho.normalized().entries

    def var(op):
        return float(np.trace(r @ op @ op).real - np.trace(r @ op).real ** 2)

    return var(x), var(p)


def test_coherent_state_is_poissonian():
    """|alpha> has Poisson photon statistics with mean |alpha|^2."""
    rho = coherent_fock(1 + 1j, 30)
    assert np.allclose(rho.diagonal, poisson.pmf(np.arange(30), 2.0))
    assert photon_number(rho) == pytest.approx(2.0, abs=1e-9)


def test_truncation_deficit_reported():
    """The cut-off tail shows up as trace deficit and a warning."""
    rho = coherent_fock(3 + 3j, 20)
    assert rho.trace_deficit == pytest.approx(poisson.sf(19, 18.0), rel=1e-6)
    assert rho.truncation_warning
    assert not coherent_fock(0.5, 20).truncation_warning


def test_density_matrix_validation():
    with pytest.raises(ValidationError):
        FockDensityMatrix(entries=[[0.5, 0.1], [0.0, 0.5]])
    with pytest.raises(ValidationError):
        FockDensityMatrix(entries=[[1.5, 0.0], [0.0, -0.5]])
    with pytest.raises(ValidationError):
        FockDensityMatrix(entries=np.eye(2))


def test_displacement_of_vacuum_gives_coherent_amplitudes():
    alpha = 0.7 - 0.4j
    col = displacement_elements(np.array([alpha]), 12, 12)[0][:, 0]
    # <m|alpha><alpha|0> = <m|D(alpha)|0> e^(-|alpha|^2/2)
    assert np.allclose(col * np.exp(-0.5 * abs(alpha) ** 2), coherent_fock(alpha, 12).entries[:, 0])


def test_displacement_is_unitary_on_low_block():
    """D(alpha) rows below the cutoff are orthonormal when enough columns are kept."""
    d = displacement_elements(np.array([0.8j]), 10, 60)[0]
    assert np.allclose(d @ d.conj().T, np.eye(10), atol=1e-10)


def test_vacuum_conversion():
    rho = gaussian_to_fock(vacuum(), 10)
    expected = np.zeros((10, 10))
    expected[0, 0] = 1.0
    assert np.allclose(rho.entries, expected, atol=1e-12)


def test_coherent_conversion_matches_closed_form():
    """Gaussian to Fock reproduces the coherent projector within 1e-8."""
    alpha = 1.2 - 0.9j
    via_gaussian = gaussian_to_fock(coherent_state(alpha), 30)
    assert np.abs(via_gaussian.entries - coherent_fock(alpha, 30).entries).max() < 1e-8


def test_thermal_conversion():
    """Covariance 3I is a thermal state with one photon on average."""
    rho = gaussian_to_fock(GaussianState(mean=[0.0, 0.0], cov=3 * np.eye(2)), 40)
    assert np.allclose(rho.diagonal[:10], 0.5 ** (np.arange(10) + 1))
    assert np.allclose(rho.entries - np.diag(np.diag(rho.entries)), 0.0, atol=1e-12)


def test_squeezed_vacuum_has_even_photons():
    """3 dB squeezing: odd populations vanish and <n> = (Vx + Vp - 2) / 4."""
    rho = gaussian_to_fock(squeezed_vacuum(10 * np.log10(2)), 30)
    assert np.allclose(rho.diagonal[1::2], 0.0, atol=1e-12)
    assert photon_number(rho) == pytest.approx((0.5 + 2.0 - 2.0) / 4, abs=1e-8)
    vx, vp = quadrature_variances(rho)
    assert vx == pytest.approx(0.5, abs=1e-6)
    assert vp == pytest.approx(2.0, abs=1e-6)


def test_squeezing_angle_follows_covariance():
    """A p-squeezed covariance lands on the p quadrature in the Fock basis."""
    rho = gaussian_to_fock(squeezed_vacuum(10 * np.log10(2), angle=np.pi / 2), 30)
    vx, vp = quadrature_variances(rho)
    assert vx == pytest.approx(2.0, abs=1e-6)
    assert vp == pytest.approx(0.5, abs=1e-6)


def test_displaced_squeezed_thermal_moments():
    state = GaussianState(mean=[1.0, -0.5], cov=[[1.6, 0.3], [0.3, 1.2]])
    rho = gaussian_to_fock(state, 40)
    a = annihilation(40)
    r = rho.normalized().entries
    assert np.trace(r @ (a + a.T)).real == pytest.approx(1.0, abs=1e-8)
    assert np.trace(r @ (-1j * (a - a.T))).real == pytest.approx(-0.5, abs=1e-8)
    vx, vp = quadrature_variances(rho)
    assert vx == pytest.approx(1.6, abs=1e-6)
    assert vp == pytest.approx(1.2, abs=1e-6)


def test_conversion_rejects_multimode():
    with pytest.raises(DimensionMismatchError):
        gaussian_to_fock(vacuum(2))


def test_mixture_conversion_merges_identical_branches():
    half = (0.25, coherent_state(0.5))
    twice = GaussianMixture.from_branches([half, half])
    once = GaussianMixture.from_branches([(1.0, coherent_state(0.5))])
    assert np.allclose(mixture_to_fock(twice, 15).entries, mixture_to_fock(once, 15).entries)


def test_mixture_conversion_rejects_empty():
    with pytest.raises(ProtocolError):
        mixture_to_fock(GaussianMixture.empty(), 10)


def test_baseline_in_fock_space():
    """0.75 |alpha><alpha| + 0.25 |0><0| has fidelity 0.75 + 0.25 e^(-18) to |alpha>."""
    alpha = 3 + 3j
    rho = mixture_to_fock(single_channel_mixture(alpha, 0.25), 45)
    fid = uhlmann_fidelity(rho, coherent_fock(alpha, 45))
    assert fid == pytest.approx(single_channel_baseline(alpha, 0.25), abs=1e-5)


def test_uhlmann_fidelity_properties():
    """Symmetric, unity on identical states, overlap for pure states."""
    a = coherent_fock(0.5, 20)
    b = coherent_fock(0.5j, 20)
    assert uhlmann_fidelity(a, b) == pytest.approx(np.exp(-0.5), abs=1e-9)
    assert uhlmann_fidelity(a, b) == pytest.approx(uhlmann_fidelity(b, a), abs=1e-10)
    assert uhlmann_fidelity(a, a) == pytest.approx(1.0, abs=1e-9)
    mixed = gaussian_to_fock(squeezed_vacuum(2.0, 4.0, 0.3), 20)
    assert uhlmann_fidelity(mixed, a) == pytest.approx(uhlmann_fidelity(a, mixed), abs=1e-8)
    with pytest.raises(DimensionMismatchError):
        uhlmann_fidelity(a, coherent_fock(0.5, 21))


def test_vacuum_wigner_function():
    """Peak 1/(2 pi) at the origin, unit integral, standard-normal x marginal."""
    grid = wigner_from_fock(coherent_fock(0.0, 5), PhaseSpaceGrid(points=161))
    centre = np.argmin(np.abs(grid.x))
    assert grid.values[centre, centre] == pytest.approx(1.0 / (2.0 * np.pi))
    assert grid.integral() == pytest.approx(1.0, abs=1e-6)
    assert grid.x_marginal()[centre] == pytest.approx(1.0 / np.sqrt(2.0 * np.pi), abs=1e-6)


def test_coherent_wigner_is_displaced():
    rho = coherent_fock(1 - 0.5j, 25)
    grid = wigner_from_fock(rho, PhaseSpaceGrid.centered((2.0, -1.0), 6.0, points=121))
    i, j = np.unravel_index(np.argmax(grid.values), grid.values.shape)
    assert grid.x[i] == pytest.approx(2.0)
    assert grid.p[j] == pytest.approx(-1.0)


def test_single_photon_wigner_is_negative():
    entries = np.zeros((4, 4))
    entries[1, 1] = 1.0
    grid = wigner_from_fock(FockDensityMatrix(entries=entries), PhaseSpaceGrid(points=81))
    centre = np.argmin(np.abs(grid.x))
    assert grid.values[centre, centre] == pytest.approx(-1.0 / (2.0 * np.pi))
    assert grid.integral() == pytest.approx(1.0, abs=1e-6)


def test_phase_space_grid_validation():
    with pytest.raises(ValidationError):
        PhaseSpaceGrid(x_min=1.0, x_max=-1.0)
    grid = PhaseSpaceGrid.centered((1.0, 2.0), 3.0, points=7)
    assert grid.x[0] == pytest.approx(-2.0)
    assert grid.p[-1] == pytest.approx(5.0)


def test_fidelity_invariant_under_common_rotation():
    """Rotating both states by the same phase leaves the Uhlmann fidelity unchanged."""
    mixed = GaussianState(mean=[1.0, 0.5], cov=squeezed_vacuum(2.0, 4.0, 0.2).cov)
    pure = coherent_state(0.6 - 0.3j)
    before = uhlmann_fidelity(gaussian_to_fock(mixed, 30), gaussian_to_fock(pure, 30))
    for angle in (0.7, np.pi / 3, -2.1):
        turn = phase_shift(1, 0, angle)
        after = uhlmann_fidelity(
            gaussian_to_fock(apply(turn, mixed), 30), gaussian_to_fock(apply(turn, pure), 30)
        )
        assert after == pytest.approx(before, abs=1e-6)


def test_wigner_marginal_of_displaced_squeezed_state():
    """Integrating W over p gives the Gaussian x-quadrature density."""
    cov = squeezed_vacuum(3.0, 3.0, 0.4).cov
    state = GaussianState(mean=[1.2, -0.8], cov=cov)
    grid = wigner_from_fock(
        gaussian_to_fock(state, 40), PhaseSpaceGrid.centered((1.2, -0.8), 7.0, points=201)
    )
    expected = norm.pdf(grid.x, loc=1.2, scale=np.sqrt(cov[0, 0]))
    assert np.abs(grid.x_marginal() - expected).max() < 1e-3
    assert grid.integral() == pytest.approx(1.0, abs=1e-3)
