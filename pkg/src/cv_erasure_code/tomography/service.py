"""Simulated homodyne acquisition and maximum-likelihood (R rho R) reconstruction."""

import csv
from pathlib import Path

import numpy as np

from cv_erasure_code.core.exceptions import OutputError, ProtocolError
from cv_erasure_code.core.logging import get_logger
from cv_erasure_code.fock.schemas import FockDensityMatrix
from cv_erasure_code.gaussian.schemas import GaussianMixture
from cv_erasure_code.tomography.schemas import (
    QuadratureSamples,
    Reconstruction,
    TomographyConfig,
)

logger = get_logger(__name__)

SAMPLES_HEADER = ("theta", "value")


def sample_homodyne(mix: GaussianMixture, n: int, seed: int) -> QuadratureSamples:
    """
    Draw ``n`` homodyne outcomes from a single-mode mixture.

    The LO phase sweeps linearly over [0, 2 pi); for each sample a branch is
    picked by weight and the value drawn from its marginal at that phase.
    """
    if mix.num_modes != 1:
        raise ProtocolError(message="Homodyne sampling expects single-mode branches")
    if len(mix) == 0 or mix.total_mass <= 0.0:
        raise ProtocolError(
            message="Cannot sample from a mixture without probability mass",
            details=[{"field": "mix", "message": "zero total weight", "code": "zero_mass"}],
        )
    rng = np.random.default_rng(seed)
    theta = 2.0 * np.pi * np.arange(n) / n
    weights = mix.weights / mix.total_mass
    branch = rng.choice(len(mix), size=n, p=weights)
    c, s = np.cos(theta), np.sin(theta)
    means = mix.means[branch]
    covs = mix.covs[branch]
    mean = means[:, 0] * c + means[:, 1] * s
    var = covs[:, 0, 0] * c**2 + 2.0 * covs[:, 0, 1] * c * s + covs[:, 1, 1] * s**2
    values = mean + np.sqrt(var) * rng.standard_normal(n)
    return QuadratureSamples(theta=theta, values=values)


def hermite_functions(x: np.ndarray, dim: int) -> np.ndarray:
    """
    <n|x> for n < dim in shot-noise units, shape (dim, len(x)).

    Normalized so that the integral of |<n|x>|^2 over x is 1 with vacuum
    variance 1.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = x / np.sqrt(2.0)
    psi = np.zeros((dim, x.shape[0]))
    psi[0] = np.pi**-0.25 * np.exp(-0.5 * q**2)
    if dim > 1:
        psi[1] = np.sqrt(2.0) * q * psi[0]
    for n in range(2, dim):
        psi[n] = np.sqrt(2.0 / n) * q * psi[n - 1] - np.sqrt((n - 1) / n) * psi[n - 2]
    return psi * 2.0**-0.25


def quadrature_projector(theta: float, x: float, dim: int) -> np.ndarray:
    """Components e^(i n theta) <n|x> of the rotated quadrature eigenstate |x_theta>."""
    return np.exp(1j * np.arange(dim) * theta) * hermite_functions(np.array([x]), dim)[:, 0]


def _value_bin_overlaps(edges: np.ndarray, dim: int, nodes: int) -> np.ndarray:
    """Integral of <m|x><x|n> over each value bin, shape (bins, dim, dim)."""
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    pts = (0.5 * (hi + lo))[:, None] + half[:, None] * gx[None, :]
    wts = half[:, None] * gw[None, :]
    psi = hermite_functions(pts.ravel(), dim).reshape(dim, *pts.shape)
    return np.einsum("mbq,nbq,bq->bmn", psi, psi, wts)


def _phase_bin_factors(edges: np.ndarray, dim: int) -> np.ndarray:
    """Bin-averaged e^(i (m - n) theta), shape (bins, dim, dim)."""
    diff = np.arange(dim)[:, None] - np.arange(dim)[None, :]
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    damping = np.sinc(diff * width / (2.0 * np.pi))
    return np.exp(1j * diff[None, :, :] * centers[:, None, None]) * damping[None, :, :]


class _BinnedLikelihood:
    """Binned homodyne statistics and the matching POVM elements."""

    def __init__(self, samples: QuadratureSamples, config: TomographyConfig):
        dim = config.cutoff
        data_extent = float(np.abs(samples.values).max(initial=0.0))
        self.half_range = max(config.value_range, np.ceil(data_extent) + 0.5)
        phase_edges = np.linspace(0.0, 2.0 * np.pi, config.phase_bins + 1)
        value_edges = np.linspace(-self.half_range, self.half_range, config.value_bins + 1)
        counts, _, _ = np.histogram2d(
            np.mod(samples.theta, 2.0 * np.pi), samples.values, bins=[phase_edges, value_edges]
        )
        self.freq = counts / counts.sum()
        self.occupied = int(np.count_nonzero(counts))
        # each phase bin is one setting; scale so that the POVM sums to identity
        self.phase = _phase_bin_factors(phase_edges, dim) / config.phase_bins
        self.value = _value_bin_overlaps(value_edges, dim, config.quad_nodes)
        self.dim = dim
        self._value_flat = self.value.reshape(self.value.shape[0], -1)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        """p[j, k] = Tr(rho Pi_jk), Pi_jk = phase_j * value_k elementwise."""
        a = (rho.T[None, :, :] * self.phase).reshape(self.phase.shape[0], -1)
        return np.real(a @ self._value_flat.T)

    def log_likelihood(self, probs: np.ndarray) -> float:
        mask = self.freq > 0
        return float(np.sum(self.freq[mask] * np.log(np.clip(probs[mask], 1e-300, None))))

    def r_operator(self, probs: np.ndarray) -> np.ndarray:
        ratio = np.where(self.freq > 0, self.freq / np.clip(probs, 1e-300, None), 0.0)
        per_phase = np.einsum("jk,kmn->jmn", ratio, self.value)
        r = np.sum(per_phase * self.phase, axis=0)
        return 0.5 * (r + r.conj().T)


def _normalize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def maxlik_reconstruct(
    samples: QuadratureSamples, config: TomographyConfig | None = None
) -> Reconstruction:
    """
    Iterate rho <- N[R rho R] on binned phase/value statistics.

    A step that would lower the log-likelihood is replaced by the diluted
    map (I + eps R) rho (I + eps R) with eps halved until it does not.

    Raises:
        ProtocolError: If no samples are given.
    """
    config = config or TomographyConfig()
    if len(samples) == 0:
        raise ProtocolError(
            message="MaxLik needs at least one sample",
            details=[{"field": "samples", "message": "empty record", "code": "no_samples"}],
        )
    binned = _BinnedLikelihood(samples, config)
    degenerate = binned.occupied <= 1
    if degenerate:
        logger.warning("All homodyne samples fell into one bin", samples=len(samples))

    dim = config.cutoff
    identity = np.eye(dim)
    rho = identity.astype(complex) / dim
    probs = binned.probabilities(rho)
    history = [binned.log_likelihood(probs)]
    converged = False
    diluted = 0
    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        r = binned.r_operator(probs)
        candidate = _normalize(r @ rho @ r)
        cand_probs = binned.probabilities(candidate)
        cand_ll = binned.log_likelihood(cand_probs)
        eps = 1.0
        while cand_ll < history[-1] and eps > config.min_dilution:
            eps *= 0.5
            step = identity + eps * r
            candidate = _normalize(step @ rho @ step)
            cand_probs = binned.probabilities(candidate)
            cand_ll = binned.log_likelihood(cand_probs)
        if cand_ll < history[-1]:
            converged = True
            break
        if eps < 1.0:
            diluted += 1
        gain = cand_ll - history[-1]
        rho, probs = candidate, cand_probs
        history.append(cand_ll)
        if gain < config.tolerance:
            converged = True
            break

    logger.info(
        "MaxLik reconstruction finished",
        samples=len(samples),
        cutoff=dim,
        iterations=iteration,
        converged=converged,
        diluted_steps=diluted,
        log_likelihood=history[-1],
    )
    evals, evecs = np.linalg.eigh(rho)
    rho = (evecs * np.clip(evals, 0.0, None)) @ evecs.conj().T
    return Reconstruction(
        rho=FockDensityMatrix(entries=_normalize(rho)),
        iterations=iteration,
        log_likelihood=history,
        converged=converged,
        degenerate=degenerate,
        diluted_steps=diluted,
        value_half_range=float(binned.half_range),
    )


def write_samples_csv(samples: QuadratureSamples, path: Path) -> Path:
    """Write a homodyne record as ``theta,value`` rows."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SAMPLES_HEADER)
            for t, v in zip(samples.theta, samples.values):
                writer.writerow((repr(float(t)), repr(float(v))))
    except OSError as exc:
        raise OutputError(
            message=f"Could not write samples to {path}",
            details=[{"field": "path", "message": str(exc), "code": "io_error"}],
        ) from exc
    return path


def read_samples_csv(path: Path) -> QuadratureSamples:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise OutputError(
            message=f"Could not read samples from {path}",
            details=[{"field": "path", "message": str(exc), "code": "io_error"}],
        ) from exc
    return QuadratureSamples(theta=data[:, 0], values=data[:, 1])
