"""Human-likeness distance, Mahalanobis comparison, empirical CDF, bootstrap.

The score D is a weighted precision-matrix norm of the difference between a
tested FRF (expanded to 22 real components) and a human cohort mean:
D = sqrt((S d)^T Sigma^-1 (S d)) with S = diag([w, w]). Smaller D means
closer to the average human response.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, InvalidReferenceError
from .spectral import BandSpec, Frf11, SpectralWeights

DIM = 22


def expand(frf: Frf11) -> np.ndarray:
    """[Re_1..Re_11, Im_1..Im_11] as a length-22 real vector."""
    return np.concatenate([frf.values.real, frf.values.imag])


def collapse(vec: np.ndarray, centers: np.ndarray) -> Frf11:
    """Inverse of expand."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (DIM,):
        raise ConfigError(f"expected a length-{DIM} vector, got {vec.shape}")
    return Frf11(values=vec[:11] + 1j * vec[11:], centers=centers)


@dataclass(frozen=True)
class ReferenceModel:
    """Cohort mean, covariance, precision, and weights for scoring."""

    mu: np.ndarray  # length 22
    sigma: np.ndarray  # 22 x 22
    precision: np.ndarray  # 22 x 22
    weights: SpectralWeights
    bands: BandSpec
    n_subjects: int
    shrinkage: float = 0.0
    cohort_scores: np.ndarray | None = None
    provenance: str = "unknown"

    def __post_init__(self):
        if self.mu.shape != (DIM,) or self.sigma.shape != (DIM, DIM):
            raise InvalidReferenceError("mu must be 22-dim, sigma 22x22")
        scale = max(1.0, float(np.abs(self.sigma).max()))
        if np.abs(self.sigma - self.sigma.T).max() > 1e-12 * scale:
            raise InvalidReferenceError("sigma is not symmetric")
        resid = np.abs(self.precision @ self.sigma - np.eye(DIM)).max()
        if resid > 1e-8:
            raise InvalidReferenceError(
                f"precision * sigma deviates from identity by {resid:.2e}"
            )
        try:
            np.linalg.cholesky(self.precision)
        except np.linalg.LinAlgError as exc:
            raise InvalidReferenceError("precision is not positive definite") from exc


def make_reference(
    mu: np.ndarray,
    sigma: np.ndarray,
    weights: SpectralWeights,
    bands: BandSpec,
    n_subjects: int,
    shrinkage: float = 0.0,
    cohort_scores=None,
    provenance: str = "unknown",
) -> ReferenceModel:
    """Construct a reference, inverting sigma via Cholesky."""
    sigma = np.asarray(sigma, dtype=float)
    sigma = 0.5 * (sigma + sigma.T)
    try:
        cho = scipy.linalg.cho_factor(sigma)
    except np.linalg.LinAlgError as exc:
        raise InvalidReferenceError("sigma is not positive definite") from exc
    precision = scipy.linalg.cho_solve(cho, np.eye(DIM))
    precision = 0.5 * (precision + precision.T)
    return ReferenceModel(
        mu=np.asarray(mu, dtype=float),
        sigma=sigma,
        precision=precision,
        weights=weights,
        bands=bands,
        n_subjects=int(n_subjects),
        shrinkage=float(shrinkage),
        cohort_scores=None if cohort_scores is None else np.asarray(cohort_scores, dtype=float),
        provenance=provenance,
    )


@dataclass(frozen=True)
class ScoreReport:
    """Distance D plus the unweighted Mahalanobis score and CDF placement."""

    distance: float
    mahalanobis: float
    cdf_percentile: float | None
    per_band_contribution: np.ndarray  # length 11, sums to D**2
    centers: np.ndarray = field(default=None)


def _weighted_quadratic(delta: np.ndarray, ref: ReferenceModel, weighted: bool):
    if weighted:
        s = np.concatenate([ref.weights.w, ref.weights.w])
        z = s * delta
    else:
        z = delta
    pz = ref.precision @ z
    mass = z * pz  # symmetrized split of the quadratic form
    total = float(mass.sum())
    # Guard tiny negative totals from roundoff at delta ~ 0.
    return max(total, 0.0), mass


def likeness_score(frf: Frf11, ref: ReferenceModel) -> ScoreReport:
    """Weighted precision-matrix distance of an FRF to the cohort mean.

    Per-band contributions pair component k with k+11 (real with imaginary
    part); cross terms of the quadratic form are split symmetrically, so
    individual contributions can be negative for strongly correlated
    covariances, while the total always sums to D**2.
    """
    delta = expand(frf) - ref.mu
    q, mass = _weighted_quadratic(delta, ref, weighted=True)
    qm, _ = _weighted_quadratic(delta, ref, weighted=False)
    d = float(np.sqrt(q))
    per_band = mass[:11] + mass[11:]
    cdf = None
    if ref.cohort_scores is not None and len(ref.cohort_scores) > 0:
        cdf = empirical_cdf(d, ref.cohort_scores)
    return ScoreReport(
        distance=d,
        mahalanobis=float(np.sqrt(qm)),
        cdf_percentile=cdf,
        per_band_contribution=per_band,
        centers=frf.centers,
    )


def mahalanobis_score(frf: Frf11, ref: ReferenceModel) -> float:
    """Unweighted precision-matrix distance (S = identity)."""
    delta = expand(frf) - ref.mu
    q, _ = _weighted_quadratic(delta, ref, weighted=False)
    return float(np.sqrt(q))


def empirical_cdf(score: float, cohort_scores) -> float:
    """Fraction of cohort scores strictly smaller than the tested score."""
    cohort_scores = np.asarray(cohort_scores, dtype=float)
    if cohort_scores.size == 0:
        raise ConfigError("cohort_scores must be non-empty")
    return float(np.count_nonzero(cohort_scores < score) / cohort_scores.size)


def bootstrap_cdf(cohort_scores, n_boot: int, grid, seed: int):
    """Bootstrap the empirical CDF on a score grid.

    Resamples the cohort with replacement n_boot times and returns the
    pointwise mean and (population) variance of the CDF across resamples.
    """
    cohort_scores = np.asarray(cohort_scores, dtype=float)
    if cohort_scores.size == 0:
        raise ConfigError("cohort_scores must be non-empty")
    if n_boot < 1:
        raise ConfigError(f"n_boot must be >= 1, got {n_boot}")
    grid = np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)
    n = cohort_scores.size
    curves = np.empty((n_boot, grid.size))
    for b in range(n_boot):
        resample = np.sort(rng.choice(cohort_scores, size=n, replace=True))
        curves[b] = np.searchsorted(resample, grid, side="left") / n
    return curves.mean(axis=0), curves.var(axis=0)


def cohort_scores(ref: ReferenceModel, cohort_frfs) -> np.ndarray:
    """likeness_score distance of each cohort member against the reference."""
    return np.array([likeness_score(f, ref).distance for f in cohort_frfs])
