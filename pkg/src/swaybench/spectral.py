"""Single-bin DFT analysis, band averaging, FRF estimation, spectral weights.

The pipeline: evaluate complex amplitudes of stimulus and response at the
odd-harmonic peak grid, average them over 11 overlapping bands in the
complex domain, then divide band-averaged cross spectrum by band-averaged
input spectrum to get an 11-component FRF. Band power also yields the
weight vector that downweights noisy high-frequency components.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BandCoverageError, ConfigError, DegenerateStimulusError
from .prts import PeakGrid, TiltTrajectory
from .util import config_hash

# Published 11 band centers [Hz].
BAND_CENTERS_HZ = np.array(
    [0.1, 0.3, 0.6, 0.8, 1.1, 1.4, 1.8, 2.2, 2.7, 3.5, 4.4]
)

# Pinned band membership as inclusive (lo, hi) index ranges into the
# 45-entry odd-multiple grid (base 0.05 Hz, top 4.45 Hz). Chosen so the
# arithmetic-mean centers reproduce BAND_CENTERS_HZ exactly; adjacent
# bands share boundary peaks except the last pair: a band centered at
# 4.4 Hz drawn from peaks <= 4.45 Hz can only be {4.35, 4.45}.
BAND_INDEX_RANGES = (
    (0, 1),
    (1, 4),
    (4, 7),
    (6, 9),
    (8, 13),
    (11, 16),
    (14, 21),
    (19, 24),
    (23, 30),
    (30, 39),
    (43, 44),
)

CENTER_TOLERANCE_HZ = 0.05
DEFAULT_STIMULUS_FLOOR = 1e-12


@dataclass(frozen=True)
class PeakSpectrum:
    """Complex amplitude at each analysis peak."""

    values: np.ndarray  # complex
    grid: PeakGrid

    def __post_init__(self):
        if len(self.values) != len(self.grid):
            raise ConfigError("spectrum length must match grid length")


@dataclass(frozen=True)
class BandSpec:
    """Index sets grouping analysis peaks into 11 averaged bands."""

    bands: tuple  # tuple of index arrays
    centers: np.ndarray  # [Hz]
    grid: PeakGrid

    def __len__(self) -> int:
        return len(self.bands)

    @property
    def hash(self) -> str:
        return config_hash(
            {
                "base_freq": self.grid.base_freq,
                "n_peaks": len(self.grid),
                "bands": [[int(i) for i in b] for b in self.bands],
            }
        )


@dataclass(frozen=True)
class Frf11:
    """Band-averaged frequency response function at the 11 centers."""

    values: np.ndarray  # complex, length 11
    centers: np.ndarray  # [Hz]

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("FRF contains non-finite entries")


@dataclass(frozen=True)
class SpectralWeights:
    """Per-band weights from stimulus band power, normalized to max 1."""

    w: np.ndarray  # length 11, nonnegative


def single_bin_dft(signal: np.ndarray, freq: float, sample_rate: float) -> complex:
    """Complex amplitude of one frequency: (2/N) * sum x[n] e^{-i 2pi f n / fs}.

    Requires the record to span an integer number of cycles so the bin is
    orthogonal to every other periodic component.
    """
    signal = np.asarray(signal, dtype=np.float64)
    n = len(signal)
    cycles = freq * n / sample_rate
    if abs(cycles - round(cycles)) > 1e-9 * max(1.0, abs(cycles)) or round(cycles) < 1:
        raise ConfigError(
            f"record spans {cycles} cycles of {freq} Hz, need a nonzero integer"
        )
    phase = np.exp(-2j * np.pi * freq / sample_rate * np.arange(n))
    return complex((2.0 / n) * np.dot(signal, phase))


def peak_spectrum(signal: np.ndarray, grid: PeakGrid, sample_rate: float) -> PeakSpectrum:
    """single_bin_dft evaluated at every grid frequency."""
    vals = np.array(
        [single_bin_dft(signal, f, sample_rate) for f in grid.f_peak]
    )
    return PeakSpectrum(values=vals, grid=grid)


def make_bands(grid: PeakGrid) -> BandSpec:
    """Build the pinned 11-band spec over an odd-multiple peak grid.

    Centers are validated against the published list scaled by the grid's
    fundamental, so the standard 0.05 Hz grid reproduces them exactly.
    """
    max_index = max(hi for _, hi in BAND_INDEX_RANGES)
    if len(grid) <= max_index:
        raise BandCoverageError(
            f"grid has {len(grid)} peaks, band table needs {max_index + 1}"
        )
    scale = grid.base_freq / 0.05
    bands = []
    centers = []
    for k, (lo, hi) in enumerate(BAND_INDEX_RANGES):
        idx = np.arange(lo, hi + 1)
        center = grid.f_peak[idx].mean()
        target = BAND_CENTERS_HZ[k] * scale
        if abs(center - target) > CENTER_TOLERANCE_HZ * scale + 1e-12:
            raise BandCoverageError(
                f"band {k + 1} center {center:.4f} Hz misses target {target:.4f} Hz"
            )
        bands.append(idx)
        centers.append(center)
    centers = np.array(centers)
    if np.any(np.diff(centers) <= 0):
        raise BandCoverageError("band centers must be strictly increasing")
    return BandSpec(bands=tuple(bands), centers=centers, grid=grid)


def band_average_complex(spec: PeakSpectrum, bands: BandSpec) -> np.ndarray:
    """Arithmetic mean of complex peak values over each band."""
    if spec.grid is not bands.grid and not np.array_equal(
        spec.grid.f_peak, bands.grid.f_peak
    ):
        raise ConfigError("spectrum grid does not match band grid")
    return np.array([spec.values[idx].mean() for idx in bands.bands])


def estimate_frf(
    u_banded: np.ndarray,
    y_banded: np.ndarray,
    centers: np.ndarray,
    floor: float = DEFAULT_STIMULUS_FLOOR,
) -> Frf11:
    """Component-wise conj(U)*Y / conj(U)*U on band-level spectra."""
    u_banded = np.asarray(u_banded, dtype=complex)
    y_banded = np.asarray(y_banded, dtype=complex)
    if u_banded.shape != y_banded.shape:
        raise ConfigError("U and Y band vectors must have equal length")
    mags = np.abs(u_banded)
    if np.any(mags < floor):
        k = int(np.argmin(mags))
        raise DegenerateStimulusError(
            f"stimulus band {k + 1} ({centers[k]:.2f} Hz) has magnitude "
            f"{mags[k]:.3e} below floor {floor:.0e}"
        )
    frf = (np.conj(u_banded) * y_banded) / (np.conj(u_banded) * u_banded)
    return Frf11(values=frf, centers=np.asarray(centers, dtype=float))


def estimate_frf_banded(
    u: PeakSpectrum,
    y: PeakSpectrum,
    bands: BandSpec,
    floor: float = DEFAULT_STIMULUS_FLOOR,
) -> Frf11:
    """Band FRF from cross and input power spectra averaged over each band.

    Component k is sum(conj(U_i) Y_i) / sum(|U_i|^2) over i in the band:
    the input-power-weighted average of the per-peak response, which keeps
    band weights real and positive (pseudorandom stimulus phases would make
    a plain complex average of U ill-conditioned).
    """
    cross = PeakSpectrum(values=np.conj(u.values) * y.values, grid=u.grid)
    power = PeakSpectrum(
        values=(np.conj(u.values) * u.values).real.astype(complex), grid=u.grid
    )
    g_uy = band_average_complex(cross, bands)
    g_u = band_average_complex(power, bands).real
    amps = np.sqrt(np.maximum(g_u, 0.0))
    if np.any(amps < floor):
        k = int(np.argmin(amps))
        raise DegenerateStimulusError(
            f"stimulus band {k + 1} ({bands.centers[k]:.2f} Hz) has rms "
            f"amplitude {amps[k]:.3e} below floor {floor:.0e}"
        )
    return Frf11(values=g_uy / g_u, centers=bands.centers)


def spectral_weights(p: PeakSpectrum, bands: BandSpec) -> SpectralWeights:
    """Root band power of the stimulus spectrum, normalized so max w = 1."""
    raw = np.array(
        [np.sqrt(np.sum(np.abs(p.values[idx]) ** 2)) for idx in bands.bands]
    )
    top = raw.max()
    if top == 0.0:
        raise ConfigError("all-zero stimulus spectrum has no usable weights")
    return SpectralWeights(w=raw / top)


def analysis_segment(traj: TiltTrajectory, series: np.ndarray, discard_periods: int):
    """Drop leading transient periods from a trace aligned to the stimulus."""
    series = np.asarray(series, dtype=np.float64)
    if len(series) != len(traj.samples):
        raise ConfigError(
            f"trace length {len(series)} does not match stimulus length "
            f"{len(traj.samples)}"
        )
    if discard_periods < 0 or discard_periods >= traj.n_periods:
        raise ConfigError("discard_periods must be in [0, n_periods)")
    start = discard_periods * traj.samples_per_period
    return traj.samples[start:], series[start:]


def compute_frf(
    traj: TiltTrajectory,
    sway: np.ndarray,
    bands: BandSpec,
    discard_periods: int = 1,
    floor: float = DEFAULT_STIMULUS_FLOOR,
) -> Frf11:
    """Full pipeline from aligned tilt/sway traces to the 11-component FRF."""
    tilt_seg, sway_seg = analysis_segment(traj, sway, discard_periods)
    u = peak_spectrum(tilt_seg, bands.grid, traj.sample_rate)
    y = peak_spectrum(sway_seg, bands.grid, traj.sample_rate)
    return estimate_frf_banded(u, y, bands, floor=floor)


def stimulus_weights(
    traj: TiltTrajectory, bands: BandSpec, discard_periods: int = 1
) -> SpectralWeights:
    """Spectral weights of a tilt stimulus after transient removal."""
    tilt_seg, _ = analysis_segment(traj, traj.samples, discard_periods)
    p = peak_spectrum(tilt_seg, bands.grid, traj.sample_rate)
    return spectral_weights(p, bands)


def default_grid(base_freq: float = 0.05) -> PeakGrid:
    """Extended odd-multiple grid reaching the highest band center."""
    from .prts import analysis_peaks

    return analysis_peaks(base_freq, 89 * base_freq)
