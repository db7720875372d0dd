"""Cohort ingestion, reference-model construction, and synthetic cohorts.

The real reference cohort (38 young healthy subjects) is distributed
privately, so alongside the loaders this module can synthesize a stand-in
cohort by simulating the independent-channel controller with log-normally
perturbed parameters and filtered motor noise; it is always labeled
``provenance: synthetic``.
"""

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.signal

from .controllers import IcConfig, check_burn_in, run_trial
from .errors import ConfigError, SchemaError, SingularReferenceError
from .metric import ReferenceModel, cohort_scores, expand, make_reference
from .plant import DipParams
from .prts import StimulusConfig, TiltTrajectory
from .spectral import (
    BandSpec,
    Frf11,
    PeakSpectrum,
    SpectralWeights,
    analysis_segment,
    compute_frf,
    default_grid,
    make_bands,
    peak_spectrum,
    spectral_weights,
)


@dataclass(frozen=True)
class SubjectRecord:
    """One cohort member: metadata plus a sway trace and/or a ready FRF."""

    subject_id: str
    age_y: float
    mass_kg: float
    height_m: float
    sway_trace: np.ndarray | None = None  # [deg], aligned to the stimulus
    frf: Frf11 | None = None

    def __post_init__(self):
        if self.sway_trace is None and self.frf is None:
            raise SchemaError(
                f"subject {self.subject_id}: need a sway trace or an FRF"
            )
        if min(self.age_y, self.mass_kg, self.height_m) <= 0:
            raise SchemaError(
                f"subject {self.subject_id}: metadata fields must be positive"
            )


@dataclass(frozen=True)
class CohortManifest:
    records: tuple
    stimulus: StimulusConfig
    provenance: str  # "measured" | "synthetic"

    def __post_init__(self):
        ids = [r.subject_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate subject ids in cohort")
        if self.provenance not in ("measured", "synthetic"):
            raise SchemaError(f"unknown provenance {self.provenance!r}")


def _read_trace_csv(path: Path, sample_rate: float, n_expected: int) -> np.ndarray:
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["t_s", "sway_deg"]:
            raise SchemaError(f"{path}: expected header 't_s,sway_deg'")
        rows = [(float(t), float(x)) for t, x in reader]
    if len(rows) < 2:
        raise SchemaError(f"{path}: trace too short")
    t = np.array([r[0] for r in rows])
    dt = np.diff(t)
    if abs(dt.mean() - 1.0 / sample_rate) > 1e-9 or np.ptp(dt) > 1e-9:
        raise SchemaError(
            f"{path}: sample rate {1.0 / dt.mean():.6g} Hz does not match "
            f"the configured {sample_rate:g} Hz (no silent resampling)"
        )
    if len(rows) != n_expected:
        raise SchemaError(
            f"{path}: {len(rows)} samples, stimulus expects {n_expected}"
        )
    return np.array([r[1] for r in rows])


def _read_frf_json(path: Path) -> Frf11:
    with open(path) as fh:
        d = json.load(fh)
    try:
        centers = np.asarray(d["centers_hz"], dtype=float)
        re = np.asarray(d["re"], dtype=float)
        im = np.asarray(d["im"], dtype=float)
    except KeyError as exc:
        raise SchemaError(f"{path}: FRF json missing key {exc}") from exc
    if not (len(centers) == len(re) == len(im) == 11):
        raise SchemaError(f"{path}: FRF json must carry 11 components")
    return Frf11(values=re + 1j * im, centers=centers)


def load_cohort(path) -> CohortManifest:
    """Read a cohort directory: manifest.json plus per-subject files."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise SchemaError(f"{root}: no manifest.json")
    with open(manifest_path) as fh:
        m = json.load(fh)
    try:
        stimulus = StimulusConfig.from_dict(m["stimulus"])
        provenance = m["provenance"]
        subjects = m["subjects"]
    except KeyError as exc:
        raise SchemaError(f"manifest missing key {exc}") from exc

    n_expected = len(stimulus.build().samples)
    records = []
    for s in subjects:
        try:
            sid = s["id"]
            meta = (float(s["age_y"]), float(s["mass_kg"]), float(s["height_m"]))
        except KeyError as exc:
            raise SchemaError(f"subject entry missing key {exc}") from exc
        trace = None
        frf = None
        if "trace" in s:
            trace = _read_trace_csv(
                root / s["trace"], stimulus.sample_rate, n_expected
            )
        if "frf" in s:
            frf = _read_frf_json(root / s["frf"])
        records.append(
            SubjectRecord(sid, meta[0], meta[1], meta[2], trace, frf)
        )
    return CohortManifest(
        records=tuple(records), stimulus=stimulus, provenance=provenance
    )


def save_cohort(cohort: CohortManifest, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    subjects = []
    fs = cohort.stimulus.sample_rate
    for r in cohort.records:
        entry = {
            "id": r.subject_id,
            "age_y": r.age_y,
            "mass_kg": r.mass_kg,
            "height_m": r.height_m,
        }
        if r.sway_trace is not None:
            fname = f"{r.subject_id}_sway.csv"
            with open(root / fname, "w") as fh:
                fh.write("t_s,sway_deg\n")
                for i, x in enumerate(r.sway_trace):
                    fh.write(f"{i / fs:.12g},{x:.12g}\n")
            entry["trace"] = fname
        if r.frf is not None:
            fname = f"{r.subject_id}_frf.json"
            with open(root / fname, "w") as fh:
                json.dump(
                    {
                        "centers_hz": list(r.frf.centers),
                        "re": list(r.frf.values.real),
                        "im": list(r.frf.values.imag),
                    },
                    fh,
                    sort_keys=True,
                )
            entry["frf"] = fname
        subjects.append(entry)
    with open(root / "manifest.json", "w") as fh:
        json.dump(
            {
                "stimulus": cohort.stimulus.descriptor(),
                "provenance": cohort.provenance,
                "subjects": subjects,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


def resolve_frfs(cohort: CohortManifest, bands: BandSpec) -> list:
    """Per-subject FRFs, computed from traces where not already present."""
    traj = None
    frfs = []
    for r in cohort.records:
        if r.frf is not None:
            frfs.append(r.frf)
            continue
        if traj is None:
            traj = cohort.stimulus.build()
        frfs.append(
            compute_frf(
                traj, r.sway_trace, bands,
                discard_periods=cohort.stimulus.discard_periods,
            )
        )
    return frfs


def build_reference(
    cohort: CohortManifest,
    bands: BandSpec,
    stimulus_spectrum: PeakSpectrum,
    shrinkage: float = 0.0,
) -> ReferenceModel:
    """Cohort mean, shrunk unbiased covariance, and stimulus weights.

    The covariance is estimated on unweighted expanded FRFs (weights enter
    only inside the score); shrinkage blends it toward its own diagonal.
    """
    if len(cohort.records) < 2:
        raise ConfigError("need at least 2 subjects to build a reference")
    if not 0.0 <= shrinkage <= 1.0:
        raise ConfigError("shrinkage must be in [0, 1]")
    frfs = resolve_frfs(cohort, bands)
    x = np.stack([expand(f) for f in frfs])
    mu = x.mean(axis=0)
    centered = x - mu
    sigma = centered.T @ centered / (len(frfs) - 1)
    sigma = (1.0 - shrinkage) * sigma + shrinkage * np.diag(np.diag(sigma))
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularReferenceError(
            "cohort covariance is singular after shrinkage "
            f"{shrinkage}; increase the shrinkage parameter"
        ) from exc
    weights = spectral_weights(stimulus_spectrum, bands)
    ref = make_reference(
        mu=mu,
        sigma=sigma,
        weights=weights,
        bands=bands,
        n_subjects=len(frfs),
        shrinkage=shrinkage,
        provenance=cohort.provenance,
    )
    scores = cohort_scores(ref, frfs)
    return replace(ref, cohort_scores=scores)


def build_reference_from_cohort(
    cohort: CohortManifest, shrinkage: float = 0.0
) -> ReferenceModel:
    """Convenience wrapper deriving bands and stimulus spectrum from config."""
    traj = cohort.stimulus.build()
    bands = make_bands(default_grid(cohort.stimulus.base_freq))
    tilt_seg, _ = analysis_segment(
        traj, traj.samples, cohort.stimulus.discard_periods
    )
    spectrum = peak_spectrum(tilt_seg, bands.grid, traj.sample_rate)
    return build_reference(cohort, bands, spectrum, shrinkage)


def _filtered_noise(rng, n: int, std: float, dt: float, tc: float) -> np.ndarray:
    """Low-passed white torque noise, rescaled to the requested std."""
    if std == 0.0:
        return np.zeros(n)
    white = rng.standard_normal(n)
    alpha = dt / (tc + dt)
    shaped = scipy.signal.lfilter([alpha], [1.0, -(1.0 - alpha)], white)
    return std * shaped / np.sqrt(alpha / (2.0 - alpha))


def _perturbed_ic(nominal: IcConfig, rng, dispersion: float, dt: float) -> IcConfig:
    z = rng.standard_normal(5)
    kp = nominal.kp * np.exp(dispersion * z[0])
    kd = nominal.kd * np.exp(dispersion * z[1])
    delay = float(
        np.clip(nominal.delay_s * np.exp(dispersion * z[2]), 0.02, 0.2)
    )
    delay = round(delay / dt) * dt
    w_vest = float(np.clip(nominal.w_vest * np.exp(dispersion * z[3]), 0.05, 0.95))
    k_force = float(np.clip(nominal.k_force * np.exp(dispersion * z[4]), 0.0, 0.8))
    return replace(
        nominal,
        kp=kp,
        kd=kd,
        delay_s=delay,
        w_prop=1.0 - w_vest - nominal.w_vis,
        w_vest=w_vest,
        k_force=k_force,
    )


def synthesize_cohort(
    n_subjects: int,
    seed: int,
    plant: DipParams,
    nominal: IcConfig,
    stimulus: StimulusConfig,
    dispersion: float = 0.10,
    noise_torque_std: float = 1.0,
    noise_time_constant: float = 0.1,
    plant_dt: float = 1e-3,
    max_retries: int = 20,
) -> CohortManifest:
    """Simulate a stand-in cohort of perturbed independent-channel trials.

    Gains, delay, sensory weights, and torque feedback are log-normally
    perturbed per subject; filtered motor noise makes the FRF scatter
    full-rank. A diverging draw is resampled up to max_retries times.
    Deterministic for a fixed seed.
    """
    if n_subjects < 1:
        raise ConfigError("n_subjects must be >= 1")
    check_burn_in(nominal, plant, dt=plant_dt)
    traj = stimulus.build()
    n_steps = len(traj.samples) * round(1.0 / (stimulus.sample_rate * plant_dt))
    records = []
    for i in range(n_subjects):
        result = None
        cfg = nominal
        for attempt in range(max_retries):
            rng = np.random.default_rng([seed, i, attempt])
            cfg = (
                _perturbed_ic(nominal, rng, dispersion, plant_dt)
                if dispersion > 0
                else nominal
            )
            noise = _filtered_noise(
                rng, n_steps, noise_torque_std, plant_dt, noise_time_constant
            )
            try:
                res = run_trial(
                    cfg, plant, traj, plant_dt=plant_dt,
                    burn_in=False, noise_ankle=noise,
                )
            except ConfigError:
                continue
            if not res.fell:
                result = res
                break
        if result is None:
            raise ConfigError(
                f"subject {i}: no stable draw within {max_retries} retries"
            )
        meta_rng = np.random.default_rng([seed, i, 10_000])
        records.append(
            SubjectRecord(
                subject_id=f"synth{i:03d}",
                age_y=float(np.round(meta_rng.uniform(20.0, 35.0), 1)),
                mass_kg=plant.m1 / 0.293,
                height_m=plant.l1 / 0.530,
                sway_trace=result.com_sway_deg,
            )
        )
    return CohortManifest(
        records=tuple(records), stimulus=stimulus, provenance="synthetic"
    )


# ---------------------------------------------------------------------------
# Reference model persistence


def save_reference(ref: ReferenceModel, stimulus: StimulusConfig, path) -> None:
    d = {
        "mu": list(ref.mu),
        "sigma": [list(row) for row in ref.sigma],
        "weights": list(ref.weights.w),
        "centers_hz": list(ref.bands.centers),
        "n_subjects": ref.n_subjects,
        "lambda": ref.shrinkage,
        "cohort_scores": [] if ref.cohort_scores is None else list(ref.cohort_scores),
        "provenance": ref.provenance,
        "grid": {
            "base_freq_hz": ref.bands.grid.base_freq,
            "n_peaks": len(ref.bands.grid),
        },
        "bands_hash": ref.bands.hash,
        "stimulus": stimulus.descriptor(),
        "stimulus_hash": stimulus.hash,
    }
    with open(path, "w") as fh:
        json.dump(d, fh, sort_keys=True)
        fh.write("\n")


def load_reference(path):
    """Read a reference model file; returns (model, stimulus config)."""
    with open(path) as fh:
        d = json.load(fh)
    try:
        grid = default_grid(float(d["grid"]["base_freq_hz"]))
        if len(grid) != int(d["grid"]["n_peaks"]):
            raise SchemaError(f"{path}: unexpected peak-grid length")
        bands = make_bands(grid)
        if bands.hash != d["bands_hash"]:
            raise SchemaError(f"{path}: band table hash mismatch")
        scores = np.asarray(d["cohort_scores"], dtype=float)
        ref = make_reference(
            mu=np.asarray(d["mu"], dtype=float),
            sigma=np.asarray(d["sigma"], dtype=float),
            weights=SpectralWeights(w=np.asarray(d["weights"], dtype=float)),
            bands=bands,
            n_subjects=int(d["n_subjects"]),
            shrinkage=float(d["lambda"]),
            cohort_scores=scores if scores.size else None,
            provenance=d["provenance"],
        )
        stimulus = StimulusConfig.from_dict(d["stimulus"])
    except KeyError as exc:
        raise SchemaError(f"{path}: reference file missing key {exc}") from exc
    if stimulus.hash != d["stimulus_hash"]:
        raise SchemaError(f"{path}: stimulus hash mismatch")
    return ref, stimulus
