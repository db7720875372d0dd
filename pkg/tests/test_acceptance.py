"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see per-criterion
status and timings. Tolerances are pinned here and nowhere else.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.signal

from swaybench.controllers import (
    DecConfig,
    EmConfig,
    IcConfig,
    config_to_dict,
    em_decompose,
    run_trial,
)
from swaybench.metric import (
    bootstrap_cdf,
    collapse,
    empirical_cdf,
    likeness_score,
    mahalanobis_score,
    make_reference,
)
from swaybench.plant import DipParams, DipState, dip_step, linearize, mechanical_energy
from swaybench.prts import StimulusConfig
from swaybench.reference import (
    build_reference_from_cohort,
    resolve_frfs,
    save_reference,
    synthesize_cohort,
)
from swaybench.spectral import SpectralWeights, compute_frf, default_grid, make_bands


def _report(n, elapsed, detail=""):
    print(f"\nACCEPTANCE {n:2d} PASS ({elapsed:.2f}s) {detail}")


@pytest.fixture(scope="module")
def cohort38(plant):
    nominal = IcConfig.default(plant)
    return synthesize_cohort(
        38, seed=2024, plant=plant, nominal=nominal,
        stimulus=StimulusConfig(),
    )


def test_criterion_01_prts_spectral_structure(stim_cfg):
    t0 = time.time()
    traj = stim_cfg.build()
    ptp = traj.samples.max() - traj.samples.min()
    assert abs(ptp - 1.0) <= 1e-9

    power = np.abs(np.fft.rfft(traj.samples)) ** 2
    k_base = traj.n_periods
    odd_power = power[k_base::2 * k_base].sum()
    non_dc = power[1:].sum()
    assert odd_power / non_dc >= 0.99
    elapsed = time.time() - t0
    assert elapsed < 1.0
    _report(1, elapsed, f"odd fraction {odd_power / non_dc:.6f}, ptp {ptp:.12f}")


def test_criterion_02_pipeline_soundness_oracle(stimulus, bands):
    t0 = time.time()
    tau = 0.05  # corner well above the checked centers: band-smooth
    sys = scipy.signal.lti([1.0], [tau, 1.0])
    _, y, _ = scipy.signal.lsim(sys, stimulus.samples, stimulus.t)
    frf = compute_frf(stimulus, y, bands, discard_periods=1)
    mask = bands.centers <= 1.5 + 1e-9
    h = 1.0 / (tau * 2j * np.pi * bands.centers[mask] + 1.0)
    mag_err = np.abs(np.abs(frf.values[mask]) / np.abs(h) - 1.0).max()
    phase_err = np.abs(np.degrees(np.angle(frf.values[mask] / h))).max()
    assert mag_err <= 0.02
    assert phase_err <= 2.0
    elapsed = time.time() - t0
    assert elapsed < 5.0
    _report(2, elapsed, f"mag err {mag_err:.4f}, phase err {phase_err:.3f} deg")


def test_criterion_03_metric_identities(bands):
    t0 = time.time()
    rng = np.random.default_rng(99)
    centers = bands.centers

    worst = 0.0
    for _ in range(1000):
        a = rng.standard_normal((22, 22))
        sigma = a @ a.T + 4.0 * np.eye(22)
        w = rng.uniform(0.01, 1.0, 11)
        mu = rng.standard_normal(22)
        ref = make_reference(
            mu=mu, sigma=sigma, weights=SpectralWeights(w=w),
            bands=bands, n_subjects=38,
        )
        vec = rng.standard_normal(22)

        # D(mu) = 0 exactly
        assert likeness_score(collapse(mu, centers), ref).distance == 0.0

        d = likeness_score(collapse(vec, centers), ref).distance
        s = np.concatenate([w, w])
        z = s * (vec - mu)
        oracle = math.sqrt(z @ np.linalg.inv(sigma) @ z)
        worst = max(worst, abs(d - oracle) / oracle)
        assert abs(d - oracle) <= 1e-10 * oracle

    # Euclidean reduction for identity covariance and unit weights
    eye_ref = make_reference(
        mu=np.zeros(22), sigma=np.eye(22),
        weights=SpectralWeights(w=np.ones(11)), bands=bands, n_subjects=38,
    )
    vec = rng.standard_normal(22)
    d = likeness_score(collapse(vec, centers), eye_ref).distance
    assert abs(d - np.linalg.norm(vec)) <= 1e-12

    # homogeneity
    hom_ref = make_reference(
        mu=np.zeros(22), sigma=np.diag(rng.uniform(0.5, 2.0, 22)),
        weights=SpectralWeights(w=rng.uniform(0.1, 1.0, 11)),
        bands=bands, n_subjects=38,
    )
    delta = rng.standard_normal(22)
    base = likeness_score(collapse(delta, centers), hom_ref).distance
    for c in (0.0, 0.5, 3.0, 11.0):
        got = likeness_score(collapse(c * delta, centers), hom_ref).distance
        assert abs(got - c * base) <= 1e-12 * max(1.0, c * base)

    elapsed = time.time() - t0
    assert elapsed < 5.0
    _report(3, elapsed, f"worst oracle deviation {worst:.2e}")


def test_criterion_04_weighted_below_mahalanobis(bands):
    t0 = time.time()
    rng = np.random.default_rng(7)
    centers = bands.centers
    for _ in range(1000):
        sigma = np.diag(rng.uniform(0.05, 5.0, 22))
        w = rng.uniform(0.0, 1.0, 11)
        ref = make_reference(
            mu=np.zeros(22), sigma=sigma, weights=SpectralWeights(w=w),
            bands=bands, n_subjects=38,
        )
        frf = collapse(rng.standard_normal(22), centers)
        assert likeness_score(frf, ref).distance <= mahalanobis_score(
            frf, ref
        ) + 1e-12
    elapsed = time.time() - t0
    assert elapsed < 2.0
    _report(4, elapsed)


def test_criterion_05_cdf_correctness():
    t0 = time.time()
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 80))
        cohort = rng.standard_normal(n)
        score = rng.standard_normal()
        want = sum(1 for s in cohort if s < score) / n
        assert empirical_cdf(score, cohort) == want

    n = 40
    cohort = rng.standard_normal(n)
    grid = np.quantile(cohort, [0.25, 0.5, 0.75])
    p = np.array([empirical_cdf(g, cohort) for g in grid])
    expect = p * (1 - p) / n
    vars_ = np.array(
        [bootstrap_cdf(cohort, 25, grid, seed=s)[1] for s in range(200)]
    ).mean(axis=0)
    ratios = vars_ / expect
    assert np.all((ratios >= 1 / 3) & (ratios <= 3))
    elapsed = time.time() - t0
    assert elapsed < 30.0
    _report(5, elapsed, f"variance ratios {np.round(ratios, 3)}")


def test_criterion_06_sip_hip_lock(plant, stimulus, ic_trial):
    t0 = time.time()
    assert plant.hip_lock_stiffness == 1.0e5
    assert not ic_trial.fell
    max_hip = np.abs(ic_trial.q2_deg).max()
    assert max_hip <= 1e-3
    elapsed = time.time() - t0
    assert elapsed < 10.0
    _report(6, elapsed, f"max |hip| {max_hip:.2e} deg")


def test_criterion_07_plant_physics(plant):
    t0 = time.time()
    p = replace(plant, k_ankle=0.0, b_ankle=0.0, k_hip=0.0, b_hip=0.0)
    state = DipState(alpha_ls=0.06, alpha_ts=-0.04)
    e0 = mechanical_energy(state, p)
    for _ in range(10_000):
        state = dip_step(state, (0.0, 0.0), p, 1e-3)
    drift = abs(mechanical_energy(state, p) - e0) / abs(e0)
    assert drift <= 1e-6

    from swaybench.plant import _accel

    lin = linearize(p)
    arr = p.as_array()

    def accel_em(q, tau):
        a1, a2 = _accel(
            q[0], q[0] + q[1], 0.0, 0.0, tau[0], tau[1], 0.0, 0.0, arr
        )
        return np.array([a1, a2 - a1])

    eps = 1e-6
    fd_dq = np.zeros((2, 2))
    fd_dtau = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        fd_dq[:, j] = (
            accel_em(e, np.zeros(2)) - accel_em(-e, np.zeros(2))
        ) / (2 * eps)
        fd_dtau[:, j] = (
            accel_em(np.zeros(2), e) - accel_em(np.zeros(2), -e)
        ) / (2 * eps)
    np.testing.assert_allclose(fd_dq, np.linalg.solve(lin.b0, lin.g0), rtol=1e-6)
    np.testing.assert_allclose(fd_dtau, np.linalg.inv(lin.b0), rtol=1e-6)
    elapsed = time.time() - t0
    _report(7, elapsed, f"energy drift {drift:.2e}")


def test_criterion_08_em_decoupling(plant):
    t0 = time.time()
    lin = linearize(
        replace(plant, k_ankle=0.0, b_ankle=0.0, k_hip=0.0, b_hip=0.0)
    )
    basis = em_decompose(lin)
    cfg = EmConfig.default(plant)
    dt = 1e-3
    n_delay = round(cfg.delay_equalized_s / dt)

    # linear closed loop in modal coordinates via the physical route:
    # q -> delayed modal PD -> joint torques -> B0 qdd = G0 q + tau
    b0_inv = np.linalg.inv(lin.b0)
    kp = np.asarray(cfg.kp)
    kd = np.asarray(cfg.kd)
    q = basis.w[:, 0] * 1e-3  # excite the first eigenmovement only
    qd = np.zeros(2)
    buf = [np.zeros(4)] * max(n_delay, 1)
    xi1_peak = 0.0
    xi2_peak = 0.0
    for i in range(10_000):
        sample = np.concatenate([q, qd])
        if n_delay > 0:
            j = i % n_delay
            q_d, qd_d = buf[j][:2], buf[j][2:]
            buf[j] = sample
        else:
            q_d, qd_d = q, qd
        xi_d = basis.w_inv @ q_d
        xid_d = basis.w_inv @ qd_d
        u = -(kp * xi_d + kd * xid_d)
        tau = basis.wt_inv @ u
        acc = b0_inv @ (lin.g0 @ q + tau)
        q = q + dt * qd + 0.5 * dt * dt * acc
        qd = qd + dt * acc
        xi = basis.w_inv @ q
        xi1_peak = max(xi1_peak, abs(xi[0]))
        xi2_peak = max(xi2_peak, abs(xi[1]))
    leak = xi2_peak / xi1_peak
    assert leak <= 1e-6
    elapsed = time.time() - t0
    _report(8, elapsed, f"cross-mode leakage {leak:.2e}")


def test_criterion_09_all_controllers_survive(plant, stimulus, bands, ic_trial):
    t0 = time.time()
    results = {"ic": ic_trial}
    results["dec"] = run_trial(DecConfig.default(plant), plant, stimulus)
    results["em"] = run_trial(EmConfig.default(plant), plant, stimulus)
    gains = {}
    for name, res in results.items():
        assert not res.fell, f"{name} fell"
        frf = compute_frf(stimulus, res.com_sway_deg, bands)
        assert np.all(np.isfinite(frf.values))
        gains[name] = float(np.abs(frf.values[0]))
    elapsed = time.time() - t0
    _report(9, elapsed, f"low-band gains {gains}")


def test_criterion_10_synthetic_cohort_substitute(plant, stimulus, bands, cohort38):
    t0 = time.time()
    ref = build_reference_from_cohort(cohort38)
    assert ref.n_subjects == 38

    # scoring each member against the cohort reference spreads the CDF
    # uniformly over {0, 1/n, ..., (n-1)/n}
    cdfs = sorted(
        empirical_cdf(s, ref.cohort_scores) for s in ref.cohort_scores
    )
    np.testing.assert_allclose(cdfs, np.arange(38) / 38, atol=1e-12)

    nominal = IcConfig.default(plant)
    res_nom = run_trial(nominal, plant, stimulus)
    frf_nom = compute_frf(stimulus, res_nom.com_sway_deg, bands)
    d_nom = likeness_score(frf_nom, ref).distance

    res_det = run_trial(nominal.detuned(0.5), plant, stimulus)
    frf_det = compute_frf(stimulus, res_det.com_sway_deg, bands)
    d_det = likeness_score(frf_det, ref).distance
    assert d_det > d_nom

    # determinism of the whole construction
    again = synthesize_cohort(
        38, seed=2024, plant=plant, nominal=nominal, stimulus=StimulusConfig()
    )
    ref2 = build_reference_from_cohort(again)
    np.testing.assert_array_equal(ref.mu, ref2.mu)
    np.testing.assert_array_equal(ref.sigma, ref2.sigma)

    elapsed = time.time() - t0
    assert elapsed < 60.0
    _report(10, elapsed, f"D nominal {d_nom:.3f} < detuned {d_det:.3f}")


def test_criterion_11_end_to_end_determinism(plant, cohort38, tmp_path):
    t0 = time.time()
    from swaybench.cli import main

    ref = build_reference_from_cohort(cohort38)
    save_reference(ref, cohort38.stimulus, tmp_path / "ref.json")
    (tmp_path / "ic.json").write_text(
        json.dumps(config_to_dict(IcConfig.default(plant)))
    )
    spec = {
        "controller": str(tmp_path / "ic.json"),
        "reference": str(tmp_path / "ref.json"),
        "seed": 1,
    }
    for name in ("a", "b"):
        sp = dict(spec, out_dir=str(tmp_path / name))
        (tmp_path / f"spec_{name}.json").write_text(json.dumps(sp))
        assert main(["run", "--spec", str(tmp_path / f"spec_{name}.json")]) == 0
    rep_a = (tmp_path / "a" / "report.json").read_bytes()
    rep_b = (tmp_path / "b" / "report.json").read_bytes()
    assert rep_a == rep_b
    elapsed = time.time() - t0
    _report(11, elapsed, f"report bytes {len(rep_a)}")
