"""Command-line harness for the posture-control benchmarking pipeline.

Subcommands: stimulus, simulate, score, plot, make-reference, tune, run.
Exit codes: 0 success, 2 config/schema error, 3 fall event, 4 numerical or
degenerate-input error. The `run` subcommand executes the full pipeline
from a single JSON run-spec file.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .controllers import (
    ControllerConfig,
    DecConfig,
    EmConfig,
    IcConfig,
    TrialResult,
    config_from_dict,
    config_to_dict,
    run_trial,
    tune,
)
from .errors import SchemaError, SwayBenchError
from .metric import ReferenceModel, bootstrap_cdf, collapse, likeness_score
from .plant import DipParams
from .plots import cdf_svg, frf_csv, frf_svg
from .prts import (
    StimulusConfig,
    TiltTrajectory,
    write_trajectory_csv,
    write_trajectory_meta,
)
from .reference import (
    build_reference_from_cohort,
    load_cohort,
    load_reference,
    save_reference,
    synthesize_cohort,
)
from .spectral import Frf11, compute_frf, make_bands, default_grid
from .util import config_hash

TRACE_HEADER = "t_s,tilt_deg,q1_deg,q2_deg,com_sway_deg,tau_ankle_Nm,tau_hip_Nm"


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise SchemaError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def _load_stimulus(path) -> StimulusConfig:
    return StimulusConfig.from_dict(_load_json(path)) if path else StimulusConfig()


def _load_plant(path) -> DipParams:
    return DipParams.from_dict(_load_json(path)) if path else DipParams.default()


def _load_controller(path) -> ControllerConfig:
    return config_from_dict(_load_json(path))


# ---------------------------------------------------------------------------
# stimulus


def cmd_stimulus(args) -> int:
    cfg = _load_stimulus(args.config)
    traj = cfg.build()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out_dir / "stimulus.csv")
    write_trajectory_meta(traj, cfg, out_dir / "stimulus.meta.json")
    print(f"wrote {out_dir / 'stimulus.csv'} ({len(traj.samples)} samples)")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _write_trace(result: TrialResult, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for row in zip(
            result.t, result.tilt_deg, result.q1_deg, result.q2_deg,
            result.com_sway_deg, result.tau_ankle, result.tau_hip,
        ):
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def _read_trace(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(h.strip() for h in header) != TRACE_HEADER:
            raise SchemaError(f"{path}: unexpected trace header")
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise SchemaError(f"{path}: empty trace")
    data = np.asarray(rows)
    return data[:, 1], data[:, 4]  # tilt_deg, com_sway_deg


def cmd_simulate(args) -> int:
    stim_cfg = _load_stimulus(args.stimulus)
    plant = _load_plant(args.plant)
    controller = _load_controller(args.controller)
    traj = stim_cfg.build()

    noise = None
    if args.noise_std > 0:
        from .reference import _filtered_noise

        rng = np.random.default_rng(args.seed)
        n_steps = len(traj.samples) * round(1.0 / (stim_cfg.sample_rate * 1e-3))
        noise = _filtered_noise(rng, n_steps, args.noise_std, 1e-3, 0.1)

    result = run_trial(controller, plant, traj, noise_ankle=noise)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_trace(result, out_dir / "trace.csv")
    meta = {
        "stimulus": stim_cfg.descriptor(),
        "stimulus_hash": stim_cfg.hash,
        "controller": config_to_dict(controller),
        "plant": plant.to_dict(),
        "seed": args.seed,
        "noise_std": args.noise_std,
        "fell": result.fell,
        "fall_time_s": result.fall_time_s,
        "version": __version__,
    }
    _dump_json(meta, out_dir / "trace.meta.json")
    if result.fell:
        print(f"FALL at t={result.fall_time_s:.3f} s", file=sys.stderr)
        return 3
    print(f"wrote {out_dir / 'trace.csv'} ({len(result.t)} samples)")
    return 0


# ---------------------------------------------------------------------------
# score


def _report_dict(report, frf: Frf11, ref: ReferenceModel, meta: dict) -> dict:
    mean_frf = collapse(ref.mu, ref.bands.centers)
    return {
        "score": {
            "D": report.distance,
            "mahalanobis": report.mahalanobis,
            "cdf_percentile": report.cdf_percentile,
            "per_band_contribution": list(report.per_band_contribution),
        },
        "frf": {
            "centers_hz": list(frf.centers),
            "re": list(frf.values.real),
            "im": list(frf.values.imag),
        },
        "reference_mean_frf": {
            "centers_hz": list(ref.bands.centers),
            "re": list(mean_frf.values.real),
            "im": list(mean_frf.values.imag),
        },
        "reference": {
            "n_subjects": ref.n_subjects,
            "lambda": ref.shrinkage,
            "provenance": ref.provenance,
            "bands_hash": ref.bands.hash,
        },
        "metadata": meta,
    }


def _print_score_table(d: dict) -> None:
    s = d["score"]
    cdf = s["cdf_percentile"]
    print(f"{'metric':<22}{'value':>14}")
    print(f"{'score D':<22}{s['D']:>14.4f}")
    print(f"{'Mahalanobis':<22}{s['mahalanobis']:>14.4f}")
    if cdf is not None:
        print(f"{'CDF':<22}{100 * cdf:>13.4f}%")


def cmd_score(args) -> int:
    ref, ref_stim = load_reference(args.reference)
    meta = {"reference_file": str(args.reference), "version": __version__}

    if args.trace:
        trace_path = Path(args.trace)
        sidecar = trace_path.with_suffix("").with_suffix("")  # strip .csv
        sidecar = trace_path.parent / (trace_path.stem + ".meta.json")
        trace_meta = _load_json(sidecar)
        if trace_meta.get("stimulus_hash") != ref_stim.hash:
            raise SchemaError(
                "stimulus hash mismatch between trace and reference: "
                f"{trace_meta.get('stimulus_hash')} != {ref_stim.hash}"
            )
        stim_cfg = StimulusConfig.from_dict(trace_meta["stimulus"])
        tilt_deg, sway_deg = _read_trace(trace_path)
        traj = TiltTrajectory(
            samples=tilt_deg,
            sample_rate=stim_cfg.sample_rate,
            period=stim_cfg.period,
            n_periods=stim_cfg.n_periods,
            peak_to_peak=stim_cfg.peak_to_peak,
        )
        frf = compute_frf(
            traj, sway_deg, ref.bands, discard_periods=stim_cfg.discard_periods
        )
        meta.update(
            {
                "trace_file": str(trace_path),
                "stimulus_hash": trace_meta["stimulus_hash"],
                "controller": trace_meta.get("controller"),
                "plant": trace_meta.get("plant"),
                "seed": trace_meta.get("seed"),
            }
        )
    else:
        d = _load_json(args.frf)
        frf = Frf11(
            values=np.asarray(d["re"], dtype=float)
            + 1j * np.asarray(d["im"], dtype=float),
            centers=np.asarray(d["centers_hz"], dtype=float),
        )
        if not np.allclose(frf.centers, ref.bands.centers, atol=1e-9):
            raise SchemaError(
                "FRF band centers do not match the reference band spec"
            )
        meta.update({"frf_file": str(args.frf)})

    report = likeness_score(frf, ref)
    d = _report_dict(report, frf, ref, meta)
    if args.out:
        _dump_json(d, args.out)
    _print_score_table(d)
    return 0


# ---------------------------------------------------------------------------
# plot


def cmd_plot(args) -> int:
    if not args.reports:
        raise SchemaError("plot needs at least one report file")
    reports = [_load_json(p) for p in args.reports]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.what == "frf":
        curves = []
        for path, rep in zip(args.reports, reports):
            f = rep["frf"]
            values = np.asarray(f["re"]) + 1j * np.asarray(f["im"])
            curves.append((Path(path).stem, list(f["centers_hz"]), list(values)))
        mean = reports[0]["reference_mean_frf"]
        curves.append(
            (
                "human mean",
                list(mean["centers_hz"]),
                list(np.asarray(mean["re"]) + 1j * np.asarray(mean["im"])),
            )
        )
        svg = frf_svg(curves)
        csv_text = frf_csv(curves)
    else:  # cdf
        if not args.reference:
            raise SchemaError("plot cdf needs --reference for cohort scores")
        ref, _ = load_reference(args.reference)
        if ref.cohort_scores is None or len(ref.cohort_scores) == 0:
            raise SchemaError("reference carries no cohort scores")
        scores = np.sort(ref.cohort_scores)
        marks = [
            (Path(p).stem, rep["score"]["D"])
            for p, rep in zip(args.reports, reports)
        ]
        top = max(scores.max(), max(x for _, x in marks)) * 1.1
        grid = np.linspace(0.0, top, 200)
        mean, var = bootstrap_cdf(scores, args.n_boot, grid, args.seed)
        samples = [
            (s, (i + 1) / len(scores)) for i, s in enumerate(scores)
        ]
        svg = cdf_svg(grid, mean, var, samples, marks)
        from .plots import cdf_csv

        csv_text = cdf_csv(grid, mean, var, samples, marks)

    out.write_text(svg)
    out.with_suffix(".csv").write_text(csv_text)
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    return 0


# ---------------------------------------------------------------------------
# make-reference


def cmd_make_reference(args) -> int:
    if (args.cohort is None) == (args.synth_n is None):
        raise SchemaError("pass exactly one of --cohort or --synth-n")
    if args.cohort:
        cohort = load_cohort(args.cohort)
    else:
        stim_cfg = _load_stimulus(args.stimulus)
        plant = _load_plant(args.plant)
        nominal = (
            _load_controller(args.controller)
            if args.controller
            else IcConfig.default(plant)
        )
        if not isinstance(nominal, IcConfig):
            raise SchemaError("synthetic cohorts are simulated with an IC config")
        cohort = synthesize_cohort(
            n_subjects=args.synth_n,
            seed=args.seed,
            plant=plant,
            nominal=nominal,
            stimulus=stim_cfg,
            dispersion=args.dispersion,
            noise_torque_std=args.noise_std,
        )
        if args.save_cohort:
            from .reference import save_cohort

            save_cohort(cohort, args.save_cohort)
    ref = build_reference_from_cohort(cohort, shrinkage=args.shrinkage)
    save_reference(ref, cohort.stimulus, args.out)
    print(
        f"wrote {args.out} (n={ref.n_subjects}, provenance={ref.provenance}, "
        f"lambda={ref.shrinkage})"
    )
    return 0


# ---------------------------------------------------------------------------
# tune


def cmd_tune(args) -> int:
    plant = _load_plant(args.plant)
    cfg = tune(args.kind, plant)
    _dump_json(config_to_dict(cfg), args.out)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# run (full pipeline from one spec file)


def cmd_run(args) -> int:
    spec = _load_json(args.spec)
    try:
        out_dir = Path(spec["out_dir"])
        controller_ref = spec["controller"]
        reference_path = spec["reference"]
    except KeyError as exc:
        raise SchemaError(f"run spec missing key {exc}") from exc
    seed = int(spec.get("seed", 0))

    stim_cfg = (
        StimulusConfig.from_dict(spec["stimulus"])
        if "stimulus" in spec
        else StimulusConfig()
    )
    plant = (
        DipParams.from_dict(spec["plant"])
        if "plant" in spec
        else DipParams.default()
    )
    controller = (
        config_from_dict(controller_ref)
        if isinstance(controller_ref, dict)
        else _load_controller(controller_ref)
    )
    ref, ref_stim = load_reference(reference_path)
    if ref_stim.hash != stim_cfg.hash:
        raise SchemaError(
            "run spec stimulus does not match the reference stimulus"
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    traj = stim_cfg.build()
    result = run_trial(controller, plant, traj)
    _write_trace(result, out_dir / "trace.csv")
    if result.fell:
        print(f"FALL at t={result.fall_time_s:.3f} s", file=sys.stderr)
        return 3
    frf = compute_frf(
        traj, result.com_sway_deg, ref.bands,
        discard_periods=stim_cfg.discard_periods,
    )
    report = likeness_score(frf, ref)
    spec_content = {k: v for k, v in spec.items() if k != "out_dir"}
    meta = {
        "controller": config_to_dict(controller),
        "plant": plant.to_dict(),
        "stimulus": stim_cfg.descriptor(),
        "stimulus_hash": stim_cfg.hash,
        "reference_file": str(reference_path),
        "seed": seed,
        "run_spec_hash": config_hash(spec_content),
        "version": __version__,
    }
    d = _report_dict(report, frf, ref, meta)
    _dump_json(d, out_dir / "report.json")
    _print_score_table(d)
    print(f"wrote {out_dir / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="swaybench",
        description="Posture-control human-likeness benchmarking pipeline",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stimulus", help="generate the tilt stimulus files")
    p.add_argument("--config", help="stimulus config JSON (default: built-in)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_stimulus)

    p = sub.add_parser("simulate", help="run one closed-loop tilt trial")
    p.add_argument("--controller", required=True, help="controller config JSON")
    p.add_argument("--plant", help="plant config JSON (default: built-in)")
    p.add_argument("--stimulus", help="stimulus config JSON (default: built-in)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.0,
                   help="motor torque noise std [Nm]")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="score a trace or FRF against a reference")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="trace CSV from simulate")
    src.add_argument("--frf", help="FRF JSON")
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("plot", help="render SVG plots with CSV twins")
    p.add_argument("what", choices=("frf", "cdf"))
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--reference", help="reference file (needed for cdf)")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--n-boot", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("make-reference", help="build a reference model file")
    p.add_argument("--cohort", help="cohort directory with manifest.json")
    p.add_argument("--synth-n", type=int, help="synthesize a cohort of this size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dispersion", type=float, default=0.10)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--shrinkage", type=float, default=0.0)
    p.add_argument("--stimulus", help="stimulus config JSON (default: built-in)")
    p.add_argument("--plant", help="plant config JSON (default: built-in)")
    p.add_argument("--controller", help="nominal IC config JSON (default: built-in)")
    p.add_argument("--save-cohort", help="also write the cohort directory here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_reference)

    p = sub.add_parser("tune", help="grid-search controller gains for a plant")
    p.add_argument("--kind", choices=("ic", "dec", "em"), required=True)
    p.add_argument("--plant", help="plant config JSON (default: built-in)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("run", help="full pipeline from a JSON run-spec")
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_run)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SwayBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
