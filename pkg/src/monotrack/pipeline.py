"""Orchestration: run filters over tracks, score them, write CSV files.

A run pairs one track with one detection source (the real detection file
or simulated trials), pushes every selected filter along it, and scores
the results against the annotations in bounding-box space and, for the
3D filter, against semi-annotations in camera space.

Estimates begin at the first frame with a detection; frames with no
detection advance by prediction only.  A filter that leaves its domain
(for example, a sigma point falling behind the camera) stops for that
track and trial; such frames are excluded from the metrics and counted
as skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics
from .dataio import TrackSequence, format_float, semi_annotate_3d
from .exceptions import (
    ConfigError,
    DecompositionFailure,
    FunctionDomainError,
    SingularInnovation,
)
from .filters import (
    SPACE_BB,
    SPACE_3D,
    GaussianEstimate,
    InitConstants2D,
    InitConstants3D,
    bot_init,
    bot_predict,
    bot_update,
    init_2d,
    init_3d,
    kf_predict,
    kf_update,
    linear_box_estimate,
    project_estimate,
    ukf_predict,
    ukf_update,
)
from .metrics import EvalSeries, evaluate_track
from .models import (
    BoTParams,
    ModelSet2D,
    ModelSet3D,
    PedestrianParams,
    build_model_2d,
    build_model_3d,
)
from .sim import SimConfig, simulate_detections

FILTER_NAMES = ("kf2d", "bot", "ukf3d")

STATE_NAMES = {
    "2d": ("x", "vx", "y", "vy", "w", "vw", "h", "vh"),
    "bot": ("x", "Tvx", "y", "Tvy", "w", "Tvw", "h", "Tvh"),
    "3d": ("x", "vx", "y", "vy", "z", "vz", "w", "h"),
    "bb": ("x", "y", "w", "h"),
}

# State components compared against a semi-annotation [x, y, z, w, h].
EVAL_ROWS_3D = (0, 2, 4, 6, 7)

# Filter errors that end a track instead of crashing the run.
_TRACK_STOPPERS = (FunctionDomainError, DecompositionFailure, SingularInnovation)


@dataclass(frozen=True)
class ModelBundle:
    """Every model and constant one run needs, assembled once."""

    cam: CameraIntrinsics
    gamma: float
    dt: float
    model2d: ModelSet2D
    model3d: ModelSet3D
    bot_params: BoTParams
    init2d: InitConstants2D
    init3d: InitConstants3D


def build_bundle(
    image_size: tuple[int, int],
    frame_rate: float,
    cam: CameraIntrinsics | None = None,
    gamma: float | None = None,
    params: PedestrianParams | None = None,
    bot_params: BoTParams | None = None,
    init2d: InitConstants2D | None = None,
    init3d: InitConstants3D | None = None,
) -> ModelBundle:
    """Assemble models for one sequence; gamma defaults to min(W, H)."""
    if not frame_rate > 0:
        raise ConfigError(f"frame rate must be positive, got {frame_rate}")
    cam = cam or CameraIntrinsics.for_image(image_size)
    gamma = gamma if gamma is not None else float(min(image_size))
    params = params or PedestrianParams()
    dt = 1.0 / frame_rate
    return ModelBundle(
        cam=cam,
        gamma=gamma,
        dt=dt,
        model2d=build_model_2d(dt, gamma, params),
        model3d=build_model_3d(dt, cam, gamma, params),
        bot_params=bot_params or BoTParams(),
        init2d=init2d or InitConstants2D(),
        init3d=init3d or InitConstants3D(),
    )


@dataclass
class FilterRun:
    """One filter's pass over one track with one detection series."""

    filter_name: str
    frames: list[int] = field(default_factory=list)
    native: list[GaussianEstimate] = field(default_factory=list)
    boxes: list[GaussianEstimate] = field(default_factory=list)
    failure: str | None = None
    n_frames: int = 0


def run_filter(
    track: TrackSequence,
    detections: list[np.ndarray | None],
    bundle: ModelBundle,
    filter_name: str,
) -> FilterRun:
    """Push one filter along a track.

    ``detections`` aligns with ``track.frames``.  The filter initializes
    at the first detection, predicts across every frame step (including
    annotation gaps, which may span several sampling periods), and
    updates where a detection exists.
    """
    if filter_name not in FILTER_NAMES:
        raise ConfigError(f"unknown filter {filter_name!r}")
    run = FilterRun(filter_name=filter_name, n_frames=len(track.frames))
    start = next((i for i, z in enumerate(detections) if z is not None), None)
    if start is None:
        run.failure = "no detections to initialize from"
        return run

    m2 = bundle.model2d
    m3 = bundle.model3d

    def initialize(z0: np.ndarray, frame: int) -> GaussianEstimate:
        if filter_name == "kf2d":
            return init_2d(z0, m2.R, bundle.init2d, frame)
        if filter_name == "bot":
            return bot_init(z0, bundle.bot_params, frame)
        return init_3d(z0, m3, bundle.init3d, frame)

    def predict(est: GaussianEstimate) -> GaussianEstimate:
        if filter_name == "kf2d":
            return kf_predict(est, m2.F, m2.Q)
        if filter_name == "bot":
            return bot_predict(est, bundle.bot_params)
        return ukf_predict(est, m3)

    def update(est: GaussianEstimate, z: np.ndarray) -> GaussianEstimate:
        if filter_name == "kf2d":
            return kf_update(est, z, m2.H, m2.R)
        if filter_name == "bot":
            return bot_update(est, z, bundle.bot_params)
        return ukf_update(est, z, m3)

    def box_of(est: GaussianEstimate) -> GaussianEstimate:
        if filter_name == "ukf3d":
            return project_estimate(est, m3)
        return linear_box_estimate(est)

    def record(est: GaussianEstimate, frame: int) -> None:
        # Project before appending so a failure cannot leave the lists
        # at different lengths.
        box = box_of(est)
        run.frames.append(frame)
        run.native.append(est)
        run.boxes.append(box)

    try:
        est = initialize(detections[start], track.frames[start])
        record(est, track.frames[start])
        for i in range(start + 1, len(track.frames)):
            for _ in range(track.frames[i] - track.frames[i - 1]):
                est = predict(est)
            z = detections[i]
            if z is not None:
                est = update(est, z)
            record(est, track.frames[i])
    except _TRACK_STOPPERS as exc:
        run.failure = f"{type(exc).__name__}: {exc}"
    return run


def real_detection_vectors(track: TrackSequence) -> list[np.ndarray | None]:
    """The track's associated detections as measurement vectors."""
    return [box.as_vector() if box is not None else None for box in track.detections]


def real_dropout_mask(track: TrackSequence) -> tuple[bool, ...]:
    """Detection availability of the real sequence, for the simulator."""
    return tuple(box is not None for box in track.detections)


@dataclass
class TrackResult:
    """All runs and metrics of one track."""

    track: TrackSequence
    runs: dict[str, list[FilterRun]]
    metrics: dict[tuple[str, str], tuple[EvalSeries, EvalSeries]]
    n_failures: int


def _stack_series(
    track: TrackSequence,
    runs: list[FilterRun],
    pick,
) -> tuple[list[np.ndarray | None], list[np.ndarray | None]]:
    """Per-frame (M, n) means and (M, n, n) covariances across trials.

    A frame contributes only when every trial produced an estimate there,
    keeping the trial count constant over the evaluated frames.
    """
    by_trial = []
    for run in runs:
        table = {
            frame: pick(run, idx) for idx, frame in enumerate(run.frames)
        }
        by_trial.append(table)
    means: list[np.ndarray | None] = []
    covs: list[np.ndarray | None] = []
    for frame in track.frames:
        if all(frame in table for table in by_trial):
            pairs = [table[frame] for table in by_trial]
            means.append(np.stack([p[0] for p in pairs]))
            covs.append(np.stack([p[1] for p in pairs]))
        else:
            means.append(None)
            covs.append(None)
    return means, covs


def evaluate_runs(
    track: TrackSequence,
    runs: list[FilterRun],
    bundle: ModelBundle,
    guessed_height_m: float,
) -> dict[str, tuple[EvalSeries, EvalSeries]]:
    """Score one filter's trials in box space and, if 3D, camera space."""
    out: dict[str, tuple[EvalSeries, EvalSeries]] = {}
    box_truth = np.stack([box.as_vector() for box in track.annotations])
    means, covs = _stack_series(
        track, runs, lambda run, idx: (run.boxes[idx].mean, run.boxes[idx].cov)
    )
    out[SPACE_BB] = evaluate_track(box_truth, means, covs, track.frames, SPACE_BB)
    if runs and runs[0].filter_name == "ukf3d":
        rows = list(EVAL_ROWS_3D)
        truth_3d = np.stack(
            [
                semi_annotate_3d(box, bundle.cam, guessed_height_m).as_vector()
                for box in track.annotations
            ]
        )
        means3, covs3 = _stack_series(
            track,
            runs,
            lambda run, idx: (
                run.native[idx].mean[rows],
                run.native[idx].cov[np.ix_(rows, rows)],
            ),
        )
        out[SPACE_3D] = evaluate_track(
            truth_3d, means3, covs3, track.frames, SPACE_3D
        )
    return out


def run_track(
    track: TrackSequence,
    bundle: ModelBundle,
    filter_names: tuple[str, ...],
    guessed_height_m: float,
    sim_cfg: SimConfig | None = None,
) -> TrackResult:
    """Run the selected filters over one track, real or simulated.

    With ``sim_cfg`` the detections are Monte Carlo trials around the
    annotations; otherwise the single trial is the track's associated
    real detections.
    """
    if sim_cfg is not None:
        trials = simulate_detections(track, sim_cfg)
    else:
        trials = [real_detection_vectors(track)]
    runs: dict[str, list[FilterRun]] = {}
    metrics: dict[tuple[str, str], tuple[EvalSeries, EvalSeries]] = {}
    n_failures = 0
    for name in filter_names:
        filter_runs = [run_filter(track, trial, bundle, name) for trial in trials]
        n_failures += sum(1 for r in filter_runs if r.failure is not None)
        runs[name] = filter_runs
        for space, series_pair in evaluate_runs(
            track, filter_runs, bundle, guessed_height_m
        ).items():
            metrics[(name, space)] = series_pair
    return TrackResult(track, runs, metrics, n_failures)


def _upper_triangle(cov: np.ndarray) -> list[float]:
    n = cov.shape[0]
    return [cov[i, j] for i in range(n) for j in range(i, n)]


def write_estimates_csv(
    path: Path, track: TrackSequence, runs: list[FilterRun], space: str
) -> None:
    """Per-trial, per-frame means and row-major upper-triangle covariances."""
    names = STATE_NAMES[space]
    n = len(names)
    header = (
        ["trial", "k", "frame", "space"]
        + [f"mean_{name}" for name in names]
        + [f"cov_{i}_{j}" for i in range(n) for j in range(i, n)]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(header) + "\n")
        for trial, run in enumerate(runs):
            estimates = run.native if space != SPACE_BB else run.boxes
            for frame, est in zip(run.frames, estimates):
                fields = [
                    str(trial), str(frame), str(track.first_frame + frame), space,
                ]
                fields += [format_float(v) for v in est.mean]
                fields += [format_float(v) for v in _upper_triangle(est.cov)]
                handle.write(",".join(fields) + "\n")


def write_metrics_csv(
    path: Path, rmse_series: EvalSeries, anees_series: EvalSeries
) -> None:
    """Per-frame metric rows: frame, rmse, anees, n_trials, space."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("frame,rmse,anees,n_trials,space\n")
        for frame, r, a in zip(
            rmse_series.frames, rmse_series.values, anees_series.values
        ):
            handle.write(
                f"{frame},{format_float(r)},{format_float(a)},"
                f"{rmse_series.n_trials},{rmse_series.space}\n"
            )


def write_summary_csv(path: Path, result: TrackResult) -> None:
    """Median metrics per (filter, space) for one track."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(
            "filter,space,median_rmse,median_anees,"
            "frames_evaluated,frames_skipped,n_trials\n"
        )
        for (name, space), (rmse_series, anees_series) in sorted(result.metrics.items()):
            handle.write(
                f"{name},{space},{format_float(rmse_series.median)},"
                f"{format_float(anees_series.median)},{len(rmse_series.frames)},"
                f"{rmse_series.n_skipped},{rmse_series.n_trials}\n"
            )


def native_space(filter_name: str) -> str:
    return {"kf2d": "2d", "bot": "bot", "ukf3d": "3d"}[filter_name]


def write_track_outputs(
    out_dir: Path, seq_name: str, result: TrackResult
) -> list[Path]:
    """Write every CSV of one track's result; returns the created paths.

    Estimate files hold every trial; metric files aggregate them.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{seq_name}_id{result.track.object_id}"
    written: list[Path] = []
    for name in result.runs:
        for space in (native_space(name), SPACE_BB):
            path = out_dir / f"{stem}_{name}_estimates_{space}.csv"
            write_estimates_csv(path, result.track, result.runs[name], space)
            written.append(path)
    for (name, space), (rmse_series, anees_series) in sorted(result.metrics.items()):
        path = out_dir / f"{stem}_{name}_metrics_{space}.csv"
        write_metrics_csv(path, rmse_series, anees_series)
        written.append(path)
    path = out_dir / f"{stem}_summary.csv"
    write_summary_csv(path, result)
    written.append(path)
    return written
