"""Command-line front end.

Subcommands:

* ``run``      - filter tracks with real or simulated detections, write
                 estimate and metric CSVs.
* ``simulate`` - write Monte Carlo detection files around the annotations.
* ``evaluate`` - recompute metrics from a previously written estimates CSV.
* ``inspect``  - summarize the parsed tracks of a sequence.

Exit codes: 0 on success, 2 when some track or trial failed partway
(partial results are still written), 1 on configuration or IO errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    OUTPUT_DIR_ENV,
    RunConfig,
    apply_config_file,
    read_config_file,
    resolve_sequence,
)
from .dataio import (
    BoundingBox,
    MotRow,
    TrackSequence,
    build_tracks,
    attach_detections,
    parse_mot_file,
    semi_annotate_3d,
    to_top_left,
    write_mot_file,
)
from .exceptions import ConfigError, EstimationError, ParseError
from .metrics import evaluate_track
from .models import MEASURED_ROWS
from .pipeline import (
    EVAL_ROWS_3D,
    FILTER_NAMES,
    ModelBundle,
    TrackResult,
    real_dropout_mask,
    run_track,
    write_metrics_csv,
    write_track_outputs,
)
from .sim import SimConfig, simulate_detections


def _add_input_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--seq", help="MOT sequence directory (seqinfo.ini, gt/, det/)")
    parser.add_argument("--gt", help="annotation file (MOT gt format)")
    parser.add_argument("--det", help="detection file (MOT det format)")
    parser.add_argument("--name", help="sequence name used in output file names")
    parser.add_argument("--image-size", help="image size as WIDTHxHEIGHT")
    parser.add_argument("--frame-rate", type=float, help="frames per second")
    parser.add_argument("--gamma", type=float, help="image scale (default: min(W, H))")
    parser.add_argument(
        "--track-id", help="comma-separated object ids (default: all tracks)"
    )
    parser.add_argument("--iou-threshold", type=float, help="association threshold")
    parser.add_argument("--out", help="output directory")


def _add_sim_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trials", type=int, help="Monte Carlo trials")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument(
        "--dropout", choices=("real", "none"), help="simulated detection availability"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monotrack",
        description="Monocular pedestrian tracking filters and their evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="filter tracks and write estimates and metrics")
    _add_input_args(run)
    _add_sim_args(run)
    run.add_argument("--filter", help="comma-separated filters (kf2d, bot, ukf3d)")
    run.add_argument("--guessed-height", type=float, help="body height for 3D truth, m")
    run.add_argument("--workers", type=int, help="worker threads across tracks")

    simulate = sub.add_parser("simulate", help="write simulated detection files")
    _add_input_args(simulate)
    _add_sim_args(simulate)

    evaluate = sub.add_parser("evaluate", help="recompute metrics from an estimates CSV")
    _add_input_args(evaluate)
    evaluate.add_argument("--estimates", required=True, help="estimates CSV from run")
    evaluate.add_argument("--guessed-height", type=float, help="body height for 3D truth, m")

    inspect = sub.add_parser("inspect", help="summarize the parsed tracks")
    _add_input_args(inspect)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        apply_config_file(cfg, read_config_file(args.config))
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        cfg.output_dir = Path(env_out)
    if args.seq:
        cfg.seq_dir = Path(args.seq)
    if args.gt:
        cfg.gt_path = Path(args.gt)
    if args.det:
        cfg.det_path = Path(args.det)
    resolve_sequence(cfg)
    if args.name:
        cfg.seq_name = args.name
    if args.image_size:
        parts = args.image_size.lower().split("x")
        if len(parts) != 2:
            raise ConfigError(f"--image-size must be WIDTHxHEIGHT, got {args.image_size!r}")
        try:
            cfg.image_size = (int(parts[0]), int(parts[1]))
        except ValueError as exc:
            raise ConfigError(f"--image-size must be integers: {args.image_size!r}") from exc
    if args.frame_rate is not None:
        cfg.frame_rate = args.frame_rate
    if args.gamma is not None:
        cfg.gamma = args.gamma
    if args.track_id:
        try:
            cfg.track_ids = tuple(int(p) for p in str(args.track_id).split(",") if p.strip())
        except ValueError as exc:
            raise ConfigError(f"--track-id must be integers: {args.track_id!r}") from exc
    if args.iou_threshold is not None:
        cfg.iou_threshold = args.iou_threshold
    if args.out:
        cfg.output_dir = Path(args.out)
    if getattr(args, "trials", None) is not None:
        cfg.trials = args.trials
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "dropout", None) is not None:
        cfg.dropout = args.dropout
    if getattr(args, "filter", None):
        names = tuple(p.strip() for p in args.filter.split(",") if p.strip())
        for name in names:
            if name not in FILTER_NAMES:
                raise ConfigError(f"unknown filter {name!r}")
        cfg.filters = names
    if getattr(args, "guessed_height", None) is not None:
        cfg.guessed_height_m = args.guessed_height
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg


def _load_tracks(cfg: RunConfig) -> dict[int, TrackSequence]:
    if cfg.gt_path is None:
        raise ConfigError("no annotation file: pass --gt or --seq")
    rows = parse_mot_file(cfg.gt_path, "annotation")
    tracks = build_tracks(rows, cfg.image_size, cfg.class_ids, cfg.min_visibility)
    if not tracks:
        raise ConfigError(f"no tracks survive ingestion filters in {cfg.gt_path}")
    if cfg.track_ids is not None:
        missing = [i for i in cfg.track_ids if i not in tracks]
        if missing:
            raise ConfigError(
                f"track ids {missing} not in {sorted(tracks)} from {cfg.gt_path}"
            )
        tracks = {i: tracks[i] for i in cfg.track_ids}
    if cfg.det_path is not None:
        det_rows = parse_mot_file(cfg.det_path, "detection")
        attach_detections(tracks, det_rows, cfg.iou_threshold)
    return tracks


def _sim_config(cfg: RunConfig, track: TrackSequence, bundle: ModelBundle) -> SimConfig:
    mask = None
    if cfg.dropout == "real" and any(b is not None for b in track.detections):
        mask = real_dropout_mask(track)
    return SimConfig(cfg.trials, cfg.seed, bundle.model2d.R, mask)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if cfg.trials == 0 and cfg.det_path is None:
        raise ConfigError(
            "a real-detection run needs a detection file; "
            "pass --det or simulate with --trials"
        )
    tracks = _load_tracks(cfg)
    bundle = cfg.bundle()

    def job(track: TrackSequence) -> TrackResult:
        sim_cfg = _sim_config(cfg, track, bundle) if cfg.trials > 0 else None
        return run_track(track, bundle, cfg.filters, cfg.guessed_height_m, sim_cfg)

    ordered = [tracks[i] for i in sorted(tracks)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(job, ordered))
    else:
        results = [job(track) for track in ordered]

    n_failures = 0
    for result in results:
        write_track_outputs(cfg.output_dir, cfg.seq_name, result)
        n_failures += result.n_failures
        for (name, space), (rmse_series, anees_series) in sorted(result.metrics.items()):
            print(
                f"{cfg.seq_name} id{result.track.object_id} {name} {space}: "
                f"median_rmse={rmse_series.median:.6g} "
                f"median_anees={anees_series.median:.6g} "
                f"frames={len(rmse_series.frames)}/{len(result.track.frames)} "
                f"trials={rmse_series.n_trials}"
            )
    print(f"wrote outputs for {len(results)} track(s) to {cfg.output_dir}")
    if n_failures:
        print(f"{n_failures} filter run(s) stopped early", file=sys.stderr)
        return 2
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if cfg.trials <= 0:
        raise ConfigError("simulate needs --trials >= 1")
    tracks = _load_tracks(cfg)
    bundle = cfg.bundle()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    n_files = 0
    for object_id in sorted(tracks):
        track = tracks[object_id]
        trials = simulate_detections(track, _sim_config(cfg, track, bundle))
        for t, detections in enumerate(trials):
            rows = []
            for k, z in zip(track.frames, detections):
                if z is None:
                    continue
                left, top, width, height = to_top_left(BoundingBox(*z))
                rows.append(
                    MotRow(track.first_frame + k, -1, left, top, width, height, 1.0)
                )
            path = cfg.output_dir / f"{cfg.seq_name}_id{object_id}_trial{t:03d}.txt"
            write_mot_file(path, rows, "detection")
            n_files += 1
    print(f"wrote {n_files} detection file(s) to {cfg.output_dir}")
    return 0


def _read_estimates_csv(
    path: Path,
) -> tuple[str, list[tuple[int, int, np.ndarray, np.ndarray]]]:
    """Read back an estimates CSV: space tag and (trial, k, mean, cov) rows."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines:
        raise ParseError(1, "empty estimates file")
    header = lines[0].split(",")
    mean_cols = [i for i, name in enumerate(header) if name.startswith("mean_")]
    cov_cols = [i for i, name in enumerate(header) if name.startswith("cov_")]
    n = len(mean_cols)
    if n == 0 or len(cov_cols) != n * (n + 1) // 2:
        raise ParseError(1, f"unrecognized estimates header: {lines[0]}")
    space_col = header.index("space")
    k_col = header.index("k")
    trial_col = header.index("trial") if "trial" in header else None
    rows = []
    space = ""
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(header):
            raise ParseError(lineno, f"expected {len(header)} fields, got {len(fields)}")
        try:
            trial = int(fields[trial_col]) if trial_col is not None else 0
            k = int(fields[k_col])
            space = fields[space_col]
            mean = np.array([float(fields[i]) for i in mean_cols])
            cov = np.zeros((n, n))
            it = iter(cov_cols)
            for i in range(n):
                for j in range(i, n):
                    cov[i, j] = cov[j, i] = float(fields[next(it)])
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from exc
        rows.append((trial, k, mean, cov))
    return space, rows


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    tracks = _load_tracks(cfg)
    if len(tracks) != 1:
        raise ConfigError(
            f"evaluate needs exactly one track; pass --track-id (have {sorted(tracks)})"
        )
    track = next(iter(tracks.values()))
    estimates_path = Path(args.estimates)
    space, rows = _read_estimates_csv(estimates_path)

    if space in ("2d", "bot"):
        picked = list(MEASURED_ROWS)
        space = "bb"
    elif space == "3d":
        picked = list(EVAL_ROWS_3D)
    elif space == "bb":
        picked = None
    else:
        raise ConfigError(f"estimates file has unknown space {space!r}")
    if picked is not None:
        rows = [
            (trial, k, mean[picked], cov[np.ix_(picked, picked)])
            for trial, k, mean, cov in rows
        ]

    if space == "3d":
        cam = cfg.camera()
        truth = np.stack(
            [
                semi_annotate_3d(box, cam, cfg.guessed_height_m).as_vector()
                for box in track.annotations
            ]
        )
    else:
        truth = np.stack([box.as_vector() for box in track.annotations])

    # Group by frame across trials; a frame counts only when every trial
    # recorded it, matching how a run scores its own trials.
    trials = sorted({trial for trial, _, _, _ in rows})
    by_frame: dict[int, dict[int, tuple[np.ndarray, np.ndarray]]] = {}
    for trial, k, mean, cov in rows:
        by_frame.setdefault(k, {})[trial] = (mean, cov)
    means: list[np.ndarray | None] = []
    covs: list[np.ndarray | None] = []
    for k in track.frames:
        cell = by_frame.get(k)
        if cell is None or len(cell) != len(trials):
            means.append(None)
            covs.append(None)
        else:
            means.append(np.stack([cell[t][0] for t in trials]))
            covs.append(np.stack([cell[t][1] for t in trials]))
    rmse_series, anees_series = evaluate_track(truth, means, covs, track.frames, space)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out_path = cfg.output_dir / f"{estimates_path.stem}_metrics.csv"
    write_metrics_csv(out_path, rmse_series, anees_series)
    print(
        f"{estimates_path.name} {space}: median_rmse={rmse_series.median:.6g} "
        f"median_anees={anees_series.median:.6g} "
        f"frames={len(rmse_series.frames)}/{len(track.frames)} "
        f"trials={len(trials)}"
    )
    print(f"wrote {out_path}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    tracks = _load_tracks(cfg)
    print(f"{cfg.seq_name}: {len(tracks)} track(s), image {cfg.image_size[0]}x{cfg.image_size[1]}, {cfg.frame_rate} fps")
    for object_id in sorted(tracks):
        track = tracks[object_id]
        n = len(track.frames)
        gaps = sum(b - a - 1 for a, b in zip(track.frames, track.frames[1:]))
        n_det = sum(1 for b in track.detections if b is not None)
        heights = sorted(box.h for box in track.annotations)
        print(
            f"  id {object_id}: {n} frames "
            f"[{track.first_frame}..{track.first_frame + track.frames[-1]}], "
            f"{gaps} gap frame(s), {n_det} detection(s), "
            f"median height {heights[n // 2]:.6g} px"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "simulate": cmd_simulate,
        "evaluate": cmd_evaluate,
        "inspect": cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except (EstimationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
