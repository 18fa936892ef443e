"""Estimation-quality metrics: RMSE and the average normalized estimation
error squared (ANEES).

Both aggregate over M Monte Carlo trials at one frame:

    RMSE  = sqrt( (1/M) sum_i ||mean_i - truth||^2 )
    ANEES = (1/(M n)) sum_i (mean_i - truth)^T P_i^{-1} (mean_i - truth)

ANEES measures covariance credibility: 1 is consistent, above 1 the
filter is overconfident (errors exceed its covariance), below 1 it is
pessimistic.  If the errors truly follow the reported Gaussians, M n
times the ANEES is a chi-square variable with M n degrees of freedom.
Covariances enter through a factorized solve, never an explicit inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, FrameMisalignment, SingularCovariance


def rmse(truth: np.ndarray, means: np.ndarray) -> float:
    """Root-mean-square error of M estimate means against one truth."""
    truth = np.asarray(truth, dtype=float)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if means.shape[1] != truth.shape[0]:
        raise DimensionMismatch(
            f"means {means.shape} do not match truth ({truth.shape[0]},)"
        )
    errors = means - truth
    return float(np.sqrt(np.mean(np.sum(errors * errors, axis=1))))


def anees(truth: np.ndarray, means: np.ndarray, covs: np.ndarray) -> float:
    """Average normalized estimation error squared of M (mean, cov) pairs."""
    truth = np.asarray(truth, dtype=float)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 2:
        covs = covs[None, :, :]
    n = truth.shape[0]
    m = means.shape[0]
    if means.shape != (m, n) or covs.shape != (m, n, n):
        raise DimensionMismatch(
            f"means {means.shape} / covariances {covs.shape} do not match "
            f"truth ({n},)"
        )
    errors = means - truth
    try:
        solved = np.linalg.solve(covs, errors[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("a reported covariance is singular") from exc
    return float(np.sum(errors * solved) / (m * n))


@dataclass(frozen=True)
class EvalSeries:
    """One metric over the frames where it is defined."""

    frames: tuple[int, ...]
    values: np.ndarray
    space: str
    n_trials: int
    n_skipped: int = 0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) != values.shape[0]:
            raise FrameMisalignment(
                f"{len(self.frames)} frames but {values.shape[0]} values"
            )
        if np.any(values < 0):
            raise ValueError("metric values must be nonnegative")

    @property
    def median(self) -> float:
        """Median over the defined frames; nan when every frame was skipped."""
        if self.values.size == 0:
            return float("nan")
        return float(np.median(self.values))


def evaluate_track(
    truths: np.ndarray,
    estimate_means: list[np.ndarray | None],
    estimate_covs: list[np.ndarray | None],
    frames: list[int] | None = None,
    space: str = "bb",
) -> tuple[EvalSeries, EvalSeries]:
    """Per-frame RMSE and ANEES series over a track.

    ``truths`` is (K, n); the estimate lists hold, per frame, the (M, n)
    means and (M, n, n) covariances over trials, or None where no trial
    produced an estimate.  Frames without estimates are excluded from
    both series and counted in ``n_skipped``.
    """
    k = len(truths)
    if len(estimate_means) != k or len(estimate_covs) != k:
        raise FrameMisalignment(
            f"{k} truth frames but {len(estimate_means)} mean and "
            f"{len(estimate_covs)} covariance entries"
        )
    if frames is None:
        frames = list(range(k))
    elif len(frames) != k:
        raise FrameMisalignment(f"{k} truth frames but {len(frames)} frame labels")
    kept_frames: list[int] = []
    rmse_values: list[float] = []
    anees_values: list[float] = []
    n_trials = 0
    for truth, means, covs, frame in zip(truths, estimate_means, estimate_covs, frames):
        if means is None or covs is None:
            continue
        kept_frames.append(frame)
        rmse_values.append(rmse(truth, means))
        anees_values.append(anees(truth, means, covs))
        n_trials = max(n_trials, np.atleast_2d(means).shape[0])
    skipped = k - len(kept_frames)
    return (
        EvalSeries(tuple(kept_frames), np.array(rmse_values), space, n_trials, skipped),
        EvalSeries(tuple(kept_frames), np.array(anees_values), space, n_trials, skipped),
    )
