"""State estimators: a linear Kalman filter, a heuristic image-plane
baseline, and a square-root unscented filter for the 3D model.

All three share the Gaussian recursion

    predict:  x' = F x + m,          P' = F P F^T + Q
    update:   x <- x + K (z - z_hat), with gain K from the innovation
              covariance S = cov(z_hat) + R

and differ in how the measurement prediction z_hat and the covariance
update are formed:

* The 2D filter measures linearly (z_hat = H x) and uses the Joseph form
  (I - KH) P (I - KH)^T + K R K^T, which stays symmetric positive
  semidefinite under rounding.
* The heuristic baseline rescales its process and measurement noise from
  the current box extents each step and applies the plain covariance
  update P - K S K^T, reproduced here exactly as published.
* The 3D filter propagates sigma points through the pinhole projection.
  The unscented transform keeps scaled deviation matrices M_x and M_y
  whose products form every covariance it needs, so the update
  (M_x - K M_y)(M_x - K M_y)^T + K R K^T is a sum of outer products and
  cannot lose definiteness.

The sigma set is the plain symmetric one: 2n points at mean +- sqrt(n)
times the Cholesky columns of the covariance, each weighted 1/(2n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import (
    DecompositionFailure,
    DimensionMismatch,
    FunctionDomainError,
    NonPositiveHeight,
    SingularInnovation,
)
from .models import (
    MEASURED_ROWS,
    BoTParams,
    ModelSet3D,
    bot_measurement_noise,
    bot_process_noise,
    bot_transition_matrix,
    measurement_matrix,
    project_state,
    symmetrize,
)

SPACE_2D = "2d"
SPACE_3D = "3d"
SPACE_BOT = "bot"
SPACE_BB = "bb"

# Tolerances of the estimate validity checks, relative to matrix scale.
_SYM_RTOL = 1e-9
_EIG_RTOL = 1e-9


@dataclass(frozen=True)
class GaussianEstimate:
    """A Gaussian state belief at one frame.

    Construction validates that the covariance is square, symmetric to
    1e-9 relative and has no eigenvalue below -1e-9 times its trace, so
    anything a filter emits is safe to factorize or serialize.
    """

    mean: np.ndarray
    cov: np.ndarray
    frame: int = 0
    space: str = SPACE_2D

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        n = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (n, n):
            raise DimensionMismatch(
                f"mean {mean.shape} does not match covariance {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("estimate has non-finite entries")
        scale = np.abs(cov).max()
        if np.abs(cov - cov.T).max() > _SYM_RTOL * max(scale, 1e-300):
            raise ValueError("covariance is not symmetric")
        trace = np.trace(cov)
        if np.linalg.eigvalsh(cov).min() < -_EIG_RTOL * max(trace, 0.0):
            raise ValueError("covariance is not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def sqrt_psd(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular factor L with L L^T = cov.

    The zero matrix factors to zero.  A factorization failure gets one
    retry with diagonal jitter 1e-12 trace/n; a second failure raises
    ``DecompositionFailure``.
    """
    cov = np.asarray(cov, dtype=float)
    if not cov.any():
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    n = cov.shape[0]
    jitter = 1e-12 * np.trace(cov) / n
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(
            "covariance is not positive semidefinite within jitter"
        ) from exc


@dataclass(frozen=True)
class SigmaSet:
    """Sigma points, their images, and the scaled deviation matrices.

    ``points`` holds the 2n sigma points as columns; ``transformed``
    their images under the transform function.  ``dev_x`` and ``dev_y``
    are the deviations from the input mean and from ``mean_y``, scaled by
    1/sqrt(2n), so that dev dev^T recovers each covariance directly.
    """

    points: np.ndarray
    transformed: np.ndarray
    mean_y: np.ndarray
    dev_x: np.ndarray
    dev_y: np.ndarray

    @property
    def cov_y(self) -> np.ndarray:
        return self.dev_y @ self.dev_y.T

    @property
    def cross_cov(self) -> np.ndarray:
        return self.dev_x @ self.dev_y.T


def unscented_transform(
    mean: np.ndarray,
    cov: np.ndarray,
    transform: Callable[[np.ndarray], np.ndarray],
) -> SigmaSet:
    """Propagate a Gaussian through a function with the symmetric sigma set.

    ``transform`` receives the whole (n, 2n) matrix of column points and
    must return the (m, 2n) matrix of column images; it may raise
    ``FunctionDomainError`` (or a subclass) to reject a point outside its
    domain.  An affine transform is reproduced exactly up to rounding.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = mean.shape[0]
    if cov.shape != (n, n):
        raise DimensionMismatch(f"covariance {cov.shape} does not match mean ({n},)")
    spread = math.sqrt(n) * sqrt_psd(cov)
    points = np.empty((n, 2 * n))
    points[:, :n] = mean[:, None] + spread
    points[:, n:] = mean[:, None] - spread
    transformed = np.atleast_2d(np.asarray(transform(points), dtype=float))
    if transformed.shape[1] != 2 * n:
        raise DimensionMismatch(
            f"transform returned {transformed.shape}, expected (m, {2 * n})"
        )
    mean_y = transformed.mean(axis=1)
    root = math.sqrt(2 * n)
    return SigmaSet(
        points=points,
        transformed=transformed,
        mean_y=mean_y,
        dev_x=(points - mean[:, None]) / root,
        dev_y=(transformed - mean_y[:, None]) / root,
    )


def _check_linear_dims(
    est: GaussianEstimate, F: np.ndarray, Q: np.ndarray
) -> None:
    n = est.dim
    if F.shape != (n, n) or Q.shape != (n, n):
        raise DimensionMismatch(
            f"transition {F.shape} / noise {Q.shape} do not match state ({n},)"
        )


def kf_predict(
    est: GaussianEstimate,
    F: np.ndarray,
    Q: np.ndarray,
    offset: np.ndarray | None = None,
) -> GaussianEstimate:
    """One linear prediction step; advances the frame index by one."""
    F = np.asarray(F, dtype=float)
    Q = np.asarray(Q, dtype=float)
    _check_linear_dims(est, F, Q)
    mean = F @ est.mean
    if offset is not None:
        mean = mean + np.asarray(offset, dtype=float)
    cov = symmetrize(F @ est.cov @ F.T + Q)
    return GaussianEstimate(mean, cov, est.frame + 1, est.space)


def _innovation_solve(S: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve S X = rhs for symmetric S, rejecting singular innovations."""
    try:
        np.linalg.cholesky(S)
        return np.linalg.solve(S, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is singular") from exc


def joseph_covariance(
    P: np.ndarray, K: np.ndarray, H: np.ndarray, R: np.ndarray
) -> np.ndarray:
    """Joseph-form posterior covariance for an arbitrary gain."""
    a = np.eye(P.shape[0]) - K @ H
    return symmetrize(a @ P @ a.T + K @ R @ K.T)


def kf_update(
    pred: GaussianEstimate, z: np.ndarray, H: np.ndarray, R: np.ndarray
) -> GaussianEstimate:
    """Linear measurement update in Joseph form."""
    z = np.asarray(z, dtype=float)
    H = np.asarray(H, dtype=float)
    R = np.asarray(R, dtype=float)
    n = pred.dim
    m = z.shape[0]
    if H.shape != (m, n) or R.shape != (m, m):
        raise DimensionMismatch(
            f"measurement {z.shape} / matrix {H.shape} / noise {R.shape} disagree"
        )
    S = symmetrize(H @ pred.cov @ H.T + R)
    # K = P H^T S^{-1}; solve on the transposed system keeps S factorized once.
    K = _innovation_solve(S, H @ pred.cov).T
    mean = pred.mean + K @ (z - H @ pred.mean)
    cov = joseph_covariance(pred.cov, K, H, R)
    return GaussianEstimate(mean, cov, pred.frame, pred.space)


@dataclass(frozen=True)
class InitConstants2D:
    """Speed caps turning a first box into velocity-spread priors."""

    mean_height_m: float = 1.65
    max_speed_mps: float = 3.0
    max_extent_rate_mps: float = 0.3

    def __post_init__(self) -> None:
        if not (
            self.mean_height_m > 0
            and self.max_speed_mps > 0
            and self.max_extent_rate_mps > 0
        ):
            raise ValueError("initialization constants must be positive")


@dataclass(frozen=True)
class InitConstants3D:
    """Velocity prior for the 3D initialization."""

    max_speed_mps: float = 3.0

    def __post_init__(self) -> None:
        if not self.max_speed_mps > 0:
            raise ValueError("maximum speed must be positive")

    @property
    def v_rdot(self) -> float:
        """Per-axis velocity variance: a third of the speed cap, squared."""
        return (self.max_speed_mps / 3.0) ** 2


def init_2d(
    z0: np.ndarray,
    R: np.ndarray,
    consts: InitConstants2D | None = None,
    frame: int = 0,
) -> GaussianEstimate:
    """First estimate of the 2D filter from one bounding box.

    The box fixes the measured components with the detector noise; the
    unmeasured rates get zero mean and a variance sized so three sigma
    covers the speed cap scaled to the box's apparent size.
    """
    consts = consts or InitConstants2D()
    z0 = np.asarray(z0, dtype=float)
    if not z0[3] > 0:
        raise NonPositiveHeight(f"box height must be positive, got {z0[3]}")
    # H^T zero-pads the box into the state; rate slots carry 1/s units.
    h = measurement_matrix()
    mean = h.T @ z0
    scale = z0[3] / consts.mean_height_m
    v_pos = (scale * consts.max_speed_mps / 3.0) ** 2
    v_ext = (scale * consts.max_extent_rate_mps / 3.0) ** 2
    cov = h.T @ np.asarray(R, dtype=float) @ h
    cov[np.diag_indices(8)] += np.array([0, v_pos, 0, v_pos, 0, v_ext, 0, v_ext])
    return GaussianEstimate(mean, symmetrize(cov), frame, SPACE_2D)


def bot_init(
    z0: np.ndarray, params: BoTParams | None = None, frame: int = 0
) -> GaussianEstimate:
    """First estimate of the heuristic baseline from one bounding box."""
    params = params or BoTParams()
    z0 = np.asarray(z0, dtype=float)
    mean = measurement_matrix().T @ z0
    # Same extent-proportional pattern as the running noise, widened by
    # 2 on positions and 10 on rates.
    wide = BoTParams(2.0 * params.zeta_r, 10.0 * params.zeta_rdot)
    cov = bot_process_noise(z0[2], z0[3], wide)
    return GaussianEstimate(mean, cov, frame, SPACE_BOT)


def bot_predict(
    est: GaussianEstimate, params: BoTParams | None = None
) -> GaussianEstimate:
    """Baseline prediction; process noise from the filtered extents of k-1."""
    params = params or BoTParams()
    F = bot_transition_matrix()
    Q = bot_process_noise(est.mean[4], est.mean[6], params)
    mean = F @ est.mean
    cov = symmetrize(F @ est.cov @ F.T + Q)
    return GaussianEstimate(mean, cov, est.frame + 1, SPACE_BOT)


def bot_update(
    pred: GaussianEstimate, z: np.ndarray, params: BoTParams | None = None
) -> GaussianEstimate:
    """Baseline update; measurement noise from the predicted extents.

    The covariance update is the plain P - K S K^T of the published
    filter, kept verbatim instead of the Joseph form.
    """
    params = params or BoTParams()
    z = np.asarray(z, dtype=float)
    H = measurement_matrix()
    R = bot_measurement_noise(pred.mean[4], pred.mean[6], params)
    S = symmetrize(H @ pred.cov @ H.T + R)
    K = _innovation_solve(S, H @ pred.cov).T
    mean = pred.mean + K @ (z - H @ pred.mean)
    cov = symmetrize(pred.cov - K @ S @ K.T)
    return GaussianEstimate(mean, cov, pred.frame, SPACE_BOT)


def bb_measurement_fn(model: ModelSet3D) -> Callable[[np.ndarray], np.ndarray]:
    """Composite measurement map: project to image space, keep the box."""

    def transform(points: np.ndarray) -> np.ndarray:
        return project_state(model, points)[list(MEASURED_ROWS)]

    return transform


def unscented_kalman_update(
    pred: GaussianEstimate,
    z: np.ndarray,
    transform: Callable[[np.ndarray], np.ndarray],
    R: np.ndarray,
) -> GaussianEstimate:
    """Square-root-form unscented update with measurement function g.

    The posterior covariance (M_x - K M_y)(M_x - K M_y)^T + K R K^T is
    algebraically the standard one but assembled from outer products.
    Raises ``FunctionDomainError`` if g rejects a sigma point and
    ``SingularInnovation`` if M_y M_y^T + R cannot be factorized.
    """
    z = np.asarray(z, dtype=float)
    R = np.asarray(R, dtype=float)
    sigma = unscented_transform(pred.mean, pred.cov, transform)
    m = sigma.mean_y.shape[0]
    if z.shape != (m,) or R.shape != (m, m):
        raise DimensionMismatch(
            f"measurement {z.shape} / noise {R.shape} do not match transform ({m},)"
        )
    S = symmetrize(sigma.cov_y + R)
    K = _innovation_solve(S, sigma.cross_cov.T).T
    mean = pred.mean + K @ (z - sigma.mean_y)
    residual_dev = sigma.dev_x - K @ sigma.dev_y
    cov = symmetrize(residual_dev @ residual_dev.T + K @ R @ K.T)
    return GaussianEstimate(mean, cov, pred.frame, pred.space)


def ukf_predict(est: GaussianEstimate, model: ModelSet3D) -> GaussianEstimate:
    """3D prediction: linear in the state, so a plain Kalman step."""
    return kf_predict(est, model.F, model.Q, model.m)


def ukf_update(
    pred: GaussianEstimate, z: np.ndarray, model: ModelSet3D
) -> GaussianEstimate:
    """3D measurement update through the pinhole projection."""
    return unscented_kalman_update(pred, z, bb_measurement_fn(model), model.R)


# Detector-noise rows entering the position fix: x, y and height.  The
# width noise does not constrain the position, so its row is omitted.
INIT_NOISE_SELECTOR = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)

# Lift of a 3D position into the 8-dimensional state (rate and extent
# slots zero).
POSITION_LIFT = np.zeros((8, 3))
POSITION_LIFT[0, 0] = POSITION_LIFT[2, 1] = POSITION_LIFT[4, 2] = 1.0


def _position_fix_fn(
    model: ModelSet3D, z0: np.ndarray
) -> Callable[[np.ndarray], np.ndarray]:
    """Backprojection of the first box as a function of its unknowns.

    The argument columns are [x-noise, y-noise, height-noise, body
    height]; the true pixel height [z0]_4 minus its noise sets the depth
    through the body height, and the ray through the denoised
    bottom-center fixes x and y.
    """
    cu, cv = model.cam.principal_point_px
    focal_px = model.cam.focal_px

    def transform(points: np.ndarray) -> np.ndarray:
        noise_u, noise_v, noise_h, height_m = points
        denom = z0[3] - noise_h
        if np.any(denom <= 0):
            raise FunctionDomainError(
                "a sigma point's denoised box height is not positive"
            )
        factor = height_m / denom
        return np.stack(
            [
                factor * (z0[0] - cu - noise_u),
                factor * (z0[1] - cv - noise_v),
                factor * focal_px,
            ]
        )

    return transform


def init_3d(
    z0: np.ndarray,
    model: ModelSet3D,
    consts: InitConstants3D | None = None,
    frame: int = 0,
) -> GaussianEstimate:
    """First estimate of the 3D filter from one bounding box.

    The box's bottom-center and height fix the position by an unscented
    pass through the backprojection, with the body height prior supplying
    the depth scale.  Velocities start at zero with the speed-cap
    variance; the extents start at their stationary laws.
    """
    consts = consts or InitConstants3D()
    z0 = np.asarray(z0, dtype=float)
    if not z0[3] > 0:
        raise NonPositiveHeight(f"box height must be positive, got {z0[3]}")
    p = model.params
    mean_in = np.array([0.0, 0.0, 0.0, p.mean_h])
    cov_in = np.zeros((4, 4))
    cov_in[:3, :3] = INIT_NOISE_SELECTOR @ model.R @ INIT_NOISE_SELECTOR.T
    cov_in[3, 3] = p.sigma_h**2
    sigma = unscented_transform(mean_in, cov_in, _position_fix_fn(model, z0))
    mean = POSITION_LIFT @ sigma.mean_y
    mean[6] = p.mean_w
    mean[7] = p.mean_h
    cov = POSITION_LIFT @ sigma.cov_y @ POSITION_LIFT.T
    v = consts.v_rdot
    cov[np.diag_indices(8)] += np.array(
        [0, v, 0, v, 0, v, p.sigma_w**2, p.sigma_h**2]
    )
    return GaussianEstimate(mean, symmetrize(cov), frame, SPACE_3D)


def project_estimate(
    est: GaussianEstimate, model: ModelSet3D
) -> GaussianEstimate:
    """Image of a 3D estimate as a bounding-box Gaussian.

    Unscented image of the estimate through projection-then-selection;
    the output covariance is the sigma spread alone, with no detector
    noise added.
    """
    sigma = unscented_transform(est.mean, est.cov, bb_measurement_fn(model))
    return GaussianEstimate(
        sigma.mean_y, symmetrize(sigma.cov_y), est.frame, SPACE_BB
    )


def linear_box_estimate(est: GaussianEstimate) -> GaussianEstimate:
    """Bounding-box Gaussian of a linear-state estimate: H mean, H P H^T."""
    h = measurement_matrix()
    return GaussianEstimate(
        h @ est.mean, symmetrize(h @ est.cov @ h.T), est.frame, SPACE_BB
    )
