"""Camera model, rigid poses, and PnP pose recovery.

Projection composes, in this fixed order: rigid transform (camera point
P = R p + t), perspective division, radial + tangential distortion, then
intrinsics.  solve_pnp initializes with a direct linear transform (n >= 6)
or exhaustive three-point hypotheses (4 <= n < 6) and refines with a
Levenberg-Marquardt schedule on analytic Jacobians.
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

LM_MAX_ITERS = 100
LM_STEP_TOL = 1e-10
OUTLIER_FACTOR = 3.0          # times the median residual
OUTLIER_MIN_POINTS = 8        # run the rejection round only at n >= 8
GIMBAL_PITCH_DEG = 89.0


class BehindCamera(ValueError):
    """A projected point has non-positive depth."""


class DegenerateConfiguration(ValueError):
    """Too few or geometrically degenerate correspondences."""


class NotConverged(RuntimeWarning):
    """The refinement hit the iteration cap; the best iterate is returned."""


class GimbalProximity(UserWarning):
    """Pitch within 1 degree of +-90: Euler angles are ill-conditioned."""


# --------------------------------------------------------------------------
# Pose.

@dataclass(frozen=True)
class Pose:
    """Rigid transform world -> camera: P_cam = R @ p + t.

    Stored as a unit quaternion (x, y, z, w) plus translation in meters.
    """

    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(q))
        if not np.isfinite(norm) or norm < 1e-3:
            raise ValueError("quaternion norm too close to zero to normalize")
        object.__setattr__(self, "quaternion", q / norm)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, R: np.ndarray, t: np.ndarray) -> "Pose":
        return cls(Rotation.from_matrix(R).as_quat(), t)

    @classmethod
    def from_rotvec(cls, rotvec: np.ndarray, t: np.ndarray) -> "Pose":
        return cls(Rotation.from_rotvec(rotvec).as_quat(), t)

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quaternion)

    @property
    def matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()

    def transform(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.matrix.T + self.translation

    def inverse(self) -> "Pose":
        Rinv = self.matrix.T
        return Pose.from_matrix(Rinv, -Rinv @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: x -> self(other(x))."""
        R1, R2 = self.matrix, other.matrix
        return Pose.from_matrix(
            R1 @ R2, R1 @ other.translation + self.translation)

    def euler_degrees(self) -> np.ndarray:
        """Fixed-axis X-Y-Z Euler angles in degrees."""
        return self.rotation.as_euler("xyz", degrees=True)


# --------------------------------------------------------------------------
# Camera.

@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with radial (k1, k2) and tangential (p1, p2) terms."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def distort(self, xy: np.ndarray) -> np.ndarray:
        """Normalized ideal coords -> normalized distorted coords."""
        xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
        x, y = xy[:, 0], xy[:, 1]
        r2 = x * x + y * y
        rad = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
        xd = x * rad + 2 * self.p1 * x * y + self.p2 * (r2 + 2 * x * x)
        yd = y * rad + self.p1 * (r2 + 2 * y * y) + 2 * self.p2 * x * y
        return np.stack([xd, yd], axis=1)

    def undistort(self, xy_d: np.ndarray, iterations: int = 10) -> np.ndarray:
        """Fixed-point inverse of distort (exact when distortion is zero)."""
        xy_d = np.atleast_2d(np.asarray(xy_d, dtype=np.float64))
        xy = xy_d.copy()
        for _ in range(iterations):
            x, y = xy[:, 0], xy[:, 1]
            r2 = x * x + y * y
            rad = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
            dx = 2 * self.p1 * x * y + self.p2 * (r2 + 2 * x * x)
            dy = self.p1 * (r2 + 2 * y * y) + 2 * self.p2 * x * y
            xy = np.stack([(xy_d[:, 0] - dx) / rad,
                           (xy_d[:, 1] - dy) / rad], axis=1)
        return xy

    def project_points(self, pose: Pose, world: np.ndarray) -> np.ndarray:
        """Project (N, 3) world points; raises BehindCamera on depth <= 0."""
        P = pose.transform(world)
        if np.any(P[:, 2] <= 0):
            raise BehindCamera("point at or behind the camera plane")
        xy = P[:, :2] / P[:, 2:3]
        d = self.distort(xy)
        return np.stack([self.fx * d[:, 0] + self.cx,
                         self.fy * d[:, 1] + self.cy], axis=1)

    def pixel_rays(self, uv: np.ndarray) -> np.ndarray:
        """Unit direction in camera frame for each (u, v) pixel point."""
        uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
        xy_d = np.stack([(uv[:, 0] - self.cx) / self.fx,
                         (uv[:, 1] - self.cy) / self.fy], axis=1)
        xy = self.undistort(xy_d)
        rays = np.concatenate([xy, np.ones((len(xy), 1))], axis=1)
        return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def project(camera: CameraModel, pose: Pose, world) -> tuple[float, float]:
    """Single-point convenience wrapper over CameraModel.project_points."""
    uv = camera.project_points(pose, np.asarray(world, dtype=np.float64)
                               .reshape(1, 3))
    return float(uv[0, 0]), float(uv[0, 1])


def write_camera(camera: CameraModel, path: str | Path) -> None:
    cfg = configparser.ConfigParser()
    cfg["camera"] = {
        "fx": repr(camera.fx), "fy": repr(camera.fy),
        "cx": repr(camera.cx), "cy": repr(camera.cy),
        "width": str(camera.width), "height": str(camera.height),
        "k1": repr(camera.k1), "k2": repr(camera.k2),
        "p1": repr(camera.p1), "p2": repr(camera.p2),
    }
    with open(path, "w") as fh:
        cfg.write(fh)


def read_camera(path: str | Path) -> CameraModel:
    cfg = configparser.ConfigParser()
    if not cfg.read(path):
        raise FileNotFoundError(path)
    if "camera" not in cfg:
        raise ValueError(f"{path}: missing [camera] section")
    sec = cfg["camera"]
    try:
        return CameraModel(
            fx=sec.getfloat("fx"), fy=sec.getfloat("fy"),
            cx=sec.getfloat("cx"), cy=sec.getfloat("cy"),
            width=sec.getint("width"), height=sec.getint("height"),
            k1=sec.getfloat("k1", 0.0), k2=sec.getfloat("k2", 0.0),
            p1=sec.getfloat("p1", 0.0), p2=sec.getfloat("p2", 0.0))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: bad [camera] section: {exc}") from exc


# --------------------------------------------------------------------------
# Correspondence normalization.

def _as_point_arrays(correspondences,
                     image_points=None) -> tuple[np.ndarray, np.ndarray]:
    """Accepts (world_array, image_array), a list of pairs, or a list of
    detector Correspondence objects; returns (N,3) world and (N,2) image."""
    if image_points is not None:
        world = np.asarray(correspondences, dtype=np.float64).reshape(-1, 3)
        image = np.asarray(image_points, dtype=np.float64).reshape(-1, 2)
    else:
        world, image = [], []
        for c in correspondences:
            if hasattr(c, "point_3d"):
                world.append(np.asarray(c.point_3d, dtype=np.float64))
                image.append(np.asarray(c.corner.position, dtype=np.float64))
            else:
                w, i = c
                world.append(np.asarray(w, dtype=np.float64))
                image.append(np.asarray(i, dtype=np.float64))
        world = np.array(world, dtype=np.float64).reshape(-1, 3)
        image = np.array(image, dtype=np.float64).reshape(-1, 2)
    if len(world) != len(image):
        raise ValueError("world/image point counts differ")
    return world, image


# --------------------------------------------------------------------------
# PnP.

@dataclass
class PnPResult:
    pose: Pose
    covariance: np.ndarray        # 6x6 over (rotation vector, translation)
    residuals: np.ndarray         # per-point pixel error, all input points
    rms: float
    converged: bool
    inliers: np.ndarray           # bool mask over the input points
    iterations: int = 0

    @property
    def n_used(self) -> int:
        return int(self.inliers.sum())


def _projection_jacobian(camera: CameraModel, pose: Pose,
                         world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Projected pixels and the (2N, 6) Jacobian in (omega, t) order.

    Left perturbation: R <- exp(omega^) R, so dP/domega = -[P - t]_x.
    """
    P = pose.transform(world)
    X, Y, Z = P[:, 0], P[:, 1], P[:, 2]
    x, y = X / Z, Y / Z
    r2 = x * x + y * y
    k1, k2, p1, p2 = camera.k1, camera.k2, camera.p1, camera.p2
    rad = 1.0 + k1 * r2 + k2 * r2 * r2
    drad = k1 + 2.0 * k2 * r2           # d(rad)/d(r2)
    xd = x * rad + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
    yd = y * rad + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
    uv = np.stack([camera.fx * xd + camera.cx,
                   camera.fy * yd + camera.cy], axis=1)

    dxd_dx = rad + 2 * x * x * drad + 2 * p1 * y + 6 * p2 * x
    dxd_dy = 2 * x * y * drad + 2 * p1 * x + 2 * p2 * y
    dyd_dx = 2 * x * y * drad + 2 * p1 * x + 2 * p2 * y
    dyd_dy = rad + 2 * y * y * drad + 6 * p1 * y + 2 * p2 * x

    n = len(world)
    J = np.zeros((2 * n, 6))
    iz = 1.0 / Z
    # d(x, y)/dP rows composed with d(xd, yd)/d(x, y) and intrinsics
    dx_dP = np.stack([iz, np.zeros(n), -X * iz * iz], axis=1)
    dy_dP = np.stack([np.zeros(n), iz, -Y * iz * iz], axis=1)
    du_dP = camera.fx * (dxd_dx[:, None] * dx_dP + dxd_dy[:, None] * dy_dP)
    dv_dP = camera.fy * (dyd_dx[:, None] * dx_dP + dyd_dy[:, None] * dy_dP)
    Rp = P - pose.translation
    # -[Rp]_x columns: dP/domega
    zeros = np.zeros(n)
    cross = np.stack([
        np.stack([zeros, Rp[:, 2], -Rp[:, 1]], axis=1),
        np.stack([-Rp[:, 2], zeros, Rp[:, 0]], axis=1),
        np.stack([Rp[:, 1], -Rp[:, 0], zeros], axis=1),
    ], axis=1)                          # (n, 3, 3) = -[Rp]_x
    J[0::2, :3] = np.einsum("nk,nkj->nj", du_dP, cross)
    J[1::2, :3] = np.einsum("nk,nkj->nj", dv_dP, cross)
    J[0::2, 3:] = du_dP
    J[1::2, 3:] = dv_dP
    return uv, J


def _check_not_degenerate(world: np.ndarray) -> None:
    if len(world) < 4:
        raise DegenerateConfiguration(
            f"need at least 4 correspondences, got {len(world)}")
    centered = world - world.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[1] < 1e-9 * max(s[0], 1e-12):
        raise DegenerateConfiguration("3D points are collinear or coincident")


def _dlt_init(camera: CameraModel, world: np.ndarray,
              image: np.ndarray) -> Optional[Pose]:
    """Direct linear transform on undistorted normalized coordinates."""
    xy = camera.undistort(
        np.stack([(image[:, 0] - camera.cx) / camera.fx,
                  (image[:, 1] - camera.cy) / camera.fy], axis=1))
    n = len(world)
    A = np.zeros((2 * n, 12))
    Xh = np.concatenate([world, np.ones((n, 1))], axis=1)
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xy[:, 0:1] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -xy[:, 1:2] * Xh
    _, _, vt = np.linalg.svd(A)
    P = vt[-1].reshape(3, 4)
    M = P[:, :3]
    if np.linalg.det(M) < 0:
        P, M = -P, -M
    U, s, Vt = np.linalg.svd(M)
    if s[2] < 1e-12 * s[0]:
        return None
    scale = float(np.cbrt(s[0] * s[1] * s[2]))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        return None
    t = P[:, 3] / scale
    pose = Pose.from_matrix(R, t)
    depths = pose.transform(world)[:, 2]
    if np.median(depths) < 0:
        # projective sign flip: same image points, mirrored depths
        pose = Pose.from_matrix(-R, -t) if np.linalg.det(-R) > 0 else None
    if pose is not None and np.median(pose.transform(world)[:, 2]) <= 0:
        return None
    return pose


def _three_point_hypotheses(camera: CameraModel, world: np.ndarray,
                            image: np.ndarray) -> list[Pose]:
    """Candidate poses from all 3-subsets, solved for point depths.

    The three-point depth system (law of cosines along each bearing pair)
    is solved numerically from a ladder of starting scales; hypotheses are
    completed by rigid alignment of camera-frame to world-frame triangles.
    """
    rays = camera.pixel_rays(image)
    out: list[Pose] = []
    for (i, j, k) in combinations(range(len(world)), 3):
        f = rays[[i, j, k]]
        w = world[[i, j, k]]
        cos_ab = float(f[0] @ f[1])
        cos_ac = float(f[0] @ f[2])
        cos_bc = float(f[1] @ f[2])
        d_ab = float(np.linalg.norm(w[0] - w[1]))
        d_ac = float(np.linalg.norm(w[0] - w[2]))
        d_bc = float(np.linalg.norm(w[1] - w[2]))
        if min(d_ab, d_ac, d_bc) < 1e-12:
            continue

        def eqs(s):
            return [
                s[0] * s[0] + s[1] * s[1] - 2 * s[0] * s[1] * cos_ab - d_ab ** 2,
                s[0] * s[0] + s[2] * s[2] - 2 * s[0] * s[2] * cos_ac - d_ac ** 2,
                s[1] * s[1] + s[2] * s[2] - 2 * s[1] * s[2] * cos_bc - d_bc ** 2,
            ]

        span = max(d_ab, d_ac, d_bc)
        for scale in (0.5, 1.0, 2.0, 5.0, 10.0, 25.0):
            s0 = np.full(3, scale * span)
            sol = least_squares(eqs, s0, method="lm", xtol=1e-14)
            if not np.all(np.abs(sol.fun) < 1e-9 * span * span):
                continue
            s = np.abs(sol.x)
            cam_pts = f * s[:, None]
            pose = _rigid_align(w, cam_pts)
            if pose is not None and np.all(pose.transform(world)[:, 2] > 0):
                out.append(pose)
    return out


def _rigid_align(world: np.ndarray, cam: np.ndarray) -> Optional[Pose]:
    """Least-squares rigid transform world -> camera (Kabsch)."""
    cw = world - world.mean(axis=0)
    cc = cam - cam.mean(axis=0)
    H = cw.T @ cc
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, float(np.sign(np.linalg.det(Vt.T @ U.T)))])
    R = Vt.T @ D @ U.T
    if not np.isfinite(R).all():
        return None
    t = cam.mean(axis=0) - R @ world.mean(axis=0)
    return Pose.from_matrix(R, t)


def _lm_refine(camera: CameraModel, pose: Pose, world: np.ndarray,
               image: np.ndarray) -> tuple[Pose, bool, int]:
    lam = 1e-3
    target = image.ravel()

    def cost_of(p: Pose) -> tuple[float, np.ndarray, np.ndarray]:
        uv, J = _projection_jacobian(camera, p, world)
        r = target - uv.ravel()
        return float(r @ r), r, J

    try:
        cost, r, J = cost_of(pose)
    except BehindCamera:
        return pose, False, 0
    converged = False
    it = 0
    for it in range(1, LM_MAX_ITERS + 1):
        A = J.T @ J + lam * np.eye(6)
        g = J.T @ r
        try:
            delta = np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        if float(np.linalg.norm(delta)) < LM_STEP_TOL:
            converged = True
            break
        cand = Pose.from_matrix(
            Rotation.from_rotvec(delta[:3]).as_matrix() @ pose.matrix,
            pose.translation + delta[3:])
        depths = cand.transform(world)[:, 2]
        if np.any(depths <= 0):
            lam *= 10.0
            continue
        new_cost, new_r, new_J = cost_of(cand)
        if new_cost < cost:
            pose, cost, r, J = cand, new_cost, new_r, new_J
            lam = max(lam / 10.0, 1e-12)
        else:
            lam *= 10.0
            if lam > 1e12:
                break
    return pose, converged, it


def solve_pnp(correspondences, camera: CameraModel = None, *,
              image_points=None) -> PnPResult:
    """Pose from 2D-3D correspondences by reprojection minimization.

    Accepts either solve_pnp(correspondence_list, camera) where entries
    carry .point_3d/.corner.position or are (world, image) pairs, or
    solve_pnp(world_array, camera, image_points=image_array).
    """
    if camera is None:
        raise TypeError("camera is required")
    world, image = _as_point_arrays(correspondences, image_points)
    _check_not_degenerate(world)

    candidates: list[Pose] = []
    if len(world) >= 6:
        init = _dlt_init(camera, world, image)
        if init is not None:
            candidates.append(init)
    if not candidates:
        candidates = _three_point_hypotheses(camera, world, image)
    if not candidates:
        raise DegenerateConfiguration("no valid pose hypothesis found")

    def reproj_sse(p: Pose) -> float:
        try:
            uv = camera.project_points(p, world)
        except BehindCamera:
            return float("inf")
        return float(((uv - image) ** 2).sum())

    pose = min(candidates, key=reproj_sse)
    pose, converged, iters = _lm_refine(camera, pose, world, image)

    inliers = np.ones(len(world), dtype=bool)
    uv = camera.project_points(pose, world)
    residuals = np.linalg.norm(uv - image, axis=1)
    if len(world) >= OUTLIER_MIN_POINTS:
        med = float(np.median(residuals))
        keep = residuals <= OUTLIER_FACTOR * max(med, 1e-12)
        if keep.sum() >= 6 and not keep.all():
            pose2, conv2, it2 = _lm_refine(
                camera, pose, world[keep], image[keep])
            pose, converged, iters = pose2, conv2, iters + it2
            inliers = keep
            uv = camera.project_points(pose, world)
            residuals = np.linalg.norm(uv - image, axis=1)

    if not converged:
        warnings.warn("refinement did not converge; returning best iterate",
                      NotConverged)

    _, J = _projection_jacobian(camera, pose, world[inliers])
    r_in = residuals[inliers]
    dof = max(2 * int(inliers.sum()) - 6, 1)
    sigma2 = float((r_in ** 2).sum()) / dof
    JtJ = J.T @ J
    try:
        covariance = np.linalg.inv(JtJ) * sigma2
    except np.linalg.LinAlgError:
        covariance = np.linalg.pinv(JtJ) * sigma2
    rms = float(np.sqrt(np.mean(residuals[inliers] ** 2)))
    return PnPResult(pose=pose, covariance=covariance, residuals=residuals,
                     rms=rms, converged=converged, inliers=inliers,
                     iterations=iters)


# --------------------------------------------------------------------------
# Statistics and comparisons.

def reprojection_stats(pose: Pose, correspondences,
                       camera: CameraModel = None, *,
                       image_points=None) -> dict[str, float]:
    """Median / mean / max pixel reprojection error for a fixed pose."""
    world, image = _as_point_arrays(correspondences, image_points)
    uv = camera.project_points(pose, world)
    err = np.linalg.norm(uv - image, axis=1)
    return {"median": float(np.median(err)),
            "mean": float(np.mean(err)),
            "max": float(np.max(err))}


@dataclass(frozen=True)
class RelativePose:
    distance: float
    angle_diff: tuple[float, float, float]     # fixed-axis X-Y-Z, degrees
    gimbal_proximity: bool


def relative_pose(a: Pose, b: Pose) -> RelativePose:
    """Distance between pole origins and the Euler decomposition of the
    rotation taking a's frame to b's frame."""
    distance = float(np.linalg.norm(a.translation - b.translation))
    R_rel = a.matrix.T @ b.matrix
    angles = Rotation.from_matrix(R_rel).as_euler("xyz", degrees=True)
    gimbal = bool(abs(angles[1]) > GIMBAL_PITCH_DEG)
    if gimbal:
        warnings.warn("pitch within 1 degree of +-90; X/Z angles unstable",
                      GimbalProximity)
    return RelativePose(distance, tuple(float(v) for v in angles), gimbal)


# --------------------------------------------------------------------------
# Full pipeline.

@dataclass
class PoleLocalization:
    pole_id: str
    status: str                   # "localized" | "unlocalized" | "failed: ..."
    n_corners: int
    pose: Optional[Pose] = None
    stats: Optional[dict[str, float]] = None
    covariance: Optional[np.ndarray] = None
    rms: Optional[float] = None


LOCALIZE_REPROJ_GATE_PX = 2.0     # median above this means the solve is junk


def localize_poles(image, registry, camera: CameraModel,
                   stripes) -> list[PoleLocalization]:
    """Detect, decode, and solve each registered pole independently.

    Poles with fewer than 4 labeled corners are reported with status
    "unlocalized"; per-pole solver failures are caught and reported so one
    bad pole cannot abort the others.  A solve whose median reprojection
    error exceeds LOCALIZE_REPROJ_GATE_PX is reported as failed: genuine
    poses land well under a pixel, so a large residual means the optimizer
    stalled in a bad basin and the pose would poison downstream statistics.
    """
    from .detector import (detect_corners, link_grid, refine_corners,
                           sample_edge_bits, decode_grid, partition_by_pole,
                           pole_codebooks)

    corners = detect_corners(image)
    grid = link_grid(corners, image)
    grid = refine_corners(grid, image)
    grid = sample_edge_bits(grid, image)
    grid = decode_grid(grid, pole_codebooks(registry, stripes), registry)
    parts = partition_by_pole(grid, registry)
    out = []
    for pole in registry:
        corr = parts.by_pole.get(pole.pole_id, [])
        if len(corr) < 4:
            out.append(PoleLocalization(pole.pole_id, "unlocalized",
                                        len(corr)))
            continue
        try:
            res = solve_pnp(corr, camera)
        except (DegenerateConfiguration, BehindCamera) as exc:
            out.append(PoleLocalization(
                pole.pole_id, f"failed: {exc}", len(corr)))
            continue
        stats = reprojection_stats(res.pose, corr, camera)
        if stats["median"] > LOCALIZE_REPROJ_GATE_PX:
            out.append(PoleLocalization(
                pole.pole_id,
                f"failed: median reprojection {stats['median']:.2f} px",
                len(corr)))
            continue
        out.append(PoleLocalization(
            pole.pole_id, "localized", len(corr), pose=res.pose, stats=stats,
            covariance=res.covariance, rms=res.rms))
    return out
