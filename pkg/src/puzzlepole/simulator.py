"""Synthetic scene renderer and the two-pole accuracy experiment.

render_scene inverse-ray-casts patterned cylinders: every pixel ray is
intersected with every pole, the nearest front hit is mapped to pattern
coordinates, and the pattern is evaluated (optionally supersampled).
Post-processing order is fixed: blur, then noise, then occlusion masks.
The renderer also emits the exact projected corner table through the same
camera model used for pose recovery, so ground truth and detection share
one projection definition.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .board import (BOARD_PERIOD, PoleSpec, PoleRegistry, build_pole_pattern,
                    corner_point_3d, pack_corner_id)
from .codebook import CodeStripe, find_quasiperiodic_windows
from .images import GrayImage
from .pose import CameraModel, Pose, relative_pose, reprojection_stats, solve_pnp

GRAZING_DEG = 10.0            # within this of the silhouette -> flagged
SUCCESS_FRACTION = 0.5        # below this, the experiment is misconfigured


class InsufficientDetections(RuntimeError):
    """Fewer than half the frames produced both poses."""


@dataclass(frozen=True)
class ScenePole:
    spec: PoleSpec
    world_pose: Pose              # pole frame -> world


@dataclass(frozen=True)
class RenderOptions:
    noise_sigma: float = 0.0
    blur_sigma: float = 0.0
    occlusion_masks: tuple = ()   # each: (k, 2) array of (u, v) vertices
    supersampling: int = 1
    background: float = 0.5
    occluder_intensity: float = 0.25

    def __post_init__(self):
        if self.supersampling not in (1, 2, 4):
            raise ValueError("supersampling must be 1, 2, or 4")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class CornerTruth:
    """One corner's exact projection and visibility classification."""

    pole_id: str
    axial: int                    # i in [0, axial_cells]
    ring: int                     # j in [0, period)
    corner_id: int
    u: float                      # nan when behind the camera
    v: float
    depth: float
    front_facing: bool
    occluded: bool
    in_frame: bool
    grazing: bool

    @property
    def visible(self) -> bool:
        return self.front_facing and not self.occluded and self.in_frame


def _ray_cylinder(o: np.ndarray, d: np.ndarray, radius: float,
                  height: float) -> np.ndarray:
    """Nearest positive hit parameter per ray with the lateral surface of
    x^2 + z^2 = radius^2, 0 <= y <= height; inf where there is no hit.

    o is (3,) or (n, 3), d is (n, 3) unit rays, both in the pole frame.
    Only the near root counts: the far root is the inside of the surface.
    """
    o = np.broadcast_to(o, d.shape)
    a = d[:, 0] ** 2 + d[:, 2] ** 2
    b = 2.0 * (o[:, 0] * d[:, 0] + o[:, 2] * d[:, 2])
    c = o[:, 0] ** 2 + o[:, 2] ** 2 - radius * radius
    disc = b * b - 4.0 * a * c
    t = np.full(len(d), np.inf)
    ok = (disc >= 0) & (a > 1e-18)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t_near = (-b - sq) / np.where(ok, 2.0 * a, 1.0)
    y = o[:, 1] + t_near * d[:, 1]
    good = ok & (t_near > 1e-9) & (y >= 0.0) & (y <= height)
    t[good] = t_near[good]
    return t


@dataclass
class _PoleGeom:
    scene_pole: ScenePole
    pattern: object
    cam_to_pole_R: np.ndarray
    cam_to_pole_t: np.ndarray
    radius: float
    height: float


def _pole_pixel_bounds(camera, cam_from_pole, radius: float, height: float,
                       margin: int) -> Optional[tuple[int, int, int, int]]:
    """Conservative image-space bounds of one cylinder, or None.

    The cylinder lies inside its pole-frame bounding box; projection
    preserves convex containment, so the projected silhouette lies inside
    the hull of the eight projected box corners.  Returns None (meaning:
    no usable bound, scan the whole frame) when any corner is at or
    behind the image plane.  Distortion is ignored here; the caller's
    margin must absorb it.
    """
    corners = np.array([(sx * radius, y, sz * radius)
                        for sx in (-1.0, 1.0)
                        for y in (0.0, height)
                        for sz in (-1.0, 1.0)])
    cam_pts = corners @ cam_from_pole.matrix.T + cam_from_pole.translation
    if (cam_pts[:, 2] <= 1e-6).any():
        return None
    u = camera.fx * cam_pts[:, 0] / cam_pts[:, 2] + camera.cx
    v = camera.fy * cam_pts[:, 1] / cam_pts[:, 2] + camera.cy
    u0 = int(np.floor(u.min())) - margin
    u1 = int(np.ceil(u.max())) + margin + 1
    v0 = int(np.floor(v.min())) - margin
    v1 = int(np.ceil(v.max())) + margin + 1
    return (max(u0, 0), min(u1, camera.width),
            max(v0, 0), min(v1, camera.height))


def render_scene(camera: CameraModel, camera_pose: Pose,
                 poles: Sequence[ScenePole],
                 stripes: tuple[CodeStripe, CodeStripe],
                 options: RenderOptions = RenderOptions(),
                 rng: Optional[np.random.Generator] = None,
                 ) -> tuple[GrayImage, list[CornerTruth]]:
    """Render the scene and emit the ground-truth corner table.

    camera_pose maps world -> camera.  Corner truth uses the identical
    projection code path as pose recovery (CameraModel.project_points).
    """
    cam_from_world = camera_pose
    world_from_cam = camera_pose.inverse()
    geoms = []
    for sp in poles:
        pole_from_world = sp.world_pose.inverse()
        pole_from_cam = pole_from_world.compose(world_from_cam)
        geoms.append(_PoleGeom(
            scene_pole=sp,
            pattern=build_pole_pattern(sp.spec, stripes),
            cam_to_pole_R=pole_from_cam.matrix,
            cam_to_pole_t=pole_from_cam.translation,
            radius=sp.spec.radius,
            height=sp.spec.axial_cells * sp.spec.edge_length,
        ))
        origin = pole_from_cam.translation     # camera center in pole frame
        if origin[0] ** 2 + origin[2] ** 2 <= sp.spec.radius ** 2:
            raise ValueError(f"camera is inside pole {sp.spec.pole_id!r}")

    W, H, ss = camera.width, camera.height, options.supersampling
    img = np.full((H, W), options.background, dtype=np.float64)
    # subpixel sample offsets within each pixel (pixel center = index)
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    ou, ov = np.meshgrid(offs, offs, indexing="xy")
    ou, ov = ou.ravel(), ov.ravel()

    # Rays are cast only inside each pole's projected bounding box; the
    # margin covers the blur kernel's reach so the later full-image blur
    # sees the same neighborhood it would on an exhaustive scan.
    margin = int(math.ceil(4.0 * options.blur_sigma)) + 2
    distorted = camera.k1 or camera.k2 or camera.p1 or camera.p2
    boxes = []
    for sp in poles:
        b = None if distorted else _pole_pixel_bounds(
            camera, cam_from_world.compose(sp.world_pose),
            sp.spec.radius, sp.spec.axial_cells * sp.spec.edge_length, margin)
        if b is None:
            boxes = [(0, W, 0, H)]
            break
        boxes.append(b)
    mask = np.zeros((H, W), dtype=bool)
    for u0, u1, v0, v1 in boxes:
        mask[v0:v1, u0:u1] = True
    idx_v, idx_u = np.nonzero(mask)

    chunk = max(1, int(2_000_000 / (ss * ss)))
    for a in range(0, idx_v.size, chunk):
        vv = idx_v[a:a + chunk].astype(np.float64)
        uu = idx_u[a:a + chunk].astype(np.float64)
        uv = np.stack([
            (uu[:, None] + ou[None, :]).ravel(),
            (vv[:, None] + ov[None, :]).ravel()], axis=1)
        rays_cam = camera.pixel_rays(uv)
        shade = np.full(len(rays_cam), options.background)
        best_t = np.full(len(rays_cam), np.inf)
        for g in geoms:
            d = rays_cam @ g.cam_to_pole_R.T
            o = g.cam_to_pole_t
            t = _ray_cylinder(o, d, g.radius, g.height)
            closer = t < best_t
            if not closer.any():
                continue
            hit = o + t[closer, None] * d[closer]
            theta = np.mod(np.arctan2(hit[:, 2], hit[:, 0]), 2.0 * math.pi)
            w = theta * g.scene_pole.spec.period / (2.0 * math.pi)
            uax = hit[:, 1] / g.scene_pole.spec.edge_length
            shade[closer] = g.pattern.intensity(uax, w)
            best_t[closer] = t[closer]
        img[idx_v[a:a + chunk], idx_u[a:a + chunk]] = \
            shade.reshape(-1, ss * ss).mean(axis=1)

    if options.blur_sigma > 0:
        img = ndimage.gaussian_filter(img, options.blur_sigma)
    if options.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        img = img + rng.normal(0.0, options.noise_sigma, img.shape)
    img = np.clip(img, 0.0, 1.0)
    if options.occlusion_masks:
        from PIL import Image as PILImage, ImageDraw

        mask = PILImage.new("L", (W, H), 0)
        draw = ImageDraw.Draw(mask)
        for poly in options.occlusion_masks:
            draw.polygon([tuple(map(float, p)) for p in np.asarray(poly)],
                         fill=255)
        m = np.asarray(mask) > 0
        img[m] = options.occluder_intensity

    truth = _corner_truth(camera, camera_pose, poles, geoms)
    return GrayImage(img.astype(np.float32)), truth


def _corner_truth(camera: CameraModel, camera_pose: Pose,
                  poles: Sequence[ScenePole],
                  geoms: list[_PoleGeom]) -> list[CornerTruth]:
    world_from_cam = camera_pose.inverse()
    cam_center_world = world_from_cam.translation
    out = []
    for sp in poles:
        spec = sp.spec
        cam_from_pole = camera_pose.compose(sp.world_pose)
        ii, jj = np.meshgrid(np.arange(spec.axial_cells + 1),
                             np.arange(spec.period), indexing="ij")
        pts_pole = np.array([
            corner_point_3d(spec, int(i), int(j))
            for i, j in zip(ii.ravel(), jj.ravel())])
        pts_cam = cam_from_pole.transform(pts_pole)
        depths = pts_cam[:, 2]
        front_of_cam = depths > 1e-9
        uv = np.full((len(pts_pole), 2), np.nan)
        if front_of_cam.any():
            uv[front_of_cam] = camera.project_points(
                Pose.identity(), pts_cam[front_of_cam])

        # outward normal at each corner, in camera frame
        theta = 2.0 * math.pi * jj.ravel() / spec.period
        n_pole = np.stack([np.cos(theta), np.zeros(theta.size),
                           np.sin(theta)], axis=1)
        n_cam = n_pole @ cam_from_pole.matrix.T
        view = pts_cam / np.linalg.norm(pts_cam, axis=1, keepdims=True)
        cosang = -np.einsum("nk,nk->n", n_cam, view)
        front_facing = front_of_cam & (cosang > 0.0)
        grazing = front_facing & (cosang < math.sin(math.radians(GRAZING_DEG)))

        # occlusion: nearest cylinder hit along the corner's viewing ray
        pts_world = sp.world_pose.transform(pts_pole)
        rays_w = pts_world - cam_center_world
        dist = np.linalg.norm(rays_w, axis=1)
        rays_w /= dist[:, None]
        t_min = np.full(len(pts_pole), np.inf)
        for g in geoms:
            R = g.scene_pole.world_pose.inverse().matrix
            t0 = g.scene_pole.world_pose.inverse().translation
            o = R @ cam_center_world + t0
            d = rays_w @ R.T
            t = _ray_cylinder(o, d, g.radius, g.height)
            t_min = np.minimum(t_min, t)
        occluded = t_min < dist - 1e-6

        in_frame = (front_of_cam
                    & (uv[:, 0] >= 0) & (uv[:, 0] <= camera.width - 1)
                    & (uv[:, 1] >= 0) & (uv[:, 1] <= camera.height - 1))
        for idx in range(len(pts_pole)):
            i, j = int(ii.ravel()[idx]), int(jj.ravel()[idx])
            x = (spec.axial_start_x + i) % BOARD_PERIOD
            y = (spec.start_y + j) % BOARD_PERIOD
            out.append(CornerTruth(
                pole_id=spec.pole_id, axial=i, ring=j,
                corner_id=pack_corner_id(x, y),
                u=float(uv[idx, 0]), v=float(uv[idx, 1]),
                depth=float(depths[idx]),
                front_facing=bool(front_facing[idx]),
                occluded=bool(occluded[idx]),
                in_frame=bool(in_frame[idx]),
                grazing=bool(grazing[idx])))
    return out


# --------------------------------------------------------------------------
# Trajectories.

def generate_arc_trajectory(center, radius_range: tuple[float, float],
                            arc_degrees: float, n: int) -> list[Pose]:
    """Camera poses evenly spaced on a horizontal arc, all looking at
    center, radius interpolated linearly from first to last frame.

    The world up direction is +y (the pole axis); the camera keeps v-down
    aligned with world -y, so poles appear upright.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < arc_degrees <= 360:
        raise ValueError("arc must be in (0, 360] degrees")
    center = np.asarray(center, dtype=np.float64)
    down = np.array([0.0, -1.0, 0.0])
    poses = []
    for k in range(n):
        frac = k / (n - 1) if n > 1 else 0.0
        phi = math.radians(-arc_degrees / 2.0 + arc_degrees * frac)
        radius = radius_range[0] + (radius_range[1] - radius_range[0]) * frac
        eye = center + radius * np.array([math.sin(phi), 0.0, math.cos(phi)])
        f = center - eye
        f = f / np.linalg.norm(f)
        x = np.cross(down, f)
        x = x / np.linalg.norm(x)
        y = np.cross(f, x)
        R = np.stack([x, y, f])          # world -> camera rows
        poses.append(Pose.from_matrix(R, -R @ eye))
    return poses


# --------------------------------------------------------------------------
# Two-pole experiment.

EXPERIMENT_MODES = ("render", "pose_iid", "pose_shared_bias")


@dataclass(frozen=True)
class ExperimentConfig:
    """Two identical poles, fixed separation, camera on an arc."""

    period: int = 12
    axial_cells: int = 6
    edge_length: float = 0.03
    start_y: int = -1             # -1: first quasiperiodic window for period
    axial_start_x: int = 0        # left pole window
    axial_start_x_right: int = 8  # right pole window; must not overlap left
    separation: float = 2.0       # meters along world x
    fx: float = 1250.0
    fy: float = 1250.0
    width: int = 1332
    height: int = 1152
    n_frames: int = 64
    arc_degrees: float = 180.0
    radius_min: float = 1.5
    radius_max: float = 3.5
    mode: str = "render"
    supersampling: int = 2
    blur_sigma: float = 0.5
    noise_sigma: float = 0.01
    pixel_noise_sigma: float = 0.3    # pose_* modes: corner jitter in px
    bias_sigma: float = 1.0           # pose_shared_bias: shared offset in px
    seed: int = 0

    def __post_init__(self):
        if self.mode not in EXPERIMENT_MODES:
            raise ValueError(f"mode must be one of {EXPERIMENT_MODES}")

    def camera(self) -> CameraModel:
        return CameraModel(fx=self.fx, fy=self.fy,
                           cx=self.width / 2.0, cy=self.height / 2.0,
                           width=self.width, height=self.height)

    def resolve_start_y(self, stripes) -> int:
        if self.start_y >= 0:
            return self.start_y
        wins = find_quasiperiodic_windows(stripes[0], self.period)
        if not wins:
            raise ValueError(f"stripe has no period-{self.period} window")
        return wins[0].start_row

    @classmethod
    def full_scale(cls, **overrides) -> "ExperimentConfig":
        """Full-resolution variant: 185 frames at 2664x2304.

        Roughly 20x the default's runtime; the desk-scale default exists
        so the experiment fits in a test run.
        """
        base = dict(fx=2500.0, fy=2500.0, width=2664, height=2304,
                    n_frames=185)
        base.update(overrides)
        return cls(**base)


_EXP_FIELDS = [f for f in ExperimentConfig.__dataclass_fields__]


def write_experiment_config(config: ExperimentConfig, path) -> None:
    cfg = configparser.ConfigParser()
    cfg["experiment"] = {k: repr(getattr(config, k)) if isinstance(
        getattr(config, k), float) else str(getattr(config, k))
        for k in _EXP_FIELDS}
    with open(path, "w") as fh:
        cfg.write(fh)


def read_experiment_config(path) -> ExperimentConfig:
    cfg = configparser.ConfigParser()
    if not cfg.read(path):
        raise FileNotFoundError(path)
    if "experiment" not in cfg:
        raise ValueError(f"{path}: missing [experiment] section")
    sec = cfg["experiment"]
    kwargs = {}
    for name, fld in ExperimentConfig.__dataclass_fields__.items():
        if name not in sec:
            continue
        raw = sec[name]
        if fld.type in ("int",):
            kwargs[name] = int(raw)
        elif fld.type in ("float",):
            kwargs[name] = float(raw)
        else:
            kwargs[name] = raw
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ValueError(f"{path}: bad experiment config: {exc}") from exc


@dataclass
class FrameResult:
    index: int
    included: bool
    reason: str = ""
    distance: float = float("nan")
    angles: tuple[float, float, float] = (float("nan"),) * 3
    pose_a: Optional[Pose] = None
    pose_b: Optional[Pose] = None
    gt_a: Optional[Pose] = None
    gt_b: Optional[Pose] = None
    median_reproj_a: float = float("nan")
    median_reproj_b: float = float("nan")
    n_corners_a: int = 0
    n_corners_b: int = 0


CHANNELS = ("distance", "angle_x", "angle_y", "angle_z")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    frames: list[FrameResult]
    summary: dict[str, dict[str, float]]       # channel -> mean/variance/std
    histograms: dict[str, tuple[list, list]]   # channel -> (edges, counts)
    gt_distance: float
    gt_angles: tuple[float, float, float]

    @property
    def n_included(self) -> int:
        return sum(f.included for f in self.frames)

    @property
    def excluded(self) -> list[tuple[int, str]]:
        return [(f.index, f.reason) for f in self.frames if not f.included]

    def channel_values(self, channel: str) -> np.ndarray:
        idx = CHANNELS.index(channel)
        vals = [(f.distance if idx == 0 else f.angles[idx - 1])
                for f in self.frames if f.included]
        return np.array(vals)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["# two-pole experiment report"])
            wr.writerow(["# mode", self.config.mode,
                         "radius_m", self.config.radius_min,
                         self.config.radius_max,
                         "frames", len(self.frames),
                         "included", self.n_included])
            wr.writerow(["frame", "included", "reason", "distance_m",
                         "angle_x_deg", "angle_y_deg", "angle_z_deg",
                         "median_reproj_a_px", "median_reproj_b_px",
                         "n_corners_a", "n_corners_b"])
            for f in self.frames:
                wr.writerow([f.index, int(f.included), f.reason,
                             f"{f.distance:.6f}",
                             f"{f.angles[0]:.4f}", f"{f.angles[1]:.4f}",
                             f"{f.angles[2]:.4f}",
                             f"{f.median_reproj_a:.4f}",
                             f"{f.median_reproj_b:.4f}",
                             f.n_corners_a, f.n_corners_b])
            wr.writerow([])
            wr.writerow(["channel", "mean", "variance", "std"])
            for ch in CHANNELS:
                s = self.summary[ch]
                wr.writerow([ch, f"{s['mean']:.9g}", f"{s['variance']:.9g}",
                             f"{s['std']:.9g}"])


def _summarize(frames: list[FrameResult]) -> tuple[dict, dict]:
    summary, hists = {}, {}
    for ch in CHANNELS:
        idx = CHANNELS.index(ch)
        vals = np.array([(f.distance if idx == 0 else f.angles[idx - 1])
                         for f in frames if f.included])
        if len(vals) == 0:
            summary[ch] = {"mean": float("nan"), "variance": float("nan"),
                           "std": float("nan")}
            hists[ch] = ([], [])
            continue
        var = float(np.var(vals))
        summary[ch] = {"mean": float(np.mean(vals)), "variance": var,
                       "std": math.sqrt(var)}
        counts, edges = np.histogram(vals, bins=16)
        hists[ch] = (edges.tolist(), counts.tolist())
    return summary, hists


def _scene(config: ExperimentConfig, start_y: int) -> list[ScenePole]:
    def mk(name: str, x: float, start_x: int) -> ScenePole:
        spec = PoleSpec(name, config.period, start_y, config.axial_cells,
                        start_x, config.edge_length)
        return ScenePole(spec, Pose.from_matrix(
            np.eye(3), np.array([x, 0.0, 0.0])))

    return [mk("left", 0.0, config.axial_start_x),
            mk("right", config.separation, config.axial_start_x_right)]


def run_two_pole_experiment(config: ExperimentConfig,
                            stripes: tuple[CodeStripe, CodeStripe],
                            ) -> ExperimentReport:
    """Render (or synthesize) every frame, localize both poles, and
    aggregate relative-pose statistics; failed frames are excluded and
    counted.  Raises InsufficientDetections below a 50% success rate."""
    start_y = config.resolve_start_y(stripes)
    camera = config.camera()
    poles = _scene(config, start_y)
    specs = [p.spec for p in poles]
    height = config.axial_cells * config.edge_length
    center = np.array([config.separation / 2.0, height / 2.0, 0.0])
    trajectory = generate_arc_trajectory(
        center, (config.radius_min, config.radius_max),
        config.arc_degrees, config.n_frames)
    registry = PoleRegistry(specs)    # validates window disjointness upfront
    rng = np.random.default_rng(config.seed)
    world_corners = {
        sp.spec.pole_id: np.array([
            corner_point_3d(sp.spec, i, j)
            for i in range(sp.spec.axial_cells + 1)
            for j in range(sp.spec.period)])
        for sp in poles}

    frames: list[FrameResult] = []
    for k, cam_pose in enumerate(trajectory):
        frame = FrameResult(index=k, included=False)
        gt = {p.spec.pole_id: cam_pose.compose(p.world_pose) for p in poles}
        frame.gt_a, frame.gt_b = gt["left"], gt["right"]
        try:
            if config.mode == "render":
                est, stats, counts = _render_and_localize(
                    config, camera, cam_pose, poles, registry, stripes, rng)
            else:
                est, stats, counts = _synthetic_poses(
                    config, camera, cam_pose, poles, world_corners, rng)
        except Exception as exc:                      # pragma: no cover
            frame.reason = f"error: {exc}"
            frames.append(frame)
            continue
        missing = [pid for pid in ("left", "right") if pid not in est]
        if missing:
            frame.reason = f"pole(s) not localized: {','.join(missing)}"
            frames.append(frame)
            continue
        rel = relative_pose(est["left"], est["right"])
        frame.included = True
        frame.distance = rel.distance
        frame.angles = rel.angle_diff
        frame.pose_a, frame.pose_b = est["left"], est["right"]
        frame.median_reproj_a = stats.get("left", float("nan"))
        frame.median_reproj_b = stats.get("right", float("nan"))
        frame.n_corners_a = counts.get("left", 0)
        frame.n_corners_b = counts.get("right", 0)
        frames.append(frame)

    n_ok = sum(f.included for f in frames)
    if n_ok < SUCCESS_FRACTION * len(frames):
        raise InsufficientDetections(
            f"only {n_ok}/{len(frames)} frames localized both poles")
    summary, hists = _summarize(frames)
    gt_rel = relative_pose(frames[0].gt_a, frames[0].gt_b)
    return ExperimentReport(config=config, frames=frames, summary=summary,
                            histograms=hists, gt_distance=gt_rel.distance,
                            gt_angles=gt_rel.angle_diff)


def _render_and_localize(config, camera, cam_pose, poles, registry,
                         stripes, rng):
    from .pose import localize_poles

    options = RenderOptions(noise_sigma=config.noise_sigma,
                            blur_sigma=config.blur_sigma,
                            supersampling=config.supersampling)
    image, _ = render_scene(camera, cam_pose, poles, stripes, options,
                            rng=rng)
    est, stats, counts = {}, {}, {}
    for loc in localize_poles(image, registry, camera, stripes):
        counts[loc.pole_id] = loc.n_corners
        if loc.status == "localized":
            est[loc.pole_id] = loc.pose
            stats[loc.pole_id] = loc.stats["median"]
    return est, stats, counts


def _synthetic_poses(config, camera, cam_pose, poles, world_corners, rng):
    """Projection-level experiment modes: skip rendering, jitter the exact
    corner projections (i.i.d. per pole, plus an optional per-frame offset
    shared by both poles) and solve PnP directly."""
    shared = (rng.normal(0.0, config.bias_sigma, 2)
              if config.mode == "pose_shared_bias" else np.zeros(2))
    est, stats, counts = {}, {}, {}
    for sp in poles:
        pid = sp.spec.pole_id
        cam_from_pole = cam_pose.compose(sp.world_pose)
        pts = world_corners[pid]
        P = cam_from_pole.transform(pts)
        ok = P[:, 2] > 1e-9
        theta = 2.0 * math.pi * np.tile(np.arange(sp.spec.period),
                                        sp.spec.axial_cells + 1) / sp.spec.period
        normals = np.stack([np.cos(theta), np.zeros(theta.size),
                            np.sin(theta)], axis=1) @ cam_from_pole.matrix.T
        view = P / np.linalg.norm(P, axis=1, keepdims=True)
        facing = -np.einsum("nk,nk->n", normals, view) > math.sin(
            math.radians(GRAZING_DEG))
        ok &= facing
        if ok.sum() < 6:
            counts[pid] = int(ok.sum())
            continue
        uv = camera.project_points(Pose.identity(), P[ok])
        inside = ((uv[:, 0] >= 0) & (uv[:, 0] <= camera.width - 1)
                  & (uv[:, 1] >= 0) & (uv[:, 1] <= camera.height - 1))
        world = pts[ok][inside]
        image = uv[inside]
        counts[pid] = len(world)
        if len(world) < 6:
            continue
        noisy = image + rng.normal(0.0, config.pixel_noise_sigma,
                                   image.shape) + shared
        res = solve_pnp(world, camera, image_points=noisy)
        est[pid] = res.pose
        stats[pid] = reprojection_stats(
            res.pose, world, camera, image_points=noisy)["median"]
    return est, stats, counts


# --------------------------------------------------------------------------
# Pair vs single deviation.

PAIR_CHANNELS = ("tx", "ty", "tz", "rx", "ry", "rz")


@dataclass(frozen=True)
class PairSingleRatio:
    ratios: dict                 # channel -> float or None
    no_variance: bool


def pair_vs_single_deviation(report: ExperimentReport,
                             ground_truth=None) -> PairSingleRatio:
    """sigma_single / sigma_pair per channel; ~ sqrt(1/2) under i.i.d.
    per-pole errors.  Ground truth defaults to the report's own (synthetic
    runs embed it)."""
    rows_single = {ch: [] for ch in PAIR_CHANNELS}
    rows_pair = {ch: [] for ch in PAIR_CHANNELS}
    for f in report.frames:
        if not f.included:
            continue
        gt_a = f.gt_a if ground_truth is None else ground_truth[f.index][0]
        gt_b = f.gt_b if ground_truth is None else ground_truth[f.index][1]
        for est, gt in ((f.pose_a, gt_a), (f.pose_b, gt_b)):
            dt = est.translation - gt.translation
            dr = Rotation.from_matrix(gt.matrix.T @ est.matrix).as_euler(
                "xyz", degrees=True)
            for ch, val in zip(PAIR_CHANNELS, (*dt, *dr)):
                rows_single[ch].append(val)
        rel_t = f.pose_b.translation - f.pose_a.translation
        gt_t = gt_b.translation - gt_a.translation
        rel_r = Rotation.from_matrix(
            f.pose_a.matrix.T @ f.pose_b.matrix).as_euler("xyz", degrees=True)
        gt_r = Rotation.from_matrix(gt_a.matrix.T @ gt_b.matrix).as_euler(
            "xyz", degrees=True)
        for ch, val in zip(PAIR_CHANNELS, (*(rel_t - gt_t), *(rel_r - gt_r))):
            rows_pair[ch].append(val)

    ratios = {}
    any_degenerate = False
    for ch in PAIR_CHANNELS:
        sp = float(np.std(rows_pair[ch])) if rows_pair[ch] else 0.0
        ss = float(np.std(rows_single[ch])) if rows_single[ch] else 0.0
        if sp < 1e-12:
            ratios[ch] = None
            any_degenerate = True
        else:
            ratios[ch] = ss / sp
    return PairSingleRatio(ratios=ratios, no_variance=any_degenerate)
