"""Synthetic semantic-SLAM scenarios that produce assignment problems.

A scenario is a set of ellipsoidal landmarks, a camera trajectory and a
stereo detection model.  For each frame, visible landmarks are detected
(with misses, pixel noise and clutter), triangulated into camera-frame
ellipsoids and scored against the landmarks currently held in the map
window.  The ground-truth assignment is attached to every problem.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from .core import DEFAULT_NULL_LOG_LIK, NULL, AssignmentProblem
from .quadric import (BoundingBox, Ellipsoid, StereoCamera, UntriangulatableError,
                      ellipsoid_distance, invert_pose, pose_matrix, project_stereo,
                      triangulate_measurement)

DEFAULT_GATE = 50.0
NEAR_PLANE = 2.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 0.5
    size_sigma: float = 0.05
    detection_prob: float = 0.9
    clutter_rate: float = 0.2
    map_sigma: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.detection_prob <= 1.0:
            raise ValueError("detection_prob must lie in (0, 1]")
        for name in ("pixel_sigma", "size_sigma", "clutter_rate", "map_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Landmarks in the world frame plus camera-to-world poses per frame."""

    landmarks: Sequence[Ellipsoid]
    trajectory: Sequence[np.ndarray]
    camera: StereoCamera = field(default_factory=StereoCamera)
    noise: NoiseModel = field(default_factory=NoiseModel)
    max_range: float = 35.0
    map_window: int = 30
    seed: int = 0
    name: str = "scenario"

    @property
    def n_frames(self) -> int:
        return len(self.trajectory)

    @property
    def categories(self) -> list[str]:
        return sorted({lm.category for lm in self.landmarks})

    def camera_frame(self, frame: int) -> np.ndarray:
        """World-to-camera transform for ``frame``."""
        return invert_pose(self.trajectory[frame])

    @cached_property
    def _centers(self) -> np.ndarray:
        return np.array([lm.mu for lm in self.landmarks]).reshape(-1, 3)

    def visible(self, frame: int) -> list[int]:
        """Indices of landmarks whose centre projects inside the image in range."""
        T_cw = self.camera_frame(frame)
        cam = self.camera
        x, y, z = (self._centers @ T_cw[:3, :3].T + T_cw[:3, 3]).T
        ok = (z > NEAR_PLANE) & (z <= self.max_range)
        zs = np.where(ok, z, 1.0)
        u = cam.cx + cam.focal * x / zs
        v = cam.cy + cam.focal * y / zs
        ok &= (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
        return np.flatnonzero(ok).tolist()

    def map_window_ids(self, frame: int) -> list[int]:
        """Landmarks seen in any of the previous ``map_window`` frames."""
        seen: set[int] = set()
        for f in range(max(0, frame - self.map_window), frame):
            seen.update(self.visible(f))
        return sorted(seen)

    def map_estimate(self, index: int) -> Ellipsoid:
        """The mapped estimate of landmark ``index`` (fixed across frames)."""
        lm = self.landmarks[index]
        rng = np.random.default_rng([self.seed, 1_000_003, index])
        offset = rng.normal(0.0, self.noise.map_sigma, 3)
        return Ellipsoid.from_center_shape(lm.mu + offset, lm.P, lm.category)

    def prior_landmarks(self, frame: int) -> list[tuple[int, Ellipsoid]]:
        return [(i, self.map_estimate(i)) for i in self.map_window_ids(frame)]


def _noisy_boxes(left: BoundingBox, right: BoundingBox, noise: NoiseModel,
                 rng: np.random.Generator) -> tuple[BoundingBox, BoundingBox]:
    (ul, vl), (ur, _) = left.center, right.center
    hw, hh = left.half_size
    du, dv, dr = rng.normal(0.0, noise.pixel_sigma, 3)
    sw, sh = np.maximum(1.0 + rng.normal(0.0, noise.size_sigma, 2), 0.2)
    ul, vl, ur = ul + du, vl + dv, ur + dr
    hw, hh = hw * sw, hh * sh
    return (BoundingBox(ul - hw, vl - hh, ul + hw, vl + hh, left.category),
            BoundingBox(ur - hw, vl - hh, ur + hw, vl + hh, left.category))


def _clutter_ellipsoid(s: Scenario, rng: np.random.Generator) -> Ellipsoid:
    category = s.categories[rng.integers(len(s.categories))]
    radii = np.median([lm.radii for lm in s.landmarks if lm.category == category], axis=0)
    radii = radii * rng.uniform(0.8, 1.2, 3)
    z = rng.uniform(5.0, s.max_range)
    cam = s.camera
    u = rng.uniform(0.0, cam.width)
    v = rng.uniform(0.3 * cam.height, 0.8 * cam.height)
    center = np.array([(u - cam.cx) * z / cam.focal, (v - cam.cy) * z / cam.focal, z])
    return Ellipsoid.from_center_radii(center, radii, category=category)


def simulate_detections(s: Scenario, frame: int, rng: np.random.Generator
                        ) -> list[tuple[Ellipsoid, int]]:
    """Camera-frame measurement ellipsoids with their source landmark (-1 = clutter)."""
    T_cw = s.camera_frame(frame)
    detections: list[tuple[Ellipsoid, int]] = []
    sources = [(i, s.landmarks[i].transformed(T_cw)) for i in s.visible(frame)]
    sources += [(NULL, _clutter_ellipsoid(s, rng)) for _ in range(rng.poisson(s.noise.clutter_rate))]
    for src, e_cam in sources:
        if src != NULL and rng.random() >= s.noise.detection_prob:
            continue
        boxes = project_stereo(e_cam, s.camera)
        if boxes is None:
            continue
        left, right = _noisy_boxes(*boxes, s.noise, rng)
        try:
            meas = triangulate_measurement(left, right, s.camera)
        except UntriangulatableError:
            continue
        detections.append((meas, src))
    order = rng.permutation(len(detections))
    return [detections[i] for i in order]


def score_matrix(measurements: Sequence[Ellipsoid], landmarks: Sequence[Ellipsoid],
                 gate: float = DEFAULT_GATE) -> np.ndarray:
    """``-d/2`` for same-category pairs within the gate, ``-inf`` otherwise."""
    L = np.full((len(measurements), len(landmarks)), -math.inf)
    for k, meas in enumerate(measurements):
        for j, lm in enumerate(landmarks):
            if meas.category != lm.category:
                continue
            d = ellipsoid_distance(meas, lm)
            if d <= gate:
                L[k, j] = -0.5 * d
    return L


def build_problem(s: Scenario, frame: int,
                  prior_landmarks: Sequence[tuple[int, Ellipsoid]] | None = None,
                  null_log_lik: float = DEFAULT_NULL_LOG_LIK,
                  gate: float = DEFAULT_GATE,
                  rng_seed: int | None = None) -> AssignmentProblem:
    """Assignment problem for one frame.

    ``prior_landmarks`` are ``(landmark index, world-frame estimate)`` pairs;
    by default the scenario's map window.  A frame without detections gives
    a problem with ``n_meas == 0``.
    """
    if not 0 <= frame < s.n_frames:
        raise IndexError(f"frame {frame} outside trajectory of {s.n_frames} poses")
    if prior_landmarks is None:
        prior_landmarks = s.prior_landmarks(frame)
    seed = s.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng([seed, frame])
    detections = simulate_detections(s, frame, rng)

    T_cw = s.camera_frame(frame)
    priors_cam = [e.transformed(T_cw) for _, e in prior_landmarks]
    column_of = {idx: j for j, (idx, _) in enumerate(prior_landmarks)}
    L = score_matrix([d for d, _ in detections], priors_cam, gate)
    L = L.reshape(len(detections), len(priors_cam))

    truth = []
    gated = 0
    for k, (_, src) in enumerate(detections):
        j = column_of.get(src, NULL)
        if j != NULL and L[k, j] == -math.inf:
            # the model cannot express a gated true pair
            j = NULL
            gated += 1
        truth.append(j)
    meta = {"id": f"{s.name}-{frame:05d}", "scenario": s.name, "frame": frame}
    if gated:
        meta["gated_truth"] = gated
    return AssignmentProblem(L, np.full(len(detections), float(null_log_lik)), tuple(truth), meta)


def generate_corpus(s: Scenario, null_log_lik: float = DEFAULT_NULL_LOG_LIK,
                    gate: float = DEFAULT_GATE, skip_empty: bool = True
                    ) -> Iterator[AssignmentProblem]:
    for frame in range(s.n_frames):
        p = build_problem(s, frame, null_log_lik=null_log_lik, gate=gate)
        if skip_empty and p.n_meas == 0:
            continue
        yield p


# ---------------------------------------------------------------------------
# config files

def _trajectory_from_waypoints(waypoints: np.ndarray, frames: int, height: float) -> list[np.ndarray]:
    seg = np.diff(waypoints, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    if (lengths <= 0).any():
        raise ConfigError("trajectory.waypoints: consecutive waypoints must differ")
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    poses = []
    for s_arc in np.linspace(0.0, cum[-1], frames, endpoint=False):
        i = min(int(np.searchsorted(cum, s_arc, side="right")) - 1, len(seg) - 1)
        frac = (s_arc - cum[i]) / lengths[i]
        xy = waypoints[i] + frac * seg[i]
        heading = math.atan2(seg[i, 1], seg[i, 0])
        forward = np.array([math.cos(heading), math.sin(heading), 0.0])
        right = np.array([math.sin(heading), -math.cos(heading), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        R = np.column_stack([right, down, forward])
        poses.append(pose_matrix(R, np.array([xy[0], xy[1], height])))
    return poses


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _field(doc: dict, key: str, where: str, kind=float, default: Any = ...):
    if key not in doc:
        if default is ...:
            raise ConfigError(f"{where}{key}: missing")
        return default
    val = doc[key]
    try:
        if kind is float and isinstance(val, bool):
            raise TypeError
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}{key}: expected {kind.__name__}, got {val!r}") from None


def scenario_from_config(cfg: dict) -> Scenario:
    """Build a :class:`Scenario` from a parsed config document."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cam_doc = cfg.get("camera", {})
        camera = StereoCamera(**{k: _field(cam_doc, k, "camera.", float if k not in ("width", "height") else int)
                                 for k in cam_doc})
        noise_doc = cfg.get("noise", {})
        noise = NoiseModel(**{k: _field(noise_doc, k, "noise.") for k in noise_doc})
    except TypeError as exc:
        raise ConfigError(f"unknown camera/noise field: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

    if "landmarks" not in cfg or not isinstance(cfg["landmarks"], list):
        raise ConfigError("landmarks: expected a list")
    landmarks = []
    for i, lm in enumerate(cfg["landmarks"]):
        where = f"landmarks[{i}]."
        if not isinstance(lm, dict):
            raise ConfigError(f"landmarks[{i}]: expected an object")
        try:
            center = np.asarray(lm["center"], dtype=float).reshape(3)
            radii = np.asarray(lm["radii"], dtype=float).reshape(3)
        except KeyError as exc:
            raise ConfigError(f"{where}{exc.args[0]}: missing") from None
        except (TypeError, ValueError):
            raise ConfigError(f"{where}center/radii: expected 3 numbers") from None
        if (radii <= 0).any():
            raise ConfigError(f"{where}radii: must be positive")
        yaw = _field(lm, "yaw", where, default=0.0)
        category = str(lm.get("category", "object"))
        landmarks.append(Ellipsoid.from_center_radii(center, radii, _yaw_matrix(yaw), category))

    traj = cfg.get("trajectory")
    if not isinstance(traj, dict):
        raise ConfigError("trajectory: expected an object with 'waypoints' or 'poses'")
    if "poses" in traj:
        try:
            poses = [np.asarray(T, dtype=float).reshape(4, 4) for T in traj["poses"]]
        except (TypeError, ValueError):
            raise ConfigError("trajectory.poses: expected a list of 4x4 matrices") from None
    elif "waypoints" in traj:
        try:
            wps = np.asarray(traj["waypoints"], dtype=float).reshape(-1, 2)
        except (TypeError, ValueError):
            raise ConfigError("trajectory.waypoints: expected a list of [x, y] pairs") from None
        if len(wps) < 2:
            raise ConfigError("trajectory.waypoints: need at least two waypoints")
        frames = _field(cfg, "frames", "", int)
        if frames < 1:
            raise ConfigError("frames: must be positive")
        poses = _trajectory_from_waypoints(wps, frames, _field(traj, "height", "trajectory.", default=1.65))
    else:
        raise ConfigError("trajectory: expected 'waypoints' or 'poses'")

    return Scenario(
        landmarks=landmarks,
        trajectory=poses,
        camera=camera,
        noise=noise,
        max_range=_field(cfg, "max_range", "", default=35.0),
        map_window=_field(cfg, "map_window", "", int, default=30),
        seed=_field(cfg, "seed", "", int, default=0),
        name=str(cfg.get("name", "scenario")),
    )


def load_config(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from None


CAR = {"radii": [2.2, 0.9, 0.75], "category": "car"}
SIGN = {"radii": [0.35, 0.35, 1.3], "category": "sign"}
NO_PARKING = 35.0
DENSE_GAP = (7.0, 11.0)
PERSON = {"radii": [0.3, 0.3, 0.9], "category": "person"}


def demo_config(seed: int = 2022, frames: int = 1200) -> dict:
    """A city-block loop with parked cars, signs and pedestrians.

    Parking density varies street by street so frames range from a single
    detection to crowded kerbs.
    """
    rng = np.random.default_rng([seed, 77])
    waypoints = [[0.0, 0.0], [320.0, 0.0], [320.0, 180.0], [0.0, 180.0], [0.0, 0.0]]
    landmarks: list[dict] = []
    for (x0, y0), (x1, y1) in zip(waypoints[:-1], waypoints[1:]):
        length = math.hypot(x1 - x0, y1 - y0)
        ux, uy = (x1 - x0) / length, (y1 - y0) / length
        nx, ny = -uy, ux
        yaw = math.atan2(uy, ux)
        for side in (-1.0, 1.0):
            # no parking just past a junction, a full kerb before the next one,
            # and alternating dense and sparse stretches in between
            s = NO_PARKING + rng.uniform(0.0, 6.0)
            while s < length:
                dense = s > length - 80.0 or (s // 60.0 + (side > 0)) % 2 == 0
                gap = rng.uniform(*DENSE_GAP) if dense else rng.uniform(12.0, 40.0)
                lat = side * rng.uniform(3.6, 4.4)
                landmarks.append({"center": [x0 + ux * s + nx * lat, y0 + uy * s + ny * lat, 0.75],
                                  "yaw": yaw + rng.normal(0.0, 0.05), **CAR})
                s += gap
            s = rng.uniform(0.0, 20.0)
            while s < length:
                lat = side * rng.uniform(6.0, 7.0)
                landmarks.append({"center": [x0 + ux * s + nx * lat, y0 + uy * s + ny * lat, 1.3],
                                  "yaw": 0.0, **SIGN})
                s += rng.uniform(25.0, 45.0)
        for _ in range(rng.poisson(length / 40.0)):
            s = rng.uniform(0.0, length)
            lat = rng.choice([-1.0, 1.0]) * rng.uniform(5.0, 8.0)
            landmarks.append({"center": [x0 + ux * s + nx * lat, y0 + uy * s + ny * lat, 0.9],
                              "yaw": float(rng.uniform(-math.pi, math.pi)), **PERSON})
    for lm in landmarks:
        lm["center"] = [round(float(c), 4) for c in lm["center"]]
        lm["yaw"] = round(float(lm["yaw"]), 5)
    return {
        "name": "demo-block",
        "seed": seed,
        "frames": frames,
        "camera": {"focal": 718.856, "cx": 607.19, "cy": 185.22, "baseline": 0.54,
                   "width": 1241, "height": 376},
        "noise": {"pixel_sigma": 0.5, "size_sigma": 0.05, "detection_prob": 0.9,
                  "clutter_rate": 0.2, "map_sigma": 0.3},
        "max_range": 35.0,
        "map_window": 60,
        "landmarks": landmarks,
        "trajectory": {"waypoints": waypoints, "height": 1.65},
    }
