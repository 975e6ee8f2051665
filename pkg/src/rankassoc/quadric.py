"""Dual-quadric ellipsoids, their distance, and stereo triangulation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class DegenerateQuadricError(ValueError):
    pass


class UntriangulatableError(ValueError):
    pass


MIN_DISPARITY = 0.5  # pixels


def extract_center_shape(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center ``mu`` and shape ``P`` of the ellipsoid encoded by dual quadric ``Q``.

    ``Q`` is first scaled so that ``Q[3, 3] == -1``; then
    ``mu = -Q[:3, 3]`` and ``P = Q[:3, :3] + mu mu^T``.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if Q.shape != (4, 4):
        raise DegenerateQuadricError("dual quadric must be 4x4")
    if Q[3, 3] == 0 or not np.isfinite(Q).all():
        raise DegenerateQuadricError("cannot normalise quadric with Q[3,3] == 0")
    Qn = Q * (-1.0 / Q[3, 3])
    Qn = 0.5 * (Qn + Qn.T)
    mu = -Qn[:3, 3]
    P = Qn[:3, :3] + np.outer(mu, mu)
    P = 0.5 * (P + P.T)
    if np.linalg.eigvalsh(P).min() <= 0:
        raise DegenerateQuadricError("shape matrix is not positive definite")
    return mu, P


def quadric_from_center_shape(mu, P) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64).reshape(3)
    P = np.asarray(P, dtype=np.float64).reshape(3, 3)
    Q = np.empty((4, 4))
    Q[:3, :3] = P - np.outer(mu, mu)
    Q[:3, 3] = -mu
    Q[3, :3] = -mu
    Q[3, 3] = -1.0
    return Q


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Ellipsoid stored as a normalised dual quadric (``Q[3, 3] == -1``)."""

    Q: np.ndarray
    category: str = ""

    def __post_init__(self) -> None:
        mu, P = extract_center_shape(self.Q)
        Q = quadric_from_center_shape(mu, P)
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "_mu", mu)
        object.__setattr__(self, "_P", P)

    @property
    def mu(self) -> np.ndarray:
        return self._mu  # type: ignore[attr-defined]

    @property
    def P(self) -> np.ndarray:
        return self._P  # type: ignore[attr-defined]

    @cached_property
    def radii(self) -> np.ndarray:
        return np.sqrt(np.linalg.eigvalsh(self.P))

    @classmethod
    def from_center_shape(cls, mu, P, category: str = "") -> Ellipsoid:
        return cls(quadric_from_center_shape(mu, P), category)

    @classmethod
    def from_center_radii(cls, center, radii, rotation=None, category: str = "") -> Ellipsoid:
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        P = R @ np.diag(np.square(np.asarray(radii, dtype=np.float64))) @ R.T
        return cls.from_center_shape(center, P, category)

    def transformed(self, T: np.ndarray) -> Ellipsoid:
        """Apply the homogeneous point transform ``T`` (4x4): ``Q' = T Q T^T``."""
        T = np.asarray(T, dtype=np.float64)
        return Ellipsoid(T @ self.Q @ T.T, self.category)


def ellipsoid_distance(a: Ellipsoid, b: Ellipsoid) -> float:
    """``(mu_a - mu_b)^T (P_a + P_b)^-1 (mu_a - mu_b)``."""
    diff = a.mu - b.mu
    try:
        sol = np.linalg.solve(a.P + b.P, diff)
    except np.linalg.LinAlgError as exc:
        raise DegenerateQuadricError("P_a + P_b is singular") from exc
    return max(float(diff @ sol), 0.0)


@dataclass(frozen=True)
class StereoCamera:
    """Rectified stereo pair; the right camera sits ``baseline`` metres along +x."""

    focal: float = 718.856
    cx: float = 607.19
    cy: float = 185.22
    baseline: float = 0.54
    width: int = 1241
    height: int = 376

    def __post_init__(self):
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")
        if self.focal <= 0:
            raise ValueError("focal length must be positive")


@dataclass(frozen=True)
class BoundingBox:
    u_min: float
    v_min: float
    u_max: float
    v_max: float
    category: str = ""

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max)

    @property
    def half_size(self) -> tuple[float, float]:
        return 0.5 * (self.u_max - self.u_min), 0.5 * (self.v_max - self.v_min)


def triangulate_measurement(box_left: BoundingBox, box_right: BoundingBox,
                            camera: StereoCamera) -> Ellipsoid:
    """Camera-frame ellipsoid from a pair of associated stereo boxes.

    Depth comes from the disparity of the box centres; the in-image axes from
    the left box size at that depth.  Depth extent is unobservable, so it is
    set to the geometric mean of the other two axes.
    """
    (ul, vl), (ur, _) = box_left.center, box_right.center
    disparity = ul - ur
    if not disparity > MIN_DISPARITY:
        raise UntriangulatableError(f"disparity {disparity:.3f} px is below {MIN_DISPARITY} px")
    z = camera.focal * camera.baseline / disparity
    center = np.array([(ul - camera.cx) * z / camera.focal,
                       (vl - camera.cy) * z / camera.focal,
                       z])
    hw, hh = box_left.half_size
    a = hw * z / camera.focal
    b = hh * z / camera.focal
    if not (a > 0 and b > 0):
        raise UntriangulatableError("bounding box has no area")
    c = float(np.sqrt(a * b))
    return Ellipsoid.from_center_radii(center, (a, b, c), category=box_left.category)


def project_stereo(e: Ellipsoid, camera: StereoCamera) -> tuple[BoundingBox, BoundingBox] | None:
    """Weak-perspective stereo boxes of a camera-frame ellipsoid.

    Box centres are the pinhole projections of the centre; half-sizes are the
    ellipsoid's x / y support extents scaled at the centre depth.  This is the
    exact inverse of :func:`triangulate_measurement` for the x / y axes.
    Returns ``None`` when the centre is behind the camera.
    """
    x, y, z = e.mu
    if z <= 0:
        return None
    f = camera.focal
    u = camera.cx + f * x / z
    v = camera.cy + f * y / z
    ur = camera.cx + f * (x - camera.baseline) / z
    hw = f * np.sqrt(e.P[0, 0]) / z
    hh = f * np.sqrt(e.P[1, 1]) / z
    left = BoundingBox(u - hw, v - hh, u + hw, v + hh, e.category)
    right = BoundingBox(ur - hw, v - hh, ur + hw, v + hh, e.category)
    return left, right


def pose_matrix(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def invert_pose(T: np.ndarray) -> np.ndarray:
    R, t = T[:3, :3], T[:3, 3]
    return pose_matrix(R.T, -R.T @ t)
