"""Constant-curvature forward kinematics for the four-section soft gripper.

Each section bends as a circular arc of uniform curvature kappa over a fixed
arc length, with the bending plane rotated by phi about the section's base
z-axis. Chaining the four section transforms under the mount transform gives
the gripper tip pose relative to the robot flange; composing with the flange
pose gives the tip pose in the robot base frame.

Angles are radians and lengths are millimeters throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Arc lengths of the four sections, base to tip, in mm.
DEFAULT_LENGTHS_MM = (14.0, 14.0, 12.32, 15.39)

# Below this |kappa * length| the closed form is replaced by its straight
# limit; far below any physical curvature, avoids catastrophic cancellation.
KL_STRAIGHT_LIMIT = 1e-9

RIGID_TOL = 1e-9
QUAT_NORM_TOL = 1e-6


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class ArcParams:
    """One section's configuration-space variables (kappa, phi, length)."""

    kappa: float   # curvature, 1/mm
    phi: float     # bending-plane rotation about local z, rad
    length: float  # arc length, mm

    def __post_init__(self) -> None:
        _require_finite("ArcParams", self.kappa, self.phi, self.length)
        if self.length <= 0:
            raise ValueError(f"arc length must be > 0, got {self.length}")

    @property
    def theta(self) -> float:
        """Total bending angle kappa * length, rad."""
        return self.kappa * self.length


@dataclass(frozen=True)
class GripperConfig:
    """The four-section assembly, section 1 nearest the mount."""

    sections: tuple[ArcParams, ArcParams, ArcParams, ArcParams]

    def __post_init__(self) -> None:
        if len(self.sections) != 4:
            raise ValueError(f"expected exactly 4 sections, got {len(self.sections)}")
        object.__setattr__(self, "sections", tuple(self.sections))


@dataclass(frozen=True)
class FlangePose:
    """Robot flange pose: translation (mm) and scalar-first unit quaternion."""

    translation: tuple[float, float, float]
    quaternion: tuple[float, float, float, float]  # (w, x, y, z)

    def __post_init__(self) -> None:
        _require_finite("FlangePose", *self.translation, *self.quaternion)
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        object.__setattr__(self, "quaternion", tuple(float(v) for v in self.quaternion))

    @classmethod
    def identity(cls) -> "FlangePose":
        return cls((0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))


@dataclass(frozen=True)
class GripperMount:
    """Gripper-base frame relative to the flange frame."""

    matrix: np.ndarray  # 4x4 rigid transform

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        require_rigid_transform(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "GripperMount":
        return cls(np.eye(4))


def is_rigid_transform(T: np.ndarray, tol: float = RIGID_TOL) -> bool:
    """True when T is 4x4 with exact [0,0,0,1] bottom row and orthonormal,
    right-handed rotation block within tol."""
    T = np.asarray(T)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        return False
    if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        return False
    R = T[:3, :3]
    if np.abs(R.T @ R - np.eye(3)).max() > tol:
        return False
    return abs(np.linalg.det(R) - 1.0) <= tol


def require_rigid_transform(T: np.ndarray, tol: float = RIGID_TOL) -> None:
    if not is_rigid_transform(T, tol):
        raise ValueError("not a rigid 4x4 transform")


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def arc_transform(arc: ArcParams) -> np.ndarray:
    """Homogeneous transform across one constant-curvature section.

    The rotation block is Rz(phi) @ Ry(kappa*length) and the translation is
    the arc chord [cos(phi)*(1-cos(kl))/kappa, sin(phi)*(1-cos(kl))/kappa,
    sin(kl)/kappa]. Near kappa*length = 0 the analytic straight limit
    (translation [0, 0, length]) is used instead.
    """
    kl = arc.kappa * arc.length
    cp, sp = math.cos(arc.phi), math.sin(arc.phi)
    T = np.eye(4)
    if abs(kl) < KL_STRAIGHT_LIMIT:
        T[:3, :3] = rotation_z(arc.phi)
        T[2, 3] = arc.length
        return T
    c, s = math.cos(kl), math.sin(kl)
    bend = (1.0 - c) / arc.kappa
    T[:3, :3] = np.array([
        [cp * c, -sp, cp * s],
        [sp * c, cp, sp * s],
        [-s, 0.0, c],
    ])
    T[:3, 3] = [cp * bend, sp * bend, s / arc.kappa]
    return T


def chain_transform(config: GripperConfig, mount: GripperMount | None = None) -> np.ndarray:
    """Tip frame relative to the flange: mount @ T1 @ T2 @ T3 @ T4."""
    T = np.eye(4) if mount is None else np.array(mount.matrix)
    for arc in config.sections:
        T = T @ arc_transform(arc)
    return T


def quaternion_to_matrix(q: tuple[float, float, float, float]) -> np.ndarray:
    """3x3 rotation from a scalar-first quaternion, expanded term by term
    (no renormalization)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * z * w, 2 * x * z + 2 * y * w],
        [2 * x * y + 2 * z * w, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * x * w],
        [2 * x * z - 2 * y * w, 2 * y * z + 2 * x * w, 1 - 2 * x * x - 2 * y * y],
    ])


def matrix_to_quaternion(R: np.ndarray) -> tuple[float, float, float, float]:
    """Scalar-first unit quaternion for a proper rotation matrix (Shepperd)."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    return (float(w), float(x), float(y), float(z))


def flange_transform(pose: FlangePose) -> np.ndarray:
    """Flange pose as a 4x4: quaternion-expanded rotation plus translation.

    Raises ValueError when the quaternion norm is off unity by more than
    1e-6; the quaternion is never silently renormalized.
    """
    norm = math.sqrt(sum(v * v for v in pose.quaternion))
    if abs(norm - 1.0) > QUAT_NORM_TOL:
        raise ValueError(f"quaternion norm {norm} is not 1 within {QUAT_NORM_TOL}")
    T = np.eye(4)
    T[:3, :3] = quaternion_to_matrix(pose.quaternion)
    T[:3, 3] = pose.translation
    return T


def end_effector(pose: FlangePose, config: GripperConfig,
                 mount: GripperMount | None = None) -> np.ndarray:
    """Gripper tip pose in the robot base frame: T_flange @ T_chain."""
    return flange_transform(pose) @ chain_transform(config, mount)


def thetas_to_config(thetas: "np.ndarray | list[float]",
                     phis: "np.ndarray | list[float]",
                     lengths: "np.ndarray | list[float]" = DEFAULT_LENGTHS_MM) -> GripperConfig:
    """Build a GripperConfig from per-section bending angles (rad) via
    kappa_i = theta_i / length_i."""
    thetas = [float(t) for t in thetas]
    phis = [float(p) for p in phis]
    lengths = [float(l) for l in lengths]
    if not (len(thetas) == len(phis) == len(lengths) == 4):
        raise ValueError("thetas, phis and lengths must each have 4 entries")
    for l in lengths:
        if not math.isfinite(l) or l <= 0:
            raise ValueError(f"arc length must be > 0, got {l}")
    sections = tuple(
        ArcParams(kappa=t / l, phi=p, length=l)
        for t, p, l in zip(thetas, phis, lengths)
    )
    return GripperConfig(sections)  # type: ignore[arg-type]
