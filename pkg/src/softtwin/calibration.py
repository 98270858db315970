"""Pressure-to-bending-angle calibration and the camera math behind it.

The measurement side converts observed depth-camera pixels to metric camera
coordinates (pinhole intrinsics plus Brown-Conrady radial/tangential
distortion) and computes bending angles between picked point pairs and a
reference line. The fitting side maps pressure to the four bending angles
with a per-section cubic least-squares fit.

Pixel observations are treated as distorted: the pipeline is
normalize -> iterative undistort -> depth-scale. The forward distortion is
kept for synthetic data generation and round-trip testing.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

UNDISTORT_TOL = 1e-12
UNDISTORT_MAX_ITERS = 50
MIN_DISTINCT_PRESSURES = 5


class InsufficientDataError(ValueError):
    """Too few distinct pressure samples to determine the cubic."""


class ConditioningError(ValueError):
    """Design matrix is rank-deficient even after column scaling."""


class ConvergenceError(RuntimeError):
    """Iterative undistortion failed to settle; carries the last iterate."""

    def __init__(self, message: str, last_iterate: tuple[float, float]):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be > 0")


@dataclass(frozen=True)
class DistortionCoeffs:
    """Brown-Conrady coefficients: k1..k3 radial, p1/p2 tangential."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self) -> None:
        for v in (self.k1, self.k2, self.k3, self.p1, self.p2):
            if not math.isfinite(v):
                raise ValueError("distortion coefficients must be finite")


@dataclass(frozen=True)
class DepthPixel:
    u: float
    v: float
    z: float  # depth, mm

    def __post_init__(self) -> None:
        if not self.z > 0:
            raise ValueError(f"depth must be > 0, got {self.z}")


@dataclass(frozen=True)
class CameraPoint:
    x_c: float
    y_c: float
    z_c: float


@dataclass(frozen=True)
class Line:
    """Reference line in the measurement plane: origin point and direction."""

    origin: tuple[float, float] = (0.0, 0.0)
    direction: tuple[float, float] = (0.0, 1.0)  # vertical by default

    def __post_init__(self) -> None:
        dx, dy = self.direction
        if dx == 0.0 and dy == 0.0:
            raise ValueError("reference line direction must be nonzero")


@dataclass(frozen=True)
class PressureSample:
    """One calibration observation: pressure (kPa) and four angles (deg)."""

    pressure: float
    thetas: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.thetas) != 4:
            raise ValueError("expected 4 bending angles per sample")
        for t in self.thetas:
            if not math.isfinite(t):
                raise ValueError("bending angles must be finite")
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))


@dataclass(frozen=True)
class CubicFit:
    """Per-section cubic theta(p) = intercept + B @ [p, p^2, p^3], degrees."""

    intercept: np.ndarray          # (4,)
    B: np.ndarray                  # (4, 3), columns for p, p^2, p^3
    valid_range: tuple[float, float]
    residual_rms_deg: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        intercept = np.asarray(self.intercept, dtype=float).reshape(4)
        B = np.asarray(self.B, dtype=float).reshape(4, 3)
        if not (np.all(np.isfinite(intercept)) and np.all(np.isfinite(B))):
            raise ValueError("fit coefficients must be finite")
        lo, hi = self.valid_range
        if not lo < hi:
            raise ValueError(f"valid_range must be well-ordered, got {self.valid_range}")
        resid = self.residual_rms_deg
        resid = np.zeros(4) if resid is None else np.asarray(resid, dtype=float).reshape(4)
        for arr in (intercept, B, resid):
            arr.flags.writeable = False
        object.__setattr__(self, "intercept", intercept)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "valid_range", (float(lo), float(hi)))
        object.__setattr__(self, "residual_rms_deg", resid)

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept.tolist(),
            "B": self.B.tolist(),
            "valid_range": list(self.valid_range),
            "residual_rms_deg": self.residual_rms_deg.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CubicFit":
        return cls(
            intercept=np.array(d["intercept"], dtype=float),
            B=np.array(d["B"], dtype=float),
            valid_range=(float(d["valid_range"][0]), float(d["valid_range"][1])),
            residual_rms_deg=np.array(d.get("residual_rms_deg", [0.0] * 4), dtype=float),
        )


def normalize_pixel(u: float, v: float, intr: CameraIntrinsics) -> tuple[float, float]:
    """Pixel to normalized image coordinates: ((u-cx)/fx, (v-cy)/fy)."""
    return (u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy


def distort(x: float, y: float, d: DistortionCoeffs) -> tuple[float, float]:
    """Apply radial + tangential distortion to ideal normalized coordinates."""
    r2 = x * x + y * y
    radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2 + d.k3 * r2 ** 3
    xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y
    return xd, yd


def undistort(xd: float, yd: float, d: DistortionCoeffs,
              tol: float = UNDISTORT_TOL, max_iters: int = UNDISTORT_MAX_ITERS
              ) -> tuple[float, float]:
    """Invert the distortion map iteratively, starting from the distorted point.

    Newton steps on the 2x2 system keep the iteration inside the 50-step
    budget over the supported envelope (unit disk, |k1| <= 0.5). Raises
    ConvergenceError carrying the last iterate when the step never drops
    below tol.
    """
    x, y = xd, yd
    for _ in range(max_iters):
        s = x * x + y * y
        g = 1.0 + d.k1 * s + d.k2 * s * s + d.k3 * s ** 3
        gp = d.k1 + 2.0 * d.k2 * s + 3.0 * d.k3 * s * s
        fx = x * g + 2.0 * d.p1 * x * y + d.p2 * (s + 2.0 * x * x) - xd
        fy = y * g + d.p1 * (s + 2.0 * y * y) + 2.0 * d.p2 * x * y - yd
        j11 = g + 2.0 * x * x * gp + 2.0 * d.p1 * y + 6.0 * d.p2 * x
        j12 = 2.0 * x * y * gp + 2.0 * d.p1 * x + 2.0 * d.p2 * y
        j21 = j12
        j22 = g + 2.0 * y * y * gp + 6.0 * d.p1 * y + 2.0 * d.p2 * x
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not math.isfinite(det):
            raise ConvergenceError("singular Jacobian while undistorting", (x, y))
        dx = (j22 * fx - j12 * fy) / det
        dy = (j11 * fy - j21 * fx) / det
        x -= dx
        y -= dy
        if max(abs(dx), abs(dy)) < tol:
            return x, y
    raise ConvergenceError(
        f"undistortion did not converge in {max_iters} iterations", (x, y))


def pixel_to_camera(px: DepthPixel, intr: CameraIntrinsics,
                    d: DistortionCoeffs) -> CameraPoint:
    """Observed (distorted) pixel plus depth to metric camera coordinates."""
    xd, yd = normalize_pixel(px.u, px.v, intr)
    x, y = undistort(xd, yd, d)
    return CameraPoint(x * px.z, y * px.z, px.z)


def _plane_point(p) -> tuple[float, float]:
    # CameraPoint measures in the side-view x-z plane; 2-tuples pass through.
    if isinstance(p, CameraPoint):
        return (p.x_c, p.z_c)
    x, y = p
    return (float(x), float(y))


def angle_from_points(p1, p2, reference: Line = Line()) -> float:
    """Unsigned angle in [0, 180) degrees between segment p1->p2 and the
    reference line direction, in the measurement plane."""
    x1, y1 = _plane_point(p1)
    x2, y2 = _plane_point(p2)
    sx, sy = x2 - x1, y2 - y1
    if sx == 0.0 and sy == 0.0:
        raise ValueError("angle requires two distinct points")
    rx, ry = reference.direction
    cross = rx * sy - ry * sx
    dot = rx * sx + ry * sy
    ang = math.degrees(math.atan2(abs(cross), dot))
    return ang % 180.0


def _design_matrix(pressures: np.ndarray) -> np.ndarray:
    return np.column_stack([
        np.ones_like(pressures), pressures, pressures ** 2, pressures ** 3])


def fit_cubic(samples: list[PressureSample]) -> CubicFit:
    """Least-squares cubic per section over (pressure, theta) samples.

    Columns of the design matrix are scaled to unit norm before the
    orthogonal-factorization solve and unscaled after; the raw Vandermonde
    over a -90..120 kPa span is too ill-conditioned to solve directly.
    """
    if not samples:
        raise InsufficientDataError("no calibration samples")
    samples = sorted(samples, key=lambda s: s.pressure)
    pressures = np.array([s.pressure for s in samples], dtype=float)
    thetas = np.array([s.thetas for s in samples], dtype=float)  # (n, 4)
    if len(set(pressures.tolist())) < MIN_DISTINCT_PRESSURES:
        raise InsufficientDataError(
            f"need >= {MIN_DISTINCT_PRESSURES} distinct pressures, "
            f"got {len(set(pressures.tolist()))}")
    A = _design_matrix(pressures)
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0.0] = 1.0
    coeffs, _, rank, _ = np.linalg.lstsq(A / scale, thetas, rcond=None)
    if rank < 4:
        raise ConditioningError(f"design matrix rank {rank} < 4")
    coeffs = coeffs / scale[:, None]            # (4 coeffs, 4 sections)
    predicted = A @ coeffs
    resid = np.sqrt(np.mean((thetas - predicted) ** 2, axis=0))
    return CubicFit(
        intercept=coeffs[0],
        B=coeffs[1:].T,
        valid_range=(float(pressures.min()), float(pressures.max())),
        residual_rms_deg=resid,
    )


def predict_thetas(fit: CubicFit, pressure: float) -> tuple[np.ndarray, bool]:
    """Evaluate the fit at a pressure, clamped to its valid range.

    Returns (thetas in degrees, extrapolated flag); the flag is set when the
    requested pressure fell outside the range and was clamped.
    """
    lo, hi = fit.valid_range
    p = min(max(pressure, lo), hi)
    extrapolated = p != pressure
    monomials = np.array([p, p * p, p ** 3])
    return fit.intercept + fit.B @ monomials, extrapolated


# ---------------------------------------------------------------------------
# File formats

CSV_HEADER = ["pressure_kpa", "theta1_deg", "theta2_deg", "theta3_deg", "theta4_deg"]


class CsvFormatError(ValueError):
    """Calibration CSV violates the declared format; carries the line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_calibration_csv(path: str) -> list[PressureSample]:
    """Read `pressure_kpa,theta1_deg..theta4_deg` rows (UTF-8, LF, header)."""
    samples = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file, expected header", 1) from None
        if [h.strip() for h in header] != CSV_HEADER:
            bad = next((h for h in header if h.strip() not in CSV_HEADER), ",".join(header))
            raise CsvFormatError(f"bad header column {bad!r}, expected {','.join(CSV_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise CsvFormatError(f"expected 5 fields, got {len(row)}", lineno)
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise CsvFormatError(f"non-numeric field in {row!r}", lineno) from None
            samples.append(PressureSample(values[0], tuple(values[1:])))  # type: ignore[arg-type]
    return samples


def write_calibration_csv(path: str, samples: list[PressureSample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in samples:
            writer.writerow([repr(s.pressure)] + [repr(t) for t in s.thetas])


def load_intrinsics_json(path: str) -> tuple[CameraIntrinsics, DistortionCoeffs]:
    """Read `{"fx","fy","cx","cy","k1","k2","k3","p1","p2"}` from a file."""
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    intr = CameraIntrinsics(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"])
    dist = DistortionCoeffs(
        k1=d.get("k1", 0.0), k2=d.get("k2", 0.0), k3=d.get("k3", 0.0),
        p1=d.get("p1", 0.0), p2=d.get("p2", 0.0))
    return intr, dist


def load_fit_json(path: str) -> CubicFit:
    with open(path, encoding="utf-8") as f:
        return CubicFit.from_dict(json.load(f))


def save_fit_json(path: str, fit: CubicFit) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(fit.to_dict(), f, indent=2)
        f.write("\n")
