"""Tests for camera math, angle measurement, and the pressure-to-angle fit."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softtwin.calibration import (
    CameraIntrinsics,
    CameraPoint,
    ConditioningError,
    ConvergenceError,
    CsvFormatError,
    CubicFit,
    DepthPixel,
    DistortionCoeffs,
    InsufficientDataError,
    Line,
    PressureSample,
    angle_from_points,
    distort,
    fit_cubic,
    load_fit_json,
    load_intrinsics_json,
    normalize_pixel,
    pixel_to_camera,
    predict_thetas,
    read_calibration_csv,
    save_fit_json,
    undistort,
    write_calibration_csv,
)

INTR = CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0)
NO_DISTORTION = DistortionCoeffs()

# Fitting grid: -90..120 kPa in 5 kPa steps, 43 samples.
PRESSURE_GRID = np.arange(-90.0, 121.0, 5.0)

# Envelope where the radial map stays injective on the unit disk:
# d(rho_d)/d(rho) = 1 + 3 k1 rho^2 + 5 k2 rho^4 + 7 k3 rho^6 stays positive
# for |k1| <= 0.3 as long as the higher-order terms are small.
coeff_envelope = st.builds(
    DistortionCoeffs,
    k1=st.floats(-0.3, 0.3),
    k2=st.floats(-0.01, 0.01),
    k3=st.floats(-0.002, 0.002),
    p1=st.floats(-0.001, 0.001),
    p2=st.floats(-0.001, 0.001),
)

disk_point = st.tuples(
    st.floats(0.0, 0.999), st.floats(0.0, 2.0 * math.pi)
).map(lambda rt: (rt[0] * math.cos(rt[1]), rt[0] * math.sin(rt[1])))


def cubic_thetas(p: float, intercept: np.ndarray, B: np.ndarray) -> tuple:
    return tuple(intercept + B @ np.array([p, p * p, p ** 3]))


def exact_cubic_samples(intercept, B, grid=PRESSURE_GRID) -> list[PressureSample]:
    intercept = np.asarray(intercept, dtype=float)
    B = np.asarray(B, dtype=float)
    return [PressureSample(float(p), cubic_thetas(p, intercept, B)) for p in grid]


class TestPixelNormalization:
    def test_principal_point_maps_to_origin(self):
        assert normalize_pixel(320.0, 240.0, INTR) == (0.0, 0.0)

    def test_unit_offsets(self):
        assert normalize_pixel(920.0, 240.0, INTR) == (1.0, 0.0)
        assert normalize_pixel(320.0, -360.0, INTR) == (0.0, -1.0)


class TestDistort:
    def test_zero_coefficients_identity(self):
        assert distort(0.37, -0.81, NO_DISTORTION) == (0.37, -0.81)

    def test_pure_radial(self):
        xd, yd = distort(0.5, 0.0, DistortionCoeffs(k1=0.1))
        assert xd == pytest.approx(0.5125, abs=1e-15)
        assert yd == 0.0

    def test_pure_tangential(self):
        xd, yd = distort(0.3, 0.4, DistortionCoeffs(p1=0.01))
        assert xd == pytest.approx(0.3024, abs=1e-15)
        assert yd == pytest.approx(0.4057, abs=1e-15)


class TestUndistort:
    def test_zero_coefficients_identity(self):
        assert undistort(0.42, 0.17, NO_DISTORTION) == (0.42, 0.17)

    def test_inverts_radial_example(self):
        x, y = undistort(0.5125, 0.0, DistortionCoeffs(k1=0.1))
        assert x == pytest.approx(0.5, abs=1e-8)
        assert y == pytest.approx(0.0, abs=1e-8)

    def test_round_trip_sampled_envelope(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(1000):
            d = DistortionCoeffs(
                k1=rng.uniform(-0.3, 0.3),
                k2=rng.uniform(-0.01, 0.01),
                k3=rng.uniform(-0.002, 0.002),
                p1=rng.uniform(-0.001, 0.001),
                p2=rng.uniform(-0.001, 0.001),
            )
            rho = rng.uniform(0.0, 0.999)
            ang = rng.uniform(0.0, 2.0 * math.pi)
            x, y = rho * math.cos(ang), rho * math.sin(ang)
            xu, yu = undistort(*distort(x, y, d), d)
            worst = max(worst, abs(xu - x), abs(yu - y))
        assert worst < 1e-8

    @given(disk_point, coeff_envelope)
    @settings(max_examples=200)
    def test_undistort_then_distort_identity(self, pt, d):
        x, y = pt
        xd, yd = distort(x, y, d)
        xb, yb = distort(*undistort(xd, yd, d), d)
        assert abs(xb - xd) < 1e-8 and abs(yb - yd) < 1e-8

    def test_nonconvergence_carries_last_iterate(self):
        # Far outside the supported envelope the fixed point is unreachable.
        with pytest.raises(ConvergenceError) as exc_info:
            undistort(50.0, 50.0, DistortionCoeffs(k1=-0.5), max_iters=2)
        assert len(exc_info.value.last_iterate) == 2


class TestPixelToCamera:
    def test_principal_point_lies_on_axis(self):
        pt = pixel_to_camera(DepthPixel(320.0, 240.0, 777.0), INTR, NO_DISTORTION)
        assert (pt.x_c, pt.y_c, pt.z_c) == (0.0, 0.0, 777.0)

    def test_pinhole_scaling(self):
        pt = pixel_to_camera(DepthPixel(920.0, 240.0, 500.0), INTR, NO_DISTORTION)
        assert (pt.x_c, pt.y_c, pt.z_c) == (500.0, 0.0, 500.0)

    def test_distorted_pixel_matches_brute_force(self):
        d = DistortionCoeffs(k1=0.1)
        ideal = (0.4, -0.2)
        xd, yd = distort(*ideal, d)
        u, v = xd * INTR.fx + INTR.cx, yd * INTR.fy + INTR.cy
        z = 500.0
        pt = pixel_to_camera(DepthPixel(u, v, z), INTR, d)

        # Brute-force inversion: grid search for the ideal point whose
        # distorted image lands on the observed pixel, then refine.
        grid = np.linspace(-1.0, 1.0, 2001)
        best, best_err = None, np.inf
        for gx in grid[np.abs(grid - ideal[0]) < 0.002]:
            for gy in grid[np.abs(grid - ideal[1]) < 0.002]:
                tx, ty = distort(gx, gy, d)
                err = (tx - xd) ** 2 + (ty - yd) ** 2
                if err < best_err:
                    best, best_err = (gx, gy), err
        assert abs(pt.x_c - best[0] * z) < 1e-2  # grid resolution bound
        assert abs(pt.x_c - ideal[0] * z) < 1e-5
        assert abs(pt.y_c - ideal[1] * z) < 1e-5

    def test_zero_depth_rejected(self):
        with pytest.raises(ValueError):
            DepthPixel(100.0, 100.0, 0.0)


class TestAngleFromPoints:
    def test_parallel_to_vertical_reference(self):
        assert angle_from_points((0.0, 0.0), (0.0, 1.0)) == 0.0

    def test_diagonal(self):
        assert angle_from_points((0.0, 0.0), (1.0, 1.0)) == pytest.approx(45.0)

    def test_perpendicular(self):
        assert angle_from_points((0.0, 0.0), (1.0, 0.0)) == pytest.approx(90.0)

    def test_result_in_unsigned_range(self):
        # Reversed segment direction folds into [0, 180).
        a = angle_from_points((0.0, 0.0), (-1.0, -1.0))
        assert 0.0 <= a < 180.0

    def test_coincident_points_rejected(self):
        with pytest.raises(ValueError):
            angle_from_points((1.0, 2.0), (1.0, 2.0))

    def test_camera_points_measure_in_xz_plane(self):
        p1 = CameraPoint(0.0, 123.0, 100.0)
        p2 = CameraPoint(50.0, -7.0, 150.0)
        assert angle_from_points(p1, p2) == pytest.approx(45.0)

    @given(st.floats(0.1, 100.0), st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
    def test_scale_invariance(self, scale, x, y):
        if x == 0.0 and y == 0.0:
            return
        base = angle_from_points((0.0, 0.0), (x, y))
        scaled = angle_from_points((0.0, 0.0), (x * scale, y * scale))
        assert scaled == pytest.approx(base, abs=1e-9)

    def test_custom_reference_line(self):
        horizontal = Line(direction=(1.0, 0.0))
        assert angle_from_points((0.0, 0.0), (1.0, 0.0), horizontal) == 0.0


class TestFitCubic:
    INTERCEPT = np.array([5.0, 5.0, 5.0, 5.0])
    B = np.tile(np.array([0.1, 0.001, -0.00001]), (4, 1))

    def test_recovers_exact_cubic(self):
        fit = fit_cubic(exact_cubic_samples(self.INTERCEPT, self.B))
        np.testing.assert_allclose(fit.intercept, self.INTERCEPT, rtol=1e-8)
        np.testing.assert_allclose(fit.B, self.B, rtol=1e-8)
        assert fit.valid_range == (-90.0, 120.0)
        assert np.all(fit.residual_rms_deg < 1e-8)

    def test_constant_data(self):
        samples = [PressureSample(float(p), (30.0,) * 4) for p in PRESSURE_GRID]
        fit = fit_cubic(samples)
        np.testing.assert_allclose(fit.intercept, 30.0, atol=1e-10)
        np.testing.assert_allclose(fit.B, 0.0, atol=1e-10)

    def test_ordering_invariance(self):
        samples = exact_cubic_samples(self.INTERCEPT, self.B)
        rng = np.random.default_rng(3)
        shuffled = list(samples)
        rng.shuffle(shuffled)
        a, b = fit_cubic(samples), fit_cubic(shuffled)
        np.testing.assert_allclose(a.intercept, b.intercept, atol=1e-12)
        np.testing.assert_allclose(a.B, b.B, atol=1e-12)

    def test_noise_rmse_within_bound(self):
        rng = np.random.default_rng(11)
        clean = exact_cubic_samples(self.INTERCEPT, self.B)
        noisy = [
            PressureSample(s.pressure,
                           tuple(t + rng.uniform(-0.5, 0.5) for t in s.thetas))
            for s in clean
        ]
        fit = fit_cubic(noisy)
        errs = []
        for s in clean:
            pred, _ = predict_thetas(fit, s.pressure)
            errs.append(pred - np.array(s.thetas))
        rmse = float(np.sqrt(np.mean(np.square(errs))))
        assert rmse <= 0.5

    def test_samples_reproduced_within_residual(self):
        rng = np.random.default_rng(5)
        samples = [
            PressureSample(float(p), tuple(rng.uniform(-40.0, 90.0, size=4)))
            for p in PRESSURE_GRID
        ]
        fit = fit_cubic(samples)
        for s in samples:
            pred, _ = predict_thetas(fit, s.pressure)
            err = np.abs(pred - np.array(s.thetas))
            # every pointwise error is bounded by the worst-case spread
            # consistent with the reported per-section RMS over n samples
            bound = fit.residual_rms_deg * math.sqrt(len(samples))
            assert np.all(err <= bound + 1e-9)

    def test_too_few_distinct_pressures(self):
        base = exact_cubic_samples(self.INTERCEPT, self.B, grid=[0.0, 5.0, 10.0, 15.0])
        with pytest.raises(InsufficientDataError):
            fit_cubic(base)
        # 6 samples on 4 distinct pressures is still insufficient
        with pytest.raises(InsufficientDataError):
            fit_cubic(base + base[:2])

    def test_empty_input(self):
        with pytest.raises(InsufficientDataError):
            fit_cubic([])

    def test_degenerate_spacing_raises_conditioning_error(self):
        # Pressures distinct as floats, but p^2 and p^3 underflow to zero:
        # the design matrix loses rank instead of silently fitting garbage.
        grid = [0.0, 1e-200, 2e-200, 3e-200, 4e-200]
        samples = [PressureSample(p, (1.0, 2.0, 3.0, 4.0)) for p in grid]
        with pytest.raises(ConditioningError):
            fit_cubic(samples)


class TestPredictThetas:
    def test_linear_identity(self):
        fit = CubicFit(intercept=np.zeros(4),
                       B=np.tile([1.0, 0.0, 0.0], (4, 1)),
                       valid_range=(-90.0, 120.0))
        thetas, extrapolated = predict_thetas(fit, 50.0)
        np.testing.assert_allclose(thetas, 50.0)
        assert not extrapolated

    def test_polynomial_evaluation(self):
        fit = CubicFit(intercept=np.full(4, 5.0),
                       B=np.tile([0.1, 0.001, -0.00001], (4, 1)),
                       valid_range=(-90.0, 120.0))
        thetas, extrapolated = predict_thetas(fit, 100.0)
        np.testing.assert_allclose(thetas, 15.0, atol=1e-12)
        assert not extrapolated

    def test_clamps_and_flags_out_of_range(self):
        fit = CubicFit(intercept=np.zeros(4),
                       B=np.tile([1.0, 0.0, 0.0], (4, 1)),
                       valid_range=(-90.0, 120.0))
        thetas, extrapolated = predict_thetas(fit, 200.0)
        np.testing.assert_allclose(thetas, 120.0)
        assert extrapolated
        thetas, extrapolated = predict_thetas(fit, -120.0)
        np.testing.assert_allclose(thetas, -90.0)
        assert extrapolated


class TestFileFormats:
    def test_csv_round_trip(self, tmp_path):
        samples = exact_cubic_samples(np.array([5.0, 4.0, 3.0, 2.0]),
                                      TestFitCubic.B)
        path = tmp_path / "calib.csv"
        write_calibration_csv(path, samples)
        assert read_calibration_csv(path) == samples
        text = path.read_bytes()
        assert text.startswith(b"pressure_kpa,theta1_deg,theta2_deg,theta3_deg,theta4_deg\n")
        assert b"\r" not in text

    def test_header_typo_names_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("pressure_kpa,theta1_deg,theta2_dgr,theta3_deg,theta4_deg\n")
        with pytest.raises(CsvFormatError, match="theta2_dgr") as exc_info:
            read_calibration_csv(path)
        assert exc_info.value.line == 1

    def test_bad_row_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "pressure_kpa,theta1_deg,theta2_deg,theta3_deg,theta4_deg\n"
            "0,1,2,3,4\n"
            "5,1,2,oops,4\n"
        )
        with pytest.raises(CsvFormatError) as exc_info:
            read_calibration_csv(path)
        assert exc_info.value.line == 3

    def test_wrong_field_count_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "pressure_kpa,theta1_deg,theta2_deg,theta3_deg,theta4_deg\n"
            "0,1,2,3\n"
        )
        with pytest.raises(CsvFormatError) as exc_info:
            read_calibration_csv(path)
        assert exc_info.value.line == 2

    def test_intrinsics_json(self, tmp_path):
        path = tmp_path / "intr.json"
        path.write_text(json.dumps({
            "fx": 600.0, "fy": 601.0, "cx": 320.0, "cy": 240.0,
            "k1": -0.1, "k2": 0.01, "k3": 0.0, "p1": 0.001, "p2": -0.002,
        }))
        intr, dist = load_intrinsics_json(path)
        assert (intr.fx, intr.fy, intr.cx, intr.cy) == (600.0, 601.0, 320.0, 240.0)
        assert (dist.k1, dist.k2, dist.k3, dist.p1, dist.p2) == (-0.1, 0.01, 0.0, 0.001, -0.002)

    def test_fit_json_round_trip(self, tmp_path):
        fit = fit_cubic(exact_cubic_samples(TestFitCubic.INTERCEPT, TestFitCubic.B))
        path = tmp_path / "fit.json"
        save_fit_json(path, fit)
        loaded = load_fit_json(path)
        np.testing.assert_array_equal(loaded.intercept, fit.intercept)
        np.testing.assert_array_equal(loaded.B, fit.B)
        assert loaded.valid_range == fit.valid_range
        raw = json.loads(path.read_text())
        assert set(raw) == {"intercept", "B", "valid_range", "residual_rms_deg"}
        assert len(raw["B"]) == 4 and all(len(row) == 3 for row in raw["B"])
