import math

import numpy as np
import pytest

from descry.errors import LoadError
from descry.geometry import (
    BehindCameraError,
    BiasTable,
    CameraModel,
    DegenerateRayError,
    HeightBias,
    ImagePoint,
    UnobservableHeightError,
    WorldPoint,
    backproject_ground,
    corrected_height,
    estimate_height,
    fit_bias_table,
    fit_height_bias,
    format_calibration,
    load_calibration,
    look_at_camera,
    parse_calibration,
    project,
    undistort,
)

from conftest import random_camera


def simple_camera(k1=0.0, k2=0.0):
    # identity rotation, camera 5 m behind the world origin along its optical axis
    return CameraModel(
        focal_x=1000.0,
        focal_y=1000.0,
        principal_x=640.0,
        principal_y=360.0,
        rotation=np.eye(3),
        translation=np.array([0.0, 0.0, 5.0]),
        k1=k1,
        k2=k2,
        image_width=1280,
        image_height=720,
    )


class TestProject:
    def test_optical_axis_point_maps_to_principal_point(self):
        p = project(simple_camera(), WorldPoint(0.0, 0.0, 0.0))
        assert (p.u, p.v) == (640.0, 360.0)

    def test_pinhole_hand_evaluated(self):
        # u = cx + f * (x / depth) = 640 + 1000 * (0.5 / 5)
        p = project(simple_camera(), WorldPoint(0.5, 0.0, 0.0))
        assert math.isclose(p.u, 740.0, abs_tol=1e-12)
        assert math.isclose(p.v, 360.0, abs_tol=1e-12)

    def test_radial_distortion_matches_scalar_formula(self):
        cam = simple_camera(k1=0.1)
        p = project(cam, WorldPoint(0.5, 0.0, 0.0))
        # independent scalar evaluation of the distortion polynomial
        xn = 0.5 / 5.0
        r2 = xn * xn
        expected_u = 640.0 + 1000.0 * xn * (1.0 + 0.1 * r2)
        assert math.isclose(p.u, expected_u, abs_tol=1e-12)
        assert math.isclose(p.v, 360.0, abs_tol=1e-12)

    def test_behind_camera_rejected(self):
        with pytest.raises(BehindCameraError):
            project(simple_camera(), WorldPoint(0.0, 0.0, -6.0))


class TestUndistort:
    def test_zero_distortion_is_identity(self, rng):
        cam = simple_camera()
        for _ in range(50):
            p = ImagePoint(rng.uniform(0, 1280), rng.uniform(0, 720))
            q = undistort(cam, p)
            assert math.isclose(q.u, p.u, abs_tol=1e-9)
            assert math.isclose(q.v, p.v, abs_tol=1e-9)

    def test_round_trip_against_forward_distortion(self, rng):
        cam = simple_camera(k1=0.1, k2=0.01)
        for _ in range(1000):
            # a distorted in-frame observation
            p = ImagePoint(rng.uniform(0, 1280), rng.uniform(0, 720))
            ideal = undistort(cam, p)
            xn = (ideal.u - 640.0) / 1000.0
            yn = (ideal.v - 360.0) / 1000.0
            r2 = xn * xn + yn * yn
            factor = 1.0 + 0.1 * r2 + 0.01 * r2 * r2
            back_u = 640.0 + 1000.0 * xn * factor
            back_v = 360.0 + 1000.0 * yn * factor
            assert abs(back_u - p.u) < 1e-6
            assert abs(back_v - p.v) < 1e-6

    def test_principal_point_is_fixed_point(self):
        for k1 in (0.0, 0.1, -0.3, 0.5):
            cam = simple_camera(k1=k1, k2=0.05)
            q = undistort(cam, ImagePoint(640.0, 360.0))
            assert (q.u, q.v) == (640.0, 360.0)

    def test_insane_lens_rejected(self):
        cam = simple_camera(k1=0.6)
        with pytest.raises(ValueError):
            undistort(cam, ImagePoint(0.0, 0.0))


class TestBackprojectGround:
    def test_round_trip_identity_on_plane(self):
        cam = look_at_camera([0, -2, 3], [0, 6, 0])
        w = WorldPoint(1.0, 2.0, 0.0)
        back = backproject_ground(cam, project(cam, w))
        assert abs(back.x - 1.0) < 1e-9
        assert abs(back.y - 2.0) < 1e-9
        assert back.f == 0.0

    def test_random_ground_points_round_trip(self, rng):
        worst = 0.0
        for _ in range(500):
            cam = random_camera(rng)
            x, y = rng.uniform(-5, 5), rng.uniform(3, 13)
            try:
                pix = project(cam, WorldPoint(x, y, 0.0))
            except BehindCameraError:
                continue
            back = backproject_ground(cam, pix)
            worst = max(worst, abs(back.x - x), abs(back.y - y))
        assert worst < 1e-6

    def test_horizon_pixel_is_degenerate(self):
        # camera looking exactly parallel to the ground: the principal ray
        # never meets the plane
        cam = look_at_camera([0, 0, 2], [0, 10, 2])
        with pytest.raises(DegenerateRayError):
            backproject_ground(cam, ImagePoint(640.0, 360.0))


class TestEstimateHeight:
    def test_synthetic_person_recovered(self):
        cam = look_at_camera([0.5, -1, 2.5], [0, 8, 0.8])
        head = project(cam, WorldPoint(0.3, 7.0, 1.70))
        feet = project(cam, WorldPoint(0.3, 7.0, 0.0))
        assert abs(estimate_height(cam, head, feet) - 1.70) < 1e-6

    def test_head_equals_feet_gives_zero(self):
        cam = look_at_camera([0, -1, 3], [0, 8, 0])
        feet = project(cam, WorldPoint(0.0, 6.0, 0.0))
        assert abs(estimate_height(cam, feet, feet)) < 1e-9

    def test_noise_mae_within_tolerance(self, rng):
        # tolerance fixed by the pre-build Monte-Carlo study: MAE < 0.03 m
        # at 8 m range under +/-1 px uniform noise
        cam = look_at_camera([0, 0, 2.5], [0, 8, 0.8])
        errs = []
        for _ in range(1000):
            h = rng.uniform(1.4, 2.0)
            x = rng.uniform(-1.5, 1.5)
            head = project(cam, WorldPoint(x, 8.0, h))
            feet = project(cam, WorldPoint(x, 8.0, 0.0))
            head_n = ImagePoint(head.u + rng.uniform(-1, 1), head.v + rng.uniform(-1, 1))
            feet_n = ImagePoint(feet.u + rng.uniform(-1, 1), feet.v + rng.uniform(-1, 1))
            errs.append(abs(estimate_height(cam, head_n, feet_n) - h))
        assert float(np.mean(errs)) < 0.03

    def test_nadir_view_is_unobservable(self):
        # camera pointing straight down: vertical extent projects to a point
        cam = look_at_camera([0, 0, 5], [0, 0, 0])
        feet = project(cam, WorldPoint(0.0, 0.0, 0.0))
        with pytest.raises(UnobservableHeightError):
            estimate_height(cam, feet, feet)

    def test_invariant_to_focal_rescaling(self, rng):
        # projective consistency: scaling both focals and re-projecting the
        # observations must not change the estimate
        for _ in range(20):
            cam = random_camera(rng)
            x, y, h = rng.uniform(-2, 2), rng.uniform(4, 12), rng.uniform(0.8, 2.2)
            head = project(cam, WorldPoint(x, y, h))
            feet = project(cam, WorldPoint(x, y, 0.0))
            est = estimate_height(cam, head, feet)
            scale = rng.uniform(0.5, 2.0)
            cam2 = CameraModel(
                focal_x=cam.focal_x * scale,
                focal_y=cam.focal_y * scale,
                principal_x=cam.principal_x,
                principal_y=cam.principal_y,
                rotation=cam.rotation,
                translation=cam.translation,
                image_width=cam.image_width,
                image_height=cam.image_height,
            )
            head2 = project(cam2, WorldPoint(x, y, h))
            feet2 = project(cam2, WorldPoint(x, y, 0.0))
            est2 = estimate_height(cam2, head2, feet2)
            assert abs(est - est2) < 1e-9


class TestBias:
    def test_perfect_estimator_zero_bias(self):
        assert fit_height_bias([(1.80, 1.80)]) == HeightBias(0.0, 1)

    def test_mean_offset(self):
        bias = fit_height_bias([(1.80, 1.70), (1.90, 1.80)])
        assert math.isclose(bias.bias, 0.10, abs_tol=1e-12)
        assert bias.sample_count == 2

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError, match="no samples"):
            fit_height_bias([])

    def test_systematic_head_offset_recovered(self, rng):
        # synthetic sequence with a +4 cm head-point offset
        cam = look_at_camera([0, -1, 3], [0, 9, 0.8])
        samples = []
        for _ in range(200):
            h = rng.uniform(1.5, 1.9)
            x, y = rng.uniform(-1.5, 1.5), rng.uniform(5, 12)
            head = project(cam, WorldPoint(x, y, h + 0.04))
            feet = project(cam, WorldPoint(x, y, 0.0))
            samples.append((estimate_height(cam, head, feet), h))
        bias = fit_height_bias(samples)
        assert abs(bias.bias - 0.04) < 0.005

    def test_corrected_height(self):
        assert corrected_height(1.80, HeightBias(0.0, 1)) == 1.80
        assert math.isclose(corrected_height(1.80, HeightBias(0.10, 2)), 1.70)
        assert corrected_height(0.05, HeightBias(0.10, 2)) == 0.0

    def test_zero_mean_error_on_training_set(self, rng):
        ests = rng.uniform(1.5, 2.0, size=40)
        anns = ests - rng.normal(0.03, 0.01, size=40)
        bias = fit_height_bias(zip(ests, anns))
        resid = [corrected_height(e, bias) - a for e, a in zip(ests, anns)]
        assert abs(float(np.mean(resid))) < 1e-12

    def test_bias_table_fallback(self):
        samples = [("a", 1.8, 1.7)] * 6 + [("b", 1.9, 1.9)] * 2
        table = fit_bias_table(samples)
        assert math.isclose(table.for_camera("a").bias, 0.10)
        # camera b has too few samples: falls back to the global bias
        assert table.for_camera("b") == table.global_bias
        assert table.for_camera("unknown") == table.global_bias
        assert isinstance(table, BiasTable)


class TestCameraModelInvariants:
    def test_non_orthonormal_rotation_rejected(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-6
        with pytest.raises(ValueError, match="orthonormal"):
            CameraModel(1000, 1000, 640, 360, bad, np.zeros(3))

    def test_reflection_rejected(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError, match="determinant"):
            CameraModel(1000, 1000, 640, 360, R, np.zeros(3))

    def test_nonpositive_focal_rejected(self):
        with pytest.raises(ValueError, match="focal"):
            CameraModel(0.0, 1000, 640, 360, np.eye(3), np.zeros(3))


CALIB_TEXT = """\
# synthetic overhead camera
camera_id: cam3
image_width: 1280
image_height: 720
focal_x: 1000.0
focal_y: 1000.0
principal_x: 640.0
principal_y: 360.0
k1: 0.05
k2: 0.0
rotation: 1 0 0 0 0 -1 0 1 0
translation: 0 0 2.5
"""


class TestCalibrationFile:
    def test_parse_well_formed(self):
        cam = parse_calibration(CALIB_TEXT)
        assert cam.camera_id == "cam3"
        assert cam.focal_x == 1000.0
        assert cam.k1 == 0.05
        assert cam.image_width == 1280

    def test_round_trip_through_format(self, tmp_path):
        cam = parse_calibration(CALIB_TEXT)
        path = tmp_path / "cam3.calib"
        path.write_text(format_calibration(cam))
        again = load_calibration(path)
        assert again.camera_id == cam.camera_id
        assert np.array_equal(again.rotation, cam.rotation)
        assert np.array_equal(again.translation, cam.translation)

    def test_bad_rotation_reports_line(self):
        bad = CALIB_TEXT.replace("rotation: 1 0 0 0 0 -1 0 1 0",
                                 "rotation: 1 0 0 0 1 0 0 0 2")
        with pytest.raises(LoadError) as err:
            parse_calibration(bad, path="cam.calib")
        assert "cam.calib:11" in str(err.value)

    def test_unknown_key_reports_line(self):
        with pytest.raises(LoadError) as err:
            parse_calibration(CALIB_TEXT + "skew: 1\n")
        assert "unknown key" in str(err.value)

    def test_missing_field_rejected(self):
        partial = "\n".join(CALIB_TEXT.splitlines()[:5])
        with pytest.raises(LoadError, match="missing fields"):
            parse_calibration(partial)

    def test_wrong_rotation_arity(self):
        bad = CALIB_TEXT.replace("rotation: 1 0 0 0 0 -1 0 1 0", "rotation: 1 0 0")
        with pytest.raises(LoadError, match="9 numbers"):
            parse_calibration(bad)
