from __future__ import annotations

import math

import numpy as np
import pytest

from vistagraph.errors import DegenerateGeometryError, InvalidArgumentError
from vistagraph.geo import (
    Landmark,
    PanoramaMeta,
    azimuth,
    distance,
    elevation_angle,
    localize,
    pixel_column,
    pixel_height,
    relative_bearing,
    round_half_away,
    view_geometry,
    zoom_box,
)


def make_pano(x=0.0, y=0.0, heading=0.0, width=2048, height=1024, pano_id="p0"):
    return PanoramaMeta(pano_id=pano_id, x=x, y=y, heading=heading, width=width, height=height)


def make_landmark(x=0.0, y=1000.0, height=310.0, landmark_id="lm0"):
    return Landmark(landmark_id=landmark_id, name=landmark_id, x=x, y=y, height=height)


class TestDistance:
    def test_identity(self):
        assert distance((0, 0), (0, 0)) == 0.0

    def test_3_4_5(self):
        assert distance((0, 0), (3, 4)) == 5.0

    def test_projected_coordinates(self):
        # sqrt(812^2 + 589^2) = sqrt(1006265), hand-checked before build
        assert distance((530000, 180000), (530812, 179411)) == pytest.approx(
            1003.127609030875, abs=1e-9
        )

    def test_symmetric(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a, b = rng.uniform(-1e4, 1e4, size=(2, 2))
            assert distance(tuple(a), tuple(b)) == distance(tuple(b), tuple(a))

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidArgumentError):
            distance((math.nan, 0), (0, 0))
        with pytest.raises(InvalidArgumentError):
            distance((0, 0), (math.inf, 0))


class TestAzimuth:
    def test_due_north(self):
        assert azimuth((0, 0), (0, 100)) == 0.0

    def test_due_east(self):
        assert azimuth((0, 0), (100, 0)) == 90.0

    def test_southwest(self):
        # rotation of the north case by 225 degrees
        assert azimuth((0, 0), (-100, -100)) == pytest.approx(225.0, abs=1e-12)

    def test_coincident_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            azimuth((5, 5), (5, 5))

    def test_reciprocity(self):
        # forward and back bearings differ by exactly 180 mod 360
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b = rng.uniform(-1e4, 1e4, size=(2, 2))
            fwd = azimuth(tuple(a), tuple(b))
            back = azimuth(tuple(b), tuple(a))
            diff = (back - fwd) % 360.0
            assert diff == pytest.approx(180.0, abs=1e-9)


class TestRelativeBearing:
    def test_aligned(self):
        assert relative_bearing(90.0, 90.0) == 0.0

    def test_wraps_forward(self):
        assert relative_bearing(10.0, 350.0) == 20.0

    def test_wraps_backward(self):
        assert relative_bearing(0.0, 90.0) == 270.0

    def test_range_checked(self):
        with pytest.raises(InvalidArgumentError):
            relative_bearing(360.0, 0.0)
        with pytest.raises(InvalidArgumentError):
            relative_bearing(0.0, -1.0)


class TestPixelColumn:
    def test_center(self):
        assert pixel_column(0.0, 2048) == 1024.0

    def test_quarter_turn(self):
        assert pixel_column(90.0, 2048) == 1536.0

    def test_wrap_at_rear(self):
        assert pixel_column(180.0, 2048) == 0.0

    def test_periodic(self):
        rng = np.random.default_rng(3)
        for bearing in rng.uniform(0, 360, size=100):
            assert pixel_column(bearing, 2048) == pytest.approx(
                pixel_column(bearing + 360.0, 2048), abs=1e-9
            )

    def test_narrow_width_rejected(self):
        with pytest.raises(InvalidArgumentError):
            pixel_column(0.0, 1)


class TestElevationAngle:
    def test_45_degrees(self):
        assert elevation_angle(100.0, 100.0) == 45.0

    def test_30_degrees(self):
        assert elevation_angle(100.0, 100.0 * math.sqrt(3)) == pytest.approx(30.0, abs=1e-9)

    def test_distant_tower(self):
        # 310 m tower at 3 km: arctan(310/3000), hand-checked before build
        assert elevation_angle(310.0, 3000.0) == pytest.approx(5.899625046527686, abs=1e-9)

    def test_zero_distance_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            elevation_angle(100.0, 0.0)

    def test_monotone(self):
        # strictly decreasing in d, strictly increasing in H
        ds = np.linspace(10, 5000, 60)
        eps = [elevation_angle(310.0, d) for d in ds]
        assert all(a > b for a, b in zip(eps, eps[1:]))
        hs = np.linspace(1, 800, 60)
        eps = [elevation_angle(h, 1000.0) for h in hs]
        assert all(a < b for a, b in zip(eps, eps[1:]))


class TestPixelHeight:
    def test_quarter_frame(self):
        assert pixel_height(45.0, 1024, 180.0) == 256.0

    def test_half_frame(self):
        assert pixel_height(90.0, 1024, 180.0) == 512.0

    def test_distant_tower(self):
        eps = elevation_angle(310.0, 3000.0)
        assert pixel_height(eps, 1024, 180.0) == pytest.approx(33.56231137580195, abs=1e-9)

    def test_conservation(self):
        # h_pix / H_img == elevation / vfov exactly
        rng = np.random.default_rng(5)
        for _ in range(100):
            eps = rng.uniform(0.01, 89.9)
            h = pixel_height(eps, 1024, 180.0)
            assert h / 1024 == pytest.approx(eps / 180.0, abs=0)

    def test_bad_fov_rejected(self):
        with pytest.raises(InvalidArgumentError):
            pixel_height(45.0, 1024, 0.0)


class TestZoomBox:
    def test_plain_box(self):
        box = zoom_box(1024.0, 256.0, 2048, 1024, padding=0.0)
        assert box.y_bottom == 384.0
        assert box.y_top == 256.0
        assert box.x_left == 960.0
        assert box.x_right == 1088.0
        assert not box.wrapped and not box.clamped

    def test_clamped_at_top(self):
        box = zoom_box(1024.0, 1024.0, 4096, 1024, padding=0.0)
        assert box.clamped
        assert box.y_top == 0.0

    def test_wraps_at_seam(self):
        box = zoom_box(10.0, 256.0, 2048, 1024, padding=0.0)
        assert box.wrapped
        assert box.x_left == pytest.approx(2048 - 54.0)
        assert box.x_right == pytest.approx(74.0)

    def test_square_before_clamp(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            h_pix = rng.uniform(1.0, 400.0)
            x_pix = rng.uniform(0.0, 2048.0)
            box = zoom_box(x_pix, h_pix, 2048, 1024, padding=0.0)
            height = box.y_bottom - (box.y_bottom - 0.5 * h_pix)  # pre-clamp height
            width = (box.x_right - box.x_left) % 2048
            assert width == pytest.approx(0.5 * h_pix, abs=1e-9)
            assert height == pytest.approx(0.5 * h_pix, abs=1e-9)

    def test_degenerate_height_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            zoom_box(100.0, 0.0, 2048, 1024)

    def test_padding_raises_top(self):
        plain = zoom_box(1024.0, 100.0, 2048, 1024, padding=0.0)
        padded = zoom_box(1024.0, 100.0, 2048, 1024, padding=0.5)
        assert padded.y_top < plain.y_top
        assert padded.y_bottom == plain.y_bottom


class TestViewGeometry:
    def test_coincident_rejected(self):
        pano = make_pano(x=100.0, y=200.0)
        lm = make_landmark(x=100.0, y=200.0)
        with pytest.raises(DegenerateGeometryError):
            view_geometry(pano, lm)

    def test_matches_component_ops(self):
        pano = make_pano(x=530000.0, y=180000.0, heading=37.0)
        lm = make_landmark(x=530812.0, y=179411.0, height=310.0)
        geom = view_geometry(pano, lm)
        d = distance(pano.location, lm.location)
        alpha = azimuth(pano.location, lm.location)
        bearing = relative_bearing(alpha, pano.heading)
        assert geom.distance_m == d
        assert geom.azimuth_deg == alpha
        assert geom.bearing_deg == bearing
        assert geom.x_pix == pixel_column(bearing, pano.width)
        assert geom.elevation_deg == elevation_angle(lm.height, d)
        assert geom.h_pix == pixel_height(geom.elevation_deg, pano.height, pano.vertical_fov)

    def test_aligned_view(self):
        # pano due south of the landmark looking north
        pano = make_pano(x=0.0, y=-500.0, heading=0.0)
        lm = make_landmark(x=0.0, y=0.0)
        geom = view_geometry(pano, lm)
        assert geom.bearing_deg == 0.0
        assert geom.x_pix == pano.width / 2

    def test_rotation_invariance(self):
        # rotating heading and azimuth together leaves bearing, column and box fixed
        rng = np.random.default_rng(23)
        for _ in range(100):
            alpha = rng.uniform(0, 360)
            h = rng.uniform(0, 360)
            rot = rng.uniform(0, 360)
            base = relative_bearing(alpha, h)
            turned = relative_bearing((alpha + rot) % 360, (h + rot) % 360)
            assert turned == pytest.approx(base, abs=1e-9) or abs(turned - base) == pytest.approx(
                360.0, abs=1e-9
            )
            col_a = pixel_column(base, 2048)
            col_b = pixel_column(turned, 2048)
            assert col_b % 2048 == pytest.approx(col_a % 2048, abs=1e-6) or abs(
                col_b - col_a
            ) == pytest.approx(2048, abs=1e-6)

    def test_observer_height_offset(self):
        pano = make_pano(y=-1000.0)
        lm = make_landmark(height=310.0)
        raised = view_geometry(pano, lm, observer_height=10.0)
        level = view_geometry(pano, lm)
        assert raised.elevation_deg == pytest.approx(
            elevation_angle(300.0, level.distance_m), abs=1e-12
        )
        with pytest.raises(InvalidArgumentError):
            view_geometry(pano, lm, observer_height=310.0)

    def test_localize_composes(self):
        pano = make_pano(x=0.0, y=-3000.0)
        lm = make_landmark()
        geom, box = localize(pano, lm, padding=0.25)
        ref = zoom_box(geom.x_pix, geom.h_pix, pano.width, pano.height, padding=0.25)
        assert box == ref


class TestMetaValidation:
    def test_heading_range(self):
        with pytest.raises(InvalidArgumentError):
            make_pano(heading=360.0)

    def test_tiny_frame(self):
        with pytest.raises(InvalidArgumentError):
            make_pano(width=1)

    def test_non_2to1_warns(self):
        with pytest.warns(UserWarning):
            PanoramaMeta(pano_id="odd", x=0, y=0, heading=0, width=1024, height=1024)

    def test_landmark_height(self):
        with pytest.raises(InvalidArgumentError):
            make_landmark(height=0.0)


def test_round_half_away():
    assert round_half_away(0.5) == 1
    assert round_half_away(-0.5) == -1
    assert round_half_away(2.4) == 2
    assert round_half_away(-2.5) == -3
