"""Launch grids, marching, frame transport, and beam matrix evolution."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamfield.beamtrace import (Atmosphere, LaunchGrid, SourceSpec,
                                 TraceConfig, initial_pq, launch_directions,
                                 q_at, sound_speed, trace, travel_time)
from beamfield.scene import make_ground_plane
from conftest import make_source, quick_trace_cfg, scene_from_triangles


class TestSoundSpeed:
    def test_zero_celsius_is_reference(self):
        assert sound_speed(0.0) == pytest.approx(331.3, abs=1e-12)

    def test_twenty_celsius_matches_formula(self):
        expected = 331.3 * math.sqrt(1.0 + 20.0 / 273.15)  # 343.2146...
        assert sound_speed(20.0) == pytest.approx(expected, abs=1e-9)
        assert sound_speed(20.0) == pytest.approx(343.2146, abs=1e-3)

    def test_absolute_zero_rejected(self):
        with pytest.raises(ValueError):
            sound_speed(-273.15)

    @given(t=st.floats(min_value=-100.0, max_value=60.0))
    def test_positive_and_monotone(self, t):
        c = sound_speed(t)
        assert c > 0
        assert sound_speed(t + 1.0) > c


class TestLaunchDirections:
    def test_full_sphere_weights_sum_to_4pi(self):
        launch = launch_directions(LaunchGrid(0, 180, 0, 360, 64, 64))
        assert launch.weights.sum() == pytest.approx(4 * np.pi, rel=5e-3)
        norms = np.linalg.norm(launch.directions, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_degenerate_range_rejected(self):
        with pytest.raises(ValueError):
            LaunchGrid(90, 90, 0, 360, 8, 8)
        with pytest.raises(ValueError):
            LaunchGrid(0, 180, 120, 120, 8, 8)

    def test_single_cell_center_and_weight(self):
        launch = launch_directions(LaunchGrid(0, 180, 0, 360, 1, 1))
        assert len(launch) == 1
        g1, g2, d, w = launch[0]
        assert g1 == pytest.approx(np.pi / 2)
        assert g2 == pytest.approx(np.pi)
        # cell measure: sin(pi/2) * pi * 2pi
        assert w == pytest.approx(math.sin(math.pi / 2) * math.pi * 2 * math.pi)
        np.testing.assert_allclose(d, [-1.0, 0.0, 0.0], atol=1e-12)

    def test_frames_are_orthonormal(self):
        launch = launch_directions(LaunchGrid(0, 180, 0, 360, 16, 16))
        for arrs in (launch.e1, launch.e2):
            np.testing.assert_allclose(np.linalg.norm(arrs, axis=1), 1.0, atol=1e-12)
        dots1 = np.einsum("ij,ij->i", launch.e1, launch.directions)
        dots2 = np.einsum("ij,ij->i", launch.e2, launch.directions)
        dots12 = np.einsum("ij,ij->i", launch.e1, launch.e2)
        np.testing.assert_allclose(dots1, 0.0, atol=1e-12)
        np.testing.assert_allclose(dots2, 0.0, atol=1e-12)
        np.testing.assert_allclose(dots12, 0.0, atol=1e-12)


class TestInitialPQ:
    def test_table_value_mapping(self):
        src = make_source(im_b=-45874.0)
        c = sound_speed(20.0)
        p0, q0 = initial_pq(src, c)
        np.testing.assert_allclose(q0, -45874.0j * np.eye(2))
        np.testing.assert_allclose(p0, (1.0 / c) * np.eye(2))

    def test_q0_invertible(self):
        src = make_source(im_b=-10.0)
        _, q0 = initial_pq(src, 340.0)
        assert abs(np.linalg.det(q0)) > 0

    def test_envelope_matrix_positive_definite(self):
        src = make_source(im_b=-45874.0)
        c = sound_speed(20.0)
        p0, q0 = initial_pq(src, c)
        m = p0 @ np.linalg.inv(q0)
        im = m.imag
        np.testing.assert_allclose(im, np.eye(2) / (c * 45874.0), atol=1e-18)
        assert np.all(np.linalg.eigvalsh(im) > 0)

    def test_positive_beam_parameter_rejected(self):
        with pytest.raises(ValueError):
            SourceSpec(position=[0, 0, 0], frequencies=[100.0], beam_param_im=1.0)


class TestTrace:
    def test_free_field_single_segment(self, empty_scene, atmo):
        src = make_source(position=(0, 0, 5))
        cfg = quick_trace_cfg(n_steps=8000)
        path = trace(empty_scene, src, np.array([0.0, 0.0, -1.0]), cfg, atmo)
        assert len(path.segments) == 1
        assert path.n_reflections == 0
        assert path.segments[0].length == pytest.approx(
            cfg.length_cap(atmo.sound_speed), rel=1e-12)

    def test_ground_bounce_geometry(self, ground, atmo):
        src = make_source(position=(0, 0, 5))
        cfg = quick_trace_cfg()
        path = trace(ground, src, np.array([0.0, 0.0, -1.0]), cfg, atmo)
        assert path.n_reflections == 1
        assert len(path.segments) == 2
        s0, s1 = path.segments
        assert s0.length == pytest.approx(5.0, abs=1e-9)
        np.testing.assert_allclose(s1.origin, [0, 0, 0], atol=1e-9)
        np.testing.assert_allclose(s1.direction, [0, 0, 1], atol=1e-12)
        assert s1.s_start == pytest.approx(5.0, abs=1e-9)
        total = s0.length + s1.length
        assert total == pytest.approx(cfg.length_cap(atmo.sound_speed), rel=1e-12)

    @staticmethod
    def corridor_scene():
        walls = []
        for x in (0.0, 4.0):
            walls.append([[x, -500, -500], [x, 500, -500], [x, 500, 500]])
            walls.append([[x, -500, -500], [x, 500, 500], [x, -500, 500]])
        return scene_from_triangles(np.array(walls))

    @pytest.mark.parametrize("r_max", [5, 20, 50])
    def test_corridor_reflection_count(self, atmo, r_max):
        scene = self.corridor_scene()
        src = make_source(position=(2.0, 0.0, 0.0))
        cfg = TraceConfig(n_steps=2000, dt=1e-4, r_max=r_max)
        d = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0)
        path = trace(scene, src, d, cfg, atmo)
        length = cfg.length_cap(atmo.sound_speed)
        # billiard unfolding: wall hits at transverse travel 2, 6, 10, ...
        transverse = length * math.cos(math.pi / 4)
        unbounded = int((transverse - 2.0) // 4.0) + 1 if transverse >= 2.0 else 0
        assert path.n_reflections == min(unbounded, r_max)

    def test_reflection_cap_stops_at_last_hit(self, atmo):
        scene = self.corridor_scene()
        src = make_source(position=(2.0, 0.0, 0.0))
        cfg = TraceConfig(n_steps=2000, dt=1e-4, r_max=5)
        d = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0)
        path = trace(scene, src, d, cfg, atmo)
        assert len(path.segments) == 6  # r_max reflections then stop at next wall
        assert path.total_length < cfg.length_cap(atmo.sound_speed)

    def test_trace_is_deterministic(self, ground, atmo):
        src = make_source(position=(0, 0, 5))
        cfg = quick_trace_cfg()
        d = np.array([0.3, -0.2, -0.5])
        d /= np.linalg.norm(d)
        a = trace(ground, src, d, cfg, atmo)
        b = trace(ground, src, d, cfg, atmo)
        for sa, sb in zip(a.segments, b.segments):
            assert np.array_equal(sa.origin, sb.origin)
            assert np.array_equal(sa.direction, sb.direction)
            assert sa.length == sb.length

    def test_frames_stay_orthonormal_across_reflections(self, atmo):
        scene = self.corridor_scene()
        src = make_source(position=(2.0, 0.0, 0.0))
        cfg = TraceConfig(n_steps=2000, dt=1e-4, r_max=20)
        d = np.array([1.0, 0.3, 0.9])
        d /= np.linalg.norm(d)
        path = trace(scene, src, d, cfg, atmo)
        assert path.n_reflections > 3
        for seg in path.segments:
            assert np.linalg.norm(seg.direction) == pytest.approx(1.0, abs=1e-9)
            assert np.linalg.norm(seg.e1) == pytest.approx(1.0, abs=1e-9)
            assert np.linalg.norm(seg.e2) == pytest.approx(1.0, abs=1e-9)
            assert abs(seg.e1 @ seg.direction) < 1e-9
            assert abs(seg.e2 @ seg.direction) < 1e-9
            assert abs(seg.e1 @ seg.e2) < 1e-9


@settings(max_examples=100, deadline=None)
@given(dx=st.floats(-1, 1), dy=st.floats(-1, 1), dz=st.floats(-1, -0.05),
       nx=st.floats(-0.3, 0.3), ny=st.floats(-0.3, 0.3))
def test_specular_reflection_preserves_angles(dx, dy, dz, nx, ny):
    d = np.array([dx, dy, dz])
    norm = np.linalg.norm(d)
    if norm < 1e-6:
        return
    d /= norm
    n = np.array([nx, ny, 1.0])
    n /= np.linalg.norm(n)
    if d @ n >= -1e-3:
        return
    r = d - 2 * (d @ n) * n
    assert np.linalg.norm(r) == pytest.approx(1.0, abs=1e-9)
    assert abs((-d) @ n - r @ n) < 1e-9  # equal incidence and exit angles


class TestBeamMatrices:
    def test_q_at_boundary_is_q0(self, empty_scene, atmo):
        src = make_source(position=(0, 0, 0), im_b=-45874.0)
        path = trace(empty_scene, src, np.array([1.0, 0.0, 0.0]),
                     quick_trace_cfg(n_steps=8000), atmo)
        np.testing.assert_allclose(q_at(path, 0.0, atmo.sound_speed), path.Q0)

    def test_q_linear_growth(self, empty_scene, atmo):
        c = atmo.sound_speed
        src = make_source(position=(0, 0, 0), im_b=-45874.0)
        path = trace(empty_scene, src, np.array([1.0, 0.0, 0.0]),
                     quick_trace_cfg(n_steps=12000), atmo)
        s = c  # one second of travel
        q = q_at(path, s, c)
        np.testing.assert_allclose(q, (s - 45874.0j) * np.eye(2), rtol=1e-12)

    def test_det_q_never_vanishes_along_path(self, ground, atmo):
        c = atmo.sound_speed
        src = make_source(position=(0, 0, 5), im_b=-10.0)
        path = trace(ground, src, np.array([0.0, 0.0, -1.0]),
                     quick_trace_cfg(), atmo)
        p0 = path.P0
        for s in np.arange(0.0, path.total_length, 1.0):
            q = q_at(path, s, c)
            det = np.linalg.det(q)
            assert det != 0
            m = (p0 @ np.linalg.inv(q)).imag
            assert np.all(np.linalg.eigvalsh(m) > 0)

    def test_q_at_out_of_range(self, empty_scene, atmo):
        src = make_source(position=(0, 0, 0))
        path = trace(empty_scene, src, np.array([1.0, 0.0, 0.0]),
                     quick_trace_cfg(), atmo)
        with pytest.raises(ValueError):
            q_at(path, -1.0, atmo.sound_speed)
        with pytest.raises(ValueError):
            q_at(path, path.total_length + 1.0, atmo.sound_speed)


class TestTravelTime:
    def test_zero_at_source(self, empty_scene, atmo):
        src = make_source(position=(0, 0, 0))
        path = trace(empty_scene, src, np.array([1.0, 0.0, 0.0]),
                     quick_trace_cfg(), atmo)
        assert travel_time(path, 0.0) == 0.0

    def test_one_second_at_c_meters(self, empty_scene, atmo):
        c = atmo.sound_speed
        src = make_source(position=(0, 0, 0))
        path = trace(empty_scene, src, np.array([1.0, 0.0, 0.0]),
                     quick_trace_cfg(n_steps=12000), atmo)
        assert travel_time(path, c) == pytest.approx(1.0, rel=1e-12)

    def test_monotonic(self, empty_scene, atmo):
        src = make_source(position=(0, 0, 0))
        path = trace(empty_scene, src, np.array([1.0, 0.0, 0.0]),
                     quick_trace_cfg(), atmo)
        ss = np.linspace(0, path.total_length, 20)
        ts = [travel_time(path, s) for s in ss]
        assert all(a < b for a, b in zip(ts, ts[1:]))
        with pytest.raises(ValueError):
            travel_time(path, path.total_length + 5.0)
