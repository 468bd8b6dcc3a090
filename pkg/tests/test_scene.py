"""Scene format, BVH construction, and nearest-hit queries."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamfield.errors import SceneError
from beamfield.scene import (Triangle, brute_force_intersect, build_bvh,
                             intersect, load_scene, make_city,
                             make_ground_plane, write_scene)
from conftest import random_triangles, scene_from_triangles

from beamfield.config import parse_config_text

BASE_CONFIG = """
ta_c=20
hr_pct=70
pa_atm=1
f_s=1
freqs_hz=100
im_b=-10
n_b={n_b}
n_t=1
n_r=1
n_w={n_w}
n_tree=-10
dim=3
theta_min_deg=0
theta_max_deg=180
phi_min_deg=0
phi_max_deg=360
n_theta=4
n_phi=4
n_steps=100
r_max=5
dt_s=0.0001
src_pos=0,0,1
n_obs=1
obs_point=1,1,1
"""


def config_with_counts(n_b=1, n_w=1):
    return parse_config_text(BASE_CONFIG.format(n_b=n_b, n_w=n_w))


TWO_TRI_SCENE = """# two hard facets
category building
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 5
v 1 0 5
v 0 1 5
f 0 1 2 0
f 3 4 5 0
"""

MIXED_SCENE = """category building
v 0 0 0
v 10 0 0
v 0 10 0
f 0 1 2 0
category water
v 0 0 -1
v 10 0 -1
v 0 10 -1
f 3 4 5 0
"""


class TestLoadScene:
    def test_two_triangles_direct_ingestion(self, tmp_path):
        p = tmp_path / "two.scene"
        p.write_text(TWO_TRI_SCENE)
        scene = load_scene(p, config_with_counts())
        assert scene.n_triangles == 2
        assert scene.materials[0].kind == "hard"
        assert scene.materials[0].reflection_coefficient == 1.0

    def test_negative_count_excludes_category(self, tmp_path):
        p = tmp_path / "mixed.scene"
        p.write_text(MIXED_SCENE)
        scene = load_scene(p, config_with_counts(n_w=-10))
        assert scene.n_triangles == 1
        assert scene.category == ("building",)
        both = load_scene(p, config_with_counts(n_w=1))
        assert both.n_triangles == 2

    def test_empty_facet_list_gives_free_field_scene(self, tmp_path):
        p = tmp_path / "empty.scene"
        p.write_text("# header only\ncategory building\n")
        scene = load_scene(p, config_with_counts())
        assert scene.n_triangles == 0
        assert scene.bvh.n_nodes == 0
        assert intersect(scene, np.zeros(3), np.array([0.0, 0.0, 1.0]), 10.0) is None

    def test_parse_error_reports_line_number(self, tmp_path):
        p = tmp_path / "bad.scene"
        p.write_text("category building\nv 0 0 0\nv 1 oops 0\n")
        with pytest.raises(SceneError, match=":3:"):
            load_scene(p, config_with_counts())

    def test_degenerate_triangle_rejected_with_index(self, tmp_path):
        p = tmp_path / "degen.scene"
        p.write_text("category building\nv 0 0 0\nv 1 0 0\nv 2 0 0\nf 0 1 2 0\n")
        with pytest.raises(SceneError, match="degenerate.*facet 0"):
            load_scene(p, config_with_counts())

    def test_unknown_material_id(self, tmp_path):
        p = tmp_path / "mat.scene"
        p.write_text("category building\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2 7\n")
        with pytest.raises(SceneError, match="unknown material id 7"):
            load_scene(p, config_with_counts())

    def test_facet_before_category(self, tmp_path):
        p = tmp_path / "nofc.scene"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2 0\n")
        with pytest.raises(SceneError, match="facet before any category"):
            load_scene(p, config_with_counts())

    def test_vertex_index_out_of_range(self, tmp_path):
        p = tmp_path / "oob.scene"
        p.write_text("category building\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 9 0\n")
        with pytest.raises(SceneError, match="out of range"):
            load_scene(p, config_with_counts())

    def test_unknown_record(self, tmp_path):
        p = tmp_path / "rec.scene"
        p.write_text("category building\nvt 0 0\n")
        with pytest.raises(SceneError, match="unknown record"):
            load_scene(p, config_with_counts())

    def test_write_then_load_round_trip(self, tmp_path):
        city = make_city(nx=2, ny=2, ground_half=100.0)
        p = tmp_path / "city.scene"
        write_scene(p, city)
        back = load_scene(p, config_with_counts())
        assert back.n_triangles == city.n_triangles
        np.testing.assert_allclose(back.v0, city.v0)
        np.testing.assert_allclose(back.bounds, city.bounds)


class TestBVH:
    def test_single_triangle_single_leaf(self):
        tri = Triangle(np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0]))
        bvh = build_bvh([tri])
        assert bvh.n_nodes == 1
        assert bvh.node_left[0] == -1
        assert bvh.leaf_count[0] == 1

    def test_every_triangle_in_exactly_one_leaf(self, rng):
        tris = random_triangles(rng, 257)
        bvh = build_bvh(tris)
        assert sorted(bvh.prim_index.tolist()) == list(range(257))
        leaves = bvh.node_left == -1
        assert bvh.leaf_count[leaves].max() <= 4
        assert bvh.leaf_count[leaves].sum() == 257

    def test_nodes_contain_descendant_triangles(self, rng):
        tris = random_triangles(rng, 100)
        bvh = build_bvh(tris)
        tri_min = tris.min(axis=1)
        tri_max = tris.max(axis=1)

        def covered(node, ids):
            assert np.all(tri_min[ids] >= bvh.node_min[node] - 1e-12)
            assert np.all(tri_max[ids] <= bvh.node_max[node] + 1e-12)

        # walk the tree collecting leaf membership per node
        def members(node):
            if bvh.node_left[node] < 0:
                s = bvh.leaf_start[node]
                ids = bvh.prim_index[s:s + bvh.leaf_count[node]]
                covered(node, ids)
                return list(ids)
            ids = members(bvh.node_left[node]) + members(bvh.node_right[node])
            covered(node, np.array(ids))
            return ids

        assert sorted(members(0)) == list(range(100))

    def test_disjoint_clusters_split_at_root(self):
        def quad(cx):
            a = np.array([cx, 0.0, 0.0])
            return [
                (a, a + [1, 0, 0], a + [0, 1, 0]),
                (a + [1, 1, 0], a + [0, 1, 0], a + [1, 0, 0]),
                (a + [0, 0, 1], a + [1, 0, 1], a + [0, 1, 1]),
                (a + [1, 1, 1], a + [0, 1, 1], a + [1, 0, 1]),
            ]

        tris = np.array(quad(0.0) + quad(500.0))
        bvh = build_bvh(tris, leaf_size=4)
        left, right = bvh.node_left[0], bvh.node_right[0]
        sides = set()
        for node in (left, right):
            s = bvh.leaf_start[node]
            ids = set(bvh.prim_index[s:s + bvh.leaf_count[node]].tolist())
            assert ids in ({0, 1, 2, 3}, {4, 5, 6, 7})
            sides.add(frozenset(ids))
        assert len(sides) == 2

    def test_bvh_matches_brute_force_on_random_scene(self, rng):
        scene = scene_from_triangles(random_triangles(rng, 300))
        for _ in range(500):
            origin = rng.uniform(-80, 80, 3)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            fast = intersect(scene, origin, d, 500.0)
            slow = brute_force_intersect(scene, origin, d, 500.0)
            if fast is None:
                assert slow is None
            else:
                assert slow is not None
                assert fast.triangle_index == slow.triangle_index
                assert fast.t == pytest.approx(slow.t, rel=1e-9)


class TestIntersect:
    def test_axis_aligned_square_ten_meters(self):
        scene = scene_from_triangles(np.array([
            [[-1, -1, 10.0], [1, -1, 10.0], [1, 1, 10.0]],
            [[-1, -1, 10.0], [1, 1, 10.0], [-1, 1, 10.0]],
        ]))
        hit = intersect(scene, np.zeros(3), np.array([0.0, 0.0, 1.0]), 100.0)
        assert hit.t == pytest.approx(10.0, abs=1e-12)
        assert float(hit.normal @ np.array([0.0, 0.0, 1.0])) < 0

    def test_parallel_ray_misses(self):
        scene = make_ground_plane(10.0)
        hit = intersect(scene, np.array([0.0, 0.0, 1.0]),
                        np.array([1.0, 0.0, 0.0]), 100.0)
        assert hit is None

    def test_stacked_facets_nearer_wins(self, rng):
        scene = scene_from_triangles(np.array([
            [[-5, -5, 20.0], [5, -5, 20.0], [0, 5, 20.0]],
            [[-5, -5, 8.0], [5, -5, 8.0], [0, 5, 8.0]],
        ]))
        hit = intersect(scene, np.zeros(3), np.array([0.0, 0.0, 1.0]), 100.0)
        slow = brute_force_intersect(scene, np.zeros(3), np.array([0.0, 0.0, 1.0]), 100.0)
        assert hit.triangle_index == slow.triangle_index == 1
        assert hit.t == pytest.approx(8.0, abs=1e-12)

    def test_normal_faces_against_ray(self, rng):
        scene = scene_from_triangles(random_triangles(rng, 400, lo=-30.0, hi=30.0,
                                                      size=10.0))
        hits = 0
        for _ in range(300):
            origin = rng.uniform(-60, 60, 3)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            h = intersect(scene, origin, d, 300.0)
            if h is not None:
                hits += 1
                assert float(h.normal @ d) < 0
        assert hits > 50

    def test_direction_must_be_unit(self):
        scene = make_ground_plane(10.0)
        with pytest.raises(ValueError, match="unit"):
            intersect(scene, np.zeros(3), np.array([0.0, 0.0, 2.0]), 10.0)
        with pytest.raises(ValueError, match="t_max"):
            intersect(scene, np.zeros(3), np.array([0.0, 0.0, 1.0]), 0.0)

    def test_excluding_category_preserves_unrelated_hits(self, tmp_path):
        p = tmp_path / "mix.scene"
        p.write_text(MIXED_SCENE)
        full = load_scene(p, config_with_counts(n_w=1))
        no_water = load_scene(p, config_with_counts(n_w=-1))
        origin = np.array([2.0, 2.0, 5.0])
        d = np.array([0.0, 0.0, -1.0])
        a = intersect(full, origin, d, 100.0)
        b = intersect(no_water, origin, d, 100.0)
        # the building facet is hit first either way
        assert a.t == b.t
        assert full.category[a.triangle_index] == "building"


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_bvh_brute_force_property(seed):
    rng = np.random.default_rng(seed)
    scene = scene_from_triangles(random_triangles(rng, 40, size=8.0))
    origin = rng.uniform(-60, 60, 3)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    fast = intersect(scene, origin, d, 400.0)
    slow = brute_force_intersect(scene, origin, d, 400.0)
    if fast is None:
        assert slow is None
    else:
        assert fast.triangle_index == slow.triangle_index
        assert abs(fast.t - slow.t) <= 1e-9 * max(1.0, slow.t)
