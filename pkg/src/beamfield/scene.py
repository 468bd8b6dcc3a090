"""Scene ingestion, triangle geometry, and accelerated ray queries.

Scenes are triangle soups tagged by category (building, terrain, road, water,
tree). Geometry comes from a plain-text format, one record per line:

    category <name>         opens a category block
    v <x> <y> <z>           vertex in meters
    f <i> <j> <k> <mat_id>  triangle from 0-based vertex indices
    # ...                   comment

A bounding-volume hierarchy over the triangles answers nearest-hit queries;
scene and BVH are immutable after construction and safe to share across
worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import SceneError

CATEGORIES = ("building", "terrain", "road", "water", "tree")

LEAF_SIZE = 4

# The only boundary condition supported: perfectly rigid, reflection +1.
HARD_MATERIAL_ID = 0


@dataclass(frozen=True)
class Material:
    kind: str  # "hard" or "excluded"
    reflection_coefficient: float = 1.0

    def __post_init__(self):
        if self.kind not in ("hard", "excluded"):
            raise SceneError(f"unknown material kind {self.kind!r}")
        if not -1.0 <= self.reflection_coefficient <= 1.0:
            raise SceneError("reflection coefficient outside [-1, 1]")


@dataclass(frozen=True)
class Triangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    material_id: int = HARD_MATERIAL_ID

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.v1 - self.v0, self.v2 - self.v0)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise SceneError("degenerate triangle has no normal")
        return n / norm

    @property
    def area(self) -> float:
        return 0.5 * float(np.linalg.norm(np.cross(self.v1 - self.v0, self.v2 - self.v0)))


@dataclass(frozen=True)
class RayHit:
    t: float
    triangle_index: int
    normal: np.ndarray
    point: np.ndarray


@dataclass
class BVH:
    """Median-split hierarchy flattened into arrays for the query kernel."""
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    leaf_start: np.ndarray
    leaf_count: np.ndarray
    prim_index: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.node_left.shape[0]


@dataclass
class Scene:
    triangles: tuple
    materials: dict
    bvh: BVH
    bounds: np.ndarray  # (2, 3) world AABB; zeros for an empty scene
    v0: np.ndarray = field(repr=False, default=None)
    v1: np.ndarray = field(repr=False, default=None)
    v2: np.ndarray = field(repr=False, default=None)
    refl: np.ndarray = field(repr=False, default=None)
    category: tuple = ()

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.bounds[1] - self.bounds[0]))


def _empty_bvh() -> BVH:
    i32 = np.empty(0, np.int32)
    return BVH(np.empty((0, 3)), np.empty((0, 3)), i32, i32.copy(),
               i32.copy(), i32.copy(), i32.copy())


def build_bvh(triangles, leaf_size: int = LEAF_SIZE) -> BVH:
    """Build a median-split BVH (longest centroid axis, leaves <= leaf_size).

    Accepts a sequence of Triangle or an (n, 3, 3) vertex array. Construction
    is deterministic: splits use a stable sort with index tiebreaks.
    """
    if isinstance(triangles, np.ndarray):
        verts = np.asarray(triangles, dtype=np.float64)
    else:
        verts = np.array([[t.v0, t.v1, t.v2] for t in triangles], dtype=np.float64)
        verts = verts.reshape(-1, 3, 3) if verts.size else verts.reshape(0, 3, 3)
    n = verts.shape[0]
    if n == 0:
        return _empty_bvh()

    tri_min = verts.min(axis=1)
    tri_max = verts.max(axis=1)
    centroid = 0.5 * (tri_min + tri_max)

    node_min, node_max = [], []
    node_left, node_right = [], []
    leaf_start, leaf_count = [], []
    order = []

    # (index-array, slot) work items; slot is this node's position.
    stack = [(np.arange(n, dtype=np.int64), 0)]
    node_min.append(None)
    node_max.append(None)
    node_left.append(-1)
    node_right.append(-1)
    leaf_start.append(0)
    leaf_count.append(0)
    while stack:
        ids, slot = stack.pop()
        lo = tri_min[ids].min(axis=0)
        hi = tri_max[ids].max(axis=0)
        node_min[slot] = lo
        node_max[slot] = hi
        if ids.shape[0] <= leaf_size:
            node_left[slot] = -1
            node_right[slot] = -1
            leaf_start[slot] = len(order)
            leaf_count[slot] = ids.shape[0]
            order.extend(ids.tolist())
            continue
        clo = centroid[ids].min(axis=0)
        chi = centroid[ids].max(axis=0)
        axis = int(np.argmax(chi - clo))
        ranking = np.lexsort((ids, centroid[ids, axis]))
        half = ids.shape[0] // 2
        left_ids = ids[ranking[:half]]
        right_ids = ids[ranking[half:]]

        left_slot = len(node_left)
        for lst, v in ((node_min, None), (node_max, None), (node_left, -1),
                       (node_right, -1), (leaf_start, 0), (leaf_count, 0)):
            lst.append(v)
            lst.append(v)
        right_slot = left_slot + 1
        node_left[slot] = left_slot
        node_right[slot] = right_slot
        leaf_count[slot] = 0
        stack.append((right_ids, right_slot))
        stack.append((left_ids, left_slot))

    return BVH(np.array(node_min, dtype=np.float64),
               np.array(node_max, dtype=np.float64),
               np.array(node_left, dtype=np.int32),
               np.array(node_right, dtype=np.int32),
               np.array(leaf_start, dtype=np.int32),
               np.array(leaf_count, dtype=np.int32),
               np.array(order, dtype=np.int32))


def _assemble(v0, v1, v2, material_ids, categories) -> Scene:
    v0 = np.ascontiguousarray(v0, dtype=np.float64).reshape(-1, 3)
    v1 = np.ascontiguousarray(v1, dtype=np.float64).reshape(-1, 3)
    v2 = np.ascontiguousarray(v2, dtype=np.float64).reshape(-1, 3)
    n = v0.shape[0]
    materials = {HARD_MATERIAL_ID: Material("hard", 1.0)}
    tris = tuple(Triangle(v0[i].copy(), v1[i].copy(), v2[i].copy(), int(material_ids[i]))
                 for i in range(n))
    refl = np.array([materials[t.material_id].reflection_coefficient for t in tris],
                    dtype=np.float64) if n else np.empty(0)
    if n:
        allv = np.concatenate([v0, v1, v2])
        bounds = np.stack([allv.min(axis=0), allv.max(axis=0)])
    else:
        bounds = np.zeros((2, 3))
    bvh = build_bvh(np.stack([v0, v1, v2], axis=1)) if n else _empty_bvh()
    return Scene(triangles=tris, materials=materials, bvh=bvh, bounds=bounds,
                 v0=v0, v1=v1, v2=v2, refl=refl, category=tuple(categories))


def load_scene(path, config=None) -> Scene:
    """Parse a scene file, dropping categories the config marks excluded.

    Negative category counts in the config exclude that category's triangles
    entirely. Malformed lines, degenerate triangles, and unknown material ids
    are hard errors; nothing partially constructed is returned.
    """
    excluded = set()
    if config is not None:
        for name, count in (("building", config.n_b), ("terrain", config.n_t),
                            ("road", config.n_r), ("water", config.n_w),
                            ("tree", config.n_tree)):
            if count < 0:
                excluded.add(name)

    verts = []
    faces = []  # (lineno, category, i, j, k, mat)
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "category":
                if len(parts) != 2 or parts[1] not in CATEGORIES:
                    raise SceneError(f"{path}:{lineno}: bad category record {line!r}")
                current = parts[1]
            elif tag == "v":
                if len(parts) != 4:
                    raise SceneError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise SceneError(f"{path}:{lineno}: non-numeric vertex") from None
            elif tag == "f":
                if current is None:
                    raise SceneError(f"{path}:{lineno}: facet before any category")
                if len(parts) != 5:
                    raise SceneError(f"{path}:{lineno}: facet needs 3 indices and a material id")
                try:
                    i, j, k, mat = (int(p) for p in parts[1:])
                except ValueError:
                    raise SceneError(f"{path}:{lineno}: non-integer facet field") from None
                faces.append((lineno, current, i, j, k, mat))
            else:
                raise SceneError(f"{path}:{lineno}: unknown record {tag!r}")

    varr = np.array(verts, dtype=np.float64).reshape(-1, 3)
    v0, v1, v2, mats, cats = [], [], [], [], []
    for tri_index, (lineno, cat, i, j, k, mat) in enumerate(faces):
        for idx in (i, j, k):
            if idx < 0 or idx >= varr.shape[0]:
                raise SceneError(f"{path}:{lineno}: vertex index {idx} out of range")
        if mat != HARD_MATERIAL_ID:
            raise SceneError(f"{path}:{lineno}: unknown material id {mat}")
        if cat in excluded:
            continue
        a, b, c = varr[i], varr[j], varr[k]
        if np.linalg.norm(np.cross(b - a, c - a)) <= 1e-12:
            raise SceneError(f"{path}:{lineno}: degenerate triangle (facet {tri_index})")
        v0.append(a)
        v1.append(b)
        v2.append(c)
        mats.append(mat)
        cats.append(cat)
    return _assemble(np.array(v0).reshape(-1, 3), np.array(v1).reshape(-1, 3),
                     np.array(v2).reshape(-1, 3), mats, cats)


def write_scene(path, scene: Scene) -> None:
    """Serialize a scene in triangle order, switching category blocks as needed."""
    cats = scene.category if scene.category else ("building",) * scene.n_triangles
    n_verts = 0
    prev = None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# beamfield scene\n")
        for i, t in enumerate(scene.triangles):
            if cats[i] != prev:
                prev = cats[i]
                fh.write(f"category {prev}\n")
            for v in (t.v0, t.v1, t.v2):
                fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
            fh.write(f"f {n_verts} {n_verts + 1} {n_verts + 2} {t.material_id}\n")
            n_verts += 3


def intersect(scene: Scene, origin, direction, t_max: float):
    """Nearest hit along the ray with t in (eps, t_max], or None.

    The direction must be unit length within 1e-9. The returned normal is
    oriented against the incident direction.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit length")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    bvh = scene.bvh
    t, idx = kernels.bvh_nearest(
        bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
        bvh.leaf_start, bvh.leaf_count, bvh.prim_index,
        scene.v0, scene.v1, scene.v2,
        origin[0], origin[1], origin[2],
        direction[0], direction[1], direction[2],
        float(t_max), kernels.EPS_HIT)
    if idx < 0:
        return None
    tri = scene.triangles[idx]
    n = tri.normal
    if float(n @ direction) > 0.0:
        n = -n
    return RayHit(t=float(t), triangle_index=int(idx), normal=n,
                  point=origin + t * direction)


def brute_force_intersect(scene: Scene, origin, direction, t_max: float):
    """All-triangle nearest hit used as the BVH oracle (vectorized numpy)."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if scene.n_triangles == 0:
        return None
    e1 = scene.v1 - scene.v0
    e2 = scene.v2 - scene.v0
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) >= 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - scene.v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    ok &= (u >= 0.0) & (u <= 1.0)
    qvec = np.cross(tvec, e1)
    v = (qvec @ direction) * inv
    ok &= (v >= 0.0) & (u + v <= 1.0)
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    ok &= (t > kernels.EPS_HIT) & (t <= t_max)
    if not ok.any():
        return None
    t = np.where(ok, t, np.inf)
    best = np.lexsort((np.arange(t.shape[0]), t))[0]
    tri = scene.triangles[best]
    n = tri.normal
    if float(n @ direction) > 0.0:
        n = -n
    return RayHit(t=float(t[best]), triangle_index=int(best), normal=n,
                  point=origin + t[best] * direction)


def make_ground_plane(half_extent: float = 1000.0, z: float = 0.0) -> Scene:
    """Large rigid square at height z, two triangles."""
    h = half_extent
    corners = np.array([[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]])
    v0 = np.array([corners[0], corners[0]])
    v1 = np.array([corners[1], corners[2]])
    v2 = np.array([corners[2], corners[3]])
    return _assemble(v0, v1, v2, [0, 0], ["terrain", "terrain"])


def _box_triangles(cx, cy, sx, sy, h):
    """Five faces of an axis-aligned box sitting on z=0 (no bottom)."""
    x0, x1 = cx - sx / 2, cx + sx / 2
    y0, y1 = cy - sy / 2, cy + sy / 2
    c = {
        "a": (x0, y0, 0.0), "b": (x1, y0, 0.0), "c": (x1, y1, 0.0), "d": (x0, y1, 0.0),
        "e": (x0, y0, h), "f": (x1, y0, h), "g": (x1, y1, h), "h": (x0, y1, h),
    }
    quads = [("a", "b", "f", "e"), ("b", "c", "g", "f"), ("c", "d", "h", "g"),
             ("d", "a", "e", "h"), ("e", "f", "g", "h")]
    tris = []
    for q in quads:
        p = [np.array(c[k]) for k in q]
        tris.append((p[0], p[1], p[2]))
        tris.append((p[0], p[2], p[3]))
    return tris


def make_city(nx: int = 6, ny: int = 6, spacing: float = 40.0,
              footprint: float = 20.0, ground_half: float = 250.0) -> Scene:
    """Deterministic block-grid city on a rigid ground plane.

    Building heights follow a fixed pattern so repeated builds are identical.
    """
    v0, v1, v2, cats = [], [], [], []
    ground = make_ground_plane(ground_half)
    for t in ground.triangles:
        v0.append(t.v0)
        v1.append(t.v1)
        v2.append(t.v2)
        cats.append("terrain")
    x_off = -(nx - 1) * spacing / 2
    y_off = -(ny - 1) * spacing / 2
    for i in range(nx):
        for j in range(ny):
            h = 10.0 + 5.0 * ((i * 3 + j * 5) % 6)
            for a, b, c in _box_triangles(x_off + i * spacing, y_off + j * spacing,
                                          footprint, footprint, h):
                v0.append(a)
                v1.append(b)
                v2.append(c)
                cats.append("building")
    mats = [0] * len(v0)
    return _assemble(np.array(v0), np.array(v1), np.array(v2), mats, cats)
