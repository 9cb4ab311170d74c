"""Synthetic tabletop scenes seen by an overhead depth camera.

Scenes are boxes, upright cylinders, spheres and L-shaped blocks resting
on a table (z = 0) or stacked on one another. A capture samples the table
uniformly in xy, keeps the highest surface at each sample (a top-down
z-buffer), then applies the device's depth noise, mixed pixels at depth
edges, dropout and height bias.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from shapely import affinity
from shapely.geometry import Point, Polygon, box as shapely_box

from .cloud import BACKGROUND, PointCloud

SHAPES = ("box", "cylinder", "sphere", "l-block")
SEM_BACKGROUND = 1
SEM_OBJECT = 2
NOISE_CLIP = 4.0
EDGE_STEP = 0.005


class SceneSpecError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceProfile:
    """Camera model used to emulate differences between physical sensors.

    ``depth_noise_frac`` scales a zero-mean Gaussian (clipped at 4 sigma)
    by the depth from the camera. ``mixed_pixel_frac`` is the share of
    samples lying on a height edge whose depth is interpolated between the
    two sides.
    """

    name: str
    points_per_m2: float
    depth_noise_frac: float
    dropout_frac: float = 0.0
    z_offset: float = 0.0
    camera_height: float = 0.6
    mixed_pixel_frac: float = 0.0
    mixed_pixel_radius: float = 0.0015

    def __post_init__(self):
        if self.points_per_m2 <= 0:
            raise ValueError("points_per_m2 must be positive")
        if not 0 <= self.depth_noise_frac < 1:
            raise ValueError("depth_noise_frac must lie in [0, 1)")
        if not 0 <= self.dropout_frac < 1:
            raise ValueError("dropout_frac must lie in [0, 1)")
        if not 0 <= self.mixed_pixel_frac <= 1:
            raise ValueError("mixed_pixel_frac must lie in [0, 1]")
        if self.camera_height <= 0:
            raise ValueError("camera_height must be positive")


PROFILES = {
    # structured-light camera, 0.1 % depth accuracy
    "ainstec": DeviceProfile(
        "ainstec", points_per_m2=400_000, depth_noise_frac=0.001, dropout_frac=0.01,
        z_offset=0.0, camera_height=0.6, mixed_pixel_frac=0.2,
    ),
    # stereo camera, 2 % depth accuracy, 4x sparser sampling
    "d455": DeviceProfile(
        "d455", points_per_m2=100_000, depth_noise_frac=0.02, dropout_frac=0.03,
        z_offset=0.004, camera_height=0.3, mixed_pixel_frac=0.3,
    ),
}


def get_profile(name: str) -> DeviceProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown device profile {name!r}; known: {sorted(PROFILES)}") from None


@dataclass(frozen=True)
class SceneObject:
    """One object; ``dims`` depend on ``shape``.

    box ``(sx, sy, h)``, cylinder ``(radius, h)``, sphere ``(radius,)``,
    l-block ``(sx, sy, h, notch_x, notch_y)`` where the notch is cut from
    the +x/+y corner. ``support`` is the index of the object it rests on.
    """

    shape: str
    dims: tuple
    x: float
    y: float
    yaw: float = 0.0
    support: Optional[int] = None

    @property
    def height(self) -> float:
        if self.shape == "sphere":
            return 2.0 * self.dims[0]
        if self.shape == "cylinder":
            return self.dims[1]
        return self.dims[2]


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    table: tuple = (0.6, 0.45)
    objects: tuple = ()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "table": list(self.table),
            "objects": [
                {**asdict(o), "dims": list(o.dims)} for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        try:
            objs = tuple(
                SceneObject(
                    shape=o["shape"], dims=tuple(float(d) for d in o["dims"]),
                    x=float(o["x"]), y=float(o["y"]), yaw=float(o.get("yaw", 0.0)),
                    support=o.get("support"),
                )
                for o in data.get("objects", [])
            )
            return cls(int(data.get("seed", 0)), tuple(data.get("table", (0.6, 0.45))), objs)
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneSpecError(f"malformed scene spec: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "SceneSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SceneSpecError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)


_DIM_COUNT = {"box": 3, "cylinder": 2, "sphere": 1, "l-block": 5}


def footprint(obj: SceneObject) -> Polygon:
    """xy outline of an object as a shapely polygon."""
    if obj.shape in ("cylinder", "sphere"):
        return Point(obj.x, obj.y).buffer(obj.dims[0], quad_segs=32)
    sx, sy = obj.dims[0], obj.dims[1]
    if obj.shape == "box":
        poly = shapely_box(-sx / 2, -sy / 2, sx / 2, sy / 2)
    else:
        nx, ny = obj.dims[3], obj.dims[4]
        poly = shapely_box(-sx / 2, -sy / 2, sx / 2, sy / 2).difference(
            shapely_box(sx / 2 - nx, sy / 2 - ny, sx / 2, sy / 2)
        )
    poly = affinity.rotate(poly, obj.yaw, origin=(0, 0), use_radians=True)
    return affinity.translate(poly, obj.x, obj.y)


def _ancestors(objects, k) -> set:
    seen = set()
    while objects[k].support is not None:
        k = objects[k].support
        if k in seen:
            break
        seen.add(k)
    return seen


def validate_spec(spec: SceneSpec) -> list[float]:
    """Check a spec and return the base height of every object."""
    objs = spec.objects
    tx, ty = spec.table
    if tx <= 0 or ty <= 0:
        raise SceneSpecError("table extent must be positive")
    table = shapely_box(-tx / 2, -ty / 2, tx / 2, ty / 2)
    prints = []
    bases = []
    for k, o in enumerate(objs):
        if o.shape not in SHAPES:
            raise SceneSpecError(f"object {k}: unknown shape {o.shape!r}")
        if len(o.dims) != _DIM_COUNT[o.shape] or any(d <= 0 for d in o.dims):
            raise SceneSpecError(f"object {k}: {o.shape} needs {_DIM_COUNT[o.shape]} positive dims")
        if o.shape == "l-block" and (o.dims[3] >= o.dims[0] or o.dims[4] >= o.dims[1]):
            raise SceneSpecError(f"object {k}: l-block notch must be smaller than the block")
        fp = footprint(o)
        if not table.buffer(1e-9).contains(fp):
            raise SceneSpecError(f"object {k}: footprint leaves the table")
        if o.support is None:
            bases.append(0.0)
        else:
            s = o.support
            if not isinstance(s, int) or not 0 <= s < k:
                raise SceneSpecError(f"object {k}: support must name an earlier object")
            if objs[s].shape == "sphere":
                raise SceneSpecError(f"object {k}: cannot rest on a sphere")
            if not prints[s].buffer(1e-9).contains(fp):
                raise SceneSpecError(f"object {k}: footprint overhangs its support {s}")
            bases.append(bases[s] + objs[s].height)
        prints.append(fp)
    for a in range(len(objs)):
        for b in range(a + 1, len(objs)):
            if prints[a].intersection(prints[b]).area > 1e-12:
                if a not in _ancestors(objs, b):
                    raise SceneSpecError(
                        f"objects {a} and {b} overlap without a stack relation"
                    )
    return bases


def _top_surface(obj: SceneObject, base: float, x: np.ndarray, y: np.ndarray):
    """Height of the object's upper surface at (x, y); -inf outside the footprint."""
    dx, dy = x - obj.x, y - obj.y
    if obj.shape in ("cylinder", "sphere"):
        r = obj.dims[0]
        d2 = dx * dx + dy * dy
        inside = d2 <= r * r
        if obj.shape == "cylinder":
            z = np.full(x.shape, base + obj.dims[1])
        else:
            z = base + r + np.sqrt(np.clip(r * r - d2, 0.0, None))
        return np.where(inside, z, -np.inf)
    c, s = np.cos(obj.yaw), np.sin(obj.yaw)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    sx, sy, h = obj.dims[0], obj.dims[1], obj.dims[2]
    inside = (np.abs(u) <= sx / 2) & (np.abs(v) <= sy / 2)
    if obj.shape == "l-block":
        nx, ny = obj.dims[3], obj.dims[4]
        inside &= ~((u > sx / 2 - nx) & (v > sy / 2 - ny))
    return np.where(inside, base + h, -np.inf)


def _top_normal(obj: SceneObject, base: float, x, y, z):
    n = np.zeros((len(x), 3))
    n[:, 2] = 1.0
    if obj.shape == "sphere":
        r = obj.dims[0]
        n = np.stack([x - obj.x, y - obj.y, z - (base + r)], axis=1) / r
        n /= np.linalg.norm(n, axis=1, keepdims=True)
    return n


def height_map(spec: SceneSpec, x: np.ndarray, y: np.ndarray, bases=None):
    """Highest surface and its owner (-1 = table) at each xy sample."""
    bases = validate_spec(spec) if bases is None else bases
    best = np.zeros(x.shape)
    owner = np.full(x.shape, BACKGROUND, dtype=np.int64)
    for k, (o, b) in enumerate(zip(spec.objects, bases)):
        z = _top_surface(o, b, x, y)
        higher = z > best
        best = np.where(higher, z, best)
        owner = np.where(higher, k, owner)
    return best, owner


def _palette(k: int) -> np.ndarray:
    hue = (0.61803398875 * (k + 1)) % 1.0
    # cheap hsv -> rgb at s=0.7, v=0.9
    i = int(hue * 6)
    f = hue * 6 - i
    v, s = 0.9, 0.7
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return np.array([(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i % 6])


def _clipped_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    out = rng.standard_normal(n)
    bad = np.abs(out) > NOISE_CLIP
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > NOISE_CLIP
    return out


def generate_scene(spec: SceneSpec, profile: DeviceProfile) -> PointCloud:
    """Capture ``spec`` with ``profile``; deterministic in (spec, profile).

    Labels: ``gt_instance`` is the object index (-1 for the table and for
    mixed pixels), ``gt_semantic`` is 2 for object points and 1 otherwise.
    """
    bases = validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    tx, ty = spec.table
    n = int(round(profile.points_per_m2 * tx * ty))
    x = rng.uniform(-tx / 2, tx / 2, n)
    y = rng.uniform(-ty / 2, ty / 2, n)
    z, owner = height_map(spec, x, y, bases)

    # mixed pixels: depth interpolated towards the far side of a height edge
    mixed = np.zeros(n, dtype=bool)
    if profile.mixed_pixel_frac > 0 and spec.objects:
        eps = profile.mixed_pixel_radius
        probes = [height_map(spec, x + dx, y + dy, bases)[0]
                  for dx, dy in ((eps, 0), (-eps, 0), (0, eps), (0, -eps))]
        diffs = np.stack(probes, axis=1) - z[:, None]
        k = np.argmax(np.abs(diffs), axis=1)
        step = diffs[np.arange(n), k]
        u = rng.random(n)
        pick = rng.random(n)
        mixed = (np.abs(step) > EDGE_STEP) & (pick < profile.mixed_pixel_frac)
        z = np.where(mixed, z + u * step, z)

    normals = np.zeros((n, 3))
    normals[:, 2] = 1.0
    colors = np.tile([0.6, 0.6, 0.6], (n, 1))
    for k_obj, (o, b) in enumerate(zip(spec.objects, bases)):
        sel = (owner == k_obj) & ~mixed
        if sel.any():
            normals[sel] = _top_normal(o, b, x[sel], y[sel], z[sel])
            colors[sel] = _palette(k_obj)

    sigma = profile.depth_noise_frac * (profile.camera_height - z)
    z = z + sigma * _clipped_normal(rng, n) + profile.z_offset
    keep = rng.random(n) >= profile.dropout_frac

    gt = np.where(mixed, BACKGROUND, owner)
    sem = np.where(gt >= 0, SEM_OBJECT, SEM_BACKGROUND)
    return PointCloud(
        positions=np.stack([x, y, z], axis=1)[keep],
        colors=colors[keep],
        normals=normals[keep],
        gt_instance=gt[keep],
        gt_semantic=sem[keep],
    )


# ---------------------------------------------------------------------------
# presets


def _place(rng, objects, make, table, gap=0.02, tries=400):
    """Append ``make(x, y)`` at a random free spot at least ``gap`` from others."""
    tx, ty = table
    bounds = shapely_box(-tx / 2 + 0.01, -ty / 2 + 0.01, tx / 2 - 0.01, ty / 2 - 0.01)
    for _ in range(tries):
        obj = make(rng.uniform(-tx / 2, tx / 2), rng.uniform(-ty / 2, ty / 2))
        fp = footprint(obj)
        if not bounds.contains(fp):
            continue
        if any(footprint(o).distance(fp) < gap for o in objects if o.support is None):
            continue
        objects.append(obj)
        return len(objects) - 1
    raise SceneSpecError("could not place object without overlap")


def _box(rng, lo=0.05, hi=0.09, hlo=0.04, hhi=0.08):
    sx, sy = rng.uniform(lo, hi, 2)
    h = rng.uniform(hlo, hhi)
    yaw = rng.uniform(-np.pi / 2, np.pi / 2)
    return lambda x, y: SceneObject("box", (sx, sy, h), x, y, yaw)


def _cylinder(rng, rlo=0.025, rhi=0.04, hlo=0.05, hhi=0.12):
    r, h = rng.uniform(rlo, rhi), rng.uniform(hlo, hhi)
    return lambda x, y: SceneObject("cylinder", (r, h), x, y)


def _sphere(rng, rlo=0.025, rhi=0.04):
    r = rng.uniform(rlo, rhi)
    return lambda x, y: SceneObject("sphere", (r,), x, y)


def _lblock(rng):
    sx, sy = rng.uniform(0.07, 0.1, 2)
    h = rng.uniform(0.04, 0.06)
    nx, ny = sx * rng.uniform(0.4, 0.5), sy * rng.uniform(0.4, 0.5)
    yaw = rng.uniform(-np.pi, np.pi)
    return lambda x, y: SceneObject("l-block", (sx, sy, h, nx, ny), x, y, yaw)


def _stack_on(rng, objects, support: int, kind: str, heights=(0.04, 0.06)):
    """Put a smaller object roughly centred on ``objects[support]``."""
    s = objects[support]
    fp = footprint(s)
    for _ in range(200):
        if kind == "box":
            sx, sy = rng.uniform(0.035, 0.05, 2)
            obj_dims, shape = (sx, sy, rng.uniform(*heights)), "box"
        elif kind == "cylinder":
            obj_dims, shape = (rng.uniform(0.02, 0.028), rng.uniform(0.05, 0.09)), "cylinder"
        else:
            obj_dims, shape = (rng.uniform(0.02, 0.028),), "sphere"
        off = rng.uniform(-0.01, 0.01, 2)
        c = fp.centroid
        obj = SceneObject(shape, obj_dims, c.x + off[0], c.y + off[1],
                          rng.uniform(-np.pi / 2, np.pi / 2) if shape == "box" else 0.0,
                          support)
        if fp.buffer(-0.004).contains(footprint(obj)):
            objects.append(obj)
            return len(objects) - 1
    raise SceneSpecError("could not stack object on its support")


def _stack_base(rng):
    sx, sy = rng.uniform(0.085, 0.1, 2)
    h = rng.uniform(0.04, 0.055)
    yaw = rng.uniform(-np.pi / 2, np.pi / 2)
    return lambda x, y: SceneObject("box", (sx, sy, h), x, y, yaw)


PRESETS = ("scenario1", "scenario2", "scenario3", "scenario4", "scenario5", "contact-stack")


def scenario_presets(name: str, seed: int = 0) -> SceneSpec:
    """Deterministic scene layouts.

    * scenario1: 4-6 separate blocks
    * scenario2: building blocks, some stacked two high
    * scenario3: household-like shapes, not stacked
    * scenario4: nine assorted objects, not stacked
    * scenario5: household-like shapes stacked on boxes
    * contact-stack: stacks standing a few millimetres from each other
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {list(PRESETS)}")
    rng = np.random.default_rng([seed, PRESETS.index(name)])
    table = (0.6, 0.45)
    objs: list[SceneObject] = []
    if name == "scenario1":
        for _ in range(int(rng.integers(4, 7))):
            _place(rng, objs, _box(rng), table)
    elif name == "scenario2":
        for _ in range(2):
            base = _place(rng, objs, _stack_base(rng), table)
            _stack_on(rng, objs, base, "box")
        _place(rng, objs, _lblock(rng), table)
        _place(rng, objs, _cylinder(rng), table)
    elif name == "scenario3":
        makers = [_cylinder, _sphere, _box, _cylinder, _sphere]
        for m in makers:
            _place(rng, objs, m(rng), table)
    elif name == "scenario4":
        makers = [_cylinder, _sphere, _box, _cylinder, _sphere, _box, _lblock, _cylinder, _box]
        for m in makers:
            _place(rng, objs, m(rng), table, gap=0.02)
    elif name == "scenario5":
        for kind in ("cylinder", "sphere"):
            base = _place(rng, objs, _stack_base(rng), table)
            _stack_on(rng, objs, base, kind)
        _place(rng, objs, _cylinder(rng), table)
        _place(rng, objs, _sphere(rng), table)
    else:
        return contact_stack_spec(seed)
    return SceneSpec(seed=seed, table=table, objects=tuple(objs))


def contact_stack_spec(seed: int = 0) -> SceneSpec:
    """Two-level stacks alternating with tall boxes, a few millimetres apart.

    Neighbouring tops differ in height by several centimetres, so only the
    sparse mixed pixels along the shared edges can link neighbours.
    """
    rng = np.random.default_rng([seed, 99])
    table = (0.6, 0.45)
    objs: list[SceneObject] = []
    row_y = (-0.09, 0.09)
    for y0 in row_y:
        x = -0.22 + rng.uniform(0, 0.02)
        for k in range(3):
            if k % 2 == 0:
                sx, sy = rng.uniform(0.085, 0.095, 2)
                base = SceneObject("box", (sx, sy, rng.uniform(0.04, 0.045)), x + sx / 2, y0)
                objs.append(base)
                _stack_on(rng, objs, len(objs) - 1, "box", heights=(0.035, 0.04))
            else:
                sx, sy = rng.uniform(0.05, 0.06), rng.uniform(0.07, 0.08)
                objs.append(SceneObject("box", (sx, sy, rng.uniform(0.105, 0.115)), x + sx / 2, y0))
            x += sx + rng.uniform(0.006, 0.009)
    return SceneSpec(seed=seed, table=table, objects=tuple(objs))


def preset_object_count(spec: SceneSpec) -> int:
    return len(spec.objects)
