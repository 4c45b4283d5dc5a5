"""Instantiate a citycraft scene manifest inside Blender.

Headless use:

    blender -b -P bridge/citycraft_bridge.py -- --manifest out/manifest.json \
        --assets assets/ --summary out/bridge_summary.json

Manifest coordinates are meters, x east, y north, origin at the outer corner
of the layout's bottom-left pixel; rotations are radians counter-clockwise
about +z. Blender uses the same right-handed z-up frame, so positions map
straight to object locations.

The module imports without bpy; `RecordingHost` stands in for Blender in tests.
"""

import argparse
import hashlib
import json
import math
import os
import struct
import sys
from dataclasses import dataclass, field

SUPPORTED_VERSIONS = (1,)

# placeholder box heights by size class, about 3.3 m per floor
PLACEHOLDER_HEIGHT_M = {"low_rise": 8.0, "mid_rise": 40.0, "high_rise": 100.0}
TREE_HEIGHT_M = 6.0
LAMP_HEIGHT_M = 5.0
MESH_EXTENSIONS = (".glb", ".gltf", ".obj", ".fbx", ".blend")


class BridgeError(Exception):
    pass


class UnsupportedVersion(BridgeError):
    def __init__(self, version):
        super().__init__(f"manifest version {version!r} is not supported")
        self.version = version


class AssetFileMissing(BridgeError):
    def __init__(self, asset_id):
        super().__init__(f"no mesh file for asset {asset_id}")
        self.asset_id = asset_id


@dataclass
class BridgeConfig:
    manifest: str
    asset_dir: str = None
    # boxes sized by footprint and size class when meshes are absent
    placeholder: bool = True
    ground_plane: bool = False
    # without placeholder mode a missing mesh is an error
    strict: bool = False
    summary: str = None


def tag_color(tag):
    """Flat RGBA colour for a texture tag, stable across runs."""
    h = hashlib.sha256(tag.encode()).digest()
    return (h[0] / 255.0, h[1] / 255.0, h[2] / 255.0, 1.0)


def _f32(x):
    # Blender stores transforms as single-precision floats
    return struct.unpack("f", struct.pack("f", x))[0]


@dataclass
class RecordingHost:
    """In-memory host that keeps transforms at Blender's float precision."""

    objects: dict = field(default_factory=dict)

    def add(self, name, kind, location, rotation_z, scale, dims, color, mesh=None):
        self.objects[name] = {
            "kind": kind,
            "location": tuple(_f32(v) for v in location),
            "rotation_z": _f32(rotation_z),
            "scale": tuple(_f32(v) for v in scale),
            "dims": tuple(dims),
            "color": color,
            "mesh": mesh,
        }

    def transform(self, name):
        o = self.objects[name]
        return o["location"], o["rotation_z"], o["scale"]


class BlenderHost:
    def __init__(self):
        import bpy

        self.bpy = bpy
        self.materials = {}

    def _material(self, color):
        key = tuple(round(c, 4) for c in color)
        if key not in self.materials:
            mat = self.bpy.data.materials.new(name="cc_%02x%02x%02x" % tuple(int(c * 255) for c in key[:3]))
            mat.diffuse_color = color
            self.materials[key] = mat
        return self.materials[key]

    def add(self, name, kind, location, rotation_z, scale, dims, color, mesh=None):
        bpy = self.bpy
        if mesh:
            before = set(bpy.data.objects)
            ext = os.path.splitext(mesh)[1].lower()
            if ext in (".glb", ".gltf"):
                bpy.ops.import_scene.gltf(filepath=mesh)
            elif ext == ".obj":
                bpy.ops.wm.obj_import(filepath=mesh)
            elif ext == ".fbx":
                bpy.ops.import_scene.fbx(filepath=mesh)
            else:
                with bpy.data.libraries.load(mesh) as (src, dst):
                    dst.objects = src.objects
                for o in dst.objects:
                    bpy.context.collection.objects.link(o)
            new = [o for o in bpy.data.objects if o not in before]
            obj = new[0]
            for extra in new[1:]:
                if extra.parent is None:
                    extra.parent = obj
        else:
            bpy.ops.mesh.primitive_cube_add(size=1.0)
            obj = bpy.context.active_object
            obj.data.transform(_scale_matrix(dims))
            obj.data.transform(_translate_z(dims[2] / 2.0))
            obj.data.materials.append(self._material(color))
        obj.name = name
        obj["citycraft_kind"] = kind
        obj.location = location
        obj.rotation_euler = (0.0, 0.0, rotation_z)
        obj.scale = scale

    def add_ground(self, extent, color):
        bpy = self.bpy
        bpy.ops.mesh.primitive_plane_add(size=1.0, location=(extent[0] / 2.0, extent[1] / 2.0, 0.0))
        obj = bpy.context.active_object
        obj.name = "ground"
        obj.scale = (extent[0], extent[1], 1.0)
        obj.data.materials.append(self._material(color))

    def transform(self, name):
        o = self.bpy.data.objects[name]
        return tuple(o.location), o.rotation_euler.z, tuple(o.scale)


def _scale_matrix(d):
    from mathutils import Matrix

    return Matrix.Diagonal((d[0], d[1], d[2], 1.0))


def _translate_z(z):
    from mathutils import Matrix

    return Matrix.Translation((0.0, 0.0, z))


def load_manifest(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict) or "version" not in doc:
        raise BridgeError("manifest has no version field")
    if doc["version"] not in SUPPORTED_VERSIONS:
        raise UnsupportedVersion(doc["version"])
    for key in ("extent_m", "buildings", "props"):
        if key not in doc:
            raise BridgeError(f"manifest has no {key} field")
    return doc


def find_mesh(asset_dir, asset_id):
    if not asset_dir:
        return None
    for ext in MESH_EXTENSIONS:
        p = os.path.join(asset_dir, asset_id + ext)
        if os.path.isfile(p):
            return p
    return None


def import_scene(config, host=None):
    """Create one object per building and prop entry; return a summary dict."""
    doc = load_manifest(config.manifest)
    host = host if host is not None else BlenderHost()
    counts = {}
    substituted = []
    lo = [math.inf, math.inf]
    hi = [-math.inf, -math.inf]

    def grow(p):
        for i in range(2):
            lo[i] = min(lo[i], p[i])
            hi[i] = max(hi[i], p[i])

    if config.ground_plane and hasattr(host, "add_ground"):
        host.add_ground(doc["extent_m"], tag_color("soil_compacted"))

    for b in doc["buildings"]:
        mesh = find_mesh(config.asset_dir, b["asset_id"])
        if mesh is None and not config.placeholder:
            if config.strict:
                raise AssetFileMissing(b["asset_id"])
        if mesh is None and config.asset_dir:
            substituted.append(b["asset_id"])
        w, d = b["footprint_dims_m"]
        h = PLACEHOLDER_HEIGHT_M.get(b["plan"]["size_class"], PLACEHOLDER_HEIGHT_M["low_rise"])
        s = b["scale"]
        x, y = b["position"]
        host.add(
            b["instance"].replace(":", "_"),
            "building",
            (x, y, 0.0),
            b["rotation"],
            (s, s, 1.0) if mesh is None else (s, s, s),
            (w, d, h),
            tag_color(b["texture_tag"]),
            mesh,
        )
        counts["building"] = counts.get("building", 0) + 1
        grow(b["position"])

    for i, p in enumerate(doc["props"]):
        kind = p["kind"]
        n = counts.get(kind, 0)
        height = TREE_HEIGHT_M if kind == "tree" else LAMP_HEIGHT_M
        x, y = p["position"]
        s = p["scale"]
        host.add(
            f"{kind}_{n}",
            kind,
            (x, y, 0.0),
            p["rotation"],
            (s, s, s),
            (1.0, 1.0, height),
            tag_color(kind),
        )
        counts[kind] = n + 1
        grow(p["position"])

    total = sum(counts.values())
    summary = {
        "manifest_version": doc["version"],
        "objects": total,
        "counts": dict(sorted(counts.items())),
        "bbox": None if total == 0 else [lo[0], lo[1], hi[0], hi[1]],
        "placeholders_substituted": substituted,
    }
    if config.summary:
        with open(config.summary, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
    return summary


def main(argv=None):
    if argv is None:
        argv = sys.argv[sys.argv.index("--") + 1 :] if "--" in sys.argv else sys.argv[1:]
    ap = argparse.ArgumentParser(description="Import a citycraft scene manifest into Blender")
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--assets", dest="asset_dir")
    ap.add_argument("--no-placeholder", dest="placeholder", action="store_false")
    ap.add_argument("--ground-plane", action="store_true")
    ap.add_argument("--strict", action="store_true")
    ap.add_argument("--summary")
    args = ap.parse_args(argv)
    try:
        summary = import_scene(BridgeConfig(**vars(args)))
    except BridgeError as e:
        print(f"citycraft bridge: {e}", file=sys.stderr)
        return 2
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
