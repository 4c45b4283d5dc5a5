"""Bridge tests against the recording host. Run: python3 -m pytest bridge"""

import json
import math
import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))
import citycraft_bridge as cb  # noqa: E402

FIXTURE = pathlib.Path(__file__).resolve().parents[1] / "fixtures" / "scene" / "small_manifest.json"


def load(path):
    host = cb.RecordingHost()
    return cb.import_scene(cb.BridgeConfig(manifest=str(path)), host), host


def test_three_buildings_five_trees():
    summary, host = load(FIXTURE)
    assert summary["objects"] == 8
    assert summary["counts"] == {"building": 3, "tree": 5}
    assert len(host.objects) == 8


def test_transforms_read_back():
    doc = json.loads(FIXTURE.read_text())
    _, host = load(FIXTURE)
    (x, y, z), rot, scale = host.transform("building_0")
    assert abs(x - 10.0) < 1e-5 and abs(y - 20.0) < 1e-5 and z == 0.0
    assert abs(rot - math.pi / 4) < 1e-5
    for b in doc["buildings"]:
        (x, y, _), rot, scale = host.transform(b["instance"].replace(":", "_"))
        assert abs(x - b["position"][0]) < 1e-5
        assert abs(y - b["position"][1]) < 1e-5
        assert abs(rot - b["rotation"]) < 1e-5
        assert abs(scale[0] - b["scale"]) < 1e-5
    for i, p in enumerate(doc["props"]):
        (x, y, _), rot, scale = host.transform(f"tree_{i}")
        assert abs(x - p["position"][0]) < 1e-5 and abs(rot - p["rotation"]) < 1e-5


def test_placeholder_heights_follow_size_class():
    _, host = load(FIXTURE)
    heights = [host.objects[f"building_{i}"]["dims"][2] for i in range(3)]
    assert heights == [8.0, 40.0, 100.0]


def test_empty_manifest(tmp_path):
    doc = json.loads(FIXTURE.read_text())
    doc["buildings"], doc["props"], doc["surfaces"] = [], [], []
    p = tmp_path / "empty.json"
    p.write_text(json.dumps(doc))
    summary, host = load(p)
    assert summary["objects"] == 0 and summary["counts"] == {} and summary["bbox"] is None
    assert host.objects == {}


def test_unsupported_version_rejected(tmp_path):
    doc = json.loads(FIXTURE.read_text())
    doc["version"] = 2
    p = tmp_path / "v2.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(cb.UnsupportedVersion):
        load(p)
    assert cb.main(["--manifest", str(p)]) == 2


def test_strict_mode_requires_meshes(tmp_path):
    cfg = cb.BridgeConfig(manifest=str(FIXTURE), asset_dir=str(tmp_path), placeholder=False, strict=True)
    with pytest.raises(cb.AssetFileMissing):
        cb.import_scene(cfg, cb.RecordingHost())
    (tmp_path / "asset_00000.glb").write_bytes(b"")
    cfg.strict = False
    summary = cb.import_scene(cfg, cb.RecordingHost())
    assert summary["placeholders_substituted"] == ["asset_00001", "asset_00002"]


def test_reimport_is_idempotent(tmp_path):
    out = tmp_path / "summary.json"
    cfg = cb.BridgeConfig(manifest=str(FIXTURE), summary=str(out))
    a = cb.import_scene(cfg, cb.RecordingHost())
    b = cb.import_scene(cfg, cb.RecordingHost())
    assert a == b == json.loads(out.read_text())
