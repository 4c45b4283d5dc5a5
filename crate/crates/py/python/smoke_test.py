"""Build the extension with cargo, import it and exercise each binding.

Run from anywhere: python3 crates/py/python/smoke_test.py
"""

import importlib.util
import json
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[3]


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "citycraft-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libcitycraft_py.so"
    dest = pathlib.Path(tempfile.mkdtemp()) / "citycraft_py.so"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("citycraft_py", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    cc = build()
    print("citycraft_py", cc.__version__)

    names = cc.class_names()
    assert len(names) == 7, names
    assert cc.derive_seed(42, "planner") == cc.derive_seed(42, "planner")
    assert cc.derive_seed(42, "planner") != cc.derive_seed(42, "scatter")

    t = [[0.3, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1]]
    assert cc.ace(t, t) == [0.0] * 7
    try:
        cc.ace([[1.0]], [[1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("short ratio vector accepted")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        catalog = cc.synth_catalog(str(tmp / "catalog"), 40, 3)
        config = "\n".join(
            [
                "seed = 7",
                f'output_dir = "{tmp / "out"}"',
                "[generator]",
                "width = 192",
                "height = 192",
                "[retrieval]",
                f'catalog = "{catalog}"',
            ]
        )
        report = json.loads(cc.run_all(config))
        assert report["error"] is None, report
        ratios = cc.layout_ratios(str(tmp / "out" / "layout.png"))
        assert abs(sum(ratios) - 1.0) < 1e-12
        manifest = json.loads(cc.load_manifest(str(tmp / "out" / "manifest.json")))
        assert manifest["version"] == 1
        assert len(manifest["buildings"]) == report["stages"]["export"]["buildings"]
        print("buildings", len(manifest["buildings"]), "props", len(manifest["props"]))

    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
