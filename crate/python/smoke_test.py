"""Smoke test for the pyqnet extension.

Build first:
    cargo build -p qnet-py --release --features extension-module
then run:
    python3 python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    lib = ROOT / "target" / "release" / "libpyqnet.so"
    if not lib.exists():
        sys.exit(f"{lib} not found; build the extension first")
    tmp = pathlib.Path(tempfile.mkdtemp())
    dest = tmp / "pyqnet.so"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("pyqnet", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    q = load()
    assert "tandem" in q.gallery_names()

    net = q.Network.from_gallery("tandem")
    loads = net.traffic()["server_load"]
    assert all(math.isclose(l, 1 / 3) for l in loads), loads

    x = [[2, 1]]
    assert math.isclose(net.drift(x, 0), net.brute_force_drift(x, 0), abs_tol=1e-12)

    red = net.reduce()
    assert all(c["passed"] for c in red["report"]["checks"])

    trace = net.simulate("fifo", 20_000, 7, stride=1000)
    assert trace == net.simulate("fifo", 20_000, 7, stride=1000)

    assert net.couple("lifo", 20_000, 3)["dominance_ok"]
    assert net.dominate("fifo", [[3, 2]], 20_000, 1)["dominance_ok"]
    assert net.verify_lemma(10, 0, 20)["passed"]
    assert net.uub_check(20, 0, 10)["ordering_violations"] == 0

    over = q.Network.from_gallery("mm1").with_lambda(2.4)
    report = over.stability("fifo", 200_000, list(range(4)))
    assert report["verdict"] == "unstable-consistent", report["verdict"]

    try:
        q.Network("{ not json")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed spec accepted")

    print("pyqnet smoke test ok")


if __name__ == "__main__":
    main()
