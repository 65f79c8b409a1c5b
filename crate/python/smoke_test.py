#!/usr/bin/env python3
"""Smoke test for the dislo_py extension module.

Build the extension first (either profile works):

    cargo build -p dislo-py            # or --release

then run:  python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    for profile in ("release", "debug"):
        lib = REPO / "target" / profile / "libdislo_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp(prefix="dislo_py_"))
            shutil.copy(lib, tmp / "dislo_py.so")
            sys.path.insert(0, str(tmp))
            import dislo_py

            return dislo_py
    sys.exit("libdislo_py.so not found; run `cargo build -p dislo-py` first")


def main():
    m = load_module()

    # Kernel identities.
    assert abs(m.layer_second_moment(3) - math.log(2)) < 1e-12
    r = 0.01
    total = m.phi_layer(-1, r) + m.phi_partial_sum(0, 12, r)
    assert abs(total - r**-3) / r**-3 < 1e-12
    assert m.dist_to_lattice([1.25, 3.0]) == 0.25
    assert m.nearest_lattice([1.6, -0.4]) == [2, 0]

    # Line tension: isotropic scalar gives 4; the cubic-kernel cross term
    # matches its closed form.
    prof = m.Profile.isotropic(1, 1.0)
    value, matrix = prof.gamma0(math.pi / 2, [1.0], 1e-10)
    assert abs(value - 4.0) < 1e-8 and len(matrix) == 1
    direct, _ = m.kco_line_tension(0.3, 0.7, [1.0, 1.0])
    s1, _ = m.kco_line_tension(0.3, 0.7, [1.0, 0.0])
    s2, _ = m.kco_line_tension(0.3, 0.7, [0.0, 1.0])
    cross = 0.3 * math.sin(1.4) / (4 * math.pi * 0.7)
    assert abs(direct - s1 - s2 - 2 * cross) < 1e-12

    # Relaxation: the upper bound never exceeds gamma0, and the parallel
    # split wins exactly the cross term at 45 degrees.
    rep = m.relax(math.pi / 4, [1, 1], poisson=0.3)
    assert rep["upper"]["value"] <= rep["gamma0"] + 1e-12
    cross_45 = 0.3 / (4 * math.pi * 0.7)
    assert abs(rep["gamma0"] - rep["parallel"]["value"] - 2 * cross_45) < 1e-9

    # Slip field energy: a constant integer field costs nothing.
    n = 16
    values = [[[1.0] for _ in range(n)] for _ in range(n)]
    field = m.SlipField(values, 1.0 / n)
    assert (field.nx, field.ny, field.components) == (n, n, 1)
    e = field.energy(prof, 0.05, 4)
    assert e["total"] == 0.0 and all(v == 0.0 for v in e["layers"])

    # Multiscale: isolated jump energy 2 ln 2; clustering removes a tight
    # even pair at its one critical level; snapping recovers an exact
    # integer profile.
    val, clear = m.jump_energy((0.0, 4.0), [2.0], 0, (1.0, 3.0))
    assert clear and abs(val - 2 * math.log(2)) < 1e-4
    rep = m.cluster_jumps((0.0, 1.0), [0.5, 0.5 + 2**-6], 6, 1)
    assert rep["critical_count"] == 1
    assert len(rep["levels"][-1]["jumps"]) == 0
    t = [0.5 + i for i in range(3)]
    u = [[0.0, 1.0], [2.0, 4.0], [4.0, 7.0]]
    snap = m.snap_profile(t, u, 10.0)
    assert snap["l1_error"] < 1e-12 and not snap["degenerate"]

    # Experiment runner round trip.
    out = Path(tempfile.mkdtemp(prefix="dislo_run_"))
    cfg = out / "config.toml"
    cfg.write_text("seed = 5\n")
    summary = m.run_experiment("kernel-check", cfg, out / "artifacts")
    assert summary["verdict"] is True
    assert Path(summary["results_path"]).exists()

    print("smoke test passed")


if __name__ == "__main__":
    main()
