"""Smoke test for the pyhomlab extension module.

Build and run:
    cargo build -p homlab-python --release --features extension-module
    cp target/release/libpyhomlab.so crates/python/python/pyhomlab.so
    python3 crates/python/python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyhomlab  # noqa: E402


def main():
    assert pyhomlab.capacity_ball(3, 1.0) == 4 * math.pi
    assert pyhomlab.capacity_ball(3, 0.0) == 0.0
    assert abs(pyhomlab.sphere_area(4) - 2 * math.pi**2) < 1e-13
    assert pyhomlab.capacity_variational(3, 0.5, 1.5, 0.125) > pyhomlab.capacity_ball(3, 0.5)

    holes = pyhomlab.construct("constant(1)", 3, 0.125)
    interior = [h for h in holes if h.cell_index == [4, 4, 4]][0]
    assert abs(interior.radius - 0.25**3 / (4 * math.pi)) < 1e-15, interior

    a = pyhomlab.assumptions("constant(2)", 3, 0.125)
    b = pyhomlab.assumptions("constant(2)", 3, 0.0625)
    assert b.sup_a_over_r < a.sup_a_over_r
    assert abs(b.sum_a6 - a.sum_a6) <= 1e-12 * a.sum_a6

    r = pyhomlab.solve("constant(0)", 3, 0.25, 15)
    assert r.l2_error == 0.0 and r.holes == 0
    r = pyhomlab.solve("constant(10)", 3, 0.25, 15, override_tiny_holes=True)
    assert r.l2_relative > 0.0 and len(r.u_eps) == 15**3

    try:
        pyhomlab.construct("constant(40)", 3, 0.25)
    except ValueError as e:
        assert "escapes" in str(e)
    else:
        raise AssertionError("expected a construction error")

    csv, summary = pyhomlab.study(
        "[study]\ndim = 3\npotential = \"constant(0)\"\nsource = \"constant(1)\"\n"
        "epsilons = [0.25, 0.125]\ngrid_n = [15, 15]\n"
    )
    assert csv.splitlines()[0].startswith("epsilon,")
    assert json.loads(summary)["pass"] is True
    print("pyhomlab smoke test passed")


if __name__ == "__main__":
    main()
