"""Smoke test for the pyxxzloc extension.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml --release`, or
copy target/release/libpyxxzloc.so next to this file as pyxxzloc.so.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyxxzloc as x


def main():
    assert x.Sector(12).dim == 924
    assert len(x.Sector(8, 2)) == 56

    s = x.realize(8, 1.0, seed=3)
    assert s.dim == 70
    assert s.sum_rule_residual() < 1e-10
    chi = s.susceptibilities()
    assert all(c >= 0 for c in chi)
    zeta, mean_chi, used, zero, inf = s.typical()
    assert math.isfinite(zeta) and used + zero + inf == 70
    r = s.gap_ratios()
    assert all(0.0 <= v <= 1.0 for v in r)
    edges, density = s.spectral_function()
    assert len(edges) == len(density) + 1

    c, terms = x.log_w_prefactor(8)
    assert abs(c - 16 / 7) < 1e-12
    assert abs(x.alpha_from_prefactor(0.0179) - 6.98) < 0.01
    assert abs(x.critical_disorder(18, 6.98) - 1.787) < 1e-3

    with tempfile.TemporaryDirectory() as d:
        cfg = os.path.join(d, "run.toml")
        with open(cfg, "w") as f:
            f.write("sites = [6, 8]\nw_values = [0.5, 5.0]\nrealizations = 2\n")
        rows = x.run(cfg, output=os.path.join(d, "out"), workers=1)
        assert len(rows) == 4 and all(row["realizations"] == 2 for row in rows)

    failed = [t for t in x.selftest() if not t[1]]
    assert not failed, failed
    print("pyxxzloc", x.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
