"""Quick import-and-call check of the compiled extension.

Run after `maturin develop`, or point SPANLAB_PY_DIR at a directory holding
a copy of the built library named spanlab_py.so.
"""

import math
import os
import sys

if os.environ.get("SPANLAB_PY_DIR"):
    sys.path.insert(0, os.environ["SPANLAB_PY_DIR"])

import spanlab_py as sl


def main():
    rows = sl.simulate_panel("DGP1", k=2, n=3, t=250, seed=7)
    assert len(rows) == 250 and len(rows[0]) == 5

    out = sl.bcs_test(rows, 2, "joint", seed=1)
    assert 0.0 <= out["p_value"] <= 1.0
    assert out["blocks"] == 6
    assert len(out["per_asset_pvalues"]) == 6

    assert abs(sl.cauchy_combine([0.3, 0.3]) - 0.3) < 1e-12
    assert abs(sl.cauchy_combine([0.2], [1.0]) - 0.2) < 1e-12

    plan = sl.make_batch_plan(250, seed=3)
    assert sum(b - a for a, b in plan["blocks"]) == 250
    assert len(plan["weights"]) == 250

    fit = sl.nodewise_fit(rows, 2, 0)
    m_alpha = sum(a * b for a, b in zip(fit["v1"], fit["v2"])) / 250
    assert abs(m_alpha + fit["alpha_hat"] * fit["g_sq"][1]) < 1e-12

    grs = sl.classical_test("GRS", rows, 2)
    f1 = sl.classical_test("F1", rows, 2)
    assert math.isclose(grs["statistic"], f1["statistic"], rel_tol=1e-8)

    low, high = sl.gl_test(rows, 2, "joint", replications=199, seed=1)["p_value"]
    assert 0.0 <= low <= high <= 1.0

    try:
        sl.bcs_test(rows, 2, "gamma")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown hypothesis accepted")

    print("spanlab_py", sl.__version__, "ok")


if __name__ == "__main__":
    main()
