"""Smoke test for the Python bindings.

Build the extension first, e.g. ``maturin develop -m python/pyproject.toml``,
or copy the cdylib from ``cargo build -p tidysim-python --features
extension-module`` to ``python/tidysim/_tidysim.so``.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import tidysim  # noqa: E402


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAILED: {what}")
    print(f"ok  {what}")


def main():
    check(tidysim.derive_seed(0, 0) == 0xE220A8397B1DCDAF, "derive_seed reference value")
    check("prepost" in tidysim.studies(), "prepost study registered")

    grid = tidysim.Grid(
        {
            "sample_size": [6, 12],
            "effect_size": [0.0, 1.0],
            "outcome": ["post", "change"],
            "correction": [False, True],
        },
        iterations=50,
        master_seed=42,
    )
    check(len(grid) == 16 * 50, "grid size is cells x iterations")
    row = grid.row(1)
    check(row["sample_size"] == 12 and row["iteration"] == 1, "first factor varies fastest")
    check(row["seed"] == tidysim.derive_seed(42, 1), "row seed derived from master seed")
    check(len(grid.filter("sample_size == 6")) == 400, "filter expression")

    serial = tidysim.run(grid, jobs=1)
    parallel = tidysim.run(grid, jobs=4)
    check(len(serial) == len(grid) and serial.error_count == 0, "run covers every row")
    check(serial.identical(parallel), "results independent of job count")

    agg = tidysim.aggregate(grid, serial)
    check(len(agg["power"]) == 16 and set(agg["n_sim"]) == {50}, "aggregate has one row per cell")
    cols = list(agg)
    check(cols[4:] == ["bias", "bias_lo", "bias_hi", "power", "n_sim", "n_error",
                       "power_se", "power_lo", "power_hi"], "aggregate column order")

    fit = tidysim.fit_ols([[1, 0], [1, 1], [1, 2], [1, 3]], [1.0, 3.1, 4.9, 7.2])
    check(abs(fit["coef"][1] - 2.04) < 1e-12 and not fit["singular"], "fit_ols slope")
    data = tidysim.prepost_generate(10, 0.5, 7)
    out = tidysim.prepost_analyze(data["treated"], data["pre"], data["post"], "change", False)
    change = [b - a for a, b in zip(data["pre"], data["post"])]
    diff = sum(change[:5]) / 5 - sum(change[5:]) / 5
    check(math.isclose(out["estimate"], diff, abs_tol=1e-12), "change-score estimate is a mean difference")

    try:
        tidysim.run(grid, study="nope")
    except ValueError as e:
        check("prepost" in str(e), "unknown study raises ValueError listing studies")
    else:
        check(False, "unknown study raises")

    try:
        import pandas as pd
    except ImportError:
        return
    frame = pd.DataFrame(serial.to_dict())
    check(list(frame.columns) == ["row_id", "estimate", "pvalue", "singular", "status"], "results as DataFrame")


if __name__ == "__main__":
    main()
    print("smoke test passed")
