"""Smoke test for the iodm Python module.

    pip install crates/py   # or: maturin develop -m crates/py/Cargo.toml
    python python/smoke_test.py
"""

import math
import pathlib

import iodm

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    f = iodm.Instance.gaussian_mab([0.5, 0.0])
    assert f.optimal_decision == 0 and f.gaps == [0.0, 0.5]

    g = iodm.Instance.gaussian_mab([0.5, 0.6])
    assert abs(iodm.kl(f, g, 1) - 0.18) < 1e-12
    assert iodm.renyi(f, g, 1, 0.5) <= iodm.kl(f, g, 1)

    family, dropped = iodm.Family.grid(f, 0.0, 1.0, 0.1)
    assert len(family) == 121 - dropped
    alloc = iodm.solve_complexity(f, family, 1e6)
    assert alloc is not None and abs(alloc.objective - 2.0 / 0.36 * 0.5) < 1e-9
    assert iodm.separation_oracle(f, family, alloc.weights) is None
    assert iodm.solve_complexity(f, family, 1.0) is None

    curve = iodm.complexity_curve(f, family, [1e2, 1e4, 1e6])
    assert all(b <= a + 1e-7 for (_, a), (_, b) in zip(curve, curve[1:]))

    w = iodm.mab_closed_form_weights([0.0, 0.5], 1e6)
    assert iodm.separation_oracle(f, family, w) is None

    lin = iodm.linear_bandit_allocation([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], 1e6)
    assert abs(lin.objective - 2.0) < 1e-3

    fa, fr = iodm.chernoff_stein_bounds(0.5, 0.0625, 200, math.log(100))
    assert abs(fa - 0.01) < 1e-15 and fr < 0.05

    truth = family.position(f)
    rec = iodm.run_t2c(family, truth, 2000, seed=1)
    assert rec.horizon == 2000 and len(rec.decisions) == 2000
    assert rec.regret_at([2000])[0] == rec.cumulative_regret
    again = iodm.run_t2c(family, truth, 2000, seed=1)
    assert again.decisions == rec.decisions

    ucb = iodm.run_ucb(f, 1000, seed=3)
    assert ucb.fallback is None and ucb.cumulative_regret >= 0.0

    summary = iodm.run_experiment(ROOT / "crates/core/tests/data/golden.cfg", seeds=2, threads=1)
    assert summary["seeds"] == 2 and len(summary["final_regret"]) == 2

    try:
        iodm.Instance.gaussian_mab([0.5, 0.5])
    except ValueError:
        pass
    else:
        raise AssertionError("tied optimum accepted")

    print("iodm", iodm.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
