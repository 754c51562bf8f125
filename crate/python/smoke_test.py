#!/usr/bin/env python3
"""Smoke test for the rmiso_py extension module.

Builds the cdylib if needed, loads it, and exercises the main surface:
samplers, recurrence estimation, the NNLS kernel, projections, and solver
runs on the three built-in problem families.

Usage: python3 python/smoke_test.py
"""

import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build_module() -> pathlib.Path:
    lib = ROOT / "target" / "release" / "librmiso_py.so"
    if not lib.exists():
        print("building rmiso-py (release)...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "rmiso-py"],
            cwd=ROOT,
            check=True,
        )
    return lib


def import_module(lib: pathlib.Path):
    staging = pathlib.Path(tempfile.mkdtemp(prefix="rmiso_py_"))
    shutil.copy2(lib, staging / "rmiso_py.so")
    sys.path.insert(0, str(staging))
    import rmiso_py

    return rmiso_py


def main() -> None:
    rmiso_py = import_module(build_module())

    # Sampler determinism and bookkeeping.
    a = rmiso_py.Sampler("reshuffle", 6, seed=3)
    b = rmiso_py.Sampler("reshuffle", 6, seed=3)
    seq_a = [a.next_index() for _ in range(60)]
    seq_b = [b.next_index() for _ in range(60)]
    assert seq_a == seq_b, "identical seeds must reproduce the sequence"
    assert sorted(seq_a[:6]) == list(range(6)), "first epoch covers every index"
    assert a.staleness() <= 11, "reshuffling return times are at most 2|V|"
    assert a.last_passage(seq_a[-1]) == 60

    # Analytic recurrence constants for cyclic sampling.
    est = rmiso_py.estimate_recurrence("cyclic", 10, replicas=4, horizon=20)
    assert est["method"] == "analytic"
    assert est["t_hit"] == 10.0 and est["t_target"] == 4.5, est

    # Monte-Carlo estimate on a random walk respects the cover-time bound.
    est = rmiso_py.estimate_recurrence(
        "random_walk", 8, graph="cycle", replicas=400, horizon=200, monte_carlo=True
    )
    assert est["censor_fraction"] < 0.01
    bound = rmiso_py.t_cov_bound(est["t_hit"], 8)
    assert est["t_cov"] <= bound + 3 * est["stderr_cov"], (est, bound)

    # NNLS: identity dictionary returns the data; the scalar case
    # soft-thresholds.
    h = rmiso_py.nnls([[1.0, 0.5], [0.25, 2.0]], [[1.0, 0.0], [0.0, 1.0]])
    assert all(
        math.isclose(h[i][j], [[1.0, 0.5], [0.25, 2.0]][i][j], abs_tol=1e-9)
        for i in range(2)
        for j in range(2)
    )
    h = rmiso_py.nnls([[2.0]], [[1.0]], alpha=1.0)
    assert math.isclose(h[0][0], 1.0, abs_tol=1e-9)

    # Projection clips and caps row norms.
    p = rmiso_py.project_nonneg_row_ball([[3.0, -4.0]])
    assert math.isclose(p[0][0], 1.0, abs_tol=1e-12) and p[0][1] == 0.0

    # Solver runs: surrogate values are nonincreasing and the invariant
    # ledger passes on all three problem families.
    for result in (
        rmiso_py.run_quadratic(variant="rmiso_dpr", rho=5.0, iters=300, seed=1),
        rmiso_py.run_logreg(variant="rmiso_dr", iters=200, seed=2),
        rmiso_py.run_nmf(
            shards=[[[1.0, 0.4, 0.0], [0.2, 0.9, 0.3]] for _ in range(4)],
            rank=2,
            variant="miso",
            rho=0.0,
            iters=150,
            seed=3,
        ),
    ):
        surrogate = result["surrogate"]
        for earlier, later in zip(surrogate, surrogate[1:]):
            assert later <= earlier + 1e-9 * (1 + abs(earlier)), "surrogate rose"
        assert result["checks_passed"], "invariant checks failed"
        assert result["final_objective"] <= result["initial_objective"] + 1e-9

    print("smoke test passed")


if __name__ == "__main__":
    main()
