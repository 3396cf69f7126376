#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the three hot paths (forward kinematics, closest-point queries, and
contact-coupled relaxation) plus one full blocked trial on each backend.

Usage: python3 benchmarks/bench_core.py [--repeats N]
"""

import argparse
import time

import numpy as np


def build_state():
    from canopynav.canopy import BranchSpec, LeafSpec, build_canopy

    specs = []
    rng = np.random.default_rng(0)
    for k in range(6):
        specs.append(
            BranchSpec(
                attach_position=(0.15 + 0.06 * k, float(rng.uniform(-0.05, 0.05)), -0.15),
                dimension=float(rng.uniform(0.006, 0.012)),
                length=0.30,
                particle_count=6,
                leaf_specs=(LeafSpec(attach_particle_index=3),),
            )
        )
    return build_canopy(specs)


def bench_kernels(backend, state, repeats):
    st = state.static
    rng = np.random.default_rng(1)
    theta = rng.normal(size=state.theta.shape) * 0.05
    lth = rng.normal(size=state.leaf_theta.shape) * 0.1
    queries = rng.uniform([0.0, -0.1, -0.15], [0.6, 0.1, 0.25], size=(32, 3))
    taxels = rng.uniform([0.1, -0.08, -0.05], [0.5, 0.08, 0.2], size=(32, 3))
    empty_i = np.zeros(0, dtype=np.int64)
    no_loads = (empty_i, empty_i, np.zeros(0), np.zeros((0, 3)),
                empty_i, np.zeros((0, 2)), np.zeros((0, 3)))

    timings = {}

    start = time.perf_counter()
    for _ in range(repeats):
        particles, _, leaf_rot = backend.fk_all(st, theta, lth)
    timings["fk_all"] = (time.perf_counter() - start) / repeats

    start = time.perf_counter()
    for _ in range(repeats):
        backend.closest_points(st, particles, leaf_rot, queries)
    timings["closest_points"] = (time.perf_counter() - start) / repeats

    start = time.perf_counter()
    for _ in range(repeats):
        broken = np.zeros(st.n_branches, dtype=bool)
        backend.relax(
            st, theta.copy(), lth.copy(), broken, *no_loads,
            50, 0.5, taxels, 0.004, 2000.0,
        )
    timings["relax_50it"] = (time.perf_counter() - start) / repeats
    return timings


def bench_trial():
    from canopynav.canopy import BranchSpec
    from canopynav.harness import Scenario, run_trial

    scenario = Scenario(
        canopy=(BranchSpec(attach_position=(0.18, -0.02, -0.15), dimension=0.010),),
        x_target=(0.30, 0.0, 0.0),
        max_duration=60.0,
    )
    start = time.perf_counter()
    result = run_trial(scenario)
    return time.perf_counter() - start, result.stop_reason


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    from canopynav import _kernels_py

    backends = [("python", _kernels_py)]
    try:
        from canopynav import _kernels_cy

        backends.append(("cython", _kernels_cy))
    except ImportError:
        print("compiled backend not available; benchmarking pure Python only")

    state = build_state()
    rows = {}
    for name, backend in backends:
        rows[name] = bench_kernels(backend, state, args.repeats)

    header = f"{'kernel':<16}" + "".join(f"{name:>14}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for key in ("fk_all", "closest_points", "relax_50it"):
        line = f"{key:<16}"
        for name, _ in backends:
            line += f"{rows[name][key] * 1e6:>12.1f}us"
        if len(backends) == 2:
            line += f"{rows['python'][key] / rows['cython'][key]:>9.1f}x"
        print(line)

    print()
    from canopynav import backend_name

    elapsed, reason = bench_trial()
    print(f"full blocked trial ({backend_name()} backend): "
          f"{elapsed:.2f}s wall, stop_reason={reason}")


if __name__ == "__main__":
    main()
