"""Compare the compiled kernels against the pure-numpy fallback.

Times the pairwise gradient, the three right-hand sides, single embedded
steps, and one end-to-end trajectory, for a few body counts.  Run as

    python benchmarks/bench_backends.py [--bodies 3 8 24] [--repeat 2000]
"""

import argparse
import time

import numpy as np

from curvednbody import _core_py
from curvednbody.integrator import IntegratorConfig, integrate
from curvednbody.scenarios import builtin_scenarios

try:
    from curvednbody import _core
except ImportError:
    _core = None


def random_sphere_state(rng, n, dim=3):
    q = rng.normal(size=(n, dim))
    q /= np.linalg.norm(q, axis=1)[:, None]
    p = rng.normal(size=(n, dim))
    p -= (q * p).sum(axis=1)[:, None] * q
    return q, p


def bench(label, fn, repeat):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    dt = (time.perf_counter() - t0) / repeat
    print(f"  {label:<28s} {dt * 1e6:10.2f} us/call")
    return dt


def kernel_suite(ker, n, repeat, rng):
    q, p = random_sphere_state(rng, n)
    m = rng.uniform(0.5, 2.0, size=n)
    w = np.ones(3)
    grad = np.empty_like(q)
    dq, dp = np.empty_like(q), np.empty_like(p)
    qb = 0.5 * q[:, :2]
    pb = p[:, :2]
    dqb, dpb = np.empty_like(qb), np.empty_like(pb)
    qo, po = np.empty_like(q), np.empty_like(p)

    times = {}
    times["force_grad"] = bench(
        "force_grad", lambda: ker.force_grad(m, q, 1.0, 1.0, w, 1e-13, grad), repeat)
    times["rhs_full"] = bench(
        "rhs (full)", lambda: ker.rhs(ker.MODE_FULL, m, q, p, 1.0, 1.0, 1e-13, dq, dp),
        repeat)
    times["rhs_proj"] = bench(
        "rhs (projected)",
        lambda: ker.rhs(ker.MODE_PROJECTED, m, qb, pb, 1.0, 1.0, 1e-13, dqb, dpb),
        repeat)
    times["rhs_push"] = bench(
        "rhs (pushforward)",
        lambda: ker.rhs(ker.MODE_PUSHFORWARD, m, qb, pb, 1.0, 1.0, 1e-13, dqb, dpb),
        repeat)
    times["ck_step"] = bench(
        "ck_step (full)",
        lambda: ker.ck_step(ker.MODE_FULL, m, q, p, 1e-3, 1.0, 1.0,
                            1e-12, 1e-12, 1e-13, qo, po),
        repeat)
    return times


def trajectory_suite():
    sc = builtin_scenarios()["s2_binary_orbit"]
    st = sc.state()
    cfg = sc.config(t_end=20.0)
    t0 = time.perf_counter()
    traj = integrate(st, cfg)
    dt = time.perf_counter() - t0
    print(f"  s2_binary_orbit t=20        {dt * 1e3:10.1f} ms "
          f"({traj.steps_accepted} steps)")
    return dt


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bodies", type=int, nargs="+", default=[3, 8, 24])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = [("python", _core_py)]
    if _core is not None:
        backends.append(("compiled", _core))
    else:
        print("compiled extension not built; timing the fallback only\n")

    all_times = {}
    for n in args.bodies:
        print(f"n = {n}")
        for label, ker in backends:
            print(f" {label}:")
            rng = np.random.default_rng(args.seed)
            all_times[label, n] = kernel_suite(ker, n, args.repeat, rng)
        if len(backends) == 2:
            ratios = {
                k: all_times["python", n][k] / all_times["compiled", n][k]
                for k in all_times["python", n]
            }
            line = ", ".join(f"{k} {v:.1f}x" for k, v in ratios.items())
            print(f" speedup: {line}")
        print()

    print("end-to-end (active backend):")
    trajectory_suite()


if __name__ == "__main__":
    main()
