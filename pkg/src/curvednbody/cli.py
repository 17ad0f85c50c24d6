"""Command-line front end.

    curved-nbody list-builtins
    curved-nbody simulate --builtin s2_binary_orbit --out runs/orbit
    curved-nbody simulate --scenario my.txt --out runs/my --t-end 5
    curved-nbody diagnose runs/orbit [--planarity]
    curved-nbody compare --builtin rotating_triangle_s2 --t-end 3
    curved-nbody batch a.txt b.txt --out runs/ --jobs 4

Exit status: 0 for completed runs (whatever the termination reason),
2 for configuration or input errors.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import backend
from .projection import (collision_diagnostics, equivalence_check,
                         hypothesis_windows, planarity_diagnose,
                         sundman_bound_check, total_collision_diagnose)
from .runner import batch, load_run, resolve_scenario, run
from .scenarios import ScenarioError, builtin_scenarios
from .singularity import painleve_monitor


def _add_scenario_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin", help="name of a built-in scenario")
    g.add_argument("--scenario", help="path to a scenario file")


def _add_override_args(p):
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--atol", type=float, default=None)
    p.add_argument("--collision-eps", type=float, default=None)
    p.add_argument("--dt-max", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--auto-renormalize", action="store_true",
                   help="project slightly infeasible initial data back onto the surface")


def _overrides(args):
    out = {}
    for cli, field in (("t_end", "t_end"), ("rtol", "rtol"), ("atol", "atol"),
                       ("collision_eps", "collision_eps"), ("dt_max", "dt_max"),
                       ("max_steps", "max_steps")):
        v = getattr(args, cli)
        if v is not None:
            out[field] = v
    return out


def _cmd_list_builtins(args):
    table = builtin_scenarios()
    width = max(len(k) for k in table)
    for name in sorted(table):
        sc = table[name]
        print(f"{name:<{width}}  n={sc.n} dim={sc.dim} kappa={sc.kappa:+g}  {sc.description}")
    return 0


def _cmd_simulate(args):
    scenario = resolve_scenario(args.builtin, args.scenario)
    art = run(scenario, args.out, config_overrides=_overrides(args),
              auto_renormalize=args.auto_renormalize, chart=args.chart)
    s = art.summary
    print(f"[{backend.backend_name()}] {s['scenario']}: {s['reason']} at t={s['t_final']:.6g} "
          f"({s['steps_accepted']} steps, {s['samples']} samples)")
    if s["pairs"]:
        print(f"  pairs: {s['pairs']}  final metric: {s['final_metric']:.3e}")
    print(f"  energy drift {s['energy_drift']:.3e}  angmom drift {s['angmom_drift']:.3e}  "
          f"constraint {s['constraint_max']:.3e}")
    print(f"  artifacts in {art.run_dir}")
    return 0


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _cmd_diagnose(args):
    _, traj, summary = load_run(args.run_dir)
    out = {"run": args.run_dir, "reason": summary["reason"]}

    verdict = painleve_monitor(traj)
    print(f"singularity monitor: {verdict.reason}")
    print(f"  candidate={verdict.is_candidate} metric->0={verdict.metric_to_zero} "
          f"liminf metric={verdict.liminf_metric:.3e}")
    if verdict.antipodal_approach:
        print(f"  antipodal approach, pairs {verdict.antipodal_pairs}"
              + (" (collision-antipodal)" if verdict.collision_antipodal else ""))
    out["painleve"] = {
        "is_candidate": verdict.is_candidate, "reason": verdict.reason,
        "liminf_metric": verdict.liminf_metric,
        "antipodal_approach": verdict.antipodal_approach,
        "collision_antipodal": verdict.collision_antipodal,
    }

    if traj.kappa > 0:
        diag = collision_diagnostics(traj)
        wins = hypothesis_windows(diag)
        reports = [dataclasses.asdict(sundman_bound_check(diag, a, b)) for a, b in wins]
        tc = total_collision_diagnose(traj)
        print(f"inertia: start {diag.inertia[0]:.6g} min {diag.inertia.min():.6g} "
              f"final {diag.inertia[-1]:.6g}  rho={diag.rho:.6g}")
        print(f"total collision: {tc.verdict}")
        for (a, b), rep in zip(wins, reports):
            print(f"  window [{diag.t[a]:.4g}, {diag.t[b]:.4g}]: bound {rep['bound']:.4g} "
                  f"min I {rep['min_inertia']:.4g} satisfied={rep['bound_satisfied']}")
        out["total_collision"] = dataclasses.asdict(tc)
        out["sundman_windows"] = reports

    if args.planarity:
        rep = planarity_diagnose(traj)
        print(f"planarity: consistent={rep.consistent} moment residuals "
              f"{rep.mass_moment_max.max():.3e} vy_max={rep.vy_max:.3e} "
              f"normalized det min={rep.det_normalized_min:.3e}")
        out["planarity"] = dataclasses.asdict(rep)

    path = os.path.join(args.run_dir, "diagnostics.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    print(f"  wrote {path}")
    return 0


def _cmd_compare(args):
    scenario = resolve_scenario(args.builtin, args.scenario)
    cfg = scenario.config(**_overrides(args))
    from .integrator import integrate
    traj = integrate(scenario.state(auto_renormalize=args.auto_renormalize), cfg)
    rep = equivalence_check(traj, config=cfg)
    if rep.aborted:
        print(f"equivalence check aborted at t={rep.abort_time:.6g}: {rep.abort_why}")
        return 0
    print(f"equivalence over {rep.compared_samples} samples "
          f"(min hemisphere coord {rep.min_hemisphere_z:.3f}, "
          f"min collinearity angle {rep.min_collinearity_angle:.3e}):")
    print(f"  pushforward field: max |dq|={rep.max_dev_push_q:.3e} "
          f"|dp|={rep.max_dev_push_p:.3e}")
    print(f"  literal field:     max |dq|={rep.max_dev_literal_q:.3e} "
          f"|dp|={rep.max_dev_literal_p:.3e} "
          f"(completed={rep.literal_completed})")
    print(f"  pointwise field defect (measured): {rep.field_defect_max:.6e}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "equivalence.json")
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(rep), fh, indent=2, sort_keys=True,
                      default=_json_default)
            fh.write("\n")
        print(f"  wrote {path}")
    return 0


def _cmd_batch(args):
    results = batch(args.scenarios, args.out, jobs=args.jobs,
                    config_overrides=_overrides(args),
                    auto_renormalize=args.auto_renormalize)
    for name, reason, t_final in results:
        print(f"{name}: {reason} at t={t_final:.6g}")
    print(f"{len(results)} runs under {args.out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="curved-nbody",
                                 description="simulate n-body motion on curved surfaces")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list-builtins", help="show the built-in scenarios")
    p.set_defaults(func=_cmd_list_builtins)

    p = sub.add_parser("simulate", help="integrate one scenario and write artifacts")
    _add_scenario_args(p)
    _add_override_args(p)
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--chart", choices=("projected", "pushforward"), default=None,
                   help="integrate a chart system instead of the full one")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("diagnose", help="singularity/collapse diagnostics for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--planarity", action="store_true",
                   help="also run the three-body planarity check (ball chart)")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("compare", help="equivalence check: chart fields vs projected full run")
    _add_scenario_args(p)
    _add_override_args(p)
    p.add_argument("--out", default=None, help="directory for equivalence.json")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("batch", help="run several scenario files in parallel")
    p.add_argument("scenarios", nargs="+", help="scenario files")
    _add_override_args(p)
    p.add_argument("--out", required=True, help="root directory for run artifacts")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_batch)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
