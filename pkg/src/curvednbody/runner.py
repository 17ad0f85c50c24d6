"""Run orchestration: scenario -> trajectory -> deterministic artifacts.

A run directory holds three files:

    scenario.txt   echo of the scenario actually run (flat key=value)
    samples.csv    one row per accepted sample, %.17g everywhere
    summary.json   termination report, drift figures, step counts

CSV columns: t, per-body position and momentum components, energy, the three
angular-momentum components (or the chart values for chart runs), the running
minimum pair metric, constraint and tangency residual maxima, and for chart
runs the chart moment of inertia.  Runs are bit-reproducible: the same
scenario and backend produce identical bytes.
"""

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import backend
from .dynamics import SystemState
from .geometry import CurvatureSpace
from .integrator import (IntegratorConfig, TerminationReport, Trajectory,
                         drift_report, integrate, integrate_chart)
from .projection import orth_project
from .scenarios import (Scenario, builtin_scenarios, dumps_scenario,
                        load_scenario, write_scenario)

_AXES_FULL = "xyzw"
_AXES_CHART = {2: ("x", "y"), 3: ("u", "x", "y")}


def _csv_columns(n, dim, mode):
    axes = _AXES_FULL[:dim] if mode == "full" else _AXES_CHART[dim]
    cols = ["t"]
    for i in range(1, n + 1):
        cols += [f"q{i}{a}" for a in axes]
    for i in range(1, n + 1):
        cols += [f"p{i}{a}" for a in axes]
    cols += ["energy", "c1", "c2", "c3", "min_pair_metric",
             "constraint_max", "tangency_max"]
    if mode != "full":
        cols.append("inertia")
    return cols


def write_csv(path, traj):
    n, dim = traj.n, traj.dim
    m = traj.t.shape[0]
    cols = _csv_columns(n, dim, traj.mode)
    blocks = [traj.t[:, None], traj.q.reshape(m, n * dim), traj.p.reshape(m, n * dim),
              traj.energy[:, None], traj.angmom,
              traj.min_pair_metric[:, None], traj.constraint_max[:, None],
              traj.tangency_max[:, None]]
    if traj.mode != "full":
        blocks.append(traj.inertia[:, None])
    data = np.concatenate(blocks, axis=1)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def summary_dict(scenario, traj, cfg):
    dr = drift_report(traj)
    tr = traj.termination
    return {
        "scenario": scenario.name,
        "backend": backend.backend_name(),
        "mode": traj.mode,
        "kappa": traj.kappa,
        "dim": traj.dim,
        "bodies": traj.n,
        "t_end_requested": cfg.t_end,
        "reason": tr.reason,
        "t_final": tr.t_final,
        "message": tr.message,
        "pairs": [list(p) for p in tr.pairs],
        "final_metric": tr.final_metric,
        "samples": int(traj.t.shape[0]),
        "steps_accepted": traj.steps_accepted,
        "steps_rejected": traj.steps_rejected,
        "energy_drift": dr.h_max,
        "angmom_drift": float(np.max(dr.c_max)),
        "constraint_max": dr.constraint_max,
        "tangency_max": dr.tangency_max,
        "min_pair_metric": float(traj.min_pair_metric.min()),
    }


@dataclasses.dataclass
class RunArtifacts:
    run_dir: str
    csv_path: str
    summary_path: str
    scenario_path: str
    traj: Trajectory
    summary: dict


def run(scenario, out_dir, config_overrides=None, auto_renormalize=False, chart=None):
    """Integrate a scenario and persist the artifact triple under out_dir.

    chart selects the vector field: None integrates the full constrained
    system; "projected" or "pushforward" integrate in the ball chart from the
    scenario's projected initial data (positive curvature only).
    """
    cfg = scenario.config(**(config_overrides or {}))
    state = scenario.state(auto_renormalize=auto_renormalize)
    if chart is None:
        traj = integrate(state, cfg)
    else:
        ps = orth_project(state)
        traj = integrate_chart(ps.masses, ps.q, ps.p, ps.t, ps.kappa, cfg, system=chart)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "samples.csv")
    scen_path = os.path.join(out_dir, "scenario.txt")
    summ_path = os.path.join(out_dir, "summary.json")
    write_csv(csv_path, traj)
    write_scenario(scen_path, scenario)
    summary = summary_dict(scenario, traj, cfg)
    if chart is not None:
        summary["chart"] = chart
    with open(summ_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return RunArtifacts(out_dir, csv_path, summ_path, scen_path, traj, summary)


def load_run(run_dir):
    """Rebuild (scenario, Trajectory, summary) from a run directory."""
    scenario = load_scenario(os.path.join(run_dir, "scenario.txt"))
    with open(os.path.join(run_dir, "summary.json")) as fh:
        summary = json.load(fh)
    header, data = read_csv(os.path.join(run_dir, "samples.csv"))
    mode = summary["mode"]
    n, dim = summary["bodies"], summary["dim"]
    m = data.shape[0]
    k = 1
    q = data[:, k:k + n * dim].reshape(m, n, dim); k += n * dim
    p = data[:, k:k + n * dim].reshape(m, n, dim); k += n * dim
    energy = data[:, k]; k += 1
    angmom = data[:, k:k + 3]; k += 3
    minpm = data[:, k]; k += 1
    cons = data[:, k]; k += 1
    tang = data[:, k]; k += 1
    inertia = data[:, k] if mode != "full" else None
    term = TerminationReport(
        reason=summary["reason"], t_final=summary["t_final"],
        message=summary["message"],
        pairs=[tuple(x) for x in summary["pairs"]],
        final_metric=summary["final_metric"],
    )
    sigma = 1.0 if summary["kappa"] > 0 else -1.0
    traj = Trajectory(
        mode=mode, kappa=summary["kappa"], sigma=sigma,
        masses=scenario.masses, t=data[:, 0], q=q, p=p,
        energy=energy, angmom=angmom, inertia=inertia,
        min_pair_metric=minpm, constraint_max=cons, tangency_max=tang,
        termination=term, steps_accepted=summary["steps_accepted"],
        steps_rejected=summary["steps_rejected"],
    )
    return scenario, traj, summary


def resolve_scenario(builtin=None, scenario_file=None):
    if (builtin is None) == (scenario_file is None):
        raise ValueError("exactly one of builtin/scenario_file is required")
    if builtin is not None:
        table = builtin_scenarios()
        if builtin not in table:
            raise ValueError(
                f"unknown builtin {builtin!r}; available: {', '.join(sorted(table))}"
            )
        return table[builtin]
    return load_scenario(scenario_file)


def _batch_one(args):
    path, out_root, overrides, auto_renorm = args
    scenario = load_scenario(path)
    out_dir = os.path.join(out_root, scenario.name)
    art = run(scenario, out_dir, config_overrides=overrides,
              auto_renormalize=auto_renorm)
    return scenario.name, art.summary["reason"], art.summary["t_final"]


def batch(paths, out_root, jobs=None, config_overrides=None, auto_renormalize=False):
    """Run many scenario files in parallel worker processes."""
    tasks = [(p, out_root, config_overrides or {}, auto_renormalize) for p in paths]
    results = []
    if jobs == 1 or len(tasks) == 1:
        for t in tasks:
            results.append(_batch_one(t))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r in pool.map(_batch_one, tasks):
                results.append(r)
    return results
