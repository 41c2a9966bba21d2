"""Command-line surface: run orchestration and artifact emission.

Artifacts land in --out-dir: convergence.csv (driven runs also write one
file per restart), controls.csv, populations.csv, spectrum.csv,
params.json, report.json.  Exit codes: 0 success, 2 config error,
3 optimizer stalled, 4 gradient check failure.
"""

import csv
import json
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .adjoint import fd_gradient, gradient, make_evaluator
from .config import build_system, load_config, resolve_run
from .controls import load_parameters, lab_frame_control, sample_envelopes, \
    save_parameters
from .errors import PulsegateError
from .model import TWO_PI, resonance_frequencies
from .objective import ObjectiveReport, evaluate_objective, infidelity, \
    overlap_from_final
from .optimizer import initialize_parameters, minimize
from .propagator import propagate

ARTIFACT_SCHEMA = 1
EXIT_CONFIG = 2
EXIT_STALLED = 3
EXIT_GRADCHECK = 4
_STALLED_STATUSES = ("stalled", "aborted_nonfinite")


def _fail_config(exc):
    click.echo(f"config error: {exc}", err=True)
    sys.exit(EXIT_CONFIG)


def _load_run(config_path, m_override=None):
    try:
        doc = load_config(config_path)
        return resolve_run(doc, m_override=m_override)
    except (PulsegateError, OSError) as exc:
        _fail_config(exc)


def _load_matching_params(run, params_path):
    try:
        param, alpha = load_parameters(params_path)
    except (PulsegateError, OSError, KeyError, ValueError) as exc:
        _fail_config(f"{params_path}: {exc}")
    ours = run.param
    if param.size != ours.size:
        _fail_config(
            f"params file has {param.size} parameters, config needs "
            f"{ours.size}"
        )
    if abs(param.horizon - ours.horizon) > 1e-9 \
            or param.splines_per_carrier != ours.splines_per_carrier \
            or param.num_subsystems != ours.num_subsystems:
        _fail_config("params file layout disagrees with config")
    return alpha


def _resolve_threads(flag):
    """--threads wins; PULSEGATE_THREADS is the fallback; default 1."""
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("PULSEGATE_THREADS", "")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            _fail_config(f"PULSEGATE_THREADS is not an integer: {env!r}")
    return 1


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _sample_marks(steps, limit=1000):
    stride = max(1, steps // limit)
    marks = list(range(0, steps + 1, stride))
    if marks[-1] != steps:
        marks.append(steps)
    return stride, marks


def _write_controls_csv(path, run, alpha):
    param = run.param
    steps = run.problem.steps
    h = param.horizon / steps
    _, marks = _sample_marks(steps)
    nq, nf = param.num_subsystems, param.carriers_per_line
    header = ["t_ns"]
    for k in range(nq):
        for n in range(nf):
            header += [f"p_s{k + 1}c{n + 1}", f"q_s{k + 1}c{n + 1}"]
    for k in range(nq):
        header += [f"re_d_s{k + 1}", f"im_d_s{k + 1}", f"f_s{k + 1}"]
    rot = [s.rot_freq for s in run.system.subsystems]
    rows = []
    for mark in marks:
        t = mark * h
        env = sample_envelopes(param, alpha, t)
        row = [t]
        for k in range(nq):
            for n in range(nf):
                row += [env.p[k, n], env.q[k, n]]
        for k in range(nq):
            lab = 2.0 * (env.re_d[k] * np.cos(rot[k] * t)
                         - env.im_d[k] * np.sin(rot[k] * t))
            row += [env.re_d[k], env.im_d[k], lab]
        rows.append(row)
    _write_csv(path, header, rows)


def _write_populations_csv(path, run, result):
    n = run.system.dim
    e = run.problem.u0.shape[1]
    h = run.param.horizon / run.problem.steps
    header = ["t_ns"] + [
        f"pop_c{col + 1}_l{lvl}" for col in range(e) for lvl in range(n)
    ]
    rows = [
        [mark * h] + list(result.pops[i].reshape(-1))
        for i, mark in enumerate(result.pop_steps)
    ]
    _write_csv(path, header, rows)


def _report_payload(run, report, extra=None):
    payload = {
        "j1": report.j1,
        "j2": report.j2,
        "total": report.total,
        "guard_max": report.guard_max,
        "m": run.problem.steps,
        "h_ns": run.param.horizon / run.problem.steps,
        "d": run.param.size,
    }
    if extra:
        payload.update(extra)
    return payload


def _write_report(out_dir, run, payload, deterministic, wall_time):
    report = {
        "artifact_schema": ARTIFACT_SCHEMA,
        "generator": f"pulsegate {__version__}",
        "deterministic": bool(deterministic),
        "wall_time_s": None if deterministic else wall_time,
        "config": run.resolved,
    }
    report.update(payload)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _ensure_out_dir(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _echo_summary(report):
    click.echo(
        f"J1 = {report.j1:.6e}  J2 = {report.j2:.6e}  "
        f"guard_max = {report.guard_max:.6e}"
    )


@click.group()
@click.version_option(__version__)
def main():
    """Quantum gate pulse optimization for coupled transmon systems."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", default=None, type=click.Path(file_okay=False),
              help="Also write resonances.json here.")
def resonances(config_path, out_dir):
    """Print resonant carrier frequencies per subsystem (GHz)."""
    try:
        doc = load_config(config_path)
        system = build_system(doc)
    except (PulsegateError, OSError) as exc:
        _fail_config(exc)
    table = {
        f"subsystem_{k + 1}": [
            w / TWO_PI for w in resonance_frequencies(system, k)
        ]
        for k in range(system.num_subsystems)
    }
    text = json.dumps(table, indent=1)
    click.echo(text)
    if out_dir is not None:
        _ensure_out_dir(out_dir)
        path = os.path.join(out_dir, "resonances.json")
        with open(path, "w") as fh:
            fh.write(text + "\n")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Parameter file to simulate.")
@click.option("--out-dir", default=".", type=click.Path(file_okay=False))
@click.option("--deterministic", is_flag=True,
              help="Single thread; omit wall time from report.json.")
@click.option("--threads", type=int, default=None)
def simulate(config_path, params_path, out_dir, deterministic, threads):
    """Propagate a parameter file without optimizing."""
    run = _load_run(config_path)
    alpha = _load_matching_params(run, params_path)
    _ensure_out_dir(out_dir)
    t0 = time.perf_counter()
    stride, _ = _sample_marks(run.problem.steps)
    result = propagate(run.problem, alpha, pop_stride=stride)
    overlap = overlap_from_final(result.u, result.v, run.problem.d_u,
                                 run.problem.d_v)
    report = ObjectiveReport(
        j1=infidelity(overlap, run.problem.u0.shape[1]),
        j2=result.j2, overlap=overlap, guard_max=result.guard_max,
    )
    wall = time.perf_counter() - t0
    _write_controls_csv(os.path.join(out_dir, "controls.csv"), run, alpha)
    _write_populations_csv(os.path.join(out_dir, "populations.csv"),
                           run, result)
    save_parameters(os.path.join(out_dir, "params.json"), run.param, alpha)
    _write_report(out_dir, run, _report_payload(
        run, report, {"status": "simulated"}), deterministic, wall)
    _echo_summary(report)


def _convergence_rows(history):
    return [
        [r.iteration, r.j1, r.j2, r.value, r.pg_norm, r.step,
         r.obj_evals, r.grad_evals]
        for r in history
    ]


_CONVERGENCE_HEADER = ["iter", "j1", "j2", "total", "pg_norm", "step",
                       "obj_evals", "grad_evals"]


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", default=".", type=click.Path(file_okay=False))
@click.option("--restarts", type=int, default=None,
              help="Override optimizer.restarts.")
@click.option("--seed", type=int, default=None,
              help="Override optimizer.seed.")
@click.option("--deterministic", is_flag=True,
              help="Single thread; omit wall time from report.json.")
@click.option("--threads", type=int, default=None)
def optimize(config_path, out_dir, restarts, seed, deterministic, threads):
    """Optimize the configured gate problem and emit artifacts."""
    run = _load_run(config_path)
    _ensure_out_dir(out_dir)
    n_threads = 1 if deterministic else _resolve_threads(threads)
    n_restarts = restarts if restarts is not None else run.restarts
    if n_restarts < 1:
        _fail_config("restarts must be at least 1")
    base_seed = seed if seed is not None else run.seed

    evaluate = make_evaluator(run.problem, noise=run.noise,
                              threads=n_threads)
    lo, hi = run.bounds()
    t0 = time.perf_counter()
    best = None
    summaries = []
    for r in range(n_restarts):
        rng = np.random.default_rng([base_seed, r])
        x0 = initialize_parameters(run.param.size, hi, rng,
                                   pinned=run.problem.pinned)
        result = minimize(evaluate, x0, lo, hi, config=run.opt,
                          pinned=run.problem.pinned)
        _write_csv(
            os.path.join(out_dir, f"convergence_r{r + 1}.csv"),
            _CONVERGENCE_HEADER, _convergence_rows(result.history),
        )
        summaries.append({
            "restart": r + 1,
            "j1": result.report.j1,
            "j2": result.report.j2,
            "total": result.value,
            "status": result.status,
            "iterations": result.iterations,
        })
        click.echo(
            f"restart {r + 1}/{n_restarts}: J1 = {result.report.j1:.6e} "
            f"total = {result.value:.6e} ({result.status}, "
            f"{result.iterations} iters)"
        )
        if best is None or result.value < best[1].value:
            best = (r, result)
    wall = time.perf_counter() - t0

    r_best, result = best
    alpha = result.x
    _write_csv(os.path.join(out_dir, "convergence.csv"),
               _CONVERGENCE_HEADER, _convergence_rows(result.history))
    _write_controls_csv(os.path.join(out_dir, "controls.csv"), run, alpha)
    stride, _ = _sample_marks(run.problem.steps)
    prop = propagate(run.problem, alpha, pop_stride=stride)
    _write_populations_csv(os.path.join(out_dir, "populations.csv"),
                           run, prop)
    save_parameters(
        os.path.join(out_dir, "params.json"), run.param, alpha,
        extra={"gate": run.gate_name, "j1": result.report.j1,
               "status": result.status},
    )
    extra = {
        "status": result.status,
        "best_restart": r_best + 1,
        "restarts": summaries,
        "obj_evals": result.obj_evals,
        "grad_evals": result.grad_evals,
        "iterations": result.iterations,
    }
    if run.noise is not None:
        nominal = evaluate_objective(run.problem, alpha)
        extra["j1_nominal"] = nominal.j1
        extra["j2_nominal"] = nominal.j2
    _write_report(out_dir, run, _report_payload(run, result.report, extra),
                  deterministic, wall)
    _echo_summary(result.report)
    if result.status in _STALLED_STATUSES:
        sys.exit(EXIT_STALLED)


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", default=".", type=click.Path(file_okay=False))
def spectrum(config_path, params_path, out_dir):
    """Fourier magnitude of the lab-frame control functions."""
    run = _load_run(config_path)
    alpha = _load_matching_params(run, params_path)
    _ensure_out_dir(out_dir)
    steps = run.problem.steps
    h = run.param.horizon / steps
    times = np.arange(steps + 1) * h
    npad = 1
    while npad < 2 * (steps + 1):
        npad *= 2
    freq = np.fft.rfftfreq(npad, d=h)
    nq = run.system.num_subsystems
    mags = []
    for k in range(nq):
        sig = lab_frame_control(run.param, alpha, k, times,
                                run.system.subsystems[k].rot_freq)
        mags.append(np.abs(np.fft.rfft(sig, n=npad)))
    if nq == 1:
        header = ["freq_ghz", "magnitude"]
    else:
        header = ["freq_ghz"] + [f"magnitude_s{k + 1}" for k in range(nq)]
    rows = [[freq[i]] + [m[i] for m in mags] for i in range(freq.size)]
    path = os.path.join(out_dir, "spectrum.csv")
    _write_csv(path, header, rows)
    click.echo(f"wrote {path} ({freq.size} bins, zero-padded to {npad})")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--steps", type=int, default=None,
              help="Override the step count (small-M check).")
@click.option("--components", type=int, default=10,
              help="Number of randomly sampled parameter components.")
@click.option("--tol", type=float, default=1e-5)
@click.option("--seed", type=int, default=None)
def gradcheck(config_path, steps, components, tol, seed):
    """Compare the adjoint gradient against finite differences."""
    run = _load_run(config_path, m_override=steps)
    base_seed = seed if seed is not None else run.seed
    rng = np.random.default_rng(base_seed)
    lo, hi = run.bounds()
    alpha = initialize_parameters(run.param.size, hi, rng,
                                  pinned=run.problem.pinned)
    _, grad = gradient(run.problem, alpha)
    free = np.setdiff1d(np.arange(run.param.size),
                        np.asarray(run.problem.pinned, dtype=int))
    count = min(components, free.size)
    pick = np.sort(rng.choice(free, size=count, replace=False))
    fd = fd_gradient(run.problem, alpha, indices=pick)
    scale = max(np.abs(fd[pick]).max(), 1e-300)
    rel = np.abs(grad[pick] - fd[pick]) / scale
    worst = float(rel.max())
    click.echo(f"checked {count} components at M = {run.problem.steps}")
    click.echo(f"max relative error: {worst:.3e} (tolerance {tol:.1e})")
    failing = pick[rel > tol]
    if failing.size:
        click.echo("failing indices: "
                   + ", ".join(str(int(i)) for i in failing))
        sys.exit(EXIT_GRADCHECK)


@main.command(name="risk-sweep")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("params_files", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--eps-min-mhz", type=float, default=-30.0)
@click.option("--eps-max-mhz", type=float, default=30.0)
@click.option("--eps-count", type=int, default=13)
@click.option("--out-dir", default=".", type=click.Path(file_okay=False))
def risk_sweep(config_path, params_files, eps_min_mhz, eps_max_mhz,
               eps_count, out_dir):
    """Evaluate control sets on a detuning grid (MHz)."""
    run = _load_run(config_path)
    if run.noise is None:
        _fail_config("risk sweep needs an enabled risk section")
    _ensure_out_dir(out_dir)
    eps_mhz = np.linspace(eps_min_mhz, eps_max_mhz, eps_count)
    rows = []
    for path in params_files:
        alpha = _load_matching_params(run, path)
        label = os.path.splitext(os.path.basename(path))[0]
        for em in eps_mhz:
            eps = em * TWO_PI * 1e-3
            kappa = run.noise.perturbed_kappa(run.system, eps)
            rep = evaluate_objective(run.problem, alpha, kappa=kappa)
            rows.append([label, em, rep.j1, rep.j2])
    path = os.path.join(out_dir, "risk_sweep.csv")
    _write_csv(path, ["params", "eps_mhz", "j1", "j2"], rows)
    click.echo(f"wrote {path} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
