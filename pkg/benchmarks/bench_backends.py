"""Wall-time comparison of the compiled and numpy kernel backends.

Times the forward sweep (objective only) and the adjoint gradient on a
single-qudit problem and on a coupled two-qudit problem, reporting the
best of --repeats runs per backend.  The compiled rows are skipped when
the extension is not built.
"""

import argparse
import time

import numpy as np

from pulsegate import _kernels, adjoint, controls, gates, model, objective
from pulsegate.model import ghz, mhz


def single_qudit_case(steps=4000):
    xi = ghz(0.22)
    sub = model.SubsystemSpec(5, 4, ghz(4.8), xi, ghz(4.8))
    system = model.build_composite([sub])
    param = controls.ControlParameterization(
        horizon=140.0, splines_per_carrier=10,
        carriers=((0.0, -xi, -2.0 * xi),))
    v_e = gates.standard_gate("swap0d", system.essential_dims)
    prob = gates.build_problem(system, param, v_e, steps=steps,
                               alpha_max=mhz(4.0))
    rng = np.random.default_rng(1)
    alpha = rng.normal(scale=mhz(1.0), size=param.size)
    return "qudit n=5 E=4 M=%d D=%d" % (steps, param.size), prob, alpha


def coupled_pair_case(steps=1458):
    x1, x2 = ghz(0.2198), ghz(0.2252)
    subs = [model.SubsystemSpec(3, 2, ghz(4.10595), x1, ghz(4.10595)),
            model.SubsystemSpec(3, 2, ghz(4.81526), x2, ghz(4.81526))]
    system = model.build_composite(subs, cross_kerr={(0, 1): ghz(0.01)})
    param = controls.ControlParameterization(
        horizon=75.0, splines_per_carrier=14,
        carriers=((0.0, -x1), (0.0, -x2)))
    v_e = gates.standard_gate("cnot", system.essential_dims)
    prob = gates.build_problem(system, param, v_e, steps=steps,
                               alpha_max=mhz(5.0), guard_weight=2.0)
    rng = np.random.default_rng(2)
    alpha = rng.normal(scale=mhz(1.0), size=param.size)
    return "pair n=9 E=4 M=%d D=%d" % (steps, param.size), prob, alpha


def best_time(fn, repeats):
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5,
                    help="timed runs per entry, best is reported")
    args = ap.parse_args()

    backends = ["numpy"]
    if _kernels.compiled_available():
        backends.append("compiled")
    else:
        print("compiled core not built; timing numpy only")

    rows = []
    for label, prob, alpha in (single_qudit_case(), coupled_pair_case()):
        for op, make in (
            ("forward", lambda b: lambda: objective.evaluate_objective(
                prob, alpha, backend=b)),
            ("gradient", lambda b: lambda: adjoint.gradient(
                prob, alpha, backend=b)),
        ):
            times = {b: best_time(make(b), args.repeats) for b in backends}
            rows.append((label, op, times))

    width = max(len(r[0]) for r in rows)
    header = f"{'case':<{width}}  {'op':<8}" + "".join(
        f"  {b:>10}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for label, op, times in rows:
        line = f"{label:<{width}}  {op:<8}" + "".join(
            f"  {times[b] * 1e3:>8.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"  {times['numpy'] / times['compiled']:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
