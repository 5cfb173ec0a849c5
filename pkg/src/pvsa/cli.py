"""``pvsa`` command line.

Subcommands::

    validate                   check a feeder (and optionally a scenario)
    solve                      base-case load flow
    vsa run                    analytic vs load-flow voltage change per (bus, phase)
    vsa bound                  actual approximation error vs its upper bound
    pvsa dist                  Nakagami fit, violation probability, pdf table
    pvsa mc                    Monte-Carlo histogram vs fitted pdf, JS distance
    pvsa violation             probability that |dV| exceeds a threshold
    bench                      analytic vs load-flow timings

Tables go to ``--out`` (CSV) or stdout. With ``--out`` a JSON manifest
``<out>.manifest.json`` records the inputs, parameters and stage timings;
timings never enter the data files, so reruns produce identical CSVs.

Exit status: 0 success, 2 usage error, 3 input error, 4 compute error. On
failure a single ``<Category>: <message>`` line is written to stderr.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError, PVSAError, SchemaError
from .feeder_io import (
    Deterministic,
    Stochastic,
    atomic_write,
    check_scenario,
    load_feeder,
    load_scenario,
    render_csv,
)
from .loadflow import delta_v_oracle, solve
from .network import Phase, validate
from .stochastic import (
    DEFAULT_BINS,
    EmpiricalHistogram,
    assemble_covariance,
    bin_densities,
    build_sensitivity_vectors,
    fitted_js_distance,
    gamma_params,
    mc_distribution,
    moments,
    nakagami_cdf,
    nakagami_params,
    violation_probability,
)
from .vsa import delta_v_multi, error_bound_multi, perturbations_from_scenario

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_COMPUTE = 0, 2, 3, 4

# deterministic and stochastic scenario used per bundled feeder by ``bench``
BENCH_CASES = {
    "ieee37": ("table1", "odd-nodes"),
    "ieee123": ("123-seven-actors", "123-pvsa"),
}


class UsageError(Exception):
    category = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Stages:
    """Wall-clock timing per named stage (monotonic clock)."""

    def __init__(self):
        self.seconds: dict = {}

    @contextmanager
    def __call__(self, name):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - t


# ---------------------------------------------------------------------------
# argument handling


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _phase(text):
    try:
        return Phase.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pvsa", description="Voltage sensitivity analysis for radial distribution feeders.")
    p.add_argument("--version", action="version", version=f"pvsa {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario=False, observation=False, out=True):
        sp.add_argument("--feeder", required=True, help="bundled name (ieee37, ieee123) or path")
        if scenario:
            sp.add_argument("--scenario", required=scenario == "required", help="bundled name or path")
        if observation:
            sp.add_argument("--observation", help="observation bus (default: from scenario)")
            sp.add_argument("--phase", type=_phase, help="observation phase a|b|c (default: from scenario)")
        if out:
            sp.add_argument("--out", type=Path, help="CSV destination (default: stdout)")

    sp = sub.add_parser("validate", help="check a feeder document")
    common(sp, scenario=True, out=False)

    sp = sub.add_parser("solve", help="base-case load flow")
    common(sp)

    vsa = sub.add_parser("vsa", help="deterministic sensitivity").add_subparsers(
        dest="action", required=True, parser_class=_Parser
    )
    for name, hlp in (("run", "analytic vs load-flow voltage change"), ("bound", "error vs error bound")):
        sp = vsa.add_parser(name, help=hlp)
        common(sp, scenario="required")
        sp.add_argument("--observation", help="restrict to one bus (default: every bus)")

    pv = sub.add_parser("pvsa", help="probabilistic sensitivity").add_subparsers(
        dest="action", required=True, parser_class=_Parser
    )
    sp = pv.add_parser("dist", help="Nakagami fit and pdf table")
    common(sp, scenario="required", observation=True)
    sp.add_argument("--threshold", type=_nonneg_float, help="violation threshold, pu (default: from scenario)")
    sp.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)

    sp = pv.add_parser("mc", help="Monte-Carlo histogram vs fitted pdf")
    common(sp, scenario="required", observation=True)
    sp.add_argument("--samples", type=_positive_int, default=100_000)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--mode", choices=("linear", "oracle"), default="linear")
    sp.add_argument("--jobs", type=_positive_int, default=1)
    sp.add_argument("--threshold", type=_nonneg_float, help="violation threshold, pu (default: from scenario)")
    sp.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)

    sp = pv.add_parser("violation", help="probability of |dV| above a threshold")
    common(sp, scenario="required", observation=True)
    sp.add_argument("--threshold", type=_nonneg_float, help="pu (default: from scenario)")
    sp.add_argument("--samples", type=int, default=0, help="also estimate by Monte-Carlo (0: skip)")
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--mode", choices=("linear", "oracle"), default="linear")
    sp.add_argument("--jobs", type=_positive_int, default=1)

    sp = sub.add_parser("bench", help="analytic vs load-flow timings")
    sp.add_argument("--feeder", action="append", choices=sorted(BENCH_CASES), help="repeatable (default: all)")
    sp.add_argument("--repetitions", type=_positive_int, default=11)
    sp.add_argument("--samples", type=_positive_int, default=20_000, help="Monte-Carlo sample count")
    sp.add_argument("--mc-repetitions", type=_positive_int, default=3)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--jobs", type=_positive_int, default=1)
    sp.add_argument("--out", type=Path)
    return p


# ---------------------------------------------------------------------------
# shared plumbing


def _load(args, stages, need_scenario=True):
    with stages("load"):
        graph, loads = load_feeder(args.feeder)
        scenario = None
        if getattr(args, "scenario", None):
            scenario = load_scenario(args.scenario)
            check_scenario(scenario, graph)
        elif need_scenario:
            raise UsageError("--scenario is required")
    return graph, loads, scenario


def _observation(args, scenario, graph):
    obs = args.observation or (scenario.observation if scenario else None)
    phase = args.phase if args.phase is not None else (scenario.phase if scenario else None)
    if obs is None or phase is None:
        raise UsageError("observation bus and phase are required (flags or scenario)")
    obs = graph._check(obs)
    if phase not in graph.phases(obs):
        raise SchemaError(f"bus {obs} has no phase {phase}")
    return obs, phase


def _threshold(args, scenario):
    return args.threshold if args.threshold is not None else scenario.threshold


def _require(scenario, kind, command):
    if not isinstance(scenario, kind):
        raise SchemaError(f"{command} needs a {kind.__name__.lower()} scenario")


def _emit(args, command, text, params, stages, extra_outputs=()):
    """Write the main table (and manifest) or print it."""
    if args.out is None:
        sys.stdout.write(text)
        return
    atomic_write(args.out, text)
    manifest = {
        "command": command,
        "version": __version__,
        "inputs": {k: str(getattr(args, k)) for k in ("feeder", "scenario") if getattr(args, k, None)},
        "parameters": params,
        "outputs": [str(args.out)] + [str(p) for p in extra_outputs],
        "timings_s": {k: round(v, 6) for k, v in stages.seconds.items()},
    }
    atomic_write(Path(str(args.out) + ".manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _params_path(out: Path) -> Path:
    return out.with_name(out.stem + "_params.csv")


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args, stages):
    graph, loads, scenario = _load(args, stages, need_scenario=False)
    with stages("validate"):
        validate(graph, loads)
    n_seg = len(graph.segments)
    total = loads.total() / 1e3
    msg = f"ok feeder={graph.name or args.feeder} buses={len(graph)} segments={n_seg} source={graph.source}"
    msg += " load_kva=" + ",".join(f"{p.name}:{s.real:.6g}{s.imag:+.6g}j" for p, s in zip(Phase, total))
    if scenario is not None:
        msg += f" scenario={scenario.name or args.scenario} actors={len(scenario.actors)}"
    print(msg)


def cmd_solve(args, stages):
    graph, loads, _ = _load(args, stages, need_scenario=False)
    with stages("solve"):
        sol = solve(graph, loads)
    rows = []
    for b in graph.bus_ids:
        v = sol.node(b)
        for p in sorted(graph.phases(b)):
            z = v[p]
            rows.append([b, p, z.real, z.imag, abs(z) / graph.v_base, np.degrees(np.angle(z))])
    cols = ["bus", "phase", "v_re", "v_im", "v_mag_pu", "v_angle_deg"]
    params = {"iterations": sol.iterations, "mismatch_pu": sol.mismatch}
    _emit(args, "solve", render_csv(rows, cols), params, stages)


def _vsa_buses(args, graph):
    return [graph._check(args.observation)] if args.observation else list(graph.bus_ids)


def cmd_vsa_run(args, stages):
    graph, loads, scenario = _load(args, stages)
    _require(scenario, Deterministic, "vsa run")
    with stages("solve"):
        base = solve(graph, loads)
        oracle = delta_v_oracle(graph, loads, scenario, base=base)
    actors = perturbations_from_scenario(scenario)
    rows, errs = [], []
    vb = graph.v_base
    with stages("analytic"):
        for b in _vsa_buses(args, graph):
            dv = delta_v_multi(graph, base, actors, b)
            for p in sorted(graph.phases(b)):
                a, o = dv[p], oracle[(b, p)]
                err = abs(a - o) / vb
                errs.append(err)
                rows.append([b, p, a.real, a.imag, o.real, o.imag, abs(a) / vb, abs(o) / vb, err])
    cols = ["bus", "phase", "dv_analytic_re", "dv_analytic_im", "dv_oracle_re", "dv_oracle_im",
            "dv_analytic_pu", "dv_oracle_pu", "error_pu"]
    params = {"max_error_pu": max(errs), "mean_error_pu": float(np.mean(errs)), "rows": len(rows)}
    _emit(args, "vsa run", render_csv(rows, cols), params, stages)
    if args.out is not None:
        print(f"max_error_pu={max(errs):.6g} mean_error_pu={np.mean(errs):.6g}")


def cmd_vsa_bound(args, stages):
    graph, loads, scenario = _load(args, stages)
    _require(scenario, Deterministic, "vsa bound")
    with stages("solve"):
        base = solve(graph, loads)
        oracle = delta_v_oracle(graph, loads, scenario, base=base)
    actors = perturbations_from_scenario(scenario)
    rows, violations = [], 0
    vb = graph.v_base
    with stages("analytic"):
        for b in _vsa_buses(args, graph):
            dv = delta_v_multi(graph, base, actors, b)
            eb = error_bound_multi(graph, base, actors, b)
            for p in sorted(graph.phases(b)):
                i = int(p)
                err = dv[p] - oracle[(b, p)]
                ok = abs(err) <= eb.bound_mag[i]
                violations += not ok
                rows.append([b, p, abs(err.real) / vb, abs(err.imag) / vb, abs(err) / vb,
                             eb.bound_real[i] / vb, eb.bound_imag[i] / vb, eb.bound_mag[i] / vb, ok])
    cols = ["bus", "phase", "error_re_pu", "error_im_pu", "error_pu",
            "bound_re_pu", "bound_im_pu", "bound_pu", "bounded"]
    _emit(args, "vsa bound", render_csv(rows, cols), {"violations": violations, "rows": len(rows)}, stages)
    if args.out is not None:
        print(f"violations={violations} rows={len(rows)}")


def _fit(args, stages):
    graph, loads, scenario = _load(args, stages)
    _require(scenario, Stochastic, f"pvsa {args.action}")
    obs, phase = _observation(args, scenario, graph)
    with stages("solve"):
        base = solve(graph, loads)
    with stages("fit"):
        cov = assemble_covariance(graph, scenario)
        cv = build_sensitivity_vectors(graph, base, obs, phase)
        mo = moments(cv, cov)
        gp = gamma_params(mo)
        nk = nakagami_params(gp)
    return graph, loads, scenario, base, cov, obs, phase, mo, gp, nk


def _param_rows(obs, phase, mo, gp, nk, v_base, threshold, prob):
    return [
        ("observation", obs), ("phase", phase.name),
        ("var_r_v2", mo.var_r), ("var_i_v2", mo.var_i), ("cov_ri_v2", mo.c),
        ("gamma_k", gp.k), ("gamma_theta_v2", gp.theta),
        ("nakagami_m", nk.m), ("nakagami_omega_v2", nk.omega), ("nakagami_omega_pu2", nk.omega / v_base**2),
        ("mean_pu", nk.mean / v_base), ("threshold_pu", threshold), ("violation_probability", prob),
    ]


def _quantile(nk, q, v_base):
    """Upper ``q`` quantile of the fitted law, pu (bisection on the cdf)."""
    lo, hi = 0.0, np.sqrt(nk.omega) / v_base
    while nakagami_cdf(nk, hi * v_base) < q:
        hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if nakagami_cdf(nk, mid * v_base) < q:
            lo = mid
        else:
            hi = mid
    return hi


def cmd_pvsa_dist(args, stages):
    graph, _, scenario, _, _, obs, phase, mo, gp, nk = _fit(args, stages)
    t = _threshold(args, scenario)
    vb = graph.v_base
    prob = violation_probability(nk, t, vb)
    top = 1.05 * _quantile(nk, 1 - 1e-6, vb)
    edges = np.linspace(0.0, top, args.bins + 1)
    dens = bin_densities(nk, edges, vb)
    rows = [[lo, hi, d] for lo, hi, d in zip(edges[:-1], edges[1:], dens)]
    table = render_csv(rows, ["bin_lo", "bin_hi", "theoretical_density"])
    prow = _param_rows(obs, phase, mo, gp, nk, vb, t, prob)
    params = {k: v for k, v in prow}
    extra = []
    if args.out is not None:
        extra = [_params_path(args.out)]
        atomic_write(extra[0], render_csv(prow, ["name", "value"]))
    else:
        sys.stdout.write(render_csv(prow, ["name", "value"]) + "\n")
    _emit(args, "pvsa dist", table, {k: _jsonable(v) for k, v in params.items()}, stages, extra)
    if args.out is not None:
        print(f"m={nk.m:.6g} omega_pu2={nk.omega / vb**2:.6g} violation_probability={prob:.6g}")


def _jsonable(v):
    return v if isinstance(v, (str, int)) else float(v)


def cmd_pvsa_mc(args, stages):
    graph, loads, scenario, base, cov, obs, phase, mo, gp, nk = _fit(args, stages)
    vb = graph.v_base
    t = _threshold(args, scenario)
    with stages("monte_carlo"):
        res = mc_distribution(graph, loads, cov, obs, phase, args.samples, args.seed,
                              mode=args.mode, jobs=args.jobs, bins=args.bins, base=base)
    h: EmpiricalHistogram = res.histogram
    theo = bin_densities(nk, h.edges, vb)
    rows = [[lo, hi, e, d] for lo, hi, e, d in zip(h.edges[:-1], h.edges[1:], h.density, theo)]
    table = render_csv(rows, ["bin_lo", "bin_hi", "empirical_density", "theoretical_density"])
    js = fitted_js_distance(h, nk, vb)
    prob = violation_probability(nk, t, vb)
    exceed = float(np.mean(res.magnitudes > t))
    prow = _param_rows(obs, phase, mo, gp, nk, vb, t, prob) + [
        ("mode", args.mode), ("samples", args.samples), ("seed", args.seed),
        ("mc_exceedance", exceed), ("mc_var_r_v2", float(np.var(res.dv.real))),
        ("mc_var_i_v2", float(np.var(res.dv.imag))), ("js_distance", js),
    ]
    extra = []
    if args.out is not None:
        extra = [_params_path(args.out)]
        atomic_write(extra[0], render_csv(prow, ["name", "value"]))
    else:
        sys.stdout.write(render_csv(prow, ["name", "value"]) + "\n")
    params = {k: _jsonable(v) for k, v in prow}
    params["jobs"] = args.jobs
    _emit(args, "pvsa mc", table, params, stages, extra)
    if args.out is not None:
        print(f"js_distance={js:.6g} m={nk.m:.6g} samples={args.samples}")


def cmd_pvsa_violation(args, stages):
    graph, loads, scenario, base, cov, obs, phase, mo, gp, nk = _fit(args, stages)
    vb = graph.v_base
    t = _threshold(args, scenario)
    prob = violation_probability(nk, t, vb)
    row = [obs, phase, t, prob]
    cols = ["observation", "phase", "threshold_pu", "probability"]
    params = {"threshold_pu": t, "probability": prob}
    if args.samples > 0:
        with stages("monte_carlo"):
            res = mc_distribution(graph, loads, cov, obs, phase, args.samples, args.seed,
                                  mode=args.mode, jobs=args.jobs, base=base)
        exceed = float(np.mean(res.magnitudes > t))
        row += [exceed, args.samples, args.seed]
        cols += ["mc_exceedance", "samples", "seed"]
        params.update(mc_exceedance=exceed, samples=args.samples, seed=args.seed, mode=args.mode)
    _emit(args, "pvsa violation", render_csv([row], cols), params, stages)


def median_time(fn, repetitions: int = 11, warmups: int = 2, inner: int = 1) -> float:
    """Median seconds per call over ``repetitions`` timed batches of ``inner`` calls."""
    for _ in range(warmups):
        fn()
    times = []
    for _ in range(repetitions):
        t = time.perf_counter()
        for _ in range(inner):
            fn()
        times.append((time.perf_counter() - t) / inner)
    return statistics.median(times)


def bench(feeders=None, repetitions: int = 11, samples: int = 20_000, mc_repetitions: int = 3,
          seed: int = 0, jobs: int = 1) -> list:
    """Rows ``(case, method, seconds)`` of median timings per bundled feeder.

    * ``query``: one analytic observation query once the base case is solved
      and the shared-path impedances are cached.
    * ``solve``: one load-flow solve of the base case.
    * ``fit``: the whole distribution path (solve, covariance, vectors, fit).
    * ``mc``: oracle-mode Monte-Carlo with ``samples`` draws.
    """
    rows = []
    for name in feeders or sorted(BENCH_CASES):
        det_name, sto_name = BENCH_CASES[name]
        graph, loads = load_feeder(name)
        det, sto = load_scenario(det_name), load_scenario(sto_name)
        base = solve(graph, loads)
        actors = perturbations_from_scenario(det)
        obs = det.observation or sto.observation
        # short calls are timed in batches so the clock resolution does not matter
        rows.append((name, "query", median_time(lambda: delta_v_multi(graph, base, actors, obs), repetitions, inner=50)))
        rows.append((name, "solve", median_time(lambda: solve(graph, loads), repetitions, inner=5)))

        def fit():
            b = solve(graph, loads)
            cv = build_sensitivity_vectors(graph, b, sto.observation, sto.phase)
            return nakagami_params(gamma_params(moments(cv, assemble_covariance(graph, sto))))

        rows.append((name, "fit", median_time(fit, repetitions)))

        def mc():
            cov = assemble_covariance(graph, sto)
            return mc_distribution(graph, loads, cov, sto.observation, sto.phase, samples, seed, mode="oracle", jobs=jobs)

        rows.append((name, "mc", median_time(mc, mc_repetitions, warmups=1)))
    return rows


def cmd_bench(args, stages):
    if args.repetitions < 11:
        raise UsageError("--repetitions must be at least 11")
    with stages("bench"):
        rows = bench(args.feeder, args.repetitions, args.samples, args.mc_repetitions, args.seed, args.jobs)
    text = render_csv(rows, ["case", "method", "seconds"])
    params = {"repetitions": args.repetitions, "samples": args.samples, "mc_repetitions": args.mc_repetitions,
              "seed": args.seed, "jobs": args.jobs, "feeders": args.feeder or sorted(BENCH_CASES)}
    if args.out is None:
        sys.stdout.write(text)
    else:
        atomic_write(args.out, text)
        manifest = {"command": "bench", "version": __version__, "parameters": params,
                    "outputs": [str(args.out)], "timings_s": {k: round(v, 6) for k, v in stages.seconds.items()}}
        atomic_write(Path(str(args.out) + ".manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


COMMANDS = {
    ("validate", None): cmd_validate,
    ("solve", None): cmd_solve,
    ("vsa", "run"): cmd_vsa_run,
    ("vsa", "bound"): cmd_vsa_bound,
    ("pvsa", "dist"): cmd_pvsa_dist,
    ("pvsa", "mc"): cmd_pvsa_mc,
    ("pvsa", "violation"): cmd_pvsa_violation,
    ("bench", None): cmd_bench,
}


def run(argv=None) -> int:
    """Parse ``argv`` and execute; returns the process exit status."""
    try:
        args = build_parser().parse_args(argv)
        stages = Stages()
        COMMANDS[(args.command, getattr(args, "action", None))](args, stages)
        return EXIT_OK
    except UsageError as exc:
        code, category, err = EXIT_USAGE, "UsageError", exc
    except (InputError, OSError, UnicodeDecodeError) as exc:
        code, category, err = EXIT_INPUT, "InputError", exc
    except PVSAError as exc:
        code, category, err = EXIT_COMPUTE, "ComputeError", exc
    msg = " ".join(str(err).split()) or type(err).__name__
    kind = type(err).__name__
    prefix = category if kind == category else f"{category}: {kind}"
    print(f"{prefix}: {msg}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
