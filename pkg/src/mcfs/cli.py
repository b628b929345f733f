"""Command-line front end.

Each subcommand runs one library pipeline and writes its results under the
chosen output directory: a JSON report with deterministic bytes (timestamps
live in a separate meta object), CSV series for anything tabular, and
rendered figures next to them unless disabled.

Exit codes: 0 success, 1 property violated (a witness file names the
offenders), 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import acceptance, report
from .errors import InvalidInputError, McfsError, NotConnectedError
from .linflow import (
    LinearCyclicSystem,
    monodromy,
    monotonicity_report,
    random_linear_system,
    sample_N_along,
    transition,
    verify_cone_invariance,
)
from .model import CyclicSystem, builtin, load_model
from .orbits import (
    connect,
    estimate_period,
    find_equilibrium,
    find_periodic,
    integrate,
    transversality,
)
from .signature import lyapunov_bounds, predict_crossing
from .spectra import reference_matrix, split

__all__ = ["main"]


def _thread_cap() -> int:
    raw = os.environ.get("MCFS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(part) for part in text.split(",") if part.strip()])
    except ValueError:
        raise InvalidInputError(f"cannot parse vector {text!r}") from None


def _load_system(args) -> CyclicSystem:
    if getattr(args, "model", None):
        return load_model(args.model)
    name = getattr(args, "builtin", None) or "goodwin"
    params = json.loads(getattr(args, "params", None) or "{}")
    if name == "goodwin" and not params:
        params = dict(acceptance.GOODWIN_PARAMS)
    return builtin(name, params)


def _load_linear(args, n: int, seed: int) -> LinearCyclicSystem:
    if getattr(args, "linear", None):
        with open(args.linear) as handle:
            return LinearCyclicSystem.from_payload(json.load(handle))
    if getattr(args, "reference", None):
        return LinearCyclicSystem.constant(reference_matrix(args.reference))
    return random_linear_system(n, seed)


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, name: str, payload: dict) -> None:
    out = _out_dir(args)
    if out is not None:
        report.write_json(out / name, payload)


def _figures_enabled(args) -> bool:
    return args.out is not None and not args.no_figures


def _trajectory_csv(out: Path, name: str, traj) -> None:
    header = ["t"] + [f"x{i + 1}" for i in range(traj.states.shape[1])]
    rows = [(t, *state) for t, state in zip(traj.times, traj.states)]
    report.write_csv(out / name, header, rows)


def _cmd_simulate(args) -> int:
    system = _load_system(args)
    x0 = _parse_vector(args.x0)
    grid = np.linspace(args.t0, args.t1, args.samples)
    traj = integrate(system, x0, args.t0, args.t1, tol=args.tol, t_eval=grid)
    data = {
        "model": system.name,
        "end_state": traj.states[-1],
        "coordinate_min": traj.states.min(axis=0),
        "coordinate_max": traj.states.max(axis=0),
    }
    payload = report.wrap_report(
        "simulate",
        {"x0": x0, "t0": args.t0, "t1": args.t1, "samples": args.samples, "tol": args.tol},
        data,
    )
    out = _out_dir(args)
    if out is not None:
        report.write_json(out / "simulate.json", payload)
        _trajectory_csv(out, "trajectory.csv", traj)
        if _figures_enabled(args):
            from . import figures

            figures.fig_trajectory(traj.times, traj.states, out / "trajectory.png")
    print(f"simulated {system.name} over [{args.t0}, {args.t1}]; end state "
          + ",".join(report.format_float(v) for v in traj.states[-1]))
    return 0


def _cmd_lyapunov(args) -> int:
    x = _parse_vector(args.x)
    bounds = lyapunov_bounds(x)
    if bounds.exact:
        print(f"N={bounds.lower}")
    else:
        print(f"N_min={bounds.lower} N_max={bounds.upper}")
    data: dict = {"lower": bounds.lower, "upper": bounds.upper, "exact": bounds.exact}
    if args.matrix:
        with open(args.matrix) as handle:
            matrix = np.asarray(json.load(handle)["matrix"], dtype=float)
        prediction = predict_crossing(matrix, x)
        data["crossing"] = {
            "zero_segments": [list(seg) for seg in prediction.zero_segments],
            "signs_forward": prediction.signs_forward,
            "signs_backward": prediction.signs_backward,
            "count_forward": prediction.count_forward,
            "count_backward": prediction.count_backward,
            "dominant_terms": {
                str(j): {"exponent": m, "coefficient": c}
                for j, (m, c) in prediction.dominant_terms.items()
            },
        }
        print(
            f"crossing: forward N={prediction.count_forward}, "
            f"backward N={prediction.count_backward}"
        )
    _emit(args, "lyapunov.json", report.wrap_report("lyapunov", {"x": x}, data))
    return 0


def _split_payload(decomposition) -> dict:
    return {
        "levels": decomposition.levels,
        "block_dims": [b.shape[1] for b in decomposition.blocks],
        "moduli": [list(pair) for pair in decomposition.moduli],
        "gaps": list(decomposition.gaps),
        "eigenvalues": decomposition.eigenvalues,
        "blocks": decomposition.blocks,
    }


def _cmd_split(args) -> int:
    system = _load_linear(args, n=args.n, seed=args.seed)
    phi = transition(system, 0.0, args.t, tol=args.tol)
    decomposition = split(phi.value, n=system.n)
    moduli = ", ".join(
        f"[{report.format_float(mu)}, {report.format_float(nu)}]"
        for nu, mu in decomposition.moduli
    )
    print(f"{decomposition.levels} blocks; modulus ranges {moduli}")
    payload = report.wrap_report(
        "split",
        {"t": args.t, "n": system.n, "seed": args.seed,
         "source": args.linear or ("reference" if args.reference else "random")},
        {"abel_residual": phi.abel_residual, **_split_payload(decomposition)},
    )
    out = _out_dir(args)
    if out is not None:
        report.write_json(out / "split.json", payload)
        if _figures_enabled(args):
            from . import figures

            figures.fig_split_moduli(decomposition, out / "split_moduli.png")
    return 0


def _cmd_verify_cones(args) -> int:
    system = _load_linear(args, n=args.n, seed=args.seed)
    outcome = verify_cone_invariance(
        system, args.h, args.t, samples=args.samples, seed=args.seed
    )
    status = "ok" if outcome.ok else f"{len(outcome.violations)} violations"
    print(
        f"cone level {args.h}, t={args.t}: {outcome.samples_checked} images, {status}"
        + (" (sampling starved)" if outcome.starved else "")
    )
    payload = report.wrap_report(
        "verify-cones",
        {"n": args.n, "h": args.h, "t": args.t, "samples": args.samples, "seed": args.seed},
        {
            "ok": outcome.ok,
            "samples_checked": outcome.samples_checked,
            "starved": outcome.starved,
            "violation_count": len(outcome.violations),
        },
    )
    _emit(args, "verify_cones.json", payload)
    if not outcome.ok:
        witness = [
            {"start": x0, "image": image, "bounds": list(bounds)}
            for x0, image, bounds in outcome.violations[:50]
        ]
        _emit(args, "cones_witness.json", report.wrap_report(
            "verify-cones-witness", {"h": args.h, "t": args.t}, witness
        ))
        return 1
    return 0


def _monotone_single(task) -> dict:
    index, n, seed_sys, seed_x0, grid = task
    system = random_linear_system(n, seed_sys)
    rng = np.random.default_rng(seed_x0)
    x0 = rng.uniform(-1.0, 1.0, n)
    samples = sample_N_along(system, x0, grid)
    outcome = monotonicity_report(samples)
    return {
        "index": index,
        "n": n,
        "ok": outcome.ok,
        "settled": outcome.settled,
        "exact_fraction": outcome.exact_fraction,
        "violation": outcome.violation,
        "series": [(t, b.lower, b.upper) for t, b in samples],
    }


def _cmd_verify_monotone(args) -> int:
    grid = np.linspace(args.t_min, args.t_max, args.grid)
    tasks = [
        (i, args.n_min + (i % (args.n_max - args.n_min + 1)),
         args.seed + 4000 + i, args.seed + 9000 + i, grid)
        for i in range(args.systems)
    ]
    cap = _thread_cap()
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            rows = list(pool.map(_monotone_single, tasks))
    else:
        rows = [_monotone_single(task) for task in tasks]
    bad = [row for row in rows if not row["ok"]]
    print(
        f"{len(rows)} systems on [{args.t_min}, {args.t_max}]: "
        + ("all monotone" if not bad else f"{len(bad)} violations")
    )
    payload = report.wrap_report(
        "verify-monotone",
        {"systems": args.systems, "grid": args.grid,
         "t_min": args.t_min, "t_max": args.t_max, "seed": args.seed},
        {
            "ok": not bad,
            "violations": [row["index"] for row in bad],
            "exact_fraction_min": min(row["exact_fraction"] for row in rows),
        },
    )
    out = _out_dir(args)
    if out is not None:
        report.write_json(out / "verify_monotone.json", payload)
        shown = bad[0] if bad else rows[0]
        report.write_csv(
            out / "count_series.csv",
            ["t", "lower", "upper"],
            shown["series"],
        )
        if _figures_enabled(args):
            from . import figures
            from .signature import LyapunovBounds

            series = [(t, LyapunovBounds(int(lo), int(hi))) for t, lo, hi in shown["series"]]
            figures.fig_count_steps(series, out / "count_steps.png")
    if bad:
        _emit(args, "monotone_witness.json", report.wrap_report(
            "verify-monotone-witness", {"seed": args.seed},
            [{"index": row["index"], "n": row["n"], "violation": row["violation"]}
             for row in bad],
        ))
        return 1
    return 0


def _orbit_pipeline(args):
    system = _load_system(args)
    x0 = _parse_vector(args.x0)
    settle = integrate(system, x0, 0.0, args.settle)
    point, period_guess = estimate_period(system, settle.states[-1], args.search)
    orbit = find_periodic(system, point, period_guess)
    return system, orbit


def _cmd_floquet(args) -> int:
    system, orbit = _orbit_pipeline(args)
    moduli = np.sort(np.abs(orbit.multipliers))[::-1]
    print(
        f"period {report.format_float(orbit.period)}; multiplier moduli "
        + ", ".join(report.format_float(m) for m in moduli)
    )
    print(f"trivial multiplier error {report.format_float(orbit.trivial_multiplier_error)}; "
          f"hyperbolic: {orbit.hyperbolic}")
    data = {
        "period": orbit.period,
        "base_point": orbit.base_point,
        "multipliers": orbit.multipliers,
        "trivial_multiplier_error": orbit.trivial_multiplier_error,
        "hyperbolic": orbit.hyperbolic,
        "trivial_level": orbit.trivial_level,
        "abel_residual": orbit.monodromy.abel_residual,
        "split": _split_payload(orbit.split),
    }
    payload = report.wrap_report(
        "floquet",
        {"model": system.name, "x0": _parse_vector(args.x0),
         "settle": args.settle, "search": args.search},
        data,
    )
    out = _out_dir(args)
    if out is not None:
        report.write_json(out / "floquet.json", payload)
        archive = {
            "base_point": orbit.base_point,
            "period": orbit.period,
            "samples": {"times": orbit.samples.times, "states": orbit.samples.states},
        }
        report.write_json(out / "orbit.json", archive)
        _trajectory_csv(out, "orbit.csv", orbit.samples)
        if _figures_enabled(args):
            from . import figures

            figures.fig_multipliers(orbit.multipliers, out / "multipliers.png")
            figures.fig_trajectory(
                orbit.samples.times, orbit.samples.states, out / "orbit.png",
                title="periodic orbit",
            )
    return 0


def _cmd_transversality(args) -> int:
    system, orbit = _orbit_pipeline(args)
    equilibrium = find_equilibrium(system, _parse_vector(args.guess))
    try:
        conn = connect(
            system, equilibrium, orbit, offset=args.offset, horizon=args.horizon
        )
    except NotConnectedError as exc:
        print(f"not connected: {exc}", file=sys.stderr)
        out = _out_dir(args)
        if out is not None and exc.trajectory is not None:
            _trajectory_csv(out, "connection.csv", exc.trajectory)
            _emit(args, "transversality_witness.json", report.wrap_report(
                "transversality-witness",
                {"offset": args.offset, "horizon": args.horizon},
                {"approach": exc.trajectory.approach, "reason": str(exc)},
            ))
        return exc.exit_code
    outcome = transversality(system, equilibrium, orbit, conn)
    print(
        f"verdict: {outcome.verdict}; rank {outcome.stacked_rank}; "
        f"sigma_min {report.format_float(outcome.sigma_min)}"
    )
    for note in outcome.notes:
        print(f"note: {note}")
    payload = report.wrap_report(
        "transversality",
        {"model": system.name, "offset": args.offset, "horizon": args.horizon,
         "guess": _parse_vector(args.guess)},
        outcome,
    )
    out = _out_dir(args)
    if out is not None:
        report.write_json(out / "transversality.json", payload)
        _trajectory_csv(out, "connection.csv", conn)
        if _figures_enabled(args):
            from . import figures

            figures.fig_transversality(outcome, out / "transversality.png")
            figures.fig_trajectory(conn.times, conn.states, out / "connection.png",
                                   title="connecting trajectory")
    if outcome.verdict == "transversal":
        return 0
    if outcome.verdict == "inconclusive":
        return 3
    return 1


def _cmd_selftest(args) -> int:
    only = None
    if args.only is not None:
        only = [int(part) for part in args.only.split(",") if part.strip()]
    results = acceptance.run_all(only=only)
    payload = report.wrap_report(
        "selftest",
        {"only": only},
        [
            {"number": r.number, "title": r.title, "ok": r.ok,
             "detail": r.detail, "elapsed": r.elapsed}
            for r in results
        ],
    )
    _emit(args, "selftest.json", payload)
    return 0 if results and all(r.ok for r in results) else 1


def _add_common(sub, with_seed: bool = True) -> None:
    sub.add_argument("--out", default=None, help="directory for reports, CSV, figures")
    sub.add_argument("--config", default=None, help="JSON file with option defaults")
    sub.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    if with_seed:
        sub.add_argument("--seed", type=int, default=0)


def _add_model_options(sub, default_x0: str | None = None) -> None:
    sub.add_argument("--model", default=None, help="JSON model description file")
    sub.add_argument("--builtin", default=None, help="builtin model name")
    sub.add_argument("--params", default=None, help="JSON string of builtin parameters")
    if default_x0 is not None:
        sub.add_argument("--x0", default=default_x0, help="comma-separated start state")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcfs",
        description="cyclic feedback systems: sign counts, cones, splittings, transversality",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="integrate a model and export the trajectory")
    _add_model_options(sim, default_x0="0.2,0.3,1.8")
    sim.add_argument("--t0", type=float, default=0.0)
    sim.add_argument("--t1", type=float, required=True)
    sim.add_argument("--samples", type=int, default=1000)
    sim.add_argument("--tol", type=float, default=1e-8)
    _add_common(sim)
    sim.set_defaults(handler=_cmd_simulate)

    lya = commands.add_parser("lyapunov", help="sign count and envelope of a vector")
    lya.add_argument("--x", required=True, help="comma-separated coordinates")
    lya.add_argument("--matrix", default=None,
                     help="JSON file with a constant matrix for crossing prediction")
    _add_common(lya, with_seed=False)
    lya.set_defaults(handler=_cmd_lyapunov)

    spl = commands.add_parser("split", help="modulus splitting of a transition matrix")
    spl.add_argument("--reference", type=int, default=None,
                     help="use the closed-form reference system of this dimension")
    spl.add_argument("--linear", default=None, help="JSON linear-system payload")
    spl.add_argument("--n", type=int, default=5, help="dimension for a random system")
    spl.add_argument("--t", type=float, default=1.0)
    spl.add_argument("--tol", type=float, default=1e-10)
    _add_common(spl)
    spl.set_defaults(handler=_cmd_split)

    cones = commands.add_parser("verify-cones", help="cone invariance by sampling")
    cones.add_argument("--linear", default=None, help="JSON linear-system payload")
    cones.add_argument("--reference", type=int, default=None)
    cones.add_argument("--n", type=int, default=5)
    cones.add_argument("--h", type=int, default=1)
    cones.add_argument("--t", type=float, default=1.0)
    cones.add_argument("--samples", type=int, default=1000)
    _add_common(cones)
    cones.set_defaults(handler=_cmd_verify_cones)

    mono = commands.add_parser("verify-monotone", help="count monotonicity along flows")
    mono.add_argument("--systems", type=int, default=100)
    mono.add_argument("--n-min", type=int, default=3)
    mono.add_argument("--n-max", type=int, default=8)
    mono.add_argument("--grid", type=int, default=500)
    mono.add_argument("--t-min", type=float, default=-20.0)
    mono.add_argument("--t-max", type=float, default=20.0)
    _add_common(mono)
    mono.set_defaults(handler=_cmd_verify_monotone)

    flo = commands.add_parser("floquet", help="locate a periodic orbit and its multipliers")
    _add_model_options(flo, default_x0="0.2,0.3,1.8")
    flo.add_argument("--settle", type=float, default=400.0)
    flo.add_argument("--search", type=float, default=40.0)
    _add_common(flo)
    flo.set_defaults(handler=_cmd_floquet)

    trans = commands.add_parser(
        "transversality", help="connect an equilibrium to an orbit and certify"
    )
    _add_model_options(trans, default_x0="0.2,0.3,1.8")
    trans.add_argument("--guess", default="1,1,1", help="equilibrium search start")
    trans.add_argument("--settle", type=float, default=400.0)
    trans.add_argument("--search", type=float, default=40.0)
    trans.add_argument("--offset", type=float, default=5e-5)
    trans.add_argument("--horizon", type=float, default=900.0)
    _add_common(trans)
    trans.set_defaults(handler=_cmd_transversality)

    self_test = commands.add_parser("selftest", help="run the acceptance criteria")
    self_test.add_argument("--only", default=None, help="comma-separated criterion numbers")
    _add_common(self_test)
    self_test.set_defaults(handler=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        config_path = argv[argv.index("--config") + 1]
        try:
            with open(config_path) as handle:
                overrides = {
                    key.replace("-", "_"): value
                    for key, value in json.load(handle).items()
                }
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {config_path}: {exc}", file=sys.stderr)
            return 2
        for action in parser._subparsers._group_actions[0].choices.values():
            action.set_defaults(**overrides)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except McfsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # defensive: anything unclassified is numerical
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
