"""Acceptance suite: ten numbered checks covering the whole library.

Each criterion is a self-contained callable returning a result record; the
suite runner prints one PASS/FAIL line per criterion.  Checks that compare
two computational routes (dynamic programming vs enumeration, predicted
signs vs series flow) implement the second route inline here so the library
code under test is never its own oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .linflow import (
    monodromy,
    monotonicity_report,
    random_linear_system,
    sample_N_along,
    verify_cone_invariance,
)
from .model import builtin
from .orbits import (
    connect,
    difference_signature,
    estimate_period,
    find_equilibrium,
    find_periodic,
    integrate,
    transversality,
)
from .signature import (
    lyapunov_bounds,
    lyapunov_value,
    predict_crossing,
    value_ceiling,
)
from .spectra import reference_eigen, reference_matrix, split

__all__ = ["CriterionResult", "CRITERIA", "run_all", "demo_pipeline"]

GOODWIN_PARAMS = {"n": 3, "p": 10.0, "b": 0.4}
DEMO_OFFSET = 5e-5
DEMO_HORIZON = 900.0


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    ok: bool
    detail: str
    elapsed: float


@dataclass(frozen=True)
class DemoResult:
    system: object
    equilibrium: object
    orbit: object
    connection: object
    report: object
    elapsed: float


_demo_cache: list = []


def demo_pipeline(fresh: bool = False) -> DemoResult:
    """Equilibrium, orbit, connection, and certificate for the shipped model."""
    if _demo_cache and not fresh:
        return _demo_cache[0]
    start = time.perf_counter()
    system = builtin("goodwin", GOODWIN_PARAMS)
    equilibrium = find_equilibrium(system, np.full(3, 1.0))
    settle = integrate(system, np.array([0.2, 0.3, 1.8]), 0.0, 400.0)
    point, period_guess = estimate_period(system, settle.states[-1], 40.0)
    orbit = find_periodic(system, point, period_guess)
    connection = connect(
        system, equilibrium, orbit, offset=DEMO_OFFSET, horizon=DEMO_HORIZON
    )
    certificate = transversality(system, equilibrium, orbit, connection)
    result = DemoResult(
        system=system,
        equilibrium=equilibrium,
        orbit=orbit,
        connection=connection,
        report=certificate,
        elapsed=time.perf_counter() - start,
    )
    _demo_cache.clear()
    _demo_cache.append(result)
    return result


def _criterion_1() -> str:
    """Count parity and range over random fully-nonzero points."""
    deadline = 1.0
    start = time.perf_counter()
    total = 0
    for n in range(3, 13):
        rng = np.random.default_rng(100 + n)
        pts = rng.uniform(-1.0, 1.0, size=(10_000, n))
        values = lyapunov_value(pts)
        ceiling = value_ceiling(n)
        if not np.all(values % 2 == 1):
            raise AssertionError(f"even count produced at n={n}")
        if not (np.all(values >= 1) and np.all(values <= ceiling)):
            raise AssertionError(f"count out of [1, {ceiling}] at n={n}")
        total += values.size
    elapsed = time.perf_counter() - start
    if elapsed >= deadline:
        raise AssertionError(f"took {elapsed:.2f}s, budget {deadline}s")
    return f"{total} points, n=3..12, all odd within range, {elapsed:.2f}s"


def _enumerated_bounds(x: np.ndarray) -> tuple[int, int]:
    """Envelope by explicit enumeration of every completion of the zeros."""
    signs = np.sign(x).astype(int)
    zero_idx = np.flatnonzero(signs == 0)
    z = zero_idx.size
    completions = np.repeat(signs[None, :], 2**z, axis=0)
    if z:
        bits = (np.arange(2**z)[:, None] >> np.arange(z)[None, :]) & 1
        completions[:, zero_idx] = 2 * bits - 1
    prod = completions * np.roll(completions, 1, axis=1)
    prod[:, 0] *= -1
    counts = np.sum(prod < 0, axis=1)
    return int(counts.min()), int(counts.max())


def _criterion_2() -> str:
    """Dynamic-programming envelope equals brute-force enumeration."""
    deadline = 5.0
    start = time.perf_counter()
    rng = np.random.default_rng(22)
    checked = 0
    for _ in range(1000):
        n = int(rng.integers(3, 15))
        z = int(rng.integers(0, min(n, 12) + 1))
        x = rng.uniform(0.2, 2.0, n) * rng.choice([-1.0, 1.0], n)
        x[rng.permutation(n)[:z]] = 0.0
        bounds = lyapunov_bounds(x)
        expected = _enumerated_bounds(x)
        if (bounds.lower, bounds.upper) != expected:
            raise AssertionError(f"mismatch at x={x!r}: {bounds} vs {expected}")
        checked += 1
    elapsed = time.perf_counter() - start
    if elapsed >= deadline:
        raise AssertionError(f"took {elapsed:.2f}s, budget {deadline}s")
    return f"{checked} vectors, z<=12 zeros, DP == enumeration, {elapsed:.2f}s"


def _criterion_3() -> str:
    """Closed-form reference eigensystem against numerics."""
    worst_eig = 0.0
    worst_res = 0.0
    for n in range(3, 13):
        matrix = reference_matrix(n)
        numeric = np.linalg.eigvals(matrix)
        for lam, eta in reference_eigen(n):
            dist = np.min(np.abs(numeric - lam)) / max(1.0, abs(lam))
            worst_eig = max(worst_eig, float(dist))
            residual = np.linalg.norm(matrix @ eta - lam * eta)
            worst_res = max(worst_res, float(residual))
    if worst_eig > 1e-10:
        raise AssertionError(f"eigenvalue error {worst_eig:.3e} > 1e-10")
    if worst_res > 1e-12:
        raise AssertionError(f"residual {worst_res:.3e} > 1e-12")
    return f"n=3..12, eig err {worst_eig:.2e} <= 1e-10, residual {worst_res:.2e} <= 1e-12"


def _criterion_4() -> str:
    """No increase of the count along 100 random periodic linear flows."""
    deadline = 60.0
    start = time.perf_counter()
    grid = np.linspace(-20.0, 20.0, 500)
    for i in range(100):
        n = 3 + (i % 6)
        system = random_linear_system(n, seed=4000 + i)
        rng = np.random.default_rng(9000 + i)
        x0 = rng.uniform(-1.0, 1.0, n)
        samples = sample_N_along(system, x0, grid)
        outcome = monotonicity_report(samples)
        if not outcome.ok:
            raise AssertionError(f"increase at system {i}: {outcome.violation}")
    elapsed = time.perf_counter() - start
    if elapsed >= deadline:
        raise AssertionError(f"took {elapsed:.1f}s, budget {deadline}s")
    return f"100 systems x 500 grid points, zero increases, {elapsed:.1f}s"


def _criterion_5() -> str:
    """Cone invariance across every level, three horizons each."""
    checked = 0
    for n in range(3, 9):
        top = (value_ceiling(n) + 1) // 2
        for h in range(1, top + 1):
            system = random_linear_system(n, seed=5000 + 17 * n + h)
            for t in (0.1, 1.0, 5.0):
                outcome = verify_cone_invariance(
                    system, h, t, samples=1000, seed=300 * n + 10 * h + int(t * 2)
                )
                if not outcome.ok:
                    raise AssertionError(
                        f"violation at n={n} h={h} t={t}: {outcome.violations[:1]}"
                    )
                checked += outcome.samples_checked
    return f"n=3..8, all levels, t in {{0.1,1,5}}, {checked} images inside, zero violations"


def _series_flow(matrix: np.ndarray, x0: np.ndarray, t: float, terms: int = 24) -> np.ndarray:
    """Exact constant-coefficient flow via the truncated exponential series.

    Adaptive-step integration cannot be the oracle here: components born
    from zero coordinates start at magnitude ~t^m and sit far below any
    practical absolute tolerance.  The series keeps them exact because every
    term below the leading power vanishes identically.
    """
    term = x0.astype(float).copy()
    acc = term.copy()
    for k in range(1, terms):
        term = (t / k) * (matrix @ term)
        acc = acc + term
    return acc


def _criterion_6() -> str:
    """Predicted crossing signs match the integrated flow at t = ±1e-4."""
    t_small = 1e-4
    cases = 0
    for i in range(100):
        rng = np.random.default_rng(6000 + i)
        n = 3 + (i % 6)
        matrix = np.zeros((n, n))
        np.fill_diagonal(matrix, rng.uniform(-0.5, 0.5, n))
        for row in range(1, n):
            matrix[row, row - 1] = rng.uniform(0.5, 1.5)
        matrix[0, n - 1] = -rng.uniform(0.5, 1.5)
        x0 = rng.uniform(0.2, 1.5, n) * rng.choice([-1.0, 1.0], n)
        z = int(rng.integers(1, n))
        zero_at = rng.permutation(n)[:z]
        x0[zero_at] = 0.0
        prediction = predict_crossing(matrix, x0)
        bounds = lyapunov_bounds(x0)
        if prediction.count_forward != bounds.lower:
            raise AssertionError(f"case {i}: forward count != lower envelope")
        if prediction.count_backward != bounds.upper:
            raise AssertionError(f"case {i}: backward count != upper envelope")
        for t, predicted in (
            (t_small, prediction.signs_forward),
            (-t_small, prediction.signs_backward),
        ):
            state = _series_flow(matrix, x0, t)
            observed = np.sign(state).astype(int)
            for j in range(n):
                if x0[j] != 0.0:
                    if observed[j] != int(np.sign(x0[j])):
                        raise AssertionError(f"case {i}: nonzero sign moved at {j}")
                elif observed[j] != predicted[j]:
                    raise AssertionError(
                        f"case {i}: predicted {predicted[j]} at index {j}, "
                        f"flow gave {observed[j]} (t={t})"
                    )
        cases += 1
    return f"{cases} random (matrix, point-with-zeros) cases, both directions, zero mismatches"


def _criterion_7() -> str:
    """Splitting of random monodromy matrices: gaps and block counts."""
    worst_gap = math.inf
    total = 0
    for n in range(3, 9):
        for i in range(50):
            system = random_linear_system(n, seed=7000 + 100 * n + i)
            decomposition = split(monodromy(system).value, n=n)
            worst_gap = min(worst_gap, min(decomposition.gaps, default=math.inf))
            if any(g <= 1.0 + 1e-6 for g in decomposition.gaps):
                raise AssertionError(f"gap ratio <= 1+1e-6 at n={n} seed {i}")
            rng = np.random.default_rng(40_000 + 100 * n + i)
            for level, block in enumerate(decomposition.blocks, start=1):
                for _ in range(10):
                    vec = block @ rng.normal(size=block.shape[1])
                    value = lyapunov_value(vec / np.max(np.abs(vec)))
                    if value != 2 * level - 1:
                        raise AssertionError(
                            f"block {level} vector has count {value} at n={n} seed {i}"
                        )
            total += 1
    return f"300 monodromies (n=3..8), min gap ratio {worst_gap:.3e} > 1+1e-6, block counts exact"


def _criterion_8() -> str:
    """Trivial Floquet multiplier of the shipped oscillator."""
    demo = demo_pipeline()
    orbit = demo.orbit
    error = orbit.trivial_multiplier_error
    if error > 1e-6:
        raise AssertionError(f"trivial multiplier off by {error:.3e} > 1e-6")
    values, vectors = np.linalg.eig(orbit.monodromy.value)
    direction = vectors[:, int(np.argmin(np.abs(values - 1.0)))].real
    direction /= np.linalg.norm(direction)
    flow = np.asarray(demo.system.f(orbit.base_point), dtype=float)
    flow /= np.linalg.norm(flow)
    angle = math.acos(min(1.0, abs(float(direction @ flow))))
    if angle > 1e-4:
        raise AssertionError(f"eigendirection misaligned by {angle:.3e} rad > 1e-4")
    return f"|multiplier - 1| = {error:.2e} <= 1e-6, alignment {angle:.2e} rad <= 1e-4"


def _demo_cloud(demo: DemoResult) -> np.ndarray:
    """Point cloud spanning source, connection, and target, thinned to 1e-3."""
    pts = [demo.equilibrium.point]
    pts.extend(demo.orbit.samples.states[:-1:4])
    record = demo.connection.approach
    mask = (record.to_source > 1e-3) & (record.to_target > 1e-3)
    kept: list[np.ndarray] = []
    for state in demo.connection.states[mask]:
        if all(np.linalg.norm(state - q) >= 1e-3 for q in kept):
            kept.append(state)
    pts.extend(kept)
    return np.array(pts)


def _criterion_9() -> str:
    """Differences across the demo's limit sets all carry the same count."""
    demo = demo_pipeline()
    if demo.report.h_plus != 1 or demo.report.h_minus != 1:
        raise AssertionError("demo connection indices are not both 1")
    cloud = _demo_cloud(demo)
    outcome = difference_signature(cloud, h=1, pairs=1000, seed=9)
    if not outcome.ok:
        raise AssertionError(
            f"{len(outcome.violations)} pairs off target, first: {outcome.violations[0]}"
        )
    return (
        f"{cloud.shape[0]} points, {outcome.pairs_checked} random pairs, "
        f"all exact with count {outcome.expected}"
    )


def _criterion_10() -> str:
    """End-to-end transversality demo within the time budget."""
    deadline = 120.0
    demo = demo_pipeline(fresh=True)
    eq = demo.equilibrium
    if eq.unstable_dim != 2 or not eq.hyperbolic:
        raise AssertionError(f"equilibrium classification off: dim {eq.unstable_dim}")
    others = np.sort(np.abs(demo.orbit.multipliers))[:-1]
    if not np.all(others < 1.0):
        raise AssertionError("orbit is not stable: nontrivial multiplier outside the disk")
    rep = demo.report
    if rep.verdict != "transversal":
        raise AssertionError(f"verdict {rep.verdict!r}, sigma_min {rep.sigma_min:.3e}")
    if rep.sigma_min <= 1e-3:
        raise AssertionError(f"sigma_min {rep.sigma_min:.3e} <= 1e-3")
    if demo.elapsed >= deadline:
        raise AssertionError(f"pipeline took {demo.elapsed:.1f}s, budget {deadline}s")
    return (
        f"unstable_dim 2, stable orbit, connected, verdict transversal, "
        f"sigma_min {rep.sigma_min:.3f}, {demo.elapsed:.1f}s"
    )


CRITERIA: list[tuple[int, str, callable]] = [
    (1, "count parity and range", _criterion_1),
    (2, "envelope vs enumeration", _criterion_2),
    (3, "reference eigensystem", _criterion_3),
    (4, "count monotonicity along flows", _criterion_4),
    (5, "cone invariance", _criterion_5),
    (6, "crossing predictor vs flow", _criterion_6),
    (7, "spectral splitting of monodromies", _criterion_7),
    (8, "trivial Floquet multiplier", _criterion_8),
    (9, "difference signature on the demo sets", _criterion_9),
    (10, "transversality demo", _criterion_10),
]


def run_all(only=None, stream=None) -> list[CriterionResult]:
    """Run the numbered criteria, print one PASS/FAIL line for each."""
    results = []
    for number, title, check in CRITERIA:
        if only is not None and number not in only:
            continue
        start = time.perf_counter()
        try:
            detail = check()
            ok = True
        except Exception as exc:  # report, never crash the suite
            detail = f"{type(exc).__name__}: {exc}"
            ok = False
        elapsed = time.perf_counter() - start
        result = CriterionResult(number, title, ok, detail, elapsed)
        results.append(result)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} -- {detail}"
        if stream is not None:
            print(line, file=stream, flush=True)
        else:
            print(line, flush=True)
    return results
