"""Nonlinear layer: trajectories, critical elements, and transversality.

Locates equilibria and periodic orbits of cyclic feedback systems,
classifies them through their linearizations, extracts the index that ties
a trajectory's velocity sign count to a spectral block, builds connecting
orbits, and certifies numerically that the unstable manifold of the source
meets the stable manifold of the target transversally.

Tangent bases are anchored on the critical elements themselves and carried
to a midpoint of the connection by integrating the linearization along it;
the anchoring error is proportional to how far the connection ends sit from
the invariant sets and is reported, never hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import (
    DegeneracyError,
    DivergenceError,
    InconclusiveError,
    InvalidInputError,
    NotConnectedError,
    NotFoundError,
    NumericalError,
)
from .linflow import (
    LinearCyclicSystem,
    TransitionMatrix,
    monodromy,
    propagate_subspace,
    validate_linear,
)
from .model import CyclicSystem
from .signature import lyapunov_bounds, sign_pattern
from .spectra import SpectralSplit, split

__all__ = [
    "TAU_NEWTON",
    "TAU_PO",
    "TAU_HYP",
    "TAU_TRIV",
    "TAU_CONN",
    "TAU_TRANS",
    "Trajectory",
    "ApproachRecord",
    "Equilibrium",
    "PeriodicOrbit",
    "DifferenceReport",
    "TransversalityReport",
    "integrate",
    "find_equilibrium",
    "find_periodic",
    "rebase_periodic",
    "estimate_period",
    "linearization_along",
    "h_index",
    "difference_signature",
    "connect",
    "transversality",
]

TAU_NEWTON = 1e-10
TAU_PO = 1e-8
TAU_HYP = 1e-6
TAU_TRIV = 1e-6
TAU_CONN = 1e-5
TAU_TRANS = 1e-3

BLOWUP_NORM = 1e12


@dataclass(frozen=True)
class ApproachRecord:
    """Distances from a trajectory to the source and target sets over time."""

    times: np.ndarray
    to_source: np.ndarray
    to_target: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution with a dense interpolant between the samples."""

    times: np.ndarray
    states: np.ndarray
    _sol: object = field(default=None, repr=False, compare=False)
    _sol_offset: float = field(default=0.0, repr=False, compare=False)
    approach: ApproachRecord | None = field(default=None, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if times.ndim != 1 or states.shape[0] != times.shape[0]:
            raise InvalidInputError("times and states must have matching leading length")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise InvalidInputError("times must be strictly increasing")
        if not np.all(np.isfinite(states)):
            raise InvalidInputError("states must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def at(self, t):
        """Evaluate the interpolant; falls back to nearest sample without one."""
        if self._sol is None:
            idx = np.argmin(np.abs(self.times - np.atleast_1d(t)[:, None]), axis=1)
            out = self.states[idx]
            return out[0] if np.isscalar(t) else out
        raw = self._sol(np.asarray(t, dtype=float) + self._sol_offset)
        return raw if np.isscalar(t) else raw.T

    def shifted(self, offset: float) -> "Trajectory":
        """The same curve with all times translated by ``offset``."""
        return replace(
            self,
            times=self.times + offset,
            _sol_offset=self._sol_offset - offset,
        )


def integrate(
    sys: CyclicSystem,
    x0,
    t0: float,
    t1: float,
    tol: float = 1e-8,
    atol: float | None = None,
    t_eval=None,
) -> Trajectory:
    """Solve the system from x0 over [t0, t1] (either direction).

    Keeps a dense interpolant for later evaluation.  Trajectories exceeding
    sup norm 1e12 terminate with a divergence error; integrator breakdown
    surfaces as a numerical failure.
    """
    if atol is None:
        atol = tol * 1e-2
    x0 = np.asarray(x0, dtype=float)

    def rhs(t, y):
        return np.asarray(sys.f(y), dtype=float)

    def blowup(t, y):
        return float(np.max(np.abs(y)) - BLOWUP_NORM)

    blowup.terminal = True
    blowup.direction = 1

    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if t1 < t0:
            t_eval = np.sort(t_eval)[::-1]
    result = solve_ivp(
        rhs,
        (t0, t1),
        x0,
        method="RK45",
        rtol=tol,
        atol=atol,
        dense_output=True,
        t_eval=t_eval,
        events=blowup,
    )
    if result.status == 1:
        raise DivergenceError(
            f"trajectory left the ball of sup norm {BLOWUP_NORM:.0e} "
            f"at t = {result.t_events[0][0]:.6g}"
        )
    if not result.success:
        raise NumericalError(f"integration failed: {result.message}")
    times = result.t
    states = result.y.T
    if times.size > 1 and times[0] > times[-1]:
        times = times[::-1]
        states = states[::-1]
    return Trajectory(times=times.copy(), states=states.copy(), _sol=result.sol)


@dataclass(frozen=True)
class Equilibrium:
    """A rest point with its linear classification."""

    point: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    unstable_dim: int
    hyperbolic: bool
    split: SpectralSplit | None
    residual: float


def find_equilibrium(
    sys: CyclicSystem,
    guess,
    tol: float = TAU_NEWTON,
    max_iter: int = 100,
) -> Equilibrium:
    """Damped Newton iteration on the velocity field.

    The returned record carries the spectrum of the Jacobian, the count of
    eigenvalues with positive real part, the hyperbolicity verdict, and the
    modulus splitting of the exponential of the Jacobian whenever the
    Jacobian satisfies the cyclic sign structure at the rest point.
    """
    x = np.asarray(guess, dtype=float).copy()
    fx = np.asarray(sys.f(x), dtype=float)
    for _ in range(max_iter):
        norm = np.max(np.abs(fx))
        if norm <= tol:
            break
        try:
            step = np.linalg.solve(np.asarray(sys.jac(x), dtype=float), -fx)
        except np.linalg.LinAlgError:
            raise NotFoundError("singular Jacobian during Newton iteration") from None
        if not np.all(np.isfinite(step)):
            raise NotFoundError("Newton step is not finite")
        lam = 1.0
        while lam >= 1e-4:
            candidate = x + lam * step
            f_candidate = np.asarray(sys.f(candidate), dtype=float)
            if np.all(np.isfinite(f_candidate)) and np.max(np.abs(f_candidate)) < norm:
                x, fx = candidate, f_candidate
                break
            lam *= 0.5
        else:
            raise NotFoundError(
                f"Newton line search stalled at residual {norm:.3e}"
            )
    else:
        raise NotFoundError(f"no convergence in {max_iter} Newton iterations")

    jac = np.asarray(sys.jac(x), dtype=float)
    eigenvalues = np.linalg.eigvals(jac)
    hyperbolic = bool(np.min(np.abs(eigenvalues.real)) > TAU_HYP)
    unstable_dim = int(np.sum(eigenvalues.real > 0))
    from .signature import _instant_matrix_violations

    split_obj = None
    if not _instant_matrix_violations(jac):
        split_obj = split(scipy.linalg.expm(jac))
    return Equilibrium(
        point=x,
        jacobian=jac,
        eigenvalues=eigenvalues,
        unstable_dim=unstable_dim,
        hyperbolic=hyperbolic,
        split=split_obj,
        residual=float(np.max(np.abs(fx))),
    )


def linearization_along(
    sys: CyclicSystem,
    traj: Trajectory,
    period: float | None = None,
) -> LinearCyclicSystem:
    """Wrap the Jacobian along a trajectory as a linear cyclic system.

    With a period, times are folded into [0, period) so the system can be
    evaluated over any horizon.
    """

    if period is not None:

        def a(t: float) -> np.ndarray:
            return np.asarray(sys.jac(traj.at(t % period)), dtype=float)

    else:

        def a(t: float) -> np.ndarray:
            return np.asarray(sys.jac(traj.at(t)), dtype=float)

    return LinearCyclicSystem(n=sys.n, a=a, period=period)


@dataclass(frozen=True)
class PeriodicOrbit:
    """A closed trajectory with its Floquet data."""

    base_point: np.ndarray
    period: float
    samples: Trajectory
    monodromy: TransitionMatrix
    multipliers: np.ndarray
    split: SpectralSplit
    hyperbolic: bool
    trivial_multiplier_error: float
    linearization: LinearCyclicSystem = field(repr=False)

    @property
    def trivial_level(self) -> int:
        """1-based index of the split block holding the trivial multiplier."""
        return self.split.level_of_modulus(1.0)


def _state_flow(sys: CyclicSystem, x0: np.ndarray, T: float, tol: float, atol: float) -> np.ndarray:
    def rhs(t, y):
        return np.asarray(sys.f(y), dtype=float)

    result = solve_ivp(rhs, (0.0, T), x0, method="RK45", rtol=tol, atol=atol)
    if not result.success:
        raise NumericalError(f"integration failed: {result.message}")
    return result.y[:, -1]


def _flow_with_variational(
    sys: CyclicSystem, x0: np.ndarray, T: float, tol: float, atol: float
) -> tuple[np.ndarray, np.ndarray]:
    n = x0.shape[0]

    def rhs(t, y):
        state = y[:n]
        phi = y[n:].reshape(n, n)
        jac = np.asarray(sys.jac(state), dtype=float)
        return np.concatenate([np.asarray(sys.f(state), dtype=float), (jac @ phi).ravel()])

    y0 = np.concatenate([x0, np.eye(n).ravel()])
    result = solve_ivp(rhs, (0.0, T), y0, method="RK45", rtol=tol, atol=atol)
    if not result.success:
        raise NumericalError(f"variational integration failed: {result.message}")
    final = result.y[:, -1]
    return final[:n], final[n:].reshape(n, n)


def find_periodic(
    sys: CyclicSystem,
    guess_x,
    guess_T: float,
    tol: float = 1e-10,
    max_iter: int = 60,
    sample_count: int = 400,
) -> PeriodicOrbit:
    """Newton shooting for a closed orbit near the guess.

    Solves simultaneously for the base point and the period, constraining
    the update to the hyperplane through the current iterate orthogonal to
    the flow (re-chosen every step).  The converged orbit is re-integrated
    tightly, its linearization validated for the cyclic sign structure, and
    its monodromy decomposed into modulus blocks.
    """
    x = np.asarray(guess_x, dtype=float).copy()
    T = float(guess_T)
    if T <= 0:
        raise InvalidInputError("guess_T must be positive")
    n = x.shape[0]
    atol = tol * 1e-2

    residual = None
    for _ in range(max_iter):
        v0 = np.asarray(sys.f(x), dtype=float)
        if np.max(np.abs(v0)) <= 1e-8 * (1.0 + np.max(np.abs(x))):
            raise NotFoundError("iteration landed at an equilibrium, not an orbit")
        end, mono = _flow_with_variational(sys, x, T, tol, atol)
        residual_vec = end - x
        residual = np.max(np.abs(residual_vec))
        if residual <= tol * (1.0 + np.max(np.abs(x))):
            break
        v_end = np.asarray(sys.f(end), dtype=float)
        system = np.zeros((n + 1, n + 1))
        system[:n, :n] = mono - np.eye(n)
        system[:n, n] = v_end
        system[n, :n] = v0
        rhs_vec = np.concatenate([-residual_vec, [0.0]])
        try:
            update = np.linalg.solve(system, rhs_vec)
        except np.linalg.LinAlgError:
            raise NotFoundError("singular shooting system; no isolated orbit nearby") from None
        if not np.all(np.isfinite(update)) or np.max(np.abs(update)) > 1e6:
            raise NotFoundError("shooting update diverged")
        lam = 1.0
        improved = False
        while lam >= 1.0 / 64.0:
            x_try = x + lam * update[:n]
            T_try = T + lam * update[n]
            if T_try > 1e-3:
                end_try = _state_flow(sys, x_try, T_try, tol, atol)
                if np.max(np.abs(end_try - x_try)) < residual:
                    x, T = x_try, T_try
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            raise NotFoundError(
                f"shooting stalled at return residual {residual:.3e}"
            )
    else:
        raise NotFoundError(f"no orbit after {max_iter} shooting iterations")

    # tight re-integration for the stored orbit and its monodromy
    grid = np.linspace(0.0, T, sample_count + 1)
    samples = integrate(sys, x, 0.0, T, tol=1e-11, atol=1e-13, t_eval=grid)
    closure = float(np.max(np.abs(samples.states[-1] - x)))
    if closure > TAU_PO:
        raise NotFoundError(f"orbit closure error {closure:.3e} exceeds {TAU_PO:.0e}")

    linearization = linearization_along(sys, samples, period=T)
    check = validate_linear(linearization, np.linspace(0.0, T, 200))
    if not check.ok:
        raise InvalidInputError(
            "linearization along the orbit violates the cyclic sign structure; "
            "normalize the system first"
        )
    mono = monodromy(linearization, tol=1e-12, atol=1e-14)
    multipliers = np.linalg.eigvals(mono.value)

    distance_to_one = np.abs(multipliers - 1.0)
    trivial_idx = int(np.argmin(distance_to_one))
    trivial_error = float(distance_to_one[trivial_idx])
    if trivial_error > TAU_TRIV:
        raise DegeneracyError(
            f"no Floquet multiplier within {TAU_TRIV:.0e} of 1 (closest: {trivial_error:.3e})"
        )
    if int(np.sum(distance_to_one <= TAU_TRIV)) != 1:
        raise DegeneracyError("multiple Floquet multipliers collide with 1")

    eigvals_m, eigvecs_m = np.linalg.eig(mono.value)
    direction = eigvecs_m[:, int(np.argmin(np.abs(eigvals_m - 1.0)))].real
    direction /= np.linalg.norm(direction)
    flow_dir = np.asarray(sys.f(x), dtype=float)
    flow_dir /= np.linalg.norm(flow_dir)
    angle = math.acos(min(1.0, abs(float(direction @ flow_dir))))
    if angle > 1e-4:
        raise DegeneracyError(
            f"trivial multiplier eigendirection misaligned with the flow by {angle:.3e} rad"
        )

    others = np.delete(multipliers, trivial_idx)
    hyperbolic = bool(np.all(np.abs(np.abs(others) - 1.0) > TAU_HYP))
    split_obj = split(mono.value)
    return PeriodicOrbit(
        base_point=x,
        period=T,
        samples=samples,
        monodromy=mono,
        multipliers=multipliers,
        split=split_obj,
        hyperbolic=hyperbolic,
        trivial_multiplier_error=trivial_error,
        linearization=linearization,
    )


def rebase_periodic(sys: CyclicSystem, orbit: PeriodicOrbit, phase: float) -> PeriodicOrbit:
    """The same orbit re-anchored at the point of the given phase."""
    anchor = orbit.samples.at(phase % orbit.period)
    return find_periodic(sys, anchor, orbit.period)


def estimate_period(
    sys: CyclicSystem,
    x_ref,
    t_search: float,
    tol: float = 1e-8,
) -> tuple[np.ndarray, float]:
    """Crude period estimate from successive section crossings.

    Integrates forward and records upward crossings of the hyperplane
    through ``x_ref`` orthogonal to the flow there; the spacing of the last
    two crossings estimates the period, and the last crossing point seeds a
    shooting iteration.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    v = np.asarray(sys.f(x_ref), dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidInputError("reference point is an equilibrium")
    v = v / norm

    def section(t, y):
        return float(v @ (y - x_ref))

    section.terminal = False
    section.direction = 1

    def rhs(t, y):
        return np.asarray(sys.f(y), dtype=float)

    result = solve_ivp(
        rhs, (0.0, t_search), x_ref, method="RK45", rtol=tol, atol=tol * 1e-2,
        events=section, dense_output=True,
    )
    if not result.success:
        raise NumericalError(f"integration failed: {result.message}")
    crossings = result.t_events[0]
    crossings = crossings[crossings > 1e-6]
    if crossings.size < 2:
        raise NotFoundError("fewer than two section returns; no oscillation detected")
    period = float(crossings[-1] - crossings[-2])
    point = result.sol(crossings[-1])
    return point, period


def h_index(
    sys: CyclicSystem,
    traj: Trajectory,
    direction: str = "forward",
    tail_fraction: float = 0.2,
) -> int:
    """Half-index of the settled velocity sign count at one end of a trajectory.

    Velocity samples are rescaled to unit sup norm before thresholding;
    otherwise the count of a decaying velocity would be noise.  The count
    must be exact and constant over the examined fraction of samples.
    """
    if direction not in ("forward", "backward"):
        raise InvalidInputError("direction must be 'forward' or 'backward'")
    count = max(3, int(traj.times.size * tail_fraction))
    if traj.times.size < count:
        raise InconclusiveError("trajectory too short to examine a tail")
    states = traj.states[-count:] if direction == "forward" else traj.states[:count]
    velocities = np.array([np.asarray(sys.f(s), dtype=float) for s in states])
    speed = np.max(np.abs(velocities), axis=1)
    floor = 1e-8 * (1.0 + np.max(np.abs(states)))
    if np.any(speed <= floor):
        raise InconclusiveError("velocity below resolution on the examined tail")
    values = set()
    for v, s in zip(velocities, speed):
        bounds = lyapunov_bounds(v / s)
        if not bounds.exact:
            raise InconclusiveError("velocity sign count not exact on the tail")
        values.add(bounds.lower)
    if len(values) != 1:
        raise InconclusiveError(f"velocity sign count not settled: saw {sorted(values)}")
    value = values.pop()
    return (value + 1) // 2


@dataclass(frozen=True)
class DifferenceReport:
    """Pairwise difference sign counts over a point cloud."""

    ok: bool
    violations: list
    pairs_checked: int
    expected: int


def difference_signature(
    points,
    h: int,
    pairs: int | None = None,
    seed: int = 0,
) -> DifferenceReport:
    """Check that differences of distinct points all carry count 2h-1.

    With ``pairs`` given, that many random distinct pairs are drawn;
    otherwise every unordered pair is examined.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if h < 1:
        raise InvalidInputError("h must be at least 1")
    if m < 2:
        raise InvalidInputError("need at least two points")
    expected = 2 * h - 1
    violations = []
    checked = 0

    def examine(i: int, j: int) -> None:
        nonlocal checked
        diff = pts[j] - pts[i]
        bounds = lyapunov_bounds(diff)
        checked += 1
        if not bounds.exact or bounds.lower != expected:
            violations.append((i, j, (bounds.lower, bounds.upper)))

    if pairs is None:
        for i in range(m):
            for j in range(i + 1, m):
                examine(i, j)
    else:
        rng = np.random.default_rng(seed)
        drawn = 0
        while drawn < pairs:
            i, j = rng.integers(m, size=2)
            if i == j:
                continue
            examine(int(i), int(j))
            drawn += 1
    return DifferenceReport(
        ok=not violations, violations=violations, pairs_checked=checked, expected=expected
    )


def _element_points(element) -> np.ndarray:
    if isinstance(element, Equilibrium):
        return element.point[None, :]
    if isinstance(element, PeriodicOrbit):
        return element.samples.states
    raise InvalidInputError(f"expected an equilibrium or a periodic orbit, got {type(element)}")


def _coarse_distances(states: np.ndarray, element) -> np.ndarray:
    anchor = _element_points(element)
    out = np.empty(states.shape[0])
    chunk = 512
    for start in range(0, states.shape[0], chunk):
        block = states[start : start + chunk]
        diffs = block[:, None, :] - anchor[None, :, :]
        out[start : start + chunk] = np.min(np.linalg.norm(diffs, axis=2), axis=1)
    return out


def _refined_distance(x: np.ndarray, element) -> float:
    if isinstance(element, Equilibrium):
        return float(np.linalg.norm(x - element.point))
    orbit = element
    samples = orbit.samples
    idx = int(np.argmin(np.linalg.norm(samples.states - x, axis=1)))
    t_best = samples.times[idx]
    width = orbit.period / max(8, samples.times.size - 1)

    def objective(s: float) -> float:
        return float(np.linalg.norm(x - samples.at(s % orbit.period)))

    result = minimize_scalar(
        objective, bounds=(t_best - 2 * width, t_best + 2 * width), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(min(result.fun, objective(t_best)))


def _nearest_phase(x: np.ndarray, orbit: PeriodicOrbit) -> float:
    samples = orbit.samples
    idx = int(np.argmin(np.linalg.norm(samples.states - x, axis=1)))
    t_best = samples.times[idx]
    width = orbit.period / max(8, samples.times.size - 1)

    def objective(s: float) -> float:
        return float(np.linalg.norm(x - samples.at(s % orbit.period)))

    result = minimize_scalar(
        objective, bounds=(t_best - 2 * width, t_best + 2 * width), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(result.x % orbit.period) if result.fun < objective(t_best) else float(t_best)


def _unstable_subspace(element) -> np.ndarray:
    """Orthonormal basis of the strictly expanding directions at the anchor."""
    if isinstance(element, Equilibrium):
        expected = element.unstable_dim
        if expected == 0:
            return np.zeros((element.point.shape[0], 0))
        _, z, sdim = scipy.linalg.schur(
            element.jacobian, output="real", sort=lambda re, im: re > 0
        )
        if sdim != expected:
            raise NumericalError(
                f"unstable selection found {sdim} directions, expected {expected}"
            )
        return z[:, :sdim]
    orbit = element
    expected = int(np.sum(np.abs(orbit.multipliers) > 1.0 + TAU_HYP))
    if expected == 0:
        return np.zeros((orbit.base_point.shape[0], 0))
    _, z, sdim = scipy.linalg.schur(
        orbit.monodromy.value,
        output="real",
        sort=lambda re, im: np.hypot(re, im) > 1.0 + TAU_HYP,
    )
    if sdim != expected:
        raise NumericalError(
            f"unstable selection found {sdim} directions, expected {expected}"
        )
    return z[:, :sdim]


def _unstable_manifold_dim(element) -> int:
    if isinstance(element, Equilibrium):
        return element.unstable_dim
    return int(np.sum(np.abs(element.multipliers) > 1.0 + TAU_HYP)) + 1


def connect(
    sys: CyclicSystem,
    source,
    target,
    offset: float,
    horizon: float,
    direction=None,
    tol: float = 1e-8,
    samples: int = 1200,
) -> Trajectory:
    """Launch along an unstable direction of the source and run to the target.

    The start point is the source anchor displaced by ``offset`` along a
    unit unstable direction.  Success means the refined terminal distance to
    the target set falls below the connection tolerance; the returned
    trajectory carries the full approach record.  Failure raises, with the
    trajectory attached, and refutes nothing.
    """
    basis = _unstable_subspace(source)
    if basis.shape[1] == 0:
        raise InvalidInputError("source has no unstable directions to launch along")
    if direction is None:
        unit = basis[:, 0]
    elif np.isscalar(direction):
        unit = basis[:, int(direction)]
    else:
        unit = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(unit)
        if norm == 0:
            raise InvalidInputError("direction must be a nonzero vector")
        unit = unit / norm
    anchor = source.point if isinstance(source, Equilibrium) else source.base_point
    start = anchor + offset * unit

    grid = np.linspace(0.0, horizon, samples)
    traj = integrate(sys, start, 0.0, horizon, tol=tol, t_eval=grid)
    record = ApproachRecord(
        times=traj.times,
        to_source=_coarse_distances(traj.states, source),
        to_target=_coarse_distances(traj.states, target),
    )
    traj = replace(traj, approach=record)
    terminal = _refined_distance(traj.states[-1], target)
    if terminal >= TAU_CONN:
        raise NotConnectedError(
            f"terminal distance {terminal:.3e} to the target set is not below "
            f"{TAU_CONN:.0e}; longer horizons or other offsets may still connect",
            trajectory=traj,
        )
    return traj


@dataclass(frozen=True)
class TransversalityReport:
    """Transported tangent bases at a connection midpoint and the verdict."""

    connection: Trajectory
    source_kind: str
    target_kind: str
    h_minus: int | None
    h_plus: int | None
    unstable_basis: np.ndarray
    stable_basis: np.ndarray
    stacked_rank: int
    sigma_min: float
    verdict: str
    manifold_distance: float
    dim_unstable_source: int
    dim_unstable_target: int
    within_theorem: bool
    notes: tuple = ()


def transversality(
    sys: CyclicSystem,
    source,
    target,
    conn: Trajectory,
    tol: float = 1e-9,
) -> TransversalityReport:
    """Certify that transported tangent spaces of the two manifolds span.

    The unstable basis rides forward from the source end of the connection,
    the stable basis backward from the target end, both along the
    linearization of the flow over the connection, meeting at the sample
    where the larger of the two set distances is smallest (the connection is
    re-timed so that point is t = 0).  The verdict is transversal only when
    the stacked bases have full rank with smallest singular value above the
    decision threshold.
    """
    for name, element in (("source", source), ("target", target)):
        if isinstance(element, Equilibrium):
            if not element.hyperbolic:
                raise InvalidInputError(f"{name} equilibrium is not hyperbolic")
        elif isinstance(element, PeriodicOrbit):
            if not element.hyperbolic:
                raise InvalidInputError(f"{name} orbit is not hyperbolic")
        else:
            raise InvalidInputError(f"{name} must be an equilibrium or a periodic orbit")

    notes: list[str] = []
    d_src = _refined_distance(conn.states[0], source)
    d_tgt = _refined_distance(conn.states[-1], target)
    manifold_distance = max(d_src, d_tgt)
    guard_tripped = manifold_distance > 10 * TAU_CONN
    if guard_tripped:
        notes.append(
            f"connection ends sit {manifold_distance:.3e} from the invariant sets, "
            f"beyond the guard {10 * TAU_CONN:.0e}; verdict forced inconclusive"
        )

    h_plus: int | None
    h_minus: int | None
    try:
        h_plus = h_index(sys, conn, "forward")
    except InconclusiveError as exc:
        h_plus = None
        notes.append(f"forward index unavailable: {exc}")
    try:
        h_minus = h_index(sys, conn, "backward")
    except InconclusiveError as exc:
        h_minus = None
        notes.append(f"backward index unavailable: {exc}")
    if h_plus is not None and h_minus is not None and h_plus > h_minus:
        notes.append(
            f"forward index {h_plus} exceeds backward index {h_minus}; "
            "inconsistent with the connection ordering"
        )

    # anchor bases on the critical elements, matching orbit phases to the ends
    if isinstance(source, PeriodicOrbit):
        src_anchor = rebase_periodic(sys, source, _nearest_phase(conn.states[0], source))
        level = src_anchor.trivial_level
        u_basis = np.hstack(src_anchor.split.blocks[:level])
    else:
        u_basis = _unstable_subspace(source)
        if u_basis.shape[1] == 0:
            raise InvalidInputError("source has an empty unstable tangent space")

    if isinstance(target, PeriodicOrbit):
        tgt_anchor = rebase_periodic(sys, target, _nearest_phase(conn.states[-1], target))
        level = tgt_anchor.trivial_level
        below = tgt_anchor.split.complements[level - 1]
        flow = np.asarray(sys.f(tgt_anchor.base_point), dtype=float)
        flow = flow / np.linalg.norm(flow)
        stacked = np.column_stack([below, flow]) if below.shape[1] else flow[:, None]
        q, _ = np.linalg.qr(stacked)
        s_basis = q
    else:
        expected = target.point.shape[0] - target.unstable_dim
        if expected == 0:
            s_basis = np.zeros((target.point.shape[0], 0))
        else:
            _, z, sdim = scipy.linalg.schur(
                target.jacobian, output="real", sort=lambda re, im: re < 0
            )
            if sdim != expected:
                raise NumericalError(
                    f"stable selection found {sdim} directions, expected {expected}"
                )
            s_basis = z[:, :sdim]

    # midpoint: where the connection is farthest from hugging either set
    if conn.approach is not None:
        record = conn.approach
    else:
        record = ApproachRecord(
            times=conn.times,
            to_source=_coarse_distances(conn.states, source),
            to_target=_coarse_distances(conn.states, target),
        )
    mid_idx = int(np.argmin(np.maximum(record.to_source, record.to_target)))
    t_mid = float(conn.times[mid_idx])

    lin = linearization_along(sys, conn)
    transported_u = propagate_subspace(lin, u_basis, float(conn.times[0]), t_mid, tol=tol)
    if s_basis.shape[1]:
        transported_s = propagate_subspace(lin, s_basis, float(conn.times[-1]), t_mid, tol=tol)
    else:
        transported_s = s_basis

    stacked = np.hstack([transported_u, transported_s])
    n = sys.n
    svals = np.linalg.svd(stacked, compute_uv=False)
    rank = int(np.sum(svals > 1e-10 * svals[0])) if svals.size else 0
    sigma_min = float(svals[n - 1]) if stacked.shape[1] >= n else 0.0

    if guard_tripped:
        verdict = "inconclusive"
    elif rank == n and sigma_min > TAU_TRANS:
        verdict = "transversal"
    else:
        verdict = "not-transversal"

    dim_u_src = _unstable_manifold_dim(source)
    dim_u_tgt = _unstable_manifold_dim(target)
    source_kind = "periodic" if isinstance(source, PeriodicOrbit) else "equilibrium"
    target_kind = "periodic" if isinstance(target, PeriodicOrbit) else "equilibrium"
    if source_kind == "periodic" or target_kind == "periodic":
        within = True
    else:
        within = dim_u_tgt < dim_u_src
        if not within:
            notes.append(
                "both elements are equilibria with non-decreasing unstable dimension; "
                "outside the covered cases, numerical verdict reported as evidence only"
            )
    if dim_u_tgt > dim_u_src:
        notes.append(
            f"unstable dimension grows from {dim_u_src} to {dim_u_tgt} along the "
            "connection; inconsistent with the expected ordering"
        )

    return TransversalityReport(
        connection=conn.shifted(-t_mid),
        source_kind=source_kind,
        target_kind=target_kind,
        h_minus=h_minus,
        h_plus=h_plus,
        unstable_basis=transported_u,
        stable_basis=transported_s,
        stacked_rank=rank,
        sigma_min=sigma_min,
        verdict=verdict,
        manifold_distance=manifold_distance,
        dim_unstable_source=dim_u_src,
        dim_unstable_target=dim_u_tgt,
        within_theorem=within,
        notes=tuple(notes),
    )
