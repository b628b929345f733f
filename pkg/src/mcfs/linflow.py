"""Time-dependent linear flows with cyclic coupling structure.

Coefficient matrices live on a cyclic mask (diagonal, subdiagonal, and the
top-right corner) with the corner coupling negative and the subdiagonal
couplings positive at all times.  This module integrates transition
matrices, transports subspaces, and verifies the two dynamical statements
that power everything downstream: the sign-discordance count never
increases along solutions, and each cone cut out by the count envelopes is
strictly invariant under the forward flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InvalidInputError, NumericalError
from .model import ValidationReport
from .signature import (
    MASK_TOL,
    LyapunovBounds,
    lyapunov_bounds,
    sign_pattern,
    value_ceiling,
)

__all__ = [
    "DEFAULT_TOL",
    "DEFAULT_ATOL",
    "CoefficientFn",
    "LinearCyclicSystem",
    "TransitionMatrix",
    "ConeInvarianceReport",
    "MonotonicityReport",
    "validate_linear",
    "transition",
    "monodromy",
    "propagate_subspace",
    "sample_N_along",
    "monotonicity_report",
    "verify_cone_invariance",
    "random_linear_system",
]

DEFAULT_TOL = 1e-8
DEFAULT_ATOL = 1e-10

# Relative Abel/Liouville residual above which a transition matrix is
# considered untrustworthy.  Strongly contracting flows push the residual
# up because the determinant error is absolute in the matrix entries.
ABEL_GUARD = 1e-3

# Cadence of re-orthonormalization while transporting subspaces, and of
# state renormalization while sampling sign counts along long solutions.
REORTH_DT = 1.0
RENORM_DT = 2.0


@dataclass(frozen=True)
class CoefficientFn:
    """A constant plus a finite sum of sinusoids; serializes to JSON."""

    const: float = 0.0
    terms: tuple = ()

    def __call__(self, t: float) -> float:
        value = self.const
        for amp, freq, phase in self.terms:
            value += amp * math.sin(freq * t + phase)
        return value

    def to_payload(self):
        if not self.terms:
            return self.const
        return {
            "const": self.const,
            "terms": [
                {"amp": amp, "freq": freq, "phase": phase}
                for amp, freq, phase in self.terms
            ],
        }

    @classmethod
    def from_payload(cls, payload) -> "CoefficientFn":
        if isinstance(payload, (int, float)):
            return cls(const=float(payload))
        if isinstance(payload, dict):
            terms = tuple(
                (float(term["amp"]), float(term["freq"]), float(term["phase"]))
                for term in payload.get("terms", ())
            )
            return cls(const=float(payload.get("const", 0.0)), terms=terms)
        raise InvalidInputError(f"cannot parse coefficient from {payload!r}")


def _coerce_coefficient(value) -> CoefficientFn:
    if isinstance(value, CoefficientFn):
        return value
    if isinstance(value, (int, float)):
        return CoefficientFn(const=float(value))
    raise InvalidInputError(f"expected a number or CoefficientFn, got {type(value)}")


@dataclass(frozen=True)
class LinearCyclicSystem:
    """Evaluator ``a(t)`` for a coefficient matrix on the cyclic mask.

    ``period`` is present iff the coefficients are periodic with that
    period.  Systems assembled from named coefficient entries remember them
    and can round-trip through JSON; systems wrapping a raw callable cannot.
    """

    n: int
    a: Callable[[float], np.ndarray] = field(repr=False)
    period: float | None = None
    entries: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInputError(f"dimension must be at least 2, got {self.n}")
        if self.period is not None and self.period <= 0:
            raise InvalidInputError("period must be positive when present")

    @classmethod
    def from_entries(cls, diag, sub, corner, period=None) -> "LinearCyclicSystem":
        """Assemble from per-entry coefficients.

        ``diag`` lists a_11 .. a_nn, ``sub`` lists a_21 .. a_n,n-1, and
        ``corner`` is the wrap coupling a_1n.  Entries are numbers or
        CoefficientFn values.
        """
        diag = [_coerce_coefficient(v) for v in diag]
        sub = [_coerce_coefficient(v) for v in sub]
        corner_fn = _coerce_coefficient(corner)
        n = len(diag)
        if len(sub) != n - 1:
            raise InvalidInputError(
                f"need {n - 1} subdiagonal entries for dimension {n}, got {len(sub)}"
            )
        entries = {"diag": diag, "sub": sub, "corner": corner_fn}

        def a(t: float) -> np.ndarray:
            out = np.zeros((n, n))
            for i in range(n):
                out[i, i] = diag[i](t)
            for i in range(1, n):
                out[i, i - 1] = sub[i - 1](t)
            out[0, n - 1] = corner_fn(t)
            return out

        return cls(n=n, a=a, period=period, entries=entries)

    @classmethod
    def constant(cls, matrix, period=None) -> "LinearCyclicSystem":
        """Wrap a constant matrix; any positive period may be declared."""
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("matrix must be square")
        n = m.shape[0]
        diag = [float(m[i, i]) for i in range(n)]
        sub = [float(m[i, i - 1]) for i in range(1, n)]
        corner = float(m[0, n - 1])
        return cls.from_entries(diag, sub, corner, period=period)

    def to_payload(self) -> dict:
        if self.entries is None:
            raise InvalidInputError(
                "system wraps a raw callable and has no serializable entries"
            )
        payload = {
            "n": self.n,
            "entries": {
                "diag": [fn.to_payload() for fn in self.entries["diag"]],
                "sub": [fn.to_payload() for fn in self.entries["sub"]],
                "corner": self.entries["corner"].to_payload(),
            },
        }
        if self.period is not None:
            payload["period"] = self.period
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> "LinearCyclicSystem":
        try:
            entries = payload["entries"]
            diag = [CoefficientFn.from_payload(v) for v in entries["diag"]]
            sub = [CoefficientFn.from_payload(v) for v in entries["sub"]]
            corner = CoefficientFn.from_payload(entries["corner"])
        except KeyError as missing:
            raise InvalidInputError(f"linear system JSON missing {missing}") from None
        n = int(payload.get("n", len(diag)))
        if n != len(diag):
            raise InvalidInputError("field n disagrees with the diagonal length")
        period = payload.get("period")
        return cls.from_entries(diag, sub, corner, period=period)


def validate_linear(sys: LinearCyclicSystem, grid: Sequence[float]) -> ValidationReport:
    """Check mask and coupling signs of a(t) at every grid time."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise InvalidInputError("grid must be nonempty")
    n = sys.n
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n), np.arange(n)] = True
    mask[np.arange(n), np.arange(-1, n - 1)] = True
    violations = []
    for t in grid:
        a = np.asarray(sys.a(float(t)), dtype=float)
        if a.shape != (n, n):
            raise InvalidInputError(f"a({t}) has shape {a.shape}, expected {(n, n)}")
        off = np.abs(np.where(mask, 0.0, a))
        for i, j in np.argwhere(off > MASK_TOL):
            violations.append((float(t), (int(i), int(j)), float(a[i, j])))
        if a[0, n - 1] >= 0:
            violations.append((float(t), (0, n - 1), float(a[0, n - 1])))
        for i in range(1, n):
            if a[i, i - 1] <= 0:
                violations.append((float(t), (i, i - 1), float(a[i, i - 1])))
    return ValidationReport(ok=not violations, violations=violations, samples_checked=grid.size)


@dataclass(frozen=True)
class TransitionMatrix:
    """Solution operator of the matrix initial value problem over [t0, t1]."""

    value: np.ndarray
    t0: float
    t1: float
    abel_residual: float


def _run_ivp(rhs, span, y0, tol, atol, t_eval=None):
    result = solve_ivp(
        rhs, span, y0, method="RK45", rtol=tol, atol=atol, t_eval=t_eval, dense_output=False
    )
    if not result.success:
        raise NumericalError(f"integration failed on {span}: {result.message}")
    return result


def transition(
    sys: LinearCyclicSystem,
    t0: float,
    t1: float,
    tol: float = DEFAULT_TOL,
    atol: float | None = None,
    abel_guard: float | None = ABEL_GUARD,
) -> TransitionMatrix:
    """Integrate the transition matrix from t0 to t1 (either direction).

    The trace integral rides along with the matrix so the determinant can be
    checked against its closed-form growth; the relative mismatch is stored
    as ``abel_residual`` and guarded against catastrophic integration error.
    Backward transitions integrate backward rather than inverting.
    """
    if atol is None:
        atol = tol * 1e-2
    n = sys.n
    if t0 == t1:
        return TransitionMatrix(value=np.eye(n), t0=t0, t1=t1, abel_residual=0.0)

    def rhs(t, y):
        a = sys.a(t)
        phi = y[: n * n].reshape(n, n)
        out = np.empty(n * n + 1)
        out[: n * n] = (a @ phi).ravel()
        out[n * n] = np.trace(a)
        return out

    y0 = np.concatenate([np.eye(n).ravel(), [0.0]])
    result = _run_ivp(rhs, (t0, t1), y0, tol, atol)
    value = result.y[: n * n, -1].reshape(n, n)
    growth = math.exp(result.y[n * n, -1])
    det = float(np.linalg.det(value))
    if det <= 0:
        raise NumericalError(
            f"transition determinant {det} is not positive; integration untrustworthy"
        )
    residual = abs(det - growth) / growth
    if abel_guard is not None and residual > abel_guard:
        raise NumericalError(
            f"determinant residual {residual:.3e} exceeds guard {abel_guard:.1e}"
        )
    return TransitionMatrix(value=value, t0=t0, t1=t1, abel_residual=residual)


def monodromy(
    sys: LinearCyclicSystem,
    tol: float = DEFAULT_TOL,
    atol: float | None = None,
) -> TransitionMatrix:
    """Transition matrix over one full period."""
    if sys.period is None:
        raise InvalidInputError("monodromy requires a periodic system")
    return transition(sys, 0.0, sys.period, tol=tol, atol=atol)


def _as_columns(basis) -> np.ndarray:
    if isinstance(basis, np.ndarray) and basis.ndim == 2:
        return np.array(basis, dtype=float)
    return np.column_stack([np.asarray(v, dtype=float) for v in basis])


def _ordered_qr(matrix: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(matrix)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def propagate_subspace(
    sys: LinearCyclicSystem,
    basis,
    t0: float,
    t1: float,
    tol: float = DEFAULT_TOL,
    atol: float | None = None,
) -> np.ndarray:
    """Transport the span of ``basis`` from t0 to t1, re-orthonormalizing.

    ``basis`` is a list of vectors or an (n, k) column matrix.  The result
    is an orthonormal (n, k) column basis of the image subspace.  Dominant
    directions would otherwise collapse the basis, so a QR step is applied
    every time unit along the way.
    """
    if atol is None:
        atol = tol * 1e-2
    b = _as_columns(basis)
    n = sys.n
    if b.shape[0] != n:
        raise InvalidInputError(f"basis vectors have length {b.shape[0]}, expected {n}")
    k = b.shape[1]
    norms = np.linalg.norm(b, axis=0)
    if np.any(norms == 0):
        raise InvalidInputError("dependent basis: zero column")
    if np.linalg.svd(b / norms, compute_uv=False)[-1] <= 1e-10:
        raise InvalidInputError("dependent basis: minimum singular value below 1e-10")

    def rhs(t, y):
        return (sys.a(t) @ y.reshape(n, k)).ravel()

    current = _ordered_qr(b)
    t = t0
    step = REORTH_DT if t1 >= t0 else -REORTH_DT
    while t != t1:
        t_next = t1 if abs(t1 - t) <= REORTH_DT else t + step
        result = _run_ivp(rhs, (t, t_next), current.ravel(), tol, atol)
        current = _ordered_qr(result.y[:, -1].reshape(n, k))
        t = t_next
    return current


def sample_N_along(
    sys: LinearCyclicSystem,
    x0,
    grid,
    tol: float = DEFAULT_TOL,
    atol: float | None = None,
) -> list[tuple[float, LyapunovBounds]]:
    """Count envelopes of the solution through (0, x0) at the grid times.

    The state is renormalized to unit sup norm every couple of time units;
    the envelopes are scale-invariant, and without renormalization strongly
    contracting stretches would sink the state below the integrator's
    absolute error floor and return noise.
    """
    if atol is None:
        atol = tol * 1e-2
    x0 = np.asarray(x0, dtype=float)
    if not sign_pattern(x0).any():
        raise InvalidInputError("x0 must not be the origin")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    n = sys.n

    def rhs(t, y):
        return sys.a(t) @ y

    results: list[tuple[float, LyapunovBounds]] = []

    def march(times: np.ndarray) -> None:
        # times sorted moving away from 0 in one direction
        state = x0 / np.max(np.abs(x0))
        t_cur = 0.0
        for t_target in times:
            while abs(t_target - t_cur) > RENORM_DT:
                t_hop = t_cur + math.copysign(RENORM_DT, t_target - t_cur)
                res = _run_ivp(rhs, (t_cur, t_hop), state, tol, atol)
                state = res.y[:, -1]
                state = state / np.max(np.abs(state))
                t_cur = t_hop
            if t_target != t_cur:
                res = _run_ivp(rhs, (t_cur, t_target), state, tol, atol)
                state = res.y[:, -1]
                t_cur = t_target
            results.append((float(t_cur), lyapunov_bounds(state)))
            state = state / np.max(np.abs(state))

    backward = np.sort(grid[grid < 0])[::-1]
    forward = np.sort(grid[grid >= 0])
    if backward.size:
        march(backward)
    if forward.size:
        march(forward)
    results.sort(key=lambda pair: pair[0])
    return results


@dataclass(frozen=True)
class MonotonicityReport:
    """Verdict over the exact entries of a sampled count sequence."""

    ok: bool
    violation: tuple | None
    settled: bool
    exact_fraction: float


def monotonicity_report(
    samples: list[tuple[float, LyapunovBounds]],
    tail_fraction: float = 0.2,
) -> MonotonicityReport:
    """Check that exact counts never increase and eventually settle."""
    exact = [(t, b.lower) for t, b in samples if b.exact]
    violation = None
    for (t_prev, v_prev), (t_cur, v_cur) in zip(exact, exact[1:]):
        if v_cur > v_prev:
            violation = (t_prev, v_prev, t_cur, v_cur)
            break
    tail = exact[-max(1, int(len(exact) * tail_fraction)) :]
    settled = len(tail) > 0 and len({v for _, v in tail}) == 1
    fraction = len(exact) / len(samples) if samples else 0.0
    return MonotonicityReport(
        ok=violation is None,
        violation=violation,
        settled=settled,
        exact_fraction=fraction,
    )


@dataclass(frozen=True)
class ConeInvarianceReport:
    """Monte Carlo evidence for strict forward invariance of a cone."""

    ok: bool
    violations: list
    samples_checked: int
    starved: bool
    h: int
    t: float


def _enumerate_patterns(n: int) -> np.ndarray:
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


def verify_cone_invariance(
    sys: LinearCyclicSystem,
    h: int,
    t: float,
    samples: int = 1000,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> ConeInvarianceReport:
    """Map sampled cone points forward and check they land strictly inside.

    Start points are drawn uniformly from the sign-pattern strata with
    count at most 2h-1 (enumerated exactly for n <= 16); a fraction get
    zeroed coordinates to probe boundary starts.  Images of fully nonzero
    starts must be nonzero with exact envelopes of value at most 2h-1.
    Images of boundary probes are held to the count bound only: a
    coordinate reborn from a zero grows like t^m and at small t sits below
    both the sign threshold and the integrator's absolute tolerance, so
    demanding exactness there would test noise, not the flow.
    """
    n = sys.n
    h_max = (value_ceiling(n) + 1) // 2
    if not 1 <= h <= h_max:
        raise InvalidInputError(f"cone level h={h} outside [1, {h_max}]")
    if t <= 0:
        raise InvalidInputError("t must be positive")
    if samples < 1:
        raise InvalidInputError("samples must be at least 1")
    rng = np.random.default_rng(seed)

    starved = False
    if n <= 16:
        patterns = _enumerate_patterns(n)
        products = patterns * np.roll(patterns, 1, axis=1)
        delta = np.ones(n, dtype=np.int8)
        delta[0] = -1
        counts = np.sum(delta * products < 0, axis=1)
        admissible = patterns[counts <= 2 * h - 1]
        chosen = admissible[rng.integers(admissible.shape[0], size=samples)]
    else:
        chosen = np.empty((0, n), dtype=np.int8)
        tries = 0
        while chosen.shape[0] < samples and tries < 200:
            batch = rng.choice([-1, 1], size=(samples * 4, n)).astype(np.int8)
            products = batch * np.roll(batch, 1, axis=1)
            delta = np.ones(n, dtype=np.int8)
            delta[0] = -1
            counts = np.sum(delta * products < 0, axis=1)
            chosen = np.vstack([chosen, batch[counts <= 2 * h - 1]])
            tries += 1
        if chosen.shape[0] < samples:
            starved = True
        chosen = chosen[:samples]

    points = chosen * rng.uniform(0.2, 1.5, size=chosen.shape)
    # probe the cone boundary: zero out coordinates where the envelope allows
    boundary = rng.random(points.shape[0]) < 0.15
    probed = np.zeros(points.shape[0], dtype=bool)
    for idx in np.flatnonzero(boundary):
        count_zeros = rng.integers(1, n)
        cols = rng.permutation(n)[:count_zeros]
        candidate = points[idx].copy()
        candidate[cols] = 0.0
        if sign_pattern(candidate).any() and lyapunov_bounds(candidate).upper <= 2 * h - 1:
            points[idx] = candidate
            probed[idx] = True

    phi = transition(sys, 0.0, t, tol=tol).value
    images = points @ phi.T
    violations = []
    for x0, image, from_boundary in zip(points, images, probed):
        bounds = lyapunov_bounds(image)
        nonzero = sign_pattern(image).any()
        bad = not nonzero or bounds.upper > 2 * h - 1
        if not from_boundary:
            bad = bad or not bounds.exact
        if bad:
            violations.append((x0.copy(), image.copy(), (bounds.lower, bounds.upper)))
    return ConeInvarianceReport(
        ok=not violations,
        violations=violations,
        samples_checked=points.shape[0],
        starved=starved,
        h=h,
        t=t,
    )


def random_linear_system(n: int, seed: int, period: float | None = None) -> LinearCyclicSystem:
    """Draw a periodic system satisfying the coupling signs by construction.

    Subdiagonal entries are c + d sin(freq t + phase) with 0 < |d| < c, the
    corner is the negative of such an expression, and diagonals are small
    trig polynomials.  All frequencies are integer multiples of the base
    frequency, so the declared period is genuine.  Amplitudes are kept
    moderate so transition matrices over one period stay well conditioned.
    """
    if n < 2:
        raise InvalidInputError("dimension must be at least 2")
    rng = np.random.default_rng(seed)
    if period is None:
        base = rng.uniform(1.1, 1.9)
        period = 2 * math.pi / base
    else:
        if period <= 0:
            raise InvalidInputError("period must be positive")
        base = 2 * math.pi / period

    def bounded_positive() -> CoefficientFn:
        c = rng.uniform(0.7, 1.1)
        d = c * rng.uniform(0.1, 0.4)
        k = int(rng.integers(1, 3))
        phase = rng.uniform(0, 2 * math.pi)
        return CoefficientFn(const=c, terms=((d, k * base, phase),))

    def negate(fn: CoefficientFn) -> CoefficientFn:
        return CoefficientFn(
            const=-fn.const,
            terms=tuple((-amp, freq, phase) for amp, freq, phase in fn.terms),
        )

    def small_diag() -> CoefficientFn:
        const = rng.uniform(-0.4, 0.4)
        terms = []
        for _ in range(int(rng.integers(1, 3))):
            amp = rng.uniform(0.05, 0.3)
            k = int(rng.integers(1, 3))
            phase = rng.uniform(0, 2 * math.pi)
            terms.append((amp, k * base, phase))
        return CoefficientFn(const=const, terms=tuple(terms))

    diag = [small_diag() for _ in range(n)]
    sub = [bounded_positive() for _ in range(n - 1)]
    corner = negate(bounded_positive())
    return LinearCyclicSystem.from_entries(diag, sub, corner, period=period)
