"""Cyclic feedback systems: definition, validation, and normal form.

A system couples each coordinate to itself and to its cyclic predecessor,
with the sign of every coupling fixed throughout the domain.  Only loops
whose coupling signs multiply to -1 are accepted; those can always be
rotated, by flipping coordinate signs, into the standard form where the
single negative coupling sits on the wrap-around edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidInputError, UnsupportedFeedbackSignError
from .signature import MASK_TOL

__all__ = [
    "CyclicSystem",
    "ValidationReport",
    "fd_jacobian",
    "validate_feedback",
    "normalize",
    "builtin",
    "load_model",
]


def fd_jacobian(f: Callable, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with per-column step 1e-6 * (1 + |x_j|)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    jac = np.empty((n, n))
    for j in range(n):
        h = 1e-6 * (1.0 + abs(x[j]))
        left = x.copy()
        right = x.copy()
        left[j] -= h
        right[j] += h
        jac[:, j] = (np.asarray(f(right)) - np.asarray(f(left))) / (2.0 * h)
    return jac


@dataclass(frozen=True)
class CyclicSystem:
    """An n-dimensional ODE ring with fixed coupling signs.

    ``f`` maps a state vector to its velocity; ``jac`` maps a state vector to
    the n-by-n Jacobian of ``f``.  When ``jac`` is omitted a central
    finite-difference fallback is installed.  ``delta`` lists the sign of the
    coupling from each coordinate's predecessor; their product must be -1.
    """

    n: int
    f: Callable = field(repr=False)
    jac: Callable = field(repr=False)
    delta: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        if self.n < 3:
            raise InvalidInputError(f"dimension must be at least 3, got {self.n}")
        delta = np.asarray(self.delta, dtype=np.int8)
        if delta.shape != (self.n,) or not np.all(np.abs(delta) == 1):
            raise InvalidInputError("delta must hold exactly n entries from {-1,+1}")
        if int(np.prod(delta)) != -1:
            raise UnsupportedFeedbackSignError(
                "coupling signs multiply to +1; only negative feedback loops are supported"
            )
        object.__setattr__(self, "delta", delta)
        if self.jac is None:
            f = self.f
            object.__setattr__(self, "jac", lambda x: fd_jacobian(f, x))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a sampled structural check; ok iff violations is empty."""

    ok: bool
    violations: list
    samples_checked: int


def _as_box(box, n: int) -> tuple[np.ndarray, np.ndarray]:
    box = np.asarray(box, dtype=float)
    if box.shape == (2,):
        box = np.tile(box, (n, 1))
    if box.shape != (n, 2):
        raise InvalidInputError(
            f"box must be (low, high) or an ({n}, 2) array, got shape {box.shape}"
        )
    lo, hi = box[:, 0], box[:, 1]
    if not np.all(hi > lo):
        raise InvalidInputError("box is degenerate: every high must exceed its low")
    return lo, hi


def validate_feedback(
    system: CyclicSystem,
    box,
    num_samples: int = 100,
    seed: int = 0,
) -> ValidationReport:
    """Sample the Jacobian over a box and check mask and coupling signs.

    A violation is recorded as ``(point, (i, j), observed)`` where observed
    is the off-mask entry value for mask breaks and the coupling sign for
    feedback breaks.
    """
    if num_samples < 1:
        raise InvalidInputError("num_samples must be at least 1")
    lo, hi = _as_box(box, system.n)
    rng = np.random.default_rng(seed)
    points = lo + rng.random((num_samples, system.n)) * (hi - lo)

    n = system.n
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n), np.arange(n)] = True
    sub_rows = np.arange(n)
    sub_cols = np.arange(-1, n - 1)
    mask[sub_rows, sub_cols] = True

    violations = []
    for x in points:
        jac = np.asarray(system.jac(x), dtype=float)
        if jac.shape != (n, n):
            raise InvalidInputError(f"jacobian shape {jac.shape}, expected {(n, n)}")
        off = np.abs(np.where(mask, 0.0, jac))
        for i, j in np.argwhere(off > MASK_TOL):
            violations.append((x.copy(), (int(i), int(j)), float(jac[i, j])))
        couplings = jac[sub_rows, sub_cols]
        observed = np.sign(couplings).astype(int)
        for i in np.flatnonzero(observed != system.delta):
            violations.append((x.copy(), (int(i), int((i - 1) % n)), int(observed[i])))
    return ValidationReport(ok=not violations, violations=violations, samples_checked=num_samples)


def normalize(system: CyclicSystem) -> tuple[CyclicSystem, np.ndarray]:
    """Flip coordinate signs so the single negative coupling sits at the wrap.

    Returns the conjugated system together with the sign vector mu used for
    the change of variables; the first entry of mu is pinned to +1.  The new
    evaluators are x -> mu * f(mu * x) and the matching Jacobian conjugation.
    """
    if int(np.prod(system.delta)) != -1:
        raise UnsupportedFeedbackSignError("cannot normalize a positive feedback loop")
    mu = np.ones(system.n)
    for i in range(1, system.n):
        mu[i] = mu[i - 1] * system.delta[i]
    if np.all(mu == 1.0):
        return system, mu.astype(np.int8)

    f_orig, jac_orig = system.f, system.jac

    def f_new(x):
        return mu * np.asarray(f_orig(mu * np.asarray(x, dtype=float)), dtype=float)

    def jac_new(x):
        inner = np.asarray(jac_orig(mu * np.asarray(x, dtype=float)), dtype=float)
        return mu[:, None] * inner * mu[None, :]

    delta_new = np.empty(system.n, dtype=np.int8)
    for i in range(system.n):
        delta_new[i] = system.delta[i] * mu[i] * mu[i - 1]
    normalized = CyclicSystem(
        n=system.n, f=f_new, jac=jac_new, delta=delta_new, name=system.name
    )
    return normalized, mu.astype(np.int8)


def _goodwin(n: int, p: float, b: float) -> CyclicSystem:
    if p <= 0 or b <= 0:
        raise InvalidInputError("hill exponent p and decay b must be positive")

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(n)
        out[0] = 1.0 / (1.0 + x[n - 1] ** p) - b * x[0]
        out[1:] = x[:-1] - b * x[1:]
        return out

    def jac(x):
        x = np.asarray(x, dtype=float)
        j = np.zeros((n, n))
        np.fill_diagonal(j, -b)
        for i in range(1, n):
            j[i, i - 1] = 1.0
        xn = x[n - 1]
        j[0, n - 1] = -p * xn ** (p - 1.0) / (1.0 + xn**p) ** 2
        return j

    delta = np.ones(n, dtype=np.int8)
    delta[0] = -1
    return CyclicSystem(n=n, f=f, jac=jac, delta=delta, name="goodwin")


def _linear_ring(matrix) -> CyclicSystem:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("matrix must be square")
    n = a.shape[0]
    if n < 3:
        raise InvalidInputError("dimension must be at least 3")
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n), np.arange(n)] = True
    mask[np.arange(n), np.arange(-1, n - 1)] = True
    if np.any(np.abs(np.where(mask, 0.0, a)) > MASK_TOL):
        raise InvalidInputError("matrix has entries outside the cyclic mask")
    couplings = a[np.arange(n), np.arange(-1, n - 1)]
    if np.any(couplings == 0.0):
        raise InvalidInputError("every cyclic coupling must be nonzero")
    delta = np.sign(couplings).astype(np.int8)
    return CyclicSystem(
        n=n,
        f=lambda x: a @ np.asarray(x, dtype=float),
        jac=lambda x: a.copy(),
        delta=delta,
        name="linear_ring",
    )


def builtin(name: str, params: dict) -> CyclicSystem:
    """Construct a shipped model: 'goodwin' or 'linear_ring'."""
    if name == "goodwin":
        try:
            n = int(params["n"])
            p = float(params["p"])
            b = float(params["b"])
        except KeyError as missing:
            raise InvalidInputError(f"goodwin requires parameter {missing}") from None
        return _goodwin(n, p, b)
    if name == "linear_ring":
        if "matrix" not in params:
            raise InvalidInputError("linear_ring requires a 'matrix' parameter")
        return _linear_ring(params["matrix"])
    raise InvalidInputError(f"unknown builtin model {name!r}")


def load_model(source) -> CyclicSystem:
    """Build a system from a JSON file path or an already-parsed mapping.

    Accepted shapes: {"name": ..., "params": {...}} for builtins, or
    {"matrix": [[...], ...]} for a constant-coefficient ring.
    """
    if isinstance(source, (str, Path)):
        with open(source) as handle:
            source = json.load(handle)
    if not isinstance(source, dict):
        raise InvalidInputError("model description must be a JSON object")
    if "matrix" in source:
        return _linear_ring(source["matrix"])
    if "name" in source:
        return builtin(source["name"], source.get("params", {}))
    raise InvalidInputError("model JSON needs either 'name' or 'matrix'")
