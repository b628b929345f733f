"""Integer-valued Lyapunov signatures on cyclic sign chains.

The central object is the count of sign-discordant cyclically adjacent
coordinate pairs, with the closing edge (between the last and the first
coordinate) twisted so that agreement, not disagreement, is counted there.
On vectors with a zero coordinate the count is extended to a [lower, upper]
envelope over the sign completions of the zeros, which coincides with the
min/max of the count over punctured neighborhoods.  The module also decides
membership in the nested cones cut out by those envelopes, and predicts how
the sign pattern of a linear-flow solution resolves immediately before and
after an instant where some coordinates vanish.

All functions treat a coordinate as zero when its magnitude does not exceed
``ZERO_TOL * max(1, max_abs(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneracyError,
    InvalidInputError,
    NotInDomainError,
)

__all__ = [
    "ZERO_TOL",
    "MASK_TOL",
    "LyapunovBounds",
    "CrossingPrediction",
    "feedback_signs",
    "value_ceiling",
    "sign_pattern",
    "lyapunov_value",
    "lyapunov_bounds",
    "in_cone",
    "predict_crossing",
]

# Relative threshold below which a coordinate counts as zero.
ZERO_TOL = 1e-9

# Absolute tolerance for "structurally zero" matrix entries.
MASK_TOL = 1e-10


def feedback_signs(n: int) -> np.ndarray:
    """Edge signs of the standard negative-feedback ring: (-1, +1, ..., +1)."""
    if n < 2:
        raise InvalidInputError(f"cycle length must be at least 2, got {n}")
    delta = np.ones(n, dtype=np.int8)
    delta[0] = -1
    return delta


def value_ceiling(n: int) -> int:
    """Largest value the count can take: n when n is odd, n - 1 when even."""
    return n if n % 2 else n - 1


def sign_pattern(x: np.ndarray) -> np.ndarray:
    """Threshold a vector (or stack of vectors) into entries of {-1, 0, +1}.

    The cutoff is relative to the sup norm of each vector but never smaller
    than ``ZERO_TOL`` itself, so patterns are scale-invariant away from the
    origin while tiny absolute vectors degrade gracefully to all-zero.
    """
    x = np.asarray(x, dtype=float)
    scale = np.maximum(1.0, np.max(np.abs(x), axis=-1, keepdims=True))
    cut = ZERO_TOL * scale
    pattern = np.zeros(x.shape, dtype=np.int8)
    pattern[x > cut] = 1
    pattern[x < -cut] = -1
    return pattern


def _count_from_signs(signs: np.ndarray) -> np.ndarray:
    """Count discordant edges for sign rows with no zero entries."""
    products = signs * np.roll(signs, 1, axis=-1)
    delta = feedback_signs(signs.shape[-1])
    return np.sum(delta * products < 0, axis=-1)


def lyapunov_value(x: np.ndarray) -> int | np.ndarray:
    """Count sign-discordant adjacent pairs around the cycle.

    Accepts a single vector or a stack of row vectors; rows are independent.
    Every coordinate must be nonzero after thresholding.

    Raises
    ------
    NotInDomainError
        If any row has a thresholded-zero coordinate.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise InvalidInputError("expected vectors of length at least 2")
    signs = sign_pattern(x)
    if np.any(signs == 0):
        where = np.argwhere(signs == 0)[0]
        raise NotInDomainError(
            f"coordinate {int(where[-1])} is zero at threshold; "
            "the count is only defined on all-nonzero vectors"
        )
    counts = _count_from_signs(signs)
    if x.ndim == 1:
        return int(counts)
    return counts.astype(int)


@dataclass(frozen=True)
class LyapunovBounds:
    """Envelope [lower, upper] of the count over sign completions of zeros."""

    lower: int
    upper: int

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    def __iter__(self):
        return iter((self.lower, self.upper))


def _envelope_from_signs(signs: np.ndarray) -> tuple[int, int]:
    """Min/max of the edge count over all sign choices for zero entries.

    Dynamic program along the chain: condition on the sign assigned to the
    first coordinate, sweep once tracking the best partial count for each
    sign of the current coordinate, then close the cycle with the twisted
    edge.  O(n) per conditioning pass.
    """
    n = len(signs)
    first_choices = (int(signs[0]),) if signs[0] else (-1, 1)
    best_lo = n + 1
    best_hi = -1
    for s0 in first_choices:
        lo = {s0: 0}
        hi = {s0: 0}
        for j in range(1, n):
            choices = (int(signs[j]),) if signs[j] else (-1, 1)
            lo = {
                s: min(v + (1 if s * p < 0 else 0) for p, v in lo.items())
                for s in choices
            }
            hi = {
                s: max(v + (1 if s * p < 0 else 0) for p, v in hi.items())
                for s in choices
            }
        # closing edge is twisted: discordance means equal signs here
        close_lo = min(v + (1 if s0 * p > 0 else 0) for p, v in lo.items())
        close_hi = max(v + (1 if s0 * p > 0 else 0) for p, v in hi.items())
        best_lo = min(best_lo, close_lo)
        best_hi = max(best_hi, close_hi)
    return best_lo, best_hi


def lyapunov_bounds(x: np.ndarray) -> LyapunovBounds:
    """Envelope of the count over all sign assignments of zero coordinates.

    Nonzero coordinates keep their sign; each thresholded-zero coordinate
    ranges over both signs.  The origin, where every completion is free,
    returns (1, value_ceiling(n)) by that same rule.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("expected a single vector")
    if x.shape[0] < 2:
        raise InvalidInputError("expected a vector of length at least 2")
    lo, hi = _envelope_from_signs(sign_pattern(x))
    return LyapunovBounds(lo, hi)


def in_cone(x: np.ndarray, h: int, side: str = "lower") -> bool:
    """Membership in the nested cones cut out by the count envelopes.

    The lower cone at level h consists of the origin together with points
    whose upper envelope is at most 2h - 1; the upper cone pairs the origin
    with points whose lower envelope exceeds 2h - 1.  Level 0 gives the
    origin alone on the lower side and the whole space on the upper side.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    h_max = (value_ceiling(n) + 1) // 2
    if not 0 <= h <= h_max:
        raise InvalidInputError(f"cone level h={h} outside [0, {h_max}]")
    if side not in ("lower", "upper"):
        raise InvalidInputError(f"side must be 'lower' or 'upper', got {side!r}")
    if not np.any(sign_pattern(x)):
        return True
    bounds = lyapunov_bounds(x)
    if side == "lower":
        return bounds.upper <= 2 * h - 1
    return bounds.lower > 2 * h - 1


def _instant_matrix_violations(a: np.ndarray) -> list[str]:
    """Check the cyclic mask and coupling signs of a single matrix."""
    n = a.shape[0]
    problems = []
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n), np.arange(n)] = True
    mask[np.arange(n), np.arange(-1, n - 1)] = True
    off = np.abs(np.where(mask, 0.0, a))
    if np.any(off > MASK_TOL):
        i, j = np.argwhere(off > MASK_TOL)[0]
        problems.append(f"entry ({int(i)},{int(j)}) outside the cyclic mask is nonzero")
    if a[0, n - 1] >= 0:
        problems.append("corner coupling must be negative")
    for i in range(1, n):
        if a[i, i - 1] <= 0:
            problems.append(f"subdiagonal coupling ({i},{i - 1}) must be positive")
    return problems


@dataclass(frozen=True)
class CrossingPrediction:
    """Predicted sign resolution of a linear-flow solution near a zero instant.

    ``signs_forward``/``signs_backward`` are the patterns immediately after
    and before the instant; ``count_forward``/``count_backward`` the matching
    counts.  ``dominant_terms`` maps each zero index to the pair (exponent of
    the leading time power, its coefficient) from which the signs follow.
    """

    zero_segments: list[list[int]]
    signs_forward: np.ndarray
    signs_backward: np.ndarray
    count_forward: int
    count_backward: int
    dominant_terms: dict[int, tuple[int, float]] = field(repr=False)


def predict_crossing(a0: np.ndarray, x0: np.ndarray) -> CrossingPrediction:
    """Resolve zero coordinates of ``x0`` under the flow of ``xdot = a0 x``.

    Each zero coordinate inherits, to leading order in time, the sign of its
    cyclically nearest nonzero predecessor propagated through the chain of
    couplings between them (the corner coupling enters when the chain wraps
    past the first coordinate).  Reversing time flips the sign once per step
    of that chain.

    The forward count always equals the lower envelope of ``x0`` and the
    backward count the upper envelope; callers cross-check this against
    ``lyapunov_bounds`` rather than trusting either path alone.
    """
    a0 = np.asarray(a0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[0]
    if a0.shape != (n, n):
        raise InvalidInputError(f"matrix shape {a0.shape} does not match vector length {n}")
    problems = _instant_matrix_violations(a0)
    if problems:
        raise InvalidInputError("; ".join(problems))
    signs = sign_pattern(x0)
    if not signs.any():
        raise InvalidInputError("cannot predict a crossing at the origin")

    forward = signs.copy()
    backward = signs.copy()
    dominant: dict[int, tuple[int, float]] = {}
    for j in np.flatnonzero(signs == 0):
        j = int(j)
        m = 1
        while signs[(j - m) % n] == 0:
            m += 1
        i = (j - m) % n
        coefficient = float(x0[i])
        for step in range(m):
            row = (i + step + 1) % n
            coefficient *= a0[row, (i + step) % n]
        if coefficient == 0.0:
            raise DegeneracyError(
                f"leading coefficient for coordinate {j} underflowed to zero"
            )
        lead = 1 if coefficient > 0 else -1
        forward[j] = lead
        backward[j] = lead * (-1 if m % 2 else 1)
        dominant[j] = (m, coefficient)

    segments: list[list[int]] = []
    for j in range(n):
        if signs[j] == 0 and signs[(j - 1) % n] != 0:
            run = []
            k = j
            while signs[k] == 0:
                run.append(k)
                k = (k + 1) % n
            segments.append(run)

    return CrossingPrediction(
        zero_segments=segments,
        signs_forward=forward,
        signs_backward=backward,
        count_forward=int(_count_from_signs(forward)),
        count_backward=int(_count_from_signs(backward)),
        dominant_terms=dominant,
    )
