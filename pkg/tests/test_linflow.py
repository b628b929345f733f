"""Tests for transition matrices, subspace transport, and cone verification."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from mcfs.errors import InvalidInputError
from mcfs.linflow import (
    CoefficientFn,
    LinearCyclicSystem,
    monodromy,
    monotonicity_report,
    propagate_subspace,
    random_linear_system,
    sample_N_along,
    transition,
    validate_linear,
    verify_cone_invariance,
)
from mcfs.signature import in_cone, lyapunov_bounds, lyapunov_value, value_ceiling


def ring_matrix(n):
    a = np.zeros((n, n))
    for i in range(1, n):
        a[i, i - 1] = 1.0
    a[0, n - 1] = -1.0
    return a


def ring_system(n, period=None):
    return LinearCyclicSystem.constant(ring_matrix(n), period=period)


class TestCoefficients:
    def test_constant(self):
        fn = CoefficientFn(const=2.5)
        assert fn(0.0) == 2.5 and fn(17.3) == 2.5

    def test_trig(self):
        fn = CoefficientFn(const=1.0, terms=((0.5, 2.0, 0.25),))
        t = 0.7
        assert fn(t) == pytest.approx(1.0 + 0.5 * math.sin(2.0 * t + 0.25))

    def test_payload_round_trip(self):
        fn = CoefficientFn(const=-1.0, terms=((0.5, 1.0, 0.1), (0.2, 2.0, 1.4)))
        clone = CoefficientFn.from_payload(fn.to_payload())
        assert clone == fn

    def test_scalar_payload(self):
        assert CoefficientFn.from_payload(3.0) == CoefficientFn(const=3.0)


class TestValidateLinear:
    def test_reference_ok(self):
        report = validate_linear(ring_system(4), np.linspace(0, 10, 25))
        assert report.ok

    def test_sin_subdiagonal_fails_past_pi(self):
        sys = LinearCyclicSystem.from_entries(
            diag=[0.0, 0.0, 0.0],
            sub=[CoefficientFn(terms=((1.0, 1.0, 0.0),)), 1.0],
            corner=-1.0,
        )
        good = validate_linear(sys, [0.5, 1.0])
        assert good.ok
        bad = validate_linear(sys, [0.5, math.pi + 0.1])
        assert not bad.ok
        assert any(v[1] == (1, 0) for v in bad.violations)

    def test_periodic_trig_bounds(self):
        sys = LinearCyclicSystem.from_entries(
            diag=[0.0, 0.0, 0.0],
            sub=[
                CoefficientFn(const=1.5, terms=((1.0, 1.0, 0.0),)),
                CoefficientFn(const=1.5, terms=((1.0, 1.0, 0.5),)),
            ],
            corner=CoefficientFn(const=-1.0, terms=((0.5, 1.0, 0.0),)),
            period=2 * math.pi,
        )
        report = validate_linear(sys, np.linspace(0, 2 * math.pi, 200))
        assert report.ok

    def test_serialization_round_trip(self):
        sys = random_linear_system(5, seed=42)
        clone = LinearCyclicSystem.from_payload(sys.to_payload())
        assert clone.period == pytest.approx(sys.period)
        for t in (0.0, 0.3, 1.7):
            np.testing.assert_allclose(clone.a(t), sys.a(t), rtol=1e-15)


class TestTransition:
    def test_identity_at_equal_times(self):
        phi = transition(ring_system(3), 1.0, 1.0)
        np.testing.assert_array_equal(phi.value, np.eye(3))
        assert phi.abel_residual == 0.0

    def test_rotation_closed_form(self):
        sys = LinearCyclicSystem.constant([[0.0, -1.0], [1.0, 0.0]])
        phi = transition(sys, 0.0, math.pi / 2, tol=1e-10)
        np.testing.assert_allclose(phi.value, [[0.0, -1.0], [1.0, 0.0]], atol=1e-9)

    def test_reference_volume_preserved(self):
        phi = transition(ring_system(5), 0.0, 3.0, tol=1e-10)
        assert abs(np.linalg.det(phi.value) - 1.0) < 1e-8
        assert phi.abel_residual < 1e-7

    def test_abel_residual_on_random_systems(self):
        for seed in range(5):
            sys = random_linear_system(4, seed=seed)
            phi = transition(sys, 0.0, sys.period, tol=1e-9)
            assert phi.abel_residual < 1e-7

    def test_cocycle(self):
        sys = random_linear_system(4, seed=3)
        phi_02 = transition(sys, 0.0, 2.0, tol=1e-10).value
        phi_01 = transition(sys, 0.0, 1.0, tol=1e-10).value
        phi_12 = transition(sys, 1.0, 2.0, tol=1e-10).value
        np.testing.assert_allclose(phi_12 @ phi_01, phi_02, rtol=1e-8, atol=1e-8)

    def test_backward_inverts_forward(self):
        sys = random_linear_system(5, seed=8)
        forward = transition(sys, 0.0, 1.5, tol=1e-10).value
        backward = transition(sys, 1.5, 0.0, tol=1e-10).value
        np.testing.assert_allclose(backward @ forward, np.eye(5), atol=1e-8)

    def test_matches_exponential_for_constant(self):
        a = ring_matrix(4)
        phi = transition(LinearCyclicSystem.constant(a), 0.0, 0.8, tol=1e-11)
        np.testing.assert_allclose(phi.value, expm(0.8 * a), atol=1e-9)


class TestMonodromy:
    def test_requires_period(self):
        with pytest.raises(InvalidInputError):
            monodromy(ring_system(3))

    def test_constant_matches_exponential(self):
        a = ring_matrix(3)
        m = monodromy(LinearCyclicSystem.constant(a, period=2.0), tol=1e-11)
        np.testing.assert_allclose(m.value, expm(2.0 * a), atol=1e-9)

    def test_periodicity_of_random_systems(self):
        sys = random_linear_system(4, seed=11)
        np.testing.assert_allclose(sys.a(0.3), sys.a(0.3 + sys.period), atol=1e-12)


def reference_pair_basis(n, ks):
    """Real spans of the closed-form eigenvectors for the plain ring."""
    columns = []
    for k in ks:
        lam = np.exp(1j * (2 * k - 1) * math.pi / n)
        eta = lam ** np.arange(n - 1, -1, -1)
        columns.append(eta.real)
        if abs(lam.imag) > 1e-12:
            columns.append(eta.imag)
    return np.column_stack(columns)


class TestPropagateSubspace:
    def test_full_space_stays_full(self):
        sys = random_linear_system(4, seed=1)
        basis = propagate_subspace(sys, np.eye(4), 0.0, 2.5)
        assert basis.shape == (4, 4)
        assert np.linalg.matrix_rank(basis) == 4
        np.testing.assert_allclose(basis.T @ basis, np.eye(4), atol=1e-10)

    def test_low_cone_block_stays_in_cone(self):
        n = 5
        sys = ring_system(n)
        block = reference_pair_basis(n, [1, 2])  # four columns, counts 1 and 3
        moved = propagate_subspace(sys, block, 0.0, 2.0, tol=1e-10)
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = moved @ rng.normal(size=4)
            assert in_cone(x, 2, "lower")

    def test_minimal_vector_keeps_count_one(self):
        sys = random_linear_system(6, seed=5)
        x = np.abs(np.random.default_rng(2).normal(size=6)) + 0.1
        assert lyapunov_value(x) == 1
        moved = propagate_subspace(sys, [x], 0.0, 4.0)
        assert lyapunov_value(moved[:, 0]) == 1

    def test_dependent_basis_rejected(self):
        sys = ring_system(3)
        v = np.array([1.0, 2.0, 3.0])
        with pytest.raises(InvalidInputError):
            propagate_subspace(sys, [v, 2 * v], 0.0, 1.0)

    def test_backward_direction_runs(self):
        sys = random_linear_system(4, seed=9)
        out = propagate_subspace(sys, np.eye(4)[:, :2], 3.0, 0.0)
        assert out.shape == (4, 2)


class TestSampleAlong:
    def test_minimal_is_constant(self):
        sys = ring_system(4)
        samples = sample_N_along(sys, np.ones(4), np.linspace(0.0, 8.0, 40))
        assert all(b.exact and b.lower == 1 for _, b in samples if b.exact)
        report = monotonicity_report(samples)
        assert report.ok and report.settled

    def test_spike_resolves_to_one(self):
        sys = ring_system(4)
        grid = np.concatenate([[0.0], np.linspace(0.01, 1.0, 20)])
        samples = sample_N_along(sys, np.array([1.0, 0.0, 0.0, 0.0]), grid)
        assert samples[0][1] == lyapunov_bounds(np.array([1.0, 0.0, 0.0, 0.0]))
        first_exact = next(b for t, b in samples if t > 0 and b.exact)
        assert first_exact.lower == 1

    def test_results_sorted_and_complete(self):
        sys = random_linear_system(3, seed=20)
        grid = np.linspace(-5.0, 5.0, 21)
        samples = sample_N_along(sys, np.array([0.4, -1.0, 0.7]), grid)
        times = [t for t, _ in samples]
        assert times == sorted(times)
        assert len(samples) == 21

    def test_rejects_origin(self):
        with pytest.raises(InvalidInputError):
            sample_N_along(ring_system(3), np.zeros(3), [0.0, 1.0])

    @pytest.mark.parametrize("seed", range(8))
    def test_monotone_on_random_systems(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(3, 7))
        sys = random_linear_system(n, seed=seed)
        x0 = rng.normal(size=n)
        samples = sample_N_along(sys, x0, np.linspace(-8.0, 8.0, 120))
        report = monotonicity_report(samples)
        assert report.ok, report.violation


class TestMonotonicityReport:
    def test_detects_increase(self):
        from mcfs.signature import LyapunovBounds

        samples = [
            (0.0, LyapunovBounds(3, 3)),
            (1.0, LyapunovBounds(1, 1)),
            (2.0, LyapunovBounds(3, 3)),
        ]
        report = monotonicity_report(samples)
        assert not report.ok
        assert report.violation == (1.0, 1, 2.0, 3)

    def test_skips_inexact(self):
        from mcfs.signature import LyapunovBounds

        samples = [
            (0.0, LyapunovBounds(3, 3)),
            (0.5, LyapunovBounds(1, 5)),
            (1.0, LyapunovBounds(3, 3)),
        ]
        report = monotonicity_report(samples)
        assert report.ok
        assert report.exact_fraction == pytest.approx(2 / 3)


class TestConeInvariance:
    def test_reference_low_cone(self):
        report = verify_cone_invariance(ring_system(5), h=1, t=1.0, samples=500, seed=4)
        assert report.ok
        assert report.samples_checked == 500
        assert not report.starved

    def test_top_level_trivial(self):
        n = 6
        h_max = (value_ceiling(n) + 1) // 2
        report = verify_cone_invariance(ring_system(n), h=h_max, t=0.5, samples=200, seed=1)
        assert report.ok

    @pytest.mark.parametrize("seed", range(4))
    def test_random_systems_all_levels(self, seed):
        n = 4 + seed
        sys = random_linear_system(n, seed=seed)
        h_max = (value_ceiling(n) + 1) // 2
        for h in range(1, h_max + 1):
            report = verify_cone_invariance(sys, h=h, t=1.0, samples=150, seed=seed)
            assert report.ok, (n, h, report.violations[:1])

    def test_h_out_of_range(self):
        with pytest.raises(InvalidInputError):
            verify_cone_invariance(ring_system(4), h=3, t=1.0)

    def test_nonpositive_time(self):
        with pytest.raises(InvalidInputError):
            verify_cone_invariance(ring_system(4), h=1, t=0.0)
