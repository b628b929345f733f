"""Nonlinear layer: orbits, indices, connections, transversality."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest
import scipy.linalg
from scipy.optimize import brentq

from mcfs.errors import (
    DegeneracyError,
    DivergenceError,
    InconclusiveError,
    InvalidInputError,
    NotConnectedError,
    NotFoundError,
)
from mcfs.linflow import validate_linear
from mcfs.model import builtin
from mcfs.orbits import (
    TAU_CONN,
    TAU_TRANS,
    Trajectory,
    connect,
    difference_signature,
    estimate_period,
    find_equilibrium,
    find_periodic,
    h_index,
    integrate,
    linearization_along,
    rebase_periodic,
    transversality,
)
from mcfs.signature import lyapunov_value

GOODWIN = {"n": 3, "p": 10.0, "b": 0.4}

# ring eigenvalues have real parts 0.5, 0.5, -1 before the diagonal shift,
# so a decay of 1.2 puts the whole spectrum strictly left of the axis
STABLE_RING = [
    [-1.2, 0.0, -1.0],
    [1.0, -1.2, 0.0],
    [0.0, 1.0, -1.2],
]


@pytest.fixture(scope="module")
def goodwin():
    return builtin("goodwin", GOODWIN)


@pytest.fixture(scope="module")
def ring():
    return builtin("linear_ring", {"matrix": STABLE_RING})


@pytest.fixture(scope="module")
def eq(goodwin):
    return find_equilibrium(goodwin, np.full(3, 1.0))


@pytest.fixture(scope="module")
def po(goodwin):
    settle = integrate(goodwin, np.array([0.2, 0.3, 1.8]), 0.0, 400.0)
    point, period = estimate_period(goodwin, settle.states[-1], 40.0)
    return find_periodic(goodwin, point, period)


@pytest.fixture(scope="module")
def conn(goodwin, eq, po):
    return connect(goodwin, eq, po, offset=5e-5, horizon=900.0)


@pytest.fixture(scope="module")
def report(goodwin, eq, po, conn):
    return transversality(goodwin, eq, po, conn)


class TestIntegrate:
    def test_matches_matrix_exponential(self, ring):
        x0 = np.array([1.0, -0.5, 0.3])
        traj = integrate(ring, x0, 0.0, 2.0, tol=1e-10)
        expected = scipy.linalg.expm(2.0 * np.asarray(STABLE_RING)) @ x0
        assert np.allclose(traj.states[-1], expected, atol=1e-8)

    def test_backward_has_ascending_times(self, ring):
        x0 = np.array([0.4, 0.1, -0.2])
        forward = integrate(ring, x0, 0.0, 3.0, tol=1e-10)
        back = integrate(ring, forward.states[-1], 3.0, 0.0, tol=1e-10)
        assert np.all(np.diff(back.times) > 0)
        assert np.allclose(back.states[0], x0, atol=1e-7)

    def test_dense_interpolant(self, ring):
        traj = integrate(ring, np.array([1.0, 0.0, 0.0]), 0.0, 4.0, tol=1e-10)
        mid = traj.times[len(traj.times) // 2]
        assert np.allclose(traj.at(mid), traj.states[len(traj.times) // 2], atol=1e-12)
        batch = traj.at(np.array([0.5, 1.5]))
        assert batch.shape == (2, 3)

    def test_t_eval_grid(self, ring):
        grid = np.linspace(0.0, 1.0, 7)
        traj = integrate(ring, np.ones(3), 0.0, 1.0, t_eval=grid)
        assert np.allclose(traj.times, grid)

    def test_blowup_raises(self):
        growth = builtin(
            "linear_ring",
            {"matrix": [[3.0, 0.0, -1.0], [1.0, 3.0, 0.0], [0.0, 1.0, 3.0]]},
        )
        with pytest.raises(DivergenceError):
            integrate(growth, np.ones(3), 0.0, 30.0)

    def test_trajectory_rejects_unsorted_times(self):
        with pytest.raises(InvalidInputError):
            Trajectory(times=np.array([0.0, 2.0, 1.0]), states=np.zeros((3, 3)))

    def test_shifted_view(self, ring):
        traj = integrate(ring, np.ones(3), 0.0, 2.0, tol=1e-10)
        moved = traj.shifted(-1.0)
        assert np.allclose(moved.times, traj.times - 1.0)
        assert np.allclose(moved.at(0.5), traj.at(1.5), atol=1e-12)


class TestFindEquilibrium:
    def test_matches_scalar_reduction(self, eq):
        p, b = GOODWIN["p"], GOODWIN["b"]
        # chain of balances collapses to one scalar equation in the last coordinate
        root = brentq(lambda z: b**3 * z * (1.0 + z**p) - 1.0, 0.1, 10.0, xtol=1e-14)
        assert abs(eq.point[2] - root) < 1e-10
        assert abs(eq.point[1] - b * root) < 1e-10
        assert abs(eq.point[0] - b * b * root) < 1e-10

    def test_residual_meets_tolerance(self, eq):
        assert eq.residual <= 1e-10

    def test_classification(self, eq):
        assert eq.unstable_dim == 2
        assert eq.hyperbolic
        real_parts = np.sort(eq.eigenvalues.real)
        assert real_parts[0] < 0 < real_parts[1]
        assert np.isclose(eq.eigenvalues.real.sum(), -3 * GOODWIN["b"], atol=1e-10)

    def test_split_present(self, eq):
        assert eq.split is not None
        assert eq.split.levels == 2
        # expanding pair lands in the first modulus block
        assert eq.split.blocks[0].shape == (3, 2)

    def test_converges_from_far_guess(self, goodwin, eq):
        other = find_equilibrium(goodwin, np.array([5.0, 5.0, 5.0]))
        assert np.allclose(other.point, eq.point, atol=1e-9)

    def test_ring_origin(self, ring):
        found = find_equilibrium(ring, np.array([0.3, -0.2, 0.5]))
        assert np.allclose(found.point, 0.0, atol=1e-12)
        assert found.unstable_dim == 0

    def test_iteration_budget(self, goodwin):
        with pytest.raises(NotFoundError):
            find_equilibrium(goodwin, np.array([50.0, 50.0, 50.0]), max_iter=2)


class TestFindPeriodic:
    def test_basic_properties(self, po):
        assert 8.0 < po.period < 11.0
        assert po.hyperbolic
        assert po.trivial_multiplier_error <= 1e-6
        assert po.multipliers.shape == (3,)

    def test_closure(self, po):
        gap = np.max(np.abs(po.samples.states[-1] - po.samples.states[0]))
        assert gap <= 1e-8

    def test_multiplier_moduli(self, po):
        moduli = np.sort(np.abs(po.multipliers))[::-1]
        assert abs(moduli[0] - 1.0) <= 1e-6
        assert moduli[1] < 1.0 - 1e-3
        assert moduli[2] < moduli[1]

    def test_abel_residual_small(self, po):
        assert po.monodromy.abel_residual < 1e-8

    def test_product_of_multipliers_matches_trace_integral(self, po):
        b = GOODWIN["b"]
        expected = np.exp(-3 * b * po.period)
        assert np.isclose(np.prod(np.abs(po.multipliers)), expected, rtol=1e-6)

    def test_restart_determinism(self, goodwin, po):
        anchor = po.samples.at(po.period / 3.0)
        again = find_periodic(goodwin, anchor, po.period)
        assert abs(again.period - po.period) < 1e-6
        assert np.max(np.abs(again.base_point - anchor)) < 1e-6

    def test_rebase(self, goodwin, po):
        moved = rebase_periodic(goodwin, po, 2.0)
        assert abs(moved.period - po.period) < 1e-9
        assert np.max(np.abs(moved.base_point - po.samples.at(2.0))) < 1e-6
        a = np.sort(np.abs(po.multipliers))
        b = np.sort(np.abs(moved.multipliers))
        assert np.allclose(a, b, atol=1e-6)

    def test_trivial_level(self, po):
        assert po.trivial_level == 1
        assert po.split.levels == 2

    def test_linear_system_has_no_orbit(self, ring):
        with pytest.raises(NotFoundError):
            find_periodic(ring, np.array([1.0, 1.0, 1.0]), 6.0)

    def test_nonpositive_period_guess(self, goodwin):
        with pytest.raises(InvalidInputError):
            find_periodic(goodwin, np.ones(3), -1.0)


class TestEstimatePeriod:
    def test_near_true_period(self, goodwin, po):
        point, guess = estimate_period(goodwin, po.base_point, 40.0)
        assert abs(guess - po.period) / po.period < 0.05

    def test_equilibrium_reference_rejected(self, ring):
        with pytest.raises(InvalidInputError):
            estimate_period(ring, np.zeros(3), 10.0)


class TestLinearizationAlong:
    def test_matches_jacobian(self, goodwin, conn):
        lin = linearization_along(goodwin, conn)
        t = float(conn.times[37])
        assert np.allclose(lin.a(t), goodwin.jac(conn.at(t)), atol=1e-12)

    def test_periodic_folding(self, goodwin, po):
        lin = po.linearization
        assert lin.period == po.period
        assert np.allclose(lin.a(0.3 + po.period), lin.a(0.3), atol=1e-9)

    def test_orbit_linearization_validates(self, po):
        grid = np.linspace(0.0, po.period, 150)
        assert validate_linear(po.linearization, grid).ok


class TestHIndex:
    def test_orbit_forward_and_backward(self, goodwin, po):
        assert h_index(goodwin, po.samples, "forward") == 1
        assert h_index(goodwin, po.samples, "backward") == 1

    def test_connection_indices(self, goodwin, conn):
        assert h_index(goodwin, conn, "forward") == 1
        assert h_index(goodwin, conn, "backward") == 1

    def test_resting_trajectory_inconclusive(self, goodwin, eq):
        grid = np.linspace(0.0, 5.0, 50)
        still = integrate(goodwin, eq.point, 0.0, 5.0, t_eval=grid)
        with pytest.raises(InconclusiveError):
            h_index(goodwin, still, "forward")

    def test_short_trajectory_inconclusive(self, goodwin):
        stub = Trajectory(times=np.array([0.0, 1.0]), states=np.ones((2, 3)))
        with pytest.raises(InconclusiveError):
            h_index(goodwin, stub, "forward")

    def test_direction_validated(self, goodwin, po):
        with pytest.raises(InvalidInputError):
            h_index(goodwin, po.samples, "sideways")


class TestDifferenceSignature:
    def test_orbit_cloud_all_one(self, po):
        cloud = po.samples.states[:-1:10]
        result = difference_signature(cloud, h=1)
        assert result.ok
        assert result.expected == 1
        assert result.pairs_checked == len(cloud) * (len(cloud) - 1) // 2

    def test_orbit_with_equilibrium(self, eq, po):
        cloud = np.vstack([eq.point, po.samples.states[:-1:10]])
        assert difference_signature(cloud, h=1).ok

    def test_detects_wrong_level(self):
        pts = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
        result = difference_signature(pts, h=2)
        assert not result.ok
        assert result.violations

    def test_sampled_pairs(self, po):
        cloud = po.samples.states[:-1:5]
        result = difference_signature(cloud, h=1, pairs=50, seed=7)
        assert result.ok
        assert result.pairs_checked == 50

    def test_input_validation(self):
        with pytest.raises(InvalidInputError):
            difference_signature(np.ones((3, 3)), h=0)
        with pytest.raises(InvalidInputError):
            difference_signature(np.ones((1, 3)), h=1)


class TestConnect:
    def test_connection_reaches_target(self, conn):
        assert conn.approach is not None
        assert conn.approach.to_target[-1] < 2e-3
        assert conn.approach.to_source[0] < 1e-4
        # leaves the source, lands on the target
        assert conn.approach.to_source[-1] > 0.1
        assert conn.approach.to_target[0] > 0.1

    def test_zero_offset_stays_home(self, goodwin, eq, po):
        with pytest.raises(NotConnectedError) as excinfo:
            connect(goodwin, eq, po, offset=0.0, horizon=5.0)
        attached = excinfo.value.trajectory
        assert isinstance(attached, Trajectory)
        assert attached.approach is not None

    def test_stable_orbit_cannot_launch(self, goodwin, po, eq):
        with pytest.raises(InvalidInputError):
            connect(goodwin, po, eq, offset=1e-4, horizon=10.0)

    def test_explicit_direction_vector(self, goodwin, eq, po):
        u = -np.asarray(
            scipy.linalg.schur(eq.jacobian, output="real", sort=lambda re, im: re > 0)[1][:, 0]
        )
        other = connect(goodwin, eq, po, offset=5e-5, horizon=900.0, direction=u)
        assert other.approach.to_target[-1] < 2e-3

    def test_zero_direction_rejected(self, goodwin, eq, po):
        with pytest.raises(InvalidInputError):
            connect(goodwin, eq, po, offset=1e-4, horizon=10.0, direction=np.zeros(3))


class TestTransversality:
    def test_demo_verdict(self, report):
        assert report.verdict == "transversal"
        assert report.stacked_rank == 3
        assert report.sigma_min > TAU_TRANS
        assert report.sigma_min < 2.0

    def test_demo_indices_and_dims(self, report):
        assert report.h_plus == 1
        assert report.h_minus == 1
        assert report.source_kind == "equilibrium"
        assert report.target_kind == "periodic"
        assert report.dim_unstable_source == 2
        assert report.dim_unstable_target == 1
        assert report.within_theorem

    def test_demo_distances(self, report):
        assert 0.0 < report.manifold_distance <= 10 * TAU_CONN

    def test_transported_bases_orthonormal(self, report):
        u, s = report.unstable_basis, report.stable_basis
        assert u.shape == (3, 2)
        assert s.shape == (3, 2)
        assert np.allclose(u.T @ u, np.eye(2), atol=1e-8)
        assert np.allclose(s.T @ s, np.eye(2), atol=1e-8)

    def test_connection_retimed_to_midpoint(self, report, conn):
        times = report.connection.times
        assert times[0] < 0.0 < times[-1]
        mid = int(np.argmin(np.maximum(conn.approach.to_source, conn.approach.to_target)))
        assert np.allclose(report.connection.at(0.0), conn.states[mid], atol=1e-9)

    def test_truncated_connection_inconclusive(self, goodwin, eq, po, conn):
        cut = len(conn.times) // 2
        partial = dataclasses.replace(
            conn, times=conn.times[:cut], states=conn.states[:cut], approach=None
        )
        outcome = transversality(goodwin, eq, po, partial)
        assert outcome.verdict == "inconclusive"
        assert outcome.manifold_distance > 10 * TAU_CONN
        assert any("inconclusive" in note for note in outcome.notes)

    def test_same_equilibrium_both_ends(self, goodwin, eq):
        grid = np.linspace(0.0, 10.0, 60)
        still = integrate(goodwin, eq.point, 0.0, 10.0, t_eval=grid)
        outcome = transversality(goodwin, eq, eq, still)
        assert outcome.source_kind == outcome.target_kind == "equilibrium"
        assert not outcome.within_theorem
        assert outcome.h_plus is None and outcome.h_minus is None
        assert outcome.stacked_rank == 3

    def test_nonhyperbolic_rejected(self, goodwin, eq, conn):
        frozen = dataclasses.replace(eq, hyperbolic=False)
        with pytest.raises(InvalidInputError):
            transversality(goodwin, frozen, eq, conn)

    def test_wrong_types_rejected(self, goodwin, eq, conn):
        with pytest.raises(InvalidInputError):
            transversality(goodwin, eq, "orbit", conn)


class TestVelocityCount:
    def test_velocity_count_along_connection(self, goodwin, conn):
        # velocity sign count is 1 along the entire demo connection
        for state in conn.states[:: len(conn.states) // 40]:
            v = np.asarray(goodwin.f(state), dtype=float)
            v = v / np.max(np.abs(v))
            assert lyapunov_value(v) == 1
