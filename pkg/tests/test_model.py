"""Tests for system construction, feedback validation, and normal form."""

import json

import numpy as np
import pytest

from mcfs.errors import InvalidInputError, UnsupportedFeedbackSignError
from mcfs.model import (
    CyclicSystem,
    builtin,
    fd_jacobian,
    load_model,
    normalize,
    validate_feedback,
)


def ring_matrix(n, corner=-1.0):
    a = np.zeros((n, n))
    for i in range(1, n):
        a[i, i - 1] = 1.0
    a[0, n - 1] = corner
    return a


class TestConstruction:
    def test_rejects_small_dimension(self):
        with pytest.raises(InvalidInputError):
            builtin("linear_ring", {"matrix": [[0.0, -1.0], [1.0, 0.0]]})

    def test_rejects_positive_loop(self):
        a = ring_matrix(3, corner=1.0)
        with pytest.raises(UnsupportedFeedbackSignError):
            builtin("linear_ring", {"matrix": a})

    def test_rejects_bad_delta_length(self):
        with pytest.raises(InvalidInputError):
            CyclicSystem(n=3, f=lambda x: x, jac=None, delta=[-1, 1])

    def test_fd_jacobian_fallback(self):
        a = ring_matrix(4)
        sys = CyclicSystem(n=4, f=lambda x: a @ x, jac=None, delta=[-1, 1, 1, 1])
        np.testing.assert_allclose(sys.jac(np.ones(4)), a, atol=1e-7)

    def test_fd_jacobian_matches_analytic_goodwin(self):
        sys = builtin("goodwin", {"n": 3, "p": 10, "b": 0.4})
        x = np.array([0.6, 1.1, 1.3])
        np.testing.assert_allclose(fd_jacobian(sys.f, x), sys.jac(x), atol=1e-6)


class TestValidateFeedback:
    def test_reference_ring_ok(self):
        sys = builtin("linear_ring", {"matrix": ring_matrix(4)})
        report = validate_feedback(sys, (-2.0, 2.0), num_samples=100, seed=1)
        assert report.ok
        assert report.samples_checked == 100
        assert report.violations == []

    def test_flipped_corner_detected(self):
        # construct by hand since builtin would reject the positive loop
        a = ring_matrix(4, corner=1.0)
        a[1, 0] = -1.0  # keep the product negative, move the flip elsewhere
        sys = CyclicSystem(
            n=4, f=lambda x: a @ x, jac=lambda x: a.copy(), delta=[-1, 1, 1, 1]
        )
        report = validate_feedback(sys, (-2.0, 2.0), num_samples=10, seed=1)
        assert not report.ok
        violated_edges = {v[1] for v in report.violations}
        assert (0, 3) in violated_edges and (1, 0) in violated_edges

    def test_mask_violation_detected(self):
        a = ring_matrix(4)
        a[0, 1] = 0.7
        sys = CyclicSystem(
            n=4, f=lambda x: a @ x, jac=lambda x: a.copy(), delta=[-1, 1, 1, 1]
        )
        report = validate_feedback(sys, (-1.0, 1.0), num_samples=5, seed=0)
        assert not report.ok
        assert any(v[1] == (0, 1) for v in report.violations)

    def test_goodwin_on_positive_box(self):
        sys = builtin("goodwin", {"n": 3, "p": 10, "b": 0.4})
        report = validate_feedback(sys, (0.01, 5.0), num_samples=200, seed=3)
        assert report.ok

    def test_hill_partial_matches_quotient_rule(self):
        # independent derivative route: differentiate 1/(1+x^p) by hand
        sys = builtin("goodwin", {"n": 3, "p": 10.0, "b": 0.4})
        for xn in (0.3, 0.9, 1.7, 4.2):
            x = np.array([0.5, 0.5, xn])
            expected = -10.0 * xn**9 / (1.0 + xn**10) ** 2
            assert sys.jac(x)[0, 2] == pytest.approx(expected, rel=1e-12)
            assert expected < 0

    def test_box_mismatch(self):
        sys = builtin("goodwin", {"n": 3, "p": 10, "b": 0.4})
        with pytest.raises(InvalidInputError):
            validate_feedback(sys, np.zeros((4, 2)), num_samples=5, seed=0)

    def test_deterministic(self):
        sys = builtin("goodwin", {"n": 4, "p": 6, "b": 0.5})
        r1 = validate_feedback(sys, (0.01, 5.0), num_samples=50, seed=9)
        r2 = validate_feedback(sys, (0.01, 5.0), num_samples=50, seed=9)
        assert r1.ok == r2.ok and r1.samples_checked == r2.samples_checked


class TestNormalize:
    def test_already_standard(self):
        sys = builtin("goodwin", {"n": 3, "p": 10, "b": 0.4})
        normalized, mu = normalize(sys)
        assert normalized is sys
        assert list(mu) == [1, 1, 1]

    def test_three_dim_flip(self):
        a = np.zeros((3, 3))
        a[1, 0] = 1.0
        a[2, 1] = -1.0
        a[0, 2] = 1.0
        sys = builtin("linear_ring", {"matrix": a})
        assert list(sys.delta) == [1, 1, -1]
        normalized, mu = normalize(sys)
        assert list(mu) == [1, 1, -1]
        assert list(normalized.delta) == [-1, 1, 1]

    def test_four_dim_flip(self):
        a = np.zeros((4, 4))
        a[1, 0] = -1.0
        a[2, 1] = 1.0
        a[3, 2] = 1.0
        a[0, 3] = 1.0
        sys = builtin("linear_ring", {"matrix": a})
        assert list(sys.delta) == [1, -1, 1, 1]
        normalized, mu = normalize(sys)
        assert list(mu) == [1, -1, -1, -1]
        assert list(normalized.delta) == [-1, 1, 1, 1]

    def test_conjugation_identity(self):
        a = np.zeros((4, 4))
        a[1, 0] = 0.8
        a[2, 1] = -1.3
        a[3, 2] = 0.6
        a[0, 3] = 2.0
        np.fill_diagonal(a, [-0.1, 0.2, -0.3, 0.4])
        sys = builtin("linear_ring", {"matrix": a})
        normalized, mu = normalize(sys)
        rng = np.random.default_rng(17)
        for _ in range(20):
            x = rng.normal(size=4)
            lhs = mu * np.asarray(sys.f(x))
            rhs = np.asarray(normalized.f(mu * x))
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14)
        report = validate_feedback(normalized, (-2.0, 2.0), num_samples=50, seed=2)
        assert report.ok

    def test_normalized_jacobian_consistent(self):
        a = np.zeros((3, 3))
        a[1, 0] = -1.0
        a[2, 1] = 1.5
        a[0, 2] = 0.7
        sys = builtin("linear_ring", {"matrix": a})
        normalized, mu = normalize(sys)
        j = normalized.jac(np.ones(3))
        np.testing.assert_allclose(j, np.diag(mu) @ a @ np.diag(mu), atol=1e-14)


class TestBuiltin:
    def test_goodwin_velocity(self):
        sys = builtin("goodwin", {"n": 3, "p": 2, "b": 0.5})
        v = sys.f(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(v, [1.0 / 10.0 - 0.5, 1.0 - 1.0, 2.0 - 1.5])

    def test_goodwin_rejects_bad_params(self):
        with pytest.raises(InvalidInputError):
            builtin("goodwin", {"n": 3, "p": -1, "b": 0.4})
        with pytest.raises(InvalidInputError):
            builtin("goodwin", {"n": 3, "p": 10, "b": 0.0})
        with pytest.raises(InvalidInputError):
            builtin("goodwin", {"n": 3, "p": 10})

    def test_unknown_name(self):
        with pytest.raises(InvalidInputError):
            builtin("lorenz", {})

    def test_ring_delta_standard(self):
        sys = builtin("linear_ring", {"matrix": ring_matrix(5)})
        assert list(sys.delta) == [-1, 1, 1, 1, 1]

    def test_ring_rejects_off_mask(self):
        a = ring_matrix(4)
        a[2, 0] = 1.0
        with pytest.raises(InvalidInputError):
            builtin("linear_ring", {"matrix": a})

    def test_ring_rejects_zero_coupling(self):
        a = ring_matrix(4)
        a[2, 1] = 0.0
        with pytest.raises(InvalidInputError):
            builtin("linear_ring", {"matrix": a})


class TestLoadModel:
    def test_from_dict_builtin(self):
        sys = load_model({"name": "goodwin", "params": {"n": 3, "p": 10, "b": 0.4}})
        assert sys.name == "goodwin" and sys.n == 3

    def test_from_dict_matrix(self):
        sys = load_model({"matrix": ring_matrix(4).tolist()})
        assert sys.n == 4

    def test_from_file(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"name": "goodwin", "params": {"n": 4, "p": 8, "b": 0.5}}))
        sys = load_model(path)
        assert sys.n == 4

    def test_rejects_garbage(self):
        with pytest.raises(InvalidInputError):
            load_model({"species": 3})
