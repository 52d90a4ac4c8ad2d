# coding=utf-8
# Copyright 2025 The Federated DeePC Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Tests for deepc_utils.qp_util."""

from absl.testing import absltest
from absl.testing import parameterized
import hypothesis
from hypothesis import strategies as st
import numpy as np

from deepc_utils import qp_util


def _program(hessian, linear, a_eq=None, b_eq=None, a_ineq=None, b_ineq=None,
             constant=0.0):
  n = len(linear)
  return qp_util.QuadraticProgram(
      hessian=np.asarray(hessian, dtype=np.float64),
      linear=np.asarray(linear, dtype=np.float64),
      a_eq=np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, np.float64),
      b_eq=np.zeros(0) if b_eq is None else np.asarray(b_eq, np.float64),
      a_ineq=(np.zeros((0, n)) if a_ineq is None else
              np.asarray(a_ineq, np.float64)),
      b_ineq=np.zeros(0) if b_ineq is None else np.asarray(b_ineq, np.float64),
      constant=constant,
  )


def _random_hessian(rng, n):
  factor = rng.standard_normal((n, n))
  return factor.T @ factor + np.eye(n)


def _projected_gradient(qp, project, start, iterations=6000):
  """Reference minimizer by projected gradient descent."""
  step = 1.0 / (2.0 * np.linalg.eigvalsh(qp.hessian)[-1])
  g = project(start)
  for _ in range(iterations):
    g = project(g - step * qp.gradient(g))
  return g


class QuadraticProgramTest(absltest.TestCase):

  def test_rejects_inconsistent_shapes(self):
    with self.assertRaises(ValueError):
      _program(np.eye(2), [1.0, 2.0, 3.0])
    with self.assertRaises(ValueError):
      _program(np.eye(2), [1.0, 2.0], a_eq=[[1.0, 1.0]], b_eq=[1.0, 2.0])

  def test_objective_includes_constant(self):
    qp = _program([[6.0]], [-16.0], constant=16.0)
    self.assertAlmostEqual(qp.objective(np.array([4.0 / 3.0])), 16.0 / 3.0)


class SolveTest(parameterized.TestCase):

  def test_unconstrained_scalar(self):
    qp = _program([[6.0]], [-16.0], constant=16.0)
    result = qp_util.solve(qp)
    self.assertEqual(result.status, qp_util.QpStatus.OPTIMAL)
    np.testing.assert_allclose(result.g, [4.0 / 3.0])
    self.assertAlmostEqual(qp.objective(result.g), 16.0 / 3.0)

  def test_equality_constrained(self):
    qp = _program(np.eye(2), [0.0, 0.0], a_eq=[[1.0, 1.0]], b_eq=[2.0])
    result = qp_util.solve(qp)
    np.testing.assert_allclose(result.g, [1.0, 1.0])
    np.testing.assert_allclose(result.eq_multipliers, [-2.0], atol=1e-12)

  def test_singular_hessian_gives_minimum_norm_point(self):
    qp = _program(np.zeros((2, 2)), [0.0, 0.0], a_eq=[[1.0, 1.0]], b_eq=[2.0])
    result = qp_util.solve(qp)
    self.assertEqual(result.status, qp_util.QpStatus.OPTIMAL)
    self.assertTrue(result.degenerate)
    np.testing.assert_allclose(result.g, [1.0, 1.0])

  def test_linear_descent_without_curvature_is_unbounded(self):
    qp = _program(np.zeros((2, 2)), [1.0, 0.0])
    result = qp_util.solve(qp)
    self.assertEqual(result.status, qp_util.QpStatus.UNBOUNDED_GUARD)

  def test_inconsistent_equalities_are_infeasible(self):
    qp = _program(np.eye(2), [0.0, 0.0], a_eq=[[1.0, 0.0], [1.0, 0.0]],
                  b_eq=[0.0, 1.0])
    self.assertEqual(qp_util.solve(qp).status, qp_util.QpStatus.INFEASIBLE)

  def test_active_upper_bound(self):
    # minimize (g - 2)^2 subject to g <= 1.
    qp = _program([[1.0]], [-4.0], a_ineq=[[1.0]], b_ineq=[1.0], constant=4.0)
    result = qp_util.solve(qp)
    self.assertEqual(result.status, qp_util.QpStatus.OPTIMAL)
    np.testing.assert_allclose(result.g, [1.0], atol=1e-10)
    self.assertEqual(result.active_set, (0,))
    np.testing.assert_allclose(result.ineq_multipliers, [2.0], atol=1e-8)

  def test_inactive_bound(self):
    qp = _program([[1.0]], [-4.0], a_ineq=[[1.0]], b_ineq=[5.0])
    result = qp_util.solve(qp)
    np.testing.assert_allclose(result.g, [2.0], atol=1e-10)
    self.assertEqual(result.active_set, ())

  def test_empty_box_is_infeasible(self):
    qp = _program([[1.0]], [0.0], a_ineq=[[1.0], [-1.0]], b_ineq=[-1.0, -1.0])
    self.assertEqual(qp_util.solve(qp).status, qp_util.QpStatus.INFEASIBLE)

  @parameterized.named_parameters(
      ("exact", (0,)),
      ("wrong", (1,)),
      ("out_of_range", (7,)),
  )
  def test_warm_start_does_not_change_the_solution(self, warm_start):
    qp = _program(np.eye(2), [-4.0, 4.0],
                  a_ineq=[[1.0, 0.0], [0.0, -1.0]], b_ineq=[1.0, 1.0])
    cold = qp_util.solve(qp)
    warm = qp_util.solve(qp, warm_start=warm_start)
    np.testing.assert_allclose(warm.g, cold.g, atol=1e-10)
    np.testing.assert_allclose(cold.g, [1.0, -1.0], atol=1e-10)
    self.assertEqual(warm.active_set, (0, 1))

  def test_reused_factor(self):
    hessian = np.diag([1.0, 2.0])
    a_eq = np.array([[1.0, 1.0]])
    factor = qp_util.EqualityQpFactor(hessian, a_eq)
    for b in (0.0, 1.0, -3.0):
      qp = _program(hessian, [1.0, -1.0], a_eq=a_eq, b_eq=[b])
      np.testing.assert_allclose(
          qp_util.solve(qp, factor=factor).g, qp_util.solve(qp).g)

  def test_equality_instances_match_kkt_solution(self):
    rng = np.random.default_rng(3)
    for _ in range(100):
      n = int(rng.integers(2, 9))
      k = int(rng.integers(1, n))
      qp = _program(_random_hessian(rng, n), rng.standard_normal(n),
                    a_eq=rng.standard_normal((k, n)),
                    b_eq=rng.standard_normal(k))
      kkt = np.block([[2.0 * qp.hessian, qp.a_eq.T],
                      [qp.a_eq, np.zeros((k, k))]])
      reference = np.linalg.solve(kkt, np.concatenate([-qp.linear, qp.b_eq]))
      result = qp_util.solve(qp)
      self.assertLessEqual(
          abs(qp.objective(result.g) - qp.objective(reference[:n])), 1e-6)
      self.assertLessEqual(max(qp_util.kkt_residuals(qp, result)), 1e-7)

  def test_box_instances_match_projected_gradient(self):
    rng = np.random.default_rng(5)
    for _ in range(100):
      n = int(rng.integers(1, 9))
      low = -rng.uniform(0.1, 1.0, n)
      high = rng.uniform(0.1, 1.0, n)
      qp = _program(_random_hessian(rng, n), 4.0 * rng.standard_normal(n),
                    a_ineq=np.vstack([np.eye(n), -np.eye(n)]),
                    b_ineq=np.concatenate([high, -low]))
      reference = _projected_gradient(
          qp, lambda g, low=low, high=high: np.clip(g, low, high), np.zeros(n))
      result = qp_util.solve(qp)
      self.assertEqual(result.status, qp_util.QpStatus.OPTIMAL)
      self.assertLessEqual(
          qp.objective(result.g) - qp.objective(reference), 1e-6)
      self.assertLessEqual(max(qp_util.kkt_residuals(qp, result)), 1e-7)

  @hypothesis.settings(max_examples=50, deadline=None)
  @hypothesis.given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
  def test_solution_satisfies_kkt(self, seed, n):
    rng = np.random.default_rng(seed)
    qp = _program(_random_hessian(rng, n), rng.standard_normal(n),
                  a_ineq=np.vstack([np.eye(n), -np.eye(n)]),
                  b_ineq=np.ones(2 * n))
    result = qp_util.solve(qp)
    residuals = qp_util.kkt_residuals(qp, result)
    self.assertLessEqual(residuals.primal_feasibility, 1e-8)
    self.assertLessEqual(residuals.stationarity, 1e-7)
    self.assertLessEqual(residuals.dual_feasibility, 1e-8)


if __name__ == "__main__":
  absltest.main()
