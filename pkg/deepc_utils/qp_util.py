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

"""Quadratic programs in the DeePC decision variable and their solver.

Problems have the form

  minimize    g'Hg + f'g + c
  subject to  A_eq g = b_eq,  A_ineq g <= b_ineq.

Without inequality rows the problem is solved in one shot by the null-space
method: the minimum-norm point of the equality set plus the minimum-norm
minimizer over its null space, which together give the minimum-norm minimizer
even when H is singular. With inequality rows a primal active-set method runs
on top of the same equality solves, starting from a phase-1 point or from a
warm-start working set.
"""

import dataclasses
import enum
from typing import NamedTuple

from absl import logging
import numpy as np
import scipy.linalg
import scipy.optimize

from deepc_utils import linalg_util

STATIONARITY_TOLERANCE = 1e-8
FEASIBILITY_TOLERANCE = 1e-8
COMPLEMENTARITY_TOLERANCE = 1e-8

# Iteration cap per decision variable before declaring cycling.
_CYCLING_FACTOR = 50


class QpStatus(enum.Enum):
  OPTIMAL = "optimal"
  INFEASIBLE = "infeasible"
  UNBOUNDED_GUARD = "unbounded-guard"


class QpCyclingError(RuntimeError):
  """Raised when the active-set iterations exceed the cycling guard."""


@dataclasses.dataclass(frozen=True, eq=False)
class QuadraticProgram:
  """A quadratic program with equality and inequality rows."""
  hessian: np.ndarray
  linear: np.ndarray
  a_eq: np.ndarray
  b_eq: np.ndarray
  a_ineq: np.ndarray
  b_ineq: np.ndarray
  constant: float = 0.0

  def __post_init__(self):
    n = self.hessian.shape[0]
    if self.hessian.shape != (n, n):
      raise ValueError(f"Hessian must be square, got {self.hessian.shape}.")
    if self.linear.shape != (n,):
      raise ValueError(
          f"Linear term must have shape ({n},), got {self.linear.shape}.")
    for name, a, b in (("equality", self.a_eq, self.b_eq),
                       ("inequality", self.a_ineq, self.b_ineq)):
      if a.ndim != 2 or a.shape[1] != n or b.shape != (a.shape[0],):
        raise ValueError(
            f"Inconsistent {name} rows: A {a.shape}, b {b.shape}, n={n}.")

  @property
  def num_variables(self):
    return self.hessian.shape[0]

  @property
  def num_inequalities(self):
    return self.a_ineq.shape[0]

  def objective(self, g):
    """Evaluates g'Hg + f'g + c."""
    return float(g @ self.hessian @ g + self.linear @ g + self.constant)

  def gradient(self, g):
    return 2.0 * (self.hessian @ g) + self.linear


@dataclasses.dataclass(frozen=True, eq=False)
class QpResult:
  """Solution of a `QuadraticProgram`.

  Attributes:
    g: The returned point. For infeasible problems, the least-squares point of
      the equality rows.
    status: Outcome of the solve.
    iterations: Number of active-set iterations (1 for equality-only solves).
    active_set: Sorted indices of the inequality rows in the final working set.
    eq_multipliers: Multipliers of the equality rows.
    ineq_multipliers: Multipliers of all inequality rows, zero when inactive.
    degenerate: Whether the final reduced Hessian was singular, so the
      minimizer is not unique and the minimum-norm one was returned.
  """
  g: np.ndarray
  status: QpStatus
  iterations: int
  active_set: tuple
  eq_multipliers: np.ndarray
  ineq_multipliers: np.ndarray
  degenerate: bool


class KktResiduals(NamedTuple):
  stationarity: float
  primal_feasibility: float
  dual_feasibility: float
  complementarity: float


class EqualityQpFactor:
  """Null-space factorization of `min g'Hg + f'g  s.t.  A g = b`.

  The factorization depends on H and A only, so it can be reused across
  receding-horizon steps where only f and b change.
  """

  def __init__(self, hessian, a):
    self._hessian = hessian
    self._a = a
    (self._left, self._singular_values, self._row_basis,
     self._null_basis) = linalg_util.null_space_split(a)
    reduced = 2.0 * (self._null_basis.T @ hessian @ self._null_basis)
    self._reduced = 0.5 * (reduced + reduced.T)
    if self._reduced.size:
      self._reduced_pinv, rank = scipy.linalg.pinvh(
          self._reduced, return_rank=True)
    else:
      self._reduced_pinv, rank = np.zeros((0, 0)), 0
    self.degenerate = rank < self._null_basis.shape[1]

  def solve(self, linear, b):
    """Solves the equality-constrained problem for a given f and b.

    Args:
      linear: The linear cost term f.
      b: Right-hand side of the equality rows.

    Returns:
      A tuple `(g, status, direction)`. `direction` is a feasible direction of
      linear descent and zero curvature when `status` is `UNBOUNDED_GUARD`,
      otherwise None.
    """
    if self._a.shape[0]:
      particular = self._row_basis @ (
          (self._left.T @ b) / self._singular_values)
      residual = np.linalg.norm(self._a @ particular - b)
      if residual > FEASIBILITY_TOLERANCE * (1.0 + np.linalg.norm(b, np.inf)):
        return particular, QpStatus.INFEASIBLE, None
    else:
      particular = np.zeros(self._hessian.shape[0])
    reduced_gradient = self._null_basis.T @ (
        2.0 * (self._hessian @ particular) + linear)
    step = -(self._reduced_pinv @ reduced_gradient)
    residual = self._reduced @ step + reduced_gradient
    g = particular + self._null_basis @ step
    if np.linalg.norm(residual) > STATIONARITY_TOLERANCE * (
        1.0 + np.linalg.norm(reduced_gradient)):
      return g, QpStatus.UNBOUNDED_GUARD, -(self._null_basis @ residual)
    return g, QpStatus.OPTIMAL, None


def _working_rows(qp, working):
  rows = list(working)
  a = np.vstack([qp.a_eq, qp.a_ineq[rows]])
  b = np.concatenate([qp.b_eq, qp.b_ineq[rows]])
  return a, b


def _multipliers(qp, g, working):
  """Least-squares multipliers of the equality and working rows at `g`."""
  a, _ = _working_rows(qp, working)
  if a.shape[0] == 0:
    return np.zeros(0), np.zeros(0)
  values = scipy.linalg.lstsq(a.T, -qp.gradient(g))[0]
  n_eq = qp.a_eq.shape[0]
  return values[:n_eq], values[n_eq:]


def _result(qp, g, status, iterations, working, degenerate):
  eq_multipliers, working_multipliers = _multipliers(qp, g, working)
  ineq_multipliers = np.zeros(qp.num_inequalities)
  ineq_multipliers[list(working)] = working_multipliers
  return QpResult(
      g=g,
      status=status,
      iterations=iterations,
      active_set=tuple(sorted(int(i) for i in working)),
      eq_multipliers=eq_multipliers,
      ineq_multipliers=ineq_multipliers,
      degenerate=degenerate,
  )


def _independent_active_rows(qp, g, candidates):
  """Greedily picks candidate rows that are tight and linearly independent."""
  slack = qp.b_ineq - qp.a_ineq @ g
  working = []
  base = qp.a_eq
  rank = linalg_util.numerical_rank(base) if base.shape[0] else 0
  for index in candidates:
    if abs(slack[index]) > FEASIBILITY_TOLERANCE * (
        1.0 + abs(qp.b_ineq[index])):
      continue
    stacked = np.vstack([base, qp.a_ineq[index]])
    stacked_rank = linalg_util.numerical_rank(stacked)
    if stacked_rank > rank:
      working.append(int(index))
      base, rank = stacked, stacked_rank
  return working


def _is_feasible(qp, g):
  tolerance = FEASIBILITY_TOLERANCE * (1.0 + np.abs(qp.b_ineq))
  return bool(np.all(qp.a_ineq @ g <= qp.b_ineq + tolerance))


def _initial_point(qp, warm_start):
  """Finds a feasible starting point and working set, or (None, None)."""
  if warm_start:
    working = sorted({int(i) for i in warm_start
                      if 0 <= int(i) < qp.num_inequalities})
    working = _independent_rows(qp, working)
    a, b = _working_rows(qp, working)
    g, status, _ = EqualityQpFactor(qp.hessian, a).solve(qp.linear, b)
    if status is QpStatus.OPTIMAL and _is_feasible(qp, g):
      return g, working
    logging.debug("Warm start %s rejected, falling back to phase 1.", working)
  phase_one = scipy.optimize.linprog(
      c=np.zeros(qp.num_variables),
      A_ub=qp.a_ineq,
      b_ub=qp.b_ineq,
      A_eq=qp.a_eq if qp.a_eq.shape[0] else None,
      b_eq=qp.b_eq if qp.a_eq.shape[0] else None,
      bounds=(None, None),
      method="highs",
  )
  if phase_one.status != 0:
    logging.warning("Phase-1 feasibility search failed: %s", phase_one.message)
    return None, None
  g = np.asarray(phase_one.x, dtype=np.float64)
  return g, _independent_active_rows(qp, g, range(qp.num_inequalities))


def _independent_rows(qp, rows):
  """Keeps the rows of `rows` that add rank to the equality rows."""
  working = []
  base = qp.a_eq
  rank = linalg_util.numerical_rank(base) if base.shape[0] else 0
  for index in rows:
    stacked = np.vstack([base, qp.a_ineq[index]])
    stacked_rank = linalg_util.numerical_rank(stacked)
    if stacked_rank > rank:
      working.append(index)
      base, rank = stacked, stacked_rank
  return working


def _infeasible_result(qp):
  a, b = qp.a_eq, qp.b_eq
  if a.shape[0]:
    g = scipy.linalg.lstsq(a, b)[0]
  else:
    g = np.zeros(qp.num_variables)
  return QpResult(
      g=g,
      status=QpStatus.INFEASIBLE,
      iterations=0,
      active_set=(),
      eq_multipliers=np.zeros(qp.a_eq.shape[0]),
      ineq_multipliers=np.zeros(qp.num_inequalities),
      degenerate=False,
  )


def _solve_active_set(qp, warm_start, factor):
  n = qp.num_variables
  g, working = _initial_point(qp, warm_start)
  if g is None:
    return _infeasible_result(qp)
  max_iterations = _CYCLING_FACTOR * max(n, 1)
  for iteration in range(1, max_iterations + 1):
    a, b = _working_rows(qp, working)
    if not working and factor is not None:
      working_factor = factor
    else:
      working_factor = EqualityQpFactor(qp.hessian, a)
    target, status, direction = working_factor.solve(qp.linear, b)

    if status is QpStatus.UNBOUNDED_GUARD:
      step = direction / np.linalg.norm(direction)
    elif status is QpStatus.INFEASIBLE:
      # Working rows are satisfied at g up to roundoff; stay put.
      step = np.zeros(n)
    else:
      step = target - g

    if (status is not QpStatus.UNBOUNDED_GUARD and np.linalg.norm(step) <=
        STATIONARITY_TOLERANCE * (1.0 + np.linalg.norm(g))):
      if status is QpStatus.OPTIMAL:
        g = target
      _, working_multipliers = _multipliers(qp, g, working)
      if (not working or
          np.min(working_multipliers) >= -COMPLEMENTARITY_TOLERANCE):
        return _result(qp, g, QpStatus.OPTIMAL, iteration, working,
                       working_factor.degenerate)
      dropped = working[int(np.argmin(working_multipliers))]
      working = [i for i in working if i != dropped]
      continue

    step_length = np.inf if status is QpStatus.UNBOUNDED_GUARD else 1.0
    blocking = None
    row_steps = qp.a_ineq @ step
    slack = qp.b_ineq - qp.a_ineq @ g
    step_norm = np.linalg.norm(step)
    for index in range(qp.num_inequalities):
      if index in working:
        continue
      threshold = 1e-14 * max(
          1.0, np.linalg.norm(qp.a_ineq[index]) * step_norm)
      if row_steps[index] <= threshold:
        continue
      ratio = max(slack[index], 0.0) / row_steps[index]
      if ratio < step_length:
        step_length, blocking = ratio, index
    if not np.isfinite(step_length):
      logging.warning("QP objective is unbounded below along a feasible ray.")
      return _result(qp, g, QpStatus.UNBOUNDED_GUARD, iteration, working,
                     True)
    g = g + step_length * step
    if blocking is not None:
      working = sorted(working + [blocking])
  raise QpCyclingError(
      f"Active-set method did not converge within {max_iterations} "
      f"iterations for {n} variables.")


def solve(qp, warm_start=None, factor=None):
  """Solves `qp`.

  Args:
    qp: The quadratic program.
    warm_start: Inequality row indices to try as the initial working set,
      typically the active set of the previous receding-horizon step.
    factor: Optional `EqualityQpFactor` of (H, A_eq) to reuse.

  Returns:
    A `QpResult`.

  Raises:
    QpCyclingError: If the active-set iterations exceed 50 per variable.
  """
  if qp.num_inequalities == 0:
    if factor is None:
      factor = EqualityQpFactor(qp.hessian, qp.a_eq)
    g, status, _ = factor.solve(qp.linear, qp.b_eq)
    if status is QpStatus.INFEASIBLE:
      return _infeasible_result(qp)
    if status is QpStatus.UNBOUNDED_GUARD:
      logging.warning("QP objective is unbounded below on the equality set.")
    return _result(qp, g, status, 1, (), factor.degenerate)
  return _solve_active_set(qp, warm_start, factor)


def kkt_residuals(qp, result):
  """Infinity-norm KKT residuals of `result` for `qp`."""
  g = result.g
  stationarity = qp.gradient(g)
  if qp.a_eq.shape[0]:
    stationarity = stationarity + qp.a_eq.T @ result.eq_multipliers
    eq_violation = np.max(np.abs(qp.a_eq @ g - qp.b_eq))
  else:
    eq_violation = 0.0
  if qp.num_inequalities:
    stationarity = stationarity + qp.a_ineq.T @ result.ineq_multipliers
    slack = qp.b_ineq - qp.a_ineq @ g
    ineq_violation = max(0.0, float(-np.min(slack)))
    dual = max(0.0, float(-np.min(result.ineq_multipliers)))
    complementarity = float(np.max(np.abs(result.ineq_multipliers * slack)))
  else:
    ineq_violation, dual, complementarity = 0.0, 0.0, 0.0
  return KktResiduals(
      stationarity=float(np.max(np.abs(stationarity))) if g.size else 0.0,
      primal_feasibility=max(float(eq_violation), ineq_violation),
      dual_feasibility=dual,
      complementarity=complementarity,
  )
