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

"""Receding-horizon DeePC with plain or federated Hankel predictors.

Each step eliminates u_f = U_F g and y_f = Y_F g from

  minimize  sum_k ||y_k - y_ref_k||_Q^2 + ||u_k - u_ref_k||_R^2
            + lambda_g ||g||^2
  s.t.      [U_P; Y_P] g = [u_ini; y_ini],  box bounds on U_F g and Y_F g,

leaving a quadratic program in g alone.
"""

import dataclasses
from typing import Optional, Tuple

from absl import logging
import numpy as np
import scipy.linalg

from deepc import hankel
from deepc import lti_sim
from deepc_utils import linalg_util
from deepc_utils import qp_util

QpStatus = qp_util.QpStatus


def _bounds_array(bounds, channels, name):
  if bounds is None:
    return None
  bounds = linalg_util.as_matrix(bounds, name)
  if bounds.shape == (2, 1) and channels == 1:
    bounds = bounds.T
  if bounds.shape != (channels, 2):
    raise ValueError(
        f"{name} must be {channels} x 2 [low, high] pairs, got {bounds.shape}.")
  if np.any(bounds[:, 0] >= bounds[:, 1]):
    raise ValueError(f"{name} needs low < high per channel, got {bounds}.")
  bounds.flags.writeable = False
  return bounds


@dataclasses.dataclass(frozen=True, eq=False)
class DeePCConfig:
  """Cost weights, regularization, horizons and box constraints.

  Attributes:
    q: n_y x n_y positive definite output weight.
    r: n_u x n_u positive definite input weight.
    lambda_g: Non-negative penalty on ||g||^2.
    t_ini: Initial window length.
    horizon: Prediction horizon N.
    u_bounds: Optional n_u x 2 array of per-channel [low, high] input bounds.
    y_bounds: Optional n_y x 2 array of per-channel [low, high] output bounds.
  """
  q: np.ndarray
  r: np.ndarray
  lambda_g: float
  t_ini: int
  horizon: int
  u_bounds: Optional[np.ndarray] = None
  y_bounds: Optional[np.ndarray] = None

  def __post_init__(self):
    q = linalg_util.as_matrix(self.q, "Q")
    r = linalg_util.as_matrix(self.r, "R")
    for name, matrix in (("Q", q), ("R", r)):
      if not linalg_util.is_positive_definite(matrix):
        raise ValueError(f"{name} must be symmetric positive definite.")
    if self.lambda_g < 0:
      raise ValueError(f"lambda_g must be non-negative, got {self.lambda_g}.")
    if self.t_ini < 1 or self.horizon < 1:
      raise ValueError(
          f"T_ini and N must be positive, got {self.t_ini}, {self.horizon}.")
    q.flags.writeable = False
    r.flags.writeable = False
    object.__setattr__(self, "q", q)
    object.__setattr__(self, "r", r)
    object.__setattr__(self, "lambda_g", float(self.lambda_g))
    object.__setattr__(self, "u_bounds",
                       _bounds_array(self.u_bounds, r.shape[0], "u_bounds"))
    object.__setattr__(self, "y_bounds",
                       _bounds_array(self.y_bounds, q.shape[0], "y_bounds"))

  @property
  def n_u(self):
    return self.r.shape[0]

  @property
  def n_y(self):
    return self.q.shape[0]

  def with_lambda(self, lambda_g):
    return dataclasses.replace(self, lambda_g=lambda_g)


@dataclasses.dataclass(frozen=True, eq=False)
class InitialWindow:
  """The last T_ini inputs and outputs fixing the initial condition."""
  u_ini: np.ndarray
  y_ini: np.ndarray

  def __post_init__(self):
    u_ini = linalg_util.as_matrix(self.u_ini, "u_ini")
    y_ini = linalg_util.as_matrix(self.y_ini, "y_ini", rows=u_ini.shape[0])
    object.__setattr__(self, "u_ini", u_ini)
    object.__setattr__(self, "y_ini", y_ini)

  @property
  def length(self):
    return self.u_ini.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class References:
  """Input and output references over the simulation, one row per step."""
  u: np.ndarray
  y: np.ndarray

  def __post_init__(self):
    u = linalg_util.as_matrix(self.u, "u_ref")
    y = linalg_util.as_matrix(self.y, "y_ref", rows=u.shape[0])
    if u.shape[0] < 1:
      raise ValueError("References need at least one sample.")
    object.__setattr__(self, "u", u)
    object.__setattr__(self, "y", y)

  @classmethod
  def zeros(cls, steps, n_u, n_y):
    return cls(u=np.zeros((steps, n_u)), y=np.zeros((steps, n_y)))

  def window(self, start, horizon):
    """References for steps start, ..., start + N - 1, holding the last row."""
    indices = np.minimum(np.arange(start, start + horizon), self.u.shape[0] - 1)
    return self.u[indices], self.y[indices]


@dataclasses.dataclass(frozen=True, eq=False)
class StepSolution:
  """Solution of one DeePC problem; u_f = U_F g and y_f = Y_F g."""
  g: np.ndarray
  u_f: np.ndarray
  y_f: np.ndarray
  objective: float
  status: QpStatus
  iterations: int = 1
  active_set: Tuple[int, ...] = ()
  degenerate: bool = False


@dataclasses.dataclass(frozen=True, eq=False)
class ClosedLoopResult:
  """Trajectories and per-step solutions of a closed-loop run.

  When a step is not solved to optimality the run stops there: the
  trajectories hold the completed steps and `per_step` ends with the failed
  solution.
  """
  u_applied: np.ndarray
  y_realized: np.ndarray
  per_step: Tuple[StepSolution, ...]
  config: DeePCConfig
  status: QpStatus

  @property
  def completed_steps(self):
    return self.u_applied.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class _StaticProgram:
  """Parts of the condensed problem that do not change between steps."""
  blocks: hankel.HankelBlocks
  config: DeePCConfig
  hessian: np.ndarray
  a_eq: np.ndarray
  a_ineq: np.ndarray
  ineq_offsets: np.ndarray
  weighted_u_f: np.ndarray
  weighted_y_f: np.ndarray
  r_bar: np.ndarray
  q_bar: np.ndarray

  def program(self, window, refs):
    """Completes the QP for an initial window and a reference pair."""
    blocks = self.blocks
    if window.length != blocks.t_ini:
      raise ValueError(
          f"Initial window has {window.length} samples, expected "
          f"{blocks.t_ini}.")
    if (window.u_ini.shape[1], window.y_ini.shape[1]) != (blocks.n_u,
                                                           blocks.n_y):
      raise ValueError("Initial window dimensions do not match the blocks.")
    u_ref = linalg_util.as_matrix(
        refs[0], "u_ref", rows=blocks.horizon, cols=blocks.n_u).reshape(-1)
    y_ref = linalg_util.as_matrix(
        refs[1], "y_ref", rows=blocks.horizon, cols=blocks.n_y).reshape(-1)
    linear = -2.0 * (self.weighted_u_f @ u_ref + self.weighted_y_f @ y_ref)
    constant = float(u_ref @ self.r_bar @ u_ref + y_ref @ self.q_bar @ y_ref)
    b_eq = np.concatenate([window.u_ini.reshape(-1), window.y_ini.reshape(-1)])
    return qp_util.QuadraticProgram(
        hessian=self.hessian,
        linear=linear,
        a_eq=self.a_eq,
        b_eq=b_eq,
        a_ineq=self.a_ineq,
        b_ineq=self.ineq_offsets,
        constant=constant,
    )


def _box_rows(block, bounds, horizon):
  """Rows encoding low <= block g <= high, upper rows first."""
  if bounds is None:
    return np.zeros((0, block.shape[1])), np.zeros(0)
  low = np.tile(bounds[:, 0], horizon)
  high = np.tile(bounds[:, 1], horizon)
  upper = np.isfinite(high)
  lower = np.isfinite(low)
  rows = np.vstack([block[upper], -block[lower]])
  offsets = np.concatenate([high[upper], -low[lower]])
  return rows, offsets


def _condense_static(blocks, config):
  if (blocks.t_ini, blocks.horizon) != (config.t_ini, config.horizon):
    raise ValueError(
        f"Blocks use T_ini={blocks.t_ini}, N={blocks.horizon} but the config "
        f"uses T_ini={config.t_ini}, N={config.horizon}.")
  if (blocks.n_u, blocks.n_y) != (config.n_u, config.n_y):
    raise ValueError(
        f"Blocks have n_u={blocks.n_u}, n_y={blocks.n_y} but R and Q are "
        f"{config.n_u}x{config.n_u} and {config.n_y}x{config.n_y}.")
  identity = np.eye(blocks.horizon)
  r_bar = np.kron(identity, config.r)
  q_bar = np.kron(identity, config.q)
  weighted_u_f = blocks.u_f.T @ r_bar
  weighted_y_f = blocks.y_f.T @ q_bar
  hessian = (weighted_u_f @ blocks.u_f + weighted_y_f @ blocks.y_f +
             config.lambda_g * np.eye(blocks.columns))
  hessian = 0.5 * (hessian + hessian.T)
  u_rows, u_offsets = _box_rows(blocks.u_f, config.u_bounds, blocks.horizon)
  y_rows, y_offsets = _box_rows(blocks.y_f, config.y_bounds, blocks.horizon)
  return _StaticProgram(
      blocks=blocks,
      config=config,
      hessian=hessian,
      a_eq=np.vstack([blocks.u_p, blocks.y_p]),
      a_ineq=np.vstack([u_rows, y_rows]),
      ineq_offsets=np.concatenate([u_offsets, y_offsets]),
      weighted_u_f=weighted_u_f,
      weighted_y_f=weighted_y_f,
      r_bar=r_bar,
      q_bar=q_bar,
  )


def condense(blocks, window, refs, config):
  """Builds the quadratic program in g.

  Args:
    blocks: Predictor `HankelBlocks`.
    window: The `InitialWindow`.
    refs: A pair (u_ref, y_ref) of N x n_u and N x n_y references.
    config: The `DeePCConfig`.

  Returns:
    A `qp_util.QuadraticProgram` with H = U_F'(I kron R)U_F +
    Y_F'(I kron Q)Y_F + lambda_g I, f = -2 (U_F'(I kron R) u_ref +
    Y_F'(I kron Q) y_ref), equality rows [U_P; Y_P] g = [u_ini; y_ini] and box
    rows on U_F g and Y_F g. The objective g'Hg + f'g + c equals the DeePC
    cost including the regularization term.

  Raises:
    ValueError: On dimension mismatches between blocks, window, refs and
      config.
  """
  return _condense_static(blocks, config).program(window, refs)


def solve_qp(qp, warm_start=None, factor=None):
  """Solves a condensed DeePC program, see `qp_util.solve`."""
  result = qp_util.solve(qp, warm_start=warm_start, factor=factor)
  if result.degenerate:
    logging.log_every_n(
        logging.WARNING,
        "Singular reduced Hessian; returning the minimum-norm g.",
        1000)
  return result


def _step_solution(blocks, qp, result):
  g = result.g
  return StepSolution(
      g=g,
      u_f=(blocks.u_f @ g).reshape(blocks.horizon, blocks.n_u),
      y_f=(blocks.y_f @ g).reshape(blocks.horizon, blocks.n_y),
      objective=qp.objective(g),
      status=result.status,
      iterations=result.iterations,
      active_set=result.active_set,
      degenerate=result.degenerate,
  )


class DeePCController:
  """A DeePC controller over fixed predictor blocks.

  The controller caches the step-independent part of the program and the
  active set of its last solve, which warm-starts the next one. Instances are
  not thread-safe; use one per closed loop.
  """

  def __init__(self, blocks, config):
    self._blocks = blocks
    self._static = _condense_static(blocks, config)
    self._factor = qp_util.EqualityQpFactor(
        self._static.hessian, self._static.a_eq)
    self._warm_start = ()

  @property
  def config(self):
    return self._static.config

  def reset(self):
    self._warm_start = ()

  def step(self, window, refs):
    """Solves the DeePC problem for `window` and `refs`."""
    qp = self._static.program(window, refs)
    result = solve_qp(qp, warm_start=self._warm_start, factor=self._factor)
    self._warm_start = result.active_set
    return _step_solution(self._blocks, qp, result)


def deepc_step(blocks, window, refs, config):
  """Solves one DeePC problem from scratch; see `condense` for the arguments."""
  return DeePCController(blocks, config).step(window, refs)


def predict(blocks, window, u_f):
  """Predicts y_f for a candidate future input through the data predictor.

  Args:
    blocks: Predictor `HankelBlocks`.
    window: The `InitialWindow`.
    u_f: Future inputs, N x n_u.

  Returns:
    The N x n_y prediction Y_F g with g the minimum-norm least-squares
    solution of [U_P; Y_P; U_F] g = [u_ini; y_ini; u_f].
  """
  u_f = linalg_util.as_matrix(u_f, "u_f", rows=blocks.horizon, cols=blocks.n_u)
  lhs = np.vstack([blocks.u_p, blocks.y_p, blocks.u_f])
  rhs = np.concatenate(
      [window.u_ini.reshape(-1), window.y_ini.reshape(-1), u_f.reshape(-1)])
  g = scipy.linalg.lstsq(lhs, rhs)[0]
  return (blocks.y_f @ g).reshape(blocks.horizon, blocks.n_y)


def make_oracle_blocks(plant, x0, u_excitation, t_ini, horizon):
  """Oracle blocks from a noiseless run of `plant`; used with lambda_g = 0."""
  u_excitation = linalg_util.as_matrix(u_excitation, "u", cols=plant.n_u)
  order = t_ini + horizon + plant.n_x
  if order <= u_excitation.shape[0]:
    exciting, rank = hankel.is_persistently_exciting(u_excitation, order)
  else:
    exciting, rank = False, 0
  if not exciting:
    logging.warning(
        "Excitation is not persistently exciting of order %d (rank %d).",
        order, rank)
  y, _ = lti_sim.simulate(plant, x0, u_excitation)
  return hankel.partition(u_excitation, y, t_ini, horizon, n_x=plant.n_x)


def _warm_up(plant, x0, t_ini):
  """Runs the plant T_ini steps with zero input to form the first window."""
  u = np.zeros((t_ini, plant.n_u))
  y, x = lti_sim.simulate(plant, x0, u)
  return u, y, x[-1]


def run_closed_loop(plant, x0, blocks, refs, config, t_sim):
  """Runs the noiseless receding-horizon loop of DeePC on `plant`.

  The loop starts after a zero-input warm-up of T_ini steps from `x0`. At
  every step it solves the DeePC problem on the last T_ini applied inputs and
  realized outputs, applies the first input block of u_f and advances the
  plant one step.

  Args:
    plant: The true `StateSpaceModel`.
    x0: Initial state before the warm-up.
    blocks: Predictor `HankelBlocks` (plain, federated or oracle).
    refs: `References` over at least one step (held beyond their end), or
      None for zero references.
    config: The `DeePCConfig`.
    t_sim: Number of closed-loop steps.

  Returns:
    A `ClosedLoopResult`.
  """
  if t_sim < 1:
    raise ValueError(f"t_sim must be positive, got {t_sim}.")
  if refs is None:
    refs = References.zeros(t_sim, plant.n_u, plant.n_y)
  controller = DeePCController(blocks, config)
  u_window, y_window, state = _warm_up(plant, x0, config.t_ini)
  u_applied = np.zeros((t_sim, plant.n_u))
  y_realized = np.zeros((t_sim, plant.n_y))
  per_step = []
  status = QpStatus.OPTIMAL
  completed = t_sim
  for t in range(t_sim):
    window = InitialWindow(u_ini=u_window, y_ini=y_window)
    solution = controller.step(window, refs.window(t, config.horizon))
    per_step.append(solution)
    if solution.status is not QpStatus.OPTIMAL:
      logging.warning("Closed loop stopped at step %d: %s.", t,
                      solution.status.value)
      status, completed = solution.status, t
      break
    u_t = solution.u_f[0]
    y_t = plant.c @ state + plant.d @ u_t
    state = plant.a @ state + plant.b @ u_t
    u_applied[t], y_realized[t] = u_t, y_t
    u_window = np.vstack([u_window[1:], u_t])
    y_window = np.vstack([y_window[1:], y_t])
  return ClosedLoopResult(
      u_applied=u_applied[:completed],
      y_realized=y_realized[:completed],
      per_step=tuple(per_step),
      config=config,
      status=status,
  )
