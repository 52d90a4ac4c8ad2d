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

"""Hankel matrices, persistency of excitation and predictor partitions."""

import dataclasses

from absl import logging
import numpy as np

from deepc_utils import linalg_util


@dataclasses.dataclass(frozen=True, eq=False)
class HankelBlocks:
  """Past/future partition of depth-(T_ini + N) input and output Hankels.

  Attributes:
    u_p: (T_ini n_u) x m past inputs.
    y_p: (T_ini n_y) x m past outputs.
    u_f: (N n_u) x m future inputs.
    y_f: (N n_y) x m future outputs.
    t_ini: Length of the initial window.
    horizon: Prediction horizon N.
    columns: Number of columns m = T - (T_ini + N) + 1.
  """
  u_p: np.ndarray
  y_p: np.ndarray
  u_f: np.ndarray
  y_f: np.ndarray
  t_ini: int
  horizon: int
  columns: int

  def __post_init__(self):
    for name in ("u_p", "y_p", "u_f", "y_f"):
      block = getattr(self, name)
      if block.ndim != 2 or block.shape[1] != self.columns:
        raise ValueError(
            f"{name} must have {self.columns} columns, got {block.shape}.")
    if (self.u_p.shape[0] % self.t_ini or self.y_p.shape[0] % self.t_ini or
        self.u_f.shape[0] != self.horizon * self.n_u or
        self.y_f.shape[0] != self.horizon * self.n_y):
      raise ValueError("Block row counts do not match T_ini and N.")

  @property
  def n_u(self):
    return self.u_p.shape[0] // self.t_ini

  @property
  def n_y(self):
    return self.y_p.shape[0] // self.t_ini

  @property
  def depth(self):
    return self.t_ini + self.horizon

  def stacked(self):
    """The full predictor matrix [U_P; Y_P; U_F; Y_F]."""
    return np.vstack([self.u_p, self.y_p, self.u_f, self.y_f])


def build_hankel(w, depth):
  """Builds the block Hankel matrix of depth `depth` of a signal.

  Args:
    w: Signal samples, T x n_w (a 1-D array is read as T x 1).
    depth: Number of block rows L, 1 <= L <= T.

  Returns:
    An (L n_w) x (T - L + 1) array whose column k stacks w[k], ..., w[k+L-1].

  Raises:
    ValueError: If `depth` is outside [1, T].
  """
  w = linalg_util.as_matrix(w, "w")
  length, n_w = w.shape
  if depth < 1 or depth > length:
    raise ValueError(
        f"Hankel depth must be in [1, {length}], got {depth}.")
  columns = length - depth + 1
  windows = np.lib.stride_tricks.sliding_window_view(w, depth, axis=0)
  # windows[k] is n_w x L; transpose to time-major before flattening.
  return np.ascontiguousarray(
      windows.transpose(0, 2, 1).reshape(columns, depth * n_w).T)


def is_persistently_exciting(w, order):
  """Checks whether `w` is persistently exciting of order `order`.

  Args:
    w: Signal samples, T x n_w.
    order: The order L <= T.

  Returns:
    A tuple `(flag, rank)`: the numerical rank of the depth-L Hankel and
    whether it equals n_w L.
  """
  w = linalg_util.as_matrix(w, "w")
  rank = linalg_util.numerical_rank(build_hankel(w, order))
  return rank == w.shape[1] * order, rank


def minimum_data_length(n_u, n_x, t_ini, horizon):
  """Smallest T for a PE input of order T_ini + N + n_x."""
  for name, value in (("n_u", n_u), ("n_x", n_x), ("t_ini", t_ini),
                      ("horizon", horizon)):
    if value < 1:
      raise ValueError(f"{name} must be positive, got {value}.")
  return (n_u + 1) * (t_ini + horizon + n_x)


def partition(u, y, t_ini, horizon, n_x=None):
  """Splits the depth-(T_ini + N) Hankels of `u` and `y` into past and future.

  Args:
    u: Inputs, T x n_u.
    y: Outputs, T x n_y.
    t_ini: Initial window length.
    horizon: Prediction horizon N.
    n_x: Optional state dimension; when given, a warning is logged if T is
      below `minimum_data_length`.

  Returns:
    The `HankelBlocks`.

  Raises:
    ValueError: If T < T_ini + N or `u` and `y` differ in length.
  """
  u = linalg_util.as_matrix(u, "u")
  y = linalg_util.as_matrix(y, "y", rows=u.shape[0])
  if t_ini < 1 or horizon < 1:
    raise ValueError(
        f"T_ini and N must be positive, got {t_ini} and {horizon}.")
  length = u.shape[0]
  depth = t_ini + horizon
  if length < depth:
    raise ValueError(f"Need T >= T_ini + N = {depth} samples, got {length}.")
  if n_x is not None:
    required = minimum_data_length(u.shape[1], n_x, t_ini, horizon)
    if length < required:
      logging.warning("Data length %d is below the recommended %d.", length,
                      required)
  hankel_u = build_hankel(u, depth)
  hankel_y = build_hankel(y, depth)
  split_u = t_ini * u.shape[1]
  split_y = t_ini * y.shape[1]
  return HankelBlocks(
      u_p=hankel_u[:split_u],
      y_p=hankel_y[:split_y],
      u_f=hankel_u[split_u:],
      y_f=hankel_y[split_y:],
      t_ini=t_ini,
      horizon=horizon,
      columns=length - depth + 1,
  )
