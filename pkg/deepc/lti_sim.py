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

"""Simulation of discrete-time LTI systems and families of similar systems."""

import dataclasses
import math
from typing import List, Tuple

from absl import logging
import numpy as np

from deepc_utils import linalg_util
from deepc_utils import rng_util

# SNR sentinel for noiseless data collection.
NOISELESS = math.inf


def _frozen(array):
  array = np.array(array, dtype=np.float64)
  array.flags.writeable = False
  return array


@dataclasses.dataclass(frozen=True, eq=False)
class StateSpaceModel:
  """Matrices of x[t+1] = A x[t] + B u[t], y[t] = C x[t] + D u[t]."""
  a: np.ndarray
  b: np.ndarray
  c: np.ndarray
  d: np.ndarray

  def __post_init__(self):
    a = linalg_util.as_matrix(self.a, "A")
    n_x = a.shape[0]
    if a.shape != (n_x, n_x):
      raise ValueError(f"A must be square, got shape {a.shape}.")
    b = linalg_util.as_matrix(self.b, "B", rows=n_x)
    c = np.asarray(self.c, dtype=np.float64)
    if c.ndim == 1:
      c = c.reshape(1, -1)
    c = linalg_util.as_matrix(c, "C", cols=n_x)
    d = np.asarray(self.d, dtype=np.float64)
    if d.size == 1 and float(d.reshape(-1)[0]) == 0.0:
      d = np.zeros((c.shape[0], b.shape[1]))
    d = linalg_util.as_matrix(d, "D", rows=c.shape[0], cols=b.shape[1])
    if min(n_x, b.shape[1], c.shape[0]) < 1:
      raise ValueError("State, input and output dimensions must be positive.")
    for name, value in (("a", a), ("b", b), ("c", c), ("d", d)):
      object.__setattr__(self, name, _frozen(value))

  @property
  def n_x(self):
    return self.a.shape[0]

  @property
  def n_u(self):
    return self.b.shape[1]

  @property
  def n_y(self):
    return self.c.shape[0]

  def is_schur_stable(self):
    """Whether every eigenvalue of A lies strictly inside the unit circle."""
    return bool(np.max(np.abs(np.linalg.eigvals(self.a))) < 1.0)

  def with_a(self, a):
    return StateSpaceModel(a=a, b=self.b, c=self.c, d=self.d)

  def same_as(self, other):
    return all(np.array_equal(getattr(self, name), getattr(other, name))
               for name in ("a", "b", "c", "d"))


@dataclasses.dataclass(frozen=True, eq=False)
class TrajectoryDataset:
  """One system's offline experiment.

  Attributes:
    system_index: Index of the system in its family; 0 is the nominal system.
    u: Input sequence, T x n_u, shared across the family.
    y_clean: Noiseless output, T x n_y.
    y_noisy: Measured output, T x n_y.
    noise_variance: Variance of the white measurement noise.
  """
  system_index: int
  u: np.ndarray
  y_clean: np.ndarray
  y_noisy: np.ndarray
  noise_variance: float

  def __post_init__(self):
    if self.system_index < 0:
      raise ValueError(
          f"system_index must be non-negative, got {self.system_index}.")
    u = linalg_util.as_matrix(self.u, "u")
    y_clean = linalg_util.as_matrix(self.y_clean, "y_clean", rows=u.shape[0])
    y_noisy = linalg_util.as_matrix(
        self.y_noisy, "y_noisy", rows=u.shape[0], cols=y_clean.shape[1])
    if self.noise_variance < 0:
      raise ValueError(
          f"noise_variance must be non-negative, got {self.noise_variance}.")
    object.__setattr__(self, "u", _frozen(u))
    object.__setattr__(self, "y_clean", _frozen(y_clean))
    object.__setattr__(self, "y_noisy", _frozen(y_noisy))
    object.__setattr__(self, "noise_variance", float(self.noise_variance))

  @property
  def length(self):
    return self.u.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class SystemFamily:
  """A nominal plant and M - 1 perturbations of its state matrix."""
  nominal: StateSpaceModel
  members: Tuple[StateSpaceModel, ...]
  delta_a: np.ndarray
  scale: float

  @property
  def size(self):
    return len(self.members)


def simulate(model, x0, u):
  """Simulates `model` from `x0` under the input sequence `u`.

  Args:
    model: A `StateSpaceModel`.
    x0: Initial state, length n_x.
    u: Input sequence, T x n_u (a 1-D array is read as T x 1).

  Returns:
    A tuple `(y, x)` with the T x n_y noiseless outputs and the (T + 1) x n_x
    state trajectory, x[0] = x0.

  Raises:
    ValueError: On dimension mismatches or an empty input sequence.
  """
  u = linalg_util.as_matrix(u, "u", cols=model.n_u)
  length = u.shape[0]
  if length < 1:
    raise ValueError("u must contain at least one sample.")
  x0 = linalg_util.as_vector(x0, "x0", model.n_x)
  x = np.empty((length + 1, model.n_x))
  y = np.empty((length, model.n_y))
  x[0] = x0
  for t in range(length):
    y[t] = model.c @ x[t] + model.d @ u[t]
    x[t + 1] = model.a @ x[t] + model.b @ u[t]
  return y, x


def make_family(nominal, delta_a, m, scale=0.05):
  """Builds the nominal plant and its M - 1 perturbed copies.

  Member j = 1, ..., M - 1 has A_j = A + scale * (2 (j - 1) / (M - 1) - 1) dA
  and shares B, C, D with the nominal plant; member 0 is the nominal plant.

  Args:
    nominal: The nominal `StateSpaceModel`.
    delta_a: The n_x x n_x perturbation direction dA.
    m: Number of systems M >= 1, the nominal one included.
    scale: Perturbation magnitude.

  Returns:
    A `SystemFamily`.
  """
  if m < 1:
    raise ValueError(f"The family needs at least one system, got M={m}.")
  delta_a = linalg_util.as_matrix(
      delta_a, "delta_A", rows=nominal.n_x, cols=nominal.n_x)
  members = [nominal]
  for j in range(1, m):
    coefficient = 2.0 * (j - 1) / (m - 1) - 1.0
    members.append(nominal.with_a(nominal.a + scale * coefficient * delta_a))
  unstable = [j for j, member in enumerate(members)
              if not member.is_schur_stable()]
  if unstable:
    logging.warning("Family members %s are not Schur stable.", unstable)
  return SystemFamily(
      nominal=nominal,
      members=tuple(members),
      delta_a=_frozen(delta_a),
      scale=float(scale))


def snr_noise_variance(y_clean, snr_db):
  """Noise variance giving `snr_db` for the mean square of `y_clean`.

  Args:
    y_clean: Noiseless output, T x n_y.
    snr_db: Signal-to-noise ratio in dB; `NOISELESS` gives zero variance.

  Returns:
    mean(y_clean**2) / 10**(snr_db / 10).

  Raises:
    ValueError: If `y_clean` is identically zero or `snr_db` is NaN or -inf.
  """
  if snr_db == NOISELESS:
    return 0.0
  if not math.isfinite(snr_db):
    raise ValueError(f"snr_db must be finite or +inf, got {snr_db}.")
  mean_square = float(np.mean(np.square(np.asarray(y_clean, np.float64))))
  if mean_square == 0.0:
    raise ValueError("SNR is undefined for an identically zero output.")
  return mean_square / 10.0**(snr_db / 10.0)


def collect_dataset(family, x0, u, snr_db, seed):
  """Runs the shared offline experiment on every member of `family`.

  Each member starts from `x0` and receives `u`; its noise variance is
  calibrated to `snr_db` on its own clean output, and its noise is drawn from
  the stream addressed by (seed, member index).

  Args:
    family: A `SystemFamily`.
    x0: Shared initial state.
    u: Shared input sequence, T x n_u.
    snr_db: Signal-to-noise ratio in dB, or `NOISELESS`.
    seed: Non-negative integer seed.

  Returns:
    A list of M `TrajectoryDataset`, ordered by system index.
  """
  u = _frozen(linalg_util.as_matrix(u, "u", cols=family.nominal.n_u))
  datasets: List[TrajectoryDataset] = []
  for index, member in enumerate(family.members):
    y_clean, _ = simulate(member, x0, u)
    variance = snr_noise_variance(y_clean, snr_db)
    if variance == 0.0:
      y_noisy = y_clean.copy()
    else:
      noise = rng_util.stream(seed, index).standard_normal(y_clean.shape)
      y_noisy = y_clean + math.sqrt(variance) * noise
    datasets.append(TrajectoryDataset(
        system_index=index,
        u=u,
        y_clean=y_clean,
        y_noisy=y_noisy,
        noise_variance=variance))
  return datasets


def structural_matrices(model, horizon):
  """Extended observability and Toeplitz matrices over `horizon` steps.

  Args:
    model: A `StateSpaceModel`.
    horizon: Number of steps T >= 1.

  Returns:
    A tuple `(gamma, toeplitz)` of shapes (n_y T) x n_x and (n_y T) x (n_u T)
    such that the stacked output equals gamma x0 + toeplitz u_stacked.
  """
  if horizon < 1:
    raise ValueError(f"horizon must be positive, got {horizon}.")
  n_y, n_u = model.n_y, model.n_u
  gamma = np.empty((n_y * horizon, model.n_x))
  toeplitz = np.zeros((n_y * horizon, n_u * horizon))
  # markov[k] = C A^(k-1) B for k >= 1, markov[0] = D.
  markov = [model.d]
  power = model.c
  for k in range(horizon):
    gamma[k * n_y:(k + 1) * n_y] = power
    if k + 1 < horizon:
      markov.append(power @ model.b)
    power = power @ model.a
  for i in range(horizon):
    for j in range(i + 1):
      toeplitz[i * n_y:(i + 1) * n_y, j * n_u:(j + 1) * n_u] = markov[i - j]
  return gamma, toeplitz


def similarity_gap(member, nominal, x0, u):
  """Euclidean norm of the difference between two noiseless trajectories."""
  if (member.n_x, member.n_u, member.n_y) != (
      nominal.n_x, nominal.n_u, nominal.n_y):
    raise ValueError("Models must share state, input and output dimensions.")
  y_member, _ = simulate(member, x0, u)
  y_nominal, _ = simulate(nominal, x0, u)
  return float(np.linalg.norm(y_member - y_nominal))
