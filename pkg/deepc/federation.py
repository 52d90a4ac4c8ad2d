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

"""Similarity weights, federated predictors and their bias/dispersion bounds.

The federated predictor replaces the nominal output Hankel with a convex
combination of the output Hankels of M similar systems sharing one input
experiment. Weights are a softmax over the negative, beta-scaled spectral
distances between each system's output Hankel and the nominal one.

The bound calculators need noiseless trajectories, which only a simulator
provides; they are diagnostics, never inputs to the controller.
"""

import dataclasses
import math

import numpy as np

from deepc import hankel
from deepc_utils import linalg_util

# Explicit beta mode reducing the weights to the nearest-dataset indicator.
INFINITE_BETA = math.inf

_INFINITE_SPELLINGS = ("inf", "+inf", "infinite", "infinity")


def parse_beta(value):
  """Converts a number or an "inf"/"infinite" string to a beta value.

  Args:
    value: A non-negative number, `INFINITE_BETA`, or a string spelling of
      either.

  Returns:
    The beta value as a float (`INFINITE_BETA` for the infinite mode).

  Raises:
    ValueError: If `value` is negative, NaN, or not a number.
  """
  if isinstance(value, str):
    if value.strip().lower() in _INFINITE_SPELLINGS:
      return INFINITE_BETA
    try:
      value = float(value)
    except ValueError:
      raise ValueError(f"beta must be a number or 'inf', got {value!r}.")
  beta = float(value)
  if math.isnan(beta) or beta < 0.0:
    raise ValueError(f"beta must be non-negative, got {value}.")
  return beta


@dataclasses.dataclass(frozen=True, eq=False)
class FederationWeights:
  """Federation weights with the beta and distances that produced them."""
  alpha: np.ndarray
  beta: float
  distances: np.ndarray

  @classmethod
  def nominal_only(cls, m):
    """Weights [1, 0, ..., 0] of standard DeePC over a family of size m."""
    alpha = np.zeros(m)
    alpha[0] = 1.0
    return cls(alpha=alpha, beta=INFINITE_BETA, distances=np.zeros(m))

  @property
  def size(self):
    return self.alpha.shape[0]

  @property
  def nominal_weight(self):
    return float(self.alpha[0])

  @property
  def max_other_weight(self):
    return float(np.max(self.alpha[1:])) if self.size > 1 else 0.0


@dataclasses.dataclass(frozen=True)
class AdvantageVerdict:
  """Outcome of the sufficient condition for a smaller dispersion.

  Attributes:
    holds: Whether the condition certifies ||Omega|| < sigma_0^2.
    standard_deepc: True when alpha_0 = 1, i.e. the scheme is standard DeePC
      and the condition does not apply.
    form: "general", "identical_noise" or "standard".
    lhs: Left-hand side of the evaluated inequality (NaN for "standard").
  """
  holds: bool
  standard_deepc: bool
  form: str
  lhs: float

  def __bool__(self):
    return self.holds


@dataclasses.dataclass(frozen=True, eq=False)
class DispersionReport:
  """Second moment of the federated trajectory around the nominal one."""
  omega: np.ndarray
  omega_norm: float
  bound: float
  nominal_only_norm: float
  advantage: AdvantageVerdict


@dataclasses.dataclass(frozen=True, eq=False)
class BoundDiagnostics:
  bias_bound: float
  asymptotic_bound: float
  epsilons: np.ndarray
  dispersion: DispersionReport


def hankel_distance(y_i, y_0, depth):
  """Spectral norm of H_L(y_i) - H_L(y_0)."""
  y_i = linalg_util.as_matrix(y_i, "y_i")
  y_0 = linalg_util.as_matrix(y_0, "y_0")
  if y_i.shape != y_0.shape:
    raise ValueError(
        f"Output sequences differ in shape: {y_i.shape} vs {y_0.shape}.")
  return linalg_util.spectral_norm(
      hankel.build_hankel(y_i, depth) - hankel.build_hankel(y_0, depth))


def compute_weights(distances, beta):
  """Softmax weights over -beta * distances.

  Args:
    distances: Hankel distances of the M systems, nominal first.
    beta: Non-negative temperature, or `INFINITE_BETA` (or "inf") for the
      indicator of the minimum distance with ties split uniformly. Zero gives
      uniform weights.

  Returns:
    The `FederationWeights`.

  Raises:
    ValueError: If `distances` is empty or not finite, or `beta` is negative.
  """
  distances = linalg_util.as_vector(distances, "distances")
  if distances.size == 0:
    raise ValueError("At least one distance is required.")
  if not np.all(np.isfinite(distances)):
    raise ValueError(f"Distances must be finite, got {distances}.")
  beta = parse_beta(beta)
  if math.isinf(beta):
    minimizers = (distances == np.min(distances)).astype(np.float64)
    alpha = minimizers / np.sum(minimizers)
  else:
    logits = -beta * distances
    logits = logits - np.max(logits)
    exponentials = np.exp(logits)
    alpha = exponentials / np.sum(exponentials)
  return FederationWeights(alpha=alpha, beta=beta, distances=distances)


def _check_shared_experiment(datasets):
  if not datasets:
    raise ValueError("At least one dataset is required.")
  reference = datasets[0]
  for dataset in datasets[1:]:
    if dataset.y_noisy.shape != reference.y_noisy.shape:
      raise ValueError(
          f"Dataset {dataset.system_index} has output shape "
          f"{dataset.y_noisy.shape}, expected {reference.y_noisy.shape}.")
    if not np.array_equal(dataset.u, reference.u):
      raise ValueError(
          f"Dataset {dataset.system_index} was not collected with the "
          "shared input sequence.")


def fuse_outputs(datasets, weights):
  """Convex combination sum_i alpha_i y_noisy_i of the measured outputs.

  Args:
    datasets: The M `TrajectoryDataset` of one shared experiment.
    weights: `FederationWeights` of length M.

  Returns:
    The fused T x n_y output.

  Raises:
    ValueError: If the datasets differ in input or shape, or the weight count
      does not match.
  """
  _check_shared_experiment(datasets)
  if weights.size != len(datasets):
    raise ValueError(
        f"Got {weights.size} weights for {len(datasets)} datasets.")
  fused = np.zeros_like(datasets[0].y_noisy)
  for alpha, dataset in zip(weights.alpha, datasets):
    fused += alpha * dataset.y_noisy
  return fused


def build_federated_predictor(datasets, beta, t_ini, horizon, n_x=None):
  """Computes the weights and the federated Hankel blocks.

  Distances use the measured outputs and the predictor depth T_ini + N.

  Args:
    datasets: The M datasets, nominal first.
    beta: Weight temperature, see `compute_weights`.
    t_ini: Initial window length.
    horizon: Prediction horizon N.
    n_x: Optional state dimension forwarded to `hankel.partition`.

  Returns:
    A tuple `(blocks, weights)`.
  """
  _check_shared_experiment(datasets)
  if datasets[0].system_index != 0:
    raise ValueError("The first dataset must belong to the nominal system.")
  depth = t_ini + horizon
  nominal_output = datasets[0].y_noisy
  distances = [hankel_distance(dataset.y_noisy, nominal_output, depth)
               for dataset in datasets]
  weights = compute_weights(distances, beta)
  fused = fuse_outputs(datasets, weights)
  blocks = hankel.partition(datasets[0].u, fused, t_ini, horizon, n_x=n_x)
  # The Hankel map is linear: fusing then partitioning equals the weighted
  # sum of the per-dataset partitions.
  parts = [hankel.partition(dataset.u, dataset.y_noisy, t_ini, horizon)
           for dataset in datasets]
  for name in ("y_p", "y_f"):
    weighted = sum(alpha * getattr(part, name)
                   for alpha, part in zip(weights.alpha, parts))
    assert np.allclose(getattr(blocks, name), weighted, rtol=0.0,
                       atol=1e-12), name
  return blocks, weights


def mean_bias_bound(epsilons, weights):
  """Bound sum_{i>=1} alpha_i eps_i on the distance of the mean fused output."""
  epsilons = linalg_util.as_vector(epsilons, "epsilons", weights.size)
  return float(np.dot(weights.alpha[1:], epsilons[1:]))


def asymptotic_bound(epsilons):
  """Uniform-weight bound (1/M) sum_{i>=1} eps_i."""
  epsilons = linalg_util.as_vector(epsilons, "epsilons")
  if epsilons.size == 0:
    raise ValueError("At least one epsilon is required.")
  return float(np.sum(epsilons[1:]) / epsilons.size)


def dissimilarity_terms(delta_ys):
  """Largest singular values of the dissimilarity outer products.

  Args:
    delta_ys: M stacked trajectory differences from the nominal one.

  Returns:
    A tuple `(rho_self, rho_cross)` with rho_self[i] = ||dy_i||^2 and
    rho_cross[i, j] = ||dy_i|| ||dy_j||, the spectral norms of the rank-one
    products dy_i dy_i' and dy_i dy_j'.
  """
  norms = np.array([np.linalg.norm(np.ravel(delta)) for delta in delta_ys])
  return norms**2, np.outer(norms, norms)


def _off_diagonal(matrix):
  matrix = np.array(matrix, dtype=np.float64)
  np.fill_diagonal(matrix, 0.0)
  return matrix


def dispersion_bound(rho_self, rho_cross, weights, variances):
  """Triangle-inequality bound on ||Omega||_2.

  Args:
    rho_self: rho_self[i] = rho_max(dy_i dy_i').
    rho_cross: rho_cross[i][j] = rho_max(dy_i dy_j').
    weights: `FederationWeights` of length M.
    variances: Noise variances sigma_i^2.

  Returns:
    alpha_0^2 sigma_0^2 + sum_{i>=1} alpha_i^2 (rho_i + sigma_i^2)
      + sum_{i>=1} sum_{j>=1, j!=i} alpha_i alpha_j rho_ij.
  """
  alpha = weights.alpha
  m = alpha.shape[0]
  rho_self = linalg_util.as_vector(rho_self, "rho_self", m)
  rho_cross = linalg_util.as_matrix(rho_cross, "rho_cross", rows=m, cols=m)
  variances = linalg_util.as_vector(variances, "variances", m)
  rest = alpha[1:]
  cross = _off_diagonal(np.outer(rest, rest)) * rho_cross[1:, 1:]
  return float(alpha[0]**2 * variances[0] +
               np.sum(rest**2 * (rho_self[1:] + variances[1:])) +
               np.sum(cross))


def advantage_condition(rho_self, rho_cross, weights, variances, form=None):
  """Sufficient condition for the federated dispersion to beat sigma_0^2.

  The general form normalizes the weights by 1 - alpha_0^2; the form for
  identically distributed noise normalizes by 1 - sum_i alpha_i^2. Both are
  evaluated as printed, cross terms included with their factors of two.

  Args:
    rho_self: See `dispersion_bound`.
    rho_cross: See `dispersion_bound`.
    weights: `FederationWeights`.
    variances: Noise variances sigma_i^2.
    form: "general", "identical_noise", or None to pick "identical_noise"
      exactly when all variances are equal.

  Returns:
    An `AdvantageVerdict`.
  """
  alpha = weights.alpha
  m = alpha.shape[0]
  rho_self = linalg_util.as_vector(rho_self, "rho_self", m)
  rho_cross = linalg_util.as_matrix(rho_cross, "rho_cross", rows=m, cols=m)
  variances = linalg_util.as_vector(variances, "variances", m)
  if alpha[0] >= 1.0:
    return AdvantageVerdict(
        holds=False, standard_deepc=True, form="standard", lhs=math.nan)
  if form is None:
    identical = bool(np.allclose(variances, variances[0], rtol=1e-12, atol=0))
    form = "identical_noise" if identical else "general"
  if form not in ("general", "identical_noise"):
    raise ValueError(f"Unknown advantage form {form!r}.")
  rest = alpha[1:]
  pairs = _off_diagonal(np.outer(rest, rest))
  squares_left = 1.0 - float(np.sum(alpha**2))
  if form == "identical_noise" and squares_left <= 0.0:
    form = "general"
  if form == "identical_noise":
    lhs = (np.sum(rest**2 / squares_left * rho_self[1:]) +
           np.sum(2.0 * pairs / squares_left * rho_cross[1:, 1:]))
  else:
    nominal_left = 1.0 - alpha[0]**2
    lhs = (np.sum(rest**2 / nominal_left * (rho_self[1:] + variances[1:])) +
           2.0 * np.sum(2.0 * pairs / nominal_left * rho_cross[1:, 1:]))
  return AdvantageVerdict(
      holds=bool(lhs < variances[0]),
      standard_deepc=False,
      form=form,
      lhs=float(lhs))


def dispersion(delta_ys, weights, variances):
  """Assembles Omega and compares it with its bound and with sigma_0^2.

  Omega = sum_{i>=1} alpha_i^2 dy_i dy_i'
          + sum_{i>=1} sum_{j>=1, j!=i} alpha_i alpha_j dy_i dy_j'
          + sum_i alpha_i^2 sigma_i^2 I.
  The double sum runs over ordered pairs, so every unordered pair appears
  twice and Omega is symmetric up to roundoff; it is symmetrized explicitly.

  Args:
    delta_ys: M stacked differences (length n_y T) between each system's
      noiseless output and the nominal one; delta_ys[0] is zero.
    weights: `FederationWeights` of length M.
    variances: Noise variances sigma_i^2.

  Returns:
    A `DispersionReport`.

  Raises:
    ValueError: On length mismatches.
  """
  m = weights.size
  if len(delta_ys) != m:
    raise ValueError(f"Got {len(delta_ys)} trajectories for {m} weights.")
  deltas = np.array([np.ravel(np.asarray(d, np.float64)) for d in delta_ys])
  if deltas.ndim != 2:
    raise ValueError("All trajectory differences must have the same length.")
  variances = linalg_util.as_vector(variances, "variances", m)
  alpha = weights.alpha
  rest, moved = alpha[1:], deltas[1:]
  self_terms = (moved.T * rest**2) @ moved
  cross_terms = moved.T @ _off_diagonal(np.outer(rest, rest)) @ moved
  noise = float(np.sum(alpha**2 * variances))
  omega = self_terms + cross_terms + noise * np.eye(deltas.shape[1])
  omega = 0.5 * (omega + omega.T)
  omega_norm = linalg_util.spectral_norm(omega)
  rho_self, rho_cross = dissimilarity_terms(deltas)
  bound = dispersion_bound(rho_self, rho_cross, weights, variances)
  assert omega_norm <= bound * (1.0 + 1e-10) + 1e-12, (omega_norm, bound)
  return DispersionReport(
      omega=omega,
      omega_norm=omega_norm,
      bound=bound,
      nominal_only_norm=float(variances[0]),
      advantage=advantage_condition(rho_self, rho_cross, weights, variances),
  )


def bound_diagnostics(datasets, weights, variances=None):
  """Bias and dispersion diagnostics of `weights` on simulated datasets.

  Args:
    datasets: The M datasets of one shared experiment; their clean outputs
      give the similarity gaps eps_i = ||y_clean_i - y_clean_0||.
    weights: `FederationWeights` of length M.
    variances: Optional override of the per-system noise variances.

  Returns:
    A `BoundDiagnostics`.
  """
  _check_shared_experiment(datasets)
  nominal = datasets[0].y_clean.reshape(-1)
  delta_ys = [dataset.y_clean.reshape(-1) - nominal for dataset in datasets]
  epsilons = np.array([np.linalg.norm(delta) for delta in delta_ys])
  if variances is None:
    variances = [dataset.noise_variance for dataset in datasets]
  return BoundDiagnostics(
      bias_bound=mean_bias_bound(epsilons, weights),
      asymptotic_bound=asymptotic_bound(epsilons),
      epsilons=epsilons,
      dispersion=dispersion(delta_ys, weights, variances),
  )
