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

"""Controllers compared in the case study."""

import dataclasses
from typing import Tuple

import numpy as np

from deepc import deepc_solver
from deepc import federation
from deepc import hankel
from deepc import lti_sim


@dataclasses.dataclass(frozen=True, eq=False)
class RunData:
  """Everything one Monte Carlo run shares between its controllers.

  Attributes:
    plant: The nominal plant.
    x0: Initial state of the offline experiment and of the closed loop.
    datasets: Datasets of the whole family, nominal first.
    beta: Temperature of the federation weights.
    t_ini: Initial window length.
    horizon: Prediction horizon N.
  """
  plant: lti_sim.StateSpaceModel
  x0: np.ndarray
  datasets: Tuple[lti_sim.TrajectoryDataset, ...]
  beta: float
  t_ini: int
  horizon: int

  @property
  def nominal(self):
    return self.datasets[0]

  @property
  def size(self):
    return len(self.datasets)


class Controller:
  """A way of turning the run's data into DeePC predictor blocks."""

  def __init__(self, controller_id):
    self.id = controller_id

  def build_predictor(self, run_data):
    """Returns `(blocks, weights)` for the run."""
    raise NotImplementedError("`build_predictor` not implemented.")

  def regularization(self, lambda_g):
    """The lambda_g this controller actually uses for a grid value."""
    return lambda_g

  def variances(self, run_data):
    return [dataset.noise_variance for dataset in run_data.datasets]

  def diagnostics(self, run_data, weights):
    """Federation diagnostics of the data this controller predicts with."""
    return federation.bound_diagnostics(
        run_data.datasets, weights, variances=self.variances(run_data))


class OracleController(Controller):
  """DeePC on noiseless nominal data without regularization."""

  def build_predictor(self, run_data):
    blocks = deepc_solver.make_oracle_blocks(
        run_data.plant, run_data.x0, run_data.nominal.u, run_data.t_ini,
        run_data.horizon)
    return blocks, federation.FederationWeights.nominal_only(run_data.size)

  def regularization(self, lambda_g):
    del lambda_g
    return 0.0

  def variances(self, run_data):
    return np.zeros(run_data.size)


class StandardController(Controller):
  """DeePC on the noisy nominal dataset alone."""

  def build_predictor(self, run_data):
    nominal = run_data.nominal
    blocks = hankel.partition(nominal.u, nominal.y_noisy, run_data.t_ini,
                              run_data.horizon, n_x=run_data.plant.n_x)
    return blocks, federation.FederationWeights.nominal_only(run_data.size)


class FederatedController(Controller):
  """DeePC on the similarity-weighted fusion of the family's datasets."""

  def build_predictor(self, run_data):
    return federation.build_federated_predictor(
        run_data.datasets, run_data.beta, run_data.t_ini, run_data.horizon,
        n_x=run_data.plant.n_x)
