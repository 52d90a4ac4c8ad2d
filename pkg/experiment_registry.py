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

"""Registry of plant presets, perturbation directions and controllers."""

import immutabledict
import numpy as np

from deepc import controllers
from deepc import lti_sim

_ORACLE = "oracle"

_STANDARD = "standard"

_FEDERATED = "federated"

# Output is the second state; the plant has no feedthrough.
PLANT_DICT = immutabledict.immutabledict({
    "nominal": lti_sim.StateSpaceModel(
        a=np.array([[0.7326, -0.0891], [0.1722, 0.9909]]),
        b=np.array([[0.0609], [0.0064]]),
        c=np.array([[0.0, 1.0]]),
        d=np.zeros((1, 1)),
    ),
})

DELTA_A_DICT = immutabledict.immutabledict({
    "rotationlike": np.array([[0.0, 1.0], [-1.0, 0.0]]),
    "identity": np.eye(2),
})

CONTROLLER_DICT = immutabledict.immutabledict({
    _STANDARD: controllers.StandardController,
    _FEDERATED: controllers.FederatedController,
    _ORACLE: controllers.OracleController,
})

# Canonical row order of controllers within a (run, lambda_g) group.
CONTROLLER_ORDER = tuple(sorted(CONTROLLER_DICT))


def make_controller(controller_id):
  if controller_id not in CONTROLLER_DICT:
    raise ValueError(
        f"Unknown controller {controller_id!r}; expected one of "
        f"{sorted(CONTROLLER_DICT)}.")
  return CONTROLLER_DICT[controller_id](controller_id)


def resolve_plant(spec):
  """A `StateSpaceModel` from a preset name or a dict of matrices."""
  if isinstance(spec, lti_sim.StateSpaceModel):
    return spec
  if isinstance(spec, str):
    if spec not in PLANT_DICT:
      raise ValueError(
          f"Unknown plant preset {spec!r}; expected one of "
          f"{sorted(PLANT_DICT)}.")
    return PLANT_DICT[spec]
  if isinstance(spec, dict):
    missing = {"a", "b", "c"} - set(spec)
    if missing:
      raise ValueError(f"Plant spec is missing matrices {sorted(missing)}.")
    return lti_sim.StateSpaceModel(
        a=spec["a"], b=spec["b"], c=spec["c"], d=spec.get("d", 0.0))
  raise ValueError(f"Cannot build a plant from {spec!r}.")


def resolve_delta_a(spec, n_x):
  """The perturbation direction from a preset name or an explicit matrix."""
  if isinstance(spec, str):
    if spec not in DELTA_A_DICT:
      raise ValueError(
          f"Unknown delta_A preset {spec!r}; expected one of "
          f"{sorted(DELTA_A_DICT)}.")
    if spec == "identity":
      return np.eye(n_x)
    delta_a = DELTA_A_DICT[spec]
  else:
    delta_a = np.asarray(spec, dtype=np.float64)
  if delta_a.shape != (n_x, n_x):
    raise ValueError(
        f"delta_A must be {n_x} x {n_x}, got shape {delta_a.shape}.")
  return delta_a
