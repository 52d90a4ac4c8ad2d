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

"""Deterministic random streams derived from a master seed.

Streams are addressed by a path of non-negative integers (for example
`(run, purpose, member)`). The path is folded into a `SeedSequence` spawn key
and fed to the counter-based Philox bit generator, so a stream depends only on
its address and never on the order in which streams are requested.
"""

import immutabledict
import numpy as np

# Stream purposes used by the Monte Carlo harness.
PURPOSES = immutabledict.immutabledict({
    "excitation": 0,
    "noise": 1,
})


def _check_path(master_seed, path):
  if master_seed < 0:
    raise ValueError(f"master_seed must be non-negative, got {master_seed}.")
  for index in path:
    if int(index) < 0:
      raise ValueError(f"Stream path entries must be non-negative: {path}.")


def seed_sequence(master_seed, *path):
  """Returns the `SeedSequence` addressed by `path` under `master_seed`."""
  _check_path(master_seed, path)
  return np.random.SeedSequence(
      int(master_seed), spawn_key=tuple(int(i) for i in path))


def stream(master_seed, *path):
  """Returns an independent Philox-backed generator for `path`."""
  bit_generator = np.random.Philox(seed_sequence(master_seed, *path))
  return np.random.Generator(bit_generator)


def derive_seed(master_seed, *path):
  """Returns a 63-bit integer seed for `path`, usable as a new master seed."""
  state = seed_sequence(master_seed, *path).generate_state(1, dtype=np.uint64)
  return int(state[0] >> np.uint64(1))
