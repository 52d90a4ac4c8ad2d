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

"""Monte Carlo harness comparing oracle, standard and federated DeePC."""

import collections
from concurrent import futures
import dataclasses
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from absl import logging
import numpy as np

from deepc import controllers
from deepc import deepc_solver
from deepc import federation
from deepc import hankel
from deepc import lti_sim
from deepc_utils import rng_util
import experiment_registry

# Excitation draws tried per run before giving up on persistency of
# excitation.
_MAX_EXCITATION_DRAWS = 100

DEFAULT_LAMBDA_GRID = (0.0,) + tuple(float(v) for v in np.logspace(-3, 2, 30))


def parse_snr(value):
  """Parses an SNR in dB; "inf" means noiseless data."""
  if isinstance(value, str):
    if value.strip().lower() not in ("inf", "+inf", "infinite"):
      raise ValueError(f"snr_db must be a number or 'inf', got {value!r}.")
    return lti_sim.NOISELESS
  snr_db = float(value)
  if math.isnan(snr_db) or snr_db == -math.inf:
    raise ValueError(f"snr_db must be finite or +inf, got {value}.")
  return snr_db


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
  """Settings of the case study; the defaults reproduce it.

  Attributes:
    plant: Plant preset name from `experiment_registry.PLANT_DICT` or a dict
      with matrices "a", "b", "c" and optionally "d".
    delta_a: Perturbation direction: a `DELTA_A_DICT` name or a matrix.
    m: Number of systems in the family, nominal included.
    scale: Perturbation magnitude of the family.
    snr_db: SNR of the offline measurements in dB, or inf.
    t: Length T of the offline experiment.
    x0: Initial state of the experiment and of the closed loop.
    t_ini: Initial window length.
    n: Prediction horizon N.
    q: Output weight (scalar or matrix).
    r: Input weight (scalar or matrix).
    beta: Temperature of the federation weights, or inf.
    lambda_grid: Regularization values swept by the case study.
    t_sim: Closed-loop length.
    n_runs: Number of Monte Carlo runs.
    master_seed: Seed all random streams derive from.
    u_bounds: Optional per-channel [low, high] input bounds.
    y_bounds: Optional per-channel [low, high] output bounds.
  """
  plant: Union[str, Mapping[str, Any]] = "nominal"
  delta_a: Union[str, Sequence[Sequence[float]]] = "rotationlike"
  m: int = 55
  scale: float = 0.05
  snr_db: float = 20.0
  t: int = 50
  x0: Tuple[float, ...] = (1.0, 1.0)
  t_ini: int = 3
  n: int = 3
  q: Any = 1.0
  r: Any = 0.01
  beta: float = 0.1
  lambda_grid: Tuple[float, ...] = DEFAULT_LAMBDA_GRID
  t_sim: int = 50
  n_runs: int = 150
  master_seed: int = 0
  u_bounds: Optional[Any] = None
  y_bounds: Optional[Any] = None

  @classmethod
  def from_dict(cls, values):
    """Builds a config from a flat mapping of field names.

    Raises:
      ValueError: On keys that are not config fields.
    """
    known = {field.name for field in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
      raise ValueError(f"Unknown config keys: {unknown}.")
    return cls().replace(**values)

  def replace(self, **changes):
    """Returns a copy with `changes` applied and normalized."""
    if "beta" in changes:
      changes["beta"] = federation.parse_beta(changes["beta"])
    if "snr_db" in changes:
      changes["snr_db"] = parse_snr(changes["snr_db"])
    for name in ("x0", "lambda_grid"):
      if name in changes:
        changes[name] = tuple(float(v) for v in changes[name])
    return dataclasses.replace(self, **changes)

  def validate(self):
    """Checks the config and returns it.

    Raises:
      ValueError: If a setting is out of range or inconsistent.
    """
    if not self.lambda_grid:
      raise ValueError("lambda_grid must not be empty.")
    if any(not math.isfinite(v) or v < 0 for v in self.lambda_grid):
      raise ValueError(
          f"lambda_grid entries must be finite and non-negative: "
          f"{self.lambda_grid}.")
    if len(set(self.lambda_grid)) != len(self.lambda_grid):
      raise ValueError(f"lambda_grid has duplicates: {self.lambda_grid}.")
    if self.n_runs < 1:
      raise ValueError(f"n_runs must be positive, got {self.n_runs}.")
    if self.m < 1:
      raise ValueError(f"m must be positive, got {self.m}.")
    if self.t_sim < 1:
      raise ValueError(f"t_sim must be positive, got {self.t_sim}.")
    if self.master_seed < 0:
      raise ValueError(
          f"master_seed must be non-negative, got {self.master_seed}.")
    if self.t < self.t_ini + self.n:
      raise ValueError(
          f"T={self.t} is shorter than T_ini + N = {self.t_ini + self.n}.")
    federation.parse_beta(self.beta)
    parse_snr(self.snr_db)
    plant = self.resolved_plant()
    experiment_registry.resolve_delta_a(self.delta_a, plant.n_x)
    if len(self.x0) != plant.n_x:
      raise ValueError(f"x0 must have {plant.n_x} entries, got {self.x0}.")
    self.deepc_config(0.0)
    return self

  def resolved_plant(self):
    return experiment_registry.resolve_plant(self.plant)

  def family(self, m=None):
    plant = self.resolved_plant()
    delta_a = experiment_registry.resolve_delta_a(self.delta_a, plant.n_x)
    return lti_sim.make_family(plant, delta_a, self.m if m is None else m,
                               scale=self.scale)

  def deepc_config(self, lambda_g):
    """The `DeePCConfig` for one regularization value."""
    plant = self.resolved_plant()
    q = np.asarray(self.q, dtype=np.float64)
    r = np.asarray(self.r, dtype=np.float64)
    if q.ndim == 0:
      q = q * np.eye(plant.n_y)
    if r.ndim == 0:
      r = r * np.eye(plant.n_u)
    return deepc_solver.DeePCConfig(
        q=q, r=r, lambda_g=lambda_g, t_ini=self.t_ini, horizon=self.n,
        u_bounds=self.u_bounds, y_bounds=self.y_bounds)


@dataclasses.dataclass(frozen=True)
class RunRecord:
  """Metrics of one controller in one run at one grid value of lambda_g."""
  run_index: int
  lambda_g: float
  m: int
  controller: str
  rmse_u: float
  rmse_y: float
  rms_y: float
  alpha0: float
  alpha_max_other: float
  bias_bound: float
  asymptotic_bound: float
  disp_norm: float
  disp_bound: float
  advantage: bool
  status: str = deepc_solver.QpStatus.OPTIMAL.value

  def sort_key(self):
    return (self.m, self.run_index, self.lambda_g, self.controller)


@dataclasses.dataclass(frozen=True)
class BoundsRecord:
  """Federation diagnostics of one run, without any closed loop."""
  run_index: int
  m: int
  alpha0: float
  alpha_max_other: float
  bias_bound: float
  asymptotic_bound: float
  disp_norm: float
  disp_bound: float
  advantage: bool


@dataclasses.dataclass(frozen=True)
class SummaryRow:
  """Count, mean, median and interquartile range of the metrics of a group."""
  m: int
  lambda_g: float
  controller: str
  count: int
  statistics: Tuple[Tuple[str, float], ...]


SUMMARY_METRICS = ("rmse_u", "rmse_y", "rms_y")


def _check_same_shape(traj, other, name):
  traj = np.asarray(traj, dtype=np.float64)
  other = np.asarray(other, dtype=np.float64)
  if traj.shape != other.shape:
    raise ValueError(
        f"Trajectory shape {traj.shape} does not match {name} shape "
        f"{other.shape}.")
  if traj.size == 0:
    raise ValueError("Trajectories must not be empty.")
  return traj, other


def rmse_vs_oracle(traj, oracle_traj):
  """RMS deviation from the oracle closed loop over all entries."""
  traj, oracle_traj = _check_same_shape(traj, oracle_traj, "oracle")
  return float(np.sqrt(np.mean(np.square(traj - oracle_traj))))


def rms_tracking(traj, refs):
  """Root mean square tracking error with respect to `refs`."""
  traj, refs = _check_same_shape(traj, refs, "reference")
  return float(np.sqrt(np.mean(np.square(traj - refs))))


def draw_excitation(config, run_index, plant):
  """Draws a zero-mean unit-variance white input that is persistently exciting.

  Each attempt uses its own stream, so a redraw never reuses samples.

  Returns:
    A tuple `(u, attempt)`.

  Raises:
    ValueError: If no draw is persistently exciting.
  """
  order = config.t_ini + config.n + plant.n_x
  if order > config.t:
    logging.warning(
        "Run %d: T=%d is too short for an input exciting of order %d.",
        run_index, config.t, order)
  for attempt in range(_MAX_EXCITATION_DRAWS):
    generator = rng_util.stream(config.master_seed, run_index,
                                rng_util.PURPOSES["excitation"], attempt)
    u = generator.standard_normal((config.t, plant.n_u))
    if order > config.t:
      return u, attempt
    exciting, rank = hankel.is_persistently_exciting(u, order)
    if exciting:
      return u, attempt
    logging.warning(
        "Run %d: excitation draw %d has Hankel rank %d < %d; redrawing.",
        run_index, attempt, rank, plant.n_u * order)
  raise ValueError(
      f"Run {run_index}: no persistently exciting input of order {order} in "
      f"{_MAX_EXCITATION_DRAWS} draws.")


def build_run_data(config, run_index, family):
  """Draws the excitation and the noisy datasets of one run."""
  plant = family.nominal
  u, _ = draw_excitation(config, run_index, plant)
  noise_seed = rng_util.derive_seed(config.master_seed, run_index,
                                    rng_util.PURPOSES["noise"])
  datasets = lti_sim.collect_dataset(family, config.x0, u, config.snr_db,
                                     noise_seed)
  return controllers.RunData(
      plant=plant,
      x0=np.asarray(config.x0, dtype=np.float64),
      datasets=tuple(datasets),
      beta=federation.parse_beta(config.beta),
      t_ini=config.t_ini,
      horizon=config.n,
  )


def _common_length(*results):
  length = min(result.completed_steps for result in results)
  if length == 0:
    return 0
  if any(result.completed_steps != length for result in results):
    logging.warning("Comparing truncated closed loops over %d steps.", length)
  return length


def _metrics(result, oracle_result, refs):
  length = _common_length(result, oracle_result)
  if length == 0:
    return math.nan, math.nan, math.nan
  _, y_ref = refs.window(0, length)
  return (
      rmse_vs_oracle(result.u_applied[:length],
                     oracle_result.u_applied[:length]),
      rmse_vs_oracle(result.y_realized[:length],
                     oracle_result.y_realized[:length]),
      rms_tracking(result.y_realized[:length], y_ref),
  )


def _run_once(config, run_index, family, lambdas):
  """All records of one run; `lambdas` maps controller ids to grid values."""
  run_data = build_run_data(config, run_index, family)
  plant = run_data.plant
  refs = deepc_solver.References.zeros(config.t_sim, plant.n_u, plant.n_y)

  def closed_loop(blocks, lambda_g):
    return deepc_solver.run_closed_loop(
        plant, run_data.x0, blocks, refs, config.deepc_config(lambda_g),
        config.t_sim)

  oracle = experiment_registry.make_controller("oracle")
  oracle_blocks, _ = oracle.build_predictor(run_data)
  oracle_result = closed_loop(oracle_blocks, oracle.regularization(0.0))

  records = []
  for controller_id in experiment_registry.CONTROLLER_ORDER:
    controller = experiment_registry.make_controller(controller_id)
    blocks, weights = controller.build_predictor(run_data)
    diagnostics = controller.diagnostics(run_data, weights)
    report = diagnostics.dispersion
    results = {}
    for lambda_g in lambdas[controller_id]:
      effective = controller.regularization(lambda_g)
      if effective not in results:
        if controller_id == "oracle":
          results[effective] = oracle_result
        else:
          results[effective] = closed_loop(blocks, effective)
      result = results[effective]
      rmse_u, rmse_y, rms_y = _metrics(result, oracle_result, refs)
      records.append(RunRecord(
          run_index=run_index,
          lambda_g=float(lambda_g),
          m=run_data.size,
          controller=controller_id,
          rmse_u=rmse_u,
          rmse_y=rmse_y,
          rms_y=rms_y,
          alpha0=weights.nominal_weight,
          alpha_max_other=weights.max_other_weight,
          bias_bound=diagnostics.bias_bound,
          asymptotic_bound=diagnostics.asymptotic_bound,
          disp_norm=report.omega_norm,
          disp_bound=report.bound,
          advantage=report.advantage.holds,
          status=result.status.value,
      ))
  return records


def _map_runs(function, n_runs, threads):
  """Applies `function` to every run index, in run order."""
  if threads < 1:
    raise ValueError(f"threads must be positive, got {threads}.")
  outputs = []
  if threads == 1:
    for run_index in range(n_runs):
      outputs.append(function(run_index))
      logging.info("Finished run %d/%d.", run_index + 1, n_runs)
    return outputs
  with futures.ThreadPoolExecutor(max_workers=threads) as executor:
    for run_index, output in enumerate(executor.map(function, range(n_runs))):
      outputs.append(output)
      logging.info("Finished run %d/%d.", run_index + 1, n_runs)
  return outputs


def _sweep(config, lambdas, threads):
  config.validate()
  family = config.family()
  per_run = _map_runs(
      lambda run_index: _run_once(config, run_index, family, lambdas),
      config.n_runs, threads)
  records = [record for records in per_run for record in records]
  return sorted(records, key=RunRecord.sort_key)


def run_case_study(config, threads=1):
  """Runs every controller over the lambda grid in every Monte Carlo run.

  Args:
    config: The `ExperimentConfig`.
    threads: Number of worker threads; the output does not depend on it.

  Returns:
    n_runs * len(lambda_grid) * 3 `RunRecord`, sorted by run, lambda_g and
    controller name.
  """
  grid = tuple(config.lambda_grid)
  lambdas = {controller_id: grid
             for controller_id in experiment_registry.CONTROLLER_ORDER}
  return _sweep(config, lambdas, threads)


def select_optimal_lambda(records):
  """The lambda_g minimizing the mean rmse_y of each controller.

  Ties go to the smaller lambda_g; NaN means never win.

  Returns:
    A dict from controller id to its optimal lambda_g.
  """
  if not records:
    raise ValueError("No records to select from.")
  grouped = collections.defaultdict(list)
  for record in records:
    grouped[(record.controller, record.lambda_g)].append(record.rmse_y)
  best: Dict[str, Tuple[float, float]] = {}
  for (controller_id, lambda_g), values in sorted(grouped.items()):
    mean = float(np.mean(values))
    if math.isnan(mean):
      mean = math.inf
    if controller_id not in best or mean < best[controller_id][0]:
      best[controller_id] = (mean, lambda_g)
  return {controller_id: lambda_g
          for controller_id, (_, lambda_g) in best.items()}


def sweep_m(config, m_list, optimal_lambdas=None, threads=1):
  """Reruns the case study for each family size at the optimal lambda_g.

  Args:
    config: The `ExperimentConfig`.
    m_list: Family sizes; duplicates are dropped with a warning.
    optimal_lambdas: Optional mapping from controller id to lambda_g. When
      omitted, a lambda sweep at `config.m` selects them.
    threads: Number of worker threads.

  Returns:
    A dict from M (in first-seen order) to its sorted records.
  """
  unique = list(dict.fromkeys(int(m) for m in m_list))
  if not unique:
    raise ValueError("m_list must not be empty.")
  if len(unique) != len(m_list):
    logging.warning("Dropping duplicate entries of m_list %s.", list(m_list))
  if optimal_lambdas is None:
    optimal_lambdas = select_optimal_lambda(run_case_study(config, threads))
  missing = set(experiment_registry.CONTROLLER_ORDER) - set(optimal_lambdas)
  if missing:
    raise ValueError(f"No optimal lambda_g for {sorted(missing)}.")
  lambdas = {controller_id: (float(optimal_lambdas[controller_id]),)
             for controller_id in experiment_registry.CONTROLLER_ORDER}
  grouped = {}
  for m in unique:
    logging.info("Sweeping M=%d.", m)
    grouped[m] = _sweep(config.replace(m=m), lambdas, threads)
  return grouped


def run_bounds(config, threads=1):
  """Federation diagnostics of every run, without closed loops."""
  config.validate()
  family = config.family()
  federated = experiment_registry.make_controller("federated")

  def bounds_of(run_index):
    run_data = build_run_data(config, run_index, family)
    _, weights = federated.build_predictor(run_data)
    diagnostics = federated.diagnostics(run_data, weights)
    return BoundsRecord(
        run_index=run_index,
        m=run_data.size,
        alpha0=weights.nominal_weight,
        alpha_max_other=weights.max_other_weight,
        bias_bound=diagnostics.bias_bound,
        asymptotic_bound=diagnostics.asymptotic_bound,
        disp_norm=diagnostics.dispersion.omega_norm,
        disp_bound=diagnostics.dispersion.bound,
        advantage=diagnostics.dispersion.advantage.holds,
    )

  return _map_runs(bounds_of, config.n_runs, threads)


def summarize(records):
  """Per-(M, lambda_g, controller) statistics of rmse_u, rmse_y and rms_y."""
  grouped: Dict[Tuple[int, float, str], List[RunRecord]] = (
      collections.defaultdict(list))
  for record in records:
    grouped[(record.m, record.lambda_g, record.controller)].append(record)
  rows = []
  for (m, lambda_g, controller_id), group in sorted(grouped.items()):
    statistics = []
    for metric in SUMMARY_METRICS:
      values = np.array([getattr(record, metric) for record in group])
      q1, median, q3 = np.percentile(values, [25, 50, 75])
      statistics.extend([
          (f"{metric}_mean", float(np.mean(values))),
          (f"{metric}_median", float(median)),
          (f"{metric}_iqr", float(q3 - q1)),
      ])
    rows.append(SummaryRow(
        m=m,
        lambda_g=lambda_g,
        controller=controller_id,
        count=len(group),
        statistics=tuple(statistics),
    ))
  return rows
