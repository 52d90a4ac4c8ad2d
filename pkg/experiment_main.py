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

"""Binary running the federated DeePC case study. See README.md.

Usage:
  python experiment_main.py <case-study|sweep-lambda|sweep-m|bounds|pe-check> \
      --out=results [--config=config.json] [--seed=...] [--runs=...]
"""

import csv
import json
import os

from absl import app
from absl import flags
from absl import logging
import immutabledict
import numpy as np

from deepc import experiment
from deepc import hankel
from deepc_utils import rng_util

_CONFIG = flags.DEFINE_string(
    "config", None, "Path to a JSON config with ExperimentConfig fields.")

_SEED = flags.DEFINE_integer("seed", None, "Master seed override.")

_OUT = flags.DEFINE_string(
    "out", "results", "Output directory for the CSV files.")

_RUNS = flags.DEFINE_integer("runs", None, "Number of Monte Carlo runs.")

_M = flags.DEFINE_integer("m", None, "Number of systems in the family.")

_BETA = flags.DEFINE_string(
    "beta", None, "Temperature of the federation weights, a number or 'inf'.")

_THREADS = flags.DEFINE_integer(
    "threads", 1, "Worker threads; results do not depend on it.")

_M_LIST = flags.DEFINE_list(
    "m_list", ["5", "15", "35", "55"], "Family sizes for the M sweep.")

_SIGNAL = flags.DEFINE_string(
    "signal", None, "CSV signal (one column per channel) for pe-check.")

_ORDER = flags.DEFINE_integer(
    "order", None, "Excitation order for pe-check; default T_ini + N + n_x.")

RECORD_COLUMNS = ("run", "lambda_g", "M", "controller", "rmse_u", "rmse_y",
                  "rms_y", "alpha0", "alpha_max_other", "bias_bound",
                  "disp_norm", "disp_bound", "advantage")

BOUNDS_COLUMNS = ("run", "M", "alpha0", "alpha_max_other", "bias_bound",
                  "asymptotic_bound", "disp_norm", "disp_bound", "advantage")


def format_value(value):
  """Serializes a CSV cell; floats keep 17 significant digits."""
  if isinstance(value, (bool, np.bool_)):
    return "true" if value else "false"
  if isinstance(value, (int, np.integer)):
    return str(int(value))
  if isinstance(value, (float, np.floating)):
    return format(float(value), ".17g")
  return str(value)


def write_csv(path, header, rows):
  directory = os.path.dirname(path)
  if directory:
    os.makedirs(directory, exist_ok=True)
  with open(path, "w", encoding="utf-8", newline="") as f:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
      writer.writerow([format_value(value) for value in row])
  logging.info("Wrote %s", path)


def record_row(record):
  return (record.run_index, record.lambda_g, record.m, record.controller,
          record.rmse_u, record.rmse_y, record.rms_y, record.alpha0,
          record.alpha_max_other, record.bias_bound, record.disp_norm,
          record.disp_bound, record.advantage)


def write_records(path, records):
  write_csv(path, RECORD_COLUMNS, [record_row(record) for record in records])


def write_summary(path, records):
  rows = experiment.summarize(records)
  if not rows:
    return
  header = ["M", "lambda_g", "controller", "count"]
  header.extend(name for name, _ in rows[0].statistics)
  write_csv(path, header, [
      [row.m, row.lambda_g, row.controller, row.count] +
      [value for _, value in row.statistics] for row in rows
  ])


def write_optimal_lambda(path, optimal):
  write_csv(path, ("controller", "lambda_g"), sorted(optimal.items()))


def load_config(path=None, seed=None, runs=None, m=None, beta=None):
  """Reads the JSON config and applies command-line overrides.

  Raises:
    ValueError: If the file is not a JSON object, has unknown keys or yields an
      invalid config.
  """
  config = experiment.ExperimentConfig()
  if path:
    with open(path, "r", encoding="utf-8") as f:
      values = json.load(f)
    if not isinstance(values, dict):
      raise ValueError(f"Config {path} must hold a JSON object.")
    config = experiment.ExperimentConfig.from_dict(values)
  overrides = {}
  for name, value in (("master_seed", seed), ("n_runs", runs), ("m", m),
                      ("beta", beta)):
    if value is not None:
      overrides[name] = value
  if overrides:
    config = config.replace(**overrides)
  return config.validate()


def sweep_lambda(config, out_dir, threads):
  """Runs the lambda sweep and writes its records, summary and optima."""
  records = experiment.run_case_study(config, threads=threads)
  write_records(os.path.join(out_dir, "records.csv"), records)
  write_summary(os.path.join(out_dir, "summary.csv"), records)
  optimal = experiment.select_optimal_lambda(records)
  write_optimal_lambda(os.path.join(out_dir, "optimal_lambda.csv"), optimal)
  for controller_id, lambda_g in sorted(optimal.items()):
    print(f"{controller_id} optimal lambda_g: {lambda_g}")
  return optimal


def _m_sweep_records(grouped):
  return [record for records in grouped.values() for record in records]


def sweep_m(config, out_dir, threads, m_list, optimal=None):
  grouped = experiment.sweep_m(config, m_list, optimal_lambdas=optimal,
                               threads=threads)
  records = _m_sweep_records(grouped)
  write_records(os.path.join(out_dir, "m_sweep.csv"), records)
  write_summary(os.path.join(out_dir, "m_sweep_summary.csv"), records)
  for summary in experiment.summarize(records):
    statistics = dict(summary.statistics)
    print(f"M={summary.m} {summary.controller} "
          f"median rmse_y: {statistics['rmse_y_median']}")
  return grouped


def case_study(config, out_dir, threads, m_list):
  """The lambda sweep followed by the M sweep at the selected lambda_g."""
  optimal = sweep_lambda(config, out_dir, threads)
  sweep_m(config, out_dir, threads, m_list, optimal=optimal)


def bounds(config, out_dir, threads):
  rows = [(b.run_index, b.m, b.alpha0, b.alpha_max_other, b.bias_bound,
           b.asymptotic_bound, b.disp_norm, b.disp_bound, b.advantage)
          for b in experiment.run_bounds(config, threads=threads)]
  write_csv(os.path.join(out_dir, "bounds.csv"), BOUNDS_COLUMNS, rows)


def read_signal(path):
  """Reads a numeric CSV signal; a non-numeric first row is a header."""
  with open(path, "r", encoding="utf-8", newline="") as f:
    rows = [row for row in csv.reader(f) if row]
  if not rows:
    raise ValueError(f"Signal file {path} is empty.")
  try:
    [float(cell) for cell in rows[0]]
  except ValueError:
    rows = rows[1:]
  try:
    return np.array([[float(cell) for cell in row] for row in rows])
  except ValueError as e:
    raise ValueError(f"Signal file {path} has non-numeric cells: {e}") from e


def pe_check(config, out_dir, signal_path=None, order=None):
  """Reports the Hankel rank of a signal or of the first excitation draw."""
  plant = config.resolved_plant()
  if order is None:
    order = config.t_ini + config.n + plant.n_x
  if signal_path:
    signal, source = read_signal(signal_path), signal_path
  else:
    generator = rng_util.stream(config.master_seed, 0,
                                rng_util.PURPOSES["excitation"], 0)
    signal = generator.standard_normal((config.t, plant.n_u))
    source = "excitation"
  if not 1 <= order <= signal.shape[0]:
    raise ValueError(
        f"Order {order} is outside [1, {signal.shape[0]}] for this signal.")
  exciting, rank = hankel.is_persistently_exciting(signal, order)
  required = signal.shape[1] * order
  write_csv(os.path.join(out_dir, "pe_check.csv"),
            ("source", "order", "rank", "required_rank",
             "persistently_exciting"),
            [(source, order, rank, required, exciting)])
  print(f"{source}: order {order} rank {rank}/{required} "
        f"persistently exciting: {exciting}")
  return exciting, rank


COMMANDS = immutabledict.immutabledict({
    "case-study": lambda config: case_study(
        config, _OUT.value, _THREADS.value, _m_list()),
    "sweep-lambda": lambda config: sweep_lambda(
        config, _OUT.value, _THREADS.value),
    "sweep-m": lambda config: sweep_m(
        config, _OUT.value, _THREADS.value, _m_list()),
    "bounds": lambda config: bounds(config, _OUT.value, _THREADS.value),
    "pe-check": lambda config: pe_check(
        config, _OUT.value, _SIGNAL.value, _ORDER.value),
})


def _m_list():
  try:
    return [int(m) for m in _M_LIST.value]
  except ValueError as e:
    raise app.UsageError(f"--m_list must hold integers: {e}") from e


def main(argv):
  if len(argv) != 2 or argv[1] not in COMMANDS:
    raise app.UsageError(
        f"Expected one command out of {sorted(COMMANDS)}, got {argv[1:]}.")
  try:
    config = load_config(_CONFIG.value, seed=_SEED.value, runs=_RUNS.value,
                         m=_M.value, beta=_BETA.value)
  except (OSError, ValueError) as e:
    raise app.UsageError(str(e)) from e
  logging.info("Running %s with %d runs, M=%d.", argv[1], config.n_runs,
               config.m)
  COMMANDS[argv[1]](config)


if __name__ == "__main__":
  app.run(main)
