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

"""Tests for deepc.experiment."""

import math
from unittest import mock

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np

from deepc import experiment
from deepc import hankel
from deepc_utils import rng_util

_SMALL = dict(m=3, n_runs=2, t_sim=8, lambda_grid=[0.0, 1.0], master_seed=3)


def _small_config(**changes):
  values = dict(_SMALL)
  values.update(changes)
  return experiment.ExperimentConfig.from_dict(values).validate()


def _record(controller, lambda_g, rmse_y, run_index=0):
  return experiment.RunRecord(
      run_index=run_index, lambda_g=lambda_g, m=1, controller=controller,
      rmse_u=0.0, rmse_y=rmse_y, rms_y=0.0, alpha0=1.0, alpha_max_other=0.0,
      bias_bound=0.0, asymptotic_bound=0.0, disp_norm=0.0, disp_bound=0.0,
      advantage=False)


class MetricsTest(parameterized.TestCase):

  def test_identical_trajectories(self):
    traj = np.arange(10.0).reshape(5, 2)
    self.assertEqual(experiment.rmse_vs_oracle(traj, traj), 0.0)

  def test_constant_offset(self):
    self.assertAlmostEqual(
        experiment.rmse_vs_oracle(np.ones((50, 1)), np.zeros((50, 1))), 1.0)

  def test_direct_formula(self):
    self.assertAlmostEqual(
        experiment.rmse_vs_oracle([[3.0], [4.0]], [[0.0], [0.0]]),
        math.sqrt(25.0 / 2.0))
    self.assertAlmostEqual(
        experiment.rms_tracking([[1.0], [3.0]], [[1.0], [-1.0]]),
        math.sqrt(8.0))

  @parameterized.parameters(experiment.rmse_vs_oracle, experiment.rms_tracking)
  def test_shape_mismatch(self, metric):
    with self.assertRaises(ValueError):
      metric(np.zeros((5, 1)), np.zeros((4, 1)))


class ExperimentConfigTest(parameterized.TestCase):

  def test_defaults(self):
    config = experiment.ExperimentConfig().validate()
    self.assertEqual((config.t, config.t_ini, config.n, config.t_sim),
                     (50, 3, 3, 50))
    self.assertEqual((config.m, config.n_runs, config.beta), (55, 150, 0.1))
    self.assertLen(config.lambda_grid, 31)
    self.assertEqual(config.lambda_grid[0], 0.0)
    self.assertAlmostEqual(config.lambda_grid[-1], 100.0)
    deepc_config = config.deepc_config(0.5)
    np.testing.assert_allclose(deepc_config.q, [[1.0]])
    np.testing.assert_allclose(deepc_config.r, [[0.01]])

  def test_from_dict(self):
    config = experiment.ExperimentConfig.from_dict(
        {"beta": "inf", "snr_db": "inf", "delta_a": "identity",
         "lambda_grid": [1, 2]})
    self.assertTrue(math.isinf(config.beta))
    self.assertTrue(math.isinf(config.snr_db))
    self.assertEqual(config.lambda_grid, (1.0, 2.0))

  @parameterized.named_parameters(
      ("unknown_key", {"lambda": [0.1]}),
      ("bad_beta", {"beta": -1}),
      ("bad_snr", {"snr_db": "loud"}),
  )
  def test_from_dict_rejects(self, values):
    with self.assertRaises(ValueError):
      experiment.ExperimentConfig.from_dict(values)

  @parameterized.named_parameters(
      ("empty_grid", {"lambda_grid": []}),
      ("negative_lambda", {"lambda_grid": [-1.0]}),
      ("duplicate_lambda", {"lambda_grid": [1.0, 1.0]}),
      ("no_runs", {"n_runs": 0}),
      ("empty_family", {"m": 0}),
      ("short_data", {"t": 5}),
      ("unknown_plant", {"plant": "pendulum"}),
      ("bad_delta_a", {"delta_a": [[1.0]]}),
      ("bad_x0", {"x0": [1.0]}),
  )
  def test_validate_rejects(self, values):
    with self.assertRaises(ValueError):
      experiment.ExperimentConfig.from_dict(values).validate()

  def test_explicit_plant(self):
    config = experiment.ExperimentConfig.from_dict({
        "plant": {"a": [[0.5]], "b": [[1.0]], "c": [[1.0]]},
        "delta_a": [[1.0]],
        "x0": [1.0],
    }).validate()
    self.assertEqual(config.resolved_plant().n_x, 1)


class SelectOptimalLambdaTest(absltest.TestCase):

  def test_single_value_grid(self):
    records = [_record("standard", 0.5, 1.0), _record("standard", 0.5, 3.0)]
    self.assertEqual(experiment.select_optimal_lambda(records),
                     {"standard": 0.5})

  def test_interior_minimum_and_ties(self):
    records = [
        _record("standard", 0.1, 3.0), _record("standard", 1.0, 1.0),
        _record("standard", 10.0, 2.0),
        _record("federated", 0.1, 1.0), _record("federated", 1.0, 1.0),
    ]
    self.assertEqual(experiment.select_optimal_lambda(records),
                     {"standard": 1.0, "federated": 0.1})

  def test_empty(self):
    with self.assertRaises(ValueError):
      experiment.select_optimal_lambda([])


class SummarizeTest(absltest.TestCase):

  def test_statistics(self):
    records = [_record("standard", 1.0, value, run_index=i)
               for i, value in enumerate([1.0, 2.0, 3.0, 4.0])]
    (row,) = experiment.summarize(records)
    statistics = dict(row.statistics)
    self.assertEqual(row.count, 4)
    self.assertAlmostEqual(statistics["rmse_y_mean"], 2.5)
    self.assertAlmostEqual(statistics["rmse_y_median"], 2.5)
    self.assertAlmostEqual(statistics["rmse_y_iqr"], 1.5)


class CaseStudyTest(absltest.TestCase):

  def test_record_count_and_order(self):
    config = _small_config()
    records = experiment.run_case_study(config)
    self.assertLen(records, 2 * 2 * 3)
    keys = [(r.run_index, r.lambda_g, r.controller) for r in records]
    self.assertEqual(keys, sorted(keys))
    for record in records:
      self.assertGreaterEqual(record.rmse_u, 0.0)
      self.assertGreaterEqual(record.rms_y, 0.0)
      self.assertLessEqual(record.disp_norm, record.disp_bound * (1 + 1e-10))
      if record.controller == "oracle":
        self.assertEqual(record.rmse_y, 0.0)
        self.assertEqual(record.rmse_u, 0.0)

  def test_threads_do_not_change_results(self):
    config = _small_config()
    self.assertEqual(experiment.run_case_study(config, threads=1),
                     experiment.run_case_study(config, threads=3))

  def test_noiseless_identical_family_matches_oracle(self):
    config = _small_config(n_runs=1, lambda_grid=[0.0], snr_db="inf",
                           delta_a=[[0.0, 0.0], [0.0, 0.0]])
    for record in experiment.run_case_study(config):
      self.assertLess(record.rmse_y, 1e-6, record.controller)
      self.assertLess(record.rmse_u, 1e-6, record.controller)

  def test_infinite_beta_recovers_standard_deepc(self):
    config = _small_config(beta="inf")
    records = experiment.run_case_study(config)
    by_key = {(r.run_index, r.lambda_g, r.controller): r for r in records}
    for (run_index, lambda_g, controller), record in by_key.items():
      if controller != "federated":
        continue
      standard = by_key[(run_index, lambda_g, "standard")]
      self.assertEqual(record.alpha0, 1.0)
      self.assertEqual(record.rmse_u, standard.rmse_u)
      self.assertEqual(record.rmse_y, standard.rmse_y)

  def test_excitation_is_reproducible(self):
    config = _small_config()
    plant = config.resolved_plant()
    first, _ = experiment.draw_excitation(config, 1, plant)
    second, _ = experiment.draw_excitation(config, 1, plant)
    other, _ = experiment.draw_excitation(config, 0, plant)
    np.testing.assert_array_equal(first, second)
    self.assertFalse(np.array_equal(first, other))


class ExcitationTest(absltest.TestCase):

  def test_failed_draw_is_redrawn_from_a_fresh_stream(self):
    config = _small_config()
    plant = config.resolved_plant()
    verdicts = [(False, 7), (True, 8)]
    with mock.patch.object(hankel, "is_persistently_exciting",
                           side_effect=verdicts):
      with self.assertLogs(logger="absl", level="WARNING"):
        u, attempt = experiment.draw_excitation(config, 1, plant)
    self.assertEqual(attempt, 1)
    expected = rng_util.stream(config.master_seed, 1,
                               rng_util.PURPOSES["excitation"], 1)
    np.testing.assert_array_equal(u, expected.standard_normal((config.t, 1)))

  def test_short_record_is_reported(self):
    config = _small_config(t=7)
    with self.assertLogs(logger="absl", level="WARNING"):
      u, attempt = experiment.draw_excitation(config, 0,
                                              config.resolved_plant())
    self.assertEqual(u.shape, (7, 1))
    self.assertEqual(attempt, 0)

  def test_single_column_record_never_excites(self):
    config = _small_config(t=8)
    with self.assertRaises(ValueError):
      experiment.draw_excitation(config, 0, config.resolved_plant())


class MonteCarloTrendsTest(absltest.TestCase):

  def test_federation_beats_standard_and_improves_with_m(self):
    grid = [0.0] + [float(v) for v in np.logspace(-3, 2, 11)]
    config = experiment.ExperimentConfig.from_dict(
        dict(n_runs=40, lambda_grid=grid)).validate()
    optimal = experiment.select_optimal_lambda(
        experiment.run_case_study(config, threads=4))
    self.assertLess(optimal["federated"], optimal["standard"])

    grouped = experiment.sweep_m(config, [5, 15, 35, 55],
                                 optimal_lambdas=optimal, threads=4)

    def median_rmse_y(records, controller):
      return float(np.median(
          [r.rmse_y for r in records if r.controller == controller]))

    self.assertLess(median_rmse_y(grouped[55], "federated"),
                    median_rmse_y(grouped[55], "standard"))
    medians = [median_rmse_y(grouped[m], "federated") for m in (5, 15, 35, 55)]
    for earlier, later in zip(medians, medians[1:]):
      self.assertLessEqual(later, earlier)


class SweepMTest(absltest.TestCase):

  def test_single_system_federation_is_standard(self):
    config = _small_config(n_runs=1)
    grouped = experiment.sweep_m(
        config, [1, 1],
        optimal_lambdas={"standard": 0.5, "federated": 0.5, "oracle": 0.0})
    self.assertEqual(list(grouped), [1])
    records = {r.controller: r for r in grouped[1]}
    self.assertEqual(records["federated"].rmse_y, records["standard"].rmse_y)
    self.assertEqual(records["federated"].rmse_u, records["standard"].rmse_u)

  def test_selects_lambdas_when_missing(self):
    config = _small_config(n_runs=1)
    grouped = experiment.sweep_m(config, [2, 3])
    self.assertEqual(list(grouped), [2, 3])
    for m, records in grouped.items():
      self.assertLen(records, 3)
      self.assertTrue(all(r.m == m for r in records))


class BoundsTest(absltest.TestCase):

  def test_bounds_records(self):
    records = experiment.run_bounds(_small_config())
    self.assertLen(records, 2)
    for record in records:
      self.assertEqual(record.m, 3)
      self.assertBetween(record.alpha0, 0.0, 1.0)
      self.assertGreaterEqual(record.alpha0, record.alpha_max_other)
      self.assertLessEqual(record.disp_norm, record.disp_bound * (1 + 1e-10))


if __name__ == "__main__":
  absltest.main()
