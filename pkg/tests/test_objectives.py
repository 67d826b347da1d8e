# standard library
import sys
import unittest
sys.path.append('..')
# third party imports
import numpy as np
# local imports
from sird_swarm.model import Trajectory
from sird_swarm.objectives import (Metric, Family, ObjectiveSpec, all_specs, metric_value,
                                   minmax_normalize, objective_rows, objective_value,
                                   r_squared_d, MapeZeroDenominator, DegenerateRange,
                                   ConstantObserved)


def trajectory_from(I, R, D, N=1e4):
    I, R, D = (np.asarray(v, dtype=float) for v in (I, R, D))
    S = N - I - R - D
    return Trajectory(states=np.column_stack([S, I, R, D]), population=N)


class TestMetricValue(unittest.TestCase):

    def test_perfect_fit(self):
        y = [3.0, 5.0, 8.0]
        for metric in Metric:
            self.assertEqual(metric_value(metric, y, y), 0.0, msg=metric)

    def test_residual_metrics(self):
        observed = np.array([10.0, 10.0, 10.0])
        predicted = observed - np.array([1.0, -3.0, 2.0])
        self.assertAlmostEqual(metric_value(Metric.MXSE, observed, predicted), 9.0)
        self.assertAlmostEqual(metric_value(Metric.MSE, observed, predicted), 14 / 3)
        self.assertAlmostEqual(metric_value(Metric.MAE, observed, predicted), 2.0)

    def test_mape(self):
        self.assertAlmostEqual(metric_value(Metric.MAPE, [10, 20], [9, 22]), 10.0)

    def test_mape_zero_denominator(self):
        self.assertRaises(MapeZeroDenominator, metric_value, Metric.MAPE, [0, 2], [1, 2])

    def test_mape_scale_invariant(self):
        rng = np.random.default_rng(5)
        y = rng.uniform(1, 50, size=12)
        y_hat = rng.uniform(1, 50, size=12)
        for c in (0.01, 3.0, -7.5):
            self.assertAlmostEqual(metric_value(Metric.MAPE, c * y, c * y_hat),
                                   metric_value(Metric.MAPE, y, y_hat))

    def test_translation_invariant(self):
        rng = np.random.default_rng(6)
        y = rng.uniform(0, 50, size=12)
        y_hat = rng.uniform(0, 50, size=12)
        for metric in (Metric.MXSE, Metric.MSE, Metric.MAE):
            self.assertAlmostEqual(metric_value(metric, y + 100, y_hat + 100),
                                   metric_value(metric, y, y_hat), places=8)

    def test_length_mismatch(self):
        self.assertRaises(ValueError, metric_value, Metric.MSE, [1, 2], [1])


class TestNormalize(unittest.TestCase):

    def test_midpoint_and_ends(self):
        out = minmax_normalize([2, 4, 6], 2, 6)
        self.assertListEqual(out.tolist(), [0.0, 0.5, 1.0])

    def test_outside_not_clipped(self):
        self.assertAlmostEqual(minmax_normalize([250], 100, 300)[0], 0.75)
        self.assertAlmostEqual(minmax_normalize([500], 100, 300)[0], 2.0)

    def test_degenerate(self):
        self.assertRaises(DegenerateRange, minmax_normalize, [1, 1], 1, 1)


class TestObjective(unittest.TestCase):

    def setUp(self):
        self.I = np.array([100.0, 120.0, 150.0, 170.0, 200.0])
        self.R = np.array([10.0, 15.0, 22.0, 30.0, 40.0])
        self.D = np.array([1.0, 2.0, 3.0, 5.0, 6.0])
        self.observed = {'I': self.I, 'R': self.R, 'D': self.D}

    def test_spec_names(self):
        names = [s.name for s in all_specs()]
        self.assertEqual(len(names), 8)
        self.assertEqual(names[0], 'd-mxse')
        self.assertEqual(ObjectiveSpec.parse('IRD-MXSE'),
                         ObjectiveSpec(Family.IRD_JOINT, Metric.MXSE))
        self.assertRaises(ValueError, ObjectiveSpec.parse, 'ird-rmse')

    def test_exact_fit(self):
        predicted = trajectory_from(self.I, self.R, self.D)
        for spec in all_specs():
            self.assertEqual(objective_value(spec, self.observed, predicted), 0.0, msg=spec)

    def test_only_d_off(self):
        """A 0.2 normalised error on one day of D gives 0.04 under ird-mxse"""
        D = self.D.copy()
        D[2] += 0.2 * (self.D.max() - self.D.min())
        predicted = trajectory_from(self.I, self.R, D)
        spec = ObjectiveSpec.parse('ird-mxse')
        self.assertAlmostEqual(objective_value(spec, self.observed, predicted), 0.04)

    def test_hand_built_window(self):
        """Residuals chosen by hand, values worked out independently"""
        I = self.I + [0, 10, 0, -5, 0]     # range 100 -> scaled errors .1, -.05
        R = self.R + [0, 0, 3, 0, 0]       # range 30 -> .1
        D = self.D + [0, 0, 0, 0, -1]      # range 5 -> -.2
        predicted = trajectory_from(I, R, D)
        observed = self.observed
        self.assertAlmostEqual(objective_value(ObjectiveSpec.parse('d-mxse'), observed,
                                               predicted), 1.0)
        self.assertAlmostEqual(objective_value(ObjectiveSpec.parse('d-mse'), observed,
                                               predicted), 0.2)
        self.assertAlmostEqual(objective_value(ObjectiveSpec.parse('d-mae'), observed,
                                               predicted), 0.2)
        self.assertAlmostEqual(objective_value(ObjectiveSpec.parse('ird-mxse'), observed,
                                               predicted), 0.04)
        self.assertAlmostEqual(objective_value(ObjectiveSpec.parse('ird-mse'), observed,
                                               predicted), 0.008)
        self.assertAlmostEqual(objective_value(ObjectiveSpec.parse('ird-mae'), observed,
                                               predicted), 0.04)
        # MAPE: I (10/120 + 5/170)/5, R (3/22)/5, D (1/6)/5 -> D is the largest
        self.assertAlmostEqual(objective_value(ObjectiveSpec.parse('ird-mape'), observed,
                                               predicted), 100 * (1 / 6) / 5)

    def test_scaled_residual_max(self):
        """ird scores equal the max of metrics on residuals over each range"""
        rng = np.random.default_rng(9)
        predicted = trajectory_from(self.I + rng.normal(0, 5, 5),
                                    self.R + rng.normal(0, 2, 5),
                                    self.D + rng.normal(0, 0.5, 5))
        for metric in (Metric.MXSE, Metric.MSE, Metric.MAE):
            direct = max(metric_value(metric,
                                      np.zeros(5),
                                      (predicted.compartment(k) - self.observed[k])
                                      / np.ptp(self.observed[k]))
                         for k in ('I', 'R', 'D'))
            value = objective_value(ObjectiveSpec(Family.IRD_JOINT, metric),
                                    self.observed, predicted)
            self.assertAlmostEqual(value, direct)

    def test_mape_zero_days_excluded(self):
        observed = {'I': self.I, 'R': self.R, 'D': np.array([0.0, 0.0, 2.0, 4.0, 5.0])}
        D = observed['D'] + [3, 3, 0, 0, 0]
        predicted = trajectory_from(self.I, self.R, D)
        spec = ObjectiveSpec.parse('d-mape')
        self.assertEqual(objective_value(spec, observed, predicted), 0.0)

    def test_mape_all_zero_is_inf(self):
        observed = {'I': self.I, 'R': self.R, 'D': np.zeros(5)}
        predicted = trajectory_from(self.I, self.R, np.zeros(5))
        spec = ObjectiveSpec.parse('d-mape')
        self.assertEqual(objective_value(spec, observed, predicted), np.inf)

    def test_flat_window(self):
        """A flat reported compartment falls back to raw residuals over max(1, |y|)"""
        observed = {'I': self.I, 'R': self.R, 'D': np.full(5, 4.0)}
        predicted = trajectory_from(self.I, self.R, [4, 4, 6, 4, 4])
        spec = ObjectiveSpec.parse('ird-mxse')
        self.assertAlmostEqual(objective_value(spec, observed, predicted), 0.25)

    def test_non_finite_rows(self):
        states = np.stack([trajectory_from(self.I, self.R, self.D).states] * 3)
        states[1, 3, 2] = np.nan
        states[2, 4, 1] = np.inf
        costs = objective_rows(ObjectiveSpec.parse('ird-mse'), self.observed, states)
        self.assertEqual(costs[0], 0.0)
        self.assertTrue(np.isinf(costs[1]) and np.isinf(costs[2]))

    def test_negative_rows(self):
        states = np.stack([trajectory_from(self.I, self.R, self.D).states] * 2)
        states[1, 2, 1] = -1.0
        costs = objective_rows(ObjectiveSpec.parse('d-mae'), self.observed, states)
        self.assertEqual(costs[0], 0.0)
        self.assertTrue(np.isinf(costs[1]))


class TestRSquared(unittest.TestCase):

    def test_perfect(self):
        self.assertEqual(r_squared_d([1, 2, 4], [1, 2, 4]), 1.0)

    def test_mean_prediction(self):
        self.assertAlmostEqual(r_squared_d([1, 2, 3], [2, 2, 2]), 0.0)

    def test_hand_example(self):
        self.assertAlmostEqual(r_squared_d([1, 2, 3], [1, 2, 5]), -1.0)

    def test_constant(self):
        self.assertRaises(ConstantObserved, r_squared_d, [3, 3, 3], [3, 3, 4])


if __name__ == '__main__':
    unittest.main()
