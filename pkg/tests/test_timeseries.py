# standard library
import os
import shutil
import sys
import tempfile
import unittest
sys.path.append('..')
# third party imports
import numpy as np
import pandas as pd
# local imports
from sird_swarm.timeseries import (RawSeries, EpiSeries, SmoothedSeries, read_csv,
                                   interpolate_missing, daily_from_cumulative,
                                   moving_average7, build_epi_series,
                                   infectious_recursion, smooth_epi_series,
                                   load_epi_series, EmptySeries, MissingEndpoint,
                                   DataFormatError)
from tests.helpers import fixture_path, simulate_epi_series, write_reported_csv


class TestInterpolateMissing(unittest.TestCase):

    def test_midpoint(self):
        raw = RawSeries.from_records([('2020-03-01', 5, 0, 0),
                                      ('2020-03-02', None, 0, 0),
                                      ('2020-03-03', 9, 0, 0)])
        out = interpolate_missing(raw).frame['confirmed'].tolist()
        self.assertListEqual(out, [5.0, 7.0, 9.0])

    def test_two_missing(self):
        raw = RawSeries.from_records([('2020-03-01', 10, 0, 0),
                                      ('2020-03-02', None, 0, 0),
                                      ('2020-03-03', None, 0, 0),
                                      ('2020-03-04', 16, 0, 0)])
        out = interpolate_missing(raw).frame['confirmed'].tolist()
        self.assertListEqual(out, [10.0, 12.0, 14.0, 16.0])

    def test_absent_dates_are_filled(self):
        """Dates missing from the file count as missing cells"""
        raw = RawSeries.from_records([('2020-03-01', 10, 2, 0),
                                      ('2020-03-04', 16, 5, 3)])
        out = interpolate_missing(raw).frame
        self.assertEqual(len(out), 4)
        self.assertListEqual(out['recovered'].tolist(), [2.0, 3.0, 4.0, 5.0])
        self.assertListEqual(out['deaths'].tolist(), [0.0, 1.0, 2.0, 3.0])

    def test_no_missing_is_identity(self):
        raw = RawSeries.from_records([('2020-03-01', 1, 0, 0),
                                      ('2020-03-02', 4, 1, 0),
                                      ('2020-03-03', 8, 2, 1)])
        out = interpolate_missing(raw)
        pd.testing.assert_frame_equal(out.frame, raw.frame, check_freq=False,
                                      check_names=False)

    def test_idempotent(self):
        raw = RawSeries.from_records([('2020-03-01', 10, 0, 0),
                                      ('2020-03-02', None, 1, None),
                                      ('2020-03-05', 20, 6, 2)])
        once = interpolate_missing(raw)
        twice = interpolate_missing(once)
        pd.testing.assert_frame_equal(once.frame, twice.frame)

    def test_missing_endpoint(self):
        raw = RawSeries.from_records([('2020-03-01', 10, 0, 0),
                                      ('2020-03-02', None, 0, 0)])
        self.assertRaises(MissingEndpoint, interpolate_missing, raw)

    def test_empty(self):
        self.assertRaises(EmptySeries, RawSeries.from_records, [])


class TestDailyFromCumulative(unittest.TestCase):

    def test_negative_replaced_by_previous(self):
        out = daily_from_cumulative([10, 13, 12, 16])
        self.assertListEqual(out.tolist(), [10.0, 3.0, 3.0, 4.0])

    def test_increasing(self):
        out = daily_from_cumulative([1, 3, 6, 10])
        self.assertListEqual(out.tolist(), [1.0, 2.0, 3.0, 4.0])

    def test_repeated_replacement(self):
        out = daily_from_cumulative([5, 4, 3])
        self.assertListEqual(out.tolist(), [5.0, 5.0, 5.0])

    def test_no_value_to_the_left(self):
        """With nothing non-negative to the left the replacement is 0"""
        out = daily_from_cumulative([-2, -3, 1])
        self.assertListEqual(out.tolist(), [0.0, 0.0, 4.0])

    def test_always_non_negative(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            cum = rng.integers(0, 100, size=30)
            self.assertTrue(np.all(daily_from_cumulative(cum) >= 0))

    def test_empty(self):
        self.assertRaises(EmptySeries, daily_from_cumulative, [])


class TestMovingAverage(unittest.TestCase):

    def test_constant(self):
        out = moving_average7([3.0] * 12)
        np.testing.assert_allclose(out, 3.0)

    def test_last_value(self):
        out = moving_average7([7, 7, 7, 7, 7, 7, 14])
        self.assertAlmostEqual(out[-1], 8.0)

    def test_single(self):
        self.assertListEqual(moving_average7([4.5]).tolist(), [4.5])

    def test_prefix_windows(self):
        """The first days average over what exists"""
        out = moving_average7([1, 2, 3, 4, 5, 6, 7, 8])
        np.testing.assert_allclose(out, [1, 1.5, 2, 2.5, 3, 3.5, 4, 5])

    def test_mean_preserved_on_full_windows(self):
        rng = np.random.default_rng(11)
        series = rng.uniform(0, 1000, size=70)
        full = moving_average7(series)[6::7]
        blocks = series.reshape(-1, 7).mean(axis=1)
        self.assertLess(abs(full.mean() - blocks.mean()) / blocks.mean(), 1e-9)


class TestBuildEpiSeries(unittest.TestCase):

    def test_recursion_step(self):
        infectious, clamped = infectious_recursion([10, 5], [0, 2], [0, 1])
        self.assertListEqual(infectious.tolist(), [10.0, 12.0])
        self.assertEqual(clamped, 0)

    def test_recursion_clamps_at_zero(self):
        infectious, clamped = infectious_recursion([1, 0, 3], [0, 4, 0], [0, 0, 0])
        self.assertListEqual(infectious.tolist(), [1.0, 0.0, 3.0])
        self.assertEqual(clamped, 1)

    def test_all_zero(self):
        raw = RawSeries.from_records([(f'2020-03-0{k}', 0, 0, 0) for k in range(1, 6)])
        epi = build_epi_series(raw)
        for values in (epi.I, epi.R_cum, epi.D_cum, epi.N_new):
            self.assertTrue(np.all(values == 0))

    def test_golden_fixture(self):
        """Row-by-row match with the hand-computed cleaned series"""
        epi = build_epi_series(read_csv(fixture_path('reported_small.csv')))
        golden = pd.read_csv(fixture_path('reported_small_clean.csv'))
        np.testing.assert_allclose(epi.I, golden['infectious'])
        np.testing.assert_allclose(epi.R_cum, golden['recovered_cum'])
        np.testing.assert_allclose(epi.D_cum, golden['deaths_cum'])
        np.testing.assert_allclose(epi.N_new, golden['new_cases'])
        self.assertListEqual(list(epi.dates.strftime('%Y-%m-%d')), golden['date'].tolist())
        self.assertDictEqual(epi.report.to_dict(),
                             {'interpolated': 1, 'negative_corrected': 1, 'clamped': 0})

    def test_recursion_consistency(self):
        epi = build_epi_series(read_csv(fixture_path('reported_small.csv')))
        lhs = np.diff(epi.I)
        rhs = epi.N_new[1:] - np.diff(epi.R_cum) - np.diff(epi.D_cum)
        np.testing.assert_array_equal(lhs, rhs)

    def test_round_trip_of_model_data(self):
        """Cumulative counts built from a trajectory give the trajectory back"""
        epi = simulate_epi_series(n_days=20)
        tmp = tempfile.mkdtemp()
        try:
            path = os.path.join(tmp, 'synthetic.csv')
            write_reported_csv(path, epi)
            back = load_epi_series(path)
        finally:
            shutil.rmtree(tmp)
        np.testing.assert_allclose(back.I, epi.I, rtol=1e-8)
        np.testing.assert_allclose(back.D_cum, epi.D_cum, rtol=1e-8, atol=1e-8)

    def test_window_slice(self):
        epi = build_epi_series(read_csv(fixture_path('reported_small.csv')))
        window = epi.window(2, 5)
        self.assertListEqual(window['I'].tolist(), [14.0, 15.0, 19.0, 23.0])
        self.assertListEqual(window['D'].tolist(), [1.0, 1.0, 2.0, 2.0])
        self.assertEqual(epi.T, 9)
        self.assertEqual(epi.day_of('2020-03-20'), 2)

    def test_smoothed(self):
        epi = build_epi_series(read_csv(fixture_path('reported_small.csv')))
        smoothed = smooth_epi_series(epi)
        self.assertIsInstance(smoothed, SmoothedSeries)
        self.assertEqual(smoothed.window_width, 7)
        self.assertAlmostEqual(smoothed.I[6], np.mean(epi.I[:7]))
        self.assertEqual(smoothed.I[0], epi.I[0])

    def test_negative_values_rejected(self):
        self.assertRaises(DataFormatError, EpiSeries, start_date=pd.Timestamp('2020-01-01').date(),
                          I=[1, -1], R_cum=[0, 0], D_cum=[0, 0], N_new=[1, 0])


class TestReadCsv(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def write(self, text):
        path = os.path.join(self.tmp, 'input.csv')
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_reads_fixture(self):
        raw = read_csv(fixture_path('reported_small.csv'))
        self.assertEqual(len(raw), 10)
        self.assertTrue(np.isnan(raw.frame['confirmed'].iloc[2]))

    def test_empty_file(self):
        path = self.write('')
        with self.assertRaises(DataFormatError) as cm:
            read_csv(path)
        self.assertEqual(cm.exception.line, 1)
        self.assertIn('header', str(cm.exception))

    def test_header_only(self):
        path = self.write('date,confirmed,recovered,deaths\n')
        self.assertRaises(EmptySeries, read_csv, path)

    def test_bad_header(self):
        path = self.write('day,confirmed,recovered,deaths\n2020-01-01,1,0,0\n')
        self.assertRaises(DataFormatError, read_csv, path)

    def test_line_number_of_bad_cell(self):
        path = self.write('date,confirmed,recovered,deaths\n'
                          '2020-01-01,1,0,0\n'
                          '2020-01-02,abc,0,0\n')
        with self.assertRaises(DataFormatError) as cm:
            read_csv(path)
        self.assertEqual(cm.exception.line, 3)

    def test_decreasing_dates(self):
        path = self.write('date,confirmed,recovered,deaths\n'
                          '2020-01-02,1,0,0\n'
                          '2020-01-01,2,0,0\n')
        with self.assertRaises(DataFormatError) as cm:
            read_csv(path)
        self.assertEqual(cm.exception.line, 3)

    def test_too_many_fields(self):
        path = self.write('date,confirmed,recovered,deaths\n'
                          '2020-01-01,1,0,0\n'
                          '2020-01-02,2,0,0,7\n')
        with self.assertRaises(DataFormatError) as cm:
            read_csv(path)
        self.assertEqual(cm.exception.line, 3)

    def test_not_utf8(self):
        path = os.path.join(self.tmp, 'latin1.csv')
        with open(path, 'wb') as f:
            f.write(b'date,confirmed,recovered,deaths\n'
                    b'2020-01-01,1,0,0\n'
                    b'2020-01-02,2,0,0\n'
                    b'2020-01-03,3,0,0 \xff\n')
        with self.assertRaises(DataFormatError) as cm:
            read_csv(path)
        self.assertEqual(cm.exception.line, 4)

    def test_decimals_accepted(self):
        path = self.write('date,confirmed,recovered,deaths\n'
                          '2020-01-01,1.5,0,0\n'
                          '2020-01-02,2.5,0.5,0\n')
        raw = read_csv(path)
        self.assertListEqual(raw.frame['confirmed'].tolist(), [1.5, 2.5])


if __name__ == '__main__':
    unittest.main()
