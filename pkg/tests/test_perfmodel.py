import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sasimg._validation import ValidationError
from sasimg.perfmodel import (BenchmarkSample, PowerLawFit, PowerLawRegressor, fit_power_law,
                              predict_runtime, run_benchmark, write_report)

A, K = 485307.0, -0.755


def test_recovers_reference_law():
    x = np.array([1000.0, 5000.0, 15000.0])
    fit = fit_power_law(x, A * x ** K)
    assert fit.coefficient == pytest.approx(A, rel=1e-9)
    assert fit.exponent == pytest.approx(K, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_two_points_fit_exactly():
    fit = fit_power_law([2.0, 8.0], [3.0, 0.75])
    assert fit.exponent == pytest.approx(-1.0)
    assert fit.r2 == 1.0


def test_flat_runtime_has_zero_exponent():
    fit = fit_power_law([1.0, 10.0, 100.0], [4.0, 4.0, 4.0])
    assert abs(fit.exponent) < 1e-12
    assert fit.coefficient == pytest.approx(4.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_rescaling_axes_moves_only_the_coefficient(sx, sy):
    x = np.array([1.0, 3.0, 7.0, 20.0])
    y = np.array([5.0, 2.2, 1.1, 0.45])
    base = fit_power_law(x, y)
    scaled = fit_power_law(x * sx, y * sy)
    assert scaled.exponent == pytest.approx(base.exponent, rel=1e-9, abs=1e-12)
    assert scaled.coefficient == pytest.approx(base.coefficient * sy / sx ** base.exponent,
                                               rel=1e-9)
    assert scaled.r2 == pytest.approx(base.r2, abs=1e-9)


def test_prediction_against_budget():
    fit = PowerLawFit(A, K, 1.0)
    budget = 1.0
    crossing = (budget / A) ** (1 / K)
    assert predict_runtime(fit, crossing * 0.99, budget)[1] is False
    assert predict_runtime(fit, crossing * 1.01, budget)[1] is True
    assert predict_runtime(fit, 5000.0)[1] is None
    ys = [predict_runtime(fit, x)[0] for x in (10.0, 100.0, 1e3, 1e4)]
    assert all(b < a for a, b in zip(ys, ys[1:]))


@pytest.mark.parametrize("x, y", [([1.0], [1.0]), ([1.0, 1.0], [1.0, 2.0]),
                                  ([1.0, -2.0], [1.0, 1.0]), ([1.0, 2.0], [0.0, 1.0])])
def test_degenerate_samples_rejected(x, y):
    with pytest.raises(ValidationError):
        fit_power_law(x, y)


def _fake_clock(step):
    ticks = itertools.count()
    return lambda: next(ticks) * step


def test_benchmark_reports_last_of_three(small_dataset, small_grid):
    clock_calls = []
    durations = iter([0.5, 0.25, 0.125] * 2)
    now = [0.0]

    def clock():
        clock_calls.append(now[0])
        if len(clock_calls) % 2 == 1:
            return now[0]
        now[0] += next(durations)
        return now[0]

    samples = run_benchmark(small_dataset, small_grid, workers=(1, 2), per_worker_gflops=3.0,
                            clock=clock, fixture="small")
    assert len(clock_calls) == 12
    assert [s.runtime_s for s in samples] == [0.125, 0.125]
    assert [s.capability for s in samples] == [3.0, 6.0]
    assert samples[0].runs_s == (0.5, 0.25, 0.125)
    assert samples[1].fixture == "small" and samples[1].repetition == 3


def test_benchmark_warns_on_short_runs(small_dataset, small_grid):
    with pytest.warns(UserWarning, match="too small"):
        run_benchmark(small_dataset, small_grid, clock=_fake_clock(0.01))


def test_benchmark_requires_three_repetitions(small_dataset, small_grid):
    with pytest.raises(ValidationError) as err:
        run_benchmark(small_dataset, small_grid, repetitions=2)
    assert err.value.key == "bench.repetitions"


def test_report_files(tmp_path):
    samples = [BenchmarkSample(x, A * x ** K, 1, "synthetic", 3) for x in (1e3, 5e3, 1.5e4)]
    fit = fit_power_law(samples)
    paths = write_report(samples, fit, tmp_path, budget_s=10.0)
    rows = paths["csv"].read_text().splitlines()
    assert rows[0].startswith("capability,runtime_s") and len(rows) == 4
    assert float(rows[1].split(",")[1]) == samples[0].runtime_s
    svg = paths["svg"].read_text()
    assert svg.startswith("<svg") and svg.count("<circle") == 3 and 'stroke="red"' in svg
    assert "x^-0.7550" in svg
    only = write_report(samples, None, tmp_path / "bare")
    assert set(only) == {"csv"}


def test_regressor_matches_function():
    from sklearn.exceptions import NotFittedError
    x = np.array([[1000.0], [5000.0], [15000.0]])
    y = A * x.ravel() ** K
    with pytest.raises(NotFittedError):
        PowerLawRegressor().predict(x)
    reg = PowerLawRegressor().fit(x, y)
    np.testing.assert_allclose(reg.predict(x), y, rtol=1e-9)
    assert reg.score(x, y) == pytest.approx(1.0)
