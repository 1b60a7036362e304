"""Reconstruction benchmarks and power-law runtime models ``y = a x^k``."""

import csv
import time
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_int, check_positive
from .beamform import BackprojectionOptions, reconstruct_with_report
from .config import Config
from .io import Dataset
from .preprocess import pulse_compress

MIN_RELIABLE_S = 0.05


@dataclass(frozen=True)
class BenchmarkSample:
    """One benchmark configuration: the reported time is the last run's.

    ``capability`` is the x-axis value (workers times per-worker GFLOPS
    for self-measured samples); ``runs_s`` keeps every repetition.
    """

    capability: float
    runtime_s: float
    workers: int
    fixture: str
    repetition: int
    runs_s: tuple = ()

    def __post_init__(self):
        check_positive(self.capability, "capability")
        check_positive(self.runtime_s, "runtime_s")


@dataclass(frozen=True)
class PowerLawFit:
    """``y = coefficient * x ** exponent`` with log-log R^2."""

    coefficient: float
    exponent: float
    r2: float

    def __call__(self, x):
        return self.coefficient * np.asarray(x, float) ** self.exponent


def run_benchmark(dataset, grid, config=None, repetitions=3, workers=(1,), per_worker_gflops=1.0,
                  fixture="fixture", clock=time.perf_counter):
    """Time ``repetitions`` reconstructions per worker count.

    Each configuration reports only its last run, so caches and compiled
    kernels are warm.

    Returns:
        One :class:`BenchmarkSample` per entry of ``workers``.

    Warns:
        UserWarning: a reported time is below 50 ms and too short to trust.
    """
    check_int(repetitions, "bench.repetitions", minimum=3)
    config = config or Config()
    if isinstance(dataset, Dataset) and not dataset.compressed:
        dataset = pulse_compress(dataset, dataset.waveform)
    base = BackprojectionOptions.from_config(config, dataset)
    samples = []
    for w in workers:
        w = check_int(w, "bench.worker_counts", minimum=1)
        opts = replace(base, workers=w)
        runs = []
        for _ in range(repetitions):
            t = clock()
            reconstruct_with_report(dataset, grid, opts)
            runs.append(clock() - t)
        if runs[-1] < MIN_RELIABLE_S:
            warnings.warn(f"benchmark run took {runs[-1] * 1e3:.1f} ms; fixture is too small "
                          "to time reliably", UserWarning, stacklevel=2)
        samples.append(BenchmarkSample(w * per_worker_gflops, runs[-1], w, fixture,
                                       repetitions, tuple(runs)))
    return samples


def _xy(x, y=None):
    if y is None:
        x, y = [s.capability for s in x], [s.runtime_s for s in x]
    x = np.asarray(x, float).ravel()
    y = np.asarray(y, float).ravel()
    if x.size != y.size or x.size < 2:
        raise ValidationError("samples", "need at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x * y)):
        raise ValidationError("samples", "x and y must be finite and > 0")
    if np.unique(x).size < 2:
        raise ValidationError("samples", "need at least two distinct x values")
    return x, y


def fit_power_law(x, y=None):
    """Least-squares line through ``(log x, log y)``.

    Args:
        x: capabilities, or a sequence of :class:`BenchmarkSample` when
            ``y`` is omitted.
        y: runtimes.
    """
    x, y = _xy(x, y)
    lx, ly = np.log(x), np.log(y)
    k, c = np.polyfit(lx, ly, 1)
    resid = ly - (c + k * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(float(np.exp(c)), float(k), r2)


def predict_runtime(fit, x, budget_s=None):
    """Model runtime at capability ``x`` and whether it meets ``budget_s``."""
    check_positive(x, "capability")
    y = float(fit(x))
    return y, (None if budget_s is None else y <= budget_s)


def write_report(samples, fit, out_dir, budget_s=None, name="bench"):
    """CSV of the samples and fit, plus an SVG log-log plot with the fitted line.

    With ``fit=None`` only the samples CSV is written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["capability", "runtime_s", "workers", "fixture", "repetitions"])
        for s in samples:
            w.writerow([repr(s.capability), repr(s.runtime_s), s.workers, s.fixture,
                        s.repetition])
    paths = {"csv": csv_path}
    if fit is None:
        return paths
    paths["fit"] = out / f"{name}_fit.csv"
    with open(paths["fit"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coefficient", "exponent", "r2"])
        w.writerow([repr(fit.coefficient), repr(fit.exponent), repr(fit.r2)])
    paths["svg"] = out / f"{name}.svg"
    paths["svg"].write_text(_svg(samples, fit, budget_s))
    return paths


def _svg(samples, fit, budget_s, width=480, height=360, pad=56):
    xs = np.array([s.capability for s in samples])
    ys = np.array([s.runtime_s for s in samples])
    lx0, lx1 = np.log10(xs.min()) - 0.1, np.log10(xs.max()) + 0.1
    line_y = fit(10 ** np.array([lx0, lx1]))
    ly_all = np.log10(np.concatenate([ys, line_y] + ([[budget_s]] if budget_s else [])))
    ly0, ly1 = ly_all.min() - 0.1, ly_all.max() + 0.1

    def px(lx):
        return pad + (lx - lx0) / (lx1 - lx0) * (width - 2 * pad)

    def py(ly):
        return height - pad - (ly - ly0) / (ly1 - ly0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="black"/>']
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(np.log10(x)):.2f}" cy="{py(np.log10(y)):.2f}" r="3"/>')
    parts.append(f'<line x1="{px(lx0):.2f}" y1="{py(np.log10(line_y[0])):.2f}" '
                 f'x2="{px(lx1):.2f}" y2="{py(np.log10(line_y[1])):.2f}" stroke="blue"/>')
    if budget_s:
        yb = py(np.log10(budget_s))
        parts.append(f'<line x1="{pad}" y1="{yb:.2f}" x2="{width - pad}" y2="{yb:.2f}" '
                     'stroke="red" stroke-width="3"/>')
    parts.append(f'<text x="{width / 2}" y="{height - 16}" text-anchor="middle">'
                 'capability (GFLOPS, log scale)</text>')
    parts.append(f'<text x="16" y="{height / 2}" transform="rotate(-90 16 {height / 2})" '
                 'text-anchor="middle">runtime (s, log scale)</text>')
    parts.append(f'<text x="{pad}" y="{pad - 12}">y = {fit.coefficient:.6g} x^{fit.exponent:.4f}'
                 f'  R2 = {fit.r2:.4f}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """``y = coef_ * x ** exponent_`` fitted in log-log space.

    ``X`` is a single feature (column vector or 1-D array).
    """

    def fit(self, X, y):
        fit = fit_power_law(np.asarray(X, float).ravel(), y)
        self.coef_, self.exponent_, self.r2_ = fit.coefficient, fit.exponent, fit.r2
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.coef_ * np.asarray(X, float).ravel() ** self.exponent_


def samples_table(samples):
    return [asdict(s) for s in samples]
