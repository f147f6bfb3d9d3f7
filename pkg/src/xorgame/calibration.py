"""Calibration scans: HOM dip, PZT phase reference, relative detector efficiencies.

Each procedure has a simulator producing a :class:`ScanRecord` and a fit that
recovers the generating parameters from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import least_squares

from .optics import PhaseSetting, analytic_pair_probabilities
from .stats import EfficiencyMap

MAX_ITER = 500
REL_TOL = 1e-9
PAIR_KEYS = ("00", "01", "10", "11")


class FitError(RuntimeError):
    """A fit did not converge."""


class RegressionError(ValueError):
    """Regression is rank deficient (constant counts)."""


class InsufficientSpan(ValueError):
    pass


@dataclass
class ScanRecord:
    """Counts per pattern along a swept abscissa (delay in um or voltage in V).

    Counts are integers when drawn with noise; noiseless scans hold the
    expected (float) counts.
    """

    abscissa: np.ndarray
    counts: dict[str, np.ndarray]
    integration_time: float
    kind: str = "delay_um"

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        d = np.diff(self.abscissa)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("scan abscissa must be strictly monotone")
        for key, c in self.counts.items():
            c = np.asarray(c)
            if c.shape != self.abscissa.shape:
                raise ValueError(f"counts for {key!r} do not match the abscissa length")
            if np.any(c < 0):
                raise ValueError(f"negative counts for {key!r}")
            self.counts[key] = c


@dataclass
class FitResult:
    params: dict[str, float]
    errors: dict[str, float]
    rss: float
    converged: bool
    derived: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


def _least_squares(residual, p0, x_scale="jac"):
    sol = least_squares(residual, p0, method="lm", xtol=REL_TOL, ftol=1e-12, gtol=1e-12,
                        max_nfev=MAX_ITER * (len(p0) + 1), x_scale=x_scale)
    if not sol.success:
        raise FitError(f"least-squares fit did not converge: {sol.message}")
    jac = sol.jac
    dof = max(len(sol.fun) - len(p0), 1)
    rss = float(np.sum(sol.fun**2))
    try:
        cov = np.linalg.inv(jac.T @ jac) * (rss / dof)
    except np.linalg.LinAlgError:
        cov = np.full((len(p0), len(p0)), np.inf)
    return sol.x, cov, rss


# -- HOM dip --------------------------------------------------------------------

def hom_model(x, c_max, amplitude, x0, width):
    return c_max - amplitude * np.exp(-((x - x0) ** 2) / (2 * width**2))


def simulate_hom_scan(delays, v_true: float, c_max: float, coherence_width: float,
                      rng: np.random.Generator | None, x0: float = 0.0,
                      integration_time: float = 5.0) -> ScanRecord:
    """Coincidences behind one detection splitter versus delay; ``rng=None`` gives expected counts."""
    if not 0.0 <= v_true <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v_true}")
    delays = np.asarray(delays, dtype=float)
    mean = hom_model(delays, c_max, v_true * c_max, x0, coherence_width)
    counts = mean if rng is None else rng.poisson(mean)
    return ScanRecord(delays, {"coincidences": counts}, integration_time, "delay_um")


def _seed_hom(x, y, w):
    """Coarse grid over (x0, width) with (C_max, A) solved linearly at each node."""
    span = x.max() - x.min()
    steps = np.diff(np.sort(x))
    best = None
    for x0 in np.linspace(x.min(), x.max(), 61):
        for width in np.geomspace(max(steps.min(), span / 200), span, 40):
            g = np.exp(-((x - x0) ** 2) / (2 * width**2))
            design = np.column_stack([np.ones_like(x), -g]) * w[:, None]
            coef, *_ = np.linalg.lstsq(design, y * w, rcond=None)
            rss = float(np.sum((design @ coef - y * w) ** 2))
            if best is None or rss < best[0]:
                best = (rss, [coef[0], coef[1], x0, width])
    return np.array(best[1])


def fit_hom_dip(scan: ScanRecord, key: str = "coincidences") -> FitResult:
    """Gaussian dip fit; visibility = (C_max - C_min) / C_max with C_min = C_max - A."""
    x = scan.abscissa
    y = np.asarray(scan.counts[key], dtype=float)
    if len(x) < 6:
        raise ValueError("HOM fit needs at least 6 scan points")
    names = ("c_max", "amplitude", "x0", "width")

    if np.ptp(y) == 0:
        return FitResult(
            dict(zip(names, (float(y[0]), 0.0, float(np.mean(x)), float("nan")))),
            {"c_max": 0.0, "amplitude": 0.0, "x0": float("inf"), "width": float("inf")},
            0.0, True, {"visibility": 0.0, "visibility_err": 1.0}, ["degenerate"],
        )

    # Poisson weights; expected (noiseless) counts get the same weighting
    w = 1.0 / np.sqrt(np.maximum(y, 1.0))
    p0 = _seed_hom(x, y, w)

    def residual(p):
        return (hom_model(x, *p) - y) * w

    p, cov, rss = _least_squares(residual, p0)
    p[3] = abs(p[3])
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    c_max, amp = p[0], p[1]
    flags = []
    if not np.isfinite(err[1]) or abs(amp) <= 2 * err[1]:
        return FitResult(dict(zip(names, map(float, p))), dict(zip(names, map(float, err))), rss, True,
                         {"visibility": 0.0, "visibility_err": 1.0}, ["degenerate"])
    vis = amp / c_max
    grad = np.array([-amp / c_max**2, 1.0 / c_max])
    vis_err = float(np.sqrt(max(grad @ cov[:2, :2] @ grad, 0.0)))
    if vis < 0.0 or vis > 1.0:
        flags.append("visibility_clamped")
        vis = min(max(vis, 0.0), 1.0)
    return FitResult(dict(zip(names, map(float, p))), dict(zip(names, map(float, err))), rss, True,
                     {"visibility": float(vis), "visibility_err": vis_err}, flags)


# -- phase reference ------------------------------------------------------------

def _phase_of_voltage(v, volts_per_radian, quadratic):
    return v / volts_per_radian + quadratic * v * v


def simulate_phase_scan(voltages, volts_per_radian: float, baseline: PhaseSetting,
                        rng: np.random.Generator | None, rate: float = 500.0,
                        integration_time: float = 1.0, quadratic: float = 0.0) -> ScanRecord:
    """Cross-lab coincidences while a PZT adds phase to the baseline setting.

    ``rate`` is the mean total of cross-lab coincidences per second, so a
    pattern's mean count is ``2 rate t p_ab``.
    """
    v = np.asarray(voltages, dtype=float)
    counts = {k: np.empty(len(v)) for k in PAIR_KEYS}
    for i, vi in enumerate(v):
        ps = baseline.with_phi_x(baseline.phi_x + _phase_of_voltage(vi, volts_per_radian, quadratic))
        for k, p in zip(PAIR_KEYS, analytic_pair_probabilities(ps)):
            counts[k][i] = 2 * rate * integration_time * p
    if rng is not None:
        counts = {k: rng.poisson(c) for k, c in counts.items()}
    return ScanRecord(v, counts, integration_time, "voltage_V")


def fringe_model(v, c0, contrast, scale, offset):
    return c0 * (1 + contrast * np.cos(v / scale + offset))


def _seed_fringe(v, y):
    """Period from a zero-padded FFT, then a linear solve for amplitude and phase."""
    n = len(v)
    step = (v[-1] - v[0]) / (n - 1)
    spec = np.abs(np.fft.rfft(y - y.mean(), n=16 * n))
    freqs = np.fft.rfftfreq(16 * n, d=step)
    f = freqs[1 + np.argmax(spec[1:])]
    scale = 1.0 / (2 * math.pi * f)
    design = np.column_stack([np.ones(n), np.cos(v / scale), np.sin(v / scale)])
    (c, a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    return np.array([c, math.hypot(a, b) / c, scale, math.atan2(-b, a)])


def fit_fringe(v, y) -> FitResult:
    """Fit C(v) = C0 (1 + k cos(v/s + delta)) with all four parameters free."""
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        raise RegressionError("flat fringe: no phase dependence to fit")
    w = 1.0 / np.sqrt(np.maximum(y, 1.0))
    p0 = _seed_fringe(v, y)

    def residual(p):
        return (fringe_model(v, *p) - y) * w

    p, cov, rss = _least_squares(residual, p0)
    if p[1] < 0:  # keep the contrast positive
        p[1], p[3] = -p[1], p[3] + math.pi
    if p[2] < 0:
        p[2], p[3] = -p[2], -p[3]
    p[3] = math.remainder(p[3], 2 * math.pi)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    names = ("c0", "contrast", "scale", "offset")
    period = 2 * math.pi * p[2]
    return FitResult(dict(zip(names, map(float, p))), dict(zip(names, map(float, err))), rss, True,
                     {"period": float(period)})


@dataclass(frozen=True)
class PhaseSetpoints:
    zero: float
    pi: float
    period: float
    fit: FitResult


def find_phase_setpoints(scan: ScanRecord) -> PhaseSetpoints:
    """Voltages giving phase 0 (correlated maximum) and pi (correlated minimum).

    The zero point is the fitted correlated maximum closest to the scan
    centre; the pi point is the neighbouring minimum inside the scan.
    """
    v = scan.abscissa
    corr = np.asarray(scan.counts["00"], dtype=float) + np.asarray(scan.counts["11"], dtype=float)
    fit = fit_fringe(v, corr)
    scale, offset, period = fit.params["scale"], fit.params["offset"], fit.derived["period"]
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < period:
        raise InsufficientSpan(f"scan spans {hi - lo:.4g} V, less than one fringe period ({period:.4g} V)")
    centre = 0.5 * (lo + hi)
    # maxima where v/scale + offset = 2 pi n
    n = round((centre / scale + offset) / (2 * math.pi))
    zero = (2 * math.pi * n - offset) * scale
    pi = zero + period / 2
    if pi > hi:
        pi = zero - period / 2
    return PhaseSetpoints(float(zero), float(pi), float(period), fit)


# -- detector efficiencies ------------------------------------------------------

def simulate_efficiency_scan(voltages, eta, volts_per_radian: float, rng: np.random.Generator | None,
                             rate: float = 500.0, integration_time: float = 10.0,
                             baseline: PhaseSetting | None = None) -> ScanRecord:
    """Phase sweep seen through detectors with efficiencies ``eta`` = (00, 01, 10, 11)."""
    baseline = baseline or PhaseSetting()
    clean = simulate_phase_scan(voltages, volts_per_radian, baseline, None, rate, integration_time)
    counts = {k: clean.counts[k] * e for k, e in zip(PAIR_KEYS, eta)}
    if rng is not None:
        counts = {k: rng.poisson(c) for k, c in counts.items()}
    return ScanRecord(clean.abscissa, counts, integration_time, "voltage_V")


def pairwise_slope(x, y) -> float:
    """Symmetric (reduced major axis) slope of y against x, signed by their correlation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        raise RegressionError("constant counts: regression is rank deficient")
    r = np.corrcoef(x, y)[0, 1]
    return math.copysign(sy / sx, r)


def fit_relative_efficiencies(scan: ScanRecord) -> EfficiencyMap:
    """Relative efficiencies from pairwise regressions of the four patterns.

    With the total fixed, every pattern is linear in every other, and the
    slope's magnitude is their efficiency ratio. All six log-ratios are
    reconciled by least squares before normalizing to the best pattern.
    """
    counts = [np.asarray(scan.counts[k], dtype=float) for k in PAIR_KEYS]
    pairs = list(combinations(range(4), 2))
    design = np.zeros((len(pairs) + 1, 4))
    rhs = np.zeros(len(pairs) + 1)
    for row, (i, j) in enumerate(pairs):
        slope = pairwise_slope(counts[i], counts[j])
        design[row, j], design[row, i] = 1.0, -1.0
        rhs[row] = math.log(abs(slope))
    design[-1, 0] = 1.0  # gauge: log eta_00 = 0 before normalization
    log_eta, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    keys = ((0, 0), (0, 1), (1, 0), (1, 1))
    return EfficiencyMap.relative(dict(zip(keys, np.exp(log_eta))))
