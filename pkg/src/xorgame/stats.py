"""Win-rate normalization and exact binomial confidence for the XOR game."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .optics import CROSS_LAB_OUTPUTS, IN_LAB_COINCIDENCES, PATTERNS, InterferometerConfig

EXACT_LIMIT = 30
MAX_GAMES = 10**6

_OBSERVABLE_CROSS = np.array([p in CROSS_LAB_OUTPUTS for p in PATTERNS])
_OBSERVABLE_IN_LAB = np.array([p in IN_LAB_COINCIDENCES for p in PATTERNS])


@dataclass(frozen=True)
class EfficiencyMap:
    """Detection efficiency of each Alice-Bob pattern relative to the best one."""

    eta: dict = field(default_factory=lambda: {(a, b): 1.0 for a in (0, 1) for b in (0, 1)})

    def __post_init__(self):
        if set(self.eta) != {(0, 0), (0, 1), (1, 0), (1, 1)}:
            raise ValueError(f"efficiency map needs the four patterns (a, b), got {sorted(self.eta)}")
        vals = list(self.eta.values())
        if min(vals) <= 0 or max(vals) > 1 + 1e-12:
            raise ValueError(f"relative efficiencies must lie in (0, 1], got {self.eta}")
        if abs(max(vals) - 1.0) > 1e-12:
            raise ValueError("efficiencies must be relative to the most efficient pattern (max = 1)")

    @classmethod
    def relative(cls, values: dict) -> "EfficiencyMap":
        top = max(values.values())
        return cls({k: float(v) / top for k, v in values.items()})

    def __getitem__(self, ab) -> float:
        return self.eta[ab]

    def as_tuple(self) -> tuple[float, float, float, float]:
        return tuple(self.eta[k] for k in ((0, 0), (0, 1), (1, 0), (1, 1)))


@dataclass(frozen=True)
class ConfidenceResult:
    n_games: int
    n_wins: int
    p_value: float
    confidence: float


def win_rate_from_counts(counts: dict, xor: int, eta: EfficiencyMap | None = None,
                         same_lab_probability: float = 0.5) -> float:
    """Efficiency-normalized win rate, adding the guessing wins of same-lab events."""
    eta = eta or EfficiencyMap()
    c_tot = sum(c / eta[ab] for ab, c in counts.items())
    if c_tot <= 0:
        raise ZeroDivisionError("no cross-lab coincidences in this instance")
    c_win = sum(c / eta[ab] for ab, c in counts.items() if ab[0] ^ ab[1] == xor)
    return c_win / c_tot * (1.0 - same_lab_probability) + 0.5 * same_lab_probability


def normalized_win_rate(instance, eta: EfficiencyMap | None, cfg: InterferometerConfig) -> float:
    """Win rate of one instance record.

    With identical preparation splitters this is (C_win/C_tot)(1 - 2TR) + TR.
    """
    return win_rate_from_counts(instance.pair_counts(), instance.x ^ instance.y, eta,
                                cfg.same_lab_probability)


def _check_counts(n_games: int, n_wins: int) -> None:
    if not (0 <= n_wins <= n_games <= MAX_GAMES):
        raise ValueError(f"need 0 <= n_wins <= n_games <= {MAX_GAMES}, got n_games={n_games}, n_wins={n_wins}")


def _tails(n: int, w: int) -> tuple[float, float]:
    """(P(X < w), P(X >= w)) for X ~ Binomial(n, 1/2)."""
    if w == 0:
        return 0.0, 1.0
    if n <= EXACT_LIMIT:
        below = sum(math.comb(n, k) for k in range(w))
        return below / 2**n, (2**n - below) / 2**n
    # P(X >= w) = I_{1/2}(w, n - w + 1); take the smaller tail directly
    if w - 1 < n / 2:
        lower = float(betainc(n - w + 1, w, 0.5))
        return lower, 1.0 - lower
    upper = float(betainc(w, n - w + 1, 0.5))
    return 1.0 - upper, upper


def p_value(n_games: int, n_wins: int) -> float:
    """Probability that fair coin flips win at least ``n_wins`` of ``n_games``."""
    _check_counts(n_games, n_wins)
    return _tails(n_games, n_wins)[1]


def confidence(n_games: int, n_wins: int) -> ConfidenceResult:
    _check_counts(n_games, n_wins)
    lower, upper = _tails(n_games, n_wins)
    return ConfidenceResult(n_games, n_wins, upper, lower)


def effective_double_click_efficiency(visibility: float) -> float:
    """Fraction of two-photons-in-one-lab events that show up as an in-lab coincidence."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility}")
    return (1.0 - visibility) / 2.0


def _event_arrays(events):
    if hasattr(events, "pattern") and hasattr(events, "win"):
        return np.asarray(events.pattern), np.asarray(events.win, dtype=bool)
    events = list(events)
    pattern = np.array([PATTERNS.index(e.pattern) for e in events], dtype=int)
    win = np.array([bool(e.win) for e in events], dtype=bool)
    return pattern, win


def retained_wins(events, visibility: float, rng: np.random.Generator) -> np.ndarray:
    """Win flags of the events kept for the confidence count.

    Cross-lab coincidences survive with probability (1 - V)/2, which puts them
    on the same footing as the in-lab events whose double clicks go unseen.
    In-lab coincidences are all kept; unresolved double clicks never appear.
    """
    pattern, win = _event_arrays(events)
    eps = effective_double_click_efficiency(visibility)
    draws = rng.random(len(pattern))
    keep = (_OBSERVABLE_CROSS[pattern] & (draws < eps)) | _OBSERVABLE_IN_LAB[pattern]
    return win[keep]


def confidence_trajectory(wins: np.ndarray) -> list[ConfidenceResult]:
    n_wins = np.cumsum(np.asarray(wins, dtype=int))
    return [confidence(n + 1, int(w)) for n, w in enumerate(n_wins)]


def confidence_event_stream(events, visibility: float, rng: np.random.Generator) -> list[ConfidenceResult]:
    """Cumulative confidence after each retained event."""
    return confidence_trajectory(retained_wins(events, visibility, rng))


@dataclass
class CurveStats:
    """Per-event box statistics over repetitions (quartiles: midpoint convention)."""

    median: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    whisker_low: np.ndarray
    whisker_high: np.ndarray
    outliers: list[tuple[int, float]]
    residual: np.ndarray
    quantile_method: str = "midpoint"

    @property
    def event_index(self) -> np.ndarray:
        return np.arange(1, len(self.median) + 1)

    def first_crossing(self, level: float) -> int | None:
        above = np.nonzero(self.median > level)[0]
        return int(above[0]) + 1 if above.size else None


def confidence_curve_stats(trajectories, p_values=None) -> CurveStats:
    """Median, quartiles and 1.5 IQR outliers at each event index.

    ``p_values`` (same shape) lets the residual 1 - median be computed without
    cancellation once confidences round to 1.
    """
    try:
        traj = np.array([np.asarray(t, dtype=float) for t in trajectories])
    except ValueError:
        raise ValueError("confidence trajectories must all have the same length") from None
    if traj.ndim != 2:
        raise ValueError("confidence trajectories must all have the same length")
    if traj.shape[0] < 2:
        raise ValueError("need at least two trajectories")
    median = np.median(traj, axis=0)
    q1 = np.percentile(traj, 25, axis=0, method="midpoint")
    q3 = np.percentile(traj, 75, axis=0, method="midpoint")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = (traj >= lo_fence) & (traj <= hi_fence)
    whisker_low = np.where(inside, traj, np.inf).min(axis=0)
    whisker_high = np.where(inside, traj, -np.inf).max(axis=0)
    outliers = [(int(j) + 1, float(traj[i, j])) for i, j in zip(*np.nonzero(~inside))]
    outliers.sort()
    if p_values is not None:
        pv = np.asarray(p_values, dtype=float)
        if pv.shape != traj.shape:
            raise ValueError("p_values must match the trajectories' shape")
        residual = np.median(pv, axis=0)
    else:
        residual = 1.0 - median
    return CurveStats(median, q1, q3, whisker_low, whisker_high, outliers, residual)


def log_linear_fit(y, x=None) -> tuple[float, float, float]:
    """Least-squares line through (x, ln y); returns (slope, intercept, R^2). Zeros are skipped."""
    y = np.asarray(y, dtype=float)
    x = np.arange(1, len(y) + 1, dtype=float) if x is None else np.asarray(x, dtype=float)
    ok = y > 0
    if ok.sum() < 3:
        raise ValueError("need at least three positive residuals for a log-linear fit")
    lx, ly = x[ok], np.log(y[ok])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
