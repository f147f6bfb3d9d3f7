"""End-to-end computations behind the command-line subcommands.

Each function is a pure function of the configuration (seed included) and
returns plain tables; writing files is left to the CLI.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import (
    find_phase_setpoints,
    fit_hom_dip,
    fit_relative_efficiencies,
    simulate_efficiency_scan,
    simulate_hom_scan,
    simulate_phase_scan,
)
from .config import STREAM_CALIBRATION, STREAM_DISCARD, STREAM_REPETITION, STREAM_SWEEP, RunConfig
from .game import SETTINGS, play_rounds, pwin_lambda, pwin_purity, run_experiment
from .optics import PhaseSetting, outcome_distribution
from .states import purity_from_lambda, sample_phase_noise
from .stats import (
    CurveStats,
    EfficiencyMap,
    confidence_curve_stats,
    confidence_trajectory,
    log_linear_fit,
    normalized_win_rate,
    retained_wins,
)

REFERENCE_MAX_PWIN = 0.7162
ROUNDS_PER_BLOCK = 500


# -- analytic -------------------------------------------------------------------

ANALYTIC_COLUMNS = ["label", "lambda", "visibility", "purity", "pwin_lambda", "pwin_purity"]


def analytic_table(cfg: RunConfig, n_grid: int = 11) -> list[tuple]:
    """Headline values followed by a lambda grid at the configured visibility."""
    ic = cfg.interferometer()
    bs = ic.test

    def row(label, lam, vis):
        p = purity_from_lambda(lam, bs)
        # the purity form assumes a pure ancilla
        by_purity = pwin_purity(p, vis, ic) if cfg.ancilla_lambda == 1.0 else math.nan
        return (label, lam, vis, p, pwin_lambda(lam, vis, ic, cfg.ancilla_lambda), by_purity)

    lam = cfg.decoherence().lam
    rows = [
        row("configured", lam, cfg.visibility),
        row("pure_measured_visibility", 1.0, cfg.visibility),
        row("pure_visibility_0.95", 1.0, 0.95),
        row("pure_perfect_visibility", 1.0, 1.0),
        row("classical", 0.0, cfg.visibility),
    ]
    rows += [row("grid", float(l), cfg.visibility) for l in np.linspace(0.0, 1.0, n_grid)]
    return rows


# -- run ------------------------------------------------------------------------

RUN_COLUMNS = ["index", "time_s", "x", "y", "phi_x", "C00", "C01", "C10", "C11",
               "A0A1", "B0B1", "correlated", "anticorrelated", "win_rate"]


def instance_rows(record, cfg: RunConfig) -> list[tuple]:
    ic = cfg.interferometer()
    eta = EfficiencyMap.relative(cfg.etas)
    rows = []
    for inst in record.instances:
        rate = normalized_win_rate(inst, eta, ic)
        rows.append((inst.index, inst.time_s, inst.x, inst.y, inst.phi_x,
                     inst.counts["00"], inst.counts["01"], inst.counts["10"], inst.counts["11"],
                     inst.in_lab["A0A1"], inst.in_lab["B0B1"], inst.correlated, inst.anticorrelated, rate))
    return rows


@dataclass(frozen=True)
class RunSummary:
    mean: float
    std: float
    sem: float
    n_instances: int
    total_cross_lab: int


def summarize(rows) -> RunSummary:
    rates = np.array([r[-1] for r in rows])
    std = float(rates.std(ddof=1)) if len(rates) > 1 else 0.0
    total = int(sum(r[5] + r[6] + r[7] + r[8] for r in rows))
    return RunSummary(float(rates.mean()), std, std / math.sqrt(len(rates)), len(rates), total)


# -- purity sweep ---------------------------------------------------------------

SWEEP_COLUMNS = ["purity", "sigma", "lambda", "mean_win_rate", "std", "sem", "model", "model_perfect_visibility"]


def _derived_seed(cfg: RunConfig, *key: int) -> int:
    return int(np.random.SeedSequence(cfg.seed, spawn_key=key).generate_state(1, np.uint64)[0] >> 1)


def purity_grid(cfg: RunConfig, points: int | None = None) -> np.ndarray:
    grid = np.linspace(cfg.purity_floor, 1.0, points or cfg.purity_points)
    grid[-1] = 1.0
    return grid


def purity_sweep(cfg: RunConfig, purities=None) -> list[tuple]:
    """One simulated run per purity; each point draws from its own derived seed."""
    purities = purity_grid(cfg) if purities is None else purities
    ic = cfg.interferometer()
    rows = []
    for k, p in enumerate(purities):
        point = cfg.with_decoherence(purity=float(p)).replace(seed=_derived_seed(cfg, STREAM_SWEEP, k))
        dec = point.decoherence()
        summary = summarize(instance_rows(run_experiment(point), point))
        rows.append((float(p), dec.sigma, dec.lam, summary.mean, summary.std, summary.sem,
                     pwin_purity(float(p), cfg.visibility, ic), pwin_purity(float(p), 1.0, ic)))
    return rows


# -- confidence -----------------------------------------------------------------

def repetition_wins(cfg: RunConfig, rep: int) -> np.ndarray:
    """Retained win flags for one repetition, at least ``cfg.max_events`` of them.

    Rounds come in blocks of one random Referee setting with one draw of
    phase noise, like the instances of a run.
    """
    sim = cfg.generator(STREAM_REPETITION, rep)
    discard = cfg.generator(STREAM_DISCARD, rep)
    ic = cfg.interferometer()
    sigma = cfg.decoherence().sigma
    wins = []
    n = 0
    if cfg.visibility == 1.0:
        # nothing survives the discard and no in-lab coincidences occur
        return np.zeros(0, bool)
    cache = {}
    while n < cfg.max_events:
        x, y = SETTINGS[sim.integers(4)]
        base = PhaseSetting.from_bits(x, y)
        if sigma == 0 and (x, y) in cache:
            dist = cache[(x, y)]
        else:
            ps = base.with_phi_x(sample_phase_noise(base.phi_x, sigma, sim))
            dist = cache[(x, y)] = outcome_distribution(ic, ps, 1.0, cfg.visibility, cfg.ancilla_lambda)
        block = play_rounds(dist, base, ROUNDS_PER_BLOCK, sim)
        kept = retained_wins(block, cfg.visibility, discard)
        wins.append(kept)
        n += len(kept)
    return np.concatenate(wins)[: cfg.max_events]


def _repetition(args):
    cfg, rep = args
    traj = confidence_trajectory(repetition_wins(cfg, rep))
    return [c.confidence for c in traj], [c.p_value for c in traj]


@dataclass
class ConfidenceEnsemble:
    stats: CurveStats
    confidences: np.ndarray
    p_values: np.ndarray
    slope: float
    intercept: float
    r2: float

    def sustained_crossing(self, level: float) -> int | None:
        """First index after which the median never drops back to or below ``level``."""
        below = np.nonzero(~(self.stats.median > level))[0]
        if below.size == 0:
            return 1
        idx = int(below[-1]) + 2
        return idx if idx <= len(self.stats.median) else None


def confidence_ensemble(cfg: RunConfig, workers: int | None = None) -> ConfidenceEnsemble:
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, r) for r in range(cfg.repetitions)]
    if workers <= 1:
        results = [_repetition(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_repetition, jobs))
    length = min(len(c) for c, _ in results)
    if length == 0:
        raise ValueError("no events were retained; with visibility 1 every cross-lab event is discarded")
    conf = np.array([c[:length] for c, _ in results])
    pv = np.array([p[:length] for _, p in results])
    stats = confidence_curve_stats(conf, pv)
    slope, intercept, r2 = log_linear_fit(stats.residual)
    return ConfidenceEnsemble(stats, conf, pv, slope, intercept, r2)


# -- calibration ----------------------------------------------------------------

@dataclass
class CalibrationResult:
    hom_scan: object
    hom_fit: object
    phase_scan: object
    setpoints: object
    true_phase_offset: float
    efficiency_scan: object
    efficiencies: EfficiencyMap

    def phase_errors(self, volts_per_radian: float) -> tuple[float, float]:
        err0 = math.remainder(self.true_phase_offset + self.setpoints.zero / volts_per_radian, 2 * math.pi)
        errpi = math.remainder(self.true_phase_offset + self.setpoints.pi / volts_per_radian - math.pi, 2 * math.pi)
        return abs(err0), abs(errpi)


def calibrate(cfg: RunConfig) -> CalibrationResult:
    hom_rng = cfg.generator(STREAM_CALIBRATION, 0)
    phase_rng = cfg.generator(STREAM_CALIBRATION, 1)
    eff_rng = cfg.generator(STREAM_CALIBRATION, 2)

    half = cfg.hom_span / 2
    delays = np.arange(-half, half + cfg.hom_step / 2, cfg.hom_step)
    hom_scan = simulate_hom_scan(delays, cfg.visibility, cfg.hom_c_max, cfg.hom_coherence_width,
                                 hom_rng, integration_time=cfg.hom_integration)
    hom_fit = fit_hom_dip(hom_scan)

    # unknown baseline phase the parties have to calibrate away
    offset = float(phase_rng.uniform(0, 2 * math.pi))
    voltages = np.linspace(0.0, cfg.phase_span, cfg.phase_points)
    phase_scan = simulate_phase_scan(voltages, cfg.phase_volts_per_radian, PhaseSetting(phi_x=offset),
                                     phase_rng, cfg.phase_rate, cfg.phase_integration)
    setpoints = find_phase_setpoints(phase_scan)

    eff_v = np.linspace(0.0, cfg.eff_span, cfg.eff_points)
    eta = tuple(cfg.etas[k] for k in ((0, 0), (0, 1), (1, 0), (1, 1)))
    eff_scan = simulate_efficiency_scan(eff_v, eta, cfg.phase_volts_per_radian, eff_rng,
                                        cfg.eff_rate, cfg.eff_integration)
    return CalibrationResult(hom_scan, hom_fit, phase_scan, setpoints, offset, eff_scan,
                             fit_relative_efficiencies(eff_scan))
