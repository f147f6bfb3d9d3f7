"""The XOR game: closed-form win probabilities, Referee schedules and Monte Carlo play."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .config import STREAM_INSTANCE, STREAM_SCHEDULE, RunConfig
from .optics import (
    CROSS_LAB,
    CROSS_LAB_OUTPUTS,
    DOUBLE_CLICKS,
    IN_LAB_COINCIDENCES,
    PATTERNS,
    InterferometerConfig,
    OutcomeDistribution,
    PhaseSetting,
    outcome_distribution,
)
from .states import lambda_from_purity, sample_phase_noise

SETTINGS = ((0, 0), (0, 1), (1, 0), (1, 1))
INTEGRATION_TIME_S = 1.0

_CROSS_INDEX = np.array([PATTERNS.index(p) for p in CROSS_LAB])
# per pattern index: detector outputs for cross-lab rounds, -1 for same-lab rounds
_PATTERN_A = np.array([CROSS_LAB_OUTPUTS.get(p, (-1, -1))[0] for p in PATTERNS])
_PATTERN_B = np.array([CROSS_LAB_OUTPUTS.get(p, (-1, -1))[1] for p in PATTERNS])


# -- closed forms ---------------------------------------------------------------

def p_ab_given_xy(a: int, b: int, ps: PhaseSetting) -> float:
    """Ideal output distribution including the fair guess on same-lab events."""
    sign = -1.0 if a ^ b else 1.0
    return 0.125 + 0.125 * (1.0 + sign * math.cos(ps.phase_sum))


def coherence_product(cfg: InterferometerConfig) -> float:
    """t_T r_T t_M r_M: the interference term's weight in the cross-lab counts.

    Equals T R, i.e. half the same-lab probability, when both preparation
    splitters are identical.
    """
    a, b = cfg.test.T * cfg.test.R, cfg.ancilla.T * cfg.ancilla.R
    # exact for identical splitters, where sqrt(a * a) may be off by an ulp
    return a if a == b else math.sqrt(a * b)


def pwin_lambda(lam: float, visibility: float, cfg: InterferometerConfig, ancilla_lam: float = 1.0) -> float:
    """1/2 + lam V t_T r_T t_M r_M.

    For identical preparation splitters this is 1/2 + lam V (T_T R_M + T_M R_T)/2.
    """
    for name, v in (("lambda", lam), ("visibility", visibility), ("ancilla lambda", ancilla_lam)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    return 0.5 + lam * ancilla_lam * visibility * coherence_product(cfg)


def pwin_purity(p: float, visibility: float, cfg: InterferometerConfig) -> float:
    """Win probability as a function of the test photon's purity, general splitters.

    Equivalent to 1/2 + V sqrt(P - T_T^2 - R_T^2) sqrt(T_M R_M / 2); exactly 1/2 at the floor.
    """
    return pwin_lambda(lambda_from_purity(p, cfg.test), visibility, cfg)


def pwin_purity_identical(p: float, visibility: float, T: float) -> float:
    """Closed form for two identical preparation splitters with transmission ``T``."""
    R = 1.0 - T
    return 0.5 + visibility * math.sqrt(R * T / 2) * math.sqrt(max(p - (R * R + T * T), 0.0))


def pwin_from_distribution(dist: OutcomeDistribution, ps: PhaseSetting) -> float:
    corr = sum(dist[pat] for pat, (a, b) in CROSS_LAB_OUTPUTS.items() if a ^ b == ps.xor)
    return corr + 0.5 * dist.same_lab


# -- rounds ---------------------------------------------------------------------

@dataclass(frozen=True)
class RoundResult:
    pattern: str
    a: int
    b: int
    win: bool

    @property
    def cross_lab(self) -> bool:
        return self.pattern in CROSS_LAB_OUTPUTS


@dataclass
class RoundBatch:
    """Many rounds as parallel arrays; ``pattern`` holds indices into ``PATTERNS``."""

    pattern: np.ndarray
    a: np.ndarray
    b: np.ndarray
    win: np.ndarray

    def __len__(self):
        return len(self.pattern)

    def __iter__(self):
        for k, a, b, w in zip(self.pattern, self.a, self.b, self.win):
            yield RoundResult(PATTERNS[k], int(a), int(b), bool(w))

    @classmethod
    def concatenate(cls, batches) -> "RoundBatch":
        batches = list(batches)
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in ("pattern", "a", "b", "win")))


def play_rounds(dist: OutcomeDistribution, ps: PhaseSetting, n: int, rng: np.random.Generator) -> RoundBatch:
    """Sample ``n`` detection events and apply the detector-index strategy.

    Same-lab events carry no phase information; both parties guess a fair bit.
    """
    idx = rng.choice(len(PATTERNS), size=n, p=dist.probs)
    guesses = rng.integers(0, 2, size=(2, n))
    same = _PATTERN_A[idx] < 0
    a = np.where(same, guesses[0], _PATTERN_A[idx])
    b = np.where(same, guesses[1], _PATTERN_B[idx])
    win = (a ^ b) == ps.xor
    return RoundBatch(idx, a, b, win)


def play_round(dist: OutcomeDistribution, ps: PhaseSetting, rng: np.random.Generator) -> RoundResult:
    return next(iter(play_rounds(dist, ps, 1, rng)))


# -- runs -----------------------------------------------------------------------

@dataclass(frozen=True)
class RefereeSchedule:
    settings: tuple[tuple[int, int], ...]
    block_order: tuple[tuple[int, int], ...]
    instances_per_setting: int


def make_schedule(instances_per_setting: int, rng: np.random.Generator) -> RefereeSchedule:
    """Four contiguous blocks, one per setting, in random order."""
    order = tuple(SETTINGS[i] for i in rng.permutation(4))
    settings = tuple(s for s in order for _ in range(instances_per_setting))
    return RefereeSchedule(settings, order, instances_per_setting)


@dataclass
class InstanceRecord:
    """Counts from one instance (one Referee setting, one integration window).

    ``double_clicks`` is simulation truth the detectors cannot see; analysis
    code must not read it.
    """

    index: int
    x: int
    y: int
    phi_x: float
    time_s: float
    counts: dict[str, int]
    in_lab: dict[str, int]
    double_clicks: dict[str, int] = field(default_factory=dict)

    def pair_counts(self) -> dict[tuple[int, int], int]:
        return {(int(k[0]), int(k[1])): v for k, v in self.counts.items()}

    @property
    def correlated(self) -> int:
        return self.counts["00"] + self.counts["11"]

    @property
    def anticorrelated(self) -> int:
        return self.counts["01"] + self.counts["10"]


@dataclass
class RunRecord:
    config: dict
    seed: int
    version: str
    instances: list[InstanceRecord]
    schedule_blocks: list[tuple[int, int]]
    unobservable_fields: tuple[str, ...] = ("double_clicks",)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["unobservable_fields"] = list(self.unobservable_fields)
        d["schedule_blocks"] = [list(s) for s in self.schedule_blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            config=d["config"],
            seed=d["seed"],
            version=d["version"],
            instances=[InstanceRecord(**inst) for inst in d["instances"]],
            schedule_blocks=[tuple(s) for s in d["schedule_blocks"]],
            unobservable_fields=tuple(d.get("unobservable_fields", ("double_clicks",))),
        )


def _draw_counts(dist: OutcomeDistribution, cfg: RunConfig, p_cross: float, rng) -> np.ndarray:
    if cfg.counts_mode == "fixed":
        cross = dist.probs[6:] / dist.probs[6:].sum()
        same_p = dist.probs[:6]
        n_same = int(round(cfg.mean_counts * (1 - p_cross) / p_cross))
        same = rng.multinomial(n_same, same_p / same_p.sum()) if same_p.sum() > 0 else np.zeros(6, int)
        return np.concatenate([same, rng.multinomial(int(cfg.mean_counts), cross)])
    # Poisson total whose cross-lab share has mean ``mean_counts``
    n_events = rng.poisson(cfg.mean_counts / p_cross)
    return rng.multinomial(n_events, dist.probs)


def simulate_instance(cfg: RunConfig, index: int, x: int, y: int) -> InstanceRecord:
    """One instance: fresh phase noise on phi_x, exact distribution, sampled counts."""
    rng = cfg.generator(STREAM_INSTANCE, index)
    interferometer = cfg.interferometer()
    sigma = cfg.decoherence().sigma
    base = PhaseSetting.from_bits(x, y)
    phi = sample_phase_noise(base.phi_x, sigma, rng)
    ps = base.with_phi_x(phi)
    dist = outcome_distribution(interferometer, ps, 1.0, cfg.visibility, cfg.ancilla_lambda)
    raw = _draw_counts(dist, cfg, 1.0 - interferometer.same_lab_probability, rng)
    by_pattern = dict(zip(PATTERNS, (int(c) for c in raw)))

    counts = {}
    for pat in CROSS_LAB:
        a, b = CROSS_LAB_OUTPUTS[pat]
        eta = cfg.etas[(a, b)]
        n = by_pattern[pat]
        counts[f"{a}{b}"] = int(rng.binomial(n, eta)) if eta < 1.0 else n
    counts = {k: counts[k] for k in ("00", "01", "10", "11")}
    return InstanceRecord(
        index=index,
        x=x,
        y=y,
        phi_x=ps.phi_x,
        time_s=index * INTEGRATION_TIME_S,
        counts=counts,
        in_lab={name: by_pattern[pat] for pat, name in IN_LAB_COINCIDENCES.items()},
        double_clicks={name: by_pattern[pat] for pat, name in DOUBLE_CLICKS.items()},
    )


def _simulate_chunk(args):
    cfg, jobs = args
    return [simulate_instance(cfg, i, x, y) for i, x, y in jobs]


def run_experiment(cfg: RunConfig, workers: int | None = None) -> RunRecord:
    """Simulate one run of ``cfg.instances`` instances.

    Every instance draws from its own stream keyed by its index, so the
    record is identical for any ``workers``.
    """
    workers = cfg.workers if workers is None else workers
    schedule = make_schedule(cfg.instances_per_setting, cfg.generator(STREAM_SCHEDULE))
    jobs = [(i, x, y) for i, (x, y) in enumerate(schedule.settings)]
    if workers <= 1:
        instances = _simulate_chunk((cfg, jobs))
    else:
        chunks = [jobs[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, [(cfg, c) for c in chunks]))
        instances = sorted((r for part in parts for r in part), key=lambda r: r.index)
    return RunRecord(
        config=cfg.snapshot(),
        seed=cfg.seed,
        version=__version__,
        instances=instances,
        schedule_blocks=list(schedule.block_order),
    )
