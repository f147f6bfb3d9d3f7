"""Run configuration and its flat ``key = value`` file form.

Documented keys (defaults mirror the experiment):

    test_transmission       T of the test photon's preparation splitter (0.35)
    ancilla_transmission    T of the ancilla's preparation splitter (0.35)
    detect_a_transmission   T of Alice's detection splitter (0.5)
    detect_b_transmission   T of Bob's detection splitter (0.5)
    visibility              HOM visibility V (0.94)
    sigma | lambda | purity decoherence of the test photon; set exactly one
    ancilla_lambda          coherence of the ancilla superposition (1.0)
    instances               game instances per run (240)
    instances_per_setting   contiguous instances per Referee setting (60)
    mean_counts             mean cross-lab coincidences per instance (500)
    counts_mode             "poisson" or "fixed"
    eta_00 .. eta_11        relative detection efficiency per coincidence pattern
    seed                    master seed
    rng                     bit generator: PCG64, Philox or SFC64
    workers                 process count; results never depend on it
    output_dir              where commands write their files
    purity_points           grid size of the purity sweep
    repetitions, max_events, confidence_level   confidence ensemble
    hom_*, phase_*, eff_*   calibration scans (see calibration module)
"""

from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .optics import InterferometerConfig
from .states import DecoherenceSpec, purity_floor


class ConfigError(ValueError):
    pass


DECOHERENCE_KEYS = ("sigma", "lambda", "purity")
EXECUTION_KEYS = ("workers", "output_dir")
# file key -> attribute name where they differ
_ALIASES = {"lambda": "lam"}
_KEYS = {v: k for k, v in _ALIASES.items()}
BIT_GENERATORS = {"PCG64": np.random.PCG64, "Philox": np.random.Philox, "SFC64": np.random.SFC64}

# independent streams derived from the master seed
STREAM_INSTANCE = 0
STREAM_SCHEDULE = 1
STREAM_DISCARD = 2
STREAM_REPETITION = 3
STREAM_CALIBRATION = 4
STREAM_SWEEP = 5


@dataclass(frozen=True)
class RunConfig:
    test_transmission: float = 0.35
    ancilla_transmission: float = 0.35
    detect_a_transmission: float = 0.5
    detect_b_transmission: float = 0.5
    visibility: float = 0.94
    sigma: float | None = None
    lam: float | None = None
    purity: float | None = None
    ancilla_lambda: float = 1.0
    instances: int = 240
    instances_per_setting: int = 60
    mean_counts: float = 500.0
    counts_mode: str = "poisson"
    eta_00: float = 1.0
    eta_01: float = 1.0
    eta_10: float = 1.0
    eta_11: float = 1.0
    seed: int = 20240117
    rng: str = "PCG64"
    workers: int = 1
    output_dir: str = "xorgame-out"
    purity_points: int = 9
    repetitions: int = 25
    max_events: int = 200
    confidence_level: float = 0.99
    hom_c_max: float = 1000.0
    hom_coherence_width: float = 20.0
    hom_span: float = 300.0
    hom_step: float = 5.0
    hom_integration: float = 5.0
    phase_volts_per_radian: float = 0.8
    phase_span: float = 15.0
    phase_points: int = 120
    phase_rate: float = 500.0
    phase_integration: float = 1.0
    eff_points: int = 150
    eff_span: float = 25.0
    eff_rate: float = 500.0
    eff_integration: float = 10.0

    def __post_init__(self):
        n_set = sum(v is not None for v in (self.sigma, self.lam, self.purity))
        if n_set == 0:
            object.__setattr__(self, "lam", 1.0)
        elif n_set > 1:
            raise ConfigError("set exactly one of sigma, lambda, purity")
        for name in ("test_transmission", "ancilla_transmission", "detect_a_transmission",
                     "detect_b_transmission", "visibility", "ancilla_lambda"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("eta_00", "eta_01", "eta_10", "eta_11"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if self.instances_per_setting < 1 or self.instances != 4 * self.instances_per_setting:
            raise ConfigError(
                f"instances ({self.instances}) must equal 4 x instances_per_setting ({self.instances_per_setting})"
            )
        if self.mean_counts <= 0:
            raise ConfigError("mean_counts must be positive")
        if self.counts_mode not in ("poisson", "fixed"):
            raise ConfigError(f"counts_mode must be 'poisson' or 'fixed', got {self.counts_mode!r}")
        if self.rng not in BIT_GENERATORS:
            raise ConfigError(f"rng must be one of {sorted(BIT_GENERATORS)}, got {self.rng!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.purity_points < 2 or self.repetitions < 2 or self.max_events < 1:
            raise ConfigError("purity_points and repetitions need >= 2, max_events >= 1")
        if not 0.0 < self.confidence_level < 1.0:
            raise ConfigError("confidence_level must lie in (0, 1)")
        try:
            cfg = self.interferometer()
            self.decoherence()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.same_lab_probability >= 1.0:
            raise ConfigError("no cross-lab events possible with these splitters")

    def interferometer(self) -> InterferometerConfig:
        return InterferometerConfig.from_transmissions(
            self.test_transmission, self.ancilla_transmission,
            self.detect_a_transmission, self.detect_b_transmission,
        )

    def decoherence(self) -> DecoherenceSpec:
        bs = self.interferometer().test
        if self.sigma is not None:
            if self.sigma < 0:
                raise ValueError("sigma must be non-negative")
            return DecoherenceSpec.from_sigma(self.sigma, bs)
        if self.purity is not None:
            return DecoherenceSpec.from_purity(self.purity, bs)
        return DecoherenceSpec.from_lambda(self.lam, bs)

    def with_decoherence(self, **kw) -> "RunConfig":
        (key, value), = kw.items()
        key = _ALIASES.get(key, key)
        blank = {"sigma": None, "lam": None, "purity": None}
        blank[key] = value
        return dataclasses.replace(self, **blank)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    @property
    def etas(self) -> dict[tuple[int, int], float]:
        return {(0, 0): self.eta_00, (0, 1): self.eta_01, (1, 0): self.eta_10, (1, 1): self.eta_11}

    @property
    def purity_floor(self) -> float:
        return purity_floor(self.interferometer().test)

    def generator(self, *key: int) -> np.random.Generator:
        """Independent, worker-count-independent stream for ``key`` under the master seed."""
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(key))
        return np.random.Generator(BIT_GENERATORS[self.rng](ss))

    # -- file form -----------------------------------------------------------

    def items(self) -> list[tuple[str, object]]:
        """(file key, value) for every set field, in declaration order."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("sigma", "lam", "purity") and value is None:
                continue
            out.append((_KEYS.get(f.name, f.name), value))
        return out

    def snapshot(self) -> dict[str, object]:
        """Config plus the derived decoherence values, for embedding in outputs.

        Execution settings (workers, output_dir) are left out: they must not
        change the bytes of any output.
        """
        snap = {k: v for k, v in self.items() if k not in EXECUTION_KEYS}
        dec = self.decoherence()
        snap["derived_sigma"] = dec.sigma
        snap["derived_lambda"] = dec.lam
        snap["derived_purity"] = dec.purity
        return snap

    def to_text(self) -> str:
        lines = ["# xorgame run configuration"]
        lines += [f"{key} = {_format(value)}" for key, value in self.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        hints = typing.get_type_hints(cls)
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            name = _ALIASES.get(key, key)
            if name not in hints:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if name in kwargs:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            kwargs[name] = _parse(value, hints[name], key)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(value: str, hint, key: str):
    # unwrap Optional[...]
    if isinstance(hint, types.UnionType) or typing.get_origin(hint) is typing.Union:
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    try:
        if hint is int:
            return int(value)
        if hint is float:
            v = float(value)
            if math.isnan(v):
                raise ValueError
            return v
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {hint.__name__}") from None
