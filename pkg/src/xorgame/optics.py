"""Four-mode nonlocal interferometer and exact two-photon outcome probabilities.

Mode numbering (1-based in the docs, 0-based in the arrays):

    1  test photon path to Alice        (Referee phase phi_x)
    2  test photon path to Bob          (Referee phase phi_y)
    3  ancilla path to Bob              (Bob's local phase theta_B)
    4  ancilla path to Alice            (Alice's local phase theta_A)

The detection beamsplitters mix modes 1 & 4 (Alice) and 2 & 3 (Bob). Output
modes map onto detectors as 1 -> A0, 4 -> A1, 3 -> B0, 2 -> B1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import permutations
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
NORM_TOL = 1e-12
PROB_CLAMP = 1e-12

INPUT_STATE = (1, 0, 1, 0)

# Order fixed by the file formats; do not reorder.
PATTERNS = (
    "2000", "0200", "0020", "0002", "1001", "0110",
    "1010", "0101", "1100", "0011",
)
SAME_LAB = PATTERNS[:6]
CROSS_LAB = PATTERNS[6:]

# cross-lab pattern -> (a, b) detector indices
CROSS_LAB_OUTPUTS = {
    "1010": (0, 0),
    "0101": (1, 1),
    "1100": (0, 1),
    "0011": (1, 0),
}
PAIR_PATTERN = {ab: pat for pat, ab in CROSS_LAB_OUTPUTS.items()}

# observable coincidences inside one lab (non-photon-number-resolving detectors)
IN_LAB_COINCIDENCES = {"1001": "A0A1", "0110": "B0B1"}
# both photons in the same detector: invisible to the experiment
DOUBLE_CLICKS = {"2000": "A0A0", "0002": "A1A1", "0020": "B0B0", "0200": "B1B1"}


@dataclass(frozen=True)
class BeamsplitterSpec:
    """Lossless beamsplitter with real amplitudes, ``[[t, ir], [ir, t]]``."""

    t: float
    r: float
    # exact probability when built from one; t*t alone can be off by an ulp
    transmission: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.t < 0 or self.r < 0:
            raise ValueError(f"beamsplitter amplitudes must be non-negative, got t={self.t}, r={self.r}")
        if abs(self.t**2 + self.r**2 - 1.0) > NORM_TOL:
            raise ValueError(f"beamsplitter not normalized: t^2 + r^2 = {self.t**2 + self.r**2!r}")

    @classmethod
    def from_transmission(cls, transmission: float) -> "BeamsplitterSpec":
        if not 0.0 <= transmission <= 1.0:
            raise ValueError(f"transmission probability must lie in [0, 1], got {transmission}")
        return cls(math.sqrt(transmission), math.sqrt(1.0 - transmission), transmission)

    @classmethod
    def balanced(cls) -> "BeamsplitterSpec":
        return cls(math.sqrt(0.5), math.sqrt(0.5), 0.5)

    @property
    def T(self) -> float:
        return self.t * self.t if self.transmission is None else self.transmission

    @property
    def R(self) -> float:
        return self.r * self.r if self.transmission is None else 1.0 - self.transmission

    def matrix(self) -> np.ndarray:
        return np.array([[self.t, 1j * self.r], [1j * self.r, self.t]], dtype=complex)


@dataclass(frozen=True)
class InterferometerConfig:
    """Preparation splitters for test (T) and ancilla (M), detection splitters per lab."""

    test: BeamsplitterSpec = field(default_factory=BeamsplitterSpec.balanced)
    ancilla: BeamsplitterSpec = field(default_factory=BeamsplitterSpec.balanced)
    detect_a: BeamsplitterSpec = field(default_factory=BeamsplitterSpec.balanced)
    detect_b: BeamsplitterSpec = field(default_factory=BeamsplitterSpec.balanced)

    @classmethod
    def from_transmissions(cls, test_T: float = 0.5, ancilla_T: float = 0.5,
                           detect_a_T: float = 0.5, detect_b_T: float = 0.5) -> "InterferometerConfig":
        return cls(
            BeamsplitterSpec.from_transmission(test_T),
            BeamsplitterSpec.from_transmission(ancilla_T),
            BeamsplitterSpec.from_transmission(detect_a_T),
            BeamsplitterSpec.from_transmission(detect_b_T),
        )

    @property
    def same_lab_probability(self) -> float:
        """P_b = T_T R_M + T_M R_T, independent of phases, decoherence and visibility."""
        return self.test.T * self.ancilla.R + self.ancilla.T * self.test.R


def _wrap(phase: float) -> float:
    wrapped = math.fmod(phase, TWO_PI)
    if wrapped < 0:
        wrapped += TWO_PI
    # fmod of a value just below 0 can round up to exactly 2*pi
    return 0.0 if wrapped >= TWO_PI else wrapped


@dataclass(frozen=True)
class PhaseSetting:
    """Referee bits plus the four continuous phases, all reduced to [0, 2*pi)."""

    x: int = 0
    y: int = 0
    phi_x: float = 0.0
    phi_y: float = 0.0
    theta_a: float = 0.0
    theta_b: float = 0.0

    def __post_init__(self):
        if self.x not in (0, 1) or self.y not in (0, 1):
            raise ValueError(f"Referee bits must be 0 or 1, got x={self.x}, y={self.y}")
        for name in ("phi_x", "phi_y", "theta_a", "theta_b"):
            object.__setattr__(self, name, _wrap(float(getattr(self, name))))

    @classmethod
    def from_bits(cls, x: int, y: int, theta_a: float = 0.0, theta_b: float = 0.0) -> "PhaseSetting":
        return cls(x, y, x * math.pi, y * math.pi, theta_a, theta_b)

    @property
    def xor(self) -> int:
        return self.x ^ self.y

    @property
    def phase_sum(self) -> float:
        return self.phi_x + self.phi_y + self.theta_a + self.theta_b

    def with_phi_x(self, phi_x: float) -> "PhaseSetting":
        return replace(self, phi_x=phi_x)

    def flipped_x(self) -> "PhaseSetting":
        """Setting used for the minimum-overlap state: phi_x shifted by pi."""
        return replace(self, phi_x=self.phi_x + math.pi)

    def flipped_ancilla(self) -> "PhaseSetting":
        return replace(self, theta_a=self.theta_a + math.pi)


def _as_occupation(occ: Iterable[int]) -> tuple[int, ...]:
    occ = tuple(int(n) for n in occ)
    if len(occ) != 4 or any(n < 0 for n in occ):
        raise ValueError(f"occupation vector must hold 4 non-negative counts, got {occ}")
    return occ


def pattern_occupation(pattern: str) -> tuple[int, ...]:
    return tuple(int(ch) for ch in pattern)


def build_unitary(cfg: InterferometerConfig, ps: PhaseSetting) -> np.ndarray:
    """Return ``U = U2 @ R @ U1`` for the nonlocal interferometer.

    The phases enter as ``diag(e^{i phi_x}, e^{-i phi_y}, e^{i theta_B}, e^{-i theta_A})``.
    The conjugated entries are a sign convention chosen so that the cross-lab
    correlations depend on ``phi_x + phi_y + theta_A + theta_B``; for the Referee's
    0/pi settings the matrix reduces to ``diag((-1)^x, (-1)^y, 1, 1)``.
    """
    u1 = np.zeros((4, 4), dtype=complex)
    u1[:2, :2] = cfg.test.matrix()
    u1[2:, 2:] = cfg.ancilla.matrix()

    phases = np.exp(1j * np.array([ps.phi_x, -ps.phi_y, ps.theta_b, -ps.theta_a]))
    # exact +-1 for the Referee's bit settings keeps the bit-level matrix free of 1e-16 noise
    phases = np.where(np.abs(phases.imag) < 1e-15, np.round(phases.real, 15), phases)
    rot = np.diag(phases)

    a, b = cfg.detect_a, cfg.detect_b
    u2 = np.array(
        [
            [a.t, 0, 0, 1j * a.r],
            [0, b.t, 1j * b.r, 0],
            [0, 1j * b.r, b.t, 0],
            [1j * a.r, 0, 0, a.t],
        ],
        dtype=complex,
    )
    return u2 @ rot @ u1


def permanent(matrix) -> complex:
    """Permanent via Ryser's inclusion-exclusion formula in Gray-code order, O(2^n n)."""
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {m.shape}")
    n = m.shape[0]
    if n == 0:
        return complex(1.0)

    row_sums = np.zeros(n, dtype=complex)
    total = 0j
    gray = 0
    for k in range(1, 2**n):
        new_gray = k ^ (k >> 1)
        col = (gray ^ new_gray).bit_length() - 1
        if new_gray > gray:
            row_sums += m[:, col]
        else:
            row_sums -= m[:, col]
        gray = new_gray
        sign = -1 if bin(gray).count("1") % 2 else 1
        total += sign * np.prod(row_sums)
    return complex((-1) ** n * total)


def permanent_bruteforce(matrix) -> complex:
    """Permutation-sum definition; O(n! n), for cross-checks only."""
    m = np.asarray(matrix, dtype=complex)
    n = m.shape[0]
    return complex(sum(np.prod(m[range(n), perm]) for perm in permutations(range(n))))


def submatrix(u: np.ndarray, inp: Sequence[int], out: Sequence[int]) -> np.ndarray:
    """Rows repeated ``m_i`` times and columns repeated ``n_j`` times."""
    inp = _as_occupation(inp)
    out = _as_occupation(out)
    if sum(inp) != sum(out):
        raise ValueError(f"photon number mismatch: input {inp} carries {sum(inp)}, output {out} carries {sum(out)}")
    cols = [j for j, n in enumerate(inp) for _ in range(n)]
    rows = [i for i, m in enumerate(out) for _ in range(m)]
    return np.asarray(u)[np.ix_(rows, cols)]


def _check_unit_interval(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def transition_probability(u_pair, inp, out, lam: float, visibility: float) -> float:
    """Input->output probability for the decohered, partially distinguishable pair.

    ``u_pair`` holds the unitaries for the setting (x, y) and for the
    flipped setting (x xor 1, y); they are mixed with weights (1 +- lam)/2.
    Within each, |Per|^2 and |det|^2 are mixed with weights (1 +- V)/2.
    """
    _check_unit_interval("lambda", lam)
    _check_unit_interval("visibility", visibility)
    u_xy, u_flip = u_pair
    inp = _as_occupation(inp)
    out = _as_occupation(out)
    norm = math.prod(math.factorial(n) for n in inp + out)

    def term(u):
        sub = submatrix(u, inp, out)
        per = abs(permanent(sub)) ** 2
        det = abs(np.linalg.det(sub)) ** 2 if sub.shape[0] else 1.0
        return ((1 + visibility) / 2 * per + (1 - visibility) / 2 * det) / norm

    return (1 + lam) / 2 * term(u_xy) + (1 - lam) / 2 * term(u_flip)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities over the ten two-photon detection patterns (order of ``PATTERNS``)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(PATTERNS),):
            raise ValueError(f"expected {len(PATTERNS)} probabilities, got shape {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __getitem__(self, pattern: str) -> float:
        return float(self.probs[PATTERNS.index(pattern)])

    def as_dict(self) -> dict[str, float]:
        return {pat: float(p) for pat, p in zip(PATTERNS, self.probs)}

    @property
    def same_lab(self) -> float:
        return float(self.probs[:6].sum())

    @property
    def cross_lab(self) -> float:
        return float(self.probs[6:].sum())

    def pair(self, a: int, b: int) -> float:
        return self[PAIR_PATTERN[(a, b)]]


def outcome_distribution(cfg: InterferometerConfig, ps: PhaseSetting, lam: float = 1.0,
                         visibility: float = 1.0, ancilla_lam: float = 1.0) -> OutcomeDistribution:
    """Exact distribution over all ten output patterns for input ``[1, 0, 1, 0]``.

    ``ancilla_lam`` < 1 mixes in the ancilla's own minimum-overlap state in the
    same way ``lam`` does for the test photon; the default is a pure ancilla.
    """
    _check_unit_interval("ancilla lambda", ancilla_lam)
    mixture = [((1 + ancilla_lam) / 2, ps)]
    if ancilla_lam < 1.0:
        mixture.append(((1 - ancilla_lam) / 2, ps.flipped_ancilla()))

    probs = np.zeros(len(PATTERNS))
    for weight, setting in mixture:
        pair = (build_unitary(cfg, setting), build_unitary(cfg, setting.flipped_x()))
        for k, pat in enumerate(PATTERNS):
            probs[k] += weight * transition_probability(pair, INPUT_STATE, pattern_occupation(pat), lam, visibility)

    if np.any(probs < -PROB_CLAMP):
        raise ArithmeticError(f"negative probability encountered: {probs.min()!r}")
    probs = np.clip(probs, 0.0, 1.0)
    return OutcomeDistribution(probs)


def analytic_pair_probabilities(ps: PhaseSetting) -> tuple[float, float, float, float]:
    """Ideal (balanced, pure, indistinguishable) cross-lab probabilities (p00, p01, p10, p11)."""
    half = ps.phase_sum / 2
    corr = 0.25 * math.cos(half) ** 2
    anti = 0.25 * math.sin(half) ** 2
    return corr, anti, anti, corr
