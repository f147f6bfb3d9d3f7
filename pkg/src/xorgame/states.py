"""Test-photon path qubit and its three decoherence parameterizations.

lambda is canonical: it scales the off-diagonals of the density matrix.
sigma (Gaussian phase-noise width) and purity are converted at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .optics import BeamsplitterSpec


class PurityOutOfDomain(ValueError):
    """Purity at or below the fully dephased floor T^2 + R^2 (sigma undefined)."""


@dataclass(frozen=True)
class TestStateDensity:
    matrix: np.ndarray

    __test__ = False  # not a pytest class

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.shape != (2, 2):
            raise ValueError(f"expected a 2x2 density matrix, got shape {rho.shape}")
        if not np.allclose(rho, rho.conj().T, atol=1e-12):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > 1e-12:
            raise ValueError(f"density matrix trace is {np.trace(rho)!r}")
        if np.linalg.eigvalsh(rho).min() < -1e-12:
            raise ValueError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)


def density_from_lambda(bs: BeamsplitterSpec, phi: float, lam: float) -> TestStateDensity:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    coh = lam * bs.t * bs.r
    return TestStateDensity(np.array(
        [[bs.T, coh * np.exp(-1j * phi)],
         [coh * np.exp(1j * phi), bs.R]],
    ))


def purity(rho: TestStateDensity) -> float:
    m = rho.matrix
    return float(np.trace(m @ m).real)


def purity_from_lambda(lam: float, bs: BeamsplitterSpec) -> float:
    return bs.T**2 + bs.R**2 + 2 * lam**2 * bs.T * bs.R


def purity_floor(bs: BeamsplitterSpec) -> float:
    return bs.T**2 + bs.R**2


def lambda_from_sigma(sigma: float) -> float:
    if sigma < 0:
        raise ValueError(f"phase-noise width must be non-negative, got {sigma}")
    if math.isinf(sigma):
        return 0.0
    return math.exp(-sigma * sigma / 2)


def sigma_from_lambda(lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return math.inf
    if lam == 1.0:
        return 0.0
    return math.sqrt(-2.0 * math.log(lam))


def lambda_from_purity(p: float, bs: BeamsplitterSpec) -> float:
    """Inverse of :func:`purity_from_lambda`; the floor itself maps to lambda = 0."""
    floor = purity_floor(bs)
    tr = bs.T * bs.R
    if p > 1.0 + 1e-12 or p < floor - 1e-12:
        raise PurityOutOfDomain(f"purity {p} outside [{floor}, 1]")
    if tr == 0.0:
        raise PurityOutOfDomain("beamsplitter without splitting has no coherence to tune")
    if p >= 1.0:
        return 1.0
    return math.sqrt(min(max((p - floor) / (2 * tr), 0.0), 1.0))


def sigma_from_purity(p: float, bs: BeamsplitterSpec) -> float:
    floor = purity_floor(bs)
    if p <= floor:
        raise PurityOutOfDomain(
            f"purity {p} is at or below the dephased floor {floor}; no finite phase noise reaches it"
        )
    if p > 1.0 + 1e-12:
        raise PurityOutOfDomain(f"purity {p} exceeds 1")
    ratio = (p - floor) / (2 * bs.T * bs.R)
    if p >= 1.0 or ratio >= 1.0:
        return 0.0
    return math.sqrt(-math.log(ratio))


@dataclass(frozen=True)
class DecoherenceSpec:
    """Mutually consistent (sigma, lambda, purity) for one preparation splitter."""

    sigma: float
    lam: float
    purity: float

    def __post_init__(self):
        if abs(self.lam - lambda_from_sigma(self.sigma)) > 1e-10:
            raise ValueError("sigma and lambda are inconsistent")

    @classmethod
    def from_sigma(cls, sigma: float, bs: BeamsplitterSpec) -> "DecoherenceSpec":
        lam = lambda_from_sigma(sigma)
        return cls(sigma, lam, purity_from_lambda(lam, bs))

    @classmethod
    def from_lambda(cls, lam: float, bs: BeamsplitterSpec) -> "DecoherenceSpec":
        return cls(sigma_from_lambda(lam), lam, purity_from_lambda(lam, bs))

    @classmethod
    def from_purity(cls, p: float, bs: BeamsplitterSpec) -> "DecoherenceSpec":
        lam = lambda_from_purity(p, bs)
        return cls(sigma_from_lambda(lam), lam, p)


def sample_phase_noise(phi_x: float, sigma: float, rng: np.random.Generator) -> float:
    """Draw the Referee's noisy phase ~ Normal(phi_x, sigma^2).

    An infinite width means a fully randomized phase and is drawn uniformly.
    """
    if sigma < 0:
        raise ValueError(f"phase-noise width must be non-negative, got {sigma}")
    if sigma == 0:
        return phi_x
    if math.isinf(sigma):
        return float(rng.uniform(0.0, 2 * math.pi))
    return float(rng.normal(phi_x, sigma))
