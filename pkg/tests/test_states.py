import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from xorgame.optics import BeamsplitterSpec
from xorgame.states import (
    DecoherenceSpec,
    PurityOutOfDomain,
    TestStateDensity,
    density_from_lambda,
    lambda_from_purity,
    lambda_from_sigma,
    purity,
    purity_floor,
    purity_from_lambda,
    sample_phase_noise,
    sigma_from_lambda,
    sigma_from_purity,
)

BS = BeamsplitterSpec.from_transmission(0.35)


def gaussian_averaged_density(bs, phi, sigma):
    """Oracle: integrate the pure-state density over Normal(phi, sigma^2) phases."""
    def avg(f):
        val, _ = integrate.quad(lambda p: f(p) * math.exp(-((p - phi) ** 2) / (2 * sigma**2)),
                                phi - 12 * sigma, phi + 12 * sigma, limit=200)
        return val / (sigma * math.sqrt(2 * math.pi))

    re = avg(lambda p: math.cos(p))
    im = avg(lambda p: math.sin(p))
    coh = bs.t * bs.r * (re + 1j * im)
    return np.array([[bs.T, np.conj(coh)], [coh, bs.R]])


def test_lambda_endpoints():
    pure = density_from_lambda(BS, 0.3, 1.0).matrix
    psi = np.array([BS.t, BS.r * np.exp(1j * 0.3)])
    assert np.allclose(pure, np.outer(psi, psi.conj()), atol=1e-15)
    assert np.allclose(density_from_lambda(BS, 0.3, 0.0).matrix, np.diag([0.35, 0.65]), atol=1e-15)


@pytest.mark.parametrize("sigma", [0.1, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("phi", [0.0, 1.1, math.pi])
def test_lambda_matches_gaussian_average(sigma, phi):
    got = density_from_lambda(BS, phi, lambda_from_sigma(sigma)).matrix
    assert np.allclose(got, gaussian_averaged_density(BS, phi, sigma), atol=1e-10)


def test_purity_examples():
    assert purity(density_from_lambda(BS, 0.0, 1.0)) == pytest.approx(1.0, abs=1e-14)
    assert purity(density_from_lambda(BS, 0.0, 0.0)) == pytest.approx(0.545, abs=1e-14)
    bal = BeamsplitterSpec.balanced()
    assert purity(density_from_lambda(bal, 0.0, 1.0)) == pytest.approx(1.0, abs=1e-14)
    assert purity(density_from_lambda(bal, 0.0, 0.0)) == pytest.approx(0.5, abs=1e-14)
    assert purity_floor(BS) == pytest.approx(0.545, abs=1e-15)


def test_sigma_lambda_conversions():
    assert lambda_from_sigma(0.0) == 1.0
    assert lambda_from_sigma(math.inf) == 0.0
    assert lambda_from_sigma(40.0) == 0.0
    assert lambda_from_sigma(1.0) == pytest.approx(0.6065306597, abs=1e-10)
    assert sigma_from_lambda(1.0) == 0.0
    assert sigma_from_lambda(0.0) == math.inf
    with pytest.raises(ValueError):
        lambda_from_sigma(-0.1)
    with pytest.raises(ValueError):
        sigma_from_lambda(1.5)


def test_purity_inversions():
    assert sigma_from_purity(1.0, BS) == 0.0
    p1 = 0.35**2 + 0.65**2 + 2 * math.exp(-1) * 0.35 * 0.65
    assert purity_from_lambda(lambda_from_sigma(1.0), BS) == pytest.approx(p1, abs=1e-15)
    assert sigma_from_purity(p1, BS) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(PurityOutOfDomain):
        sigma_from_purity(0.545, BS)
    with pytest.raises(PurityOutOfDomain):
        sigma_from_purity(0.5, BS)
    with pytest.raises(PurityOutOfDomain):
        lambda_from_purity(1.1, BS)
    assert lambda_from_purity(0.545, BS) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.0, 5.0), st.floats(-7, 7))
def test_parameterization_consistency(T, sigma, phi):
    bs = BeamsplitterSpec.from_transmission(T)
    rho = density_from_lambda(bs, phi, lambda_from_sigma(sigma))
    R = 1 - T
    assert purity(rho) == pytest.approx(T * T + R * R + 2 * math.exp(-sigma * sigma) * T * R, abs=1e-10)
    m = rho.matrix
    assert np.allclose(m, m.conj().T)
    assert np.trace(m).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(m).min() > -1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.0, 1.0))
def test_decoherence_spec_round_trip(T, lam):
    bs = BeamsplitterSpec.from_transmission(T)
    spec = DecoherenceSpec.from_lambda(lam, bs)
    back = DecoherenceSpec.from_purity(spec.purity, bs)
    assert back.lam == pytest.approx(lam, abs=1e-6)
    if lam > 0:
        again = DecoherenceSpec.from_sigma(spec.sigma, bs)
        assert again.purity == pytest.approx(spec.purity, abs=1e-12)


def test_density_validation():
    with pytest.raises(ValueError):
        TestStateDensity(np.eye(2))
    with pytest.raises(ValueError):
        TestStateDensity(np.array([[0.5, 1.0], [1.0, 0.5]]))
    with pytest.raises(ValueError):
        TestStateDensity(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ValueError):
        density_from_lambda(BS, 0.0, 1.2)


def test_phase_noise_sampling():
    rng = np.random.default_rng(1)
    assert sample_phase_noise(1.234, 0.0, rng) == 1.234
    draws = np.array([sample_phase_noise(0.7, 0.5, rng) for _ in range(100_000)])
    assert abs(draws.mean() - 0.7) < 0.005
    assert abs(draws.std() - 0.5) < 0.01
    a = [sample_phase_noise(0.0, 0.3, np.random.default_rng(9)) for _ in range(3)]
    g1, g2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [sample_phase_noise(0, 0.3, g1) for _ in range(5)] == [sample_phase_noise(0, 0.3, g2) for _ in range(5)]
    assert len(set(a)) == 1
    with pytest.raises(ValueError):
        sample_phase_noise(0.0, -1.0, rng)
    uniform = [sample_phase_noise(0.0, math.inf, rng) for _ in range(1000)]
    assert 0 <= min(uniform) and max(uniform) < 2 * math.pi


@pytest.mark.parametrize("sigma", [0.3, 1.0, 2.0])
def test_empirical_decoherence(sigma):
    rng = np.random.default_rng(2024)
    n = 1_000_000
    # vectorized draw from the same generator call the sampler makes
    draws = rng.normal(0.0, sigma, n)
    assert sample_phase_noise(0.0, sigma, np.random.default_rng(5)) == np.random.default_rng(5).normal(0.0, sigma)
    c = np.cos(draws)
    se = c.std() / math.sqrt(n)
    assert abs(c.mean() - lambda_from_sigma(sigma)) < 3 * se
