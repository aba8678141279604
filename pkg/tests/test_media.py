import numpy as np
import pytest

from blochwood.media import (DefectPerturbation, MediumSamples, PeriodicMedium,
                             fourier_coeffs, read_medium_grid, validate_assumptions,
                             write_medium_grid)


def test_fourier_constant():
    c = 2.3 - 0.4j
    out = fourier_coeffs(lambda x1, x2: np.full(x1.shape, c), bandwidth=2)
    assert out[2, 2] == pytest.approx(c)
    out[2, 2] = 0.0
    np.testing.assert_allclose(out, 0.0, atol=1e-14)


def test_fourier_cosine():
    out = fourier_coeffs(lambda x1, x2: np.cos(x1), bandwidth=1)
    assert out[2, 1] == pytest.approx(0.5)  # d = (1, 0)
    assert out[0, 1] == pytest.approx(0.5)  # d = (-1, 0)
    assert abs(out[1, 1]) < 1e-14


def _gl_quadrature_coeff(f, d, n=60):
    # independent dense quadrature oracle (Gauss-Legendre, not FFT)
    x, w = np.polynomial.legendre.leggauss(n)
    x = np.pi * x
    w = np.pi * w
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    vals = f(X1, X2) * np.exp(-1j * (d[0] * X1 + d[1] * X2))
    return np.sum(W * vals) / (2 * np.pi) ** 2


def test_fourier_vs_quadrature_oracle():
    f = lambda x1, x2: np.exp(np.sin(x1 + x2))
    out = fourier_coeffs(f, bandwidth=3, n_grid=64)
    for d in [(0, 0), (1, 0), (2, -1), (-3, 3), (1, 2)]:
        ref = _gl_quadrature_coeff(f, d)
        assert abs(out[d[0] + 3, d[1] + 3] - ref) < 1e-10


def test_fourier_roundtrip_truncated_series():
    rng = np.random.default_rng(8)
    B = 2
    coeffs = rng.standard_normal((2 * B + 1, 2 * B + 1)) * (
        1.0 + 1j * rng.standard_normal((2 * B + 1, 2 * B + 1)))

    def f(x1, x2):
        out = np.zeros(x1.shape, dtype=complex)
        for d1 in range(-B, B + 1):
            for d2 in range(-B, B + 1):
                out += coeffs[d1 + B, d2 + B] * np.exp(1j * (d1 * x1 + d2 * x2))
        return out

    out = fourier_coeffs(f, bandwidth=B, n_grid=32)
    np.testing.assert_allclose(out, coeffs, rtol=1e-12, atol=1e-12)


def test_fourier_aliasing_guard():
    with pytest.raises(ValueError, match="alias"):
        fourier_coeffs(np.ones((6, 6)), bandwidth=2)


def test_periodic_extension_of_profiles():
    med = PeriodicMedium.lamellar(eps_hi=2.0, fill=0.4, height=0.5)
    x = np.linspace(-np.pi, np.pi, 13)
    z = np.array([0.2])
    a = med.eps(x, 0.0 * x, z)
    b = med.eps(x + 2 * np.pi, 0.0 * x, z)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_medium_samples_hermitian_symmetry():
    med = PeriodicMedium.lamellar(eps_hi=2.25, fill=0.3, height=0.6)
    s = MediumSamples.from_medium(med, np.array([0.1, 0.4]), bandwidth=3)
    B = 3
    for d1 in range(-B, B + 1):
        for d2 in range(-B, B + 1):
            np.testing.assert_allclose(s.eps_hat[d1 + B, d2 + B],
                                       np.conj(s.eps_hat[-d1 + B, -d2 + B]),
                                       atol=1e-13)
    assert not s.transverse_uniform
    s_const = MediumSamples.from_medium(PeriodicMedium.constant(), np.array([0.1]),
                                        bandwidth=2)
    assert s_const.transverse_uniform


def test_validate_assumptions_plain():
    rep = validate_assumptions(PeriodicMedium.constant(r0=0.5, delta=0.1),
                               DefectPerturbation.none(), R=0.8)
    assert rep.ok
    assert any(e.name == "absorption_ball" for e in rep.warnings)


def test_validate_assumptions_ball_passes():
    med = PeriodicMedium(
        eps=lambda x1, x2, x3: 1.0 + 1j * ((np.asarray(x1) ** 2 + np.asarray(x2) ** 2
                                            + (np.asarray(x3) - 0.2) ** 2) < 0.01),
        mu=lambda x1, x2, x3: np.ones(np.broadcast(x1, x2, x3).shape, dtype=complex),
        r0=0.5, delta=0.1)
    rep = validate_assumptions(med, R=0.8)
    assert rep.ok and not rep.warnings


def test_validate_assumptions_bound_violation():
    med = PeriodicMedium(
        eps=lambda x1, x2, x3: np.full(np.broadcast(x1, x2, x3).shape, -1.0 + 0j),
        mu=lambda x1, x2, x3: np.ones(np.broadcast(x1, x2, x3).shape, dtype=complex),
        r0=0.5, delta=0.1)
    rep = validate_assumptions(med, R=0.8)
    assert not rep.ok
    with pytest.raises(Exception, match="re_eps_lower_bound"):
        rep.raise_on_error()


def test_grid_file_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    eps = 1.0 + 0.3 * rng.random((6, 6, 5)) + 0.1j * rng.random((6, 6, 5))
    mu = np.ones((6, 6, 5), dtype=complex)
    eps[:, :, -1] = 1.0  # constant at the top sample
    path = tmp_path / "m.bin"
    write_medium_grid(path, eps, mu, R=1.0, r0=0.8)
    nx, ny, nz, R, r0, eps2, mu2 = read_medium_grid(path)
    assert (nx, ny, nz) == (6, 6, 5)
    np.testing.assert_array_equal(eps, eps2)
    med = PeriodicMedium.from_grid_file(path)
    # interpolant hits the stored values at grid points
    x0 = -np.pi + 2 * np.pi * 2 / 6
    np.testing.assert_allclose(med.eps(x0, x0, 0.25), eps[2, 2, 1], rtol=1e-12)


def test_defect_support_flag():
    d = DefectPerturbation.gaussian_bump(0.5j, center=(0.2, -0.1, 0.3), sigma=0.1)
    assert d.q(0.2, -0.1, 0.3) == pytest.approx(0.5j * (1 - np.exp(-0.5 * 3.5 ** 2)))
    assert d.q(3.0, 3.0, 0.3) == 0.0
    assert np.max(np.abs(d.q(np.linspace(-np.pi, np.pi, 30), 0.0, 2.0))) == 0.0
