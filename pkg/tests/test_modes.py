import numpy as np
import pytest

from blochwood.modes import (CutoffModeError, ModeSet, QuasiPeriodicity, WaveParameters,
                             beta, cutoff_constant, mode_lattice, singular_set)


def test_beta_propagating():
    assert beta(2.0, (0.0, 0.0)) == pytest.approx(2.0)


def test_beta_cutoff_exact_zero():
    assert beta(1.0, (1.0, 0.0)) == 0.0


def test_beta_evanescent_branch():
    assert beta(1.0, (1.25, 0.0)) == pytest.approx(0.75j)


def test_beta_branch_continuity_across_cutoff():
    # radial path through |alpha_j| = k: real >= 0 inside, Im >= 0 outside
    k = 1.3
    ts = np.linspace(-1e-3, 1e-3, 41)
    vals = np.array([beta(k, ((k + t), 0.0)) for t in ts])
    assert np.all(vals.imag >= 0.0)
    inside = ts < 0
    assert np.all(vals[inside].real >= 0.0)
    assert np.all(np.abs(np.diff(vals)) < 0.1)  # no branch jump


def test_beta_conjugate_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.uniform(-3, 3, 2)
        assert beta(1.1, a) == pytest.approx(beta(1.1, -a))


def test_wave_parameters_invariant():
    WaveParameters.from_k(2.0, eps_plus=4.0, mu_plus=1.0)
    with pytest.raises(ValueError, match="inconsistent"):
        WaveParameters(k=2.0, omega=3.0, eps_plus=1.0, mu_plus=1.0)
    with pytest.raises(ValueError, match="positive"):
        WaveParameters(k=-1.0, omega=1.0)


def test_quasi_periodicity_domain():
    QuasiPeriodicity((0.5, -0.5))
    with pytest.raises(ValueError):
        QuasiPeriodicity((0.6, 0.0))


def test_mode_set_invariants():
    ms = ModeSet.build(1.7, (0.3, -0.2), 2)
    assert ms.n == 25
    np.testing.assert_array_equal(ms.alpha_j, ms.alpha + ms.modes)
    np.testing.assert_allclose(ms.beta_j ** 2, 1.7 ** 2 - np.sum(ms.alpha_j ** 2, axis=1),
                               rtol=1e-12, atol=1e-12)
    assert ms.index((1, -2)) == np.flatnonzero(
        (ms.modes[:, 0] == 1) & (ms.modes[:, 1] == -2))[0]


def test_singular_set_unit_circle():
    cls = singular_set(1.0, (0.0, 0.0), 2, 1e-8)
    got = {tuple(j) for j in cls.singular}
    assert got == {(1, 0), (-1, 0), (0, 1), (0, -1)}


def test_singular_set_axis_pair():
    cls = singular_set(1.5, (0.5, 0.0), 3, 1e-8)
    got = {tuple(j) for j in cls.singular}
    assert got == {(1, 0), (-2, 0)}


def test_singular_set_empty_matches_enumeration():
    # brute-force oracle over the truncated lattice
    k, alpha, M = 0.9, (0.1, 0.1), 2
    cls = singular_set(k, alpha, M, 1e-8)
    expect = {tuple(j) for j in mode_lattice(M)
              if abs(np.hypot(*(np.add(alpha, j))) - k) < 1e-8}
    assert expect == set()
    assert cls.singular.size == 0


def test_singular_set_degenerate_flag():
    wide = singular_set(1.0, (0.0, 0.0), 1, cutoff_tol=2.0)
    assert wide.degenerate
    narrow = singular_set(1.5, (0.5, 0.0), 3, cutoff_tol=1e-8)
    assert narrow.singular_idx.size == 2 and not narrow.degenerate


def test_cutoff_constant_examples():
    assert cutoff_constant(0.5, (0.0, 0.0), 3) == pytest.approx(0.25 / np.pi, rel=1e-12)
    assert cutoff_constant(0.5, (0.0, 0.0), 0) == pytest.approx(0.25 / np.pi, rel=1e-12)


def test_cutoff_constant_divergence_rate():
    # approaches a cutoff like |k - |alpha_j||^(-1/2) along a radial path
    k = 1.25
    vals = [cutoff_constant(k, (0.25 - t, 0.0), 1) for t in (1e-4, 1e-6, 1e-8)]
    ratios = [vals[i + 1] / vals[i] for i in range(2)]
    assert all(abs(r - 10.0) < 1.0 for r in ratios)  # each step shrinks t by 100


def test_cutoff_constant_error_on_cutoff():
    with pytest.raises(CutoffModeError):
        cutoff_constant(1.0, (0.0, 0.0), 1)
