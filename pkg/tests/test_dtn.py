import numpy as np
import pytest

from blochwood.dtn import (DtnMultipliers, TraceCoefficients, boundary_lower_bound_margin,
                           continuous_multipliers, d_matrix, n_apply_regular, pairing,
                           singular_functional, t_apply)
from blochwood.modes import CutoffModeError, ModeSet, cutoff_constant, singular_set


def _single_mode_trace(k, alpha, value):
    ms = ModeSet.build(k, alpha, 0)
    return ms, TraceCoefficients(ms, np.asarray([value], dtype=complex).reshape(1, 2))


def test_t_apply_propagating():
    ms, phi = _single_mode_trace(2.0, (0.0, 0.0), (1.0, 0.0))
    out = t_apply(DtnMultipliers.build(2.0, ms), phi)
    np.testing.assert_allclose(out, [[2j, 0.0]], atol=1e-15)


def test_t_apply_evanescent():
    ms, phi = _single_mode_trace(1.0, (0.0, 0.0), (0.0, 1.0))
    ms_shift = ModeSet.build(1.0, (1.25, 0.0), 0)
    phi = TraceCoefficients(ms_shift, np.array([[0.0, 1.0]], dtype=complex))
    out = t_apply(DtnMultipliers.build(1.0, ms_shift), phi)
    np.testing.assert_allclose(out, [[0.0, -0.75]], atol=1e-15)


def test_n_apply_regular_evanescent():
    ms = ModeSet.build(1.0, (1.25, 0.0), 0)
    phi = TraceCoefficients(ms, np.array([[1.0, 0.0]], dtype=complex))
    out = n_apply_regular(DtnMultipliers.build(1.0, ms), phi)
    np.testing.assert_allclose(out, [[-25.0 / 12.0, 0.0]], rtol=1e-13)


def test_n_apply_zero_wavevector():
    ms = ModeSet.build(1.0, (0.0, 0.0), 0)
    phi = TraceCoefficients(ms, np.array([[0.3, -0.7]], dtype=complex))
    out = n_apply_regular(DtnMultipliers.build(1.0, ms), phi)
    np.testing.assert_allclose(out, 0.0, atol=1e-15)


def test_n_pairing_real_nonpositive_for_evanescent():
    rng = np.random.default_rng(5)
    ms = ModeSet.build(0.5, (0.45, 0.3), 2)
    mult = DtnMultipliers.build(0.5, ms)
    evan = ms.beta_j.imag > 0
    for _ in range(20):
        vals = rng.standard_normal((ms.n, 2)) + 1j * rng.standard_normal((ms.n, 2))
        vals[~evan] = 0.0
        phi = TraceCoefficients(ms, vals)
        val = pairing(n_apply_regular(mult, phi), phi)
        assert abs(val.imag) < 1e-13 * phi.norm_sq()
        assert val.real <= 1e-13 * phi.norm_sq()


def test_singular_functional_examples():
    assert singular_functional((1.0, 0.0), (1.0, 0.0)) == pytest.approx(1.0)
    assert singular_functional((1.0, 0.0), (0.0, 1.0)) == pytest.approx(0.0)
    assert singular_functional((0.6, 0.8), (1.0, 1.0)) == pytest.approx(1.4)


def test_d_matrix_entries():
    d = d_matrix(1.0, np.array([[1.25, 0.0]]))
    np.testing.assert_allclose(d, [-1.0 / (1.5 * np.pi)], rtol=1e-13)
    d2 = d_matrix(2.0, np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(d2, [-1j / (4.0 * np.pi)], rtol=1e-13)


def test_d_matrix_divergence_and_cutoff_error():
    vals = [abs(d_matrix(1.0, np.array([[1.0 + t, 0.0]]))[0]) for t in (1e-4, 1e-6, 1e-8)]
    assert vals[1] / vals[0] == pytest.approx(10.0, rel=0.05)
    with pytest.raises(CutoffModeError):
        d_matrix(1.0, np.array([[1.0, 0.0]]))


def test_continuous_multipliers():
    t, n = continuous_multipliers(1.0, (0.0, 0.0))
    assert t == pytest.approx(1j)
    np.testing.assert_allclose(n, 0.0, atol=1e-15)
    t, n = continuous_multipliers(1.0, (1.25, 0.0))
    assert t == pytest.approx(-0.75)
    assert n[0, 0] == pytest.approx(-25.0 / 12.0)
    with pytest.raises(CutoffModeError):
        continuous_multipliers(1.0, (1.0, 0.0))


def test_continuous_sign_pattern():
    rng = np.random.default_rng(17)
    for _ in range(200):
        k = rng.uniform(0.5, 2.5)
        xi = rng.uniform(-3, 3, 2)
        if abs(np.hypot(*xi) - k) < 1e-6:
            continue
        t, n = continuous_multipliers(k, xi)
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        tval = t * (v @ np.conj(v))
        nval = np.conj(v) @ (n @ v)
        assert tval.real <= 1e-12 and tval.imag >= -1e-12
        assert nval.real <= 1e-12 and nval.imag <= 1e-12


def test_sign_pattern_random_traces():
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 400:
        k = rng.uniform(0.3, 3.0)
        alpha = rng.uniform(-0.5, 0.5, 2)
        M = int(rng.integers(0, 5))
        if singular_set(k, alpha, M, 1e-8).singular_idx.size:
            continue
        ms = ModeSet.build(k, alpha, M)
        mult = DtnMultipliers.build(k, ms, cutoff_tol=1e-8)
        phi = TraceCoefficients(ms, rng.standard_normal((ms.n, 2))
                                + 1j * rng.standard_normal((ms.n, 2)))
        n2 = phi.norm_sq()
        tv = pairing(t_apply(mult, phi), phi)
        nv = pairing(n_apply_regular(mult, phi), phi)
        assert tv.real <= 1e-12 * n2 and tv.imag >= -1e-12 * n2
        assert nv.real <= 1e-12 * n2 and nv.imag <= 1e-12 * n2
        checked += 1


def test_split_consistency():
    # regular part plus the rank-update contribution reproduces the unsplit
    # multiplier application outside the cutoff band
    rng = np.random.default_rng(9)
    k, alpha, M = 1.5, (0.5 - 1e-3, 0.0), 2
    ms = ModeSet.build(k, alpha, M)
    band_tol = 1e-2  # treat the two near-cutoff modes as singular
    mult = DtnMultipliers.build(k, ms, cutoff_tol=band_tol)
    assert mult.singular_mask.sum() == 2
    phi = TraceCoefficients(ms, rng.standard_normal((ms.n, 2))
                            + 1j * rng.standard_normal((ms.n, 2)))
    full = DtnMultipliers.build(k, ms, cutoff_tol=1e-12)
    lhs = n_apply_regular(full, phi)
    split = n_apply_regular(mult, phi).copy()
    for m in np.nonzero(mult.singular_mask)[0]:
        l = singular_functional(ms.alpha_j[m], phi.values[m])
        split[m] += (-1j / ms.beta_j[m]) * l * ms.alpha_j[m]
    np.testing.assert_allclose(split, lhs, rtol=1e-12, atol=1e-12)


def test_boundary_lower_bound():
    rng = np.random.default_rng(31)
    for _ in range(100):
        k = rng.uniform(0.4, 2.0)
        alpha = rng.uniform(-0.5, 0.5, 2)
        M = int(rng.integers(0, 4))
        if singular_set(k, alpha, M, 1e-10).singular_idx.size:
            continue
        ms = ModeSet.build(k, alpha, M)
        phi = TraceCoefficients(ms, rng.standard_normal((ms.n, 2))
                                + 1j * rng.standard_normal((ms.n, 2)))
        margin = boundary_lower_bound_margin(k, phi, cutoff_constant(k, alpha, M))
        assert margin >= -1e-12 * phi.norm_sq()
