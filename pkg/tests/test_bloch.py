import numpy as np
import pytest

from blochwood.bloch import (AlphaQuadrature, CellIndexedField, bloch_forward, bloch_inverse,
                             build_alpha_quadrature, cutoff_arcs, graded_interval_rule,
                             parseval_mismatch)


def test_forward_single_cell_independent_of_alpha():
    vals = np.arange(6.0).reshape(1, 2, 3) + 0j
    f = CellIndexedField(np.array([[0, 0]]), vals)
    for alpha in [(0.0, 0.0), (0.3, -0.1), (0.5, 0.5)]:
        np.testing.assert_array_equal(bloch_forward(f, alpha), vals[0])


def test_forward_two_cells():
    f = CellIndexedField(np.array([[0, 0], [1, 0]]), np.array([[2.0 + 0j], [3.0 + 0j]]))
    alpha = (0.21, 0.0)
    expect = 2.0 + 3.0 * np.exp(2j * np.pi * 0.21)
    assert bloch_forward(f, alpha)[0] == pytest.approx(expect)


def test_forward_matches_direct_summation():
    rng = np.random.default_rng(12)
    cells = np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)])
    vals = rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4))
    f = CellIndexedField(cells, vals)
    for _ in range(10):
        alpha = rng.uniform(-0.5, 0.5, 2)
        direct = sum(v * np.exp(2j * np.pi * (alpha @ c)) for c, v in zip(cells, vals))
        np.testing.assert_allclose(bloch_forward(f, alpha), direct, rtol=1e-14, atol=1e-14)


def test_forward_quasi_periodicity():
    # shifting the physical field by one period multiplies the transform by a phase
    rng = np.random.default_rng(13)
    cells = np.array([[0, 0], [1, 0], [0, 1]])
    vals = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    f = CellIndexedField(cells, vals)
    alpha = np.array([0.17, -0.4])
    lhs = bloch_forward(f.shifted((-1, 0)), alpha)
    rhs = np.exp(-2j * np.pi * alpha[0]) * bloch_forward(f, alpha)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-14)


def test_inverse_constant_family():
    quad = build_alpha_quadrature(k=0.9, M=0, n_base=6, levels=2, gl_order=4)
    g = np.array([1.0 + 2j, -0.5])
    samples = np.tile(g, (quad.n, 1))
    np.testing.assert_allclose(bloch_inverse(samples, quad, (0, 0)), g, rtol=1e-12)


def test_inverse_orthogonality():
    quad = build_alpha_quadrature(k=0.9, M=0, n_base=8, levels=0, gl_order=6)
    g = np.array([0.7 - 0.2j])
    samples = np.exp(2j * np.pi * quad.nodes[:, 0])[:, None] * g[None, :]
    rec = bloch_inverse(samples, quad, (1, 0))
    np.testing.assert_allclose(rec, g, rtol=1e-10)
    zero = bloch_inverse(samples, quad, (0, 0))
    np.testing.assert_allclose(zero, 0.0, atol=1e-10)


def test_roundtrip_small():
    rng = np.random.default_rng(14)
    quad = build_alpha_quadrature(k=1.3, M=1, n_base=10, levels=2, gl_order=5)
    cells = np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)])
    vals = rng.standard_normal((9, 3)) + 1j * rng.standard_normal((9, 3))
    f = CellIndexedField(cells, vals)
    samples = np.stack([bloch_forward(f, a) for a in quad.nodes])
    for c, v in zip(cells, vals):
        np.testing.assert_allclose(bloch_inverse(samples, quad, c), v, atol=1e-8)


def test_parseval():
    rng = np.random.default_rng(15)
    quad = build_alpha_quadrature(k=1.3, M=1, n_base=10, levels=2, gl_order=5)
    f = CellIndexedField(np.array([[0, 0], [1, -1]]),
                         rng.standard_normal((2, 7)) + 1j * rng.standard_normal((2, 7)))
    assert parseval_mismatch(f, quad) < 1e-8


def test_graded_rule_sqrt_model():
    x, w = graded_interval_rule(0.0, 1.0, [0.0], n_base=4, levels=60, gl_order=5)
    assert abs(np.sum(w * np.sqrt(x)) - 2.0 / 3.0) < 1e-6
    # weights partition the interval
    assert np.sum(w) == pytest.approx(1.0, abs=1e-13)


def test_quadrature_weights_sum_to_one():
    for (k, M) in [(0.9, 0), (1.3, 1), (0.45, 2)]:
        quad = build_alpha_quadrature(k=k, M=M, n_base=8, levels=3, gl_order=4)
        assert np.sum(quad.weights) == pytest.approx(1.0, abs=1e-12)


def test_no_arc_plain_rule():
    quad = build_alpha_quadrature(k=0.9, M=0, n_base=8, levels=4, gl_order=4)
    assert quad.arcs.size == 0
    assert quad.panels.shape[0] == 64  # no refinement anywhere


def test_arcs_detected():
    arcs = cutoff_arcs(0.45, 2)
    assert {tuple(a) for a in arcs} == {(0, 0)}
    arcs = cutoff_arcs(1.3, 1)
    assert (0, 0) not in {tuple(a) for a in arcs}
    assert (1, 0) in {tuple(a) for a in arcs}


def test_nodes_avoid_cutoff_band():
    tol = 1e-6 * 1.3
    quad = build_alpha_quadrature(k=1.3, M=1, n_base=8, levels=3, gl_order=4, cutoff_tol=tol)
    for j in quad.arcs:
        r = np.hypot(quad.nodes[:, 0] + j[0], quad.nodes[:, 1] + j[1])
        assert np.all(np.abs(r - 1.3) >= tol * (1 - 1e-9))


def test_sqrt_integrand_refinement_rate():
    # model integrand with the solution's kink structure across the arc
    k = 0.35

    def integrand(nodes):
        r2 = nodes[:, 0] ** 2 + nodes[:, 1] ** 2
        return 1.0 + np.sqrt(np.abs(k * k - r2))

    ref_quad = build_alpha_quadrature(k=k, M=0, n_base=24, levels=9, gl_order=8)
    ref = np.sum(ref_quad.weights * integrand(ref_quad.nodes))
    errs = []
    for n_base, levels in ((6, 3), (12, 5)):
        q = build_alpha_quadrature(k=k, M=0, n_base=n_base, levels=levels, gl_order=4)
        errs.append(abs(np.sum(q.weights * integrand(q.nodes)) - ref))
    # at least second-order gain per doubling of the base resolution
    assert errs[0] / errs[1] >= 4.0
