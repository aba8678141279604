import numpy as np
import pytest
from dataclasses import replace

from blochwood.cell import (Discretization, SingularCoreError, assemble_full,
                            assemble_regular, coercivity_check, divergence_residual,
                            energy_identity_check, load_from_profiles, solve_direct,
                            solve_smw)
from blochwood.media import MediumSamples, PeriodicMedium
from blochwood.modes import ModeSet
from blochwood.oracles import manufactured_case


def constant_medium_samples(disc, eps=1.0, mu=1.0):
    med = PeriodicMedium(
        eps=lambda x, y, z: np.full(np.broadcast(x, y, z).shape, complex(eps)),
        mu=lambda x, y, z: np.full(np.broadcast(x, y, z).shape, complex(mu)),
        r0=0.9 * disc.R, delta=0.05 * disc.R)
    return MediumSamples.from_medium(med, disc.midpoints, bandwidth=max(1, 2 * disc.M))


def absorbing_layer_samples(disc, eps=2.0 + 0.6j, top=0.45):
    med = PeriodicMedium.layered(breaks=[0.0, top * disc.R], eps_values=[eps],
                                 r0=(top + 0.1) * disc.R, delta=0.05 * disc.R)
    return MediumSamples.from_medium(med, disc.midpoints, bandwidth=max(1, 2 * disc.M))


def bump_load(disc, ms, components=(1.0, 0.3, 0.2), center=0.3, width=0.1):
    def prof(alpha_j, z):
        z = np.asarray(z)
        bump = np.exp(-((z - center * disc.R) / (width * disc.R)) ** 2)
        return np.stack([c * bump for c in components])
    return load_from_profiles(disc, ms, prof)


# ---------------------------------------------------------------------------
# assembly


def test_assembly_matches_symbolic_oracle():
    sympy = pytest.importorskip("sympy")  # noqa: F841
    from blochwood.oracles import symbolic_cell_matrix

    k, alpha, eps, mu, R = 1.7, (0.23, -0.11), 1.9 + 0.3j, 1.2, 0.8
    disc = Discretization(M=0, N=2, R=R)
    samples = constant_medium_samples(disc, eps=eps, mu=mu)
    S, _ = assemble_regular(disc, samples, alpha, k, boundary="full")
    ref = symbolic_cell_matrix(k, alpha, eps, mu, R)
    assert np.max(np.abs(S.matrix.toarray() - ref)) < 1e-12 * np.max(np.abs(ref))


def test_constant_medium_blocks_are_mode_diagonal():
    disc = Discretization(M=1, N=4, R=1.0)
    samples = constant_medium_samples(disc)
    forced = replace(samples, transverse_uniform=False)   # sparse route
    S, _ = assemble_regular(disc, forced, (0.2, 0.1), 1.2)
    A = S.matrix.toarray()
    npm = disc.dof_per_mode
    for i in range(disc.n_modes):
        for j in range(disc.n_modes):
            if i != j:
                blk = A[i * npm:(i + 1) * npm, j * npm:(j + 1) * npm]
                assert np.max(np.abs(blk)) < 1e-14


def test_banded_and_sparse_paths_agree():
    disc = Discretization(M=1, N=5, R=0.9)
    samples = constant_medium_samples(disc, eps=1.4 + 0.2j, mu=1.1)
    forced = replace(samples, transverse_uniform=False)
    S1, _ = assemble_regular(disc, samples, (0.2, 0.13), 1.5)
    S2, _ = assemble_regular(disc, forced, (0.2, 0.13), 1.5)
    A1, A2 = S1.matrix.toarray(), S2.matrix.toarray()
    assert np.max(np.abs(A1 - A2)) < 1e-13 * np.max(np.abs(A1))


def test_curl_part_hermitian_psd():
    disc = Discretization(M=1, N=6, R=1.0)
    samples = constant_medium_samples(disc, eps=1.0, mu=1.3)
    # k = 0 and no boundary leaves only the curl/curl quadratic form
    S, _ = assemble_regular(disc, samples, (0.2, -0.3), 0.0, boundary="none",
                            cutoff_tol=1e-9)
    A = S.matrix.toarray()
    assert np.max(np.abs(A - A.conj().T)) < 1e-13
    w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    assert w.min() > -1e-12


# ---------------------------------------------------------------------------
# rank-update solve


def test_smw_matches_dense_inverse_on_assembled_system():
    rng = np.random.default_rng(10)
    k, M = 1.5, 2
    disc = Discretization(M=M, N=8, R=1.0)
    samples = absorbing_layer_samples(disc)
    alpha = np.array([0.5 - 1e-8, 0.0])
    ms = ModeSet.build(k, alpha, M)
    S, U = assemble_regular(disc, samples, alpha, k)
    assert U.rank == 2
    F = rng.standard_normal(disc.ndof) + 1j * rng.standard_normal(disc.ndof)
    sol = solve_smw(S, U, F)
    B = S.matrix.toarray() + U.Z @ np.diag(U.d) @ U.Z.conj().T
    x_ref = np.linalg.solve(B, F)
    x = np.transpose(sol.coeffs, (0, 2, 1)).reshape(-1)
    assert np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref) < 1e-10


def test_smw_random_small_systems_vs_dense():
    rng = np.random.default_rng(77)
    worst = 0.0
    for seed in range(30):
        n, r = 40, 1 + seed % 3
        S = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 2 * n * np.eye(n)
        Z = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
        d = 0.5 + rng.random(r) + 1j * rng.random(r)
        B = S + Z @ np.diag(d) @ Z.conj().T
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x_ref = np.linalg.solve(B, y)
        Sinv_y = np.linalg.solve(S, y)
        Y = np.linalg.solve(S, Z)
        core = np.diag(1.0 / d) + Z.conj().T @ Y
        x = Sinv_y - Y @ np.linalg.solve(core, Z.conj().T @ Sinv_y)
        worst = max(worst, np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref))
    assert worst < 1e-10


def test_no_update_reduces_to_plain_solve():
    disc = Discretization(M=0, N=6, R=1.0)
    samples = constant_medium_samples(disc)
    ms = ModeSet.build(1.2, (0.1, 0.0), 0)
    S, U = assemble_regular(disc, samples, (0.1, 0.0), 1.2)
    assert U.rank == 0
    F = bump_load(disc, ms)
    sol = solve_smw(S, U, F)
    x = np.transpose(sol.coeffs, (0, 2, 1)).reshape(-1)
    np.testing.assert_allclose(x, S.solve(F), rtol=0, atol=0)


def test_direct_agrees_away_from_cutoff():
    k, M = 1.5, 2
    disc = Discretization(M=M, N=8, R=1.0)
    samples = absorbing_layer_samples(disc)
    alpha = np.array([0.5 - 0.1, 0.0])
    ms = ModeSet.build(k, alpha, M)
    F = bump_load(disc, ms)
    S, U = assemble_regular(disc, samples, alpha, k)
    s1 = solve_smw(S, U, F)
    s2 = solve_direct(disc, samples, alpha, k, F)
    rel = np.linalg.norm(s1.coeffs - s2.coeffs) / np.linalg.norm(s2.coeffs)
    assert rel < 1e-9


def test_direct_conditioning_blows_up_near_cutoff():
    k, M = 1.5, 2
    disc = Discretization(M=M, N=8, R=1.5)
    samples = absorbing_layer_samples(disc)
    t = 1e-10
    alpha = np.array([0.5 - t, 0.0])
    A = assemble_full(disc, samples, alpha, k).toarray()
    S, U = assemble_regular(disc, samples, alpha, k)
    Y = S.solve(U.Z)
    core = np.diag(U.d_inv) + U.Z.conj().T @ Y
    cond_smw = max(np.linalg.cond(S.matrix.toarray()), np.linalg.cond(core))
    assert np.linalg.cond(A) / cond_smw >= 1e3


def test_solution_continuous_through_band_and_at_cutoff():
    k, M = 1.5, 2
    disc = Discretization(M=M, N=8, R=1.0)
    samples = absorbing_layer_samples(disc)
    norms = []
    for t in (1e-7, 1e-9, 0.0):
        alpha = np.array([0.5 - t, 0.0])
        ms = ModeSet.build(k, alpha, M)
        S, U = assemble_regular(disc, samples, alpha, k)
        sol = solve_smw(S, U, bump_load(disc, ms))
        assert sol.residual < 1e-10
        norms.append(sol.norm_l2())
        if t == 0.0:
            assert np.all(U.beta_j == 0.0)
            # band-mode trace functionals vanish at cutoff; stable ratios stay finite
            l = sol.trace_functionals()[U.mode_idx]
            assert np.max(np.abs(l)) < 1e-12
            ratios = sol.e3_top_amplitudes()[U.mode_idx]
            assert np.all(np.isfinite(ratios)) and np.max(np.abs(ratios)) > 0
    spread = (max(norms) - min(norms)) / max(norms)
    assert spread < 1e-4


def test_exact_cutoff_real_homogeneous_reports_singular_core():
    # real permittivity violates the absorption assumption; the degenerate
    # update core must surface as an error, not be silently regularised
    disc = Discretization(M=2, N=8, R=1.0)
    samples = constant_medium_samples(disc)
    alpha = np.array([0.5, 0.0])
    S, U = assemble_regular(disc, samples, alpha, 1.5)
    with pytest.raises(SingularCoreError):
        solve_smw(S, U, np.ones(disc.ndof, dtype=complex))


# ---------------------------------------------------------------------------
# manufactured convergence


def _l2_error(case, disc, sol, ms):
    zf = np.linspace(0.0, case.R, 4001)
    err2 = ref2 = 0.0
    for m in range(ms.n):
        exact = case.exact_profile(ms.modes[m], zf)
        nodes = disc.nodes
        for c in range(2):
            vals = np.concatenate([[0.0], sol.coeffs[m, c, :]])
            uh = np.interp(zf, nodes, vals.real) + 1j * np.interp(zf, nodes, vals.imag)
            err2 += np.trapezoid(np.abs(uh - exact[c]) ** 2, zf)
            ref2 += np.trapezoid(np.abs(exact[c]) ** 2, zf)
        ev = np.clip((zf / disc.h).astype(int), 0, disc.N - 1)
        err2 += np.trapezoid(np.abs(sol.coeffs[m, 2, ev] - exact[2]) ** 2, zf)
        ref2 += np.trapezoid(np.abs(exact[2]) ** 2, zf)
    return np.sqrt(err2 / ref2)


def _solve_case(case, M, N):
    disc = Discretization(M=M, N=N, R=case.R)
    samples = constant_medium_samples(disc)
    ms = ModeSet.build(case.k, case.alpha, M)
    S, U = assemble_regular(disc, samples, case.alpha, case.k)
    F = load_from_profiles(disc, ms, case.load_profile)
    return disc, ms, solve_smw(S, U, F), F, S, U


def test_outgoing_mode_second_order():
    case = manufactured_case("outgoing_mode", k=2.0, R=1.0, ramp_frac=(0.08, 0.9))
    errs = []
    for N in (16, 32, 64):
        disc, ms, sol, *_ = _solve_case(case, 0, N)
        errs.append(_l2_error(case, disc, sol, ms))
    rate = np.log2(errs[0] / errs[-1]) / 2
    assert 1.8 <= rate <= 2.2


def test_two_mode_superposition_converges():
    case = manufactured_case("two_mode_superposition", k=1.2, R=1.0, alpha=(0.3, 0.0),
                             ramp_frac=(0.1, 0.8))
    errs = []
    for N in (16, 32):
        disc, ms, sol, *_ = _solve_case(case, 1, N)
        errs.append(_l2_error(case, disc, sol, ms))
    assert errs[1] < 0.35 * errs[0]


def test_gradient_null_case_first_order_and_curl_free():
    case = manufactured_case("gradient_null_test", k=1.3, R=1.0)
    errs = []
    for N in (16, 32):
        disc, ms, sol, *_ = _solve_case(case, 1, N)
        errs.append(_l2_error(case, disc, sol, ms))
        assert sol.curl_norm_sq() < 1e-3 * sol.norm_l2() ** 2
    assert errs[1] < 0.6 * errs[0]


# ---------------------------------------------------------------------------
# diagnostics


def test_divergence_residual_zero_case():
    case = manufactured_case("outgoing_mode", k=1.4, R=1.0)
    disc, ms, sol, *_ = _solve_case(case, 0, 12)
    sol.coeffs[:] = 0.0
    samples = constant_medium_samples(disc)
    assert divergence_residual(sol, samples) == 0.0


def test_divergence_residual_decays():
    case = manufactured_case("outgoing_mode", k=1.4, R=1.0, alpha=(0.3, 0.0),
                             a_t=(1.0, 0.0), ramp_frac=(0.1, 0.8))

    def div_term(alpha_j, z):
        return case.load_profile(alpha_j, z) / case.k ** 2

    resids = []
    for N in (16, 32):
        disc, ms, sol, *_ = _solve_case(case, 0, N)
        samples = constant_medium_samples(disc)
        resids.append(divergence_residual(sol, samples, load_div_term=div_term))
    assert resids[0] / resids[1] >= 1.8


def test_divergence_residual_gradient_pair():
    case = manufactured_case("gradient_null_test", k=1.3, R=1.0)

    def div_term(alpha_j, z):
        return case.load_profile(alpha_j, z) / case.k ** 2

    resids = []
    for N in (12, 24):
        disc, ms, sol, *_ = _solve_case(case, 1, N)
        samples = constant_medium_samples(disc)
        resids.append(divergence_residual(sol, samples, load_div_term=div_term))
    assert resids[1] < 0.7 * resids[0]


def test_coercivity_with_shift():
    disc = Discretization(M=1, N=8, R=1.0)
    samples = constant_medium_samples(disc)
    rep = coercivity_check(disc, samples, (0.2, 0.1), 1.2, rho=4.0)
    assert rep["coercive"] and rep["c"] > 0.0


def test_coercivity_fails_without_shift_at_large_k():
    disc = Discretization(M=1, N=8, R=1.0)
    samples = constant_medium_samples(disc)
    rep = coercivity_check(disc, samples, (0.2, 0.1), 8.0, rho=0.0)
    assert not rep["coercive"]  # report only, no exception


def test_energy_identity_zero_solution():
    disc = Discretization(M=0, N=8, R=1.0)
    samples = constant_medium_samples(disc)
    S, U = assemble_regular(disc, samples, (0.1, 0.0), 1.2)
    sol = solve_smw(S, U, np.zeros(disc.ndof, dtype=complex))
    rep = energy_identity_check(S, U, sol, np.zeros(disc.ndof, dtype=complex))
    assert rep["im_a"] == 0.0 and rep["identity_gap"] == 0.0 and rep["modal_flux"] == 0.0


def test_energy_identity_flux_balance():
    k = 0.5
    disc = Discretization(M=1, N=16, R=1.0)
    med = PeriodicMedium.layered(breaks=[0.0, 0.4], eps_values=[1.8], r0=0.5, delta=0.1)
    samples = MediumSamples.from_medium(med, disc.midpoints, bandwidth=2)
    ms = ModeSet.build(k, (0.1, 0.0), 1)
    S, U = assemble_regular(disc, samples, (0.1, 0.0), k)
    F = bump_load(disc, ms)
    sol = solve_smw(S, U, F)
    rep = energy_identity_check(S, U, sol, F)
    assert rep["identity_gap"] < 1e-12 * abs(rep["f_u"])
    assert rep["flux_gap"] < 1e-10 * abs(rep["f_u"])


def test_reciprocity_via_adjoint_solve():
    rng = np.random.default_rng(20)
    disc = Discretization(M=1, N=6, R=1.0)
    med = PeriodicMedium(
        eps=lambda x, y, z: 1.0 + 0.4 * np.cos(np.asarray(x)) * np.exp(
            -((np.asarray(z) - 0.3) / 0.15) ** 2) + 0j,
        mu=lambda x, y, z: np.ones(np.broadcast(x, y, z).shape, dtype=complex),
        r0=0.85, delta=0.05)
    samples = MediumSamples.from_medium(med, disc.midpoints, bandwidth=2)
    S, U = assemble_regular(disc, samples, (0.17, -0.22), 1.1)
    assert U.rank == 0
    f = rng.standard_normal(disc.ndof) + 1j * rng.standard_normal(disc.ndof)
    g = rng.standard_normal(disc.ndof) + 1j * rng.standard_normal(disc.ndof)
    u = S.solve(f)
    w = S.solve_adjoint(g)
    lhs = np.vdot(g, u)
    rhs = np.vdot(w, f)
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_load_projection_convergence_order():
    # two-point Gauss load projection keeps the overall second-order accuracy
    case = manufactured_case("outgoing_mode", k=1.5, R=1.0, ramp_frac=(0.08, 0.9))
    disc, ms, sol, F, S, U = _solve_case(case, 0, 48)
    err = _l2_error(case, disc, sol, ms)
    assert err < 1e-3
