"""Independent brute-force references for tests and acceptance runs.

Every oracle avoids the production code paths it checks: dense inversion
instead of the rank-update solve, direct summation instead of transform
shortcuts, symbolic element integration instead of the vectorised assembly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OracleReport:
    name: str
    inputs_digest: str
    reference: object
    candidate: object
    discrepancy: float
    tol: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs": self.inputs_digest,
            "discrepancy": self.discrepancy,
            "tol": self.tol,
            "passed": bool(self.passed),
            "detail": {k: str(v) for k, v in self.detail.items()},
        }


def _digest(**kwargs) -> str:
    payload = json.dumps({k: str(v) for k, v in sorted(kwargs.items())})
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def dense_smw_oracle(n: int, rank: int, seed: int, tol: float = 1e-10) -> OracleReport:
    """Rank-update inverse identity against dense inversion of S + Z D Z*."""
    rng = np.random.default_rng(seed)
    S = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
         + 2.0 * n * np.eye(n))  # diagonally dominant, comfortably invertible
    Z = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    dvals = (0.5 + rng.uniform(0.0, 1.5, rank)) * np.exp(1j * rng.uniform(0.0, 2 * np.pi, rank))
    D = np.diag(dvals)

    B = S + Z @ D @ Z.conj().T
    try:
        Binv_ref = np.linalg.inv(B)
        Sinv = np.linalg.inv(S)
        core = np.linalg.inv(D) + Z.conj().T @ Sinv @ Z
        core_inv = np.linalg.inv(core)
    except np.linalg.LinAlgError:
        return OracleReport("dense_smw", _digest(n=n, rank=rank, seed=seed),
                            None, None, np.nan, tol, False,
                            {"skipped": "random draw not invertible"})
    Binv_smw = Sinv - Sinv @ Z @ core_inv @ Z.conj().T @ Sinv
    disc = float(np.linalg.norm(Binv_smw - Binv_ref) / np.linalg.norm(Binv_ref))
    return OracleReport("dense_smw", _digest(n=n, rank=rank, seed=seed),
                        "dense inverse", "rank-update formula", disc, tol, disc <= tol)


def sqrt_fit_oracle(t: np.ndarray, u: np.ndarray, tol: float = 1e-6) -> OracleReport:
    """Least-squares fit u(t) = a + b sqrt(t) and its relative residual.

    ``u`` may be scalar samples or arrays (one sample per row); the residual
    is measured jointly over all components.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=complex)
    if t.size < 4:
        raise ValueError("need at least 4 offsets for a stable fit")
    if u.ndim == 1:
        u = u[:, None]
    design = np.stack([np.ones_like(t), np.sqrt(t)], axis=1)
    if np.linalg.matrix_rank(design) < 2:
        return OracleReport("sqrt_fit", _digest(n=t.size), None, None, np.nan, tol, False,
                            {"skipped": "degenerate offsets"})
    coef, _, _, _ = np.linalg.lstsq(design, u.reshape(t.size, -1), rcond=None)
    resid = design @ coef - u.reshape(t.size, -1)
    rel = float(np.linalg.norm(resid) / max(np.linalg.norm(u), 1e-300))
    return OracleReport("sqrt_fit", _digest(n=t.size), None, None, rel, tol, rel <= tol,
                        {"a": coef[0], "b": coef[1]})


# ---------------------------------------------------------------------------
# manufactured solutions
#
# The closed-form family is a ramped outgoing mode
#     E(x) = s(x3) exp(i beta x3) (A_T, A_3) exp(-i alpha . x),
# with A_3 = alpha . A_T / beta, a quintic smoothstep s with s = 0 near the
# conductor and s = 1 near the top.  Above the ramp this is an exact outgoing
# plane wave, so the transparent boundary condition holds exactly and the
# volume load is supported inside the ramp.


def smoothstep(z, z0, z1):
    """Seventh-order smoothstep, C^3, 0 below z0 and 1 above z1."""
    t = np.clip((np.asarray(z, dtype=float) - z0) / (z1 - z0), 0.0, 1.0)
    return t ** 4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t ** 3)


def smoothstep_d1(z, z0, z1):
    t = np.clip((np.asarray(z, dtype=float) - z0) / (z1 - z0), 0.0, 1.0)
    return 140.0 * t ** 3 * (1.0 - t) ** 3 / (z1 - z0)


def smoothstep_d2(z, z0, z1):
    t = np.clip((np.asarray(z, dtype=float) - z0) / (z1 - z0), 0.0, 1.0)
    return 420.0 * t * t * (1.0 - t) ** 2 * (1.0 - 2.0 * t) / (z1 - z0) ** 2


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form field, its volume load and bookkeeping for one test case."""

    name: str
    k: float
    R: float
    alpha: np.ndarray
    ramp: tuple  # (z0, z1), load support
    exact_profile: object   # (mode j, z) -> (3, nz) complex
    load_profile: object    # (alpha_j, z) -> (3, nz) complex
    modes: tuple            # integer pairs carrying the exact field


def _ramped_mode(k, alpha_j, a_t, z0, z1):
    a = np.asarray(alpha_j, dtype=float)
    b = np.sqrt(complex(k * k - a @ a))
    a_t = np.asarray(a_t, dtype=complex)
    proj = complex(a @ a_t)
    a3 = proj / b if proj != 0.0 else 0.0 + 0.0j
    amp = np.array([a_t[0], a_t[1], a3], dtype=complex)

    def g(z):
        return smoothstep(z, z0, z1) * np.exp(1j * b * np.asarray(z))

    def g_d1(z):
        z = np.asarray(z)
        return (smoothstep_d1(z, z0, z1) + 1j * b * smoothstep(z, z0, z1)) * np.exp(1j * b * z)

    def g_d2(z):
        z = np.asarray(z)
        s, s1, s2 = smoothstep(z, z0, z1), smoothstep_d1(z, z0, z1), smoothstep_d2(z, z0, z1)
        return (s2 + 2j * b * s1 - b * b * s) * np.exp(1j * b * z)

    def exact(z):
        return amp[:, None] * g(np.asarray(z))[None, :]

    def load(z):
        z = np.asarray(z)
        gv, g1, g2 = g(z), g_d1(z), g_d2(z)
        a1, a2 = a
        cross = a1 * amp[1] - a2 * amp[0]
        cc1 = -amp[0] * g2 - 1j * a1 * amp[2] * g1 - a2 * cross * gv
        cc2 = -amp[1] * g2 - 1j * a2 * amp[2] * g1 + a1 * cross * gv
        cc3 = -1j * proj * g1 + (a1 * a1 + a2 * a2) * amp[2] * gv
        f = np.stack([cc1, cc2, cc3]) - k * k * amp[:, None] * gv[None, :]
        return f

    return exact, load, b


def manufactured_case(name: str, k: float = 2.0, R: float = 1.0, alpha=(0.0, 0.0),
                      a_t=(1.0, 0.0), ramp_frac=(0.15, 0.55)) -> ManufacturedCase:
    """Closed-form cases: outgoing_mode, two_mode_superposition, gradient_null_test."""
    alpha = np.asarray(alpha, dtype=float)
    z0, z1 = ramp_frac[0] * R, ramp_frac[1] * R

    if name == "outgoing_mode":
        exact0, load0, _ = _ramped_mode(k, alpha, a_t, z0, z1)

        def exact_profile(j, z):
            if tuple(int(x) for x in j) == (0, 0):
                return exact0(z)
            return np.zeros((3, np.asarray(z).size), dtype=complex)

        def load_profile(alpha_j, z):
            if np.allclose(alpha_j, alpha):
                return load0(z)
            return np.zeros((3, np.asarray(z).size), dtype=complex)

        return ManufacturedCase(name, k, R, alpha, (z0, z1), exact_profile, load_profile,
                                ((0, 0),))

    if name == "two_mode_superposition":
        # both polarisations orthogonal to alpha_j: the vertical component
        # vanishes exactly and the piecewise-constant basis costs no order
        j1 = (1, 0)
        exact0, load0, b0 = _ramped_mode(k, alpha, (0.0, 1.0), z0, z1)
        exact1, load1, b1 = _ramped_mode(k, alpha + np.asarray(j1), (0.0, 1.0), z0, z1)
        if b0.imag != 0.0 or b1.imag == 0.0:
            raise ValueError("expected one propagating and one evanescent mode")

        table = {(0, 0): (exact0, load0), j1: (exact1, load1)}

        def exact_profile(j, z):
            key = tuple(int(x) for x in j)
            if key in table:
                return table[key][0](z)
            return np.zeros((3, np.asarray(z).size), dtype=complex)

        def load_profile(alpha_j, z):
            for key, (_, ld) in table.items():
                if np.allclose(alpha_j, alpha + np.asarray(key)):
                    return ld(z)
            return np.zeros((3, np.asarray(z).size), dtype=complex)

        return ManufacturedCase(name, k, R, alpha, (z0, z1), exact_profile, load_profile,
                                ((0, 0), j1))

    if name == "gradient_null_test":
        # E = grad(phi(z) exp(-i alpha_j . x)) with phi(0) = phi(R) = 0; with
        # eps = 1 the load -k^2 E solves the problem exactly and curl E = 0
        j0 = (1, 0)
        aj = alpha + np.asarray(j0, dtype=float)

        def phi(z):
            z = np.asarray(z)
            return np.sin(np.pi * z / R) ** 2

        def phi_d1(z):
            z = np.asarray(z)
            return 2.0 * np.pi / R * np.sin(np.pi * z / R) * np.cos(np.pi * z / R)

        def exact_profile(j, z):
            if tuple(int(x) for x in j) == j0:
                z = np.asarray(z)
                return np.stack([-1j * aj[0] * phi(z), -1j * aj[1] * phi(z), phi_d1(z)])
            return np.zeros((3, np.asarray(z).size), dtype=complex)

        def load_profile(alpha_j, z):
            if np.allclose(alpha_j, aj):
                return -k * k * exact_profile(j0, z)
            return np.zeros((3, np.asarray(z).size), dtype=complex)

        return ManufacturedCase(name, k, R, alpha, (0.0, R), exact_profile, load_profile,
                                (j0,))

    raise ValueError(f"unknown manufactured case {name!r}")


# ---------------------------------------------------------------------------
# symbolic hand assembly of the smallest cell matrix (requires sympy)


def symbolic_cell_matrix(k: float, alpha, eps, mu, R: float):
    """6x6 single-mode, two-element Galerkin matrix by symbolic integration.

    Degrees of freedom: (u1, v1, w1, u2, v2, w2) in the interleaved layout.
    Constant medium; includes both transparent-boundary multipliers.
    """
    import sympy as sy

    z = sy.symbols("z", real=True)
    a1, a2 = [sy.Float(float(x), 30) for x in np.asarray(alpha, dtype=float)]
    h = sy.Rational(1, 2) * sy.Float(float(R), 30)
    z1 = h
    z2 = 2 * h

    phi1 = sy.Piecewise((z / h, z <= z1), ((z2 - z) / h, True))
    phi2 = sy.Piecewise((0, z <= z1), ((z - z1) / h, True))
    psi1 = sy.Piecewise((1, z <= z1), (0, True))
    psi2 = sy.Piecewise((0, z <= z1), (1, True))

    tang = [phi1, phi2]
    vert = [psi1, psi2]

    def curl(u, v, w):
        return (-(sy.diff(v, z) + sy.I * a2 * w),
                sy.diff(u, z) + sy.I * a1 * w,
                -sy.I * (a1 * v - a2 * u))

    basis = []
    for i in range(2):
        basis.append((tang[i], 0, 0))
        basis.append((0, tang[i], 0))
        basis.append((0, 0, vert[i]))
    order = [0, 1, 2, 3, 4, 5]  # (u1, v1, w1, u2, v2, w2) already

    mu_s = sy.Float(complex(mu).real, 30) + sy.I * sy.Float(complex(mu).imag, 30)
    eps_s = sy.Float(complex(eps).real, 30) + sy.I * sy.Float(complex(eps).imag, 30)
    k_s = sy.Float(float(k), 30)

    A = sy.zeros(6, 6)
    for r in range(6):
        tr = basis[order[r]]
        ctr = curl(*tr)
        for c in range(6):
            tc = basis[order[c]]
            ctc = curl(*tc)
            integrand = (sum(cc * sy.conjugate(cr) for cc, cr in zip(ctc, ctr)) / mu_s
                         - k_s ** 2 * eps_s * sum(fc * sy.conjugate(fr) for fc, fr in zip(tc, tr)))
            A[r, c] = sy.integrate(integrand, (z, 0, z2))

    beta = sy.sqrt(k_s ** 2 - a1 ** 2 - a2 ** 2)
    top = {3: 0, 4: 1}  # dof index -> tangential component at the top node
    for r, cr in top.items():
        for c, cc in top.items():
            A[r, c] += -sy.I * beta * (1 if cr == cc else 0)
            avec = [a1, a2]
            A[r, c] += (-sy.I / beta) * avec[cc] * avec[cr]
    return np.array(sy.N(A, 30).tolist(), dtype=complex)
