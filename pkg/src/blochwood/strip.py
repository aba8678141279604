"""Non-periodic strip problems: transform, solve the alpha family, synthesise.

The volume current lives on finitely many lattice cells below the top of the
inhomogeneity.  Its Bloch transform is a finite phase sum, each quadrature
node gets one quasi-periodic cell solve, and the physical field on cell j is
recovered by the inverse-transform quadrature.  A local permittivity defect q
couples the family only through the central-cell restriction U of the field:

    (Id - k^2 Mq) U = U_inc,      Mq V = integral_I [ L_alpha(q V) ]|_cell0,

which is solved matrix free (GMRES) on the samples where q is supported; the
family is then reconstructed from the corrected volume current f + k^2 q U.

All alpha sums run in a fixed node order, so results are independent of the
worker-thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .bloch import AlphaQuadrature
from .cell import (GAUSS2, CellSolution, Discretization, RankUpdate, RegularOperator,
                   assemble_regular, energy_identity_check, solve_smw)
from .media import DefectPerturbation, MediumSamples, PeriodicMedium, validate_assumptions
from .modes import ModeSet


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class SourceSpec:
    """Volume current with compact cell support, or a closed per-alpha form.

    ``current(x1, x2, x3)`` takes global coordinates and returns the three
    components (any broadcastable shape); ``cells`` lists the lattice cells on
    which it is nonzero.  Alternatively ``modal(alpha_j, z)`` gives the mode
    profile of the Bloch-transformed current directly.
    """

    cells: np.ndarray | None = None
    current: Callable | None = None
    modal: Callable | None = None
    label: str = "source"

    def __post_init__(self):
        if self.modal is None and (self.cells is None or self.current is None):
            raise ValueError("need either (cells, current) or a modal closed form")
        if self.cells is not None:
            object.__setattr__(self, "cells",
                               np.asarray(self.cells, dtype=int).reshape(-1, 2))

    def validate_support(self, medium: PeriodicMedium, n_grid: int = 12) -> float:
        """Largest |f| sample at or above r0 - delta (must vanish there)."""
        if self.current is None:
            return 0.0
        zs = np.linspace(medium.r0 - medium.delta, medium.r0 + medium.delta, 5)
        x = -np.pi + 2 * np.pi * np.arange(n_grid) / n_grid
        worst = 0.0
        for c in self.cells:
            X1, X2, X3 = np.meshgrid(x + 2 * np.pi * c[0], x + 2 * np.pi * c[1], zs,
                                     indexing="ij")
            f = np.asarray(self.current(X1, X2, X3), dtype=complex)
            worst = max(worst, float(np.max(np.abs(f))))
        if worst > 1e-12:
            raise ValueError(
                f"source not supported below r0 - delta: |f| reaches {worst:.3e} above")
        return worst


def gaussian_cell_source(amplitude=(1.0, 0.0, 0.0), center=(0.0, 0.0, 0.25),
                         sigma: float = 0.35, cells=((0, 0),)) -> SourceSpec:
    """Smooth compact current bump for demos and end-to-end tests."""
    amp = np.asarray(amplitude, dtype=complex)
    c = np.asarray(center, dtype=float)
    rad = 3.0 * sigma
    edge = np.exp(-0.5 * 9.0)

    def current(x1, x2, x3):
        dx = np.asarray(x1, dtype=float) - c[0]
        dy = np.asarray(x2, dtype=float) - c[1]
        dz = np.asarray(x3, dtype=float) - c[2]
        r2 = dx * dx + dy * dy + dz * dz
        g = np.where(r2 < rad * rad, np.maximum(np.exp(-0.5 * r2 / sigma ** 2) - edge, 0.0), 0.0)
        return np.stack([amp[0] * g, amp[1] * g, amp[2] * g])

    return SourceSpec(cells=np.asarray(cells, dtype=int), current=current, label="gaussian")


# ---------------------------------------------------------------------------
# reference-cell sampling helpers


class CellGrid:
    """Uniform transverse grid on the reference cell with modal phase tables."""

    def __init__(self, n_t: int):
        self.n_t = n_t
        self.x = -np.pi + 2.0 * np.pi * np.arange(n_t) / n_t
        self.X1, self.X2 = np.meshgrid(self.x, self.x, indexing="ij")

    def phases(self, mode_set: ModeSet) -> np.ndarray:
        """exp(-i alpha_j . x) on the grid, shape (n_modes, n_t, n_t)."""
        arg = (mode_set.alpha_j[:, 0, None, None] * self.X1[None]
               + mode_set.alpha_j[:, 1, None, None] * self.X2[None])
        return np.exp(-1j * arg)

    def mode_coefficients(self, values: np.ndarray, mode_set: ModeSet,
                          active: np.ndarray | None = None) -> np.ndarray:
        """Coefficients (1/(2 pi)^2) integral g exp(+i alpha_j . x) by FFT.

        ``values`` has shape (..., n_t, n_t); returns (..., n_modes).  With
        ``active`` (boolean over the flattened leading axes) only those slices
        are transformed; the rest are zero.
        """
        n = self.n_t
        twist = np.exp(1j * (mode_set.alpha[0] * self.X1 + mode_set.alpha[1] * self.X2))
        j = mode_set.modes
        corner = np.exp(-1j * np.pi * (j[:, 0] + j[:, 1]))
        lead = values.shape[:-2]
        out = np.zeros(lead + (mode_set.n,), dtype=complex)
        flat = values.reshape(-1, n, n)
        out_flat = out.reshape(-1, mode_set.n)
        idx = np.arange(flat.shape[0]) if active is None else np.nonzero(active)[0]
        if idx.size:
            spec = np.fft.ifft2(flat[idx] * twist[None], axes=(-2, -1))
            out_flat[idx] = spec[:, j[:, 0] % n, j[:, 1] % n] * corner[None, :]
        return out


def _tangential_interp_weights(disc: Discretization, z: np.ndarray):
    """Element index and hat weights of arbitrary depths for the P1 profiles."""
    e = np.clip((np.asarray(z) / disc.h).astype(int), 0, disc.N - 1)
    t = np.asarray(z) / disc.h - e
    return e, 1.0 - t, t


def eval_profiles(sol: CellSolution, z_tang: np.ndarray, z_vert: np.ndarray):
    """Per-mode profile values: tangential at z_tang (P1), vertical at z_vert (P0)."""
    disc = sol.disc
    u_full = np.concatenate([np.zeros((sol.mode_set.n, 2, 1)), sol.coeffs[:, 0:2, :]], axis=2)
    e, wl, wr = _tangential_interp_weights(disc, z_tang)
    tang = u_full[:, :, e] * wl[None, None, :] + u_full[:, :, e + 1] * wr[None, None, :]
    ev = np.clip((np.asarray(z_vert) / disc.h).astype(int), 0, disc.N - 1)
    vert = sol.coeffs[:, 2, ev]
    return tang, vert


def _phase_contract(profiles: np.ndarray, phases: np.ndarray, grid_shape) -> np.ndarray:
    """Sum profiles (n_modes, ...) against phases (n_modes, nt, nt) via one gemm."""
    nm = profiles.shape[0]
    tail = profiles.shape[1:]
    flat = np.tensordot(profiles.reshape(nm, -1), phases.reshape(nm, -1), axes=(0, 0))
    return flat.reshape(tail + grid_shape)


def eval_on_grid(sol: CellSolution, grid: CellGrid, z_tang: np.ndarray,
                 z_vert: np.ndarray, phases: np.ndarray | None = None):
    """Physical components on grid x depth samples: (2, nt, nt, nzt), (nt, nt, nzv)."""
    if phases is None:
        phases = grid.phases(sol.mode_set)
    tang, vert = eval_profiles(sol, z_tang, z_vert)
    gs = (grid.n_t, grid.n_t)
    et = np.moveaxis(_phase_contract(tang, phases, gs), (0, 1), (0, 3))
    e3 = np.moveaxis(_phase_contract(vert, phases, gs), 0, 2)
    return et, e3


# ---------------------------------------------------------------------------
# family runner


@dataclass
class FamilyRunner:
    """Shared immutable data for one alpha family of cell solves."""

    disc: Discretization
    samples: MediumSamples
    k: float
    quad: AlphaQuadrature
    cutoff_tol: float | None = None
    threads: int = 1

    def solve_at(self, alpha, load_fn) -> tuple[CellSolution, np.ndarray,
                                                RegularOperator, RankUpdate]:
        S, U = assemble_regular(self.disc, self.samples, alpha, self.k, self.cutoff_tol)
        F = load_fn(alpha, S.mode_set)
        sol = solve_smw(S, U, F, diagnostics=False)
        return sol, F, S, U

    def run(self, load_fn, collect):
        """Solve at every node; ``collect(i, alpha, w, sol, F)`` in node order."""
        nodes, weights = self.quad.nodes, self.quad.weights

        def task(i):
            sol, F, _, _ = self.solve_at(nodes[i], load_fn)
            return sol, F

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                for i, (sol, F) in enumerate(ex.map(task, range(len(nodes)))):
                    collect(i, nodes[i], weights[i], sol, F)
        else:
            for i in range(len(nodes)):
                sol, F = task(i)
                collect(i, nodes[i], weights[i], sol, F)


def _source_loads(source: SourceSpec, disc: Discretization, grid: CellGrid):
    """Precompute cell sample tensors; returns load_fn(alpha, mode_set) -> dofs."""
    from .cell import load_from_profiles

    if source.modal is not None:
        def load_fn(alpha, mode_set):
            return load_from_profiles(disc, mode_set, source.modal)
        return load_fn

    gz, gw = disc.gauss_depths()
    per_cell = []
    for c in source.cells:
        X1 = grid.X1[:, :, None] + 2.0 * np.pi * c[0]
        X2 = grid.X2[:, :, None] + 2.0 * np.pi * c[1]
        X3 = np.broadcast_to(gz[None, None, :], (grid.n_t, grid.n_t, gz.size))
        f = np.asarray(source.current(X1, X2, X3), dtype=complex)
        per_cell.append(f)  # (3, nt, nt, 2N)

    active = np.zeros((gz.size, 3), dtype=bool)
    for f in per_cell:
        active |= (np.abs(f).max(axis=(1, 2)) > 0.0).T
    active_flat = active.reshape(-1)

    def load_fn(alpha, mode_set):
        acc = np.zeros_like(per_cell[0])
        for c, f in zip(source.cells, per_cell):
            acc = acc + f * np.exp(2j * np.pi * float(c @ np.asarray(alpha)))
        coeffs = grid.mode_coefficients(np.moveaxis(acc, -1, 0), mode_set,
                                        active=active_flat)
        # (2N, 3, n_modes) -> per-mode (3, 2N) profiles
        prof = np.transpose(coeffs, (2, 1, 0))
        return _load_from_mode_samples(disc, prof, gw)

    return load_fn


def _load_from_mode_samples(disc: Discretization, prof: np.ndarray, gw: np.ndarray) -> np.ndarray:
    """Galerkin load from per-mode Gauss-point samples prof (n_modes, 3, 2N)."""
    gx, _ = GAUSS2
    hat_l = 0.5 * (1.0 - gx)
    hat_r = 0.5 * (1.0 + gx)
    n_modes = prof.shape[0]
    N = disc.N
    p = prof.reshape(n_modes, 3, N, 2)
    w = gw.reshape(N, 2)
    F = np.zeros((n_modes, N, 3), dtype=complex)
    for comp in (0, 1):
        left = np.sum(p[:, comp] * w[None] * hat_l[None, None, :], axis=2)
        right = np.sum(p[:, comp] * w[None] * hat_r[None, None, :], axis=2)
        F[:, :, comp] += right
        F[:, :-1, comp] += left[:, 1:]  # node e-1 of element e, bottom node clamped
    F[:, :, 2] = np.sum(p[:, 2] * w[None], axis=2)
    # interleaved layout (u_i, v_i, w_i): F currently (mode, depth slot, comp)
    out = np.transpose(F, (0, 1, 2)).reshape(-1)
    return out


# ---------------------------------------------------------------------------
# strip solutions


@dataclass
class GridField:
    """Synthesised physical field on one cell: node-depth E_T, element-depth E3."""

    et: np.ndarray  # (2, nt, nt, N+1)
    e3: np.ndarray  # (nt, nt, N)


@dataclass
class StripSolution:
    disc: Discretization
    quad: AlphaQuadrature
    k: float
    cells: tuple
    fields: dict                 # cell -> GridField
    norms: dict
    family: list | None = None   # CellSolution per node when kept
    diagnostics: dict = field(default_factory=dict)

    def field_at(self, cell) -> GridField:
        return self.fields[tuple(int(x) for x in np.asarray(cell).reshape(2))]


def _norm_accumulators():
    return {"x_sq": 0.0, "weighted_sq": 0.0, "load_sq": 0.0}


def _accumulate_norms(acc, w, sol: CellSolution, F):
    ms = sol.mode_set
    l2 = sol.norm_l2() ** 2
    curl = sol.curl_norm_sq()
    tr = sol.trace
    s2 = np.sum(ms.alpha_j ** 2, axis=1)
    trace_part = float(np.sum(np.sqrt(1.0 + s2) * np.sum(np.abs(tr) ** 2, axis=1)))
    ratios = sol.e3_top_amplitudes()
    absb = np.abs(ms.beta_j)
    sing_part = float(np.sum(absb * np.abs(ratios) ** 2))  # |l_j|^2 / |beta_j|
    acc["x_sq"] += w * (l2 + curl + trace_part)
    acc["weighted_sq"] += w * (l2 + curl + trace_part + sing_part)
    acc["load_sq"] += w * float(np.sum(np.abs(F) ** 2))


def solve_periodic(source: SourceSpec, quad: AlphaQuadrature, disc: Discretization,
                   medium: PeriodicMedium, cells=((0, 0),), n_t: int = 32,
                   cutoff_tol: float | None = None, threads: int = 1,
                   keep_family: bool = False,
                   samples: MediumSamples | None = None) -> StripSolution:
    """Solve the unperturbed strip problem and synthesise the requested cells."""
    if samples is None:
        samples = MediumSamples.from_medium(medium, disc.midpoints,
                                            bandwidth=max(1, 2 * disc.M))
    source.validate_support(medium)
    grid = CellGrid(n_t)
    load_fn = _source_loads(source, disc, grid)
    runner = FamilyRunner(disc, samples, quad.k, quad,
                          cutoff_tol=cutoff_tol, threads=threads)
    cells = tuple(tuple(int(x) for x in c) for c in np.asarray(cells, dtype=int).reshape(-1, 2))

    z_nodes = disc.nodes
    z_mids = disc.midpoints
    fields = {c: GridField(et=np.zeros((2, n_t, n_t, disc.N + 1), dtype=complex),
                           e3=np.zeros((n_t, n_t, disc.N), dtype=complex)) for c in cells}
    norms = _norm_accumulators()
    family = [] if keep_family else None
    node_info = []

    def collect(i, alpha, w, sol, F):
        phases = grid.phases(sol.mode_set)
        et, e3 = eval_on_grid(sol, grid, z_nodes, z_mids, phases)
        for c in cells:
            cw = w * np.exp(-2j * np.pi * (alpha[0] * c[0] + alpha[1] * c[1]))
            fields[c].et += cw * et
            fields[c].e3 += cw * e3
        _accumulate_norms(norms, w, sol, F)
        if family is not None:
            family.append(sol)
        node_info.append({"alpha": (float(alpha[0]), float(alpha[1])),
                          "n_singular": int(sol.singular_idx.size)})

    runner.run(load_fn, collect)

    load_l2 = np.sqrt(norms["load_sq"])
    out_norms = {
        "family_x": float(np.sqrt(norms["x_sq"])),
        "weighted": float(np.sqrt(norms["weighted_sq"])),
        "load_l2": float(load_l2),
        "bound_ratio": float(np.sqrt(norms["weighted_sq"]) / max(load_l2, 1e-300)),
    }
    return StripSolution(disc=disc, quad=quad, k=quad.k, cells=cells, fields=fields,
                         norms=out_norms, family=family,
                         diagnostics={"nodes": node_info, "n_t": n_t})


# ---------------------------------------------------------------------------
# defect coupling


class DefectSystem:
    """Matrix-free central-cell coupling operator and its sample bookkeeping."""

    def __init__(self, defect: DefectPerturbation, disc: Discretization, grid: CellGrid,
                 runner: FamilyRunner):
        self.disc, self.grid, self.runner = disc, grid, runner
        gz, gw = disc.gauss_depths()
        self.gz, self.gw = gz, gw
        X1 = grid.X1[:, :, None]
        X2 = grid.X2[:, :, None]
        X3 = np.broadcast_to(gz[None, None, :], (grid.n_t, grid.n_t, gz.size))
        self.qg = np.asarray(defect.q(X1, X2, X3), dtype=complex)  # (nt, nt, 2N)
        self.mask = np.abs(self.qg) > 0.0
        self.n_mask = int(np.count_nonzero(self.mask))

    def pack(self, field3: np.ndarray) -> np.ndarray:
        return np.concatenate([field3[c][self.mask] for c in range(3)])

    def unpack(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((3,) + self.mask.shape, dtype=complex)
        m = self.n_mask
        for c in range(3):
            out[c][self.mask] = x[c * m:(c + 1) * m]
        return out

    def product_load_fn(self, v_masked: np.ndarray):
        """Load builder for the volume current k^2 q V (without the k^2)."""
        qv = np.moveaxis(self.unpack(v_masked) * self.qg[None], -1, 1)  # (3, 2N, nt, nt)
        qv = np.moveaxis(qv, 0, 1)                                      # (2N, 3, nt, nt)
        active = (np.abs(qv).max(axis=(-2, -1)) > 0.0).reshape(-1)

        def load_fn(alpha, mode_set):
            coeffs = self.grid.mode_coefficients(qv, mode_set, active=active)
            prof = np.transpose(coeffs, (2, 1, 0))
            return _load_from_mode_samples(self.disc, prof, self.gw)

        return load_fn

    def field_pass(self, load_fn) -> np.ndarray:
        """One family pass returning the central-cell field at the q samples."""
        acc = np.zeros(3 * self.n_mask, dtype=complex)
        gs = (self.grid.n_t, self.grid.n_t)

        def collect(i, alpha, w, sol, F):
            nonlocal acc
            tang, vert = eval_profiles(sol, self.gz, self.gz)
            phases = self.grid.phases(sol.mode_set)
            et = np.moveaxis(_phase_contract(tang, phases, gs), (0, 1), (0, 3))
            e3 = np.moveaxis(_phase_contract(vert, phases, gs), 0, 2)
            field3 = np.concatenate([et, e3[None]], axis=0)
            acc = acc + w * self.pack(field3)

        self.runner.run(load_fn, collect)
        return acc

    def coupling_matvec(self, v_masked: np.ndarray) -> np.ndarray:
        return self.field_pass(self.product_load_fn(v_masked))


def solve_perturbed(source: SourceSpec, defect: DefectPerturbation | None,
                    quad: AlphaQuadrature, disc: Discretization, medium: PeriodicMedium,
                    cells=((0, 0),), n_t: int = 32, cutoff_tol: float | None = None,
                    threads: int = 1, keep_family: bool = False,
                    gmres_tol: float = 1e-8, gmres_maxiter: int = 200,
                    samples: MediumSamples | None = None,
                    born_only: bool = False) -> StripSolution:
    """Solve the locally perturbed strip problem.

    With no defect (or one of empty support) this is exactly ``solve_periodic``,
    same code path, bitwise identical output on the same quadrature.
    """
    if samples is None:
        samples = MediumSamples.from_medium(medium, disc.midpoints,
                                            bandwidth=max(1, 2 * disc.M))
    if defect is None:
        return solve_periodic(source, quad, disc, medium, cells=cells, n_t=n_t,
                              cutoff_tol=cutoff_tol, threads=threads,
                              keep_family=keep_family, samples=samples)

    report = validate_assumptions(medium, defect, R=disc.R)
    report.raise_on_error()

    grid = CellGrid(n_t)
    runner = FamilyRunner(disc, samples, quad.k, quad, cutoff_tol=cutoff_tol,
                          threads=threads)
    system = DefectSystem(defect, disc, grid, runner)
    if system.n_mask == 0:
        return solve_periodic(source, quad, disc, medium, cells=cells, n_t=n_t,
                              cutoff_tol=cutoff_tol, threads=threads,
                              keep_family=keep_family, samples=samples)

    source.validate_support(medium)
    source_load_fn = _source_loads(source, disc, grid)
    k = quad.k
    u_inc = system.field_pass(source_load_fn)

    if born_only:
        # first-order expansion: reconstruct from the incident central-cell field
        u_masked = u_inc
        iters = 0
    else:
        n = u_inc.size
        count = {"iters": 0}

        def op(v):
            count["iters"] += 1
            return v - k * k * system.coupling_matvec(v)

        A = spla.LinearOperator((n, n), matvec=op, dtype=complex)
        u_masked, info = spla.gmres(A, u_inc, rtol=gmres_tol, atol=0.0,
                                    maxiter=gmres_maxiter, restart=60)
        if info != 0:
            raise ConvergenceError(
                f"defect solve did not converge (info={info}, passes={count['iters']})")
        iters = count["iters"]

    # reconstruct the family with the corrected volume current f + k^2 q U
    qu_load_fn = system.product_load_fn(u_masked)

    def total_load_fn(alpha, mode_set):
        return source_load_fn(alpha, mode_set) + k * k * qu_load_fn(alpha, mode_set)

    cells = tuple(tuple(int(x) for x in c) for c in np.asarray(cells, dtype=int).reshape(-1, 2))
    fields = {c: GridField(et=np.zeros((2, n_t, n_t, disc.N + 1), dtype=complex),
                           e3=np.zeros((n_t, n_t, disc.N), dtype=complex)) for c in cells}
    norms = _norm_accumulators()
    family = [] if keep_family else None
    energy = {"im_f_u": 0.0, "flux": 0.0, "absorbed": 0.0}

    z_nodes, z_mids = disc.nodes, disc.midpoints

    def collect(i, alpha, w, sol, F):
        phases = grid.phases(sol.mode_set)
        et, e3 = eval_on_grid(sol, grid, z_nodes, z_mids, phases)
        for c in cells:
            cw = w * np.exp(-2j * np.pi * (alpha[0] * c[0] + alpha[1] * c[1]))
            fields[c].et += cw * et
            fields[c].e3 += cw * e3
        _accumulate_norms(norms, w, sol, F)
        x = np.transpose(sol.coeffs, (0, 2, 1)).reshape(-1)
        energy["im_f_u"] += w * float(np.vdot(x, F).imag)
        ms = sol.mode_set
        prop = (ms.beta_j.real > 0.0) & (ms.beta_j.imag == 0.0)
        l = sol.trace_functionals()
        tr2 = np.sum(np.abs(sol.trace) ** 2, axis=1)
        if np.any(prop):
            energy["flux"] += w * float(np.sum(ms.beta_j[prop].real * tr2[prop]
                                               + np.abs(l[prop]) ** 2 / ms.beta_j[prop].real))
        if family is not None:
            family.append(sol)

    runner.run(total_load_fn, collect)

    load_l2 = np.sqrt(norms["load_sq"])
    out_norms = {
        "family_x": float(np.sqrt(norms["x_sq"])),
        "weighted": float(np.sqrt(norms["weighted_sq"])),
        "load_l2": float(load_l2),
        "bound_ratio": float(np.sqrt(norms["weighted_sq"]) / max(load_l2, 1e-300)),
    }
    return StripSolution(disc=disc, quad=quad, k=k, cells=cells, fields=fields,
                         norms=out_norms, family=family,
                         diagnostics={"gmres_iterations": iters, "n_t": n_t,
                                      "defect_samples": system.n_mask,
                                      "energy": energy})


# ---------------------------------------------------------------------------
# field extension and weighted norm


def extend_field(obj, points, quad: AlphaQuadrature | None = None) -> np.ndarray:
    """Radiated field above the layer at points (m, 3) with x3 > R.

    For a single cell solution the quasi-periodic extension is returned; for a
    strip solution (family kept) the alpha quadrature assembles the
    non-periodic field.  Vertical amplitudes of cutoff-band modes come from
    the stable core-solve ratios, never from a division by beta.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if isinstance(obj, StripSolution):
        if obj.family is None:
            raise ValueError("strip solution was synthesised without keep_family")
        out = np.zeros((pts.shape[0], 3), dtype=complex)
        for w, sol in zip(obj.quad.weights, obj.family):
            out += w * _extend_cell(sol, pts)
        return out
    return _extend_cell(obj, pts)


def _extend_cell(sol: CellSolution, pts: np.ndarray) -> np.ndarray:
    disc, ms = sol.disc, sol.mode_set
    if np.any(pts[:, 2] < disc.R - 1e-12):
        raise ValueError("extension is only valid above the top boundary")
    tr = sol.trace
    e3 = sol.e3_top_amplitudes()
    phase = np.exp(-1j * (pts[:, None, 0] * ms.alpha_j[None, :, 0]
                          + pts[:, None, 1] * ms.alpha_j[None, :, 1]))
    vert = np.exp(1j * ms.beta_j[None, :] * (pts[:, 2, None] - disc.R))
    mix = phase * vert
    out = np.empty((pts.shape[0], 3), dtype=complex)
    out[:, 0] = mix @ tr[:, 0]
    out[:, 1] = mix @ tr[:, 1]
    out[:, 2] = mix @ e3
    return out


def weighted_norm(strip: StripSolution) -> float:
    """Quadrature norm with the cutoff-weighted singular trace sum."""
    return strip.norms["weighted"]


def periodic_energy_report(S: RegularOperator, U: RankUpdate, sol: CellSolution,
                           rhs: np.ndarray) -> dict:
    return energy_identity_check(S, U, sol, rhs)
