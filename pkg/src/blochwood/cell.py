"""Quasi-periodic cell problems on a Fourier x depth tensor space.

Discretisation
--------------
The field on the reference cell (-pi, pi)^2 x (0, R) is expanded as

    E(x, x3) = sum_j (u_j(x3), v_j(x3), w_j(x3)) exp(-i alpha_j . x),

with |j|_inf <= M.  Tangential profiles u_j, v_j are continuous piecewise
linear on the uniform depth grid 0 = z_0 < ... < z_N = R with u_j(0) = 0
(perfect conductor); the vertical profile w_j is piecewise constant.  With
a = alpha_j the curl acts per mode as

    curl E = ( -(v' + i a2 w),  u' + i a1 w,  -i (a1 v - a2 u) ),

so the tensor basis is curl conforming.  All matrices are normalised by the
transverse cell measure (2 pi)^2.

The Galerkin operator splits as A = S + Z D Z* where S carries the volume
terms, the dtn multipliers i beta_j and the divergence-coupled multipliers
-i a a^T / beta_j of all modes outside the cutoff band, and the rank update
collects the band modes: D = diag(-i / (2 pi beta_j)) and the columns of Z
are the scaled trace functionals sqrt(2 pi) a on the top-node tangential
unknowns.  The update is inverted by

    B^-1 = S^-1 - S^-1 Z (D^-1 + Z* S^-1 Z)^-1 Z* S^-1,

whose core stays well conditioned through cutoff because D^-1 = 2 pi i beta_j
tends to zero there; at beta = 0 the limit form with D^-1 = 0 is used.

Degrees of freedom are interleaved by depth within each mode,
(u_1, v_1, w_1, ..., u_N, v_N, w_N), giving bandwidth 5 per mode block; modes
are concatenated in lexicographic order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .media import MediumSamples
from .modes import CutoffModeError, ModeSet, default_cutoff_tol, singular_set

_BW = 5  # in-mode band width of the interleaved layout

GAUSS2 = (np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0]))


class SolverError(RuntimeError):
    pass


class SingularCoreError(SolverError):
    """The |J| x |J| rank-update core is numerically singular."""


@dataclass(frozen=True)
class Discretization:
    """Alpha-independent tensor discretisation data."""

    M: int
    N: int
    R: float

    @property
    def h(self) -> float:
        return self.R / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.N + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.nodes[:-1] + 0.5 * self.h

    @property
    def n_modes(self) -> int:
        return (2 * self.M + 1) ** 2

    @property
    def dof_per_mode(self) -> int:
        return 3 * self.N

    @property
    def ndof(self) -> int:
        return self.n_modes * self.dof_per_mode

    def dof(self, mode_idx: int, comp: int, i: int) -> int:
        """Global index of component comp (0:u, 1:v, 2:w) at depth slot i=1..N."""
        return mode_idx * self.dof_per_mode + 3 * (i - 1) + comp

    def top_tangential(self, mode_idx: int) -> tuple[int, int]:
        return self.dof(mode_idx, 0, self.N), self.dof(mode_idx, 1, self.N)

    def gauss_depths(self) -> tuple[np.ndarray, np.ndarray]:
        """Two-point Gauss depths and weights per element, flattened."""
        gx, gw = GAUSS2
        z = self.nodes
        pts = (z[:-1, None] + 0.5 * self.h * (gx[None, :] + 1.0)).ravel()
        wts = np.tile(0.5 * self.h * gw, self.N)
        return pts, wts


# ---------------------------------------------------------------------------
# per-mode block assembly in banded storage
#
# The five in-mode depth couplings, with per-element coefficient arrays c_e:
#   K(c)  node-node stiffness        (c_e/h) [[1,-1],[-1,1]]
#   Mm(c) node-node mass             (c_e h/6) [[2,1],[1,2]]
#   G(c)  elem row, node col         -c_e at node e-1, +c_e at node e
#   P(c)  elem diag                  c_e h
# Node 0 carries no dof (conductor), element/node slots run 1..N.


def _band_index(r: int, c: int) -> int:
    return _BW + r - c  # row in the (2*_BW+1, n) banded array


class _BandBuilder:
    """Accumulates one mode block (3N x 3N) in diagonal-ordered banded form.

    All patterns are regular in the element index, so every contribution is a
    single vectorised diagonal update: entry (r, c) lives at band[_BW+r-c, c].
    """

    def __init__(self, N: int):
        self.N = N
        self.n = 3 * N
        self.band = np.zeros((2 * _BW + 1, self.n), dtype=complex)
        self._e = np.arange(1, N + 1)

    def add_node_node(self, comp_r: int, comp_c: int, elem_vals: np.ndarray, local: np.ndarray):
        # local is the 2x2 element matrix for the (node e-1, node e) pair
        ev = np.asarray(elem_vals)
        off = comp_r - comp_c
        for a in (0, 1):
            for b in (0, 1):
                lo = 1 if (a == 0 or b == 0) else 0  # drop the clamped node 0
                cols = 3 * (self._e[lo:] - 2 + b) + comp_c
                self.band[_BW + 3 * (a - b) + off, cols] += ev[lo:] * local[a, b]

    def add_elem_node(self, comp_r: int, comp_c: int, elem_vals: np.ndarray, sign_pair=(-1.0, 1.0)):
        ev = np.asarray(elem_vals)
        off = comp_r - comp_c
        cols = 3 * (self._e - 1) + comp_c
        self.band[_BW + off, cols] += ev * sign_pair[1]          # node e column
        cols = 3 * (self._e[1:] - 2) + comp_c
        self.band[_BW + 3 + off, cols] += ev[1:] * sign_pair[0]  # node e-1 column

    def add_node_elem(self, comp_r: int, comp_c: int, elem_vals: np.ndarray, sign_pair=(-1.0, 1.0)):
        ev = np.asarray(elem_vals)
        off = comp_r - comp_c
        cols = 3 * (self._e - 1) + comp_c
        self.band[_BW + off, cols] += ev * sign_pair[1]           # node e row
        self.band[_BW - 3 + off, cols[1:]] += ev[1:] * sign_pair[0]  # node e-1 row

    def add_elem_diag(self, comp: int, elem_vals: np.ndarray):
        cols = 3 * (self._e - 1) + comp
        self.band[_BW, cols] += np.asarray(elem_vals)


_K_LOCAL = np.array([[1.0, -1.0], [-1.0, 1.0]])
_M_LOCAL = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


class _BlockBandBuilder:
    """All mode-diagonal blocks at once: band tensor (2*_BW+1, n_modes, 3N)."""

    def __init__(self, n_modes: int, N: int):
        self.N = N
        self.band = np.zeros((2 * _BW + 1, n_modes, 3 * N), dtype=complex)
        self._e = np.arange(1, N + 1)

    def add_node_node(self, cr: int, cc: int, vals2d: np.ndarray, local: np.ndarray):
        off = cr - cc
        for a in (0, 1):
            for b in (0, 1):
                lo = 1 if (a == 0 or b == 0) else 0
                cols = 3 * (self._e[lo:] - 2 + b) + cc
                self.band[_BW + 3 * (a - b) + off][:, cols] += vals2d[:, lo:] * local[a, b]

    def add_elem_node(self, cr: int, cc: int, vals2d: np.ndarray):
        off = cr - cc
        cols = 3 * (self._e - 1) + cc
        self.band[_BW + off][:, cols] += vals2d
        cols = 3 * (self._e[1:] - 2) + cc
        self.band[_BW + 3 + off][:, cols] -= vals2d[:, 1:]

    def add_node_elem(self, cr: int, cc: int, vals2d: np.ndarray):
        off = cr - cc
        cols = 3 * (self._e - 1) + cc
        self.band[_BW + off][:, cols] += vals2d
        self.band[_BW - 3 + off][:, cols[1:]] -= vals2d[:, 1:]

    def add_elem_diag(self, comp: int, vals2d: np.ndarray):
        cols = 3 * (self._e - 1) + comp
        self.band[_BW][:, cols] += vals2d

    def flat(self) -> np.ndarray:
        n_modes = self.band.shape[1]
        return self.band.reshape(2 * _BW + 1, n_modes * 3 * self.N)


def _all_mode_blocks_banded(disc: Discretization, m_e: np.ndarray, e_e: np.ndarray,
                            alpha_j: np.ndarray, k: float,
                            eps_scale: complex = 1.0) -> np.ndarray:
    """Concatenated banded diagonal blocks for a transverse-uniform medium."""
    nm = alpha_j.shape[0]
    h = disc.h
    bb = _BlockBandBuilder(nm, disc.N)
    ke = np.broadcast_to(m_e / h, (nm, disc.N))
    me = m_e * h
    ee = np.broadcast_to(-(k * k) * eps_scale * e_e * h, (nm, disc.N))
    a1 = alpha_j[:, 0:1]
    a2 = alpha_j[:, 1:2]

    bb.add_node_node(0, 0, ke, _K_LOCAL)
    bb.add_node_node(1, 1, ke, _K_LOCAL)
    bb.add_node_node(0, 0, a2 * a2 * me[None, :] + ee, _M_LOCAL)
    bb.add_node_node(1, 1, a1 * a1 * me[None, :] + ee, _M_LOCAL)
    bb.add_node_node(0, 1, -a1 * a2 * me[None, :], _M_LOCAL)
    bb.add_node_node(1, 0, -a2 * a1 * me[None, :], _M_LOCAL)
    bb.add_elem_node(2, 0, -1j * a1 * m_e[None, :])
    bb.add_elem_node(2, 1, -1j * a2 * m_e[None, :])
    bb.add_node_elem(0, 2, 1j * a1 * m_e[None, :])
    bb.add_node_elem(1, 2, 1j * a2 * m_e[None, :])
    bb.add_elem_diag(2, (a1 * a1 + a2 * a2) * me[None, :] + ee)
    return bb.flat()


def _mode_block_banded(disc: Discretization, m_e: np.ndarray, e_e: np.ndarray,
                       a, b, k: float, eps_scale: complex = 1.0) -> np.ndarray:
    """Banded block for test wavevector b, trial wavevector a.

    m_e, e_e are the per-element profiles of 1/mu and eps for the relevant
    transverse coefficient; the eps term enters as -k^2 * eps_scale * eps.
    """
    h = disc.h
    B = _BandBuilder(disc.N)
    ke = m_e / h
    me = m_e * h
    ee = -(k * k) * eps_scale * e_e * h

    a1, a2 = a
    b1, b2 = b

    # u'-p' and v'-q' stiffness
    B.add_node_node(0, 0, ke, _K_LOCAL)
    B.add_node_node(1, 1, ke, _K_LOCAL)
    # transverse algebraic curl couplings on node-node mass
    B.add_node_node(0, 0, me * (a2 * b2) + ee, _M_LOCAL)
    B.add_node_node(1, 1, me * (a1 * b1) + ee, _M_LOCAL)
    B.add_node_node(0, 1, me * (-a1 * b2), _M_LOCAL)
    B.add_node_node(1, 0, me * (-a2 * b1), _M_LOCAL)
    # w coupling to tangential depth derivatives
    B.add_elem_node(2, 0, -1j * b1 * m_e)
    B.add_elem_node(2, 1, -1j * b2 * m_e)
    B.add_node_elem(0, 2, 1j * a1 * m_e)
    B.add_node_elem(1, 2, 1j * a2 * m_e)
    # w-w block
    B.add_elem_diag(2, (a1 * b1 + a2 * b2) * me + ee)
    return B.band


def _band_to_coo(band: np.ndarray, row0: int, col0: int):
    n = band.shape[1]
    rows, cols, vals = [], [], []
    for d in range(-_BW, _BW + 1):  # d = row - col
        diag = band[_BW + d, :]
        cs = np.arange(max(0, -d), min(n, n - d))
        rs = cs + d
        keep = diag[cs] != 0.0
        rows.append(rs[keep] + row0)
        cols.append(cs[keep] + col0)
        vals.append(diag[cs][keep])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


# ---------------------------------------------------------------------------
# assembled operators


_ZGBTRF = lapack.get_lapack_funcs("gbtrf", dtype=complex)
_ZGBTRS = lapack.get_lapack_funcs("gbtrs", dtype=complex)


class BandedLU:
    """LAPACK banded LU with reusable factors (complex general band)."""

    def __init__(self, band: np.ndarray, kl: int = _BW, ku: int = _BW):
        n = band.shape[1]
        self.n, self.kl, self.ku = n, kl, ku
        ab = np.zeros((2 * kl + ku + 1, n), dtype=complex, order="F")
        ab[kl:, :] = band
        lu, piv, info = _ZGBTRF(ab, kl, ku, overwrite_ab=True)
        if info != 0:
            raise SolverError(f"banded LU failed, info={info}")
        self.lu, self.piv = lu, piv
        self._gbtrs = _ZGBTRS

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=complex)
        squeeze = b.ndim == 1
        if squeeze:
            b = b[:, None]
        x, info = self._gbtrs(self.lu, self.kl, self.ku, b, self.piv)
        if info != 0:
            raise SolverError(f"banded solve failed, info={info}")
        return x[:, 0] if squeeze else x


@dataclass
class RegularOperator:
    """Galerkin matrix S of the cutoff-free part, with a factorisation."""

    disc: Discretization
    mode_set: ModeSet
    k: float
    singular_idx: np.ndarray
    band: np.ndarray | None          # concatenated banded blocks (mode-diagonal media)
    _matrix: sp.spmatrix | None = field(default=None, repr=False)
    _lu: object = field(default=None, repr=False)

    @property
    def mode_diagonal(self) -> bool:
        return self.band is not None

    @property
    def matrix(self) -> sp.spmatrix:
        """Sparse copy for matvecs and adjoint solves, built on demand."""
        if self._matrix is None:
            self._matrix = _banded_to_sparse(self.band, self.disc.dof_per_mode,
                                             self.mode_set.n)
        return self._matrix

    def factorize(self):
        if self._lu is None:
            if self.mode_diagonal:
                self._lu = BandedLU(self.band)
            else:
                self._lu = spla.splu(self.matrix.tocsc())
        return self._lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        lu = self.factorize()
        if self.mode_diagonal:
            return lu.solve(rhs)
        if rhs.ndim == 1:
            return lu.solve(rhs.astype(complex))
        return np.stack([lu.solve(rhs[:, c].astype(complex)) for c in range(rhs.shape[1])], axis=1)

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        """Solve S* x = rhs (conjugate-transpose system)."""
        ah = self.matrix.conj().T.tocsc()
        lu = spla.splu(ah)
        if rhs.ndim == 1:
            return lu.solve(rhs.astype(complex))
        return np.stack([lu.solve(rhs[:, c].astype(complex)) for c in range(rhs.shape[1])], axis=1)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def condition_estimate(self) -> float:
        a = self.matrix
        if a.shape[0] <= 4000:
            return float(np.linalg.cond(a.toarray()))
        lu = self.factorize()
        inv = spla.LinearOperator(a.shape, matvec=lambda b: lu.solve(b.astype(complex)),
                                  dtype=complex)
        return float(spla.onenormest(a) * spla.onenormest(inv))


@dataclass(frozen=True)
class RankUpdate:
    """Cutoff-band update S -> S + Z D Z* with D = diag(-i / (2 pi beta_j))."""

    disc: Discretization
    mode_idx: np.ndarray      # indices of band modes
    alpha_j: np.ndarray       # (s, 2)
    beta_j: np.ndarray        # (s,)
    Z: np.ndarray             # (ndof, s) dense, two nonzeros per column

    @property
    def rank(self) -> int:
        return self.mode_idx.size

    @property
    def d_inv(self) -> np.ndarray:
        # finite through cutoff, -> 0 like beta
        return 2j * np.pi * self.beta_j

    @property
    def d(self) -> np.ndarray:
        if np.any(self.beta_j == 0.0):
            raise CutoffModeError("rank-update diagonal undefined exactly at cutoff")
        return -1j / (2.0 * np.pi * self.beta_j)

    @classmethod
    def build(cls, disc: Discretization, mode_set: ModeSet, singular_idx: np.ndarray) -> "RankUpdate":
        s = int(np.asarray(singular_idx).size)
        Z = np.zeros((disc.ndof, s), dtype=complex)
        scale = np.sqrt(2.0 * np.pi)
        for c, m in enumerate(np.asarray(singular_idx, dtype=int)):
            pu, pv = disc.top_tangential(int(m))
            Z[pu, c] = scale * mode_set.alpha_j[m, 0]
            Z[pv, c] = scale * mode_set.alpha_j[m, 1]
        return cls(disc=disc, mode_idx=np.asarray(singular_idx, dtype=int),
                   alpha_j=mode_set.alpha_j[singular_idx].reshape(s, 2),
                   beta_j=mode_set.beta_j[singular_idx].reshape(s), Z=Z)


@dataclass
class CellSolution:
    """Discrete alpha-quasi-periodic solution with boundary diagnostics."""

    disc: Discretization
    mode_set: ModeSet
    coeffs: np.ndarray          # (n_modes, 3, N): u, v nodal; w per element
    residual: float
    singular_idx: np.ndarray
    core_amplitudes: np.ndarray  # (D^-1 + Z* S^-1 Z)^-1 Z* S^-1 f, per band mode
    diagnostics: dict = field(default_factory=dict)

    @property
    def trace(self) -> np.ndarray:
        """Top tangential coefficients (n_modes, 2), equal to the top-node dofs."""
        return self.coeffs[:, 0:2, -1]

    def trace_functionals(self) -> np.ndarray:
        """l_j = alpha_j . trace_j for every mode."""
        return np.sum(self.mode_set.alpha_j * self.trace, axis=1)

    def e3_top_amplitudes(self) -> np.ndarray:
        """Vertical trace amplitudes l_j / beta_j, cutoff-stable on band modes.

        On band modes the ratio is taken from the rank-update core solve,
        l_j / beta_j = i sqrt(2 pi) c_j, which stays finite at cutoff.
        """
        out = np.zeros(self.mode_set.n, dtype=complex)
        l = self.trace_functionals()
        band = np.zeros(self.mode_set.n, dtype=bool)
        band[self.singular_idx] = True
        with np.errstate(divide="ignore", invalid="ignore"):
            out[~band] = l[~band] / self.mode_set.beta_j[~band]
        if self.singular_idx.size:
            out[self.singular_idx] = 1j * np.sqrt(2.0 * np.pi) * self.core_amplitudes
        return out

    def norm_l2(self) -> float:
        """Cell-measure-normalised L2 norm of the discrete field."""
        h = self.disc.h
        total = 0.0
        for c in range(2):
            prof = np.concatenate([np.zeros((self.mode_set.n, 1)), self.coeffs[:, c, :]], axis=1)
            left, right = prof[:, :-1], prof[:, 1:]
            total += float(np.sum(h / 3.0 * (np.abs(left) ** 2 + np.real(left * np.conj(right))
                                             + np.abs(right) ** 2)))
        total += float(np.sum(h * np.abs(self.coeffs[:, 2, :]) ** 2))
        return np.sqrt(total)

    def curl_norm_sq(self) -> float:
        ms, h = self.mode_set, self.disc.h
        a1 = ms.alpha_j[:, 0][:, None]
        a2 = ms.alpha_j[:, 1][:, None]
        u = np.concatenate([np.zeros((ms.n, 1)), self.coeffs[:, 0, :]], axis=1)
        v = np.concatenate([np.zeros((ms.n, 1)), self.coeffs[:, 1, :]], axis=1)
        w = self.coeffs[:, 2, :]
        du = np.diff(u, axis=1) / h
        dv = np.diff(v, axis=1) / h
        c1 = -(dv + 1j * a2 * w)
        c2 = du + 1j * a1 * w
        total = float(np.sum(h * (np.abs(c1) ** 2 + np.abs(c2) ** 2)))
        c3l = -1j * (a1 * v[:, :-1] - a2 * u[:, :-1])
        c3r = -1j * (a1 * v[:, 1:] - a2 * u[:, 1:])
        total += float(np.sum(h / 3.0 * (np.abs(c3l) ** 2 + np.real(c3l * np.conj(c3r))
                                         + np.abs(c3r) ** 2)))
        return total


# ---------------------------------------------------------------------------
# assembly


def assemble_regular(disc: Discretization, medium: MediumSamples, alpha, k: float,
                     cutoff_tol: float | None = None,
                     boundary: str = "regular", rho: float = 0.0,
                     trace_weight: float = 0.0) -> tuple[RegularOperator, RankUpdate]:
    """Assemble S (and the band update) for one quasi-periodicity.

    boundary: 'regular' keeps the divergence-coupled multiplier off the band
    modes (production), 'full' includes every mode (direct path; raises at
    exact cutoff), 'none' drops both boundary operators.  ``rho`` replaces the
    -k^2 eps volume term by +rho (shifted form); ``trace_weight`` adds
    C (1+|alpha_j|^2)^(-1/2) on the top tangential pairs.
    """
    if cutoff_tol is None:
        cutoff_tol = default_cutoff_tol(k)
    ms = ModeSet.build(k, alpha, disc.M)
    cls_info = singular_set(k, alpha, disc.M, cutoff_tol)
    sing_idx = cls_info.singular_idx

    if boundary == "full" and np.any(ms.beta_j[sing_idx] == 0.0):
        raise CutoffModeError("full boundary assembly hits an exact cutoff mode")
    if medium.bandwidth < 2 * disc.M:
        raise ValueError(
            f"medium bandwidth {medium.bandwidth} below convolution requirement {2 * disc.M}")

    eps_scale = 1.0
    if rho != 0.0:
        eps_scale = 0.0  # rho-shift replaces the eps volume term

    mode_diag = medium.transverse_uniform
    n_modes, npm = ms.n, disc.dof_per_mode
    B = medium.bandwidth

    bands = None
    rows_all, cols_all, vals_all = [], [], []
    m0 = medium.invmu_hat[B, B, :]
    e0 = medium.eps_hat[B, B, :]
    if mode_diag:
        bands = _all_mode_blocks_banded(disc, m0, e0 if rho == 0.0 else np.zeros_like(e0),
                                        ms.alpha_j, k, eps_scale=eps_scale)
    else:
        for mt in range(n_modes):
            b_vec = ms.alpha_j[mt]
            for jt in range(n_modes):
                d = ms.modes[jt] - ms.modes[mt]
                if abs(d[0]) > B or abs(d[1]) > B:
                    continue
                m_e = medium.invmu_hat[d[0] + B, d[1] + B, :]
                e_e = medium.eps_hat[d[0] + B, d[1] + B, :]
                if np.all(m_e == 0.0) and np.all(e_e == 0.0):
                    continue
                blk = _mode_block_banded(disc, m_e, e_e if rho == 0.0 else np.zeros_like(e_e),
                                         ms.alpha_j[jt], b_vec, k, eps_scale=eps_scale)
                r, c, v = _band_to_coo(blk, mt * npm, jt * npm)
                rows_all.append(r)
                cols_all.append(c)
                vals_all.append(v)

    # rho shift: +rho mass on all components
    extra_diag = {}

    def _add_entry(r, c, v):
        if mode_diag:
            mt = r // npm
            if c // npm != mt:
                raise AssertionError("mode-diagonal path got an off-block entry")
            bands[_band_index(r % npm, c % npm), c] += v
        else:
            extra_diag.setdefault((r, c), 0.0)
            extra_diag[(r, c)] += v

    if rho != 0.0:
        h = disc.h
        ones = np.ones(disc.N)
        if mode_diag:
            bb = _BlockBandBuilder(n_modes, disc.N)
            mass = np.broadcast_to(rho * h * ones, (n_modes, disc.N))
            bb.add_node_node(0, 0, mass, _M_LOCAL)
            bb.add_node_node(1, 1, mass, _M_LOCAL)
            bb.add_elem_diag(2, mass)
            bands += bb.flat()
        else:
            for mt in range(n_modes):
                blk = _BandBuilder(disc.N)
                blk.add_node_node(0, 0, rho * h * ones, _M_LOCAL)
                blk.add_node_node(1, 1, rho * h * ones, _M_LOCAL)
                blk.add_elem_diag(2, rho * h * ones)
                r, c, v = _band_to_coo(blk.band, mt * npm, mt * npm)
                rows_all.append(r)
                cols_all.append(c)
                vals_all.append(v)

    # boundary multipliers on the top tangential dofs
    band_mask = np.zeros(n_modes, dtype=bool)
    band_mask[sing_idx] = True
    for mt in range(n_modes):
        pu, pv = disc.top_tangential(mt)
        bj = ms.beta_j[mt]
        a = ms.alpha_j[mt]
        if boundary in ("regular", "full"):
            _add_entry(pu, pu, -1j * bj)
            _add_entry(pv, pv, -1j * bj)
            apply_n = (boundary == "full") or not band_mask[mt]
            if apply_n and bj != 0.0:
                s = -1j / bj
                _add_entry(pu, pu, s * a[0] * a[0])
                _add_entry(pu, pv, s * a[0] * a[1])
                _add_entry(pv, pu, s * a[1] * a[0])
                _add_entry(pv, pv, s * a[1] * a[1])
        if trace_weight != 0.0:
            wgt = trace_weight / np.sqrt(1.0 + float(a @ a))
            _add_entry(pu, pu, wgt)
            _add_entry(pv, pv, wgt)

    matrix = None
    if not mode_diag:
        if extra_diag:
            r = np.array([rc[0] for rc in extra_diag], dtype=int)
            c = np.array([rc[1] for rc in extra_diag], dtype=int)
            v = np.array(list(extra_diag.values()), dtype=complex)
            rows_all.append(r)
            cols_all.append(c)
            vals_all.append(v)
        matrix = sp.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(disc.ndof, disc.ndof)).tocsr()

    op = RegularOperator(disc=disc, mode_set=ms, k=k, singular_idx=sing_idx,
                         band=bands if mode_diag else None, _matrix=matrix)
    upd = RankUpdate.build(disc, ms, sing_idx)
    return op, upd


def _banded_to_sparse(bands: np.ndarray, npm: int, n_modes: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for mt in range(n_modes):
        r, c, v = _band_to_coo(bands[:, mt * npm:(mt + 1) * npm], mt * npm, mt * npm)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    n = npm * n_modes
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def assemble_full(disc: Discretization, medium: MediumSamples, alpha, k: float,
                  cutoff_tol: float | None = None) -> sp.csr_matrix:
    """Unsplit operator A = S + Z D Z* as one matrix (direct path)."""
    op, upd = assemble_regular(disc, medium, alpha, k, cutoff_tol, boundary="regular")
    A = op.matrix.tocsr(copy=True)
    if upd.rank:
        zs = sp.csc_matrix(upd.Z)
        A = (A + zs @ sp.diags(upd.d) @ zs.conj().T).tocsr()
    return A


# ---------------------------------------------------------------------------
# solves


def _pack_solution(disc: Discretization, ms: ModeSet, x: np.ndarray) -> np.ndarray:
    c = x.reshape(ms.n, disc.N, 3)
    return np.transpose(c, (0, 2, 1)).copy()


def solve_smw(S: RegularOperator, U: RankUpdate, rhs: np.ndarray,
              diagnostics: bool = True) -> CellSolution:
    """Rank-update solve of (S + Z D Z*) u = rhs, stable through cutoff."""
    x0 = S.solve(rhs)
    if U.rank == 0:
        x = x0
        core_amp = np.zeros(0, dtype=complex)
        zc = np.zeros_like(rhs)
    else:
        Y = S.solve(U.Z)
        core = np.diag(U.d_inv) + U.Z.conj().T @ Y
        # scale-aware singularity check: at a degenerate cutoff the core
        # cancels to roundoff while staying formally well conditioned
        col_scale = (np.abs(U.d_inv)
                     + np.linalg.norm(U.Z, axis=0) * np.linalg.norm(Y, axis=0))
        smin = np.linalg.svd(core, compute_uv=False)[-1]
        if not np.isfinite(smin) or smin < 1e-12 * max(float(np.max(col_scale)), 1e-300):
            raise SingularCoreError(
                f"rank-update core numerically singular (smin={smin:.3e}, "
                f"scale={np.max(col_scale):.3e}); absorption assumption violated?")
        zx = U.Z.conj().T @ x0
        try:
            core_amp = sla.solve(core, zx)
        except sla.LinAlgError as exc:
            raise SingularCoreError(f"rank-update core singular: {exc}") from exc
        x = x0 - Y @ core_amp
        zc = U.Z @ core_amp
    res = 0.0
    if diagnostics:
        # B u = S u + Z (D Z* u) and D Z* u equals the core amplitudes exactly
        r = S.matvec(x) + zc - rhs
        res = float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))
    sol = CellSolution(disc=S.disc, mode_set=S.mode_set,
                       coeffs=_pack_solution(S.disc, S.mode_set, x),
                       residual=res, singular_idx=U.mode_idx,
                       core_amplitudes=core_amp)
    return sol


def solve_direct(disc: Discretization, medium: MediumSamples, alpha, k: float,
                 rhs: np.ndarray, cutoff_tol: float | None = None) -> CellSolution:
    """Factor the unsplit operator directly; conditioning degrades near cutoff."""
    A = assemble_full(disc, medium, alpha, k, cutoff_tol)
    ms = ModeSet.build(k, alpha, disc.M)
    lu = spla.splu(A.tocsc())
    x = lu.solve(rhs.astype(complex))
    res = float(np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
    return CellSolution(disc=disc, mode_set=ms, coeffs=_pack_solution(disc, ms, x),
                        residual=res, singular_idx=np.zeros(0, dtype=int),
                        core_amplitudes=np.zeros(0, dtype=complex))


# ---------------------------------------------------------------------------
# load projection


def load_from_profiles(disc: Discretization, ms: ModeSet, profile_fn) -> np.ndarray:
    """Galerkin load from per-mode closed-form profiles.

    ``profile_fn(alpha_j, z)`` returns the (3, nz) mode profile of the volume
    current at depths z.  Two-point Gauss per element.
    """
    gz, gw = disc.gauss_depths()
    gx, _ = GAUSS2
    hat_left = 0.5 * (1.0 - gx)
    hat_right = 0.5 * (1.0 + gx)
    F = np.zeros(disc.ndof, dtype=complex)
    for m in range(ms.n):
        prof = np.asarray(profile_fn(ms.alpha_j[m], gz), dtype=complex).reshape(3, disc.N, 2)
        wts = gw.reshape(disc.N, 2)
        for comp in (0, 1):
            contrib_l = np.sum(prof[comp] * wts * hat_left[None, :], axis=1)
            contrib_r = np.sum(prof[comp] * wts * hat_right[None, :], axis=1)
            for e in range(1, disc.N + 1):
                if e - 1 >= 1:
                    F[disc.dof(m, comp, e - 1)] += contrib_l[e - 1]
                F[disc.dof(m, comp, e)] += contrib_r[e - 1]
        contrib_w = np.sum(prof[2] * wts, axis=1)
        for e in range(1, disc.N + 1):
            F[disc.dof(m, 2, e)] += contrib_w[e - 1]
    return F


# ---------------------------------------------------------------------------
# diagnostics


def divergence_residual(sol: CellSolution, medium: MediumSamples,
                        load_div_term=None, refine: int = 4) -> float:
    """Dual-norm residual of div(eps u) + k^-2 div f against depth-H1 tests.

    Tests are scalar quasi-periodic fields, piecewise linear on a depth grid
    refined by ``refine`` and zero on both horizontal boundaries.  Refinement
    matters: gradients of same-grid scalars lie inside the tensor field space,
    so the unrefined pairing vanishes identically by Galerkin orthogonality.
    ``load_div_term(alpha_j, z)`` returns the (3, nz) profile of k^-2 f at
    depths z (omit it for divergence-free loads).

    Returns sup |<eps u + k^-2 f, grad w>| / |w|_H1.
    """
    disc, ms = sol.disc, sol.mode_set
    N, h = disc.N, disc.h
    B = medium.bandwidth
    nf = refine * N            # fine elements
    hf = disc.R / nf
    n_int = nf - 1
    if n_int < 1:
        return 0.0

    # fine-element Gauss points and the coarse data evaluated there
    gx, gwScaled = GAUSS2[0], GAUSS2[1] * 0.5 * hf
    zf = (np.arange(nf)[:, None] * hf + 0.5 * hf * (gx[None, :] + 1.0)).ravel()
    wf = np.tile(gwScaled, nf)
    coarse_elem = np.clip((zf / h).astype(int), 0, N - 1)

    u_full = np.concatenate([np.zeros((ms.n, 2, 1)), sol.coeffs[:, 0:2, :]], axis=2)
    t_loc = zf / h - coarse_elem
    tang = (u_full[:, :, coarse_elem] * (1.0 - t_loc)[None, None, :]
            + u_full[:, :, coarse_elem + 1] * t_loc[None, None, :])   # (n, 2, npts)
    vert = sol.coeffs[:, 2, coarse_elem]                               # (n, npts)

    # P1 hat weights of the two fine nodes of each fine element, per point
    hat_r = np.tile(0.5 * (gx + 1.0), nf)
    hat_l = 1.0 - hat_r

    total = 0.0
    for jt in range(ms.n):
        b_vec = ms.alpha_j[jt]
        g_t = np.zeros(zf.size, dtype=complex)   # pairs against w conj (P1 mass-like)
        g_3 = np.zeros(zf.size, dtype=complex)   # pairs against w' conj
        for m in range(ms.n):
            d = ms.modes[m] - ms.modes[jt]
            if abs(d[0]) > B or abs(d[1]) > B:
                continue
            e_e = medium.eps_hat[d[0] + B, d[1] + B, :]
            if np.all(e_e == 0.0):
                continue
            ce = e_e[coarse_elem]
            g_t += 1j * ce * (b_vec[0] * tang[m, 0] + b_vec[1] * tang[m, 1])
            g_3 += ce * vert[m]
        if load_div_term is not None:
            prof = np.asarray(load_div_term(b_vec, zf), dtype=complex)
            g_t += 1j * (b_vec[0] * prof[0] + b_vec[1] * prof[1])
            g_3 += prof[2]

        # project onto the fine interior nodes
        rhs = np.zeros(nf + 1, dtype=complex)
        rhs[:-1] += (wf * (g_t * hat_l - g_3 / hf)).reshape(nf, 2).sum(axis=1)
        rhs[1:] += (wf * (g_t * hat_r + g_3 / hf)).reshape(nf, 2).sum(axis=1)
        rhs = rhs[1:-1]

        # tridiagonal H1 Gram on the fine interior nodes
        s2 = float(b_vec @ b_vec)
        main = np.full(n_int, 2.0 / hf + s2 * 2.0 * hf / 3.0)
        off = np.full(n_int - 1, -1.0 / hf + s2 * hf / 6.0)
        ab = np.zeros((3, n_int))
        ab[0, 1:] = off
        ab[1, :] = main
        ab[2, :-1] = off
        sol_r = sla.solve_banded((1, 1), ab, rhs)
        total += float(np.real(np.vdot(rhs, sol_r)))
    return float(np.sqrt(max(total, 0.0)))


def coercivity_check(disc: Discretization, medium: MediumSamples, alpha, k: float,
                     rho: float, n_random: int = 64, seed: int = 0) -> dict:
    """Measure the coercivity constant of the shifted form on the discrete space.

    Assembles curl/curl + rho mass + full boundary + the compensating trace
    weight and reports the smallest Rayleigh quotient of its Hermitian part
    against the curl-plus-mass Gram.  The trace weight uses 2 pi times the
    control constant: the constant is stated for 1/(2 pi)-normalised modal
    sums while the pairing here is plain.
    """
    from .modes import cutoff_constant

    C = cutoff_constant(k, alpha, disc.M)
    op, _ = assemble_regular(disc, medium, alpha, k, boundary="full",
                             rho=rho, trace_weight=2.0 * np.pi * C)
    A = op.matrix.toarray()
    H = 0.5 * (A + A.conj().T)

    gram_op, _ = assemble_regular(disc, medium_identity_like(medium), alpha, 1.0,
                                  boundary="none", rho=1.0)
    G = gram_op.matrix.toarray().real
    G = 0.5 * (G + G.T)

    if disc.ndof <= 1500:
        vals = sla.eigvalsh(H, G)
        c_min = float(vals[0])
    else:
        rng = np.random.default_rng(seed)
        c_min = np.inf
        for _ in range(n_random):
            x = rng.standard_normal(disc.ndof) + 1j * rng.standard_normal(disc.ndof)
            c_min = min(c_min, float(np.real(np.vdot(x, H @ x)) / np.real(np.vdot(x, G @ x))))
    return {"c": c_min, "coercive": c_min > 0.0, "rho": rho, "constant": C}


def medium_identity_like(medium: MediumSamples) -> MediumSamples:
    """Unit-coefficient samples on the same depth layout (for Gram assembly)."""
    B = medium.bandwidth
    eps_hat = np.zeros_like(medium.eps_hat)
    invmu_hat = np.zeros_like(medium.invmu_hat)
    eps_hat[B, B, :] = 1.0
    invmu_hat[B, B, :] = 1.0
    return MediumSamples(bandwidth=B, depths=medium.depths, eps_hat=eps_hat,
                         invmu_hat=invmu_hat, transverse_uniform=True)


def energy_identity_check(S: RegularOperator, U: RankUpdate, sol: CellSolution,
                          rhs: np.ndarray) -> dict:
    """Imaginary-part balance Im a(u, u) = Im <f, u> and the modal flux split.

    For real media the volume terms are real and Im <f, u> must equal the
    propagating-mode boundary sum -(beta_j |uhat_j|^2 + |l_j|^2 / beta_j).
    """
    x = np.transpose(sol.coeffs, (0, 2, 1)).reshape(-1)
    zc = U.Z @ sol.core_amplitudes if U.rank else 0.0
    a_uu = complex(np.vdot(x, S.matvec(x) + zc))
    f_u = complex(np.vdot(x, rhs))

    ms = sol.mode_set
    prop = (ms.beta_j.real > 0.0) & (ms.beta_j.imag == 0.0)
    l = sol.trace_functionals()
    tr2 = np.sum(np.abs(sol.trace) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        flux = -np.sum(ms.beta_j[prop].real * tr2[prop]
                       + np.abs(l[prop]) ** 2 / ms.beta_j[prop].real)
    return {
        "im_a": float(a_uu.imag),
        "im_f_u": float(f_u.imag),
        "identity_gap": float(abs(a_uu.imag - f_u.imag)),
        "modal_flux": float(flux),
        "flux_gap": float(abs(a_uu.imag - flux)),
        "f_u": f_u,
    }
