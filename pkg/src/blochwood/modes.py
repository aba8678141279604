"""Transverse lattice modes, square-root branches and cutoff detection.

Conventions used throughout the package
---------------------------------------
The unit cell is (-pi, pi)^2, so the dual lattice is Z^2 and a quasi-periodicity
alpha lives in the closed Brillouin cell [-1/2, 1/2]^2.  A transverse mode
j in Z^2 carries the shifted wavevector ``alpha_j = alpha + j`` and the vertical
wavenumber ``beta_j = sqrt(k^2 - |alpha_j|^2)``.

Branch: fields above the layer behave like exp(i beta_j (x3 - R)), so the root
is taken with Im(beta) >= 0 (decay of evanescent modes) and Re(beta) >= 0 on
the real branch (upward radiation).  At cutoff, |alpha_j| = k, beta_j = 0 and
the transparent-boundary multipliers degenerate; cutoff detection therefore
works with an absolute tolerance band on ``|k - |alpha_j||``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_FRACTION = 0.25


class CutoffModeError(ValueError):
    """A mode sits exactly at cutoff where a multiplier is singular."""


@dataclass(frozen=True)
class WaveParameters:
    """Exterior wave data with k^2 = omega^2 * mu_plus * eps_plus."""

    k: float
    omega: float
    eps_plus: float = 1.0
    mu_plus: float = 1.0

    def __post_init__(self):
        if self.k <= 0.0:
            raise ValueError(f"wavenumber must be positive, got k={self.k}")
        k2 = self.omega ** 2 * self.mu_plus * self.eps_plus
        if abs(self.k ** 2 - k2) > 1e-12 * max(abs(k2), 1.0):
            raise ValueError(
                f"inconsistent wave data: k^2={self.k ** 2} but "
                f"omega^2*mu*eps={k2}"
            )

    @classmethod
    def from_k(cls, k: float, eps_plus: float = 1.0, mu_plus: float = 1.0) -> "WaveParameters":
        return cls(k=k, omega=k / np.sqrt(mu_plus * eps_plus), eps_plus=eps_plus, mu_plus=mu_plus)


@dataclass(frozen=True)
class QuasiPeriodicity:
    """A point of the closed Brillouin cell [-1/2, 1/2]^2."""

    alpha: tuple[float, float]

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.shape != (2,):
            raise ValueError("alpha must be a real 2-vector")
        if np.any(np.abs(a) > 0.5 + 1e-14):
            raise ValueError(f"alpha={tuple(a)} outside the Brillouin cell")
        object.__setattr__(self, "alpha", (float(a[0]), float(a[1])))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)


def beta(k: float, alpha_j) -> np.ndarray | complex:
    """Vertical wavenumber sqrt(k^2 - |alpha_j|^2) on the radiation branch.

    Accepts a single 2-vector or an (..., 2) array.  Cutoff returns exactly 0.
    """
    a = np.asarray(alpha_j, dtype=float)
    w = k * k - np.sum(a * a, axis=-1)
    b = np.sqrt(np.asarray(w, dtype=complex))
    # numpy takes sqrt of negative reals onto +i axis already; pin zeros
    b = np.where(w == 0.0, 0.0 + 0.0j, b)
    if b.ndim == 0:
        return complex(b)
    return b


def mode_lattice(M: int) -> np.ndarray:
    """All index pairs j with |j|_inf <= M, ordered lexicographically."""
    if M < 0:
        raise ValueError("truncation order must be nonnegative")
    r = np.arange(-M, M + 1)
    j1, j2 = np.meshgrid(r, r, indexing="ij")
    return np.stack([j1.ravel(), j2.ravel()], axis=1)


@dataclass(frozen=True)
class ModeSet:
    """Truncated transverse modes for one quasi-periodicity.

    ``modes[m]`` is the integer pair j, ``alpha_j[m] = alpha + j`` and
    ``beta_j[m]`` the branch-consistent vertical wavenumber.
    """

    M: int
    alpha: np.ndarray
    modes: np.ndarray
    alpha_j: np.ndarray
    beta_j: np.ndarray
    _index: dict = field(repr=False, default_factory=dict)

    @classmethod
    def build(cls, k: float, alpha, M: int) -> "ModeSet":
        a = np.asarray(alpha, dtype=float).reshape(2)
        modes = mode_lattice(M)
        alpha_j = a[None, :] + modes
        beta_j = np.asarray(beta(k, alpha_j), dtype=complex)
        index = {(int(j[0]), int(j[1])): m for m, j in enumerate(modes)}
        return cls(M=M, alpha=a, modes=modes, alpha_j=alpha_j, beta_j=beta_j, _index=index)

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    def index(self, j) -> int:
        return self._index[(int(j[0]), int(j[1]))]


@dataclass(frozen=True)
class CutoffClassification:
    """Modes inside the cutoff tolerance band ``|k - |alpha_j|| < tol``."""

    k: float
    M: int
    cutoff_tol: float
    singular: np.ndarray          # (s, 2) integer pairs
    singular_idx: np.ndarray      # indices into the lexicographic mode order
    distance: np.ndarray          # per-mode |k - |alpha_j||
    degenerate: bool              # too many modes in the band for a low-rank update
    on_cell_boundary: bool        # band touches the Brillouin-cell boundary


def default_cutoff_tol(k: float) -> float:
    return 1e-6 * k


def singular_set(
    k: float,
    alpha,
    M: int,
    cutoff_tol: float | None = None,
    degenerate_fraction: float = DEGENERATE_FRACTION,
) -> CutoffClassification:
    """Classify all |j|_inf <= M modes against the cutoff band."""
    if cutoff_tol is None:
        cutoff_tol = default_cutoff_tol(k)
    if cutoff_tol <= 0.0:
        raise ValueError("cutoff tolerance must be positive")
    a = np.asarray(alpha, dtype=float).reshape(2)
    modes = mode_lattice(M)
    alpha_j = a[None, :] + modes
    dist = np.abs(k - np.linalg.norm(alpha_j, axis=1))
    mask = dist < cutoff_tol
    idx = np.nonzero(mask)[0]
    degenerate = idx.size > degenerate_fraction * modes.shape[0]
    on_boundary = bool(idx.size) and np.any(np.abs(np.abs(a) - 0.5) < cutoff_tol)
    return CutoffClassification(
        k=k,
        M=M,
        cutoff_tol=cutoff_tol,
        singular=modes[idx],
        singular_idx=idx,
        distance=dist,
        degenerate=bool(degenerate),
        on_cell_boundary=bool(on_boundary),
    )


def cutoff_constant(k: float, alpha, M: int) -> float:
    """Boundary-control constant (k^2 / 2 pi) sup_j (1+|alpha_j|^2)^1/2 / |k^2-|alpha_j|^2|^1/2.

    The supremum is taken over the truncated mode set |j|_inf <= M.  It blows
    up like |k - |alpha_j||^(-1/2) when alpha approaches a cutoff and is not
    defined on it.
    """
    a = np.asarray(alpha, dtype=float).reshape(2)
    alpha_j = a[None, :] + mode_lattice(M)
    s2 = np.sum(alpha_j * alpha_j, axis=1)
    gap = np.abs(k * k - s2)
    if np.any(gap == 0.0):
        raise CutoffModeError(f"mode exactly at cutoff for alpha={tuple(a)}, k={k}")
    ratios = np.sqrt((1.0 + s2) / gap)
    return float(k * k / (2.0 * np.pi) * np.max(ratios))
