"""Transparent-boundary Fourier multipliers on the top-trace coefficients.

A tangential trace on the artificial boundary {x3 = R} is expanded as

    phi_T(x) = sum_j phihat_j exp(-i alpha_j . x),   phihat_j in C^2,

and all operators act mode by mode on the coefficients:

    dtn part (normal derivative):    t_j phihat_j = i beta_j phihat_j
    divergence-coupled part:         n_j phihat_j = -i alpha_j (alpha_j . phihat_j) / beta_j

The n-part is singular at cutoff; modes inside the cutoff band are excluded
here and carried by a rank update with diagonal d_j = -i / (2 pi beta_j),
see the cell solver.  The coefficient pairing ``<psi, phi> = sum_j psihat_j
. conj(phihat_j)`` is used for all sign diagnostics; the physical surface
measure only contributes a positive factor and does not affect signs.

Sign pattern (any trace, any admissible alpha):
    Re<T phi, phi> <= 0,  Im<T phi, phi> >= 0,
    Re<N phi, phi> <= 0,  Im<N phi, phi> <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modes import CutoffModeError, ModeSet, beta, singular_set


@dataclass(frozen=True)
class TraceCoefficients:
    """Per-mode tangential coefficients phihat_j in C^2, |j|_inf <= M."""

    mode_set: ModeSet
    values: np.ndarray  # (n_modes, 2) complex

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.mode_set.n, 2):
            raise ValueError(f"trace shape {v.shape} does not match mode set")
        object.__setattr__(self, "values", v)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True)
class DtnMultipliers:
    """Per-mode multipliers with the cutoff band split out."""

    mode_set: ModeSet
    t: np.ndarray              # i beta_j, all modes
    n_scale: np.ndarray        # -i / beta_j on regular modes, 0 on singular ones
    singular_mask: np.ndarray  # True where the mode sits in the cutoff band

    @classmethod
    def build(cls, k: float, mode_set: ModeSet, cutoff_tol: float | None = None) -> "DtnMultipliers":
        cls_info = singular_set(k, mode_set.alpha, mode_set.M, cutoff_tol)
        mask = np.zeros(mode_set.n, dtype=bool)
        mask[cls_info.singular_idx] = True
        t = 1j * mode_set.beta_j
        n_scale = np.zeros(mode_set.n, dtype=complex)
        reg = ~mask
        n_scale[reg] = -1j / mode_set.beta_j[reg]
        return cls(mode_set=mode_set, t=t, n_scale=n_scale, singular_mask=mask)


def t_apply(mult: DtnMultipliers, phi: TraceCoefficients) -> np.ndarray:
    """Apply i beta_j mode-wise; returns dual-pairing coefficients (n, 2)."""
    return mult.t[:, None] * phi.values


def n_apply_regular(mult: DtnMultipliers, phi: TraceCoefficients) -> np.ndarray:
    """Apply -i alpha_j (alpha_j . phihat_j)/beta_j on modes outside the band."""
    proj = np.sum(mult.mode_set.alpha_j * phi.values, axis=1)
    return (mult.n_scale * proj)[:, None] * mult.mode_set.alpha_j


def singular_functional(alpha_j, trace_value) -> complex:
    """The cutoff-mode functional l(u) = alpha_j . uhat_j for one mode."""
    a = np.asarray(alpha_j, dtype=float).reshape(2)
    v = np.asarray(trace_value, dtype=complex).reshape(2)
    return complex(a[0] * v[0] + a[1] * v[1])


def d_matrix(k: float, singular_alpha_j: np.ndarray) -> np.ndarray:
    """Diagonal entries -i / (2 pi beta_j) of the rank-update core, |J| values.

    Raises at exact cutoff; the solver then switches to the limit path where
    only the (finite) inverse entries 2 pi i beta_j are needed.
    """
    a = np.atleast_2d(np.asarray(singular_alpha_j, dtype=float))
    b = np.asarray(beta(k, a), dtype=complex).reshape(a.shape[0])
    if np.any(b == 0.0):
        raise CutoffModeError("d_matrix is singular exactly at cutoff; use the limit path")
    return -1j / (2.0 * np.pi * b)


def continuous_multipliers(k: float, xi) -> tuple[complex, np.ndarray]:
    """Continuous-spectrum analogues (t, n) at transverse frequency xi.

    t = i sqrt(k^2 - |xi|^2) and n = -i xi xi^T / sqrt(k^2 - |xi|^2); used by
    oracles and the field extension only.
    """
    x = np.asarray(xi, dtype=float).reshape(2)
    b = beta(k, x)
    if b == 0.0:
        raise CutoffModeError(f"|xi| = k at xi={tuple(x)}")
    t = 1j * b
    n = (-1j / b) * np.outer(x, x)
    return complex(t), n.astype(complex)


def pairing(coeffs: np.ndarray, phi: TraceCoefficients) -> complex:
    """Coefficient dual pairing <psi, phi> = sum_j psihat_j . conj(phihat_j)."""
    return complex(np.sum(coeffs * np.conj(phi.values)))


def hminus_half_norm_sq(phi: TraceCoefficients) -> float:
    """Trace norm sum_j (1 + |alpha_j|^2)^(-1/2) |phihat_j|^2."""
    s2 = np.sum(phi.mode_set.alpha_j ** 2, axis=1)
    return float(np.sum(np.sum(np.abs(phi.values) ** 2, axis=1) / np.sqrt(1.0 + s2)))


def boundary_lower_bound_margin(k: float, phi: TraceCoefficients, constant: float) -> float:
    """Margin of Re<(N - T) phi, phi> >= -C(k^2, alpha) ||phi||^2 in H^(-1/2).

    Both sides are taken in the normalisation that puts a 1/(2 pi) in front of
    the modal sums, matching the definition of the control constant.  Returns
    lhs - rhs (nonnegative when the bound holds).
    """
    ms = phi.mode_set
    proj = np.sum(ms.alpha_j * phi.values, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        n_terms = np.where(ms.beta_j != 0.0, (-1j / ms.beta_j) * np.abs(proj) ** 2, 0.0)
    t_terms = 1j * ms.beta_j * np.sum(np.abs(phi.values) ** 2, axis=1)
    lhs = np.real(np.sum(n_terms - t_terms)) / (2.0 * np.pi)
    rhs = -constant * hminus_half_norm_sq(phi)
    return float(lhs - rhs)
