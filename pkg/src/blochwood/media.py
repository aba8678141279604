"""Material model: bi-periodic relative permittivity/permeability and a local defect.

Media live on the reference cell (-pi, pi)^2 x (0, R) and are 2 pi periodic in
the transverse plane.  Above the height ``r0 - delta`` both parameters must be
identically 1 (the exterior constants are normalised away).  A defect is a
compactly supported perturbation q of the permittivity in the central cell.

Transverse Fourier coefficients follow c(x) = sum_m chat_m exp(i m . x) with
chat_m = (2 pi)^(-2) integral of c exp(-i m . x); real-valued parameters give
Hermitian coefficients chat_{-m} = conj(chat_m).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

GRID_MAGIC = b"BWMED001"


class AssumptionError(ValueError):
    """A material bound required for solvability is violated."""


# ---------------------------------------------------------------------------
# medium definition


@dataclass(frozen=True)
class PeriodicMedium:
    """Bi-periodic medium given by vectorised callables eps(x1,x2,x3), mu(...)."""

    eps: Callable
    mu: Callable
    r0: float
    delta: float
    label: str = "custom"

    @classmethod
    def constant(cls, eps=1.0, mu=1.0, r0: float = 0.5, delta: float = 0.1) -> "PeriodicMedium":
        ev, mv = complex(eps), complex(mu)

        def eps_f(x1, x2, x3):
            return np.full(np.broadcast(x1, x2, x3).shape, ev, dtype=complex)

        def mu_f(x1, x2, x3):
            return np.full(np.broadcast(x1, x2, x3).shape, mv, dtype=complex)

        if ev != 1.0 or mv != 1.0:
            # a non-unit constant is only admissible below r0 - delta
            def eps_f(x1, x2, x3):  # noqa: F811
                z = np.broadcast_arrays(np.asarray(x1), np.asarray(x2), np.asarray(x3))[2]
                return np.where(z >= r0 - delta, 1.0 + 0.0j, ev)

            def mu_f(x1, x2, x3):  # noqa: F811
                z = np.broadcast_arrays(np.asarray(x1), np.asarray(x2), np.asarray(x3))[2]
                return np.where(z >= r0 - delta, 1.0 + 0.0j, mv)

        return cls(eps=eps_f, mu=mu_f, r0=r0, delta=delta, label="constant")

    @classmethod
    def layered(cls, breaks, eps_values, mu_values=None, r0: float | None = None,
                delta: float = 0.05) -> "PeriodicMedium":
        """Depth-wise piecewise profile; layer i fills [breaks[i], breaks[i+1]).

        Values above the last break are 1.  ``r0`` defaults to the last break
        plus the margin.
        """
        zb = np.asarray(breaks, dtype=float)
        ev = np.asarray(eps_values, dtype=complex)
        mv = np.ones_like(ev) if mu_values is None else np.asarray(mu_values, dtype=complex)
        if zb.size != ev.size + 1:
            raise ValueError("need one more break than layer values")
        if r0 is None:
            r0 = float(zb[-1]) + delta

        def profile(values):
            def f(x1, x2, x3):
                z = np.asarray(x3, dtype=float)
                out = np.ones(np.broadcast(x1, x2, z).shape, dtype=complex)
                zb_ = np.broadcast_to(z, out.shape)
                for lo, hi, v in zip(zb[:-1], zb[1:], values):
                    out = np.where((zb_ >= lo) & (zb_ < hi), v, out)
                return out
            return f

        return cls(eps=profile(ev), mu=profile(mv), r0=float(r0), delta=delta, label="layered")

    @classmethod
    def lamellar(cls, eps_hi=2.25, eps_lo=1.0, fill: float = 0.5, height: float = 0.5,
                 delta: float = 0.05) -> "PeriodicMedium":
        """Binary grating: eps_hi for |x1| < fill*pi and x3 < height, else eps_lo/1."""
        eh, el = complex(eps_hi), complex(eps_lo)

        def eps_f(x1, x2, x3):
            x = np.asarray(x1, dtype=float)
            z = np.asarray(x3, dtype=float)
            shape = np.broadcast(x, x2, z).shape
            xb = np.broadcast_to(x, shape)
            zb = np.broadcast_to(z, shape)
            xw = np.mod(xb + np.pi, 2.0 * np.pi) - np.pi
            out = np.where(np.abs(xw) < fill * np.pi, eh, el)
            return np.where(zb < height, out, 1.0 + 0.0j)

        def mu_f(x1, x2, x3):
            return np.ones(np.broadcast(x1, x2, x3).shape, dtype=complex)

        return cls(eps=eps_f, mu=mu_f, r0=height + delta, delta=delta, label="lamellar")

    @classmethod
    def from_grid_file(cls, path) -> "PeriodicMedium":
        nx, ny, nz, R, r0, eps_g, mu_g = read_medium_grid(path)
        return cls(
            eps=_trilinear(eps_g, R),
            mu=_trilinear(mu_g, R),
            r0=r0,
            delta=max(R - r0, R / nz),
            label="gridded",
        )


@dataclass(frozen=True)
class DefectPerturbation:
    """Compactly supported permittivity perturbation in the central cell."""

    q: Callable
    support_center: np.ndarray
    support_radius: float
    label: str = "defect"

    @classmethod
    def gaussian_bump(cls, amplitude, center=(0.0, 0.0, 0.3), sigma: float = 0.4,
                      cutoff_sigmas: float = 3.5) -> "DefectPerturbation":
        amp = complex(amplitude)
        c = np.asarray(center, dtype=float)
        rad = cutoff_sigmas * sigma
        # C1 roll-off to zero at the cutoff radius keeps the support compact
        edge = np.exp(-0.5 * cutoff_sigmas ** 2)

        def q(x1, x2, x3):
            dx = np.asarray(x1, dtype=float) - c[0]
            dy = np.asarray(x2, dtype=float) - c[1]
            dz = np.asarray(x3, dtype=float) - c[2]
            r2 = dx * dx + dy * dy + dz * dz
            g = np.exp(-0.5 * r2 / sigma ** 2) - edge
            return amp * np.where(r2 < rad * rad, np.maximum(g, 0.0), 0.0)

        return cls(q=q, support_center=c, support_radius=rad, label="gaussian")

    @classmethod
    def none(cls) -> "DefectPerturbation":
        def q(x1, x2, x3):
            return np.zeros(np.broadcast(x1, x2, x3).shape, dtype=complex)

        return cls(q=q, support_center=np.zeros(3), support_radius=0.0, label="none")


def _trilinear(grid: np.ndarray, R: float) -> Callable:
    """Periodic-in-plane trilinear interpolation of an (nx, ny, nz) grid on the cell."""
    nx, ny, nz = grid.shape

    def f(x1, x2, x3):
        x = (np.asarray(x1, dtype=float) + np.pi) / (2.0 * np.pi) * nx
        y = (np.asarray(x2, dtype=float) + np.pi) / (2.0 * np.pi) * ny
        z = np.clip(np.asarray(x3, dtype=float) / R, 0.0, 1.0) * (nz - 1)
        x, y, z = np.broadcast_arrays(x, y, z)
        i0, j0 = np.floor(x).astype(int), np.floor(y).astype(int)
        k0 = np.minimum(np.floor(z).astype(int), nz - 2)
        fx, fy, fz = x - i0, y - j0, z - k0
        out = np.zeros(x.shape, dtype=complex)
        for di, wx in ((0, 1.0 - fx), (1, fx)):
            for dj, wy in ((0, 1.0 - fy), (1, fy)):
                for dk, wz in ((0, 1.0 - fz), (1, fz)):
                    out += wx * wy * wz * grid[(i0 + di) % nx, (j0 + dj) % ny, k0 + dk]
        return out

    return f


# ---------------------------------------------------------------------------
# gridded medium files: magic, int64 nx ny nz, float64 R r0, eps then mu blocks


def write_medium_grid(path, eps_grid: np.ndarray, mu_grid: np.ndarray, R: float, r0: float):
    eps_grid = np.ascontiguousarray(eps_grid, dtype=complex)
    mu_grid = np.ascontiguousarray(mu_grid, dtype=complex)
    if eps_grid.shape != mu_grid.shape or eps_grid.ndim != 3:
        raise ValueError("eps and mu grids must share one (nx, ny, nz) shape")
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<3q2d", *eps_grid.shape, float(R), float(r0)))
        fh.write(eps_grid.tobytes())
        fh.write(mu_grid.tobytes())


def read_medium_grid(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(GRID_MAGIC))
        if magic != GRID_MAGIC:
            raise ValueError(f"not a medium grid file: bad magic {magic!r}")
        nx, ny, nz, R, r0 = struct.unpack("<3q2d", fh.read(8 * 5))
        count = nx * ny * nz
        eps_g = np.frombuffer(fh.read(16 * count), dtype=complex).reshape(nx, ny, nz)
        mu_g = np.frombuffer(fh.read(16 * count), dtype=complex).reshape(nx, ny, nz)
    return nx, ny, nz, R, r0, eps_g, mu_g


# ---------------------------------------------------------------------------
# transverse Fourier coefficients


def fourier_coeffs(field, bandwidth: int, n_grid: int | None = None, depth: float | None = None) -> np.ndarray:
    """Coefficients chat_d, |d|_inf <= bandwidth, of a transverse field.

    ``field`` is either an (n, n) sample array on the uniform grid
    x_i = -pi + 2 pi i / n or a callable f(x1, x2) (or f(x1, x2, x3) when
    ``depth`` is given).  The grid must oversample the band at least twice,
    otherwise the trigonometric sums alias.

    Returns a (2*bandwidth+1, 2*bandwidth+1) array indexed by d1+bandwidth,
    d2+bandwidth.
    """
    if callable(field):
        n = n_grid if n_grid is not None else max(64, 4 * bandwidth + 4)
        x = -np.pi + 2.0 * np.pi * np.arange(n) / n
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        vals = field(X1, X2, depth) if depth is not None else field(X1, X2)
        vals = np.asarray(vals, dtype=complex)
    else:
        vals = np.asarray(field, dtype=complex)
        n = vals.shape[0]
        if vals.shape != (n, n):
            raise ValueError("sample array must be square")
    if n < 2 * (2 * bandwidth) + 1 and bandwidth > 0:
        raise ValueError(
            f"grid of {n} points aliases products at bandwidth {bandwidth}; "
            f"need at least {4 * bandwidth + 1}"
        )
    spec = np.fft.fft2(vals) / (n * n)
    d = np.arange(-bandwidth, bandwidth + 1)
    # grid starts at -pi, so FFT bins carry the phase exp(i pi (d1 + d2))
    out = spec[np.ix_(d % n, d % n)] * np.exp(1j * np.pi * (d[:, None] + d[None, :]))
    return out


@dataclass(frozen=True)
class MediumSamples:
    """Per-depth-level transverse Fourier data of eps and 1/mu.

    ``eps_hat[:, :, e]`` holds the coefficients at the midpoint of depth
    element e, up to the convolution bandwidth (2M for field truncation M).
    """

    bandwidth: int
    depths: np.ndarray           # element midpoints
    eps_hat: np.ndarray          # (2B+1, 2B+1, n_depth)
    invmu_hat: np.ndarray
    transverse_uniform: bool

    @classmethod
    def from_medium(cls, medium: PeriodicMedium, depths, bandwidth: int,
                    n_grid: int | None = None) -> "MediumSamples":
        z = np.asarray(depths, dtype=float)
        B = bandwidth
        eps_hat = np.empty((2 * B + 1, 2 * B + 1, z.size), dtype=complex)
        invmu_hat = np.empty_like(eps_hat)
        for e, ze in enumerate(z):
            eps_hat[:, :, e] = fourier_coeffs(medium.eps, B, n_grid=n_grid, depth=ze)
            invmu_hat[:, :, e] = fourier_coeffs(
                lambda x1, x2, x3: 1.0 / medium.mu(x1, x2, x3), B, n_grid=n_grid, depth=ze)
        off = np.zeros(eps_hat.shape, dtype=bool)
        off[B, B, :] = True
        uniform = (np.max(np.abs(eps_hat[~off])) < 1e-13
                   and np.max(np.abs(invmu_hat[~off])) < 1e-13)
        return cls(bandwidth=B, depths=z, eps_hat=eps_hat, invmu_hat=invmu_hat,
                   transverse_uniform=bool(uniform))

    def coeff(self, which: str, d1: int, d2: int) -> np.ndarray:
        """Depth profile of one coefficient; d outside the band is zero."""
        B = self.bandwidth
        if abs(d1) > B or abs(d2) > B:
            return np.zeros(self.depths.size, dtype=complex)
        arr = self.eps_hat if which == "eps" else self.invmu_hat
        return arr[d1 + B, d2 + B, :]


# ---------------------------------------------------------------------------
# admissibility report


@dataclass(frozen=True)
class ValidationEntry:
    name: str
    passed: bool
    severity: str  # "error" or "warning"
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple

    @property
    def ok(self) -> bool:
        return all(e.passed for e in self.entries if e.severity == "error")

    @property
    def warnings(self) -> tuple:
        return tuple(e for e in self.entries if e.severity == "warning" and not e.passed)

    def raise_on_error(self):
        bad = [e for e in self.entries if e.severity == "error" and not e.passed]
        if bad:
            raise AssumptionError("; ".join(f"{e.name}: {e.detail}" for e in bad))


def validate_assumptions(medium: PeriodicMedium, defect: DefectPerturbation | None = None,
                         R: float | None = None, n_grid: int = 24, n_depth: int = 24,
                         eps_floor: float = 1e-12) -> ValidationReport:
    """Sample-based check of the material bounds and the absorption-ball condition.

    Lower-bound or sign violations are errors; a missing absorption ball only
    degrades the uniqueness theory and is reported as a warning.
    """
    R = R if R is not None else medium.r0 + medium.delta
    x = -np.pi + 2.0 * np.pi * np.arange(n_grid) / n_grid
    z = np.linspace(R / (2 * n_depth), R - R / (2 * n_depth), n_depth)
    X1, X2, X3 = np.meshgrid(x, x, z, indexing="ij")
    ev = np.asarray(medium.eps(X1, X2, X3), dtype=complex)
    mv = np.asarray(medium.mu(X1, X2, X3), dtype=complex)
    qv = (np.asarray(defect.q(X1, X2, X3), dtype=complex)
          if defect is not None else np.zeros_like(ev))

    entries = [
        ValidationEntry("re_eps_lower_bound", bool(np.min(ev.real) > eps_floor), "error",
                        f"min Re eps = {np.min(ev.real):.3g}"),
        ValidationEntry("im_eps_nonneg", bool(np.min(ev.imag) >= -1e-12), "error",
                        f"min Im eps = {np.min(ev.imag):.3g}"),
        ValidationEntry("re_mu_lower_bound", bool(np.min(mv.real) > eps_floor), "error",
                        f"min Re mu = {np.min(mv.real):.3g}"),
        ValidationEntry("im_mu_nonneg", bool(np.min(mv.imag) >= -1e-12), "error",
                        f"min Im mu = {np.min(mv.imag):.3g}"),
        ValidationEntry("im_perturbed_eps_nonneg", bool(np.min((ev + qv).imag) >= -1e-12),
                        "error", f"min Im(eps+q) = {np.min((ev + qv).imag):.3g}"),
    ]

    above = X3 >= medium.r0 - medium.delta + 1e-12
    if np.any(above):
        dev = max(np.max(np.abs(ev[above] - 1.0)), np.max(np.abs(mv[above] - 1.0)))
        entries.append(ValidationEntry(
            "constant_above_r0", bool(dev < 1e-10), "error",
            f"max |parameter - 1| above r0-delta = {dev:.3g}"))

    ball = bool(np.any((ev + qv).imag > 1e-12))
    entries.append(ValidationEntry(
        "absorption_ball", ball, "warning",
        "Im eps > 0 somewhere" if ball else "no absorption: uniqueness not guaranteed"))

    if defect is not None and defect.support_radius > 0.0:
        c, rad = defect.support_center, defect.support_radius
        inside = (abs(c[0]) + rad <= np.pi and abs(c[1]) + rad <= np.pi
                  and c[2] - rad >= 0.0 and c[2] + rad <= medium.r0)
        entries.append(ValidationEntry(
            "defect_support_in_central_cell", bool(inside), "error",
            f"center {tuple(np.round(c, 3))}, radius {rad:.3g}, r0 {medium.r0:.3g}"))

    return ValidationReport(entries=tuple(entries))
