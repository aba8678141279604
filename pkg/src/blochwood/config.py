"""Scenario configuration: strict key=value files and named presets.

The format is flat ``key = value`` lines with ``#`` comments.  Unknown keys
are hard errors (with line numbers), so a typo in a tolerance name cannot
silently fall back to a default.  Units: the transverse period is fixed at
2 pi, all lengths share the unit implied by that choice, and the wavenumber
``wave.k`` carries its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if key is not None:
            loc.append(f"key {key!r}")
        super().__init__((" (" + ", ".join(loc) + "): " if loc else ": ").join(["config error", message])
                         if loc else f"config error: {message}")
        self.line = line
        self.key = key


def _cells(text: str):
    out = []
    for part in text.replace(";", " ").split():
        a, b = part.split(",")
        out.append((int(a), int(b)))
    return tuple(out)


def _floats(text: str):
    return tuple(float(x) for x in text.split())


@dataclass
class Scenario:
    """Typed scenario parameters; defaults give a small periodic-source demo."""

    name: str = "custom"
    k: float = 0.45
    alpha: tuple = (0.0, 0.0)

    medium_profile: str = "constant"          # constant | layered | lamellar | file
    eps: complex = 1.0 + 0.0j
    mu: complex = 1.0 + 0.0j
    layer_breaks: tuple = (0.0, 0.45)
    layer_eps: tuple = (2.0 + 0.6j,)
    lamellar_fill: float = 0.5
    lamellar_eps_hi: complex = 2.25 + 0.0j
    lamellar_eps_lo: complex = 1.0 + 0.0j
    medium_file: str = ""
    r0: float = 0.75
    delta: float = 0.1

    defect_amp: complex = 0.0 + 0.0j
    defect_center: tuple = (0.0, 0.0, 0.38)
    defect_sigma: float = 0.1

    source_kind: str = "gaussian"             # gaussian | modal_mode0
    source_amp: tuple = (1.0, 0.0, 0.0)
    source_center: tuple = (0.3, -0.4, 0.3)
    source_sigma: float = 0.1
    source_cells: tuple = ((0, 0),)

    modes: int = 1                            # transverse truncation M
    depth_elems: int = 16                     # depth elements N
    height: float = 1.0                       # top boundary R
    grid: int = 16                            # transverse sample grid n_t

    n_base: int = 8
    levels: int = 2
    gl_order: int = 3
    cutoff_tol: float = 0.0                   # 0 -> default 1e-6 * k

    seed: int = 0
    threads: int = 1
    output_cells: tuple = ((0, 0),)
    sweep_offsets: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10)

    def validate(self):
        if self.k <= 0:
            raise ConfigError("wave.k must be positive", key="wave.k")
        if self.modes < 0 or self.depth_elems < 2:
            raise ConfigError("disc.modes >= 0 and disc.depth_elems >= 2 required",
                              key="disc.modes")
        if self.height <= 0 or self.r0 >= self.height:
            raise ConfigError("need 0 < medium.r0 < disc.height", key="medium.r0")
        if self.n_base < 2:
            raise ConfigError("quad.n_base >= 2 required", key="quad.n_base")
        if np.any(np.abs(np.asarray(self.alpha)) > 0.5):
            raise ConfigError("alpha outside the Brillouin cell", key="alpha.a1")
        return self


def _complex_pair(re_key, im_key):
    def cast(d, sc, attr):
        re = float(d.pop(re_key, np.real(getattr(sc, attr))))
        im = float(d.pop(im_key, np.imag(getattr(sc, attr))))
        setattr(sc, attr, complex(re, im))
    return cast


# key -> (attribute, caster); casters receive the raw string
_SCALARS = {
    "wave.k": ("k", float),
    "alpha.a1": (("alpha", 0), float),
    "alpha.a2": (("alpha", 1), float),
    "medium.profile": ("medium_profile", str),
    "medium.eps_re": (("eps", "re"), float),
    "medium.eps_im": (("eps", "im"), float),
    "medium.mu_re": (("mu", "re"), float),
    "medium.mu_im": (("mu", "im"), float),
    "medium.layer_breaks": ("layer_breaks", _floats),
    "medium.layer_eps_re": (("layer_eps", "re_tuple"), _floats),
    "medium.layer_eps_im": (("layer_eps", "im_tuple"), _floats),
    "medium.fill": ("lamellar_fill", float),
    "medium.eps_hi_re": (("lamellar_eps_hi", "re"), float),
    "medium.eps_hi_im": (("lamellar_eps_hi", "im"), float),
    "medium.eps_lo_re": (("lamellar_eps_lo", "re"), float),
    "medium.eps_lo_im": (("lamellar_eps_lo", "im"), float),
    "medium.file": ("medium_file", str),
    "medium.r0": ("r0", float),
    "medium.delta": ("delta", float),
    "defect.amp_re": (("defect_amp", "re"), float),
    "defect.amp_im": (("defect_amp", "im"), float),
    "defect.cx": (("defect_center", 0), float),
    "defect.cy": (("defect_center", 1), float),
    "defect.cz": (("defect_center", 2), float),
    "defect.sigma": ("defect_sigma", float),
    "source.kind": ("source_kind", str),
    "source.amp": ("source_amp", _floats),
    "source.cx": (("source_center", 0), float),
    "source.cy": (("source_center", 1), float),
    "source.cz": (("source_center", 2), float),
    "source.sigma": ("source_sigma", float),
    "source.cells": ("source_cells", _cells),
    "disc.modes": ("modes", int),
    "disc.depth_elems": ("depth_elems", int),
    "disc.height": ("height", float),
    "disc.grid": ("grid", int),
    "quad.n_base": ("n_base", int),
    "quad.levels": ("levels", int),
    "quad.gl_order": ("gl_order", int),
    "cutoff.tol": ("cutoff_tol", float),
    "run.seed": ("seed", int),
    "run.threads": ("threads", int),
    "output.cells": ("output_cells", _cells),
    "sweep.offsets": ("sweep_offsets", _floats),
}


def _assign(sc: Scenario, key: str, raw: str, line: int):
    if key not in _SCALARS:
        raise ConfigError("unknown key", line=line, key=key)
    attr, cast = _SCALARS[key]
    try:
        value = cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value {raw!r}: {exc}", line=line, key=key) from exc
    if isinstance(attr, tuple):
        name, part = attr
        cur = getattr(sc, name)
        if part == "re":
            setattr(sc, name, complex(value, np.imag(cur)))
        elif part == "im":
            setattr(sc, name, complex(np.real(cur), value))
        elif part == "re_tuple":
            im = tuple(np.imag(np.asarray(cur, dtype=complex)))
            im = im + (0.0,) * (len(value) - len(im))
            setattr(sc, name, tuple(complex(r, i) for r, i in zip(value, im)))
        elif part == "im_tuple":
            re = tuple(np.real(np.asarray(cur, dtype=complex)))
            re = re + (0.0,) * (len(value) - len(re))
            setattr(sc, name, tuple(complex(r, i) for r, i in zip(re, value)))
        else:
            lst = list(cur)
            lst[part] = value
            setattr(sc, name, tuple(lst))
    else:
        setattr(sc, attr, value)


def parse_config(text: str, base: Scenario | None = None) -> Scenario:
    sc = base if base is not None else Scenario()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, val = (s.strip() for s in stripped.split("=", 1))
        _assign(sc, key, val, lineno)
    sc.validate()
    return sc


def serialize_config(sc: Scenario) -> str:
    """Emit a config text that parses back to identical values."""
    def fmt(x):
        if isinstance(x, float):
            return repr(x)
        return str(x)

    lines = [f"# scenario: {sc.name}"]
    lines.append(f"wave.k = {fmt(sc.k)}")
    lines.append(f"alpha.a1 = {fmt(sc.alpha[0])}")
    lines.append(f"alpha.a2 = {fmt(sc.alpha[1])}")
    lines.append(f"medium.profile = {sc.medium_profile}")
    lines.append(f"medium.eps_re = {fmt(float(np.real(sc.eps)))}")
    lines.append(f"medium.eps_im = {fmt(float(np.imag(sc.eps)))}")
    lines.append(f"medium.mu_re = {fmt(float(np.real(sc.mu)))}")
    lines.append(f"medium.mu_im = {fmt(float(np.imag(sc.mu)))}")
    lines.append("medium.layer_breaks = " + " ".join(repr(float(x)) for x in sc.layer_breaks))
    lines.append("medium.layer_eps_re = " + " ".join(repr(float(np.real(x))) for x in sc.layer_eps))
    lines.append("medium.layer_eps_im = " + " ".join(repr(float(np.imag(x))) for x in sc.layer_eps))
    if sc.medium_file:
        lines.append(f"medium.file = {sc.medium_file}")
    lines.append(f"medium.r0 = {fmt(sc.r0)}")
    lines.append(f"medium.delta = {fmt(sc.delta)}")
    lines.append(f"defect.amp_re = {fmt(float(np.real(sc.defect_amp)))}")
    lines.append(f"defect.amp_im = {fmt(float(np.imag(sc.defect_amp)))}")
    for key, i in (("defect.cx", 0), ("defect.cy", 1), ("defect.cz", 2)):
        lines.append(f"{key} = {fmt(sc.defect_center[i])}")
    lines.append(f"defect.sigma = {fmt(sc.defect_sigma)}")
    lines.append(f"source.kind = {sc.source_kind}")
    lines.append("source.amp = " + " ".join(repr(float(x)) for x in sc.source_amp))
    for key, i in (("source.cx", 0), ("source.cy", 1), ("source.cz", 2)):
        lines.append(f"{key} = {fmt(sc.source_center[i])}")
    lines.append(f"source.sigma = {fmt(sc.source_sigma)}")
    lines.append("source.cells = " + ";".join(f"{a},{b}" for a, b in sc.source_cells))
    lines.append(f"disc.modes = {sc.modes}")
    lines.append(f"disc.depth_elems = {sc.depth_elems}")
    lines.append(f"disc.height = {fmt(sc.height)}")
    lines.append(f"disc.grid = {sc.grid}")
    lines.append(f"quad.n_base = {sc.n_base}")
    lines.append(f"quad.levels = {sc.levels}")
    lines.append(f"quad.gl_order = {sc.gl_order}")
    lines.append(f"cutoff.tol = {fmt(sc.cutoff_tol)}")
    lines.append(f"run.seed = {sc.seed}")
    lines.append(f"run.threads = {sc.threads}")
    lines.append("output.cells = " + ";".join(f"{a},{b}" for a, b in sc.output_cells))
    lines.append("sweep.offsets = " + " ".join(repr(float(x)) for x in sc.sweep_offsets))
    return "\n".join(lines) + "\n"


def scenario_preset(name: str) -> Scenario:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return SCENARIOS[name]()


def _homogeneous_outgoing() -> Scenario:
    return Scenario(name="homogeneous_outgoing", k=1.5, medium_profile="constant",
                    r0=0.96, delta=0.02, modes=0, depth_elems=64, height=1.0,
                    source_kind="modal_mode0")


def _alpha_path() -> Scenario:
    return Scenario(name="alpha_path", k=2.5, alpha=(0.5, 0.0), medium_profile="layered",
                    layer_breaks=(0.0, 0.9), layer_eps=(2.0 + 0.6j,), r0=1.0, delta=0.05,
                    modes=2, depth_elems=8, height=2.0, source_kind="modal_mode0")


def _defect_gaussian() -> Scenario:
    return Scenario(name="defect_gaussian", k=0.45, medium_profile="constant",
                    r0=0.75, delta=0.1, modes=1, depth_elems=16, height=1.0,
                    defect_amp=0.2j, defect_center=(0.0, 0.0, 0.38), defect_sigma=0.1,
                    n_base=6, levels=1, gl_order=3)


def _layered_flux() -> Scenario:
    return Scenario(name="layered_flux", k=0.5, alpha=(0.1, 0.0), medium_profile="layered",
                    layer_breaks=(0.0, 0.3, 0.6), layer_eps=(2.2 + 0.0j, 1.4 + 0.0j),
                    r0=0.7, delta=0.1, modes=2, depth_elems=24, height=1.0,
                    source_kind="modal_mode0")


def _periodic_demo() -> Scenario:
    return Scenario(name="periodic_demo")


SCENARIOS = {
    "homogeneous_outgoing": _homogeneous_outgoing,
    "alpha_path": _alpha_path,
    "defect_gaussian": _defect_gaussian,
    "layered_flux": _layered_flux,
    "periodic_demo": _periodic_demo,
}
