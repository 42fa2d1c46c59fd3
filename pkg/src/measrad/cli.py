"""Scenario runner.

Configs are YAML files validated against :data:`SCHEMA`.  Every CSV starts
with ``#`` lines echoing the normalized config, so a CSV can be passed back
to ``run`` to reproduce itself.  Complex numbers in configs are written as
``[re, im]`` pairs.

    measrad run presets/stimulated_spin.yaml --out results
    measrad sweep presets/stimulated_spin.yaml --param measurement.tau --values 0 100 200
    measrad verify --seed 42

The environment variable MEASRAD_THREADS sets the number of worker threads
used across photon grid points (default 1).  Row order never depends on it.
"""
from __future__ import annotations

import argparse
import copy
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from . import density as dn
from . import spontaneous as spn
from . import stimulated as stm
from . import verify as vf
from .kernels import (FormFactors, PhotonGrid, SmallRecoilKernel, coupling,
                      formation_time, on_shell_energy, polarization_basis)
from .polarization import UndefinedPolarization, stokes_from_chi

log = logging.getLogger("measrad")

KINDS = ("stimulated-spin", "stimulated-momentum", "stimulated-position",
         "stimulated-entangled", "spontaneous-spin", "spontaneous-momentum",
         "spontaneous-position", "classical-edge", "oracle-verify")
CONFIG_BEGIN = "# --- config ---"
CONFIG_END = "# --- end config ---"
DEFAULT_TOLERANCE = 1e-6


class ConfigError(ValueError):
    pass


class ScenarioError(RuntimeError):
    pass


# --- schema -----------------------------------------------------------------

_num = {"type": "number"}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_cnum = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_spinor = {"type": "array", "items": _cnum, "minItems": 2, "maxItems": 2}
_axis = {"oneOf": [{"type": "array", "items": _num, "minItems": 1},
                   {"type": "object", "required": ["min", "max", "n"],
                    "properties": {"min": _num, "max": _num,
                                   "n": {"type": "integer", "minimum": 1},
                                   "spacing": {"enum": ["log", "linear"]}},
                    "additionalProperties": False}]}
_packet = {
    "type": "object",
    "required": ["p0", "sigma"],
    "properties": {"type": {"const": "packet"}, "p0": _vec3, "x0": _vec3,
                   "sigma": {"type": "number", "exclusiveMinimum": 0},
                   "xi": _vec3, "spinor": _spinor},
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "particle": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["packet", "mixture", "superposition", "beam", "pair"]},
                "p0": _vec3, "x0": _vec3, "sigma": _num, "xi": _vec3, "spinor": _spinor,
                "components": {"type": "array", "items": _packet, "minItems": 1},
                "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "coeffs": {"type": "array", "items": _cnum},
                "packet": _packet,
                "n": {"type": "integer", "minimum": 1},
                "spacing": _vec3,
                "packet1": _packet, "packet2": _packet,
                "f": {"type": "array", "items": {"type": "array", "items": _cnum,
                                                 "minItems": 2, "maxItems": 2},
                      "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
        "measurement": {
            "type": "object",
            "properties": {
                "zeta": _vec3, "p_r": _vec3, "chi": _spinor, "phi": _packet,
                "tau": {"type": "number", "minimum": 0},
                "eval": {"enum": ["full", "small_recoil"]},
                "route": {"enum": ["trace", "curly", "reduced"]},
                "small_recoil": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "form_factors": {
            "type": "object",
            "properties": {"F_e": _num, "F_m": _num, "table": {"type": "string"}},
            "additionalProperties": False,
        },
        "photons": {
            "type": "object",
            "required": ["k0", "theta"],
            "properties": {"k0": _axis, "theta": _axis, "phi": _axis,
                           "convention": {"enum": ["spherical", "beta_perp"]},
                           "axis": _vec3},
            "additionalProperties": False,
        },
        "probe": {
            "type": "object",
            "required": ["d"],
            "properties": {"d": {"type": "array", "items": _cnum, "minItems": 2, "maxItems": 2},
                           "D": {"type": "array", "items": {"type": "array", "items": _cnum,
                                                            "minItems": 2, "maxItems": 2},
                                 "minItems": 2, "maxItems": 2}},
            "additionalProperties": False,
        },
        "quadrature": {
            "type": "object",
            "properties": {"order": {"type": "integer", "minimum": 2},
                           "rtol": {"type": "number", "exclusiveMinimum": 0},
                           "convergence": {"type": "boolean"},
                           "tolerance": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                           "dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_NEEDS = {
    "stimulated-spin": ("particle", "photons", "measurement.zeta"),
    "stimulated-momentum": ("particle", "photons", "measurement.p_r"),
    "stimulated-position": ("particle", "photons", "measurement.phi"),
    "stimulated-entangled": ("particle", "photons", "measurement.zeta"),
    "spontaneous-spin": ("particle", "photons", "measurement.zeta"),
    "spontaneous-momentum": ("particle", "photons", "measurement.p_r"),
    "spontaneous-position": ("particle", "photons", "measurement.phi"),
    "classical-edge": ("particle", "photons"),
    "oracle-verify": (),
}


def _lookup(cfg, path: str):
    cur = cfg
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(path)
        cur = cur[part]
    return cur


def validate_config(cfg) -> dict:
    """Schema plus semantic checks; returns a deep copy."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = copy.deepcopy(cfg)
    kind = cfg["kind"]
    for need in _NEEDS[kind]:
        try:
            _lookup(cfg, need)
        except KeyError:
            raise ConfigError(f"{kind} needs '{need}'") from None
    meas = cfg.get("measurement", {})
    for key in ("zeta",):
        if key in meas and abs(np.linalg.norm(meas[key]) - 1) > 1e-10:
            raise ConfigError(f"measurement.{key} must be a unit vector")
    if "photons" in cfg:
        ph = cfg["photons"]
        for key in ("k0", "theta", "phi"):
            if key in ph and len(_axis_values(ph[key], key)) == 0:
                raise ConfigError(f"photon grid is empty (photons.{key})")
        if np.any(_axis_values(ph["k0"], "k0") <= 0):
            raise ConfigError("photon energies must be positive")
    part = cfg.get("particle")
    if part is not None:
        _check_particle(part, kind)
    return cfg


def _check_particle(part, kind):
    t = part["type"]
    required = {"packet": ("p0", "sigma"), "mixture": ("components",),
                "superposition": ("components", "coeffs"), "beam": ("packet", "n"),
                "pair": ("packet1", "packet2", "f")}[t]
    for key in required:
        if key not in part:
            raise ConfigError(f"particle of type {t} needs '{key}'")
    if t == "packet" and part.get("sigma", 0) <= 0:
        raise ConfigError("particle.sigma must be positive")
    if t == "mixture" and "weights" in part and len(part["weights"]) != len(part["components"]):
        raise ConfigError("mixture weights and components differ in length")
    if t == "superposition" and len(part["coeffs"]) != len(part["components"]):
        raise ConfigError("superposition coeffs and components differ in length")
    allowed = {
        "stimulated-spin": ("packet", "mixture", "beam"),
        "stimulated-momentum": ("packet", "mixture", "superposition"),
        "stimulated-position": ("packet", "superposition"),
        "stimulated-entangled": ("pair",),
        "spontaneous-spin": ("packet", "mixture"),
        "spontaneous-momentum": ("packet", "mixture", "superposition"),
        "spontaneous-position": ("packet", "superposition"),
        "classical-edge": ("packet", "mixture"),
        "oracle-verify": (),
    }[kind]
    if t not in allowed:
        raise ConfigError(f"{kind} does not accept a particle of type {t}")


def _axis_values(spec, name="axis") -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    n = int(spec["n"])
    lo, hi = float(spec["min"]), float(spec["max"])
    spacing = spec.get("spacing", "log" if name == "k0" else "linear")
    if spacing == "log":
        if lo <= 0 or hi <= 0:
            raise ConfigError(f"log spacing needs positive bounds ({name})")
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


# --- config loading ----------------------------------------------------------

def read_config_text(text: str) -> dict:
    """Parse YAML, or the config echo at the top of an output CSV."""
    lines = text.splitlines()
    if CONFIG_BEGIN in lines:
        i0 = lines.index(CONFIG_BEGIN)
        if CONFIG_END not in lines:
            raise ConfigError("config echo is not terminated")
        i1 = lines.index(CONFIG_END)
        body = "\n".join(ln[2:] if ln.startswith("# ") else ln[1:] for ln in lines[i0 + 1:i1])
        text = body
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        preset = resources.files("measrad") / "presets" / p.name
        if preset.is_file():
            return validate_config(read_config_text(preset.read_text()))
        raise ConfigError(f"config file not found: {path}")
    return validate_config(read_config_text(p.read_text()))


def preset_paths() -> list[Path]:
    root = resources.files("measrad") / "presets"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml"))


def config_echo(cfg) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None, width=100)


# --- building physics objects ----------------------------------------------

def _cvec(pairs) -> np.ndarray:
    return np.array([complex(re, im) for re, im in pairs])


def _packet(spec) -> dn.GaussianPacket:
    spinor = _cvec(spec["spinor"]) if "spinor" in spec else None
    return dn.GaussianPacket(spec["p0"], spec.get("x0", [0.0, 0.0, 0.0]), spec["sigma"],
                             xi=spec.get("xi"), spinor=spinor)


def build_particle(part):
    t = part["type"]
    if t == "packet":
        return _packet(part)
    if t == "mixture":
        comps = [_packet(c) for c in part["components"]]
        return dn.Mixture(comps, part.get("weights", [1.0] * len(comps)))
    if t == "superposition":
        return dn.Superposition([_packet(c) for c in part["components"]], _cvec(part["coeffs"]))
    if t == "beam":
        base = part["packet"]
        step = np.asarray(part.get("spacing", [0.0, 0.0, 0.0]), dtype=float)
        x0 = np.asarray(base.get("x0", [0.0, 0.0, 0.0]), dtype=float)
        out = []
        for i in range(int(part["n"])):
            spec = dict(base, x0=(x0 + i * step).tolist())
            out.append(_packet(spec))
        return out
    if t == "pair":
        f = np.array([_cvec(row) for row in part["f"]])
        return _packet(part["packet1"]), _packet(part["packet2"]), f
    raise ConfigError(f"unknown particle type {t!r}")


def _reference_packet(particle) -> dn.GaussianPacket:
    if isinstance(particle, dn.GaussianPacket):
        return particle
    if isinstance(particle, (list, tuple)):
        return _reference_packet(particle[0])
    if isinstance(particle, dn.Mixture):
        return _reference_packet(particle.components[0])
    if isinstance(particle, dn.Superposition):
        return _reference_packet(particle.packets[0])
    raise TypeError(type(particle))


def build_setup(cfg) -> stm.Setup:
    ff = cfg.get("form_factors", {})
    if "table" in ff:
        form = FormFactors.from_csv(ff["table"])
    else:
        form = FormFactors(ff.get("F_e", 1.0), ff.get("F_m", 1.0))
    q = cfg.get("quadrature", {})
    alpha = cfg.get("alpha")
    return stm.Setup(kernel=SmallRecoilKernel(form),
                     charge=coupling(alpha) if alpha else coupling(),
                     order=int(q.get("order", 16)), rtol=float(q.get("rtol", 1e-8)),
                     tau=float(cfg.get("measurement", {}).get("tau", 0.0)))


def build_grid(cfg) -> PhotonGrid:
    ph = cfg["photons"]
    return PhotonGrid(_axis_values(ph["k0"], "k0"), _axis_values(ph["theta"], "theta"),
                      _axis_values(ph.get("phi", [0.0]), "phi"))


def _mapper():
    raw = os.environ.get("MEASRAD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MEASRAD_THREADS must be an integer, got {raw!r}") from None
    if n <= 1:
        return map, None
    pool = ThreadPoolExecutor(max_workers=n)
    return pool.map, pool


# --- tables -----------------------------------------------------------------

@dataclass
class Table:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    raw: list | None = None
    key: tuple = ()           # columns compared by the order-doubling check

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _stokes(values):
    try:
        st = stokes_from_chi(np.asarray(values))
        return st.A, st.b
    except UndefinedPolarization:
        return 0.0, np.full(3, np.nan)


def _modes(cfg, grid, particle):
    ph = cfg["photons"]
    conv = ph.get("convention", "spherical")
    axis = ph.get("axis", cfg.get("measurement", {}).get("zeta", [0.0, 0.0, 1.0]))
    ref = _reference_packet(particle)
    beta = ref.p0 / float(on_shell_energy(ref.p0))
    pts = list(grid.points())
    modes = [polarization_basis(k, conv, zeta=axis, beta=beta) for *_, k in pts]
    return pts, modes, beta


def _t_f(mode, beta) -> float:
    ft = formation_time(mode.k, beta)
    return math.inf if ft.unbounded else ft.exact


def _range(values):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    return [float(v.min()), float(v.max())] if v.size else None


STIM_COLUMNS = ["k0", "theta", "phi", "A1_re", "A1_im", "A2_re", "A2_im",
                "A", "b1", "b2", "b3", "normalization", "window_mod", "t_f",
                "quad_error", "converged"]


def _stimulated_table(cfg, fn, particle, extra=None) -> Table:
    grid = build_grid(cfg)
    pts, modes, beta = _modes(cfg, grid, particle)
    mapper, pool = _mapper()
    try:
        results = list(mapper(fn, modes))
    finally:
        if pool:
            pool.shutdown()
    probe = cfg.get("probe")
    cols = list(STIM_COLUMNS)
    if probe:
        cols.append("P_cond")
        pr = stm.CoherentProbe(_cvec(probe["d"]),
                               np.array([_cvec(r) for r in probe["D"]]) if "D" in probe
                               else np.eye(2))
    extra_cols = list(extra[0]) if extra else []
    cols += extra_cols
    rows = []
    for (k0, th, ph, _), mode, res in zip(pts, modes, results):
        amp = res if isinstance(res, stm.RadiationAmplitude) else res[0]
        v = np.asarray(amp.values)
        A, b = _stokes(v)
        row = [k0, th, ph, v[0].real, v[0].imag, v[1].real, v[1].imag, A, *b,
               amp.normalization, amp.window_mod, _t_f(mode, beta), amp.error, amp.converged]
        if probe:
            row.append(stm.conditional_probability(pr, v))
        if extra:
            row += list(extra[1](mode, res))
        rows.append(row)
    amps = [r if isinstance(r, stm.RadiationAmplitude) else r[0] for r in results]
    summary = {
        "normalization": _range([a.normalization for a in amps]),
        "t_f": _range([r[cols.index("t_f")] for r in rows]),
        "window_mod": _range([a.window_mod for a in amps]),
        "quadrature_converged": bool(all(a.converged for a in amps)),
        "max_quad_error": float(max(a.error for a in amps)),
    }
    return Table(cols, rows, summary, key=("A1_re", "A1_im", "A2_re", "A2_im"))


SPONT_COLUMNS = ["k0", "theta", "phi", "A", "b1", "b2", "b3", "dP",
                 "measured", "window_mod", "t_f", "quad_error", "converged"]


def _spontaneous_table(cfg, fn, particle, extra=None) -> Table:
    grid = build_grid(cfg)
    pts, modes, beta = _modes(cfg, grid, particle)
    mapper, pool = _mapper()
    try:
        results = list(mapper(fn, modes))
    finally:
        if pool:
            pool.shutdown()
    cols = list(SPONT_COLUMNS) + (list(extra[0]) if extra else [])
    rows, raw = [], []
    for (k0, th, ph, _), mode, res in zip(pts, modes, results):
        sd = res if isinstance(res, spn.SpectralDensity) else res.spectrum
        row = [k0, th, ph, *spn.stokes_row(sd), sd.measured, sd.window_mod,
               _t_f(mode, beta), sd.error, sd.converged]
        if extra:
            row += list(extra[1](mode, res))
        rows.append(row)
        raw.append({"k0": k0, "theta": th, "phi": ph,
                    "re": np.real(sd.matrix).tolist(), "im": np.imag(sd.matrix).tolist()})
    sds = [r if isinstance(r, spn.SpectralDensity) else r.spectrum for r in results]
    summary = {
        "measured": _range([s.measured for s in sds]),
        "t_f": _range([r[cols.index("t_f")] for r in rows]),
        "window_mod": _range([s.window_mod for s in sds]),
        "quadrature_converged": bool(all(s.converged for s in sds)),
        "max_quad_error": float(max(s.error for s in sds)),
    }
    return Table(cols, rows, summary, raw, key=("dP",))


# --- scenario runners ----------------------------------------------------------

def _run_stimulated_spin(cfg) -> Table:
    particle = build_particle(cfg["particle"])
    setup = build_setup(cfg)
    meas = cfg["measurement"]
    zeta = np.asarray(meas["zeta"], dtype=float)
    ev = meas.get("eval", "full")
    if isinstance(particle, list):
        def fn(mode):
            res = stm.beam_spin_amplitude(particle, zeta, mode, setup, ev)
            return stm.RadiationAmplitude(res.amplitude, 1 - res.rho0, 0.0, True,
                                          stm._window_mod(mode, particle[0].p0, setup))
        table = _stimulated_table(cfg, fn, particle)
        table.summary["beam_n"] = len(particle)
        return table

    def fn(mode):
        return stm.amplitude_spin_measurement(particle, zeta, mode, setup,
                                              mode_of_eval=ev)
    return _stimulated_table(cfg, fn, particle)


def _run_stimulated_momentum(cfg) -> Table:
    particle = build_particle(cfg["particle"])
    setup = build_setup(cfg)
    meas = cfg["measurement"]
    small = bool(meas.get("small_recoil", False))
    p_r = np.asarray(meas["p_r"], dtype=float)
    return _stimulated_table(
        cfg, lambda mode: stm.amplitude_momentum_measurement(particle, p_r, mode, setup, small),
        particle)


def _run_stimulated_position(cfg) -> Table:
    psi = build_particle(cfg["particle"])
    phi = _packet(cfg["measurement"]["phi"])
    setup = build_setup(cfg)
    extra = (("transition_abs", "post_abs"),
             lambda mode, a: (float(np.linalg.norm(a.parts["transition"])),
                              float(np.linalg.norm(a.parts["post"]))))
    return _stimulated_table(
        cfg, lambda mode: stm.amplitude_position_measurement(psi, phi, mode, setup),
        psi, extra)


def _run_stimulated_entangled(cfg) -> Table:
    p1, p2, f = build_particle(cfg["particle"])
    setup = build_setup(cfg)
    zeta = np.asarray(cfg["measurement"]["zeta"], dtype=float)

    def fn(mode):
        res = stm.amplitude_entangled_spin(p1, p2, f, zeta, mode, setup)
        return res.amplitude, res
    extra = (("overlap_abs", "xi_eff1", "xi_eff2", "xi_eff3"),
             lambda mode, r: (abs(r[1].overlap), *r[1].effective_xi))
    return _stimulated_table(cfg, fn, p1, extra)


def _run_spontaneous_spin(cfg) -> Table:
    particle = build_particle(cfg["particle"])
    setup = build_setup(cfg)
    meas = cfg["measurement"]
    zeta = np.asarray(meas["zeta"], dtype=float)
    route = meas.get("route", "trace")
    small = bool(meas.get("small_recoil", False))
    return _spontaneous_table(
        cfg, lambda mode: spn.spectrum_spin_measured(particle, zeta, mode, setup,
                                                     route=route, small_recoil=small,
                                                     normalize=True),
        particle)


def _run_spontaneous_momentum(cfg) -> Table:
    particle = build_particle(cfg["particle"])
    setup = build_setup(cfg)
    meas = cfg["measurement"]
    p_r = np.asarray(meas["p_r"], dtype=float)
    chi = _cvec(meas["chi"]) if "chi" in meas else None
    small = bool(meas.get("small_recoil", False))
    F_e = float(cfg.get("form_factors", {}).get("F_e", 1.0))

    def fn(mode):
        sd = spn.spectrum_momentum_measured(particle, p_r, mode, chi, setup, small)
        lim = spn.momentum_charged_limit(particle, p_r, mode, chi, setup.charge, F_e)
        return _Pair(sd, lim)

    return _spontaneous_table(cfg, fn, particle,
                              (("dP_charged_limit",), lambda m, r: (r.limit.angular(),)))


@dataclass
class _Pair:
    """Spectral density with a companion reference density."""

    spectrum: spn.SpectralDensity
    limit: spn.SpectralDensity


def _run_spontaneous_position(cfg) -> Table:
    psi = build_particle(cfg["particle"])
    phi = _packet(cfg["measurement"]["phi"])
    setup = build_setup(cfg)
    names = ("incoherent", "interference", "transition", "post_coherent")
    extra = (tuple(f"dP_{n}" for n in names),
             lambda mode, r: tuple(mode.k0**2 * r.term(n) for n in names))
    return _spontaneous_table(
        cfg, lambda mode: spn.probability_position_measured(psi, phi, mode, setup), psi, extra)


def _run_classical_edge(cfg) -> Table:
    particle = build_particle(cfg["particle"])
    setup = build_setup(cfg)
    F_e = float(cfg.get("form_factors", {}).get("F_e", 1.0))
    ref = _reference_packet(particle)

    def fn(mode):
        return stm.amplitude_classical_edge(particle, mode, setup), mode

    def extra(mode, r):
        amp = r[0].values
        cf = stm.edge_closed_form(ref, mode, setup.charge, F_e)
        dev = float(np.abs(amp - cf).max() / max(np.abs(cf).max(), 1e-300))
        return (cf[0].real, cf[0].imag, cf[1].real, cf[1].imag, dev)
    cols = ("closed1_re", "closed1_im", "closed2_re", "closed2_im", "rel_dev_closed")
    table = _stimulated_table(cfg, fn, particle, (cols, extra))
    table.summary["max_rel_dev_closed"] = float(np.nanmax(table.column("rel_dev_closed")))
    return table


def _run_oracle_verify(cfg) -> Table:
    res = vf.run_all(int(cfg.get("seed", 42)), scale=float(cfg.get("scale", 1.0)))
    rows = []
    for suite, checks in res.items():
        for c in checks:
            rows.append([suite, c.name.replace(",", ";"), c.max_error, c.tolerance, c.n,
                         "PASS" if c.passed else "FAIL"])
    summary = {"all_passed": vf.all_passed(res), "checks": len(rows)}
    return Table(["suite", "check", "max_error", "tolerance", "n", "status"], rows, summary)


RUNNERS = {
    "stimulated-spin": _run_stimulated_spin,
    "stimulated-momentum": _run_stimulated_momentum,
    "stimulated-position": _run_stimulated_position,
    "stimulated-entangled": _run_stimulated_entangled,
    "spontaneous-spin": _run_spontaneous_spin,
    "spontaneous-momentum": _run_spontaneous_momentum,
    "spontaneous-position": _run_spontaneous_position,
    "classical-edge": _run_classical_edge,
    "oracle-verify": _run_oracle_verify,
}


def order_doubling(cfg, table: Table, tolerance: float) -> dict:
    """Rerun at twice the quadrature order and compare the key columns."""
    cfg2 = copy.deepcopy(cfg)
    q = cfg2.setdefault("quadrature", {})
    q["order"] = 2 * int(q.get("order", 16))
    q["convergence"] = False
    other = RUNNERS[cfg["kind"]](cfg2)
    a = np.array([table.column(c) for c in table.key])
    b = np.array([other.column(c) for c in table.key])
    scale = np.nanmax(np.abs(b)) if b.size else 0.0
    rel = float(np.nanmax(np.abs(a - b)) / scale) if scale > 0 else 0.0
    return {"order": q["order"] // 2, "doubled": q["order"], "max_rel_change": rel,
            "tolerance": tolerance, "passed": bool(rel <= tolerance)}


def run_scenario(cfg, tolerance: float | None = None) -> Table:
    kind = cfg["kind"]
    try:
        table = RUNNERS[kind](cfg)
        q = cfg.get("quadrature", {})
        if q.get("convergence") and table.key:
            tol = tolerance if tolerance is not None else q.get("tolerance", DEFAULT_TOLERANCE)
            table.summary["order_doubling"] = order_doubling(cfg, table, float(tol))
    except (ConfigError, ScenarioError):
        raise
    except Exception as exc:
        raise ScenarioError(f"scenario {kind}: {type(exc).__name__}: {exc}") from exc
    table.summary = {"kind": kind, "rows": len(table.rows), **table.summary}
    return table


# --- output -----------------------------------------------------------------

def render_csv(cfg, table: Table, sweep: tuple | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# measrad {__version__}\n")
    buf.write(f"# kind: {cfg['kind']}\n")
    if sweep is not None:
        buf.write(f"# sweep: {sweep[0]} = {json.dumps(sweep[1])}\n")
    buf.write(CONFIG_BEGIN + "\n")
    for line in config_echo(cfg).splitlines():
        buf.write(f"# {line}\n")
    buf.write(CONFIG_END + "\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_outputs(cfg, table: Table, out_dir, sweep=None) -> dict:
    out = Path(out_dir)
    name = cfg.get("output", {}).get("name", cfg["kind"].replace("-", "_"))
    if sweep is not None:
        name = f"{name}_sweep"
    paths = {"csv": out / f"{name}.csv", "summary": out / f"{name}.summary.json"}
    _atomic_write(paths["csv"], render_csv(cfg, table, sweep))
    _atomic_write(paths["summary"], json.dumps(_jsonable(table.summary), indent=1,
                                               sort_keys=True) + "\n")
    if table.raw is not None:
        paths["json"] = out / f"{name}.json"
        _atomic_write(paths["json"], json.dumps(_jsonable(table.raw), sort_keys=True) + "\n")
    return paths


# --- sweep ------------------------------------------------------------------

def set_param(cfg, path: str, value) -> dict:
    """Copy of cfg with the scalar at ``path`` replaced."""
    try:
        current = _lookup(cfg, path)
    except KeyError:
        raise ConfigError(f"unknown parameter path {path!r}") from None
    if isinstance(current, (dict, list)):
        raise ConfigError(f"parameter path {path!r} does not address a scalar")
    if isinstance(value, (dict, list)):
        raise ConfigError("sweep values must be scalars")
    new = copy.deepcopy(cfg)
    parts = path.split(".")
    cur = new
    for p in parts[:-1]:
        cur = cur[p]
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    cur[parts[-1]] = value
    return validate_config(new)


def parse_values(tokens) -> list:
    out = []
    for tok in tokens or []:
        for piece in str(tok).split(","):
            piece = piece.strip()
            if piece:
                out.append(yaml.safe_load(piece))
    return out


def sweep(cfg, path: str, values, tolerance=None) -> Table | None:
    if not values:
        log.warning("sweep over %s has no values; nothing to do", path)
        return None
    set_param(cfg, path, values[0])      # reject a bad path before any work
    blocks = []
    for v in values:
        t = run_scenario(set_param(cfg, path, v), tolerance)
        blocks.append((v, t))
    cols = [path] + blocks[0][1].columns
    rows = [[v] + r for v, t in blocks for r in t.rows]
    summary = {"param": path, "values": list(values),
               "blocks": [t.summary for _, t in blocks]}
    return Table(cols, rows, summary)


# --- entry point --------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (default: ./out)")
    common.add_argument("--tolerance", type=float, default=None,
                        help="relative tolerance of the order-doubling check")
    p = argparse.ArgumentParser(prog="measrad", parents=[common],
                                description="Measurement-induced radiation scenarios.")
    p.add_argument("--version", action="version", version=f"measrad {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one scenario config")
    r.add_argument("config")
    s = sub.add_parser("sweep", parents=[common], help="run a config over parameter values")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="dotted path of a scalar, e.g. measurement.tau")
    s.add_argument("--values", nargs="*", default=[], help="values, space or comma separated")
    v = sub.add_parser("verify", parents=[common], help="run the oracle suites")
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--scale", type=float, default=1.0,
                   help="multiply the instance counts (1 = full suites)")
    sub.add_parser("presets", help="list shipped presets")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "presets":
            for path in preset_paths():
                print(path)
            return 0
        if args.command == "verify":
            res = vf.run_all(args.seed, scale=args.scale)
            print(vf.format_report(res))
            ok = vf.all_passed(res)
            print("ALL PASS" if ok else "FAILURES PRESENT")
            if args.out:
                cfg = {"kind": "oracle-verify", "seed": args.seed, "scale": args.scale}
                table = _run_oracle_verify(cfg)
                write_outputs(cfg, table, args.out)
            return 0 if ok else 1
        cfg = load_config(args.config)
        out = args.out or cfg.get("output", {}).get("dir", "out")
        if args.command == "run":
            table = run_scenario(cfg, args.tolerance)
            paths = write_outputs(cfg, table, out)
        else:
            values = parse_values(args.values)
            table = sweep(cfg, args.param, values, args.tolerance)
            if table is None:
                return 0
            paths = write_outputs(cfg, table, out, (args.param, values))
        print(json.dumps(_jsonable(table.summary), sort_keys=True))
        for k, pth in paths.items():
            print(f"{k}: {pth}")
        ok = True
        if cfg["kind"] == "oracle-verify":
            ok = bool(table.summary.get("all_passed"))
        od = table.summary.get("order_doubling")
        if od is not None and not od["passed"]:
            log.warning("order doubling changed results by %.2e > %.0e",
                        od["max_rel_change"], od["tolerance"])
            ok = False
        return 0 if ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
