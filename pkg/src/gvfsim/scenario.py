"""Scenario files: INI-style ``key = value`` text with sections
``[path] [controller] [init] [sim] [noise] [disturbance] [output]``.

Numbers use ``.`` as the decimal separator regardless of locale.  Angles may
also be written as multiples of ``pi`` (``pi``, ``-pi/2``, ``0.5*pi``).
"""
from __future__ import annotations

import configparser
import inspect
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .geometry import CATALOG, ParametricPath
from .sim import (
    ControllerSpec,
    DisturbanceModel,
    InitialState,
    NoiseModel,
    PathSpec,
    Scenario,
)

__all__ = [
    "ScenarioError",
    "ScenarioFile",
    "parse_scenario",
    "load_scenario",
    "bundled_scenarios",
    "resolve_scenario_path",
]

SECTIONS = ("path", "controller", "init", "sim", "noise", "disturbance", "output")

_KEYS = {
    "controller": {"kind", "s", "k1", "k2", "k_theta", "k1t", "k2t", "k3t", "velocity_source"},
    "init": {"x", "y", "theta", "w"},
    "sim": {"dt", "control_period", "t", "seed"},
    "noise": {"power", "sample_time"},
    "disturbance": {"kind", "r", "tau", "sample_time"},
    "output": {"dir", "stem"},
}
_REQUIRED = {"path": {"name"}, "controller": {"kind"}, "init": {"x", "y"}, "sim": {"dt", "t"}}
_STRINGS = {("path", "name"), ("controller", "kind"), ("controller", "velocity_source"),
            ("disturbance", "kind"), ("output", "dir"), ("output", "stem")}

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_PI_RE = re.compile(rf"^([+-])?\s*(?:({_NUM})\s*\*\s*)?pi(?:\s*/\s*({_NUM}))?$")
_FLOAT_RE = re.compile(rf"^[+-]?{_NUM}$")


class ScenarioError(ValueError):
    """Invalid scenario text; carries the 1-based line and column when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 key: Optional[str] = None, source: str = "<scenario>"):
        self.line, self.column, self.key, self.source = line, column, key, source
        where = source
        if line is not None:
            where += f":{line}:{column or 1}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ScenarioFile:
    """A parsed scenario plus its output settings."""

    scenario: Scenario
    out_dir: Optional[str] = None
    stem: str = "trace"
    source: str = "<scenario>"


def _parse_number(text: str) -> float:
    text = text.strip()
    if _FLOAT_RE.match(text):
        return float(text)
    m = _PI_RE.match(text)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        mul = float(m.group(2)) if m.group(2) else 1.0
        div = float(m.group(3)) if m.group(3) else 1.0
        return sign * mul * math.pi / div
    raise ValueError(f"not a number: {text!r}")


def _locate(lines, section: str, key: Optional[str]):
    """1-based (line, column) of a key (or section header if key is None)."""
    current = None
    for i, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
            if key is None and current == section:
                return i, raw.index("[") + 1
            continue
        if current != section or key is None or not stripped or stripped[0] in "#;":
            continue
        name = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
        if name == key:
            sep = re.search(r"[=:]", raw)
            col = sep.end() + 1 if sep else raw.index(stripped) + 1
            while col <= len(raw) and raw[col - 1] == " ":
                col += 1
            return i, col
    return None, None


def _path_params(name: str):
    builder = CATALOG[name]
    return set(inspect.signature(builder).parameters)


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioFile:
    """Parse and validate scenario text.

    Raises
    ------
    ScenarioError
        On syntax errors, unknown sections or keys, missing required keys,
        malformed numbers or values that violate scenario invariants.
    """
    lines = text.splitlines()
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError("key outside of any section", exc.lineno, 1, source=source) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ScenarioError(exc.message.split(": ", 1)[-1], exc.lineno, 1, source=source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ScenarioError("malformed line", line, 1, source=source) from None

    def fail(msg, section, key=None):
        line, col = _locate(lines, section, key)
        raise ScenarioError(msg, line, col, key=key, source=source)

    for sec in cp.sections():
        if sec not in SECTIONS:
            fail(f"unknown section [{sec}]; expected one of {', '.join(SECTIONS)}", sec)
    for sec in cp.sections():
        if sec == "path":
            continue
        for key in cp.options(sec):
            if key not in _KEYS[sec]:
                fail(f"unknown key '{key}' in [{sec}]", sec, key)
    for sec, keys in _REQUIRED.items():
        if not cp.has_section(sec):
            raise ScenarioError(f"missing required section [{sec}]", source=source)
        for k in sorted(keys):
            if not cp.has_option(sec, k):
                fail(f"missing required key '{k}' in [{sec}]", sec)

    path_name = cp.get("path", "name").strip()
    if path_name not in CATALOG:
        fail(f"unknown path {path_name!r}; valid names: {', '.join(sorted(CATALOG))}", "path", "name")
    allowed = dict(_KEYS, path={"name"} | _path_params(path_name))

    values = {}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            if key not in allowed[sec]:
                fail(f"unknown key '{key}' in [{sec}]", sec, key)
            if (sec, key) in _STRINGS:
                values[sec, key] = raw.strip()
                continue
            try:
                values[sec, key] = _parse_number(raw)
            except ValueError as exc:
                fail(str(exc), sec, key)

    def num(sec, key, default=None):
        return values.get((sec, key), default)

    for key in ("dt", "t", "control_period"):
        v = num("sim", key)
        if v is not None and not (v > 0 and math.isfinite(v)):
            fail(f"'{key}' must be a positive finite number, got {v!r}", "sim", key)
    seed = num("sim", "seed", 0.0)
    if seed != int(seed) or not 0 <= seed < 2 ** 64:
        fail("'seed' must be an unsigned 64-bit integer", "sim", "seed")

    path = PathSpec(path_name, {k: v for (s, k), v in values.items() if s == "path" and k != "name"})
    built = path.build()
    kind = values["controller", "kind"]
    if kind != "integral_curve" and not isinstance(built, ParametricPath):
        fail(f"controller kind '{kind}' needs a parametric path, '{path_name}' is implicit",
             "controller", "kind")

    ctrl_kwargs = {k: v for (s, k), v in values.items() if s == "controller" and k != "kind"}
    try:
        controller = ControllerSpec(kind=kind, **ctrl_kwargs)
    except ValueError as exc:
        fail(str(exc), "controller", "kind")
    for key in ("s", "k1", "k2", "k_theta", "k1t", "k2t", "k3t"):
        v = ctrl_kwargs.get(key)
        if v is not None and not v > 0:
            fail(f"'{key}' must be positive", "controller", key)
    if controller.kind == "traj_track" and not controller.has_traj_gains:
        fail("traj_track needs k1t, k2t and k3t", "controller", "kind")

    init = InitialState(num("init", "x"), num("init", "y"), num("init", "theta", 0.0), num("init", "w", 0.0))

    noise = None
    if cp.has_section("noise"):
        try:
            noise = NoiseModel(num("noise", "power", 0.0), num("noise", "sample_time", 0.1))
        except ValueError as exc:
            fail(str(exc), "noise")
    disturbance = None
    if cp.has_section("disturbance"):
        try:
            disturbance = DisturbanceModel(values.get(("disturbance", "kind"), "constant_bound"),
                                           num("disturbance", "r", 0.0), num("disturbance", "tau", 1.0),
                                           num("disturbance", "sample_time", 0.1))
        except ValueError as exc:
            fail(str(exc), "disturbance")

    dt = num("sim", "dt")
    try:
        scenario = Scenario(path=path, controller=controller, init=init, dt=dt,
                            control_period=num("sim", "control_period", max(dt, 0.05)),
                            T=num("sim", "t"), noise=noise, disturbance=disturbance, seed=int(seed))
    except ValueError as exc:
        fail(str(exc), "sim", "control_period")
    return ScenarioFile(scenario=scenario, out_dir=values.get(("output", "dir")),
                        stem=values.get(("output", "stem"), Path(source).stem or "trace"),
                        source=source)


def bundled_scenarios() -> dict:
    """Names and paths of the scenario files shipped with the package."""
    root = resources.files("gvfsim") / "scenarios"
    return {p.name[:-len(".scenario")]: Path(str(p)) for p in root.iterdir()
            if p.name.endswith(".scenario")}


def resolve_scenario_path(name_or_path) -> Path:
    """A filesystem path, or the name of a bundled scenario (with or without suffix)."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    bundled = bundled_scenarios()
    key = p.name[:-len(".scenario")] if p.name.endswith(".scenario") else p.name
    if key in bundled:
        return bundled[key]
    raise FileNotFoundError(f"no scenario file or bundled scenario named {str(name_or_path)!r}; "
                            f"bundled: {', '.join(sorted(bundled))}")


def load_scenario(name_or_path) -> ScenarioFile:
    path = resolve_scenario_path(name_or_path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ScenarioError(f"not valid UTF-8 ({exc.reason})", source=str(path)) from None
    return parse_scenario(text, source=str(path))
