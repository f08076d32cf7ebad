"""Scenario files: a sectioned key = value format with typed, range-checked keys."""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

from .errors import ConfigError

KINDS = ("rest_shape", "reach", "sense", "sensorimotor", "stats", "mc_oracle")
REACH_KINDS = ("reach", "sensorimotor")

REACH_CASES = {"I": (0.75, 0.375), "II": (1.0, 0.5), "III": (1.0, 0.5)}
SENSE_CASES = {"I": (0.8, 0.8), "II": (0.6, 0.5)}
LOOP_CASES = {"fig8": (0.5, 0.6)}


# -- value types -------------------------------------------------------------

def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _floats(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return tuple(float(p) for p in parts)


def _pair(text):
    v = _floats(text)
    if len(v) != 2:
        raise ValueError("expected two numbers")
    return v


def _optional_pair(text):
    return None if text.strip().lower() in ("", "none") else _pair(text)


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


def _str(text):
    return text.strip()


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


positive = (lambda v: v > 0, "must be positive")
non_negative = (lambda v: v >= 0, "must be >= 0")
at_least_two = (lambda v: v >= 2, "must be >= 2")
unit_interval = (lambda v: 0 <= v <= 1, "must lie in [0, 1]")
all_non_negative = (lambda v: all(x >= 0 for x in v), "entries must be >= 0")


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Optional[Tuple[Callable[[Any], bool], str]] = None


SCHEMA: Dict[str, Dict[str, Key]] = {
    "scenario": {
        "kind": Key(_choice(*KINDS), "reach"),
        "case": Key(_str, ""),
        "target": Key(_optional_pair, None),
        "seed": Key(_int, 0, non_negative),
        "duration": Key(_float, 2.0, positive),
        "dt": Key(_float, 1e-5, positive),
        "noise": Key(_float, 0.0, non_negative),
        "log_stride": Key(_int, 100, positive),
    },
    "rod": {
        "length": Key(_float, 0.2, positive),
        "base_radius": Key(_float, 0.01, positive),
        "tip_radius": Key(_float, 0.001, positive),
        "density": Key(_float, 1042.0, positive),
        "damping": Key(_float, 0.01, positive),
        "rotational_damping": Key(_choice("inertial", "literal"), "inertial"),
        "youngs_modulus": Key(_float, 1.0e4, positive),
        "shear_modulus": Key(_float, 1.0e4 / 3.0, positive),
        "water_density": Key(_float, 1022.0, positive),
        "drag_tangential": Key(_float, 0.155, positive),
        "drag_perpendicular": Key(_float, 5.065, positive),
        "elements": Key(_int, 100, at_least_two),
        "inextensible": Key(_bool, True),
        "drag": Key(_bool, True),
    },
    "muscles": {
        "lm_stress": Key(_float, 1.0e4, positive),
        "tm_stress": Key(_float, 2.5e4, positive),
        "exact_transverse": Key(_bool, False),
    },
    "cable": {
        "tau": Key(_float, 0.04, positive),
        "tau_adapt": Key(_float, 0.4, positive),
        "lambda": Key(_float, 0.02, positive),
        "b": Key(_float, 1.0, non_negative),
        "top_voltages": Key(_pair, (60.0, 80.0)),
        "bottom_voltages": Key(_pair, (40.0, 0.0)),
    },
    "control": {
        "chi": Key(_float, 200.0, non_negative),
        "epsilon": Key(_float, 0.05, positive),
        "hold": Key(_float, 0.1, non_negative),
        "stop_on_reach": Key(_bool, True),
        "mode": Key(_choice("estimate", "truth"), "estimate"),
    },
    "sensing": {
        "n_units": Key(_int, 21, at_least_two),
        "mu": Key(_float, 2.0, positive),
        "ring_tau": Key(_float, 0.01, positive),
        "k_theta": Key(_float, 5.0e4, positive),
        "k_r": Key(_float, 4.0e4, positive),
        "k_mu": Key(_float, 4.0e4, positive),
        "ring_mode": Key(_choice("A", "B"), "A"),
        "sense_dt": Key(_float, 1e-5, positive),
        "arm_shape": Key(_choice("straight", "bent"), "straight"),
        "bend": Key(_float, -2.0),
        "assumptions": Key(_choice("free", "known"), "free"),
        "field": Key(_choice("steady", "diffusion"), "steady"),
        "diffusivity": Key(_float, 0.1, positive),
    },
    "stats": {
        "x_range": Key(_pair, (0.0, 1.0)),
        "y_range": Key(_pair, (0.0, 1.0)),
        "nx": Key(_int, 11, positive),
        "ny": Key(_int, 11, positive),
    },
    "rest_shape": {
        "top_base": Key(_floats, (30.0, 40.0, 50.0, 60.0)),
        "top_tip": Key(_floats, (60.0, 80.0, 100.0, 120.0)),
        "b_sweep": Key(_floats, (0.0, 0.5, 1.0, 1.5, 2.0), all_non_negative),
        "b_sweep_voltages": Key(_pair, (40.0, 80.0)),
    },
    "mc_oracle": {
        "zeta0": Key(_float, 0.8, positive),
        "phi0": Key(_float, 1.0),
        "chi": Key(_float, 3.0),
        "dt": Key(_float, 1e-5, positive),
        "length": Key(_float, 1.0, positive),
    },
}


@dataclass
class Scenario:
    values: Dict[str, Dict[str, Any]]

    def __getitem__(self, section):
        return self.values[section]

    @property
    def kind(self):
        return self.values["scenario"]["kind"]

    @property
    def target(self):
        return self.values["scenario"]["target"]

    def echo(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()[:16]

    # -- parameter objects ------------------------------------------------
    def rod_params(self):
        from .rod import RodParameters
        r = self.values["rod"]
        return RodParameters(r["length"], r["base_radius"], r["tip_radius"], r["density"], r["damping"],
                             r["youngs_modulus"], r["shear_modulus"], r["water_density"],
                             r["drag_tangential"], r["drag_perpendicular"], r["elements"],
                             r["rotational_damping"])

    def cable_params(self):
        from .cable import CableParams
        c = self.values["cable"]
        return CableParams(c["tau"], c["tau_adapt"], c["lambda"], c["b"])

    def muscle_specs(self):
        from .muscles import default_muscles
        m = self.values["muscles"]
        return default_muscles(lm_stress=m["lm_stress"], tm_stress=m["tm_stress"])

    def consensus_params(self):
        from .sensing import ConsensusParams
        s = self.values["sensing"]
        return ConsensusParams(s["k_theta"], s["k_r"], s["k_mu"], s["ring_tau"])

    def initial_voltages(self):
        from .muscles import LM_BOTTOM, LM_TOP
        c = self.values["cable"]
        return {LM_TOP: c["top_voltages"], LM_BOTTOM: c["bottom_voltages"]}


def _line_numbers(text):
    """Map (section, key) and section headers to 1-based line numbers."""
    where = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), n)
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), n)
    return where


def _convert(section, key, raw, line=None):
    spec = SCHEMA[section][key]
    try:
        value = spec.parse(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}", line) from None
    if spec.check is not None and value is not None:
        ok, msg = spec.check
        if not ok(value):
            raise ConfigError(f"[{section}] {key} = {raw!r}: {msg}", line)
    return value


def resolve_key(name):
    """``section.key`` or a bare key that is unique across sections."""
    if "." in name:
        section, key = name.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {name!r}")
        return section, key
    hits = [s for s, keys in SCHEMA.items() if name in keys]
    if len(hits) != 1:
        raise ConfigError(f"unknown key {name!r}" if not hits
                          else f"ambiguous key {name!r}; qualify it with one of {', '.join(hits)}")
    return hits[0], name


def parse_scenario(text: str = "", overrides=()) -> Scenario:
    """Resolve a scenario from config text plus ``key=value`` overrides."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    lines = _line_numbers(text)
    values = {s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    given = set()
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            values[section][key] = _convert(section, key, raw, line)
            given.add((section, key))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        name, raw = item.split("=", 1)
        section, key = resolve_key(name.strip().lower() if "." not in name else name.strip())
        values[section][key] = _convert(section, key, raw)
        given.add((section, key))
    _finish(values, given, lines)
    return Scenario(values)


def _finish(values, given, lines):
    sc = values["scenario"]
    rod = values["rod"]
    kind = sc["kind"]
    case = sc["case"]
    if not rod["tip_radius"] < rod["base_radius"]:
        raise ConfigError("[rod] tip_radius must be smaller than base_radius", lines.get(("rod", "tip_radius")))
    presets = {"reach": REACH_CASES, "sensorimotor": LOOP_CASES, "sense": SENSE_CASES}.get(kind, {})
    if case:
        if kind == "stats":
            if case not in ("I", "II", "III"):
                raise ConfigError(f"stats case must be I, II or III, not {case!r}", lines.get(("scenario", "case")))
        elif case not in presets:
            raise ConfigError(f"unknown {kind} case {case!r}", lines.get(("scenario", "case")))
        elif sc["target"] is None:
            sc["target"] = presets[case]
        if kind == "reach" and case == "III" and ("rod", "inextensible") not in given:
            rod["inextensible"] = False
        if kind == "reach" and ("control", "mode") not in given:
            values["control"]["mode"] = "truth"
        if kind == "stats":
            _stats_preset(values, case, given)
        if kind == "sense" and case == "II" and ("sensing", "arm_shape") not in given:
            values["sensing"]["arm_shape"] = "bent"
    if kind in ("sense", "stats") and ("scenario", "duration") not in given:
        sc["duration"] = 1.0    # sensing results are read at one second
    if kind in REACH_KINDS and sc["target"] is None:
        raise ConfigError(f"{kind} scenarios need a target (or a case preset)", lines.get(("scenario", None)))
    if kind == "sense" and sc["target"] is None:
        raise ConfigError("sense scenarios need a target (or a case preset)", lines.get(("scenario", None)))
    if sc["target"] is not None and sc["target"] == (0.0, 0.0):
        raise ConfigError("target coincides with the arm base", lines.get(("scenario", "target")))
    ratio = sc["dt"] / values["sensing"]["sense_dt"]
    if kind in ("sensorimotor",) and (abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1):
        raise ConfigError("[sensing] sense_dt must divide [scenario] dt", lines.get(("sensing", "sense_dt")))


def _stats_preset(values, case, given):
    st, se = values["stats"], values["sensing"]
    preset = {
        "I": dict(x_range=(0.0, 1.0), nx=11, arm_shape="straight", assumptions="free"),
        "II": dict(x_range=(-0.5, 1.0), nx=16, arm_shape="bent", assumptions="free"),
        "III": dict(x_range=(-0.5, 1.0), nx=16, arm_shape="bent", assumptions="known"),
    }[case]
    for key, value in preset.items():
        section = "stats" if key in st else "sensing"
        if (section, key) not in given:
            values[section][key] = value


def load_scenario(path=None, overrides=()) -> Scenario:
    text = ""
    if path is not None:
        with open(path) as fh:
            text = fh.read()
    return parse_scenario(text, overrides)
