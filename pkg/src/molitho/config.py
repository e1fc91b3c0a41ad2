"""Experiment configuration: INI parsing, validation and canonical serialisation.

Every key is required.  Values are checked against the invariants of the
types they build, and any failure names the file, section, key and line.
"""

import configparser
import difflib
import hashlib
import re
from dataclasses import dataclass, field

from .beamline import SelectorSpec
from .deposition import DepositionParams, DriftModel, ScanParams
from .errors import ConfigError, MolithoError
from .physics import GratingSpec, InterferometerGeometry, MoleculeSpec
from .quantum import Interferometer

_GRATING = [
    ("period_d", float, "nm"),
    ("open_width_a", float, "nm"),
    ("thickness_b", float, "nm"),
    ("offset", float, "nm"),
]

SCHEMA = {
    "molecule": [("mass", float, "amu"), ("c3", float, "meV nm^3")],
    "source": [("temperature", float, "K")],
    "selector": [
        ("enabled", bool, ""),
        ("length", float, "mm"),
        ("groove_width", float, "um"),
        ("radius", float, "mm"),
        ("twist_angle", float, "rad"),
        ("spin_rate", float, "Hz"),
        ("grid_points", int, ""),
    ],
    "grating1": _GRATING,
    "grating2": _GRATING + [("delta_cut", float, "nm")],
    "geometry": [("L1", float, "mm"), ("L2", float, "mm"), ("source_distance", float, "cm")],
    "drift": [
        ("rate_g1", float, "nm/min"),
        ("rate_g2", float, "nm/min"),
        ("rate_det", float, "nm/min"),
        ("jitter_amp", float, "nm"),
        ("jitter_freq", float, "Hz"),
    ],
    "deposition": [
        ("exposure", float, "min"),
        ("target_density", float, "1/um^2"),
        ("field_w", float, "um"),
        ("field_h", float, "um"),
    ],
    "imaging": [
        ("px_size", float, "nm"),
        ("noise_rms", float, "nm"),
        ("t_line", float, "s"),
        ("stm_drift_rate", float, "nm/min"),
    ],
    "analysis": [
        ("dz_min", float, "nm"),
        ("dz_max", float, "nm"),
        ("offset", int, "px"),
        ("neighbor_mode", str, ""),
        ("bin", int, "px"),
        ("smooth_window", int, "px"),
        ("smooth_stride", int, "px"),
        ("d_init", float, "nm"),
    ],
    "run": [
        ("seed", int, ""),
        ("mu_max", int, ""),
        ("classical_rays", int, ""),
        ("classical_window", float, "periods"),
        ("pattern_points", int, ""),
    ],
}


def _types():
    return {(s, k): t for s, keys in SCHEMA.items() for k, t, _ in keys}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Validated configuration; ``values[section][key]`` holds typed values."""

    values: dict
    source: str = "<memory>"
    lines: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._validate()

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    def get(self, section, key):
        return self.values[section][key]

    def with_value(self, section, key, value):
        """Copy with one key replaced (type-coerced and re-validated)."""
        types = _types()
        if (section, key) not in types:
            raise ConfigError(f"unknown config key {section}.{key}")
        new = {s: dict(kv) for s, kv in self.values.items()}
        new[section][key] = _coerce(types[(section, key)], value, section, key, self.source,
                                    self.lines)
        return ExperimentConfig(new, self.source, self.lines)

    # typed views -----------------------------------------------------------
    @property
    def molecule(self):
        v = self.values["molecule"]
        return MoleculeSpec(v["mass"], v["c3"])

    def grating(self, i):
        v = self.values[f"grating{i}"]
        return GratingSpec(v["period_d"], v["open_width_a"], v["thickness_b"], v["offset"])

    @property
    def geometry(self):
        v = self.values["geometry"]
        return InterferometerGeometry(v["L1"], v["L2"], v["source_distance"])

    @property
    def selector(self):
        v = self.values["selector"]
        return SelectorSpec(v["length"], v["groove_width"], v["radius"], v["twist_angle"],
                            v["spin_rate"])

    @property
    def interferometer(self):
        return Interferometer(self.grating(1), self.grating(2), self.geometry, self.molecule,
                              self.values["grating2"]["delta_cut"], self.values["run"]["mu_max"])

    @property
    def drift(self):
        v = self.values["drift"]
        return DriftModel(v["rate_g1"], v["rate_g2"], v["rate_det"], v["jitter_amp"],
                          v["jitter_freq"])

    def deposition(self, seed=None):
        v = self.values["deposition"]
        s = self.values["run"]["seed"] if seed is None else seed
        return DepositionParams(v["exposure"], v["target_density"], v["field_w"], v["field_h"], s)

    @property
    def scan(self):
        return ScanParams(self.values["imaging"]["t_line"])

    @property
    def seed(self):
        return self.values["run"]["seed"]

    # validation ------------------------------------------------------------
    def _validate(self):
        checks = [
            ("molecule", "mass", lambda: self.molecule),
            ("grating1", "open_width_a", lambda: self.grating(1)),
            ("grating2", "open_width_a", lambda: self.grating(2)),
            ("geometry", "L1", lambda: self.geometry),
            ("selector", "groove_width", lambda: self.selector),
            ("grating2", "delta_cut", lambda: self.interferometer),
            ("drift", "jitter_amp", lambda: self.drift),
            ("deposition", "target_density", lambda: self.deposition()),
            ("imaging", "t_line", lambda: self.scan),
        ]
        for section, key, build in checks:
            try:
                build()
            except MolithoError as exc:
                raise ConfigError(_where(self.source, section, key, self.lines)
                                  + str(exc)) from None
        a = self.values["analysis"]
        rules = [
            ("source", "temperature", self.values["source"]["temperature"] > 0, "must be > 0"),
            ("selector", "grid_points", self.values["selector"]["grid_points"] >= 21,
             "must be >= 21"),
            ("imaging", "px_size", 1.0 <= self.values["imaging"]["px_size"] <= 4.0,
             "must lie in [1, 4] nm"),
            ("imaging", "noise_rms", self.values["imaging"]["noise_rms"] >= 0, "must be >= 0"),
            ("analysis", "dz_max", a["dz_min"] < a["dz_max"], "must exceed dz_min"),
            ("analysis", "offset", a["offset"] >= 1, "must be >= 1"),
            ("analysis", "neighbor_mode", a["neighbor_mode"] in ("ring", "block"),
             "must be 'ring' or 'block'"),
            ("analysis", "bin", a["bin"] >= 1, "must be >= 1"),
            ("analysis", "smooth_window", a["smooth_window"] >= 1, "must be >= 1"),
            ("analysis", "smooth_stride", a["smooth_stride"] >= 1, "must be >= 1"),
            ("analysis", "d_init", a["d_init"] > 0, "must be > 0"),
            ("run", "seed", 0 <= self.values["run"]["seed"] < 2 ** 64,
             "must be a 64-bit unsigned integer"),
            ("run", "mu_max", self.values["run"]["mu_max"] >= 1, "must be >= 1"),
            ("run", "classical_rays", self.values["run"]["classical_rays"] >= 64_000,
             "must be >= 64000"),
            ("run", "classical_window", self.values["run"]["classical_window"] >= 50,
             "must be >= 50"),
            ("run", "pattern_points", self.values["run"]["pattern_points"] >= 64,
             "must be >= 64"),
        ]
        for section, key, ok, msg in rules:
            if not ok:
                raise ConfigError(_where(self.source, section, key, self.lines) + f"{key} {msg}")

    # serialisation ---------------------------------------------------------
    def to_ini(self):
        out = []
        for section, keys in SCHEMA.items():
            out.append(f"[{section}]")
            for key, _, unit in keys:
                line = f"{key} = {_format(self.values[section][key])}"
                out.append(f"{line:<40s}# {unit}" if unit else line)
            out.append("")
        return "\n".join(out)

    @property
    def hash(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]


def _where(source, section, key, lines=None):
    line = (lines or {}).get((section, key))
    at = f":{line}" if line else ""
    return f"{source}{at}: [{section}] {key}: "


def _coerce(typ, raw, section, key, source, lines=None):
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            if isinstance(raw, float) and raw.is_integer():
                return int(raw)
            return int(str(raw).strip())
        if typ is float:
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(_where(source, section, key, lines)
                          + f"cannot read {raw!r} as {typ.__name__}") from None


def _line_numbers(text):
    lines = {}
    section = None
    for i, ln in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", ln)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^#;=\s][^=]*?)\s*=", ln)
        if m and section:
            lines[(section, m.group(1))] = i
    return lines


def parse_config_text(text, source="<string>"):
    lines = _line_numbers(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for section in cp.sections():
        if section not in SCHEMA:
            hint = difflib.get_close_matches(section, SCHEMA, n=1)
            tip = f"; did you mean [{hint[0]}]?" if hint else ""
            raise ConfigError(f"{source}: unknown section [{section}]{tip}")
        valid = [k for k, _, _ in SCHEMA[section]]
        for key in cp[section]:
            if key not in valid:
                hint = difflib.get_close_matches(key, valid, n=1, cutoff=0.0)
                raise ConfigError(_where(source, section, key, lines)
                                  + f"unknown key; nearest valid key is '{hint[0]}'")
    values = {}
    for section, keys in SCHEMA.items():
        if section not in cp:
            raise ConfigError(f"{source}: missing section [{section}]")
        values[section] = {}
        for key, typ, _ in keys:
            if key not in cp[section]:
                raise ConfigError(f"{source}: [{section}] missing key '{key}'")
            values[section][key] = _coerce(typ, cp[section][key], section, key, source, lines)
    return ExperimentConfig(values, source, lines)


def parse_config(path):
    """Read and validate an INI experiment file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def default_config_path():
    from importlib import resources
    return resources.files("molitho") / "data" / "paper.ini"


def default_config():
    return parse_config(str(default_config_path()))
