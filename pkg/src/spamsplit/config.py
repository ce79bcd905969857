"""YAML run configuration with per-module sections and strict key checking.

Every key has a built-in default, so an empty file (or no file) is valid.
Unknown sections or keys are rejected with the line they appear on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .sim.device import CONFIG_KEYS, DeviceParams, device_from_mapping

DEFAULTS: dict[str, dict[str, Any]] = {
    "device": {key: None for key in (*CONFIG_KEYS, "assignment")},
    "rabief": {
        "n_angles": 40,
        "max_angle": 4 * math.pi,
        "shots": 1000,
        "reset_modes": ["fast_qubit", "fast_qutrit", "slow_qubit", "slow_qutrit"],
        "reset_sampling": "ensemble",
        "signal": "probability",
        "shared_frequency": False,
    },
    "mcb": {
        "depths": [0, 1, 2, 5, 8],
        "randomizations": 256,
        "shots": 128,
        "reset_mode": "slow",
        "f_a": 0.99096,
        "f_s": 0.99096,
        "f_c": 0.995,
        "p_sp_slow": 0.01946,
        "p_sp_fast": 0.01206,
    },
    "mitigation": {
        "n_qubits": [4, 6, 8, 10],
        "two_layer": True,
        "raw_shots": 128,
        "zstar_randomizations": 16,
        "zstar_shots": 5000,
        "correlated_as": "post",
    },
    "pec": {
        "n_thetas": 15,
        "pool": 1000,
        "sets": 300,
        "per_set": 128,
        "shots": 100,
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    sections: dict = field(default_factory=dict)
    path: Optional[str] = None

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    def device(self) -> DeviceParams:
        given = {k: v for k, v in self.sections["device"].items() if v is not None}
        try:
            return device_from_mapping(given)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"device: {exc}") from exc

    def to_dict(self) -> dict:
        return {s: dict(v) for s, v in self.sections.items()}


def _line(node) -> int:
    return node.start_mark.line + 1


def load_config(path: Optional[str | Path] = None) -> Config:
    """Parse ``path`` (or nothing) into a :class:`Config` filled with defaults."""
    sections = {s: dict(v) for s, v in DEFAULTS.items()}
    if path is None:
        return Config(sections)
    text = Path(path).read_text()
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if root is None:
        return Config(sections, str(path))
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{path}:{_line(root)}: top level must be a mapping")
    data = yaml.safe_load(text)
    for key_node, value_node in root.value:
        section = key_node.value
        if section not in DEFAULTS:
            raise ConfigError(f"{path}:{_line(key_node)}: unknown section {section!r}")
        if value_node.tag.endswith(":null"):
            continue
        if not isinstance(value_node, yaml.MappingNode):
            raise ConfigError(f"{path}:{_line(value_node)}: section {section!r} must be a mapping")
        for k_node, _ in value_node.value:
            if k_node.value not in DEFAULTS[section]:
                raise ConfigError(
                    f"{path}:{_line(k_node)}: unknown key {k_node.value!r} in section {section!r}"
                )
        sections[section].update(data[section])
    cfg = Config(sections, str(path))
    validate(cfg)
    return cfg


def validate(cfg: Config) -> None:
    cfg.device()
    r, m, g, p = cfg["rabief"], cfg["mcb"], cfg["mitigation"], cfg["pec"]
    checks = [
        (int(r["n_angles"]) >= 4, "rabief.n_angles must be >= 4"),
        (float(r["max_angle"]) > 0, "rabief.max_angle must be positive"),
        (int(r["shots"]) >= 1, "rabief.shots must be >= 1"),
        (int(m["randomizations"]) >= 1 and int(m["shots"]) >= 1, "mcb counts must be >= 1"),
        (m["reset_mode"] in ("slow", "fast"), "mcb.reset_mode must be slow or fast"),
        (all(0.0 <= float(m[k]) < 0.5 for k in ("p_sp_slow", "p_sp_fast")), "mcb.p_sp_* must lie in [0, 0.5)"),
        (all(0.0 < float(m[k]) <= 1.0 for k in ("f_a", "f_s", "f_c")), "mcb fidelities must lie in (0, 1]"),
        (g["correlated_as"] in ("pre", "post"), "mitigation.correlated_as must be pre or post"),
        (all(2 <= int(n) <= 12 for n in g["n_qubits"]), "mitigation.n_qubits must lie in [2, 12]"),
        (int(p["pool"]) >= int(p["per_set"]) >= 1, "pec.pool must be >= pec.per_set >= 1"),
        (int(p["n_thetas"]) >= 1 and int(p["sets"]) >= 1 and int(p["shots"]) >= 1, "pec counts must be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
