"""Sectioned key-value configuration with a strict schema.

The file format is INI-style (configparser). Unknown sections or keys
are errors, not warnings, because a silently ignored typo would corrupt
physics parameters. A section may be omitted entirely (its defaults
apply), but a section that is present must be complete. Parsing the
serialized form of a config reproduces it exactly.
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field

from .core import ChannelParams
from .rates import ProtocolConfig, ProtocolVariant

SEED_ENV_VAR = "TFQKD_SEED"


class ConfigError(ValueError):
    """Schema violation: unknown, missing, or malformed entry."""


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 1
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def _parse_float(raw: str) -> float:
    return float(raw)


def _parse_int(raw: str) -> int:
    return int(raw)


def _parse_float_list(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(part.strip()) for part in raw.split(","))


def _parse_str_list(raw: str) -> tuple[str, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(part.strip() for part in raw.split(","))


def _parse_optional_float(raw: str) -> float | None:
    raw = raw.strip()
    return None if raw == "" else float(raw)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# section -> key -> (parser, default)
_SCHEMA = {
    "channel": {
        "loss_db_per_km": (_parse_float, 0.2),
        "detector_efficiency": (_parse_float, 0.4),
        "dark_count_prob": (_parse_float, 1e-7),
        "misalignment": (_parse_float, 0.015),
        "asymmetry_db": (_parse_float, 0.0),
    },
    "protocol": {
        "slice_count": (_parse_int, 16),
        "signal_intensity": (_parse_float, 0.5),
        "decoy_intensities": (_parse_float_list, (0.1, 0.0)),
        "ec_efficiency": (_parse_float, 1.15),
        "sifting_factor": (_parse_float, 1.0),
        "send_prob": (_parse_float, 0.1),
        "sns_test_param": (_parse_float, 0.25),
        "key_mode_prob": (_parse_float, 0.5),
        "sns_x_intensity": (_parse_optional_float, None),
        "sns_test_convention": (str, "relative-phase"),
    },
    "simulation": {
        "n_pulses": (_parse_int, 1_000_000),
        "seed": (_parse_int, None),  # None -> default_seed()
        "workers": (_parse_int, 1),
        "drift_rate_rad_per_ms": (_parse_float, 0.0),
        "drift_window_ms": (_parse_float, 1.0),
        "pulses_per_ms": (_parse_float, 1000.0),
    },
    "curve": {
        "mc_pulses": (_parse_int, 200_000),
        "protocols": (_parse_str_list, ("tf_gllp", "pm", "pmmdi", "npp", "sns")),
        "bounds": (_parse_str_list, ("plob", "srb", "tgw")),
    },
}


@dataclass
class AppConfig:
    """Parsed configuration: plain section dicts plus typed views."""

    values: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "AppConfig":
        values = {
            section: {key: entry[1] for key, entry in keys.items()}
            for section, keys in _SCHEMA.items()
        }
        return cls(values=values)

    def channel(self, length_km: float) -> ChannelParams:
        c = self.values["channel"]
        return ChannelParams(
            length_km=length_km,
            loss_db_per_km=c["loss_db_per_km"],
            detector_efficiency=c["detector_efficiency"],
            dark_count_prob=c["dark_count_prob"],
            misalignment=c["misalignment"],
            asymmetry_db=c["asymmetry_db"],
        )

    def protocol(self, variant: ProtocolVariant = ProtocolVariant.PM) -> ProtocolConfig:
        p = self.values["protocol"]
        return ProtocolConfig(
            variant=variant,
            slice_count=p["slice_count"],
            signal_intensity=p["signal_intensity"],
            decoy_intensities=p["decoy_intensities"],
            ec_efficiency=p["ec_efficiency"],
            sifting_factor=p["sifting_factor"],
            send_prob=p["send_prob"],
            sns_test_param=p["sns_test_param"],
            key_mode_prob=p["key_mode_prob"],
            sns_x_intensity=p["sns_x_intensity"],
            sns_test_convention=p["sns_test_convention"],
        )

    @property
    def seed(self) -> int:
        configured = self.values["simulation"]["seed"]
        return default_seed() if configured is None else configured

    def __getitem__(self, section: str) -> dict:
        return self.values[section]


def parse_config_text(text: str) -> AppConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}")

    cfg = AppConfig.defaults()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _SCHEMA[section]
        present = dict(parser.items(section))
        for key in present:
            if key not in schema:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
        for key, (parse, _default) in schema.items():
            if key not in present:
                raise ConfigError(f"missing config key {key!r} in section [{section}]")
            try:
                cfg.values[section][key] = parse(present[key])
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {key!r} in section [{section}]: {exc}"
                )
    return cfg


def parse_config(path: str) -> AppConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def serialize_config(cfg: AppConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) reproduces cfg."""
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key in keys:
            value = cfg.values[section][key]
            if section == "simulation" and key == "seed" and value is None:
                value = default_seed()
            out.write(f"{key} = {_fmt(value)}\n")
        out.write("\n")
    return out.getvalue()
