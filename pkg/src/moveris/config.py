"""Scenario parameters, unit conversions and seeding.

Everything downstream works in linear watts, metres and radians. dBm only
appears at the file/CLI boundary (``*_dbm`` keys in :func:`load_config`).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """A config value violates a constraint."""

    def __init__(self, name: str, value: Any, constraint: str):
        self.name = name
        self.value = value
        self.constraint = constraint
        super().__init__(f"{name}={value!r} violates {constraint}")


def dbm_to_watt(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def watt_to_dbm(x: float) -> float:
    return 10.0 * math.log10(x) + 30.0


@dataclass(frozen=True)
class SchemeFlags:
    bs_movable: bool = True
    ris_movable: bool = True

    _NAMES = {
        (True, True): "MA-ME",
        (True, False): "MA-FE",
        (False, True): "FA-ME",
        (False, False): "FA-FE",
    }

    @property
    def name(self) -> str:
        return self._NAMES[(self.bs_movable, self.ris_movable)]

    @classmethod
    def from_name(cls, name: str) -> "SchemeFlags":
        key = name.strip().upper().replace("_", "-")
        for flags, label in cls._NAMES.items():
            if label == key:
                return cls(*flags)
        raise ConfigError("scheme", name, f"one of {sorted(cls._NAMES.values())}")


ALL_SCHEMES = ("MA-ME", "FA-ME", "MA-FE", "FA-FE")


@dataclass(frozen=True)
class ToleranceSet:
    ao_eps: float = 1e-4
    ao_relative: bool = False
    dinkelbach_eps: float = 1e-6
    sca_eps: float = 1e-5
    kkt_eps: float = 1e-7
    n_max_ao: int = 50
    n_max_inner: int = 100
    trust_radius_phase: float = 0.25
    # position radius is expressed in wavelengths
    trust_radius_position: float = 0.1
    trust_shrink: float = 0.5
    trust_grow: float = 2.0
    trust_accept_ratio: float = 0.25

    def __post_init__(self):
        for name in ("ao_eps", "dinkelbach_eps", "sca_eps", "kkt_eps",
                     "trust_radius_phase", "trust_radius_position", "trust_accept_ratio"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"tolerances.{name}", value, "> 0")
        if self.n_max_ao < 0:
            raise ConfigError("tolerances.n_max_ao", self.n_max_ao, ">= 0")
        if self.n_max_inner < 1:
            raise ConfigError("tolerances.n_max_inner", self.n_max_inner, ">= 1")
        if not 0 < self.trust_shrink < 1:
            raise ConfigError("tolerances.trust_shrink", self.trust_shrink, "0 < trust_shrink < 1")
        if not self.trust_grow > 1:
            raise ConfigError("tolerances.trust_grow", self.trust_grow, "trust_grow > 1")


@dataclass(frozen=True)
class PathLossExponents:
    """Exponents for the direct (user-BS), RIS-BS and user-RIS links."""

    user_bs: float = 3.9
    ris_bs: float = 2.0
    user_ris: float = 2.2

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"path_loss_exponents.{f.name}", getattr(self, f.name), "> 0")


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one scenario.

    ``region_side_m`` and ``min_spacing_m`` default to 4 and 1/2 wavelengths
    when left as ``None``. ``pmax_watt`` is a scalar or a length-K tuple.
    """

    num_bs_antennas: int = 8
    num_ris_elements: int = 49
    num_users: int = 4
    num_paths: int = 4
    num_paths_ris_bs: int | None = None
    num_paths_user_bs: int | None = None
    num_paths_user_ris: int | None = None
    carrier_freq_hz: float = 3e9
    region_side_m: float | None = None
    min_spacing_m: float | None = None
    pmax_watt: float | tuple[float, ...] = 0.1
    noise_watt: float = 1e-12
    circuit_power_watt: float = 0.1
    amp_efficiency: float = 0.3
    rate_threshold_bpshz: float = 1.5
    path_loss_exponents: PathLossExponents = field(default_factory=PathLossExponents)
    ref_gain_beta0: float = 1e-3
    bs_pos: tuple[float, float, float] = (0.0, 0.0, 15.0)
    ris_pos: tuple[float, float, float] = (10.0, 10.0, 10.0)
    user_ring_min_m: float = 50.0
    user_ring_max_m: float = 70.0
    user_height_m: float = 1.5
    init_retries: int = 10
    scheme: SchemeFlags = field(default_factory=SchemeFlags)
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)
    seed: int = 0

    def __post_init__(self):
        lam = SPEED_OF_LIGHT / self.carrier_freq_hz if self.carrier_freq_hz > 0 else None
        if lam is None:
            raise ConfigError("carrier_freq_hz", self.carrier_freq_hz, "> 0")
        if self.region_side_m is None:
            object.__setattr__(self, "region_side_m", 4.0 * lam)
        if self.min_spacing_m is None:
            object.__setattr__(self, "min_spacing_m", lam / 2.0)
        if isinstance(self.pmax_watt, (list, np.ndarray)):
            object.__setattr__(self, "pmax_watt", tuple(float(x) for x in self.pmax_watt))
        for name in ("bs_pos", "ris_pos"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        self._validate()

    def _validate(self):
        for name in ("num_bs_antennas", "num_ris_elements", "num_users", "num_paths"):
            value = getattr(self, name)
            if not (isinstance(value, (int, np.integer)) and value >= 1):
                raise ConfigError(name, value, "positive integer")
        for name in ("num_paths_ris_bs", "num_paths_user_bs", "num_paths_user_ris"):
            value = getattr(self, name)
            if value is not None and not value >= 1:
                raise ConfigError(name, value, "positive integer")
        for name in ("region_side_m", "min_spacing_m", "noise_watt", "circuit_power_watt",
                     "ref_gain_beta0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(name, value, "> 0")
        pmax = np.atleast_1d(np.asarray(self.pmax_watt, dtype=float))
        if pmax.size not in (1, self.num_users):
            raise ConfigError("pmax_watt", self.pmax_watt, "scalar or one value per user")
        if not np.all(pmax > 0):
            raise ConfigError("pmax_watt", self.pmax_watt, "> 0")
        if not 0 < self.amp_efficiency <= 1:
            raise ConfigError("amp_efficiency", self.amp_efficiency, "0 < eta <= 1")
        if not self.rate_threshold_bpshz >= 0:
            raise ConfigError("rate_threshold_bpshz", self.rate_threshold_bpshz, ">= 0")
        if self.min_spacing_m > self.region_side_m:
            raise ConfigError("min_spacing_m", self.min_spacing_m,
                              f"d0 <= A (region_side_m={self.region_side_m!r})")
        if not self.user_ring_min_m < self.user_ring_max_m:
            raise ConfigError("user_ring_min_m", self.user_ring_min_m,
                              f"< user_ring_max_m={self.user_ring_max_m!r}")
        if self.user_ring_min_m < 0:
            raise ConfigError("user_ring_min_m", self.user_ring_min_m, ">= 0")
        if len(self.bs_pos) != 3 or len(self.ris_pos) != 3:
            raise ConfigError("bs_pos/ris_pos", (self.bs_pos, self.ris_pos), "3-D coordinates")
        if self.init_retries < 0:
            raise ConfigError("init_retries", self.init_retries, ">= 0")
        if self.seed < 0:
            raise ConfigError("seed", self.seed, "unsigned integer")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def pmax_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.pmax_watt, dtype=float), (self.num_users,)).copy()

    @property
    def gamma_th(self) -> float:
        return 2.0 ** self.rate_threshold_bpshz - 1.0

    def paths_for(self, link: str) -> int:
        override = getattr(self, f"num_paths_{link}")
        return self.num_paths if override is None else override

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["scheme"] = self.scheme.name
        out["bs_pos"] = list(self.bs_pos)
        out["ris_pos"] = list(self.ris_pos)
        if isinstance(self.pmax_watt, tuple):
            out["pmax_watt"] = list(self.pmax_watt)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_DBM_KEYS = {
    "pmax_dbm": "pmax_watt",
    "noise_dbm": "noise_watt",
    "circuit_power_dbm": "circuit_power_watt",
}

_TOP_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}


def config_from_dict(data: Mapping[str, Any] | None) -> SystemConfig:
    """Build a validated config from a (possibly nested) mapping."""
    data = dict(data or {})
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _DBM_KEYS:
            target = _DBM_KEYS[key]
            if target in data:
                raise ConfigError(key, value, f"give either {key} or {target}, not both")
            if isinstance(value, (list, tuple)):
                kwargs[target] = tuple(dbm_to_watt(float(x)) for x in value)
            else:
                kwargs[target] = dbm_to_watt(float(value))
        elif key == "scheme":
            if isinstance(value, str):
                kwargs["scheme"] = SchemeFlags.from_name(value)
            else:
                kwargs["scheme"] = SchemeFlags(**value)
        elif key == "tolerances":
            try:
                kwargs["tolerances"] = ToleranceSet(**(value or {}))
            except TypeError as exc:
                raise ConfigError("tolerances", value, str(exc)) from None
        elif key == "path_loss_exponents":
            if isinstance(value, (list, tuple)):
                kwargs["path_loss_exponents"] = PathLossExponents(*value)
            else:
                kwargs["path_loss_exponents"] = PathLossExponents(**value)
        elif key == "wavelength_m":
            # derived; accepted only when consistent
            lam = SPEED_OF_LIGHT / float(data.get("carrier_freq_hz", 3e9))
            if abs(float(value) - lam) > 1e-9 * lam:
                raise ConfigError("wavelength_m", value, f"== c / carrier_freq_hz = {lam!r}")
        elif key in _TOP_FIELDS:
            kwargs[key] = value
        else:
            raise ConfigError(key, value, "known config key")
    return SystemConfig(**kwargs)


def load_config(source: str | Path | Mapping | None = None, **overrides) -> SystemConfig:
    """Load a config from YAML text, a YAML file path or a mapping.

    Keyword overrides are applied on top of the document (CLI flags use this).
    """
    if source is None:
        data: dict = {}
    elif isinstance(source, Mapping):
        data = dict(source)
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                         and Path(source).suffix in (".yaml", ".yml", ".json")):
            text = Path(source).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<document>", str(source)[:40], f"parseable YAML ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("<document>", data, "a key-value mapping")
    for key, value in overrides.items():
        if value is not None:
            for dbm_key, watt_key in _DBM_KEYS.items():
                if key == dbm_key:
                    data.pop(watt_key, None)
                elif key == watt_key:
                    data.pop(dbm_key, None)
            data[key] = value
    return config_from_dict(data)


def dump_config(config: SystemConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per trial; same (seed, trial) always gives the same draws."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))
