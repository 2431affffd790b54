# -*- coding: utf-8 -*-
"""
Configuración de una corrida de la CLI.

Los valores salen de tres fuentes, de menor a mayor prioridad: los defaults
de `RunConfig`, un archivo `clave = valor` (--config) y los flags explícitos.
Las claves del archivo son los nombres de los campos de `RunConfig`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Mapping, Optional, Tuple, Union

from core.block_io import read_key_values
from core.constants import (
    DEFAULT_MEMBERS,
    DEFAULT_PERIODS,
    DEFAULT_REVENUE_FACTOR_COUNT,
    DEFAULT_STAGES,
    WORST_CASE_STD_THRESHOLD,
)
from core.evolution import EAConfig
from core.exceptions import ConfigException, FileFormatException
from core.interpolation import InterpolatorConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
STRATEGIES = ("lazy", "worst_case", "levelled", "file")
COMMANDS = ("gen", "ensemble", "pit", "stage", "schedule", "evaluate", "compare")


class MissingOptionError(ConfigException):
    """Falta un parámetro obligatorio para el subcomando."""

    def __init__(self, command: str, option: str):
        super().__init__(f"'{command}' necesita --{option.replace('_', '-')}")
        self.command = command
        self.option = option


# ------------------------- Conversores -------------------------

def parse_dims(text: str) -> Tuple[int, int, int]:
    """'20x20x10' -> (20, 20, 10); cada eje debe ser >= 1."""
    parts = str(text).lower().replace(",", "x").split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"dimensiones inválidas '{text}', se espera NXxNYxNZ") from None
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dimensiones inválidas '{text}', se espera NXxNYxNZ con ejes >= 1")
    return dims  # type: ignore[return-value]


def parse_switch(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("on", "true", "yes", "1"):
        return True
    if value in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"se esperaba on|off, llegó '{text}'")


def parse_float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(p) for p in str(text).split(",") if p.strip())
    except ValueError:
        raise ValueError(f"lista de números inválida '{text}'") from None


def parse_int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(p) for p in str(text).split(",") if p.strip())
    except ValueError:
        raise ValueError(f"lista de enteros inválida '{text}'") from None


def parse_strategy(text: str) -> str:
    value = str(text).strip().lower().replace("-", "_")
    if value not in STRATEGIES:
        raise ValueError(f"estrategia desconocida '{text}', opciones: {', '.join(STRATEGIES)}")
    return value


def _path(text: str) -> Path:
    return Path(str(text))


# ------------------------- RunConfig -------------------------

@dataclass(frozen=True)
class RunConfig:
    command: str
    out: Path = Path("out")
    seed: int = 7

    # gen
    dims: Tuple[int, int, int] = (20, 20, 10)
    drillholes: int = 30
    domains: int = 3
    block_size: float = 10.0

    # archivos de entrada
    model: Optional[Path] = None
    samples: Optional[Path] = None
    ensemble_dir: Optional[Path] = None
    shells: Optional[Path] = None
    uncertainty: Optional[Path] = None
    staging_file: Optional[Path] = None
    schedule: Optional[Path] = None
    calendar: Optional[Path] = None
    economics: Optional[Path] = None

    # ensamble
    members: int = DEFAULT_MEMBERS
    method: str = "idw"
    idw_power: float = 2.0
    idw_max_neighbors: int = 8
    bootstrap_fraction: float = 0.8
    power_jitter: float = 0.25
    net_hidden_layers: Tuple[int, ...] = (16, 16)
    net_fit_tolerance: float = 0.05
    net_max_epochs: int = 2000
    learning_rate: float = 0.05

    # pit y etapas
    revenue_factors: Optional[Tuple[float, ...]] = None
    factor_count: int = DEFAULT_REVENUE_FACTOR_COUNT
    periods: int = DEFAULT_PERIODS
    strategy: str = "lazy"
    stages: int = DEFAULT_STAGES
    std_threshold: float = WORST_CASE_STD_THRESHOLD
    stage_order: bool = False

    # cronograma
    stockpiling: bool = True
    oracle: bool = False
    population: int = 50
    generations: int = 200
    tournament_size: int = 3
    mutation_rate: float = 0.2
    crossover_rate: float = 0.9
    elitism: int = 2

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigException(f"subcomando desconocido '{self.command}'")
        if self.strategy not in STRATEGIES:
            raise ConfigException(f"estrategia desconocida '{self.strategy}'")
        for name in ("drillholes", "domains", "members", "stages", "periods", "factor_count"):
            if getattr(self, name) < 1:
                raise ConfigException(f"{name}={getattr(self, name)} debe ser >= 1")
        if self.block_size <= 0:
            raise ConfigException(f"block_size={self.block_size} debe ser > 0")
        if self.std_threshold < 0:
            raise ConfigException(f"std_threshold={self.std_threshold} debe ser >= 0")
        if self.strategy == "worst_case" and self.stages < 3:
            raise ConfigException("worst_case necesita --stages >= 3")
        # valida los parámetros derivados al construir la corrida
        self.ea_config()
        self.interpolator_config()

    # ---------- construcción ----------
    @classmethod
    def from_sources(cls, command: str, flags: Mapping[str, Any],
                     config_file: Optional[PathLike] = None) -> "RunConfig":
        """Defaults < archivo de configuración < flags explícitos."""
        values: Dict[str, Any] = {}
        if config_file is not None:
            values.update(load_config_values(config_file))
        values.update({k: v for k, v in flags.items() if v is not None})
        values.pop("command", None)
        try:
            return cls(command=command, **values)
        except TypeError as ex:
            raise ConfigException(str(ex)) from ex

    def require(self, *names: str) -> None:
        """Falla con el primer parámetro obligatorio ausente."""
        for name in names:
            if getattr(self, name) is None:
                raise MissingOptionError(self.command, name)

    # ---------- configuraciones derivadas ----------
    def ea_config(self) -> EAConfig:
        return EAConfig(
            population_size=self.population,
            generations=self.generations,
            tournament_size=self.tournament_size,
            mutation_rate=self.mutation_rate,
            crossover_rate=self.crossover_rate,
            elitism_count=self.elitism,
            seed=self.seed,
        )

    def interpolator_config(self) -> InterpolatorConfig:
        return InterpolatorConfig(
            method=self.method,
            idw_power=self.idw_power,
            idw_max_neighbors=self.idw_max_neighbors,
            bootstrap_fraction=self.bootstrap_fraction,
            power_jitter=self.power_jitter,
            net_hidden_layers=self.net_hidden_layers,
            net_fit_tolerance=self.net_fit_tolerance,
            net_max_epochs=self.net_max_epochs,
            learning_rate=self.learning_rate,
        )


# Conversor de texto por campo, compartido con los flags de la CLI.
CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "out": _path,
    "seed": int,
    "dims": parse_dims,
    "drillholes": int,
    "domains": int,
    "block_size": float,
    "model": _path,
    "samples": _path,
    "ensemble_dir": _path,
    "shells": _path,
    "uncertainty": _path,
    "staging_file": _path,
    "schedule": _path,
    "calendar": _path,
    "economics": _path,
    "members": int,
    "method": str,
    "idw_power": float,
    "idw_max_neighbors": int,
    "bootstrap_fraction": float,
    "power_jitter": float,
    "net_hidden_layers": parse_int_list,
    "net_fit_tolerance": float,
    "net_max_epochs": int,
    "learning_rate": float,
    "revenue_factors": parse_float_list,
    "factor_count": int,
    "periods": int,
    "strategy": parse_strategy,
    "stages": int,
    "std_threshold": float,
    "stage_order": parse_switch,
    "stockpiling": parse_switch,
    "oracle": parse_switch,
    "population": int,
    "generations": int,
    "tournament_size": int,
    "mutation_rate": float,
    "crossover_rate": float,
    "elitism": int,
}


def config_keys() -> Iterable[str]:
    return (f.name for f in fields(RunConfig) if f.name != "command")


def load_config_values(path: PathLike) -> Dict[str, Any]:
    """Lee un archivo `clave = valor` y convierte cada valor al tipo del campo."""
    values: Dict[str, Any] = {}
    known = set(config_keys())
    for key, (raw, line) in read_key_values(path).items():
        name = key.replace("-", "_")
        if name not in known:
            raise FileFormatException(path, f"clave desconocida '{key}'", line)
        try:
            values[name] = CONVERTERS[name](raw)
        except ValueError as ex:
            raise FileFormatException(path, f"{key}: {ex}", line) from ex
    logger.debug("Configuración leída de %s: %s", path, sorted(values))
    return values


__all__ = [
    "RunConfig",
    "MissingOptionError",
    "STRATEGIES",
    "COMMANDS",
    "CONVERTERS",
    "load_config_values",
    "parse_dims",
    "parse_switch",
    "parse_float_list",
    "parse_int_list",
    "parse_strategy",
]
