# -*- coding: utf-8 -*-
"""
Parser de la línea de comandos del planificador.

- Subcomandos:
  gen        depósito sintético + sondajes + economía de referencia
  ensemble   miembros interpolados, agregado e incertidumbre
  pit        pits anidados y pit final sobre el agregado
  stage      etapas: lazy | worst_case | levelled | file
  schedule   algoritmo evolutivo sobre unidades etapa/banco
  evaluate   reevaluación del cronograma sobre el ensamble y reportes
  compare    stage + schedule + evaluate para todas las estrategias

- Errores:
  CommandParseError ante flags desconocidos, valores inválidos o parámetros
  obligatorios ausentes (código de salida 2).

- Salida:
  Un Command con el nombre del subcomando, su RunConfig y la verbosidad.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

from cli.cli_exceptions import CommandParseError
from config.run_config import CONVERTERS, STRATEGIES, RunConfig
from core.exceptions import ConfigException, InvalidEAConfigException, InvalidInterpolatorConfigException


@dataclass
class Command:
    name: str
    config: RunConfig
    # -1 silencioso, 0 normal, 1 detallado
    verbosity: int = 0


__all__ = ["Command", "CommandParseError", "parse_command", "build_parser", "REQUIRED"]


REQUIRED: Dict[str, Tuple[str, ...]] = {
    "gen": (),
    "ensemble": ("samples", "model"),
    "pit": ("model", "economics"),
    "stage": ("model", "shells"),
    "schedule": ("model", "staging_file", "calendar", "economics"),
    "evaluate": ("schedule", "ensemble_dir", "staging_file", "calendar", "economics"),
    "compare": ("ensemble_dir", "economics"),
}

STRATEGY_REQUIRED: Dict[str, Tuple[str, ...]] = {
    "lazy": (),
    "worst_case": ("economics", "uncertainty"),
    "levelled": ("economics", "uncertainty"),
    "file": ("staging_file",),
}


class _Parser(argparse.ArgumentParser):
    """argparse que lanza CommandParseError en vez de terminar el proceso."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise CommandParseError(f"{self.prog}: {message}")


# ------------------------- Helpers -------------------------

def _typed(name: str):
    """Adapta el conversor del campo para que argparse informe el error."""
    convert = CONVERTERS[name]

    def parse(text: str):
        try:
            return convert(text)
        except ValueError as ex:
            raise argparse.ArgumentTypeError(str(ex)) from None

    parse.__name__ = name
    return parse


def _option(parser: argparse.ArgumentParser, flag: str, dest: str, help_text: str, **kwargs) -> None:
    parser.add_argument(flag, dest=dest, type=_typed(dest), help=help_text, **kwargs)


def _switch(parser: argparse.ArgumentParser, flag: str, dest: str, help_text: str) -> None:
    parser.add_argument(flag, dest=dest, action="store_const", const=True, help=help_text)


def _common() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    _option(common, "--seed", "seed", "semilla de toda la aleatoriedad (default 7)")
    _option(common, "--out", "out", "directorio de salida")
    common.add_argument("--config", dest="config_file", help="archivo 'clave = valor' con defaults")
    common.add_argument("-v", "--verbose", dest="verbosity", action="store_const", const=1,
                        help="log DEBUG en stderr")
    common.add_argument("-q", "--quiet", dest="verbosity", action="store_const", const=-1,
                        help="solo advertencias y errores")
    return common


def _ea_options(parser: argparse.ArgumentParser) -> None:
    _option(parser, "--population", "population", "tamaño de población (default 50)")
    _option(parser, "--generations", "generations", "generaciones (default 200)")
    _option(parser, "--tournament-size", "tournament_size", "tamaño de torneo (default 3)")
    _option(parser, "--mutation-rate", "mutation_rate", "probabilidad de mutación (default 0.2)")
    _option(parser, "--crossover-rate", "crossover_rate", "probabilidad de cruce (default 0.9)")
    _option(parser, "--elitism", "elitism", "individuos conservados por elitismo (default 2)")
    _option(parser, "--stockpile", "stockpiling", "on|off: permitir stock (default on)")
    _switch(parser, "--stage-order", "stage_order", "la etapa s+1 no empieza antes que la etapa s")


def _pit_options(parser: argparse.ArgumentParser) -> None:
    _option(parser, "--revenue-factors", "revenue_factors", "factores de ingreso separados por coma")
    _option(parser, "--factor-count", "factor_count", "cantidad de factores en [0.5, 1.5] (default 21)")
    _option(parser, "--periods", "periods", "períodos del calendario derivado (default 20)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="mineplan", description="Planificación de minas a cielo abierto bajo incertidumbre de leyes.")
    sub = parser.add_subparsers(dest="command", metavar="{gen,ensemble,pit,stage,schedule,evaluate,compare}")
    sub.required = True

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, parents=[common], argument_default=argparse.SUPPRESS)

    gen = command("gen", "depósito sintético y sondajes")
    _option(gen, "--dims", "dims", "NXxNYxNZ (default 20x20x10)")
    _option(gen, "--drillholes", "drillholes", "cantidad de sondajes (default 30)")
    _option(gen, "--domains", "domains", "cantidad de dominios (default 3)")
    _option(gen, "--block-size", "block_size", "lado del bloque en metros (default 10)")

    ens = command("ensemble", "ensamble de modelos, agregado e incertidumbre")
    _option(ens, "--samples", "samples", "CSV de sondajes")
    _option(ens, "--model", "model", "modelo de bloques que define la geometría")
    _option(ens, "--members", "members", "cantidad de miembros (default 10)")
    _option(ens, "--method", "method", "idw | network")
    _option(ens, "--idw-power", "idw_power", "potencia IDW")
    _option(ens, "--idw-max-neighbors", "idw_max_neighbors", "vecinos IDW")
    _option(ens, "--bootstrap-fraction", "bootstrap_fraction", "fracción de sondajes por miembro")
    _option(ens, "--power-jitter", "power_jitter", "variación relativa de la potencia por miembro")
    _option(ens, "--net-hidden-layers", "net_hidden_layers", "anchos de capas ocultas, ej. 16,16")
    _option(ens, "--net-fit-tolerance", "net_fit_tolerance", "pérdida objetivo de la red")
    _option(ens, "--net-max-epochs", "net_max_epochs", "épocas máximas de la red")
    _option(ens, "--learning-rate", "learning_rate", "tasa de aprendizaje")
    _option(ens, "--std-threshold", "std_threshold", "umbral de desvío para el resumen")

    pit = command("pit", "pits anidados y pit final")
    _option(pit, "--model", "model", "modelo agregado")
    _option(pit, "--economics", "economics", "archivo de economía")
    _pit_options(pit)

    stage = command("stage", "diseño de etapas")
    _option(stage, "--strategy", "strategy", " | ".join(STRATEGIES))
    _option(stage, "--model", "model", "modelo agregado")
    _option(stage, "--shells", "shells", "CSV de shells")
    _option(stage, "--economics", "economics", "archivo de economía")
    _option(stage, "--uncertainty", "uncertainty", "CSV de incertidumbre")
    _option(stage, "--staging", "staging_file", "CSV de etapas (strategy=file)")
    _option(stage, "--stages", "stages", "cantidad de etapas (default 6)")
    _option(stage, "--std-threshold", "std_threshold", "umbral de desvío de ley (default 0.01)")

    schedule = command("schedule", "secuencia etapa/banco con el algoritmo evolutivo")
    _option(schedule, "--model", "model", "modelo agregado")
    _option(schedule, "--staging", "staging_file", "CSV de etapas")
    _option(schedule, "--calendar", "calendar", "CSV de calendario")
    _option(schedule, "--economics", "economics", "archivo de economía")
    _ea_options(schedule)
    _switch(schedule, "--oracle", "oracle", "compara con la enumeración exhaustiva (<= 8 unidades)")

    evaluate = command("evaluate", "reevaluación sobre el ensamble y reportes")
    _option(evaluate, "--schedule", "schedule", "CSV de cronograma")
    _option(evaluate, "--ensemble", "ensemble_dir", "directorio del ensamble")
    _option(evaluate, "--staging", "staging_file", "CSV de etapas")
    _option(evaluate, "--calendar", "calendar", "CSV de calendario")
    _option(evaluate, "--economics", "economics", "archivo de economía")
    _option(evaluate, "--stockpile", "stockpiling", "on|off (default on)")

    compare = command("compare", "todas las estrategias lado a lado")
    _option(compare, "--ensemble", "ensemble_dir", "directorio del ensamble")
    _option(compare, "--economics", "economics", "archivo de economía")
    _option(compare, "--calendar", "calendar", "CSV de calendario (default: derivado del pit)")
    _option(compare, "--staging", "staging_file", "etapas de un ingeniero, agrega una columna")
    _option(compare, "--stages", "stages", "cantidad de etapas (default 6)")
    _option(compare, "--std-threshold", "std_threshold", "umbral de desvío de ley (default 0.01)")
    _pit_options(compare)
    _ea_options(compare)
    return parser


# ------------------------- Parser principal -------------------------

def parse_command(argv: Optional[Sequence[str]]) -> Command:
    """
    Parsea los argumentos (sin el nombre del programa) y devuelve un Command.
    Lanza CommandParseError ante entradas inválidas.
    """
    if not argv:
        raise CommandParseError("Falta el subcomando. Usá --help para ver opciones.")

    namespace = vars(build_parser().parse_args(list(argv)))
    name = namespace.pop("command")
    verbosity = namespace.pop("verbosity", 0)
    config_file = namespace.pop("config_file", None)

    try:
        config = RunConfig.from_sources(name, namespace, config_file)
        config.require(*REQUIRED[name])
        if name == "stage":
            config.require(*STRATEGY_REQUIRED[config.strategy])
    except (ConfigException, InvalidEAConfigException, InvalidInterpolatorConfigException) as ex:
        raise CommandParseError(str(ex)) from ex
    return Command(name=name, config=config, verbosity=verbosity)
