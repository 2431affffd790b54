# -*- coding: utf-8 -*-
EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2


class CommandParseError(ValueError):
    """Errores de uso: flags desconocidos, valores inválidos, parámetros faltantes (salida 2)."""

    exit_code = EXIT_USAGE


class CommandExecError(RuntimeError):
    """Errores al ejecutar un subcomando válido: datos, archivos, corridas (salida 1)."""

    exit_code = EXIT_DATA_ERROR
