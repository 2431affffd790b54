"""
Excepciones personalizadas del planificador minero.

Este módulo define todas las excepciones específicas del dominio,
organizadas por categorías para facilitar el manejo de errores y la depuración.
"""

from typing import Optional, Sequence


class MineOptException(Exception):
    """
    Excepción base para todos los errores específicos del planificador.

    Todas las excepciones del dominio deben heredar de esta clase
    para que la CLI pueda tratarlas como errores de datos (código de salida 1).
    """

    def __init__(self, message: str, error_code: Optional[str] = None):
        """
        Inicializa la excepción base.

        Args:
            message (str): Mensaje descriptivo del error
            error_code (str, optional): Código de error para logging/debugging
        """
        super().__init__(message)
        self.message = message
        self.error_code = error_code

    def __str__(self) -> str:
        """Representación string de la excepción."""
        if self.error_code:
            return f"[{self.error_code}] {self.message}"
        return self.message


# EXCEPCIONES DEL MODELO DE BLOQUES

class BlockModelException(MineOptException):
    """Excepción base para errores del modelo de bloques y su economía."""
    pass


class InvalidGeometryException(BlockModelException):
    """Dimensiones o tamaños de bloque no positivos."""

    def __init__(self, reason: str):
        super().__init__(f"Geometría inválida: {reason}", "INVALID_GEOMETRY")
        self.reason = reason


class InvalidBlockException(BlockModelException):
    """Un bloque viola sus invariantes (tonelaje > 0, ley en [0, 1])."""

    def __init__(self, index, reason: str):
        super().__init__(f"Bloque {tuple(index)} inválido: {reason}", "INVALID_BLOCK")
        self.index = tuple(index)
        self.reason = reason


class UnknownDomainException(BlockModelException):
    """El dominio del bloque no tiene recuperación definida en la economía."""

    def __init__(self, index, domain: int):
        message = (
            f"El bloque {tuple(index)} pertenece al dominio {domain}, "
            "que no tiene recuperación definida"
        )
        super().__init__(message, "UNKNOWN_DOMAIN")
        self.index = tuple(index)
        self.domain = domain


class InvalidEconomicsException(BlockModelException):
    """Parámetros económicos fuera de rango."""

    def __init__(self, field: str, value, reason: str):
        super().__init__(f"Economía inválida: {field}={value!r} ({reason})", "INVALID_ECONOMICS")
        self.field = field
        self.value = value


class InvalidCalendarException(BlockModelException):
    """Calendario vacío o con capacidades negativas."""

    def __init__(self, reason: str):
        super().__init__(f"Calendario inválido: {reason}", "INVALID_CALENDAR")
        self.reason = reason


class GeometryMismatchException(BlockModelException):
    """Dos modelos que deberían compartir geometría no la comparten."""

    def __init__(self, expected, found):
        super().__init__(
            f"La geometría no coincide: se esperaba {expected}, se encontró {found}",
            "GEOMETRY_MISMATCH",
        )
        self.expected = expected
        self.found = found


# EXCEPCIONES DE ARCHIVOS

class FileFormatException(MineOptException):
    """Error de parseo de un archivo de entrada, con número de línea si aplica."""

    def __init__(self, path, reason: str, line: Optional[int] = None):
        where = f"{path}:{line}" if line is not None else f"{path}"
        super().__init__(f"{where}: {reason}", "PARSE_ERROR")
        self.path = str(path)
        self.line = line
        self.reason = reason


# EXCEPCIONES DE INTERPOLACIÓN

class InterpolationException(MineOptException):
    """Excepción base para la interpolación de muestras."""
    pass


class InsufficientSamplesException(InterpolationException):
    """No hay suficientes muestras para interpolar o entrenar."""

    def __init__(self, found: int, required: int):
        super().__init__(
            f"Se requieren al menos {required} muestras, hay {found}",
            "INSUFFICIENT_SAMPLES",
        )
        self.found = found
        self.required = required


class NetworkTrainingException(InterpolationException):
    """La pérdida del entrenamiento dejó de ser finita."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(
            f"La pérdida dejó de ser finita en la época {epoch} (loss={loss})",
            "NON_FINITE_LOSS",
        )
        self.epoch = epoch
        self.loss = loss


class InvalidInterpolatorConfigException(InterpolationException):
    """Parámetros de interpolación fuera de rango."""

    def __init__(self, field: str, value):
        super().__init__(f"Configuración de interpolación inválida: {field}={value!r}", "INVALID_INTERPOLATOR")
        self.field = field
        self.value = value


# EXCEPCIONES DEL PIT

class ClosureException(MineOptException):
    """Excepción base para el problema de cierre máximo."""
    pass


class CyclicPrecedenceException(ClosureException):
    """Las precedencias contienen un ciclo (no existe orden de extracción)."""

    def __init__(self, cycle: Sequence):
        path = " -> ".join(str(node) for node in cycle)
        super().__init__(f"Precedencias cíclicas: {path}", "CYCLIC_PRECEDENCE")
        self.cycle = list(cycle)


class InvalidRevenueFactorsException(ClosureException):
    """Los factores de ingreso deben ser positivos y estrictamente crecientes."""

    def __init__(self, factors: Sequence[float]):
        super().__init__(f"Factores de ingreso inválidos: {list(factors)}", "INVALID_REVENUE_FACTORS")
        self.factors = list(factors)


# EXCEPCIONES DE ETAPAS (STAGING)

class StagingException(MineOptException):
    """Excepción base para la partición en etapas."""
    pass


class NotEnoughShellsException(StagingException):
    """Hay menos shells no vacíos que etapas pedidas."""

    def __init__(self, shells: int, stages: int):
        super().__init__(
            f"Se pidieron {stages} etapas pero solo hay {shells} shells no vacíos",
            "NOT_ENOUGH_SHELLS",
        )
        self.shells = shells
        self.stages = stages


class InvalidStagingException(StagingException):
    """La partición no cubre el pit, repite bloques o tiene etapas vacías."""

    def __init__(self, reason: str, index=None):
        message = f"Staging inválido: {reason}"
        if index is not None:
            message += f" (bloque {tuple(index)})"
        super().__init__(message, "INVALID_STAGING")
        self.reason = reason
        self.index = tuple(index) if index is not None else None


# EXCEPCIONES DEL SCHEDULER

class ScheduleException(MineOptException):
    """Excepción base para secuencias y cronogramas."""
    pass


class InvalidChromosomeException(ScheduleException):
    """El cromosoma no es un orden topológico de las unidades."""

    def __init__(self, reason: str):
        super().__init__(f"Cromosoma inválido: {reason}", "INVALID_CHROMOSOME")
        self.reason = reason


class OracleLimitException(ScheduleException):
    """Demasiadas unidades para enumerar todos los órdenes topológicos."""

    def __init__(self, n_units: int, limit: int):
        super().__init__(
            f"El oráculo admite hasta {limit} unidades, hay {n_units}",
            "ORACLE_LIMIT",
        )
        self.n_units = n_units
        self.limit = limit


class InvalidEAConfigException(ScheduleException):
    """Parámetros del algoritmo evolutivo fuera de rango."""

    def __init__(self, field: str, value):
        super().__init__(f"Configuración evolutiva inválida: {field}={value!r}", "INVALID_EA_CONFIG")
        self.field = field
        self.value = value


# EXCEPCIONES DE CONFIGURACIÓN

class ConfigException(MineOptException):
    """Errores en la configuración de una corrida."""

    def __init__(self, reason: str):
        super().__init__(reason, "INVALID_CONFIG")
        self.reason = reason


# EXCEPCIONES DE LA REEVALUACIÓN

class EvaluationException(MineOptException):
    """Excepción base para la reevaluación sobre el ensamble."""
    pass


class InvalidReplayException(EvaluationException):
    """Los flujos reevaluados no corresponden a las etiquetas de los miembros."""

    def __init__(self, reason: str):
        super().__init__(f"Reevaluación inválida: {reason}", "INVALID_REPLAY")
        self.reason = reason
