"""
Lectura y escritura de modelos de bloques, muestras, calendarios y economía.

Todos los lectores validan cada registro y fallan con FileFormatException
indicando archivo y número de línea; nunca devuelven un modelo a medias.
Los flotantes se escriben con 17 cifras significativas (ida y vuelta exacta).
"""

from __future__ import annotations

import io
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.block_model import BlockModel, Calendar, DrillSample, EconomicModel, PeriodCapacity
from core.constants import DEFAULT_BLOCK_SIZE, DEFAULT_ELEMENT, DEFAULT_ORIGIN
from core.exceptions import FileFormatException, MineOptException

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"

BLOCK_COLUMNS = ("i", "j", "k", "tonnage", "grade", "domain")
SAMPLE_COLUMNS = ("x", "y", "z", "grade", "domain")
CALENDAR_COLUMNS = ("period", "mining_capacity", "plant_capacity")
ECONOMIC_KEYS = (
    "price_per_tonne_metal",
    "mining_cost",
    "processing_cost",
    "selling_cost",
    "rehab_cost",
    "cutoff_grade",
    "discount_rate",
)
RECOVERY_KEY = re.compile(r"^recovery_domain_(\d+)$")


# ---------------------------------------------------------------------------
# Archivos clave = valor
# ---------------------------------------------------------------------------

def read_key_values(path: PathLike) -> Dict[str, Tuple[str, int]]:
    """
    Lee líneas `clave = valor`. Devuelve {clave: (valor, línea)}.
    Ignora líneas vacías y comentarios con '#'.
    """
    entries: Dict[str, Tuple[str, int]] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as ex:
        raise FileFormatException(path, f"no se pudo leer: {ex}") from ex
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FileFormatException(path, f"se esperaba 'clave = valor': {raw!r}", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FileFormatException(path, "clave vacía", number)
        if key in entries:
            raise FileFormatException(path, f"clave repetida '{key}'", number)
        entries[key] = (value, number)
    return entries


def write_key_values(path: PathLike, values: Iterable[Tuple[str, object]]) -> None:
    lines = [f"{key} = {_format_value(value)}" for key, value in values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _format_value(value: object) -> str:
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


def parse_float(path: PathLike, key: str, raw: str, line: Optional[int]) -> float:
    try:
        value = float(raw)
    except ValueError as ex:
        raise FileFormatException(path, f"'{key}' no es numérico: {raw!r}", line) from ex
    if not np.isfinite(value):
        raise FileFormatException(path, f"'{key}' no es finito: {raw!r}", line)
    return value


# ---------------------------------------------------------------------------
# Tablas CSV
# ---------------------------------------------------------------------------

def read_table(path: PathLike, required: Sequence[str]) -> Tuple[pd.DataFrame, int, List[str]]:
    """
    Lee un CSV con comentarios iniciales opcionales.
    Devuelve (tabla, línea del encabezado, comentarios).
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as ex:
        raise FileFormatException(path, f"no se pudo leer: {ex}") from ex

    lines = text.splitlines()
    comments: List[str] = []
    while len(comments) < len(lines) and lines[len(comments)].startswith("#"):
        comments.append(lines[len(comments)][1:].strip())
    header_line = len(comments) + 1
    body = "\n".join(lines[len(comments):])
    if not body.strip():
        raise FileFormatException(path, "archivo sin encabezado", header_line)

    try:
        table = pd.read_csv(io.StringIO(body), dtype=str, skip_blank_lines=False, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as ex:
        raise FileFormatException(path, f"CSV mal formado: {ex}", header_line) from ex

    table.columns = [str(c).strip() for c in table.columns]
    missing = [c for c in required if c not in table.columns]
    if missing:
        raise FileFormatException(path, f"faltan columnas {missing}", header_line)
    return table, header_line, comments


def numeric_column(path: PathLike, table: pd.DataFrame, column: str, header_line: int,
             integer: bool = False) -> np.ndarray:
    raw = table[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if integer:
        bad |= np.isfinite(values) & (values != np.round(values))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        kind = "entero" if integer else "número finito"
        raise FileFormatException(
            path, f"columna '{column}' = {raw.iloc[row]!r} no es un {kind}", header_line + 1 + row
        )
    return values.astype(np.int64) if integer else values


def row_error(path: PathLike, header_line: int, mask: np.ndarray, reason: str) -> None:
    if mask.any():
        row = int(np.flatnonzero(mask)[0])
        raise FileFormatException(path, reason, header_line + 1 + row)


def _parse_geometry_comment(path: PathLike, comments: Sequence[str]):
    block_size, origin, element = DEFAULT_BLOCK_SIZE, DEFAULT_ORIGIN, DEFAULT_ELEMENT
    for number, comment in enumerate(comments, start=1):
        for token in comment.split():
            if "=" not in token:
                continue
            key, value = token.split("=", 1)
            if key == "element":
                element = value
            elif key in ("block_size", "origin"):
                parts = value.split(",")
                if len(parts) != 3:
                    raise FileFormatException(path, f"'{key}' requiere 3 valores", number)
                triple = tuple(parse_float(path, key, p, number) for p in parts)
                if key == "block_size":
                    block_size = triple
                else:
                    origin = triple
    return block_size, origin, element


def write_table(path: PathLike, table: pd.DataFrame, comment: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if comment:
            handle.write(f"# {comment}\n")
        table.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


# ---------------------------------------------------------------------------
# Modelo de bloques
# ---------------------------------------------------------------------------

def load_block_model(path: PathLike) -> BlockModel:
    """Lee un modelo denso `i,j,k,tonnage,grade,domain[,stage]` (stage se ignora)."""
    table, header_line, comments = read_table(path, BLOCK_COLUMNS)
    if table.empty:
        raise FileFormatException(path, "el modelo no tiene bloques", header_line)
    block_size, origin, element = _parse_geometry_comment(path, comments)

    i = numeric_column(path, table, "i", header_line, integer=True)
    j = numeric_column(path, table, "j", header_line, integer=True)
    k = numeric_column(path, table, "k", header_line, integer=True)
    tonnage = numeric_column(path, table, "tonnage", header_line)
    grade = numeric_column(path, table, "grade", header_line)
    domain = numeric_column(path, table, "domain", header_line, integer=True)

    row_error(path, header_line, (i < 0) | (j < 0) | (k < 0), "índice negativo")
    row_error(path, header_line, tonnage <= 0, "tonelaje debe ser > 0")
    row_error(path, header_line, (grade < 0) | (grade > 1), "ley fuera de [0, 1]")
    row_error(path, header_line, domain < 0, "dominio negativo")

    keys = pd.DataFrame({"i": i, "j": j, "k": k})
    row_error(path, header_line, keys.duplicated().to_numpy(), "índice de bloque duplicado")

    dims = (int(i.max()) + 1, int(j.max()) + 1, int(k.max()) + 1)
    n_blocks = dims[0] * dims[1] * dims[2]
    if len(table) != n_blocks:
        present = np.zeros(n_blocks, dtype=bool)
        present[np.ravel_multi_index((i, j, k), dims)] = True
        first = np.unravel_index(int(np.flatnonzero(~present)[0]), dims)
        raise FileFormatException(path, f"falta el bloque {tuple(int(v) for v in first)} (el modelo debe ser denso)")

    flat = np.ravel_multi_index((i, j, k), dims)
    arrays = {}
    for name, values, dtype in (("tonnage", tonnage, np.float64), ("grade", grade, np.float64),
                                ("domain", domain, np.int64)):
        dense = np.empty(n_blocks, dtype=dtype)
        dense[flat] = values
        arrays[name] = dense.reshape(dims)

    try:
        model = BlockModel(dims=dims, block_size=block_size, origin=origin, element_name=element, **arrays)
    except MineOptException as ex:
        raise FileFormatException(path, str(ex)) from ex
    logger.debug("Modelo leído de %s: %s", path, model)
    return model


def block_table(model: BlockModel, extra: Optional[Dict[str, np.ndarray]] = None) -> pd.DataFrame:
    ii, jj, kk = (axis.ravel() for axis in np.indices(model.dims))
    table = pd.DataFrame({
        "i": ii,
        "j": jj,
        "k": kk,
        "tonnage": model.tonnage.ravel(),
        "grade": model.grade.ravel(),
        "domain": model.domain.ravel(),
    })
    for name, values in (extra or {}).items():
        table[name] = np.asarray(values).ravel()
    return table


def geometry_comment(model: BlockModel) -> str:
    size = ",".join(FLOAT_FORMAT % v for v in model.block_size)
    origin = ",".join(FLOAT_FORMAT % v for v in model.origin)
    return f"block_size={size} origin={origin} element={model.element_name}"


def save_block_model(model: BlockModel, path: PathLike, stage: Optional[np.ndarray] = None) -> None:
    extra = {"stage": stage} if stage is not None else None
    write_table(path, block_table(model, extra), geometry_comment(model))


# ---------------------------------------------------------------------------
# Muestras
# ---------------------------------------------------------------------------

def load_samples(path: PathLike) -> List[DrillSample]:
    table, header_line, _ = read_table(path, SAMPLE_COLUMNS)
    x = numeric_column(path, table, "x", header_line)
    y = numeric_column(path, table, "y", header_line)
    z = numeric_column(path, table, "z", header_line)
    grade = numeric_column(path, table, "grade", header_line)
    domain = numeric_column(path, table, "domain", header_line, integer=True)
    row_error(path, header_line, (grade < 0) | (grade > 1), "ley fuera de [0, 1]")
    row_error(path, header_line, domain < 0, "dominio negativo")
    return [
        DrillSample(float(a), float(b), float(c), float(g), int(d))
        for a, b, c, g, d in zip(x, y, z, grade, domain)
    ]


def save_samples(samples: Sequence[DrillSample], path: PathLike) -> None:
    table = pd.DataFrame({
        "x": [s.x for s in samples],
        "y": [s.y for s in samples],
        "z": [s.z for s in samples],
        "grade": [s.grade for s in samples],
        "domain": pd.Series([s.domain for s in samples], dtype=np.int64),
    }, columns=list(SAMPLE_COLUMNS))
    write_table(path, table)


# ---------------------------------------------------------------------------
# Calendario
# ---------------------------------------------------------------------------

def load_calendar(path: PathLike) -> Calendar:
    table, header_line, _ = read_table(path, CALENDAR_COLUMNS)
    if table.empty:
        raise FileFormatException(path, "el calendario no tiene períodos", header_line)
    period = numeric_column(path, table, "period", header_line, integer=True)
    mining = numeric_column(path, table, "mining_capacity", header_line)
    plant = numeric_column(path, table, "plant_capacity", header_line)
    row_error(path, header_line, mining < 0, "capacidad de mina negativa")
    row_error(path, header_line, plant < 0, "capacidad de planta negativa")
    row_error(path, header_line, pd.Series(period).duplicated().to_numpy(), "período duplicado")

    order = np.argsort(period, kind="stable")
    expected = np.arange(1, len(period) + 1)
    if not np.array_equal(period[order], expected):
        raise FileFormatException(path, f"los períodos deben ser contiguos 1..{len(period)}", header_line)
    return Calendar(tuple(
        PeriodCapacity(int(period[r]), float(mining[r]), float(plant[r])) for r in order
    ))


def save_calendar(calendar: Calendar, path: PathLike) -> None:
    table = pd.DataFrame({
        "period": [p.period for p in calendar.periods],
        "mining_capacity": [p.mining_capacity for p in calendar.periods],
        "plant_capacity": [p.plant_capacity for p in calendar.periods],
    })
    write_table(path, table)


# ---------------------------------------------------------------------------
# Economía
# ---------------------------------------------------------------------------

def load_economics(path: PathLike) -> EconomicModel:
    entries = read_key_values(path)
    values: Dict[str, float] = {}
    recoveries: Dict[int, float] = {}
    for key, (raw, line) in entries.items():
        match = RECOVERY_KEY.match(key)
        if match:
            recoveries[int(match.group(1))] = parse_float(path, key, raw, line)
        elif key in ECONOMIC_KEYS:
            values[key] = parse_float(path, key, raw, line)
        else:
            raise FileFormatException(path, f"clave desconocida '{key}'", line)

    missing = [k for k in ECONOMIC_KEYS if k not in values]
    if missing:
        raise FileFormatException(path, f"faltan claves {missing}")
    if not recoveries:
        raise FileFormatException(path, "se requiere al menos una clave recovery_domain_<id>")
    try:
        return EconomicModel(recovery_by_domain=recoveries, **values)
    except MineOptException as ex:
        field = getattr(ex, "field", None)
        line = entries[field][1] if field in entries else None
        raise FileFormatException(path, str(ex), line) from ex


def save_economics(econ: EconomicModel, path: PathLike) -> None:
    pairs: List[Tuple[str, object]] = [(key, float(getattr(econ, key))) for key in ECONOMIC_KEYS]
    pairs += [(f"recovery_domain_{d}", float(r)) for d, r in econ.recovery_by_domain.items()]
    write_key_values(path, pairs)
