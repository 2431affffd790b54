"""
Decodificación de secuencias etapa/banco en cronogramas, VAN y validación.

El decodificador trabaja en dos pasos:
  1. plan_extraction: recorre períodos y unidades en el orden del cromosoma y
     decide qué fracción de cada unidad se extrae en cada período.
  2. route_extraction: con esas fracciones fijas decide el destino de cada
     porción de bloque (planta, botadero, stock) y las recuperaciones del stock.

El paso 2 es el mismo que usa la reevaluación sobre miembros del ensamble,
así que reevaluar sobre el modelo agregado reproduce el cronograma exacto.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.block_io import numeric_column, read_table, write_table
from core.block_model import BlockModel, Calendar, EconomicModel, ore_mask, recovery_array
from core.constants import CAPACITY_TOLERANCE, FRACTION_TOLERANCE
from core.exceptions import FileFormatException, InvalidChromosomeException
from core.staging import StageBenchUnit, UnitPrecedence

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
COMPLETION_TOLERANCE = 1e-12

SCHEDULE_COLUMNS = (
    "period",
    "unit_stage",
    "unit_bench",
    "fraction",
    "tonnes_mined",
    "tonnes_milled",
    "tonnes_wasted",
    "tonnes_stockpiled",
    "tonnes_reclaimed",
    "cashflow",
)


class Route(IntEnum):
    MILL = 0
    WASTE = 1
    STOCKPILE = 2
    RECLAIM = 3


FRESH_ROUTES = (Route.MILL, Route.WASTE, Route.STOCKPILE)


class ExtractionRecord(NamedTuple):
    period: int
    unit: int
    fraction: float


def _capacity_slack(capacity: float) -> float:
    return CAPACITY_TOLERANCE * max(1.0, abs(capacity))


@dataclass(frozen=True, eq=False)
class FlowTable:
    """Movimientos de material por porción (columnas paralelas)."""

    period: np.ndarray
    block: np.ndarray
    unit: np.ndarray
    route: np.ndarray
    tonnes: np.ndarray
    grade: np.ndarray
    domain: np.ndarray
    cash: np.ndarray

    @classmethod
    def from_columns(cls, columns: Dict[str, List[np.ndarray]]) -> "FlowTable":
        def cat(name: str, dtype) -> np.ndarray:
            parts = columns.get(name) or []
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

        return cls(
            period=cat("period", np.int64),
            block=cat("block", np.int64),
            unit=cat("unit", np.int64),
            route=cat("route", np.int64),
            tonnes=cat("tonnes", np.float64),
            grade=cat("grade", np.float64),
            domain=cat("domain", np.int64),
            cash=cat("cash", np.float64),
        )

    def __len__(self) -> int:
        return int(self.period.size)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "period": self.period,
            "block": self.block,
            "unit": self.unit,
            "route": self.route,
            "tonnes": self.tonnes,
            "grade": self.grade,
            "domain": self.domain,
            "cash": self.cash,
        })


@dataclass(frozen=True, eq=False)
class Schedule:
    """
    Cronograma: fracciones extraídas por (período, unidad) y el destino de cada
    porción de bloque. Los totales por período se derivan de los flujos.
    """

    t_max: int
    records: Tuple[ExtractionRecord, ...]
    flows: FlowTable
    units: Tuple[StageBenchUnit, ...] = ()
    geometry: Optional[tuple] = None
    stockpiling: bool = True

    def _per_period(self, routes: Sequence[Route], values: Optional[np.ndarray] = None) -> np.ndarray:
        mask = np.isin(self.flows.route, [int(r) for r in routes])
        weights = (self.flows.tonnes if values is None else values)[mask]
        return np.bincount(self.flows.period[mask] - 1, weights=weights, minlength=self.t_max)[: self.t_max]

    @property
    def mined_tonnes(self) -> np.ndarray:
        return self._per_period(FRESH_ROUTES)

    @property
    def milled_tonnes(self) -> np.ndarray:
        """Alimentación de planta: mineral fresco más recuperado del stock."""
        return self._per_period((Route.MILL, Route.RECLAIM))

    @property
    def wasted_tonnes(self) -> np.ndarray:
        return self._per_period((Route.WASTE,))

    @property
    def stockpiled_tonnes(self) -> np.ndarray:
        return self._per_period((Route.STOCKPILE,))

    @property
    def reclaimed_tonnes(self) -> np.ndarray:
        return self._per_period((Route.RECLAIM,))

    @property
    def cashflows(self) -> np.ndarray:
        """Flujo de caja no descontado por período."""
        return np.bincount(self.flows.period - 1, weights=self.flows.cash, minlength=self.t_max)[: self.t_max]

    @property
    def stockpile_balance(self) -> np.ndarray:
        """Toneladas en stock al cierre de cada período."""
        return np.cumsum(self.stockpiled_tonnes - self.reclaimed_tonnes)

    def unit_fractions(self) -> Dict[int, float]:
        totals: Dict[int, float] = {}
        for record in self.records:
            totals[record.unit] = totals.get(record.unit, 0.0) + record.fraction
        return totals

    def first_periods(self) -> Dict[int, int]:
        first: Dict[int, int] = {}
        for record in self.records:
            first[record.unit] = min(first.get(record.unit, record.period), record.period)
        return first

    def completion_periods(self) -> Dict[int, int]:
        done: Dict[int, int] = {}
        cumulative: Dict[int, float] = {}
        for record in sorted(self.records):
            cumulative[record.unit] = cumulative.get(record.unit, 0.0) + record.fraction
            if record.unit not in done and cumulative[record.unit] >= 1.0 - FRACTION_TOLERANCE:
                done[record.unit] = record.period
        return done

    def unmined_units(self, n_units: int) -> List[int]:
        done = self.completion_periods()
        return [u for u in range(n_units) if u not in done]

    def table(self) -> pd.DataFrame:
        """Filas por (período, unidad) con el esquema del CSV de cronograma."""
        flows = self.flows.frame()
        if flows.empty:
            return pd.DataFrame(columns=list(SCHEDULE_COLUMNS))
        tonnes = flows.pivot_table(index=["period", "unit"], columns="route", values="tonnes",
                                   aggfunc="sum", fill_value=0.0)
        tonnes = tonnes.reindex(columns=[int(r) for r in Route], fill_value=0.0)
        cash = flows.groupby(["period", "unit"])["cash"].sum()
        fractions = pd.DataFrame(self.records, columns=["period", "unit", "fraction"])
        fractions = fractions.groupby(["period", "unit"])["fraction"].sum()

        index = tonnes.index.union(fractions.index)
        table = pd.DataFrame(index=index)
        table["fraction"] = fractions.reindex(index, fill_value=0.0)
        mill = tonnes[int(Route.MILL)].reindex(index, fill_value=0.0)
        waste = tonnes[int(Route.WASTE)].reindex(index, fill_value=0.0)
        stock = tonnes[int(Route.STOCKPILE)].reindex(index, fill_value=0.0)
        reclaim = tonnes[int(Route.RECLAIM)].reindex(index, fill_value=0.0)
        table["tonnes_mined"] = mill + waste + stock
        table["tonnes_milled"] = mill + reclaim
        table["tonnes_wasted"] = waste
        table["tonnes_stockpiled"] = stock
        table["tonnes_reclaimed"] = reclaim
        table["cashflow"] = cash.reindex(index, fill_value=0.0)
        table = table.reset_index().sort_values(["period", "unit"], kind="stable")

        by_id = {u.unit_id: u for u in self.units}
        table.insert(1, "unit_stage", [by_id[u].stage if u in by_id else -1 for u in table["unit"]])
        table.insert(2, "unit_bench", [by_id[u].bench if u in by_id else -1 for u in table["unit"]])
        return table.drop(columns="unit")[list(SCHEDULE_COLUMNS)].reset_index(drop=True)


# ---------------------------------------------------------------------------
# Decodificación
# ---------------------------------------------------------------------------

def unit_ore_tonnage(units: Sequence[StageBenchUnit], model: BlockModel, econ: EconomicModel) -> np.ndarray:
    grade = model.grade.ravel()
    ore = ore_mask(grade, recovery_array(model.domain, econ, model.dims), econ)
    ore_tonnes = np.where(ore, model.tonnage.ravel(), 0.0)
    return np.array([ore_tonnes[u.blocks].sum() for u in units], dtype=np.float64)


def check_chromosome(chromosome: Sequence[int], precedence: UnitPrecedence) -> List[int]:
    order = [int(u) for u in chromosome]
    if sorted(order) != list(range(precedence.n_units)):
        raise InvalidChromosomeException(
            f"se esperaba una permutación de 0..{precedence.n_units - 1}, llegó {order}"
        )
    if not precedence.is_topological(order):
        position = {u: p for p, u in enumerate(order)}
        broken = next((u, v) for u, v in precedence.arcs if position[u] > position[v])
        raise InvalidChromosomeException(f"la unidad {broken[1]} aparece antes que su predecesora {broken[0]}")
    return order


def plan_extraction(chromosome: Sequence[int], units: Sequence[StageBenchUnit], precedence: UnitPrecedence,
                    model: BlockModel, calendar: Calendar, econ: EconomicModel,
                    stockpiling: bool = True) -> List[ExtractionRecord]:
    """
    Llenado voraz período a período: cada unidad cuyas predecesoras están
    completas se extrae hasta agotar la capacidad de mina. Sin stock, el
    resto de una unidad ya empezada se limita a lo que su mineral deja
    entrar en planta, así ningún bloque queda mitad procesado y mitad en
    botadero; una unidad nueva se extrae entera aunque su mineral no quepa.
    """
    order = check_chromosome(chromosome, precedence)
    tonnage = np.array([u.tonnage for u in units], dtype=np.float64)
    ore = unit_ore_tonnage(units, model, econ)
    remaining = np.ones(len(units), dtype=np.float64)
    complete = np.zeros(len(units), dtype=bool)
    preds = [precedence.predecessors(u) for u in range(len(units))]

    records: List[ExtractionRecord] = []
    for t, (mining, plant) in enumerate(zip(calendar.mining, calendar.plant), start=1):
        if complete.all():
            break
        capacity, plant_left = float(mining), float(plant)
        for u in order:
            if capacity <= 0.0:
                break
            if complete[u] or not all(complete[p] for p in preds[u]):
                continue
            available = remaining[u] * tonnage[u]
            take = min(available, capacity)
            resumed = remaining[u] < 1.0
            if not stockpiling and resumed and ore[u] > 0.0:
                take = min(take, max(plant_left, 0.0) * tonnage[u] / ore[u])
            if take <= FRACTION_TOLERANCE * tonnage[u]:
                continue
            if available - take <= COMPLETION_TOLERANCE * tonnage[u]:
                fraction = float(remaining[u])
                remaining[u] = 0.0
                complete[u] = True
            else:
                fraction = take / tonnage[u]
                remaining[u] -= fraction
            capacity -= fraction * tonnage[u]
            if not stockpiling and resumed:
                plant_left -= fraction * ore[u]
            records.append(ExtractionRecord(t, u, fraction))
    return records


def route_extraction(records: Sequence[ExtractionRecord], units: Sequence[StageBenchUnit], model: BlockModel,
                     calendar: Calendar, econ: EconomicModel, stockpiling: bool = True) -> Schedule:
    """
    Destino de cada porción extraída con las fracciones dadas.

    Mineral fresco a planta por ley decreciente (desempate por índice de
    bloque) mientras quepa; el excedente va a stock, o a botadero si no hay
    stock. El estéril va a botadero. Después se recupera stock por ley
    decreciente hasta llenar la planta.

    Sin stock el destino de un bloque partido entre períodos se mantiene:
    el resto de un bloque ya procesado entra a planta antes que el mineral
    nuevo y el resto de uno ya botado sigue al botadero.
    """
    tonnage = model.tonnage.ravel()
    grade = model.grade.ravel()
    domain = model.domain.ravel()
    recovery = recovery_array(model.domain, econ, model.dims)
    ore = ore_mask(grade, recovery, econ)
    price = econ.price_per_tonne_metal
    mined_cost = econ.mined_cost_per_tonne
    processed_cost = econ.processed_cost_per_tonne

    by_period: Dict[int, List[ExtractionRecord]] = {}
    for record in records:
        by_period.setdefault(record.period, []).append(record)

    columns: Dict[str, List[np.ndarray]] = {name: [] for name in
                                             ("period", "block", "unit", "route", "tonnes", "grade", "domain", "cash")}

    def emit(t: int, blocks: np.ndarray, unit_ids: np.ndarray, route: np.ndarray, tonnes: np.ndarray,
             cash: np.ndarray) -> None:
        columns["period"].append(np.full(blocks.size, t))
        columns["block"].append(blocks)
        columns["unit"].append(unit_ids)
        columns["route"].append(route)
        columns["tonnes"].append(tonnes)
        columns["grade"].append(grade[blocks])
        columns["domain"].append(domain[blocks])
        columns["cash"].append(cash)

    # stock: [toneladas restantes, bloque, unidad, período de extracción]
    stockpile: List[List[float]] = []
    processed = np.zeros(tonnage.size, dtype=bool)
    wasted = np.zeros(tonnage.size, dtype=bool)

    for t in range(1, calendar.t_max + 1):
        plant = float(calendar.plant[t - 1])
        milled = 0.0
        slack = _capacity_slack(plant)
        period_records = by_period.get(t, [])

        if period_records:
            blocks = np.concatenate([units[r.unit].blocks for r in period_records])
            unit_ids = np.concatenate([np.full(units[r.unit].blocks.size, r.unit) for r in period_records])
            tonnes = np.concatenate([tonnage[units[r.unit].blocks] * r.fraction for r in period_records])
            by_block = np.argsort(blocks, kind="stable")
            blocks, unit_ids, tonnes = blocks[by_block], unit_ids[by_block], tonnes[by_block]
            route = np.full(blocks.size, int(Route.WASTE))

            ore_parcels = np.flatnonzero(ore[blocks])
            if not stockpiling:
                # un bloque ya procesado entra primero; uno ya botado sigue al botadero
                ore_parcels = ore_parcels[~wasted[blocks[ore_parcels]]]
                first_time = ~processed[blocks[ore_parcels]]
            else:
                first_time = np.zeros(ore_parcels.size, dtype=bool)
            ore_parcels = ore_parcels[np.lexsort((blocks[ore_parcels], -grade[blocks[ore_parcels]], first_time))]
            prefix = np.cumsum(tonnes[ore_parcels])
            fits = int(np.searchsorted(prefix, plant + slack, side="right"))
            route[ore_parcels[:fits]] = int(Route.MILL)
            milled = float(prefix[fits - 1]) if fits else 0.0
            overflow = int(Route.STOCKPILE) if stockpiling else int(Route.WASTE)
            for parcel in ore_parcels[fits:].tolist():
                if milled + tonnes[parcel] <= plant + slack:
                    route[parcel] = int(Route.MILL)
                    milled += tonnes[parcel]
                else:
                    route[parcel] = overflow

            value = tonnes * (grade[blocks] * recovery[blocks] * price - mined_cost - processed_cost)
            cash = np.where(route == int(Route.MILL), value, -tonnes * mined_cost)
            emit(t, blocks, unit_ids, route, tonnes, cash)
            processed[blocks[route != int(Route.WASTE)]] = True
            wasted[blocks[(route == int(Route.WASTE)) & ore[blocks]]] = True

            for parcel in np.flatnonzero(route == int(Route.STOCKPILE)).tolist():
                stockpile.append([float(tonnes[parcel]), int(blocks[parcel]), int(unit_ids[parcel]), t])

        residual = plant - milled
        if stockpile and residual > slack:
            stockpile.sort(key=lambda p: (-grade[int(p[1])], int(p[1]), p[3]))
            taken_blocks, taken_units, taken_tonnes = [], [], []
            for parcel in stockpile:
                if residual <= slack:
                    break
                take = parcel[0] if parcel[0] <= residual + slack else residual
                parcel[0] -= take
                residual -= take
                taken_blocks.append(int(parcel[1]))
                taken_units.append(int(parcel[2]))
                taken_tonnes.append(take)
            stockpile = [p for p in stockpile if p[0] > FRACTION_TOLERANCE * max(1.0, tonnage[int(p[1])])]
            if taken_blocks:
                blocks = np.array(taken_blocks, dtype=np.int64)
                tonnes = np.array(taken_tonnes, dtype=np.float64)
                cash = tonnes * (grade[blocks] * recovery[blocks] * price - processed_cost)
                emit(t, blocks, np.array(taken_units, dtype=np.int64),
                     np.full(blocks.size, int(Route.RECLAIM)), tonnes, cash)

    return Schedule(
        t_max=calendar.t_max,
        records=tuple(records),
        flows=FlowTable.from_columns(columns),
        units=tuple(units),
        geometry=model.geometry,
        stockpiling=stockpiling,
    )


def decode(chromosome: Sequence[int], units: Sequence[StageBenchUnit], precedence: UnitPrecedence,
           model: BlockModel, calendar: Calendar, econ: EconomicModel, stockpiling: bool = True) -> Schedule:
    """Cronograma determinista de una secuencia de unidades (ver módulo)."""
    records = plan_extraction(chromosome, units, precedence, model, calendar, econ, stockpiling)
    schedule = route_extraction(records, units, model, calendar, econ, stockpiling)
    pending = schedule.unmined_units(len(units))
    if pending:
        logger.debug("Cronograma truncado: %d unidades sin completar en %d períodos", len(pending), calendar.t_max)
    return schedule


def npv(schedule: Schedule, econ: EconomicModel) -> float:
    """Suma de flujos por período descontados con (1 + d)^-(t-1)."""
    if schedule.t_max == 0:
        return 0.0
    return float(np.dot(schedule.cashflows, econ.discount_factors(schedule.t_max)))


# ---------------------------------------------------------------------------
# Validación
# ---------------------------------------------------------------------------

class Violation(NamedTuple):
    constraint: str
    period: Optional[int]
    subject: str
    magnitude: float


def _unit_label(units: Sequence[StageBenchUnit], unit: int) -> str:
    for candidate in units:
        if candidate.unit_id == unit:
            return candidate.label
    return f"U{unit}"


def validate(schedule: Schedule, units: Sequence[StageBenchUnit], precedence: UnitPrecedence,
             calendar: Calendar) -> List[Violation]:
    """Lista de violaciones; vacía si se cumplen fracciones, destinos, precedencias y capacidades."""
    violations: List[Violation] = []
    t_max = schedule.t_max

    for record in schedule.records:
        if not 0.0 < record.fraction <= 1.0 + FRACTION_TOLERANCE:
            violations.append(Violation("fraction", record.period, _unit_label(units, record.unit),
                                        float(record.fraction)))
    for unit, total in sorted(schedule.unit_fractions().items()):
        if total > 1.0 + FRACTION_TOLERANCE:
            violations.append(Violation("fraction", None, _unit_label(units, unit), total - 1.0))

    flows = schedule.flows
    fresh = np.isin(flows.route, [int(r) for r in FRESH_ROUTES])
    if fresh.any():
        frame = pd.DataFrame({
            "period": flows.period[fresh],
            "block": flows.block[fresh],
            "route": flows.route[fresh],
            "tonnes": flows.tonnes[fresh],
        })
        # un bloque no puede ir a planta (directo o vía stock) y a botadero, en ningún período
        frame["to_waste"] = frame["route"] == int(Route.WASTE)
        mixed = frame.groupby("block")["to_waste"].nunique()
        for block in mixed[mixed > 1].index:
            parts = frame[frame["block"] == block]
            smaller = parts.groupby("to_waste")["tonnes"].sum().min()
            period = int(parts.loc[parts["to_waste"], "period"].max())
            violations.append(Violation("destination", period, f"bloque {int(block)}", float(smaller)))

    first = schedule.first_periods()
    done = schedule.completion_periods()
    for u, v in precedence.arcs:
        subject = f"{_unit_label(units, u)} -> {_unit_label(units, v)}"
        if v in first:
            start_u = first.get(u, t_max + 1)
            if start_u > first[v]:
                violations.append(Violation("precedence", first[v], subject, float(start_u - first[v])))
        if v in done:
            end_u = done.get(u, t_max + 1)
            if end_u > done[v]:
                violations.append(Violation("precedence", done[v], subject, float(end_u - done[v])))

    mined = schedule.mined_tonnes
    milled = schedule.milled_tonnes
    for t in range(1, min(t_max, calendar.t_max) + 1):
        mining_cap = float(calendar.mining[t - 1])
        plant_cap = float(calendar.plant[t - 1])
        if mined[t - 1] > mining_cap + _capacity_slack(mining_cap):
            violations.append(Violation("mining_capacity", t, "mina", float(mined[t - 1] - mining_cap)))
        if milled[t - 1] > plant_cap + _capacity_slack(plant_cap):
            violations.append(Violation("processing_capacity", t, "planta", float(milled[t - 1] - plant_cap)))
    for t in range(calendar.t_max + 1, t_max + 1):
        if mined[t - 1] > 0 or milled[t - 1] > 0:
            violations.append(Violation("calendar", t, "período fuera del calendario", float(mined[t - 1])))

    balance = schedule.stockpile_balance
    for t in range(1, t_max + 1):
        if balance[t - 1] < -_capacity_slack(float(schedule.stockpiled_tonnes[: t].sum())):
            violations.append(Violation("stockpile", t, "stock", float(-balance[t - 1])))
    return violations


# ---------------------------------------------------------------------------
# Persistencia
# ---------------------------------------------------------------------------

def save_schedule(schedule: Schedule, path: PathLike) -> None:
    write_table(path, schedule.table())


class ScheduleRow(NamedTuple):
    period: int
    stage: int
    bench: int
    fraction: float


def load_schedule_records(path: PathLike) -> List[ScheduleRow]:
    """Filas con fracción > 0 del CSV de cronograma (lo necesario para reevaluar)."""
    table, header_line, _ = read_table(path, ("period", "unit_stage", "unit_bench", "fraction"))
    period = numeric_column(path, table, "period", header_line, integer=True)
    stage = numeric_column(path, table, "unit_stage", header_line, integer=True)
    bench = numeric_column(path, table, "unit_bench", header_line, integer=True)
    fraction = numeric_column(path, table, "fraction", header_line)
    bad = (period < 1) | (fraction < 0) | (fraction > 1.0 + FRACTION_TOLERANCE)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise FileFormatException(path, "período o fracción fuera de rango", header_line + 1 + row)
    return [
        ScheduleRow(int(p), int(s), int(b), float(f))
        for p, s, b, f in zip(period, stage, bench, fraction) if f > 0
    ]


def records_for_units(rows: Sequence[ScheduleRow], units: Sequence[StageBenchUnit],
                      path: Optional[PathLike] = None) -> List[ExtractionRecord]:
    lookup = {(u.stage, u.bench): u.unit_id for u in units}
    records = []
    for row in rows:
        unit = lookup.get((row.stage, row.bench))
        if unit is None:
            raise FileFormatException(path or "cronograma", f"la unidad S{row.stage}B{row.bench} no existe en el staging")
        records.append(ExtractionRecord(row.period, unit, row.fraction))
    return records


def save_chromosome(order: Sequence[int], path: PathLike) -> None:
    Path(path).write_text("".join(f"{int(u)}\n" for u in order), encoding="utf-8")


def load_chromosome(path: PathLike) -> List[int]:
    order: List[int] = []
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            order.append(int(line))
        except ValueError as ex:
            raise FileFormatException(path, f"id de unidad inválido {line!r}", number) from ex
    return order


__all__ = [
    "Route",
    "ExtractionRecord",
    "FlowTable",
    "Schedule",
    "Violation",
    "ScheduleRow",
    "plan_extraction",
    "route_extraction",
    "decode",
    "npv",
    "validate",
    "unit_ore_tonnage",
    "check_chromosome",
    "save_schedule",
    "load_schedule_records",
    "records_for_units",
    "save_chromosome",
    "load_chromosome",
]
