"""
Reevaluación de una secuencia fija sobre cada miembro del ensamble y reportes.

La extracción (períodos y fracciones) queda fija; los destinos se vuelven a
decidir con las leyes y dominios de cada miembro, de modo que la
reclasificación mineral/estéril en torno a la ley de corte se refleja en la
economía de cada período.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.block_io import FLOAT_FORMAT, write_table
from core.block_model import BlockModel, Calendar, EconomicModel, ore_mask, recovery_array
from core.exceptions import GeometryMismatchException, InvalidEconomicsException, InvalidReplayException
from core.grade_ensemble import Ensemble, member_file
from core.scheduler import FRESH_ROUTES, Schedule, npv, route_extraction

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)
AGGREGATE_LABEL = "aggregate"


def member_label(index: int) -> str:
    return member_file(index)[: -len(".csv")]


def _check_geometry(schedule: Schedule, member: BlockModel) -> None:
    if schedule.geometry is None:
        return
    dims, size, origin = schedule.geometry
    same = (
        tuple(dims) == member.dims
        and np.allclose(size, member.block_size, rtol=1e-12, atol=0.0)
        and np.allclose(origin, member.origin, rtol=1e-12, atol=1e-12)
    )
    if not same:
        raise GeometryMismatchException(schedule.geometry, member.geometry)


def replay_schedule(schedule: Schedule, member: BlockModel, calendar: Calendar, econ: EconomicModel,
                    stockpiling: Optional[bool] = None) -> Schedule:
    """Mismas fracciones por período, destinos decididos con el miembro."""
    _check_geometry(schedule, member)
    flag = schedule.stockpiling if stockpiling is None else stockpiling
    return route_extraction(schedule.records, schedule.units, member, calendar, econ, flag)


def replay(schedule: Schedule, member: BlockModel, calendar: Calendar, econ: EconomicModel,
           stockpiling: Optional[bool] = None) -> np.ndarray:
    """Flujos de caja por período (largo t_max) del cronograma sobre `member`."""
    return replay_schedule(schedule, member, calendar, econ, stockpiling).cashflows


@dataclass(frozen=True, eq=False)
class ReplayResult:
    """Un flujo de caja por miembro (filas) y período (columnas)."""

    labels: Tuple[str, ...]
    cashflows: np.ndarray
    discount_rate: float
    schedules: Tuple[Schedule, ...] = ()

    def __post_init__(self) -> None:
        flows = np.atleast_2d(np.asarray(self.cashflows, dtype=np.float64))
        if flows.shape[0] != len(self.labels):
            raise InvalidReplayException(f"{flows.shape[0]} series para {len(self.labels)} etiquetas")
        object.__setattr__(self, "cashflows", flows)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_members(self) -> int:
        return len(self.labels)

    @property
    def t_max(self) -> int:
        return int(self.cashflows.shape[1])

    @property
    def total_profit(self) -> np.ndarray:
        return self.cashflows.sum(axis=1)

    @property
    def npvs(self) -> np.ndarray:
        factors = (1.0 + self.discount_rate) ** -np.arange(self.t_max, dtype=np.float64)
        return self.cashflows @ factors


def replay_ensemble(schedule: Schedule, ensemble: Ensemble, calendar: Calendar, econ: EconomicModel,
                    stockpiling: Optional[bool] = None) -> ReplayResult:
    schedules = []
    for m, member in enumerate(ensemble.members):
        schedules.append(replay_schedule(schedule, member, calendar, econ, stockpiling))
        logger.info("Reevaluado %s: VAN %.2f", member_label(m), npv(schedules[-1], econ))
    return ReplayResult(
        labels=tuple(member_label(m) for m in range(len(ensemble))),
        cashflows=np.stack([s.cashflows for s in schedules]),
        discount_rate=econ.discount_rate,
        schedules=tuple(schedules),
    )


# ---------------------------------------------------------------------------
# Estadísticas
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PeriodStats:
    """Máximo, mínimo, media y desvío poblacional de la ganancia por período."""

    max: np.ndarray
    min: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @property
    def t_max(self) -> int:
        return int(self.mean.size)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "period": np.arange(1, self.t_max + 1),
            "max": self.max,
            "min": self.min,
            "mean": self.mean,
            "std": self.std,
        })


def period_stats(results: ReplayResult) -> PeriodStats:
    flows = results.cashflows
    mean = flows.mean(axis=0)
    low, high = flows.min(axis=0), flows.max(axis=0)
    # la media puede salirse de [min, max] por redondeo
    return PeriodStats(max=high, min=low, mean=np.clip(mean, low, high), std=flows.std(axis=0, ddof=0))


@dataclass(frozen=True, eq=False)
class RemainingNpvSeries:
    """RNPV(t) = cf_t + RNPV(t+1) / (1 + d), por miembro, y sus cuantiles por período."""

    labels: Tuple[str, ...]
    values: np.ndarray
    quantiles: np.ndarray

    def iqr(self) -> np.ndarray:
        return self.quantiles[:, 3] - self.quantiles[:, 1]

    def frame(self) -> pd.DataFrame:
        n, t_max = self.values.shape
        return pd.DataFrame({
            "period": np.tile(np.arange(1, t_max + 1), n),
            "member": np.repeat(self.labels, t_max),
            "rnpv": self.values.ravel(),
        })

    def quantile_frame(self) -> pd.DataFrame:
        table = pd.DataFrame(self.quantiles, columns=["min", "q1", "median", "q3", "max"])
        table.insert(0, "period", np.arange(1, len(table) + 1))
        return table


def remaining_npv_values(cashflows: np.ndarray, discount_rate: float) -> np.ndarray:
    flows = np.atleast_2d(np.asarray(cashflows, dtype=np.float64))
    values = np.zeros_like(flows)
    carry = np.zeros(flows.shape[0])
    for t in range(flows.shape[1] - 1, -1, -1):
        carry = flows[:, t] + carry / (1.0 + discount_rate)
        values[:, t] = carry
    return values


def remaining_npv(results: ReplayResult, discount_rate: Optional[float] = None) -> RemainingNpvSeries:
    d = results.discount_rate if discount_rate is None else discount_rate
    if d < 0:
        raise InvalidEconomicsException("discount_rate", d, "debe ser >= 0")
    values = remaining_npv_values(results.cashflows, d)
    quantiles = np.quantile(values, QUANTILES, axis=0, method="linear").T
    return RemainingNpvSeries(results.labels, values, quantiles)


@dataclass(frozen=True)
class Summary:
    average_npv: float
    total_profit_range: float
    min_npv: float
    max_npv: float
    mean_total_profit: float


def summary(results: ReplayResult) -> Summary:
    npvs = results.npvs
    totals = results.total_profit
    return Summary(
        average_npv=float(npvs.mean()),
        total_profit_range=float(totals.max() - totals.min()),
        min_npv=float(npvs.min()),
        max_npv=float(npvs.max()),
        mean_total_profit=float(totals.mean()),
    )


# ---------------------------------------------------------------------------
# Factibilidad y reclasificación
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    """Indicadores de un cronograma válido que no se optimizan: flujos negativos y uso de planta."""

    cashflows: np.ndarray
    plant_capacity: np.ndarray
    milled: np.ndarray

    @property
    def utilisation(self) -> np.ndarray:
        safe = np.where(self.plant_capacity > 0, self.plant_capacity, 1.0)
        return np.where(self.plant_capacity > 0, self.milled / safe, 0.0)

    @property
    def negative_periods(self) -> int:
        return int((self.cashflows < 0).sum())

    @property
    def first_positive_period(self) -> Optional[int]:
        positive = np.flatnonzero(self.cashflows > 0)
        return int(positive[0]) + 1 if positive.size else None

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "period": np.arange(1, self.cashflows.size + 1),
            "plant_capacity": self.plant_capacity,
            "tonnes_milled": self.milled,
            "utilisation": self.utilisation,
            "cashflow": self.cashflows,
        })


def feasibility(schedule: Schedule, calendar: Calendar) -> FeasibilityReport:
    return FeasibilityReport(schedule.cashflows, calendar.plant[: schedule.t_max], schedule.milled_tonnes)


def reclassification(schedule: Schedule, member: BlockModel, aggregate_model: BlockModel,
                     econ: EconomicModel) -> np.ndarray:
    """Toneladas extraídas por período cuya clase mineral/estéril difiere entre miembro y agregado."""
    def ore_of(model: BlockModel) -> np.ndarray:
        return ore_mask(model.grade.ravel(), recovery_array(model.domain, econ, model.dims), econ)

    flows = schedule.flows
    fresh = np.isin(flows.route, [int(r) for r in FRESH_ROUTES])
    blocks = flows.block[fresh]
    changed = ore_of(member)[blocks] != ore_of(aggregate_model)[blocks]
    return np.bincount(flows.period[fresh][changed] - 1, weights=flows.tonnes[fresh][changed],
                       minlength=schedule.t_max)[: schedule.t_max]


# ---------------------------------------------------------------------------
# Archivos de reporte
# ---------------------------------------------------------------------------

def long_frame(labels: Sequence[str], values: np.ndarray, column: str) -> pd.DataFrame:
    values = np.atleast_2d(values)
    n, t_max = values.shape
    return pd.DataFrame({
        "period": np.tile(np.arange(1, t_max + 1), n),
        "member": np.repeat(list(labels), t_max),
        column: values.ravel(),
    })


def format_stat(value: float) -> str:
    """Un decimal, sin '.0' final: -130250000.0 -> '-130250000'."""
    text = f"{value:.1f}"
    text = text[:-2] if text.endswith(".0") else text
    return "0" if text == "-0" else text


def format_std(value: float) -> str:
    return f"{value:.1f}"


def write_period_stats(stats: PeriodStats, path: PathLike) -> None:
    lines = ["period,max,min,mean,std"]
    for t in range(stats.t_max):
        lines.append(",".join((
            str(t + 1),
            format_stat(stats.max[t]),
            format_stat(stats.min[t]),
            format_stat(stats.mean[t]),
            format_std(stats.std[t]),
        )))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_profit_by_member(labels: Sequence[str], cashflows: np.ndarray, path: PathLike) -> None:
    write_table(path, long_frame(labels, cashflows, "cashflow"))


def write_remaining_npv(series: RemainingNpvSeries, path: PathLike) -> None:
    write_table(path, series.frame())


def write_remaining_npv_quantiles(series: RemainingNpvSeries, path: PathLike) -> None:
    write_table(path, series.quantile_frame())


def write_reclassified(labels: Sequence[str], tonnes: np.ndarray, path: PathLike) -> None:
    write_table(path, long_frame(labels, tonnes, "tonnes"))


def write_feasibility(report: FeasibilityReport, path: PathLike) -> None:
    write_table(path, report.frame())


def summary_entries(result: Summary, extra: Optional[Dict[str, object]] = None) -> List[Tuple[str, str]]:
    entries: List[Tuple[str, str]] = [
        ("average_npv", FLOAT_FORMAT % result.average_npv),
        ("total_profit_range", FLOAT_FORMAT % result.total_profit_range),
        ("min_npv", FLOAT_FORMAT % result.min_npv),
        ("max_npv", FLOAT_FORMAT % result.max_npv),
        ("mean_total_profit", FLOAT_FORMAT % result.mean_total_profit),
    ]
    for key, value in (extra or {}).items():
        entries.append((key, FLOAT_FORMAT % value if isinstance(value, float) else str(value)))
    return entries


def write_summary(result: Summary, path: PathLike, extra: Optional[Dict[str, object]] = None) -> None:
    lines = [f"{key}={value}" for key, value in summary_entries(result, extra)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


__all__ = [
    "AGGREGATE_LABEL",
    "ReplayResult",
    "PeriodStats",
    "RemainingNpvSeries",
    "Summary",
    "FeasibilityReport",
    "replay",
    "replay_schedule",
    "replay_ensemble",
    "period_stats",
    "remaining_npv",
    "remaining_npv_values",
    "summary",
    "feasibility",
    "reclassification",
    "member_label",
    "format_stat",
    "format_std",
    "write_period_stats",
    "write_profit_by_member",
    "write_remaining_npv",
    "write_remaining_npv_quantiles",
    "write_reclassified",
    "write_feasibility",
    "write_summary",
]
