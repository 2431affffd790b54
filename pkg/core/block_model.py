"""
Modelo de bloques: geometría, economía por bloque y precedencias de talud.

Un BlockModel es una grilla densa (nx, ny, nz) de bloques con tonelaje,
ley (fracción másica) y dominio. El nivel k = 0 es el banco superior y
k crece hacia abajo. Los índices planos siguen el orden C de (nx, ny, nz).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import FrozenSet, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from core.constants import (
    DEFAULT_BLOCK_SIZE,
    DEFAULT_ELEMENT,
    DEFAULT_ORIGIN,
    PLANT_RATIO_AFTER_UPGRADE,
    PLANT_RATIO_BEFORE_UPGRADE,
    PLANT_UPGRADE_PERIOD,
    REFERENCE_CUTOFF,
    REFERENCE_DISCOUNT_RATE,
    REFERENCE_MINING_COST,
    REFERENCE_PRICE,
    REFERENCE_PROCESSING_COST,
    REFERENCE_RECOVERIES,
    REFERENCE_REHAB_COST,
    REFERENCE_SELLING_COST,
)
from core.exceptions import (
    GeometryMismatchException,
    InvalidBlockException,
    InvalidCalendarException,
    InvalidEconomicsException,
    InvalidGeometryException,
    UnknownDomainException,
)

logger = logging.getLogger(__name__)


class Destination(Enum):
    PROCESS = "process"
    WASTE = "waste"


class SlopePattern(Enum):
    FIVE_POINT = "five"
    NINE_POINT = "nine"


class BlockIndex(NamedTuple):
    i: int
    j: int
    k: int


@dataclass(frozen=True)
class Block:
    """Un bloque individual (vista inmutable de una celda del modelo)."""

    index: BlockIndex
    tonnage: float
    grade: float
    domain: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.tonnage) or self.tonnage <= 0:
            raise InvalidBlockException(self.index, f"tonelaje {self.tonnage} debe ser > 0")
        if not np.isfinite(self.grade) or not 0.0 <= self.grade <= 1.0:
            raise InvalidBlockException(self.index, f"ley {self.grade} fuera de [0, 1]")
        if self.domain < 0:
            raise InvalidBlockException(self.index, f"dominio {self.domain} negativo")


@dataclass(frozen=True)
class DrillSample:
    """Muestra de sondaje en coordenadas de mundo (metros)."""

    x: float
    y: float
    z: float
    grade: float
    domain: int

    def __post_init__(self) -> None:
        coords = (self.x, self.y, self.z)
        if not all(np.isfinite(c) for c in coords):
            raise InvalidBlockException(coords, "coordenadas no finitas en la muestra")
        if not np.isfinite(self.grade) or not 0.0 <= self.grade <= 1.0:
            raise InvalidBlockException(coords, f"ley de muestra {self.grade} fuera de [0, 1]")
        if self.domain < 0:
            raise InvalidBlockException(coords, f"dominio de muestra {self.domain} negativo")

    @property
    def position(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)


def _readonly(values, dims: Tuple[int, int, int], dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(dims)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BlockModel:
    """
    Arreglo rectangular tridimensional de bloques.

    Los arreglos `tonnage`, `grade` y `domain` tienen forma `dims` y son de
    solo lectura; para variar leyes/dominios se usa `with_values`.
    """

    dims: Tuple[int, int, int]
    tonnage: np.ndarray
    grade: np.ndarray
    domain: np.ndarray
    block_size: Tuple[float, float, float] = DEFAULT_BLOCK_SIZE
    origin: Tuple[float, float, float] = DEFAULT_ORIGIN
    element_name: str = DEFAULT_ELEMENT

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise InvalidGeometryException(f"dims {self.dims} deben ser tres enteros positivos")
        size = tuple(float(s) for s in self.block_size)
        if len(size) != 3 or any(not np.isfinite(s) or s <= 0 for s in size):
            raise InvalidGeometryException(f"block_size {self.block_size} debe ser positivo")
        origin = tuple(float(o) for o in self.origin)
        if len(origin) != 3 or not all(np.isfinite(o) for o in origin):
            raise InvalidGeometryException(f"origin {self.origin} debe ser finito")

        expected = dims[0] * dims[1] * dims[2]
        for name in ("tonnage", "grade", "domain"):
            if np.size(getattr(self, name)) != expected:
                raise InvalidGeometryException(
                    f"{name} tiene {np.size(getattr(self, name))} valores, se esperaban {expected}"
                )

        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "block_size", size)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "tonnage", _readonly(self.tonnage, dims, np.float64))
        object.__setattr__(self, "grade", _readonly(self.grade, dims, np.float64))
        object.__setattr__(self, "domain", _readonly(self.domain, dims, np.int64))
        self._validate_blocks()

    def _validate_blocks(self) -> None:
        bad = ~np.isfinite(self.tonnage) | (self.tonnage <= 0)
        if bad.any():
            idx = self.unravel(int(np.flatnonzero(bad)[0]))
            raise InvalidBlockException(idx, f"tonelaje {self.tonnage[idx]} debe ser > 0")
        bad = ~np.isfinite(self.grade) | (self.grade < 0) | (self.grade > 1)
        if bad.any():
            idx = self.unravel(int(np.flatnonzero(bad)[0]))
            raise InvalidBlockException(idx, f"ley {self.grade[idx]} fuera de [0, 1]")
        bad = self.domain < 0
        if bad.any():
            idx = self.unravel(int(np.flatnonzero(bad)[0]))
            raise InvalidBlockException(idx, f"dominio {self.domain[idx]} negativo")

    # ---------- geometría ----------
    @property
    def n_blocks(self) -> int:
        nx_, ny_, nz_ = self.dims
        return nx_ * ny_ * nz_

    @property
    def geometry(self) -> Tuple[Tuple[int, int, int], Tuple[float, float, float], Tuple[float, float, float]]:
        return (self.dims, self.block_size, self.origin)

    def flat_index(self, i: int, j: int, k: int) -> int:
        return int(np.ravel_multi_index((i, j, k), self.dims))

    def unravel(self, flat: int) -> BlockIndex:
        i, j, k = np.unravel_index(int(flat), self.dims)
        return BlockIndex(int(i), int(j), int(k))

    def contains(self, index: Sequence[int]) -> bool:
        return all(0 <= int(v) < d for v, d in zip(index, self.dims))

    def levels(self) -> np.ndarray:
        """Nivel k de cada bloque en orden plano."""
        return np.indices(self.dims)[2].ravel()

    def centroids(self) -> np.ndarray:
        """Centroides (n_blocks, 3) en coordenadas de mundo, orden plano."""
        ii, jj, kk = (axis.ravel() for axis in np.indices(self.dims))
        sx, sy, sz = self.block_size
        ox, oy, oz = self.origin
        return np.column_stack(
            (ox + (ii + 0.5) * sx, oy + (jj + 0.5) * sy, oz - (kk + 0.5) * sz)
        )

    def locate(self, x: float, y: float, z: float) -> Optional[BlockIndex]:
        """Bloque que contiene el punto, o None si cae fuera del modelo."""
        sx, sy, sz = self.block_size
        ox, oy, oz = self.origin
        index = (
            int(np.floor((x - ox) / sx)),
            int(np.floor((y - oy) / sy)),
            int(np.floor((oz - z) / sz)),
        )
        if not self.contains(index):
            return None
        return BlockIndex(*index)

    def same_geometry(self, other: "BlockModel") -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.block_size, other.block_size, rtol=1e-12, atol=0.0)
            and np.allclose(self.origin, other.origin, rtol=1e-12, atol=1e-12)
        )

    def require_same_geometry(self, other: "BlockModel") -> None:
        if not self.same_geometry(other):
            raise GeometryMismatchException(self.geometry, other.geometry)

    # ---------- acceso a bloques ----------
    def block(self, index: Sequence[int]) -> Block:
        idx = BlockIndex(*(int(v) for v in index))
        if not self.contains(idx):
            raise InvalidBlockException(idx, f"fuera del modelo {self.dims}")
        return Block(idx, float(self.tonnage[idx]), float(self.grade[idx]), int(self.domain[idx]))

    def blocks(self) -> Iterator[Block]:
        for flat in range(self.n_blocks):
            yield self.block(self.unravel(flat))

    def with_values(self, grade, domain) -> "BlockModel":
        """Mismo modelo (geometría y tonelaje) con otras leyes y dominios."""
        return BlockModel(
            dims=self.dims,
            tonnage=self.tonnage,
            grade=np.asarray(grade, dtype=np.float64).reshape(self.dims),
            domain=np.asarray(domain, dtype=np.int64).reshape(self.dims),
            block_size=self.block_size,
            origin=self.origin,
            element_name=self.element_name,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BlockModel):
            return NotImplemented
        return (
            self.same_geometry(other)
            and self.element_name == other.element_name
            and np.array_equal(self.tonnage, other.tonnage)
            and np.array_equal(self.grade, other.grade)
            and np.array_equal(self.domain, other.domain)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"BlockModel(dims={self.dims}, block_size={self.block_size}, element={self.element_name!r})"


# ---------------------------------------------------------------------------
# Economía
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EconomicModel:
    """
    Precios, costos y recuperaciones, constantes en el tiempo.

    El costo de venta se cobra por tonelada procesada y el de rehabilitación
    por tonelada minada.
    """

    price_per_tonne_metal: float
    mining_cost: float
    processing_cost: float
    selling_cost: float
    rehab_cost: float
    cutoff_grade: float
    recovery_by_domain: Mapping[int, float] = field(default_factory=dict)
    discount_rate: float = REFERENCE_DISCOUNT_RATE

    def __post_init__(self) -> None:
        for name in ("price_per_tonne_metal", "mining_cost", "processing_cost", "selling_cost", "rehab_cost"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidEconomicsException(name, value, "debe ser finito y >= 0")
        if not np.isfinite(self.cutoff_grade) or not 0.0 <= self.cutoff_grade < 1.0:
            raise InvalidEconomicsException("cutoff_grade", self.cutoff_grade, "debe estar en [0, 1)")
        if not np.isfinite(self.discount_rate) or self.discount_rate < 0:
            raise InvalidEconomicsException("discount_rate", self.discount_rate, "debe ser >= 0")
        recoveries = {int(d): float(r) for d, r in dict(self.recovery_by_domain).items()}
        for domain, rec in recoveries.items():
            if domain < 0:
                raise InvalidEconomicsException(f"recovery_domain_{domain}", rec, "dominio negativo")
            if not np.isfinite(rec) or not 0.0 < rec <= 1.0:
                raise InvalidEconomicsException(f"recovery_domain_{domain}", rec, "debe estar en (0, 1]")
        object.__setattr__(self, "recovery_by_domain", dict(sorted(recoveries.items())))

    @classmethod
    def reference(cls, n_domains: int = 1, discount_rate: float = REFERENCE_DISCOUNT_RATE) -> "EconomicModel":
        """Economía del caso de cobre de referencia, con recuperaciones de 0.92 a 0.75."""
        recoveries = {d: REFERENCE_RECOVERIES[d % len(REFERENCE_RECOVERIES)] for d in range(max(1, n_domains))}
        return cls(
            price_per_tonne_metal=REFERENCE_PRICE,
            mining_cost=REFERENCE_MINING_COST,
            processing_cost=REFERENCE_PROCESSING_COST,
            selling_cost=REFERENCE_SELLING_COST,
            rehab_cost=REFERENCE_REHAB_COST,
            cutoff_grade=REFERENCE_CUTOFF,
            recovery_by_domain=recoveries,
            discount_rate=discount_rate,
        )

    @property
    def mined_cost_per_tonne(self) -> float:
        return self.mining_cost + self.rehab_cost

    @property
    def processed_cost_per_tonne(self) -> float:
        return self.processing_cost + self.selling_cost

    def recovery(self, domain: int, index: Sequence[int] = ()) -> float:
        try:
            return self.recovery_by_domain[int(domain)]
        except KeyError:
            raise UnknownDomainException(index, int(domain)) from None

    def with_price_factor(self, factor: float) -> "EconomicModel":
        return replace(self, price_per_tonne_metal=self.price_per_tonne_metal * factor)

    def discount_factors(self, t_max: int) -> np.ndarray:
        """(1 + d)^-(t-1) para t = 1..t_max."""
        return (1.0 + self.discount_rate) ** -np.arange(t_max, dtype=np.float64)


def block_value(block: Block, econ: EconomicModel, destination: Destination) -> float:
    """
    Valor no descontado de un bloque según su destino.

    Waste  -> -m  = -tonelaje * (minado + rehabilitación)
    Process -> r - c = tonelaje * ley * recuperación * precio
                       - tonelaje * (minado + rehab + proceso + venta)
    """
    recovery = econ.recovery(block.domain, block.index)
    mined = block.tonnage * econ.mined_cost_per_tonne
    if destination is Destination.WASTE:
        return -mined
    revenue = block.tonnage * block.grade * recovery * econ.price_per_tonne_metal
    return revenue - mined - block.tonnage * econ.processed_cost_per_tonne


@dataclass(frozen=True)
class BlockValues:
    """Valores vectorizados por bloque (orden plano)."""

    process: np.ndarray
    waste: np.ndarray
    ore: np.ndarray

    @property
    def best(self) -> np.ndarray:
        """Valor del mejor destino: proceso si es mineral, si no botadero."""
        return np.where(self.ore, self.process, self.waste)


def recovery_array(domain: np.ndarray, econ: EconomicModel, dims: Tuple[int, int, int]) -> np.ndarray:
    """Recuperación por bloque; falla con el primer bloque de dominio desconocido."""
    flat = np.asarray(domain).ravel()
    known = np.array(sorted(econ.recovery_by_domain), dtype=np.int64)
    missing = ~np.isin(flat, known)
    if missing.any():
        first = int(np.flatnonzero(missing)[0])
        i, j, k = np.unravel_index(first, dims)
        raise UnknownDomainException((int(i), int(j), int(k)), int(flat[first]))
    lookup = np.zeros(int(known.max()) + 1, dtype=np.float64)
    lookup[known] = [econ.recovery_by_domain[int(d)] for d in known]
    return lookup[flat]


def ore_mask(grade: np.ndarray, recovery: np.ndarray, econ: EconomicModel) -> np.ndarray:
    """Mineral: ley >= corte y el proceso rinde más que el botadero."""
    margin = grade * recovery * econ.price_per_tonne_metal - econ.processed_cost_per_tonne
    return (grade >= econ.cutoff_grade) & (margin > 0.0)


def block_values(model: BlockModel, econ: EconomicModel) -> BlockValues:
    tonnage = model.tonnage.ravel()
    grade = model.grade.ravel()
    recovery = recovery_array(model.domain, econ, model.dims)
    mined = tonnage * econ.mined_cost_per_tonne
    process = tonnage * grade * recovery * econ.price_per_tonne_metal - mined - tonnage * econ.processed_cost_per_tonne
    return BlockValues(process=process, waste=-mined, ore=ore_mask(grade, recovery, econ))


# ---------------------------------------------------------------------------
# Calendario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodCapacity:
    period: int
    mining_capacity: float
    plant_capacity: float


@dataclass(frozen=True)
class Calendar:
    """Capacidades por período t = 1..t_max."""

    periods: Tuple[PeriodCapacity, ...]

    def __post_init__(self) -> None:
        periods = tuple(self.periods)
        if not periods:
            raise InvalidCalendarException("t_max debe ser >= 1")
        for position, record in enumerate(periods, start=1):
            if record.period != position:
                raise InvalidCalendarException(f"se esperaba el período {position}, llegó {record.period}")
            for name in ("mining_capacity", "plant_capacity"):
                value = getattr(record, name)
                if not np.isfinite(value) or value < 0:
                    raise InvalidCalendarException(f"{name}={value} en el período {record.period}")
        object.__setattr__(self, "periods", periods)

    @classmethod
    def from_capacities(cls, mining: Sequence[float], plant: Sequence[float]) -> "Calendar":
        if len(mining) != len(plant):
            raise InvalidCalendarException("las series de mina y planta tienen largos distintos")
        return cls(tuple(
            PeriodCapacity(t, float(m), float(p)) for t, (m, p) in enumerate(zip(mining, plant), start=1)
        ))

    @classmethod
    def staged_plant(cls, mining_capacity: float, plant_before: float, plant_after: float,
                     t_max: int, upgrade_period: int = PLANT_UPGRADE_PERIOD) -> "Calendar":
        """Mina constante y planta que se amplía desde `upgrade_period`."""
        plant = [plant_before if t < upgrade_period else plant_after for t in range(1, t_max + 1)]
        return cls.from_capacities([mining_capacity] * t_max, plant)

    @classmethod
    def desk_scale(cls, pit_tonnage: float, t_max: int, mined_out_by: Optional[int] = None) -> "Calendar":
        """
        Calendario proporcional al de referencia (25 Mt mina, 5 y luego 9 Mt planta),
        escalado para minar `pit_tonnage` en `mined_out_by` períodos.
        """
        horizon = mined_out_by or max(1, int(round(t_max * 0.75)))
        mining = pit_tonnage / horizon
        return cls.staged_plant(
            mining,
            mining * PLANT_RATIO_BEFORE_UPGRADE,
            mining * PLANT_RATIO_AFTER_UPGRADE,
            t_max,
        )

    @property
    def t_max(self) -> int:
        return len(self.periods)

    @property
    def mining(self) -> np.ndarray:
        return np.array([p.mining_capacity for p in self.periods], dtype=np.float64)

    @property
    def plant(self) -> np.ndarray:
        return np.array([p.plant_capacity for p in self.periods], dtype=np.float64)


# ---------------------------------------------------------------------------
# Precedencias
# ---------------------------------------------------------------------------

FIVE_POINT_OFFSETS: Tuple[Tuple[int, int], ...] = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))
NINE_POINT_OFFSETS: Tuple[Tuple[int, int], ...] = tuple(
    (di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)
)


@dataclass(frozen=True, eq=False)
class PrecedenceGraph:
    """
    Arcos (pred -> succ) entre índices planos: pred debe minarse no después que succ.

    Se guarda como dos arreglos paralelos ordenados por (succ, pred).
    """

    dims: Tuple[int, int, int]
    pred: np.ndarray
    succ: np.ndarray

    def __post_init__(self) -> None:
        pred = np.asarray(self.pred, dtype=np.int64).copy()
        succ = np.asarray(self.succ, dtype=np.int64).copy()
        order = np.lexsort((pred, succ))
        pred, succ = pred[order], succ[order]
        pred.setflags(write=False)
        succ.setflags(write=False)
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "succ", succ)

    def __len__(self) -> int:
        return int(self.pred.size)

    @property
    def arcs(self) -> FrozenSet[Tuple[BlockIndex, BlockIndex]]:
        def idx(flat: int) -> BlockIndex:
            i, j, k = np.unravel_index(int(flat), self.dims)
            return BlockIndex(int(i), int(j), int(k))

        return frozenset((idx(p), idx(s)) for p, s in zip(self.pred, self.succ))

    def predecessors(self, flat: int) -> np.ndarray:
        lo, hi = np.searchsorted(self.succ, [flat, flat + 1])
        return self.pred[lo:hi]

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_edges_from(zip(self.pred.tolist(), self.succ.tolist()))
        return graph

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.to_networkx())


def derive_precedence(model: BlockModel, pattern: SlopePattern = SlopePattern.NINE_POINT) -> PrecedenceGraph:
    """
    Precedencias de talud: cada bloque del nivel k >= 1 depende del bloque
    central y sus vecinos (4 u 8) del nivel k - 1, recortados en el borde.
    """
    offsets = FIVE_POINT_OFFSETS if pattern is SlopePattern.FIVE_POINT else NINE_POINT_OFFSETS
    nx_, ny_, nz_ = model.dims
    if nz_ < 2:
        empty = np.zeros(0, dtype=np.int64)
        return PrecedenceGraph(model.dims, empty, empty)

    ii, jj, kk = np.meshgrid(np.arange(nx_), np.arange(ny_), np.arange(1, nz_), indexing="ij")
    ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
    succ_flat = np.ravel_multi_index((ii, jj, kk), model.dims)

    preds: List[np.ndarray] = []
    succs: List[np.ndarray] = []
    for di, dj in offsets:
        pi, pj = ii + di, jj + dj
        inside = (pi >= 0) & (pi < nx_) & (pj >= 0) & (pj < ny_)
        preds.append(np.ravel_multi_index((pi[inside], pj[inside], kk[inside] - 1), model.dims))
        succs.append(succ_flat[inside])
    graph = PrecedenceGraph(model.dims, np.concatenate(preds), np.concatenate(succs))
    logger.debug("Precedencias %s: %d arcos sobre %s", pattern.value, len(graph), model.dims)
    return graph
