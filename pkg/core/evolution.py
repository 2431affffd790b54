"""
Algoritmo evolutivo sobre órdenes topológicos de unidades etapa/banco.

Todos los operadores devuelven órdenes válidos: la población nunca contiene
una secuencia que viole precedencias. La aptitud es el VAN del cronograma
decodificado. El mejor individuo se conserva por elitismo.
"""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx

from core.block_model import BlockModel, Calendar, EconomicModel
from core.constants import ORACLE_UNIT_LIMIT
from core.exceptions import InvalidEAConfigException, OracleLimitException
from core.scheduler import Schedule, decode, npv
from core.staging import StageBenchUnit, UnitPrecedence

logger = logging.getLogger(__name__)

Order = Tuple[int, ...]


@dataclass(frozen=True)
class EAConfig:
    population_size: int = 50
    generations: int = 200
    tournament_size: int = 3
    mutation_rate: float = 0.2
    crossover_rate: float = 0.9
    elitism_count: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise InvalidEAConfigException("population_size", self.population_size)
        if self.generations < 0:
            raise InvalidEAConfigException("generations", self.generations)
        if self.tournament_size < 1:
            raise InvalidEAConfigException("tournament_size", self.tournament_size)
        for name in ("mutation_rate", "crossover_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidEAConfigException(name, value)
        if not 1 <= self.elitism_count <= self.population_size:
            raise InvalidEAConfigException("elitism_count", self.elitism_count)


class SequenceProblem:
    """
    Instancia de secuenciación: unidades, precedencias y todo lo necesario
    para decodificar. Cachea la aptitud por orden.
    """

    def __init__(self, units: Sequence[StageBenchUnit], precedence: UnitPrecedence, model: BlockModel,
                 calendar: Calendar, econ: EconomicModel, stockpiling: bool = True):
        self.units = list(units)
        self.precedence = precedence
        self.model = model
        self.calendar = calendar
        self.econ = econ
        self.stockpiling = stockpiling
        self.n_units = len(self.units)
        self.arcs = set(precedence.arcs)
        self.successors: Dict[int, List[int]] = {u: [] for u in range(self.n_units)}
        for u, v in precedence.arcs:
            self.successors[u].append(v)
        self.evaluations = 0
        self._cache: Dict[Order, float] = {}

    def decode(self, order: Sequence[int]) -> Schedule:
        return decode(order, self.units, self.precedence, self.model, self.calendar, self.econ, self.stockpiling)

    def fitness(self, order: Sequence[int]) -> float:
        key = tuple(order)
        if key not in self._cache:
            self._cache[key] = npv(self.decode(key), self.econ)
            self.evaluations += 1
        return self._cache[key]

    def _in_degrees(self) -> List[int]:
        degree = [0] * self.n_units
        for _, v in self.arcs:
            degree[v] += 1
        return degree

    def random_order(self, rng: random.Random) -> Order:
        """Kahn eligiendo al azar entre las unidades disponibles."""
        degree = self._in_degrees()
        ready = [u for u in range(self.n_units) if degree[u] == 0]
        order: List[int] = []
        while ready:
            unit = ready.pop(rng.randrange(len(ready)))
            order.append(unit)
            for v in self.successors[unit]:
                degree[v] -= 1
                if degree[v] == 0:
                    ready.append(v)
        return tuple(order)

    def repair(self, order: Sequence[int]) -> Order:
        """Orden topológico más cercano: Kahn con prioridad = posición en `order`."""
        position = {u: p for p, u in enumerate(order)}
        degree = self._in_degrees()
        heap = [(position[u], u) for u in range(self.n_units) if degree[u] == 0]
        heapq.heapify(heap)
        repaired: List[int] = []
        while heap:
            _, unit = heapq.heappop(heap)
            repaired.append(unit)
            for v in self.successors[unit]:
                degree[v] -= 1
                if degree[v] == 0:
                    heapq.heappush(heap, (position[v], v))
        return tuple(repaired)

    def crossover(self, first: Sequence[int], second: Sequence[int], rng: random.Random) -> Order:
        """
        Cruce de orden: el hijo conserva un tramo del primer padre en su lugar
        y completa con el orden relativo del segundo; luego se repara.
        """
        n = len(first)
        if n < 2:
            return tuple(first)
        i, j = sorted(rng.sample(range(n + 1), 2))
        segment = list(first[i:j])
        kept = set(segment)
        rest = [u for u in second if u not in kept]
        child = rest[:i] + segment + rest[i:]
        return self.repair(child)

    def mutate(self, order: Sequence[int], rng: random.Random) -> Order:
        """Intercambia el primer par adyacente sin arco directo a partir de una posición al azar."""
        n = len(order)
        if n < 2:
            return tuple(order)
        start = rng.randrange(n - 1)
        mutated = list(order)
        for offset in range(n - 1):
            p = (start + offset) % (n - 1)
            a, b = mutated[p], mutated[p + 1]
            if (a, b) not in self.arcs:
                mutated[p], mutated[p + 1] = b, a
                return tuple(mutated)
        return tuple(order)


@dataclass
class EvolutionResult:
    best_order: Order
    schedule: Schedule
    npv: float
    trace: List[float] = field(default_factory=list)
    evaluations: int = 0


def _tournament(fitness: Sequence[float], size: int, rng: random.Random) -> int:
    contenders = rng.sample(range(len(fitness)), min(size, len(fitness)))
    return min(contenders, key=lambda i: (-fitness[i], i))


def _best_index(fitness: Sequence[float]) -> int:
    return min(range(len(fitness)), key=lambda i: (-fitness[i], i))


def evolve(units: Sequence[StageBenchUnit], precedence: UnitPrecedence, model: BlockModel,
           calendar: Calendar, econ: EconomicModel, config: EAConfig = EAConfig(),
           stockpiling: bool = True, problem: Optional[SequenceProblem] = None) -> EvolutionResult:
    """
    Población inicial de órdenes topológicos aleatorios, selección por torneo,
    cruce de orden con reparación, mutación por intercambio adyacente válido y
    elitismo. `trace` tiene el mejor VAN tras cada generación (más la inicial).
    """
    problem = problem or SequenceProblem(units, precedence, model, calendar, econ, stockpiling)
    rng = random.Random(config.seed)

    population = [problem.random_order(rng) for _ in range(config.population_size)]
    fitness = [problem.fitness(order) for order in population]
    best = _best_index(fitness)
    best_order, best_fitness = population[best], fitness[best]
    trace = [best_fitness]
    logger.info("Generación 0: mejor VAN %.2f", best_fitness)

    for generation in range(1, config.generations + 1):
        ranked = sorted(range(len(population)), key=lambda i: (-fitness[i], i))
        offspring = [population[i] for i in ranked[: config.elitism_count]]
        while len(offspring) < config.population_size:
            first = population[_tournament(fitness, config.tournament_size, rng)]
            second = population[_tournament(fitness, config.tournament_size, rng)]
            child = problem.crossover(first, second, rng) if rng.random() < config.crossover_rate else first
            if rng.random() < config.mutation_rate:
                child = problem.mutate(child, rng)
            offspring.append(child)

        population = offspring
        fitness = [problem.fitness(order) for order in population]
        best = _best_index(fitness)
        if fitness[best] > best_fitness:
            best_order, best_fitness = population[best], fitness[best]
        trace.append(best_fitness)
        if generation % 10 == 0 or generation == config.generations:
            logger.info("Generación %d: mejor VAN %.2f (%d evaluaciones)", generation, best_fitness,
                        problem.evaluations)

    schedule = problem.decode(best_order)
    return EvolutionResult(best_order, schedule, best_fitness, trace, problem.evaluations)


class OracleResult(NamedTuple):
    order: Order
    npv: float


def brute_force_best(units: Sequence[StageBenchUnit], precedence: UnitPrecedence, model: BlockModel,
                     calendar: Calendar, econ: EconomicModel, stockpiling: bool = True,
                     limit: int = ORACLE_UNIT_LIMIT) -> OracleResult:
    """Enumera todos los órdenes topológicos; empates al orden lexicográficamente menor."""
    if len(units) > limit:
        raise OracleLimitException(len(units), limit)
    problem = SequenceProblem(units, precedence, model, calendar, econ, stockpiling)
    best: Optional[Tuple[float, Order]] = None
    count = 0
    for order in nx.all_topological_sorts(precedence.to_networkx()):
        key = tuple(order)
        value = problem.fitness(key)
        count += 1
        if best is None or value > best[0] or (value == best[0] and key < best[1]):
            best = (value, key)
    assert best is not None
    logger.info("Oráculo: %d órdenes evaluados, mejor VAN %.2f", count, best[0])
    return OracleResult(best[1], best[0])


__all__ = [
    "EAConfig",
    "SequenceProblem",
    "EvolutionResult",
    "OracleResult",
    "evolve",
    "brute_force_best",
]
