"""
Pit final y shells anidados por cierre máximo.

El cierre máximo se resuelve con la reducción clásica a corte mínimo:
fuente -> nodos positivos (capacidad = valor), nodos negativos -> sumidero
(capacidad = -valor) y arcos de precedencia sucesor -> predecesor sin
capacidad (infinita). Los valores se escalan a centavos enteros.
El conjunto devuelto son los nodos alcanzables desde la fuente en el grafo
residual: el cierre óptimo mínimo.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from networkx.algorithms.flow import maximum_flow

from core.block_io import numeric_column, read_table, row_error, write_table, block_table
from core.block_model import BlockModel, EconomicModel, PrecedenceGraph, block_values, ore_mask, recovery_array
from core.constants import DEFAULT_REVENUE_FACTOR_COUNT, DEFAULT_REVENUE_FACTOR_RANGE, NEAR_CUTOFF_BAND
from core.exceptions import (
    ClosureException,
    CyclicPrecedenceException,
    FileFormatException,
    InvalidRevenueFactorsException,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
BRUTE_FORCE_LIMIT = 20
SOURCE = "source"
SINK = "sink"


@dataclass(frozen=True, eq=False)
class ClosureProblem:
    """Valores por nodo y arcos pred -> succ (succ requiere a pred)."""

    values: np.ndarray
    pred: np.ndarray
    succ: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64).ravel())
        object.__setattr__(self, "pred", np.asarray(self.pred, dtype=np.int64).ravel())
        object.__setattr__(self, "succ", np.asarray(self.succ, dtype=np.int64).ravel())

    @classmethod
    def from_model(cls, model: BlockModel, econ: EconomicModel, precedence: PrecedenceGraph,
                   price_factor: float = 1.0) -> "ClosureProblem":
        values = block_values(model, econ.with_price_factor(price_factor)).best
        return cls(values, precedence.pred, precedence.succ)

    @property
    def n_nodes(self) -> int:
        return int(self.values.size)

    @property
    def cents(self) -> np.ndarray:
        return np.rint(self.values * 100.0).astype(np.int64)

    def arc_graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n_nodes))
        graph.add_edges_from(zip(self.pred.tolist(), self.succ.tolist()))
        return graph

    def check_acyclic(self) -> None:
        graph = self.arc_graph()
        if not nx.is_directed_acyclic_graph(graph):
            cycle = [u for u, _ in nx.find_cycle(graph)]
            raise CyclicPrecedenceException(cycle + cycle[:1])

    def subproblem(self, keep: np.ndarray) -> Tuple["ClosureProblem", np.ndarray]:
        """Problema restringido a `keep`; devuelve también los índices originales."""
        nodes = np.flatnonzero(keep)
        renumber = np.full(self.n_nodes, -1, dtype=np.int64)
        renumber[nodes] = np.arange(nodes.size)
        arcs = keep[self.pred] & keep[self.succ]
        return ClosureProblem(self.values[nodes], renumber[self.pred[arcs]], renumber[self.succ[arcs]]), nodes


class ClosureResult(NamedTuple):
    blocks: np.ndarray
    value: float


def is_closed(mask: np.ndarray, pred: np.ndarray, succ: np.ndarray) -> bool:
    """Ningún bloque incluido tiene un predecesor excluido."""
    mask = np.asarray(mask, dtype=bool).ravel()
    return not bool((mask[succ] & ~mask[pred]).any())


def _ancestors_of_positive(problem: ClosureProblem, cents: np.ndarray) -> np.ndarray:
    """Nodos positivos y todos sus predecesores transitivos; el resto nunca entra al cierre mínimo."""
    relevant = cents > 0
    order = np.argsort(problem.succ, kind="stable")
    succ_sorted, pred_sorted = problem.succ[order], problem.pred[order]
    starts = np.searchsorted(succ_sorted, np.arange(problem.n_nodes))
    ends = np.searchsorted(succ_sorted, np.arange(problem.n_nodes), side="right")
    queue = deque(np.flatnonzero(relevant).tolist())
    while queue:
        node = queue.popleft()
        for parent in pred_sorted[starts[node]:ends[node]].tolist():
            if not relevant[parent]:
                relevant[parent] = True
                queue.append(parent)
    return relevant


def max_closure(problem: ClosureProblem, check_cycles: bool = True) -> ClosureResult:
    """
    Cierre de valor máximo. Si no hay cierre positivo devuelve el conjunto vacío.
    Entre cierres óptimos devuelve el mínimo (corte más cercano a la fuente).
    """
    if check_cycles:
        problem.check_acyclic()
    empty = np.zeros(problem.n_nodes, dtype=bool)
    cents = problem.cents
    if not (cents > 0).any():
        return ClosureResult(empty, 0.0)

    relevant = _ancestors_of_positive(problem, cents)
    sub, nodes = problem.subproblem(relevant)
    sub_cents = cents[nodes]

    graph = nx.DiGraph()
    graph.add_nodes_from([SOURCE, SINK])
    graph.add_nodes_from(range(sub.n_nodes))
    for node, value in enumerate(sub_cents.tolist()):
        if value > 0:
            graph.add_edge(SOURCE, node, capacity=value)
        elif value < 0:
            graph.add_edge(node, SINK, capacity=-value)
    # sin atributo 'capacity' la capacidad es infinita
    graph.add_edges_from(zip(sub.succ.tolist(), sub.pred.tolist()))

    flow_value, flow = maximum_flow(graph, SOURCE, SINK)

    visited = {SOURCE}
    queue = deque([SOURCE])
    while queue:
        u = queue.popleft()
        for v, data in graph[u].items():
            capacity = data.get("capacity", float("inf"))
            if v not in visited and capacity - flow[u][v] > 0:
                visited.add(v)
                queue.append(v)
        for v in graph.predecessors(u):
            if v not in visited and flow[v][u] > 0:
                visited.add(v)
                queue.append(v)

    chosen = np.array(sorted(n for n in visited if n not in (SOURCE, SINK)), dtype=np.int64)
    blocks = empty.copy()
    if chosen.size:
        blocks[nodes[chosen]] = True
    value = float(problem.values[blocks].sum())
    logger.debug(
        "Cierre máximo: %d de %d nodos, valor %.2f (flujo %d centavos)",
        int(blocks.sum()), problem.n_nodes, value, flow_value,
    )
    return ClosureResult(blocks, value)


def brute_force_closure(problem: ClosureProblem) -> ClosureResult:
    """Enumeración exhaustiva de subconjuntos cerrados (hasta 20 nodos), en centavos enteros."""
    n = problem.n_nodes
    if n > BRUTE_FORCE_LIMIT:
        raise ClosureException(
            f"La enumeración admite hasta {BRUTE_FORCE_LIMIT} nodos, hay {n}", "BRUTE_FORCE_LIMIT"
        )
    masks = np.arange(1 << n, dtype=np.int64)
    closed = np.ones(masks.size, dtype=bool)
    for p, s in zip(problem.pred.tolist(), problem.succ.tolist()):
        closed &= ((masks >> s) & 1 == 0) | ((masks >> p) & 1 == 1)
    totals = np.zeros(masks.size, dtype=np.int64)
    sizes = np.zeros(masks.size, dtype=np.int64)
    for node, cents in enumerate(problem.cents.tolist()):
        bit = (masks >> node) & 1
        totals += bit * cents
        sizes += bit
    totals = np.where(closed, totals, np.iinfo(np.int64).min)
    best = totals.max()
    candidates = np.flatnonzero(totals == best)
    winner = int(candidates[np.argmin(sizes[candidates])])
    blocks = ((winner >> np.arange(n)) & 1).astype(bool)
    return ClosureResult(blocks, float(problem.values[blocks].sum()))


# ---------------------------------------------------------------------------
# Shells anidados
# ---------------------------------------------------------------------------

def default_revenue_factors(count: int = DEFAULT_REVENUE_FACTOR_COUNT,
                            bounds: Tuple[float, float] = DEFAULT_REVENUE_FACTOR_RANGE) -> Tuple[float, ...]:
    return tuple(float(f) for f in np.linspace(bounds[0], bounds[1], count))


def validate_revenue_factors(factors: Sequence[float]) -> Tuple[float, ...]:
    values = tuple(float(f) for f in factors)
    if not values or any(not np.isfinite(f) or f <= 0 for f in values):
        raise InvalidRevenueFactorsException(values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidRevenueFactorsException(values)
    return values


@dataclass(frozen=True, eq=False)
class ShellAssignment:
    """shell_index por bloque (orden plano): 0 fuera de todo shell, s en 1..n_shells."""

    shell_index: np.ndarray
    revenue_factors: Tuple[float, ...]

    def __post_init__(self) -> None:
        index = np.asarray(self.shell_index, dtype=np.int64).ravel().copy()
        index.setflags(write=False)
        object.__setattr__(self, "shell_index", index)
        object.__setattr__(self, "revenue_factors", validate_revenue_factors(self.revenue_factors))

    @property
    def n_shells(self) -> int:
        return len(self.revenue_factors)

    @property
    def pit(self) -> np.ndarray:
        return self.shell_index > 0

    def up_to(self, shell: int) -> np.ndarray:
        """Bloques con shell_index en 1..shell."""
        return (self.shell_index > 0) & (self.shell_index <= shell)

    def nonempty_shells(self) -> List[int]:
        return sorted(int(s) for s in np.unique(self.shell_index) if s > 0)

    def tonnage_by_shell(self, model: BlockModel) -> np.ndarray:
        """Tonelaje de cada shell 1..n_shells (índice 0 = shell 1)."""
        return np.bincount(self.shell_index, weights=model.tonnage.ravel(), minlength=self.n_shells + 1)[1:]


def nested_shells(model: BlockModel, econ: EconomicModel, precedence: PrecedenceGraph,
                  revenue_factors: Optional[Sequence[float]] = None) -> ShellAssignment:
    """
    Un cierre por factor de ingreso, cada uno resuelto con el anterior forzado
    dentro, de modo que los shells quedan anidados por construcción.
    """
    factors = validate_revenue_factors(revenue_factors or default_revenue_factors())
    base = ClosureProblem.from_model(model, econ, precedence)
    base.check_acyclic()

    shell_index = np.zeros(model.n_blocks, dtype=np.int64)
    inside = np.zeros(model.n_blocks, dtype=bool)
    for s, factor in enumerate(factors, start=1):
        problem = ClosureProblem.from_model(model, econ, precedence, factor)
        sub, nodes = problem.subproblem(~inside)
        result = max_closure(sub, check_cycles=False)
        added = nodes[result.blocks]
        shell_index[added] = s
        inside[added] = True
        logger.info("Shell %d (factor %.3f): %d bloques nuevos, pit acumulado %d", s, factor, added.size, int(inside.sum()))

    if not inside.any():
        logger.warning("Ningún factor de ingreso produce un pit positivo: el pit final está vacío")
    return ShellAssignment(shell_index, factors)


def ultimate_pit(model: BlockModel, econ: EconomicModel, precedence: PrecedenceGraph) -> ClosureResult:
    return max_closure(ClosureProblem.from_model(model, econ, precedence))


def near_cutoff_tonnage(model: BlockModel, pit: np.ndarray, econ: EconomicModel,
                        band: float = NEAR_CUTOFF_BAND) -> float:
    """Toneladas de mineral del pit con |ley - corte| <= band."""
    grade = model.grade.ravel()
    ore = ore_mask(grade, recovery_array(model.domain, econ, model.dims), econ)
    near = np.abs(grade - econ.cutoff_grade) <= band
    return float(model.tonnage.ravel()[np.asarray(pit, dtype=bool).ravel() & ore & near].sum())


# ---------------------------------------------------------------------------
# Persistencia
# ---------------------------------------------------------------------------

def save_shells(shells: ShellAssignment, model: BlockModel, path: PathLike) -> None:
    table = block_table(model)[["i", "j", "k"]].copy()
    table["shell"] = shells.shell_index
    factors = ",".join(repr(f) for f in shells.revenue_factors)
    write_table(path, table, f"revenue_factors={factors}")


def load_shells(path: PathLike, model: BlockModel) -> ShellAssignment:
    table, header_line, comments = read_table(path, ("i", "j", "k", "shell"))
    factors: Optional[Tuple[float, ...]] = None
    for comment in comments:
        if comment.startswith("revenue_factors="):
            try:
                factors = tuple(float(v) for v in comment.split("=", 1)[1].split(","))
            except ValueError as ex:
                raise FileFormatException(path, f"factores ilegibles: {ex}", 1) from ex
    i = numeric_column(path, table, "i", header_line, integer=True)
    j = numeric_column(path, table, "j", header_line, integer=True)
    k = numeric_column(path, table, "k", header_line, integer=True)
    shell = numeric_column(path, table, "shell", header_line, integer=True)
    inside = (i >= 0) & (j >= 0) & (k >= 0) & (i < model.dims[0]) & (j < model.dims[1]) & (k < model.dims[2])
    row_error(path, header_line, ~inside, "índice fuera del modelo")
    row_error(path, header_line, shell < 0, "shell negativo")

    index = np.zeros(model.n_blocks, dtype=np.int64)
    flat = np.ravel_multi_index((i, j, k), model.dims)
    seen = np.zeros(model.n_blocks, dtype=bool)
    for row, f in enumerate(flat.tolist()):
        if seen[f]:
            raise FileFormatException(path, "índice de bloque duplicado", header_line + 1 + row)
        seen[f] = True
    index[flat] = shell
    if factors is None:
        top = int(index.max()) if index.size else 0
        factors = tuple(float(s) for s in range(1, max(top, 1) + 1))
    return ShellAssignment(index, factors)


__all__ = [
    "ClosureProblem",
    "ClosureResult",
    "ShellAssignment",
    "max_closure",
    "brute_force_closure",
    "is_closed",
    "nested_shells",
    "ultimate_pit",
    "default_revenue_factors",
    "validate_revenue_factors",
    "near_cutoff_tonnage",
    "save_shells",
    "load_shells",
]
