"""
Partición del pit en etapas y unidades etapa/banco con sus precedencias.

Estrategias:
  - lazy: agrupa shells consecutivos balanceando tonelaje.
  - worst_case: aísla el mineral incierto en las dos últimas etapas.
  - levelled: agrupa shells consecutivos balanceando la masa de incertidumbre.
  - file: etapas provistas por el usuario (diseño manual).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from core.block_io import block_table, numeric_column, read_table, row_error, write_table
from core.block_model import BlockModel, EconomicModel, PrecedenceGraph, block_values, derive_precedence
from core.constants import DEFAULT_STAGES, WORST_CASE_STD_THRESHOLD
from core.exceptions import (
    CyclicPrecedenceException,
    FileFormatException,
    InvalidStagingException,
    NotEnoughShellsException,
)
from core.grade_ensemble import UncertaintyField
from core.pit_optimization import ShellAssignment

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
EXHAUSTIVE_LIMIT = 50_000


@dataclass(frozen=True, eq=False)
class Staging:
    """
    stage_of por bloque (orden plano): 0 fuera del pit, 1..k dentro.
    `fallback` marca que la estrategia pedida no aplicaba y se usó lazy.
    """

    stage_of: np.ndarray
    k: int
    strategy: str = "lazy"
    fallback: bool = False

    def __post_init__(self) -> None:
        stage_of = np.asarray(self.stage_of, dtype=np.int64).ravel().copy()
        stage_of.setflags(write=False)
        object.__setattr__(self, "stage_of", stage_of)
        if self.k < 1:
            raise InvalidStagingException(f"k={self.k} debe ser >= 1")
        if (stage_of < 0).any() or (stage_of > self.k).any():
            raise InvalidStagingException(f"índices de etapa fuera de 0..{self.k}")
        counts = np.bincount(stage_of, minlength=self.k + 1)
        empty = [s for s in range(1, self.k + 1) if counts[s] == 0]
        if empty:
            raise InvalidStagingException(f"etapas vacías {empty}")

    @property
    def pit(self) -> np.ndarray:
        return self.stage_of > 0

    def tonnage_by_stage(self, model: BlockModel) -> np.ndarray:
        return np.bincount(self.stage_of, weights=model.tonnage.ravel(), minlength=self.k + 1)[1:]

    def check_covers(self, pit: np.ndarray, model: Optional[BlockModel] = None) -> None:
        """Las etapas cubren exactamente el pit."""
        pit = np.asarray(pit, dtype=bool).ravel()
        wrong = np.flatnonzero(pit != self.pit)
        if wrong.size:
            flat = int(wrong[0])
            index = model.unravel(flat) if model is not None else (flat,)
            reason = "bloque del pit sin etapa" if pit[flat] else "bloque fuera del pit con etapa"
            raise InvalidStagingException(reason, index)


def _greedy_groups(weights: Sequence[float], k: int) -> List[int]:
    """
    Grupo (0..k-1) de cada ítem: se acumula hasta alcanzar total/k y se abre el
    siguiente grupo. Siempre deja al menos un ítem por grupo restante.
    """
    n = len(weights)
    target = float(np.sum(weights)) / k
    groups: List[int] = []
    group, acc = 0, 0.0
    for position, weight in enumerate(weights):
        groups.append(group)
        acc += float(weight)
        items_left = n - position - 1
        groups_left = k - group - 1
        if groups_left > 0 and (acc >= target or items_left == groups_left):
            group += 1
            acc = 0.0
    return groups


def _nonempty_shell_order(shells: ShellAssignment) -> List[int]:
    return shells.nonempty_shells()


def _stage_from_shell_groups(shells: ShellAssignment, order: Sequence[int], groups: Sequence[int]) -> np.ndarray:
    lookup = np.zeros(shells.n_shells + 1, dtype=np.int64)
    for shell, group in zip(order, groups):
        lookup[shell] = group + 1
    return lookup[shells.shell_index]


def lazy_staging(shells: ShellAssignment, model: BlockModel, k: int = DEFAULT_STAGES) -> Staging:
    """Agrupa shells consecutivos en k etapas balanceando tonelaje."""
    order = _nonempty_shell_order(shells)
    if k < 1 or len(order) < k:
        raise NotEnoughShellsException(len(order), k)
    tonnage = shells.tonnage_by_shell(model)
    groups = _greedy_groups([tonnage[s - 1] for s in order], k)
    staging = Staging(_stage_from_shell_groups(shells, order, groups), k, "lazy")
    logger.info("Lazy staging: %d shells en %d etapas, tonelaje %s", len(order), k,
                np.round(staging.tonnage_by_stage(model)).tolist())
    return staging


def uncertain_ore(model: BlockModel, econ: EconomicModel, uncertainty: UncertaintyField,
                  threshold: float = WORST_CASE_STD_THRESHOLD) -> np.ndarray:
    """Mineral del modelo agregado cuyo desvío de ley supera el umbral."""
    return block_values(model, econ).ore & (uncertainty.grade_std > threshold)


def _uncertainty_mass(model: BlockModel, econ: EconomicModel, uncertainty: UncertaintyField) -> np.ndarray:
    ore = block_values(model, econ).ore
    return np.where(ore, model.tonnage.ravel() * uncertainty.grade_std, 0.0)


def _block_sequence(model: BlockModel, shells: ShellAssignment, mask: np.ndarray) -> np.ndarray:
    """Bloques de `mask` ordenados por (shell, banco, i, j)."""
    flat = np.flatnonzero(mask)
    ii, jj, kk = np.unravel_index(flat, model.dims)
    order = np.lexsort((jj, ii, kk, shells.shell_index[flat]))
    return flat[order]


def _split_blocks(model: BlockModel, blocks: np.ndarray, parts: int) -> List[np.ndarray]:
    weights = model.tonnage.ravel()[blocks]
    groups = np.asarray(_greedy_groups(weights.tolist(), parts))
    return [blocks[groups == g] for g in range(parts)]


def worst_case_staging(shells: ShellAssignment, uncertainty: UncertaintyField, econ: EconomicModel,
                       model: BlockModel, k: int = DEFAULT_STAGES,
                       std_threshold: float = WORST_CASE_STD_THRESHOLD) -> Staging:
    """
    Las dos últimas etapas reciben todo el mineral con desvío de ley mayor al umbral;
    el resto del pit se reparte en las primeras k - 2 etapas como lazy.
    Sin mineral incierto se vuelve a lazy con `fallback=True`.
    """
    if k < 3:
        raise InvalidStagingException(f"worst_case requiere k >= 3, llegó k={k}")
    pit = shells.pit
    isolated = pit & uncertain_ore(model, econ, uncertainty, std_threshold)
    if not isolated.any():
        logger.warning("Worst case: no hay mineral con desvío > %.4g en el pit; se usa lazy", std_threshold)
        base = lazy_staging(shells, model, k)
        return Staging(base.stage_of, k, "worst_case", fallback=True)

    rest = pit & ~isolated
    rest_index = np.where(rest, shells.shell_index, 0)
    rest_shells = sorted(int(s) for s in np.unique(rest_index) if s > 0)
    stage_of = np.zeros(model.n_blocks, dtype=np.int64)

    head = 0
    if rest.any():
        if len(rest_shells) >= k - 2:
            tonnage = np.bincount(rest_index, weights=model.tonnage.ravel(), minlength=shells.n_shells + 1)
            groups = _greedy_groups([tonnage[s] for s in rest_shells], k - 2)
            lookup = np.zeros(shells.n_shells + 1, dtype=np.int64)
            for shell, group in zip(rest_shells, groups):
                lookup[shell] = group + 1
            stage_of[rest] = lookup[rest_index[rest]]
            head = k - 2
        else:
            blocks = _block_sequence(model, shells, rest)
            head = min(k - 2, blocks.size)
            for s, part in enumerate(_split_blocks(model, blocks, head), start=1):
                stage_of[part] = s

    tail_blocks = _block_sequence(model, shells, isolated)
    tail = min(2, tail_blocks.size)
    for s, part in enumerate(_split_blocks(model, tail_blocks, tail), start=head + 1):
        stage_of[part] = s

    total = head + tail
    if total < k:
        logger.warning("Worst case: solo se pudieron formar %d de %d etapas", total, k)
    logger.info("Worst case: %d bloques inciertos aislados en las etapas %d..%d",
                int(isolated.sum()), head + 1, total)
    return Staging(stage_of, total, "worst_case")


def _range(values: np.ndarray) -> float:
    return float(values.max() - values.min())


def _best_contiguous_split(masses: np.ndarray, tonnage: np.ndarray, k: int) -> List[int]:
    """Cortes que minimizan el rango de masa (desempate: rango de tonelaje, cortes)."""
    n = masses.size
    mass_prefix = np.concatenate(([0.0], np.cumsum(masses)))
    ton_prefix = np.concatenate(([0.0], np.cumsum(tonnage)))
    best_key: Optional[Tuple[float, float, Tuple[int, ...]]] = None
    for cuts in combinations(range(1, n), k - 1):
        edges = np.array((0, *cuts, n))
        key = (
            _range(np.diff(mass_prefix[edges])),
            _range(np.diff(ton_prefix[edges])),
            cuts,
        )
        if best_key is None or key < best_key:
            best_key = key
    assert best_key is not None
    groups = np.zeros(n, dtype=np.int64)
    for cut in best_key[2]:
        groups[cut:] += 1
    return groups.tolist()


def levelled_staging(shells: ShellAssignment, uncertainty: UncertaintyField, econ: EconomicModel,
                     model: BlockModel, k: int = DEFAULT_STAGES) -> Staging:
    """
    Cortes sobre el orden de shells que igualan la masa de incertidumbre
    (tonelaje x desvío de ley del mineral) entre etapas. Con hasta
    EXHAUSTIVE_LIMIT combinaciones se prueban todos los cortes; si no, se
    acumula masa hasta total/k como lazy. Con menos shells que k se forma
    una etapa por shell.
    """
    order = _nonempty_shell_order(shells)
    if k < 1 or not order:
        raise NotEnoughShellsException(len(order), k)
    if len(order) < k:
        logger.warning("Levelled: solo hay %d shells no vacíos para %d etapas; se forman %d",
                       len(order), k, len(order))
        k = len(order)
    mass_by_block = _uncertainty_mass(model, econ, uncertainty)
    masses = np.bincount(shells.shell_index, weights=mass_by_block, minlength=shells.n_shells + 1)[order]
    if masses.sum() <= 0:
        logger.info("Levelled: incertidumbre nula, equivale a lazy")
        base = lazy_staging(shells, model, k)
        return Staging(base.stage_of, k, "levelled")

    tonnage = shells.tonnage_by_shell(model)[np.asarray(order) - 1]
    if comb(len(order) - 1, k - 1) <= EXHAUSTIVE_LIMIT:
        groups = _best_contiguous_split(masses, tonnage, k)
    else:
        groups = _greedy_groups(masses.tolist(), k)
    staging = Staging(_stage_from_shell_groups(shells, order, groups), k, "levelled")
    per_stage = np.bincount(staging.stage_of, weights=mass_by_block, minlength=k + 1)[1:]
    logger.info("Levelled: masa de incertidumbre por etapa %s", np.round(per_stage, 2).tolist())
    return staging


def stage_uncertainty_mass(staging: Staging, model: BlockModel, econ: EconomicModel,
                           uncertainty: UncertaintyField) -> np.ndarray:
    mass = _uncertainty_mass(model, econ, uncertainty)
    return np.bincount(staging.stage_of, weights=mass, minlength=staging.k + 1)[1:]


# ---------------------------------------------------------------------------
# Archivos de etapas
# ---------------------------------------------------------------------------

def save_staging(staging: Staging, model: BlockModel, path: PathLike) -> None:
    table = block_table(model)[["i", "j", "k"]].copy()
    table["stage"] = staging.stage_of
    write_table(path, table[table["stage"] > 0])


def load_staging(path: PathLike, model: BlockModel, pit: Optional[np.ndarray] = None) -> Staging:
    """
    Lee `i,j,k,stage`. Los ids de etapa se renumeran a 1..k conservando el orden.
    Si se da `pit`, el archivo debe cubrir cada bloque del pit exactamente una vez.
    """
    table, header_line, _ = read_table(path, ("i", "j", "k", "stage"))
    if table.empty:
        raise FileFormatException(path, "el archivo no asigna ningún bloque", header_line)
    i = numeric_column(path, table, "i", header_line, integer=True)
    j = numeric_column(path, table, "j", header_line, integer=True)
    k = numeric_column(path, table, "k", header_line, integer=True)
    stage = numeric_column(path, table, "stage", header_line, integer=True)
    inside = (i >= 0) & (j >= 0) & (k >= 0) & (i < model.dims[0]) & (j < model.dims[1]) & (k < model.dims[2])
    row_error(path, header_line, ~inside, "índice fuera del modelo")
    row_error(path, header_line, stage <= 0, "la etapa debe ser un entero positivo")

    flat = np.ravel_multi_index((i, j, k), model.dims)
    seen = np.zeros(model.n_blocks, dtype=bool)
    for row, f in enumerate(flat.tolist()):
        if seen[f]:
            raise FileFormatException(path, f"bloque {tuple(model.unravel(f))} repetido", header_line + 1 + row)
        seen[f] = True

    ids, normalized = np.unique(stage, return_inverse=True)
    stage_of = np.zeros(model.n_blocks, dtype=np.int64)
    stage_of[flat] = normalized + 1
    if not np.array_equal(ids, np.arange(1, ids.size + 1)):
        logger.info("Etapas %s renumeradas a 1..%d", ids.tolist(), ids.size)
    staging = Staging(stage_of, int(ids.size), "file")
    if pit is not None:
        try:
            staging.check_covers(pit, model)
        except InvalidStagingException as ex:
            raise FileFormatException(path, str(ex)) from ex
    return staging


# ---------------------------------------------------------------------------
# Unidades etapa/banco
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StageBenchUnit:
    """Bloques que comparten etapa y banco; se minan como un único bloque grande."""

    unit_id: int
    stage: int
    bench: int
    blocks: np.ndarray
    tonnage: float
    ore_tonnage: float = 0.0
    process_value: float = 0.0
    waste_value: float = 0.0

    @property
    def label(self) -> str:
        return f"S{self.stage}B{self.bench}"


@dataclass(frozen=True)
class UnitPrecedence:
    """Arcos (u, v) entre unidades: u debe empezar y terminar no después que v."""

    n_units: int
    arcs: Tuple[Tuple[int, int], ...]
    _preds: Dict[int, Tuple[int, ...]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        arcs = tuple(sorted(set((int(u), int(v)) for u, v in self.arcs)))
        object.__setattr__(self, "arcs", arcs)
        preds: Dict[int, List[int]] = {u: [] for u in range(self.n_units)}
        for u, v in arcs:
            preds[v].append(u)
        object.__setattr__(self, "_preds", {u: tuple(p) for u, p in preds.items()})

    def predecessors(self, unit: int) -> Tuple[int, ...]:
        return self._preds.get(unit, ())

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n_units))
        graph.add_edges_from(self.arcs)
        return graph

    def is_topological(self, order: Sequence[int]) -> bool:
        if sorted(order) != list(range(self.n_units)):
            return False
        position = {u: p for p, u in enumerate(order)}
        return all(position[u] < position[v] for u, v in self.arcs)


def build_units(model: BlockModel, staging: Staging, precedence: Optional[PrecedenceGraph] = None,
                econ: Optional[EconomicModel] = None,
                stage_order: bool = False) -> Tuple[List[StageBenchUnit], UnitPrecedence]:
    """
    Una unidad por (etapa, banco) no vacío, ordenadas por (etapa, banco).

    Arcos: precedencias de bloque elevadas a unidades y la cadena de bancos de
    cada etapa. Con `stage_order` se agrega el primer banco de cada etapa antes
    del primer banco de la siguiente, salvo que eso cierre un ciclo.
    """
    if staging.stage_of.size != model.n_blocks:
        raise InvalidStagingException(f"staging de {staging.stage_of.size} bloques para un modelo de {model.n_blocks}")
    precedence = precedence if precedence is not None else derive_precedence(model)
    levels = model.levels()
    stage_of = staging.stage_of
    tonnage = model.tonnage.ravel()
    values = block_values(model, econ) if econ is not None else None

    in_pit = np.flatnonzero(stage_of > 0)
    keys = stage_of[in_pit] * (levels.max() + 1) + levels[in_pit]
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    unit_of = np.full(model.n_blocks, -1, dtype=np.int64)
    unit_of[in_pit] = inverse

    units: List[StageBenchUnit] = []
    for unit_id, key in enumerate(unique_keys.tolist()):
        stage, bench = divmod(key, int(levels.max()) + 1)
        blocks = in_pit[inverse == unit_id]
        extra = {}
        if values is not None:
            ore = values.ore[blocks]
            extra = dict(
                ore_tonnage=float(tonnage[blocks][ore].sum()),
                process_value=float(values.process[blocks].sum()),
                waste_value=float(values.waste[blocks].sum()),
            )
        units.append(StageBenchUnit(unit_id, int(stage), int(bench), blocks, float(tonnage[blocks].sum()), **extra))

    arcs = set()
    pred_unit, succ_unit = unit_of[precedence.pred], unit_of[precedence.succ]
    lifted = (pred_unit >= 0) & (succ_unit >= 0) & (pred_unit != succ_unit)
    arcs.update(zip(pred_unit[lifted].tolist(), succ_unit[lifted].tolist()))
    for before, after in zip(units, units[1:]):
        if before.stage == after.stage:
            arcs.add((before.unit_id, after.unit_id))

    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(units)))
    graph.add_edges_from(arcs)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = [units[u].label for u, _ in nx.find_cycle(graph)]
        raise CyclicPrecedenceException(cycle + cycle[:1])

    if stage_order:
        first_of: Dict[int, int] = {}
        for unit in units:
            first_of.setdefault(unit.stage, unit.unit_id)
        stages = sorted(first_of)
        for s, t in zip(stages, stages[1:]):
            u, v = first_of[s], first_of[t]
            if nx.has_path(graph, v, u):
                logger.debug("Arco de secuencia %s -> %s omitido: cerraría un ciclo", units[u].label, units[v].label)
                continue
            graph.add_edge(u, v)
            arcs.add((u, v))

    logger.info("%d unidades etapa/banco, %d arcos", len(units), len(arcs))
    return units, UnitPrecedence(len(units), tuple(arcs))


__all__ = [
    "Staging",
    "StageBenchUnit",
    "UnitPrecedence",
    "lazy_staging",
    "worst_case_staging",
    "levelled_staging",
    "uncertain_ore",
    "stage_uncertainty_mass",
    "load_staging",
    "save_staging",
    "build_units",
]
