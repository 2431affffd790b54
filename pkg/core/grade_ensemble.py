"""
Ensamble de modelos de bloques interpolados, modelo agregado y campo de incertidumbre.

Cada miembro m usa la semilla base_seed + m. Con IDW los miembros varían la
potencia y el submuestreo de sondajes; con la red solo varía la inicialización.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from core.block_io import (
    FLOAT_FORMAT,
    numeric_column,
    read_table,
    block_table,
    load_block_model,
    read_key_values,
    save_block_model,
    write_key_values,
)
from core.block_model import BlockModel, DrillSample
from core.exceptions import FileFormatException, GeometryMismatchException, InvalidGeometryException
from core.interpolation import (
    IdwInterpolator,
    InterpolationMethod,
    InterpolatorConfig,
    train_network,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class Ensemble:
    """N miembros con la misma geometría; las semillas quedan registradas."""

    members: Tuple[BlockModel, ...]
    member_seeds: Tuple[int, ...]

    def __post_init__(self) -> None:
        members = tuple(self.members)
        seeds = tuple(int(s) for s in self.member_seeds)
        if not members:
            raise InvalidGeometryException("el ensamble necesita al menos un miembro")
        if len(seeds) != len(members):
            raise InvalidGeometryException(f"{len(members)} miembros pero {len(seeds)} semillas")
        for member in members[1:]:
            members[0].require_same_geometry(member)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "member_seeds", seeds)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def grades(self) -> np.ndarray:
        """(N, n_blocks) en orden plano."""
        return np.stack([m.grade.ravel() for m in self.members])

    @property
    def domains(self) -> np.ndarray:
        return np.stack([m.domain.ravel() for m in self.members])


@dataclass(frozen=True)
class UncertaintyField:
    """Desvío estándar poblacional de ley y fracción de miembros que discrepan del dominio agregado."""

    grade_std: np.ndarray
    domain_disagreement: np.ndarray

    def __post_init__(self) -> None:
        std = np.asarray(self.grade_std, dtype=np.float64).ravel()
        disagreement = np.asarray(self.domain_disagreement, dtype=np.float64).ravel()
        if std.shape != disagreement.shape:
            raise InvalidGeometryException("grade_std y domain_disagreement difieren en tamaño")
        if (std < 0).any() or (disagreement < 0).any() or (disagreement > 1).any():
            raise InvalidGeometryException("campo de incertidumbre fuera de rango")
        object.__setattr__(self, "grade_std", std)
        object.__setattr__(self, "domain_disagreement", disagreement)

    def uncertain(self, threshold: float) -> np.ndarray:
        return self.grade_std > threshold


# ---------------------------------------------------------------------------
# Construcción
# ---------------------------------------------------------------------------

def member_samples(samples: Sequence[DrillSample], fraction: float,
                   rng: np.random.Generator) -> List[DrillSample]:
    """Submuestra sin reemplazo de round(fraction * n) sondajes, en orden original."""
    n = len(samples)
    take = max(1, int(round(fraction * n)))
    if take >= n:
        return list(samples)
    chosen = np.sort(rng.choice(n, size=take, replace=False))
    return [samples[i] for i in chosen]


def build_member(samples: Sequence[DrillSample], config: InterpolatorConfig, seed: int,
                 geometry: BlockModel) -> BlockModel:
    centroids = geometry.centroids()
    if config.method is InterpolationMethod.NETWORK:
        interpolator = train_network(samples, config, seed)
    else:
        rng = np.random.default_rng(seed)
        power = config.idw_power
        if config.power_jitter > 0:
            power *= 1.0 + rng.uniform(-config.power_jitter, config.power_jitter)
        subset = member_samples(samples, config.bootstrap_fraction, rng)
        interpolator = IdwInterpolator(subset, power, config.idw_max_neighbors)
    grade, domain = interpolator.predict(centroids)
    return geometry.with_values(grade, domain)


def build_ensemble(samples: Sequence[DrillSample], config: InterpolatorConfig, n_members: int,
                   base_seed: int, model_geometry: BlockModel) -> Ensemble:
    """Interpola N miembros en cada centroide de `model_geometry`."""
    if n_members < 1:
        raise InvalidGeometryException(f"n_members={n_members} debe ser >= 1")
    seeds = [base_seed + m for m in range(n_members)]
    members = []
    for m, seed in enumerate(seeds):
        members.append(build_member(samples, config, seed, model_geometry))
        logger.info("Miembro %d/%d listo (seed=%d, %s)", m + 1, n_members, seed, config.method.value)
    return Ensemble(tuple(members), tuple(seeds))


def plurality_domain(domains: np.ndarray) -> np.ndarray:
    """Moda por columna de (N, n_blocks); los empates van al dominio más bajo."""
    classes, inverse = np.unique(domains, return_inverse=True)
    inverse = inverse.reshape(domains.shape)
    counts = np.zeros((len(classes), domains.shape[1]), dtype=np.int64)
    for row in inverse:
        counts[row, np.arange(domains.shape[1])] += 1
    return classes[np.argmax(counts, axis=0)]


def aggregate(ensemble: Ensemble) -> BlockModel:
    """
    Dominio por mayoría entre miembros y ley media de los miembros que coinciden
    con ese dominio.
    """
    grades = ensemble.grades
    domains = ensemble.domains
    selected = plurality_domain(domains)
    agree = domains == selected[None, :]
    mean = (grades * agree).sum(axis=0) / agree.sum(axis=0)
    # si los miembros que coinciden tienen la misma ley, se copia tal cual
    high = np.where(agree, grades, -np.inf).max(axis=0)
    low = np.where(agree, grades, np.inf).min(axis=0)
    grade = np.where(high == low, high, np.clip(mean, low, high))
    return ensemble.members[0].with_values(grade, selected)


def uncertainty_field(ensemble: Ensemble, aggregate_model: BlockModel) -> UncertaintyField:
    ensemble.members[0].require_same_geometry(aggregate_model)
    grade_std = ensemble.grades.std(axis=0, ddof=0)
    disagreement = (ensemble.domains != aggregate_model.domain.ravel()[None, :]).mean(axis=0)
    return UncertaintyField(grade_std, disagreement)


# ---------------------------------------------------------------------------
# Persistencia
# ---------------------------------------------------------------------------

def member_file(index: int) -> str:
    return f"member_{index:02d}.csv"


def save_ensemble(ensemble: Ensemble, directory: PathLike, config: InterpolatorConfig,
                  aggregate_model: BlockModel) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for m, member in enumerate(ensemble.members):
        save_block_model(member, out / member_file(m))
    save_block_model(aggregate_model, out / "aggregate.csv")
    meta: List[Tuple[str, object]] = [
        ("members", len(ensemble)),
        ("seeds", ",".join(str(s) for s in ensemble.member_seeds)),
        ("method", config.method.value),
        ("idw_power", float(config.idw_power)),
        ("idw_max_neighbors", int(config.idw_max_neighbors)),
        ("bootstrap_fraction", float(config.bootstrap_fraction)),
        ("power_jitter", float(config.power_jitter)),
        ("net_hidden_layers", ",".join(str(w) for w in config.net_hidden_layers)),
        ("net_fit_tolerance", float(config.net_fit_tolerance)),
        ("net_max_epochs", int(config.net_max_epochs)),
        ("learning_rate", float(config.learning_rate)),
    ]
    write_key_values(out / "ensemble.meta", meta)


def load_ensemble(directory: PathLike) -> Tuple[Ensemble, BlockModel, Dict[str, str]]:
    """Lee (ensamble, agregado, metadatos) de un directorio escrito por save_ensemble."""
    base = Path(directory)
    meta_path = base / "ensemble.meta"
    meta = {key: value for key, (value, _) in read_key_values(meta_path).items()}
    try:
        n_members = int(meta["members"])
        seeds = tuple(int(s) for s in meta["seeds"].split(","))
    except (KeyError, ValueError) as ex:
        raise FileFormatException(meta_path, f"metadatos incompletos: {ex}") from ex

    members = tuple(load_block_model(base / member_file(m)) for m in range(n_members))
    aggregate_model = load_block_model(base / "aggregate.csv")
    try:
        ensemble = Ensemble(members, seeds)
    except GeometryMismatchException as ex:
        raise FileFormatException(base, str(ex)) from ex
    members[0].require_same_geometry(aggregate_model)
    return ensemble, aggregate_model, meta


def save_uncertainty(field: UncertaintyField, model: BlockModel, path: PathLike) -> None:
    table = block_table(model)[["i", "j", "k"]].copy()
    table["grade_std"] = field.grade_std
    table["domain_disagreement"] = field.domain_disagreement
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def load_uncertainty(path: PathLike, model: BlockModel) -> UncertaintyField:
    table, header_line, _ = read_table(path, ("i", "j", "k", "grade_std", "domain_disagreement"))
    i = numeric_column(path, table, "i", header_line, integer=True)
    j = numeric_column(path, table, "j", header_line, integer=True)
    k = numeric_column(path, table, "k", header_line, integer=True)
    std = numeric_column(path, table, "grade_std", header_line)
    disagreement = numeric_column(path, table, "domain_disagreement", header_line)

    inside = (i >= 0) & (j >= 0) & (k >= 0) & (i < model.dims[0]) & (j < model.dims[1]) & (k < model.dims[2])
    if not inside.all():
        row = int(np.flatnonzero(~inside)[0])
        raise FileFormatException(path, "índice fuera del modelo", header_line + 1 + row)
    flat = np.ravel_multi_index((i, j, k), model.dims)
    if len(np.unique(flat)) != model.n_blocks or len(flat) != model.n_blocks:
        raise FileFormatException(path, f"se esperaban {model.n_blocks} bloques distintos")

    grade_std = np.empty(model.n_blocks)
    grade_std[flat] = std
    dis = np.empty(model.n_blocks)
    dis[flat] = disagreement
    return UncertaintyField(grade_std, dis)


def uncertainty_summary(field: UncertaintyField, threshold: float) -> Dict[str, float]:
    return {
        "uncertain_blocks": int(field.uncertain(threshold).sum()),
        "max_grade_std": float(field.grade_std.max()),
        "mean_domain_disagreement": float(field.domain_disagreement.mean()),
    }


__all__ = [
    "Ensemble",
    "UncertaintyField",
    "build_ensemble",
    "build_member",
    "member_samples",
    "plurality_domain",
    "aggregate",
    "uncertainty_field",
    "save_ensemble",
    "load_ensemble",
    "save_uncertainty",
    "load_uncertainty",
    "uncertainty_summary",
    "member_file",
]
