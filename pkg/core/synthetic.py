"""
Yacimiento sintético determinista y sondajes verticales que lo muestrean.

Reemplaza al yacimiento real: uno o dos cuerpos elipsoidales de alta ley
sobre un fondo bajo con ruido suave, dominios por profundidad y cuadrante.
"""

from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np

from core.block_model import BlockModel, DrillSample
from core.constants import DEFAULT_BLOCK_SIZE, DEFAULT_ELEMENT, DEFAULT_ORIGIN, ROCK_DENSITY
from core.exceptions import InvalidGeometryException

logger = logging.getLogger(__name__)

BACKGROUND_GRADE = 0.0008
NOISE_AMPLITUDE = 0.0006
BODY_PEAK_RANGE = (0.008, 0.015)
OXIDE_CAP_DEPTH = 0.2


def _normalized_axes(dims: Tuple[int, int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordenadas de centroide normalizadas a (0, 1) por eje, forma `dims`."""
    ii, jj, kk = np.indices(dims, dtype=np.float64)
    nx_, ny_, nz_ = dims
    return (ii + 0.5) / nx_, (jj + 0.5) / ny_, (kk + 0.5) / nz_


def _grade_field(rng: np.random.Generator, dims: Tuple[int, int, int]) -> np.ndarray:
    u, v, w = _normalized_axes(dims)
    grade = np.full(dims, BACKGROUND_GRADE)

    n_bodies = 1 + int(rng.integers(0, 2))
    for _ in range(n_bodies):
        center = np.array([rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.35, 0.75)])
        radii = rng.uniform(0.15, 0.3, size=3)
        peak = rng.uniform(*BODY_PEAK_RANGE)
        d2 = ((u - center[0]) / radii[0]) ** 2 + ((v - center[1]) / radii[1]) ** 2 + ((w - center[2]) / radii[2]) ** 2
        grade += peak * np.exp(-d2)

    # ruido suave: suma de ondas de baja frecuencia
    for _ in range(3):
        freq = rng.integers(1, 4, size=3)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        grade += NOISE_AMPLITUDE / 3.0 * np.cos(2.0 * np.pi * (freq[0] * u + freq[1] * v + freq[2] * w) + phase)

    return np.clip(grade, 0.0, 1.0)


def _domain_field(dims: Tuple[int, int, int], n_domains: int) -> np.ndarray:
    if n_domains == 1:
        return np.zeros(dims, dtype=np.int64)
    u, v, w = _normalized_axes(dims)
    quadrant = (u >= 0.5).astype(np.int64) + 2 * (v >= 0.5).astype(np.int64)
    deep = 1 + quadrant % (n_domains - 1)
    return np.where(w < OXIDE_CAP_DEPTH, 0, deep).astype(np.int64)


def _drill(rng: np.random.Generator, model: BlockModel, n_drillholes: int) -> List[DrillSample]:
    nx_, ny_, nz_ = model.dims
    sx, sy, sz = model.block_size
    ox, oy, oz = model.origin
    columns = rng.choice(nx_ * ny_, size=n_drillholes, replace=n_drillholes > nx_ * ny_)
    samples: List[DrillSample] = []
    for column in columns:
        ci, cj = divmod(int(column), ny_)
        x = ox + (ci + rng.uniform(0.1, 0.9)) * sx
        y = oy + (cj + rng.uniform(0.1, 0.9)) * sy
        for k in range(nz_):
            z = oz - (k + 0.5) * sz
            samples.append(DrillSample(
                x=float(x), y=float(y), z=float(z),
                grade=float(model.grade[ci, cj, k]),
                domain=int(model.domain[ci, cj, k]),
            ))
    return samples


def generate_synthetic_deposit(
    seed: int,
    dims: Sequence[int],
    block_size: Sequence[float] = DEFAULT_BLOCK_SIZE,
    n_domains: int = 3,
    n_drillholes: int = 30,
    origin: Sequence[float] = DEFAULT_ORIGIN,
) -> Tuple[BlockModel, List[DrillSample]]:
    """
    Genera el modelo "verdadero" y las muestras de sondaje que lo leen.

    Es determinista por semilla. Cada muestra toma ley y dominio del bloque
    que la contiene.
    """
    dims_t = tuple(int(d) for d in dims)
    if len(dims_t) != 3 or any(d <= 0 for d in dims_t):
        raise InvalidGeometryException(f"dims {tuple(dims)} deben ser positivos")
    if n_domains < 1:
        raise InvalidGeometryException(f"n_domains={n_domains} debe ser >= 1")
    if n_drillholes < 0:
        raise InvalidGeometryException(f"n_drillholes={n_drillholes} no puede ser negativo")

    rng = np.random.default_rng(seed)
    grade = _grade_field(rng, dims_t)
    domain = _domain_field(dims_t, n_domains)
    size = tuple(float(s) for s in block_size)
    tonnage = np.full(dims_t, size[0] * size[1] * size[2] * ROCK_DENSITY)

    model = BlockModel(
        dims=dims_t,
        tonnage=tonnage,
        grade=grade,
        domain=domain,
        block_size=size,
        origin=tuple(float(o) for o in origin),
        element_name=DEFAULT_ELEMENT,
    )
    samples = _drill(rng, model, n_drillholes) if n_drillholes else []
    logger.info(
        "Yacimiento sintético seed=%d dims=%s: %d muestras en %d sondajes",
        seed, dims_t, len(samples), n_drillholes,
    )
    return model, samples
