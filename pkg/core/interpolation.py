"""
Interpoladores de muestras de sondaje a puntos arbitrarios.

Dos familias:
  - IDW (inverso de la distancia) sobre los vecinos más cercanos (cKDTree).
  - Red totalmente conectada pequeña, entrenada con descenso de gradiente
    a lote completo, con una salida de ley y una de puntajes por dominio.

Ambas devuelven (ley, dominio) por punto y son deterministas.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from core.block_model import DrillSample
from core.constants import ZERO_DISTANCE
from core.exceptions import (
    InsufficientSamplesException,
    InvalidInterpolatorConfigException,
    NetworkTrainingException,
)

logger = logging.getLogger(__name__)

Params = List[Tuple[np.ndarray, np.ndarray]]


class InterpolationMethod(Enum):
    IDW = "idw"
    NETWORK = "network"


@dataclass(frozen=True)
class InterpolatorConfig:
    """Parámetros de interpolación y de variación entre miembros del ensamble."""

    method: InterpolationMethod = InterpolationMethod.IDW
    idw_power: float = 2.0
    idw_max_neighbors: int = 8
    bootstrap_fraction: float = 0.8
    power_jitter: float = 0.25
    net_hidden_layers: Tuple[int, ...] = (16, 16)
    net_fit_tolerance: float = 0.05
    net_max_epochs: int = 2000
    learning_rate: float = 0.05

    def __post_init__(self) -> None:
        if not isinstance(self.method, InterpolationMethod):
            try:
                object.__setattr__(self, "method", InterpolationMethod(str(self.method).lower()))
            except ValueError:
                raise InvalidInterpolatorConfigException("method", self.method) from None
        object.__setattr__(self, "net_hidden_layers", tuple(int(w) for w in self.net_hidden_layers))

        if not np.isfinite(self.idw_power) or self.idw_power <= 0:
            raise InvalidInterpolatorConfigException("idw_power", self.idw_power)
        if int(self.idw_max_neighbors) < 1:
            raise InvalidInterpolatorConfigException("idw_max_neighbors", self.idw_max_neighbors)
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise InvalidInterpolatorConfigException("bootstrap_fraction", self.bootstrap_fraction)
        if not 0.0 <= self.power_jitter < 1.0:
            raise InvalidInterpolatorConfigException("power_jitter", self.power_jitter)
        if any(w < 1 for w in self.net_hidden_layers):
            raise InvalidInterpolatorConfigException("net_hidden_layers", self.net_hidden_layers)
        if self.net_fit_tolerance < 0:
            raise InvalidInterpolatorConfigException("net_fit_tolerance", self.net_fit_tolerance)
        if int(self.net_max_epochs) < 0:
            raise InvalidInterpolatorConfigException("net_max_epochs", self.net_max_epochs)
        if not np.isfinite(self.learning_rate) or self.learning_rate <= 0:
            raise InvalidInterpolatorConfigException("learning_rate", self.learning_rate)


def _sample_arrays(samples: Sequence[DrillSample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    points = np.array([s.position for s in samples], dtype=np.float64).reshape(-1, 3)
    grades = np.array([s.grade for s in samples], dtype=np.float64)
    domains = np.array([s.domain for s in samples], dtype=np.int64)
    return points, grades, domains


# ---------------------------------------------------------------------------
# Inverso de la distancia
# ---------------------------------------------------------------------------

class IdwInterpolator:
    """
    Promedio ponderado por distancia^-power sobre los `max_neighbors` más cercanos.

    Si un punto cae a menos de 1e-9 m de una muestra se devuelve esa muestra.
    El dominio es el voto ponderado; los empates van al id más bajo.
    """

    def __init__(self, samples: Sequence[DrillSample], power: float = 2.0, max_neighbors: int = 8):
        if len(samples) < 1:
            raise InsufficientSamplesException(len(samples), 1)
        self.points, self.grades, self.domains = _sample_arrays(samples)
        self.power = float(power)
        self.max_neighbors = int(max_neighbors)
        self.classes, self._class_of = np.unique(self.domains, return_inverse=True)
        self.tree = cKDTree(self.points)

    def neighbors(self, query: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(distancias, índices) de forma (m, k), ordenados por distancia."""
        k = min(self.max_neighbors, len(self.points))
        dist, idx = self.tree.query(np.asarray(query, dtype=np.float64).reshape(-1, 3), k=k)
        return dist.reshape(-1, k), idx.reshape(-1, k)

    def predict(self, query: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        dist, idx = self.neighbors(query)
        exact = dist[:, 0] < ZERO_DISTANCE

        with np.errstate(divide="ignore"):
            weights = np.where(exact[:, None], 0.0, dist ** -self.power)
        weights[exact, 0] = 1.0

        total = weights.sum(axis=1)
        grade = (weights * self.grades[idx]).sum(axis=1) / total

        votes = np.zeros((len(dist), len(self.classes)), dtype=np.float64)
        rows = np.repeat(np.arange(len(dist)), idx.shape[1])
        np.add.at(votes, (rows, self._class_of[idx].ravel()), weights.ravel())
        domain = self.classes[np.argmax(votes, axis=1)]

        grade[exact] = self.grades[idx[exact, 0]]
        domain[exact] = self.domains[idx[exact, 0]]
        return np.clip(grade, 0.0, 1.0), domain.astype(np.int64)


def idw_interpolate(samples: Sequence[DrillSample], config: InterpolatorConfig,
                    query_point: Sequence[float]) -> Tuple[float, int]:
    """Ley y dominio IDW en un único punto."""
    interpolator = IdwInterpolator(samples, config.idw_power, config.idw_max_neighbors)
    grade, domain = interpolator.predict(np.asarray(query_point, dtype=np.float64))
    return float(grade[0]), int(domain[0])


# ---------------------------------------------------------------------------
# Red neuronal
# ---------------------------------------------------------------------------

def init_params(layer_sizes: Sequence[int], rng: np.random.Generator) -> Params:
    params: Params = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, fan_out))
        params.append((weights, np.zeros(fan_out)))
    return params


def forward(params: Params, inputs: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Salida lineal final y activaciones tanh de cada capa (para backprop)."""
    activations = [inputs]
    out = inputs
    for layer, (weights, bias) in enumerate(params):
        out = out @ weights + bias
        if layer < len(params) - 1:
            out = np.tanh(out)
            activations.append(out)
    return out, activations


def loss_and_gradients(params: Params, inputs: np.ndarray, target_grade: np.ndarray,
                       target_class: np.ndarray) -> Tuple[float, Params]:
    """
    Pérdida = error cuadrático medio de la ley + entropía cruzada media del dominio,
    con pesos iguales. Devuelve la pérdida y los gradientes exactos por capa.
    """
    n = len(inputs)
    out, activations = forward(params, inputs)
    grade, logits = out[:, 0], out[:, 1:]

    residual = grade - target_grade
    mse = float(np.mean(residual ** 2))

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    cross_entropy = float(-np.mean(log_probs[rows, target_class]))

    delta = np.empty_like(out)
    delta[:, 0] = 2.0 * residual / n
    probs = np.exp(log_probs)
    probs[rows, target_class] -= 1.0
    delta[:, 1:] = probs / n

    grads: Params = []
    for layer in range(len(params) - 1, -1, -1):
        weights, _ = params[layer]
        below = activations[layer]
        grads.append((below.T @ delta, delta.sum(axis=0)))
        if layer > 0:
            delta = (delta @ weights.T) * (1.0 - below ** 2)
    grads.reverse()
    return mse + cross_entropy, grads


@dataclass
class NetworkInterpolator:
    """Red entrenada más la normalización de entradas y salidas que la acompaña."""

    params: Params
    lower: np.ndarray
    upper: np.ndarray
    grade_scale: float
    classes: np.ndarray
    epochs_run: int = 0
    final_loss: float = float("nan")
    history: List[float] = field(default_factory=list)

    def normalize(self, points: np.ndarray) -> np.ndarray:
        return normalize_points(points, self.lower, self.upper)

    def predict(self, query: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        out, _ = forward(self.params, self.normalize(np.asarray(query, dtype=np.float64).reshape(-1, 3)))
        grade = np.clip(out[:, 0] * self.grade_scale, 0.0, 1.0)
        domain = self.classes[np.argmax(out[:, 1:], axis=1)]
        return grade, domain.astype(np.int64)


def normalize_points(points: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Mapeo afín por eje a [-1, 1]; un eje sin extensión queda en 0."""
    span = upper - lower
    safe = np.where(span > 0, span, 1.0)
    scaled = 2.0 * (points - lower) / safe - 1.0
    return np.where(span > 0, scaled, 0.0)


def train_network(samples: Sequence[DrillSample], config: InterpolatorConfig, seed: int) -> NetworkInterpolator:
    """
    Entrena la red con pesos iniciales derivados de `seed`.

    Se detiene cuando la pérdida de entrenamiento baja de `net_fit_tolerance`
    o al llegar a `net_max_epochs`.
    """
    if len(samples) < 2:
        raise InsufficientSamplesException(len(samples), 2)

    points, grades, domains = _sample_arrays(samples)
    lower, upper = points.min(axis=0), points.max(axis=0)
    inputs = normalize_points(points, lower, upper)
    grade_scale = float(grades.max()) if grades.max() > 0 else 1.0
    classes, target_class = np.unique(domains, return_inverse=True)

    rng = np.random.default_rng(seed)
    sizes = [3, *config.net_hidden_layers, 1 + len(classes)]
    params = init_params(sizes, rng)
    target = grades / grade_scale

    history: List[float] = []
    loss = float("inf")
    epoch = 0
    for epoch in range(int(config.net_max_epochs) + 1):
        loss, grads = loss_and_gradients(params, inputs, target, target_class)
        if not np.isfinite(loss):
            raise NetworkTrainingException(epoch, loss)
        history.append(loss)
        if loss <= config.net_fit_tolerance or epoch == config.net_max_epochs:
            break
        params = [
            (w - config.learning_rate * gw, b - config.learning_rate * gb)
            for (w, b), (gw, gb) in zip(params, grads)
        ]

    if loss > config.net_fit_tolerance:
        logger.warning(
            "Red seed=%d sin alcanzar la tolerancia %.4g tras %d épocas (loss=%.4g)",
            seed, config.net_fit_tolerance, epoch, loss,
        )
    else:
        logger.debug("Red seed=%d convergió en %d épocas (loss=%.4g)", seed, epoch, loss)

    return NetworkInterpolator(
        params=params,
        lower=lower,
        upper=upper,
        grade_scale=grade_scale,
        classes=classes,
        epochs_run=epoch,
        final_loss=loss,
        history=history,
    )


def build_interpolator(samples: Sequence[DrillSample], config: InterpolatorConfig,
                       seed: Optional[int] = None, power: Optional[float] = None):
    """Fábrica: IDW con la potencia dada, o red entrenada con la semilla dada."""
    if config.method is InterpolationMethod.NETWORK:
        return train_network(samples, config, 0 if seed is None else seed)
    return IdwInterpolator(samples, config.idw_power if power is None else power, config.idw_max_neighbors)


__all__ = [
    "InterpolationMethod",
    "InterpolatorConfig",
    "IdwInterpolator",
    "idw_interpolate",
    "NetworkInterpolator",
    "train_network",
    "loss_and_gradients",
    "forward",
    "init_params",
    "normalize_points",
    "build_interpolator",
]
