# -*- coding: utf-8 -*-
"""Fixtures compartidas: modelos chicos armados a mano y economía simple."""

import numpy as np
import pytest

from core.block_model import BlockModel, Calendar, EconomicModel, derive_precedence
from core.pit_optimization import nested_shells
from core.staging import Staging, build_units, lazy_staging
from core.synthetic import generate_synthetic_deposit


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: corridas de escala de aceptación (deseleccionar con -m 'not slow')")


@pytest.fixture
def simple_econ():
    """Precio 1000 por tonelada de metal, minado 1, proceso 2, corte 0.005, recuperación 1."""
    return EconomicModel(
        price_per_tonne_metal=1000.0,
        mining_cost=1.0,
        processing_cost=2.0,
        selling_cost=0.0,
        rehab_cost=0.0,
        cutoff_grade=0.005,
        recovery_by_domain={0: 1.0, 1: 1.0},
        discount_rate=0.1,
    )


@pytest.fixture
def make_model():
    """Fábrica: make_model(grades, dims=None, tonnage=1.0, domains=None)."""

    def build(grades, dims=None, tonnage=1.0, domains=None):
        grades = np.asarray(grades, dtype=np.float64)
        dims = tuple(dims) if dims is not None else grades.shape
        n = int(np.prod(dims))
        tonnes = np.broadcast_to(np.asarray(tonnage, dtype=np.float64), (n,)).copy()
        domain = np.zeros(n, dtype=np.int64) if domains is None else np.asarray(domains, dtype=np.int64)
        return BlockModel(dims=dims, tonnage=tonnes, grade=grades.reshape(dims), domain=domain.reshape(dims))

    return build


@pytest.fixture
def flat_calendar():
    """Fábrica: flat_calendar(t_max, mining, plant)."""

    def build(t_max, mining, plant):
        return Calendar.from_capacities([mining] * t_max, [plant] * t_max)

    return build


@pytest.fixture
def column_instance(simple_econ):
    """
    Fábrica: column_instance(seed) -> (model, units, precedence, calendar).

    Modelo 3x1x2 con una etapa por columna: 6 unidades etapa/banco con leyes
    al azar, mina de 1.5 t y planta de 1 t por período durante 6 períodos.
    """
    def build(seed):
        rng = np.random.default_rng(seed)
        grades = rng.uniform(0.0, 0.02, size=(3, 1, 2))
        model = BlockModel(dims=(3, 1, 2), tonnage=np.ones(6), grade=grades, domain=np.zeros(6, dtype=int))
        staging = Staging(np.repeat([1, 2, 3], 2), 3)
        units, precedence = build_units(model, staging, econ=simple_econ)
        calendar = Calendar.from_capacities([1.5] * 6, [1.0] * 6)
        return model, units, precedence, calendar

    return build


@pytest.fixture
def synthetic_instance(simple_econ):
    """Fábrica: synthetic_instance(seed, dims=(8, 8, 4), stages=3, periods=8) con calendario a escala."""
    def build(seed, dims=(8, 8, 4), stages=3, periods=8):
        model, _ = generate_synthetic_deposit(seed, dims, n_domains=1, n_drillholes=0)
        precedence = derive_precedence(model)
        shells = nested_shells(model, simple_econ, precedence)
        staging = lazy_staging(shells, model, stages)
        units, unit_precedence = build_units(model, staging, precedence, econ=simple_econ)
        pit_tonnage = float(model.tonnage.ravel()[staging.pit].sum())
        calendar = Calendar.desk_scale(pit_tonnage, periods)
        return model, units, unit_precedence, calendar

    return build
