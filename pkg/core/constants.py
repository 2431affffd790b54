# -*- coding: utf-8 -*-
from typing import Dict, Tuple

# Geometría por defecto
DEFAULT_BLOCK_SIZE: Tuple[float, float, float] = (10.0, 10.0, 10.0)
DEFAULT_ORIGIN: Tuple[float, float, float] = (0.0, 0.0, 0.0)
DEFAULT_ELEMENT: str = "Cu"
ROCK_DENSITY: float = 2.7  # t/m3

# Economía de referencia (cobre, moneda AUD)
REFERENCE_PRICE: float = 7673.0
REFERENCE_MINING_COST: float = 4.20
REFERENCE_PROCESSING_COST: float = 15.0
REFERENCE_SELLING_COST: float = 1.0
REFERENCE_REHAB_COST: float = 1.0
REFERENCE_CUTOFF: float = 0.0025
REFERENCE_DISCOUNT_RATE: float = 0.10
REFERENCE_RECOVERIES: Tuple[float, ...] = (0.92, 0.85, 0.80, 0.75)

# Calendario de escritorio: proporciones 25 Mt mina / 5 Mt planta / 9 Mt planta
DEFAULT_PERIODS: int = 20
PLANT_RATIO_BEFORE_UPGRADE: float = 5.0 / 25.0
PLANT_RATIO_AFTER_UPGRADE: float = 9.0 / 25.0
PLANT_UPGRADE_PERIOD: int = 9

# Pit y etapas
DEFAULT_REVENUE_FACTOR_RANGE: Tuple[float, float] = (0.5, 1.5)
DEFAULT_REVENUE_FACTOR_COUNT: int = 21
DEFAULT_STAGES: int = 6
WORST_CASE_STD_THRESHOLD: float = 0.01
NEAR_CUTOFF_BAND: float = 0.001

# Ensamble
DEFAULT_MEMBERS: int = 10
ZERO_DISTANCE: float = 1e-9

# Tolerancias numéricas
CAPACITY_TOLERANCE: float = 1e-9
FRACTION_TOLERANCE: float = 1e-9
ORACLE_UNIT_LIMIT: int = 8

# Mapa de nombres de estrategias (CLI) a etiquetas de reporte
STRATEGY_LABELS: Dict[str, str] = {
    "lazy": "Lazy staging",
    "file": "Expected staging",
    "worst_case": "Worst case",
    "levelled": "Levelled uncertainty staging",
}

__all__ = [
    "DEFAULT_BLOCK_SIZE", "DEFAULT_ORIGIN", "DEFAULT_ELEMENT", "ROCK_DENSITY",
    "REFERENCE_PRICE", "REFERENCE_MINING_COST", "REFERENCE_PROCESSING_COST",
    "REFERENCE_SELLING_COST", "REFERENCE_REHAB_COST", "REFERENCE_CUTOFF",
    "REFERENCE_DISCOUNT_RATE", "REFERENCE_RECOVERIES",
    "DEFAULT_PERIODS", "PLANT_RATIO_BEFORE_UPGRADE", "PLANT_RATIO_AFTER_UPGRADE",
    "PLANT_UPGRADE_PERIOD", "DEFAULT_REVENUE_FACTOR_RANGE", "DEFAULT_REVENUE_FACTOR_COUNT",
    "DEFAULT_STAGES", "WORST_CASE_STD_THRESHOLD", "NEAR_CUTOFF_BAND",
    "DEFAULT_MEMBERS", "ZERO_DISTANCE", "CAPACITY_TOLERANCE", "FRACTION_TOLERANCE",
    "ORACLE_UNIT_LIMIT", "STRATEGY_LABELS",
]
