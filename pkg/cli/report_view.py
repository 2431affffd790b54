# -*- coding: utf-8 -*-
"""
Vista de texto de los resultados (estadísticas por período, resumen, comparación).
No escribe archivos: solo arma el texto que la CLI imprime.
"""

from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.uncertainty_eval import PeriodStats, RemainingNpvSeries, Summary, format_stat, format_std

MONEY_UNITS = ((1e9, "B"), (1e6, "M"), (1e3, "K"))
COLUMN_WIDTH = 16


def format_money(value: float, digits: int = 3) -> str:
    """
    1.585e9 -> '$1.585B', 1.84e9 -> '$1.84B', -2.5e6 -> '-$2.5M'.
    Se recortan los ceros finales.
    """
    sign = "-" if value < 0 else ""
    magnitude = abs(float(value))
    for scale, suffix in MONEY_UNITS:
        if magnitude >= scale:
            text = f"{magnitude / scale:.{digits}f}".rstrip("0").rstrip(".")
            return f"{sign}${text}{suffix}"
    text = f"{magnitude:.2f}".rstrip("0").rstrip(".")
    return f"{sign}${text}"


def summary_line(label: str, result: Summary) -> str:
    return (
        f"{label}: average NPV of {format_money(result.average_npv)}, "
        f"total profit range of {format_money(result.total_profit_range)}"
    )


def render_comparison(rows: Iterable[Tuple[str, Summary]]) -> str:
    """Una viñeta por estrategia, en el orden recibido."""
    return "\n".join(f"  - {summary_line(label, result)}" for label, result in rows)


def render_period_stats(stats: PeriodStats, title: Optional[str] = None) -> str:
    """Tabla período | max | min | mean | std."""
    headers = ("t", "max", "min", "mean", "std")
    lines: List[str] = []
    if title:
        lines.append(title)
    lines.append(headers[0].rjust(4) + "".join(h.rjust(COLUMN_WIDTH) for h in headers[1:]))
    for t in range(stats.t_max):
        cells = (format_stat(stats.max[t]), format_stat(stats.min[t]), format_stat(stats.mean[t]),
                 format_std(stats.std[t]))
        lines.append(str(t + 1).rjust(4) + "".join(c.rjust(COLUMN_WIDTH) for c in cells))
    return "\n".join(lines)


def render_remaining_npv(series: RemainingNpvSeries) -> str:
    iqr = series.iqr()
    median = series.quantiles[:, 2]
    lines = ["t".rjust(4) + "median".rjust(COLUMN_WIDTH) + "iqr".rjust(COLUMN_WIDTH)]
    for t in range(iqr.size):
        lines.append(str(t + 1).rjust(4) + format_money(median[t]).rjust(COLUMN_WIDTH)
                     + format_money(iqr[t]).rjust(COLUMN_WIDTH))
    return "\n".join(lines)


def render_trace(trace: Sequence[float], every: int = 10) -> str:
    """Mejor VAN cada `every` generaciones (y la última)."""
    points = [g for g in range(len(trace)) if g % every == 0 or g == len(trace) - 1]
    return "\n".join(f"  gen {g:>4}: {format_money(trace[g])}" for g in points)


def render_key_values(entries: Iterable[Tuple[str, object]]) -> str:
    rows = list(entries)
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"  {key.ljust(width)}  {value}" for key, value in rows)


def render_stage_tonnage(tonnage: np.ndarray) -> str:
    return "\n".join(f"  etapa {s + 1}: {t:,.0f} t" for s, t in enumerate(tonnage))
