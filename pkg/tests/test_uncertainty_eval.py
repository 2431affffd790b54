# -*- coding: utf-8 -*-
import random
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from core.block_model import Calendar, EconomicModel, derive_precedence
from core.constants import DEFAULT_MEMBERS, DEFAULT_PERIODS, DEFAULT_STAGES
from core.exceptions import GeometryMismatchException, InvalidEconomicsException, InvalidReplayException, MineOptException
from core.evolution import EAConfig, SequenceProblem, evolve
from core.grade_ensemble import Ensemble, aggregate, build_ensemble, uncertainty_field
from core.interpolation import InterpolatorConfig
from core.pit_optimization import nested_shells
from core.scheduler import (
    ExtractionRecord,
    decode,
    load_schedule_records,
    npv,
    records_for_units,
    route_extraction,
    save_schedule,
)
from core.staging import (
    Staging,
    build_units,
    lazy_staging,
    levelled_staging,
    load_staging,
    save_staging,
    worst_case_staging,
)
from core.synthetic import generate_synthetic_deposit
from core.uncertainty_eval import (
    AGGREGATE_LABEL,
    FeasibilityReport,
    ReplayResult,
    Summary,
    feasibility,
    format_stat,
    format_std,
    member_label,
    period_stats,
    reclassification,
    remaining_npv,
    remaining_npv_values,
    replay,
    replay_ensemble,
    replay_schedule,
    summary,
    write_period_stats,
    write_profit_by_member,
    write_remaining_npv_quantiles,
    write_summary,
)


def result(cashflows, d=0.1, labels=None):
    cashflows = np.atleast_2d(np.asarray(cashflows, dtype=float))
    labels = labels or tuple(member_label(m) for m in range(cashflows.shape[0]))
    return ReplayResult(tuple(labels), cashflows, d)


# -------------------- Reevaluación --------------------

@pytest.fixture
def optimised(synthetic_instance, simple_econ):
    model, units, precedence, calendar = synthetic_instance(6)
    problem = SequenceProblem(units, precedence, model, calendar, simple_econ)
    schedule = problem.decode(problem.random_order(random.Random(3)))
    return model, schedule, calendar


def test_self_replay_reproduces_schedule(optimised, simple_econ):
    """
    Test: reevaluar sobre el propio modelo agregado reproduce flujos y VAN del decodificador.
    """
    model, schedule, calendar = optimised
    replayed = replay_schedule(schedule, model, calendar, simple_econ)
    np.testing.assert_array_equal(replayed.cashflows, schedule.cashflows)
    assert npv(replayed, simple_econ) == pytest.approx(npv(schedule, simple_econ), rel=1e-9)


def test_all_waste_member_pays_only_mining(optimised, simple_econ):
    """
    Test: con un miembro de ley 0 cada período cuesta toneladas minadas por (minado + rehabilitación).
    """
    model, schedule, calendar = optimised
    waste = model.with_values(np.zeros(model.n_blocks), model.domain)
    flows = replay(schedule, waste, calendar, simple_econ)
    np.testing.assert_allclose(flows, -schedule.mined_tonnes * simple_econ.mined_cost_per_tonne)


def test_block_below_cutoff_changes_one_period(make_model, simple_econ, flat_calendar):
    """
    Test: si un bloque procesado cae bajo la ley de corte pierde el ingreso y conserva el costo de minado.
    """
    model = make_model([[[0.02, 0.02]]], tonnage=10.0)
    units, precedence = build_units(model, Staging([1, 1], 1), econ=simple_econ)
    calendar = flat_calendar(3, 10.0, 100.0)
    schedule = decode([0, 1], units, precedence, model, calendar, simple_econ)
    member = model.with_values([0.02, 0.001], model.domain)

    base = schedule.cashflows
    flows = replay(schedule, member, calendar, simple_econ)
    assert flows[0] == base[0]
    assert flows[1] == pytest.approx(-10.0)
    assert flows[2] == base[2]


def test_replay_rejects_other_geometry(optimised, simple_econ):
    """
    Test: reevaluar sobre un miembro de otra geometría es un error.
    """
    _, schedule, calendar = optimised
    other, _ = generate_synthetic_deposit(1, (3, 3, 3), n_drillholes=0)
    with pytest.raises(GeometryMismatchException):
        replay(schedule, other, calendar, simple_econ)


def test_replay_ensemble_labels_members(optimised, simple_econ):
    """
    Test: la reevaluación del ensamble da una fila por miembro, etiquetada member_XX.
    """
    model, schedule, calendar = optimised
    waste = model.with_values(np.zeros(model.n_blocks), model.domain)
    results = replay_ensemble(schedule, Ensemble((model, waste), (0, 1)), calendar, simple_econ)
    assert results.labels == ("member_00", "member_01")
    assert results.cashflows.shape == (2, calendar.t_max)
    np.testing.assert_array_equal(results.cashflows[0], schedule.cashflows)
    assert results.npvs[0] == pytest.approx(npv(schedule, simple_econ))


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    seed=st.integers(min_value=0, max_value=200),
    scale=st.floats(min_value=1.0, max_value=3.0),
    plant_share=st.floats(min_value=0.05, max_value=1.5),
)
def test_higher_member_grades_never_lower_a_period_cashflow(simple_econ, seed, scale, plant_share):
    """
    Test: sin stock y con cada unidad minada en un solo período, un miembro con
    todas las leyes multiplicadas por s >= 1 no baja el flujo de ningún período.
    """
    model, _ = generate_synthetic_deposit(seed, (6, 6, 3), n_domains=1, n_drillholes=0)
    stage_of = np.repeat(np.where(np.arange(6) < 3, 1, 2), 6 * 3)
    units, _ = build_units(model, Staging(stage_of, 2), econ=simple_econ)
    records = [ExtractionRecord(t, u, 1.0) for t, u in enumerate(range(len(units)), start=1)]
    mean_unit = float(np.mean([u.tonnage for u in units]))
    calendar = Calendar.from_capacities([mean_unit * 10] * len(units), [mean_unit * plant_share] * len(units))
    schedule = route_extraction(records, units, model, calendar, simple_econ, stockpiling=False)

    richer = model.with_values(np.minimum(model.grade.ravel() * scale, 1.0), model.domain)
    base = schedule.cashflows
    scaled = replay(schedule, richer, calendar, simple_econ, stockpiling=False)
    assert np.all(scaled >= base - 1e-9 * np.maximum(1.0, np.abs(base)))


# -------------------- Estadísticas por período --------------------

class TestPeriodStats(unittest.TestCase):

    def test_two_members(self):
        """
        Test: flujos {100, 300} dan media 200 y desvío poblacional 100.
        """
        stats = period_stats(result([[100.0], [300.0]]))
        self.assertEqual((stats.max[0], stats.min[0], stats.mean[0], stats.std[0]), (300.0, 100.0, 200.0, 100.0))

    def test_identical_members(self):
        """
        Test: miembros iguales dan desvío 0 y máximo = mínimo = media.
        """
        stats = period_stats(result([[5.0, -3.0]] * 4))
        np.testing.assert_array_equal(stats.std, [0.0, 0.0])
        np.testing.assert_array_equal(stats.max, stats.min)
        np.testing.assert_array_equal(stats.mean, stats.max)

    def test_row_format(self):
        """
        Test: el primer período de referencia se escribe -130250000 con desvío 0.0.
        """
        self.assertEqual(format_stat(-130250000.0), "-130250000")
        self.assertEqual(format_std(0.0), "0.0")
        self.assertEqual(format_stat(-0.04), "0")
        self.assertEqual(format_stat(12.25), "12.2")

    def test_period_stats_file(self):
        """
        Test: el archivo de estadísticas tiene el encabezado y las filas esperadas.
        """
        stats = period_stats(result([[-130250000.0, 10.0]] * 3))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "period_stats.csv"
            write_period_stats(stats, path)
            lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines, [
            "period,max,min,mean,std",
            "1,-130250000,-130250000,-130250000,0.0",
            "2,10,10,10,0.0",
        ])


# -------------------- VAN remanente --------------------

def test_remaining_npv_recurrence():
    """
    Test: flujos (0, 110) con d = 0.1 dan RNPV(1) = 100 y RNPV(2) = 110.
    """
    values = remaining_npv_values(np.array([0.0, 110.0]), 0.1)
    np.testing.assert_allclose(values, [[100.0, 110.0]])
    np.testing.assert_allclose(remaining_npv_values(np.array([100.0]), 0.1), [[100.0]])


def test_remaining_npv_at_start_is_schedule_npv():
    """
    Test: RNPV(1) coincide con el VAN total de cada miembro.
    """
    rng = np.random.default_rng(0)
    results = result(rng.normal(0, 100, size=(4, 6)), d=0.08)
    series = remaining_npv(results)
    np.testing.assert_allclose(series.values[:, 0], results.npvs)


def test_remaining_npv_quantiles(tmp_path):
    """
    Test: los cuantiles por período van de mínimo a máximo con interpolación lineal.
    """
    series = remaining_npv(result([[0.0], [10.0], [20.0], [30.0], [40.0]]))
    np.testing.assert_allclose(series.quantiles, [[0.0, 10.0, 20.0, 30.0, 40.0]])
    np.testing.assert_allclose(series.iqr(), [20.0])
    path = tmp_path / "q.csv"
    write_remaining_npv_quantiles(series, path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "period,min,q1,median,q3,max"


def test_negative_discount_rate_is_rejected():
    """
    Test: una tasa de descuento negativa es un error de economía del dominio.
    """
    with pytest.raises(InvalidEconomicsException) as info:
        remaining_npv(result([[1.0]]), discount_rate=-0.1)
    assert info.value.field == "discount_rate"
    assert isinstance(info.value, MineOptException)


def test_series_must_match_member_labels():
    """
    Test: dos series de flujos con tres etiquetas de miembro no forman un resultado.
    """
    with pytest.raises(InvalidReplayException) as info:
        ReplayResult(("a", "b", "c"), np.zeros((2, 4)), 0.1)
    assert info.value.error_code == "INVALID_REPLAY"


# -------------------- Resumen --------------------

def test_summary_range_of_totals():
    """
    Test: totales por miembro {10, 25, 19} dan un rango de 15.
    """
    s = summary(result([[10.0], [25.0], [19.0]], d=0.0))
    assert s.total_profit_range == 15.0
    assert s.average_npv == pytest.approx(18.0)
    assert (s.min_npv, s.max_npv) == (10.0, 25.0)


def test_identical_members_have_zero_range():
    """
    Test: miembros idénticos dan rango 0.
    """
    assert summary(result([[1.0, 2.0]] * 3)).total_profit_range == 0.0


def test_summary_file_keys(tmp_path):
    """
    Test: summary.txt lista las claves en orden y luego los extras.
    """
    path = tmp_path / "summary.txt"
    write_summary(Summary(1.5, 2.0, 1.0, 2.0, 3.0), path, {"members": 10, "aggregate_npv": 4.25})
    lines = path.read_text(encoding="utf-8").splitlines()
    assert [line.split("=")[0] for line in lines] == [
        "average_npv", "total_profit_range", "min_npv", "max_npv", "mean_total_profit", "members", "aggregate_npv",
    ]
    assert lines[0] == "average_npv=1.5"
    assert lines[-1] == "aggregate_npv=4.25"


def test_profit_by_member_long_format(tmp_path):
    """
    Test: la ganancia por miembro se escribe en formato largo period,member,cashflow.
    """
    path = tmp_path / "profit.csv"
    write_profit_by_member((AGGREGATE_LABEL, "member_00"), np.array([[1.0, 2.0], [3.0, 4.0]]), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "period,member,cashflow"
    assert lines[1:] == ["1,aggregate,1", "2,aggregate,2", "1,member_00,3", "2,member_00,4"]


# -------------------- Factibilidad y reclasificación --------------------

def test_feasibility_indicators(make_model, simple_econ, flat_calendar):
    """
    Test: un primer período de puro estéril da flujo negativo y el primer positivo es el 2.
    """
    model = make_model([[[0.0, 0.02]]], tonnage=10.0)
    units, precedence = build_units(model, Staging([1, 1], 1), econ=simple_econ)
    calendar = flat_calendar(3, 10.0, 20.0)
    schedule = decode([0, 1], units, precedence, model, calendar, simple_econ)
    report = feasibility(schedule, calendar)
    assert report.negative_periods == 1
    assert report.first_positive_period == 2
    np.testing.assert_allclose(report.utilisation, [0.0, 0.5, 0.0])
    assert list(report.frame().columns) == ["period", "plant_capacity", "tonnes_milled", "utilisation", "cashflow"]


def test_no_positive_period():
    """
    Test: sin flujos positivos no hay primer período positivo.
    """
    report = FeasibilityReport(np.array([-1.0, 0.0]), np.array([1.0, 0.0]), np.array([0.5, 0.0]))
    assert report.first_positive_period is None
    np.testing.assert_allclose(report.utilisation, [0.5, 0.0])


def test_reclassified_tonnes(make_model, simple_econ, flat_calendar):
    """
    Test: se cuentan las toneladas extraídas cuya clase mineral/estéril cambia respecto del agregado.
    """
    model = make_model([[[0.02, 0.02]]], tonnage=10.0)
    units, precedence = build_units(model, Staging([1, 1], 1), econ=simple_econ)
    calendar = flat_calendar(2, 10.0, 100.0)
    schedule = decode([0, 1], units, precedence, model, calendar, simple_econ)
    member = model.with_values([0.02, 0.001], model.domain)
    np.testing.assert_allclose(reclassification(schedule, member, model, simple_econ), [0.0, 10.0])
    np.testing.assert_allclose(reclassification(schedule, model, model, simple_econ), [0.0, 0.0])


# -------------------- Yacimiento de referencia --------------------

STRATEGIES = ("lazy", "worst_case", "levelled", "file")


@pytest.fixture(scope="module")
def reference_case(tmp_path_factory):
    """
    Yacimiento sintético seed 7 de 20x20x10 con 10 miembros IDW, economía de
    referencia, shells anidados y calendario de escritorio. Los cronogramas
    del algoritmo evolutivo se calculan una vez por estrategia.
    """
    truth, samples = generate_synthetic_deposit(7, (20, 20, 10))
    ensemble = build_ensemble(samples, InterpolatorConfig(), DEFAULT_MEMBERS, 7, truth)
    agg = aggregate(ensemble)
    field = uncertainty_field(ensemble, agg)
    econ = EconomicModel.reference(3)
    shells = nested_shells(agg, econ, derive_precedence(agg))
    calendar = Calendar.desk_scale(float(agg.tonnage.ravel()[shells.pit].sum()), DEFAULT_PERIODS)
    root = tmp_path_factory.mktemp("reference")
    cache = {}

    def staging_for(strategy):
        if strategy == "lazy":
            return lazy_staging(shells, agg, DEFAULT_STAGES)
        if strategy == "worst_case":
            return worst_case_staging(shells, field, econ, agg, DEFAULT_STAGES)
        if strategy == "levelled":
            return levelled_staging(shells, field, econ, agg, DEFAULT_STAGES)
        path = root / "engineer_staging.csv"
        save_staging(lazy_staging(shells, agg, DEFAULT_STAGES), agg, path)
        return load_staging(path, agg, shells.pit)

    def optimised(strategy):
        if strategy not in cache:
            staging = staging_for(strategy)
            units, precedence = build_units(agg, staging, econ=econ)
            result = evolve(units, precedence, agg, calendar, econ, EAConfig(seed=7))
            cache[strategy] = (units, result)
        return cache[strategy]

    return ensemble, agg, econ, calendar, root, optimised


@pytest.mark.slow
@pytest.mark.parametrize("strategy", STRATEGIES)
def test_reference_self_replay_reproduces_optimised_npv(reference_case, strategy):
    """
    Test: en el yacimiento de referencia, para cada estrategia, reevaluar el cronograma
    optimizado sobre el agregado (directo y desde el CSV) reproduce flujos y VAN.
    """
    _, agg, econ, calendar, root, optimised = reference_case
    units, result = optimised(strategy)

    direct = replay_schedule(result.schedule, agg, calendar, econ)
    np.testing.assert_array_equal(direct.cashflows, result.schedule.cashflows)
    assert npv(direct, econ) == pytest.approx(result.npv, rel=1e-9)

    path = root / f"{strategy}_schedule.csv"
    save_schedule(result.schedule, path)
    records = records_for_units(load_schedule_records(path), units, path)
    from_file = route_extraction(records, units, agg, calendar, econ)
    np.testing.assert_allclose(from_file.cashflows, result.schedule.cashflows, rtol=1e-9, atol=1e-6)
    assert npv(from_file, econ) == pytest.approx(result.npv, rel=1e-9)


@pytest.mark.slow
def test_reference_lazy_average_npv_not_below_worst_case(reference_case):
    """
    Test: en el yacimiento de referencia el VAN medio sobre el ensamble del
    cronograma lazy no es menor que el de worst case.
    """
    ensemble, _, econ, calendar, _, optimised = reference_case
    averages = {}
    for strategy in ("lazy", "worst_case"):
        _, result = optimised(strategy)
        averages[strategy] = summary(replay_ensemble(result.schedule, ensemble, calendar, econ)).average_npv
    assert averages["lazy"] >= averages["worst_case"]
