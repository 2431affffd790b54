# -*- coding: utf-8 -*-
import unittest

import numpy as np
import pytest

from core.block_model import BlockModel, DrillSample
from core.exceptions import FileFormatException, GeometryMismatchException, InvalidGeometryException
from core.grade_ensemble import (
    Ensemble,
    UncertaintyField,
    aggregate,
    build_ensemble,
    load_ensemble,
    load_uncertainty,
    member_file,
    member_samples,
    plurality_domain,
    save_ensemble,
    save_uncertainty,
    uncertainty_field,
    uncertainty_summary,
)
from core.interpolation import IdwInterpolator, InterpolatorConfig
from core.synthetic import generate_synthetic_deposit


def one_block_members(grades, domains):
    """Miembros de un solo bloque con las leyes y dominios dados."""
    return Ensemble(
        tuple(
            BlockModel(dims=(1, 1, 1), tonnage=np.ones(1), grade=np.array([g]), domain=np.array([d]))
            for g, d in zip(grades, domains)
        ),
        tuple(range(len(grades))),
    )


class TestAggregate(unittest.TestCase):

    def test_majority_domain_and_mean_over_majority(self):
        """
        Test: dominios {A,A,B} con leyes {0.3,0.5,0.9} dan dominio A y ley 0.4.
        """
        agg = aggregate(one_block_members([0.3, 0.5, 0.9], [1, 1, 2]))
        self.assertEqual(int(agg.domain.ravel()[0]), 1)
        self.assertAlmostEqual(float(agg.grade.ravel()[0]), 0.4, places=12)

    def test_tie_goes_to_lowest_domain(self):
        """
        Test: con {A,A,B,B} gana el dominio de id más bajo.
        """
        agg = aggregate(one_block_members([0.1, 0.2, 0.3, 0.4], [4, 4, 2, 2]))
        self.assertEqual(int(agg.domain.ravel()[0]), 2)
        self.assertAlmostEqual(float(agg.grade.ravel()[0]), 0.35, places=12)

    def test_identical_members_aggregate_to_member(self):
        """
        Test: si todos los miembros son iguales el agregado es ese miembro.
        """
        model, _ = generate_synthetic_deposit(2, (4, 3, 2), n_drillholes=0)
        ensemble = Ensemble((model, model, model), (0, 1, 2))
        self.assertEqual(aggregate(ensemble), model)

    def test_plurality_per_column(self):
        """
        Test: la moda se calcula por bloque de forma independiente.
        """
        domains = np.array([[0, 3, 1], [2, 3, 1], [2, 0, 0]])
        np.testing.assert_array_equal(plurality_domain(domains), [2, 3, 1])


class TestUncertainty(unittest.TestCase):

    def test_population_std_of_two_members(self):
        """
        Test: dos miembros con leyes 0.2/0.4 tienen desvío 0.1.
        """
        ensemble = one_block_members([0.2, 0.4], [0, 0])
        field = uncertainty_field(ensemble, aggregate(ensemble))
        self.assertAlmostEqual(float(field.grade_std[0]), 0.1, places=12)
        self.assertEqual(float(field.domain_disagreement[0]), 0.0)

    def test_nine_of_ten_agree(self):
        """
        Test: 10 miembros con 9 de acuerdo con el dominio agregado dan discrepancia 0.1.
        """
        ensemble = one_block_members([0.1] * 10, [0] * 9 + [5])
        field = uncertainty_field(ensemble, aggregate(ensemble))
        self.assertAlmostEqual(float(field.domain_disagreement[0]), 0.1, places=12)
        self.assertEqual(float(field.grade_std[0]), 0.0)

    def test_identical_members_have_no_uncertainty(self):
        """
        Test: miembros idénticos dan desvío 0 y discrepancia 0 en todos los bloques.
        """
        model, _ = generate_synthetic_deposit(4, (3, 3, 2), n_drillholes=0)
        ensemble = Ensemble((model, model), (0, 1))
        field = uncertainty_field(ensemble, model)
        self.assertTrue(np.all(field.grade_std == 0.0))
        self.assertTrue(np.all(field.domain_disagreement == 0.0))

    def test_threshold_and_summary(self):
        """
        Test: los bloques inciertos son los de desvío estrictamente mayor al umbral.
        """
        field = UncertaintyField(np.array([0.0, 0.01, 0.02]), np.array([0.0, 0.5, 1.0]))
        np.testing.assert_array_equal(field.uncertain(0.01), [False, False, True])
        summary = uncertainty_summary(field, 0.01)
        self.assertEqual(summary["uncertain_blocks"], 1)
        self.assertEqual(summary["max_grade_std"], 0.02)
        self.assertAlmostEqual(summary["mean_domain_disagreement"], 0.5)

    def test_out_of_range_field_is_rejected(self):
        """
        Test: una discrepancia mayor a 1 no es un campo válido.
        """
        with self.assertRaises(InvalidGeometryException):
            UncertaintyField(np.array([0.0]), np.array([1.5]))


# -------------------- Construcción --------------------

@pytest.fixture
def deposit():
    return generate_synthetic_deposit(11, (6, 5, 3), n_drillholes=6)


def test_single_member_without_variation_is_plain_interpolation(deposit):
    """
    Test: un miembro, fracción 1 y sin jitter coincide con la interpolación directa.
    """
    model, samples = deposit
    config = InterpolatorConfig(bootstrap_fraction=1.0, power_jitter=0.0)
    ensemble = build_ensemble(samples, config, 1, 100, model)
    grade, domain = IdwInterpolator(samples, config.idw_power, config.idw_max_neighbors).predict(model.centroids())
    member = ensemble.members[0]
    np.testing.assert_array_equal(member.grade.ravel(), grade)
    np.testing.assert_array_equal(member.domain.ravel(), domain)
    assert aggregate(ensemble) == member


def test_ensemble_is_deterministic(deposit):
    """
    Test: la misma semilla base reproduce el ensamble completo.
    """
    model, samples = deposit
    config = InterpolatorConfig()
    first = build_ensemble(samples, config, 4, 7, model)
    second = build_ensemble(samples, config, 4, 7, model)
    assert first.member_seeds == (7, 8, 9, 10)
    for a, b in zip(first.members, second.members):
        assert a == b


def test_members_differ_with_jitter(deposit):
    """
    Test: con jitter y submuestreo los miembros no son todos iguales.
    """
    model, samples = deposit
    ensemble = build_ensemble(samples, InterpolatorConfig(), 3, 0, model)
    assert not np.array_equal(ensemble.grades[0], ensemble.grades[1]) or \
        not np.array_equal(ensemble.grades[1], ensemble.grades[2])


def test_dense_sampling_bounds_member_grades():
    """
    Test: con una muestra por centroide cada ley de miembro queda entre las leyes muestreadas.
    """
    model, _ = generate_synthetic_deposit(5, (4, 4, 3), n_drillholes=0)
    samples = [
        DrillSample(x=float(x), y=float(y), z=float(z), grade=float(g), domain=int(d))
        for (x, y, z), g, d in zip(model.centroids(), model.grade.ravel(), model.domain.ravel())
    ]
    ensemble = build_ensemble(samples, InterpolatorConfig(bootstrap_fraction=0.5), 3, 1, model)
    low, high = model.grade.min(), model.grade.max()
    assert np.all((ensemble.grades >= low - 1e-12) & (ensemble.grades <= high + 1e-12))


def test_member_samples_without_replacement():
    """
    Test: el submuestreo no repite muestras y conserva el orden original.
    """
    samples = [DrillSample(x=float(i), y=0.0, z=0.0, grade=0.1, domain=0) for i in range(10)]
    chosen = member_samples(samples, 0.5, np.random.default_rng(0))
    xs = [s.x for s in chosen]
    assert len(xs) == 5 and xs == sorted(set(xs))
    assert member_samples(samples, 1.0, np.random.default_rng(0)) == samples


def test_zero_members_rejected(deposit):
    """
    Test: un ensamble sin miembros es inválido.
    """
    model, samples = deposit
    with pytest.raises(InvalidGeometryException):
        build_ensemble(samples, InterpolatorConfig(), 0, 0, model)


def test_members_must_share_geometry():
    """
    Test: miembros con geometrías distintas no forman un ensamble.
    """
    a, _ = generate_synthetic_deposit(1, (2, 2, 2), n_drillholes=0)
    b, _ = generate_synthetic_deposit(1, (2, 2, 3), n_drillholes=0)
    with pytest.raises(GeometryMismatchException):
        Ensemble((a, b), (0, 1))


# -------------------- Persistencia --------------------

def test_ensemble_directory_round_trip(tmp_path, deposit):
    """
    Test: el directorio del ensamble tiene los archivos esperados y se relee igual.
    """
    model, samples = deposit
    config = InterpolatorConfig()
    ensemble = build_ensemble(samples, config, 3, 20, model)
    agg = aggregate(ensemble)
    save_ensemble(ensemble, tmp_path, config, agg)

    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["aggregate.csv", "ensemble.meta", member_file(0), member_file(1), member_file(2)]
    assert member_file(0) == "member_00.csv"

    loaded, loaded_agg, meta = load_ensemble(tmp_path)
    assert loaded.member_seeds == (20, 21, 22)
    assert loaded_agg == agg
    assert all(a == b for a, b in zip(loaded.members, ensemble.members))
    assert meta["method"] == "idw" and meta["members"] == "3"


def test_incomplete_meta_is_format_error(tmp_path, deposit):
    """
    Test: un ensemble.meta sin semillas es un error de formato.
    """
    model, samples = deposit
    ensemble = build_ensemble(samples, InterpolatorConfig(), 1, 0, model)
    save_ensemble(ensemble, tmp_path, InterpolatorConfig(), aggregate(ensemble))
    (tmp_path / "ensemble.meta").write_text("members = 1\n", encoding="utf-8")
    with pytest.raises(FileFormatException):
        load_ensemble(tmp_path)


def test_uncertainty_round_trip(tmp_path, deposit):
    """
    Test: el campo de incertidumbre se guarda por bloque y se relee igual.
    """
    model, samples = deposit
    ensemble = build_ensemble(samples, InterpolatorConfig(), 3, 0, model)
    field = uncertainty_field(ensemble, aggregate(ensemble))
    path = tmp_path / "uncertainty.csv"
    save_uncertainty(field, model, path)
    loaded = load_uncertainty(path, model)
    np.testing.assert_array_equal(loaded.grade_std, field.grade_std)
    np.testing.assert_array_equal(loaded.domain_disagreement, field.domain_disagreement)
