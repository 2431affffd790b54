# -*- coding: utf-8 -*-
import unittest

import numpy as np
import pytest

from core.block_model import BlockModel, EconomicModel, SlopePattern, derive_precedence
from core.exceptions import FileFormatException, InvalidStagingException, NotEnoughShellsException
from core.grade_ensemble import UncertaintyField
from core.pit_optimization import ShellAssignment, nested_shells
from core.staging import (
    Staging,
    build_units,
    lazy_staging,
    levelled_staging,
    load_staging,
    save_staging,
    stage_uncertainty_mass,
    uncertain_ore,
    worst_case_staging,
)
from core.synthetic import generate_synthetic_deposit


def one_shell_per_block(n):
    """Shell s = bloque s-1 en una fila de un solo banco."""
    return ShellAssignment(np.arange(1, n + 1), tuple(float(s) for s in range(1, n + 1)))


def field(std):
    std = np.asarray(std, dtype=np.float64)
    return UncertaintyField(std, np.zeros_like(std))


# -------------------- Lazy --------------------

class TestLazyStaging:

    def test_four_equal_shells_in_two_stages(self, make_model):
        """
        Test: 4 shells de 10 t con k=2 quedan {1,2} y {3,4}.
        """
        model = make_model(np.full((4, 1, 1), 0.02), tonnage=10.0)
        staging = lazy_staging(one_shell_per_block(4), model, 2)
        assert staging.stage_of.tolist() == [1, 1, 2, 2]
        assert staging.tonnage_by_stage(model).tolist() == [20.0, 20.0]
        assert not staging.fallback and staging.strategy == "lazy"

    def test_one_stage_is_whole_pit(self, make_model):
        """
        Test: con k=1 toda la extensión del pit es la etapa 1.
        """
        model = make_model(np.full((4, 1, 1), 0.02), tonnage=10.0)
        staging = lazy_staging(one_shell_per_block(4), model, 1)
        assert staging.stage_of.tolist() == [1, 1, 1, 1]

    def test_k_equal_to_shells_is_identity(self, make_model):
        """
        Test: con k igual al número de shells cada shell es una etapa.
        """
        model = make_model(np.full((4, 1, 1), 0.02), tonnage=[5.0, 30.0, 1.0, 8.0])
        staging = lazy_staging(one_shell_per_block(4), model, 4)
        assert staging.stage_of.tolist() == [1, 2, 3, 4]

    def test_blocks_outside_pit_stay_unstaged(self, make_model):
        """
        Test: los bloques con shell 0 quedan en la etapa 0.
        """
        model = make_model(np.full((3, 1, 1), 0.02))
        shells = ShellAssignment([1, 0, 2], (1.0, 2.0))
        staging = lazy_staging(shells, model, 2)
        assert staging.stage_of.tolist() == [1, 0, 2]
        assert staging.pit.tolist() == [True, False, True]

    def test_not_enough_shells(self, make_model):
        """
        Test: pedir más etapas que shells no vacíos es un error.
        """
        model = make_model(np.full((4, 1, 1), 0.02))
        with pytest.raises(NotEnoughShellsException):
            lazy_staging(one_shell_per_block(4), model, 5)


# -------------------- Worst case --------------------

class TestWorstCase(unittest.TestCase):

    def setUp(self):
        self.econ = EconomicModel(
            price_per_tonne_metal=1000.0, mining_cost=1.0, processing_cost=2.0, selling_cost=0.0,
            rehab_cost=0.0, cutoff_grade=0.005, recovery_by_domain={0: 1.0}, discount_rate=0.1,
        )
        grades = np.array([0.0, 0.0, 0.0, 0.02, 0.02, 0.02])
        self.model = BlockModel(dims=(6, 1, 1), tonnage=np.ones(6), grade=grades, domain=np.zeros(6, dtype=int))
        self.shells = one_shell_per_block(6)

    def test_all_ore_uncertain_goes_last(self):
        """
        Test: si todo el mineral es incierto las primeras k-2 etapas son estéril y las dos últimas mineral.
        """
        staging = worst_case_staging(self.shells, field([0, 0, 0, 0.05, 0.05, 0.05]), self.econ, self.model, 3)
        self.assertEqual(staging.k, 3)
        self.assertEqual(staging.stage_of[:3].tolist(), [1, 1, 1])
        self.assertTrue(set(staging.stage_of[3:].tolist()) == {2, 3})
        self.assertFalse(staging.fallback)

    def test_zero_uncertainty_falls_back_to_lazy(self):
        """
        Test: sin mineral incierto se usa lazy y el resultado queda marcado.
        """
        staging = worst_case_staging(self.shells, field(np.zeros(6)), self.econ, self.model, 3)
        lazy = lazy_staging(self.shells, self.model, 3)
        self.assertTrue(staging.fallback)
        self.assertEqual(staging.stage_of.tolist(), lazy.stage_of.tolist())
        self.assertEqual(staging.strategy, "worst_case")

    def test_threshold_is_strict(self):
        """
        Test: un desvío igual al umbral no cuenta como incierto.
        """
        mask = uncertain_ore(self.model, self.econ, field([0, 0, 0, 0.01, 0.011, 0.0]), 0.01)
        self.assertEqual(mask.tolist(), [False, False, False, False, True, False])

    def test_needs_three_stages(self):
        """
        Test: worst_case con k < 3 es inválido.
        """
        with self.assertRaises(InvalidStagingException):
            worst_case_staging(self.shells, field(np.zeros(6)), self.econ, self.model, 2)


def test_worst_case_postcondition_on_synthetic_deposit(simple_econ):
    """
    Test: en el yacimiento de semilla 7 todo mineral del pit con desvío > 0.01 cae en las dos últimas etapas.
    """
    model, _ = generate_synthetic_deposit(7, (10, 10, 6), n_domains=1, n_drillholes=0)
    precedence = derive_precedence(model)
    shells = nested_shells(model, simple_econ, precedence)
    std = np.random.default_rng(7).uniform(0.0, 0.02, model.n_blocks)
    uncertainty = field(std)

    staging = worst_case_staging(shells, uncertainty, simple_econ, model, 6)
    staging.check_covers(shells.pit, model)
    isolated = shells.pit & uncertain_ore(model, simple_econ, uncertainty, 0.01)
    assert isolated.any()
    assert set(staging.stage_of[isolated].tolist()) <= {staging.k - 1, staging.k}
    assert not (staging.stage_of[shells.pit & ~isolated] >= staging.k - 1).any()


# -------------------- Levelled --------------------

class TestLevelled:

    def _model(self, make_model, n):
        return make_model(np.full((n, 1, 1), 0.02), tonnage=10.0)

    def test_equal_masses_one_shell_per_stage(self, make_model, simple_econ):
        """
        Test: dos shells con masa 10 y 10 y k=2 dan una etapa por shell.
        """
        model = self._model(make_model, 2)
        staging = levelled_staging(one_shell_per_block(2), field([1.0, 1.0]), simple_econ, model, 2)
        assert staging.stage_of.tolist() == [1, 2]
        np.testing.assert_allclose(stage_uncertainty_mass(staging, model, simple_econ, field([1.0, 1.0])), [10.0, 10.0])

    def test_masses_six_two_two_six(self, make_model, simple_econ):
        """
        Test: masas 6,2,2,6 con k=2 quedan {1,2} y {3,4} con 8 y 8.
        """
        model = self._model(make_model, 4)
        uncertainty = field([0.6, 0.2, 0.2, 0.6])
        staging = levelled_staging(one_shell_per_block(4), uncertainty, simple_econ, model, 2)
        assert staging.stage_of.tolist() == [1, 1, 2, 2]
        np.testing.assert_allclose(stage_uncertainty_mass(staging, model, simple_econ, uncertainty), [8.0, 8.0])

    def test_zero_uncertainty_reduces_to_lazy(self, make_model, simple_econ):
        """
        Test: sin incertidumbre levelled coincide con lazy.
        """
        model = make_model(np.full((5, 1, 1), 0.02), tonnage=[3.0, 9.0, 4.0, 4.0, 7.0])
        shells = one_shell_per_block(5)
        staging = levelled_staging(shells, field(np.zeros(5)), simple_econ, model, 3)
        assert staging.stage_of.tolist() == lazy_staging(shells, model, 3).stage_of.tolist()
        assert staging.strategy == "levelled"

    def test_range_bounded_by_largest_shell_mass(self, make_model, simple_econ):
        """
        Test: la diferencia de masa entre etapas no supera la mayor masa de un shell.
        """
        rng = np.random.default_rng(3)
        model = self._model(make_model, 12)
        std = rng.uniform(0.0, 0.05, 12)
        uncertainty = field(std)
        staging = levelled_staging(one_shell_per_block(12), uncertainty, simple_econ, model, 4)
        masses = stage_uncertainty_mass(staging, model, simple_econ, uncertainty)
        assert masses.max() - masses.min() <= (10.0 * std).max() + 1e-9

    def test_fewer_shells_than_stages_gives_one_stage_per_shell(self, make_model, simple_econ, caplog):
        """
        Test: 3 shells con k=5 dan 3 etapas, una por shell, con advertencia.
        """
        model = self._model(make_model, 3)
        with caplog.at_level("WARNING", logger="core.staging"):
            staging = levelled_staging(one_shell_per_block(3), field([0.1, 0.2, 0.3]), simple_econ, model, 5)
        assert staging.k == 3
        assert staging.stage_of.tolist() == [1, 2, 3]
        assert staging.strategy == "levelled"
        assert "3 shells" in caplog.text

    def test_greedy_sweep_above_search_limit(self, make_model, simple_econ, monkeypatch):
        """
        Test: por encima del límite de combinaciones se acumula masa hasta total/k.
        """
        monkeypatch.setattr("core.staging.EXHAUSTIVE_LIMIT", 0)
        model = self._model(make_model, 4)
        uncertainty = field([0.6, 0.2, 0.2, 0.6])
        staging = levelled_staging(one_shell_per_block(4), uncertainty, simple_econ, model, 2)
        assert staging.stage_of.tolist() == [1, 1, 2, 2]


# -------------------- Archivos --------------------

def test_staging_round_trip(tmp_path, make_model):
    """
    Test: guardar y leer un staging devuelve la misma asignación.
    """
    model = make_model(np.full((2, 2, 2), 0.02))
    staging = Staging([1, 1, 0, 2, 1, 2, 0, 2], 2)
    path = tmp_path / "staging.csv"
    save_staging(staging, model, path)
    loaded = load_staging(path, model, staging.pit)
    assert loaded.stage_of.tolist() == staging.stage_of.tolist()
    assert loaded.k == 2 and loaded.strategy == "file"


def test_stage_ids_are_renumbered(tmp_path, make_model):
    """
    Test: las etapas {2, 5} se normalizan a {1, 2} respetando el orden.
    """
    model = make_model(np.full((2, 1, 1), 0.02))
    path = tmp_path / "staging.csv"
    path.write_text("i,j,k,stage\n0,0,0,5\n1,0,0,2\n", encoding="utf-8")
    staging = load_staging(path, model)
    assert staging.stage_of.tolist() == [2, 1]
    assert staging.k == 2


def test_omitted_pit_block_is_named(tmp_path, make_model):
    """
    Test: un archivo que omite un bloque del pit falla nombrando ese bloque.
    """
    model = make_model(np.full((2, 1, 1), 0.02))
    path = tmp_path / "staging.csv"
    path.write_text("i,j,k,stage\n0,0,0,1\n", encoding="utf-8")
    with pytest.raises(FileFormatException) as ctx:
        load_staging(path, model, np.array([True, True]))
    assert "(1, 0, 0)" in str(ctx.value)


@pytest.mark.parametrize("body", [
    "i,j,k,stage\n",
    "i,j,k,stage\n0,0,0,1\n0,0,0,2\n",
    "i,j,k,stage\n0,0,0,0\n",
    "i,j,k,stage\n3,0,0,1\n",
])
def test_bad_staging_files(tmp_path, make_model, body):
    """
    Test: archivos vacíos, con repetidos, etapa 0 o fuera del modelo fallan.
    """
    model = make_model(np.full((2, 1, 1), 0.02))
    path = tmp_path / "staging.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(FileFormatException):
        load_staging(path, model)


def test_empty_stage_is_invalid():
    """
    Test: una etapa sin bloques invalida el staging.
    """
    with pytest.raises(InvalidStagingException):
        Staging([1, 3, 3], 3)


# -------------------- Unidades etapa/banco --------------------

class TestBuildUnits:

    def test_single_stage_is_bench_chain(self, make_model):
        """
        Test: una sola etapa con 3 bancos da una cadena de 3 unidades.
        """
        model = make_model(np.full((1, 1, 3), 0.02))
        units, precedence = build_units(model, Staging([1, 1, 1], 1))
        assert [u.label for u in units] == ["S1B0", "S1B1", "S1B2"]
        assert precedence.arcs == ((0, 1), (1, 2))

    def test_two_nested_stages_lift_block_arcs(self, make_model):
        """
        Test: en 3x3x2 el arco (etapa 1, banco 0) -> (etapa 2, banco 1) aparece porque cruzan precedencias.
        """
        model = make_model(np.full((3, 3, 2), 0.02))
        stage = np.zeros((3, 3, 2), dtype=int)
        stage[:, :, 0] = 1
        stage[1, 1, 1] = 1
        stage[:, :, 1][stage[:, :, 1] == 0] = 2
        units, precedence = build_units(model, Staging(stage.ravel(), 2))
        assert [u.label for u in units] == ["S1B0", "S1B1", "S2B1"]
        assert set(precedence.arcs) == {(0, 1), (0, 2)}
        assert precedence.is_topological([0, 1, 2]) and precedence.is_topological([0, 2, 1])
        assert not precedence.is_topological([1, 0, 2])

    def test_unit_count_and_economics(self, simple_econ):
        """
        Test: hay una unidad por par (etapa, banco) no vacío y su tonelaje suma el pit.
        """
        model, _ = generate_synthetic_deposit(5, (8, 8, 5), n_domains=1, n_drillholes=0)
        precedence = derive_precedence(model, SlopePattern.FIVE_POINT)
        shells = nested_shells(model, simple_econ, precedence)
        staging = lazy_staging(shells, model, 3)
        units, unit_precedence = build_units(model, staging, precedence, econ=simple_econ)

        pairs = {(int(s), int(b)) for s, b in zip(staging.stage_of, model.levels()) if s > 0}
        assert len(units) == len(pairs)
        assert sum(u.tonnage for u in units) == pytest.approx(model.tonnage.ravel()[staging.pit].sum())
        assert unit_precedence.to_networkx().number_of_nodes() == len(units)
        assert all(u.ore_tonnage <= u.tonnage for u in units)

    def test_stage_order_adds_first_bench_arcs(self, make_model):
        """
        Test: con stage_order el primer banco de cada etapa precede al de la siguiente.
        """
        model = make_model(np.full((2, 1, 1), 0.02))
        units, plain = build_units(model, Staging([1, 2], 2))
        assert plain.arcs == ()
        _, ordered = build_units(model, Staging([1, 2], 2), stage_order=True)
        assert ordered.arcs == ((0, 1),)

    def test_size_mismatch_is_rejected(self, make_model):
        """
        Test: un staging de otro tamaño que el modelo es inválido.
        """
        model = make_model(np.full((2, 1, 1), 0.02))
        with pytest.raises(InvalidStagingException):
            build_units(model, Staging([1, 1, 1], 1))
