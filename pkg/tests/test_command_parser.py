# -*- coding: utf-8 -*-
from pathlib import Path

import pytest

from cli.cli_exceptions import EXIT_USAGE, CommandParseError
from cli.command_parser import REQUIRED, Command, parse_command


def test_gen_defaults():
    """
    Test: 'gen' sin opciones usa los valores por omisión.
    """
    cmd = parse_command(["gen"])
    assert isinstance(cmd, Command)
    assert cmd.name == "gen"
    assert cmd.config.dims == (20, 20, 10)
    assert cmd.config.seed == 7
    assert cmd.verbosity == 0


def test_gen_options():
    """
    Test: dimensiones, sondajes, semilla y salida se convierten al tipo del campo.
    """
    cmd = parse_command(["gen", "--dims", "6x5x4", "--drillholes", "12", "--seed", "3", "--out", "runs/a"])
    assert cmd.config.dims == (6, 5, 4)
    assert cmd.config.drillholes == 12
    assert cmd.config.seed == 3
    assert cmd.config.out == Path("runs/a")


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["gen", "--dims", "0x5x5"],
    ["gen", "--dims", "5x5"],
    ["gen", "--drillholes", "many"],
    ["gen", "--domains", "0"],
    ["gen", "--colour", "red"],
    ["schedule", "--model", "m.csv", "--staging", "s.csv", "--calendar", "c.csv", "--economics", "e.txt",
     "--population", "1"],
    ["ensemble", "--samples", "s.csv", "--model", "m.csv", "--method", "kriging"],
])
def test_usage_errors(argv):
    """
    Test: subcomandos desconocidos, flags desconocidos y valores inválidos son errores de uso.
    """
    with pytest.raises(CommandParseError) as info:
        parse_command(argv)
    assert info.value.exit_code == EXIT_USAGE


@pytest.mark.parametrize("name", sorted(n for n, required in REQUIRED.items() if required))
def test_missing_required_options(name):
    """
    Test: cada subcomando sin sus archivos obligatorios falla nombrando el primero.
    """
    first = REQUIRED[name][0].replace("_", "-")
    with pytest.raises(CommandParseError, match=f"--{first}"):
        parse_command([name])


class TestStage:

    BASE = ["stage", "--model", "model.csv", "--shells", "shells.csv"]

    def test_lazy_needs_only_model_and_shells(self):
        """
        Test: la estrategia lazy no pide economía ni incertidumbre.
        """
        cmd = parse_command(self.BASE + ["--stages", "4"])
        assert cmd.config.strategy == "lazy"
        assert cmd.config.stages == 4

    @pytest.mark.parametrize("strategy", ["worst_case", "levelled"])
    def test_uncertainty_strategies_need_inputs(self, strategy):
        """
        Test: worst_case y levelled piden economía e incertidumbre.
        """
        with pytest.raises(CommandParseError):
            parse_command(self.BASE + ["--strategy", strategy])
        cmd = parse_command(self.BASE + ["--strategy", strategy, "--economics", "e.txt",
                                         "--uncertainty", "u.csv"])
        assert cmd.config.strategy == strategy

    def test_file_strategy_needs_staging(self):
        """
        Test: la estrategia file pide el CSV de etapas.
        """
        with pytest.raises(CommandParseError):
            parse_command(self.BASE + ["--strategy", "file"])
        cmd = parse_command(self.BASE + ["--strategy", "file", "--staging", "eng.csv"])
        assert cmd.config.staging_file == Path("eng.csv")

    def test_worst_case_needs_three_stages(self):
        """
        Test: worst_case con menos de 3 etapas es un error de uso.
        """
        with pytest.raises(CommandParseError, match="stages"):
            parse_command(self.BASE + ["--strategy", "worst-case", "--stages", "2", "--economics", "e.txt",
                                       "--uncertainty", "u.csv"])


def test_schedule_switches():
    """
    Test: --stockpile off, --stage-order y --oracle llegan a la configuración.
    """
    cmd = parse_command(["schedule", "--model", "m.csv", "--staging", "s.csv", "--calendar", "c.csv",
                         "--economics", "e.txt", "--stockpile", "off", "--stage-order", "--oracle",
                         "--generations", "0"])
    assert cmd.config.stockpiling is False
    assert cmd.config.stage_order is True
    assert cmd.config.oracle is True
    assert cmd.config.generations == 0


@pytest.mark.parametrize("flag, level", [("-v", 1), ("--verbose", 1), ("-q", -1), ("--quiet", -1)])
def test_verbosity(flag, level):
    """
    Test: -v sube el detalle del log y -q lo baja.
    """
    assert parse_command(["gen", flag]).verbosity == level


def test_config_file_and_flag_precedence(tmp_path):
    """
    Test: el archivo --config da valores y los flags explícitos lo pisan.
    """
    path = tmp_path / "gen.cfg"
    path.write_text("seed = 21\ndrillholes = 9\n", encoding="utf-8")
    cmd = parse_command(["gen", "--config", str(path), "--seed", "5"])
    assert cmd.config.seed == 5
    assert cmd.config.drillholes == 9


def test_config_file_supplies_required_options(tmp_path):
    """
    Test: los archivos obligatorios también pueden venir del archivo de configuración.
    """
    path = tmp_path / "pit.cfg"
    path.write_text("model = out/model.csv\neconomics = out/economics.txt\n", encoding="utf-8")
    cmd = parse_command(["pit", "--config", str(path)])
    assert cmd.config.model == Path("out/model.csv")
    assert cmd.config.economics == Path("out/economics.txt")
