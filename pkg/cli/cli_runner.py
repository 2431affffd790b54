# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from cli.cli_exceptions import CommandExecError
from cli.command_parser import Command
from cli import report_view
from config.run_config import RunConfig
from core.block_io import (
    load_block_model,
    load_calendar,
    load_economics,
    load_samples,
    save_block_model,
    save_calendar,
    save_economics,
    save_samples,
    write_key_values,
    write_table,
)
from core.block_model import BlockModel, Calendar, EconomicModel, block_values, derive_precedence
from core.constants import STRATEGY_LABELS
from core.evolution import EvolutionResult, brute_force_best, evolve
from core.exceptions import MineOptException
from core.grade_ensemble import (
    Ensemble,
    UncertaintyField,
    aggregate,
    build_ensemble,
    load_ensemble,
    load_uncertainty,
    save_ensemble,
    save_uncertainty,
    uncertainty_field,
    uncertainty_summary,
)
from core.pit_optimization import (
    ShellAssignment,
    default_revenue_factors,
    load_shells,
    near_cutoff_tonnage,
    nested_shells,
    save_shells,
)
from core.scheduler import (
    Schedule,
    load_schedule_records,
    npv,
    records_for_units,
    route_extraction,
    save_chromosome,
    save_schedule,
    validate,
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
    ReplayResult,
    Summary,
    feasibility,
    period_stats,
    reclassification,
    remaining_npv,
    replay_ensemble,
    summary,
    write_feasibility,
    write_period_stats,
    write_profit_by_member,
    write_reclassified,
    write_remaining_npv,
    write_remaining_npv_quantiles,
    write_summary,
)

logger = logging.getLogger(__name__)

COMPARE_ORDER = ("lazy", "file", "worst_case", "levelled")
EVALUATE_LABEL = "Evaluated schedule"


@dataclass
class Evaluation:
    """Resultado de reevaluar un cronograma sobre el ensamble."""

    base: Schedule
    results: ReplayResult
    summary: Summary
    extra: Dict[str, object]


class CommandRunner:
    """
    Ejecuta un Command ya parseado. Devuelve el mensaje final para stdout;
    los datos van a archivos bajo `config.out`.
    Los errores de dominio y de E/S se convierten en CommandExecError.
    """

    def execute(self, cmd: Command) -> str:
        handlers = {
            "gen": self._do_gen,
            "ensemble": self._do_ensemble,
            "pit": self._do_pit,
            "stage": self._do_stage,
            "schedule": self._do_schedule,
            "evaluate": self._do_evaluate,
            "compare": self._do_compare,
        }
        handler = handlers.get(cmd.name)
        if handler is None:
            raise CommandExecError(f"Subcomando no soportado: {cmd.name}")
        try:
            cmd.config.out.mkdir(parents=True, exist_ok=True)
            return handler(cmd.config)
        except MineOptException as ex:
            raise CommandExecError(str(ex)) from ex
        except OSError as ex:
            raise CommandExecError(f"Error de E/S: {ex}") from ex

    # ------------------ Subcomandos ------------------

    def _do_gen(self, cfg: RunConfig) -> str:
        size = (cfg.block_size,) * 3
        model, samples = generate_synthetic_deposit(cfg.seed, cfg.dims, size, cfg.domains, cfg.drillholes)
        save_block_model(model, cfg.out / "model.csv")
        save_samples(samples, cfg.out / "samples.csv")
        save_economics(EconomicModel.reference(cfg.domains), cfg.out / "economics.txt")
        return (
            f"Yacimiento sintético (seed {cfg.seed}) en {cfg.out}: "
            f"{model.n_blocks} bloques, {len(samples)} muestras de {cfg.drillholes} sondajes."
        )

    def _do_ensemble(self, cfg: RunConfig) -> str:
        samples = load_samples(cfg.samples)
        geometry = load_block_model(cfg.model)
        interp = cfg.interpolator_config()
        ensemble = build_ensemble(samples, interp, cfg.members, cfg.seed, geometry)
        agg = aggregate(ensemble)
        field = uncertainty_field(ensemble, agg)
        save_ensemble(ensemble, cfg.out, interp, agg)
        save_uncertainty(field, agg, cfg.out / "uncertainty.csv")
        stats = uncertainty_summary(field, cfg.std_threshold)
        logger.info("Incertidumbre: %s", stats)
        return (
            f"Ensamble de {len(ensemble)} miembros ({interp.method.value}) en {cfg.out}.\n"
            + report_view.render_key_values(stats.items())
        )

    def _do_pit(self, cfg: RunConfig) -> str:
        model = load_block_model(cfg.model)
        econ = load_economics(cfg.economics)
        shells = self._shells(model, econ, cfg)
        save_shells(shells, model, cfg.out / "shells.csv")
        calendar = self._calendar(cfg, model, shells)
        entries = self._pit_entries(model, econ, shells)
        write_key_values(cfg.out / "pit.txt", entries)
        entries.append(("periods", calendar.t_max))
        return f"Pit final en {cfg.out}:\n" + report_view.render_key_values(entries)

    def _do_stage(self, cfg: RunConfig) -> str:
        model = load_block_model(cfg.model)
        shells = load_shells(cfg.shells, model)
        econ = load_economics(cfg.economics) if cfg.economics is not None else None
        field = load_uncertainty(cfg.uncertainty, model) if cfg.uncertainty is not None else None
        staging = self._staging(cfg.strategy, cfg, model, shells, econ, field)
        save_staging(staging, model, cfg.out / "staging.csv")
        head = f"Etapas '{staging.strategy}' ({staging.k}) en {cfg.out / 'staging.csv'}"
        if staging.fallback:
            head += " [sin mineral incierto: se usó lazy]"
        return head + "\n" + report_view.render_stage_tonnage(staging.tonnage_by_stage(model))

    def _do_schedule(self, cfg: RunConfig) -> str:
        model = load_block_model(cfg.model)
        staging = load_staging(cfg.staging_file, model)
        calendar = load_calendar(cfg.calendar)
        econ = load_economics(cfg.economics)
        result, oracle_npv = self._optimise(cfg, model, staging, calendar, econ)
        self._write_schedule(cfg.out, result, oracle_npv)
        lines = [
            f"Cronograma en {cfg.out}: VAN {report_view.format_money(result.npv)} "
            f"({len(result.best_order)} unidades, {result.evaluations} evaluaciones)",
            report_view.render_trace(result.trace),
        ]
        if oracle_npv is not None:
            lines.append(f"Oráculo: VAN {report_view.format_money(oracle_npv)}")
        return "\n".join(lines)

    def _do_evaluate(self, cfg: RunConfig) -> str:
        ensemble, agg, _ = load_ensemble(cfg.ensemble_dir)
        staging = load_staging(cfg.staging_file, agg)
        calendar = load_calendar(cfg.calendar)
        econ = load_economics(cfg.economics)
        units, _ = build_units(agg, staging, econ=econ)
        records = records_for_units(load_schedule_records(cfg.schedule), units, cfg.schedule)
        base = route_extraction(records, units, agg, calendar, econ, cfg.stockpiling)
        evaluation = self._evaluate(cfg.out, base, ensemble, agg, staging, calendar, econ)
        return "\n".join((
            f"Reevaluación sobre {len(ensemble)} miembros en {cfg.out}",
            report_view.render_period_stats(period_stats(evaluation.results)),
            report_view.render_remaining_npv(remaining_npv(evaluation.results)),
            report_view.render_comparison([(EVALUATE_LABEL, evaluation.summary)]),
        ))

    def _do_compare(self, cfg: RunConfig) -> str:
        ensemble, agg, _ = load_ensemble(cfg.ensemble_dir)
        econ = load_economics(cfg.economics)
        field = uncertainty_field(ensemble, agg)
        shells = self._shells(agg, econ, cfg)
        calendar = self._calendar(cfg, agg, shells)

        rows: List[Tuple[str, Summary]] = []
        table: List[Dict[str, object]] = []
        for strategy in COMPARE_ORDER:
            if strategy == "file" and cfg.staging_file is None:
                continue
            out = cfg.out / strategy
            out.mkdir(parents=True, exist_ok=True)
            staging = self._staging(strategy, cfg, agg, shells, econ, field)
            save_staging(staging, agg, out / "staging.csv")
            result, _ = self._optimise(cfg, agg, staging, calendar, econ)
            self._write_schedule(out, result, None)
            evaluation = self._evaluate(out, result.schedule, ensemble, agg, staging, calendar, econ)
            label = self._label(strategy)
            rows.append((label, evaluation.summary))
            table.append({
                "strategy": strategy,
                "optimised_npv": result.npv,
                "average_npv": evaluation.summary.average_npv,
                "total_profit_range": evaluation.summary.total_profit_range,
                "fallback": int(staging.fallback),
            })
            logger.info("%s", report_view.summary_line(label, evaluation.summary))

        bullets = report_view.render_comparison(rows)
        (cfg.out / "comparison.txt").write_text(bullets + "\n", encoding="utf-8")
        write_table(cfg.out / "comparison.csv", pd.DataFrame(table))
        return f"Comparación de estrategias ({len(ensemble)} miembros) en {cfg.out}:\n{bullets}"

    # ------------------ Pasos compartidos ------------------

    @staticmethod
    def _label(strategy: str) -> str:
        return STRATEGY_LABELS.get(strategy, strategy)

    @staticmethod
    def _shells(model: BlockModel, econ: EconomicModel, cfg: RunConfig) -> ShellAssignment:
        factors = cfg.revenue_factors or default_revenue_factors(cfg.factor_count)
        return nested_shells(model, econ, derive_precedence(model), factors)

    @staticmethod
    def _calendar(cfg: RunConfig, model: BlockModel, shells: ShellAssignment) -> Calendar:
        """Calendario dado, o uno de escritorio proporcional al tonelaje del pit."""
        if cfg.calendar is not None:
            return load_calendar(cfg.calendar)
        pit_tonnage = float(model.tonnage.ravel()[shells.pit].sum())
        calendar = Calendar.desk_scale(pit_tonnage, cfg.periods)
        save_calendar(calendar, cfg.out / "calendar.csv")
        return calendar

    @staticmethod
    def _pit_entries(model: BlockModel, econ: EconomicModel, shells: ShellAssignment) -> List[Tuple[str, object]]:
        pit = shells.pit
        return [
            ("pit_blocks", int(pit.sum())),
            ("pit_tonnage", float(model.tonnage.ravel()[pit].sum())),
            ("pit_value", float(block_values(model, econ).best[pit].sum())),
            ("nonempty_shells", len(shells.nonempty_shells())),
            ("near_cutoff_tonnes", near_cutoff_tonnage(model, pit, econ)),
        ]

    @staticmethod
    def _staging(strategy: str, cfg: RunConfig, model: BlockModel, shells: ShellAssignment,
                 econ: Optional[EconomicModel], field: Optional[UncertaintyField]) -> Staging:
        if strategy == "lazy":
            return lazy_staging(shells, model, cfg.stages)
        if strategy == "file":
            return load_staging(cfg.staging_file, model, shells.pit)
        if econ is None or field is None:
            raise CommandExecError(f"la estrategia '{strategy}' necesita economía e incertidumbre")
        if strategy == "worst_case":
            return worst_case_staging(shells, field, econ, model, cfg.stages, cfg.std_threshold)
        return levelled_staging(shells, field, econ, model, cfg.stages)

    @staticmethod
    def _optimise(cfg: RunConfig, model: BlockModel, staging: Staging, calendar: Calendar,
                  econ: EconomicModel) -> Tuple[EvolutionResult, Optional[float]]:
        units, precedence = build_units(model, staging, econ=econ, stage_order=cfg.stage_order)
        result = evolve(units, precedence, model, calendar, econ, cfg.ea_config(), cfg.stockpiling)
        violations = validate(result.schedule, units, precedence, calendar)
        for violation in violations:
            logger.warning("Violación en el cronograma: %s", violation)
        pending = result.schedule.unmined_units(len(units))
        if pending:
            logger.warning("%d unidades quedan sin minar en %d períodos", len(pending), calendar.t_max)
        oracle_npv = None
        if cfg.oracle:
            oracle = brute_force_best(units, precedence, model, calendar, econ, cfg.stockpiling)
            oracle_npv = oracle.npv
            gap = oracle.npv - result.npv
            logger.info("Oráculo %s, brecha %.6g", oracle.order, gap)
        return result, oracle_npv

    @staticmethod
    def _write_schedule(out: Path, result: EvolutionResult, oracle_npv: Optional[float]) -> None:
        save_schedule(result.schedule, out / "schedule.csv")
        save_chromosome(result.best_order, out / "chromosome.txt")
        trace = pd.DataFrame({"generation": np.arange(len(result.trace)), "best_npv": result.trace})
        write_table(out / "fitness_trace.csv", trace)
        entries: List[Tuple[str, object]] = [
            ("npv", float(result.npv)),
            ("units", len(result.best_order)),
            ("evaluations", int(result.evaluations)),
        ]
        if oracle_npv is not None:
            entries.append(("oracle_npv", float(oracle_npv)))
        write_key_values(out / "schedule.txt", entries)

    @staticmethod
    def _evaluate(out: Path, base: Schedule, ensemble: Ensemble, agg: BlockModel, staging: Staging,
                  calendar: Calendar, econ: EconomicModel) -> Evaluation:
        """Reevalúa `base` sobre cada miembro y escribe todos los reportes en `out`."""
        results = replay_ensemble(base, ensemble, calendar, econ)
        labels = (AGGREGATE_LABEL,) + results.labels
        cashflows = np.vstack([base.cashflows, results.cashflows])
        everyone = ReplayResult(labels, cashflows, econ.discount_rate)

        write_profit_by_member(labels, cashflows, out / "profit_by_member.csv")
        write_period_stats(period_stats(results), out / "period_stats.csv")
        write_remaining_npv(remaining_npv(everyone), out / "remaining_npv.csv")
        write_remaining_npv_quantiles(remaining_npv(results), out / "remaining_npv_quantiles.csv")

        reclassified = np.stack([reclassification(base, member, agg, econ) for member in ensemble.members])
        write_reclassified(results.labels, reclassified, out / "reclassified_tonnes.csv")
        report = feasibility(base, calendar)
        write_feasibility(report, out / "feasibility.csv")

        member_reports = [feasibility(s, calendar) for s in results.schedules]
        first_positive = report.first_positive_period
        extra: Dict[str, object] = {
            "members": len(ensemble),
            "aggregate_npv": npv(base, econ),
            "negative_cashflow_periods": report.negative_periods,
            "first_positive_period": first_positive if first_positive is not None else "none",
            "mean_negative_cashflow_periods": float(np.mean([r.negative_periods for r in member_reports])),
            "mean_plant_utilisation": float(report.utilisation.mean()),
            "reclassified_tonnes_mean": float(reclassified.sum(axis=1).mean()),
            "near_cutoff_tonnes": near_cutoff_tonnage(agg, staging.pit, econ),
        }
        result = summary(results)
        write_summary(result, out / "summary.txt", extra)
        logger.info("Reportes escritos en %s", out)
        return Evaluation(base, results, result, extra)
