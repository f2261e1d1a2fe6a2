import argparse
import logging
from pathlib import Path

import pandas as pd

import analysis
import olsr
import schema
import sim
from commands.utils import runtime
from scenario import load_scenario

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Run one OLSR simulation")
    parser.add_argument("--scenario", required=True, type=Path, help="Scenario JSON file")
    choice = parser.add_mutually_exclusive_group(required=True)
    choice.add_argument("--config", type=Path, help="OlsrConfig JSON file")
    choice.add_argument("--rfc", action="store_true", help="Use the RFC 3626 defaults")
    choice.add_argument("--energy-aware", action="store_true", help="Use the published energy-aware tuning")
    parser.add_argument("--compare-rfc", action="store_true", help="Also run the RFC defaults and report gaps")
    runtime.add_common_flags(parser)
    parser.set_defaults(handler=run)


def resolve_config(args: argparse.Namespace, ctx: runtime.RunContext):
    if args.rfc:
        return "rfc", olsr.rfc_default()
    if args.energy_aware:
        return "energy-aware", olsr.energy_aware_default()
    return args.config.stem, runtime.load_config(ctx.add_input(args.config))


def run(args: argparse.Namespace) -> int:
    with runtime.RunContext("simulate", args, master_seed=args.seed) as ctx:
        config_id, config = resolve_config(args, ctx)
        scenario = load_scenario(ctx.add_input(args.scenario))
        ctx.add_input(args.scenario.parent / f"{args.scenario.stem}.trace.csv")

        results = []
        if args.compare_rfc:
            comparison = sim.compare_against_reference(scenario, config, sim.DEFAULT_NIC, args.seed)
            results = [(config_id, comparison.metrics), ("rfc", comparison.reference)]
            gaps = {
                "gap_energy": comparison.gap_energy,
                "gap_pdr": comparison.gap_pdr,
                "gap_pdr_display_pct": None if comparison.gap_pdr is None else analysis.display_gap_pdr(comparison.gap_pdr),
            }
            ctx.write_json("gaps.json", gaps)
            logger.info(f"gap_energy={comparison.gap_energy:.4f}, gap_pdr={comparison.gap_pdr}")
        else:
            results = [(config_id, sim.run_simulation(scenario, config, sim.DEFAULT_NIC, args.seed))]

        rows = [metrics.csv_row(scenario.name, cid, args.seed) for cid, metrics in results]
        ctx.write_frame("metrics.csv", pd.DataFrame(rows, columns=schema.METRICS_CSV_COLUMNS))
        ctx.write_json("metrics.json", [
            {"config_id": cid, "scenario_id": scenario.name, "seed": args.seed, **metrics.model_dump(mode="json")}
            for cid, metrics in results
        ])
        for cid, metrics in results:
            ctx.record_metrics(scenario.name, cid, args.seed, metrics.model_dump(mode="json"))
    return 0
