import argparse
import logging
from pathlib import Path
from typing import Dict

import analysis
import olsr
import schema
import sim
from commands.utils import runtime
from errors import InputError
from scenario import load_scenario

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("validate", help="Compare configurations over unseen scenarios")
    parser.add_argument("--scenarios", required=True, type=Path, help="Directory of scenario JSON files")
    parser.add_argument("--config", action="append", type=Path, default=[], help="OlsrConfig JSON (repeatable)")
    parser.add_argument("--no-rfc", action="store_true", help="Leave the RFC defaults out of the report")
    parser.add_argument("--energy-aware", action="store_true", help="Add the published energy-aware tuning")
    parser.add_argument("--runs", type=int, default=1, help="Simulation seeds per cell, derived from --seed")
    runtime.add_common_flags(parser, workers=True)
    parser.set_defaults(handler=run)


def scenario_files(directory: Path):
    if not directory.is_dir():
        raise InputError(f"{directory} is not a directory")
    files = sorted(p for p in directory.glob("*.json") if p.name != runtime.MANIFEST_NAME)
    if not files:
        raise InputError(f"no scenario files in {directory}")
    return files


def run(args: argparse.Namespace) -> int:
    files = scenario_files(args.scenarios)
    with runtime.RunContext("validate", args, master_seed=args.seed) as ctx:
        configs: Dict[str, schema.OlsrConfig] = {}
        if not args.no_rfc:
            configs["rfc"] = olsr.rfc_default()
        if args.energy_aware:
            configs["energy-aware"] = olsr.energy_aware_default()
        for path in args.config:
            config_id = path.stem
            while config_id in configs:
                config_id += "'"
            configs[config_id] = runtime.load_config(ctx.add_input(path))
        if not configs:
            raise InputError("nothing to validate: pass --config or keep the RFC defaults")

        scenarios = [load_scenario(ctx.add_input(path)) for path in files]
        seeds = [args.seed + k for k in range(max(args.runs, 1))]
        report = analysis.validation_report(
            configs, scenarios, sim.DEFAULT_NIC, seeds, workers=args.workers,
            reference="rfc" if "rfc" in configs else None,
        )
        ctx.write_frame("cells.csv", report.cells)
        ctx.write_text("report.csv", report.to_csv())
        ctx.write_text("report.txt", report.to_text())
        for row in report.cells.to_dict(orient="records"):
            ctx.record_metrics(row["scenario_id"], row["config_id"], int(row["seed"]), row)
    return 0
