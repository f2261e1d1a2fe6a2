import argparse
import logging
from pathlib import Path
from typing import List

import evo
import olsr
import schema
import sim
from commands.utils import runtime
from scenario import load_scenario

logger = logging.getLogger(__name__)


def float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def register(subparsers) -> None:
    parser = subparsers.add_parser("tune", help="Tune OLSR parameters with the parallel GA")
    parser.add_argument("--scenario", required=True, type=Path)
    parser.add_argument("--pop", type=int, default=24, help="Population size (even)")
    parser.add_argument("--gens", type=int, default=100, help="Generations")
    parser.add_argument("--pc", type=float, default=0.7, help="Crossover probability")
    parser.add_argument("--pm", type=float, default=0.25, help="Mutation probability")
    parser.add_argument("--elitism", type=int, default=1)
    parser.add_argument("--fixed-seed", action="store_true", help="Evaluate every individual with the calibration seed")
    parser.add_argument("--pad-ms", type=float, default=0.0, help="Minimum wall time per evaluation")
    parser.add_argument("--grid", action="store_true", help="Run the p_c x p_m parameter-setting study instead")
    parser.add_argument("--pc-values", type=float_list, default=[0.5, 0.7, 0.9])
    parser.add_argument("--pm-values", type=float_list, default=[0.06125, 0.125, 0.25])
    parser.add_argument("--reps", type=int, default=1, help="Repetitions per grid cell")
    runtime.add_common_flags(parser, workers=True)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    settings = schema.GaSettings(
        pop_size=args.pop, p_c=args.pc, p_m=args.pm, generations=args.gens,
        workers=args.workers, master_seed=args.seed, elitism=args.elitism,
    )
    with runtime.RunContext("tune", args, master_seed=args.seed) as ctx:
        scenario = load_scenario(ctx.add_input(args.scenario))
        ctx.add_input(args.scenario.parent / f"{args.scenario.stem}.trace.csv")
        fitness_ctx = evo.calibrate_context(scenario, sim.DEFAULT_NIC, seed=args.seed)
        ctx.write_json("context.json", fitness_ctx.model_dump())
        evaluator = evo.SimulationEvaluator(
            scenario, sim.DEFAULT_NIC, fitness_ctx, olsr.DEFAULT_SPACE, pad_seconds=args.pad_ms / 1000.0
        )

        if args.grid:
            table = evo.parameter_setting_grid(
                args.pc_values, args.pm_values, args.reps, settings, olsr.DEFAULT_SPACE,
                scenario, sim.DEFAULT_NIC, fitness_ctx, evaluator=evaluator, fixed_seed=args.fixed_seed,
            )
            ctx.write_frame("grid.csv", table)
            return 0

        result = evo.evolve(
            settings, olsr.DEFAULT_SPACE, scenario, sim.DEFAULT_NIC, fitness_ctx,
            evaluator=evaluator,
            seed_policy=evo.SeedPolicy(args.seed, args.fixed_seed),
            on_evaluated=ctx.record_evaluation,
        )
        best = result.best
        ctx.write_json("best_config.json", best.config(olsr.DEFAULT_SPACE).model_dump())
        ctx.write_frame("history.csv", result.history_frame())
        logger.info(
            f"best F={best.f:.4f} (energy {best.fitness.energy:.2f} mJ, PDR {best.fitness.pdr}) "
            f"after {result.evaluations} evaluations"
        )
    return 0
