import argparse
import logging
import time
from pathlib import Path
from typing import Dict, List

import analysis
import evo
import olsr
import schema
import sim
from commands.utils import runtime
from errors import InputError
from scenario import load_scenario

logger = logging.getLogger(__name__)


def int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("worker counts must be >= 1")
    return values


def register(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="Measure speedup and efficiency of the evaluation pool")
    parser.add_argument("--workers", type=int_list, default=[1], help="Worker counts, e.g. 1,2,4,8")
    parser.add_argument("--reps", type=int, default=3, help="Timed repetitions per worker count")
    parser.add_argument("--scenario", type=Path, help="Tuning workload scenario; synthetic fitness when omitted")
    parser.add_argument("--pop", type=int, default=24)
    parser.add_argument("--gens", type=int, default=5)
    parser.add_argument("--pad-ms", type=float, default=0.0, help="Minimum wall time per evaluation")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if args.reps < 1:
        raise InputError("--reps must be >= 1")
    counts = sorted(set(args.workers) | {1})
    pad = args.pad_ms / 1000.0

    with runtime.RunContext("bench", args, master_seed=args.seed) as ctx:
        if args.scenario is not None:
            scenario = load_scenario(ctx.add_input(args.scenario))
            fitness_ctx = evo.calibrate_context(scenario, sim.DEFAULT_NIC, seed=args.seed)
            evaluator = evo.SimulationEvaluator(scenario, sim.DEFAULT_NIC, fitness_ctx, pad_seconds=pad)
        else:
            evaluator = evo.SyntheticEvaluator(olsr.encode_config(olsr.energy_aware_default()), pad_seconds=pad)

        timings: Dict[int, List[float]] = {}
        best_by_count: Dict[int, float] = {}
        for m in counts:
            settings = schema.GaSettings(pop_size=args.pop, generations=args.gens, workers=m, master_seed=args.seed)
            timings[m] = []
            for _ in range(args.reps):
                started = time.perf_counter()
                result = evo.evolve(settings, evaluator=evaluator)
                timings[m].append(time.perf_counter() - started)
            best_by_count[m] = result.best.f
            logger.info(f"m={m}: mean {sum(timings[m]) / len(timings[m]):.3f}s over {args.reps} runs")

        if len(set(best_by_count.values())) > 1:
            logger.warning(f"best fitness differs across worker counts: {best_by_count}")
        ctx.write_frame("bench.csv", analysis.BenchResult.from_timings(timings).to_frame())
    return 0
