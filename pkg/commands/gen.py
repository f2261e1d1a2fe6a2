import argparse
import logging

from pydantic import ValidationError

import schema
from commands.utils import runtime
from errors import InputError
from scenario import PRESETS, generate_grid_scenario, generate_validation_suite, preset_grid, save_scenario

logger = logging.getLogger(__name__)


def _area(text: str) -> schema.Area:
    try:
        width, height = (float(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"area must look like 600x400, got {text!r}")
    return schema.Area(width=width, height=height)


def register(subparsers) -> None:
    parser = subparsers.add_parser("gen", help="Generate Manhattan-grid scenarios")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Scenario class preset (U1, U2, U3)")
    parser.add_argument("--density", type=int, default=0, help="Preset vehicle-density variant")
    parser.add_argument("--area", type=_area, help="WIDTHxHEIGHT in metres")
    parser.add_argument("--vehicles", type=int, help="Number of vehicles")
    parser.add_argument("--flows", type=int, help="Number of CBR flows")
    parser.add_argument("--rows", type=int, default=5, help="Horizontal streets")
    parser.add_argument("--cols", type=int, default=5, help="Vertical streets")
    parser.add_argument("--speed-min", type=float, default=5.0)
    parser.add_argument("--speed-max", type=float, default=15.0)
    parser.add_argument("--pause", type=float, default=2.0, help="Pause at intersections (s)")
    parser.add_argument("--duration", type=float, default=180.0, help="Simulated seconds")
    parser.add_argument("--radio-range", type=float, default=500.0)
    parser.add_argument("--loss", type=float, default=0.0, help="Loss probability at the edge of the radio range")
    parser.add_argument("--rate", type=float, default=4.0, help="CBR packets per second")
    parser.add_argument("--packet-size", type=int, default=512)
    parser.add_argument("--flow-start", type=float, default=60.0)
    parser.add_argument("--flow-duration", type=float, default=60.0)
    parser.add_argument("--name", default="scenario")
    parser.add_argument("--suite", type=int, default=0, help="Write N validation scenarios over U2 and U3 instead")
    runtime.add_common_flags(parser)
    parser.set_defaults(handler=run, usage_error=parser.error)


def _settings(args: argparse.Namespace):
    """Flag bundle -> (grid spec or None, flow count, flow template, loss model)."""
    flow_params = schema.FlowTemplate(
        packet_size=args.packet_size, rate=args.rate, start=args.flow_start, duration=args.flow_duration
    )
    loss = schema.LossModel(kind=schema.LossKind.BERNOULLI if args.loss > 0 else schema.LossKind.IDEAL,
                            p_at_max_range=args.loss)
    if args.suite:
        return None, 0, flow_params, loss

    overrides = dict(speed_min=args.speed_min, speed_max=args.speed_max, pause_time=args.pause,
                     duration=args.duration)
    if args.preset:
        spec, flow_count = preset_grid(args.preset, args.density, **overrides)
        if args.flows is not None:
            flow_count = args.flows
    else:
        spec = schema.GridSpec(area=args.area, rows=args.rows, cols=args.cols,
                               vehicle_count=args.vehicles, **overrides)
        flow_count = args.flows
    return spec, flow_count, flow_params, loss


def run(args: argparse.Namespace) -> int:
    if args.suite < 0:
        raise InputError("--suite must be positive")
    if args.radio_range <= 0:
        raise InputError("--radio-range must be positive")
    if not args.suite and not args.preset:
        missing = [flag for flag, value in (("--area", args.area), ("--vehicles", args.vehicles),
                                            ("--flows", args.flows)) if value is None]
        if missing:
            args.usage_error(f"{', '.join(missing)} required without --preset")
    try:
        spec, flow_count, flow_params, loss = _settings(args)
    except ValidationError as e:
        raise InputError(f"invalid generation flags: {e}")

    with runtime.RunContext("gen", args, master_seed=args.seed) as ctx:
        if args.suite:
            scenarios = generate_validation_suite(args.suite, args.seed, flow_params)
        else:
            scenarios = [generate_grid_scenario(
                spec, flow_count, flow_params, args.seed,
                radio_range=args.radio_range, loss_model=loss,
                scenario_class=args.preset or "", name=args.name,
            )]

        for item in scenarios:
            path = save_scenario(item, ctx.out)
            ctx.record_outputs([path.name, f"{item.name}.trace.csv"])
            logger.info(f"wrote {path} ({item.node_count} vehicles, {len(item.flows)} flows)")
    return 0
