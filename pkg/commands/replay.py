import argparse
import logging
from pathlib import Path
from typing import List

import schema
from commands.utils import runtime
from errors import InputError

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("replay", help="Re-run the command recorded in a manifest")
    parser.add_argument("--manifest", required=True, type=Path)
    parser.add_argument("--out", required=True, help="Fresh output directory for the replayed run")
    parser.set_defaults(handler=run)


def strip_out(argv: List[str]) -> List[str]:
    stripped, skip = [], False
    for token in argv:
        if skip:
            skip = False
        elif token == "--out":
            skip = True
        elif not token.startswith("--out="):
            stripped.append(token)
    return stripped


def run(args: argparse.Namespace) -> int:
    from main import main  # main imports this module

    manifest = schema.RunManifest.model_validate(runtime.read_json(args.manifest))
    if manifest.command == "replay" or not manifest.argv:
        raise InputError(f"{args.manifest} does not record a replayable command")
    if manifest.version != runtime.ARTIFACT_VERSION:
        logger.warning(f"manifest written by version {manifest.version}, replaying with {runtime.ARTIFACT_VERSION}")
    argv = strip_out(manifest.argv) + ["--out", args.out]
    logger.info(f"replaying {manifest.command} into {args.out}")
    return main(argv)
