"""Shared plumbing for the subcommands: environment settings, output files,
run manifests and the run ledger."""
import argparse
import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd
from dotenv import load_dotenv
from sqlalchemy.exc import SQLAlchemyError

import database
import model
import schema
from errors import InputError

load_dotenv()
logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "1.0.0"
MANIFEST_NAME = "manifest.json"
DEFAULT_OUT_DIR = "runs"


def log_level() -> str:
    return os.getenv("OLSRTUNE_LOG_LEVEL", "INFO").upper()


def output_dir(flag: Optional[str]) -> Path:
    """`--out` wins over OLSRTUNE_OUT_DIR."""
    path = Path(flag or os.getenv("OLSRTUNE_OUT_DIR", DEFAULT_OUT_DIR))
    path.mkdir(parents=True, exist_ok=True)
    return path


def add_common_flags(parser: argparse.ArgumentParser, workers: bool = False) -> None:
    parser.add_argument("--seed", type=int, default=0, help="Master seed; every random stream derives from it")
    parser.add_argument("--out", default=None, help="Output directory (default: $OLSRTUNE_OUT_DIR or ./runs)")
    if workers:
        parser.add_argument("--workers", type=int, default=1, help="Evaluation worker processes")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    try:
        with Path(path).open("rb") as stream:
            for chunk in iter(lambda: stream.read(65536), b""):
                digest.update(chunk)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    return digest.hexdigest()


def read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}")


def load_config(path: Path) -> schema.OlsrConfig:
    """Unreadable files are input errors; invalid values surface as ValidationError."""
    return schema.OlsrConfig.model_validate(read_json(path))


def _snapshot(args: argparse.Namespace) -> Dict[str, Any]:
    snapshot = {}
    for key, value in sorted(vars(args).items()):
        if callable(value) or key == "argv":
            continue
        snapshot[key] = str(value) if isinstance(value, Path) else value
    return snapshot


class RunContext:
    """Output directory, manifest and ledger row of one command invocation.

    Primary outputs are written through `write_*`; the manifest and the
    ledger carry the wall-clock data so primary outputs stay replayable.
    """

    def __init__(self, command: str, args: argparse.Namespace, master_seed: Optional[int] = None):
        self.command = command
        self.args = args
        self.master_seed = master_seed
        self.out = output_dir(getattr(args, "out", None))
        self.outputs: List[str] = []
        self.inputs: Dict[str, str] = {}
        self.started_at = datetime.now(timezone.utc)
        self._run_id: Optional[int] = None
        self._evaluations: List[model.Evaluation] = []
        self._metrics: List[model.MetricsRecord] = []
        self._engine = None

    # --------- lifecycle ---------
    def __enter__(self) -> "RunContext":
        try:
            self._engine = database.init_db(database.database_url(self.out))
            with database.get_db() as db:
                run = model.Run(
                    command=self.command,
                    master_seed=self.master_seed,
                    version=ARTIFACT_VERSION,
                    status=model.RunStatus.RUNNING,
                    out_dir=str(self.out.resolve()),
                    started_at=self.started_at,
                )
                db.add(run)
                db.commit()
                self._run_id = run.id
        except SQLAlchemyError as e:
            logger.warning(f"run ledger unavailable, continuing without it: {e}")
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        finished_at = datetime.now(timezone.utc)
        manifest = schema.RunManifest(
            command=self.command,
            argv=list(getattr(self.args, "argv", [])),
            snapshot=_snapshot(self.args),
            master_seed=self.master_seed,
            version=ARTIFACT_VERSION,
            input_digests=self.inputs,
            started_at=self.started_at,
            finished_at=finished_at,
            outputs=self.outputs,
        )
        manifest_path = self.out / MANIFEST_NAME
        manifest_path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"{self.command}: wrote {len(self.outputs)} outputs to {self.out}")
        self._close_ledger(exc_type is None, finished_at, manifest_path)

    def _close_ledger(self, succeeded: bool, finished_at: datetime, manifest_path: Path) -> None:
        if self._run_id is None:
            return
        try:
            with database.get_db() as db:
                run = db.get(model.Run, self._run_id)
                run.status = model.RunStatus.SUCCEEDED if succeeded else model.RunStatus.FAILED
                run.finished_at = finished_at
                run.manifest_path = str(manifest_path.resolve())
                for row in self._evaluations + self._metrics:
                    row.run_id = self._run_id
                db.add_all(self._evaluations + self._metrics)
                db.commit()
        except SQLAlchemyError as e:
            logger.warning(f"could not update run ledger: {e}")
        finally:
            if self._engine is not None:
                self._engine.dispose()

    # --------- inputs / outputs ---------
    def add_input(self, path: Path) -> Path:
        self.inputs[str(path)] = sha256_file(path)
        return Path(path)

    def output(self, name: str) -> Path:
        self.outputs.append(name)
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.output(name)
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        return self.write_text(name, frame.to_csv(index=False))

    def record_outputs(self, names: Iterable[str]) -> None:
        self.outputs.extend(names)

    # --------- ledger rows ---------
    def record_evaluation(self, ind) -> None:
        record = ind.fitness
        energy = record.energy if record.energy == record.energy else None  # NaN for failed evaluations
        self._evaluations.append(model.Evaluation(
            generation=ind.generation,
            index=ind.index,
            genes=[float(g) for g in ind.genes],
            f=record.f,
            f_raw=record.f_raw,
            penalized=record.penalized,
            energy=energy,
            pdr=record.pdr,
            error=record.error[:500] if record.error else None,
        ))

    def record_metrics(self, scenario_id: str, config_id: str, seed: int, metrics: Dict[str, Any]) -> None:
        self._metrics.append(model.MetricsRecord(
            scenario_id=scenario_id, config_id=config_id, seed=seed, metrics=metrics,
        ))
