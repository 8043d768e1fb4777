import json
import logging
import os
from pathlib import Path

import pandas as pd

from es_service.runners import RunRecord

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
CSV_COLUMNS = ["iteration", "episodes", "cost", "best_cost", "wall_ms", "seed", "drs_rollouts"]
MANIFEST_NAME = "manifest.json"


def seed_csv_path(run_dir, seed: int) -> Path:
    return Path(run_dir) / f"seed_{seed}.csv"


class RunRecorder:
    """
    Streams the records of one seed into seed_<seed>.csv.

    The header is written on creation and every record is appended as soon as
    it arrives, so a failed run leaves a valid partial CSV behind.
    """

    def __init__(self, run_dir, seed: int, record_wall_time: bool = False):
        self.path = seed_csv_path(run_dir, seed)
        self.record_wall_time = record_wall_time
        self.rows = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(columns=CSV_COLUMNS).to_csv(self.path, index=False)

    def append(self, record: RunRecord):
        """
        Append a single record.
        :param record:
        :return:
        """
        row = {
            "iteration": record.iteration,
            "episodes": record.episodes_used,
            "cost": record.cost,
            "best_cost": record.best_cost_so_far,
            "wall_ms": round(record.wall_ms, 3) if self.record_wall_time else 0,
            "seed": record.seed,
            "drs_rollouts": record.drs_rollouts,
        }
        pd.DataFrame([row], columns=CSV_COLUMNS).to_csv(self.path, mode="a", header=False, index=False)
        self.rows += 1

    __call__ = append


def write_manifest(run_dir, payload: dict) -> Path:
    """Writes manifest.json through a temporary file and an atomic rename."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    target = run_dir / MANIFEST_NAME
    tmp = run_dir / f".{MANIFEST_NAME}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
    os.replace(tmp, target)
    logger.info(f"Manifest written to {target}")
    return target


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
