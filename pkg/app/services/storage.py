from __future__ import annotations

import asyncio
import csv
import io
import json
import logging
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple

from motor.motor_asyncio import AsyncIOMotorClient

from app.core.config import settings
from app.schemas.decoding import DepolarizingParams
from app.schemas.experiments import ExperimentResult
from app.services.channel import marginal_flip_prob

logger = logging.getLogger(__name__)

# Snapshot tasks stay referenced here until they finish.
_background_tasks: Set["asyncio.Task[None]"] = set()

CSV_COLUMNS = (
    "code",
    "n",
    "k",
    "p",
    "eps_x",
    "alg",
    "sched",
    "post",
    "trials",
    "logical_errors",
    "ler",
    "ci_lo",
    "ci_hi",
    "lambda_ave",
    "mp_converged_frac",
    "error_type",
)


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def _num(value: Optional[float]) -> str:
    if value is None:
        return ""
    return "%.10g" % value


def result_rows(result: ExperimentResult) -> List[Dict[str, str]]:
    rows = []
    for point in result.points:
        rows.append(
            {
                "code": result.code,
                "n": str(result.n),
                "k": str(result.k),
                "p": _num(point.p),
                "eps_x": _num(marginal_flip_prob(DepolarizingParams.symmetric(point.p), "X")),
                "alg": result.decoder.label,
                "sched": result.decoder.schedule,
                "post": result.post_label,
                "trials": str(point.trials),
                "logical_errors": str(point.logical_errors),
                "ler": _num(point.ler),
                "ci_lo": _num(point.ci_lo),
                "ci_hi": _num(point.ci_hi),
                "lambda_ave": _num(point.lambda_ave),
                "mp_converged_frac": _num(point.mp_converged_frac),
                "error_type": result.error_type,
            }
        )
    return rows


def rows_to_csv(rows: List[Dict[str, str]]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def result_json(result: ExperimentResult) -> str:
    return json.dumps(result.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def result_stem(result: ExperimentResult) -> str:
    raw = f"{result.code}_{result.error_type}_{result.decoder.label}_{result.decoder.schedule}_{result.post_label}"
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", raw)


def write_results(result: ExperimentResult, out: str | Path) -> Tuple[Path, Path]:
    """Write the JSON summary and the CSV table for one experiment.

    ``out`` ending in ``.json`` or ``.csv`` names the file pair directly;
    any other path is a directory receiving ``<stem>.json`` and ``<stem>.csv``.
    """
    out = Path(out)
    if out.suffix in (".json", ".csv"):
        base = out.with_suffix("")
    else:
        base = out / result_stem(result)
    base.parent.mkdir(parents=True, exist_ok=True)
    json_path = base.with_suffix(".json")
    csv_path = base.with_suffix(".csv")
    json_path.write_text(result_json(result), encoding="utf-8")
    csv_path.write_text(rows_to_csv(result_rows(result)), encoding="utf-8")
    logger.info("results written to %s and %s", json_path, csv_path)
    return json_path, csv_path


def read_csv_rows(path: Path) -> List[Dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _sort_key(row: Dict[str, str]) -> Tuple[str, float, str, str, str]:
    try:
        p = float(row.get("p", "nan"))
    except ValueError:
        p = float("nan")
    return row.get("code", ""), p, row.get("alg", ""), row.get("sched", ""), row.get("post", "")


def merge_reports(directory: str | Path) -> List[Dict[str, str]]:
    """Rows of every CSV under ``directory``, sorted by code then p."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such results directory: {directory}")
    rows: List[Dict[str, str]] = []
    for path in sorted(directory.glob("*.csv")):
        rows.extend(read_csv_rows(path))
    return sorted(rows, key=_sort_key)


def format_table(rows: List[Dict[str, str]]) -> str:
    if not rows:
        return "(no results)"
    widths = {c: max(len(c), *(len(r.get(c, "")) for r in rows)) for c in CSV_COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in CSV_COLUMNS)]
    for row in rows:
        lines.append("  ".join(row.get(c, "").ljust(widths[c]) for c in CSV_COLUMNS))
    return "\n".join(lines)


class MongoStorage:
    """Optional snapshot store for API results; a no-op unless MONGO_ENABLED."""

    def __init__(self) -> None:
        self._client: Optional[AsyncIOMotorClient] = None
        self._db = None

    def _get_client(self) -> Optional[AsyncIOMotorClient]:
        if not settings.mongo_enabled:
            return None
        if self._client is None:
            self._client = AsyncIOMotorClient(settings.mongo_uri)
            self._db = self._client[settings.mongo_db]
        return self._client

    async def close(self) -> None:
        if self._client is not None:
            self._client.close()

    async def save_snapshot(self, collection: str, payload: Dict[str, Any]) -> None:
        if not settings.mongo_enabled:
            return
        self._get_client()
        if self._db is None:
            return
        doc = {"createdAt": _now_iso(), **payload}
        try:
            await self._db[collection].insert_one(doc)
        except Exception:
            logger.warning("snapshot to collection %s failed", collection, exc_info=True)

    def save_snapshot_background(self, collection: str, payload: Dict[str, Any]) -> None:
        if not settings.mongo_enabled:
            return
        task = asyncio.create_task(self.save_snapshot(collection, payload))
        _background_tasks.add(task)
        task.add_done_callback(_background_tasks.discard)
