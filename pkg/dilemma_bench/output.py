"""
Output writing for Dilemma Bench: JSONL streams, CSV tables, JSON documents
and the console summary.
"""

import csv
import json
import logging
import os
import threading
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence

# Configure logging
logger = logging.getLogger(__name__)


class JsonlWriter:
    """
    Single writer for one JSONL stream; safe to share between threads.

    Args:
        path (str): File to write. Parent directories are created.
    """

    def __init__(self, path: str):
        self.path = path
        self.count = 0
        self._lock = threading.Lock()
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._file = open(path, "w", encoding="utf-8")

    def write(self, record: Dict[str, Any]) -> None:
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            self._file.write(line + "\n")
            self._file.flush()
            self.count += 1

    def close(self) -> None:
        with self._lock:
            if not self._file.closed:
                self._file.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_jsonl(path: str) -> Iterator[Dict[str, Any]]:
    """
    Yield the records of a JSONL file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If a line is not valid JSON.
    """
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {e}")


def write_jsonl(path: str, records: Iterable[Dict[str, Any]]) -> int:
    with JsonlWriter(path) as writer:
        for record in records:
            writer.write(record)
        return writer.count


def write_json(path: str, data: Any) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    logger.info(f"Report written to {path}")


def _csv_value(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return value


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """
    Write a CSV table with a fixed header. Missing values are empty cells.

    Args:
        path (str): Path to output file.
        header (Sequence[str]): Column names.
        rows (Iterable[Sequence]): Data rows in header order.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_value(v) for v in row])
    logger.info(f"Report written to {path}")


def dict_rows(records: Iterable[Dict[str, Any]], header: Sequence[str]) -> List[List[Any]]:
    return [[record.get(column) for column in header] for record in records]


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return "undefined"
    return f"{value:+.3f}" if isinstance(value, float) else str(value)


def generate_text_summary(manifest: Dict[str, Any], reports: Optional[Dict[str, Dict[str, Any]]] = None) -> str:
    """
    Generate a text summary of a run.

    Args:
        manifest (Dict[str, Any]): Run manifest.
        reports (Dict[str, dict], optional): Metric reports keyed by protocol.

    Returns:
        str: Text summary.
    """
    lines = []

    # Add header
    lines.append("=" * 80)
    lines.append("DILEMMA BENCH RUN SUMMARY")
    lines.append("=" * 80)
    lines.append("")

    # Add run details
    lines.append(f"Experiments: {', '.join(manifest.get('experiments', []))}")
    lines.append(f"Seed: {manifest.get('seeds', {}).get('experiment')}")
    lines.append(f"Config hash: {manifest.get('config_hash')}")
    models = manifest.get("models") or []
    if models:
        lines.append(f"Models: {', '.join(models)}")
    lines.append("")

    counts = manifest.get("counts", {})
    if counts:
        lines.append("Counts:")
        lines.append("-" * 40)
        for name, value in counts.items():
            lines.append(f"  {name}: {value}")
        lines.append("")

    for kind, report in (reports or {}).items():
        lines.append(f"Metrics ({kind}):")
        lines.append("-" * 40)
        for name in ("delta_reg", "delta_reg_episode_mean", "rho_drop", "g_rep", "e_omega", "control_rate"):
            if report.get(name) is not None or name in report.get("undefined", {}):
                lines.append(f"  {name}: {_fmt(report.get(name))}")
        lines.append(f"  excluded: {report.get('excluded_count', 0)}")
        lines.append("")

    return "\n".join(lines)


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
