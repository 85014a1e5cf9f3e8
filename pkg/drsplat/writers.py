"""Output writers for reports, score dumps and per-label tables."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and int dictionary keys into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json_report(report: Dict[str, Any], output_path: Path) -> None:
    """
    Write a report as indented JSON; undefined values are written as null.

    Args:
        report: Report dictionary
        output_path: Output JSON path
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    with open(output_path, "w") as f:
        json.dump(to_jsonable(report), f, indent=2)
        f.write("\n")

    logger.info(f"Wrote report: {output_path}")


def write_score_dump(scores: np.ndarray, output_path: Path) -> None:
    """Write per-Gaussian scores as raw little-endian float32."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(scores, dtype="<f4").tofile(output_path)
    logger.info(f"Wrote {len(scores)} scores: {output_path}")


def read_score_dump(path: Path) -> np.ndarray:
    return np.fromfile(path, dtype="<f4").astype(float)


def write_table(rows: List[Dict[str, Any]], output_path: Path) -> None:
    """
    Write rows to CSV and, next to it, Parquet.

    Args:
        rows: List of flat row dictionaries
        output_path: CSV path; the Parquet file gets the same stem
    """
    if not rows:
        logger.warning(f"No rows to write for {output_path}")
        return

    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    df = pd.DataFrame(to_jsonable(rows))
    df.to_csv(output_path, index=False)
    logger.info(f"Wrote table CSV: {output_path}")

    try:
        parquet_path = output_path.with_suffix(".parquet")
        df.to_parquet(parquet_path, index=False, engine="pyarrow")
        logger.info(f"Wrote table Parquet: {parquet_path}")
    except Exception as e:
        logger.warning(f"Failed to write Parquet file: {e}")


def label_table_rows(
    per_label: Dict[int, Optional[float]], column: str = "iou"
) -> List[Dict[str, Any]]:
    return [{"label": int(label), column: value} for label, value in per_label.items()]


def write_label_table(
    per_label: Dict[int, Optional[float]], report_path: Path, column: str = "iou"
) -> None:
    """Per-label metric table written next to a JSON report as ``<stem>_labels.csv``."""
    report_path = Path(report_path)
    csv_path = report_path.with_name(f"{report_path.stem}_labels.csv")
    write_table(label_table_rows(per_label, column), csv_path)


def log_dir_for(output_path: Optional[Path]) -> Optional[Path]:
    """``logs/`` next to the primary output file, or None when there is no output file."""
    if output_path is None:
        return None
    return Path(output_path).parent / "logs"


def setup_logging(log_dir: Optional[Path], verbose: bool = False, quiet: bool = False) -> None:
    """
    Setup logging to console and, when ``log_dir`` is given, to ``log_dir/run.log``.

    Args:
        log_dir: Directory for the log file, or None for console only
        verbose: Enable verbose (DEBUG) logging
        quiet: Suppress console output (only log to file)
    """
    level = logging.DEBUG if verbose else logging.INFO

    root = logging.getLogger()
    root.setLevel(level)
    root.handlers.clear()

    log_file = None
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_file = log_dir / "run.log"

        # File handler (always INFO or above)
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        root.addHandler(file_handler)

    if not quiet:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        root.addHandler(console_handler)

    if log_file is not None:
        root.info(f"Logging to: {log_file}")
