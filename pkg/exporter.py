# exporter.py
import json
import math
import os
import sys
from typing import Any, TextIO

import numpy as np
import pandas as pd

from config import OUTPUT_DIR


def json_safe(value: Any) -> Any:
    """Plain JSON types; NaN / inf become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [json_safe(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def _shortest(x: float) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def trajectory_frame(traj) -> pd.DataFrame:
    """
    One row per state: step, state, choice.

    Row 0 carries x0 and an empty choice; row k carries the map ('f' or 'g')
    that produced state k.
    """
    choices = [""] + ["f" if c else "g" for c in traj.choices]
    return pd.DataFrame({
        "step": np.arange(len(traj.states)),
        "state": [_shortest(v) for v in traj.states],
        "choice": choices,
    })


def sweep_frame(sweep) -> pd.DataFrame:
    rows = sweep.to_rows()
    frame = pd.DataFrame(rows, columns=["p", "estimate", "ci_low", "ci_high", "n_trials", "n_censored", "seed"])
    for col in ("p", "estimate", "ci_low", "ci_high"):
        frame[col] = [_shortest(v) for v in frame[col]]
    return frame


def estimate_frame(rows: list[dict[str, Any]]) -> pd.DataFrame:
    """Flat table of estimate rows; float columns in shortest round-trip form."""
    frame = pd.DataFrame(rows)
    for col in frame.columns:
        if frame[col].dtype.kind == "f":
            frame[col] = [_shortest(v) for v in frame[col]]
    return frame


def write_csv(frame: pd.DataFrame, path: str | None = None, stream: TextIO | None = None) -> None:
    if path is None:
        frame.to_csv(stream or sys.stdout, index=False, lineterminator="\n")
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def write_json(payload: dict[str, Any], path: str | None = None, stream: TextIO | None = None) -> None:
    text = json.dumps(json_safe(payload), indent=2, ensure_ascii=False)
    if path is None:
        out = stream or sys.stdout
        out.write(text + "\n")
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text + "\n")


def export_results(payload: dict[str, Any], frame: pd.DataFrame | None = None,
                   output_dir: str = OUTPUT_DIR, filename_prefix: str = "allee_rds") -> tuple[str, str | None]:
    """Export a result to JSON (and its table to CSV) under output_dir."""
    os.makedirs(output_dir, exist_ok=True)

    json_path = os.path.join(output_dir, f"{filename_prefix}.json")
    write_json(payload, json_path)
    print(f"JSON exported to: {json_path}", file=sys.stderr)

    csv_path = None
    if frame is not None:
        csv_path = os.path.join(output_dir, f"{filename_prefix}.csv")
        write_csv(frame, csv_path)
        print(f"CSV exported to: {csv_path}", file=sys.stderr)
    return json_path, csv_path
