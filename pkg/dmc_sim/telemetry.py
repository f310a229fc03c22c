"""
Telemetry and summary files.

Both are written through pandas with shortest round-trip float text, so a CSV
read back with round-trip precision reproduces the in-run values exactly.
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import DmcSimError
from .models import ScenarioConfig, SummaryRow, TelemetryRecord
from .scenario import summarize_arrays

logger = logging.getLogger(__name__)

TELEMETRY_HEADER = (
    "time_s", "v_bus_V", "q_mtg_var", "i_charge_A", "v_cap_V",
    "energy_J", "phase", "duty", "reference_A",
)

SUMMARY_HEADER = (
    "test_setting", "metric_unit", "max_metric", "min_metric", "avg_metric",
    "charging_current_A", "band_lower_A", "band_upper_A", "charging_time_s",
    "attenuation", "attenuation_count", "completed",
)

# written next to telemetry.csv by every run
SUMMARY_FILENAME = "summary.csv"


def _atomic_write(path: Path, frame: pd.DataFrame) -> Path:
    """Write `frame` to a sibling temp file, then rename over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as handle:
            frame.to_csv(handle, index=False, lineterminator="\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_telemetry(stream: Iterable[TelemetryRecord], path: Union[str, Path]) -> Path:
    """One CSV row per recorded step; header only for an empty stream."""
    frame = pd.DataFrame.from_records(
        [
            (r.time, r.v_bus, r.q_mtg, r.i_charge, r.v_cap, r.energy, r.phase.value, r.duty, r.reference)
            for r in stream
        ],
        columns=TELEMETRY_HEADER,
    )
    written = _atomic_write(Path(path), frame)
    logger.debug("Wrote %d telemetry rows to %s", len(frame), written)
    return written


def read_telemetry(path: Union[str, Path]) -> pd.DataFrame:
    """Load a telemetry CSV with exact float round-trip."""
    frame = pd.read_csv(
        path,
        float_precision="round_trip",
        dtype={"phase": str},
        keep_default_na=False,
    )
    missing = [c for c in TELEMETRY_HEADER if c not in frame.columns]
    if missing:
        raise DmcSimError(f"{path}: missing telemetry columns {missing}", code="TELEMETRY_INVALID")
    return frame


def recorded_attenuation_count(telemetry_path: Union[str, Path]) -> int:
    """Attenuation count from the summary.csv written beside a telemetry file, else 0."""
    summary = Path(telemetry_path).with_name(SUMMARY_FILENAME)
    if not summary.is_file():
        return 0
    frame = pd.read_csv(summary)
    if "attenuation_count" not in frame.columns or frame.empty:
        raise DmcSimError(f"{summary}: no attenuation_count row", code="TELEMETRY_INVALID")
    return int(frame["attenuation_count"].iloc[0])


def summarize_csv(path: Union[str, Path], config: ScenarioConfig,
                  attenuation_count: Optional[int] = None) -> SummaryRow:
    """Recompute the summary row from a persisted telemetry file."""
    if attenuation_count is None:
        attenuation_count = recorded_attenuation_count(path)
    frame = read_telemetry(path)
    return summarize_arrays(
        frame["time_s"].to_numpy(dtype=float),
        frame["v_bus_V"].to_numpy(dtype=float),
        frame["q_mtg_var"].to_numpy(dtype=float),
        list(frame["phase"]),
        frame["reference_A"].to_numpy(dtype=float),
        attenuation_count,
        config,
    )


# ============================================================================
# SUMMARY OUTPUT
# ============================================================================

def _summary_fields(row: SummaryRow) -> tuple:
    lower, upper = row.charging_band if row.charging_band else (None, None)
    return (
        row.test_setting,
        row.metric_unit,
        row.max_metric,
        row.min_metric,
        row.avg_metric,
        row.charging_current,
        lower,
        upper,
        row.charging_time,
        row.attenuation,
        row.attenuation_count,
        "true" if row.completed else "false",
    )


def write_summary_csv(rows: Sequence[SummaryRow], path: Union[str, Path]) -> Path:
    frame = pd.DataFrame.from_records([_summary_fields(r) for r in rows], columns=SUMMARY_HEADER)
    return _atomic_write(Path(path), frame)


def _scaled(value, unit: str) -> str:
    if value is None:
        return "-"
    if unit == "V":
        return f"{value / 1e3:.3f} kV"
    return f"{value / 1e6:.3f} Mvar"


def render_summary_table(rows: Sequence[SummaryRow]) -> str:
    """Aligned plain-text table, one line per test case."""
    header = ["Test setting", "Max metric", "Min metric", "Avg metric", "Charging current", "Charging time"]
    lines = [header]
    for row in rows:
        if row.empty:
            lines.append([row.test_setting, "-", "-", "-", "(empty window)", "-"])
            continue
        if row.charging_band is not None:
            current = f"({row.charging_band[0] / 1e3:.2f}, {row.charging_band[1] / 1e3:.2f}) kA"
        elif row.charging_current is not None:
            current = f"{row.charging_current / 1e3:.2f} kA"
        else:
            current = "-"
        time = f"{row.charging_time:.2f} s" if row.completed else "incomplete"
        lines.append([
            row.test_setting,
            _scaled(row.max_metric, row.metric_unit),
            _scaled(row.min_metric, row.metric_unit),
            _scaled(row.avg_metric, row.metric_unit),
            current,
            time,
        ])
    widths = np.max([[len(cell) for cell in line] for line in lines], axis=0)
    out = []
    for i, line in enumerate(lines):
        out.append("  ".join(cell.ljust(int(w)) for cell, w in zip(line, widths)).rstrip())
        if i == 0:
            out.append("  ".join("-" * int(w) for w in widths))
    return "\n".join(out) + "\n"
