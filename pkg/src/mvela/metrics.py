"""Relative-ERT metrics and report emission.

Every (instance, repetition) row's ERT is divided by the instance's virtual
best solver (VBS), so 1.0 is optimal. Table-1-style reports average those
relERTs per group; Table-2-style reports first normalize each row by its own
Hybrid value (the virtual best encoding) and then average, and the gap
closure states how much of the SBE-to-VBE distance a combination strategy
recovers. Rows with a non-finite value in any reported column are excluded
from means and counted in the diagnostics.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .portfolio import PerformanceTable
from .selector import STRATEGIES, SelectionOutcome

REPORT_COLUMNS = ("SBS", "TE", "SH", "Hybrid", "Meta", "Confidence")
VBE_COLUMNS = ("TE", "SH", "Hybrid", "Meta", "Confidence")


@dataclass(frozen=True)
class RelErtRow:
    instance_id: str
    repetition: int
    values: dict[str, float]


@dataclass(frozen=True)
class RelErtTable:
    columns: tuple[str, ...]
    rows: list[RelErtRow]


def single_best_solver(perf: PerformanceTable) -> str:
    """Algorithm with the lowest mean relERT across instances; ties break
    toward the earlier declared algorithm."""
    best = None
    best_mean = math.inf
    for algorithm in perf.algorithms:
        rels = [
            perf.records[(iid, algorithm)].ert / perf.vbs_ert(iid)
            for iid in perf.targets
        ]
        mean = float(np.mean(rels))
        if mean < best_mean:
            best, best_mean = algorithm, mean
    return best if best is not None else perf.algorithms[0]


def relert(perf: PerformanceTable, outcomes: list[SelectionOutcome]) -> RelErtTable:
    """Per-row relERT for VBS, SBS, and the five selection strategies."""
    sbs = single_best_solver(perf)
    rows = []
    for o in outcomes:
        vbs = perf.vbs_ert(o.instance_id)
        if not math.isfinite(vbs):
            raise DataError(f"instance {o.instance_id!r} has no finite VBS ERT")
        values = {"VBS": 1.0, "SBS": perf.records[(o.instance_id, sbs)].ert / vbs}
        for strategy in STRATEGIES:
            values[strategy] = o.ert[strategy] / vbs
        rows.append(RelErtRow(o.instance_id, o.repetition, values))
    return RelErtTable(columns=("VBS",) + REPORT_COLUMNS, rows=rows)


def vbe_normalize(rel: RelErtTable) -> RelErtTable:
    """Divide each row's strategy relERTs by that row's Hybrid relERT.

    Normalization happens per (instance, repetition) row before any
    averaging, so the Hybrid column becomes exactly 1.
    """
    if "Hybrid" not in rel.columns:
        raise DataError("VBE normalization needs the Hybrid column")
    rows = []
    for row in rel.rows:
        hybrid = row.values["Hybrid"]
        rows.append(
            RelErtRow(
                row.instance_id,
                row.repetition,
                {c: row.values[c] / hybrid for c in VBE_COLUMNS},
            )
        )
    return RelErtTable(columns=VBE_COLUMNS, rows=rows)


def gap_closure(sbe_mean: float, method_mean: float, vbe_mean: float) -> float | None:
    """Percentage of the SBE-to-VBE gap a method closes; None when the gap
    is degenerate (SBE equals VBE)."""
    if sbe_mean <= vbe_mean:
        return None
    return 100.0 * (sbe_mean - method_mean) / (sbe_mean - vbe_mean)


def aggregate_means(
    rel: RelErtTable, columns: tuple[str, ...]
) -> tuple[dict[str, float], int, int]:
    """Column means over rows finite in every requested column.

    Returns (means, rows used, rows excluded).
    """
    used = []
    for row in rel.rows:
        if all(math.isfinite(row.values[c]) for c in columns):
            used.append(row)
    if not used:
        return ({c: math.nan for c in columns}, 0, len(rel.rows))
    means = {
        c: float(np.mean([row.values[c] for row in used])) for c in columns
    }
    return means, len(used), len(rel.rows) - len(used)


def _group_rows(rel: RelErtTable, groups: dict[str, str]) -> dict[str, RelErtTable]:
    by_group: dict[str, list[RelErtRow]] = {}
    for row in rel.rows:
        by_group.setdefault(groups.get(row.instance_id, "ungrouped"), []).append(row)
    return {
        name: RelErtTable(rel.columns, rows) for name, rows in sorted(by_group.items())
    }


def emit_report(
    rel: RelErtTable,
    groups: dict[str, str],
    out_dir: str | Path,
    seed: int = 0,
    config_hash: str = "",
) -> dict:
    """Write the report artifacts and return the JSON summary.

    Files: relert.csv (full per-row table), table1.csv (group means),
    table2.csv (VBE-normalized group means), scatter.csv (per-row SH vs TE
    relERT pairs), summary.json.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with (out_dir / "relert.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "repetition"] + list(rel.columns))
        for row in rel.rows:
            writer.writerow(
                [row.instance_id, row.repetition]
                + [repr(row.values[c]) for c in rel.columns]
            )

    normalized = vbe_normalize(rel)
    grouped = _group_rows(rel, groups)
    grouped_norm = _group_rows(normalized, groups)

    table1: dict[str, dict] = {}
    with (out_dir / "table1.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "count"] + list(REPORT_COLUMNS))
        for name, table in list(grouped.items()) + [("All", rel)]:
            means, used, _ = aggregate_means(table, REPORT_COLUMNS)
            table1[name] = {"count": used, **means}
            writer.writerow([name, used] + [repr(means[c]) for c in REPORT_COLUMNS])

    table2: dict[str, dict] = {}
    with (out_dir / "table2.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "count"] + list(VBE_COLUMNS))
        for name, table in list(grouped_norm.items()) + [("All", normalized)]:
            means, used, _ = aggregate_means(table, VBE_COLUMNS)
            table2[name] = {"count": used, **means}
            writer.writerow([name, used] + [repr(means[c]) for c in VBE_COLUMNS])

    with (out_dir / "scatter.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "repetition", "relert_sh", "relert_te"])
        for row in rel.rows:
            writer.writerow(
                [row.instance_id, row.repetition, repr(row.values["SH"]), repr(row.values["TE"])]
            )

    all_norm = table2["All"]
    sbe_encoding = "TE" if all_norm["TE"] <= all_norm["SH"] else "SH"
    sbe_mean = all_norm[sbe_encoding]
    vbe_mean = all_norm["Hybrid"]
    _, _, excluded = aggregate_means(rel, REPORT_COLUMNS)
    summary = {
        "table1": table1,
        "table2": table2,
        "gap_closure": {
            "sbe_encoding": sbe_encoding,
            "meta": gap_closure(sbe_mean, all_norm["Meta"], vbe_mean),
            "confidence": gap_closure(sbe_mean, all_norm["Confidence"], vbe_mean),
        },
        "diagnostics": {"rows_total": len(rel.rows), "rows_excluded": excluded},
        "seed": seed,
        "config_hash": config_hash,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
