"""report.json / report.csv / chart.svg writers."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import jsonschema

from .core import HardwareConfig
from .pipeline import aggregate

SCHEMA_VERSION = "1.0"

_NUM = {"type": ["number", "null"]}
_COUNTS = {
    "type": "object",
    "required": ["ou_activations", "skipped_ou_activations", "adc_conversions", "dac_conversions", "cycles"],
    "additionalProperties": {"type": "integer"},
}
_ENERGY = {
    "type": "object",
    "required": ["e_crossbar_pj", "e_adc_pj_total", "e_dac_pj_total", "e_total_pj"],
    "additionalProperties": _NUM,
}
_LAYER = {
    "type": "object",
    "required": [
        "name", "shape", "sparsity_before", "sparsity_after", "pattern_count", "zero_kernel_ratio",
        "baseline", "pattern", "area_efficiency", "speedup", "index",
    ],
    "properties": {
        "name": {"type": "string"},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 4, "maxItems": 4},
        "sparsity_before": {"type": "number", "minimum": 0, "maximum": 1},
        "sparsity_after": {"type": "number", "minimum": 0, "maximum": 1},
        "pattern_count": {"type": "integer", "minimum": 0},
        "baseline": {
            "type": "object",
            "required": ["cells", "crossbars", "cycles", "energy"],
            "properties": {"cycles": _COUNTS, "energy": _ENERGY},
        },
        "pattern": {
            "type": "object",
            "required": ["cells", "waste_cells", "crossbars", "cycles", "energy"],
            "properties": {"cycles": _COUNTS, "energy": _ENERGY},
        },
        "area_efficiency": _NUM,
        "speedup": _NUM,
        "index": {
            "type": "object",
            "required": ["bits", "bytes", "fraction_of_model"],
            "properties": {"bits": {"type": "integer"}, "bytes": {"type": "integer"}},
        },
    },
}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "config", "hardware", "layers", "aggregate"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "config": {"type": "object"},
        "hardware": {"type": "object"},
        "layers": {"type": "array", "items": _LAYER},
        "aggregate": {"type": "object", "required": ["area_efficiency", "speedup", "energy_efficiency"]},
        "reference": {"type": ["object", "null"]},
    },
}


def build_report(records: Sequence[dict], hw: HardwareConfig, config: dict, reference: dict | None = None) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "hardware": asdict(hw),
        "layers": list(records),
        "aggregate": aggregate(records, hw),
        "reference": reference,
    }
    validate(report)
    return report


def validate(report: dict) -> None:
    jsonschema.validate(report, REPORT_SCHEMA)


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def loads(text: str) -> dict:
    report = json.loads(text)
    validate(report)
    return report


CSV_COLUMNS = [
    "name", "out_channels", "in_channels", "kernel_h", "kernel_w", "budget", "sparsity_before", "sparsity_after",
    "pattern_count", "zero_kernel_ratio", "baseline_cells", "pattern_cells", "waste_cells", "baseline_crossbars",
    "pattern_crossbars", "area_efficiency", "baseline_cycles", "pattern_cycles", "speedup", "baseline_energy_pj",
    "pattern_energy_pj", "normalized_energy", "index_bits", "index_bytes", "index_fraction",
]


def csv_rows(report: dict) -> list[dict]:
    rows = []
    for r in report["layers"]:
        o, i, kh, kw = r["shape"]
        rows.append(
            {
                "name": r["name"], "out_channels": o, "in_channels": i, "kernel_h": kh, "kernel_w": kw,
                "budget": r.get("budget"), "sparsity_before": r["sparsity_before"],
                "sparsity_after": r["sparsity_after"], "pattern_count": r["pattern_count"],
                "zero_kernel_ratio": r["zero_kernel_ratio"], "baseline_cells": r["baseline"]["cells"],
                "pattern_cells": r["pattern"]["cells"], "waste_cells": r["pattern"]["waste_cells"],
                "baseline_crossbars": r["baseline"]["crossbars"], "pattern_crossbars": r["pattern"]["crossbars"],
                "area_efficiency": r["area_efficiency"], "baseline_cycles": r["baseline"]["cycles"]["cycles"],
                "pattern_cycles": r["pattern"]["cycles"]["cycles"], "speedup": r["speedup"],
                "baseline_energy_pj": r["baseline"]["energy"]["e_total_pj"],
                "pattern_energy_pj": r["pattern"]["energy"]["e_total_pj"],
                "normalized_energy": r["normalized_energy"], "index_bits": r["index"]["bits"],
                "index_bytes": r["index"]["bytes"], "index_fraction": r["index"]["fraction_of_model"],
            }
        )
    return rows


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(csv_rows(report))
    return buf.getvalue()


def write_chart(report: dict, path) -> Path:
    """Grouped bars of per-layer normalized area and energy (pattern / baseline)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    names = [r["name"] for r in report["layers"]]
    area = [r["pattern"]["cells"] / r["baseline"]["cells"] if r["baseline"]["cells"] else 0 for r in report["layers"]]
    energy = [r["normalized_energy"] or 0 for r in report["layers"]]
    x = np.arange(len(names))
    with matplotlib.rc_context({"svg.hashsalt": "patternmap", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(names) + 2), 3.5))
        ax.bar(x - 0.2, area, 0.4, label="crossbar area")
        ax.bar(x + 0.2, energy, 0.4, label="energy")
        ax.axhline(1.0, color="grey", lw=0.8, ls="--")
        ax.set_xticks(x, names, rotation=45, ha="right")
        ax.set_ylabel("normalized to baseline")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
