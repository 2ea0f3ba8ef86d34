"""Report emission: deterministic JSON and CSV artifacts plus the manifest.

Report files are a pure function of config and seed (byte-identical across
runs); wall-clock provenance lives only in the separate manifest file.
"""

from __future__ import annotations

import csv
import datetime
import json
from dataclasses import asdict
from pathlib import Path

from lumionsim.config import RunManifest, ScenarioConfig, TOOL_VERSION, config_digest
from lumionsim.errors import InvariantViolation
from lumionsim.simulate import ScenarioReport

CSV_COLUMNS = ("rack_id", "policy", "failed", "replacements", "overprovisioning", "extra_fibers")


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def scenario_report_doc(report: ScenarioReport) -> dict:
    recomputed = report.recompute_aggregates()
    if recomputed != report.aggregates:
        raise InvariantViolation("stored aggregates do not match per-rack records")
    return {
        "racks": report.racks,
        "seed": report.seed,
        "policies": [p.value for p in report.policies],
        "kernel_backend": report.kernel_backend,
        "spare_racks_touched": report.spare_racks_touched,
        "aggregates": report.aggregates,
        "records": [
            {
                "rack_id": r.rack_id,
                "policy": r.policy.value,
                "failed": r.failed,
                "replacements": r.replacements,
                "overprovisioning": r.overprovisioning,
                "extra_fibers": r.extra_fibers,
                "feasible": r.feasible,
            }
            for r in report.records
        ],
    }


def write_scenario_report(
    report: ScenarioReport, outdir: str | Path, fmt: str = "both"
) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = outdir / "report.json"
        _write_json(path, scenario_report_doc(report))
        written.append(path)
    if fmt in ("csv", "both"):
        path = outdir / "report.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in report.records:
                writer.writerow(
                    (r.rack_id, r.policy.value, r.failed, r.replacements,
                     r.overprovisioning, r.extra_fibers)
                )
        written.append(path)
    return written


def write_table(
    outdir: str | Path, name: str, rows: list[dict], fmt: str = "both"
) -> list[Path]:
    """Write a generic table as <name>.json and/or <name>.csv."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = outdir / f"{name}.json"
        _write_json(path, {"rows": rows})
        written.append(path)
    if fmt in ("csv", "both") and rows:
        path = outdir / f"{name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        written.append(path)
    return written


def start_manifest(config: ScenarioConfig) -> RunManifest:
    return RunManifest(
        config_digest=config_digest(config),
        tool_version=TOOL_VERSION,
        seed=config.seed,
        started_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )


def finish_manifest(manifest: RunManifest, outdir: str | Path) -> Path:
    manifest.finished_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "manifest.json"
    _write_json(path, manifest.to_json())
    return path


def write_config_echo(config: ScenarioConfig, outdir: str | Path) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "config.json"
    _write_json(path, asdict(config))
    return path
