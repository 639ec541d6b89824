"""Single-run orchestration: execute a scenario and manage its output artifacts."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

from . import __version__, analytics, netsim
from .ledger import export_ledger_csv
from .scenario import Scenario, config_digest, parse_scenario_text, scenario_text
from .workload import export_workload_csv

RUN_FILES = (
    "blocks.csv", "txs.csv", "sync.csv", "ledger.csv", "workload.csv",
    "metrics.csv", "report.txt", "manifest.txt",
)


@dataclass(frozen=True)
class RunResult:
    scenario: Scenario
    trace: netsim.SimTrace
    metrics: dict
    out_dir: str | None = None


def execute(scenario: Scenario) -> RunResult:
    """Run a resolved scenario in-process and compute the standard metrics."""
    trace = netsim.run(scenario)
    t0 = _disturbance_onset(scenario)
    metrics = analytics.run_metrics(
        trace, smoothing_window=scenario.smoothing_window_blocks, resolve_t0=t0
    )
    return RunResult(scenario=scenario, trace=trace, metrics=metrics)


def _disturbance_onset(scenario: Scenario) -> float | None:
    outages = scenario.disturbance.outages
    if outages:
        return min(o.offline_at_s for o in outages)
    return None


def run_scenario(config_path, out_dir, seed_override: int | None = None) -> RunResult:
    """Run a scenario file and write the full artifact set into out_dir.

    Partial outputs are removed if anything fails mid-run.
    """
    text, source = scenario_text(config_path)
    scenario = parse_scenario_text(text, source=source, seed_override=seed_override)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    try:
        result = execute(scenario)
        trace = result.trace

        def out(name):
            path = os.path.join(out_dir, name)
            written.append(path)
            return path

        netsim.write_blocks_csv(trace, out("blocks.csv"))
        netsim.write_txs_csv(trace, out("txs.csv"))
        netsim.write_sync_csv(trace, out("sync.csv"))
        export_ledger_csv(trace.final_ledger, out("ledger.csv"))
        export_workload_csv(trace.workload, out("workload.csv"))
        rows = [("", scenario.seed, name, value)
                for name, value in sorted(result.metrics.items())
                if not math.isnan(value)]
        analytics.write_metrics_csv(out("metrics.csv"), rows)
        analytics.write_summary(out("report.txt"), f"run: {scenario.name} (seed {scenario.seed})",
                                {k: v for k, v in result.metrics.items() if math.isfinite(v)})
        _write_manifest(out("manifest.txt"), source, text, scenario.seed)
        return RunResult(scenario=scenario, trace=trace, metrics=result.metrics, out_dir=str(out_dir))
    except Exception:
        for path in written:
            if os.path.exists(path):
                os.remove(path)
        raise


def _write_manifest(path, source, text, seed) -> None:
    lines = [
        f"scenario_file = {source}",
        f"scenario_sha256 = {config_digest(text)}",
        f"seed = {seed}",
        f"villagechain_version = {__version__}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
