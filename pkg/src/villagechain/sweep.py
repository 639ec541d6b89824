"""Parameter sweeps: run a scenario over a value list x seed list and aggregate.

Points run in a process pool (worker count via VILLAGECHAIN_WORKERS); each
point is an isolated single-threaded simulation, and aggregation is ordered
(value order as written, then seed order), so the output is deterministic
regardless of scheduling.
"""
from __future__ import annotations

import configparser
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import analytics
from .runner import execute
from .scenario import ScenarioError, parse_scenario_text, scenario_text

WORKERS_ENV = "VILLAGECHAIN_WORKERS"


@dataclass(frozen=True)
class SweepSpec:
    scenario_ref: str
    parameter: str  # "section.key" of the swept scenario field
    values: tuple  # raw strings substituted into the config
    seeds: tuple


@dataclass(frozen=True)
class SweepPoint:
    value: str
    seed: int
    metrics: dict


def parse_sweep_spec(path) -> SweepSpec:
    parser = configparser.ConfigParser(interpolation=None)
    text, source = scenario_text(path)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    if not parser.has_section("sweep"):
        raise ScenarioError(f"{source}: missing required section [sweep]")
    section = parser["sweep"]
    for key in ("scenario", "parameter", "values", "seeds"):
        if key not in section:
            raise ScenarioError(f"{source}: [sweep] missing required field {key}")
    values = tuple(v.strip() for v in section["values"].split("|") if v.strip())
    if not values:
        raise ScenarioError(f"{source}: [sweep] values list is empty")
    try:
        seeds = tuple(int(s) for s in section["seeds"].split(",") if s.strip())
    except ValueError as exc:
        raise ScenarioError(f"{source}: [sweep] seeds must be integers: {exc}")
    if not seeds:
        raise ScenarioError(f"{source}: [sweep] seed list is empty")
    parameter = section["parameter"].strip()
    if parameter.count(".") != 1:
        raise ScenarioError(f"{source}: [sweep] parameter must look like section.key")
    return SweepSpec(
        scenario_ref=section["scenario"].strip(),
        parameter=parameter,
        values=values,
        seeds=seeds,
    )


def override_config(text: str, parameter: str, value: str) -> str:
    """Rewrite one key in config text (replacing it or appending to its section)."""
    section, key = parameter.split(".", 1)
    out = []
    in_section = False
    replaced = False
    section_header = f"[{section}]"
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            if in_section and not replaced:
                out.append(f"{key} = {value}")
                replaced = True
            in_section = stripped.lower() == section_header
        elif in_section and stripped.split("=", 1)[0].strip().lower() == key and "=" in stripped:
            out.append(f"{key} = {value}")
            replaced = True
            continue
        out.append(line)
    if not replaced:
        if not any(l.strip().lower() == section_header for l in text.splitlines()):
            out.append(section_header)
        out.append(f"{key} = {value}")
    return "\n".join(out)


def _run_point(args):
    base_text, source, parameter, value, seed = args
    text = override_config(base_text, parameter, value)
    scenario = parse_scenario_text(text, source=source, seed_override=seed)
    result = execute(scenario)
    return value, seed, result.metrics


def worker_count(points: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(os.cpu_count() or 1, points))


def run_sweep(spec: SweepSpec, parallel: bool = True) -> list[SweepPoint]:
    """Run the full cross product; any point failure aborts with the point named."""
    base_text, source = scenario_text(spec.scenario_ref)
    tasks = [
        (base_text, source, spec.parameter, value, seed)
        for value in spec.values
        for seed in spec.seeds
    ]
    results = {}
    workers = worker_count(len(tasks))
    try:
        if parallel and workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for value, seed, metrics in pool.map(_run_point, tasks):
                    results[(value, seed)] = metrics
        else:
            for task in tasks:
                value, seed, metrics = _run_point(task)
                results[(value, seed)] = metrics
    except Exception as exc:
        done = set(results)
        failing = next((t for t in tasks if (t[3], t[4]) not in done), None)
        point = f"{spec.parameter}={failing[3]} seed={failing[4]}" if failing else "unknown point"
        raise RuntimeError(f"sweep aborted at {point}: {exc}") from exc
    return [
        SweepPoint(value=value, seed=seed, metrics=results[(value, seed)])
        for value in spec.values
        for seed in spec.seeds
    ]


def write_sweep_csv(points, path) -> None:
    rows = []
    for point in points:
        for metric in sorted(point.metrics):
            value = point.metrics[metric]
            rows.append((point.value, point.seed, metric, value))
    analytics.write_metrics_csv(path, rows)


def seed_averages(points, metric: str) -> dict:
    """value -> mean of one metric across seeds (inf-aware: inf poisons the mean)."""
    sums: dict = {}
    counts: dict = {}
    for point in points:
        if metric not in point.metrics:
            continue
        sums[point.value] = sums.get(point.value, 0.0) + point.metrics[metric]
        counts[point.value] = counts.get(point.value, 0) + 1
    return {value: sums[value] / counts[value] for value in sums}
