"""Scenario configuration: INI-style files, validation, topology resolution.

The format is flat sectioned key=value text with units spelled out in key
names. Every run parameter lives here; the seed is mandatory so no run ever
depends on wall-clock state.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from importlib import resources

from . import design
from .chain import GenesisConfig, MIN_DIFFICULTY
from .netsim import (
    ROLE_BANK,
    ROLE_FULL,
    ROLE_LIGHT,
    ROLE_MINER,
    BankSchedule,
    DisturbanceProfile,
    NodeSpec,
    Outage,
    PartitionSpec,
)
from .workload import WorkloadConfig

TOPOLOGY_KINDS = ("full-mesh", "ring", "star", "explicit")


class ScenarioError(Exception):
    """Configuration rejected before any event runs; message carries file/line context."""


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "full-mesh"
    edges: tuple = ()  # explicit (a, b) pairs


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    horizon_s: float
    genesis: GenesisConfig
    nodes: tuple  # NodeSpec with resolved peers
    topology: TopologySpec
    disturbance: DisturbanceProfile
    bank: BankSchedule | None
    workload: WorkloadConfig
    observer: str
    initial_fiat_cents: int = 10_000_000
    initial_token_cents: int = 5_000_000
    smoothing_window_blocks: int = 5
    measurement_tick_s: float = 60.0


_DEFAULTS = {
    ("scenario", "name"): "unnamed",
    ("scenario", "horizon_s"): "7200",
    ("scenario", "observer"): "",
    ("scenario", "smoothing_window_blocks"): "5",
    ("scenario", "measurement_tick_s"): "60",
    ("scenario", "initial_fiat_cents"): "10000000",
    ("scenario", "initial_token_cents"): "5000000",
    ("genesis", "nonce_seed"): "0x42",
    ("genesis", "initial_difficulty"): "0x400000",
    ("genesis", "block_capacity_bits"): "unlimited",
    ("genesis", "block_reward_tokens"): "5",
    ("genesis", "header_bits"): "2000",
    ("genesis", "target_interval_s"): "",  # default: neutral-band equilibrium
    ("nodes", "miners"): "10",
    ("nodes", "full"): "0",
    ("nodes", "light"): "10",
    ("nodes", "bank"): "false",
    ("nodes", "miner_hashrate_hps"): "35000",
    ("topology", "kind"): "full-mesh",
    ("topology", "edges"): "",
    ("disturbance", "link_delay_ms"): "0",
    ("disturbance", "churn_rate"): "0",
    ("disturbance", "churn_epoch_s"): "1200",
    ("disturbance", "outages"): "",
    ("disturbance", "partition_nodes"): "",
    ("disturbance", "partition_start_s"): "0",
    ("disturbance", "partition_end_s"): "0",
    ("bank", "connected_windows"): "",
    ("bank", "cycle_connected_s"): "0",
    ("bank", "cycle_disconnected_s"): "0",
    ("bank", "cycles"): "0",
    ("bank", "backhaul_bw_bps"): "128000",
    ("bank", "bw_cost_per_bit"): "0",
    ("bank", "sync_overhead_s_per_block"): "0.005",
    ("workload", "regular_tps"): "1.0",
    ("workload", "exchange_tps"): "0",
    ("workload", "regular_tx_bits"): "4000",
    ("workload", "exchange_tx_bits"): "4000",
    ("workload", "amount_min_tokens"): "1",
    ("workload", "amount_max_tokens"): "100",
}


class _ConfigReader:
    """configparser front end that remembers line numbers for error messages."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.parser = configparser.ConfigParser(interpolation=None)
        try:
            self.parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ScenarioError(f"{source}: {exc}") from exc
        self.lines = {}
        section = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                section = stripped[1:-1].strip().lower()
                self.lines[(section,)] = lineno
            elif section and "=" in stripped and not stripped.startswith(("#", ";")):
                key = stripped.split("=", 1)[0].strip().lower()
                self.lines[(section, key)] = lineno

    def where(self, section: str, key: str | None = None) -> str:
        lineno = self.lines.get((section, key) if key else (section,))
        loc = f"{self.source}:{lineno}" if lineno else self.source
        return f"{loc} [{section}]{' ' + key if key else ''}"

    def fail(self, section: str, key: str | None, msg: str):
        raise ScenarioError(f"{self.where(section, key)}: {msg}")

    def get(self, section: str, key: str) -> str:
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if (section, key) in _DEFAULTS:
            return _DEFAULTS[(section, key)]
        self.fail(section, key, "missing required field")

    def get_int(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw, 0)  # accepts 0x.. hex
        except ValueError:
            self.fail(section, key, f"not an integer: {raw!r}")

    def get_float(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError:
            self.fail(section, key, f"not a number: {raw!r}")

    def get_bool(self, section: str, key: str) -> bool:
        raw = self.get(section, key).lower()
        if raw in ("true", "yes", "1", "on"):
            return True
        if raw in ("false", "no", "0", "off"):
            return False
        self.fail(section, key, f"not a boolean: {raw!r}")


def _parse_windows(raw: str):
    windows = []
    for part in filter(None, (p.strip() for p in raw.split(","))):
        lo, _, hi = part.partition("-")
        windows.append((float(lo), float(hi)))
    return tuple(windows)


def _parse_outages(raw: str):
    # "m09:2400-" (never returns) or "m09:2400-3600", semicolon separated
    outages = []
    for part in filter(None, (p.strip() for p in raw.split(";"))):
        node, _, span = part.partition(":")
        lo, _, hi = span.partition("-")
        outages.append(Outage(node=node.strip(), offline_at_s=float(lo),
                              online_at_s=float(hi) if hi.strip() else None))
    return tuple(outages)


def _node_label(prefix: str, index: int, count: int) -> str:
    width = max(2, len(str(count)))
    return f"{prefix}{index:0{width}d}"


def _build_nodes(reader: _ConfigReader) -> tuple:
    miners = reader.get_int("nodes", "miners")
    full = reader.get_int("nodes", "full")
    light = reader.get_int("nodes", "light")
    bank = reader.get_bool("nodes", "bank")
    hashrate = reader.get_float("nodes", "miner_hashrate_hps")
    if miners < 1:
        reader.fail("nodes", "miners", "need at least one miner")
    if hashrate <= 0:
        reader.fail("nodes", "miner_hashrate_hps", "hashrate must be positive")
    specs = []
    for i in range(1, miners + 1):
        specs.append(NodeSpec(id=_node_label("m", i, miners), role=ROLE_MINER, hashrate_hps=hashrate))
    for i in range(1, full + 1):
        specs.append(NodeSpec(id=_node_label("f", i, full), role=ROLE_FULL))
    for i in range(1, light + 1):
        specs.append(NodeSpec(id=_node_label("l", i, light), role=ROLE_LIGHT))
    if bank:
        specs.append(NodeSpec(id="bank", role=ROLE_BANK))
    return tuple(specs)


def _resolve_topology(reader: _ConfigReader, specs, topology: TopologySpec) -> tuple:
    """Fill NodeSpec.peers: relay nodes by the configured shape, light nodes to all relays."""
    ids = [s.id for s in specs]
    relay = [s.id for s in specs if s.role in (ROLE_MINER, ROLE_FULL, ROLE_BANK)]
    peers: dict[str, set] = {nid: set() for nid in ids}

    def link(a: str, b: str):
        peers[a].add(b)
        peers[b].add(a)

    if topology.kind == "full-mesh":
        for i, a in enumerate(relay):
            for b in relay[i + 1:]:
                link(a, b)
    elif topology.kind == "ring":
        if len(relay) < 3:
            reader.fail("topology", "kind", "ring needs at least three relay nodes")
        for i, a in enumerate(relay):
            link(a, relay[(i + 1) % len(relay)])
    elif topology.kind == "star":
        hub = relay[0]
        for b in relay[1:]:
            link(hub, b)
    elif topology.kind == "explicit":
        if not topology.edges:
            reader.fail("topology", "edges", "explicit topology needs an edge list")
        for a, b in topology.edges:
            if a not in peers or b not in peers:
                reader.fail("topology", "edges", f"edge {a}-{b} references an undeclared node")
            link(a, b)
    else:
        reader.fail("topology", "kind", f"unknown kind {topology.kind!r}")

    if topology.kind != "explicit":
        for spec in specs:
            if spec.role == ROLE_LIGHT:
                for r in relay:
                    link(spec.id, r)
    return tuple(replace(s, peers=tuple(sorted(peers[s.id]))) for s in specs)


def _auto_difficulty(reader: _ConfigReader, specs, churn_rate: float) -> int:
    """Genesis difficulty that starts the run at the retarget equilibrium.

    target interval x expected online hashrate, using the uniform-churn
    expected-online model; mirrors pre-tuning the genesis block on a settled
    deployment.
    """
    raw = reader.get("genesis", "target_interval_s")
    target = float(raw) if raw else design.EQUILIBRIUM_BLOCK_INTERVAL_S
    miners = [s for s in specs if s.role == ROLE_MINER]
    online = design.expected_online(len(miners), churn_rate)
    total_hashrate = online * (miners[0].hashrate_hps if miners else 0.0)
    return max(MIN_DIFFICULTY, int(round(target * total_hashrate)))


def parse_scenario_text(text: str, source: str = "<string>", seed_override: int | None = None) -> Scenario:
    reader = _ConfigReader(text, source)
    for section in ("scenario", "genesis", "nodes"):
        if not reader.parser.has_section(section):
            raise ScenarioError(f"{source}: missing required section [{section}]")

    specs = _build_nodes(reader)
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        reader.fail("nodes", None, "node ids must be unique")

    edges_raw = reader.get("topology", "edges")
    edges = []
    for part in filter(None, (p.strip() for p in edges_raw.split(","))):
        a, _, b = part.partition("-")
        edges.append((a.strip(), b.strip()))
    topology = TopologySpec(kind=reader.get("topology", "kind"), edges=tuple(edges))
    if topology.kind not in TOPOLOGY_KINDS:
        reader.fail("topology", "kind", f"must be one of {TOPOLOGY_KINDS}")
    specs = _resolve_topology(reader, specs, topology)

    churn_rate = reader.get_float("disturbance", "churn_rate")
    if not 0.0 <= churn_rate <= 1.0:
        reader.fail("disturbance", "churn_rate", "must lie in [0, 1]")
    partition = None
    part_nodes = reader.get("disturbance", "partition_nodes")
    if part_nodes:
        names = frozenset(n.strip() for n in part_nodes.split(",") if n.strip())
        unknown = sorted(names - set(ids))
        if unknown:
            reader.fail("disturbance", "partition_nodes", f"unknown nodes {unknown}")
        partition = PartitionSpec(
            nodes=names,
            start_s=reader.get_float("disturbance", "partition_start_s"),
            end_s=reader.get_float("disturbance", "partition_end_s"),
        )
        if partition.end_s <= partition.start_s:
            reader.fail("disturbance", "partition_end_s", "partition must end after it starts")
    outages = _parse_outages(reader.get("disturbance", "outages"))
    for outage in outages:
        if outage.node not in ids:
            reader.fail("disturbance", "outages", f"unknown node {outage.node!r}")
    try:
        disturbance = DisturbanceProfile(
            link_delay_ms=reader.get_float("disturbance", "link_delay_ms"),
            churn_rate=churn_rate,
            churn_epoch_s=reader.get_float("disturbance", "churn_epoch_s"),
            outages=outages,
            partition=partition,
        )
    except ValueError as exc:
        reader.fail("disturbance", None, str(exc))

    bank = None
    if any(s.role == ROLE_BANK for s in specs):
        windows = _parse_windows(reader.get("bank", "connected_windows"))
        cycles = reader.get_int("bank", "cycles")
        if cycles > 0:
            onlen = reader.get_float("bank", "cycle_connected_s")
            offlen = reader.get_float("bank", "cycle_disconnected_s")
            if onlen <= 0:
                reader.fail("bank", "cycle_connected_s", "cycle needs a positive connected span")
            period = onlen + offlen
            windows = tuple((k * period, k * period + onlen) for k in range(cycles))
        if not windows:
            reader.fail("bank", "connected_windows", "bank node declared but no connectivity schedule")
        try:
            bank = BankSchedule(
                connected_windows=windows,
                backhaul_bw_bps=reader.get_float("bank", "backhaul_bw_bps"),
                bw_cost_per_bit=reader.get_float("bank", "bw_cost_per_bit"),
                sync_overhead_s_per_block=reader.get_float("bank", "sync_overhead_s_per_block"),
            )
        except ValueError as exc:
            reader.fail("bank", "connected_windows", str(exc))

    capacity_raw = reader.get("genesis", "block_capacity_bits")
    capacity = None if capacity_raw.lower() == "unlimited" else int(capacity_raw, 0)
    difficulty_raw = reader.get("genesis", "initial_difficulty")
    if difficulty_raw.lower() == "auto":
        initial_difficulty = _auto_difficulty(reader, specs, churn_rate)
    else:
        initial_difficulty = int(difficulty_raw, 0)
    try:
        genesis = GenesisConfig(
            nonce_seed=reader.get_int("genesis", "nonce_seed"),
            initial_difficulty=initial_difficulty,
            block_capacity_bits=capacity,
            block_reward_tokens=reader.get_int("genesis", "block_reward_tokens"),
            header_bits=reader.get_int("genesis", "header_bits"),
        )
    except ValueError as exc:
        reader.fail("genesis", "initial_difficulty", str(exc))

    try:
        workload = WorkloadConfig(
            regular_tps=reader.get_float("workload", "regular_tps"),
            exchange_tps=reader.get_float("workload", "exchange_tps"),
            regular_tx_bits=reader.get_int("workload", "regular_tx_bits"),
            exchange_tx_bits=reader.get_int("workload", "exchange_tx_bits"),
            amount_min=reader.get_int("workload", "amount_min_tokens"),
            amount_max=reader.get_int("workload", "amount_max_tokens"),
        )
    except ValueError as exc:
        reader.fail("workload", None, str(exc))

    if seed_override is not None:
        seed = seed_override
    else:
        if not reader.parser.has_option("scenario", "seed"):
            reader.fail("scenario", "seed", "missing required field (no wall-clock defaults)")
        seed = reader.get_int("scenario", "seed")

    observer = reader.get("scenario", "observer")
    relay_ids = sorted(s.id for s in specs if s.role in (ROLE_MINER, ROLE_FULL, ROLE_BANK))
    miners_sorted = sorted(s.id for s in specs if s.role == ROLE_MINER)
    if not observer:
        observer = miners_sorted[0]
    elif observer not in relay_ids:
        reader.fail("scenario", "observer", f"observer {observer!r} is not a relay node")

    horizon = reader.get_float("scenario", "horizon_s")
    if horizon <= 0:
        reader.fail("scenario", "horizon_s", "horizon must be positive")

    return Scenario(
        name=reader.get("scenario", "name"),
        seed=seed,
        horizon_s=horizon,
        genesis=genesis,
        nodes=specs,
        topology=topology,
        disturbance=disturbance,
        bank=bank,
        workload=workload,
        observer=observer,
        initial_fiat_cents=reader.get_int("scenario", "initial_fiat_cents"),
        initial_token_cents=reader.get_int("scenario", "initial_token_cents"),
        smoothing_window_blocks=reader.get_int("scenario", "smoothing_window_blocks"),
        measurement_tick_s=reader.get_float("scenario", "measurement_tick_s"),
    )


def bundled_path(name: str):
    """Path to a packaged scenario/sweep file, by bare name or filename."""
    root = resources.files(__package__) / "scenarios"
    for suffix in ("", ".scenario", ".sweep"):
        candidate = root / f"{name}{suffix}"
        if candidate.is_file():
            return candidate
    raise ScenarioError(f"no bundled scenario named {name!r}")


def load_scenario(path_or_name, seed_override: int | None = None) -> Scenario:
    """Load from a filesystem path, falling back to the bundled set by name."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name) as fh:
            text = fh.read()
        return parse_scenario_text(text, source=str(path_or_name), seed_override=seed_override)
    candidate = bundled_path(str(path_or_name))
    return parse_scenario_text(candidate.read_text(), source=str(path_or_name), seed_override=seed_override)


def scenario_text(path_or_name) -> tuple[str, str]:
    """(text, source label) for digesting and sweep overrides."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name) as fh:
            return fh.read(), str(path_or_name)
    return bundled_path(str(path_or_name)).read_text(), str(path_or_name)


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def serialize_scenario(scenario: Scenario) -> str:
    """Render a Scenario back to config text; parse(serialize(s)) == s."""
    roles = {}
    for spec in scenario.nodes:
        roles.setdefault(spec.role, []).append(spec)
    miners = roles.get(ROLE_MINER, [])
    lines = [
        "[scenario]",
        f"name = {scenario.name}",
        f"seed = {scenario.seed}",
        f"horizon_s = {scenario.horizon_s}",
        f"observer = {scenario.observer}",
        f"smoothing_window_blocks = {scenario.smoothing_window_blocks}",
        f"measurement_tick_s = {scenario.measurement_tick_s}",
        f"initial_fiat_cents = {scenario.initial_fiat_cents}",
        f"initial_token_cents = {scenario.initial_token_cents}",
        "",
        "[genesis]",
        f"nonce_seed = {scenario.genesis.nonce_seed}",
        f"initial_difficulty = {scenario.genesis.initial_difficulty}",
        "block_capacity_bits = "
        + ("unlimited" if scenario.genesis.block_capacity_bits is None
           else str(scenario.genesis.block_capacity_bits)),
        f"block_reward_tokens = {scenario.genesis.block_reward_tokens}",
        f"header_bits = {scenario.genesis.header_bits}",
        "",
        "[nodes]",
        f"miners = {len(miners)}",
        f"full = {len(roles.get(ROLE_FULL, []))}",
        f"light = {len(roles.get(ROLE_LIGHT, []))}",
        f"bank = {'true' if roles.get(ROLE_BANK) else 'false'}",
        f"miner_hashrate_hps = {miners[0].hashrate_hps if miners else 0}",
        "",
        "[topology]",
        f"kind = {scenario.topology.kind}",
        "edges = " + ",".join(f"{a}-{b}" for a, b in scenario.topology.edges),
        "",
        "[disturbance]",
        f"link_delay_ms = {scenario.disturbance.link_delay_ms}",
        f"churn_rate = {scenario.disturbance.churn_rate}",
        f"churn_epoch_s = {scenario.disturbance.churn_epoch_s}",
        "outages = " + ";".join(
            f"{o.node}:{o.offline_at_s}-{'' if o.online_at_s is None else o.online_at_s}"
            for o in scenario.disturbance.outages
        ),
    ]
    part = scenario.disturbance.partition
    if part is not None:
        lines += [
            "partition_nodes = " + ",".join(sorted(part.nodes)),
            f"partition_start_s = {part.start_s}",
            f"partition_end_s = {part.end_s}",
        ]
    if scenario.bank is not None:
        lines += [
            "",
            "[bank]",
            "connected_windows = " + ",".join(f"{a}-{b}" for a, b in scenario.bank.connected_windows),
            f"backhaul_bw_bps = {scenario.bank.backhaul_bw_bps}",
            f"bw_cost_per_bit = {scenario.bank.bw_cost_per_bit}",
            f"sync_overhead_s_per_block = {scenario.bank.sync_overhead_s_per_block}",
        ]
    lines += [
        "",
        "[workload]",
        f"regular_tps = {scenario.workload.regular_tps}",
        f"exchange_tps = {scenario.workload.exchange_tps}",
        f"regular_tx_bits = {scenario.workload.regular_tx_bits}",
        f"exchange_tx_bits = {scenario.workload.exchange_tx_bits}",
        f"amount_min_tokens = {scenario.workload.amount_min}",
        f"amount_max_tokens = {scenario.workload.amount_max}",
        "",
    ]
    return "\n".join(lines)
