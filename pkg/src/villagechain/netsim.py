"""Deterministic discrete-event simulation of the mining network.

Miners race exponential block-interval draws (statistically exact for PoW
under equal per-miner hashrate), blocks and transactions flood the overlay
with per-link delay, miners churn on epoch boundaries or scheduled outages,
and the bank node joins intermittently over a rate-limited backhaul.

Determinism: the event heap breaks time ties by insertion sequence, every
random draw flows from the scenario seed through named substreams, and no
unordered set is ever iterated without sorting.
"""
from __future__ import annotations

import heapq
from bisect import bisect_right
from dataclasses import dataclass, field, replace

from . import ledger as ledger_mod
from . import workload as workload_mod
from .chain import Block, BlockHeader, ChainView, adjust_difficulty, block_id, make_genesis, validate_block
from .rng import substream

ROLE_MINER = "miner"
ROLE_FULL = "full"
ROLE_LIGHT = "light"
ROLE_BANK = "bank"
RELAY_ROLES = (ROLE_MINER, ROLE_FULL, ROLE_BANK)

EVT_BLOCK_FOUND = "block-found"
EVT_MESSAGE_ARRIVAL = "message-arrival"
EVT_TX_CREATED = "tx-created"
EVT_CHURN_TOGGLE = "churn-toggle"
EVT_BANK_CONNECT = "bank-connect"
EVT_BANK_DISCONNECT = "bank-disconnect"
EVT_MEASUREMENT_TICK = "measurement-tick"
EVT_PARTITION_START = "partition-start"
EVT_PARTITION_END = "partition-end"


@dataclass(frozen=True)
class NodeSpec:
    id: str
    role: str
    hashrate_hps: float = 0.0  # 0 for non-miners
    peers: tuple = ()


@dataclass(frozen=True)
class Outage:
    node: str
    offline_at_s: float
    online_at_s: float | None = None  # None = stays offline


@dataclass(frozen=True)
class PartitionSpec:
    nodes: frozenset  # isolated group; links to the rest are cut
    start_s: float
    end_s: float


@dataclass(frozen=True)
class DisturbanceProfile:
    link_delay_ms: float = 0.0
    churn_rate: float = 0.0  # per-miner offline probability per epoch
    churn_epoch_s: float = 1200.0
    outages: tuple = ()
    partition: PartitionSpec | None = None

    def __post_init__(self):
        if not 0.0 <= self.churn_rate <= 1.0:
            raise ValueError("churn_rate outside [0, 1]")
        if self.link_delay_ms < 0:
            raise ValueError("negative link delay")


@dataclass(frozen=True)
class BankSchedule:
    connected_windows: tuple  # ordered disjoint (start_s, end_s)
    backhaul_bw_bps: float = 128_000.0
    bw_cost_per_bit: float = 0.0
    sync_overhead_s_per_block: float = 0.005

    def __post_init__(self):
        prev_end = None
        for start, end in self.connected_windows:
            if end <= start or (prev_end is not None and start < prev_end):
                raise ValueError("bank windows must be disjoint and ordered")
            prev_end = end


@dataclass(frozen=True)
class SimEvent:
    at: float
    kind: str
    payload: tuple


@dataclass(frozen=True)
class BlockRecord:
    number: int
    id: str
    parent_id: str | None
    miner: str
    timestamp: float
    difficulty: int
    stale: bool


@dataclass(frozen=True)
class TxRecord:
    id: str
    kind: str
    created_at: float
    included_at: float | None
    block_id: str | None


@dataclass(frozen=True)
class SyncEpisode:
    window_start_s: float
    disconnected_s: float
    backlog_bits: int
    sync_delay_s: float


@dataclass
class SimTrace:
    seed: int
    horizon_s: float
    blocks: list = field(default_factory=list)  # BlockRecord, creation order
    txs: list = field(default_factory=list)  # TxRecord, creation order
    sync_episodes: list = field(default_factory=list)
    head_updates: list = field(default_factory=list)  # (t, node, head id)
    observer_arrivals: list = field(default_factory=list)  # (t, block id, block ts)
    online_samples: list = field(default_factory=list)  # (t, online miner count)
    reorg_events: list = field(default_factory=list)  # (t, node, depth)
    blocks_by_id: dict = field(default_factory=dict)
    workload: list = field(default_factory=list)  # full generated Transaction objects
    canonical_path: list = field(default_factory=list)  # ids genesis..head
    canonical_ids: frozenset = frozenset()
    node_heads: dict = field(default_factory=dict)  # relay node -> head id
    node_online: dict = field(default_factory=dict)
    genesis_ledger: object = None
    final_ledger: object = None


def sample_block_interval(difficulty: int, online_hashrate: float, rng) -> float:
    """Exponential draw with mean difficulty / online_hashrate seconds."""
    if online_hashrate <= 0:
        raise ValueError("online hashrate must be positive")
    mean = difficulty / online_hashrate
    return max(rng.expovariate(1.0 / mean), 1e-9)


def sync_delay_s(backlog_bits: float, bw_bps: float, n_blocks: int, overhead_s_per_block: float) -> float:
    """Backhaul transfer time plus per-block processing overhead."""
    if bw_bps <= 0:
        raise ValueError("bandwidth must be positive")
    return backlog_bits / bw_bps + n_blocks * overhead_s_per_block


class _Node:
    __slots__ = (
        "spec", "online", "view", "pending", "known_txs", "headers",
        "mining_epoch", "attempts", "orphans",
    )

    def __init__(self, spec: NodeSpec, genesis: Block):
        self.spec = spec
        self.online = True
        self.view = ChainView(genesis) if spec.role != ROLE_LIGHT else None
        self.pending: dict = {}  # tx id -> Transaction, not yet on my canonical chain
        self.known_txs: set = set()
        self.headers: set = {genesis.id}  # light nodes track header ids only
        self.mining_epoch = 0
        self.attempts: dict = {}  # parent height -> restart count (mining stream key)
        self.orphans: dict = {}  # parent id -> [Block] buffered until parent arrives

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def is_relay(self) -> bool:
        return self.spec.role in RELAY_ROLES


class Simulation:
    """Single-run engine; construct with a resolved Scenario and call run()."""

    def __init__(self, scenario):
        self.scenario = scenario
        if not any(spec.role == ROLE_MINER for spec in scenario.nodes):
            raise ValueError("scenario needs at least one miner")
        self.seed = scenario.seed
        self.horizon = scenario.horizon_s
        self.delay_s = scenario.disturbance.link_delay_ms / 1000.0
        self.genesis = make_genesis(scenario.genesis)
        self.header_bits = scenario.genesis.header_bits
        self.capacity_bits = scenario.genesis.block_capacity_bits

        self.nodes: dict[str, _Node] = {}
        for spec in sorted(scenario.nodes, key=lambda s: s.id):
            if spec.id in self.nodes:
                raise ValueError(f"duplicate node id {spec.id}")
            self.nodes[spec.id] = _Node(spec, self.genesis)
        self.relay_ids = sorted(nid for nid, n in self.nodes.items() if n.is_relay)
        self.miner_ids = sorted(nid for nid, n in self.nodes.items() if n.spec.role == ROLE_MINER)
        self.bank_node = next((n for n in self.nodes.values() if n.spec.role == ROLE_BANK), None)

        self.god_view = ChainView(self.genesis)
        self.states: dict[str, object] = {}
        self.trace = SimTrace(seed=self.seed, horizon_s=self.horizon)
        self.trace.blocks_by_id[self.genesis.id] = self.genesis

        self._heap: list = []
        self._seq = 0
        self._best_arrival: dict = {}  # live message -> {node -> best arrival t}
        self._inflight: dict = {}  # live message -> pending arrival count
        self._sync_rng = substream(self.seed, "sync")
        self._bank_synced = False
        self._bank_last_disconnect = 0.0
        self._bank_plan = None  # (block ids to ingest at window end) on partial sync
        self._exchange_queue: list = []
        self._window_starts = [w[0] for w in scenario.bank.connected_windows] if scenario.bank else []

        self._bootstrap_ledger()
        self._generate_workload()

    # ------------------------------------------------------------------
    # setup
    # ------------------------------------------------------------------

    def _bootstrap_ledger(self):
        state = ledger_mod.new_ledger(
            reward_per_block=self.scenario.genesis.block_reward_tokens,
            bank_id=self.bank_node.id if self.bank_node else "bank",
        )
        for nid in self.miner_ids:
            state = ledger_mod.admit(state, nid, "miner")
        self.user_ids = sorted(
            nid for nid, n in self.nodes.items() if n.spec.role in (ROLE_LIGHT, ROLE_FULL)
        )
        for nid in self.user_ids:
            state = ledger_mod.admit(state, nid, "user")
        fiat = self.scenario.initial_fiat_cents
        tokens = self.scenario.initial_token_cents
        boot = 0
        for nid in self.user_ids:
            if fiat > 0:
                state = ledger_mod.deposit_fiat(state, nid, fiat)
            if tokens > 0:
                boot += 1
                state = ledger_mod.apply_transaction(
                    state,
                    ledger_mod.Transaction(
                        id=f"boot{boot:04d}",
                        kind=ledger_mod.KIND_EXCHANGE_TO_TOKEN,
                        sender=state.bank_id,
                        receiver=nid,
                        amount=tokens,
                        size_bits=1,
                        created_at=0.0,
                    ),
                )
        self.states[self.genesis.id] = state
        self.trace.genesis_ledger = state

    def _generate_workload(self):
        windows = self.scenario.bank.connected_windows if self.scenario.bank else ()
        config = replace(
            self.scenario.workload,
            users=tuple(self.user_ids),
            bank_id=self.bank_node.id if self.bank_node else "bank",
            bank_windows=tuple(windows),
        )
        self.workload = workload_mod.generate(config, self.horizon, substream(self.seed, "workload"))

    def _push(self, at: float, kind: str, payload: tuple = ()):
        heapq.heappush(self._heap, (at, self._seq, kind, payload))
        self._seq += 1

    def _schedule_initial_events(self):
        for tx in self.workload:
            self._push(tx.created_at, EVT_TX_CREATED, (tx,))
        for nid in self.miner_ids:
            self._schedule_mining(self.nodes[nid], 0.0)
        dist = self.scenario.disturbance
        if dist.churn_rate > 0 and dist.churn_epoch_s > 0:
            epochs = int(self.horizon // dist.churn_epoch_s) + 1
            for k in range(epochs):
                self._push(k * dist.churn_epoch_s, EVT_CHURN_TOGGLE, ("epoch", k))
        for outage in dist.outages:
            self._push(outage.offline_at_s, EVT_CHURN_TOGGLE, ("node", outage.node, False))
            if outage.online_at_s is not None:
                self._push(outage.online_at_s, EVT_CHURN_TOGGLE, ("node", outage.node, True))
        if dist.partition is not None:
            self._push(dist.partition.start_s, EVT_PARTITION_START, ())
            self._push(dist.partition.end_s, EVT_PARTITION_END, ())
        if self.scenario.bank and self.bank_node is not None:
            self.bank_node.online = False  # joins only inside windows
            for idx, (start, end) in enumerate(self.scenario.bank.connected_windows):
                self._push(start, EVT_BANK_CONNECT, ("connect", idx))
                self._push(end, EVT_BANK_DISCONNECT, (idx,))
        tick = self.scenario.measurement_tick_s
        if tick > 0:
            self._push(0.0, EVT_MEASUREMENT_TICK, ())

    # ------------------------------------------------------------------
    # connectivity
    # ------------------------------------------------------------------

    def _edge_blocked(self, a: str, b: str, at: float) -> bool:
        part = self.scenario.disturbance.partition
        if part is None or not (part.start_s <= at < part.end_s):
            return False
        return (a in part.nodes) != (b in part.nodes)

    def propagate(self, msg_kind: str, msg_id: str, origin: str, at: float):
        """Gossip-flood scheduling: one arrival per eligible peer at now + delay.

        Arrivals already scheduled at the same or an earlier time are skipped;
        with uniform link delay that prunes exactly the redundant duplicates
        (first arrival along a shortest path is what counts), and duplicate
        receipt stays a no-op either way.
        """
        key = (msg_kind, msg_id)
        best = self._best_arrival.setdefault(key, {origin: at})
        for peer_id in self.nodes[origin].spec.peers:
            peer = self.nodes[peer_id]
            if not peer.online:
                continue  # recovered later via resync
            if msg_kind == "t" and not peer.is_relay:
                continue  # light clients take headers only, not the tx stream
            if self._edge_blocked(origin, peer_id, at):
                continue
            if self._already_knows(peer, msg_kind, msg_id):
                continue
            arrival = at + self.delay_s
            prev = best.get(peer_id)
            if prev is not None and prev <= arrival:
                continue
            best[peer_id] = arrival
            self._inflight[key] = self._inflight.get(key, 0) + 1
            self._push(arrival, EVT_MESSAGE_ARRIVAL, (msg_kind, msg_id, peer_id))

    def _already_knows(self, node: _Node, msg_kind: str, msg_id: str) -> bool:
        if msg_kind == "t":
            return msg_id in node.known_txs
        if node.spec.role == ROLE_LIGHT:
            return msg_id in node.headers
        return msg_id in node.view.blocks

    def _message_done(self, key):
        left = self._inflight.get(key, 0) - 1
        if left <= 0:
            self._inflight.pop(key, None)
            self._best_arrival.pop(key, None)
        else:
            self._inflight[key] = left

    # ------------------------------------------------------------------
    # mining
    # ------------------------------------------------------------------

    def _schedule_mining(self, miner: _Node, now: float):
        if not miner.online or miner.spec.hashrate_hps <= 0:
            return
        parent = miner.view.blocks[miner.view.canonical_head]
        attempt = miner.attempts.get(parent.number, 0)
        miner.attempts[parent.number] = attempt + 1
        rng = substream(self.seed, "mining", miner.id, parent.number, attempt)
        interval = sample_block_interval(parent.difficulty, miner.spec.hashrate_hps, rng)
        self._push(now + interval, EVT_BLOCK_FOUND, (miner.id, miner.mining_epoch))

    def _bank_connected_at(self, at: float) -> bool:
        if not self.scenario.bank:
            return False
        idx = bisect_right(self._window_starts, at) - 1
        return idx >= 0 and at < self.scenario.bank.connected_windows[idx][1]

    def _build_transactions(self, miner: _Node, parent_id: str, at: float) -> tuple:
        if not miner.pending:
            return ()
        allow_exchange = self._bank_connected_at(at)
        candidates = sorted(
            miner.pending.values(),
            key=lambda tx: (0 if tx.kind in ledger_mod.EXCHANGE_KINDS else 1, tx.created_at, tx.id),
        )
        state = self.states[parent_id]
        included = []
        used_bits = 0
        for tx in candidates:
            if tx.kind in ledger_mod.EXCHANGE_KINDS and not allow_exchange:
                continue
            if self.capacity_bits is not None and used_bits + tx.size_bits > self.capacity_bits:
                continue
            try:
                state = ledger_mod.apply_transaction(state, tx)
            except ledger_mod.TransactionRejected:
                continue  # stays pending; may become valid after other inclusions
            included.append(tx)
            used_bits += tx.size_bits
        return tuple(included)

    def _on_block_found(self, at: float, miner_id: str, epoch: int):
        miner = self.nodes[miner_id]
        if epoch != miner.mining_epoch or not miner.online:
            return  # superseded: head moved or miner churned while mining
        parent_id = miner.view.canonical_head
        parent = miner.view.blocks[parent_id]
        difficulty = adjust_difficulty(parent.difficulty, parent.timestamp, at)
        txs = self._build_transactions(miner, parent_id, at)
        header = BlockHeader(
            block_number=parent.number + 1,
            parent_id=parent_id,
            timestamp=at,
            difficulty=difficulty,
            miner_id=miner_id,
        )
        block = Block(header=header, transactions=txs,
                      id=block_id(miner_id, header.block_number, at, self.scenario.genesis.nonce_seed))
        reason = validate_block(block, self.god_view, self.states[parent_id])
        if reason is not None:
            raise AssertionError(f"engine produced invalid block: {reason}")
        self.god_view.add_block(block)
        self.states[block.id] = ledger_mod.apply_block(self.states[parent_id], block)
        self.trace.blocks_by_id[block.id] = block
        self._accept_block(miner, block, at)
        self.propagate("b", block.id, miner_id, at)
        # own mining restart happens via the head change inside _accept_block

    # ------------------------------------------------------------------
    # block/tx intake
    # ------------------------------------------------------------------

    def _accept_block(self, node: _Node, block: Block, at: float, relay: bool = True) -> bool:
        if node.spec.role == ROLE_LIGHT:
            node.headers.add(block.id)
            return False
        if block.id in node.view.blocks:
            return False
        if block.parent_id not in node.view.blocks:
            node.orphans.setdefault(block.parent_id, []).append(block)
            return False
        old_head = node.view.canonical_head
        node.view.add_block(block)
        if node.id == self.scenario.observer:
            self.trace.observer_arrivals.append((at, block.id, block.timestamp))
        new_head = node.view.canonical_head
        if new_head != old_head:
            self._on_head_change(node, old_head, new_head, at)
        if relay:
            self.propagate("b", block.id, node.id, at)
        for child in node.orphans.pop(block.id, []):
            self._accept_block(node, child, at, relay=relay)
        return True

    def _on_head_change(self, node: _Node, old_head: str, new_head: str, at: float):
        view = node.view
        ancestor = view.common_ancestor(old_head, new_head)
        depth = view.height(old_head) - view.height(ancestor)
        if depth > 0:
            self.trace.reorg_events.append((at, node.id, depth))
            bid = old_head
            while bid != ancestor:  # rolled-back transactions return to the pool
                rolled = view.blocks[bid]
                for tx in rolled.transactions:
                    node.pending[tx.id] = tx
                bid = rolled.parent_id
        bid = new_head
        while bid != ancestor:
            adopted = view.blocks[bid]
            for tx in adopted.transactions:
                node.pending.pop(tx.id, None)
            bid = adopted.parent_id
        self.trace.head_updates.append((at, node.id, new_head))
        if node.spec.role == ROLE_MINER:
            node.mining_epoch += 1
            self._schedule_mining(node, at)

    def _on_tx_created(self, at: float, tx):
        if tx.kind in ledger_mod.EXCHANGE_KINDS:
            if self.bank_node is None:
                return
            if self.bank_node.online and self._bank_synced:
                self._intake_tx(self.bank_node, tx, at)
            else:
                self._exchange_queue.append(tx)
            return
        origin = self.nodes[tx.sender]
        if not origin.online:
            return  # sender cannot broadcast; surfaces as an unincluded tx
        self._intake_tx(origin, tx, at)

    def _intake_tx(self, node: _Node, tx, at: float):
        if tx.id in node.known_txs:
            return
        node.known_txs.add(tx.id)
        if node.is_relay:
            node.pending[tx.id] = tx
        self.propagate("t", tx.id, node.id, at)

    def _on_message_arrival(self, at: float, msg_kind: str, msg_id: str, node_id: str):
        key = (msg_kind, msg_id)
        self._message_done(key)
        node = self.nodes[node_id]
        if not node.online:
            return  # dropped; churned nodes catch up via resync
        if msg_kind == "t":
            if msg_id in node.known_txs:
                return
            node.known_txs.add(msg_id)
            tx = self._tx_by_id(msg_id)
            if node.is_relay:
                node.pending[msg_id] = tx
            self.propagate("t", msg_id, node_id, at)
            return
        block = self.trace.blocks_by_id[msg_id]
        self._accept_block(node, block, at)

    def _tx_by_id(self, tx_id: str):
        return self._tx_index[tx_id]

    # ------------------------------------------------------------------
    # churn / partition / bank
    # ------------------------------------------------------------------

    def churn_toggle(self, node_id: str, online: bool, at: float):
        node = self.nodes[node_id]
        if node.online == online:
            return
        node.online = online
        node.mining_epoch += 1  # cancels any in-flight mining draw
        if online:
            self._resync(node, at)
            if node.spec.role == ROLE_MINER:
                self._schedule_mining(node, at)

    def _resync(self, node: _Node, at: float, pool: list | None = None):
        """Fetch everything unknown from one random online peer, then re-select."""
        if pool is None:
            pool = [
                nid for nid in self.relay_ids
                if nid != node.id and self.nodes[nid].online
                and not self._edge_blocked(node.id, nid, at)
            ]
        if not pool:
            return
        peer = self.nodes[self._sync_rng.choice(pool)]
        self._ingest_view(node, peer.view, at)

    def _ingest_view(self, node: _Node, src_view: ChainView, at: float):
        missing = [b for bid, b in src_view.blocks.items() if bid not in node.view.blocks]
        missing.sort(key=lambda b: (b.number, b.timestamp, b.id))
        for block in missing:
            self._accept_block(node, block, at)

    def _on_churn_event(self, at: float, payload):
        if payload[0] == "node":
            _, node_id, online = payload
            self.churn_toggle(node_id, online, at)
            return
        _, epoch = payload
        rate = self.scenario.disturbance.churn_rate
        for nid in self.miner_ids:
            offline = substream(self.seed, "churn", epoch, nid).random() < rate
            self.churn_toggle(nid, not offline, at)

    def _on_partition_end(self, at: float):
        part = self.scenario.disturbance.partition
        inside = sorted(n for n in part.nodes if n in self.nodes)
        outside = [nid for nid in self.relay_ids if nid not in part.nodes]
        for nid in self.relay_ids:
            node = self.nodes[nid]
            if not node.online:
                continue
            other_side = outside if nid in part.nodes else [n for n in inside if self.nodes[n].is_relay]
            pool = [p for p in other_side if self.nodes[p].online]
            self._resync(node, at, pool=pool)

    def bank_sync(self, window: tuple, at: float) -> float:
        """Estimate and schedule the bank's catch-up for one connected window."""
        bank = self.bank_node
        start, end = window
        peers = [nid for nid in self.relay_ids if nid != bank.id and self.nodes[nid].online]
        src_view = self.nodes[self._sync_rng.choice(peers)].view if peers else bank.view
        missing = [b for bid, b in src_view.blocks.items() if bid not in bank.view.blocks]
        missing.sort(key=lambda b: (b.number, b.timestamp, b.id))
        backlog_bits = sum(
            self.header_bits + sum(tx.size_bits for tx in b.transactions) for b in missing
        )
        schedule = self.scenario.bank
        delay = sync_delay_s(backlog_bits, schedule.backhaul_bw_bps, len(missing),
                             schedule.sync_overhead_s_per_block)
        self.trace.sync_episodes.append(
            SyncEpisode(
                window_start_s=start,
                disconnected_s=start - self._bank_last_disconnect,
                backlog_bits=backlog_bits,
                sync_delay_s=delay,
            )
        )
        if delay <= end - start:
            self._push(start + delay, EVT_BANK_CONNECT, ("synced", tuple(b.id for b in missing)))
        else:
            # window too short: ingest only what the backhaul can move, carry the rest
            budget = (end - start) * schedule.backhaul_bw_bps
            prefix = []
            used = 0.0
            for b in missing:
                bits = self.header_bits + sum(tx.size_bits for tx in b.transactions)
                if used + bits > budget:
                    break
                used += bits
                prefix.append(b.id)
            self._bank_plan = tuple(prefix)
        return delay

    def _on_bank_connect(self, at: float, payload):
        phase = payload[0]
        bank = self.bank_node
        if phase == "connect":
            idx = payload[1]
            bank.online = True
            self._bank_synced = False
            self.bank_sync(self.scenario.bank.connected_windows[idx], at)
            return
        # phase == "synced": ingest the backlog, then release queued exchanges
        for bid in payload[1]:
            self._accept_block(bank, self.trace.blocks_by_id[bid], at)
        if not bank.online:
            return  # window closed at the very instant the sync finished
        self._bank_synced = True
        queued, self._exchange_queue = self._exchange_queue, []
        for tx in queued:
            self._intake_tx(bank, tx, at)

    def _on_bank_disconnect(self, at: float):
        bank = self.bank_node
        if self._bank_plan is not None:
            for bid in self._bank_plan:
                self._accept_block(bank, self.trace.blocks_by_id[bid], at)
            self._bank_plan = None
        bank.online = False
        self._bank_synced = False
        self._bank_last_disconnect = at

    # ------------------------------------------------------------------
    # main loop
    # ------------------------------------------------------------------

    def run(self) -> SimTrace:
        self._tx_index = {tx.id: tx for tx in self.workload}
        self._schedule_initial_events()
        heap = self._heap
        while heap and heap[0][0] <= self.horizon:
            at, _, kind, payload = heapq.heappop(heap)
            if kind == EVT_MESSAGE_ARRIVAL:
                self._on_message_arrival(at, *payload)
            elif kind == EVT_BLOCK_FOUND:
                self._on_block_found(at, *payload)
            elif kind == EVT_TX_CREATED:
                self._on_tx_created(at, payload[0])
            elif kind == EVT_CHURN_TOGGLE:
                self._on_churn_event(at, payload)
            elif kind == EVT_BANK_CONNECT:
                self._on_bank_connect(at, payload)
            elif kind == EVT_BANK_DISCONNECT:
                self._on_bank_disconnect(at)
            elif kind == EVT_MEASUREMENT_TICK:
                count = sum(1 for nid in self.miner_ids if self.nodes[nid].online)
                self.trace.online_samples.append((at, count))
                self._push(at + self.scenario.measurement_tick_s, EVT_MEASUREMENT_TICK, ())
            elif kind == EVT_PARTITION_START:
                pass  # edges start dropping via _edge_blocked; mining continues per side
            elif kind == EVT_PARTITION_END:
                self._on_partition_end(at)
            else:
                raise AssertionError(f"unknown event kind {kind}")
        self._finalize()
        return self.trace

    def _finalize(self):
        trace = self.trace
        canonical = self.god_view.path_from_genesis()
        trace.canonical_path = [b.id for b in canonical]
        trace.canonical_ids = frozenset(trace.canonical_path)
        included = {}
        for block in canonical:
            for tx in block.transactions:
                included[tx.id] = (block.timestamp, block.id)
        for block in sorted(self.god_view.blocks.values(), key=lambda b: self.god_view._order[b.id]):
            if block.number == 0:
                continue
            trace.blocks.append(
                BlockRecord(
                    number=block.number,
                    id=block.id,
                    parent_id=block.parent_id,
                    miner=block.miner_id,
                    timestamp=block.timestamp,
                    difficulty=block.difficulty,
                    stale=block.id not in trace.canonical_ids,
                )
            )
        for tx in self.workload:
            hit = included.get(tx.id)
            trace.txs.append(
                TxRecord(
                    id=tx.id,
                    kind=tx.kind,
                    created_at=tx.created_at,
                    included_at=hit[0] if hit else None,
                    block_id=hit[1] if hit else None,
                )
            )
        for nid in self.relay_ids:
            node = self.nodes[nid]
            trace.node_heads[nid] = node.view.canonical_head
            trace.node_online[nid] = node.online
        trace.workload = self.workload
        trace.final_ledger = self.states[self.god_view.canonical_head]


def run(scenario) -> SimTrace:
    """Execute one scenario deterministically; all randomness comes from its seed."""
    return Simulation(scenario).run()


# ----------------------------------------------------------------------
# trace serialization
# ----------------------------------------------------------------------

def write_blocks_csv(trace: SimTrace, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["number", "id", "parent", "miner", "timestamp", "difficulty", "stale"])
        for rec in trace.blocks:
            writer.writerow(
                [rec.number, rec.id, rec.parent_id, rec.miner, repr(rec.timestamp), rec.difficulty,
                 int(rec.stale)]
            )


def write_txs_csv(trace: SimTrace, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "kind", "created_at", "included_at", "block"])
        for rec in trace.txs:
            writer.writerow(
                [rec.id, rec.kind, repr(rec.created_at),
                 "" if rec.included_at is None else repr(rec.included_at),
                 rec.block_id or ""]
            )


def write_sync_csv(trace: SimTrace, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start", "disconnected_s", "backlog_bits", "sync_delay_s"])
        for ep in trace.sync_episodes:
            writer.writerow(
                [repr(ep.window_start_s), repr(ep.disconnected_s), ep.backlog_bits,
                 repr(ep.sync_delay_s)]
            )
