"""Core blockchain data structures and consensus rules.

Blocks are pure values; a ChainView holds every block a node knows about,
tracks leaf heads, and picks the canonical head by total difficulty with a
first-seen tie break. Difficulty retargets per block from the timestamp gap
to its parent.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

DIFFICULTY_DIVISOR = 2048
MIN_DIFFICULTY = 1024
GENESIS_MINER = "genesis"


def block_id(miner_id: str, block_number: int, timestamp: float, nonce_seed: int) -> str:
    """Deterministic 64-bit hash surrogate; identity only, no preimage resistance."""
    key = f"{miner_id}|{block_number}|{timestamp!r}|{nonce_seed}"
    return hashlib.blake2b(key.encode(), digest_size=8).hexdigest()


@dataclass(frozen=True)
class BlockHeader:
    block_number: int
    parent_id: str | None
    timestamp: float
    difficulty: int
    miner_id: str


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple
    id: str

    @property
    def number(self) -> int:
        return self.header.block_number

    @property
    def parent_id(self) -> str | None:
        return self.header.parent_id

    @property
    def timestamp(self) -> float:
        return self.header.timestamp

    @property
    def difficulty(self) -> int:
        return self.header.difficulty

    @property
    def miner_id(self) -> str:
        return self.header.miner_id


@dataclass(frozen=True)
class GenesisConfig:
    nonce_seed: int = 0x42
    initial_difficulty: int = 0x400000
    block_capacity_bits: int | None = None  # None = unlimited
    block_reward_tokens: int = 5
    header_bits: int = 2000

    def __post_init__(self):
        if self.initial_difficulty < MIN_DIFFICULTY:
            raise ValueError("initial_difficulty below the minimum difficulty floor")


def adjust_difficulty(
    parent_difficulty: int,
    parent_timestamp: float,
    block_timestamp: float,
    minimum_difficulty: int = MIN_DIFFICULTY,
) -> int:
    """Retarget difficulty from the parent difficulty and the timestamp gap.

    The change is always a multiple of parent_difficulty // 2048, scaled by a
    factor ``a`` derived from dt = block_timestamp - parent_timestamp:

        dt < 10:        a = 1           (speed up: raise difficulty)
        10 <= dt < 20:  a = 0           (neutral band)
        dt >= 20:       a = 1 - dt//10  (slow down proportionally, floor -99)

    All four bands collapse into a = max(-99, 1 - floor(dt / 10)). The result
    is clamped to ``minimum_difficulty``.
    """
    dt = block_timestamp - parent_timestamp
    if dt <= 0:
        raise ValueError(f"non-positive timestamp gap: {dt}")
    a = max(-99, 1 - int(dt // 10))
    adjusted = parent_difficulty + (parent_difficulty // DIFFICULTY_DIVISOR) * a
    return max(minimum_difficulty, adjusted)


def make_genesis(config: GenesisConfig) -> Block:
    """Block number 0: no parent, no transactions, the configured difficulty."""
    header = BlockHeader(
        block_number=0,
        parent_id=None,
        timestamp=0.0,
        difficulty=config.initial_difficulty,
        miner_id=GENESIS_MINER,
    )
    return Block(header=header, transactions=(), id=block_id(GENESIS_MINER, 0, 0.0, config.nonce_seed))


class ChainView:
    """One node's view of the block tree.

    Blocks must be inserted parent-first. Receipt order is recorded for the
    first-seen tie break; cumulative difficulty is maintained incrementally so
    head selection is O(heads).
    """

    def __init__(self, genesis: Block):
        self.genesis_id = genesis.id
        self.blocks: dict[str, Block] = {genesis.id: genesis}
        self.heads: set[str] = {genesis.id}
        self.canonical_head: str = genesis.id
        self._cum: dict[str, int] = {genesis.id: genesis.difficulty}
        self._order: dict[str, int] = {genesis.id: 0}
        self._next_seq = 1

    def __contains__(self, bid: str) -> bool:
        return bid in self.blocks

    def add_block(self, block: Block) -> None:
        if block.id in self.blocks:
            return
        parent = self.blocks.get(block.parent_id)
        if parent is None:
            raise ValueError(f"unknown parent {block.parent_id}")
        if block.timestamp <= parent.timestamp:
            raise ValueError("block timestamp not after parent timestamp")
        if block.number != parent.number + 1:
            raise ValueError("block number must increment parent's")
        self.blocks[block.id] = block
        self._cum[block.id] = self._cum[parent.id] + block.difficulty
        self._order[block.id] = self._next_seq
        self._next_seq += 1
        self.heads.discard(parent.id)
        self.heads.add(block.id)
        self.canonical_head = select_canonical(self)

    def path_from_genesis(self, head: str | None = None) -> list[Block]:
        """Blocks genesis..head inclusive along parent links."""
        hid = head if head is not None else self.canonical_head
        path = []
        while hid is not None:
            block = self.blocks[hid]
            path.append(block)
            hid = block.parent_id
        path.reverse()
        return path

    def common_ancestor(self, a: str, b: str) -> str:
        """Deepest block on both root paths; used for reorg accounting."""
        ba, bb = self.blocks[a], self.blocks[b]
        while ba.number > bb.number:
            ba = self.blocks[ba.parent_id]
        while bb.number > ba.number:
            bb = self.blocks[bb.parent_id]
        while ba.id != bb.id:
            ba = self.blocks[ba.parent_id]
            bb = self.blocks[bb.parent_id]
        return ba.id

    def height(self, bid: str) -> int:
        return self.blocks[bid].number


def total_difficulty(chain: ChainView, head: str) -> int:
    """Sum of difficulty over the path head -> genesis inclusive."""
    if head not in chain.blocks:
        raise ValueError(f"unknown head id {head}")
    return chain._cum[head]


def select_canonical(chain: ChainView) -> str:
    """Head with maximum total difficulty; exact ties go to the first-seen block."""
    if not chain.heads:
        raise ValueError("chain has no heads")
    return max(chain.heads, key=lambda h: (chain._cum[h], -chain._order[h]))


REJECT_UNKNOWN_PARENT = "unknown-parent"
REJECT_BAD_TIMESTAMP = "bad-timestamp"
REJECT_BAD_DIFFICULTY = "bad-difficulty"
REJECT_BAD_TRANSACTION = "bad-transaction"
REJECT_UNAUTHORIZED_MINER = "unauthorized-miner"


def validate_block(block: Block, chain: ChainView, ledger) -> str | None:
    """Full block check against a chain view and the ledger state at its parent.

    Returns None on accept, otherwise a machine-readable reason code.
    ``ledger`` is the LedgerState reached by replaying up to the parent;
    signatures are abstracted away, so transaction validity is balance/account
    validity under sequential application.
    """
    from . import ledger as ledger_mod

    parent = chain.blocks.get(block.parent_id)
    if parent is None:
        return REJECT_UNKNOWN_PARENT
    if block.timestamp <= parent.timestamp or block.number != parent.number + 1:
        return REJECT_BAD_TIMESTAMP
    expected = adjust_difficulty(parent.difficulty, parent.timestamp, block.timestamp)
    if block.difficulty != expected:
        return REJECT_BAD_DIFFICULTY
    if block.miner_id not in ledger.admitted_miners:
        return REJECT_UNAUTHORIZED_MINER
    state = ledger
    for tx in block.transactions:
        try:
            state = ledger_mod.apply_transaction(state, tx)
        except ledger_mod.TransactionRejected:
            return REJECT_BAD_TRANSACTION
    return None
