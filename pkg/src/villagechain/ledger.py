"""Account balances, currency exchange, rewards, admission, and partition detection.

LedgerState is an immutable value; every operation returns a fresh state and
shares untouched Account records, so per-block snapshots are cheap and replays
are exactly reproducible.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

KIND_REGULAR = "regular"
KIND_EXCHANGE_TO_TOKEN = "exchange_to_token"
KIND_EXCHANGE_TO_FIAT = "exchange_to_fiat"
EXCHANGE_KINDS = (KIND_EXCHANGE_TO_TOKEN, KIND_EXCHANGE_TO_FIAT)

REJECT_INSUFFICIENT_FUNDS = "insufficient-funds"
REJECT_UNKNOWN_ACCOUNT = "unknown-account"


class LedgerError(Exception):
    """Misuse of the ledger API (duplicate admission, out-of-order block, ...)."""


class TransactionRejected(LedgerError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Account:
    owner: str
    fiat_balance: int = 0  # fiat cents
    token_balance: int = 0


@dataclass(frozen=True)
class Transaction:
    id: str
    kind: str
    sender: str
    receiver: str
    amount: int  # Tokens; 1 Token converts 1:1 against one fiat cent
    size_bits: int
    created_at: float

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("transaction amount must be positive")


@dataclass(frozen=True)
class LedgerState:
    accounts: dict
    admitted_miners: frozenset
    admitted_users: frozenset
    reward_per_block: int
    bank_id: str = "bank"
    total_rewards_paid: int = 0
    tokens_exchanged_in: int = 0
    tokens_exchanged_out: int = 0
    fiat_deposited: int = 0
    applied_block_number: int = 0


def new_ledger(reward_per_block: int, bank_id: str = "bank") -> LedgerState:
    """Empty state holding only the bank's own account."""
    return LedgerState(
        accounts={bank_id: Account(bank_id)},
        admitted_miners=frozenset(),
        admitted_users=frozenset(),
        reward_per_block=reward_per_block,
        bank_id=bank_id,
    )


def admit(state: LedgerState, node: str, role: str) -> LedgerState:
    """Authorize a node as a miner or user; creates an empty account if absent."""
    if role == "miner":
        if node in state.admitted_miners:
            raise LedgerError(f"{node} already admitted as miner")
        miners, users = state.admitted_miners | {node}, state.admitted_users
    elif role == "user":
        if node in state.admitted_users:
            raise LedgerError(f"{node} already admitted as user")
        miners, users = state.admitted_miners, state.admitted_users | {node}
    else:
        raise LedgerError(f"unknown role {role!r}")
    accounts = state.accounts
    if node not in accounts:
        accounts = dict(accounts)
        accounts[node] = Account(node)
    return replace(state, accounts=accounts, admitted_miners=miners, admitted_users=users)


def expel(state: LedgerState, node: str, role: str) -> LedgerState:
    """Inverse of admit; the account and its balances survive."""
    if role == "miner":
        if node not in state.admitted_miners:
            raise LedgerError(f"{node} is not an admitted miner")
        return replace(state, admitted_miners=state.admitted_miners - {node})
    if role == "user":
        if node not in state.admitted_users:
            raise LedgerError(f"{node} is not an admitted user")
        return replace(state, admitted_users=state.admitted_users - {node})
    raise LedgerError(f"unknown role {role!r}")


def deposit_fiat(state: LedgerState, node: str, cents: int) -> LedgerState:
    """Record an out-of-band cash deposit into a node's fiat account."""
    if cents <= 0:
        raise LedgerError("deposit must be positive")
    account = state.accounts.get(node)
    if account is None:
        raise TransactionRejected(REJECT_UNKNOWN_ACCOUNT)
    accounts = dict(state.accounts)
    accounts[node] = replace(account, fiat_balance=account.fiat_balance + cents)
    return replace(state, accounts=accounts, fiat_deposited=state.fiat_deposited + cents)


def _admitted_party(state: LedgerState, node: str) -> bool:
    return node in state.admitted_users or node in state.admitted_miners


def apply_transaction(state: LedgerState, tx: Transaction) -> LedgerState:
    """Apply one transaction, or raise TransactionRejected with a reason code.

    regular            peer tokens -> peer tokens (the bank never takes part)
    exchange_to_token  the non-bank party's fiat converts 1:1 into tokens
    exchange_to_fiat   the non-bank party's tokens convert 1:1 back into fiat
    """
    if tx.kind == KIND_REGULAR:
        if not _admitted_party(state, tx.sender) or not _admitted_party(state, tx.receiver):
            raise TransactionRejected(REJECT_UNKNOWN_ACCOUNT)
        sender = state.accounts[tx.sender]
        receiver = state.accounts[tx.receiver]
        if sender.token_balance < tx.amount:
            raise TransactionRejected(REJECT_INSUFFICIENT_FUNDS)
        accounts = dict(state.accounts)
        accounts[tx.sender] = replace(sender, token_balance=sender.token_balance - tx.amount)
        receiver = accounts[tx.receiver]
        accounts[tx.receiver] = replace(receiver, token_balance=receiver.token_balance + tx.amount)
        return replace(state, accounts=accounts)

    if tx.kind in EXCHANGE_KINDS:
        parties = {tx.sender, tx.receiver}
        if state.bank_id not in parties:
            raise TransactionRejected(REJECT_UNKNOWN_ACCOUNT)
        others = parties - {state.bank_id}
        if len(others) != 1:
            raise TransactionRejected(REJECT_UNKNOWN_ACCOUNT)
        user_id = others.pop()
        if not _admitted_party(state, user_id):
            raise TransactionRejected(REJECT_UNKNOWN_ACCOUNT)
        user = state.accounts[user_id]
        accounts = dict(state.accounts)
        if tx.kind == KIND_EXCHANGE_TO_TOKEN:
            if user.fiat_balance < tx.amount:
                raise TransactionRejected(REJECT_INSUFFICIENT_FUNDS)
            accounts[user_id] = replace(
                user,
                fiat_balance=user.fiat_balance - tx.amount,
                token_balance=user.token_balance + tx.amount,
            )
            return replace(state, accounts=accounts, tokens_exchanged_in=state.tokens_exchanged_in + tx.amount)
        if user.token_balance < tx.amount:
            raise TransactionRejected(REJECT_INSUFFICIENT_FUNDS)
        accounts[user_id] = replace(
            user,
            fiat_balance=user.fiat_balance + tx.amount,
            token_balance=user.token_balance - tx.amount,
        )
        return replace(state, accounts=accounts, tokens_exchanged_out=state.tokens_exchanged_out + tx.amount)

    raise LedgerError(f"unknown transaction kind {tx.kind!r}")


def reward_miner(state: LedgerState, miner: str) -> LedgerState:
    """Mint the per-block reward into the miner's token account."""
    if miner not in state.admitted_miners:
        raise LedgerError(f"{miner} is not an admitted miner")
    reward = state.reward_per_block
    accounts = dict(state.accounts)
    account = accounts[miner]
    accounts[miner] = replace(account, token_balance=account.token_balance + reward)
    return replace(state, accounts=accounts, total_rewards_paid=state.total_rewards_paid + reward)


def apply_block(state: LedgerState, block) -> LedgerState:
    """Apply a validated block: its transactions in order, then the miner reward."""
    if state.applied_block_number != block.number - 1:
        raise LedgerError(
            f"out-of-order application: block {block.number} onto state at {state.applied_block_number}"
        )
    for tx in block.transactions:
        try:
            state = apply_transaction(state, tx)
        except TransactionRejected as exc:
            raise LedgerError(f"block {block.id} carries invalid transaction {tx.id}: {exc.reason}")
    state = reward_miner(state, block.miner_id)
    return replace(state, applied_block_number=block.number)


def token_supply(state: LedgerState) -> int:
    return sum(acct.token_balance for acct in state.accounts.values())


def fiat_supply(state: LedgerState) -> int:
    return sum(acct.fiat_balance for acct in state.accounts.values())


def conservation_ok(state: LedgerState) -> bool:
    """Tokens: rewards + net exchange. Fiat: deposits - net exchange."""
    tokens_expected = state.total_rewards_paid + state.tokens_exchanged_in - state.tokens_exchanged_out
    fiat_expected = state.fiat_deposited - state.tokens_exchanged_in + state.tokens_exchanged_out
    return token_supply(state) == tokens_expected and fiat_supply(state) == fiat_expected


def detect_partition(connections: dict, start: str) -> list[set]:
    """Group nodes into connectivity closures, starting from ``start``.

    Walks the peer sets breadth-first (the closure P1, P2, ... until no new
    set escapes the union); if nodes remain unreached, the walk repeats on
    them, so the result is one set per disconnected subgraph.
    """
    if start not in connections:
        raise ValueError(f"start node {start!r} has no connection entry")

    def closure(seed: str, allowed: set) -> set:
        reached = {seed}
        frontier = [seed]
        while frontier:
            nxt = []
            for node in frontier:
                for peer in sorted(connections.get(node, ())):
                    if peer in allowed and peer not in reached:
                        reached.add(peer)
                        nxt.append(peer)
            frontier = nxt
        return reached

    remaining = set(connections)
    groups = [closure(start, remaining)]
    remaining -= groups[0]
    while remaining:
        seed = min(remaining)
        group = closure(seed, remaining)
        groups.append(group)
        remaining -= group
    return groups


def export_ledger_csv(state: LedgerState, path) -> None:
    """Snapshot to CSV rows (node_id, fiat_balance, token_balance, role)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "fiat_balance", "token_balance", "role"])
        for node in sorted(state.accounts):
            acct = state.accounts[node]
            if node == state.bank_id:
                role = "bank"
            else:
                roles = []
                if node in state.admitted_miners:
                    roles.append("miner")
                if node in state.admitted_users:
                    roles.append("user")
                role = "+".join(roles) if roles else "none"
            writer.writerow([node, acct.fiat_balance, acct.token_balance, role])
