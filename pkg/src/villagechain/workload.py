"""Stochastic transaction generation: Poisson peer traffic plus window-gated exchanges."""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field

from .ledger import KIND_EXCHANGE_TO_FIAT, KIND_EXCHANGE_TO_TOKEN, KIND_REGULAR, Transaction


@dataclass(frozen=True)
class WorkloadConfig:
    regular_tps: float  # lambda_t
    exchange_tps: float = 0.0  # lambda_e, active only inside connected windows
    regular_tx_bits: int = 4000  # s_t
    exchange_tx_bits: int = 4000  # s_e
    amount_min: int = 1
    amount_max: int = 100
    users: tuple = ()
    bank_id: str = "bank"
    bank_windows: tuple = ()  # ordered (start_s, end_s) pairs

    def __post_init__(self):
        if self.regular_tps < 0 or self.exchange_tps < 0:
            raise ValueError("arrival rates must be non-negative")
        if self.amount_min < 1 or self.amount_max < self.amount_min:
            raise ValueError("bad amount range")


def generate(config: WorkloadConfig, horizon_s: float, rng: random.Random) -> list[Transaction]:
    """Draw the full transaction sequence for one run.

    Regular inter-arrivals are exponential at the configured rate; senders and
    receivers are uniform over the user pool (redraw on self-send). Exchange
    arrivals run only inside the bank's connected windows, direction 50/50.
    created_at is strictly increasing across the merged sequence.
    """
    if horizon_s <= 0:
        raise ValueError("horizon must be positive")
    regular = []
    if config.regular_tps > 0 and len(config.users) >= 2:
        t = 0.0
        seq = 0
        while True:
            t += rng.expovariate(config.regular_tps)
            if t >= horizon_s:
                break
            seq += 1
            sender = rng.choice(config.users)
            receiver = rng.choice(config.users)
            while receiver == sender:
                receiver = rng.choice(config.users)
            regular.append(
                Transaction(
                    id=f"r{seq:07d}",
                    kind=KIND_REGULAR,
                    sender=sender,
                    receiver=receiver,
                    amount=rng.randint(config.amount_min, config.amount_max),
                    size_bits=config.regular_tx_bits,
                    created_at=t,
                )
            )

    exchange = []
    if config.exchange_tps > 0 and config.users:
        seq = 0
        for start, end in config.bank_windows:
            t = start
            stop = min(end, horizon_s)
            while True:
                t += rng.expovariate(config.exchange_tps)
                if t >= stop:
                    break
                seq += 1
                user = rng.choice(config.users)
                to_token = rng.random() < 0.5
                exchange.append(
                    Transaction(
                        id=f"e{seq:07d}",
                        kind=KIND_EXCHANGE_TO_TOKEN if to_token else KIND_EXCHANGE_TO_FIAT,
                        sender=config.bank_id if to_token else user,
                        receiver=user if to_token else config.bank_id,
                        amount=rng.randint(config.amount_min, config.amount_max),
                        size_bits=config.exchange_tx_bits,
                        created_at=t,
                    )
                )

    merged = sorted(regular + exchange, key=lambda tx: (tx.created_at, tx.id))
    out = []
    prev = 0.0
    for tx in merged:
        t = tx.created_at
        if t <= prev:
            t = math.nextafter(prev, math.inf)
            tx = Transaction(tx.id, tx.kind, tx.sender, tx.receiver, tx.amount, tx.size_bits, t)
        out.append(tx)
        prev = t
    return out


WORKLOAD_FIELDS = ["id", "kind", "sender", "receiver", "amount", "size_bits", "created_at"]


def export_workload_csv(transactions, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WORKLOAD_FIELDS)
        for tx in transactions:
            writer.writerow([tx.id, tx.kind, tx.sender, tx.receiver, tx.amount, tx.size_bits, repr(tx.created_at)])


def import_workload_csv(path) -> list[Transaction]:
    """Replay file loader; inverse of export_workload_csv."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != WORKLOAD_FIELDS:
            raise ValueError(f"unexpected workload columns: {reader.fieldnames}")
        for row in reader:
            out.append(
                Transaction(
                    id=row["id"],
                    kind=row["kind"],
                    sender=row["sender"],
                    receiver=row["receiver"],
                    amount=int(row["amount"]),
                    size_bits=int(row["size_bits"]),
                    created_at=float(row["created_at"]),
                )
            )
    return out
