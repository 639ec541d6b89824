"""Closed-form design calculators for dimensioning the payment network.

Covers the deployment cost model, miner-outage statistics, per-miner mining
profitability, the minimal-connectivity bound for bounded-hop gossip, and a
standalone Monte Carlo of the transaction-processing model used to validate
the full simulator.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class CostInputs:
    device_cost_tokens: float  # d_m, per mining device
    miners: int  # l_m
    device_lifetime_years: float  # x_m
    reward_tokens_per_block: float  # R
    bw_cost_tokens_per_bit: float  # C_BW
    backhaul_bw_bps: float  # BW
    connected_s_per_period: float  # T_C
    years: float  # x_y
    blocks: float  # x_b
    service_periods: float  # x_s


@dataclass(frozen=True)
class ProfitInputs:
    reward_tokens_per_block: float  # R
    cost_tokens_per_hash: float  # eta
    hashrate_hps: float  # h, per miner
    mean_block_interval_s: float  # E[T]
    miners: int  # l_m


@dataclass(frozen=True)
class ConnectivityInputs:
    miners: int  # l_m
    max_hops: int  # k


def expected_block_bits(regular_tps: float, tx_bits: float, mean_block_interval_s: float) -> float:
    """Average transaction payload a block must accommodate: rate * size * E[T]."""
    if regular_tps < 0 or tx_bits < 0 or mean_block_interval_s < 0:
        raise ValueError("inputs must be non-negative")
    return regular_tps * tx_bits * mean_block_interval_s


def system_cost(inputs: CostInputs) -> float:
    """Total cost over the accounting window: equipment + rewards + backhaul.

    cost = l_m * (d_m / x_m) * x_y  +  R * x_b  +  C_BW * T_C * BW * x_s
    """
    equipment = inputs.miners * (inputs.device_cost_tokens / inputs.device_lifetime_years) * inputs.years
    rewards = inputs.reward_tokens_per_block * inputs.blocks
    network = inputs.bw_cost_tokens_per_bit * inputs.connected_s_per_period * inputs.backhaul_bw_bps
    return equipment + rewards + network * inputs.service_periods


def poisson_binomial_pmf(probabilities, k: int) -> float:
    """P(exactly k of the independent events fire), each with its own probability.

    Exact O(n*k) convolution; equals the exponential subset-sum definition.
    """
    probs = list(probabilities)
    if not 0 <= k <= len(probs):
        raise ValueError(f"k={k} out of range for {len(probs)} probabilities")
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
    dist = [1.0]
    for p in probs:
        nxt = [0.0] * (len(dist) + 1)
        for count, mass in enumerate(dist):
            nxt[count] += mass * (1.0 - p)
            nxt[count + 1] += mass * p
        dist = nxt
    return dist[k]


def expected_online(miners: int, offline_probability: float) -> float:
    """Mean number of simultaneously online miners under uniform churn."""
    if not 0.0 <= offline_probability <= 1.0:
        raise ValueError("offline probability outside [0, 1]")
    return miners * (1.0 - offline_probability)


def required_miners(target_online: float, offline_probability: float) -> float:
    """Miner count needed so the online mean reaches the target."""
    if not 0.0 <= offline_probability < 1.0:
        raise ValueError("offline probability must be in [0, 1)")
    return target_online / (1.0 - offline_probability)


def expected_profit(inputs: ProfitInputs) -> float:
    """Expected per-block profit of one miner: R / l_m - eta * h * T."""
    if inputs.miners < 1:
        raise ValueError("miner count must be at least 1")
    hash_cost = inputs.cost_tokens_per_hash * inputs.hashrate_hps * inputs.mean_block_interval_s
    return inputs.reward_tokens_per_block / inputs.miners - hash_cost


def max_profitable_miners(
    reward_tokens_per_block: float,
    cost_tokens_per_hash: float,
    hashrate_hps: float,
    mean_block_interval_s: float,
) -> int:
    """Largest miner count whose expected per-block profit stays strictly positive."""
    per_block_cost = cost_tokens_per_hash * hashrate_hps * mean_block_interval_s
    if per_block_cost <= 0:
        raise ValueError("hash cost must be positive")
    if reward_tokens_per_block <= per_block_cost:
        return 0
    bound = int(math.floor(reward_tokens_per_block / per_block_cost))
    # float floor can land on either side of the strict inequality; settle it exactly
    while reward_tokens_per_block / bound - per_block_cost <= 0:
        bound -= 1
    while reward_tokens_per_block / (bound + 1) - per_block_cost > 0:
        bound += 1
    return bound


def gossip_reach(connections: int, max_hops: int) -> int:
    """Nodes reachable in at most max_hops when everyone keeps `connections` peers."""
    return 1 + connections * sum((connections - 1) ** i for i in range(max_hops))


def min_connections(inputs: ConnectivityInputs) -> tuple[int, float]:
    """Smallest per-miner peer count whose bounded-hop flood covers all miners.

    Returns (l_c, gamma) where gamma = l_c / l_m, the fraction of the network
    each miner must link to. Found by ascending scan; l_c = l_m - 1 always
    suffices at one hop, so a solution exists for every l_m >= 2.
    """
    if inputs.miners < 2:
        raise ValueError("need at least two miners")
    if inputs.max_hops < 1:
        raise ValueError("need at least one hop")
    for candidate in range(1, inputs.miners):
        if gossip_reach(candidate, inputs.max_hops) >= inputs.miners:
            return candidate, candidate / inputs.miners
    raise AssertionError("unreachable: full mesh always satisfies the bound")


def min_connections_sweep(miner_range, hop_values) -> list[tuple[int, int, int, float]]:
    """Rows (l_m, k, l_c, gamma) over the requested grid, for CSV export."""
    rows = []
    for miners in miner_range:
        for hops in hop_values:
            l_c, gamma = min_connections(ConnectivityInputs(miners=miners, max_hops=hops))
            rows.append((miners, hops, l_c, gamma))
    return rows


# Neutral-band equilibrium of the difficulty-adjustment table: the adjustment
# factor is a = max(-99, 1 - floor(dt/10)), so with exponential gaps of mean mu,
# E[a] = 1 - q/(1-q) where q = exp(-10/mu). The drift vanishes at q = 1/2.
EQUILIBRIUM_BLOCK_INTERVAL_S = 10.0 / math.log(2.0)


def simulate_tx_processing(
    regular_tps: float,
    mean_block_interval_s: float,
    horizon_s: float,
    rng: random.Random,
) -> tuple[list[float], list[float]]:
    """Standalone Monte Carlo of the transaction-processing model.

    Block gaps are exponential with the given mean; arrivals are Poisson; every
    transaction is included in the first block after its arrival (unlimited
    capacity). Returns (block-time samples, processing-time samples). Block
    draws come from a substream fixed before any arrival draws, so runs that
    share an input rng agree block-for-block across arrival rates.
    """
    if mean_block_interval_s <= 0 or horizon_s <= 0:
        raise ValueError("mean block interval and horizon must be positive")
    if regular_tps < 0:
        raise ValueError("arrival rate must be non-negative")
    block_rng = random.Random(rng.getrandbits(64))
    tx_rng = random.Random(rng.getrandbits(64))

    block_times = []
    boundaries = []
    now = 0.0
    rate = 1.0 / mean_block_interval_s
    while True:
        gap = block_rng.expovariate(rate)
        if now + gap > horizon_s:
            break
        now += gap
        block_times.append(gap)
        boundaries.append(now)

    tx_times = []
    if regular_tps > 0 and boundaries:
        t = 0.0
        idx = 0
        last = boundaries[-1]
        while True:
            t += tx_rng.expovariate(regular_tps)
            if t >= last:
                break  # nothing left to include the tail arrivals
            while boundaries[idx] < t:
                idx += 1
            tx_times.append(boundaries[idx] - t)
    return block_times, tx_times
