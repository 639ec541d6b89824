"""Command-line entry point: run scenarios, run sweeps, evaluate design models.

Exit codes: 0 success, 2 validation/usage failure, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__, design
from .scenario import ScenarioError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="villagechain",
        description="Simulate and dimension a delay-tolerant private PoW payment network.",
    )
    parser.add_argument("--version", action="version", version=f"villagechain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and write its artifacts")
    run_p.add_argument("scenario", help="scenario file path or bundled name (e.g. baseline)")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    sweep_p = sub.add_parser("sweep", help="run a parameter sweep and aggregate metrics")
    sweep_p.add_argument("spec", help="sweep spec file path or bundled name (e.g. delay-sweep)")
    sweep_p.add_argument("--out", required=True, help="output directory")

    calc_p = sub.add_parser("calc", help="evaluate one of the design calculators")
    calc_sub = calc_p.add_subparsers(dest="model", required=True)

    cost = calc_sub.add_parser("cost", help="deployment + operation cost over an accounting window")
    cost.add_argument("--device-cost", type=float, required=True, help="tokens per mining device")
    cost.add_argument("--miners", type=int, required=True)
    cost.add_argument("--device-lifetime-years", type=float, required=True)
    cost.add_argument("--reward", type=float, required=True, help="tokens per block")
    cost.add_argument("--bw-cost", type=float, required=True, help="tokens per bit")
    cost.add_argument("--bw", type=float, required=True, help="backhaul bits/second")
    cost.add_argument("--connected-s", type=float, required=True, help="connected seconds per service period")
    cost.add_argument("--years", type=float, required=True)
    cost.add_argument("--blocks", type=float, required=True)
    cost.add_argument("--service-periods", type=float, required=True)
    cost.add_argument("--csv", action="store_true")

    outage = calc_sub.add_parser("outage", help="probability that exactly k miners are offline")
    outage.add_argument("--p", required=True, help="comma list of per-miner offline probabilities")
    outage.add_argument("--k", type=int, required=True)
    outage.add_argument("--csv", action="store_true")

    profit = calc_sub.add_parser("profit", help="expected per-block miner profit and viability bound")
    profit.add_argument("--reward", type=float, required=True, help="tokens per block")
    profit.add_argument("--hash-cost", type=float, required=True, help="tokens per hash")
    profit.add_argument("--hashrate", type=float, required=True, help="hashes/second per miner")
    profit.add_argument("--block-interval", type=float, required=True, help="mean seconds per block")
    profit.add_argument("--miners", type=int, required=True)
    profit.add_argument("--csv", action="store_true")

    conn = calc_sub.add_parser("connectivity", help="minimal peer count for bounded-hop gossip")
    conn.add_argument("--miners", type=int, help="total miners")
    conn.add_argument("--hops", type=int, help="maximum gossip hops")
    conn.add_argument("--sweep", action="store_true",
                      help="emit the full miners 4..100 x hops 1..4 table")
    conn.add_argument("--csv", action="store_true")

    bits = calc_sub.add_parser("blockbits", help="average transaction bits a block must hold")
    bits.add_argument("--tps", type=float, required=True)
    bits.add_argument("--tx-bits", type=float, required=True)
    bits.add_argument("--block-interval", type=float, required=True)
    bits.add_argument("--csv", action="store_true")

    return parser


def _cmd_run(args) -> int:
    from .runner import run_scenario

    result = run_scenario(args.scenario, args.out, seed_override=args.seed)
    print(f"run complete: {result.scenario.name} seed={result.scenario.seed}")
    print(f"artifacts in {args.out}")
    for name in ("blocks_canonical", "block_time_mean_s", "stale_rate"):
        if name in result.metrics:
            print(f"  {name} = {result.metrics[name]:.6g}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .sweep import parse_sweep_spec, run_sweep, write_sweep_csv

    spec = parse_sweep_spec(args.spec)
    points = run_sweep(spec)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "sweep.csv")
    write_sweep_csv(points, out_path)
    print(f"sweep complete: {spec.parameter} over {len(spec.values)} values x {len(spec.seeds)} seeds")
    print(f"aggregate written to {out_path}")
    return EXIT_OK


def _emit(args, title: str, formula: str, fields: list[tuple[str, object]]) -> None:
    if args.csv:
        print(",".join(str(k) for k, _ in fields))
        print(",".join(str(v) for _, v in fields))
        return
    print(title)
    print(f"  formula: {formula}")
    for key, value in fields:
        print(f"  {key} = {value}")


def _cmd_calc(args) -> int:
    if args.model == "cost":
        inputs = design.CostInputs(
            device_cost_tokens=args.device_cost,
            miners=args.miners,
            device_lifetime_years=args.device_lifetime_years,
            reward_tokens_per_block=args.reward,
            bw_cost_tokens_per_bit=args.bw_cost,
            backhaul_bw_bps=args.bw,
            connected_s_per_period=args.connected_s,
            years=args.years,
            blocks=args.blocks,
            service_periods=args.service_periods,
        )
        total = design.system_cost(inputs)
        _emit(args, "system cost",
              "miners*(device/lifetime)*years + reward*blocks + bwcost*connected*bw*periods",
              [("miners", args.miners), ("device_cost", args.device_cost),
               ("years", args.years), ("blocks", args.blocks),
               ("service_periods", args.service_periods), ("total_tokens", total)])
        return EXIT_OK

    if args.model == "outage":
        try:
            probs = [float(x) for x in args.p.split(",") if x.strip()]
            pmf = design.poisson_binomial_pmf(probs, args.k)
        except ValueError as exc:
            print(f"invalid parameters: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        _emit(args, "miner outage probability",
              "Poisson-Binomial P(X = k) over per-miner offline probabilities",
              [("p", args.p), ("k", args.k), ("pmf", pmf)])
        return EXIT_OK

    if args.model == "profit":
        inputs = design.ProfitInputs(
            reward_tokens_per_block=args.reward,
            cost_tokens_per_hash=args.hash_cost,
            hashrate_hps=args.hashrate,
            mean_block_interval_s=args.block_interval,
            miners=args.miners,
        )
        profit = design.expected_profit(inputs)
        viable = design.max_profitable_miners(
            args.reward, args.hash_cost, args.hashrate, args.block_interval
        )
        _emit(args, "per-miner expected block profit",
              "reward/miners - hashcost*hashrate*interval",
              [("miners", args.miners), ("profit_tokens", profit),
               ("max_profitable_miners", viable)])
        return EXIT_OK

    if args.model == "connectivity":
        if args.sweep:
            rows = design.min_connections_sweep(range(4, 101), (1, 2, 3, 4))
            if args.csv:
                print("miners,hops,connections,fraction")
                for miners, hops, l_c, gamma in rows:
                    print(f"{miners},{hops},{l_c},{gamma!r}")
            else:
                print("minimal connections (miners 4..100, hops 1..4)")
                for miners, hops, l_c, gamma in rows:
                    print(f"  miners={miners:3d} hops={hops} -> connections={l_c:3d} fraction={gamma:.3f}")
            return EXIT_OK
        if args.miners is None or args.hops is None:
            print("connectivity needs --miners and --hops (or --sweep)", file=sys.stderr)
            return EXIT_VALIDATION
        l_c, gamma = design.min_connections(design.ConnectivityInputs(args.miners, args.hops))
        _emit(args, "minimal gossip connectivity",
              "smallest c with 1 + c*sum((c-1)^i, i<hops) >= miners",
              [("miners", args.miners), ("hops", args.hops),
               ("connections", l_c), ("fraction", gamma)])
        return EXIT_OK

    if args.model == "blockbits":
        bits = design.expected_block_bits(args.tps, args.tx_bits, args.block_interval)
        _emit(args, "expected block payload", "tps * tx_bits * mean_interval",
              [("tps", args.tps), ("tx_bits", args.tx_bits),
               ("block_interval_s", args.block_interval), ("bits", bits)])
        return EXIT_OK

    raise AssertionError(f"unhandled model {args.model}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "calc":
            return _cmd_calc(args)
    except ScenarioError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failure contract for scripting
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
