# SPDX-License-Identifier: MIT-0

import sys
import time
import argparse
from dataclasses import replace
from itertools import repeat
from multiprocessing import Pool, cpu_count, freeze_support
from typing import Dict, List, Optional, Sequence, Tuple
import helpers.common as common_helper
import helpers.trace as trace_helper
from helpers.causality import primitive_edges
from helpers.execution import Apply, Event, Execution, MessageApply, Receive, Respond, Send
from helpers.scheduler import ScenarioConfig, run_simulation
from helpers.verifier import verify
from helpers.errors import QgoError, TraceParseError

EXIT_ACCEPTED = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


def load_scenario(path: Optional[str], seed: Optional[int] = None) -> ScenarioConfig:
    cfg = ScenarioConfig.from_dict(common_helper.load_config(path))
    return replace(cfg, seed=seed) if seed is not None else cfg


def parse_seeds(text: str) -> range:
    """'a..b' inclusive, or a single seed
    """
    first, _, last = text.partition('..')
    if not first.isdigit() or (last and not last.isdigit()): raise ValueError(f"Invalid input for 'seeds': {text}")
    first, last = int(first), int(last or first)
    if last < first: raise ValueError(f"Invalid input for 'seeds': {text}")
    return range(first, last + 1)


def verify_seed(config: Dict, seed: int) -> Tuple[int, bool, int, Optional[str]]:
    cfg = replace(ScenarioConfig.from_dict(config), seed=seed)
    try:
        execution = run_simulation(cfg)
    except QgoError as e:
        return seed, False, 0, f'run_simulation: {str(e).strip()}'
    certificate = verify(execution)
    failure = f'{certificate.failure[0]}: {certificate.failure[1]}' if certificate.failure else None
    return seed, certificate.accepted, len(execution), failure


class BatchRunner:
    def __init__(self, cfg: ScenarioConfig, seeds: Sequence[int], jobs: int):
        self.cfg = cfg
        self.seeds = list(seeds)
        self.jobs = max(1, min(jobs, len(self.seeds)))

    def run(self) -> List[Tuple[int, bool, int, Optional[str]]]:
        config = self.cfg.to_dict()
        if self.jobs == 1: return [verify_seed(config, seed) for seed in self.seeds]
        with Pool(self.jobs) as pool:
            return pool.starmap(verify_seed, zip(repeat(config), self.seeds))

    def summary(self, results) -> int:
        print('\n\tSeed\tEvents\tVerdict')
        for seed, accepted, events, failure in results:
            print(f'\t{seed}\t{events}\t{"accepted" if accepted else "rejected (" + failure + ")"}')
        accepted = sum(1 for r in results if r[1])
        print(f'Total Runs: {len(results)}, Accepted Runs: {accepted}')
        return EXIT_ACCEPTED if accepted == len(results) else EXIT_REJECTED


def describe(event: Event) -> str:
    if isinstance(event, Apply):
        args = ', '.join(f'{k}={v}' for k, v in sorted(event.args.items()))
        return f"{event.op}({args}) -> {event.outcome}" + (f' fresh {list(event.fresh)}' if event.fresh else '')
    if isinstance(event, MessageApply):
        return f"{event.op} on {event.msg_id}{' in flight' if event.in_flight else ''} -> {event.outcome}"
    if isinstance(event, Send):
        marker = f' marker {event.message.marker_gid}' if event.message.is_marker else ''
        return f'{event.message.msg_id} to {event.dest}{marker} regs {list(event.message.quantum_regs)}'
    if isinstance(event, Receive): return f'{event.msg_id} from {event.sender}'
    if isinstance(event, Respond): return common_helper.encode(event.response)
    return getattr(event, 'gid', '')


def inspect(execution: Execution) -> None:
    print(f'\nInitial state: {len(execution.initial.processors)} processors, registers {list(execution.initial.quantum.space.ids)}')
    for index, event in enumerate(execution.events):
        print(f'\t{index}\t[{event.eid}]\t{event.label}\t{event.kind}\t{describe(event)}')
    edges = primitive_edges(execution)
    print(f'\nCausality edges ({len(edges)}):')
    for a, b in edges:
        print(f'\t{a} -> {b}')


def command_run(args) -> int:
    cfg = load_scenario(args.config, args.seed)
    replay_events = trace_helper.read_trace(args.replay)[1].events if args.replay else None
    print(f'\nSimulating {cfg.algorithm} on {cfg.processors} processors with seed {cfg.seed}..')
    execution = run_simulation(cfg, replay_events)
    trace_helper.write_trace(args.out, execution, cfg)
    print(f'\tWrote {len(execution)} events to {args.out}')
    return EXIT_ACCEPTED


def command_verify(args) -> int:
    try:
        cfg, execution, _ = trace_helper.read_trace(args.trace)
    except TraceParseError as e:
        print(str(e).strip(), file=sys.stderr)
        return EXIT_ERROR
    print(f'\nVerifying {len(execution)} events from {args.trace}..')
    certificate = verify(execution)
    for name, verdict in certificate.verdicts.items():
        print(f'\t{name}: {verdict}')
    if args.out:
        trace_helper.write_trace(args.out, execution, cfg, certificate.to_dict())
        print(f'\tWrote certificate to {args.out}')
    if not certificate.accepted:
        step, reason = certificate.failure
        print(f'Rejected at {step}: {reason}', file=sys.stderr)
        return EXIT_REJECTED
    print(f'Accepted with {len(certificate.swaps)} swaps')
    return EXIT_ACCEPTED


def command_batch(args) -> int:
    cfg = load_scenario(args.config)
    seeds = parse_seeds(args.seeds)
    runner = BatchRunner(cfg, seeds, args.jobs)
    print(f'\nVerifying {len(seeds)} seeded runs of {cfg.algorithm} with {runner.jobs} workers..')
    return runner.summary(runner.run())


def command_inspect(args) -> int:
    try:
        _, execution, _ = trace_helper.read_trace(args.trace)
    except TraceParseError as e:
        print(str(e).strip(), file=sys.stderr)
        return EXIT_ERROR
    inspect(execution)
    return EXIT_ACCEPTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Simulate and verify quantum global operations')
    parser.add_argument('--verbose', action='store_true', help='Debug logging from the library')
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='Generate one execution and write its trace')
    run.add_argument('--config', help='Scenario config file')
    run.add_argument('--seed', type=int, help='Override the configured seed')
    run.add_argument('--out', required=True, help='Trace file to write')
    run.add_argument('--replay', help='Trace whose events drive the replay-from-trace scheduler')
    run.set_defaults(handler=command_run)

    check = commands.add_parser('verify', help='Verify a trace and write its certificate')
    check.add_argument('--trace', required=True, help='Trace file to verify')
    check.add_argument('--out', help='Trace file with the certificate appended')
    check.set_defaults(handler=command_verify)

    batch = commands.add_parser('batch', help='Simulate and verify a range of seeds in parallel')
    batch.add_argument('--config', help='Scenario config file')
    batch.add_argument('--seeds', required=True, help="Seed range 'a..b'")
    batch.add_argument('--jobs', type=int, default=max(1, cpu_count() - 1), help='Worker processes')
    batch.set_defaults(handler=command_batch)

    listing = commands.add_parser('inspect', help='List the events of a trace with their causality edges')
    listing.add_argument('--trace', required=True, help='Trace file to list')
    listing.set_defaults(handler=command_inspect)
    return parser


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    common_helper.configure_logging(args.verbose)
    script_start = time.time()
    try:
        code = args.handler(args)
    except (QgoError, ValueError) as e:
        print(str(e).strip(), file=sys.stderr)
        code = EXIT_ERROR
    print(f'** Total execution time: {round((time.time() - script_start))} seconds **')
    return code


if __name__ == "__main__":
    freeze_support()
    sys.exit(main())
