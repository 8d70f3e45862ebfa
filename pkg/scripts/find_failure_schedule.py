#!/usr/bin/env python3
"""Search mock-LLM seed space for an exact planned-failure count.

Regression tests that pin compliance accounting need a (mock seed,
malformation rate, run seed) triple that malforms an exact number of
single-attempt generations out of N. This replicates the pipeline's
per-conversation derivation (roster from Random(derive_seed(run_seed, i)),
prompt from that roster, attempt 0) without synthesizing any audio, so
scanning thousands of candidate triples takes seconds.

    python scripts/find_failure_schedule.py --attempts 200 --failures 11 --rate 0.055
"""

import argparse
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from convoforge.llm import MockLlmBackend
from convoforge.personas import load_registry, sample_participants
from convoforge.prompting import build_prompt
from convoforge.seeding import derive_seed

DEFAULT_PERSONAS = Path(__file__).resolve().parent.parent / "configs" / "personas.toml"


def planned_failures(backend, registry, run_seed: int, attempts: int) -> list[int]:
    failed = []
    for index in range(attempts):
        rng = random.Random(derive_seed(run_seed, index))
        prompt = build_prompt(sample_participants(registry, rng))
        if backend.planned_malformation(prompt, attempt=0) is not None:
            failed.append(index)
    return failed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--personas", default=str(DEFAULT_PERSONAS))
    parser.add_argument("--attempts", type=int, required=True)
    parser.add_argument("--failures", type=int, required=True, help="exact count wanted")
    parser.add_argument("--rate", type=float, required=True, help="mock malformation rate")
    parser.add_argument("--mock-seeds", type=int, default=10, help="mock seeds to scan")
    parser.add_argument("--run-seeds", type=int, nargs="*", default=[20250819, 0, 1, 7, 42])
    parser.add_argument("--max-hits", type=int, default=5)
    args = parser.parse_args(argv)

    registry = load_registry(args.personas)
    hits = 0
    for run_seed in args.run_seeds:
        for mock_seed in range(args.mock_seeds):
            backend = MockLlmBackend(seed=mock_seed, malform_rate=args.rate)
            failed = planned_failures(backend, registry, run_seed, args.attempts)
            if len(failed) == args.failures:
                print(
                    f"mock_seed={mock_seed} rate={args.rate} run_seed={run_seed} "
                    f"-> {len(failed)}/{args.attempts} failures at indices {failed}"
                )
                hits += 1
                if hits >= args.max_hits:
                    return 0
    if hits == 0:
        print("no triple found; widen --mock-seeds or --run-seeds", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
