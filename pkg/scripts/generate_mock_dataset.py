#!/usr/bin/env python3
"""Generate a fully synthetic dataset with the deterministic mock backends.

Everything runs offline: scripted dialogue text, harmonic-stack voices.
Useful for smoke-testing the pipeline and for producing fixture data whose
bytes never change for a given (count, seed).

    python scripts/generate_mock_dataset.py --out /tmp/demo --count 10 --seed 42
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from convoforge.augment import AugmentSpec
from convoforge.pipeline import RunConfig, run_generate

DEFAULT_PERSONAS = Path(__file__).resolve().parent.parent / "configs" / "personas.toml"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="dataset directory (must not exist)")
    parser.add_argument("--personas", default=str(DEFAULT_PERSONAS))
    parser.add_argument("--count", type=int, default=10)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--gap", type=float, default=0.0, help="silence between turns, seconds")
    parser.add_argument("--snr", type=float, default=None, help="mix noise at this SNR (dB)")
    parser.add_argument("--rt60", type=float, default=None, help="add reverb with this decay (s)")
    args = parser.parse_args(argv)

    augment = None
    if args.snr is not None or args.rt60 is not None:
        augment = AugmentSpec(
            noise="white" if args.snr is not None else "none",
            target_snr_db=args.snr if args.snr is not None else 20.0,
            rt60_s=args.rt60 if args.rt60 is not None else 0.0,
            seed=args.seed,
        )

    report = run_generate(
        RunConfig(
            personas=args.personas,
            out_dir=args.out,
            count=args.count,
            seed=args.seed,
            workers=args.workers,
            gap_s=args.gap,
            augment=augment,
        )
    )
    print(f"attempts     {report.attempts}")
    print(f"successes    {report.successes}")
    print(f"compliance   {report.compliance_percent}%")
    print(f"wall time    {report.wall_s:.2f}s  (text {report.text_gen_s:.2f}s, tts {report.tts_s:.2f}s)")
    for failure in report.failures:
        print(f"failed       {failure.conv_id}: {failure.reason}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
