"""Command-line driver.

Configuration layering, strictest last: built-in defaults, then the TOML
config file, then command-line flags. API keys are read only from the
environment (CONVOFORGE_API_KEY), never from flags or config files, so they
cannot leak into shell history or committed configs.
"""

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .augment import AugmentSpec
from .errors import ConvoforgeError
from .pipeline import (
    COUNT_ATTEMPTS,
    COUNT_SUCCESSES,
    LlmSettings,
    RunConfig,
    TtsSettings,
    run_augment_dataset,
    run_bench_llm,
    run_generate,
    run_stats,
    run_validate,
)
from .synthesis import DEFAULT_SAMPLE_RATE

_EPILOG = "Secrets: set CONVOFORGE_API_KEY in the environment for HTTP LLM backends."


def _load_toml(path: str) -> dict:
    with open(path, "rb") as handle:
        return tomllib.load(handle)


def _add_llm_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("LLM backend")
    group.add_argument("--llm", choices=["mock", "http"], default=None, help="backend kind")
    group.add_argument("--llm-endpoint", default=None, help="chat-completions base URL")
    group.add_argument("--llm-model", default=None, help="model name sent to the endpoint")
    group.add_argument("--llm-temperature", type=float, default=None)
    group.add_argument("--llm-timeout", type=float, default=None, help="request timeout, seconds")
    group.add_argument("--mock-llm-seed", type=int, default=None)
    group.add_argument("--mock-malform-rate", type=float, default=None,
                       help="fraction of mock responses deliberately malformed")
    group.add_argument("--mock-llm-latency", type=float, default=None,
                       help="simulated per-request latency, seconds")


def _llm_settings(args, file_cfg: dict) -> LlmSettings:
    section = file_cfg.get("llm", {})

    def pick(cli_value, key, default):
        return cli_value if cli_value is not None else section.get(key, default)

    return LlmSettings(
        backend=pick(args.llm, "backend", "mock"),
        endpoint=pick(args.llm_endpoint, "endpoint", ""),
        model=pick(args.llm_model, "model", ""),
        temperature=pick(args.llm_temperature, "temperature", 0.7),
        timeout_s=pick(args.llm_timeout, "timeout_s", 120.0),
        mock_seed=pick(args.mock_llm_seed, "mock_seed", 0),
        mock_malform_rate=pick(args.mock_malform_rate, "mock_malform_rate", 0.0),
        mock_latency_s=pick(args.mock_llm_latency, "mock_latency_s", 0.0),
    )


def _build_run_config(args) -> RunConfig:
    file_cfg = _load_toml(args.config) if args.config else {}
    run = file_cfg.get("run", {})
    tts = file_cfg.get("tts", {})
    aug = file_cfg.get("augment", {})

    def pick(cli_value, key, default):
        return cli_value if cli_value is not None else run.get(key, default)

    personas = pick(args.personas, "personas", None)
    out_dir = pick(args.out, "out", None)
    if personas is None:
        raise SystemExit("a persona file is required (--personas or config [run].personas)")
    if out_dir is None:
        raise SystemExit("an output directory is required (--out or config [run].out)")

    count_mode = run.get("count_mode", COUNT_ATTEMPTS)
    if args.count_mode is not None:
        count_mode = args.count_mode

    augment = None
    augment_enabled = aug.get("enabled", False) if args.augment is None else args.augment
    if augment_enabled:
        def pick_aug(cli_value, key, default):
            return cli_value if cli_value is not None else aug.get(key, default)

        augment = AugmentSpec(
            noise=pick_aug(args.augment_noise, "noise", "white"),
            target_snr_db=pick_aug(args.augment_snr, "target_snr_db", 20.0),
            rt60_s=pick_aug(args.augment_rt60, "rt60_s", 0.0),
            seed=pick_aug(args.augment_seed, "seed", 0),
        )

    return RunConfig(
        personas=personas,
        out_dir=out_dir,
        count=pick(args.count, "count", 10),
        seed=pick(args.seed, "seed", 0),
        workers=pick(args.workers, "workers", 1),
        gap_s=pick(args.gap, "gap_s", 0.0),
        sample_rate=pick(args.sample_rate, "sample_rate", DEFAULT_SAMPLE_RATE),
        max_retries=pick(args.max_retries, "max_retries", 0),
        count_mode=count_mode,
        cache_dir=pick(args.cache_dir, "cache_dir", ""),
        report_path=pick(args.report, "report", ""),
        llm=_llm_settings(args, file_cfg),
        tts=TtsSettings(
            backend=args.tts if args.tts is not None else tts.get("backend", "mock"),
            endpoint=args.tts_endpoint if args.tts_endpoint is not None else tts.get("endpoint", ""),
        ),
        augment=augment,
    )


def _cmd_generate(args) -> int:
    config = _build_run_config(args)
    report = run_generate(config)
    print(f"attempts     {report.attempts}")
    print(f"successes    {report.successes}")
    print(f"compliance   {report.compliance_percent}%")
    print(f"text-gen     {report.text_gen_s:.2f}s  tts {report.tts_s:.2f}s  "
          f"wall {report.wall_s:.2f}s")
    print(f"dataset      {config.out_dir}")
    if report.failures:
        print("failures:")
        for failure in report.failures:
            print(f"  {failure.conv_id}: {failure.reason}")
    return 0


def _cmd_validate(args) -> int:
    summary = run_validate(args.dataset)
    for violation in summary.violations:
        print(violation)
    if summary.ok:
        print(f"OK: {summary.checked_conversations} conversations, no violations")
        return 0
    print(f"FAIL: {len(summary.violations)} violations")
    return 1


def _cmd_stats(args) -> int:
    report = run_stats(args.dataset)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.to_table(), end="")
    return 0


def _cmd_bench_llm(args) -> int:
    file_cfg = _load_toml(args.config) if args.config else {}
    personas = args.personas or file_cfg.get("run", {}).get("personas")
    if personas is None:
        raise SystemExit("a persona file is required (--personas or config [run].personas)")
    report = run_bench_llm(_llm_settings(args, file_cfg), personas, args.requests, args.seed)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        data = report.to_dict()
        print(f"requests      {data['n_requests']}")
        print(f"total time    {data['total_time_s']}s")
        print(f"mean time     {data['mean_time_s']}s")
        print(f"wrong format  {data['wrong_format_count']}")
    return 0


def _cmd_augment(args) -> int:
    spec = AugmentSpec(
        noise=args.noise,
        target_snr_db=args.snr,
        rt60_s=args.rt60,
        seed=args.seed,
    )
    manifest = run_augment_dataset(args.src, args.dst, spec)
    print(f"augmented {len(manifest.entries)} conversations into {args.dst}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convoforge",
        description="Synthetic multi-speaker conversation audio datasets with "
                    "diarization ground truth.",
        epilog=_EPILOG,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a dataset", epilog=_EPILOG)
    gen.add_argument("--config", default=None, help="TOML config file")
    gen.add_argument("--personas", default=None, help="persona TOML file")
    gen.add_argument("--out", default=None, help="output dataset directory (must be empty)")
    gen.add_argument("--count", type=int, default=None)
    gen.add_argument("--seed", type=int, default=None, help="master seed")
    gen.add_argument("--workers", type=int, default=None)
    gen.add_argument("--gap", type=float, default=None, help="inter-turn silence, seconds")
    gen.add_argument("--sample-rate", type=int, default=None)
    gen.add_argument("--max-retries", type=int, default=None,
                     help="regeneration attempts per conversation after a bad response")
    mode = gen.add_mutually_exclusive_group()
    mode.add_argument("--count-attempts", dest="count_mode", action="store_const",
                      const=COUNT_ATTEMPTS, default=None,
                      help="count is the number of attempts (default)")
    mode.add_argument("--count-successes", dest="count_mode", action="store_const",
                      const=COUNT_SUCCESSES,
                      help="keep attempting until count conversations validate")
    gen.add_argument("--cache-dir", default=None, help="voice reference cache directory")
    gen.add_argument("--report", default=None, help="run report path (outside the dataset)")
    _add_llm_flags(gen)
    tts_group = gen.add_argument_group("TTS backend")
    tts_group.add_argument("--tts", choices=["mock", "http"], default=None)
    tts_group.add_argument("--tts-endpoint", default=None, help="TTS service base URL")
    aug_group = gen.add_argument_group("augmentation")
    aug_group.add_argument("--augment", action="store_const", const=True, default=None,
                           help="augment each conversation after assembly")
    aug_group.add_argument("--augment-noise", default=None,
                           help='"white", "none", or a WAV path')
    aug_group.add_argument("--augment-snr", type=float, default=None)
    aug_group.add_argument("--augment-rt60", type=float, default=None)
    aug_group.add_argument("--augment-seed", type=int, default=None)
    gen.set_defaults(func=_cmd_generate)

    val = sub.add_parser("validate", help="re-check all invariants of a dataset")
    val.add_argument("dataset")
    val.set_defaults(func=_cmd_validate)

    stats = sub.add_parser("stats", help="dataset statistics report")
    stats.add_argument("dataset")
    stats.add_argument("--json", action="store_true")
    stats.set_defaults(func=_cmd_stats)

    bench = sub.add_parser("bench-llm", help="time single-shot generation", epilog=_EPILOG)
    bench.add_argument("--config", default=None)
    bench.add_argument("--personas", default=None)
    bench.add_argument("-n", "--requests", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--json", action="store_true")
    _add_llm_flags(bench)
    bench.set_defaults(func=_cmd_bench_llm)

    aug = sub.add_parser("augment", help="re-process an existing dataset with noise/reverb")
    aug.add_argument("src", help="existing dataset directory")
    aug.add_argument("dst", help="new dataset directory (must be empty)")
    aug.add_argument("--noise", default="white", help='"white", "none", or a WAV path')
    aug.add_argument("--snr", type=float, default=20.0, help="target SNR in dB")
    aug.add_argument("--rt60", type=float, default=0.0, help="reverb decay time, 0 disables")
    aug.add_argument("--seed", type=int, default=0)
    aug.set_defaults(func=_cmd_augment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConvoforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
