"""
deskasr command line: train, decode, score, inspect and synth.

Exit codes: 0 success, 1 some utterances failed to decode, 2 usage /
configuration / data error, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import pandas as pd

from .checkpoint import load_model, read_checkpoint
from .config import RunConfig, get_settings, load_environment, load_run_config
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DeskAsrError,
    FrontendError,
    NumericalFailure,
    ScoringError,
    TokenizerError,
)
from .frontend import load_features
from .models import get_model_class
from .models.base import AsrModel
from .models.params import count_params, enumerate_params, format_count, preset_table, trainable_count
from .scoring import BenchmarkTable, score_files, table_report, write_transcripts
from .synthdata import DEFAULT_TOKENS, SynthSpec, generate_corpus
from .tokenizer import Tokenizer
from .training import Trainer, Utterance, build_model, prepare_data, read_manifest
from .utils.logger import get_cli_logger, get_decode_logger
from .utils.metrics import MetricsTracker

EXIT_OK = 0
EXIT_DECODE_FAILURES = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# Error messages
# ---------------------------------------------------------------------------


def _friendly_error(err: Exception) -> str:
    """Convert library exceptions into one-line diagnostics."""
    if isinstance(err, ConfigError):
        return f"⚠️ Invalid configuration: {err}"
    if isinstance(err, CheckpointError):
        return f"⚠️ Checkpoint problem: {err}"
    if isinstance(err, DataError):
        return f"⚠️ Data problem: {err}"
    if isinstance(err, FrontendError):
        return f"⚠️ Audio problem: {err}"
    if isinstance(err, TokenizerError):
        return f"⚠️ Tokenizer problem: {err}"
    if isinstance(err, ScoringError):
        return f"⚠️ Cannot score: {err}"
    if isinstance(err, NumericalFailure):
        return f"⛔ Training aborted: {err}"
    return f"⚠️ {type(err).__name__}: {err}"


def _exit_code(err: Exception) -> int:
    return EXIT_NUMERICAL if isinstance(err, NumericalFailure) else EXIT_USAGE


def _with_overrides(config: RunConfig, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    updates: dict = {}
    if seed is not None:
        updates["seed"] = seed
    if output_dir is not None:
        updates["train"] = config.train.model_copy(update={"output_dir": output_dir})
    return config.model_copy(update=updates) if updates else config


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    logger = get_cli_logger()
    config = _with_overrides(load_run_config(args.config), args.seed, args.output_dir)
    if args.resume:
        ckpt = read_checkpoint(args.resume)
        if ckpt.config.kind != config.kind:
            raise ConfigError(f"checkpoint holds a '{ckpt.config.kind}' model", field="kind")
        data = prepare_data(config, tokenizer=ckpt.tokenizer, cmvn=ckpt.cmvn)
        model = get_model_class(config.kind).build(config, data.tokenizer)
        trainer = Trainer(config, model, data)
        trainer.restore(ckpt)
    else:
        data = prepare_data(config)
        trainer = Trainer(config, build_model(config, data.tokenizer), data)

    logger.info(
        "Training started",
        extra={"context": {"kind": config.kind, "size": config.size, "seed": config.seed,
                           "output_dir": str(trainer.output_dir)},
               "metrics": {"vocab": len(data.tokenizer), "train_utts": len(data.train),
                           "trainable_params": trainable_count(trainer.model)}},
    )
    state = trainer.run()
    print(f"Training finished after {state.epoch} epochs / {state.step} steps: {trainer.output_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecodeOutcome:
    utt_id: str
    text: str | None
    error: str | None = None


def decode_one(model: AsrModel, tokenizer: Tokenizer, cmvn, utt: Utterance, beam: int,
               max_len: int | None, length_penalty: float) -> DecodeOutcome:
    logger = get_decode_logger()
    try:
        with MetricsTracker(logger, "decode", context={"utt_id": utt.utt_id}, level_ok="debug") as tracker:
            features = load_features(utt.wav_path, cmvn)
            hyp = model.transcribe([features], beam=beam, max_len=max_len, length_penalty=length_penalty)[0]
            tracker.record(frames=features.num_frames, tokens=len(hyp.output_ids()), flagged=hyp.flagged)
        return DecodeOutcome(utt.utt_id, tokenizer.decode(hyp.output_ids()))
    except DeskAsrError as exc:
        return DecodeOutcome(utt.utt_id, None, str(exc))


async def decode_all(model: AsrModel, tokenizer: Tokenizer, cmvn, utterances: Sequence[Utterance], beam: int,
                     max_len: int | None, length_penalty: float, workers: int) -> list[DecodeOutcome]:
    """Decode concurrently (read-only model); results keep the input order."""
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run(utt: Utterance) -> DecodeOutcome:
        async with semaphore:
            return await asyncio.to_thread(decode_one, model, tokenizer, cmvn, utt, beam, max_len, length_penalty)

    return list(await asyncio.gather(*(run(u) for u in utterances)))


def cmd_decode(args: argparse.Namespace) -> int:
    logger = get_cli_logger()
    model, ckpt = load_model(args.checkpoint, seed=args.seed)
    model.eval()
    utterances = read_manifest(args.wav_list)
    decode_cfg = ckpt.config.decode
    beam = args.beam if args.beam is not None else decode_cfg.beam
    max_len = args.max_len if args.max_len is not None else decode_cfg.max_len
    length_penalty = args.length_penalty if args.length_penalty is not None else decode_cfg.length_penalty

    outcomes = asyncio.run(
        decode_all(model, ckpt.tokenizer, ckpt.cmvn, utterances, beam, max_len, length_penalty,
                   get_settings().decode_workers)
    )
    write_transcripts(args.output, [(o.utt_id, o.text) for o in outcomes if o.text is not None])
    failures = [o for o in outcomes if o.error is not None]
    errors_path = Path(str(args.output) + ".errors")
    if failures:
        write_transcripts(errors_path, [(o.utt_id, o.error) for o in failures])
        for o in failures:
            print(f"⚠️ {o.utt_id}: {o.error}", file=sys.stderr)
    elif errors_path.exists():
        errors_path.unlink()
    logger.info(
        "Decoding finished",
        extra={"context": {"seed": model.config.seed if args.seed is None else args.seed},
               "metrics": {"utterances": len(outcomes), "failed": len(failures)}},
    )
    return EXIT_DECODE_FAILURES if failures else EXIT_OK


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def cmd_score(args: argparse.Namespace) -> int:
    if args.table:
        human, machine = table_report(BenchmarkTable.from_tsv(args.table), args.reference_system)
        print(human)
        print()
        print("\n".join(machine))
        return EXIT_OK
    if not (args.ref and args.hyp):
        raise ConfigError("score needs --ref and --hyp (or --table)", field="score")
    report = score_files(args.ref, args.hyp, args.unit, args.baseline)
    if report.only_in_ref or report.only_in_hyp:
        print(
            f"⚠️ utterance ids differ; only in reference: {report.only_in_ref}; "
            f"only in hypothesis: {report.only_in_hyp}",
            file=sys.stderr,
        )
    print(report.human())
    print(report.machine())
    return EXIT_OK


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------


def _counts_frame(rows: dict[str, dict[str, int]]) -> str:
    df = pd.DataFrame(rows).fillna(0).astype(int)
    return df.map(format_count).to_string()


def cmd_inspect(args: argparse.Namespace) -> int:
    if args.all_sizes:
        df = pd.DataFrame(preset_table(full_scale=args.full_scale, vocab_size=args.vocab_size)).set_index(["kind", "size"])
        print(df.fillna(0).astype(int).map(format_count).to_string())
        return EXIT_OK
    if args.checkpoint:
        model, ckpt = load_model(args.checkpoint, seed=args.seed)
        analytic = count_params(ckpt.config, vocab_size=len(ckpt.tokenizer))
        rows = {"analytic": analytic, "allocated": enumerate_params(model)}
        print(f"kind={ckpt.config.kind} size={ckpt.config.size} vocab={len(ckpt.tokenizer)}"
              f" seed={ckpt.config.seed if args.seed is None else args.seed}")
        print(_counts_frame(rows))
        print(f"trainable: {trainable_count(model)}")
        return EXIT_OK
    config = _with_overrides(load_run_config(args.config) if args.config else RunConfig(), args.seed)
    rows = {"desk": count_params(config, vocab_size=args.vocab_size)}
    if args.full_scale:
        rows["full-scale"] = count_params(config, full_scale=True)
    print(f"kind={config.kind} size={config.size} seed={config.seed}")
    print(_counts_frame(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    tokens = tuple(args.tokens) if args.tokens else DEFAULT_TOKENS
    try:
        spec = SynthSpec(tokens=tokens, min_tokens=args.min_tokens, max_tokens=args.max_tokens,
                         noise_level=args.noise, seed=args.seed if args.seed is not None else 0)
    except ValueError as exc:
        raise ConfigError(str(exc), field="synth") from None
    corpus = generate_corpus(spec, args.n, args.out_dir)
    print(f"{len(corpus.utterances)} utterances written; manifest: {corpus.manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deskasr", description="Desk-scale AED and LLM-stack speech recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model from a JSON run configuration")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int)
    train.add_argument("--output-dir")
    train.add_argument("--resume", help="epoch checkpoint of the same run to continue from")
    train.set_defaults(func=cmd_train)

    decode = sub.add_parser("decode", help="transcribe WAV files with a checkpoint")
    decode.add_argument("--checkpoint", required=True)
    decode.add_argument("--wav-list", required=True, help="TSV of utt_id<TAB>wav_path[<TAB>transcript]")
    decode.add_argument("--output", required=True)
    decode.add_argument("--beam", type=int)
    decode.add_argument("--max-len", type=int)
    decode.add_argument("--length-penalty", type=float)
    decode.add_argument("--seed", type=int)
    decode.set_defaults(func=cmd_decode)

    score = sub.add_parser("score", help="CER/WER of hypotheses, or Average-N/CERR of a table")
    score.add_argument("--ref")
    score.add_argument("--hyp")
    score.add_argument("--unit", choices=["char", "word"], default="char")
    score.add_argument("--baseline", help="second hypothesis file; reports CERR of --hyp against it")
    score.add_argument("--table", help="TSV of system<TAB>set1<TAB>... error rates")
    score.add_argument("--reference-system", help="with --table: CERR of this system against the others")
    score.add_argument("--seed", type=int, help="accepted for symmetry; scoring has no random state")
    score.set_defaults(func=cmd_score)

    inspect = sub.add_parser("inspect", help="parameter counts of a config or checkpoint")
    inspect.add_argument("--config")
    inspect.add_argument("--checkpoint")
    inspect.add_argument("--full-scale", action="store_true", help="also count full-scale widths")
    inspect.add_argument("--all-sizes", action="store_true", help="every size preset of both kinds")
    inspect.add_argument("--vocab-size", type=int, default=0)
    inspect.add_argument("--seed", type=int)
    inspect.set_defaults(func=cmd_inspect)

    synth = sub.add_parser("synth", help="generate a tone-coded synthetic corpus")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--n", type=int, default=20)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--noise", type=float, default=0.0)
    synth.add_argument("--min-tokens", type=int, default=1)
    synth.add_argument("--max-tokens", type=int, default=4)
    synth.add_argument("--tokens", help="characters to use as the token inventory")
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_environment()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logger = get_cli_logger()
    try:
        return args.func(args)
    except (DeskAsrError, ValueError) as exc:
        print(_friendly_error(exc), file=sys.stderr)
        logger.error("Command failed", extra={"context": {"command": args.command, "error": str(exc),
                                                          "error_type": type(exc).__name__}})
        return _exit_code(exc)


__all__ = ["main", "build_parser"]
