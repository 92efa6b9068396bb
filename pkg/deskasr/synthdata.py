"""
Synthetic tone-coded corpus.

Every token owns an acoustic signature: a steady tone or a rising chirp at a
frequency no other token uses. An utterance is the concatenation of its
tokens' 100 ms segments, optionally with white noise, so a small model can
learn the mapping exactly. Generation is deterministic: utterance i draws
from a stream derived from (seed, i) only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frontend import SAMPLE_RATE, write_wav
from .numerics.rng import Rng
from .tokenizer import is_latin, join_units
from .training.batching import Utterance, write_manifest

logger = logging.getLogger(__name__)

DEFAULT_TOKENS = tuple("一二三四五六七八九十天地人日月山水火木金")
SEGMENT_SAMPLES = 1600  # 100 ms
FADE_SAMPLES = 80
MANIFEST_NAME = "manifest.tsv"


@dataclass(frozen=True)
class Signature:
    start_hz: float
    end_hz: float

    @property
    def is_chirp(self) -> bool:
        return self.start_hz != self.end_hz


@dataclass(frozen=True)
class SynthSpec:
    tokens: tuple[str, ...] = DEFAULT_TOKENS
    min_tokens: int = 1
    max_tokens: int = 4
    noise_level: float = 0.0
    seed: int = 0
    segment_samples: int = SEGMENT_SAMPLES
    base_hz: float = 250.0
    spacing_hz: float = 300.0
    amplitude: float = 0.5

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a synthetic corpus needs at least one token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("synthetic tokens must be distinct")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValueError("need 1 <= min_tokens <= max_tokens")
        if self.noise_level < 0:
            raise ValueError("noise_level must be nonnegative")
        top = max(s.end_hz for s in self.signatures().values())
        if top >= SAMPLE_RATE / 2:
            raise ValueError(f"{len(self.tokens)} tokens need {top:.0f} Hz, above the Nyquist limit")

    def signatures(self) -> dict[str, Signature]:
        """Token -> signature; even positions are tones, odd positions chirp upward by half a spacing."""
        out = {}
        for i, token in enumerate(self.tokens):
            start = self.base_hz + i * self.spacing_hz
            end = start + (self.spacing_hz / 2 if i % 2 else 0.0)
            out[token] = Signature(start, end)
        return out


def render_segment(signature: Signature, num_samples: int, amplitude: float) -> np.ndarray:
    t = np.arange(num_samples, dtype=np.float64) / SAMPLE_RATE
    duration = num_samples / SAMPLE_RATE
    # linear chirp: instantaneous frequency moves from start_hz to end_hz
    rate = (signature.end_hz - signature.start_hz) / duration
    phase = 2.0 * np.pi * (signature.start_hz * t + 0.5 * rate * t**2)
    wave = amplitude * np.sin(phase)
    fade = min(FADE_SAMPLES, num_samples // 2)
    if fade:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        wave[:fade] *= ramp
        wave[-fade:] *= ramp[::-1]
    return wave


def render_utterance(spec: SynthSpec, tokens: list[str], rng: Rng) -> np.ndarray:
    signatures = spec.signatures()
    audio = np.concatenate([render_segment(signatures[t], spec.segment_samples, spec.amplitude) for t in tokens])
    if spec.noise_level > 0:
        audio = audio + rng.normal(0.0, spec.noise_level, size=audio.shape)
    return np.clip(audio, -1.0, 1.0)


def sample_tokens(spec: SynthSpec, rng: Rng) -> list[str]:
    count = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
    return [spec.tokens[int(i)] for i in rng.integers(0, len(spec.tokens), size=count)]


def transcript_of(tokens: list[str]) -> str:
    return join_units([("word" if is_latin(t[0]) else "char", t) for t in tokens])


@dataclass(frozen=True)
class SynthCorpus:
    manifest: Path
    utterances: list[Utterance]


def generate_corpus(spec: SynthSpec, n: int, out_dir: str | Path) -> SynthCorpus:
    """Write n WAVs under out_dir/wavs and a manifest out_dir/manifest.tsv."""
    if n < 1:
        raise ValueError(f"need at least one utterance, got n={n}")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    root = Rng(spec.seed)
    width = max(4, len(str(n - 1)))
    utterances = []
    for i in range(n):
        rng = root.spawn(i)
        tokens = sample_tokens(spec, rng)
        utt_id = f"synth{i:0{width}d}"
        write_wav(wav_dir / f"{utt_id}.wav", render_utterance(spec, tokens, rng))
        utterances.append(Utterance(utt_id, f"wavs/{utt_id}.wav", transcript_of(tokens)))
    manifest = out_dir / MANIFEST_NAME
    write_manifest(manifest, utterances)
    logger.info("Synthetic corpus written", extra={"metrics": {"utterances": n}, "context": {"dir": str(out_dir)}})
    return SynthCorpus(manifest, utterances)
