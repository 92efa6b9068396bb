"""
Test cases for the tone-coded synthetic corpus generator
"""

import numpy as np
import pytest

from deskasr.frontend import SAMPLE_RATE, read_wav
from deskasr.numerics import Rng
from deskasr.synthdata import (
    SEGMENT_SAMPLES,
    SynthSpec,
    generate_corpus,
    render_segment,
    render_utterance,
    transcript_of,
)
from deskasr.training import read_manifest


class TestSynthSpec:
    def test_signatures_are_distinct(self):
        """Test: every token owns a different start frequency; odd positions chirp"""
        sigs = SynthSpec().signatures()
        starts = [s.start_hz for s in sigs.values()]
        assert len(set(starts)) == len(starts)
        flags = [s.is_chirp for s in sigs.values()]
        assert flags[:4] == [False, True, False, True]
        assert max(s.end_hz for s in sigs.values()) < SAMPLE_RATE / 2

    @pytest.mark.parametrize(
        "kwargs,message",
        [
            ({"tokens": ()}, "at least one token"),
            ({"tokens": ("a", "a")}, "distinct"),
            ({"min_tokens": 0}, "min_tokens"),
            ({"min_tokens": 3, "max_tokens": 2}, "min_tokens"),
            ({"noise_level": -0.1}, "nonnegative"),
            ({"tokens": tuple(chr(0x4E00 + i) for i in range(30))}, "Nyquist"),
        ],
    )
    def test_invalid_specs(self, kwargs, message):
        """Test: impossible inventories and ranges are rejected"""
        with pytest.raises(ValueError, match=message):
            SynthSpec(**kwargs)


class TestRendering:
    @pytest.mark.parametrize("index", [0, 2, 4])
    def test_tone_peak(self, index):
        """Test: a steady token's spectrum peaks at its own frequency"""
        spec = SynthSpec()
        sig = spec.signatures()[spec.tokens[index]]
        wave = render_segment(sig, SEGMENT_SAMPLES, 0.5)
        spectrum = np.abs(np.fft.rfft(wave))
        peak_hz = np.argmax(spectrum) * SAMPLE_RATE / SEGMENT_SAMPLES
        assert peak_hz == pytest.approx(sig.start_hz, abs=SAMPLE_RATE / SEGMENT_SAMPLES)

    def test_segment_fades(self):
        """Test: segments start and end at zero so concatenation does not click"""
        wave = render_segment(SynthSpec().signatures()["一"], SEGMENT_SAMPLES, 0.5)
        assert wave[0] == 0.0 and abs(wave[-1]) < 1e-3
        assert np.max(np.abs(wave)) <= 0.5

    def test_utterance_length_and_noise(self):
        """Test: audio length is tokens times segment length; noise changes it only when asked"""
        clean = render_utterance(SynthSpec(), ["一", "二", "三"], Rng(0))
        assert clean.shape == (3 * SEGMENT_SAMPLES,)
        noisy = render_utterance(SynthSpec(noise_level=0.05), ["一", "二", "三"], Rng(0))
        assert not np.allclose(clean, noisy)
        assert np.all(np.abs(noisy) <= 1.0)

    def test_transcript_spacing(self):
        """Test: CJK tokens join without spaces and Latin tokens with them"""
        assert transcript_of(["一", "二"]) == "一二"
        assert transcript_of(["hi", "yo"]) == "hi yo"


class TestGenerateCorpus:
    def test_manifest_and_wavs(self, tmp_path):
        """Test: n utterances with readable 16 kHz audio of the right length"""
        spec = SynthSpec(tokens=tuple("一二三"), min_tokens=2, max_tokens=3, seed=5)
        corpus = generate_corpus(spec, 4, tmp_path / "c")
        utts = read_manifest(corpus.manifest)
        assert [u.utt_id for u in utts] == ["synth0000", "synth0001", "synth0002", "synth0003"]
        for utt in utts:
            assert 2 <= len(utt.transcript) <= 3
            assert set(utt.transcript) <= set("一二三")
            wave = read_wav(utt.wav_path)
            assert len(wave.samples) == len(utt.transcript) * SEGMENT_SAMPLES

    def test_deterministic(self, tmp_path):
        """Test: the same seed gives byte-identical corpora"""
        spec = SynthSpec(noise_level=0.01, seed=3)
        a = generate_corpus(spec, 3, tmp_path / "a")
        b = generate_corpus(spec, 3, tmp_path / "b")
        assert a.manifest.read_bytes() == b.manifest.read_bytes()
        for utt in a.utterances:
            assert (tmp_path / "a" / utt.wav_path).read_bytes() == (tmp_path / "b" / utt.wav_path).read_bytes()

    def test_prefix_stability(self, tmp_path):
        """Test: utterance i does not depend on how many utterances are generated"""
        spec = SynthSpec(seed=11)
        small = generate_corpus(spec, 2, tmp_path / "small")
        large = generate_corpus(spec, 5, tmp_path / "large")
        assert small.utterances == large.utterances[:2]

    def test_needs_one_utterance(self, tmp_path):
        """Test: n must be positive"""
        with pytest.raises(ValueError):
            generate_corpus(SynthSpec(), 0, tmp_path)
