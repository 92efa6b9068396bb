"""
Test cases for WAV reading, filterbank features, CMVN and SpecAugment
"""

import numpy as np
import pytest
from scipy.io import wavfile

from deskasr.errors import FrontendError
from deskasr.frontend import (
    NUM_MEL_BINS,
    SAMPLE_RATE,
    FeatureMatrix,
    SpecAugmentPolicy,
    Waveform,
    apply_cmvn,
    compute_fbank,
    expected_num_frames,
    fit_cmvn,
    invert_cmvn,
    load_cmvn,
    mel_center_frequencies,
    mel_filterbank,
    pad_features,
    read_wav,
    save_cmvn,
    spec_augment,
    write_wav,
)
from deskasr.numerics import Rng


def tone(freq_hz, seconds=0.5, amplitude=0.5):
    t = np.arange(int(SAMPLE_RATE * seconds)) / SAMPLE_RATE
    return (amplitude * np.sin(2 * np.pi * freq_hz * t)).astype(np.float32)


class TestWavInput:
    def test_int16_round_trip(self, tmp_path):
        """Test: 16-bit PCM is scaled into [-1, 1]"""
        path = tmp_path / "a.wav"
        write_wav(path, tone(440))
        wave = read_wav(path)
        assert wave.sample_rate == SAMPLE_RATE
        assert np.max(np.abs(wave.samples)) == pytest.approx(0.5, abs=1e-3)

    def test_float32_accepted(self, tmp_path):
        """Test: 32-bit float WAVs are read as is"""
        path = tmp_path / "f.wav"
        wavfile.write(str(path), SAMPLE_RATE, tone(300))
        assert read_wav(path).samples.dtype == np.float32

    def test_wrong_rate_rejected(self, tmp_path):
        """Test: audio at another rate is refused, never resampled"""
        path = tmp_path / "r.wav"
        wavfile.write(str(path), 8000, (tone(300) * 32767).astype(np.int16))
        with pytest.raises(FrontendError, match="8000"):
            read_wav(path)

    def test_stereo_rejected(self, tmp_path):
        """Test: multi-channel audio is refused"""
        path = tmp_path / "s.wav"
        data = (np.stack([tone(300), tone(500)], axis=1) * 32767).astype(np.int16)
        wavfile.write(str(path), SAMPLE_RATE, data)
        with pytest.raises(FrontendError, match="mono"):
            read_wav(path)

    def test_missing_file(self, tmp_path):
        """Test: a missing file raises FrontendError"""
        with pytest.raises(FrontendError, match="not found"):
            read_wav(tmp_path / "nope.wav")


class TestFilterbank:
    def test_frame_count(self):
        """Test: one second of audio gives 98 frames of 80 bins"""
        feats = compute_fbank(Waveform(tone(440, seconds=1.0)))
        assert feats.frames.shape == (98, NUM_MEL_BINS)
        assert expected_num_frames(16000) == 98
        assert expected_num_frames(400) == 1
        assert expected_num_frames(399) == 0

    def test_too_short(self):
        """Test: audio shorter than one window is an error"""
        with pytest.raises(FrontendError, match="shorter than one window"):
            compute_fbank(Waveform(np.zeros(399, dtype=np.float32)))

    def test_silence_hits_log_floor(self):
        """Test: digital silence yields log(1e-10) everywhere"""
        feats = compute_fbank(Waveform(np.zeros(800, dtype=np.float32)))
        np.testing.assert_allclose(feats.frames, np.log(1e-10), rtol=1e-5)

    def test_tone_peaks_near_its_filter(self):
        """Test: a pure tone's energy peaks in the filter centred nearest to it"""
        feats = compute_fbank(Waveform(tone(1000)))
        peak = int(np.argmax(feats.frames.mean(axis=0)))
        nearest = int(np.argmin(np.abs(mel_center_frequencies() - 1000)))
        assert abs(peak - nearest) <= 1

    def test_filterbank_shape(self):
        """Test: 80 non-negative filters over 257 FFT bins"""
        bank = mel_filterbank()
        assert bank.shape == (NUM_MEL_BINS, 257)
        assert np.all(bank >= 0)
        assert np.all(bank.max(axis=1) > 0)

    def test_bad_matrix_width(self):
        """Test: a feature matrix must be T x 80"""
        with pytest.raises(FrontendError):
            FeatureMatrix(np.zeros((5, 40)))


class TestCmvn:
    def _corpus(self, rng_np):
        return [FeatureMatrix(rng_np.normal(3.0, 2.0, (n, NUM_MEL_BINS))) for n in (20, 35)]

    def test_normalised_corpus_is_standard(self, rng_np):
        """Test: after CMVN the fitting corpus has zero mean and unit variance"""
        corpus = self._corpus(rng_np)
        stats = fit_cmvn(corpus)
        stacked = np.concatenate([apply_cmvn(f, stats).frames for f in corpus])
        np.testing.assert_allclose(stacked.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(stacked.var(axis=0), 1.0, atol=1e-9)
        assert stats.frame_count == 55

    def test_two_frame_example(self):
        """Test: frames 1 and 3 give mean 2, variance 1 and normalise to -1 and +1"""
        corpus = [FeatureMatrix(np.full((1, NUM_MEL_BINS), 1.0)), FeatureMatrix(np.full((1, NUM_MEL_BINS), 3.0))]
        stats = fit_cmvn(corpus)
        np.testing.assert_allclose(stats.mean, 2.0)
        np.testing.assert_allclose(stats.variance, 1.0)
        assert stats.frame_count == 2
        np.testing.assert_allclose(apply_cmvn(corpus[0], stats).frames, -1.0)
        np.testing.assert_allclose(apply_cmvn(corpus[1], stats).frames, 1.0)

    def test_invert(self, rng_np):
        """Test: invert_cmvn undoes apply_cmvn"""
        corpus = self._corpus(rng_np)
        stats = fit_cmvn(corpus)
        np.testing.assert_allclose(invert_cmvn(apply_cmvn(corpus[0], stats), stats).frames, corpus[0].frames)

    def test_constant_bin_uses_variance_floor(self):
        """Test: a constant bin does not divide by zero"""
        stats = fit_cmvn([FeatureMatrix(np.ones((4, NUM_MEL_BINS)))])
        assert np.all(stats.variance > 0)
        assert np.all(np.isfinite(apply_cmvn(FeatureMatrix(np.ones((2, NUM_MEL_BINS))), stats).frames))

    def test_empty_corpus(self):
        """Test: fitting on nothing is an error"""
        with pytest.raises(FrontendError):
            fit_cmvn([])

    def test_file_round_trip(self, rng_np, tmp_path):
        """Test: saved statistics load back exactly"""
        stats = fit_cmvn(self._corpus(rng_np))
        save_cmvn(stats, tmp_path / "cmvn.txt")
        loaded = load_cmvn(tmp_path / "cmvn.txt")
        np.testing.assert_array_equal(loaded.mean, stats.mean)
        assert loaded.frame_count == stats.frame_count


class TestSpecAugment:
    def test_disabled_is_identity(self, rng_np):
        """Test: a disabled policy returns the input unchanged"""
        feats = FeatureMatrix(rng_np.standard_normal((30, NUM_MEL_BINS)))
        assert spec_augment(feats, SpecAugmentPolicy.disabled(), Rng(0)) is feats

    def test_masks_only_zero(self, rng_np):
        """Test: augmentation only zeroes entries, never alters others"""
        frames = rng_np.uniform(1.0, 2.0, (60, NUM_MEL_BINS))
        out = spec_augment(FeatureMatrix(frames), SpecAugmentPolicy(), Rng(3)).frames
        changed = out != frames
        assert np.all(out[changed] == 0.0)

    def test_time_mask_respects_ratio(self, rng_np):
        """Test: a time mask never exceeds the ratio cap of the utterance"""
        frames = rng_np.uniform(1.0, 2.0, (10, NUM_MEL_BINS))
        policy = SpecAugmentPolicy(num_freq_masks=0, num_time_masks=1, max_time_width=50, max_time_ratio=0.2)
        for seed in range(20):
            out = spec_augment(FeatureMatrix(frames), policy, Rng(seed)).frames
            assert int(np.all(out == 0.0, axis=1).sum()) <= 2

    def test_same_stream_same_masks(self, rng_np):
        """Test: augmentation is deterministic in its RNG stream"""
        feats = FeatureMatrix(rng_np.standard_normal((40, NUM_MEL_BINS)))
        a = spec_augment(feats, SpecAugmentPolicy(), Rng(11)).frames
        b = spec_augment(feats, SpecAugmentPolicy(), Rng(11)).frames
        np.testing.assert_array_equal(a, b)

    def test_invalid_policy(self):
        """Test: impossible widths are rejected"""
        with pytest.raises(ValueError):
            SpecAugmentPolicy(max_freq_width=81)
        with pytest.raises(ValueError):
            SpecAugmentPolicy(max_time_ratio=1.5)


class TestPadding:
    def test_pad_batch(self, rng_np):
        """Test: utterances are zero padded to the longest one"""
        batch = [FeatureMatrix(rng_np.standard_normal((n, NUM_MEL_BINS))) for n in (3, 7)]
        padded, lengths = pad_features(batch, dtype=np.float64)
        assert padded.shape == (2, 7, NUM_MEL_BINS)
        assert lengths.tolist() == [3, 7]
        assert np.all(padded[0, 3:] == 0.0)

    def test_empty_batch(self):
        """Test: an empty batch cannot be padded"""
        with pytest.raises(FrontendError):
            pad_features([])
