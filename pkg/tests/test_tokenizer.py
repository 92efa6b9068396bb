"""
Test cases for the mixed character / BPE tokenizer
"""

import pytest

from deskasr.errors import TokenizerError
from deskasr.tokenizer import (
    BLANK,
    EOS,
    PAD,
    FULL_SCALE_VOCAB_SIZE,
    SOS,
    SPECIAL_TOKENS,
    UNK,
    Tokenizer,
    Vocabulary,
    normalize_spacing,
    segment,
    train_bpe,
)

CORPUS = ["今天 hello world", "hello 世界", "the low lower lowest", "你好 hello"]


class TestSegmentation:
    def test_mixed_text(self):
        """Test: Chinese characters are atoms, Latin runs are words, spaces only delimit"""
        assert segment("我爱 Python 和 numpy!") == [
            ("char", "我"),
            ("char", "爱"),
            ("word", "Python"),
            ("char", "和"),
            ("word", "numpy"),
            ("char", "!"),
        ]

    def test_latin_adjacent_to_han(self):
        """Test: a Latin run glued to a character still splits"""
        assert segment("用GPU跑") == [("char", "用"), ("word", "GPU"), ("char", "跑")]

    def test_spacing_normalisation(self):
        """Test: only spaces between two Latin words survive"""
        assert normalize_spacing("  你 好  hello   world 吗 ") == "你好hello world吗"


class TestBpe:
    def test_most_frequent_pair_first(self):
        """Test: the first merge is the most frequent adjacent pair"""
        bpe = train_bpe(["low low low lower"], 1)
        assert bpe.merges == (("l", "o"),)

    def test_ties_break_to_smallest_pair(self):
        """Test: equally frequent pairs merge in lexicographic order"""
        bpe = train_bpe(["ab cd"], 1)
        assert bpe.merges == (("a", "b</w>"),)

    def test_stops_when_no_pairs(self):
        """Test: asking for more merges than possible stops early"""
        bpe = train_bpe(["ab"], 10)
        assert len(bpe.merges) == 1

    def test_no_latin_words(self):
        """Test: training BPE on characters only is an error"""
        with pytest.raises(TokenizerError):
            train_bpe(["你好"], 5)

    def test_apply_uses_learned_merges(self):
        """Test: a frequent training word becomes one symbol"""
        bpe = train_bpe(["hello hello hello"], 10)
        assert bpe.apply("hello") == ["hello</w>"]


class TestVocabulary:
    def test_specials_come_first(self):
        """Test: ids 0-4 are pad, sos, eos, unk, blank"""
        tok = Tokenizer.train(CORPUS, 20)
        assert tok.vocab.id_to_token[:5] == SPECIAL_TOKENS
        assert (PAD, SOS, EOS, UNK, BLANK) == (0, 1, 2, 3, 4)

    def test_size_accounting(self):
        """Test: vocabulary size is BPE pieces plus characters plus specials"""
        tok = Tokenizer.train(CORPUS, 20)
        assert len(tok) == tok.vocab.num_bpe + tok.vocab.num_chars + 5
        assert FULL_SCALE_VOCAB_SIZE == 7832

    def test_character_only_corpus(self):
        """Test: a corpus without Latin words gets a character-only vocabulary"""
        tok = Tokenizer.train(["一二三", "三四"], 50)
        assert tok.vocab.num_bpe == 0
        assert len(tok) == 4 + 5

    def test_duplicate_tokens_rejected(self):
        """Test: a vocabulary cannot list a token twice"""
        with pytest.raises(TokenizerError, match="duplicate"):
            Vocabulary(SPECIAL_TOKENS + ("a", "a"), 0, 2)


class TestEncodeDecode:
    @pytest.fixture
    def tok(self):
        return Tokenizer.train(CORPUS, 30)

    @pytest.mark.parametrize("text", ["今天hello world", "hello世界", "the lowest", "你好"])
    def test_round_trip_in_vocabulary(self, tok, text):
        """Test: decode(encode(text)) restores in-vocabulary text"""
        assert tok.decode(tok.encode(text)) == text

    def test_unknown_character(self, tok):
        """Test: an unseen character maps to unk and decodes to nothing"""
        ids = tok.encode("今猫")
        assert ids[1] == UNK
        assert tok.decode(ids) == "今"

    def test_decode_stops_at_eos(self, tok):
        """Test: everything after eos is ignored"""
        ids = tok.encode("今天") + [EOS] + tok.encode("世界")
        assert tok.decode(ids) == "今天"

    def test_decode_out_of_range(self, tok):
        """Test: an id outside the vocabulary names its position"""
        with pytest.raises(TokenizerError, match="index 1"):
            tok.decode([5, 10_000])

    def test_artifact_round_trip(self, tok):
        """Test: the persisted form rebuilds an identical tokenizer"""
        again = Tokenizer.from_artifacts(tok.to_artifacts())
        assert again.vocab.id_to_token == tok.vocab.id_to_token
        assert again.encode("hello world今天") == tok.encode("hello world今天")

    def test_save_writes_files(self, tok, tmp_path):
        """Test: vocab.txt lists one token per line in id order"""
        tok.save(tmp_path)
        lines = (tmp_path / "vocab.txt").read_text(encoding="utf-8").splitlines()
        assert lines == list(tok.vocab.id_to_token)
        assert (tmp_path / "merges.txt").exists()
