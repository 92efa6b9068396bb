"""
Transformer decoder with tied input/output embeddings, and the AED model that
pairs it with the Conformer encoder.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..decoding import Hypothesis, ScoreFn, beam_search, default_max_len, search
from ..errors import DecodeError
from ..frontend import FeatureMatrix
from ..numerics import functional as F
from ..numerics.nn import Dropout, Embedding, LayerNorm, Module, ModuleList
from ..numerics.rng import Rng
from ..numerics.tensor import Tensor
from ..tokenizer import SOS
from .base import AsrModel
from .encoder import ConformerEncoder, EncoderOutput
from .layers import FeedForward, MultiHeadAttention, causal_mask, key_padding_mask, sinusoid_table

if TYPE_CHECKING:
    from ..config import DecoderConfig, RunConfig
    from ..tokenizer import Tokenizer
    from ..training.batching import TrainBatch


class DecoderLayer(Module):
    def __init__(self, cfg: "DecoderConfig", rng: Rng, dropout: Dropout, dtype=np.float32):
        d = cfg.d_model
        self.self_norm = LayerNorm(d, dtype=dtype)
        self.self_attn = MultiHeadAttention(d, cfg.num_heads, rng, dropout, dtype=dtype)
        self.cross_norm = LayerNorm(d, dtype=dtype)
        self.cross_attn = MultiHeadAttention(d, cfg.num_heads, rng, dropout, dtype=dtype)
        self.ffn_norm = LayerNorm(d, dtype=dtype)
        self.ffn = FeedForward(d, cfg.ffn_dim, rng, dropout, activation="relu", dtype=dtype)
        self.dropout = dropout

    def forward(self, x: Tensor, memory: Tensor, self_blocked, cross_blocked) -> Tensor:
        h = self.self_norm(x)
        x = F.add(x, self.dropout(self.self_attn(h, h, self_blocked)))
        x = F.add(x, self.dropout(self.cross_attn(self.cross_norm(x), memory, cross_blocked)))
        return F.add(x, self.dropout(self.ffn(self.ffn_norm(x))))


class TransformerDecoder(Module):
    """Pre-norm decoder; the output projection is the embedding table itself."""

    def __init__(self, cfg: "DecoderConfig", vocab_size: int, rng: Rng, dropout_rng: Rng, dtype=np.float32):
        self.d_model = cfg.d_model
        self.vocab_size = vocab_size
        self.dropout = Dropout(cfg.dropout_p, dropout_rng)
        self.embed = Embedding(vocab_size, cfg.d_model, rng, dtype=dtype)
        self.layers = ModuleList(DecoderLayer(cfg, rng, self.dropout, dtype=dtype) for _ in range(cfg.num_layers))
        self.final_norm = LayerNorm(cfg.d_model, dtype=dtype)

    @property
    def output_weight(self) -> Tensor:
        return self.embed.weight

    def logits(self, tokens, enc: EncoderOutput) -> Tensor:
        """Pre-softmax scores (B, U, V) for token prefixes (B, U) starting with sos."""
        tokens = np.asarray(tokens, dtype=np.int64)
        steps = tokens.shape[1]
        dtype = enc.states.dtype
        x = F.mul(self.embed(tokens), np.sqrt(self.d_model))
        x = self.dropout(F.add(x, Tensor(sinusoid_table(np.arange(steps), self.d_model, dtype=dtype))))
        self_blocked = causal_mask(steps)[None, None]
        cross_blocked = key_padding_mask(enc.lengths, enc.states.shape[1])
        for layer in self.layers:
            x = layer(x, enc.states, self_blocked, cross_blocked)
        x = self.final_norm(x)
        return F.matmul(x, F.swapaxes(self.output_weight, 0, 1))

    def forward(self, tokens, enc: EncoderOutput) -> Tensor:
        return F.log_softmax(self.logits(tokens, enc), axis=-1)

    def decode_step(self, prefix: Sequence[int], enc: EncoderOutput) -> np.ndarray:
        """Log-probabilities of the next token after `prefix` for a single utterance."""
        if len(prefix) == 0:
            raise DecodeError("decode_step needs a non-empty prefix starting with sos")
        if prefix[0] != SOS:
            raise DecodeError(f"prefix must start with sos ({SOS}), got {prefix[0]}")
        return self.score_fn(enc)([tuple(prefix)])[0]

    def score_fn(self, enc: EncoderOutput) -> ScoreFn:
        """Batched next-token scorer over one utterance's encoder output."""
        memory = enc.states.data[:1, : enc.valid_length]

        def score(prefixes):
            n = len(prefixes)
            tiled = EncoderOutput(Tensor(np.repeat(memory, n, axis=0)), np.full(n, memory.shape[1]))
            log_probs = self.forward(np.array(prefixes, dtype=np.int64), tiled)
            return log_probs.data[:, -1, :]

        return score


class AedModel(AsrModel):
    """Conformer encoder + Transformer decoder trained with cross-entropy."""

    kind = "aed"

    def __init__(self, config: "RunConfig", vocab_size: int, seed: int | None = None):
        seed = config.seed if seed is None else seed
        dtype = config.np_dtype
        root = Rng(seed)
        init_rng = root.spawn("init")
        self.dropout_rng = root.spawn("dropout")
        self.config = config
        self.encoder = ConformerEncoder(config.encoder, init_rng, self.dropout_rng, dtype=dtype)
        if config.decoder.d_model != config.encoder.d_model:
            raise ValueError("decoder d_model must equal encoder d_model")
        self.decoder = TransformerDecoder(
            config.decoder, config.decoder.vocab_size or vocab_size, init_rng, self.dropout_rng, dtype=dtype
        )

    @classmethod
    def build(cls, config: "RunConfig", tokenizer: "Tokenizer", seed: int | None = None) -> "AedModel":
        return cls(config, len(tokenizer), seed)

    def loss(self, batch: "TrainBatch") -> Tensor:
        enc = self.encoder(batch.features, batch.feature_lengths)
        logits = self.decoder.logits(batch.decoder_inputs(), enc)
        return F.cross_entropy(logits, batch.decoder_targets(), batch.loss_mask())

    def beam_search(self, enc: EncoderOutput, beam: int, max_len: int | None = None,
                    length_penalty: float = 0.6) -> list[Hypothesis]:
        self.eval()
        max_len = default_max_len(enc.valid_length) if max_len is None else max_len
        return beam_search(self.decoder.score_fn(enc), beam, max_len, length_penalty)

    def transcribe(self, features: Sequence[FeatureMatrix], beam: int = 1, max_len: int | None = None,
                   length_penalty: float = 0.6) -> list[Hypothesis]:
        self.eval()
        results = []
        for feats in features:
            enc = self.encoder.encode([feats])
            limit = default_max_len(enc.valid_length) if max_len is None else max_len
            results.append(search(self.decoder.score_fn(enc), beam, limit, length_penalty))
        return results

    def components(self):
        return {
            "encoder": self.encoder.named_parameters("encoder."),
            "decoder": self.decoder.named_parameters("decoder."),
        }
