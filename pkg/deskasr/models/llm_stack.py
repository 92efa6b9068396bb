"""
Encoder-Adapter-LLM stack.

Encoder states (40 ms) are spliced in groups of k frames (80 ms for k = 2),
projected by a Linear-ReLU-Linear adapter into the LM embedding space (E_S),
and placed between the prompt embeddings (E_P) and, during training, the
transcript embeddings (E_T). The stand-in LM is a decoder-only Transformer
whose base weights stay frozen; only LoRA adapters on its query/value
projections train, together with the encoder and the adapter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..decoding import Hypothesis, ScoreFn, default_max_len, search
from ..errors import ShapeError
from ..frontend import FeatureMatrix
from ..numerics import functional as F
from ..numerics.nn import Dropout, Embedding, LayerNorm, Linear, Module, ModuleList
from ..numerics.rng import Rng
from ..numerics.tensor import Tensor
from ..tokenizer import EOS, PAD, SOS
from .base import AsrModel
from .encoder import ConformerEncoder, EncoderOutput
from .layers import FeedForward, MultiHeadAttention, causal_mask, sinusoid_table, valid_mask
from .lora import lora_layers, set_lora_enabled
from .prompts import PromptSpec

if TYPE_CHECKING:
    from ..config import LmConfig, RunConfig
    from ..tokenizer import Tokenizer
    from ..training.batching import TrainBatch

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Splicing and adapter
# ---------------------------------------------------------------------------


def splice_frames(enc: EncoderOutput, k: int = 2) -> EncoderOutput:
    """Concatenate groups of k consecutive frames feature-wise.

    (B, T', d) -> (B, ceil(T'/k), k*d). Frames past each utterance's length
    are zeroed first, and the last incomplete group is zero-padded.
    """
    if k < 1:
        raise ValueError(f"splice factor must be at least 1, got {k}")
    states = enc.states
    batch, steps, dim = states.shape
    if steps < 1:
        raise ShapeError(f"cannot splice an empty sequence of shape {states.shape}")
    keep = valid_mask(enc.lengths, steps)[:, :, None]
    states = F.masked_fill(states, ~keep, 0.0)
    groups = -(-steps // k)
    if groups * k != steps:
        states = F.pad(states, ((0, 0), (0, groups * k - steps), (0, 0)))
    spliced = F.reshape(states, (batch, groups, k * dim))
    lengths = (np.asarray(enc.lengths) + k - 1) // k
    return EncoderOutput(spliced, lengths.astype(np.int64))


class Adapter(Module):
    """Linear -> ReLU -> Linear into the LM embedding dimension."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, rng: Rng, dtype=np.float32):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.l1 = Linear(in_dim, hidden_dim, rng, dtype=dtype)
        self.l2 = Linear(hidden_dim, out_dim, rng, dtype=dtype)

    def forward(self, spliced: Tensor) -> Tensor:
        if spliced.shape[-1] != self.in_dim:
            raise ShapeError(f"adapter expects {self.in_dim} input features, got shape {spliced.shape}")
        return self.l2(F.relu(self.l1(spliced)))


# ---------------------------------------------------------------------------
# Stand-in language model
# ---------------------------------------------------------------------------


class LmLayer(Module):
    def __init__(self, cfg: "LmConfig", rng: Rng, dropout: Dropout, lora_rank: int, lora_alpha: float,
                 dtype=np.float32):
        self.attn_norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, rng, dropout,
                                       lora_rank=lora_rank, lora_alpha=lora_alpha, dtype=dtype)
        self.ffn_norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, rng, dropout, activation="relu", dtype=dtype)

    def forward(self, x: Tensor, blocked) -> Tensor:
        h = self.attn_norm(x)
        x = F.add(x, self.attn(h, h, blocked))
        return F.add(x, self.ffn(self.ffn_norm(x)))


class StandInLM(Module):
    """Decoder-only Transformer with tied input/output embeddings."""

    def __init__(self, cfg: "LmConfig", vocab_size: int, lora_rank: int, lora_alpha: float, rng: Rng,
                 dtype=np.float32):
        self.d_model = cfg.d_model
        self.vocab_size = vocab_size
        # the LM never trains its own dropout
        self.dropout = Dropout(0.0, rng)
        self.embed = Embedding(vocab_size, cfg.d_model, rng, dtype=dtype)
        self.layers = ModuleList(
            LmLayer(cfg, rng, self.dropout, lora_rank, lora_alpha, dtype=dtype) for _ in range(cfg.num_layers)
        )
        self.final_norm = LayerNorm(cfg.d_model, dtype=dtype)

    def embed_tokens(self, ids: Sequence[int]) -> Tensor:
        return self.embed(np.asarray(ids, dtype=np.int64))

    def forward(self, embeddings: Tensor) -> Tensor:
        """Logits (B, S, V) for input embeddings (B, S, d) under a causal mask."""
        steps = embeddings.shape[1]
        x = F.add(embeddings, Tensor(sinusoid_table(np.arange(steps), self.d_model, dtype=embeddings.dtype)))
        blocked = causal_mask(steps)[None, None]
        for layer in self.layers:
            x = layer(x, blocked)
        return F.matmul(self.final_norm(x), F.swapaxes(self.embed.weight, 0, 1))


# ---------------------------------------------------------------------------
# Sequence assembly
# ---------------------------------------------------------------------------


@dataclass
class AssembledSequence:
    """(E_P, E_S, E_T) along time, with a loss mask over the transcript region only.

    The transcript region is embed([sos] + transcript); its targets are
    transcript + [eos]. Inference sequences have no transcript region and
    empty mask/targets.
    """

    embeddings: Tensor  # (S, d)
    prompt_len: int
    speech_len: int
    transcript_len: int
    loss_mask: np.ndarray
    targets: np.ndarray

    @property
    def region_boundaries(self) -> tuple[int, int, int]:
        return self.prompt_len, self.speech_len, self.transcript_len

    @property
    def length(self) -> int:
        return self.prompt_len + self.speech_len + self.transcript_len

    def regions(self) -> tuple[slice, slice, slice]:
        p, s, t = self.region_boundaries
        return slice(0, p), slice(p, p + s), slice(p + s, p + s + t)


def assemble(prompt: PromptSpec, speech: Tensor, transcript: Sequence[int] | None, lm: StandInLM) -> AssembledSequence:
    """Build one LM input sequence; `transcript` None means inference mode."""
    if speech.ndim != 2 or speech.shape[1] != lm.d_model:
        raise ShapeError(f"speech embeddings {speech.shape} do not match LM width {lm.d_model}")
    e_p = lm.embed_tokens(prompt.ids)
    p, s = len(prompt.ids), speech.shape[0]
    if transcript is None:
        empty = np.zeros(0, dtype=np.int64)
        return AssembledSequence(F.concat([e_p, speech], axis=0), p, s, 0, empty.astype(speech.dtype), empty)
    e_t = lm.embed_tokens([SOS, *transcript])
    t = len(transcript) + 1
    loss_mask = np.zeros(p + s + t, dtype=speech.dtype)
    loss_mask[p + s :] = 1.0
    targets = np.full(p + s + t, PAD, dtype=np.int64)
    targets[p + s :] = [*transcript, EOS]
    return AssembledSequence(F.concat([e_p, speech, e_t], axis=0), p, s, t, loss_mask, targets)


def pad_sequences(seqs: Sequence[AssembledSequence]) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Right-pad assembled sequences into (B, S_max, d) plus padded targets and masks."""
    longest = max(seq.length for seq in seqs)
    rows, targets, masks = [], [], []
    for seq in seqs:
        extra = longest - seq.length
        emb = F.pad(seq.embeddings, ((0, extra), (0, 0))) if extra else seq.embeddings
        rows.append(F.reshape(emb, (1, longest, emb.shape[1])))
        targets.append(np.pad(seq.targets, (0, extra), constant_values=PAD) if seq.targets.size else np.full(longest, PAD))
        masks.append(np.pad(seq.loss_mask, (0, extra)) if seq.loss_mask.size else np.zeros(longest))
    stacked = F.concat(rows, axis=0)
    return stacked, np.stack(targets), np.stack(masks).astype(stacked.dtype)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class LlmAsrModel(AsrModel):
    kind = "llm"

    def __init__(self, config: "RunConfig", vocab_size: int, prompt: PromptSpec, seed: int | None = None):
        seed = config.seed if seed is None else seed
        dtype = config.np_dtype
        root = Rng(seed)
        init_rng = root.spawn("init")
        self.dropout_rng = root.spawn("dropout")
        self.config = config
        self.prompt = prompt
        llm = config.llm
        self.splice_factor = llm.adapter.splice_factor
        enc_dim = config.encoder.d_model
        self.encoder = ConformerEncoder(config.encoder, init_rng, self.dropout_rng, dtype=dtype)
        self.adapter = Adapter(
            enc_dim * self.splice_factor,
            llm.adapter.hidden_dim or 2 * enc_dim,
            llm.lm.d_model,
            init_rng,
            dtype=dtype,
        )
        self.lm = StandInLM(llm.lm, llm.lm.vocab_size or vocab_size, llm.lora.rank, llm.lora.alpha,
                            root.spawn("lm"), dtype=dtype)
        self.apply_trainability()

    @classmethod
    def build(cls, config: "RunConfig", tokenizer: "Tokenizer", seed: int | None = None) -> "LlmAsrModel":
        return cls(config, len(tokenizer), PromptSpec.from_tokenizer(tokenizer, config.llm.prompt_text), seed)

    # -- policy -----------------------------------------------------------
    def apply_trainability(self) -> None:
        """Encoder, adapter and LoRA train; every other LM weight is frozen."""
        self.encoder.requires_grad_(True)
        self.adapter.requires_grad_(True)
        self.lm.requires_grad_(False)
        for layer in lora_layers(self.lm):
            layer.lora_A.requires_grad = True
            layer.lora_B.requires_grad = True

    def set_dropout(self, p: float) -> None:
        self.encoder.set_dropout(p)

    def init_encoder_from(self, state: dict[str, np.ndarray]) -> int:
        """Copy `encoder.*` weights of an AED state dict; returns the number copied."""
        prefix = "encoder."
        encoder_state = {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}
        loaded = self.encoder.load_state_dict(encoder_state, strict=True)
        logger.info("Encoder initialised from AED weights", extra={"metrics": {"tensors": len(loaded)}})
        return len(loaded)

    # -- forward pieces ---------------------------------------------------
    def speech_embeddings(self, features, lengths) -> EncoderOutput:
        """E_S for a padded feature batch, with lengths in adapter frames."""
        spliced = splice_frames(self.encoder(features, lengths), self.splice_factor)
        return EncoderOutput(self.adapter(spliced.states), spliced.lengths)

    def assemble(self, speech: Tensor, transcript: Sequence[int] | None) -> AssembledSequence:
        return assemble(self.prompt, speech, transcript, self.lm)

    def lm_forward(self, seqs: Sequence[AssembledSequence], lora_enabled: bool = True) -> Tensor:
        stacked, _, _ = pad_sequences(seqs)
        previous = [layer.enabled for layer in lora_layers(self.lm)]
        set_lora_enabled(self.lm, lora_enabled)
        try:
            return self.lm(stacked)
        finally:
            for layer, enabled in zip(lora_layers(self.lm), previous):
                layer.enabled = enabled

    def loss(self, batch: "TrainBatch") -> Tensor:
        speech = self.speech_embeddings(batch.features, batch.feature_lengths)
        seqs = [
            self.assemble(F.getitem(speech.states, (i, slice(0, int(n)))), batch.targets[i])
            for i, n in enumerate(speech.lengths)
        ]
        stacked, targets, masks = pad_sequences(seqs)
        return F.cross_entropy(self.lm(stacked), targets, masks)

    # -- decoding ---------------------------------------------------------
    def score_fn(self, speech: Tensor) -> ScoreFn:
        """Next-token scorer given one utterance's E_S (s, d)."""
        context = self.assemble(speech, None).embeddings.data

        def score(prefixes):
            embedded = self.lm.embed_tokens(np.array(prefixes, dtype=np.int64)).data
            inputs = np.concatenate([np.repeat(context[None], len(prefixes), axis=0), embedded], axis=1)
            logits = self.lm(Tensor(inputs))
            return F.log_softmax(logits, axis=-1).data[:, -1, :]

        return score

    def generate(self, speech: Tensor, max_len: int, beam: int = 1, length_penalty: float = 0.6) -> list[int]:
        return list(search(self.score_fn(speech), beam, max_len, length_penalty).output_ids())

    def transcribe(self, features: Sequence[FeatureMatrix], beam: int = 1, max_len: int | None = None,
                   length_penalty: float = 0.6) -> list[Hypothesis]:
        self.eval()
        results = []
        for feats in features:
            enc = self.encoder.encode([feats])
            spliced = splice_frames(enc, self.splice_factor)
            speech = self.adapter(spliced.states)
            speech = Tensor(speech.data[0, : int(spliced.lengths[0])])
            limit = default_max_len(enc.valid_length) if max_len is None else max_len
            results.append(search(self.score_fn(speech), beam, limit, length_penalty))
        return results

    def components(self):
        lm_params = self.lm.named_parameters("lm.")
        return {
            "encoder": self.encoder.named_parameters("encoder."),
            "adapter": self.adapter.named_parameters("adapter."),
            "lm": [(n, p) for n, p in lm_params if ".lora_" not in n],
            "lora": [(n, p) for n, p in lm_params if ".lora_" in n],
        }
