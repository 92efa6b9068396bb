"""
Parameter accounting.

`count_params` computes per-component totals in closed form from a config,
without allocating anything, so full-scale widths can be counted on a laptop.
`enumerate_params` sums the arrays of an allocated model; the two must agree
for every desk preset.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..frontend import NUM_MEL_BINS
from .encoder import subsampled_length

if TYPE_CHECKING:
    from ..config import AdapterConfig, DecoderConfig, EncoderConfig, LmConfig, LoraConfig, RunConfig
    from .base import AsrModel


def _layer_norm(d: int) -> int:
    return 2 * d


def _linear(n_in: int, n_out: int, bias: bool = True) -> int:
    return n_in * n_out + (n_out if bias else 0)


def _ffn(d: int, hidden: int) -> int:
    return _linear(d, hidden) + _linear(hidden, d)


def encoder_params(cfg: "EncoderConfig") -> int:
    d, f, kernel = cfg.d_model, cfg.ffn_dim, cfg.conv_kernel
    c1, c2 = cfg.channels
    freq = int(subsampled_length(NUM_MEL_BINS))
    subsampling = (c1 * 9 + c1) + (c2 * c1 * 9 + c2) + _linear(c2 * freq, d)

    ffn = _layer_norm(d) + _ffn(d, f)
    attention = _layer_norm(d) + 4 * _linear(d, d) + _linear(d, d, bias=False) + 2 * d
    conv = _layer_norm(d) + _linear(d, 2 * d) + (d * kernel + d) + _layer_norm(d) + _linear(d, d)
    block = 2 * ffn + attention + conv + _layer_norm(d)
    return subsampling + cfg.num_layers * block


def decoder_params(cfg: "DecoderConfig", vocab_size: int) -> int:
    d = cfg.d_model
    layer = 3 * _layer_norm(d) + 2 * 4 * _linear(d, d) + _ffn(d, cfg.ffn_dim)
    # output projection is tied to the embedding
    return vocab_size * d + cfg.num_layers * layer + _layer_norm(d)


def adapter_params(cfg: "AdapterConfig", encoder_dim: int, lm_dim: int) -> int:
    hidden = cfg.hidden_dim or 2 * encoder_dim
    return _linear(cfg.splice_factor * encoder_dim, hidden) + _linear(hidden, lm_dim)


def lm_params(cfg: "LmConfig", vocab_size: int) -> int:
    d = cfg.d_model
    layer = 2 * _layer_norm(d) + 4 * _linear(d, d) + _ffn(d, cfg.ffn_dim)
    return vocab_size * d + cfg.num_layers * layer + _layer_norm(d)


def lora_params(lm: "LmConfig", lora: "LoraConfig") -> int:
    # query and value projections of every layer
    d, r = lm.d_model, lora.rank
    return lm.num_layers * 2 * (r * d + d * r)


def count_params(config: "RunConfig", vocab_size: int = 0, full_scale: bool = False) -> dict[str, int]:
    """Per-component totals plus "total" for the config's kind.

    With `full_scale=True` the widths come from the full-scale preset of
    `config.size` and the vocabulary is the full-scale one; otherwise the
    config's own (desk) widths are used with `vocab_size` unless the config
    pins a vocabulary size itself.
    """
    from ..config import FULL_SCALE_PRESETS

    if full_scale:
        preset = FULL_SCALE_PRESETS[config.size]
        encoder, decoder, adapter, lm = preset.encoder, preset.decoder, preset.adapter, preset.lm
    else:
        encoder, decoder, adapter, lm = config.encoder, config.decoder, config.llm.adapter, config.llm.lm

    counts: dict[str, int] = {"encoder": encoder_params(encoder)}
    if config.kind == "aed":
        counts["decoder"] = decoder_params(decoder, decoder.vocab_size or vocab_size)
    else:
        counts["adapter"] = adapter_params(adapter, encoder.d_model, lm.d_model)
        counts["lm"] = lm_params(lm, lm.vocab_size or vocab_size)
        counts["lora"] = lora_params(lm, config.llm.lora)
    counts["total"] = sum(counts.values())
    return counts


def enumerate_params(model: "AsrModel") -> dict[str, int]:
    """Brute-force totals: the size of every allocated array, per component."""
    counts = {name: int(sum(p.size for _, p in params)) for name, params in model.components().items()}
    counts["total"] = sum(counts.values())
    return counts


def trainable_count(model: "AsrModel") -> int:
    return int(sum(p.size for _, p in model.trainable_parameters()))


def format_count(n: int) -> str:
    """Human-readable count: 1.08B, 648.3M, 22.0M, 12.3K."""
    for scale, suffix in ((1e9, "B"), (1e6, "M"), (1e3, "K")):
        if n >= scale:
            digits = 2 if suffix == "B" else 1
            return f"{n / scale:.{digits}f}{suffix}"
    return str(n)


def preset_table(full_scale: bool = True, vocab_size: int = 0) -> list[dict]:
    """Counts for every size of both kinds, one row per (kind, size)."""
    from ..config import _PRESETS_CORE, RunConfig

    rows = []
    for kind in ("aed", "llm"):
        for size in _PRESETS_CORE:
            counts = count_params(RunConfig(kind=kind, size=size), vocab_size=vocab_size, full_scale=full_scale)
            rows.append({"kind": kind, "size": size, **counts})
    return rows
