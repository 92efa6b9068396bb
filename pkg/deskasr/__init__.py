"""deskasr: desk-scale attention-encoder-decoder and LLM-stack speech recognition."""

__version__ = "0.1.0"
