"""Bridge from pretrained masked-LM encoders to the summarizer's binary
embedding tables ([CLS]-pooled, one row per utterance)."""

from .exporter import EncoderUnavailable, WriteFailure, encode_texts, export, write_table

__all__ = ["EncoderUnavailable", "WriteFailure", "encode_texts", "export", "write_table"]
