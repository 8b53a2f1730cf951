"""Size presets for the summarizer network.

"desk" is small enough to train on a laptop CPU in minutes; "paper" carries
the full-scale configuration (hidden 768, 100 filters, 1024 codes, 6-layer
8-head generator, 12-layer embedder).
"""

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ModelProfile:
    name: str
    h_dim: int  # utterance embedding size; also the generator hidden size
    conv_filters: int  # D
    codebook_size: int  # K
    gen_layers: int
    gen_heads: int
    gen_ffn: int
    emb_layers: int
    emb_heads: int
    emb_ffn: int
    max_len: int = 64

    def __post_init__(self):
        if self.h_dim % self.gen_heads or self.h_dim % self.emb_heads:
            raise ValueError("hidden dim must be divisible by head count")
        if self.codebook_size < 2 or self.conv_filters < 1:
            raise ValueError("codebook needs K >= 2 and D >= 1")

    def to_dict(self):
        return asdict(self)


PROFILES = {
    "desk": ModelProfile(
        name="desk",
        h_dim=64,
        conv_filters=16,
        codebook_size=64,
        gen_layers=2,
        gen_heads=4,
        gen_ffn=128,
        emb_layers=2,
        emb_heads=4,
        emb_ffn=128,
    ),
    "paper": ModelProfile(
        name="paper",
        h_dim=768,
        conv_filters=100,
        codebook_size=1024,
        gen_layers=6,
        gen_heads=8,
        gen_ffn=3072,
        emb_layers=12,
        emb_heads=12,
        emb_ffn=3072,
    ),
}


def profile_from_dict(record):
    return ModelProfile(**record)
