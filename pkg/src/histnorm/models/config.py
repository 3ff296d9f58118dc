from __future__ import annotations

from dataclasses import dataclass, asdict, replace

LEVELS = ("character", "subword")
ATTENTIONS = ("none", "soft", "multi_head")
ARCHITECTURES = ("vanilla_rnn", "gru", "lstm", "self_attention")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    level: str
    attention: str
    architecture: str
    vocab_size: int
    num_layers: int = 6
    embed_dim: int = 512
    hidden_dim: int = 512
    num_heads: int = 8
    ffn_dim: int = 2048
    tie_output_embeddings: bool = True
    dropout: float = 0.1
    attention_score: str = "additive"  # or "dot"

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ConfigError(f"level must be one of {LEVELS}, got {self.level!r}")
        if self.attention not in ATTENTIONS:
            raise ConfigError(f"attention must be one of {ATTENTIONS}, got {self.attention!r}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if (self.attention == "multi_head") != (self.architecture == "self_attention"):
            raise ConfigError("multi_head attention goes with (and only with) self_attention")
        for f in ("vocab_size", "num_layers", "embed_dim", "hidden_dim", "num_heads", "ffn_dim"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"{f} must be positive")
        if self.is_transformer:
            if self.embed_dim % self.num_heads:
                raise ConfigError(
                    f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
            if self.hidden_dim != self.embed_dim:
                raise ConfigError("self_attention models need hidden_dim == embed_dim")
        if self.attention_score not in ("additive", "dot"):
            raise ConfigError(f"unknown attention_score {self.attention_score!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    @property
    def is_transformer(self) -> bool:
        return self.architecture == "self_attention"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def replace(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


# name -> (level, attention, architecture)
PRESETS: dict[str, tuple[str, str, str]] = {
    "NoAtt-RNN": ("character", "none", "vanilla_rnn"),
    "NoAtt-GRU": ("character", "none", "gru"),
    "NoAtt-LSTM": ("character", "none", "lstm"),
    "Att-RNN": ("character", "soft", "vanilla_rnn"),
    "Att-GRU": ("character", "soft", "gru"),
    "Att-LSTM": ("character", "soft", "lstm"),
    "Transformer": ("character", "multi_head", "self_attention"),
    "BPE-Soft": ("subword", "soft", "lstm"),
    "BPE-Transformer": ("subword", "multi_head", "self_attention"),
}

# character-level counterpart used for the BPE size 0 row of a sweep
CHAR_COUNTERPART = {"BPE-Soft": "Att-LSTM", "BPE-Transformer": "Transformer"}

PROFILES: dict[str, dict] = {
    "full": dict(num_layers=6, embed_dim=512, hidden_dim=512, num_heads=8, ffn_dim=2048),
    # ffn scaled with embed_dim (2048 * 64 / 512)
    "toy": dict(num_layers=2, embed_dim=64, hidden_dim=64, num_heads=8, ffn_dim=256),
}


def make_config(preset: str, vocab_size: int, profile: str = "toy", **overrides) -> ModelConfig:
    try:
        level, attention, arch = PRESETS[preset]
    except KeyError:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    try:
        kw = dict(PROFILES[profile])
    except KeyError:
        raise ConfigError(f"unknown profile {profile!r}") from None
    kw.update(overrides)
    return ModelConfig(level=level, attention=attention, architecture=arch,
                       vocab_size=vocab_size, **kw)
