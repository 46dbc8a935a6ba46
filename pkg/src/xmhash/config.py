from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

STANDARD_CODE_LENGTHS = (16, 32, 64, 128)
MAX_CODE_LENGTH = 512


@dataclass
class RunConfig:
    code_length: int = 16
    alpha: float = 1.0
    beta: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    hidden: tuple[int, ...] = (512,)
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    label_mode: str = "multihot"
    # "full" keeps i == j pairs in the in-batch likelihood, "off_diagonal" drops them
    pair_scope: str = "full"
    allow_any_length: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> "RunConfig":
        if self.code_length < 1 or self.code_length > MAX_CODE_LENGTH:
            raise ConfigError(f"code length must be in [1, {MAX_CODE_LENGTH}]")
        if self.code_length not in STANDARD_CODE_LENGTHS and not self.allow_any_length:
            raise ConfigError(
                f"code length {self.code_length} is not one of {STANDARD_CODE_LENGTHS}; pass allow_any_length to override"
            )
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch size must be at least 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        if self.hidden_activation not in ("relu", "identity", "tanh") or self.output_activation not in ("relu", "identity", "tanh"):
            raise ConfigError("activations must be relu, identity or tanh")
        if self.label_mode not in ("multihot", "prompt_feat"):
            raise ConfigError(f"label mode must be multihot or prompt_feat, got {self.label_mode!r}")
        if self.pair_scope not in ("full", "off_diagonal"):
            raise ConfigError(f"pair scope must be full or off_diagonal, got {self.pair_scope!r}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})
