"""Harness configuration and errors."""

from __future__ import annotations

from dataclasses import dataclass


class HarnessError(Exception):
    pass


@dataclass
class HarnessConfig:
    # "hash" is the self-contained deterministic encoder; names starting with
    # "t5" select a pretrained text encoder loaded through `transformers`.
    encoder: str = "hash"
    pooling: str = "mean"
    max_tokens: int = 512
    embed_width: int = 1024
    budget_s: float = 60.0  # wall-clock budget per pipeline search
    trials: int = 20  # random hyperparameter draws per pipeline
    val_fraction: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        if self.budget_s <= 0:
            raise HarnessError(f"budget must be > 0 seconds, got {self.budget_s}")
        if self.trials < 1:
            raise HarnessError(f"trials must be >= 1, got {self.trials}")
        if not 0.0 < self.val_fraction < 1.0:
            raise HarnessError(
                f"validation fraction must be in (0, 1), got {self.val_fraction}"
            )
        if self.pooling != "mean":
            raise HarnessError(f"unsupported pooling rule {self.pooling!r}")
        if self.embed_width < 1:
            raise HarnessError(f"embedding width must be >= 1, got {self.embed_width}")
