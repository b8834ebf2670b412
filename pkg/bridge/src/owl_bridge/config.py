from __future__ import annotations

from dataclasses import dataclass

MODEL_IDS = {
    "base": "google/owlv2-base-patch16-ensemble",
    "large": "google/owlv2-large-patch14-ensemble",
}


@dataclass(frozen=True)
class BridgeConfig:
    model: str = "base"
    score_floor: float = 0.1
    device: str = "cpu"
    cache_prompts: bool = True

    def __post_init__(self) -> None:
        if self.model not in MODEL_IDS:
            raise ValueError(f"model must be one of {sorted(MODEL_IDS)}, got {self.model!r}")
        if not 0.0 <= self.score_floor < 1.0:
            raise ValueError(f"score_floor must lie in [0,1), got {self.score_floor}")
