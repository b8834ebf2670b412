"""OWLv2 wrapper producing normalized detections for the wire protocol.

Heavy dependencies (torch, transformers, PIL) are imported lazily so the
serve loop and the config layer stay importable in lightweight environments.
Text-tower outputs are cached per unique tokenized prompt set; a video worth
of requests normally reuses one prompt list, so the text transformer runs
once.
"""

from __future__ import annotations

from typing import Sequence

from .config import MODEL_IDS, BridgeConfig


class ModelLoadError(RuntimeError):
    pass


class _TextTowerCache:
    """Memoizes a text-model forward on the token tensors' bytes."""

    def __init__(self, text_model):
        self._inner_forward = text_model.forward
        self._cache: dict[bytes, object] = {}
        self.hits = 0
        self.misses = 0
        text_model.forward = self._forward

    def _forward(self, input_ids=None, attention_mask=None, **kwargs):
        key = input_ids.cpu().numpy().tobytes()
        if attention_mask is not None:
            key += attention_mask.cpu().numpy().tobytes()
        if key in self._cache:
            self.hits += 1
            return self._cache[key]
        self.misses += 1
        out = self._inner_forward(
            input_ids=input_ids, attention_mask=attention_mask, **kwargs
        )
        self._cache[key] = out
        return out


class Owlv2Detector:
    """Loads a pretrained OWLv2 checkpoint and runs prompted detection."""

    def __init__(self, config: BridgeConfig):
        try:
            import torch
            from transformers import Owlv2ForObjectDetection, Owlv2Processor
        except ImportError as exc:
            raise ModelLoadError(f"missing dependency: {exc}") from exc

        self.config = config
        model_id = MODEL_IDS[config.model]
        try:
            self.processor = Owlv2Processor.from_pretrained(model_id)
            self.model = Owlv2ForObjectDetection.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_id}: {exc}") from exc
        self.model.to(config.device)
        self.model.eval()
        self._torch = torch
        self.text_cache = None
        if config.cache_prompts:
            self.text_cache = _TextTowerCache(self.model.owlv2.text_model)

    def detect(self, image_path: str, prompts: Sequence[str]) -> list[dict]:
        from PIL import Image

        torch = self._torch
        image = Image.open(image_path).convert("RGB")
        width, height = image.size
        inputs = self.processor(
            text=[list(prompts)], images=image, return_tensors="pt"
        ).to(self.config.device)
        with torch.no_grad():
            outputs = self.model(**inputs)
        results = self.processor.post_process_object_detection(
            outputs,
            threshold=self.config.score_floor,
            target_sizes=torch.tensor([[height, width]]),
        )[0]

        detections = []
        for score, label_idx, box in zip(
            results["scores"], results["labels"], results["boxes"]
        ):
            x0, y0, x1, y1 = (float(v) for v in box)
            x0, x1 = max(0.0, x0), min(float(width), x1)
            y0, y1 = max(0.0, y0), min(float(height), y1)
            if x1 <= x0 or y1 <= y0:
                continue
            detections.append(
                {
                    "box": [
                        (x0 + x1) / (2.0 * width),
                        (y0 + y1) / (2.0 * height),
                        (x1 - x0) / width,
                        (y1 - y0) / height,
                    ],
                    "score": min(1.0, max(0.0, float(score))),
                    "label": prompts[int(label_idx)],
                }
            )
        return detections
