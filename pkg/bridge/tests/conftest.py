import pytest


class StubDetector:
    """Deterministic stand-in: one box per prompt, sized by frame geometry."""

    def __init__(self, fail_on=()):
        self.fail_on = set(fail_on)
        self.calls = []

    def detect(self, image_path, prompts):
        self.calls.append((image_path, tuple(prompts)))
        if image_path in self.fail_on:
            raise RuntimeError(f"cannot read {image_path}")
        return [
            {"box": [0.5, 0.5, 0.2, 0.2], "score": 0.9 - 0.1 * i, "label": p}
            for i, p in enumerate(prompts[:3])
        ]


@pytest.fixture
def stub_detector():
    return StubDetector()
