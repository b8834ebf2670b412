"""Smoke tests against real pretrained weights.

These run only when the checkpoint is available locally or the hub is
reachable; otherwise they skip rather than fail, since weight availability is
an environment property, not a code property.
"""

import json

import pytest

from mvprop.detector import DetectionRequest, validate_response
from mvprop.geometry import to_pixel

from owl_bridge.config import BridgeConfig
from owl_bridge.server import handle_request


@pytest.fixture(scope="module")
def real_detector():
    from owl_bridge.model import ModelLoadError, Owlv2Detector

    try:
        return Owlv2Detector(BridgeConfig(model="base"))
    except ModelLoadError as exc:
        pytest.skip(f"pretrained weights unavailable: {exc}")


@pytest.fixture(scope="module")
def photo_like_image(tmp_path_factory):
    # A filled disc on a plain background: enough structure for a smoke run.
    from PIL import Image, ImageDraw

    img = Image.new("RGB", (320, 240), (200, 200, 200))
    draw = ImageDraw.Draw(img)
    draw.ellipse([100, 60, 220, 180], fill=(180, 40, 40))
    path = tmp_path_factory.mktemp("img") / "scene.png"
    img.save(path)
    return str(path)


def test_real_responses_conform(real_detector, photo_like_image):
    prompts = ["a red circle", "a photo of a ball"]
    for t in range(3):
        line = json.dumps(
            {"frame": t, "image_path": photo_like_image, "prompts": prompts}
        )
        obj = handle_request(real_detector, line)
        assert "error" not in obj
        req = DetectionRequest(t, photo_like_image, tuple(prompts))
        resp = validate_response(obj, req)
        for det in resp.detections:
            px = to_pixel(det.box, 320, 240)
            assert 0.0 <= px.x_min <= px.x_max <= 320.0
            assert 0.0 <= px.y_min <= px.y_max <= 240.0


def test_prompt_cache_hits_on_repeat(real_detector, photo_like_image):
    if real_detector.text_cache is None:
        pytest.skip("prompt cache disabled")
    prompts = ["a red circle"]
    before = real_detector.text_cache.hits
    real_detector.detect(photo_like_image, prompts)
    real_detector.detect(photo_like_image, prompts)
    assert real_detector.text_cache.hits > before
