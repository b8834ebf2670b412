import pytest

from mvprop.detector import PrecomputedDetector
from mvprop.mvstream import MvSequence
from mvprop import synth


@pytest.fixture
def run_scene(tmp_path):
    """Generate a scene and return (scene, detector, mv_sequence) ready to run."""

    def _build(spec: synth.SceneSpec, score_floor: float = 0.1):
        scene = synth.generate(spec)
        det_path = tmp_path / f"{spec.video}.det.jsonl"
        scene.write_detections(det_path)
        detector = PrecomputedDetector(det_path, video=spec.video, score_floor=score_floor)
        return scene, detector, MvSequence.from_frames(scene.mv_frames)

    return _build
