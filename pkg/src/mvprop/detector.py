"""Keyframe detection sources behind one interface.

Two sources: a precomputed per-frame detection file (deterministic, used for
all desk-scale runs) and a live bridge speaking a line-delimited JSON protocol
over a child process's standard streams. Both filter to the requested prompts
and apply a common score floor so results stay comparable across sources.
"""

from __future__ import annotations

import json
import selectors
import subprocess
import time
from dataclasses import dataclass
from typing import Sequence

from .geometry import Detection, YoloBox


class DetectorError(RuntimeError):
    pass


class MissingFrameError(DetectorError):
    """The schedule demanded a frame the precomputed file does not contain."""


class ProtocolError(DetectorError):
    """The bridge broke the wire protocol or the detection invariants."""


class BridgeError(DetectorError):
    """Bridge process failure: timeout, early exit, unusable streams."""


@dataclass(frozen=True)
class DetectionRequest:
    frame: int
    image_ref: str
    prompts: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.prompts:
            raise ValueError("prompts must be non-empty")


@dataclass(frozen=True)
class DetectionResponse:
    frame: int
    detections: tuple[Detection, ...]


def parse_detection_obj(obj: dict) -> Detection:
    """Parse one detection record from the file/wire schema."""
    try:
        box = obj["box"]
        score = float(obj["score"])
        label = str(obj["label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed detection record: {obj!r}") from exc
    if len(box) != 4:
        raise ProtocolError(f"box must have 4 entries: {box!r}")
    if not 0.0 <= score <= 1.0:
        raise ProtocolError(f"score out of [0,1]: {score}")
    if not label:
        raise ProtocolError("empty label")
    return Detection(YoloBox(*(float(v) for v in box)), score, label)


def detection_to_obj(det: Detection) -> dict:
    return {"box": det.box.as_list(), "score": det.score, "label": det.label}


def validate_response(obj: dict, req: DetectionRequest) -> DetectionResponse:
    """Check a decoded response against the wire-protocol invariants."""
    if obj.get("frame") != req.frame:
        raise ProtocolError(
            f"response frame {obj.get('frame')!r} does not match request {req.frame}"
        )
    raw = obj.get("detections")
    if not isinstance(raw, list):
        raise ProtocolError("response missing 'detections' list")
    dets = []
    for d in raw:
        det = parse_detection_obj(d)
        if det.label not in req.prompts:
            raise ProtocolError(f"label {det.label!r} not in requested prompts")
        dets.append(det)
    return DetectionResponse(req.frame, tuple(dets))


class PrecomputedDetector:
    """Read-only lookup over a JSONL detection file keyed by (video, frame)."""

    def __init__(self, path, video: str, score_floor: float = 0.1):
        self.video = video
        self.score_floor = score_floor
        self._frames: dict[int, list[Detection]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DetectorError(f"{path}:{lineno}: invalid JSON") from exc
                if obj.get("video") != video:
                    continue
                frame = int(obj["frame"])
                self._frames[frame] = [
                    parse_detection_obj(d) for d in obj.get("detections", [])
                ]

    def detect(self, req: DetectionRequest) -> DetectionResponse:
        if req.frame not in self._frames:
            raise MissingFrameError(
                f"no precomputed detections for video {self.video!r} frame {req.frame}"
            )
        dets = tuple(
            d
            for d in self._frames[req.frame]
            if d.label in req.prompts and d.score >= self.score_floor
        )
        return DetectionResponse(req.frame, dets)

    def close(self) -> None:
        pass


class BridgeDetector:
    """One-request-at-a-time JSON-lines bridge to an external detector process."""

    def __init__(self, command: Sequence[str], timeout: float = 60.0, score_floor: float = 0.1):
        self.timeout = timeout
        self.score_floor = score_floor
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"cannot start bridge {command!r}: {exc}") from exc

    def _read_line(self) -> str:
        sel = selectors.DefaultSelector()
        sel.register(self._proc.stdout, selectors.EVENT_READ)
        deadline = time.monotonic() + self.timeout
        try:
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise BridgeError(f"bridge timed out after {self.timeout}s")
                if sel.select(timeout=remaining):
                    line = self._proc.stdout.readline()
                    if line == "":
                        raise BridgeError(
                            f"bridge exited (code {self._proc.poll()}) before responding"
                        )
                    return line
        finally:
            sel.close()

    def detect(self, req: DetectionRequest) -> DetectionResponse:
        if self._proc.poll() is not None:
            raise BridgeError(f"bridge process exited with code {self._proc.returncode}")
        msg = json.dumps(
            {"frame": req.frame, "image_path": req.image_ref, "prompts": list(req.prompts)}
        )
        try:
            self._proc.stdin.write(msg + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError("bridge stdin closed") from exc

        line = self._read_line().strip()
        if line.startswith('{"error"'):
            try:
                err = json.loads(line).get("error")
            except json.JSONDecodeError:
                err = line
            raise BridgeError(f"bridge reported error: {err}")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable bridge response: {line!r}") from exc
        resp = validate_response(obj, req)
        return DetectionResponse(
            resp.frame, tuple(d for d in resp.detections if d.score >= self.score_floor)
        )

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_detection_file(path, video: str, per_frame: Sequence[Sequence[Detection]]) -> None:
    """Write per-frame detections in the precomputed-file schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame, dets in enumerate(per_frame):
            fh.write(
                json.dumps(
                    {
                        "video": video,
                        "frame": frame,
                        "detections": [detection_to_obj(d) for d in dets],
                    }
                )
                + "\n"
            )
