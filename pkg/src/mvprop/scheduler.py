"""End-to-end per-video state machine.

Scheduled keyframes call the detector; intermediate frames propagate every
track through the motion-vector update, clip the results, and run the
area-growth check. Any propagation failure or growth firing triggers a single
full-frame re-detection that replaces all tracks for that frame. The
single-class switch narrows the prompt set after a confident single-object
detection.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .detector import DetectionRequest, detection_to_obj
from .geometry import Detection, YoloBox, area_px, clip_and_validate
from .mvstream import MvFrame
from .propagate import FAILED, MvpConfig, PropagationOutcome, propagate_box

MODE_MVP = "mvp"
MODE_FROZEN = "frozen"
MODE_FRAMEWISE = "framewise"

CAUSE_KEYFRAME = "keyframe"
CAUSE_PROPAGATION_FAILURE = "propagation_failure"
CAUSE_AREA_GROWTH = "area_growth"


class InputError(RuntimeError):
    """Inconsistent frame inputs (image sequence vs MV stream)."""


@dataclass(frozen=True)
class TrackState:
    detection: Detection
    t_star: int
    a_star: float


@dataclass
class PipelineState:
    t: int = 0
    tracks: list[TrackState] = field(default_factory=list)
    single_class: bool = False
    locked_class: Optional[str] = None
    miss_count: int = 0


@dataclass(frozen=True)
class FrameRecord:
    video: str
    frame: int
    detector_called: bool
    cause: Optional[str]
    per_track_outcomes: tuple[dict, ...]
    wall_ms: float

    def to_obj(self) -> dict:
        return {
            "video": self.video,
            "frame": self.frame,
            "detector_called": self.detector_called,
            "cause": self.cause,
            "per_track_outcomes": list(self.per_track_outcomes),
            "wall_ms": self.wall_ms,
        }


@dataclass
class RunResult:
    video: str
    per_frame: list[tuple[Detection, ...]]
    log: list[FrameRecord]

    @property
    def detector_calls(self) -> int:
        return sum(1 for r in self.log if r.detector_called)

    @property
    def total_wall_ms(self) -> float:
        return sum(r.wall_ms for r in self.log)


def check_growth(
    track: TrackState,
    new_box: YoloBox,
    t: int,
    frame_w: int,
    frame_h: int,
    cfg: MvpConfig,
) -> tuple[bool, TrackState]:
    """Area-growth fallback predicate with anchor update on firing.

    Fires when the updated box area strictly exceeds growth_ratio times the
    anchored area within growth_window frames of the anchor. Disabled mode
    never fires; anchors then refresh only at detector calls.
    """
    area = area_px(new_box, frame_w, frame_h)
    if not cfg.growth_check_enabled:
        return False, track
    fires = area > cfg.growth_ratio * track.a_star and (t - track.t_star) <= cfg.growth_window
    if fires:
        return True, replace(track, t_star=t, a_star=area)
    return False, track


def update_single_class(
    state: PipelineState,
    detections: Sequence[Detection],
    cfg: MvpConfig,
    is_fallback: bool,
) -> None:
    """Re-evaluate the single-class switch after a detector call (in place).

    Exactly one detection at or above tau_cls engages the switch on that
    class. While engaged, fallback calls that return nothing above tau_cls
    count as misses; miss_limit consecutive misses release the switch. Any
    qualifying detection resets the miss counter.
    """
    if not cfg.single_class_enabled:
        state.single_class = False
        state.locked_class = None
        state.miss_count = 0
        return
    qualifying = [d for d in detections if d.score >= cfg.tau_cls]
    if state.single_class and is_fallback and not qualifying:
        state.miss_count += 1
        if state.miss_count >= cfg.miss_limit:
            state.single_class = False
            state.locked_class = None
            state.miss_count = 0
        return
    if len(qualifying) == 1:
        state.single_class = True
        state.locked_class = qualifying[0].label
        state.miss_count = 0
    else:
        state.single_class = False
        state.locked_class = None
        state.miss_count = 0


class Pipeline:
    """Sequential per-video scheduler over a detector and an MV stream."""

    def __init__(
        self,
        detector,
        prompts: Sequence[str],
        frame_w: int,
        frame_h: int,
        cfg: MvpConfig,
        mode: str = MODE_MVP,
        video: str = "video",
    ):
        if mode not in (MODE_MVP, MODE_FROZEN, MODE_FRAMEWISE):
            raise ValueError(f"unknown mode {mode!r}")
        if not prompts:
            raise ValueError("prompt list must be non-empty")
        self.detector = detector
        self.prompts = tuple(prompts)
        self.frame_w = frame_w
        self.frame_h = frame_h
        self.cfg = cfg if mode != MODE_FRAMEWISE else replace(cfg, keyframe_interval=1)
        self.mode = mode
        self.video = video
        self._next_id = 0

    def _detect(self, state: PipelineState, image_ref: str, is_fallback: bool) -> list[Detection]:
        prompts = (
            (state.locked_class,)
            if state.single_class and state.locked_class
            else self.prompts
        )
        resp = self.detector.detect(DetectionRequest(state.t, image_ref, tuple(prompts)))
        detections: list[Detection] = []
        for det in resp.detections:
            clipped = clip_and_validate(det.box, self.frame_w, self.frame_h, self.cfg.min_area)
            if clipped is None:
                continue
            detections.append(replace(det, box=clipped, id=self._next_id))
            self._next_id += 1
        update_single_class(state, detections, self.cfg, is_fallback)
        state.tracks = [
            TrackState(d, state.t, area_px(d.box, self.frame_w, self.frame_h))
            for d in detections
        ]
        return detections

    def step(
        self, state: PipelineState, mv_frame: MvFrame, image_ref: str = ""
    ) -> tuple[PipelineState, tuple[Detection, ...], FrameRecord]:
        t0 = time.perf_counter()
        t = state.t
        cfg = self.cfg
        outcomes: list[dict] = []
        cause: Optional[str] = None
        detector_called = False

        if t % cfg.keyframe_interval == 0:
            detections = self._detect(state, image_ref, is_fallback=False)
            detector_called = True
            cause = CAUSE_KEYFRAME
        elif self.mode == MODE_FROZEN:
            detections = [tr.detection for tr in state.tracks]
            outcomes = [{"id": d.id, "kind": "frozen"} for d in detections]
        else:
            detections, outcomes, cause = self._propagate_all(state, mv_frame)
            if cause is not None:
                detections = self._detect(state, image_ref, is_fallback=True)
                detector_called = True

        state.t += 1
        wall_ms = (time.perf_counter() - t0) * 1000.0
        record = FrameRecord(
            self.video, t, detector_called, cause, tuple(outcomes), wall_ms
        )
        return state, tuple(detections), record

    def _propagate_all(
        self, state: PipelineState, mv_frame: MvFrame
    ) -> tuple[list[Detection], list[dict], Optional[str]]:
        """Propagate every track; report a fallback cause when one is needed."""
        cfg = self.cfg
        outcomes: list[dict] = []
        results: list[tuple[TrackState, PropagationOutcome]] = []
        any_failed = False
        for track in state.tracks:
            out = propagate_box(track.detection.box, mv_frame, self.frame_w, self.frame_h, cfg)
            entry = {"id": track.detection.id, "kind": out.kind}
            if out.mu_r is not None:
                entry["mu_r"] = out.mu_r
            if out.reason is not None:
                entry["reason"] = out.reason
            outcomes.append(entry)
            results.append((track, out))
            if out.kind == FAILED:
                any_failed = True
        if any_failed:
            return [], outcomes, CAUSE_PROPAGATION_FAILURE

        new_tracks: list[TrackState] = []
        detections: list[Detection] = []
        growth_fired = False
        for (track, out), entry in zip(results, outcomes):
            clipped = clip_and_validate(out.box, self.frame_w, self.frame_h, cfg.min_area)
            if clipped is None:
                entry["kind"] = "dropped"
                continue
            fired, updated = check_growth(
                track, clipped, state.t, self.frame_w, self.frame_h, cfg
            )
            if fired:
                growth_fired = True
                entry["growth_fired"] = True
            new_tracks.append(replace(updated, detection=updated.detection.with_box(clipped)))
            detections.append(updated.detection.with_box(clipped))
        if growth_fired:
            return [], outcomes, CAUSE_AREA_GROWTH
        state.tracks = new_tracks
        return detections, outcomes, None

    def run(self, frame_inputs: Iterable[tuple[str, MvFrame]]) -> RunResult:
        """Apply step over an ordered (image_ref, MvFrame) sequence."""
        state = PipelineState()
        per_frame: list[tuple[Detection, ...]] = []
        log: list[FrameRecord] = []
        for image_ref, mv_frame in frame_inputs:
            if mv_frame.frame != state.t:
                raise InputError(
                    f"MV frame index {mv_frame.frame} does not match clock {state.t}"
                )
            state, detections, record = self.step(state, mv_frame, image_ref)
            per_frame.append(detections)
            log.append(record)
        return RunResult(self.video, per_frame, log)


def run_video(
    detector,
    mv_sequence,
    num_frames: int,
    prompts: Sequence[str],
    frame_w: int,
    frame_h: int,
    cfg: MvpConfig,
    mode: str = MODE_MVP,
    video: str = "video",
    image_refs: Optional[Sequence[str]] = None,
) -> RunResult:
    """Convenience wrapper: run a pipeline over an MvSequence of known length."""
    if image_refs is not None and len(image_refs) != num_frames:
        raise InputError(
            f"{len(image_refs)} image refs for {num_frames} frames"
        )
    pipeline = Pipeline(detector, prompts, frame_w, frame_h, cfg, mode=mode, video=video)
    inputs = (
        (image_refs[t] if image_refs is not None else "", mv_sequence.frame(t))
        for t in range(num_frames)
    )
    return pipeline.run(inputs)


def write_predictions(path, result: RunResult) -> None:
    """Write per-frame outputs in the precomputed detection-file schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame, dets in enumerate(result.per_frame):
            fh.write(
                json.dumps(
                    {
                        "video": result.video,
                        "frame": frame,
                        "detections": [detection_to_obj(d) for d in dets],
                    }
                )
                + "\n"
            )


def write_run_log(path, result: RunResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in result.log:
            fh.write(json.dumps(record.to_obj()) + "\n")
