"""Motion-vector ingestion: dump-file parsing, serialization, region queries.

The dump format matches the conventional decoder side-data export layout:

    framenum,source,blockw,blockh,srcx,srcy,dstx,dsty,flags

one record per line after the header, grouped by nondecreasing frame number.
``source`` is -1 for past-reference vectors and +1 for future-reference ones;
``flags`` is hex and ignored on input. Coordinates may be fractional (synthetic
dumps use sub-pixel displacements; integer dumps from real extractors parse
unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, TextIO

from .geometry import PixelBox

HEADER = "framenum,source,blockw,blockh,srcx,srcy,dstx,dsty,flags"

PAST = -1
FUTURE = 1


class MvDumpError(ValueError):
    """Malformed or mis-ordered motion-vector dump input."""


@dataclass(frozen=True)
class MotionVector:
    frame: int
    source: int  # PAST (-1) or FUTURE (+1)
    block_w: float
    block_h: float
    src_x: float
    src_y: float
    dst_x: float
    dst_y: float

    def displacement(self) -> tuple[float, float]:
        """Motion of content from the reference frame to the current frame."""
        return self.dst_x - self.src_x, self.dst_y - self.src_y


@dataclass(frozen=True)
class MvFrame:
    frame: int
    vectors: tuple[MotionVector, ...] = ()

    def __post_init__(self) -> None:
        for v in self.vectors:
            if v.frame != self.frame:
                raise MvDumpError(
                    f"vector for frame {v.frame} placed in MvFrame {self.frame}"
                )


def _fmt(x: float) -> str:
    return f"{int(x)}" if float(x).is_integer() else f"{x:.6g}"


def parse_mv_dump(stream: TextIO, keep_future: bool = False) -> list[MvFrame]:
    """Parse a dump into per-frame vector groups.

    Future-reference vectors are dropped unless ``keep_future`` is set; the
    forward box update only consumes past-reference motion. Frames absent from
    the dump are simply not emitted; use :class:`MvSequence` for on-demand
    empty frames.
    """
    frames: list[MvFrame] = []
    current: list[MotionVector] = []
    current_frame: Optional[int] = None

    first = stream.readline()
    if first and first.strip() and first.strip() != HEADER:
        raise MvDumpError(f"line 1: expected header {HEADER!r}")

    for lineno, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise MvDumpError(f"line {lineno}: expected 9 fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            source = int(parts[1])
            bw, bh, sx, sy, dx, dy = (float(p) for p in parts[2:8])
        except ValueError as exc:
            raise MvDumpError(f"line {lineno}: {exc}") from exc
        if source not in (PAST, FUTURE):
            raise MvDumpError(f"line {lineno}: source must be -1 or +1, got {source}")
        if bw <= 0 or bh <= 0:
            raise MvDumpError(f"line {lineno}: non-positive block size")
        if current_frame is not None and frame < current_frame:
            raise MvDumpError(
                f"line {lineno}: frame {frame} out of order (after {current_frame})"
            )
        if frame != current_frame:
            if current_frame is not None:
                frames.append(MvFrame(current_frame, tuple(current)))
            current_frame = frame
            current = []
        if source == PAST or keep_future:
            current.append(MotionVector(frame, source, bw, bh, sx, sy, dx, dy))
    if current_frame is not None:
        frames.append(MvFrame(current_frame, tuple(current)))
    return frames


def serialize_mv_dump(frames: Iterable[MvFrame], stream: TextIO) -> None:
    """Write frames back out in the dump format (inverse of parse_mv_dump)."""
    stream.write(HEADER + "\n")
    for f in frames:
        for v in f.vectors:
            stream.write(
                f"{v.frame},{v.source},{_fmt(v.block_w)},{_fmt(v.block_h)},"
                f"{_fmt(v.src_x)},{_fmt(v.src_y)},{_fmt(v.dst_x)},{_fmt(v.dst_y)},0x0\n"
            )


@dataclass
class MvSequence:
    """Frame-indexed view over a parsed dump; missing frames read as empty."""

    _by_frame: dict[int, MvFrame] = field(default_factory=dict)

    @classmethod
    def from_frames(cls, frames: Iterable[MvFrame]) -> "MvSequence":
        return cls({f.frame: f for f in frames})

    @classmethod
    def from_file(cls, path, keep_future: bool = False) -> "MvSequence":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_frames(parse_mv_dump(fh, keep_future=keep_future))

    def frame(self, t: int) -> MvFrame:
        return self._by_frame.get(t, MvFrame(t))

    @property
    def max_frame(self) -> int:
        return max(self._by_frame, default=-1)


def vectors_in_box(frame: MvFrame, region: PixelBox) -> list[MotionVector]:
    """Vectors whose reference-block center lies inside the half-open region."""
    return [
        v
        for v in frame.vectors
        if region.x_min <= v.src_x < region.x_max
        and region.y_min <= v.src_y < region.y_max
    ]


class ExtractionError(RuntimeError):
    """Video decoding or side-data export failed."""


def extract_mvs(video_path: str) -> Iterator[MvFrame]:
    """Decode a video and yield its exported motion vectors per frame.

    Requires PyAV with a codec that exports motion-vector side data (H.264,
    MPEG-4 etc). Frames without side data (I-frames, all-intra content) yield
    empty MvFrame records so the sequence stays frame-aligned.
    """
    try:
        import av
        from av.sidedata.sidedata import Type as SideDataType
    except ImportError as exc:
        raise ExtractionError(
            "motion-vector extraction needs the optional 'av' package "
            "(pip install mvprop[extract])"
        ) from exc

    try:
        container = av.open(video_path)
    except Exception as exc:
        raise ExtractionError(f"cannot open {video_path}: {exc}") from exc
    try:
        stream = container.streams.video[0]
    except IndexError as exc:
        raise ExtractionError(f"no video stream in {video_path}") from exc
    stream.codec_context.options = {"flags2": "+export_mvs"}

    t = 0
    try:
        for frame in container.decode(stream):
            sd = frame.side_data.get(SideDataType.MOTION_VECTORS)
            vectors = []
            if sd is not None:
                for mv in sd:
                    vectors.append(
                        MotionVector(
                            frame=t,
                            source=PAST if mv.source < 0 else FUTURE,
                            block_w=float(mv.w),
                            block_h=float(mv.h),
                            src_x=float(mv.src_x),
                            src_y=float(mv.src_y),
                            dst_x=float(mv.dst_x),
                            dst_y=float(mv.dst_y),
                        )
                    )
            yield MvFrame(t, tuple(v for v in vectors if v.source == PAST))
            t += 1
    except av.AVError as exc:  # pragma: no cover - depends on codec support
        raise ExtractionError(f"decode failure in {video_path}: {exc}") from exc
    finally:
        container.close()
