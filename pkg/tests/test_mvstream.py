import io

import pytest

from mvprop.geometry import PixelBox
from mvprop.mvstream import (
    FUTURE,
    HEADER,
    PAST,
    MotionVector,
    MvDumpError,
    MvFrame,
    MvSequence,
    parse_mv_dump,
    serialize_mv_dump,
    vectors_in_box,
)


def make_dump(*lines):
    return io.StringIO("\n".join([HEADER, *lines]) + "\n")


def test_parse_single_record():
    frames = parse_mv_dump(make_dump("2,-1,16,16,8,8,11,12,0x0"))
    assert len(frames) == 1
    v = frames[0].vectors[0]
    assert v.frame == 2 and v.source == PAST
    assert (v.block_w, v.block_h) == (16, 16)
    assert (v.src_x, v.src_y, v.dst_x, v.dst_y) == (8, 8, 11, 12)
    assert v.displacement() == (3, 4)


def test_parse_header_only():
    assert parse_mv_dump(make_dump()) == []


def test_parse_rejects_wrong_field_count():
    with pytest.raises(MvDumpError, match="line 2"):
        parse_mv_dump(make_dump("2,-1,16,16,8,8,11,12"))


def test_parse_rejects_bad_header():
    with pytest.raises(MvDumpError, match="header"):
        parse_mv_dump(io.StringIO("not,a,header\n"))


def test_parse_rejects_out_of_order_frames():
    with pytest.raises(MvDumpError, match="out of order"):
        parse_mv_dump(
            make_dump("3,-1,16,16,8,8,9,9,0x0", "2,-1,16,16,8,8,9,9,0x0")
        )


def test_parse_drops_future_reference_by_default():
    frames = parse_mv_dump(
        make_dump("1,-1,16,16,8,8,9,9,0x0", "1,1,16,16,8,8,9,9,0x0")
    )
    assert [v.source for v in frames[0].vectors] == [PAST]
    kept = parse_mv_dump(
        make_dump("1,-1,16,16,8,8,9,9,0x0", "1,1,16,16,8,8,9,9,0x0"),
        keep_future=True,
    )
    assert [v.source for v in kept[0].vectors] == [PAST, FUTURE]


def test_parse_serialize_round_trip():
    frames = parse_mv_dump(
        make_dump(
            "1,-1,16,16,8,8,11.5,12,0x0",
            "1,-1,8,8,24,8,27,12,0x0",
            "4,-1,16,16,40,40,43,44,0x0",
        )
    )
    out = io.StringIO()
    serialize_mv_dump(frames, out)
    assert parse_mv_dump(io.StringIO(out.getvalue())) == frames


def test_mv_frame_rejects_mismatched_vector():
    v = MotionVector(3, PAST, 16, 16, 0, 0, 1, 1)
    with pytest.raises(MvDumpError):
        MvFrame(2, (v,))


def test_sequence_yields_empty_for_missing_frames():
    seq = MvSequence.from_frames(
        [MvFrame(2, (MotionVector(2, PAST, 16, 16, 8, 8, 9, 9),))]
    )
    assert seq.frame(0) == MvFrame(0)
    assert len(seq.frame(2).vectors) == 1
    assert seq.max_frame == 2


def region(x0, y0, x1, y1):
    return PixelBox(x0, y0, x1, y1, 100, 100)


def make_frame(*centers):
    return MvFrame(
        0, tuple(MotionVector(0, PAST, 16, 16, x, y, x + 1, y + 1) for x, y in centers)
    )


def test_vectors_in_box_half_open():
    frame = make_frame((8, 8), (16, 8), (0, 0), (15.999, 15.999))
    got = vectors_in_box(frame, region(0, 0, 16, 16))
    assert [(v.src_x, v.src_y) for v in got] == [(8, 8), (0, 0), (15.999, 15.999)]


def test_vectors_in_box_empty_frame():
    assert vectors_in_box(MvFrame(0), region(0, 0, 16, 16)) == []


def test_whole_frame_returns_everything():
    frame = make_frame((8, 8), (50, 50), (99, 99))
    assert len(vectors_in_box(frame, region(0, 0, 100, 100))) == 3


def test_disjoint_regions_partition_vectors():
    frame = make_frame((8, 8), (58, 8), (30, 70))
    left = vectors_in_box(frame, region(0, 0, 50, 100))
    right = vectors_in_box(frame, region(50, 0, 100, 100))
    assert len(left) + len(right) == len(frame.vectors)
    assert not (set(left) & set(right))
