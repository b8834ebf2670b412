"""Single-box propagation from the previous frame's motion-vector field.

The update partitions the box into a 3x3 grid, averages the motion vectors
whose reference centers fall in each cell, and accepts either a pure
translation (cell means agree) or a uniform scale (cell means form a coherent
radial field). If neither statistical test accepts, propagation fails and the
caller must fall back to the detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .geometry import YoloBox, to_pixel
from .mvstream import MvFrame, vectors_in_box

TRANSLATED = "translated"
SCALED = "scaled"
FAILED = "failed"


@dataclass(frozen=True)
class MvpConfig:
    """Pipeline thresholds and ablation toggles.

    The statistical thresholds (tau_tr, tau_sc) and the scale-eligibility
    radius floor are our defaults, chosen on the synthetic oracle; the growth
    ratio 2, growth window 10 and the exactly-one single-class rule are fixed
    by the method.
    """

    tau_tr: float = 4.0          # px; translation-test spread limit
    tau_sc: float = 0.1          # scale-ratio spread limit
    epsilon: float = 1e-3        # px; guards the scale-ratio denominator
    radius_floor: Optional[float] = None  # px; None -> 0.1 * cell half-diagonal
    keyframe_interval: int = 30
    growth_ratio: float = 2.0
    growth_window: int = 10
    tau_cls: float = 0.5
    miss_limit: int = 3
    min_area: float = 1.0        # px^2
    grid_enabled: bool = True
    growth_check_enabled: bool = True
    single_class_enabled: bool = True

    def __post_init__(self) -> None:
        if self.tau_tr <= 0 or self.tau_sc <= 0 or self.epsilon <= 0:
            raise ValueError("tau_tr, tau_sc and epsilon must be positive")
        if self.radius_floor is not None and self.radius_floor <= 0:
            raise ValueError("radius_floor must be positive when set")
        if self.keyframe_interval < 1:
            raise ValueError("keyframe_interval must be >= 1")
        if self.growth_ratio <= 1 or self.growth_window < 1:
            raise ValueError("growth_ratio must exceed 1, growth_window be >= 1")
        if not 0 < self.tau_cls < 1:
            raise ValueError("tau_cls must lie in (0,1)")
        if self.miss_limit < 1 or self.min_area <= 0:
            raise ValueError("miss_limit must be >= 1 and min_area positive")


@dataclass(frozen=True)
class GridStats:
    """Per-cell aggregation over the 3x3 partition of a box.

    ``cell_means[row][col]`` holds the mean (u, v) displacement of the cell or
    None when no vector landed in it; ``mean_disp`` and ``sigma_tr`` are taken
    over the non-empty cells only.
    """

    cell_means: tuple[tuple[Optional[tuple[float, float]], ...], ...]
    occupancy: tuple[tuple[int, ...], ...]
    mean_disp: tuple[float, float]
    sigma_tr: float
    # box geometry in pixels, kept for the scale test
    box_x_min: float
    box_y_min: float
    cell_w: float
    cell_h: float
    center: tuple[float, float]
    mu_r: Optional[float] = None
    sigma_r: Optional[float] = None
    scale_ratios: tuple[float, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class PropagationOutcome:
    kind: str  # TRANSLATED | SCALED | FAILED
    box: Optional[YoloBox] = None
    mu_r: Optional[float] = None
    reason: Optional[str] = None


def aggregate_grid(
    prev_box: YoloBox, frame: MvFrame, frame_w: int, frame_h: int, cfg: MvpConfig
) -> Optional[GridStats]:
    """Aggregate the frame's vectors over the box's 3x3 grid.

    Returns None when no retained vector falls inside the box (propagation
    failure for this box).
    """
    px = to_pixel(prev_box, frame_w, frame_h)
    vectors = vectors_in_box(frame, px)
    if not vectors:
        return None

    cell_w = px.width / 3.0
    cell_h = px.height / 3.0
    sums = [[(0.0, 0.0) for _ in range(3)] for _ in range(3)]
    counts = [[0] * 3 for _ in range(3)]
    for v in vectors:
        col = min(2, int((v.src_x - px.x_min) / cell_w))
        row = min(2, int((v.src_y - px.y_min) / cell_h))
        u, dv = v.displacement()
        su, sv = sums[row][col]
        sums[row][col] = (su + u, sv + dv)
        counts[row][col] += 1

    means: list[list[Optional[tuple[float, float]]]] = [[None] * 3 for _ in range(3)]
    occupied: list[tuple[float, float]] = []
    for r in range(3):
        for c in range(3):
            n = counts[r][c]
            if n > 0:
                m = (sums[r][c][0] / n, sums[r][c][1] / n)
                means[r][c] = m
                occupied.append(m)

    mu = (
        sum(m[0] for m in occupied) / len(occupied),
        sum(m[1] for m in occupied) / len(occupied),
    )
    var = sum((m[0] - mu[0]) ** 2 + (m[1] - mu[1]) ** 2 for m in occupied) / len(occupied)
    return GridStats(
        cell_means=tuple(tuple(row) for row in means),
        occupancy=tuple(tuple(row) for row in counts),
        mean_disp=mu,
        sigma_tr=math.sqrt(var),
        box_x_min=px.x_min,
        box_y_min=px.y_min,
        cell_w=cell_w,
        cell_h=cell_h,
        center=px.center,
    )


def _translate(box: YoloBox, disp: tuple[float, float], frame_w: int, frame_h: int) -> YoloBox:
    return YoloBox(box.x_c + disp[0] / frame_w, box.y_c + disp[1] / frame_h, box.w, box.h)


def try_translate(
    prev_box: YoloBox, stats: GridStats, frame_w: int, frame_h: int, cfg: MvpConfig
) -> Optional[PropagationOutcome]:
    """Accept a pure translation when the cell means agree (sigma_tr <= tau_tr)."""
    if stats.sigma_tr > cfg.tau_tr:
        return None
    return PropagationOutcome(
        TRANSLATED, box=_translate(prev_box, stats.mean_disp, frame_w, frame_h)
    )


def try_scale(
    prev_box: YoloBox, stats: GridStats, frame_w: int, frame_h: int, cfg: MvpConfig
) -> Optional[PropagationOutcome]:
    """Accept a uniform scale when the per-cell scale ratios agree.

    Cells contribute a ratio only when occupied and when their center sits at
    least ``radius_floor`` pixels from the box center: the center cell has zero
    lever arm and its ratio carries no scale information.
    """
    floor = cfg.radius_floor
    if floor is None:
        floor = 0.1 * 0.5 * math.hypot(stats.cell_w, stats.cell_h)

    cx, cy = stats.center
    ratios: list[float] = []
    for r in range(3):
        for c in range(3):
            mean = stats.cell_means[r][c]
            if mean is None:
                continue
            gx = stats.box_x_min + (c + 0.5) * stats.cell_w - cx
            gy = stats.box_y_min + (r + 0.5) * stats.cell_h - cy
            g_norm = math.hypot(gx, gy)
            if g_norm < floor:
                continue
            shifted = math.hypot(gx + mean[0], gy + mean[1])
            ratios.append(shifted / (g_norm + cfg.epsilon))
    if not ratios:
        return None

    mu_r = sum(ratios) / len(ratios)
    sigma_r = math.sqrt(sum((x - mu_r) ** 2 for x in ratios) / len(ratios))
    if sigma_r > cfg.tau_sc:
        return None
    moved = _translate(prev_box, stats.mean_disp, frame_w, frame_h)
    return PropagationOutcome(
        SCALED,
        box=YoloBox(moved.x_c, moved.y_c, prev_box.w * mu_r, prev_box.h * mu_r),
        mu_r=mu_r,
    )


def propagate_box(
    prev_box: YoloBox, frame: MvFrame, frame_w: int, frame_h: int, cfg: MvpConfig
) -> PropagationOutcome:
    """Full per-box update: aggregate, then translation test, then scale test.

    With ``grid_enabled`` off (ablation), all in-box vectors are pooled into a
    single global mean and applied as a translation; no spread test, no scale
    branch.
    """
    if not cfg.grid_enabled:
        px = to_pixel(prev_box, frame_w, frame_h)
        vectors = vectors_in_box(frame, px)
        if not vectors:
            return PropagationOutcome(FAILED, reason="no vectors in box")
        disps = [v.displacement() for v in vectors]
        mean = (
            sum(d[0] for d in disps) / len(disps),
            sum(d[1] for d in disps) / len(disps),
        )
        return PropagationOutcome(TRANSLATED, box=_translate(prev_box, mean, frame_w, frame_h))

    stats = aggregate_grid(prev_box, frame, frame_w, frame_h, cfg)
    if stats is None:
        return PropagationOutcome(FAILED, reason="no vectors in box")
    outcome = try_translate(prev_box, stats, frame_w, frame_h, cfg)
    if outcome is not None:
        return outcome
    outcome = try_scale(prev_box, stats, frame_w, frame_h, cfg)
    if outcome is not None:
        return outcome
    return PropagationOutcome(FAILED, reason="incoherent motion field")
