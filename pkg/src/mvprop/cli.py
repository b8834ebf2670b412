"""Operator entry point.

Subcommands: run, ablate, synth, eval, extract. Runs are driven by a YAML
config file with command-line overrides; the effective config is echoed into
the output directory so every run is reproducible from its artifacts alone.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys
from pathlib import Path

import yaml

from . import evalkit, synth
from .detector import BridgeDetector, PrecomputedDetector
from .mvstream import MvSequence, serialize_mv_dump
from .propagate import MvpConfig
from .scheduler import (
    MODE_FRAMEWISE,
    MODE_FROZEN,
    MODE_MVP,
    run_video,
    write_predictions,
    write_run_log,
)

DEFAULT_WORKERS = int(os.environ.get("MVPROP_WORKERS", "1"))


class ConfigError(ValueError):
    pass


_MOTION_KINDS = {
    "translate": lambda m: synth.Translate(
        float(m["u"]), float(m["v"]), float(m.get("sigma", 0.0))
    ),
    "zoom": lambda m: synth.Zoom(float(m["s"]), float(m.get("sigma", 0.0))),
    "parallax": lambda m: synth.Parallax(
        tuple(float(x) for x in m["near"]),
        tuple(float(x) for x in m["far"]),
        float(m.get("sigma", 0.0)),
    ),
    "jitter": lambda m: synth.Jitter(float(m["amplitude"])),
}


def load_scene_spec(path) -> synth.SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    try:
        objects = []
        for obj in raw["objects"]:
            motion = obj["motion"]
            kind = motion["kind"]
            if kind not in _MOTION_KINDS:
                raise ConfigError(f"unknown motion kind {kind!r}")
            objects.append(
                synth.ObjectSpec(
                    box=tuple(float(x) for x in obj["box"]),
                    motion=_MOTION_KINDS[kind](motion),
                    label=str(obj.get("label", "object")),
                )
            )
        return synth.SceneSpec(
            width=int(raw["width"]),
            height=int(raw["height"]),
            frames=int(raw["frames"]),
            objects=tuple(objects),
            block=int(raw.get("block", 16)),
            seed=int(raw.get("seed", 0)),
            video=str(raw.get("video", "synth")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scene spec {path}: {exc}") from exc


def _mvp_config(raw: dict, args) -> MvpConfig:
    fields = {f.name for f in dataclasses.fields(MvpConfig)}
    kwargs = {k: v for k, v in (raw or {}).items() if k in fields}
    unknown = set(raw or {}) - fields
    if unknown:
        raise ConfigError(f"unknown mvp config keys: {sorted(unknown)}")
    for name in ("keyframe_interval", "tau_tr", "tau_sc"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    return MvpConfig(**kwargs)


@dataclasses.dataclass
class RunInputs:
    video: str
    mv: MvSequence
    frames: int
    width: int
    height: int
    detections_path: Path | None
    gt_path: Path | None
    image_refs: list[str] | None = None


def _prepare_inputs(raw: dict, out_dir: Path) -> RunInputs:
    inp = raw.get("input") or {}
    if "scene" in inp:
        scene = synth.generate(load_scene_spec(inp["scene"]))
        paths = scene.write_all(out_dir / "scene")
        return RunInputs(
            video=scene.spec.video,
            mv=MvSequence.from_frames(scene.mv_frames),
            frames=scene.spec.frames,
            width=scene.spec.width,
            height=scene.spec.height,
            detections_path=paths["detections"],
            gt_path=paths["ground_truth"],
        )
    try:
        mv_path = Path(inp["mv_dump"])
        frames = int(inp["frames"])
        width = int(inp["width"])
        height = int(inp["height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"input section incomplete: {exc}") from exc
    if not mv_path.exists():
        raise ConfigError(f"MV dump not found: {mv_path}")
    image_refs = None
    if "image_dir" in inp:
        image_refs = sorted(
            str(p) for p in Path(inp["image_dir"]).iterdir() if p.is_file()
        )
        if len(image_refs) != frames:
            raise ConfigError(
                f"{len(image_refs)} images under {inp['image_dir']} for {frames} frames"
            )
    return RunInputs(
        video=str(inp.get("video", mv_path.stem)),
        mv=MvSequence.from_file(mv_path),
        frames=frames,
        width=width,
        height=height,
        detections_path=Path(inp["detections"]) if "detections" in inp else None,
        gt_path=Path(inp["ground_truth"]) if "ground_truth" in inp else None,
        image_refs=image_refs,
    )


def _make_detector(raw: dict, inputs: RunInputs):
    det = raw.get("detector") or {}
    has_pre = "precomputed" in det or inputs.detections_path is not None
    has_bridge = "bridge" in det
    if has_pre == has_bridge:
        raise ConfigError("configure exactly one detector source (precomputed or bridge)")
    score_floor = float(det.get("score_floor", 0.1))
    if has_bridge:
        return BridgeDetector(
            det["bridge"],
            timeout=float(det.get("timeout", 60.0)),
            score_floor=score_floor,
        )
    path = det.get("precomputed", inputs.detections_path)
    return PrecomputedDetector(path, video=inputs.video, score_floor=score_floor)


def _prompts(raw: dict, inputs: RunInputs) -> list[str]:
    if raw.get("prompts"):
        return [str(p) for p in raw["prompts"]]
    if inputs.gt_path is not None:
        labels = sorted(
            {lab for boxes in evalkit.load_ground_truth(inputs.gt_path).values()
             for _, lab in boxes}
        )
        if labels:
            return labels
    raise ConfigError("no prompts configured and none derivable from ground truth")


def _execute_run(raw, args, out_dir: Path, mode: str, cfg: MvpConfig, tag: str = "") -> dict:
    inputs = _prepare_inputs(raw, out_dir)
    detector = _make_detector(raw, inputs)
    try:
        result = run_video(
            detector,
            inputs.mv,
            inputs.frames,
            _prompts(raw, inputs),
            inputs.width,
            inputs.height,
            cfg,
            mode=mode,
            video=inputs.video,
            image_refs=inputs.image_refs,
        )
    finally:
        detector.close()
    prefix = f"{tag}." if tag else ""
    pred_path = out_dir / f"{prefix}predictions.jsonl"
    log_path = out_dir / f"{prefix}runlog.jsonl"
    write_predictions(pred_path, result)
    write_run_log(log_path, result)
    out = {"predictions": pred_path, "runlog": log_path, "result": result}
    if inputs.gt_path is not None:
        report = evalkit.evaluate(pred_path, inputs.gt_path, run_log_path=log_path)
        evalkit.write_report(
            report, out_dir / f"{prefix}metrics.json", out_dir / f"{prefix}metrics.txt"
        )
        out["report"] = report
    return out


def _echo_config(raw: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(raw, fh)


def _load_config(args) -> tuple[dict, Path]:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    out_dir = Path(args.output or raw.get("output_dir") or "out")
    return raw, out_dir


def cmd_run(args) -> int:
    raw, out_dir = _load_config(args)
    mode = args.mode or raw.get("mode", MODE_MVP)
    if mode not in (MODE_MVP, MODE_FROZEN, MODE_FRAMEWISE):
        raise ConfigError(f"unknown mode {mode!r}")
    cfg = _mvp_config(raw.get("mvp"), args)
    _echo_config(raw, out_dir)
    out = _execute_run(raw, args, out_dir, mode, cfg)
    result = out["result"]
    print(
        f"{result.video}: {len(result.per_frame)} frames, "
        f"{result.detector_calls} detector calls"
    )
    if "report" in out:
        print(out["report"].format_table())
    return 0


ABLATION_ROWS = (
    # (tag, grid, growth, single-class), Table-4 layout
    ("wo_single_class", True, True, False),
    ("wo_area_growth", True, False, True),
    ("wo_grid", False, True, True),
    ("full", True, True, True),
)


def cmd_ablate(args) -> int:
    raw, out_dir = _load_config(args)
    base_cfg = _mvp_config(raw.get("mvp"), args)
    _echo_config(raw, out_dir)
    workers = args.workers or int(raw.get("workers", DEFAULT_WORKERS))

    def run_row(row):
        tag, grid, growth, single = row
        cfg = dataclasses.replace(
            base_cfg,
            grid_enabled=grid,
            growth_check_enabled=growth,
            single_class_enabled=single,
        )
        return tag, _execute_run(raw, args, out_dir, MODE_MVP, cfg, tag=tag)

    rows = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for tag, out in pool.map(run_row, ABLATION_ROWS):
            rows[tag] = out

    mark = lambda b: "x" if b else "-"
    header = (
        f"{'setting':<18} {'grid':>4} {'growth':>6} {'1-cls':>5} "
        f"{'mAP@0.2':>8} {'mAP@0.3':>8} {'mAP@0.5':>8} {'mAP@[.5:.95]':>12} {'FPS':>8}"
    )
    lines = [header]
    for tag, grid, growth, single in ABLATION_ROWS:
        out = rows[tag]
        if "report" in out:
            r = out["report"]
            metrics = (
                f"{r.map_loose[0.2]:>8.3f} {r.map_loose[0.3]:>8.3f} "
                f"{r.map_loose[0.5]:>8.3f} {r.map_coco:>12.3f} "
                f"{(r.fps or 0):>8.1f}"
            )
        else:
            metrics = f"{'-':>8} {'-':>8} {'-':>8} {'-':>12} {'-':>8}"
        lines.append(
            f"{tag:<18} {mark(grid):>4} {mark(growth):>6} {mark(single):>5} {metrics}"
        )
    table = "\n".join(lines)
    (out_dir / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_synth(args) -> int:
    spec = load_scene_spec(args.spec)
    scene = synth.generate(spec)
    paths = scene.write_all(args.output or "out")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_eval(args) -> int:
    report = evalkit.evaluate(
        args.predictions,
        args.ground_truth,
        run_log_path=args.run_log,
        class_agnostic=args.class_agnostic,
    )
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        evalkit.write_report(report, out / "metrics.json", out / "metrics.txt")
    print(report.format_table())
    return 0


def cmd_extract(args) -> int:
    from .mvstream import extract_mvs

    frames = extract_mvs(args.video)
    out = args.output or str(Path(args.video).with_suffix(".mvs"))
    with open(out, "w", encoding="utf-8") as fh:
        serialize_mv_dump(frames, fh)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvprop",
        description="Keyframe detection with motion-vector box propagation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a pipeline from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--mode", choices=[MODE_MVP, MODE_FROZEN, MODE_FRAMEWISE])
    run.add_argument("--output")
    run.add_argument("--keyframe-interval", dest="keyframe_interval", type=int)
    run.add_argument("--tau-tr", dest="tau_tr", type=float)
    run.add_argument("--tau-sc", dest="tau_sc", type=float)
    run.set_defaults(func=cmd_run)

    ablate = sub.add_parser("ablate", help="run the component ablation grid")
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--output")
    ablate.add_argument("--workers", type=int)
    ablate.add_argument("--keyframe-interval", dest="keyframe_interval", type=int)
    ablate.add_argument("--tau-tr", dest="tau_tr", type=float)
    ablate.add_argument("--tau-sc", dest="tau_sc", type=float)
    ablate.set_defaults(func=cmd_ablate)

    syn = sub.add_parser("synth", help="generate a synthetic scene")
    syn.add_argument("spec", help="scene spec YAML")
    syn.add_argument("--output")
    syn.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="evaluate predictions against ground truth")
    ev.add_argument("predictions")
    ev.add_argument("ground_truth")
    ev.add_argument("--run-log", dest="run_log")
    ev.add_argument("--class-agnostic", action="store_true")
    ev.add_argument("--output")
    ev.set_defaults(func=cmd_eval)

    ex = sub.add_parser("extract", help="extract motion vectors from a video")
    ex.add_argument("video")
    ex.add_argument("--output")
    ex.set_defaults(func=cmd_extract)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single exit point for operator-facing errors
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
