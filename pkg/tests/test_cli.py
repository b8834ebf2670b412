import json

import yaml

from mvprop.cli import main


def write_scene_spec(tmp_path, motion=None, frames=20, name="scene.yaml", **scene_kwargs):
    spec = {
        "width": 1280,
        "height": 720,
        "frames": frames,
        "seed": 0,
        "video": "synthclip",
        "objects": [
            {
                "box": [100, 100, 190, 190],
                "label": "object",
                "motion": motion or {"kind": "translate", "u": 3, "v": 4},
            }
        ],
    }
    spec.update(scene_kwargs)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(spec))
    return path


def write_run_config(tmp_path, scene_path, out_dir, mode="mvp", mvp=None, name="run.yaml"):
    config = {
        "mode": mode,
        "input": {"scene": str(scene_path)},
        "output_dir": str(out_dir),
        "mvp": mvp or {"keyframe_interval": 10},
    }
    path = tmp_path / name
    path.write_text(yaml.safe_dump(config))
    return path


def read_log(path):
    return [json.loads(l) for l in path.read_text().strip().split("\n")]


def test_cmd_synth_deterministic(tmp_path, capsys):
    spec = write_scene_spec(tmp_path, motion={"kind": "jitter", "amplitude": 2.0})
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["synth", str(spec), "--output", str(out1)]) == 0
    assert main(["synth", str(spec), "--output", str(out2)]) == 0
    for name in ("synthclip.mvs", "synthclip.gt.jsonl", "synthclip.det.jsonl"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_cmd_run_on_pan_scene(tmp_path, capsys):
    spec = write_scene_spec(tmp_path, frames=50)
    out = tmp_path / "out"
    config = write_run_config(tmp_path, spec, out)
    assert main(["run", "--config", str(config)]) == 0
    log = read_log(out / "runlog.jsonl")
    assert len(log) == 50
    assert sum(r["detector_called"] for r in log) == 5
    assert all(r["cause"] in (None, "keyframe") for r in log)  # zero fallbacks
    assert (out / "predictions.jsonl").exists()
    assert (out / "config.yaml").exists()
    report = json.loads((out / "metrics.json").read_text())
    assert report["mAP@0.5"] > 0.9


def test_cmd_run_frozen_k1_matches_framewise(tmp_path):
    spec = write_scene_spec(tmp_path, frames=10)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg_a = write_run_config(tmp_path, spec, out_a, mode="frozen",
                             mvp={"keyframe_interval": 1}, name="a.yaml")
    cfg_b = write_run_config(tmp_path, spec, out_b, mode="framewise",
                             mvp={"keyframe_interval": 1}, name="b.yaml")
    assert main(["run", "--config", str(cfg_a)]) == 0
    assert main(["run", "--config", str(cfg_b)]) == 0
    assert (out_a / "predictions.jsonl").read_bytes() == (out_b / "predictions.jsonl").read_bytes()


def test_cmd_run_missing_mv_dump_fails(tmp_path, capsys):
    config = tmp_path / "bad.yaml"
    config.write_text(yaml.safe_dump({
        "input": {"mv_dump": str(tmp_path / "absent.mvs"), "frames": 5,
                  "width": 100, "height": 100},
        "output_dir": str(tmp_path / "out"),
    }))
    assert main(["run", "--config", str(config)]) == 1
    assert "error:" in capsys.readouterr().err


def test_cmd_run_keyframe_override(tmp_path):
    spec = write_scene_spec(tmp_path, frames=20)
    out = tmp_path / "out"
    config = write_run_config(tmp_path, spec, out)
    assert main(["run", "--config", str(config), "--keyframe-interval", "4"]) == 0
    log = read_log(out / "runlog.jsonl")
    assert sum(r["detector_called"] for r in log) == 5


def test_cmd_eval_identical_files(tmp_path, capsys):
    gt = tmp_path / "gt.jsonl"
    records = [
        {"video": "v", "frame": t,
         "boxes": [{"box": [0.5, 0.5, 0.2, 0.2], "label": "dog"}]}
        for t in range(3)
    ]
    gt.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    pred = tmp_path / "pred.jsonl"
    pred_records = [
        {"video": "v", "frame": t,
         "detections": [{"box": [0.5, 0.5, 0.2, 0.2], "score": 1.0, "label": "dog"}]}
        for t in range(3)
    ]
    pred.write_text("\n".join(json.dumps(r) for r in pred_records) + "\n")
    assert main(["eval", str(pred), str(gt), "--output", str(tmp_path / "rep")]) == 0
    out = capsys.readouterr().out
    assert "mAP@0.5" in out and "1.0000" in out
    assert (tmp_path / "rep" / "metrics.json").exists()


def test_cmd_ablate_zoom_scene(tmp_path, capsys):
    spec = write_scene_spec(
        tmp_path,
        motion={"kind": "zoom", "s": 1.02},
        frames=25,
        width=1500,
        height=1500,
        objects=[{
            "box": [600, 600, 900, 900],
            "label": "object",
            "motion": {"kind": "zoom", "s": 1.02},
        }],
    )
    out = tmp_path / "out"
    config = write_run_config(
        tmp_path, spec, out,
        mvp={"keyframe_interval": 25, "tau_tr": 0.5, "growth_window": 1},
    )
    assert main(["ablate", "--config", str(config)]) == 0
    table = (out / "ablation.txt").read_text()
    for row in ("full", "wo_single_class", "wo_area_growth", "wo_grid"):
        assert row in table

    def map50(tag):
        return json.loads((out / f"{tag}.metrics.json").read_text())["mAP@0.5"]

    # translation-only ablation cannot follow the zoom
    assert map50("wo_grid") < map50("full")


def test_cmd_extract_error_paths(tmp_path, capsys):
    # either av is missing (extraction error) or the input is not a video;
    # both must exit nonzero with a diagnostic
    assert main(["extract", str(tmp_path / "nope.mp4")]) == 1
    assert "error:" in capsys.readouterr().err
