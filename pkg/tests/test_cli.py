import json

import pytest

from vgdet import synth
from vgdet.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, overlay_svg
from vgdet.config import RunConfig, config_text, parse_config_text, parse_value
from vgdet.metrics import Detection
from vgdet.svg import parse_svg

CROSS = """<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">
<line x1="0" y1="0" x2="10" y2="10" stroke="black"/>
<line x1="0" y1="10" x2="10" y2="0" stroke="black"/>
</svg>
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_convert_crossing_lines(tmp_path, capsys):
    (tmp_path / "x.svg").write_text(CROSS)
    code, out, _ = run(capsys, "convert", tmp_path / "x.svg", "--dump-graph")
    assert code == EXIT_OK
    assert "curves 4 (before split 2)" in out and "nodes 5" in out and "edges 4" in out
    assert out.count("\nnode ") == 5
    code, out, _ = run(capsys, "convert", tmp_path / "x.svg", "--dump-graph", tmp_path / "g.txt")
    assert code == EXIT_OK and (tmp_path / "g.txt").read_text().count("edge ") == 4


def test_convert_malformed(tmp_path, capsys):
    (tmp_path / "bad.svg").write_text('<svg xmlns="http://www.w3.org/2000/svg">\n<line x1="0"\n</svg>')
    code, _, err = run(capsys, "convert", tmp_path / "bad.svg")
    assert code == EXIT_DATA and "line 3" in err
    code, _, err = run(capsys, "convert", tmp_path / "missing.svg")
    assert code == EXIT_DATA


def test_usage_errors(capsys):
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "synth", "--docs", "2", "--out", "x", "--symbols", "5,2")[0] == EXIT_USAGE
    assert run(capsys, "synth", "--docs", "2", "--out", "x", "--split", "0.5,0.5,0.5")[0] == EXIT_USAGE


def test_synth_is_reproducible(tmp_path, capsys):
    args = ["synth", "--classes", "3", "--docs", "4", "--seed", "7", "--root", tmp_path]
    assert run(capsys, *args, "--out", "a")[0] == EXIT_OK
    first = {p.name: p.read_bytes() for p in (tmp_path / "a" / "docs").iterdir()}
    assert len(first) == 8 and (tmp_path / "a" / "manifest.txt").exists()
    assert run(capsys, *args, "--out", "a")[0] == EXIT_OK
    assert {p.name: p.read_bytes() for p in (tmp_path / "a" / "docs").iterdir()} == first


def test_train_detect_eval_sweep(tmp_path, capsys):
    root = ["--root", tmp_path]
    assert run(capsys, "synth", "--classes", "2", "--docs", "5", "--symbols", "2,3", "--split", "0.6,0.2,0.2",
               "--out", "data", *root)[0] == EXIT_OK
    assert run(capsys, "config", "init", "--out", "cfg.txt", *root)[0] == EXIT_OK
    common = ["--set", "hidden_dim=8", "--set", "mlp_dims=16", "--set", "strides=3", "--set", "batch_size=2"]
    code, out, _ = run(capsys, "train", "--data", "data/manifest.txt", "--config", "cfg.txt", "--out", "run",
                       "--epochs", "2", *common, *root)
    assert code == EXIT_OK and "epoch    2" in out
    run_dir = tmp_path / "run"
    assert {"config.txt", "metrics.csv", "classes.txt"} <= {p.name for p in run_dir.iterdir()}
    assert (run_dir / "checkpoints" / "last.ckpt").exists()
    assert parse_config_text((run_dir / "config.txt").read_text()).hidden_dim == 8

    ckpt = run_dir / "checkpoints" / "last.ckpt"
    svg = next((tmp_path / "data" / "docs").glob("*.svg"))
    code, out, _ = run(capsys, "detect", "--model", ckpt, "--input", svg, "--out", "o.svg", "--conf", "0", *root)
    assert code == EXIT_OK and out.strip().endswith("detections")
    overlay = (tmp_path / "o.svg").read_text()
    # zero-size boxes from single-node proposals draw nothing but keep the file valid
    assert 'id="detections"' in overlay and not parse_svg(overlay).errors

    code, out, _ = run(capsys, "eval", "--model", ckpt, "--data", "data/manifest.txt", "--split", "test",
                       "--out", "rep", *root)
    assert code == EXIT_OK and "AP50" in out
    assert (tmp_path / "rep" / "report.csv").read_text().startswith("class_id,")

    code, out, _ = run(capsys, "sweep", "--param", "strides", "--values", "1,2", "--data", "data/manifest.txt",
                       "--model", ckpt, "--out", "sweep.csv", *root)
    assert code == EXIT_OK and len((tmp_path / "sweep.csv").read_text().splitlines()) == 3

    assert run(capsys, "detect", "--model", "nope.ckpt", "--input", svg, "--out", "o.svg", *root)[0] == EXIT_DATA
    assert run(capsys, "train", "--data", "data/manifest.txt", "--out", "r2", "--set", "bogus=1", *root)[0] \
        == EXIT_USAGE


def test_overlay_adds_one_layer():
    out = overlay_svg(CROSS, [Detection([1.0, 2.0, 3.0, 4.0], 1, 0.9)], ["a", "b"])
    assert out.count("<rect") == 1 and 'data-class="b"' in out
    assert out.rstrip().endswith("</svg>")
    # the overlay is drawing-only: its rectangle becomes four extra curves when parsed
    assert len(parse_svg(out).curves) == len(parse_svg(CROSS).curves) + 4


def test_sesyd_conversion(tmp_path, capsys):
    xml = '<gt><object label="door" x0="1" y0="2" x1="5" y1="6"/></gt>'
    (tmp_path / "g.xml").write_text(xml)
    code, out, _ = run(capsys, "sesyd", "--input", "g.xml", "--out", "g.json", "--root", tmp_path)
    assert code == EXIT_OK and out.strip() == "1 objects"
    data = json.loads((tmp_path / "g.json").read_text())
    assert data["objects"][0]["bbox"] == [1, 2, 5, 6]
    (tmp_path / "bad.xml").write_text("<gt><object")
    assert run(capsys, "sesyd", "--input", "bad.xml", "--out", "b.json", "--root", tmp_path)[0] == EXIT_DATA


def test_config_round_trip():
    cfg = RunConfig(hidden_dim=32, mlp_dims=(8, 4), augment=False, lr=0.001)
    assert parse_config_text(config_text(cfg)) == cfg
    assert parse_config_text("# comment\n\nepochs = 5  # trailing\n").epochs == 5
    assert parse_value("augment", "off") is False
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_text("nonsense = 1")
    with pytest.raises(ValueError, match="line 1"):
        parse_config_text("epochs 5")
    with pytest.raises(ValueError):
        RunConfig(label_frame="elsewhere")


def test_placement_error_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--docs", "1", "--symbols", "60,60", "--canvas", "150,150",
                       "--out", tmp_path / "x")
    assert code == EXIT_DATA and "fewer symbols" in err
    assert synth.PlacementError.__name__ == "PlacementError"
