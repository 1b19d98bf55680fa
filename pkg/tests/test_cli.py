import filecmp
import shutil

import numpy as np
import pytest

from monocomb import kitti_io
from monocomb.cli import main
from monocomb.evaluation import parse_report
from monocomb.geometry import DisparityMap, FlowField

SEVEN = {"image_0.png", "image_1.png", "disp_0.png", "disp_1.png", "flow.png", "occ.png",
         "obj_map.png"}
SMALL = ["--width", "160", "--height", "80"]


@pytest.fixture(scope="module")
def fixture_set(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth") / "fx"
    assert main(["synth", str(root), "--with-inputs", *SMALL]) == 0
    return root


def copy_fixture(fixture_set, tmp_path):
    dst = tmp_path / "fx"
    shutil.copytree(fixture_set, dst)
    return dst


def test_synth_writes_seven_files(tmp_path):
    assert main(["synth", str(tmp_path / "s"), *SMALL]) == 0
    assert {p.name for p in (tmp_path / "s").iterdir()} == SEVEN


def test_synth_same_seed_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", str(tmp_path / name), "--seed", "5", *SMALL]) == 0
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", sorted(SEVEN),
                                               shallow=False)
    assert not mismatch and not errors


def test_synth_zero_layers(tmp_path, capsys):
    (tmp_path / "s.cfg").write_text("[scene]\nlayers =\n")
    assert main(["synth", str(tmp_path / "o"), "--scene", str(tmp_path / "s.cfg")]) == 2
    assert "background layer required" in capsys.readouterr().err


def test_run_reproduces_ground_truth(fixture_set, tmp_path, capsys):
    fx = copy_fixture(fixture_set, tmp_path)
    assert main(["run", "--config", str(fx / "run.cfg")]) == 0
    out = capsys.readouterr().out
    assert "time warp" in out and "time interp" in out
    for name in ("disp_0.png", "disp_1.png", "flow.png", "report.txt", "report.kv",
                 "report_sparse.kv", "stages/disp_1_warped.png", "stages/occ.png",
                 "stages/disp_1_interp.png", "stages/disp_0_refined.png"):
        assert (fx / "out" / name).is_file(), name
    report = parse_report((fx / "out" / "report.kv").read_text())
    assert report["D1.all.koe"] == 0.0 and report["OF.all.koe"] == 0.0
    assert report["D2.all.koe"] < 5.0
    sparse = parse_report((fx / "out" / "report_sparse.kv").read_text())
    assert sparse["SF.all.koe"] == 0.0 and sparse["sum_epe"] < 0.01
    assert sparse["density"] < 100.0


def test_run_flags_override_config(fixture_set, tmp_path):
    fx = copy_fixture(fixture_set, tmp_path)
    code = main(["run", "--config", str(fx / "run.cfg"), "--rule", "paper-literal", "--masked",
                 "--output", str(tmp_path / "elsewhere")])
    assert code == 0
    assert parse_report((tmp_path / "elsewhere" / "report.kv").read_text())["rule"] == "paper-literal"


def test_run_missing_flow(fixture_set, tmp_path, capsys):
    fx = copy_fixture(fixture_set, tmp_path)
    (fx / "inputs" / "flow.png").unlink()
    assert main(["run", "--config", str(fx / "run.cfg")]) == 2
    assert "inputs/flow.png" in capsys.readouterr().err
    assert not (fx / "out").exists()


def test_run_rejects_dimension_mismatch_before_compute(fixture_set, tmp_path, capsys):
    fx = copy_fixture(fixture_set, tmp_path)
    flow = kitti_io.read_flow_png(fx / "inputs" / "flow.png")
    kitti_io.write_flow_png(FlowField(flow.u[:, :-1], flow.v[:, :-1]), fx / "inputs" / "flow.png")
    assert main(["run", "--config", str(fx / "run.cfg")]) == 2
    err = capsys.readouterr().err
    assert "dimension mismatch" in err and "flow.png is 159x80" in err
    assert not (fx / "out").exists()


def test_run_threshold_exit_code(fixture_set, tmp_path, capsys):
    fx = copy_fixture(fixture_set, tmp_path)
    assert main(["run", "--config", str(fx / "run.cfg"), "--threshold", "D2.all.epe=-1"]) == 3
    assert "D2.all.epe" in capsys.readouterr().err
    assert main(["run", "--config", str(fx / "run.cfg"), "--threshold", "SF.all.koe=100"]) == 0
    assert main(["run", "--config", str(fx / "run.cfg"), "--threshold", "bogus=1"]) == 2


def test_run_stage_error_is_tagged(fixture_set, tmp_path, capsys):
    fx = copy_fixture(fixture_set, tmp_path)
    (tmp_path / "blocker").write_text("not a directory")
    assert main(["run", "--config", str(fx / "run.cfg"),
                 "--output", str(tmp_path / "blocker" / "out")]) == 1
    assert "[convert]" in capsys.readouterr().err


def write_frame(directory, d1, d2, u, obj=None):
    kitti_io.write_disparity_png(DisparityMap(np.asarray(d1, float)), directory / "disp_0.png")
    kitti_io.write_disparity_png(DisparityMap(np.asarray(d2, float)), directory / "disp_1.png")
    u = np.asarray(u, float)
    kitti_io.write_flow_png(FlowField(u, np.zeros_like(u)), directory / "flow.png")
    if obj is not None:
        kitti_io.write_object_map(kitti_io.ObjectMap(np.asarray(obj)), directory / "obj_map.png")


def test_eval_identity(fixture_set, tmp_path, capsys):
    assert main(["eval", str(fixture_set), str(fixture_set), "--output", str(tmp_path)]) == 0
    report = parse_report((tmp_path / "report.kv").read_text())
    assert report["SF.all.koe"] == 0.0 and report["sum_epe"] == 0.0
    assert "KOE [%]" in capsys.readouterr().out


def test_eval_four_pixel_fixture(tmp_path):
    (tmp_path / "gt").mkdir()
    (tmp_path / "est").mkdir()
    write_frame(tmp_path / "gt", [[10, 20], [30, 40]], [[11, 21], [31, 41]], np.full((2, 2), 2.0),
                obj=[[0, 1], [0, 0]])
    write_frame(tmp_path / "est", [[10, 25], [30, 40]], [[11, 21], [31, 41]], [[2, 2], [6, 2]])
    assert main(["eval", str(tmp_path / "est"), str(tmp_path / "gt")]) == 0
    report = parse_report((tmp_path / "est" / "report.kv").read_text())
    assert report["SF.all.koe"] == 50.0
    assert report["SF.fg.koe"] == 100.0
    table = (tmp_path / "est" / "report.txt").read_text().splitlines()
    assert table[0].split() == ["D1", "D2", "OF", "SF"]


def test_eval_many_frames(tmp_path):
    for name in ("000000", "000001"):
        for role in ("gt", "est"):
            (tmp_path / role / name).mkdir(parents=True)
            write_frame(tmp_path / role / name, [[10.0, 10.0]], [[10.0, 10.0]], [[0.0, 0.0]])
    write_frame(tmp_path / "est" / "000001", [[10.0, 20.0]], [[10.0, 10.0]], [[0.0, 0.0]])
    assert main(["eval", str(tmp_path / "est"), str(tmp_path / "gt"), "--threshold",
                 "SF.all.koe=20"]) == 3
    assert parse_report((tmp_path / "est" / "report.kv").read_text())["SF.all.koe"] == 25.0
    assert parse_report((tmp_path / "est" / "report_000000.kv").read_text())["SF.all.koe"] == 0.0


def test_eval_dimension_mismatch_names_both(tmp_path, capsys):
    (tmp_path / "gt").mkdir()
    (tmp_path / "est").mkdir()
    write_frame(tmp_path / "gt", np.ones((2, 3)), np.ones((2, 3)), np.zeros((2, 3)))
    write_frame(tmp_path / "est", np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2)))
    assert main(["eval", str(tmp_path / "est"), str(tmp_path / "gt")]) == 2
    err = capsys.readouterr().err
    assert "est" in err and "gt" in err and "2x2" in err and "3x2" in err


def test_convert_round_trip(fixture_set, tmp_path):
    calib = str(fixture_set / "inputs" / "calib.txt")
    depth_in = fixture_set / "inputs" / "depth_0.png"
    assert main(["convert", str(depth_in), str(tmp_path / "d.png"), "--calib", calib]) == 0
    assert main(["convert", str(tmp_path / "d.png"), str(tmp_path / "z.png"), "--calib", calib,
                 "--to", "depth"]) == 0
    z0 = kitti_io.read_depth_png(depth_in).values
    z1 = kitti_io.read_depth_png(tmp_path / "z.png").values
    np.testing.assert_allclose(z1, z0, rtol=2e-3)


def test_stage_commands(fixture_set, tmp_path):
    assert main(["warp", "--disp-0", str(fixture_set / "disp_0.png"),
                 "--disp-1", str(fixture_set / "disp_0.png"),
                 "--flow", str(fixture_set / "flow.png"),
                 "--output", str(tmp_path), "--jobs", "2"]) == 0
    warped = kitti_io.read_disparity_png(tmp_path / "disp_1_warped.png")
    assert 0 < warped.density < 1
    assert main(["interp", str(tmp_path / "disp_1_warped.png"), str(fixture_set / "image_0.png"),
                 str(tmp_path / "dense.png"), "--solver", "direct", "--refine"]) == 0
    assert kitti_io.read_disparity_png(tmp_path / "dense.png").is_dense


def test_interp_rejects_mismatched_guide(fixture_set, tmp_path, capsys):
    kitti_io.write_image(np.zeros((5, 5)), tmp_path / "tiny.png")
    assert main(["interp", str(fixture_set / "disp_0.png"), str(tmp_path / "tiny.png"),
                 str(tmp_path / "o.png")]) == 2
    assert "dimensions" in capsys.readouterr().err


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["eval", "a", "b", "--rule", "loose"])
