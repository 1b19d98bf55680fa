import cv2
import numpy as np
import pytest

from monocomb import kitti_io
from monocomb.exceptions import FormatError, RangeError
from monocomb.geometry import CameraIntrinsics, DepthMap, DisparityMap, FlowField
from monocomb.kitti_io import (
    CalibrationRecord,
    ObjectMap,
    read_calibration,
    read_depth_png,
    read_disparity_png,
    read_flow_png,
    read_image,
    read_mask_png,
    read_object_map,
    write_calibration,
    write_depth_png,
    write_disparity_png,
    write_flow_png,
    write_image,
    write_mask_png,
    write_object_map,
)

# excerpt of a KITTI calib_cam_to_cam.txt
KITTI_CALIB = """\
calib_time: 09-Jan-2012 13:57:47
corner_dist: 9.950000e-02
S_rect_02: 1.242000e+03 3.750000e+02
P_rect_02: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
S_rect_03: 1.242000e+03 3.750000e+02
P_rect_03: 7.215377e+02 0.000000e+00 6.095593e+02 -3.395242e+02 0.000000e+00 7.215377e+02 1.728540e+02 2.199936e+00 0.000000e+00 0.000000e+00 1.000000e+00 2.729905e-03
"""


def test_disparity_encoding_by_hand(tmp_path):
    d = DisparityMap(np.array([[1.0, 0.0], [255.99609375, 1 / 256]]))
    write_disparity_png(d, tmp_path / "d.png")
    raw = cv2.imread(str(tmp_path / "d.png"), cv2.IMREAD_UNCHANGED)
    assert raw.dtype == np.uint16
    np.testing.assert_array_equal(raw, [[256, 0], [65535, 1]])


def test_disparity_rounds_half_up(tmp_path):
    d = DisparityMap(np.array([[1.5 / 256, 2.49 / 256]]))
    write_disparity_png(d, tmp_path / "d.png")
    raw = cv2.imread(str(tmp_path / "d.png"), cv2.IMREAD_UNCHANGED)
    np.testing.assert_array_equal(raw, [[2, 2]])


@pytest.mark.parametrize("value", [256.0, 1e-4])
def test_disparity_out_of_range(tmp_path, value):
    with pytest.raises(RangeError, match="x=0, y=0"):
        write_disparity_png(DisparityMap(np.array([[value]])), tmp_path / "d.png")


def test_flow_encoding_by_hand(tmp_path):
    f = FlowField(np.array([[1.0, -0.5]]), np.array([[0.0, 2.25]]), np.array([[True, False]]))
    write_flow_png(f, tmp_path / "f.png")
    bgr = cv2.imread(str(tmp_path / "f.png"), cv2.IMREAD_UNCHANGED)
    rgb = bgr[..., ::-1]
    np.testing.assert_array_equal(rgb[0, 0], [32768 + 64, 32768, 1])
    np.testing.assert_array_equal(rgb[0, 1], [32768 - 32, 32768 + 144, 0])


def test_flow_rounds_half_away_from_zero(tmp_path):
    f = FlowField(np.array([[0.5 / 64, -0.5 / 64]]), np.zeros((1, 2)))
    write_flow_png(f, tmp_path / "f.png")
    rgb = cv2.imread(str(tmp_path / "f.png"), cv2.IMREAD_UNCHANGED)[..., ::-1]
    np.testing.assert_array_equal(rgb[0, :, 0], [32769, 32767])


def test_flow_out_of_range(tmp_path):
    with pytest.raises(RangeError, match="x=0, y=0"):
        write_flow_png(FlowField(np.array([[600.0]]), np.zeros((1, 1))), tmp_path / "f.png")


def test_flow_reader_rejects_gray(tmp_path):
    write_disparity_png(DisparityMap(np.ones((2, 2))), tmp_path / "d.png")
    with pytest.raises(FormatError, match="3-channel"):
        read_flow_png(tmp_path / "d.png")


def test_disparity_reader_rejects_8bit(tmp_path):
    cv2.imwrite(str(tmp_path / "g.png"), np.zeros((2, 2), np.uint8))
    with pytest.raises(FormatError, match="16-bit"):
        read_disparity_png(tmp_path / "g.png")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FormatError, match="nope.png"):
        read_disparity_png(tmp_path / "nope.png")


def test_depth_png_applies_cap(tmp_path):
    write_depth_png(DepthMap(np.array([[5.0, 200.0]]), depth_cap=None), tmp_path / "z.png")
    np.testing.assert_array_equal(read_depth_png(tmp_path / "z.png").values, [[5.0, 100.0]])
    np.testing.assert_array_equal(
        read_depth_png(tmp_path / "z.png", depth_cap=None).values, [[5.0, 200.0]]
    )


def test_object_map_round_trip(tmp_path):
    labels = np.array([[0, 1], [2, 300]])
    write_object_map(ObjectMap(labels), tmp_path / "o.png")
    obj = read_object_map(tmp_path / "o.png")
    np.testing.assert_array_equal(obj.labels, labels)
    np.testing.assert_array_equal(obj.foreground, labels > 0)


def test_mask_round_trip(tmp_path):
    occ = np.array([[True, False, False]])
    oov = np.array([[False, False, True]])
    write_mask_png(occ, oov, tmp_path / "m.png")
    o, v = read_mask_png(tmp_path / "m.png")
    np.testing.assert_array_equal(o, occ)
    np.testing.assert_array_equal(v, oov)


def test_image_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (4, 5, 3)) / 255.0
    write_image(img, tmp_path / "i.png")
    np.testing.assert_array_equal(read_image(tmp_path / "i.png"), img)


def test_kitti_calibration(tmp_path):
    (tmp_path / "calib.txt").write_text(KITTI_CALIB)
    rec = read_calibration(tmp_path / "calib.txt")
    assert rec.focal_length_px == 721.5377
    assert rec.baseline_m == pytest.approx((44.85728 + 339.5242) / 721.5377, rel=1e-12)
    assert rec.baseline_m == pytest.approx(0.5327, abs=1e-4)
    assert (rec.width, rec.height) == (1242, 375)


def test_calibration_round_trip(tmp_path):
    rec = CalibrationRecord(CameraIntrinsics(721.5377, 0.5327), 1242, 375)
    write_calibration(rec, tmp_path / "c.txt")
    assert read_calibration(tmp_path / "c.txt") == rec


def test_calibration_missing_baseline(tmp_path):
    (tmp_path / "c.txt").write_text("f: 700\n")
    with pytest.raises(FormatError, match="baseline not found"):
        read_calibration(tmp_path / "c.txt")


def test_calibration_malformed_number(tmp_path):
    (tmp_path / "c.txt").write_text("f: seven\nbaseline: 0.5\n")
    with pytest.raises(FormatError, match="not numeric"):
        read_calibration(tmp_path / "c.txt")


def test_module_constants():
    assert kitti_io.DISP_SCALE == 256 and kitti_io.FLOW_SCALE == 64
    assert kitti_io.FLOW_OFFSET == 32768
