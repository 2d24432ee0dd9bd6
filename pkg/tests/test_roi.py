import numpy as np
import pytest

from evtrack.errors import ParameterError
from evtrack.events import SensorGeometry
from evtrack.representation import Frame
from evtrack.roi import RoiBox, WristLoc, build_roi, crop, fallback_roi, locate_wrist

G = SensorGeometry(346, 260)


def frame_from(values):
    values = np.asarray(values, dtype=np.float32)
    h, w = values.shape
    return Frame(values, SensorGeometry(w, h))


def test_all_zero_frame_absent():
    assert locate_wrist(frame_from(np.zeros((260, 346)))) is None


def test_constant_width_bar_returns_topmost_row():
    values = np.zeros((10, 10))
    values[:, 2:8] = 1.0  # 6 active per row = 2*n_thr
    loc = locate_wrist(frame_from(values), tau=0.5, n_thr=3)
    assert loc == WristLoc(y=0, x_left=4, x_right=5)


def test_hand_traced_hourglass_grid():
    # 10x10 hourglass, n_thr=1: arm rows 9..6 narrow toward the waist at
    # row 5, rows 4 up widen again; hand trace says the scan stops at row 4
    # (left boundary moves left, right moves right) and reports row 5
    width_by_row = {9: (1, 8), 8: (2, 7), 7: (2, 7), 6: (3, 6), 5: (4, 5),
                    4: (3, 6), 3: (2, 7), 2: (1, 8), 1: (0, 9), 0: (0, 9)}
    values = np.zeros((10, 10))
    for row, (lo, hi) in width_by_row.items():
        values[row, lo : hi + 1] = 1.0
    loc = locate_wrist(frame_from(values), tau=0.5, n_thr=1)
    assert loc == WristLoc(y=5, x_left=4, x_right=5)


def test_boundaries_use_nth_active_pixel():
    values = np.zeros((12, 40))
    values[:, 10:30] = 1.0
    values[6, 2] = 1.0  # isolated active left of the bar
    loc = locate_wrist(frame_from(values), tau=0.5, n_thr=3)
    assert loc is not None
    # the 3rd active from the left of row 6 is 12 except the noise pixel
    # shifts the ordinal: [2,10,11,...] -> third is 11
    values2 = np.zeros((12, 40))
    values2[6, 10:30] = 1.0
    cols = np.flatnonzero(values2[6] > 0.5)
    assert cols[2] == 12


def test_translation_equivariance():
    rng = np.random.default_rng(0)
    base = np.zeros((40, 60))
    for row in range(40):
        hw = 8 + (row // 10)
        base[row, 30 - hw : 30 + hw] = rng.uniform(0.5, 1.0, 2 * hw)
    f0 = locate_wrist(frame_from(base), tau=0.3)
    shifted = np.roll(base, 7, axis=1)
    f1 = locate_wrist(frame_from(shifted), tau=0.3)
    assert f0 is not None and f1 is not None
    assert f1.y == f0.y
    assert f1.x_left == f0.x_left + 7
    assert f1.x_right == f0.x_right + 7


def test_locate_parameter_validation():
    frame = frame_from(np.zeros((10, 10)))
    with pytest.raises(ParameterError):
        locate_wrist(frame, tau=0.0)
    with pytest.raises(ParameterError):
        locate_wrist(frame, tau=1.5)
    with pytest.raises(ParameterError):
        locate_wrist(frame, n_thr=0)


def test_build_roi_example():
    # wrist (Y=200, X_L=150, X_R=170), 160x160 on the 346x260 sensor:
    # X_c = 160, x0 = 160 - 80 = 80, y0 = 200 - (160 - 10) = 50
    box = build_roi(WristLoc(200, 150, 170), 160, 160, G)
    assert box == RoiBox(x0=80, y0=50, w=160, h=160)


def test_build_roi_full_frame_clamps_to_origin():
    box = build_roi(WristLoc(130, 170, 176), 260, 346, G)
    assert (box.x0, box.y0) == (0, 0)


def test_build_roi_left_edge_shifts():
    box = build_roi(WristLoc(200, 3, 7), 160, 160, G)
    assert box.x0 == 0
    assert box.w == 160 and box.h == 160


def test_build_roi_keeps_ten_rows_below_wrist():
    box = build_roi(WristLoc(100, 150, 170), 60, 40, G)
    assert box.y0 == 100 - 50
    assert box.y0 + box.h == 100 + 10


def test_build_roi_parameter_errors():
    with pytest.raises(ParameterError):
        build_roi(WristLoc(100, 10, 20), 10, 40, G)  # height must exceed 10
    with pytest.raises(ParameterError):
        build_roi(WristLoc(100, 10, 20), 60, 1, G)
    with pytest.raises(ParameterError):
        build_roi(WristLoc(100, 10, 20), 400, 40, G)


def test_fallback_roi_centered_and_deterministic():
    a = fallback_roi(160, 160, G)
    b = fallback_roi(160, 160, G)
    assert a == b == RoiBox(x0=(346 - 160) // 2, y0=(260 - 160) // 2, w=160, h=160)


def test_crop_round_trip():
    rng = np.random.default_rng(1)
    values = rng.random((260, 346)).astype(np.float32)
    frame = Frame(values, G)
    box = RoiBox(40, 30, 160, 160)
    sub, (x0, y0) = crop(frame, box)
    assert (x0, y0) == (40, 30)
    assert sub.values.shape == (160, 160)
    pasted = values.copy()
    pasted[y0 : y0 + box.h, x0 : x0 + box.w] = sub.values
    assert np.array_equal(pasted, values)


def test_crop_full_frame_identity():
    values = np.arange(12, dtype=np.float32).reshape(3, 4)
    frame = Frame(values, SensorGeometry(4, 3))
    sub, offsets = crop(frame, RoiBox(0, 0, 4, 3))
    assert offsets == (0, 0)
    assert np.array_equal(sub.values, values)


def test_crop_out_of_bounds_rejected():
    frame = Frame(np.zeros((10, 10), np.float32), SensorGeometry(10, 10))
    with pytest.raises(ParameterError):
        crop(frame, RoiBox(5, 5, 10, 10))


def test_roi_area_constant_under_clamping():
    for wrist in (WristLoc(10, 0, 4), WristLoc(250, 340, 345), WristLoc(130, 170, 176)):
        box = build_roi(wrist, 160, 160, G)
        assert box.w * box.h == 160 * 160
        assert 0 <= box.x0 <= G.width - box.w
        assert 0 <= box.y0 <= G.height - box.h
