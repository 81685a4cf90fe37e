import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermoscreen.boxes import BoundingBox
from thermoscreen.data import FaceSpec, SyntheticSceneConfig, generate_synthetic_frame
from thermoscreen.detect import Detection, detect_faces_baseline
from thermoscreen.radiometric import ThermalFrame
from thermoscreen.screen import (
    ScreeningConfig, ScreeningError, classify_fever, classify_mask_heuristic, format_results,
    mask_overrides, max_face_temperature, parse_results, screen_frame,
)


def scene(*faces, noise=0.1, seed=7):
    return generate_synthetic_frame(SyntheticSceneConfig(faces=faces, noise_sigma=noise, seed=seed))


def test_max_temp_uniform_and_single_pixel():
    fr = ThermalFrame(0, np.full((20, 20), 30.0))
    assert max_face_temperature(fr, BoundingBox(2, 3, 15, 18)) == 30.0
    t = np.arange(400, dtype=float).reshape(20, 20)
    assert max_face_temperature(ThermalFrame(0, t), BoundingBox(4, 7, 5, 8)) == t[7, 4]


def test_max_temp_synthetic_peak():
    fr, anns = scene(FaceSpec((100, 100), (14, 18), 38.2))
    assert max_face_temperature(fr, anns[0].bbox) == pytest.approx(38.2, abs=3 * 0.1 + 0.3)
    assert max_face_temperature(fr, anns[0].bbox) >= 38.2 - 3 * 0.1


def test_max_temp_rejects_outside_box():
    with pytest.raises(ScreeningError):
        max_face_temperature(ThermalFrame(0, np.zeros((10, 10))), BoundingBox(5, 5, 11, 9))


@pytest.mark.parametrize("t,expected", [(38.0, True), (37.5, False), (36.5, False), (37.5 + 1e-6, True)])
def test_classify_fever(t, expected):
    assert classify_fever(t) is expected


@given(st.floats(30, 45), st.floats(35, 40))
def test_fever_is_strict_comparison(t, threshold):
    assert classify_fever(t, ScreeningConfig(fever_threshold=threshold)) == (t > threshold)


def test_mask_heuristic_synthetic():
    fr, anns = scene(FaceSpec((80, 100), (14, 18), 37.0, masked=True), FaceSpec((220, 100), (14, 18), 37.0))
    masked, score_m = classify_mask_heuristic(fr, anns[0].bbox)
    bare, score_b = classify_mask_heuristic(fr, anns[1].bbox)
    assert masked and not bare
    assert score_m > 2.0 > score_b


def test_mask_heuristic_uniform_box():
    mask, score = classify_mask_heuristic(ThermalFrame(0, np.full((30, 30), 33.0)), BoundingBox(5, 5, 25, 25))
    assert score == 0.0 and mask is False


def test_mask_heuristic_degenerate_box():
    with pytest.raises(ScreeningError, match="too small"):
        classify_mask_heuristic(ThermalFrame(0, np.zeros((30, 30))), BoundingBox(5, 5, 25, 6))


@given(st.floats(-20, 20))
def test_mask_decision_offset_invariant(offset):
    fr, anns = scene(FaceSpec((80, 100), (14, 18), 37.0, masked=True), FaceSpec((220, 100), (14, 18), 37.0))
    shifted = ThermalFrame(0, fr.temps + offset)
    for a in anns:
        assert classify_mask_heuristic(shifted, a.bbox)[0] == classify_mask_heuristic(fr, a.bbox)[0]


@given(st.integers(0, 26 * 34 - 1), st.floats(0.0, 5.0))
def test_fever_monotone_in_pixels(idx, bump):
    fr, anns = scene(FaceSpec((80, 100), (13, 17), 37.3))
    box = anns[0].bbox
    before = classify_fever(max_face_temperature(fr, box))
    t = fr.temps.copy()
    rows, cols = box.pixel_slices()
    sub = t[rows, cols]
    sub.flat[idx % sub.size] += bump
    after = classify_fever(max_face_temperature(ThermalFrame(0, t), box))
    assert not (before and not after)


def test_screen_frame_empty():
    fr, _ = scene()
    assert screen_frame(fr, []) == []


def test_screen_frame_febrile_masked():
    fr, anns = scene(FaceSpec((160, 120), (14, 18), 38.5, masked=True))
    res = screen_frame(fr, [Detection(0, anns[0].bbox, 1.0)])
    assert len(res) == 1 and res[0].fever and res[0].mask


def test_screen_frame_afebrile_unmasked():
    fr, anns = scene(FaceSpec((160, 120), (14, 18), 36.8))
    res = screen_frame(fr, [Detection(0, anns[0].bbox, 1.0)])
    assert not res[0].fever and not res[0].mask


def test_screen_frame_on_baseline_detections_fever():
    fr, _ = scene(FaceSpec((160, 120), (14, 18), 38.5))
    res = screen_frame(fr, detect_faces_baseline(fr))
    assert [r.fever for r in res] == [True]


def test_screen_frame_keeps_order_and_records_failures():
    fr, anns = scene(FaceSpec((80, 100), (14, 18), 38.5), FaceSpec((220, 100), (14, 18), 36.6))
    dets = [Detection(0, anns[1].bbox, 0.2), Detection(0, BoundingBox(10, 10, 20, 11), 0.9),
            Detection(0, BoundingBox(300, 200, 330, 230), 0.5), Detection(0, anns[0].bbox, 0.1)]
    res = screen_frame(fr, dets)
    assert [r.bbox for r in res] == [d.bbox for d in dets]
    assert [r.ok for r in res] == [True, False, False, True]
    assert res[0].fever is False and res[3].fever is True
    assert "outside" in res[2].error


def test_external_mask_overrides_heuristic():
    fr, anns = scene(FaceSpec((160, 120), (14, 18), 36.8))
    ov = mask_overrides([(0, anns[0].bbox, True)])
    res = screen_frame(fr, [Detection(0, anns[0].bbox, 1.0)], external_masks=ov)
    assert res[0].mask is True and res[0].mask_score is None


def test_results_round_trip():
    fr, anns = scene(FaceSpec((160, 120), (14, 18), 38.5, masked=True))
    res = screen_frame(fr, [Detection(0, anns[0].bbox, 1.0), Detection(0, BoundingBox(0, 0, 3, 1), 1.0)])
    assert parse_results(format_results(res).splitlines()) == res


def test_config_validation():
    with pytest.raises(ValueError):
        ScreeningConfig(upper_face_fraction=0.6, lower_face_fraction=0.5)
    with pytest.raises(ValueError):
        ScreeningConfig(fever_threshold=float("nan"))
