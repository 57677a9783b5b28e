import numpy as np
import pytest

from app.accuracy import (
    FrameTruth,
    accuracy_model,
    flow_factor,
    key_accuracy,
    load_accuracy_params,
    nonkey_accuracy,
    redundancy_curves,
    resolution_factor,
)
from app.models import ACTIONS, AccuracyParams, Action, ConfigError


def truth(difficulty=0.5, accum=0.0, motion=0.0):
    return FrameTruth(motion_mag=motion, accum_motion_since_key=accum, frame_difficulty=difficulty)


def test_key_accuracy_plateau(accuracy_params):
    assert accuracy_model(truth(0.0), Action.A1, accuracy_params) == pytest.approx(0.9)
    assert accuracy_model(truth(1.0), Action.A1, accuracy_params) == pytest.approx(0.65)


def test_full_ratio_without_motion_is_exactly_key(accuracy_params):
    for d in (0.0, 0.3, 0.5, 1.0):
        t = truth(d)
        assert nonkey_accuracy(t, 1.0, accuracy_params) == key_accuracy(d, accuracy_params)


def test_easy_content_tolerates_quarter_pixels(accuracy_params):
    t = truth(0.0)
    acc = accuracy_model(t, Action.A2, accuracy_params)
    assert acc == pytest.approx(key_accuracy(0.0, accuracy_params), rel=0.02)


def test_accuracy_non_increasing_along_actions(accuracy_params):
    for d in np.linspace(0.0, 1.0, 11):
        for accum in (0.0, 1.0, 5.0, 20.0, 100.0):
            accs = [accuracy_model(truth(d, accum), a, accuracy_params) for a in ACTIONS]
            assert all(x >= y for x, y in zip(accs, accs[1:])), (d, accum, accs)


def test_accuracy_non_increasing_in_accumulated_motion(accuracy_params):
    motions = np.linspace(0.0, 200.0, 41)
    for d in (0.0, 0.5, 1.0):
        for a in ACTIONS[1:]:
            accs = [accuracy_model(truth(d, m), a, accuracy_params) for m in motions]
            assert all(x >= y for x, y in zip(accs, accs[1:]))


def test_harder_content_loses_more_to_downsampling(accuracy_params):
    easy = resolution_factor(1 / 64, 0.0, accuracy_params)
    hard = resolution_factor(1 / 64, 1.0, accuracy_params)
    assert easy > hard


def test_resolution_factor_saturates_at_one(accuracy_params):
    assert resolution_factor(1.0, 0.5, accuracy_params) == 1.0
    assert 0.0 < resolution_factor(1e-4, 1.0, accuracy_params) < 0.1


def test_flow_factor_endpoints(accuracy_params):
    assert flow_factor(0.0, accuracy_params) == 1.0
    assert flow_factor(1e6, accuracy_params) == pytest.approx(accuracy_params.flow_floor)


def test_accuracy_stays_in_unit_interval(accuracy_params):
    rng = np.random.default_rng(5)
    for _ in range(500):
        t = truth(rng.uniform(0, 1), rng.uniform(0, 300))
        for a in ACTIONS:
            assert 0.0 <= accuracy_model(t, a, accuracy_params) <= 1.0


def test_invalid_pixel_ratio(accuracy_params):
    with pytest.raises(ValueError):
        nonkey_accuracy(truth(), 0.0, accuracy_params)
    with pytest.raises(ValueError):
        nonkey_accuracy(truth(), 1.5, accuracy_params)


def test_redundancy_curves_grid(accuracy_params):
    rows = redundancy_curves(accuracy_params, difficulties=(0.0, 1.0), ratios=(1.0, 0.1), motions=(0.0,))
    assert len(rows) == 4
    assert rows[0] == (0.0, 1.0, 0.0, pytest.approx(0.9))


def test_shipped_params_are_the_model_defaults(accuracy_params):
    assert accuracy_params == AccuracyParams()


def test_knee_order_is_validated():
    with pytest.raises(Exception, match="knee_easy"):
        AccuracyParams(knee_easy=0.2, knee_hard=0.1)


def test_load_accuracy_params_rejects_unknown_keys(tmp_path):
    path = tmp_path / "acc.json"
    path.write_text('{"key_base": 0.9, "surprise": 1}')
    with pytest.raises(ConfigError):
        load_accuracy_params(path)
