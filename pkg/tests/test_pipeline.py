import json
import math
import statistics

import numpy as np
import pytest

from conftest import random_hand_posture
from handkin.calibration import Alignment, SensorCalibration, linear_calibration
from handkin.exceptions import ModelValidationError, UnknownChannelError, Unreachable
from handkin.ik import IkConfig
from handkin.kinematics import forward_kinematics
from handkin.models import FINGERS
from handkin.pipeline import (
    FORMAT,
    NoiseConfig,
    Pipeline,
    SensorFrame,
    StreamError,
    dumps_estimates,
    dumps_frames,
    estimate_frame,
    glove_angles,
    glove_inverse,
    loads_estimates,
    loads_frames,
    process_stream,
    simulate_glove,
)
from handkin.transform import Transform


def _max_error(est, truth, hand):
    return max(abs(est[n] - truth[n]) for n in hand.revolute_names)


# -- simulation ----------------------------------------------------------------

def test_glove_inverse_reproduces_tip_pose(glove, hand, alignment):
    rng = np.random.default_rng(0)
    inv = alignment.glove_to_hand.inverse()
    for _ in range(50):
        q = random_hand_posture(hand, rng)
        for f in FINGERS:
            target = inv @ forward_kinematics(hand, q, f"{f}tip")
            angles = glove_inverse(glove, f, target)
            got = forward_kinematics(glove, {**glove.zero_state(), **angles}, f"{f}tip")
            assert np.linalg.norm(np.subtract(got.translation, target.translation)) < 1e-9
            assert angles[f"{f}_R"] == pytest.approx(0.0, abs=1e-9)


def test_unreachable_glove_pose_names_the_finger(glove):
    far = Transform.from_translation((1.0, 0.0, 0.0))
    with pytest.raises(Unreachable) as err:
        glove_inverse(glove, "ring", far)
    assert err.value.finger == "ring" and err.value.residual > 0.5
    assert "ring" in str(err.value)


def test_zero_noise_round_trip(pipeline, hand, glove, glove_calibration, alignment):
    rng = np.random.default_rng(1)
    for _ in range(40):
        q = random_hand_posture(hand, rng)
        frame = simulate_glove(q, hand, glove, alignment, glove_calibration)
        est, diag, _ = pipeline.estimate_frame(frame)
        assert _max_error(est, q, hand) < 1e-3
        assert all(d["converged"] for d in diag.values())


def test_functional_forms_match_pipeline(pipeline, hand, glove, glove_calibration, alignment):
    q = random_hand_posture(hand, np.random.default_rng(2))
    frame = simulate_glove(q, hand, glove, alignment, glove_calibration)
    est, diag, state = estimate_frame(frame, glove_calibration, glove, alignment, hand)
    assert est == pipeline.estimate_frame(frame)[0]
    assert state.seed == est and state.diagnostics == diag
    assert process_stream([frame], glove_calibration, glove, alignment, hand)[0][1] == est


def test_zero_frame_with_straight_anchored_calibration(glove, hand, alignment):
    straight = glove_angles(hand.zero_state(), hand, glove, alignment)
    calib = SensorCalibration({ch: [(0, a), (1000, a + 1.0)] for ch, a in straight.items()})
    pipe = Pipeline(glove, hand, calib, alignment)
    est, diag, _ = pipe.estimate_frame(SensorFrame(0.0, {ch: 0 for ch in straight}))
    assert _max_error(est, hand.zero_state(), hand) < 1e-6
    assert all(d["converged"] for d in diag.values())


def test_unreachable_tip_returns_closest_reachable(glove, hand, alignment, hand_dims):
    # the straight glove linkage reaches well beyond every fingertip
    calib = SensorCalibration({ch: [(0, 0.0), (1000, 1.0)] for ch in glove.revolute_names})
    pipe = Pipeline(glove, hand, calib, alignment)
    frame = SensorFrame(0.0, {ch: 0 for ch in glove.revolute_names})
    targets = pipe.tip_targets(frame)
    est, diag, _ = pipe.estimate_frame(frame)
    assert hand.within_limits(est)
    for f in FINGERS:
        d = hand_dims.fingers[f]
        mcp = np.array(d.palm_to_mcp.translation)
        reach_gap = np.linalg.norm(np.subtract(targets[f].translation, mcp)) - d.length
        assert reach_gap > 0.01
        assert not diag[f]["converged"]
        # closest reachable point: the straightened finger pointing at the target
        assert est[f"{f}_pip"] == pytest.approx(0.0, abs=1e-3)
        assert est[f"{f}_dip"] == pytest.approx(0.0, abs=1e-3)
        assert diag[f]["pos_residual"] == pytest.approx(reach_gap, abs=1e-4)


def test_seeded_noise_is_deterministic(hand, glove, glove_calibration, alignment):
    q = random_hand_posture(hand, np.random.default_rng(3))
    noise = NoiseConfig(adc_bits=12, sensor_noise_sd=0.01, rng_seed=42,
                        calibration_offset={"index_B": 0.02})
    a = simulate_glove(q, hand, glove, alignment, glove_calibration, noise)
    b = simulate_glove(q, hand, glove, alignment, glove_calibration, noise)
    assert a == b
    c = simulate_glove(q, hand, glove, alignment, glove_calibration, noise.with_seed(43))
    assert c != a


def test_one_bit_adc_hits_the_range_ends(hand, glove, glove_calibration, alignment):
    rng = np.random.default_rng(4)
    for _ in range(10):
        q = random_hand_posture(hand, rng)
        frame = simulate_glove(q, hand, glove, alignment, glove_calibration, NoiseConfig(adc_bits=1))
        for ch, raw in frame.channels.items():
            assert raw in glove_calibration.raw_range(ch)


def test_noise_config_validation():
    for bad in ({"adc_bits": 0}, {"adc_bits": 17}, {"adc_bits": True}, {"sensor_noise_sd": -0.1}):
        with pytest.raises(ModelValidationError):
            NoiseConfig(**bad)
    cfg = NoiseConfig(adc_bits=10, slip=Transform.from_translation((0.001, 0, 0)), sensor_noise_sd=0.01)
    assert NoiseConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_translation_slip_of_the_alignment_shifts_tips_by_its_magnitude(
        pipeline, hand, glove, glove_calibration, alignment):
    rng = np.random.default_rng(5)
    for s in (0.001, 0.003, 0.005):
        direction = rng.normal(size=3)
        slip = Transform.from_translation(tuple(s * direction / np.linalg.norm(direction)))
        slipped = Alignment(alignment.glove_to_hand @ slip)
        q = random_hand_posture(hand, rng)
        frame = simulate_glove(q, hand, glove, alignment, glove_calibration)
        believed = pipeline.tip_targets(frame, slipped)
        for f, target in pipeline.tip_targets(frame).items():
            err = np.linalg.norm(np.subtract(believed[f].translation, target.translation))
            assert err == pytest.approx(s, abs=1e-12)


def test_simulated_slip_error_is_bounded_by_its_magnitude(pipeline, hand, glove, glove_calibration, alignment):
    # the glove reports the closest pose its linkage can take, so the
    # out-of-plane part of a slip is lost and the error is at most s
    rng = np.random.default_rng(6)
    s = 0.004
    for _ in range(10):
        direction = rng.normal(size=3)
        slip = Transform.from_translation(tuple(s * direction / np.linalg.norm(direction)))
        q = random_hand_posture(hand, rng)
        frame = simulate_glove(q, hand, glove, alignment, glove_calibration, NoiseConfig(slip=slip))
        for f, target in pipeline.tip_targets(frame).items():
            truth = forward_kinematics(hand, q, f"{f}tip")
            err = np.linalg.norm(np.subtract(target.translation, truth.translation))
            assert 0.0 < err <= s + 1e-9
    # along the glove's distal axis the slip stays in the linkage plane
    slip = Transform.from_translation((s, 0.0, 0.0))
    q = hand.zero_state()
    frame = simulate_glove(q, hand, glove, alignment, glove_calibration, NoiseConfig(slip=slip), fingers=["middle"])
    target = pipeline.tip_targets(frame)["middle"]
    err = np.linalg.norm(np.subtract(target.translation, forward_kinematics(hand, q, "middletip").translation))
    assert err == pytest.approx(s, abs=1e-9)


def test_simulation_needs_calibrated_channels(hand, glove, alignment):
    calib = linear_calibration(glove, joints={"index_R"})
    with pytest.raises(UnknownChannelError):
        simulate_glove(hand.zero_state(), hand, glove, alignment, calib, fingers=["index"])


# -- streams ---------------------------------------------------------------------

def test_empty_stream(pipeline):
    assert pipeline.process_stream([]) == []


def test_constant_stream_has_zero_spread(pipeline, hand, glove, glove_calibration, alignment):
    q = random_hand_posture(hand, np.random.default_rng(6))
    frame = simulate_glove(q, hand, glove, alignment, glove_calibration)
    frames = [SensorFrame(i / 50.0, frame.channels) for i in range(250)]
    out = pipeline.process_stream(frames)
    assert len(out) == 250
    for n in hand.revolute_names:
        column = [qq[n] for _, qq, _ in out]
        # statistics.stdev works in exact arithmetic, unlike numpy's std
        assert statistics.stdev(column) == 0.0
    assert [t for t, _, _ in out] == [f.timestamp for f in frames]


def test_warm_start_needs_fewer_iterations(hand, glove, alignment):
    calib = linear_calibration(glove)
    pipe = Pipeline(glove, hand, calib, alignment, IkConfig())
    frames = []
    for i, s in enumerate(np.linspace(0.0, 1.0, 40)):
        q = hand.zero_state()
        for f in FINGERS:
            q.update({f"{f}_mcp_flexion": 0.9 * s, f"{f}_pip": 1.2 * s, f"{f}_dip": 0.7 * s})
        frames.append(simulate_glove(q, hand, glove, alignment, calib, timestamp=i / 50.0))
    warm = [sum(d["iters"] for d in diag.values()) for _, _, diag in pipe.process_stream(frames)]
    cold = [sum(d["iters"] for d in pipe.estimate_frame(f)[1].values()) for f in frames]
    assert np.mean(warm) < np.mean(cold)


def test_noisy_streams_stay_within_limits(hand, glove, glove_calibration, alignment, pipeline):
    rng = np.random.default_rng(7)
    frames = []
    for i in range(30):
        q = random_hand_posture(hand, rng)
        noise = NoiseConfig(adc_bits=8, sensor_noise_sd=0.05, rng_seed=i)
        frames.append(simulate_glove(q, hand, glove, alignment, glove_calibration, noise, timestamp=float(i)))
    for _, q, _ in pipeline.process_stream(frames):
        assert hand.within_limits(q)


def test_stream_consistency_errors(pipeline, hand, glove, glove_calibration, alignment):
    frame = simulate_glove(hand.zero_state(), hand, glove, alignment, glove_calibration)
    with pytest.raises(StreamError) as err:
        pipeline.process_stream([SensorFrame(1.0, frame.channels), SensorFrame(0.5, frame.channels)])
    assert err.value.index == 1
    partial = {k: v for k, v in frame.channels.items() if not k.startswith("pinky")}
    with pytest.raises(StreamError, match="channel set"):
        pipeline.process_stream([frame, SensorFrame(1.0, partial)])
    with pytest.raises(StreamError) as err:
        pipeline.process_stream([SensorFrame(0.0, {**frame.channels, "index_X": 3})])
    assert err.value.index == 0


def test_frame_file_round_trip(hand, glove, glove_calibration, alignment):
    rng = np.random.default_rng(8)
    frames = [simulate_glove(random_hand_posture(hand, rng), hand, glove, alignment, glove_calibration,
                             timestamp=i * 0.02) for i in range(5)]
    text = dumps_frames(frames)
    assert text.splitlines()[0] == json.dumps({"format": FORMAT})
    assert loads_frames(text) == frames
    assert loads_frames("") == []


@pytest.mark.parametrize("line, message", [
    ("{not json", "invalid JSON"),
    ('{"t": 0.1}', "record"),
    ('{"t": "x", "channels": {}}', "t must be"),
    ('{"t": 0.1, "channels": {"index_B": 1.5}}', "integer"),
])
def test_corrupt_line_is_reported_by_number(line, message):
    good = json.dumps({"t": 0.0, "channels": {"index_B": 1}})
    lines = [json.dumps({"format": FORMAT})] + [good] * 5 + [line]
    with pytest.raises(StreamError, match=message) as err:
        loads_frames("\n".join(lines))
    assert err.value.line == 7 and "line 7" in str(err.value)


def test_missing_header():
    with pytest.raises(StreamError) as err:
        loads_frames(json.dumps({"t": 0.0, "channels": {}}))
    assert err.value.line == 1


def test_estimate_file_round_trip(pipeline, hand, glove, glove_calibration, alignment):
    frame = simulate_glove(hand.zero_state(), hand, glove, alignment, glove_calibration)
    results = pipeline.process_stream([frame])
    recs = loads_estimates(dumps_estimates(results))
    assert recs[0]["t"] == 0.0
    assert recs[0]["joints"] == results[0][1]
    assert set(recs[0]["diagnostics"]["index"]) == {"converged", "pos_residual", "iters"}
    assert loads_estimates(dumps_estimates([])) == []
