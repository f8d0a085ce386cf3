import numpy as np
import pytest

from rownav import pgm
from rownav.controller import ControllerConfig
from rownav.perception import PerceptionConfig, Variant
from rownav.sim import CameraModel, EpisodeLog, Rates, WorldConfig, generate_world, run_episode
from rownav.sim.episode import LOG_COLUMNS, NoisySegmentation, oracle_mask

SMALL = CameraModel(width=64, height=48)


def _run(crop="CommonVineyard", duration=2.0, camera=SMALL, **kw):
    world = generate_world(WorldConfig(crop=crop, **kw.pop("world", {})))
    perception = PerceptionConfig(depth_threshold=5.0, smoothing_window=7, variant=kw.pop("variant", "SegMin"))
    return run_episode(world, perception, ControllerConfig(frame_width=camera.width), camera=camera, duration=duration, **kw)


def test_zero_duration_gives_empty_log():
    log = _run(duration=0.0)
    assert log.rows == [] and not log.completed
    assert log.trajectory.shape == (0, 4)
    assert log.stop_events == 0


@pytest.mark.parametrize("seconds", [1, 2])
def test_update_counts_match_rates(seconds):
    log = _run(duration=float(seconds))
    assert (log.renders, log.perceptions, log.controls) == (30 * seconds, 20 * seconds, 5 * seconds)
    assert len(log.rows) == 5 * seconds
    np.testing.assert_allclose(np.diff(log.column("t")), 0.2)


def test_rates_must_divide_base():
    with pytest.raises(ValueError):
        Rates(render_hz=25)
    with pytest.raises(ValueError):
        Rates(control_hz=0)


def test_episode_is_deterministic_under_noise():
    def go():
        seg = NoisySegmentation(0.05, 0.05, seed=3)
        return _run(duration=3.0, mask_source=seg, depth_noise=0.01, seed=7, variant="SegMinD")

    a, b = go(), go()
    assert a.rows == b.rows
    c = _run(duration=3.0, mask_source=NoisySegmentation(0.05, 0.05, seed=4), depth_noise=0.01, seed=7, variant="SegMinD")
    assert a.rows != c.rows


def test_centered_straight_run_takes_forty_seconds():
    log = _run(crop="PearField", duration=60.0, camera=CameraModel(), world={"jitter_seed": 1})
    assert log.completed and log.reason == "end_line"
    # 20 m at 0.5 m/s, plus the ramp-up of the command filter
    assert 40.0 <= log.end_time <= 41.0


def test_divergence_guard_stops_episode():
    log = _run(duration=10.0, world={"start_lateral": 0.2}, divergence=0.1)
    assert log.failed and log.reason == "diverged"
    assert log.end_time == pytest.approx(1 / 60)


def test_timeout_reason():
    log = _run(duration=1.0)
    assert log.reason == "timeout" and log.end_time == pytest.approx(1.0)


def test_csv_roundtrip_keeps_nan(tmp_path):
    rows = [(0.0, 0.0, 0.0, 0.0, float("nan"), float("nan"), 0.0, 0.0, 0.0, 0.0), tuple(float(i) / 3 for i in range(10))]
    log = EpisodeLog(rows=rows, completed=True, end_time=1.5)
    log.write_csv(tmp_path / "log.csv")
    back = EpisodeLog.read_csv(tmp_path / "log.csv", completed=True, end_time=1.5)
    assert back.rows[1] == rows[1]
    assert np.isnan(back.rows[0][4]) and back.stop_events == 1
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == ",".join(LOG_COLUMNS)


def test_csv_rejects_wrong_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        EpisodeLog.read_csv(tmp_path / "bad.csv")


def test_noisy_segmentation_rates():
    from rownav.sim.camera import FrameObservation

    mask = np.zeros((200, 200), np.uint8)
    mask[:, :100] = 1
    frame = FrameObservation(mask=mask, depth=np.ones(mask.shape), timestamp=0.0)
    out = NoisySegmentation(0.1, 0.2, seed=0)(frame)
    assert abs(out[:, 100:].mean() - 0.1) < 0.01
    assert abs(1 - out[:, :100].mean() - 0.2) < 0.01
    np.testing.assert_array_equal(NoisySegmentation()(frame), mask)
    np.testing.assert_array_equal(oracle_mask(frame), mask)
    for bad in ((-0.1, 0), (0, 1.5)):
        with pytest.raises(ValueError):
            NoisySegmentation(*bad)


def test_debug_frames_written(tmp_path):
    log = _run(duration=0.5, debug_dir=tmp_path / "dbg")
    masks = sorted((tmp_path / "dbg").glob("*_mask.pgm"))
    depths = sorted((tmp_path / "dbg").glob("*_depth.pgm"))
    assert len(masks) == len(depths) == log.perceptions == 10
    assert pgm.read_mask(masks[0]).shape == (48, 64)


def test_variants_all_run():
    for v in Variant:
        log = _run(duration=1.0, variant=v.value)
        assert len(log.rows) == 5
