import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajanomaly import simdata as sd
from trajanomaly.simdata import (ABNORMAL, ANOMALY_CLASSES, NORMAL, TRANSITION, FrameLabel, ScenarioConfig,
                                 Scene, SceneFormatError, generate_dataset, generate_scene, read_scene, write_scene)


def test_eleven_classes():
    assert len(ANOMALY_CLASSES) == 11
    assert len(set(ANOMALY_CLASSES)) == 11


def test_deterministic():
    cfg = ScenarioConfig(seed=7)
    assert generate_scene(cfg) == generate_scene(cfg)


def test_normal_scene_labels():
    s = generate_scene(ScenarioConfig(seed=3))
    assert s.is_normal and s.n_frames == 150 and s.n_agents == 2 and s.dt == 0.1
    assert all(lab.state == NORMAL for lab in s.labels)
    assert np.array_equal(s.positions[0, 0], [0.0, 0.0])


def test_wrong_way_window():
    s = generate_scene(ScenarioConfig(seed=11, anomaly_class="wrong_way", anomaly_onset_frame=50,
                                      anomaly_duration=30))
    states = s.states
    assert np.all(states[50:80] == ABNORMAL)
    assert states[49] == TRANSITION and states[80] == TRANSITION
    assert np.all(states[:49] == NORMAL) and np.all(states[81:] == NORMAL)
    dx = np.diff(s.positions[:, :, 0], axis=0)  # dx[t - 1] is the displacement into frame t
    against = [np.all(dx[49:79, i] < 0) for i in range(s.n_agents)]
    assert sum(against) == 1
    assert np.all(dx[:48] > 0)


@pytest.mark.parametrize("cls", ANOMALY_CLASSES)
def test_every_class_generates(cls):
    s = generate_scene(ScenarioConfig(seed=5, anomaly_class=cls, anomaly_onset_frame=40, anomaly_duration=25))
    assert s.anomaly_class == cls
    assert (s.states == ABNORMAL).sum() == 25
    assert np.all(np.isfinite(s.positions))


def test_anomaly_window_validation():
    with pytest.raises(ValueError):
        generate_scene(ScenarioConfig(anomaly_class="skidding", anomaly_onset_frame=140, anomaly_duration=20))
    with pytest.raises(ValueError):
        generate_scene(ScenarioConfig(anomaly_class="skidding", anomaly_duration=sd.MIN_ANOMALY_FRAMES - 1))
    with pytest.raises(ValueError):
        generate_scene(ScenarioConfig(anomaly_class="not_a_class"))


def test_label_consistency():
    with pytest.raises(ValueError):
        FrameLabel(NORMAL, "skidding")
    with pytest.raises(ValueError):
        FrameLabel(ABNORMAL, None)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.sampled_from((None,) + ANOMALY_CLASSES))
def test_label_invariant_and_bounds(seed, cls):
    cfg = ScenarioConfig(seed=seed, duration_frames=60, anomaly_class=cls, anomaly_onset_frame=20,
                         anomaly_duration=15)
    s = generate_scene(cfg)
    for lab in s.labels:
        assert (lab.anomaly_class is None) == (lab.state == NORMAL)
    y = s.positions[..., 1]
    # two lanes plus the off-road margin on both sides
    assert y.max() - y.min() <= 2 * cfg.lane_width + 2 * sd.OFFROAD_MARGIN + 1e-9


@settings(max_examples=15)
@given(st.integers(0, 2**31))
def test_normal_speeds_plausible(seed):
    cfg = ScenarioConfig(seed=seed, duration_frames=80)
    s = generate_scene(cfg)
    speed = np.hypot(*np.moveaxis(np.diff(s.positions, axis=0), -1, 0)) / cfg.dt
    lo, hi = cfg.speed_range
    assert np.all(speed > 0.8 * lo) and np.all(speed < 1.2 * hi)


def test_extra_agents_keep_base_pair():
    two = generate_scene(ScenarioConfig(seed=9, n_agents=2))
    four = generate_scene(ScenarioConfig(seed=9, n_agents=4))
    assert four.n_agents == 4
    assert np.array_equal(four.positions[:, :2], two.positions)


def test_round_trip(tmp_path):
    s = generate_scene(ScenarioConfig(seed=2, anomaly_class="staggering"))
    write_scene(s, tmp_path / "scene_0000.csv")
    assert read_scene(tmp_path / "scene_0000.csv") == s


def test_parse_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SceneFormatError, match="no frames"):
        read_scene(empty)
    s = generate_scene(ScenarioConfig(seed=2, duration_frames=5))
    path = tmp_path / "s.csv"
    write_scene(s, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(SceneFormatError, match="differ"):
        read_scene(path)
    lines[3] = lines[3].replace(lines[3].split(",")[2], "abc")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SceneFormatError, match="line 4.*x"):
        read_scene(path)


def test_dataset_composition():
    train, test = generate_dataset(80, 3, 0, duration_frames=40)
    assert len(train) == 80 and len(test) == 66
    assert all(s.is_normal for s in train)
    assert sum(s.is_normal for s in test) == 33
    assert sorted(s.anomaly_class for s in test if not s.is_normal) == sorted(ANOMALY_CLASSES * 3)
    tr1, te1 = generate_dataset(1, 0, 0, duration_frames=30)
    assert len(tr1) == 1 and len(te1) == 0


def test_dataset_deterministic_and_agents():
    a = generate_dataset(4, 1, 5, duration_frames=40, classes=("skidding",))
    b = generate_dataset(4, 1, 5, duration_frames=40, classes=("skidding",))
    assert all(x == y for x, y in zip(a[0] + a[1], b[0] + b[1]))
    _, t4 = generate_dataset(4, 1, 5, n_agents=4, duration_frames=40, classes=("skidding",))
    assert all(s.n_agents == 4 for s in t4)
    assert [s.scene_id for s in t4] == [s.scene_id for s in a[1]]


def test_dataset_files(tmp_path):
    train, test = generate_dataset(3, 0, 1, n_abnormal=2, duration_frames=40)
    sd.write_dataset(tmp_path / "d", train, test)
    assert (tmp_path / "d" / "test" / f"{test[0].scene_id}.labels.csv").exists()
    assert not (tmp_path / "d" / "train" / f"{train[0].scene_id}.labels.csv").exists()
    rtrain, rtest = sd.read_dataset(tmp_path / "d")
    assert rtrain == train and rtest == test
    manifest = sd.read_manifest(tmp_path / "d")
    assert [r["scene_id"] for r in manifest] == [s.scene_id for s in train + test]
    with pytest.raises(FileExistsError):
        sd.write_dataset(tmp_path / "d", train, test)
    sd.write_dataset(tmp_path / "d", train, test, force=True)
