"""Procedural two-lane highway scenes with scripted abnormal manoeuvres.

Normal traffic comes from a small kinematic micro-simulation: every vehicle
tracks a desired speed and a lane centre, follows a slower leader, overtakes
on the left when the neighbouring lane is free and returns to the right lane
afterwards. An abnormal scene additionally hands one vehicle to a scripted
manoeuvre for a fixed window of frames.

Coordinates: x along the legal direction of travel, y lateral (left positive),
origin at the first position of agent 0. The right lane centre sits at y=0 in
road coordinates and the left lane centre at y=lane_width.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

ANOMALY_CLASSES = (
    "leave_road",
    "left_spreading",
    "aggressive_overtaking",
    "pushing_aside",
    "aggressive_reeving",
    "right_spreading",
    "skidding",
    "staggering",
    "tailgating",
    "thwarting",
    "wrong_way",
)
INTERACTIVE_CLASSES = frozenset({
    "left_spreading", "aggressive_overtaking", "pushing_aside", "aggressive_reeving",
    "right_spreading", "tailgating", "thwarting", "wrong_way",
})
NORMAL, TRANSITION, ABNORMAL = "normal", "transition", "abnormal"
STATES = (NORMAL, TRANSITION, ABNORMAL)
MIN_ANOMALY_FRAMES = 10
OFFROAD_MARGIN = 8.0  # metres beyond the road edge that positions may reach
TAILGATE_GAP = 6.0


class SceneFormatError(ValueError):
    """Malformed scene or label file."""


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float


@dataclass(frozen=True)
class FrameLabel:
    state: str = NORMAL
    anomaly_class: str | None = None

    def __post_init__(self):
        if self.state not in STATES:
            raise ValueError(f"unknown frame state {self.state!r}")
        if (self.anomaly_class is None) != (self.state == NORMAL):
            raise ValueError("anomaly_class must be set exactly for transition/abnormal frames")
        if self.anomaly_class is not None and self.anomaly_class not in ANOMALY_CLASSES:
            raise ValueError(f"unknown anomaly class {self.anomaly_class!r}")


@dataclass(eq=False)
class Scene:
    scene_id: str
    dt: float
    positions: np.ndarray  # (T, N, 2)
    labels: list[FrameLabel]

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[-1] != 2:
            raise ValueError(f"positions must be (T, N, 2), got {self.positions.shape}")
        if self.n_frames < 2 or self.n_agents < 1:
            raise ValueError("a scene needs T >= 2 frames and N >= 1 agents")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if len(self.labels) != self.n_frames:
            raise ValueError(f"{len(self.labels)} labels for {self.n_frames} frames")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_agents(self) -> int:
        return self.positions.shape[1]

    @property
    def agents(self) -> list[list[AgentState]]:
        return [[AgentState(float(x), float(y)) for x, y in self.positions[:, i]] for i in range(self.n_agents)]

    @property
    def states(self) -> np.ndarray:
        return np.array([lab.state for lab in self.labels])

    @property
    def anomaly_class(self) -> str | None:
        for lab in self.labels:
            if lab.anomaly_class is not None:
                return lab.anomaly_class
        return None

    @property
    def is_normal(self) -> bool:
        return all(lab.state == NORMAL for lab in self.labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.scene_id == other.scene_id and self.dt == other.dt
                and self.positions.shape == other.positions.shape
                and np.array_equal(self.positions, other.positions)
                and self.labels == other.labels)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_agents: int = 2
    duration_frames: int = 150
    lane_width: float = 3.5
    speed_range: tuple[float, float] = (24.0, 28.0)
    anomaly_class: str | None = None
    anomaly_onset_frame: int = 50
    anomaly_duration: int = 30
    dt: float = 0.1
    scene_id: str = "scene_0000"

    def validate(self) -> None:
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.duration_frames < 2:
            raise ValueError("duration_frames must be >= 2")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad speed_range {self.speed_range}")
        if self.lane_width <= 0 or self.dt <= 0:
            raise ValueError("lane_width and dt must be positive")
        if self.anomaly_class is None:
            return
        if self.anomaly_class not in ANOMALY_CLASSES:
            raise ValueError(f"unknown anomaly class {self.anomaly_class!r}")
        if self.n_agents < 2:
            raise ValueError("scripted anomalies need at least two agents")
        if self.anomaly_duration < MIN_ANOMALY_FRAMES:
            raise ValueError(f"anomaly_duration must be >= {MIN_ANOMALY_FRAMES}")
        if self.anomaly_onset_frame < 1:
            raise ValueError("anomaly_onset_frame must be >= 1")
        if self.anomaly_onset_frame + self.anomaly_duration > self.duration_frames:
            raise ValueError(
                f"anomaly window {self.anomaly_onset_frame}..{self.anomaly_onset_frame + self.anomaly_duration - 1}"
                f" exceeds scene of {self.duration_frames} frames")


# ------------------------------------------------------------------ simulation

@dataclass
class _Vehicle:
    x: float
    y: float
    speed: float
    desired_speed: float
    lane: int
    vy: float = 0.0
    heading: float = 1.0  # +1 along the legal direction, -1 wrong way
    passive: bool = False
    jitter: float = 0.0


class _Road:
    def __init__(self, cfg: ScenarioConfig):
        self.w = cfg.lane_width
        self.vmin, self.vmax = cfg.speed_range
        self.dt = cfg.dt
        self.y_min = -0.5 * self.w - OFFROAD_MARGIN
        self.y_max = 1.5 * self.w + OFFROAD_MARGIN

    def centre(self, lane: int) -> float:
        return lane * self.w

    def lane_of(self, y: float) -> int:
        return 1 if y > 0.5 * self.w else 0


def _leader(me: int, cars: list[_Vehicle], road: _Road, lane: int, pool: Iterable[int]):
    """Closest vehicle ahead of ``me`` in ``lane``; returns (gap, index) or (inf, None)."""
    best, idx = math.inf, None
    c = road.centre(lane)
    for j in pool:
        if j == me:
            continue
        o = cars[j]
        if abs(o.y - c) < 0.6 * road.w and o.x > cars[me].x:
            gap = o.x - cars[me].x
            if gap < best:
                best, idx = gap, j
    return best, idx


def _lane_free(me: int, cars: list[_Vehicle], road: _Road, lane: int, pool, behind: float, ahead: float) -> bool:
    c = road.centre(lane)
    for j in pool:
        if j == me:
            continue
        o = cars[j]
        if abs(o.y - c) < 0.8 * road.w and -behind < o.x - cars[me].x < ahead:
            return False
    return True


def _drive(me: int, cars: list[_Vehicle], road: _Road, rng: np.random.Generator, pool) -> tuple[float, float]:
    """Normal driving controller; returns (longitudinal speed, lateral speed)."""
    car = cars[me]
    dt = road.dt
    if not car.passive:
        if rng.random() < 0.04 * dt:
            car.desired_speed = rng.uniform(road.vmin, road.vmax)
        other = 1 - car.lane
        gap, lead = _leader(me, cars, road, car.lane, pool)
        if lead is not None and gap < 45.0 and cars[lead].speed < car.desired_speed - 1.0 \
                and _lane_free(me, cars, road, other, pool, 15.0, 30.0) and car.lane == road.lane_of(car.y):
            car.lane = other  # overtake (or pass on the free lane)
        elif car.lane == 1 and car.lane == road.lane_of(car.y) \
                and _lane_free(me, cars, road, 0, pool, 12.0, 25.0) and rng.random() < 0.5 * dt:
            car.lane = 0  # keep right once the right lane is clear
        elif rng.random() < 0.02 * dt and _lane_free(me, cars, road, other, pool, 20.0, 30.0):
            car.lane = other

    target = car.desired_speed
    gap, lead = _leader(me, cars, road, road.lane_of(car.y), pool)
    if lead is not None:
        safe = 1.2 * car.speed + 6.0
        if gap < safe:
            target = min(target, cars[lead].speed - 0.5 * (safe - gap))
    acc = float(np.clip(0.6 * (target - car.speed), -3.0, 1.5))
    speed = float(np.clip(car.speed + acc * dt, road.vmin, road.vmax))

    err = road.centre(car.lane) - car.y
    vy_cmd = float(np.clip(0.8 * err, -1.1, 1.1))
    vy = car.vy + 0.35 * (vy_cmd - car.vy)
    car.jitter = 0.9 * car.jitter + rng.normal(0.0, 0.012)
    return speed, vy + car.jitter


def _initial_layout(cfg: ScenarioConfig, road: _Road, rng: np.random.Generator) -> list[_Vehicle]:
    lo, hi = cfg.speed_range
    v0 = rng.uniform(lo, hi)
    # counterpart at a similar but not identical speed, as in normal traffic
    v1 = float(np.clip(v0 + rng.uniform(-1.0, 1.0), lo, hi))
    cls = cfg.anomaly_class
    if cls in ("aggressive_overtaking", "tailgating"):
        # agent 0 behind agent 1 in the right lane
        lanes, dx, speeds = (0, 0), rng.uniform(20.0, 30.0), (v0, v1)
    elif cls == "thwarting":
        lanes, dx, speeds = (0, 0), rng.uniform(18.0, 26.0), (v0, v1)
    elif cls in ("pushing_aside", "aggressive_reeving"):
        lanes, dx, speeds = (1, 0), rng.uniform(-4.0, 4.0), (v0, v1)
    elif cls == "wrong_way":
        lanes, dx, speeds = (0, 1), rng.uniform(30.0, 60.0), (v0, rng.uniform(lo, hi))
    else:
        lanes = tuple(int(k) for k in rng.integers(0, 2, size=2))
        dx = rng.uniform(15.0, 50.0) * rng.choice([-1.0, 1.0])
        speeds = (v0, rng.uniform(lo, hi))
        if lanes[0] == lanes[1] and abs(dx) < 25.0:
            dx = math.copysign(25.0, dx)
    cars = [
        _Vehicle(0.0, road.centre(lanes[0]), speeds[0], speeds[0], lanes[0]),
        _Vehicle(dx, road.centre(lanes[1]), speeds[1], speeds[1], lanes[1]),
    ][: cfg.n_agents]
    return cars


def _place_passive(cars: list[_Vehicle], road: _Road, rng: np.random.Generator, n_extra: int) -> None:
    lo, hi = road.vmin, road.vmax
    for _ in range(n_extra):
        for _attempt in range(200):
            lane = int(rng.integers(0, 2))
            x = rng.uniform(-90.0, 90.0)
            if all(abs(c.x - x) > 30.0 or abs(c.y - road.centre(lane)) > 0.5 * road.w for c in cars):
                break
        v = rng.uniform(lo, hi)
        cars.append(_Vehicle(x, road.centre(lane), v, v, lane, passive=True))


class _Script:
    """Kinematic override for the anomalous agent (and its counterpart) during the window."""

    def __init__(self, cls: str, me: int, other: int, cars: list[_Vehicle], road: _Road, duration: int,
                 rng: np.random.Generator):
        self.cls, self.me, self.other = cls, me, other
        self.road, self.n = road, duration
        car = cars[me]
        self.y0 = car.y
        self.v0 = car.speed
        self.other_y0 = cars[other].y
        w = road.w
        self.side = -1.0 if road.lane_of(car.y) == 0 else 1.0
        self.amp = {
            "left_spreading": 1.1 * w,
            "right_spreading": -1.1 * w,
            "staggering": rng.uniform(0.8, 1.1),
            "skidding": rng.uniform(0.4, 0.6),
        }.get(cls, 0.0)
        self.phase = rng.uniform(0.0, 2.0 * math.pi)

    def step(self, k: int, cars: list[_Vehicle]) -> dict[int, tuple[float, float, float]]:
        """Commands {agent: (longitudinal speed, lateral speed, heading)} for window step k."""
        r, dt, n = self.road, self.road.dt, self.n
        me, car, other = self.me, cars[self.me], cars[self.other]
        u = (k + 1) / n
        cls = self.cls
        if cls == "wrong_way":
            return {me: (car.speed, 0.0, -1.0)}
        if cls == "leave_road":
            edge = r.y_min + 2.0 if self.side < 0 else r.y_max - 2.0
            vy = self.side * 2.5 if (car.y - edge) * self.side < 0 else 0.0
            return {me: (max(car.speed - 3.0 * dt, 5.0), vy, 1.0)}
        if cls in ("left_spreading", "right_spreading"):
            target = self.y0 + self.amp * math.sin(math.pi * u)
            return {me: (car.speed, (target - car.y) / dt, 1.0)}
        if cls == "staggering":
            target = self.y0 + self.amp * math.sin(2.0 * math.pi * (k + 1) * dt / 2.0)
            speed = self.v0 + 1.5 * math.sin(2.0 * math.pi * (k + 1) * dt / 2.0 + self.phase)
            return {me: (speed, (target - car.y) / dt, 1.0)}
        if cls == "skidding":
            drift = -self.side * 1.2 * (k + 1) * dt
            target = self.y0 + drift + self.amp * math.sin(2.0 * math.pi * (k + 1) * dt / 0.5 + self.phase)
            return {me: (max(car.speed - 5.0 * dt, 5.0), (target - car.y) / dt, 1.0)}
        if cls == "aggressive_overtaking":
            speed = car.speed + 4.0 * dt
            if u < 0.4:
                target = r.centre(1)
            elif car.x > other.x + 4.0:
                target = other.y  # cut back in tightly in front
            else:
                target = r.centre(1)
            vy = float(np.clip((target - car.y) / dt, -3.5, 3.5))
            return {me: (speed, vy, 1.0)}
        if cls == "pushing_aside":
            if u > 0.7:
                return {me: (car.speed, 0.0, 1.0), self.other: (other.speed, 0.0, 1.0)}
            push = float(np.clip((other.y + 0.8 * r.w - car.y) / dt, -1.8, 1.8))
            dodge = -1.6 if other.y > -0.5 * r.w - 1.5 else 0.0
            return {me: (car.speed, push, 1.0), self.other: (other.speed, dodge, 1.0)}
        if cls == "aggressive_reeving":
            target = self.other_y0
            vy = float(np.clip((target - car.y) / dt, -3.5, 3.5))
            speed = car.speed if u < 0.35 else max(car.speed - 5.0 * dt, 8.0)
            return {me: (speed, vy, 1.0)}
        if cls == "tailgating":
            gap = other.x - car.x
            base = other.speed + float(np.clip(0.9 * (gap - 0.6 * TAILGATE_GAP), -6.0, 9.0))
            speed = base + 2.0 * math.sin(2.0 * math.pi * (k + 1) * dt / 1.0)
            vy = float(np.clip((other.y - car.y) / dt, -2.0, 2.0))
            return {me: (max(speed, 1.0), vy, 1.0)}
        if cls == "thwarting":
            cycle = ((k + 1) * dt) % 2.0
            acc = -7.0 if cycle < 1.0 else 3.5
            return {me: (float(np.clip(car.speed + acc * dt, 5.0, r.vmax + 5.0)), 0.0, 1.0)}
        raise ValueError(cls)


def _anomaly_roles(cls: str, rng: np.random.Generator) -> tuple[int, int]:
    if cls in ("aggressive_overtaking", "tailgating", "pushing_aside", "aggressive_reeving"):
        return 0, 1  # layouts put agent 0 in the attacking position
    if cls == "thwarting":
        return 1, 0  # agent 1 is the leader that brakes
    me = int(rng.integers(0, 2))
    return me, 1 - me


def frame_labels(n_frames: int, cls: str | None, onset: int, duration: int) -> list[FrameLabel]:
    """Normal everywhere, abnormal in the window, one transition frame on each side."""
    labels = [FrameLabel()] * n_frames
    if cls is None:
        return labels
    labels = list(labels)
    for t in range(onset, onset + duration):
        labels[t] = FrameLabel(ABNORMAL, cls)
    for t in (onset - 1, onset + duration):
        if 0 <= t < n_frames:
            labels[t] = FrameLabel(TRANSITION, cls)
    return labels


def generate_scene(config: ScenarioConfig) -> Scene:
    config.validate()
    seq = np.random.SeedSequence(config.seed)
    base_ss, extra_ss = seq.spawn(2)
    rng = np.random.default_rng(base_ss)
    extra_rng = np.random.default_rng(extra_ss)
    road = _Road(config)
    cars = _initial_layout(config, road, rng)
    n_base = len(cars)
    _place_passive(cars, road, extra_rng, config.n_agents - n_base)
    base_pool = range(n_base)
    all_pool = range(len(cars))

    T = config.duration_frames
    pos = np.empty((T, len(cars), 2))
    pos[0] = [(c.x, c.y) for c in cars]
    script = None
    cls, onset, dur = config.anomaly_class, config.anomaly_onset_frame, config.anomaly_duration
    if cls is not None:
        me, other = _anomaly_roles(cls, rng)
    for t in range(1, T):
        if cls is not None and t == onset:
            script = _Script(cls, me, other, cars, road, dur, rng)
        commands = {}
        for i in range(len(cars)):
            rng_i = rng if i < n_base else extra_rng
            commands[i] = (*_drive(i, cars, road, rng_i, base_pool if i < n_base else all_pool), 1.0)
        if script is not None and onset <= t < onset + dur:
            commands.update(script.step(t - onset, cars))
        if script is not None and t == onset + dur:
            for i in (me, other):
                cars[i].lane = road.lane_of(cars[i].y)
                cars[i].desired_speed = float(np.clip(cars[i].desired_speed, road.vmin, road.vmax))
        for i, (speed, vy, heading) in commands.items():
            c = cars[i]
            c.speed, c.vy, c.heading = speed, vy, heading
            c.x += heading * speed * config.dt
            c.y = float(np.clip(c.y + vy * config.dt, road.y_min, road.y_max))
        pos[t] = [(c.x, c.y) for c in cars]

    pos -= pos[0, 0]
    labels = frame_labels(T, cls, onset, dur)
    return Scene(config.scene_id, config.dt, pos, labels)


# -------------------------------------------------------------------- datasets

def _scene_seed(base_seed: int, kind: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, kind, index]).generate_state(1)[0])


def anomaly_window(n_frames: int, rng: np.random.Generator) -> tuple[int, int]:
    """Random (onset, duration) that leaves room for both transition frames."""
    lo = max(MIN_ANOMALY_FRAMES, int(round(0.2 * n_frames)))
    hi = max(lo, int(round(0.35 * n_frames)))
    duration = int(rng.integers(lo, hi + 1))
    first = max(1, int(round(0.2 * n_frames)))
    last = n_frames - duration - max(1, int(round(0.1 * n_frames)))
    if last < first:
        raise ValueError(f"scenes of {n_frames} frames are too short for an anomaly window")
    return int(rng.integers(first, last + 1)), duration


def generate_dataset(n_normal: int, n_abnormal_per_class: int, base_seed: int = 0, *,
                     n_abnormal: int | None = None, n_agents: int = 2, duration_frames: int = 150,
                     classes: tuple[str, ...] = ANOMALY_CLASSES,
                     **scenario) -> tuple[list[Scene], list[Scene]]:
    """Train (normal only) and test (normal + abnormal) scenes.

    The test set holds as many normal scenes as abnormal ones. Abnormal scenes
    cycle through ``classes``; ``n_abnormal`` overrides the per-class count
    with a total. Training scenes always have two agents; ``n_agents`` applies
    to the test scenes (the base pair is identical across agent counts).
    """
    if n_normal < 0 or n_abnormal_per_class < 0:
        raise ValueError("counts must be >= 0")
    total_abnormal = n_abnormal if n_abnormal is not None else n_abnormal_per_class * len(classes)
    n_test_normal = total_abnormal
    pool = [
        ScenarioConfig(seed=_scene_seed(base_seed, 0, k), n_agents=2, duration_frames=duration_frames, **scenario)
        for k in range(n_normal + n_test_normal)
    ]
    order = np.random.default_rng(_scene_seed(base_seed, 2, 0)).permutation(len(pool))
    train_cfgs = [pool[k] for k in sorted(order[:n_normal])]
    test_cfgs = [replace(pool[k], n_agents=n_agents) for k in sorted(order[n_normal:])]
    for k in range(total_abnormal):
        seed = _scene_seed(base_seed, 1, k)
        onset, duration = anomaly_window(duration_frames, np.random.default_rng(seed))
        test_cfgs.append(ScenarioConfig(seed=seed, n_agents=n_agents, duration_frames=duration_frames,
                                        anomaly_class=classes[k % len(classes)], anomaly_onset_frame=onset,
                                        anomaly_duration=duration, **scenario))
    train = [generate_scene(replace(c, scene_id=f"scene_{i:04d}")) for i, c in enumerate(train_cfgs)]
    test = [generate_scene(replace(c, scene_id=f"scene_{len(train) + i:04d}")) for i, c in enumerate(test_cfgs)]
    return train, test


# ------------------------------------------------------------------------- I/O

def labels_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name[:-4] + ".labels.csv" if path.name.endswith(".csv") else path.name + ".labels.csv")


def write_scene(scene: Scene, path: str | os.PathLike, labels: bool = True) -> None:
    """Scene as text: header ``scene_id,dt,N,T`` then ``frame,agent,x,y`` rows."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"{scene.scene_id},{scene.dt!r},{scene.n_agents},{scene.n_frames}\n")
        for t in range(scene.n_frames):
            for i in range(scene.n_agents):
                x, y = scene.positions[t, i]
                fh.write(f"{t},{i},{float(x)!r},{float(y)!r}\n")
    if labels:
        with open(labels_path(path), "w", newline="") as fh:
            fh.write("frame,state,anomaly_class\n")
            for t, lab in enumerate(scene.labels):
                fh.write(f"{t},{lab.state},{lab.anomaly_class or ''}\n")


def _field(raw: str, convert, lineno: int, name: str):
    try:
        return convert(raw)
    except (TypeError, ValueError):
        raise SceneFormatError(f"line {lineno}, field {name!r}: cannot parse {raw!r}") from None


def read_scene(path: str | os.PathLike) -> Scene:
    """Inverse of ``write_scene``. Missing label files mean an all-normal scene."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise SceneFormatError(f"{path}: no frames")
    head = lines[0].split(",")
    if len(head) != 4:
        raise SceneFormatError(f"line 1: header needs scene_id,dt,N,T, got {len(head)} fields")
    scene_id = head[0]
    dt = _field(head[1], float, 1, "dt")
    n = _field(head[2], int, 1, "N")
    T = _field(head[3], int, 1, "T")
    if len(lines) == 1 or T < 1:
        raise SceneFormatError(f"{path}: no frames")
    pos = np.full((T, n, 2), np.nan)
    counts = np.zeros(n, dtype=int)
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise SceneFormatError(f"line {lineno}: expected 4 fields (frame,agent,x,y), got {len(parts)}")
        t = _field(parts[0], int, lineno, "frame")
        i = _field(parts[1], int, lineno, "agent")
        x = _field(parts[2], float, lineno, "x")
        y = _field(parts[3], float, lineno, "y")
        if not 0 <= i < n:
            raise SceneFormatError(f"line {lineno}, field 'agent': {i} outside 0..{n - 1}")
        if not 0 <= t < T:
            raise SceneFormatError(f"line {lineno}, field 'frame': {t} outside 0..{T - 1}")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise SceneFormatError(f"line {lineno}: non-finite position")
        pos[t, i] = (x, y)
        counts[i] += 1
    if np.any(counts != T):
        bad = int(np.flatnonzero(counts != T)[0])
        raise SceneFormatError(f"{path}: trajectory lengths differ (agent {bad} has {counts[bad]} frames, "
                               f"expected {T})")
    if np.isnan(pos).any():
        raise SceneFormatError(f"{path}: duplicated frame rows")

    labels = [FrameLabel()] * T
    lpath = labels_path(path)
    if lpath.exists():
        labels = _read_labels(lpath, T)
    try:
        return Scene(scene_id, dt, pos, labels)
    except ValueError as exc:
        raise SceneFormatError(f"{path}: {exc}") from None


def _read_labels(path: Path, T: int) -> list[FrameLabel]:
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0] != ["frame", "state", "anomaly_class"]:
        raise SceneFormatError(f"{path}: line 1: expected header frame,state,anomaly_class")
    labels: list[FrameLabel | None] = [None] * T
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise SceneFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
        t = _field(row[0], int, lineno, "frame")
        if not 0 <= t < T:
            raise SceneFormatError(f"{path}: line {lineno}, field 'frame': {t} outside 0..{T - 1}")
        try:
            labels[t] = FrameLabel(row[1], row[2] or None)
        except ValueError as exc:
            raise SceneFormatError(f"{path}: line {lineno}, field 'state': {exc}") from None
    if any(lab is None for lab in labels):
        raise SceneFormatError(f"{path}: labels missing for some frames")
    return labels  # type: ignore[return-value]


MANIFEST_FIELDS = ("scene_id", "split", "anomaly_class", "n_agents", "n_frames")


def write_dataset(root: str | os.PathLike, train: list[Scene], test: list[Scene], force: bool = False) -> Path:
    """Write ``train/``, ``test/`` and ``manifest.csv`` under ``root``."""
    root = Path(root)
    if root.exists() and any(root.iterdir()) and not force:
        raise FileExistsError(f"{root} exists and is not empty (use force to overwrite)")
    for split in ("train", "test"):
        (root / split).mkdir(parents=True, exist_ok=True)
        for old in (root / split).glob("scene_*.csv"):
            old.unlink()
    rows = []
    for split, scenes in (("train", train), ("test", test)):
        for s in scenes:
            write_scene(s, root / split / f"{s.scene_id}.csv", labels=(split == "test"))
            rows.append((s.scene_id, split, s.anomaly_class or "none", s.n_agents, s.n_frames))
    with open(root / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        w.writerows(rows)
    return root


def read_manifest(root: str | os.PathLike) -> list[dict[str, str]]:
    path = Path(root) / "manifest.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (run the 'generate' command first)")
    with open(path) as fh:
        return list(csv.DictReader(fh))


def read_split(root: str | os.PathLike, split: str) -> list[Scene]:
    rows = [r for r in read_manifest(root) if r["split"] == split]
    return [read_scene(Path(root) / split / f"{r['scene_id']}.csv") for r in rows]


def read_dataset(root: str | os.PathLike) -> tuple[list[Scene], list[Scene]]:
    return read_split(root, "train"), read_split(root, "test")
