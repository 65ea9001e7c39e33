"""Scene geometry: base station, scatterers and lap trajectories."""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class Scenario(str, enum.Enum):
    LOS = "LoS"
    NLOS = "NLoS"


class Pattern(str, enum.Enum):
    CLOCKWISE = "Clockwise"
    CLOCKWISE_RANDOM = "ClockwiseRandom"
    ANTICLOCKWISE = "Anticlockwise"
    ANTICLOCKWISE_RANDOM = "AnticlockwiseRandom"

    @property
    def clockwise(self) -> bool:
        return self in (Pattern.CLOCKWISE, Pattern.CLOCKWISE_RANDOM)

    @property
    def random(self) -> bool:
        return self in (Pattern.CLOCKWISE_RANDOM, Pattern.ANTICLOCKWISE_RANDOM)


ALL_PATTERNS = tuple(Pattern)

DEFAULT_WAYPOINTS = ((0.0, 0.0), (120.0, 0.0), (120.0, 80.0), (0.0, 80.0))
DEFAULT_SCATTERERS = (
    (-25.0, 15.0, 8.0),
    (150.0, 25.0, 12.0),
    (55.0, 115.0, 15.0),
    (-15.0, 105.0, 6.0),
    (140.0, 100.0, 10.0),
    (95.0, -20.0, 5.0),
)


@dataclass
class ScenarioConfig:
    scenario: Scenario = Scenario.LOS
    bs_position: tuple[float, float, float] = (60.0, -40.0, 20.0)
    path_height: float = 10.0
    lap_waypoints: list[tuple[float, float]] = field(default_factory=lambda: list(DEFAULT_WAYPOINTS))
    speed: float = 5.0
    sample_interval: float = 0.02
    jitter_amplitude: float = 2.0
    scatterers: list[tuple[float, float, float]] = field(default_factory=lambda: list(DEFAULT_SCATTERERS))
    rng_seed: int = 0
    # lowpass of the lateral jitter: moving-average window and number of passes
    jitter_window: float = 4.0
    jitter_passes: int = 3
    # distance over which jitter fades out towards each waypoint
    jitter_taper: float = 5.0
    # random patterns start this fraction of a lap further along their route
    random_start_offset: float = 0.25

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        self.bs_position = tuple(float(v) for v in self.bs_position)
        self.lap_waypoints = [tuple(float(v) for v in w) for w in self.lap_waypoints]
        self.scatterers = [tuple(float(v) for v in s) for s in self.scatterers]

    @classmethod
    def default(cls, scenario: Scenario | str = Scenario.LOS, **overrides) -> "ScenarioConfig":
        """LoS runs on the 10 m garage deck, NLoS at ground level."""
        scenario = Scenario(scenario)
        height = 10.0 if scenario is Scenario.LOS else 0.0
        return cls(scenario=scenario, path_height=height, **overrides)

    def validate(self) -> None:
        if self.speed <= 0:
            raise ValueError(f"speed must be > 0, got {self.speed}")
        if self.sample_interval <= 0:
            raise ValueError(f"sample_interval must be > 0, got {self.sample_interval}")
        if self.jitter_amplitude < 0:
            raise ValueError(f"jitter_amplitude must be >= 0, got {self.jitter_amplitude}")
        if not 0.0 <= self.random_start_offset < 1.0:
            raise ValueError(f"random_start_offset must be in [0, 1), got {self.random_start_offset}")
        if len(self.bs_position) != 3:
            raise ValueError("bs_position needs 3 coordinates")
        loop = _loop_vertices(self.lap_waypoints)
        if len(loop) < 3:
            raise ValueError("degenerate loop: need at least 3 distinct waypoints")

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the base loop."""
        w = np.asarray(self.lap_waypoints, dtype=float)
        return float(w[:, 0].min()), float(w[:, 0].max()), float(w[:, 1].min()), float(w[:, 1].max())

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario"] = self.scenario.value
        d["bs_position"] = list(self.bs_position)
        d["lap_waypoints"] = [list(w) for w in self.lap_waypoints]
        d["scatterers"] = [list(s) for s in self.scatterers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        scenario = Scenario(d.pop("scenario", Scenario.LOS))
        if "path_height" not in d:
            d["path_height"] = 10.0 if scenario is Scenario.LOS else 0.0
        return cls(scenario=scenario, **d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    heading: float
    t: float


@dataclass
class Lap:
    pattern: Pattern
    poses: list[Pose]

    def as_array(self) -> np.ndarray:
        """(n, 5) array of t, x, y, z, heading."""
        return np.array([(p.t, p.x, p.y, p.z, p.heading) for p in self.poses], dtype=float).reshape(-1, 5)


@dataclass
class UserTrack:
    user: int
    pattern: Pattern
    poses: list[Pose]


def _loop_vertices(waypoints: Sequence[Sequence[float]]) -> np.ndarray:
    w = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(w) > 1 and np.allclose(w[0], w[-1]):
        w = w[:-1]
    # drop consecutive duplicates
    keep = [0]
    for k in range(1, len(w)):
        if not np.allclose(w[k], w[keep[-1]]):
            keep.append(k)
    return w[keep]


def signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def oriented_loop(waypoints, clockwise: bool) -> np.ndarray:
    """Loop vertices starting at the first waypoint, in the requested direction.

    Clockwise is taken in the map frame (x east, y north).
    """
    v = _loop_vertices(waypoints)
    is_cw = signed_area(v) < 0
    if is_cw != clockwise:
        v = np.vstack([v[:1], v[:0:-1]])
    return v


def normalize_heading(deg):
    """Wrap degrees to [0, 360)."""
    h = np.mod(deg, 360.0)
    # np.mod can return 360.0 for tiny negative inputs
    return np.where(h >= 360.0, 0.0, h) if isinstance(h, np.ndarray) else (0.0 if h >= 360.0 else float(h))


def course_over_ground(dx, dy):
    """Heading in degrees clockwise from north (+y) for a motion vector."""
    return normalize_heading(np.degrees(np.arctan2(dx, dy)))


def _lowpass(noise: np.ndarray, window: int, passes: int) -> np.ndarray:
    out = noise
    if window <= 1:
        return out
    kernel = np.ones(window) / window
    n = len(out)
    for _ in range(passes):
        # circular so the lap closes smoothly
        padded = np.concatenate([out[-window:], out, out[:window]])
        out = np.convolve(padded, kernel, mode="same")[window:window + n]
    return out


def generate_trajectory(cfg: ScenarioConfig, pattern: Pattern | str) -> Lap:
    """Sample one lap at constant speed every ``sample_interval`` seconds."""
    cfg.validate()
    pattern = Pattern(pattern)
    verts = oriented_loop(cfg.lap_waypoints, pattern.clockwise)
    seg_vec = np.roll(verts, -1, axis=0) - verts
    seg_len = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
    perimeter = float(seg_len.sum())
    if perimeter <= 1e-9:
        raise ValueError("degenerate loop: zero perimeter")
    step = cfg.speed * cfg.sample_interval
    n = int(math.ceil(perimeter / step - 1e-9))
    s = np.arange(n) * step
    if pattern.random and cfg.random_start_offset > 0:
        s = np.mod(s + cfg.random_start_offset * perimeter, perimeter)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    seg = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1)
    frac = (s - cum[seg]) / seg_len[seg]
    tangent = seg_vec[seg] / seg_len[seg][:, None]
    xy = verts[seg] + frac[:, None] * seg_vec[seg]
    # left-hand normal of travel direction
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
    direction = tangent.copy()

    if pattern.random and cfg.jitter_amplitude > 0:
        seed = [cfg.rng_seed, ALL_PATTERNS.index(pattern)]
        rng = np.random.default_rng(seed)
        window = max(1, int(round(cfg.jitter_window / cfg.sample_interval)))
        smooth = _lowpass(rng.standard_normal(n), window, cfg.jitter_passes)
        std = smooth.std()
        offset = smooth / std * (0.5 * cfg.jitter_amplitude) if std > 0 else np.zeros(n)
        offset = np.clip(offset, -cfg.jitter_amplitude, cfg.jitter_amplitude)
        to_vertex = np.minimum(s - cum[seg], cum[seg + 1] - s)
        if cfg.jitter_taper > 0:
            offset = offset * np.minimum(1.0, to_vertex / cfg.jitter_taper)
        xy = xy + offset[:, None] * normal
        slope = np.gradient(np.concatenate([offset[-1:], offset, offset[:1]]), step)[1:-1]
        direction = tangent + slope[:, None] * normal

    heading = course_over_ground(direction[:, 0], direction[:, 1])
    t = np.arange(n) * cfg.sample_interval
    poses = [
        Pose(float(xy[k, 0]), float(xy[k, 1]), float(cfg.path_height), float(heading[k]), float(t[k]))
        for k in range(n)
    ]
    return Lap(pattern=pattern, poses=poses)


def generate_laps(cfg: ScenarioConfig, patterns: Iterable[Pattern] = ALL_PATTERNS) -> list[Lap]:
    return [generate_trajectory(cfg, p) for p in patterns]


def split_virtual_users(laps: Sequence[Lap]) -> list[UserTrack]:
    """Split each lap at its midpoint into two users; the first half keeps the odd sample."""
    users = []
    for k, lap in enumerate(laps):
        half = (len(lap.poses) + 1) // 2
        users.append(UserTrack(2 * k, lap.pattern, list(lap.poses[:half])))
        users.append(UserTrack(2 * k + 1, lap.pattern, list(lap.poses[half:])))
    return users


def lateral_deviation(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Distance of each point to the closed polyline through ``verts``."""
    a = verts
    b = np.roll(verts, -1, axis=0)
    ab = b - a
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nsk,sk->ns", ap, ab) / np.einsum("sk,sk->s", ab, ab), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.min(np.linalg.norm(points[:, None, :] - closest, axis=2), axis=1)


TRAJECTORY_HEADER = ["t", "x", "y", "z", "heading", "user", "pattern"]


def write_trajectories_csv(path: str | Path, users: Sequence[UserTrack]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for u in users:
            for p in u.poses:
                w.writerow([repr(p.t), repr(p.x), repr(p.y), repr(p.z), repr(p.heading), u.user, u.pattern.value])


def read_trajectories_csv(path: str | Path) -> list[UserTrack]:
    tracks: dict[int, UserTrack] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            user = int(row["user"])
            if user not in tracks:
                tracks[user] = UserTrack(user, Pattern(row["pattern"]), [])
            tracks[user].poses.append(
                Pose(float(row["x"]), float(row["y"]), float(row["z"]), float(row["heading"]), float(row["t"]))
            )
    return [tracks[k] for k in sorted(tracks)]
