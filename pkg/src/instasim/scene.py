"""Vectorized map and scenario model: polylines, routes, agents, file format.

Map elements are approximated by polylines of at most 10 m total length, each
carrying its own anchor frame (origin at the mean of its points, x-axis along
the first-to-last chord).  Vector coordinates are stored in the anchor frame,
which is what makes the encoded map tokens independent of the global frame.

Scenarios are immutable after construction and safe to share across rollout
workers.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import AnchorPose, normalize_angle

ELEMENT_TYPES = ("lane_boundary", "road_edge", "crossing", "centerline")

MAX_POLYLINE_LENGTH_M = 10.0

# start/end (2+2) plus one-hot element type
VECTOR_FEATURE_DIM = 4 + len(ELEMENT_TYPES)

DEFAULT_DT_S = 0.2
DEFAULT_HORIZON_STEPS = 50
DEFAULT_CORRIDOR_HALFWIDTH_M = 2.0
DEFAULT_SPEED_LIMIT_MPS = 13.9


class ScenarioSchemaError(ValueError):
    """Raised when a scenario file violates the schema; names the field."""

    def __init__(self, fieldname: str, message: str):
        self.fieldname = fieldname
        super().__init__(f"scenario field {fieldname!r}: {message}")


@dataclass(frozen=True)
class PolylineVector:
    """One directed segment of a polyline, in the polyline's local frame."""

    start: tuple[float, float]
    end: tuple[float, float]
    element_type: str

    def __post_init__(self):
        if self.element_type not in ELEMENT_TYPES:
            raise ValueError(f"unknown element type {self.element_type!r}")
        if self.length <= 0.0:
            raise ValueError("polyline vector must have positive length")

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def type_onehot(self) -> np.ndarray:
        onehot = np.zeros(len(ELEMENT_TYPES))
        onehot[ELEMENT_TYPES.index(self.element_type)] = 1.0
        return onehot


@dataclass(frozen=True)
class Polyline:
    """A chained sequence of vectors with its own anchor frame."""

    poly_id: int
    element_type: str
    anchor: AnchorPose
    local_points: tuple[tuple[float, float], ...]  # chained, len = n_vectors + 1

    def __post_init__(self):
        if len(self.local_points) < 2:
            raise ValueError("polyline needs at least 2 points")
        total = self.total_length
        if total <= 0.0:
            raise ValueError("polyline must have positive length")
        if total > MAX_POLYLINE_LENGTH_M + 1e-6:
            raise ValueError(
                f"polyline length {total:.3f} m exceeds the {MAX_POLYLINE_LENGTH_M} m cap")
        for (ax, ay), (bx, by) in zip(self.local_points, self.local_points[1:]):
            if math.hypot(bx - ax, by - ay) <= 0.0:
                raise ValueError("polyline contains a zero-length vector")

    @property
    def vectors(self) -> tuple[PolylineVector, ...]:
        return tuple(PolylineVector(a, b, self.element_type)
                     for a, b in zip(self.local_points, self.local_points[1:]))

    @property
    def n_vectors(self) -> int:
        return len(self.local_points) - 1

    @property
    def total_length(self) -> float:
        return sum(math.hypot(b[0] - a[0], b[1] - a[1])
                   for a, b in zip(self.local_points, self.local_points[1:]))

    def global_points(self) -> np.ndarray:
        return self.anchor.to_global(np.asarray(self.local_points, dtype=np.float64))

    def feature_matrix(self) -> np.ndarray:
        """(n_vectors, 8) float32 rows of [start, end, type one-hot], local frame."""
        pts = np.asarray(self.local_points, dtype=np.float64)
        feats = np.zeros((self.n_vectors, VECTOR_FEATURE_DIM), dtype=np.float32)
        feats[:, 0:2] = pts[:-1]
        feats[:, 2:4] = pts[1:]
        feats[:, 4 + ELEMENT_TYPES.index(self.element_type)] = 1.0
        return feats

    @classmethod
    def from_global_points(cls, points: np.ndarray, element_type: str,
                           poly_id: int) -> "Polyline":
        """Build a polyline, deriving the anchor from the global point chain.

        Anchor origin is the mean of the distinct points; heading is the
        first-to-last chord direction (falls back to the first segment
        direction for closed chains).
        """
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("need at least two 2-D points")
        distinct = [pts[0]]
        for p in pts[1:]:
            if not np.allclose(p, distinct[-1], rtol=0.0, atol=1e-12):
                distinct.append(p)
        distinct = np.asarray(distinct)
        if len(distinct) < 2:
            raise ValueError("polyline points are all coincident")
        centroid = distinct.mean(axis=0)
        chord = distinct[-1] - distinct[0]
        if np.hypot(*chord) < 1e-9:
            chord = distinct[1] - distinct[0]
        anchor = AnchorPose(float(centroid[0]), float(centroid[1]),
                            math.atan2(chord[1], chord[0]))
        local = anchor.to_local(distinct)
        return cls(poly_id=poly_id, element_type=element_type, anchor=anchor,
                   local_points=tuple((float(x), float(y)) for x, y in local))


@dataclass(frozen=True)
class AgentFeatures:
    """Observable per-agent features; pose lives in the anchor, not here."""

    width: float
    length: float
    speed: float
    speed_limit: float
    vru_flag: int

    def __post_init__(self):
        if self.width <= 0 or self.length <= 0:
            raise ValueError("agent size must be positive")
        if self.speed < 0:
            raise ValueError("agent speed must be non-negative")
        if self.speed_limit <= 0:
            raise ValueError("speed limit must be positive")
        if self.vru_flag not in (0, 1):
            raise ValueError("vru_flag must be 0 or 1")

    def with_speed(self, speed: float) -> "AgentFeatures":
        return replace(self, speed=max(0.0, speed))

    def as_array(self) -> np.ndarray:
        return np.array([self.width, self.length, self.speed,
                         self.speed_limit, self.vru_flag], dtype=np.float32)


AGENT_FEATURE_DIM = 5


@dataclass(frozen=True)
class Route:
    """Ordered centerline polylines an agent should follow."""

    route_id: int
    polyline_ids: tuple[int, ...]
    corridor_halfwidth: float = DEFAULT_CORRIDOR_HALFWIDTH_M

    def __post_init__(self):
        if not self.polyline_ids:
            raise ValueError("route must reference at least one polyline")
        if self.corridor_halfwidth <= 0:
            raise ValueError("corridor halfwidth must be positive")


@dataclass(frozen=True)
class AgentSpawn:
    features: AgentFeatures
    pose: AnchorPose
    speed: float
    route_id: int

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("initial speed must be non-negative")


@dataclass(frozen=True)
class ExpertTrajectory:
    """Recorded scripted-expert motion: poses per step plus executed actions."""

    agent_index: int
    poses: tuple[tuple[float, float, float], ...]   # length n_steps + 1
    speeds: tuple[float, ...]                        # length n_steps + 1
    actions: tuple[tuple[float, float], ...]         # length n_steps

    def __post_init__(self):
        if len(self.poses) != len(self.speeds) or len(self.poses) != len(self.actions) + 1:
            raise ValueError("expert trajectory arrays are misaligned")

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    def positions(self) -> np.ndarray:
        return np.asarray(self.poses, dtype=np.float64)[:, :2]


@dataclass(frozen=True)
class Scenario:
    """One simulation unit: map, routes, spawns, optional expert data."""

    dt: float
    horizon: int
    seed: int
    polylines: tuple[Polyline, ...]
    routes: tuple[Route, ...]
    agents: tuple[AgentSpawn, ...]
    expert: tuple[ExpertTrajectory, ...] = ()

    def __post_init__(self):
        validate_scenario(self)

    def polyline_by_id(self, poly_id: int) -> Polyline:
        return self._poly_index[poly_id]

    @functools.cached_property
    def _poly_index(self) -> dict[int, Polyline]:
        return {p.poly_id: p for p in self.polylines}

    def route_by_id(self, route_id: int) -> Route:
        for r in self.routes:
            if r.route_id == route_id:
                return r
        raise KeyError(f"no route {route_id}")

    def route_points(self, route_id: int) -> np.ndarray:
        """Concatenated global centerline points of a route, deduplicated."""
        pts: list[np.ndarray] = []
        for pid in self.route_by_id(route_id).polyline_ids:
            gp = self.polyline_by_id(pid).global_points()
            if pts and np.allclose(pts[-1], gp[0], atol=1e-9):
                gp = gp[1:]
            pts.extend(gp)
        return np.asarray(pts, dtype=np.float64)


def validate_scenario(s: Scenario) -> None:
    from .geometry import rects_overlap  # local import; geometry stays light

    if s.dt <= 0:
        raise ScenarioSchemaError("meta.dt", "must be positive")
    if s.horizon < 1:
        raise ScenarioSchemaError("meta.horizon", "must be at least 1")
    poly_ids = {p.poly_id for p in s.polylines}
    if len(poly_ids) != len(s.polylines):
        raise ScenarioSchemaError("polylines", "duplicate polyline ids")
    route_ids = set()
    for r in s.routes:
        if r.route_id in route_ids:
            raise ScenarioSchemaError("routes", f"duplicate route id {r.route_id}")
        route_ids.add(r.route_id)
        for pid in r.polyline_ids:
            if pid not in poly_ids:
                raise ScenarioSchemaError(
                    "routes", f"route {r.route_id} references unknown polyline {pid}")
    for i, a in enumerate(s.agents):
        if a.route_id not in route_ids:
            raise ScenarioSchemaError(f"agents[{i}].route_id",
                                      f"unknown route {a.route_id}")
    for i, a in enumerate(s.agents):
        for j in range(i + 1, len(s.agents)):
            b = s.agents[j]
            if rects_overlap((a.pose.x, a.pose.y, a.pose.heading),
                             (a.features.length, a.features.width),
                             (b.pose.x, b.pose.y, b.pose.heading),
                             (b.features.length, b.features.width)):
                raise ScenarioSchemaError(
                    f"agents[{j}]", f"initial rectangle overlaps agent {i}")


# -- operations ---------------------------------------------------------------

def split_map_element(points: np.ndarray, max_len: float,
                      element_type: str = "centerline",
                      start_id: int = 0) -> list[Polyline]:
    """Split a point chain into polylines of at most ``max_len`` total length.

    Cuts fall at exact arc-length multiples, so the concatenated output
    reproduces the input geometry with cut points inserted.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points")
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    if max_len > MAX_POLYLINE_LENGTH_M:
        raise ValueError(f"max_len exceeds the {MAX_POLYLINE_LENGTH_M} m polyline cap")

    chains: list[list[np.ndarray]] = []
    cur: list[np.ndarray] = [pts[0]]
    used = 0.0
    a = pts[0]
    for nxt in pts[1:]:
        seg = nxt - a
        seg_len = float(np.hypot(*seg))
        if seg_len < 1e-12:
            continue
        while used + seg_len > max_len + 1e-9:
            room = max_len - used
            cut = a + seg * (room / seg_len)
            cur.append(cut)
            chains.append(cur)
            cur = [cut]
            used = 0.0
            a = cut
            seg = nxt - a
            seg_len = float(np.hypot(*seg))
        if seg_len >= 1e-12:
            cur.append(nxt)
            used += seg_len
        a = nxt
    if len(cur) >= 2:
        chains.append(cur)
    if not chains:
        raise ValueError("point chain has no extent")
    return [Polyline.from_global_points(np.asarray(chain), element_type, start_id + k)
            for k, chain in enumerate(chains)]


def neighbors_within(target: AnchorPose, anchors: list[AnchorPose] | np.ndarray,
                     radius: float) -> np.ndarray:
    """Indices of anchors within ``radius`` (inclusive) of the target position."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(anchors) == 0:
        return np.empty(0, dtype=np.int64)
    if isinstance(anchors, np.ndarray):
        positions = anchors[:, :2]
    else:
        positions = np.array([[a.x, a.y] for a in anchors], dtype=np.float64)
    d = np.hypot(positions[:, 0] - target.x, positions[:, 1] - target.y)
    return np.flatnonzero(d <= radius).astype(np.int64)


# -- file format ----------------------------------------------------------------

def _require(obj: dict, key: str, parent: str):
    if key not in obj:
        name = f"{parent}.{key}" if parent else key
        raise ScenarioSchemaError(name, "missing required field")
    return obj[key]


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "meta": {"dt": s.dt, "horizon": s.horizon, "seed": s.seed},
        "polylines": [
            {
                "id": p.poly_id,
                "element_type": p.element_type,
                "anchor": [p.anchor.x, p.anchor.y, p.anchor.heading],
                "points": [list(pt) for pt in p.local_points],
            }
            for p in s.polylines
        ],
        "routes": [
            {
                "id": r.route_id,
                "polyline_ids": list(r.polyline_ids),
                "corridor_halfwidth": r.corridor_halfwidth,
            }
            for r in s.routes
        ],
        "agents": [
            {
                "width": a.features.width,
                "length": a.features.length,
                "speed": a.speed,
                "speed_limit": a.features.speed_limit,
                "vru": a.features.vru_flag,
                "pose": [a.pose.x, a.pose.y, a.pose.heading],
                "route_id": a.route_id,
            }
            for a in s.agents
        ],
        "expert": [
            {
                "agent_index": tr.agent_index,
                "poses": [list(p) for p in tr.poses],
                "speeds": list(tr.speeds),
                "actions": [list(a) for a in tr.actions],
            }
            for tr in s.expert
        ],
    }


def scenario_from_dict(doc: dict) -> Scenario:
    meta = _require(doc, "meta", "")
    dt = _require(meta, "dt", "meta")
    horizon = _require(meta, "horizon", "meta")
    seed = _require(meta, "seed", "meta")

    polylines = []
    for i, p in enumerate(_require(doc, "polylines", "")):
        where = f"polylines[{i}]"
        etype = _require(p, "element_type", where)
        if etype not in ELEMENT_TYPES:
            raise ScenarioSchemaError(f"{where}.element_type", f"unknown type {etype!r}")
        ax, ay, ah = _require(p, "anchor", where)
        try:
            polylines.append(Polyline(
                poly_id=_require(p, "id", where),
                element_type=etype,
                anchor=AnchorPose(ax, ay, ah),
                local_points=tuple((float(x), float(y))
                                   for x, y in _require(p, "points", where)),
            ))
        except ValueError as exc:
            raise ScenarioSchemaError(where, str(exc)) from exc

    routes = []
    for i, r in enumerate(_require(doc, "routes", "")):
        where = f"routes[{i}]"
        try:
            routes.append(Route(
                route_id=_require(r, "id", where),
                polyline_ids=tuple(_require(r, "polyline_ids", where)),
                corridor_halfwidth=_require(r, "corridor_halfwidth", where),
            ))
        except ValueError as exc:
            raise ScenarioSchemaError(where, str(exc)) from exc

    agents = []
    for i, a in enumerate(_require(doc, "agents", "")):
        where = f"agents[{i}]"
        px, py, ph = _require(a, "pose", where)
        try:
            feats = AgentFeatures(
                width=_require(a, "width", where),
                length=_require(a, "length", where),
                speed=_require(a, "speed", where),
                speed_limit=_require(a, "speed_limit", where),
                vru_flag=_require(a, "vru", where),
            )
            agents.append(AgentSpawn(
                features=feats,
                pose=AnchorPose(px, py, ph),
                speed=_require(a, "speed", where),
                route_id=_require(a, "route_id", where),
            ))
        except ValueError as exc:
            raise ScenarioSchemaError(where, str(exc)) from exc

    expert = []
    for i, tr in enumerate(doc.get("expert", [])):
        where = f"expert[{i}]"
        try:
            expert.append(ExpertTrajectory(
                agent_index=_require(tr, "agent_index", where),
                poses=tuple(tuple(p) for p in _require(tr, "poses", where)),
                speeds=tuple(_require(tr, "speeds", where)),
                actions=tuple(tuple(a) for a in _require(tr, "actions", where)),
            ))
        except ValueError as exc:
            raise ScenarioSchemaError(where, str(exc)) from exc

    try:
        return Scenario(dt=dt, horizon=horizon, seed=seed,
                        polylines=tuple(polylines), routes=tuple(routes),
                        agents=tuple(agents), expert=tuple(expert))
    except ScenarioSchemaError:
        raise
    except ValueError as exc:
        raise ScenarioSchemaError("scenario", str(exc)) from exc


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s)))


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioSchemaError("document", f"not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)
