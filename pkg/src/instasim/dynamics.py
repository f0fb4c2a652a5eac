"""Kinematic bicycle model, per-step state update, and termination checks.

The simulation advances synchronously: all alive agents move first, then
collision, off-track, and route-end checks run on the joint new state.
Terminated agents are absorbing; their state is never updated again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import AnchorPose, normalize_angle, rects_overlap
from .scene import AgentFeatures, Route, Scenario

ACCEL_MIN_MPS2 = -8.0
ACCEL_MAX_MPS2 = 5.0
STEER_MAX_RAD = 0.55

TERMINATION_NONE = "none"
TERMINATION_COLLISION = "collision"
TERMINATION_OFF_TRACK = "off_track"
TERMINATION_FINISHED = "finished"


@dataclass(frozen=True)
class Action:
    accel: float
    steer: float

    def clamped(self) -> "Action":
        return Action(
            accel=min(max(self.accel, ACCEL_MIN_MPS2), ACCEL_MAX_MPS2),
            steer=min(max(self.steer, -STEER_MAX_RAD), STEER_MAX_RAD),
        )

    def as_tuple(self) -> tuple[float, float]:
        return (self.accel, self.steer)


def clamp_action_array(actions: np.ndarray) -> np.ndarray:
    """Clamp an (N, 2) array of (accel, steer) to the executable bounds."""
    out = np.array(actions, dtype=np.float64, copy=True)
    out[:, 0] = np.clip(out[:, 0], ACCEL_MIN_MPS2, ACCEL_MAX_MPS2)
    out[:, 1] = np.clip(out[:, 1], -STEER_MAX_RAD, STEER_MAX_RAD)
    return out


@dataclass(frozen=True)
class AgentState:
    pose: AnchorPose
    speed: float
    features: AgentFeatures
    route_id: int
    alive: bool = True
    termination: str = TERMINATION_NONE

    def current_features(self) -> AgentFeatures:
        return self.features.with_speed(self.speed)


@dataclass(frozen=True)
class StepEvent:
    agent_index: int
    cause: str
    step: int


@dataclass(frozen=True)
class StepOutcome:
    states: tuple[AgentState, ...]
    events: tuple[StepEvent, ...]


def initial_states(scenario: Scenario) -> tuple[AgentState, ...]:
    return tuple(AgentState(pose=a.pose, speed=a.speed, features=a.features,
                            route_id=a.route_id)
                 for a in scenario.agents)


def bicycle_step(state: AgentState, action: Action, dt: float) -> AgentState:
    """Center-referenced kinematic bicycle with slip angle, forward Euler.

    Wheelbase is 0.6 x vehicle length; speed is clamped at zero (no reverse).
    """
    if not state.alive:
        raise ValueError("bicycle_step on a terminated agent")
    if dt <= 0:
        raise ValueError("dt must be positive")
    act = action.clamped()
    wheelbase = 0.6 * state.features.length
    v = state.speed
    theta = state.pose.heading
    beta = math.atan(0.5 * math.tan(act.steer))
    x = state.pose.x + v * math.cos(theta + beta) * dt
    y = state.pose.y + v * math.sin(theta + beta) * dt
    theta = normalize_angle(
        theta + v * math.cos(beta) * math.tan(act.steer) / wheelbase * dt)
    v = max(0.0, v + act.accel * dt)
    return replace(state, pose=AnchorPose(x, y, theta), speed=v)


class RoutePath:
    """Concatenated route centerline with curvilinear projection."""

    def __init__(self, points: np.ndarray, corridor_halfwidth: float):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or len(pts) < 2:
            raise ValueError("route path needs at least two points")
        self.points = pts
        self.corridor_halfwidth = float(corridor_halfwidth)
        seg = np.diff(pts, axis=0)
        self._seg = seg
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self._seg_len < 1e-12):
            raise ValueError("route path has zero-length segments")
        self.cum_len = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.total_length = float(self.cum_len[-1])
        end_dir = seg[-1] / self._seg_len[-1]
        self._end_point = pts[-1]
        self._end_dir = end_dir

    @classmethod
    def for_route(cls, scenario: Scenario, route_id: int) -> "RoutePath":
        route = scenario.route_by_id(route_id)
        return cls(scenario.route_points(route_id), route.corridor_halfwidth)

    def project(self, point: np.ndarray) -> tuple[float, float]:
        """(arc length, lateral distance) of the nearest point on the chain."""
        p = np.asarray(point, dtype=np.float64)
        rel = p - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg) / np.square(self._seg_len)
        t = np.clip(t, 0.0, 1.0)
        closest = self.points[:-1] + t[:, None] * self._seg
        d = np.hypot(closest[:, 0] - p[0], closest[:, 1] - p[1])
        i = int(np.argmin(d))
        s = float(self.cum_len[i] + t[i] * self._seg_len[i])
        return s, float(d[i])

    def pose_at(self, s: float) -> AnchorPose:
        """Point and tangent heading at arc length ``s`` (clamped to range)."""
        s = min(max(s, 0.0), self.total_length)
        i = int(np.searchsorted(self.cum_len, s, side="right") - 1)
        i = min(i, len(self._seg_len) - 1)
        t = (s - self.cum_len[i]) / self._seg_len[i]
        point = self.points[i] + t * self._seg[i]
        heading = math.atan2(self._seg[i][1], self._seg[i][0])
        return AnchorPose(float(point[0]), float(point[1]), heading)

    def past_end(self, point: np.ndarray) -> bool:
        """True once the point has passed the route's final vertex."""
        p = np.asarray(point, dtype=np.float64)
        return float(np.dot(p - self._end_point, self._end_dir)) >= 0.0


def build_route_paths(scenario: Scenario) -> dict[int, RoutePath]:
    return {r.route_id: RoutePath.for_route(scenario, r.route_id)
            for r in scenario.routes}


def check_collision(states: list[AgentState] | tuple[AgentState, ...]) -> list[tuple[int, int]]:
    """All unordered pairs of alive agents whose oriented rectangles overlap."""
    pairs = []
    n = len(states)
    for i in range(n):
        a = states[i]
        if not a.alive:
            continue
        pa = (a.pose.x, a.pose.y, a.pose.heading)
        sa = (a.features.length, a.features.width)
        for j in range(i + 1, n):
            b = states[j]
            if not b.alive:
                continue
            if rects_overlap(pa, sa, (b.pose.x, b.pose.y, b.pose.heading),
                             (b.features.length, b.features.width)):
                pairs.append((i, j))
    return pairs


def check_off_track(state: AgentState, route: Route, polylines=None,
                    path: RoutePath | None = None,
                    scenario: Scenario | None = None) -> bool:
    """True iff the agent center is laterally outside the route corridor.

    The boundary is inclusive: exactly at the corridor halfwidth is on-road.
    Accepts either a prebuilt ``path`` or (route, scenario) to build one.
    """
    if path is None:
        if scenario is None:
            raise ValueError("check_off_track needs a RoutePath or a scenario")
        path = RoutePath.for_route(scenario, route.route_id)
    _, lateral = path.project(np.array([state.pose.x, state.pose.y]))
    return lateral > path.corridor_halfwidth


def simulation_step(scenario: Scenario, states: tuple[AgentState, ...],
                    actions: list[Action], step_index: int = 0,
                    route_paths: dict[int, RoutePath] | None = None) -> StepOutcome:
    """Advance all alive agents synchronously, then run termination checks.

    ``actions`` carries exactly one Action per alive agent, in agent-index
    order.  Termination causes are prioritized collision > off_track >
    finished; an agent receives only its first cause.
    """
    alive_idx = [i for i, s in enumerate(states) if s.alive]
    if len(actions) != len(alive_idx):
        raise ValueError(
            f"got {len(actions)} actions for {len(alive_idx)} alive agents")
    if route_paths is None:
        route_paths = build_route_paths(scenario)

    new_states: list[AgentState] = list(states)
    for i, act in zip(alive_idx, actions):
        new_states[i] = bicycle_step(states[i], act, scenario.dt)

    causes: dict[int, str] = {}
    for i, j in check_collision([new_states[i] if s.alive else s
                                 for i, s in enumerate(states)
                                 for _ in [0]] if False else
                                [new_states[k] if states[k].alive else states[k]
                                 for k in range(len(states))]):
        causes.setdefault(i, TERMINATION_COLLISION)
        causes.setdefault(j, TERMINATION_COLLISION)

    for i in alive_idx:
        if i in causes:
            continue
        st = new_states[i]
        path = route_paths[st.route_id]
        pos = np.array([st.pose.x, st.pose.y])
        if path.past_end(pos):
            causes[i] = TERMINATION_FINISHED
        elif check_off_track(st, scenario.route_by_id(st.route_id), path=path):
            causes[i] = TERMINATION_OFF_TRACK

    events = []
    for i in sorted(causes):
        if not states[i].alive:
            continue
        new_states[i] = replace(new_states[i], alive=False, termination=causes[i])
        events.append(StepEvent(agent_index=i, cause=causes[i], step=step_index))
    return StepOutcome(states=tuple(new_states), events=tuple(events))
