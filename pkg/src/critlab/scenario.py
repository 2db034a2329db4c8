"""Scenario objects for elementary adverse driving situations.

One conflict point, three actors on a 1-D route abstraction:

* the ego vehicle approaches the conflict point (position is signed route
  distance, negative before the point, positive after),
* an arriving vehicle approaches on the crossing/merging road at the road's
  speed limit (position is its remaining distance to the point, negative once
  past it),
* a static front vehicle sits on the ego route beyond the point.

A compact test case ``(x_e, v_e, x_a, x_f)`` plus the static part expands into
the full environment state sequence; the environment never reacts to the ego.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

__all__ = [
    "ScenarioType",
    "Light",
    "Property",
    "StaticPart",
    "EgoState",
    "VehicleState",
    "ExtraVehicle",
    "EnvState",
    "Scene",
    "Scenario",
    "TestCase",
    "Goal",
    "HorizonError",
    "WindowUndefinedError",
    "DEFAULT_DT",
    "DEFAULT_D",
    "CAUTIOUS_MARGIN",
    "expand",
    "equivalence_mutations",
    "collision_window",
    "constant_speed_outcome",
    "is_relevant",
    "default_goal",
    "test_case_to_dict",
    "test_case_from_dict",
    "scenario_to_dict",
    "scenario_to_csv",
]

DEFAULT_DT = 0.1  # s
DEFAULT_D = 5.0  # m, critical-zone half-length
CAUTIOUS_MARGIN = 0.5  # m, stop at least this far before the zone
_EXTRA_HORIZON = 10.0  # s of slack after the arriving vehicle clears the zone


class HorizonError(ValueError):
    """Raised when a test case horizon is too short for its geometry."""


class WindowUndefinedError(ValueError):
    """Raised when the collision window is queried with a zero speed."""


class ScenarioType(str, enum.Enum):
    MERGE_YIELD = "merge_yield"
    LANE_CHANGE = "lane_change"
    INTERSECTION_YIELD = "intersection_yield"
    INTERSECTION_LIGHT = "intersection_light"


class Light(str, enum.Enum):
    GREEN = "green"
    RED = "red"


class Property(str, enum.Enum):
    NO_COLLISION_ARRIVING = "no_collision_arriving"
    NO_COLLISION_FRONT = "no_collision_front"
    NO_ZONE_COOCCUPANCY = "no_zone_cooccupancy"
    NO_RED_LIGHT_ENTRY = "no_red_light_entry"


@dataclass(frozen=True)
class StaticPart:
    """Road-layout part shared by a family of test cases."""

    scenario_type: ScenarioType
    vl: float  # m/s, speed limit on the arriving vehicle's road
    d: float = DEFAULT_D  # m, critical zone is [-d, +d] around the conflict point
    light_schedule: Optional[tuple[float, float]] = None  # (green s, red s), light scenarios

    def __post_init__(self) -> None:
        if self.d <= 0:
            raise ValueError("zone half-length d must be positive")
        if self.vl <= 0:
            raise ValueError("speed limit vl must be positive")
        if self.light_schedule is not None:
            g, r = self.light_schedule
            if g <= 0 or r <= 0:
                raise ValueError("light phases must be positive")

    def light_at(self, t: float) -> Optional[Light]:
        if self.scenario_type is not ScenarioType.INTERSECTION_LIGHT:
            return None
        if self.light_schedule is None:
            return Light.GREEN  # default schedule: effectively always green
        g, r = self.light_schedule
        return Light.GREEN if (t % (g + r)) < g else Light.RED


@dataclass(frozen=True)
class EgoState:
    x: float  # m, signed route distance to the conflict point (< 0 before it)
    v: float  # m/s

    def __post_init__(self) -> None:
        if self.v < 0:
            raise ValueError("ego speed must be non-negative")


@dataclass(frozen=True)
class VehicleState:
    x: float  # m, distance to the conflict point (arriving) or beyond it (front)
    v: float  # m/s


@dataclass(frozen=True)
class ExtraVehicle:
    kind: str  # "arriving" (moves at vl toward the point) | "static" (parked past it)
    x: float  # m, initial distance in the same convention as its kind


@dataclass(frozen=True)
class EnvState:
    arriving: VehicleState
    front: VehicleState
    extra_vehicles: tuple[ExtraVehicle, ...] = ()
    light: Optional[Light] = None


@dataclass(frozen=True)
class Scene:
    t: float  # s
    ego: EgoState
    env: EnvState


@dataclass
class Scenario:
    static: StaticPart
    frames: list[Scene] = field(default_factory=list)


@dataclass(frozen=True)
class TestCase:
    """Compact stimulus: initial ego state plus environment geometry.

    ``horizon`` is the environment step count ``n`` (so a run spans ``n + 1``
    scenes); when omitted it is sized so the arriving vehicle clears the zone
    with time to spare at the default step size.
    """

    __test__ = False  # not a pytest class, despite the name

    static: StaticPart
    x_e: float  # m, ego initial distance before the conflict point (> 0)
    v_e: float  # m/s, ego initial speed
    x_a: float  # m, arriving vehicle initial distance to the point (> 0)
    x_f: float  # m, front vehicle distance beyond the point (> 0)
    horizon: Optional[int] = None
    mutations: tuple[ExtraVehicle, ...] = ()

    def __post_init__(self) -> None:
        if self.x_e <= 0 or self.x_a <= 0 or self.x_f <= 0:
            raise ValueError("x_e, x_a and x_f must all be positive")
        if self.v_e < 0:
            raise ValueError("v_e must be non-negative")
        if self.horizon is None:
            object.__setattr__(self, "horizon", self.min_horizon(DEFAULT_DT, slack=_EXTRA_HORIZON))
        elif self.horizon < self.min_horizon(DEFAULT_DT):
            raise HorizonError(
                f"horizon {self.horizon} too short; minimum n is {self.min_horizon(DEFAULT_DT)}"
            )

    def min_horizon(self, dt: float, slack: float = 0.0) -> int:
        """Smallest step count letting the arriving vehicle traverse the zone."""
        span = (self.x_a + 2.0 * self.static.d) / self.static.vl + slack
        return math.ceil(span / dt)

    def initial_ego(self) -> EgoState:
        return EgoState(x=-self.x_e, v=self.v_e)


@dataclass(frozen=True)
class Goal:
    """Tested properties plus the acceptable terminal behaviours."""

    properties: frozenset[Property]
    allow_cautious_stop: bool = True  # stopping before the zone counts as success

    def __post_init__(self) -> None:
        if not self.properties:
            raise ValueError("goal must test at least one property")


def default_goal(static: StaticPart) -> Goal:
    props = {Property.NO_COLLISION_ARRIVING, Property.NO_COLLISION_FRONT}
    if static.scenario_type is ScenarioType.INTERSECTION_LIGHT:
        props.add(Property.NO_RED_LIGHT_ENTRY)
    return Goal(properties=frozenset(props))


# -- environment expansion ----------------------------------------------------


def env_at(tc: TestCase, t: float) -> EnvState:
    """Environment state at time ``t``; independent of any ego behaviour."""
    vl = tc.static.vl
    extras = tuple(
        ExtraVehicle(kind=m.kind, x=m.x - vl * t if m.kind == "arriving" else m.x)
        for m in tc.mutations
    )
    return EnvState(
        arriving=VehicleState(x=tc.x_a - vl * t, v=vl),
        front=VehicleState(x=tc.x_f, v=0.0),
        extra_vehicles=extras,
        light=tc.static.light_at(t),
    )


def expand(tc: TestCase, dt: float = DEFAULT_DT) -> list[EnvState]:
    """Expand a compact test case into its environment sequence (n + 1 states)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    needed = tc.min_horizon(dt)
    if tc.horizon < needed:
        raise HorizonError(f"horizon {tc.horizon} too short at dt={dt}; minimum n is {needed}")
    return [env_at(tc, i * dt) for i in range(tc.horizon + 1)]


def equivalence_mutations(tc: TestCase, headway: float) -> list[TestCase]:
    """Mutants that add vehicles which cannot affect a sane policy.

    Three mutants: an extra arriving vehicle ``headway`` metres behind the
    arriving one, an extra parked vehicle ``headway`` metres beyond the front
    one, and both together.
    """
    if headway <= 0:
        raise ValueError("headway must be positive")
    behind = ExtraVehicle(kind="arriving", x=tc.x_a + headway)
    beyond = ExtraVehicle(kind="static", x=tc.x_f + headway)
    return [
        replace(tc, mutations=tc.mutations + (behind,)),
        replace(tc, mutations=tc.mutations + (beyond,)),
        replace(tc, mutations=tc.mutations + (behind, beyond)),
    ]


# -- relevance analysis ---------------------------------------------------------


def collision_window(x_e: float, v_e: float, x_a: float, v_a: float, d: float) -> bool:
    """Whether two constant-speed vehicles can co-occupy the critical zone.

    True iff the zone-presence time intervals overlap:
    ``|x_e/v_e - x_a/v_a| <= d/v_e + d/v_a``.  This bounds where a collision is
    possible at all; the closed-loop simulator decides whether one happens.
    """
    if x_e <= 0 or x_a <= 0 or d <= 0:
        raise ValueError("distances and zone size must be positive")
    if v_e <= 0 or v_a <= 0:
        raise WindowUndefinedError("collision window undefined for zero speed")
    margin = d / v_e + d / v_a
    return abs(x_e / v_e - x_a / v_a) <= margin * (1.0 + 1e-12) + 1e-12


def constant_speed_outcome(
    x_e: float,
    v_e: float,
    x_a: float,
    v_a: float,
    d: float,
    dt: float = DEFAULT_DT,
) -> bool:
    """Step two constant-speed vehicles; True if the ego collides.

    A collision requires the ego to still be short of the conflict point when
    the arriving vehicle reaches it, with both inside the zone at some later
    frame.  An ego that clears the point first is out of the arriving
    vehicle's way.
    """
    if v_e <= 0:
        return False  # a stationary ego never enters the zone
    t_e = x_e / v_e
    t_a = x_a / v_a
    if t_e <= t_a + dt * 1e-6:
        return False
    n = math.ceil((max(t_e, t_a) + (d / v_e) + (d / v_a)) / dt) + 2
    for i in range(n + 1):
        t = i * dt
        if t < t_a:
            continue
        ego = -x_e + v_e * t
        arr = x_a - v_a * t
        if abs(ego) <= d and abs(arr) <= d:
            return True
    return False


def is_relevant(tc: TestCase, dt: float = DEFAULT_DT) -> bool:
    """Whether the test case forces the ego to change speed.

    Simulates a careless constant-speed ego: if that policy already avoids the
    arriving-vehicle conflict, passing demonstrates nothing.  A stationary ego
    is always relevant (it must adapt to make progress at all).
    """
    if tc.v_e == 0:
        return True
    return constant_speed_outcome(tc.x_e, tc.v_e, tc.x_a, tc.static.vl, tc.static.d, dt)


# -- serialization --------------------------------------------------------------


def _static_to_dict(static: StaticPart) -> dict:
    return {
        "scenario_type": static.scenario_type.value,
        "vl": static.vl,
        "d": static.d,
        "light_schedule": list(static.light_schedule) if static.light_schedule else None,
    }


def _static_from_dict(data: dict) -> StaticPart:
    sched = data.get("light_schedule")
    return StaticPart(
        scenario_type=ScenarioType(data["scenario_type"]),
        vl=data["vl"],
        d=data["d"],
        light_schedule=tuple(sched) if sched else None,
    )


def test_case_to_dict(tc: TestCase) -> dict:
    return {
        "static": _static_to_dict(tc.static),
        "x_e": tc.x_e,
        "v_e": tc.v_e,
        "x_a": tc.x_a,
        "x_f": tc.x_f,
        "horizon": tc.horizon,
        "mutations": [{"kind": m.kind, "x": m.x} for m in tc.mutations],
    }


def test_case_from_dict(data: dict) -> TestCase:
    return TestCase(
        static=_static_from_dict(data["static"]),
        x_e=data["x_e"],
        v_e=data["v_e"],
        x_a=data["x_a"],
        x_f=data["x_f"],
        horizon=data.get("horizon"),
        mutations=tuple(ExtraVehicle(m["kind"], m["x"]) for m in data.get("mutations", [])),
    )


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "static": _static_to_dict(sc.static),
        "frames": [
            {
                "t": round(f.t, 9),
                "ego": {"x": f.ego.x, "v": f.ego.v},
                "arriving": {"x": f.env.arriving.x, "v": f.env.arriving.v},
                "front": {"x": f.env.front.x, "v": f.env.front.v},
                "extra": [{"kind": e.kind, "x": e.x} for e in f.env.extra_vehicles],
                "light": f.env.light.value if f.env.light else None,
            }
            for f in sc.frames
        ],
    }


def scenario_to_csv(sc: Scenario) -> str:
    """Per-frame CSV ``t,x_e,v_e,x_a,v_a,x_f,light`` for plotting."""
    lines = ["t,x_e,v_e,x_a,v_a,x_f,light"]
    for f in sc.frames:
        light = f.env.light.value if f.env.light else ""
        lines.append(
            f"{f.t:.3f},{f.ego.x:.6f},{f.ego.v:.6f},{f.env.arriving.x:.6f},"
            f"{f.env.arriving.v:.6f},{f.env.front.x:.6f},{light}"
        )
    return "\n".join(lines) + "\n"


def scenario_to_json(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2)
