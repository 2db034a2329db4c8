"""Pluggable longitudinal autopilots and fault-injected variants.

An autopilot is a per-step transition: given the current scene it emits an
acceleration command for the next step, threading an opaque memory dict
through the run.  The reference policy is memoryless, so replaying it from any
intermediate state of its own trace reproduces the rest of the trace; each
fault variant perturbs exactly one declared aspect of that behaviour.

Reference decision, evaluated fresh each step while still before the zone:
commit to crossing iff full throttle reaches the conflict point no later than
the arriving vehicle and the crossing speed can be braked off before the front
vehicle; otherwise hold speed and brake to stop short of the zone.  Once
inside the zone only the front-vehicle braking condition is re-evaluated
(stopping inside the zone is never an option).
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass
from typing import Optional

from .kinematics import ADProfile
from .scenario import (
    CAUTIOUS_MARGIN,
    DEFAULT_DT,
    EgoState,
    Scene,
    StaticPart,
    TestCase,
    expand,
)

__all__ = [
    "Decision",
    "AutopilotSpec",
    "ProtocolError",
    "ExternalAutopilot",
    "reference",
    "transition_flawed",
    "irrational",
    "overcautious",
    "non_determinate_brake",
    "non_determinate_accel",
    "always_cautious",
    "constant_speed",
    "step",
    "run_policy",
    "non_monotone_brake_profile",
]

_EPS = 1e-9

VARIANTS = (
    "reference",
    "transition_flawed",
    "irrational",
    "overcautious",
    "non_determinate_brake",
    "non_determinate_accel",
    "always_cautious",
    "constant_speed",
)


class ProtocolError(RuntimeError):
    """Raised when an external autopilot violates the stdio protocol."""


@dataclass(frozen=True)
class Decision:
    mode: str  # "progress" | "cautious"
    accel: float  # m/s^2 commanded for the next step


@dataclass(frozen=True)
class AutopilotSpec:
    """A named autopilot variant bound to a capability profile."""

    name: str
    profile: ADProfile
    variant: str = "reference"
    optimism: float = 1.0  # > 1 inflates the believed time budget (transition_flawed)
    margin_inflation: float = 1.0  # > 1 inflates required margins (overcautious)
    fail_region: Optional[tuple[tuple[float, float], tuple[float, float]]] = None
    rate_by_initial_speed: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "transition_flawed" and self.optimism <= 1.0:
            raise ValueError("transition_flawed needs optimism > 1")
        if self.variant == "overcautious" and self.margin_inflation <= 1.0:
            raise ValueError("overcautious needs margin_inflation > 1")
        if self.variant == "irrational" and self.fail_region is None:
            raise ValueError("irrational needs a fail_region rectangle")
        if self.variant.startswith("non_determinate") and not self.rate_by_initial_speed:
            raise ValueError(f"{self.variant} needs a rate_by_initial_speed map")
        limit = max(self.profile.a_max, self.profile.b_max) + _EPS
        for v0, rate in self.rate_by_initial_speed:
            if rate <= 0 or rate > limit:
                raise ValueError(f"maneuver rate {rate} for v0={v0} outside (0, {limit}]")

    def rate_for(self, v0: float, default: float) -> float:
        """Maneuver rate keyed on the speed observed when the run started."""
        if not self.rate_by_initial_speed:
            return default
        key, rate = min(self.rate_by_initial_speed, key=lambda kv: abs(kv[0] - v0))
        return rate

    def brake_rate_for(self, v0: float) -> float:
        if self.variant == "non_determinate_brake":
            return self.rate_for(v0, self.profile.b_max)
        return self.profile.b_max

    def accel_rate_for(self, v0: float) -> float:
        if self.variant == "non_determinate_accel":
            return self.rate_for(v0, self.profile.a_max)
        return self.profile.a_max

    def step(
        self,
        scene: Scene,
        static: StaticPart,
        memory: Optional[dict] = None,
        dt: float = DEFAULT_DT,
    ) -> tuple["Decision", dict]:
        return step(self, scene, static, memory, dt)


def reference(profile: ADProfile, name: str = "reference") -> AutopilotSpec:
    return AutopilotSpec(name=name, profile=profile, variant="reference")


def transition_flawed(
    profile: ADProfile, optimism: float = 1.3, name: str = "transition_flawed"
) -> AutopilotSpec:
    return AutopilotSpec(name=name, profile=profile, variant="transition_flawed", optimism=optimism)


def irrational(
    profile: ADProfile,
    fail_region: tuple[tuple[float, float], tuple[float, float]],
    name: str = "irrational",
) -> AutopilotSpec:
    return AutopilotSpec(name=name, profile=profile, variant="irrational", fail_region=fail_region)


def overcautious(
    profile: ADProfile, margin_inflation: float = 1.4, name: str = "overcautious"
) -> AutopilotSpec:
    return AutopilotSpec(
        name=name, profile=profile, variant="overcautious", margin_inflation=margin_inflation
    )


def non_determinate_brake(
    profile: ADProfile, rates: dict[float, float], name: str = "non_determinate_brake"
) -> AutopilotSpec:
    return AutopilotSpec(
        name=name,
        profile=profile,
        variant="non_determinate_brake",
        rate_by_initial_speed=tuple(sorted(rates.items())),
    )


def non_determinate_accel(
    profile: ADProfile, rates: dict[float, float], name: str = "non_determinate_accel"
) -> AutopilotSpec:
    return AutopilotSpec(
        name=name,
        profile=profile,
        variant="non_determinate_accel",
        rate_by_initial_speed=tuple(sorted(rates.items())),
    )


def always_cautious(profile: ADProfile, name: str = "always_cautious") -> AutopilotSpec:
    return AutopilotSpec(name=name, profile=profile, variant="always_cautious")


def constant_speed(profile: ADProfile, name: str = "constant_speed") -> AutopilotSpec:
    return AutopilotSpec(name=name, profile=profile, variant="constant_speed")


# -- decision logic -------------------------------------------------------------


def _nearest_arriving(scene: Scene) -> float:
    xs = [scene.env.arriving.x]
    xs.extend(e.x for e in scene.env.extra_vehicles if e.kind == "arriving")
    return min(xs)


def _nearest_front(scene: Scene) -> float:
    xs = [scene.env.front.x]
    xs.extend(e.x for e in scene.env.extra_vehicles if e.kind == "static")
    return min(xs)


def _progress_accel(
    profile: ADProfile, p: float, v: float, budget: float, accel_rate: float,
    brake_rate: float, dt: float,
) -> float:
    """Full throttle while one more accelerated step still leaves braking room."""
    v1 = min(v + accel_rate * dt, profile.v_max)
    p1 = p + 0.5 * (v + v1) * dt
    room = budget - max(p1, 0.0)
    if v1 * v1 / (2.0 * profile.b_max) <= room + _EPS:
        return accel_rate
    return -brake_rate


def _cautious_accel(v: float, p: float, target: float, brake_rate: float, dt: float) -> float:
    """Hold speed until the stop target requires braking, then brake fully."""
    if v <= _EPS:
        return 0.0
    avail = target - p
    if avail <= 0.0:
        return -brake_rate
    if v * v / (2.0 * brake_rate) + v * dt >= avail:
        return -brake_rate
    return 0.0


def step(
    spec: AutopilotSpec,
    scene: Scene,
    static: StaticPart,
    memory: Optional[dict] = None,
    dt: float = DEFAULT_DT,
) -> tuple[Decision, dict]:
    """One control decision for the next ``dt`` seconds."""
    memory = {} if memory is None else memory
    profile = spec.profile
    p, v = scene.ego.x, scene.ego.v
    d = static.d
    arr_x = _nearest_arriving(scene)
    front_x = _nearest_front(scene)

    if spec.variant == "constant_speed":
        return Decision(mode="progress", accel=0.0), memory

    if spec.variant in ("irrational", "non_determinate_brake", "non_determinate_accel"):
        if "v0" not in memory:
            memory["v0"] = v
            memory["x_a0"] = arr_x
            memory["x_f0"] = front_x
    accel_rate = spec.accel_rate_for(memory.get("v0", v))
    brake_rate = spec.brake_rate_for(memory.get("v0", v))

    if spec.variant == "irrational" and spec.fail_region is not None:
        (a_lo, a_hi), (f_lo, f_hi) = spec.fail_region
        if a_lo <= memory["x_a0"] <= a_hi and f_lo <= memory["x_f0"] <= f_hi:
            # Goes cautious far too late: aims the stop inside the zone.
            accel = _cautious_accel(v, p, -d / 2.0, brake_rate, dt)
            return Decision(mode="cautious", accel=accel), memory

    if p > -d:
        # Inside or past the zone: committed, only the front condition matters.
        accel = _progress_accel(profile, p, v, front_x, accel_rate, brake_rate, dt)
        return Decision(mode="progress", accel=accel), memory

    x_now = -p
    wants_progress = False
    if spec.variant not in ("always_cautious",):
        deadline = arr_x / static.vl
        ta = profile.accel_time(x_now, v)
        need_front = profile.braking_distance(profile.accel_speed(x_now, v))
        if spec.variant == "transition_flawed":
            deadline = deadline * spec.optimism
        if spec.variant == "overcautious":
            ta = ta * spec.margin_inflation
            need_front = need_front * spec.margin_inflation
        wants_progress = ta <= deadline + _EPS and need_front <= front_x + _EPS

    if wants_progress:
        accel = _progress_accel(profile, p, v, front_x, accel_rate, brake_rate, dt)
        return Decision(mode="progress", accel=accel), memory
    accel = _cautious_accel(v, p, -(d + CAUTIOUS_MARGIN), brake_rate, dt)
    return Decision(mode="cautious", accel=accel), memory


def run_policy(spec: AutopilotSpec, tc: TestCase, dt: float = DEFAULT_DT) -> list[EgoState]:
    """Iterate the autopilot against the expanded environment; no oracle.

    Returns the full ego state sequence (``horizon + 1`` entries) under the
    same integration rule the simulator uses.
    """
    envs = expand(tc, dt)
    v_max = spec.profile.v_max
    states = [tc.initial_ego()]
    memory: dict = {}
    for i in range(tc.horizon):
        scene = Scene(t=i * dt, ego=states[-1], env=envs[i])
        decision, memory = step(spec, scene, tc.static, memory, dt)
        v0 = states[-1].v
        v1 = min(max(v0 + decision.accel * dt, 0.0), v_max)
        x1 = states[-1].x + 0.5 * (v0 + v1) * dt
        states.append(EgoState(x=x1, v=v1))
    return states


# -- external autopilot bridge ----------------------------------------------------


class ExternalAutopilot:
    """Drives an external process over a line-delimited JSON stdio protocol.

    The harness writes one scene per line::

        {"t": ..., "dt": ..., "ego": {"x": ..., "v": ...},
         "arriving": {"x": ..., "v": ...}, "front": {"x": ..., "v": ...},
         "extra": [{"kind": ..., "x": ...}], "light": "green"|"red"|null,
         "static": {"scenario_type": ..., "d": ..., "vl": ...}}

    and reads one decision per line: ``{"mode": "progress"|"cautious",
    "accel": <float>}``.
    """

    def __init__(self, command: str, profile: ADProfile, name: Optional[str] = None):
        self.name = name or f"exec:{command}"
        self.profile = profile
        self._command = command
        self._proc: Optional[subprocess.Popen] = None

    def _ensure_started(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                shlex.split(self._command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def step(
        self,
        scene: Scene,
        static: StaticPart,
        memory: Optional[dict] = None,
        dt: float = DEFAULT_DT,
    ) -> tuple[Decision, dict]:
        proc = self._ensure_started()
        payload = {
            "t": scene.t,
            "dt": dt,
            "ego": {"x": scene.ego.x, "v": scene.ego.v},
            "arriving": {"x": scene.env.arriving.x, "v": scene.env.arriving.v},
            "front": {"x": scene.env.front.x, "v": scene.env.front.v},
            "extra": [{"kind": e.kind, "x": e.x} for e in scene.env.extra_vehicles],
            "light": scene.env.light.value if scene.env.light else None,
            "static": {
                "scenario_type": static.scenario_type.value,
                "d": static.d,
                "vl": static.vl,
            },
        }
        try:
            assert proc.stdin is not None and proc.stdout is not None
            proc.stdin.write(json.dumps(payload) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"external autopilot pipe failed: {exc}") from exc
        if not line:
            raise ProtocolError("external autopilot closed its output")
        try:
            reply = json.loads(line)
            mode = reply["mode"]
            accel = float(reply["accel"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed decision line: {line!r}") from exc
        if mode not in ("progress", "cautious") or not math.isfinite(accel):
            raise ProtocolError(f"invalid decision: {line!r}")
        return Decision(mode=mode, accel=accel), (memory if memory is not None else {})

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()  # type: ignore[union-attr]
            self._proc.terminate()
            self._proc.wait(timeout=5)
        self._proc = None

    def __enter__(self) -> "ExternalAutopilot":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- fault-injected capability table (for monotonicity audits) -------------------


def non_monotone_brake_profile() -> ADProfile:
    """Tabulated profile with one inverted stop-distance sample.

    Braking from 9 m/s needs more room than braking from 10 m/s, which breaks
    the ordering of the remaining-speed function.
    """
    table = [
        (5.0, 3.0, 0.0),  # stop distance 3 m from 5 m/s
        (8.0, 9.0, 5.0),  # 12 m from 8 m/s
        (10.0, 2.0, 8.0),  # 14 m from 10 m/s
        (9.0, 13.0, 5.0),  # 16 m from 9 m/s: inverted sample
        (0.0, 6.25, 5.0),
        (5.0, 18.75, 10.0),
    ]
    return ADProfile.tabulated(table, a_max=2.0, b_max=5.0, v_max=10.0)
