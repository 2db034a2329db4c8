"""Criticality ordering over compact test cases.

For a fixed ego start ``(x_e, v_e)`` the environment geometry ``(x_a, x_f)``
admits a partial order: shrinking either distance can only remove safe
policies.  The tightest geometry that still admits a safe crossing is

* ``x_hat_a = accel_time(x_e, v_e) * vl`` -- the arriving vehicle distance at
  which a full-throttle ego reaches the conflict point exactly in time, and
* ``x_hat_f = braking_distance(accel_speed(x_e, v_e))`` -- the room needed to
  stop after crossing at full throttle,

while ``x_tilde_a = (x_e / v_e) * vl`` is the distance beyond which even a
constant-speed ego clears the point first, making the case undiscriminating.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .kinematics import ADProfile
from .scenario import StaticPart, TestCase

__all__ = [
    "CriticalBoundary",
    "Zone",
    "Dominance",
    "IncomparableError",
    "most_critical",
    "dominates",
    "classify_zone",
    "boundary_probe",
]


class IncomparableError(ValueError):
    """Raised when two test cases do not share a comparable context."""


@dataclass(frozen=True)
class CriticalBoundary:
    """Boundary of the safe-progress region for one ego start."""

    x_hat_a: float  # m, tightest arriving distance with a safe crossing
    x_hat_f: float  # m, tightest front distance with a safe crossing
    x_tilde_a: float  # m, arriving distance beyond which the case is undiscriminating
    cautious_feasible: bool  # braking_distance(v_e) <= x_e

    def __post_init__(self) -> None:
        if self.x_hat_a <= 0 or self.x_hat_f < 0:
            raise ValueError("boundary distances out of range")
        if self.x_hat_a > self.x_tilde_a + 1e-9:
            raise ValueError("x_hat_a cannot exceed x_tilde_a")


class Zone(enum.Enum):
    CAUTIOUS_ONLY = "cautious_only"
    SAFE_PROGRESS = "safe_progress"
    IRRELEVANT = "irrelevant"
    NON_NOMINAL = "non_nominal"


class Dominance(enum.Enum):
    MORE_CRITICAL = "more_critical"
    LESS_CRITICAL = "less_critical"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def most_critical(
    x_e: float, v_e: float, profile: ADProfile, static: StaticPart
) -> CriticalBoundary:
    """Boundary of the safe-progress region for ego start ``(x_e, v_e)``.

    A stationary ego can never be cleared by constant speed, so its
    undiscriminating threshold is infinite.
    """
    if x_e <= 0:
        raise ValueError("x_e must be positive")
    ta = profile.accel_time(x_e, v_e)
    va = profile.accel_speed(x_e, v_e)
    x_hat_a = ta * static.vl
    x_hat_f = profile.braking_distance(va)
    x_tilde_a = math.inf if v_e == 0 else (x_e / v_e) * static.vl
    return CriticalBoundary(
        x_hat_a=x_hat_a,
        x_hat_f=x_hat_f,
        x_tilde_a=x_tilde_a,
        cautious_feasible=profile.braking_distance(v_e) <= x_e,
    )


def dominates(tc: TestCase, tc2: TestCase) -> Dominance:
    """Compare criticality of two test cases sharing static part and ego start.

    Smaller arriving and front distances leave fewer safe policies, so the
    order is the coordinatewise one on ``(-x_a, -x_f)``.
    """
    if tc.static != tc2.static:
        raise IncomparableError("test cases have different static parts")
    if (tc.x_e, tc.v_e) != (tc2.x_e, tc2.v_e):
        raise IncomparableError("test cases have different ego starts")
    if tc.x_a == tc2.x_a and tc.x_f == tc2.x_f:
        return Dominance.EQUAL
    if tc.x_a <= tc2.x_a and tc.x_f <= tc2.x_f:
        return Dominance.MORE_CRITICAL
    if tc.x_a >= tc2.x_a and tc.x_f >= tc2.x_f:
        return Dominance.LESS_CRITICAL
    return Dominance.INCOMPARABLE


def classify_zone(tc: TestCase, boundary: CriticalBoundary) -> Zone:
    """Place one geometry in the theoretical decomposition of the test space."""
    if tc.x_a >= boundary.x_tilde_a:
        return Zone.IRRELEVANT
    if tc.x_a >= boundary.x_hat_a and tc.x_f >= boundary.x_hat_f:
        return Zone.SAFE_PROGRESS
    if boundary.cautious_feasible:
        return Zone.CAUTIOUS_ONLY
    return Zone.NON_NOMINAL


def boundary_probe(
    x_e: float,
    v_e: float,
    profile: ADProfile,
    static: StaticPart,
    n_probe: int = 8,
    spread: float = 2.0,
) -> list[TestCase]:
    """Test cases ringing the critical corner to trace the empirical frontier.

    With ``n_probe == 8`` the probes sit on the compass offsets of a
    ``spread``-sized box around ``(x_hat_a, x_hat_f)``; any other count spaces
    them evenly on a ring.  Geometries that would not admit any safe policy
    are clipped back inside the nominal region.
    """
    if n_probe < 1:
        raise ValueError("n_probe must be at least 1")
    if spread <= 0:
        raise ValueError("spread must be positive")
    b = most_critical(x_e, v_e, profile, static)
    if not b.cautious_feasible:
        raise ValueError("ego start admits no cautious fallback; probes would be non-nominal")
    if n_probe == 8:
        offsets = [
            (-spread, -spread), (-spread, 0.0), (-spread, spread), (0.0, spread),
            (spread, spread), (spread, 0.0), (spread, -spread), (0.0, -spread),
        ]
    else:
        offsets = [
            (spread * math.cos(2.0 * math.pi * k / n_probe),
             spread * math.sin(2.0 * math.pi * k / n_probe))
            for k in range(n_probe)
        ]
    probes = []
    for da, df in offsets:
        x_a = max(b.x_hat_a + da, 0.25 * b.x_hat_a)
        x_f = max(b.x_hat_f + df, 0.25 * b.x_hat_f if b.x_hat_f > 0 else 0.1)
        probes.append(TestCase(static=static, x_e=x_e, v_e=v_e, x_a=x_a, x_f=x_f))
    return probes
