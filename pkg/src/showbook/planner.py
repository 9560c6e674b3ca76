"""Staff capacity versus forecast demand.

    time available = staff x hours per day x utilization x working days
    time required  = forecast customers x service time
    ratio          = time required / time available

A ratio above 1 means the period is understaffed.  Arithmetic is done on
exact rationals: each float input is read as its shortest decimal form, so
``0.85`` means 17/20 and the feasibility boundary is decided exactly.  All
times are hours; minutes are converted once at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidParams


def _q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InvalidParams("boolean is not a quantity")
    if isinstance(x, int):
        return Fraction(x)
    x = float(x)
    if not math.isfinite(x):
        raise InvalidParams(f"{x} is not a finite number")
    return Fraction(repr(x))


def minutes_to_hours(minutes) -> Fraction:
    return _q(minutes) / 60


@dataclass(frozen=True)
class CapacityParams:
    staff_count: int
    working_hours_per_day: float
    utilization_rate: float
    working_days: float

    def __post_init__(self):
        if isinstance(self.staff_count, bool) or int(self.staff_count) != self.staff_count or self.staff_count < 1:
            raise InvalidParams(f"staff_count must be a positive integer, got {self.staff_count!r}")
        if _q(self.working_hours_per_day) <= 0:
            raise InvalidParams("working_hours_per_day must be positive")
        if not 0 < _q(self.utilization_rate) <= 1:
            raise InvalidParams("utilization_rate must be in (0, 1]")
        if _q(self.working_days) <= 0:
            raise InvalidParams("working_days must be positive")

    def hours_per_staff(self) -> Fraction:
        return _q(self.working_hours_per_day) * _q(self.utilization_rate) * _q(self.working_days)

    def with_staff(self, staff: int) -> "CapacityParams":
        return CapacityParams(staff, self.working_hours_per_day, self.utilization_rate, self.working_days)


@dataclass(frozen=True)
class DemandParams:
    forecasted_customers: float
    service_time: float  # hours per customer

    def __post_init__(self):
        if _q(self.forecasted_customers) < 0:
            raise InvalidParams("forecasted_customers must be non-negative")
        if _q(self.service_time) <= 0:
            raise InvalidParams("service_time must be positive")

    @classmethod
    def from_minutes(cls, customers, service_minutes) -> "DemandParams":
        return cls(customers, minutes_to_hours(service_minutes))


def _available(cap: CapacityParams) -> Fraction:
    return cap.staff_count * cap.hours_per_staff()


def _required(dem: DemandParams) -> Fraction:
    return _q(dem.forecasted_customers) * _q(dem.service_time)


def time_available(cap: CapacityParams) -> float:
    return float(_available(cap))


def time_required(dem: DemandParams) -> float:
    return float(_required(dem))


@dataclass(frozen=True)
class StaffingPlan:
    staff_count: int
    time_available: float
    time_required: float
    ratio: float
    optimal_staff: int
    feasible: bool

    def to_dict(self) -> dict:
        return {
            "staff_count": self.staff_count,
            "time_available_hours": self.time_available,
            "time_required_hours": self.time_required,
            "ratio": self.ratio,
            "optimal_staff": self.optimal_staff,
            "feasible": self.feasible,
        }


def plan(cap: CapacityParams, dem: DemandParams) -> StaffingPlan:
    """Ratio test at the current staff level plus the smallest feasible staff count.

    The optimal count is ``ceil(required / (hours x utilization x days))``,
    never below one.
    """
    avail = _available(cap)
    req = _required(dem)
    optimal = max(1, math.ceil(req / cap.hours_per_staff()))
    return StaffingPlan(
        staff_count=cap.staff_count,
        time_available=float(avail),
        time_required=float(req),
        ratio=float(req / avail),
        optimal_staff=optimal,
        feasible=req <= avail,
    )


@dataclass(frozen=True)
class WhatIfTable:
    rows: tuple[StaffingPlan, ...]

    @property
    def first_feasible(self) -> StaffingPlan | None:
        return next((r for r in self.rows if r.feasible), None)

    def to_dict(self) -> dict:
        first = self.first_feasible
        return {
            "rows": [r.to_dict() for r in self.rows],
            "first_feasible_staff": None if first is None else first.staff_count,
        }

    def to_text(self) -> str:
        first = self.first_feasible
        lines = [f"{'Staff':>6} {'Available h':>13} {'Required h':>13} {'Ratio':>9}  Status"]
        for r in self.rows:
            status = "ok" if r.feasible else "understaffed"
            mark = "  <- first feasible" if first is not None and r.staff_count == first.staff_count else ""
            lines.append(
                f"{r.staff_count:>6} {r.time_available:>13,.2f} {r.time_required:>13,.2f} {100 * r.ratio:>8.1f}%  {status}{mark}"
            )
        return "\n".join(lines) + "\n"


def what_if(staff_lo: int, staff_hi: int, base: CapacityParams, dem: DemandParams, step: int = 1) -> WhatIfTable:
    """One plan per staff count in ``staff_lo..staff_hi`` (inclusive)."""
    if step < 1:
        raise InvalidParams("step must be a positive integer")
    if staff_lo < 1 or staff_hi < staff_lo:
        raise InvalidParams(f"staff range {staff_lo}..{staff_hi} is empty or non-positive")
    return WhatIfTable(tuple(plan(base.with_staff(s), dem) for s in range(staff_lo, staff_hi + 1, step)))


def plan_text(p: StaffingPlan) -> str:
    verdict = "feasible" if p.feasible else "understaffed: assign more staff"
    return (
        f"Staff on roster:       {p.staff_count}\n"
        f"Total time available:  {p.time_available:,.2f} h\n"
        f"Total time required:   {p.time_required:,.2f} h\n"
        f"Ratio:                 {100 * p.ratio:.2f}% ({verdict})\n"
        f"Optimal staff:         {p.optimal_staff}\n"
    )
