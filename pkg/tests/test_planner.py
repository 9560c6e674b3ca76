from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from showbook.errors import InvalidParams
from showbook.planner import (
    CapacityParams,
    DemandParams,
    minutes_to_hours,
    plan,
    plan_text,
    time_available,
    time_required,
    what_if,
)


def test_time_available_examples():
    assert time_available(CapacityParams(5, 8, 0.85, 20)) == 680
    assert time_available(CapacityParams(1, 1, 1, 1)) == 1
    assert time_available(CapacityParams(8, 8, 0.85, 20)) == 1088


def test_time_required_examples():
    assert time_required(DemandParams(2000, 0.5)) == 1000
    assert time_required(DemandParams(0, 0.5)) == 0
    assert time_required(DemandParams(9.0, 0.5)) == 4.5


def test_worked_example():
    p = plan(CapacityParams(5, 8, 0.85, 20), DemandParams(2000, 0.5))
    assert p.time_available == 680 and p.time_required == 1000
    assert p.ratio == pytest.approx(1.4706, abs=5e-5)
    assert not p.feasible and p.optimal_staff == 8
    assert "Optimal staff:         8" in plan_text(p)


def test_zero_demand():
    p = plan(CapacityParams(3, 8, 0.85, 20), DemandParams(0, 0.5))
    assert p.ratio == 0 and p.feasible and p.optimal_staff == 1


def test_exact_boundary_is_feasible():
    # 0.85 must be read as 17/20 for this to land exactly on 1
    p = plan(CapacityParams(5, 8, 0.85, 20), DemandParams(1360, 0.5))
    assert p.ratio == 1.0 and p.feasible and p.optimal_staff == 5


def test_minutes_convert_exactly():
    assert minutes_to_hours(60) == 1
    assert minutes_to_hours(30) == Fraction(1, 2)
    assert DemandParams.from_minutes(2000, 30) == DemandParams(2000, Fraction(1, 2))


@pytest.mark.parametrize(
    "args",
    [(0, 8, 0.85, 20), (2.5, 8, 0.85, 20), (1, 0, 0.85, 20), (1, 8, 0, 20), (1, 8, 1.2, 20), (1, 8, 0.8, -1)],
)
def test_invalid_capacity(args):
    with pytest.raises(InvalidParams):
        CapacityParams(*args)


@pytest.mark.parametrize("args", [(-1, 0.5), (10, 0), (10, float("nan"))])
def test_invalid_demand(args):
    with pytest.raises(InvalidParams):
        DemandParams(*args)


def test_what_if_first_feasible():
    table = what_if(5, 10, CapacityParams(5, 8, 0.85, 20), DemandParams(2000, 0.5))
    assert [r.staff_count for r in table.rows] == [5, 6, 7, 8, 9, 10]
    assert table.first_feasible.staff_count == 8
    ratios = [r.ratio for r in table.rows]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert "<- first feasible" in table.to_text().splitlines()[4]
    assert table.to_dict()["first_feasible_staff"] == 8


def test_what_if_zero_demand_all_feasible():
    table = what_if(1, 4, CapacityParams(1, 8, 0.85, 20), DemandParams(0, 0.5))
    assert all(r.feasible for r in table.rows)


def test_what_if_single_point_at_optimum():
    cap, dem = CapacityParams(5, 8, 0.85, 20), DemandParams(2000, 0.5)
    opt = plan(cap, dem).optimal_staff
    assert what_if(opt, opt, cap, dem).rows[0].feasible
    assert not plan(cap.with_staff(opt - 1), dem).feasible


def test_what_if_rejects_empty_range():
    with pytest.raises(InvalidParams):
        what_if(6, 5, CapacityParams(5, 8, 0.85, 20), DemandParams(1, 0.5))


capacities = st.builds(
    CapacityParams,
    st.integers(1, 50),
    st.sampled_from([4, 6, 7.5, 8, 10]),
    st.sampled_from([0.5, 0.7, 0.85, 0.9, 1.0]),
    st.integers(1, 31),
)
demands = st.builds(DemandParams, st.integers(1, 20000), st.sampled_from([0.25, 0.5, 0.75, 1.0, 1.5]))


def _feasible(cap, dem, staff):
    return Fraction(dem.forecasted_customers) * Fraction(repr(dem.service_time)) <= staff * Fraction(
        repr(float(cap.working_hours_per_day))
    ) * Fraction(repr(float(cap.utilization_rate))) * Fraction(repr(float(cap.working_days)))


@settings(max_examples=200, deadline=None)
@given(capacities, demands)
def test_optimal_staff_is_minimal(cap, dem):
    p = plan(cap, dem)
    first = next(s for s in range(1, 10**6) if _feasible(cap, dem, s))
    assert p.optimal_staff == first
    assert plan(cap.with_staff(p.optimal_staff), dem).feasible
    if p.optimal_staff > 1:
        assert not plan(cap.with_staff(p.optimal_staff - 1), dem).feasible


@settings(max_examples=100, deadline=None)
@given(capacities, demands)
def test_homogeneity(cap, dem):
    p1 = plan(cap, dem)
    p2 = plan(cap, DemandParams(2 * dem.forecasted_customers, dem.service_time))
    assert p2.time_required == 2 * p1.time_required
    assert p2.ratio == pytest.approx(2 * p1.ratio, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(capacities, demands)
def test_ratio_monotone_in_capacity(cap, dem):
    base = plan(cap, dem).ratio
    bigger = [
        CapacityParams(cap.staff_count + 1, cap.working_hours_per_day, cap.utilization_rate, cap.working_days),
        CapacityParams(cap.staff_count, cap.working_hours_per_day + 1, cap.utilization_rate, cap.working_days),
        CapacityParams(cap.staff_count, cap.working_hours_per_day, min(1.0, cap.utilization_rate + 0.05), cap.working_days),
        CapacityParams(cap.staff_count, cap.working_hours_per_day, cap.utilization_rate, cap.working_days + 1),
    ]
    for c in bigger:
        assert plan(c, dem).ratio <= base
