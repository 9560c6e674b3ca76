"""Two-stage appointment show/booking prediction and staffing planner."""

__version__ = "0.1.0"
