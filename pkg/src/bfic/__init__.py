"""Two-user binary fading interference channel: capacity regions and transmission schemes."""

from .channel import CASE_TUPLES, ChannelState, classify_case, classify_cases, sample_gains
from .delayed import Halt, SchemeResult, run_corner_C, run_point_A
from .feedback import run_dcsit_ofb_corner, run_dcsit_ofb_sum, run_icsit, run_icsit_ofb
from .regions import RateTuple, Region, Scenario, region, sum_capacity

__all__ = [
    "CASE_TUPLES", "ChannelState", "Halt", "RateTuple", "Region", "Scenario", "SchemeResult",
    "classify_case", "classify_cases", "region", "run_corner_C", "run_dcsit_ofb_corner",
    "run_dcsit_ofb_sum", "run_icsit", "run_icsit_ofb", "run_point_A", "sample_gains",
    "sum_capacity",
]
