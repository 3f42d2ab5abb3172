"""Adaptive monotonicity testing of Boolean functions on the hypercube."""

from .functions import (AntiDictator, Blended, BooleanFunction, Dictator, Majority, Parity, QueryMeter,
                        RandomBernoulli, RandomMonotone, Threshold, TruthTable, instantiate, parse_family,
                        to_truth_table)
from .hypercube import Edge, Point, WalkPath
from .rng import Stream
from .tester import AmplifyConfig, Outcome, Verdict, check_monotonicity, run_amplified, run_once

__all__ = [
    "AmplifyConfig", "AntiDictator", "Blended", "BooleanFunction", "Dictator", "Edge", "Majority",
    "Outcome", "Parity", "Point", "QueryMeter", "RandomBernoulli", "RandomMonotone", "Stream",
    "Threshold", "TruthTable", "Verdict", "WalkPath", "check_monotonicity", "instantiate",
    "parse_family", "run_amplified", "run_once", "to_truth_table",
]
__version__ = "0.1.0"
