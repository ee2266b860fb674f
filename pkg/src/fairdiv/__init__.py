"""Truthful randomized fair division, continuous and discrete."""

from .continuous import (
    ContinuousAllocation,
    QSamplerConfig,
    approximate_by_rational_partition,
    equal_partition,
    is_superfair,
    mechanism1,
    mechanism2,
    sample_rational_partition,
)
from .discrete import (
    DiscreteAllocation,
    DiscreteProfile,
    bin_goods,
    fairness_floor,
    mechanism3,
    mechanism4,
    superfair_check_discrete,
)
from .measures import IntervalSet, Partition, StepMeasure, measure_of

__all__ = [
    "ContinuousAllocation",
    "DiscreteAllocation",
    "DiscreteProfile",
    "IntervalSet",
    "Partition",
    "QSamplerConfig",
    "StepMeasure",
    "approximate_by_rational_partition",
    "bin_goods",
    "equal_partition",
    "fairness_floor",
    "is_superfair",
    "measure_of",
    "mechanism1",
    "mechanism2",
    "mechanism3",
    "mechanism4",
    "sample_rational_partition",
    "superfair_check_discrete",
]
