"""Pure schedule functions of step and edge age.

Nothing here touches a network: every function maps integers to reals so the
schedules can be plotted, tested, and replayed independently of training.
"""

import math

from livewire.config import CredibilitySchedule, CyclicSchedule
from livewire.models import CredibilityDecay, LivewireError


class ScheduleError(LivewireError):
    """Raised for a schedule queried outside its domain."""


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves away from zero for non-negative input."""
    return int(math.floor(value + 0.5))


def cyclic_rate(step: int, schedule: CyclicSchedule) -> float:
    """Evaluate the triangular ramp at ``step``.

    Linear from ``base`` to ``peak`` over ``warmup_steps``, linear from ``peak``
    to ``floor`` over the next ``decay_steps``, then constant ``floor``.
    """
    if schedule.warmup_steps <= 0 or schedule.decay_steps <= 0:
        raise ScheduleError(
            f"warmup_steps ({schedule.warmup_steps}) and decay_steps "
            f"({schedule.decay_steps}) must be positive"
        )
    if step < 0:
        raise ScheduleError(f"step must be non-negative, got {step}")

    if step <= schedule.warmup_steps:
        frac = step / schedule.warmup_steps
        return schedule.base + (schedule.peak - schedule.base) * frac
    into_decay = step - schedule.warmup_steps
    if into_decay <= schedule.decay_steps:
        frac = into_decay / schedule.decay_steps
        return schedule.peak + (schedule.floor - schedule.peak) * frac
    return schedule.floor


def growth_count(step: int, schedule: CyclicSchedule) -> int:
    """K(step): number of edges to grow in a round starting at ``step``."""
    return max(0, round_half_up(cyclic_rate(step, schedule)))


def credibility_eta(age: int, schedule: CredibilitySchedule) -> float:
    """Age-discounted learning rate before the global multiplier.

    The hyperbolic form mirrors the credibility factor Z = n / (n + k): an
    edge ``halflife`` steps old has half of its excess rate left.
    """
    if age < 0:
        raise ScheduleError(f"age must be non-negative, got {age}")
    excess = schedule.eta_new - schedule.eta_floor
    match schedule.decay:
        case CredibilityDecay.HYPERBOLIC:
            factor = schedule.halflife / (schedule.halflife + age)
        case CredibilityDecay.EXPONENTIAL:
            factor = 0.5 ** (age / schedule.halflife)
    return schedule.eta_floor + excess * factor
