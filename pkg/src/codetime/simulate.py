"""Synthetic developers with known hidden coding behavior.

A scenario fixes a weekly working schedule and alternating
coding/non-coding blocks whose exponential lengths are discretized as
geometric per-minute exit probabilities. Every coding minute emits a
commit with a fixed probability, so both the observable commit stream
and the normally hidden coding mask are available for validation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hmm import MINUTES_PER_DAY, MINUTES_PER_WEEK, DeveloperTimeline
from .ioutil import DataError

# 2021-01-04 00:00 UTC, a Monday, in epoch minutes
DEFAULT_WINDOW_START = 26828640


@dataclass(frozen=True)
class SimScenario:
    """Weekly schedule plus block-length means.

    weekdays: working days, 0=Monday .. 6=Sunday.
    Coding-block means switch at `segment_boundary_hour` (morning
    before it, afternoon from it on). With `regime_change` the
    morning/afternoon means swap at the midpoint week.
    """

    weeks: int
    weekdays: frozenset[int] = frozenset({0, 1, 2, 3, 4})
    start_hour: int = 9
    end_hour: int = 17
    segment_boundary_hour: int = 13
    mean_coding_morning: float = 50.0
    mean_coding_afternoon: float = 20.0
    mean_noncoding: float = 30.0
    commit_prob: float = 0.04
    regime_change: bool = False
    window_start: int = DEFAULT_WINDOW_START

    def __post_init__(self):
        if self.weeks < 1:
            raise DataError("scenario needs at least one week")
        if min(self.mean_coding_morning, self.mean_coding_afternoon,
               self.mean_noncoding) <= 0:
            raise DataError("block-length means must be positive")
        if not 0.0 < self.commit_prob < 1.0:
            raise DataError("commit probability must be in (0, 1)")
        hours = (self.start_hour, self.end_hour, self.segment_boundary_hour)
        if any(h < 0 or h >= 24 for h in hours):
            raise DataError("schedule hours must lie within [0, 24)")
        if not self.start_hour < self.end_hour:
            raise DataError("schedule must start before it ends")

    @property
    def total_minutes(self) -> int:
        return self.weeks * MINUTES_PER_WEEK


def default_scenario(weeks: int = 4) -> SimScenario:
    return SimScenario(weeks=weeks)


def regime_change_scenario(n_weeks: int) -> SimScenario:
    """2*n_weeks total; the second half mirrors the first (morning and
    afternoon coding means swapped)."""
    if n_weeks < 1:
        raise DataError("regime scenario needs n_weeks >= 1")
    return SimScenario(weeks=2 * n_weeks, regime_change=True)


def mirrored(scenario: SimScenario) -> SimScenario:
    return replace(
        scenario,
        mean_coding_morning=scenario.mean_coding_afternoon,
        mean_coding_afternoon=scenario.mean_coding_morning,
    )


def true_coding_rate(scenario: SimScenario, minute: int) -> float:
    """Long-run P(coding) the alternating-block process implies at the
    given window minute: m/(m+n) inside the schedule, 0 outside."""
    mean_coding = _segment_mean(scenario, minute)
    if mean_coding == 0.0:
        return 0.0
    return mean_coding / (mean_coding + scenario.mean_noncoding)


def _segment_mean(scenario: SimScenario, minute: int) -> float:
    """Coding-block mean for this window minute; 0 outside schedule."""
    abs_min = scenario.window_start + minute
    weekday = ((abs_min // MINUTES_PER_DAY) + 3) % 7  # epoch day 0 is Thursday
    if weekday not in scenario.weekdays:
        return 0.0
    minute_of_day = abs_min % MINUTES_PER_DAY
    hour = minute_of_day / 60.0
    if not scenario.start_hour <= hour < scenario.end_hour:
        return 0.0
    morning = hour < scenario.segment_boundary_hour
    swapped = scenario.regime_change and minute >= scenario.total_minutes // 2
    if morning != swapped:
        return scenario.mean_coding_morning
    return scenario.mean_coding_afternoon


def simulate_developer(
    scenario: SimScenario, seed: int
) -> tuple[DeveloperTimeline, np.ndarray]:
    """Returns the observable timeline and the hidden coding mask.

    Within scheduled hours the developer alternates coding and
    non-coding blocks; each minute exits the current block with
    probability 1/mean. Blocks truncate at schedule boundaries and
    every scheduled stretch starts in the coding state.
    """
    rng = np.random.default_rng(seed)
    T = scenario.total_minutes
    truth = np.zeros(T, dtype=bool)
    commit_at = np.zeros(T, dtype=bool)
    coding = False
    in_schedule = False
    for t in range(T):
        mean_coding = _segment_mean(scenario, t)
        if mean_coding == 0.0:
            in_schedule = False
            coding = False
            continue
        if not in_schedule:
            in_schedule = True
            coding = True
        else:
            exit_prob = 1.0 / (mean_coding if coding else scenario.mean_noncoding)
            if rng.random() < exit_prob:
                coding = not coding
        if coding:
            truth[t] = True
            if rng.random() < scenario.commit_prob:
                commit_at[t] = True
    timeline = DeveloperTimeline(
        author_id=f"sim-{seed}",
        window_start=scenario.window_start,
        T=T,
        commit_at=commit_at,
        commit_minutes=tuple(int(m) for m in np.nonzero(commit_at)[0]),
    )
    return timeline, truth


def true_interval_hours(timeline: DeveloperTimeline, truth: np.ndarray) -> np.ndarray:
    """Ground-truth coding hours per commit interval (a, b]."""
    out = []
    for a, b in timeline.intervals():
        out.append(float(np.sum(truth[a + 1 : b + 1])) / 60.0)
    return np.asarray(out)
