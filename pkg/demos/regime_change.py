"""Detect a mid-window shift in working habits.

The simulated developer codes intensely in the morning for 13 weeks,
then swaps morning and afternoon intensity for another 13. The
transition network only sees commit timestamps, yet its learned
commit-rate clock reproduces the flip. Training the long window takes
about a minute.

Run:  python3 demos/regime_change.py
"""
import numpy as np

from codetime.hmm import TrainConfig, commit_rate_curve, train_hmm
from codetime.simulate import regime_change_scenario, simulate_developer

MINUTES_PER_DAY = 1440


def weekday_hour_means(scenario, curve, half):
    """Mean rate per hour of day over weekday minutes of one half."""
    T = scenario.total_minutes
    lo, hi = (0, T // 2) if half == 0 else (T // 2, T)
    sums = np.zeros(24)
    counts = np.zeros(24)
    for t in range(lo, hi):
        abs_min = scenario.window_start + t
        if ((abs_min // MINUTES_PER_DAY) + 3) % 7 >= 5:
            continue
        hour = (abs_min % MINUTES_PER_DAY) // 60
        sums[hour] += curve[t]
        counts[hour] += 1
    return sums / np.maximum(counts, 1)


def main():
    scenario = regime_change_scenario(13)
    timeline, _ = simulate_developer(scenario, seed=0)
    print(f"simulated {timeline.n_commits} commits over {scenario.weeks} "
          f"weeks; morning/afternoon intensity swaps at week 13")

    result = train_hmm(timeline, TrainConfig(seed=0, max_epochs=800))
    print(f"trained in {result.epochs_run} epochs\n")

    curve = commit_rate_curve(timeline, result.params)
    for half, label in ((0, "weeks 1-13"), (1, "weeks 14-26")):
        means = weekday_hour_means(scenario, curve, half)
        print(f"learned weekday commit rate, {label}:")
        for hour in range(8, 18):
            bar = "#" * int(round(means[hour] * 2500))
            print(f"  {hour:02d}:00  {means[hour]:.4f} {bar}")
        morning = means[9:13].mean()
        afternoon = means[13:17].mean()
        print(f"  morning minus afternoon: {morning - afternoon:+.4f}\n")


if __name__ == "__main__":
    main()
