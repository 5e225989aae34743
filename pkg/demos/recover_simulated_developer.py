"""Simulate a developer with a known schedule, then recover it.

A synthetic developer works weekdays 9 to 17, alternating coding and
non-coding blocks, and commits with probability 0.04 per coding
minute. Only the commit timestamps are shown to the model; the hidden
coding mask is kept for scoring. Takes a few seconds.

Run:  python3 demos/recover_simulated_developer.py
"""
import numpy as np

from codetime.hmm import TrainConfig, forward_backward, train_hmm
from codetime.simulate import default_scenario, simulate_developer

MINUTES_PER_DAY = 1440


def main():
    scenario = default_scenario(weeks=4)
    timeline, truth = simulate_developer(scenario, seed=0)
    print(f"simulated {timeline.n_commits} commits over {scenario.weeks} weeks;"
          f" true coding time {truth.sum() / 60:.1f} hours")

    result = train_hmm(timeline, TrainConfig(seed=0, max_epochs=200))
    print(f"trained in {result.epochs_run} epochs; log-likelihood "
          f"{result.log[0]:.1f} -> {result.best_log_likelihood:.1f}")

    post = forward_backward(timeline, result.params)
    r = np.corrcoef(post.smoothed, truth)[0, 1]
    est_hours = post.smoothed.sum() / 60
    print(f"estimated coding time {est_hours:.1f} hours "
          f"(truth {truth.sum() / 60:.1f}); per-minute correlation r={r:.3f}")

    # one Wednesday, hour by hour: # = truth, column = posterior
    day_start = 2 * MINUTES_PER_DAY  # Wednesday of week 1
    print("\nWednesday, week 1 (per hour: true coding minutes | P(coding)):")
    for hour in range(6, 22):
        sel = slice(day_start + hour * 60, day_start + (hour + 1) * 60)
        true_min = int(truth[sel].sum())
        p = post.smoothed[sel].mean()
        bar = "#" * int(round(p * 20))
        print(f"  {hour:02d}:00  {true_min:2d} min | {p:5.2f} {bar}")


if __name__ == "__main__":
    main()
