"""Train a standard coder and read its predictions.

Synthetic code changes are generated with a known time law: time grows
with the size of the change, saturating logarithmically, plus noise.
A mixture density network learns hours-given-features, and Standard
Coding Hours (SCH) is its truncated conditional mean on [0, 1].
Takes under a minute.

Run:  python3 demos/standard_coder.py
"""
import numpy as np

from codetime.analysis.studies import table1_report, yy_binning_validation
from codetime.mdn import MdnConfig, mdn_forward, predict_sch, train_mdn
from codetime.tokenizer import ChangeFeatures


def generate(n, seed):
    """Changes whose true time follows a saturating size law."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        added = int(rng.integers(1, 400))
        deleted = int(rng.integers(0, 200))
        counts = rng.poisson(0.03 * added, size=16)
        f = ChangeFeatures(
            token_counts=counts,
            files_touched=int(rng.integers(1, 11)),
            lines_added=added,
            lines_deleted=deleted,
            whitespace_count=int(2.5 * added) + int(rng.integers(0, 50)),
            total_tokens=int(counts.sum()) + 4 * added,
        )
        t = (0.06 + 0.5 * np.log1p(0.02 * (added + deleted)) / np.log1p(8.0)
             + 0.025 * f.files_touched)
        y = min(0.98, max(0.0, t + rng.normal() * 0.08 * (0.2 + t)))
        out.append((f, float(y)))
    return out


def main():
    data = generate(12000, seed=0)
    model = train_mdn(data[:10000], MdnConfig(seed=0))
    holdout = data[10000:]
    log = model.training_log
    print(f"trained on 10000 changes; holdout NLL "
          f"{log[0]['holdout_nll']:.3f} -> {log[-1]['holdout_nll']:.3f}")

    out = yy_binning_validation(model, holdout, bins=10)
    print(f"\npredicted vs actual over {out['bins']} holdout bins "
          f"(R^2 = {out['r_squared']:.3f}):")
    for row in out["table"]:
        print(f"  bin {row['bin']}: predicted {row['mean_predicted']:.3f}h, "
              f"actual {row['mean_actual']:.3f}h")

    t1 = table1_report(model, holdout)
    print("\nrank correlation with generated coding time:")
    for name, cols in t1["table"].items():
        print(f"  {name:28s} {cols['coding_time']:+.3f}")

    small = holdout[0][0]
    small_pred = mdn_forward(model, small)
    top = np.argsort(small_pred.pi)[-3:][::-1]
    print(f"\none holdout change ({small.lines_added} lines added, "
          f"{small.files_touched} files):")
    print(f"  SCH = {predict_sch(model, small):.3f} hours")
    print("  heaviest mixture components (weight, mean, sd):")
    for i in top:
        print(f"    {small_pred.pi[i]:.2f}  {small_pred.mu[i]:.3f}h  "
              f"{small_pred.sigma[i]:.3f}")


if __name__ == "__main__":
    main()
