"""Inference of hidden coding time from commit timestamps, and a
"standard coder" model that prices code changes in standard coding
hours (SCH).

The pieces compose left to right: `corpus` turns git history into
commit records, `hmm` infers when an author was coding, `tokenizer`
turns each change into features, `mdn` learns the distribution of
coding time given a change, and `analysis` holds the validation and
counterfactual studies. `cli` wires the same steps into subcommands.
"""

__version__ = "0.1.0"

from .ioutil import CodetimeError, DataError, derive_seed
from .corpus import (
    Commit,
    CommitCorpus,
    FileDiff,
    FilterRules,
    compute_diff,
    ingest_git_log,
    load_corpus,
    save_corpus,
    squash_commits,
    squash_corpus,
)
from .tokenizer import (
    ChangeFeatures,
    TokenDictionary,
    build_dictionary,
    feature_names,
    featurize,
    tokenize,
)
from .hmm import (
    CodingPosterior,
    DeveloperTimeline,
    HmmParams,
    TrainConfig,
    TrainResult,
    build_timelines,
    expected_coding_time,
    forward_backward,
    init_params,
    log_likelihood,
    sample_coding_times,
    sample_from_model,
    timeline_from_commits,
    train_hmm,
)
from .simulate import (
    SimScenario,
    default_scenario,
    regime_change_scenario,
    simulate_developer,
    true_coding_rate,
    true_interval_hours,
)
from .mdn import (
    MdnConfig,
    MdnModel,
    MixturePrediction,
    init_model,
    load_mdn_model,
    mdn_forward,
    mdn_loss,
    predict_sch,
    save_mdn_model,
    train_mdn,
    truncated_mixture_mean,
)

__all__ = [
    "__version__",
    "CodetimeError",
    "DataError",
    "derive_seed",
    "Commit",
    "CommitCorpus",
    "FileDiff",
    "FilterRules",
    "compute_diff",
    "ingest_git_log",
    "load_corpus",
    "save_corpus",
    "squash_commits",
    "squash_corpus",
    "ChangeFeatures",
    "TokenDictionary",
    "build_dictionary",
    "feature_names",
    "featurize",
    "tokenize",
    "CodingPosterior",
    "DeveloperTimeline",
    "HmmParams",
    "TrainConfig",
    "TrainResult",
    "build_timelines",
    "expected_coding_time",
    "forward_backward",
    "init_params",
    "log_likelihood",
    "sample_coding_times",
    "sample_from_model",
    "timeline_from_commits",
    "train_hmm",
    "SimScenario",
    "default_scenario",
    "regime_change_scenario",
    "simulate_developer",
    "true_coding_rate",
    "true_interval_hours",
    "MdnConfig",
    "MdnModel",
    "MixturePrediction",
    "init_model",
    "load_mdn_model",
    "mdn_forward",
    "mdn_loss",
    "predict_sch",
    "save_mdn_model",
    "train_mdn",
    "truncated_mixture_mean",
]
