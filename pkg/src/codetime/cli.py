"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/model error. Every
artifact-producing command writes its outputs atomically and emits one
run manifest (<out>.manifest.json) recording the config, input/output
hashes, seed, wall time, and tool version; `pipeline` uses those
manifests to skip stages whose inputs have not changed. All
randomness fans out from the root --seed by stable derivation.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .corpus import (
    CommitCorpus,
    FilterRules,
    commit_from_record,
    commit_to_record,
    ingest_git_log,
    load_corpus,
    parse_patch_file,
    save_corpus,
    squash_corpus,
)
from .hmm import (
    DeveloperTimeline,
    TrainConfig,
    expected_coding_time,
    forward_backward,
    load_hmm_model,
    sample_interval_matrix,
    save_hmm_model,
    timeline_from_commits,
    train_hmm,
)
from .ioutil import (
    CodetimeError,
    DataError,
    atomic_write_text,
    derive_seed,
    dumps,
    file_sha256,
    read_json,
    read_ndjson,
    write_csv,
    write_json,
    write_ndjson,
)
from .mdn import (
    MdnConfig,
    load_mdn_model,
    mdn_forward,
    save_mdn_model,
    train_mdn_arrays,
    truncated_mixture_mean,
)
from .simulate import default_scenario, regime_change_scenario, simulate_developer
from .tokenizer import (
    TokenDictionary,
    build_dictionary,
    default_top_n,
    features_from_diffs,
    features_from_record,
    features_to_record,
    featurize,
)
from .analysis import (
    beta_grid_search,
    file_spread_counterfactual,
    probability_correction_test,
    project_correlation_study,
    table1_report,
    token_swap_cost,
    yy_binning_validation,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract here
    reserves 2 for data errors and uses 1 for usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


class UsageError(Exception):
    pass


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"missing required arguments: {flags}")


# --- manifests ----------------------------------------------------------------


def _hash_if_file(path: str) -> str | None:
    return file_sha256(path) if path and os.path.isfile(path) else None


def _write_manifest(
    out_path: str,
    command: str,
    config: dict,
    inputs: dict[str, str | None],
    outputs: list[str],
    seed: int,
    t0: float,
) -> None:
    write_json(
        out_path + ".manifest.json",
        {
            "command": command,
            "config": config,
            "inputs": inputs,
            "outputs": {p: _hash_if_file(p) for p in outputs},
            "seed": seed,
            "wall_time_s": time.monotonic() - t0,
            "version": __version__,
        },
    )


def _manifest_matches(out_path: str, config: dict, inputs: dict, outputs: list[str]) -> bool:
    """True when a previous run with identical inputs/config left all
    its outputs in place, so the stage can be skipped."""
    manifest_path = out_path + ".manifest.json"
    if not os.path.isfile(manifest_path):
        return False
    try:
        manifest = read_json(manifest_path)
    except (CodetimeError, ValueError):
        return False
    if manifest.get("inputs") != _plain_dict(inputs):
        return False
    if manifest.get("config") != _plain_dict(config):
        return False
    recorded = manifest.get("outputs", {})
    for path in outputs:
        if recorded.get(path) is None or _hash_if_file(path) != recorded[path]:
            return False
    return True


def _plain_dict(obj: dict) -> dict:
    import json

    return json.loads(dumps(obj))


# --- corpus helpers -----------------------------------------------------------


def _load_rules(path: str | None) -> FilterRules:
    return FilterRules.from_json(path) if path else FilterRules()


def _git_head(path: str) -> str | None:
    import subprocess

    try:
        out = subprocess.run(
            ["git", "-C", path, "rev-parse", "HEAD"],
            capture_output=True, text=True, check=True,
        )
        return out.stdout.strip()
    except (subprocess.CalledProcessError, FileNotFoundError):
        return None


def _read_corpus(path: str) -> CommitCorpus:
    if not os.path.isfile(path):
        raise DataError(f"corpus file not found: {path}")
    return load_corpus(path)


def _models_in_dir(models_dir: str) -> dict[str, tuple]:
    """author -> (params, meta, filename) for every model file found.
    Which timelines a model applies to is read from the file itself, so
    file names carry no meaning."""
    if not os.path.isdir(models_dir):
        raise DataError(f"model directory not found: {models_dir}")
    models = {}
    for name in sorted(os.listdir(models_dir)):
        if name.endswith(".manifest.json") or not name.endswith(".json"):
            continue
        params, meta = load_hmm_model(os.path.join(models_dir, name))
        models[meta["author"]] = (params, meta, name)
    if not models:
        raise DataError(f"no model files in {models_dir}")
    return models


def _safe_name(author: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in author)


# --- subcommands ----------------------------------------------------------------


def _cmd_ingest(args) -> int:
    t0 = time.monotonic()
    rules = _load_rules(args.rules)
    if os.path.isdir(args.path):
        corpus = ingest_git_log(args.path, rules, project_id=args.project)
        source_hash = _git_head(args.path)
    else:
        corpus = load_corpus(args.path, rules=rules)
        source_hash = _hash_if_file(args.path)
    corpus = squash_corpus(corpus, threshold_minutes=args.squash_threshold)
    save_corpus(corpus, args.out)
    for key, count in sorted(corpus.warnings.items()):
        print(f"warning: {key}: {count}", file=sys.stderr)
    config = {"squash_threshold": args.squash_threshold, "project": args.project}
    inputs = {"source": source_hash, "rules": _hash_if_file(args.rules)}
    _write_manifest(args.out, "ingest", config, inputs, [args.out], args.seed, t0)
    print(f"ingested {len(corpus.commits)} commits -> {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    t0 = time.monotonic()
    if args.scenario == "default":
        scenario = default_scenario(weeks=args.weeks)
    else:
        scenario = regime_change_scenario(n_weeks=args.weeks)
    seed = derive_seed(args.seed, "simulate", args.scenario, args.weeks)
    timeline, truth = simulate_developer(scenario, seed)
    records = [
        {
            "record": "timeline",
            "author": timeline.author_id,
            "window_start": timeline.window_start,
            "minutes": timeline.T,
            "commit_minutes": list(timeline.commit_minutes),
        },
        {
            "record": "truth",
            "coding_minutes": [int(m) for m in np.nonzero(truth)[0]],
        },
    ]
    write_ndjson(args.out, records)
    config = {"scenario": args.scenario, "weeks": args.weeks}
    _write_manifest(args.out, "simulate", config, {}, [args.out], args.seed, t0)
    print(f"simulated {timeline.n_commits} commits over {timeline.T} minutes -> {args.out}")
    return 0


def load_simulation(path: str) -> tuple[DeveloperTimeline, np.ndarray]:
    timeline = None
    truth = None
    for rec in read_ndjson(path):
        if rec.get("record") == "timeline":
            T = rec["minutes"]
            commit_at = np.zeros(T, dtype=bool)
            for m in rec["commit_minutes"]:
                commit_at[m] = True
            timeline = DeveloperTimeline(
                author_id=rec["author"],
                window_start=rec["window_start"],
                T=T,
                commit_at=commit_at,
                commit_minutes=tuple(rec["commit_minutes"]),
            )
        elif rec.get("record") == "truth":
            truth = rec["coding_minutes"]
    if timeline is None:
        raise DataError(f"{path} contains no timeline record")
    mask = np.zeros(timeline.T, dtype=bool)
    if truth is not None:
        mask[truth] = True
    return timeline, mask


def _train_config(args, author: str) -> TrainConfig:
    return TrainConfig(
        hidden=args.hidden,
        learning_rate=args.lr,
        max_epochs=args.max_epochs,
        min_commits=args.min_commits,
        seed=derive_seed(args.seed, "train-hmm", author),
    )


def _cmd_train_hmm(args) -> int:
    t0 = time.monotonic()
    if args.sim:
        timeline, _ = load_simulation(args.sim)
        source = args.sim
    else:
        if not args.corpus or not args.author:
            raise UsageError("either --sim or both --corpus and --author are required")
        corpus = _read_corpus(args.corpus)
        commits = [c for c in corpus.commits if c.author_id == args.author]
        if not commits:
            raise DataError(f"author {args.author!r} has no commits in the corpus")
        timeline = timeline_from_commits(args.author, commits)
        source = args.corpus
    config = _train_config(args, timeline.author_id)
    result = train_hmm(timeline, config)
    save_hmm_model(args.out, result, timeline)
    cfg = {"author": timeline.author_id, "hidden": args.hidden, "lr": args.lr,
           "max_epochs": args.max_epochs, "min_commits": args.min_commits}
    _write_manifest(args.out, "train-hmm", cfg, {"source": _hash_if_file(source)},
                    [args.out], args.seed, t0)
    print(
        f"trained {timeline.author_id}: log-likelihood "
        f"{result.log[0]:.3f} -> {result.best_log_likelihood:.3f} "
        f"in {result.epochs_run} epochs -> {args.out}"
    )
    return 0


def _coding_time_records(corpus, params_by_author, samples: int, root_seed: int):
    by_author = corpus.by_author()
    for author in sorted(params_by_author):
        if author not in by_author:
            continue
        params = params_by_author[author]
        timeline = timeline_from_commits(author, by_author[author])
        posterior = forward_backward(timeline, params)
        intervals = timeline.intervals()
        if not intervals:
            continue
        seed = derive_seed(root_seed, "coding-times", author)
        hours = sample_interval_matrix(timeline, params, intervals, samples, seed)
        ids = timeline.commit_ids or ()
        for row, ((a, b), cid) in enumerate(zip(intervals, ids[1:])):
            yield {
                "commit": cid,
                "interval_minutes": b - a,
                "expected_hours": expected_coding_time(posterior, (a, b)),
                "samples": hours[row].tolist(),
            }


def _cmd_coding_times(args) -> int:
    t0 = time.monotonic()
    corpus = _read_corpus(args.corpus)
    models = _models_in_dir(args.models_dir)
    params_by_author = {a: v[0] for a, v in models.items()}
    records = list(_coding_time_records(corpus, params_by_author,
                                        args.samples, args.seed))
    if not records:
        raise DataError("no commit intervals: every modeled author has <2 commits")
    write_ndjson(args.out, records)
    model_hashes = {
        f"model:{author}": _hash_if_file(os.path.join(args.models_dir, v[2]))
        for author, v in models.items()
    }
    config = {"samples": args.samples}
    inputs = {"corpus": _hash_if_file(args.corpus), **model_hashes}
    _write_manifest(args.out, "coding-times", config, inputs, [args.out], args.seed, t0)
    print(f"wrote {len(records)} interval records -> {args.out}")
    return 0


def _cmd_build_dict(args) -> int:
    t0 = time.monotonic()
    corpus = _read_corpus(args.corpus)
    top_n = args.top_n if args.top_n is not None else default_top_n(args.lang)
    dictionary = build_dictionary(corpus, args.lang, top_n)
    dictionary.to_json(args.out)
    config = {"lang": args.lang, "top_n": top_n}
    _write_manifest(args.out, "build-dict", config,
                    {"corpus": _hash_if_file(args.corpus)}, [args.out], args.seed, t0)
    print(f"dictionary of {dictionary.size} tokens -> {args.out}")
    return 0


def _cmd_featurize(args) -> int:
    t0 = time.monotonic()
    corpus = _read_corpus(args.corpus)
    dictionary = TokenDictionary.from_json(args.dict)
    records = [{"record": "header", "dictionary_hash": file_sha256(args.dict),
                "width": dictionary.size + 5}]
    for commit in corpus.commits:
        records.append(features_to_record(commit, featurize(commit, dictionary)))
    write_ndjson(args.out, records)
    config = {}
    inputs = {"corpus": _hash_if_file(args.corpus), "dict": _hash_if_file(args.dict)}
    _write_manifest(args.out, "featurize", config, inputs, [args.out], args.seed, t0)
    print(f"featurized {len(records) - 1} commits -> {args.out}")
    return 0


def _load_features(path: str):
    """Returns (records by commit id, dictionary hash, dict size)."""
    header = None
    by_commit = {}
    for rec in read_ndjson(path):
        if rec.get("record") == "header":
            header = rec
            continue
        by_commit[rec["commit"]] = rec
    if header is None:
        raise DataError(f"{path} has no header record; rerun featurize")
    return by_commit, header["dictionary_hash"], header["width"] - 5


def _cmd_train_mdn(args) -> int:
    t0 = time.monotonic()
    by_commit, dict_hash, dict_size = _load_features(args.features)
    X_rows = []
    y_rows = []
    n_commits = 0
    for rec in read_ndjson(args.coding_times):
        feat_rec = by_commit.get(rec["commit"])
        if feat_rec is None:
            continue
        feats = features_from_record(feat_rec, dict_size)
        x = feats.transformed
        n_commits += 1
        for y in rec["samples"][: args.max_samples]:
            X_rows.append(x)
            y_rows.append(y)
    if not X_rows:
        raise DataError("no overlap between features and coding-time records")
    X = np.stack(X_rows)
    y = np.asarray(y_rows, dtype=np.float64)
    config = MdnConfig(
        hidden=tuple(args.hidden),
        epochs=args.epochs,
        batch_size=args.batch_size,
        holdout_fraction=args.holdout,
        learning_rate=args.lr,
        seed=derive_seed(args.seed, "train-mdn"),
    )
    model = train_mdn_arrays(X, y, config, dictionary_hash=dict_hash)
    save_mdn_model(args.out, model)
    cfg = {"hidden": list(args.hidden), "epochs": args.epochs,
           "batch_size": args.batch_size, "holdout": args.holdout,
           "lr": args.lr, "max_samples": args.max_samples}
    inputs = {"features": _hash_if_file(args.features),
              "coding_times": _hash_if_file(args.coding_times)}
    _write_manifest(args.out, "train-mdn", cfg, inputs, [args.out], args.seed, t0)
    last = model.training_log[-1]
    print(
        f"trained standard coder on {len(y_rows)} samples from {n_commits} "
        f"commits; final train NLL {last['train_nll']:.4f} -> {args.out}"
    )
    return 0


def _cmd_predict(args) -> int:
    if not os.path.isfile(args.model):
        raise DataError(f"model file not found: {args.model}")
    if not os.path.isfile(args.dict):
        raise DataError(f"dictionary file not found: {args.dict}")
    model = load_mdn_model(args.model)
    if model.dictionary_hash and model.dictionary_hash != file_sha256(args.dict):
        raise DataError(
            "dictionary file does not match the one the model was trained with"
        )
    dictionary = TokenDictionary.from_json(args.dict)
    diffs = parse_patch_file(args.patch)
    feats = features_from_diffs(diffs, dictionary)
    pred = mdn_forward(model, feats)
    sch = truncated_mixture_mean(pred, args.bounds[0], args.bounds[1])
    print(dumps({
        "sch_hours": sch,
        "sch_minutes": sch * 60.0,
        "mixture": {
            "pi": pred.pi.tolist(),
            "mu": pred.mu.tolist(),
            "sigma": pred.sigma.tolist(),
        },
    }))
    return 0


# --- analyze -------------------------------------------------------------------


def _features_and_targets(features_path: str, intervals_path: str,
                          max_interval_minutes: int | None = None):
    """Join features with coding-time records; y is the expected hours
    unless max_interval_minutes is set, in which case only short
    intervals are kept and the raw interval is the ground truth."""
    by_commit, _, dict_size = _load_features(features_path)
    feats = []
    y = []
    extras = []
    for rec in read_ndjson(intervals_path):
        feat_rec = by_commit.get(rec["commit"])
        if feat_rec is None:
            continue
        if max_interval_minutes is not None:
            if rec["interval_minutes"] >= max_interval_minutes:
                continue
            target = rec["interval_minutes"] / 60.0
        else:
            target = rec["expected_hours"]
        feats.append(features_from_record(feat_rec, dict_size))
        y.append(target)
        extras.append(rec)
    if not feats:
        raise DataError("no usable (features, coding time) pairs")
    return feats, np.asarray(y), extras


def _cmd_analyze(args) -> int:
    t0 = time.monotonic()
    study = args.study
    plot_path = args.plot or (os.path.splitext(args.out)[0] + ".csv")
    inputs: dict[str, str | None] = {}
    config: dict = {"study": study}

    if study == "yy":
        _require(args, "model", "features", "coding_times")
        model = load_mdn_model(args.model)
        feats, y, _ = _features_and_targets(
            args.features, args.coding_times, max_interval_minutes=60)
        report = yy_binning_validation(model, list(zip(feats, y)), bins=args.bins)
        rows = [(b["bin"], b["n"], b["mean_predicted"], b["mean_actual"])
                for b in report["table"]]
        write_csv(plot_path, ["bin", "n", "mean_predicted", "mean_actual"], rows)
        inputs = {"model": _hash_if_file(args.model),
                  "features": _hash_if_file(args.features),
                  "coding_times": _hash_if_file(args.coding_times)}
        config["bins"] = args.bins

    elif study == "correction":
        _require(args, "corpus", "models_dir")
        corpus = _read_corpus(args.corpus)
        models = _models_in_dir(args.models_dir)
        by_author = corpus.by_author()
        reports = []
        rows = []
        for author in sorted(models):
            if args.author and author != args.author:
                continue
            if author not in by_author:
                continue
            params = models[author][0]
            timeline = timeline_from_commits(author, by_author[author])
            rep = probability_correction_test(params, timeline)
            reports.append(rep)
            for d, m in enumerate(rep["mean_correction_by_decile"]):
                if m is not None:
                    rows.append((author, d, m))
        if not reports:
            raise DataError("no authors with both commits and models")
        report = {"authors": reports}
        write_csv(plot_path, ["author", "decile", "mean_correction"], rows)
        inputs = {"corpus": _hash_if_file(args.corpus)}

    elif study == "project-corr":
        _require(args, "corpus", "models_dir", "model", "dict")
        corpus = _read_corpus(args.corpus)
        models = {a: v[0] for a, v in _models_in_dir(args.models_dir).items()}
        mdn = load_mdn_model(args.model)
        dictionary = TokenDictionary.from_json(args.dict)
        result = project_correlation_study(
            corpus, models, mdn, dictionary, min_commits=args.min_commits)
        report = {k: v for k, v in result.items() if k != "reports"}
        rows = [(r["project"], r["n_commits"], r["mean_expected_hours"],
                 r["mean_sch_hours"], r["mean_lines_added"], r["mean_churn"])
                for r in result["projects"]]
        write_csv(plot_path,
                  ["project", "n_commits", "mean_expected_hours",
                   "mean_sch_hours", "mean_lines_added", "mean_churn"], rows)
        inputs = {"corpus": _hash_if_file(args.corpus),
                  "model": _hash_if_file(args.model),
                  "dict": _hash_if_file(args.dict)}
        config["min_commits"] = args.min_commits

    elif study == "table1":
        _require(args, "model", "features", "coding_times")
        model = load_mdn_model(args.model)
        feats, y, _ = _features_and_targets(args.features, args.coding_times)
        result = table1_report(model, list(zip(feats, y)))
        report = {k: v for k, v in result.items() if k != "reports"}
        rows = [(name, cells["coding_time"], cells["prediction"])
                for name, cells in result["table"].items()]
        write_csv(plot_path, ["criterion", "vs_coding_time", "vs_prediction"], rows)
        inputs = {"model": _hash_if_file(args.model),
                  "features": _hash_if_file(args.features),
                  "coding_times": _hash_if_file(args.coding_times)}

    elif study == "beta":
        _require(args, "features", "coding_times")
        feats, y, _ = _features_and_targets(args.features, args.coding_times)
        report = beta_grid_search(
            [f.lines_added for f in feats], [f.lines_deleted for f in feats], y)
        rows = [(e["beta"], e["spearman"]) for e in report["evaluations"]]
        write_csv(plot_path, ["beta", "spearman"], rows)
        inputs = {"features": _hash_if_file(args.features),
                  "coding_times": _hash_if_file(args.coding_times)}

    elif study == "file-spread":
        _require(args, "model", "features")
        model = load_mdn_model(args.model)
        by_commit, _, dict_size = _load_features(args.features)
        feats = [features_from_record(rec, dict_size)
                 for _, rec in sorted(by_commit.items())]
        report = file_spread_counterfactual(model, feats, max_files=args.max_files)
        rows = [(e["from_files"], e["to_files"], e["mean_delta_seconds"],
                 e["wilcoxon_p"]) for e in report["per_k"]]
        write_csv(plot_path,
                  ["from_files", "to_files", "mean_delta_seconds", "wilcoxon_p"],
                  rows)
        inputs = {"model": _hash_if_file(args.model),
                  "features": _hash_if_file(args.features)}
        config["max_files"] = args.max_files

    elif study == "token-swap":
        _require(args, "model", "dict", "features", "token_a", "token_b")
        model = load_mdn_model(args.model)
        dictionary = TokenDictionary.from_json(args.dict)
        by_commit, _, dict_size = _load_features(args.features)
        feats = [features_from_record(rec, dict_size)
                 for _, rec in sorted(by_commit.items())]
        ab, ba = token_swap_cost(
            model, dictionary, feats, args.token_a, args.token_b,
            resamples=args.resamples,
            seed=derive_seed(args.seed, "token-swap", args.token_a, args.token_b),
        )
        report = {"costs": [ab.to_dict(), ba.to_dict()]}
        rows = [(r.token_a, r.token_b, r.mean_delta_seconds, r.p_value, r.n)
                for r in (ab, ba)]
        write_csv(plot_path,
                  ["from_token", "to_token", "mean_delta_seconds", "p_value", "n"],
                  rows)
        inputs = {"model": _hash_if_file(args.model),
                  "dict": _hash_if_file(args.dict),
                  "features": _hash_if_file(args.features)}
        config.update({"token_a": args.token_a, "token_b": args.token_b,
                       "resamples": args.resamples})

    else:  # unreachable: argparse restricts choices
        raise DataError(f"unknown study {study!r}")

    write_json(args.out, report)
    _write_manifest(args.out, f"analyze {study}", config, inputs,
                    [args.out, plot_path], args.seed, t0)
    print(f"analyze {study} -> {args.out} and {plot_path}")
    return 0


# --- pipeline -------------------------------------------------------------------


def _train_author_worker(payload):
    """Top-level so process pools can pickle it."""
    author, corpus_path, out_path, cfg_dict, root_seed = payload
    try:
        corpus = _read_corpus(corpus_path)
        commits = [c for c in corpus.commits if c.author_id == author]
        timeline = timeline_from_commits(author, commits)
        config = TrainConfig(
            hidden=cfg_dict["hidden"],
            learning_rate=cfg_dict["lr"],
            max_epochs=cfg_dict["max_epochs"],
            min_commits=cfg_dict["min_commits"],
            seed=derive_seed(root_seed, "train-hmm", author),
        )
        result = train_hmm(timeline, config)
        save_hmm_model(out_path, result, timeline)
        return author, None
    except CodetimeError as exc:
        return author, str(exc)


def _load_pipeline_config(path: str) -> dict:
    if not os.path.isfile(path):
        raise DataError(f"config file not found: {path}")
    if path.endswith(".json"):
        return read_json(path)
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _cmd_pipeline(args) -> int:
    cfg = _load_pipeline_config(args.config)
    pcfg = cfg.get("pipeline", {})
    out_dir = pcfg.get("out_dir", "artifacts")
    seed = int(pcfg.get("seed", args.seed))
    jobs = args.jobs
    os.makedirs(out_dir, exist_ok=True)

    def path(name: str) -> str:
        return os.path.join(out_dir, name)

    statuses: list[tuple[str, str]] = []
    failed = False

    # ingest
    t0 = time.monotonic()
    icfg = cfg.get("ingest", {})
    source = icfg.get("source")
    if not source:
        raise DataError("config lacks ingest.source")
    rules_path = icfg.get("rules")
    corpus_path = path("corpus.ndjson")
    stage_cfg = {"squash_threshold": icfg.get("squash_threshold", 2),
                 "project": icfg.get("project")}
    source_hash = _git_head(source) if os.path.isdir(source) else _hash_if_file(source)
    inputs = {"source": source_hash, "rules": _hash_if_file(rules_path)}
    if not args.force and _manifest_matches(corpus_path, stage_cfg, inputs, [corpus_path]):
        statuses.append(("ingest", "skipped"))
    else:
        rules = _load_rules(rules_path)
        if os.path.isdir(source):
            corpus = ingest_git_log(source, rules, project_id=icfg.get("project"))
        else:
            corpus = load_corpus(source, rules=rules)
        corpus = squash_corpus(corpus, threshold_minutes=stage_cfg["squash_threshold"])
        save_corpus(corpus, corpus_path)
        _write_manifest(corpus_path, "ingest", stage_cfg, inputs, [corpus_path], seed, t0)
        statuses.append(("ingest", "ok"))

    corpus = _read_corpus(corpus_path)
    corpus_hash = _hash_if_file(corpus_path)

    # dictionary
    t0 = time.monotonic()
    dcfg = cfg.get("dictionary", {})
    lang = dcfg.get("language", "java")
    top_n = dcfg.get("top_n", default_top_n(lang))
    dict_path = path("dict.json")
    stage_cfg = {"lang": lang, "top_n": top_n}
    inputs = {"corpus": corpus_hash}
    if not args.force and _manifest_matches(dict_path, stage_cfg, inputs, [dict_path]):
        statuses.append(("build-dict", "skipped"))
    else:
        build_dictionary(corpus, lang, top_n).to_json(dict_path)
        _write_manifest(dict_path, "build-dict", stage_cfg, inputs, [dict_path], seed, t0)
        statuses.append(("build-dict", "ok"))
    dict_hash_file = _hash_if_file(dict_path)

    # featurize
    t0 = time.monotonic()
    features_path = path("features.ndjson")
    inputs = {"corpus": corpus_hash, "dict": dict_hash_file}
    if not args.force and _manifest_matches(features_path, {}, inputs, [features_path]):
        statuses.append(("featurize", "skipped"))
    else:
        dictionary = TokenDictionary.from_json(dict_path)
        records = [{"record": "header", "dictionary_hash": file_sha256(dict_path),
                    "width": dictionary.size + 5}]
        for commit in corpus.commits:
            records.append(features_to_record(commit, featurize(commit, dictionary)))
        write_ndjson(features_path, records)
        _write_manifest(features_path, "featurize", {}, inputs, [features_path], seed, t0)
        statuses.append(("featurize", "ok"))

    # train-hmm per author
    hcfg = cfg.get("hmm", {})
    train_cfg = {
        "hidden": hcfg.get("hidden", 16),
        "lr": hcfg.get("learning_rate", 1e-2),
        "max_epochs": hcfg.get("max_epochs", 800),
        "min_commits": hcfg.get("min_commits", 50),
    }
    by_author = corpus.by_author()
    authors = hcfg.get("authors") or [
        a for a, commits in sorted(by_author.items())
        if len(commits) >= train_cfg["min_commits"]
    ]
    if not authors:
        raise DataError(
            f"no author reaches min_commits={train_cfg['min_commits']}")
    models_dir = path("models")
    os.makedirs(models_dir, exist_ok=True)
    todo = []
    model_paths = {}
    for author in authors:
        out_path = os.path.join(models_dir, _safe_name(author) + ".json")
        model_paths[author] = out_path
        inputs = {"corpus": corpus_hash, "author": author}
        if not args.force and _manifest_matches(out_path, train_cfg, inputs, [out_path]):
            statuses.append((f"train-hmm {author}", "skipped"))
        else:
            todo.append((author, corpus_path, out_path, train_cfg, seed))
    if todo:
        if jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_train_author_worker, todo))
        else:
            results = [_train_author_worker(item) for item in todo]
        t0 = time.monotonic()
        for author, error in results:
            if error is None:
                _write_manifest(model_paths[author], "train-hmm", train_cfg,
                                {"corpus": corpus_hash, "author": author},
                                [model_paths[author]], seed, t0)
                statuses.append((f"train-hmm {author}", "ok"))
            else:
                statuses.append((f"train-hmm {author}", f"failed: {error}"))
                failed = True
    trained = [a for a in authors if os.path.isfile(model_paths[a])]
    if not trained:
        for stage, status in statuses:
            print(f"{stage}: {status}")
        print("pipeline aborted: no author trained successfully", file=sys.stderr)
        return 2

    # coding-times
    t0 = time.monotonic()
    ccfg = cfg.get("coding_times", {})
    samples = ccfg.get("samples", 200)
    intervals_path = path("intervals.ndjson")
    model_hashes = {f"model:{a}": _hash_if_file(model_paths[a]) for a in trained}
    stage_cfg = {"samples": samples}
    inputs = {"corpus": corpus_hash, **model_hashes}
    if not args.force and _manifest_matches(intervals_path, stage_cfg, inputs,
                                            [intervals_path]):
        statuses.append(("coding-times", "skipped"))
    else:
        params_by_author = {a: load_hmm_model(model_paths[a])[0] for a in trained}
        records = list(_coding_time_records(corpus, params_by_author, samples, seed))
        if not records:
            raise DataError("no commit intervals for any trained author")
        write_ndjson(intervals_path, records)
        _write_manifest(intervals_path, "coding-times", stage_cfg, inputs,
                        [intervals_path], seed, t0)
        statuses.append(("coding-times", "ok"))

    # train-mdn
    t0 = time.monotonic()
    mcfg = cfg.get("mdn", {})
    mdn_path = path("mdn.model")
    stage_cfg = {
        "hidden": list(mcfg.get("hidden", [256, 64, 64, 64, 64])),
        "epochs": mcfg.get("epochs", 20),
        "batch_size": mcfg.get("batch_size", 1024),
        "holdout": mcfg.get("holdout_fraction", 0.1),
        "lr": mcfg.get("learning_rate", 1e-3),
        "max_samples": mcfg.get("max_samples_per_commit", 200),
    }
    inputs = {"features": _hash_if_file(features_path),
              "coding_times": _hash_if_file(intervals_path)}
    if not args.force and _manifest_matches(mdn_path, stage_cfg, inputs, [mdn_path]):
        statuses.append(("train-mdn", "skipped"))
    else:
        ns = argparse.Namespace(
            features=features_path, coding_times=intervals_path, out=mdn_path,
            hidden=stage_cfg["hidden"], epochs=stage_cfg["epochs"],
            batch_size=stage_cfg["batch_size"], holdout=stage_cfg["holdout"],
            lr=stage_cfg["lr"], max_samples=stage_cfg["max_samples"], seed=seed,
        )
        _cmd_train_mdn(ns)
        _write_manifest(mdn_path, "train-mdn", stage_cfg, inputs, [mdn_path], seed, t0)
        statuses.append(("train-mdn", "ok"))

    # analyses
    acfg = cfg.get("analyze", {})
    for study in acfg.get("studies", []):
        out_path = path(f"report-{study}.json")
        plot_path = os.path.splitext(out_path)[0] + ".csv"
        study_cfg = {
            "study": study,
            "bins": acfg.get("bins", 50),
            "min_commits": acfg.get("min_commits", 500),
            "max_files": acfg.get("max_files", 10),
            "token_a": acfg.get("token_a", "private"),
            "token_b": acfg.get("token_b", "public"),
            "resamples": acfg.get("resamples", 100000),
        }
        inputs = {
            "corpus": corpus_hash,
            "dict": dict_hash_file,
            "features": _hash_if_file(features_path),
            "coding_times": _hash_if_file(intervals_path),
            "mdn": _hash_if_file(mdn_path),
        }
        if not args.force and _manifest_matches(out_path, study_cfg, inputs,
                                                [out_path, plot_path]):
            statuses.append((f"analyze {study}", "skipped"))
            continue
        t0 = time.monotonic()
        ns = argparse.Namespace(
            study=study, out=out_path, plot=plot_path, seed=seed,
            model=mdn_path, dict=dict_path, features=features_path,
            coding_times=intervals_path, corpus=corpus_path,
            models_dir=models_dir, author=None,
            bins=study_cfg["bins"],
            min_commits=study_cfg["min_commits"],
            max_files=study_cfg["max_files"],
            token_a=study_cfg["token_a"],
            token_b=study_cfg["token_b"],
            resamples=study_cfg["resamples"],
        )
        try:
            _cmd_analyze(ns)
            _write_manifest(out_path, f"analyze {study}", study_cfg, inputs,
                            [out_path, plot_path], seed, t0)
            statuses.append((f"analyze {study}", "ok"))
        except CodetimeError as exc:
            statuses.append((f"analyze {study}", f"failed: {exc}"))
            failed = True

    for stage, status in statuses:
        print(f"{stage}: {status}")
    return 2 if failed else 0


# --- parser --------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="codetime",
                     description="Coding-time inference and the standard coder.")
    parser.add_argument("--seed", type=int, default=0,
                        help="root random seed (default 0)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker cap for parallel stages (default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="git history or NDJSON export -> corpus")
    p.add_argument("path", help="git repository directory or corpus NDJSON file")
    p.add_argument("--rules", help="filter-rules JSON file")
    p.add_argument("--project", help="project id for repository ingests")
    p.add_argument("--squash-threshold", type=int, default=2,
                   help="merge runs of commits closer than this many minutes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("simulate", help="synthetic developer with ground truth")
    p.add_argument("--scenario", choices=["default", "regime"], default="default")
    p.add_argument("--weeks", type=int, default=4,
                   help="total weeks (default scenario) or weeks per regime")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train-hmm", help="train one author's coding-time model")
    p.add_argument("--corpus")
    p.add_argument("--author")
    p.add_argument("--sim", help="train on a simulate output instead of a corpus")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--max-epochs", type=int, default=800)
    p.add_argument("--min-commits", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_hmm)

    p = sub.add_parser("coding-times",
                       help="per-commit expected coding time and samples")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models-dir", required=True)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_coding_times)

    p = sub.add_parser("build-dict", help="token dictionary from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lang", default="java")
    p.add_argument("--top-n", type=int, default=None,
                   help="frequent words to keep (default fills width 116)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_dict)

    p = sub.add_parser("featurize", help="bag-of-token features per commit")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train-mdn", help="train the standard coder")
    p.add_argument("--features", required=True)
    p.add_argument("--coding-times", required=True)
    p.add_argument("--hidden", type=int, nargs="+",
                   default=[256, 64, 64, 64, 64])
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--max-samples", type=int, default=200,
                   help="coding-time samples used per commit")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_mdn)

    p = sub.add_parser("predict", help="SCH for a patch file")
    p.add_argument("--model", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--patch", required=True)
    p.add_argument("--bounds", type=_parse_bounds, default=(0.0, 1.0),
                   help="truncation bounds in hours, e.g. 0,1")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("analyze", help="validation and counterfactual studies")
    p.add_argument("study", choices=["yy", "correction", "project-corr",
                                     "table1", "beta", "file-spread",
                                     "token-swap"])
    p.add_argument("--model", help="standard-coder model file")
    p.add_argument("--dict")
    p.add_argument("--features")
    p.add_argument("--coding-times")
    p.add_argument("--corpus")
    p.add_argument("--models-dir")
    p.add_argument("--author")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--min-commits", type=int, default=500)
    p.add_argument("--max-files", type=int, default=10)
    p.add_argument("--token-a")
    p.add_argument("--token-b")
    p.add_argument("--resamples", type=int, default=100000)
    p.add_argument("--plot", help="plot-data CSV path (default: out with .csv)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("pipeline", help="run every stage from one config file")
    p.add_argument("--config", required=True, help="TOML or JSON config")
    p.add_argument("--force", action="store_true",
                   help="rerun every stage even when inputs are unchanged")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def _parse_bounds(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("bounds must be two numbers, e.g. 0,1")
    return float(parts[0]), float(parts[1])


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except CodetimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
