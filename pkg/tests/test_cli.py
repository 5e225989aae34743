import json
import os
import subprocess

import numpy as np
import pytest

from codetime.cli import run
from codetime.hmm import load_hmm_model
from codetime.ioutil import file_sha256, read_json, read_ndjson

AUTHOR = "dev1@example.com"


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory, fixture_repo):
    """One full pass of the toolchain over the fixture repository."""
    d = tmp_path_factory.mktemp("cli")
    paths = {
        "corpus": str(d / "corpus.ndjson"),
        "dict": str(d / "dict.json"),
        "features": str(d / "features.ndjson"),
        "hmm": str(d / "hmm.json"),
        "intervals": str(d / "intervals.ndjson"),
        "mdn": str(d / "mdn.model"),
        "patch": str(d / "head.patch"),
    }
    assert run(["ingest", fixture_repo, "--out", paths["corpus"]]) == 0
    assert run(["build-dict", "--corpus", paths["corpus"], "--top-n", "30",
                "--out", paths["dict"]]) == 0
    assert run(["featurize", "--corpus", paths["corpus"], "--dict",
                paths["dict"], "--out", paths["features"]]) == 0
    assert run(["train-hmm", "--corpus", paths["corpus"], "--author", AUTHOR,
                "--max-epochs", "25", "--min-commits", "40",
                "--out", paths["hmm"]]) == 0
    os.mkdir(str(d / "models"))
    os.link(paths["hmm"], str(d / "models" / "dev1.json"))
    paths["models_dir"] = str(d / "models")
    assert run(["coding-times", "--corpus", paths["corpus"], "--models-dir",
                paths["models_dir"], "--samples", "20",
                "--out", paths["intervals"]]) == 0
    assert run(["train-mdn", "--features", paths["features"],
                "--coding-times", paths["intervals"], "--hidden", "16", "8",
                "--epochs", "5", "--batch-size", "32",
                "--out", paths["mdn"]]) == 0
    patch = subprocess.run(
        ["git", "-C", fixture_repo, "show", "HEAD"],
        check=True, capture_output=True, text=True).stdout
    with open(paths["patch"], "w") as fh:
        fh.write(patch)
    return paths


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        assert run(["featurize", "--corpus", "x", "--out", "y"]) == 1
        assert "--dict" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path, capsys):
        out = str(tmp_path / "m.model")
        code = run(["train-mdn", "--features", "/nonexistent/f.ndjson",
                    "--coding-times", "/nonexistent/c.ndjson", "--out", out])
        assert code == 2
        assert "/nonexistent/f.ndjson" in capsys.readouterr().err

    def test_analyze_reports_missing_study_inputs(self, tmp_path, capsys):
        assert run(["analyze", "yy", "--out", str(tmp_path / "r.json")]) == 1
        err = capsys.readouterr().err
        assert "--model" in err and "--features" in err

    def test_train_hmm_needs_a_source(self, tmp_path, capsys):
        assert run(["train-hmm", "--out", str(tmp_path / "m.json")]) == 1
        assert "--sim" in capsys.readouterr().err


class TestIngest:
    def test_corpus_and_manifest(self, artifacts):
        records = list(read_ndjson(artifacts["corpus"]))
        assert len(records) >= 50
        manifest = read_json(artifacts["corpus"] + ".manifest.json")
        assert manifest["command"] == "ingest"
        assert set(manifest) == {"command", "config", "inputs", "outputs",
                                 "seed", "wall_time_s", "version"}
        recorded = manifest["outputs"][artifacts["corpus"]]
        assert recorded == file_sha256(artifacts["corpus"])

    def test_missing_repo_exits_two(self, tmp_path, capsys):
        code = run(["ingest", str(tmp_path / "no-repo"),
                    "--out", str(tmp_path / "c.ndjson")])
        assert code == 2


class TestFeaturize:
    def test_header_record_pins_the_dictionary(self, artifacts):
        records = list(read_ndjson(artifacts["features"]))
        header = records[0]
        assert header["record"] == "header"
        assert header["dictionary_hash"] == file_sha256(artifacts["dict"])
        n_commits = len(list(read_ndjson(artifacts["corpus"])))
        assert len(records) == n_commits + 1

    def test_width_matches_dictionary(self, artifacts):
        header = next(iter(read_ndjson(artifacts["features"])))
        dictionary = read_json(artifacts["dict"])
        n_tokens = (len(dictionary["separators"]) + len(dictionary["keywords"])
                    + len(dictionary["frequent_words"]))
        assert header["width"] == n_tokens + 5


class TestSimulate:
    def test_same_seed_same_bytes(self, tmp_path):
        a, b = str(tmp_path / "a.ndjson"), str(tmp_path / "b.ndjson")
        assert run(["--seed", "5", "simulate", "--weeks", "1", "--out", a]) == 0
        assert run(["--seed", "5", "simulate", "--weeks", "1", "--out", b]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_seed_changes_the_draw(self, tmp_path):
        a, b = str(tmp_path / "a.ndjson"), str(tmp_path / "b.ndjson")
        assert run(["--seed", "5", "simulate", "--weeks", "1", "--out", a]) == 0
        assert run(["--seed", "6", "simulate", "--weeks", "1", "--out", b]) == 0
        assert open(a, "rb").read() != open(b, "rb").read()

    def test_truth_record_present(self, tmp_path):
        out = str(tmp_path / "sim.ndjson")
        assert run(["simulate", "--weeks", "1", "--out", out]) == 0
        records = {r["record"]: r for r in read_ndjson(out)}
        assert set(records) == {"timeline", "truth"}
        assert records["timeline"]["minutes"] == 7 * 24 * 60
        commit_set = set(records["timeline"]["commit_minutes"])
        assert commit_set <= set(records["truth"]["coding_minutes"])


class TestTrainHmm:
    def test_model_file_loads(self, artifacts):
        params, meta = load_hmm_model(artifacts["hmm"])
        assert meta["author"] == AUTHOR
        assert params.flatten().size == 131

    def test_training_on_a_simulation(self, tmp_path):
        sim = str(tmp_path / "sim.ndjson")
        model = str(tmp_path / "model.json")
        assert run(["simulate", "--weeks", "2", "--out", sim]) == 0
        assert run(["train-hmm", "--sim", sim, "--max-epochs", "5",
                    "--out", model]) == 0
        params, meta = load_hmm_model(model)
        assert params.flatten().size == 131

    def test_unknown_author_exits_two(self, artifacts, tmp_path, capsys):
        code = run(["train-hmm", "--corpus", artifacts["corpus"],
                    "--author", "nobody@example.com",
                    "--out", str(tmp_path / "m.json")])
        assert code == 2
        assert "nobody@example.com" in capsys.readouterr().err


class TestCodingTimes:
    def test_record_schema(self, artifacts):
        records = list(read_ndjson(artifacts["intervals"]))
        assert records
        for rec in records:
            assert set(rec) == {"commit", "interval_minutes",
                                "expected_hours", "samples"}
            assert len(rec["samples"]) == 20
            # coding time can never exceed the wall-clock interval
            assert rec["expected_hours"] <= rec["interval_minutes"] / 60 + 1e-9
            assert rec["expected_hours"] >= 0.0


class TestPredict:
    def test_stdout_contract(self, artifacts, capsys):
        assert run(["predict", "--model", artifacts["mdn"], "--dict",
                    artifacts["dict"], "--patch", artifacts["patch"]]) == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"sch_hours", "sch_minutes", "mixture"}
        assert set(out["mixture"]) == {"pi", "mu", "sigma"}
        assert out["sch_minutes"] == pytest.approx(out["sch_hours"] * 60.0)
        assert 0.0 <= out["sch_hours"] <= 1.0
        assert np.sum(out["mixture"]["pi"]) == pytest.approx(1.0)

    def test_dictionary_mismatch_exits_two(self, artifacts, tmp_path, capsys):
        other = str(tmp_path / "other-dict.json")
        assert run(["build-dict", "--corpus", artifacts["corpus"],
                    "--top-n", "5", "--out", other]) == 0
        code = run(["predict", "--model", artifacts["mdn"], "--dict", other,
                    "--patch", artifacts["patch"]])
        assert code == 2
        assert "dictionary" in capsys.readouterr().err


class TestAnalyze:
    def test_yy_report_and_plot(self, artifacts, tmp_path, capsys):
        out = str(tmp_path / "yy.json")
        assert run(["analyze", "yy", "--model", artifacts["mdn"],
                    "--features", artifacts["features"],
                    "--coding-times", artifacts["intervals"],
                    "--bins", "10", "--out", out]) == 0
        report = read_json(out)
        assert 0.0 <= report["r_squared"] <= 1.0
        plot = str(tmp_path / "yy.csv")
        assert os.path.isfile(plot)
        lines = open(plot).read().strip().splitlines()
        assert len(lines) == report["bins"] + 1

    def test_beta_study(self, artifacts, tmp_path):
        out = str(tmp_path / "beta.json")
        assert run(["analyze", "beta", "--features", artifacts["features"],
                    "--coding-times", artifacts["intervals"],
                    "--out", out]) == 0
        report = read_json(out)
        assert -1.0 <= report["beta_star"] <= 1.0


class TestPipeline:
    def test_second_run_skips_every_stage(self, fixture_repo, tmp_path, capsys):
        out_dir = str(tmp_path / "artifacts")
        config = str(tmp_path / "pipeline.toml")
        with open(config, "w") as fh:
            fh.write(f"""
[pipeline]
out_dir = "{out_dir}"
seed = 7

[ingest]
source = "{fixture_repo}"

[hmm]
max_epochs = 15
min_commits = 40

[coding_times]
samples = 10

[mdn]
hidden = [16, 8]
epochs = 3
batch_size = 32

[analyze]
studies = ["yy"]
bins = 10
""")
        assert run(["pipeline", "--config", config]) == 0
        first = capsys.readouterr().out
        assert "ingest: ok" in first
        assert "analyze yy: ok" in first

        assert run(["pipeline", "--config", config]) == 0
        second = capsys.readouterr().out
        for line in second.strip().splitlines():
            assert line.endswith(": skipped"), line

        produced = sorted(os.listdir(out_dir))
        assert "corpus.ndjson" in produced
        assert "mdn.model" in produced
        assert "report-yy.json" in produced

    def test_missing_config_exits_two(self, tmp_path):
        assert run(["pipeline", "--config", str(tmp_path / "none.toml")]) == 2
