from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from ehrpersist.cli import RunConfig, load_config, main
from ehrpersist.eval import pr_auc

GOLDEN = Path(__file__).parent / "golden" / "toy_prompt_3m.txt"


def _run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    common = ("--out", out, "--windows", "12")
    assert _run("synth", "--out", out, "--n-patients", 6000, "--seed", 3) == 0
    assert _run("split", *common) == 0
    assert _run("train", *common, "--grid", "[[1.0, 0.5], [10.0, 0.0]]") == 0
    assert _run("evaluate", *common, "--iterations", 50) == 0
    return out


class TestPrompts:
    def test_toy_prompt_is_golden(self, tmp_path):
        assert _run("prompts", "--toy", "--granularity", "HalfYear", "--windows", "3", "--out", tmp_path) == 0
        assert (tmp_path / "prompts_3m.txt").read_bytes() == GOLDEN.read_bytes()

    def test_jsonl_format(self, tmp_path):
        assert _run("prompts", "--toy", "--windows", "6", "--format", "jsonl", "--out", tmp_path) == 0
        rows = [json.loads(l) for l in (tmp_path / "prompts_6m.jsonl").read_text().splitlines()]
        assert len(rows) == 1 and "next 6 months" in rows[0]["text"]


class TestPipeline:
    def test_artifacts_present(self, pipeline_dir):
        for name in ("visits.jsonl", "demographics.csv", "labels.csv", "split.csv", "model_12m.txt",
                     "leaderboard_12m.csv", "scores_12m.csv", "report_12m.json", "manifest_evaluate.json"):
            assert (pipeline_dir / name).exists(), name

    def test_manifest_hashes_match(self, pipeline_dir):
        import hashlib

        man = json.loads((pipeline_dir / "manifest_train.json").read_text())
        for name, digest in man["artifacts"].items():
            assert hashlib.sha256((pipeline_dir / name).read_bytes()).hexdigest() == digest
        assert man["config"]["windows"] == [12]

    def test_leaderboard_rows(self, pipeline_dir):
        with (pipeline_dir / "leaderboard_12m.csv").open() as fh:
            assert len(list(csv.DictReader(fh))) == 2

    def test_rerun_is_byte_identical(self, pipeline_dir):
        names = ("scores_12m.csv", "model_12m.txt", "report_12m.json", "report_12m.txt", "curves_12m.csv",
                 "manifest_train.json", "manifest_evaluate.json")
        before = {n: (pipeline_dir / n).read_bytes() for n in names}
        common = ("--out", pipeline_dir, "--windows", "12")
        assert _run("train", *common, "--grid", "[[1.0, 0.5], [10.0, 0.0]]") == 0
        assert _run("evaluate", *common, "--iterations", 50) == 0
        for n in names:
            assert (pipeline_dir / n).read_bytes() == before[n], n

    def test_fairness(self, pipeline_dir, tmp_path):
        for name in ("demographics.csv", "labels.csv", "scores_12m.csv"):
            (tmp_path / name).write_bytes((pipeline_dir / name).read_bytes())
        assert _run("fairness", "--out", tmp_path, "--windows", "12", "--subset", "all", "--iterations", 50) == 0
        rep = json.loads((tmp_path / "fairness_12m.json").read_text())
        assert set(rep["subgroups"]) == set(rep["summaries"]) == {"Race", "AgeBand", "Ethnicity"}
        assert (tmp_path / "fairness_12m.txt").read_text().count("[") >= 3


class TestEvaluateExternal:
    def test_constant_scores_give_prevalence(self, tmp_path):
        ids = [f"p{i:03d}" for i in range(400)]
        y = [1 if i % 10 == 0 else 0 for i in range(400)]
        with (tmp_path / "labels.csv").open("w") as fh:
            fh.write("patient_id,window,label\n" + "".join(f"{p},6,{v}\n" for p, v in zip(ids, y)))
        with (tmp_path / "ext.csv").open("w") as fh:
            fh.write("patient_id,score\n" + "".join(f"{p},0.3\n" for p in ids))
        code = _run("ingest", "--out", tmp_path, "--windows", "6", "--scores", tmp_path / "ext.csv",
                    "--model-name", "external")
        assert code == 0
        assert _run("evaluate", "--out", tmp_path, "--windows", "6", "--subset", "all", "--iterations", 20) == 0
        rep = json.loads((tmp_path / "report_6m.json").read_text())
        assert rep["pr_auc"]["point"] == pytest.approx(pr_auc(np.full(400, 0.3), y)) == pytest.approx(0.1)


class TestExitCodes:
    def test_bad_flag_is_invalid_input(self, capsys):
        assert _run("evaluate", "--windows", "4") == 1

    def test_missing_input_is_invalid_input(self, tmp_path):
        assert _run("evaluate", "--out", tmp_path, "--windows", "12") == 1

    def test_malformed_scores(self, tmp_path):
        (tmp_path / "labels.csv").write_text("patient_id,window,label\na,12,1\n")
        (tmp_path / "s.csv").write_text("patient_id,score\na,7\n")
        assert _run("ingest", "--out", tmp_path, "--windows", "12", "--scores", tmp_path / "s.csv") == 1

    def test_runtime_failure(self, tmp_path):
        (tmp_path / "demographics.csv").write_text("patient_id,sex\na,male\n")
        (tmp_path / "visits_dir").mkdir()
        assert _run("features", "--out", tmp_path, "--visits", tmp_path / "visits_dir") == 2

    def test_unknown_command(self):
        assert _run("frobnicate") == 1


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"granularity": "HalfYear", "seed": 4, "windows": [3, 6]}))
        cfg = load_config(path, {"seed": 9, "windows": None})
        assert cfg.granularity == "HalfYear" and cfg.seed == 9 and cfg.windows == (3, 6)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"colour": "red"}))
        with pytest.raises(ValueError):
            load_config(path, {})

    def test_hash_stable(self):
        assert RunConfig().sha256 == RunConfig().sha256
        assert RunConfig(seed=1).sha256 != RunConfig().sha256
