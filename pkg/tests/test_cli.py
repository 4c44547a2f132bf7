"""End-to-end tests of the command-line interface.

Each test drives main() with real files in a temp directory; byte-identical
reruns are asserted wherever a subcommand writes output.
"""
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pvrag.cli import main
from pvrag.dataset import write_manifest
from pvrag.synthetic import generate_dataset
from pvrag.vindex import VectorIndex, write_embedding_file

CASE30 = Path(__file__).resolve().parents[1] / "src" / "pvrag" / "data" / "case30.m"


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    records, vectors = generate_dataset(
        cities=["Tempe", "Oxford"], per_city=40, seed=5, dimension=32
    )
    write_manifest(records, root / "manifest.csv")
    write_embedding_file(
        root / "embeddings.pveb",
        {k: np.asarray(v, dtype=np.float32) for k, v in vectors.items()},
        dimension=32,
    )
    return root


def run(argv):
    return main([str(a) for a in argv])


class TestIngest:
    def test_reports_counts(self, dataset_dir, capsys):
        assert run(["ingest", "--manifest", dataset_dir / "manifest.csv",
                    "--expected-eval", "20", "--expected-reference", "20"]) == 0
        out = capsys.readouterr().out
        assert "Tempe: eval=20 reference=20  ok" in out
        assert "0 of 2 cities violate" in out

    def test_pattern_mismatch_reported(self, dataset_dir, capsys):
        assert run(["ingest", "--manifest", dataset_dir / "manifest.csv"]) == 0
        out = capsys.readouterr().out
        assert "PATTERN MISMATCH" in out

    def test_invalid_manifest_fails(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,city\n1,2\n")
        assert run(["ingest", "--manifest", bad]) == 1
        assert "error:" in capsys.readouterr().err


class TestIndexCommand:
    def test_build_and_load(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "refs.pvix"
        assert run(["index", "--manifest", dataset_dir / "manifest.csv",
                    "--embeddings", dataset_dir / "embeddings.pveb",
                    "--out", out]) == 0
        index = VectorIndex.load(out)
        assert len(index) == 40

    def test_exclude_city(self, dataset_dir, tmp_path):
        out = tmp_path / "refs.pvix"
        run(["index", "--manifest", dataset_dir / "manifest.csv",
             "--embeddings", dataset_dir / "embeddings.pveb",
             "--out", out, "--exclude-city", "Tempe"])
        index = VectorIndex.load(out)
        assert len(index) == 20
        assert all(e.city != "Tempe" for e in index.entries)


class TestRetrieve:
    def test_k_rows(self, dataset_dir, capsys):
        assert run(["retrieve", "--manifest", dataset_dir / "manifest.csv",
                    "--embeddings", dataset_dir / "embeddings.pveb",
                    "--query-id", "Tempe-0000", "--k", "5"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "rank,id,city,distance,similarity"
        assert len(lines) == 6
        assert all(len(line.split(",")) == 5 for line in lines[1:])

    def test_leave_out_city(self, dataset_dir, capsys):
        run(["retrieve", "--manifest", dataset_dir / "manifest.csv",
             "--embeddings", dataset_dir / "embeddings.pveb",
             "--query-id", "Tempe-0000", "--k", "40", "--leave-out", "Tempe"])
        lines = capsys.readouterr().out.strip().splitlines()[1:]
        assert lines and all(line.split(",")[2] != "Tempe" for line in lines)

    def test_unknown_query(self, dataset_dir, capsys):
        assert run(["retrieve", "--manifest", dataset_dir / "manifest.csv",
                    "--embeddings", dataset_dir / "embeddings.pveb",
                    "--query-id", "nope"]) == 1
        assert "unknown query id" in capsys.readouterr().err


class TestAssessEvaluate:
    def test_mock_rag_pipeline(self, dataset_dir, tmp_path, capsys):
        results = tmp_path / "results.jsonl"
        assert run(["assess", "--manifest", dataset_dir / "manifest.csv",
                    "--embeddings", dataset_dir / "embeddings.pveb",
                    "--mode", "rag", "--k", "3", "--backend", "mock",
                    "--out", results]) == 0
        lines = results.read_text().splitlines()
        assert len(lines) == 40
        first = json.loads(lines[0])
        assert set(first) >= {"query_id", "presence", "quantity", "location"}

        report = tmp_path / "report.csv"
        assert run(["evaluate", "--manifest", dataset_dir / "manifest.csv",
                    "--results", results, "--out", report]) == 0
        text = report.read_text()
        assert text.startswith("city,task,mean,std,n_records,n_runs")
        assert "overall,presence," in text

    def test_multi_run_evaluation(self, dataset_dir, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        for out in (a, b):
            run(["assess", "--manifest", dataset_dir / "manifest.csv",
                 "--embeddings", dataset_dir / "embeddings.pveb",
                 "--mode", "rag", "--k", "3", "--out", out])
        report = tmp_path / "report.csv"
        assert run(["evaluate", "--manifest", dataset_dir / "manifest.csv",
                    "--results", a, "--results", b, "--out", report]) == 0
        # Identical runs: std column is exactly 0.0 everywhere.
        for line in report.read_text().splitlines()[1:]:
            assert line.split(",")[3] == "0.0"

    def test_run_mismatch_fails(self, dataset_dir, tmp_path):
        a = tmp_path / "a.jsonl"
        run(["assess", "--manifest", dataset_dir / "manifest.csv",
             "--embeddings", dataset_dir / "embeddings.pveb",
             "--mode", "rag", "--k", "3", "--out", a])
        lines = a.read_text().splitlines()
        (tmp_path / "short.jsonl").write_text("\n".join(lines[:-1]) + "\n")
        assert run(["evaluate", "--manifest", dataset_dir / "manifest.csv",
                    "--results", a, "--results", tmp_path / "short.jsonl",
                    "--out", tmp_path / "r.csv"]) == 1

    def test_markdown_report(self, dataset_dir, tmp_path):
        results = tmp_path / "results.jsonl"
        run(["assess", "--manifest", dataset_dir / "manifest.csv",
             "--embeddings", dataset_dir / "embeddings.pveb",
             "--mode", "plain", "--out", results])
        report = tmp_path / "report.md"
        assert run(["evaluate", "--manifest", dataset_dir / "manifest.csv",
                    "--results", results, "--out", report,
                    "--format", "markdown"]) == 0
        assert report.read_text().startswith("| city | task |")


class TestAblate:
    def test_k_sweep_rows(self, dataset_dir, tmp_path):
        assert run(["ablate", "--kind", "k-sweep",
                    "--manifest", dataset_dir / "manifest.csv",
                    "--embeddings", dataset_dir / "embeddings.pveb",
                    "--out", tmp_path]) == 0
        lines = (tmp_path / "k_sweep.csv").read_text().splitlines()
        assert lines[0].startswith("k,presence_accuracy")
        assert [line.split(",")[0] for line in lines[1:]] == ["0", "1", "3", "5", "10"]

    def test_random_vs_similar(self, dataset_dir, tmp_path):
        assert run(["ablate", "--kind", "random-vs-similar",
                    "--manifest", dataset_dir / "manifest.csv",
                    "--embeddings", dataset_dir / "embeddings.pveb",
                    "--k", "3", "--seed", "1", "--out", tmp_path]) == 0
        lines = (tmp_path / "random_vs_similar.csv").read_text().splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("similar,3,")
        assert lines[2].startswith("random,3,")

    def test_leave_one_out_rows(self, dataset_dir, tmp_path):
        assert run(["ablate", "--kind", "leave-one-out",
                    "--manifest", dataset_dir / "manifest.csv",
                    "--embeddings", dataset_dir / "embeddings.pveb",
                    "--out", tmp_path]) == 0
        lines = (tmp_path / "leave_one_out.csv").read_text().splitlines()
        assert len(lines) == 3
        assert {line.split(",")[0] for line in lines[1:]} == {"Tempe", "Oxford"}


class TestSimulate:
    def test_synthetic_run_and_outputs(self, tmp_path, capsys):
        out = tmp_path / "sim"
        assert run(["simulate", "--case", CASE30, "--sites", "synth:50:3",
                    "--seed", "2", "--model", "RAG=0.862,0.802",
                    "--model", "5.2=0.677,0.710", "--out", out]) == 0
        stdout = capsys.readouterr().out
        assert "kappa=" in stdout
        assert (out / "netload.csv").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "voltage_dev_RAG.csv").exists()
        netload = (out / "netload.csv").read_text().splitlines()
        assert len(netload) == 97

    def test_perfect_model_zero_rmse(self, tmp_path, capsys):
        out = tmp_path / "sim"
        assert run(["simulate", "--case", CASE30, "--sites", "synth:20:1",
                    "--model", "perfect=1.0,1.0", "--out", out]) == 0
        metrics = (out / "metrics.csv").read_text().splitlines()
        row = next(line for line in metrics if line.startswith("perfect,"))
        assert float(row.split(",")[2]) == 0.0

    def test_bad_model_flag(self, tmp_path, capsys):
        assert run(["simulate", "--case", CASE30, "--sites", "synth:10:1",
                    "--model", "oops", "--out", tmp_path / "x"]) == 1
        assert "NAME=A_Q,A_L" in capsys.readouterr().err

    def test_missing_case_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["simulate", "--sites", "synth:10:1", "--out", "x"])
        assert info.value.code == 2


class TestDeterminism:
    def test_assess_rerun_byte_identical(self, dataset_dir, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            run(["assess", "--manifest", dataset_dir / "manifest.csv",
                 "--embeddings", dataset_dir / "embeddings.pveb",
                 "--mode", "random", "--k", "3", "--seed", "9", "--out", out])
        assert a.read_bytes() == b.read_bytes()

    def test_simulate_rerun_byte_identical(self, tmp_path):
        args = ["simulate", "--case", CASE30, "--sites", "synth:30:4",
                "--seed", "4", "--model", "m=0.8,0.8"]
        run(args + ["--out", tmp_path / "a"])
        run(args + ["--out", tmp_path / "b"])
        for name in ("netload.csv", "metrics.csv", "voltage_dev_m.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_ablate_rerun_byte_identical(self, dataset_dir, tmp_path):
        args = ["ablate", "--kind", "random-vs-similar",
                "--manifest", dataset_dir / "manifest.csv",
                "--embeddings", dataset_dir / "embeddings.pveb",
                "--k", "3", "--seed", "5"]
        run(args + ["--out", tmp_path / "a"])
        run(args + ["--out", tmp_path / "b"])
        assert (tmp_path / "a" / "random_vs_similar.csv").read_bytes() == (
            tmp_path / "b" / "random_vs_similar.csv"
        ).read_bytes()


class TestExitCodes:
    def test_console_script_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pvrag.cli", "simulate"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2

    def test_console_script_success(self, dataset_dir):
        proc = subprocess.run(
            [sys.executable, "-m", "pvrag.cli", "ingest",
             "--manifest", str(dataset_dir / "manifest.csv")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
