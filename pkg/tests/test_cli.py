"""Tests for the cti-graph command line."""

import json

import pytest

from cti_graph_toolkit.cli import FAILED_MARKER, MANIFEST_FILE, Run, UsageError, main
from cti_graph_toolkit.config import CONFIG_ENV_VAR, RunConfig
from cti_graph_toolkit.ingest.triples import write_triples
from cti_graph_toolkit.kg import KnowledgeGraph


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    """Run every command from an empty directory without a config file."""
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    monkeypatch.chdir(tmp_path)


def run_cli(capsys, *argv):
    """(exit code, JSON records on stdout, stderr text)."""
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    records = [json.loads(line) for line in captured.out.splitlines() if line.strip()]
    return code, records, captured.err


def manifest_of(out_dir):
    return json.loads((out_dir / MANIFEST_FILE).read_text())


@pytest.fixture
def triples_tsv(tmp_path, small_graph):
    entities, triples = small_graph
    return write_triples(triples, entities, tmp_path / "small.tsv")


@pytest.fixture
def graph_dir(tmp_path, capsys, triples_tsv):
    out = tmp_path / "built"
    code, _, _ = run_cli(capsys, "kg", "build", triples_tsv, "--no-cleanup", "-o", out)
    assert code == 0
    return out / "kg"


@pytest.fixture
def model_file(tmp_path, capsys, graph_dir):
    out = tmp_path / "trained"
    code, _, _ = run_cli(capsys, "tucker", "train", graph_dir, "-o", out,
                         "--iterations", 3, "--d-e", 4, "--d-r", 4, "--batch-size", 8)
    assert code == 0
    return out / "model.npz"


class TestExitCodes:
    """Argument and configuration errors exit with status 2."""

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "cti-graph" in capsys.readouterr().out

    def test_no_command(self, capsys):
        assert main([]) == 2

    def test_unknown_flag(self, capsys):
        assert main(["kg", "query", "--bogus"]) == 2

    def test_missing_input(self, capsys, tmp_path):
        """A missing input file is a usage error reported as JSON on stderr."""
        code, records, err = run_cli(capsys, "kg", "query", tmp_path / "nope",
                                     "Cerberus", "uses")
        assert code == 2
        assert records == []
        error = json.loads(err.strip().splitlines()[-1])
        assert error["kind"] == "error"
        assert error["error"] == "usage"
        assert error["format_version"] == 1

    def test_missing_config(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "iocs", "x.txt", "-c", tmp_path / "absent.toml")
        assert code == 2

    def test_bad_config_key(self, capsys, tmp_path):
        """Unknown keys in a config file are rejected."""
        cfg = tmp_path / "ctigraph.toml"
        cfg.write_text("[tucker]\nlayers = 3\n")
        code, _, err = run_cli(capsys, "iocs", "x.txt")
        assert code == 2
        assert "layers" in err

    def test_runtime_failure(self, capsys, graph_dir):
        """Unknown entities fail with status 1."""
        code, _, err = run_cli(capsys, "kg", "similar", graph_dir, "Malware:Ghost")
        assert code == 1
        assert json.loads(err.strip().splitlines()[-1])["error"] == "runtime"

    def test_kg_build_without_inputs(self, capsys):
        code, _, _ = run_cli(capsys, "kg", "build")
        assert code == 2


class TestRunContext:

    def test_refuses_paths_outside_output(self, tmp_path):
        run = Run(RunConfig(output_dir=str(tmp_path / "out")), "test")
        with pytest.raises(UsageError):
            run.path("../elsewhere.txt")

    def test_emit_adds_version_and_kind(self, tmp_path, capsys):
        Run(RunConfig(output_dir=str(tmp_path)), "test").emit("thing", {"n": 1})
        assert json.loads(capsys.readouterr().out) == {
            "format_version": 1, "kind": "thing", "n": 1}

    def test_pretty_suppresses_json(self, tmp_path, capsys):
        Run(RunConfig(output_dir=str(tmp_path)), "test", pretty=True).emit("thing", {})
        assert capsys.readouterr().out == ""


class TestKgCommands:
    """kg build, query and similar."""

    def test_build_outputs(self, capsys, tmp_path, triples_tsv):
        """The graph is saved and the manifest records inputs, outputs and hash."""
        out = tmp_path / "out"
        code, records, _ = run_cli(capsys, "kg", "build", triples_tsv, "--no-cleanup",
                                   "-o", out)
        assert code == 0
        (record,) = records
        assert record["kind"] == "graph"
        assert record["triples"] == 11
        kg = KnowledgeGraph.load(out / "kg")
        assert record["content_hash"] == kg.content_hash()

        manifest = manifest_of(out)
        assert manifest["command"] == "kg build"
        assert manifest["status"] == "ok"
        assert manifest["kg_hash"] == kg.content_hash()
        assert str(triples_tsv) in manifest["inputs"]
        assert "kg" in manifest["outputs"]
        assert manifest["config"]["build"]["cleanup"] is False

    def test_query(self, capsys, graph_dir):
        """Bare names resolve to Malware and aliases answer both ways."""
        code, records, _ = run_cli(capsys, "kg", "query", graph_dir, "Cerberus", "hasAlias")
        assert code == 0
        assert [r["tail"] for r in records] == ["Malware:Alien"]

    def test_query_bad_relation(self, capsys, graph_dir):
        code, _, _ = run_cli(capsys, "kg", "query", graph_dir, "Cerberus", "likes")
        assert code == 2

    def test_similar(self, capsys, graph_dir):
        code, records, _ = run_cli(capsys, "kg", "similar", graph_dir, "Cerberus", "--k", 1)
        assert code == 0
        (top,) = records
        assert top["neighbor"] == "Malware:Anubis"
        assert top["similarity"] == pytest.approx(0.6)

    def test_similar_bad_class(self, capsys, graph_dir):
        code, _, _ = run_cli(capsys, "kg", "similar", graph_dir, "Cerberus",
                             "--class", "Planet")
        assert code == 2

    def test_build_from_brat(self, capsys, tmp_path, brat_corpus):
        """Annotated reports plus their IoCs become triples."""
        out = tmp_path / "out"
        code, records, _ = run_cli(capsys, "kg", "build", "--brat", brat_corpus,
                                   "--no-cleanup", "-o", out)
        assert code == 0
        kg = KnowledgeGraph.load(out / "kg")
        heads = {(t.head, t.relation.value, t.tail) for t in kg.triples}
        assert ("Malware:Cerberus", "targets", "Location:Spain") in heads
        assert ("Malware:Cerberus", "exploits", "Vulnerability:CVE-2020-0096") in heads
        assert ("Indicator:203.0.113.7", "indicates", "Malware:Cerberus") in heads


class TestTuckerCommands:
    """tucker train, predict, eval, split and leave-out."""

    def test_train_manifest(self, model_file):
        """The manifest holds config, seed and the model fingerprint."""
        manifest = manifest_of(model_file.parent)
        assert manifest["config"]["tucker"]["iterations"] == 3
        assert manifest["seed"] == 0
        assert manifest["outputs"]["model.npz"] == "model:" + manifest["model_fingerprint"]
        assert "loss.json" in manifest["outputs"]
        loss = json.loads((model_file.parent / "loss.json").read_text())
        assert len(loss["loss_trace"]) == 3

    def test_train_reproducible(self, capsys, tmp_path, graph_dir, model_file):
        """Re-running from the manifest's config reproduces the model."""
        first = manifest_of(model_file.parent)
        again = tmp_path / "again"
        code, _, _ = run_cli(capsys, "tucker", "train", graph_dir, "-o", again,
                             "-c", model_file.parent / MANIFEST_FILE)
        assert code == 0
        assert manifest_of(again)["model_fingerprint"] == first["model_fingerprint"]

    def test_predict(self, capsys, model_file):
        code, records, _ = run_cli(capsys, "tucker", "predict", model_file,
                                   "Cerberus", "uses", "--k", 3)
        assert code == 0
        assert [r["rank"] for r in records] == [1, 2, 3]
        assert all(r["kind"] == "prediction" for r in records)

    def test_predict_restricted(self, capsys, model_file):
        """Restriction keeps only valid tail classes."""
        code, records, _ = run_cli(capsys, "tucker", "predict", model_file,
                                   "Malware:Cerberus", "uses", "--restrict")
        assert code == 0
        assert len(records) == 3
        assert all(r["entity_id"].startswith("AttackPattern:") for r in records)

    def test_predict_unknown_head(self, capsys, model_file):
        code, _, _ = run_cli(capsys, "tucker", "predict", model_file, "Ghost", "uses")
        assert code == 1

    def test_eval(self, capsys, tmp_path, graph_dir, model_file):
        out = tmp_path / "eval"
        code, records, _ = run_cli(capsys, "tucker", "eval", model_file, graph_dir, "-o", out)
        assert code == 0
        (record,) = records
        assert record["n"] == 11
        assert 0 < record["mrr"] <= 1
        assert (out / "eval.json").is_file()

    def test_split(self, capsys, tmp_path, graph_dir):
        out = tmp_path / "split"
        code, records, _ = run_cli(capsys, "tucker", "split", graph_dir, "-o", out,
                                   "--seed", 1)
        assert code == 0
        assert records[0]["train"] + records[0]["test"] == 11
        assert (out / "train.tsv").is_file() and (out / "test.tsv").is_file()

    def test_leave_out(self, capsys, tmp_path, graph_dir):
        out = tmp_path / "leave"
        code, records, _ = run_cli(capsys, "tucker", "leave-out", graph_dir, "Cerberus",
                                   "-o", out)
        assert code == 0
        assert records[0]["removed"] == 2
        assert records[0]["remaining"] == 9
        assert len((out / "held_out.tsv").read_text().splitlines()) == 2


class TestOtherCommands:
    """iocs, map, trends and ingest."""

    def test_iocs(self, capsys, tmp_path):
        report = tmp_path / "r.txt"
        report.write_text("The sample contacts 203.0.113.7 every hour.")
        code, records, _ = run_cli(capsys, "iocs", report)
        assert code == 0
        assert [r["matched_text"] for r in records] == ["203.0.113.7"]

    def test_map_with_gold(self, capsys, tmp_path):
        """Phrases map to techniques and are scored against gold ids."""
        phrases = tmp_path / "phrases.txt"
        phrases.write_text("send SMS messages\n")
        gold = tmp_path / "gold.txt"
        gold.write_text("T1582\n")
        code, records, _ = run_cli(capsys, "map", phrases, "--tau", 2.0, "--gold", gold)
        assert code == 0
        mapping, score = records
        assert mapping["technique_id"] == "T1582"
        assert score["kind"] == "score"
        assert score["precision"] == 1.0

    def test_map_tagged(self, capsys, tmp_path):
        """Tagged tokens are merged and verb-less phrases are filtered."""
        tagged = tmp_path / "tagged.jsonl"
        tagged.write_text(json.dumps({
            "tokens": ["Cerberus", "can", "send", "SMS", "messages", "and",
                       "banking", "credentials"],
            "tags": ["O", "O", "AP", "AP", "AP", "O", "AP", "AP"],
            "doc_id": "d1",
        }) + "\n")
        code, records, _ = run_cli(capsys, "map", tagged, "--tagged", "--tau", 2.0)
        assert code == 0
        by_phrase = {r["phrase"]: r for r in records}
        assert by_phrase["banking credentials"]["filtered"] is True
        assert by_phrase["send SMS messages"]["token_span"] == [2, 5]

    def test_map_bad_tags(self, capsys, tmp_path):
        tagged = tmp_path / "tagged.jsonl"
        tagged.write_text(json.dumps({"tokens": ["a"], "tags": ["X"]}) + "\n")
        code, _, _ = run_cli(capsys, "map", tagged, "--tagged")
        assert code == 2

    def test_trends_with_plot(self, capsys, tmp_path):
        observations = tmp_path / "obs.tsv"
        observations.write_text("Malware:A\tT1636\t2020\nMalware:B\tT1636\t2021\n"
                                "Malware:B\tT1406\t2021\n")
        out = tmp_path / "trends"
        code, records, _ = run_cli(capsys, "trends", observations, "-o", out,
                                   "--plot", "trends")
        assert code == 0
        assert [r["year"] for r in records] == [2020, 2021]
        assert records[1]["normalized"] == {"T1406": 0.5, "T1636": 0.5}
        assert (out / "trends.png").is_file()
        assert "trends.json" in manifest_of(out)["outputs"]

    def test_trends_bad_line(self, capsys, tmp_path):
        observations = tmp_path / "obs.tsv"
        observations.write_text("Malware:A\tT1636\n")
        code, _, _ = run_cli(capsys, "trends", observations)
        assert code == 2

    def test_ingest_directory(self, capsys, tmp_path):
        reports = tmp_path / "reports"
        reports.mkdir()
        (reports / "cerberus.txt").write_text(
            "In March 2021 Cerberus contacted 203.0.113.7 to steal SMS codes.")
        out = tmp_path / "ingested"
        code, records, _ = run_cli(capsys, "ingest", reports, "-o", out)
        assert code == 0
        (doc,) = [r for r in records if r["kind"] == "document"]
        assert doc["published_year"] == 2021
        assert doc["iocs"] == 1
        assert (out / "documents").is_dir()
        assert len((out / "iocs.jsonl").read_text().splitlines()) == 1
        assert manifest_of(out)["documents"] == 1

    def test_ingest_crawl(self, capsys, tmp_path, fixtures_dir):
        """Crawled pages are stored; fetch failures are reported as issues."""
        out = tmp_path / "crawled"
        code, records, _ = run_cli(capsys, "ingest", "--crawl",
                                   fixtures_dir / "crawl_graph.json",
                                   "--seed", "https://news.example/", "-o", out)
        assert code == 0
        docs = [r for r in records if r["kind"] == "document"]
        assert [d["source_url"] for d in docs] == [
            "https://news.example/cerberus", "https://news.example/flubot"]
        assert [r["location"] for r in records if r["kind"] == "issue"] == [
            "https://news.example/missing"]

    def test_ingest_issues_stay_off_stdout(self, capsys, tmp_path, fixtures_dir):
        """Without --pretty the issue summary is not printed between records."""
        code = main(["ingest", "--crawl", str(fixtures_dir / "crawl_graph.json"),
                     "--seed", "https://news.example/", "-o", str(tmp_path / "crawled")])
        out = capsys.readouterr().out
        assert code == 0
        assert all(line.startswith("{") for line in out.splitlines() if line.strip())

    def test_ingest_crawl_strict(self, capsys, tmp_path, fixtures_dir):
        """With --strict a fetch failure fails the run."""
        out = tmp_path / "crawled"
        code, _, _ = run_cli(capsys, "ingest", "--crawl", fixtures_dir / "crawl_graph.json",
                             "--seed", "https://news.example/", "--strict", "-o", out)
        assert code == 1
        assert manifest_of(out)["status"] == "failed"

    def test_crawl_needs_seed(self, capsys, fixtures_dir):
        code, _, _ = run_cli(capsys, "ingest", "--crawl", fixtures_dir / "crawl_graph.json")
        assert code == 2


class TestPipeline:
    """End-to-end runs."""

    def test_graph_only(self, capsys, tmp_path, brat_corpus):
        out = tmp_path / "run"
        code, records, _ = run_cli(capsys, "pipeline", "--corpus", brat_corpus,
                                   "--skip-train", "--no-cleanup", "-o", out)
        assert code == 0
        manifest = manifest_of(out)
        assert [s["name"] for s in manifest["stages"]] == ["kg", "trends"]
        assert manifest["status"] == "ok"
        assert (out / "kg" / "entities.json").is_file()
        assert (out / "documents").is_dir()
        assert records[0]["kind"] == "graph"
        assert not (out / FAILED_MARKER).exists()

    def test_full_run(self, capsys, tmp_path, brat_corpus):
        """Every stage completes and the model is recorded."""
        out = tmp_path / "run"
        code, _, _ = run_cli(capsys, "pipeline", "--corpus", brat_corpus, "--no-cleanup",
                             "--iterations", 2, "--d-e", 4, "--d-r", 4, "-o", out)
        assert code == 0
        manifest = manifest_of(out)
        assert [s["name"] for s in manifest["stages"]] == [
            "kg", "trends", "split", "train", "eval"]
        assert manifest["outputs"]["model.npz"].startswith("model:")

    def test_failure_leaves_marker(self, capsys, tmp_path, brat_corpus):
        """A failing stage writes FAILED and a failed manifest."""
        out = tmp_path / "run"
        code, _, _ = run_cli(capsys, "pipeline", "--corpus", brat_corpus,
                             "--triples", tmp_path / "missing.tsv", "-o", out)
        assert code == 2
        assert (out / FAILED_MARKER).read_text().startswith("stage: kg")
        manifest = manifest_of(out)
        assert manifest["status"] == "failed"
        assert manifest["stages"] == [{"name": "kg", "status": "failed"}]

    def test_needs_inputs(self, capsys):
        code, _, _ = run_cli(capsys, "pipeline")
        assert code == 2
