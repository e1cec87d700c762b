import json
import hashlib
import subprocess
import sys

import pytest

from copytag.cli import main
from copytag.corpus import parse_conll, write_conll
from copytag.evaluation import SWEEP_HEADER
from copytag.retrieval import load_index
from copytag.synthetic import toy_ner_corpus
from copytag.trainer import load_checkpoint


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    paths = {
        "train": root / "train.conll",
        "dev": root / "dev.conll",
    }
    paths["train"].write_text(write_conll(toy_ner_corpus(30, seed=11)))
    paths["dev"].write_text(write_conll(toy_ner_corpus(8, seed=12)))
    return paths


@pytest.fixture(scope="module")
def trained(corpora, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    code = main(
        [
            "train",
            "--data", str(corpora["train"]),
            "--dev", str(corpora["dev"]),
            "--out", str(out),
            "--epochs", "1",
            "--batch", "8",
            "--neighbors", "5",
        ]
    )
    assert code == 0
    return out


class TestPipeline:
    def test_train_writes_checkpoint_and_manifest(self, trained, capsys):
        ck = load_checkpoint(trained.read_text())
        assert ck.config.epochs == 1
        assert len(ck.log) == 1
        manifest = json.loads((trained.parent / "model.ckpt.manifest.json").read_text())
        assert manifest["verb"] == "train"
        assert manifest["outputs"] == [str(trained)]

    def test_tag_eval_roundtrip(self, corpora, trained, tmp_path, capsys):
        pred = tmp_path / "pred.conll"
        code = main(
            [
                "tag",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--input", str(corpora["dev"]),
                "--out", str(pred),
                "--neighbors", "5",
            ]
        )
        assert code == 0
        tagged = parse_conll(pred.read_text())
        gold = parse_conll(corpora["dev"].read_text())
        assert len(tagged.items) == len(gold.items)

        code = main(
            ["eval", "--pred", str(pred), "--gold", str(corpora["dev"]), "--spans"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "token_accuracy " in out
        assert "f1 " in out

    def test_eval_report_file(self, corpora, trained, tmp_path, capsys):
        pred = tmp_path / "pred.conll"
        main(
            [
                "tag",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--input", str(corpora["dev"]),
                "--out", str(pred),
                "--neighbors", "5",
            ]
        )
        report = tmp_path / "scores.txt"
        code = main(
            [
                "eval",
                "--pred", str(pred),
                "--gold", str(corpora["dev"]),
                "--report", str(report),
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert report.read_text().strip() == printed.strip()
        assert report.read_text().startswith("token_accuracy ")

    def test_sweep_csv(self, corpora, trained, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(
            [
                "sweep",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--data", str(corpora["dev"]),
                "--c-grid", "0,0.5,1.5",
                "--out", str(out),
                "--neighbors", "5",
            ]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == SWEEP_HEADER
        assert len(lines) == 4
        assert lines[1].startswith("0.0000,")

    def test_build_index(self, corpora, trained, tmp_path):
        out = tmp_path / "db.idx"
        code = main(
            [
                "build-index",
                "--data", str(corpora["train"]),
                "--out", str(out),
                "--ckpt", str(trained),
            ]
        )
        assert code == 0
        index = load_index(out.read_text())
        assert len(index.ids) == 30

    def test_inspect_prints_sources(self, corpora, trained, capsys):
        code = main(
            [
                "inspect",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--input", str(corpora["dev"]),
                "--sentence-id", "0",
                "--neighbors", "5",
                "--c", "0.4",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("sentence 0: ")
        assert "token 0 " in out
        assert "top-source neighbor:" in out
        assert "dp decode at c=0.4" in out
        assert "seg 0 " in out


class TestDeterminism:
    def test_rerun_is_byte_identical(self, corpora, trained, tmp_path):
        outs = []
        for name in ("a.conll", "b.conll"):
            out = tmp_path / name
            argv = [
                "tag",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--input", str(corpora["dev"]),
                "--out", str(out),
                "--neighbors", "5",
            ]
            assert main(argv) == 0
            outs.append(out.read_text())
        assert outs[0] == outs[1]

    def test_manifest_digests(self, corpora, trained, tmp_path):
        out = tmp_path / "pred.conll"
        main(
            [
                "tag",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--input", str(corpora["dev"]),
                "--out", str(out),
                "--neighbors", "5",
            ]
        )
        manifest = json.loads((tmp_path / "pred.conll.manifest.json").read_text())
        assert manifest["tool"] == "copytag"
        assert manifest["verb"] == "tag"
        assert manifest["options"]["neighbors"] == 5
        for path, digest in manifest["inputs"].items():
            with open(path, "rb") as handle:
                assert digest == hashlib.sha256(handle.read()).hexdigest()


class TestExplain:
    def test_provenance_file(self, corpora, trained, tmp_path):
        out = tmp_path / "pred.conll"
        explain = tmp_path / "why.txt"
        code = main(
            [
                "tag",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--input", str(corpora["dev"]),
                "--out", str(out),
                "--neighbors", "5",
                "--decode", "dp",
                "--c", "0.4",
                "--explain", str(explain),
            ]
        )
        assert code == 0
        text = explain.read_text()
        assert text.startswith("# sentence 0")
        assert "seg 0 " in text
        assert "from=neighbor:" in text
        assert "labels=" in text

    def test_explain_requires_dp(self, corpora, trained, tmp_path, capsys):
        code = main(
            [
                "tag",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--input", str(corpora["dev"]),
                "--out", str(tmp_path / "pred.conll"),
                "--explain", str(tmp_path / "why.txt"),
            ]
        )
        assert code == 2
        assert not (tmp_path / "pred.conll").exists()


class TestExitCodes:
    def test_unknown_verb(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_missing_required_flag(self, capsys):
        assert main(["tag", "--db", "x"]) == 2

    def test_bad_c_grid(self, corpora, trained, tmp_path, capsys):
        code = main(
            [
                "sweep",
                "--ckpt", str(trained),
                "--db", str(corpora["train"]),
                "--data", str(corpora["dev"]),
                "--c-grid", "0,banana",
                "--out", str(tmp_path / "s.csv"),
            ]
        )
        assert code == 2

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        code = main(
            [
                "eval",
                "--pred", str(tmp_path / "nope.conll"),
                "--gold", str(tmp_path / "nope.conll"),
            ]
        )
        assert code == 1
        assert "copytag: error:" in capsys.readouterr().err

    def test_failure_stages_nothing(self, corpora, trained, tmp_path, capsys):
        out = tmp_path / "pred.conll"
        code = main(
            [
                "tag",
                "--ckpt", str(trained),
                "--db", str(tmp_path / "missing.conll"),
                "--input", str(corpora["dev"]),
                "--out", str(out),
            ]
        )
        assert code == 1
        assert not out.exists()
        assert not (tmp_path / "pred.conll.manifest.json").exists()

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "copytag", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "retrieve-and-copy" in proc.stdout
