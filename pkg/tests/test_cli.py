import json

import numpy as np
import pytest

from conftest import container_path, make_bundle, write_jsonl
from moee.cli import main
from moee.engine import load_model
from moee.store import read_container


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def model_path(tmp_path, capsys):
    path = tmp_path / "m.moem"
    code, _, _ = run_cli(
        capsys,
        "gen-model", "--layers", "2", "--dim", "8", "--experts", "4",
        "--topk", "2", "--seed", "7", "-o", str(path),
    )
    assert code == 0
    return path


def sts_dataset(tmp_path):
    rows = [
        {"id": i, "s1": f"alpha {i}", "s2": f"beta {i}", "score": float(i % 3)}
        for i in range(5)
    ]
    return write_jsonl(tmp_path / "sts.jsonl", rows)


class TestGenModel:
    def test_output_parses(self, model_path):
        model = load_model(model_path)
        assert model.config.num_layers == 2
        assert model.config.experts_per_layer == (4, 4)

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["gen-model", "--bogus-flag"])
        assert exc.value.code == 2

    def test_domain_error_exit_1(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys,
            "gen-model", "--layers", "2", "--dim", "8", "--experts", "4",
            "--topk", "9", "-o", str(tmp_path / "x.moem"),
        )
        assert code == 1
        assert "top_k exceeds experts" in err


class TestRunAndValidate:
    def test_run_writes_valid_container(self, tmp_path, model_path, capsys):
        data = sts_dataset(tmp_path)
        out = tmp_path / "c.moea"
        code, _, _ = run_cli(
            capsys,
            "run", "--model", str(model_path), "--data", str(data),
            "--kind", "sts", "-o", str(out),
        )
        assert code == 0
        container = read_container(out)
        assert len(container) == 10  # 5 pairs, all sentences unique
        code, stdout, _ = run_cli(capsys, "validate", str(out))
        assert code == 0
        assert "0 failure(s)" in stdout

    def test_validate_bad_magic_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "bad.moea"
        bad.write_bytes(b"XXXX" + b"\x00" * 16)
        code, stdout, _ = run_cli(capsys, "validate", str(bad))
        assert code == 1
        assert "FAIL" in stdout


class TestEval:
    def _container(self, tmp_path, model_path, capsys):
        data = sts_dataset(tmp_path)
        out = tmp_path / "c.moea"
        run_cli(
            capsys,
            "run", "--model", str(model_path), "--data", str(data),
            "--kind", "sts", "-o", str(out),
        )
        return data, out

    def test_alpha_zero_matches_hs_mode(self, tmp_path, model_path, capsys):
        data, container = self._container(tmp_path, model_path, capsys)
        code, out_sum, _ = run_cli(
            capsys,
            "eval", "sts", "--data", str(data), "--container", str(container),
            "--mode", "sum", "--alpha", "0",
        )
        assert code == 0
        code, out_hs, _ = run_cli(
            capsys,
            "eval", "sts", "--data", str(data), "--container", str(container),
            "--mode", "hs",
        )
        assert code == 0
        # last column is the metric value
        assert out_sum.splitlines()[-1].split()[-1] == out_hs.splitlines()[-1].split()[-1]

    def test_fingerprint_header_present(self, tmp_path, model_path, capsys):
        data, container = self._container(tmp_path, model_path, capsys)
        _, out, _ = run_cli(
            capsys,
            "eval", "sts", "--data", str(data), "--container", str(container),
        )
        assert out.startswith("# fingerprint: ")
        json.loads(out.splitlines()[0].removeprefix("# fingerprint: "))


class TestEmbed:
    def test_embed_jsonl(self, tmp_path, capsys):
        bundles = [make_bundle(record_id=f"r{i}", text=f"t{i}", seed=i) for i in range(2)]
        cpath = container_path(tmp_path, bundles)
        out = tmp_path / "emb.jsonl"
        code, _, _ = run_cli(
            capsys,
            "embed", "--container", str(cpath), "--strategy", "rw:last", "-o", str(out),
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert "fingerprint" in json.loads(lines[0])
        rows = [json.loads(l) for l in lines[1:]]
        assert len(rows) == 2
        assert all(r["dim"] == 8 for r in rows)


class TestAnalyzeCommands:
    def test_agreement(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text("[0, 0, 1, 1]")
        b.write_text("[0, 1, 1, 1]")
        code, out, _ = run_cli(capsys, "analyze", "agreement", "--a", str(a), "--b", str(b))
        assert code == 0
        report = json.loads(out.split("\n", 1)[1])
        assert report["jaccard"] == pytest.approx(1 / 4)

    def test_errors(self, tmp_path, capsys):
        for name, vals in (("hs", list(range(10))), ("rw", list(range(10))[::-1]),
                           ("gold", list(range(10)))):
            (tmp_path / f"{name}.json").write_text(json.dumps([float(v) for v in vals]))
        code, out, _ = run_cli(
            capsys,
            "analyze", "errors", "--hs", str(tmp_path / "hs.json"),
            "--rw", str(tmp_path / "rw.json"), "--gold", str(tmp_path / "gold.json"),
        )
        assert code == 0
        report = json.loads(out.split("\n", 1)[1])
        assert report["proportions"]["hs_ok_rw_fail"] == 1.0

    def test_prompt_corr_csv(self, tmp_path, capsys):
        scores = {
            "hs": {"1": [0.1, 0.2, 0.3], "2": [0.3, 0.2, 0.1]},
            "rw": {"1": [0.1, 0.2, 0.3]},
        }
        spath = tmp_path / "scores.json"
        spath.write_text(json.dumps(scores))
        csv = tmp_path / "m.csv"
        code, _, _ = run_cli(
            capsys, "analyze", "prompt-corr", "--scores", str(spath), "--csv", str(csv)
        )
        assert code == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == ",hs:1,hs:2,rw:1"
        assert len(lines) == 4

    def test_prompts(self, tmp_path, capsys):
        scores = {"hs": {str(p): {"ds": float(p)} for p in range(1, 10)}}
        spath = tmp_path / "scores.json"
        spath.write_text(json.dumps(scores))
        code, out, _ = run_cli(capsys, "analyze", "prompts", "--scores", str(spath))
        assert code == 0
        report = json.loads(out.split("\n", 1)[1])
        assert report["stats"]["hs"]["ds"]["mean"] == 5.0


class TestSweepCli:
    def test_table_and_jsonl(self, tmp_path, model_path, capsys):
        data = sts_dataset(tmp_path)
        container = tmp_path / "c.moea"
        run_cli(
            capsys,
            "run", "--model", str(model_path), "--data", str(data),
            "--kind", "sts", "-o", str(container),
        )
        out = tmp_path / "sweep.jsonl"
        code, stdout, _ = run_cli(
            capsys,
            "sweep", "--data", str(data), "--kind", "sts",
            "--container", str(container), "--modes", "hs,sum",
            "--alphas", "1", "-o", str(out),
        )
        assert code == 0
        lines = [l for l in stdout.splitlines() if not l.startswith("#")]
        assert lines[0].split()[:3] == ["task", "dataset", "strategy"]
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert [r["strategy"] for r in rows] == ["hs", "sum"]
