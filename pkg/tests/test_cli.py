import json

import pytest

from guiparse import benchio
from guiparse.benchio import EXIT_INVALID, EXIT_IO, EXIT_OK, CoordinateMode, DatasetFile
from guiparse.cli import main

from helpers import el, screen

GT3 = [el("Save file", 0.1, 0.1, 0.3, 0.2), el("Open photo", 0.5, 0.5, 0.8, 0.6), el("Close", 0.0, 0.8, 0.1, 0.9)]
QUICK = ["--steps", "20", "--corpus-size", "6", "--eval-screens", "2", "--hidden", "8"]


@pytest.fixture
def files(tmp_path):
    ds = DatasetFile(benchio.FORMAT_VERSION, CoordinateMode.NORMALIZED, (screen(GT3, "s0"),))
    d = tmp_path / "ds.json"
    benchio.save_dataset(d, ds)
    p = tmp_path / "pred.json"
    p.write_text(benchio.predictions_to_json({"s0": GT3[:2]}, ds))
    return d, p


class TestEvalVerbs:
    def test_eval_parse(self, files, tmp_path, capsys):
        d, p = files
        out = tmp_path / "r.json"
        code = main(["eval-parse", "--dataset", str(d), "--predictions", str(p), "--out", str(out), "--no-timing"])
        assert code == EXIT_OK
        assert "0.6667" in capsys.readouterr().out
        assert json.loads(out.read_text())["screens"][0]["precision"] == 1.0

    def test_flags_override_config(self, files, tmp_path):
        d, p = files
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"mu": 0.2}))
        out = tmp_path / "r.json"
        main(["eval-parse", "--dataset", str(d), "--predictions", str(p), "--config", str(cfg),
              "--mu", "0.4", "--out", str(out)])
        assert json.loads(out.read_text())["config"]["mu"] == 0.4

    def test_exit_codes(self, files, tmp_path, capsys):
        d, p = files
        assert main(["eval-parse", "--dataset", str(d), "--predictions", str(tmp_path / "x.json")]) == EXIT_IO
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["eval-parse", "--dataset", str(d), "--predictions", str(bad)]) == EXIT_INVALID
        assert "line 1" in capsys.readouterr().err
        with pytest.raises(SystemExit) as info:
            main(["eval-parse", "--dataset", str(d)])
        assert info.value.code == EXIT_INVALID

    def test_eval_ground(self, tmp_path, capsys):
        assert main(["synth-gen", "--seed", "2", "--n", "3", "--out", str(tmp_path / "d.json"),
                     "--cases", str(tmp_path / "c.json")]) == EXIT_OK
        ds = benchio.load_dataset(tmp_path / "d.json")
        cases = benchio.load_cases(tmp_path / "c.json", ds)
        answers = {c.id: (c.target if c.target is not None else benchio.REJECT) for c in cases}
        (tmp_path / "a.json").write_text(benchio.answers_to_json(answers, cases, ds))
        args = ["eval-ground", "--dataset", str(tmp_path / "d.json"), "--cases", str(tmp_path / "c.json"),
                "--answers", str(tmp_path / "a.json"), "--out", str(tmp_path / "r.json")]
        assert main(args) == EXIT_OK
        assert json.loads((tmp_path / "r.json").read_text())["accuracy"] == 1.0

    def test_validate(self, files, capsys):
        d, p = files
        assert main(["validate", "--dataset", str(d), "--predictions", str(p)]) == EXIT_OK
        assert "screens: 1" in capsys.readouterr().out


class TestUtilityVerbs:
    def test_nms(self, tmp_path, capsys):
        dup = [el("a", 0.1, 0.1, 0.3, 0.3, score=0.9), el("a", 0.11, 0.1, 0.3, 0.3, score=0.5),
               el("b", 0.6, 0.6, 0.7, 0.7, score=0.4)]
        src = tmp_path / "in.json"
        benchio.save_dataset(src, [screen(dup)])
        assert main(["nms", "--input", str(src), "--out", str(tmp_path / "o.json")]) == EXIT_OK
        assert "kept 2 of 3" in capsys.readouterr().out
        kept = benchio.load_dataset(tmp_path / "o.json").screens[0].elements
        assert [e.score for e in kept] == [0.9, 0.4]

    def test_nms_needs_scores(self, files, tmp_path):
        d, _ = files
        assert main(["nms", "--input", str(d), "--out", str(tmp_path / "o.json")]) == EXIT_INVALID

    def test_match_dump(self, files, capsys):
        d, p = files
        assert main(["match", "--dataset", str(d), "--predictions", str(p), "--screen", "s0"]) == EXIT_OK
        dump = json.loads(capsys.readouterr().out)
        assert [(x["gt"], x["pred"]) for x in dump["pairs"]] == [(0, 0), (1, 1)]
        assert dump["unmatched_gt"] == [2]
        assert len(dump["cost_matrix"]) == 3
        assert main(["match", "--dataset", str(d), "--predictions", str(p), "--screen", "nope"]) == EXIT_INVALID

    def test_synth_gen_deterministic(self, tmp_path):
        for name in ("a", "b"):
            main(["synth-gen", "--seed", "5", "--n", "4", "--pixels", "--out", str(tmp_path / f"{name}.json"),
                  "--cases", str(tmp_path / f"{name}c.json")])
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "ac.json").read_bytes() == (tmp_path / "bc.json").read_bytes()
        assert benchio.load_dataset(tmp_path / "a.json").coordinate_mode == CoordinateMode.PIXELS
        assert main(["synth-gen", "--n", "-1", "--out", str(tmp_path / "x.json")]) == EXIT_INVALID


class TestExperimentVerbs:
    def test_train_and_compare(self, tmp_path, capsys):
        for dec in ("continuous", "discrete"):
            code = main(["train-toy", *QUICK, "--decoder", dec, "--out", str(tmp_path / f"{dec}.ckpt"),
                         "--history", str(tmp_path / f"{dec}.json")])
            assert code == EXIT_OK
            assert len(json.loads((tmp_path / f"{dec}.json").read_text())["loss"]) == 20
        reports = []
        for k in range(2):
            out = tmp_path / f"r{k}.json"
            code = main(["compare-decoders", *QUICK, "--continuous", str(tmp_path / "continuous.ckpt"),
                         "--discrete", str(tmp_path / "discrete.ckpt"), "--out", str(out), "--no-timing"])
            assert code == EXIT_OK
            reports.append(out.read_bytes())
        assert reports[0] == reports[1]
        assert "timing" not in json.loads(reports[0])
        assert "mean center error" in capsys.readouterr().out

    def test_swapped_checkpoints(self, tmp_path):
        main(["train-toy", *QUICK, "--out", str(tmp_path / "c.ckpt")])
        args = ["compare-decoders", *QUICK, "--continuous", str(tmp_path / "c.ckpt"), "--discrete", str(tmp_path / "c.ckpt")]
        assert main(args) == EXIT_INVALID

    def test_bad_inputs(self, tmp_path):
        assert main(["compare-decoders", *QUICK]) == EXIT_INVALID
        junk = tmp_path / "junk.ckpt"
        junk.write_bytes(b"nope")
        assert main(["compare-decoders", *QUICK, "--continuous", str(junk), "--discrete", str(junk)]) == EXIT_INVALID
        assert main(["compare-decoders", *QUICK, "--continuous", str(tmp_path / "gone"),
                     "--discrete", str(tmp_path / "gone")]) == EXIT_IO
        cfg = tmp_path / "e.json"
        cfg.write_text(json.dumps({"speed": 3}))
        assert main(["train-toy", "--config", str(cfg), "--out", str(tmp_path / "m.ckpt")]) == EXIT_INVALID
        assert main(["train-toy", "--bins", "1", "--out", str(tmp_path / "m.ckpt")]) == EXIT_INVALID
