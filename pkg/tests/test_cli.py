import json

import numpy as np
import pytest

from doha.cli import main
from doha.harmonizer import GradientBatch, write_gradients
from doha.signal import SynthSpec, fft_hr_oracle, read_signal, synth_ppg
from doha.ssp import phase_invariance_report, read_ssp_csv
from doha.toy import read_metrics_csv


@pytest.fixture
def cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def manifest(path):
    return json.loads(open(path).read())


class TestSynth:
    def test_writes_samples(self, cwd):
        assert main(["synth", "--hr", "72", "--fs", "30", "--frames", "300", "--seed", "1", "--out", "a.json"]) == 0
        sig = read_signal("a.json")
        assert len(sig) == 300 and sig.fs == 30
        m = manifest("a.json.manifest.json")
        assert m["status"] == "ok" and m["seed"] == 1 and m["outputs"] == ["a.json"]

    def test_byte_identical(self, cwd):
        flags = ["--hr", "80", "--noise", "0.3", "--seed", "4"]
        main(["synth", *flags, "--out", "a.csv"])
        main(["synth", *flags, "--out", "b.csv"])
        assert (cwd / "a.csv").read_bytes() == (cwd / "b.csv").read_bytes()

    def test_hr_out_of_range(self, cwd, capsys):
        assert main(["synth", "--hr", "300", "--out", "a.json"]) != 0
        err = capsys.readouterr().err
        assert "42" in err and "210" in err
        assert not (cwd / "a.json").exists()
        assert manifest("a.json.manifest.json")["status"] == "error"


class TestSSP:
    def test_hr_and_map_size(self, cwd, capsys):
        main(["synth", "--hr", "72", "--harmonics", "0.4,0.15", "--out", "a.json"])
        assert main(["ssp", "--in", "a.json", "--out-map", "m.csv", "--out-seq", "s.csv",
                     "--out-hr", "hr.json"]) == 0
        hr = json.loads((cwd / "hr.json").read_text())["hr_bpm"]
        assert abs(hr - 72) <= 1.5
        assert abs(hr - fft_hr_oracle(read_signal("a.json"))) <= 1.5
        assert read_ssp_csv("m.csv").values.shape == (300 - 17 + 1,) * 2
        assert "HR" in capsys.readouterr().out

    def test_csv_input_needs_rate(self, cwd):
        main(["synth", "--hr", "72", "--out", "a.csv"])
        assert main(["ssp", "--in", "a.csv", "--out-hr", "hr.json"]) != 0
        assert main(["ssp", "--in", "a.csv", "--fs", "30", "--out-hr", "hr.json"]) == 0

    def test_window_longer_than_input(self, cwd):
        main(["synth", "--hr", "72", "--out", "a.json"])
        assert main(["ssp", "--in", "a.json", "--lwin", "400", "--out-map", "m.csv"]) != 0
        assert manifest("m.csv.manifest.json")["status"] == "error"


class TestHarmonize:
    def test_worked_pair(self, cwd):
        (cwd / "g.csv").write_text("1,0\n-1,1\n")
        assert main(["harmonize", "--grads", "g.csv", "--out", "u.csv", "--report", "r.json"]) == 0
        update = [float(v) for v in (cwd / "u.csv").read_text().split(",")]
        # both projections are taken against the original pair: (0.5, 0.5) and (0, 1)
        assert update == pytest.approx([0.25, 0.75], abs=1e-15)
        assert (cwd / "u.queue.csv").read_text().split() == ["1.0", "1.4142135623730951"]

    def test_orthogonal_is_mean(self, cwd):
        G = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0]])
        write_gradients(GradientBatch(G), cwd / "g.bin")
        main(["harmonize", "--grads", "g.bin", "--out", "u.csv"])
        update = [float(v) for v in (cwd / "u.csv").read_text().split(",")]
        assert update == pytest.approx(G.mean(axis=0).tolist())

    def test_queue_forces_sifting(self, cwd):
        (cwd / "q.csv").write_text("1.0\n" * 20)
        (cwd / "g.csv").write_text("0.1,0.2\n3,4\n0.2,0.1\n")
        main(["harmonize", "--grads", "g.csv", "--queue", "q.csv", "--out", "u.csv", "--report", "r.json"])
        report = json.loads((cwd / "r.json").read_text())
        assert report["zeroed_ids"] == [1]
        assert report["threshold"] == 1.0
        assert len((cwd / "u.queue.csv").read_text().split()) == 23

    def test_ragged_file(self, cwd):
        (cwd / "g.csv").write_text("1,0\n1\n")
        assert main(["harmonize", "--grads", "g.csv", "--out", "u.csv"]) != 0


@pytest.fixture
def corpus(cwd):
    assert main(["corpus", "--per-domain", "4", "--out", "corp"]) == 0
    assert main(["corpus", "--split", "eval", "--per-domain", "2", "--out", "ev"]) == 0
    return cwd


class TestTrain:
    def test_four_modes_reproducible(self, corpus):
        args = ["train", "--corpus-dir", "corp", "--eval-dir", "ev", "--holdout", "dim",
                "--mode", "all", "--epochs", "2"]
        assert main(args + ["--out-dir", "a"]) == 0
        assert main(args + ["--out-dir", "b"]) == 0
        files = sorted(p.name for p in (corpus / "a").glob("metrics-*.csv"))
        assert len(files) == 4
        for name in files + [f.replace("metrics", "model").replace(".csv", ".json") for f in files]:
            assert (corpus / "a" / name).read_bytes() == (corpus / "b" / name).read_bytes()
        rows = read_metrics_csv(corpus / "a" / "metrics-full-doha.csv")
        assert len(rows) == 2 and np.isfinite(rows[-1].holdout_mae)

    def test_manifest_epoch_times(self, corpus):
        main(["train", "--corpus-dir", "corp", "--epochs", "3", "--out-dir", "out"])
        m = manifest(corpus / "out" / "manifest.json")
        assert len(m["epoch_times"]["full-doha"]) == 3
        assert m["status"] == "ok" and "train:full-doha" in m["timings"]

    def test_missing_corpus(self, cwd):
        assert main(["train", "--corpus-dir", "nope", "--out-dir", "out"]) != 0
        assert manifest(cwd / "out" / "manifest.json")["status"] == "error"

    def test_unknown_holdout(self, corpus):
        assert main(["train", "--corpus-dir", "corp", "--holdout", "x", "--out-dir", "out"]) != 0

    def test_threads_env(self, corpus, monkeypatch):
        main(["train", "--corpus-dir", "corp", "--epochs", "1", "--out-dir", "a"])
        monkeypatch.setenv("DOHA_THREADS", "4")
        main(["train", "--corpus-dir", "corp", "--epochs", "1", "--out-dir", "b"])
        assert (corpus / "a" / "model-full-doha.json").read_bytes() == (corpus / "b" / "model-full-doha.json").read_bytes()

    def test_config_file_and_precedence(self, corpus):
        (corpus / "cfg.json").write_text(json.dumps({"epochs": 3, "corpus-dir": "corp", "lr_max": 5e-3}))
        assert main(["train", "--config", "cfg.json", "--epochs", "1", "--out-dir", "out"]) == 0
        assert len(read_metrics_csv(corpus / "out" / "metrics-full-doha.csv")) == 1
        cfg = manifest(corpus / "out" / "manifest.json")["config"]
        assert cfg["lr_max"] == 5e-3 and cfg["epochs"] == 1

    def test_unknown_config_key(self, corpus):
        (corpus / "cfg.json").write_text(json.dumps({"epoch": 3}))
        with pytest.raises(SystemExit) as exc:
            main(["train", "--config", "cfg.json", "--corpus-dir", "corp", "--out-dir", "out"])
        assert exc.value.code != 0


class TestEval:
    def test_metrics_file(self, corpus):
        main(["train", "--corpus-dir", "corp", "--epochs", "1", "--out-dir", "out"])
        assert main(["eval", "--model", "out/model-full-doha.json", "--corpus-dir", "ev",
                     "--out", "e.json", "--out-preds", "p.csv"]) == 0
        m = json.loads((corpus / "e.json").read_text())
        assert m["n"] == 6 and m["rmse"] >= m["mae"] >= 0
        assert (corpus / "p.csv").read_text().startswith("item_id,domain,true_hr,pred_hr\n")


class TestReport:
    def test_two_series(self, corpus):
        main(["train", "--corpus-dir", "corp", "--eval-dir", "ev", "--holdout", "lab",
              "--mode", "all", "--epochs", "2", "--out-dir", "out"])
        assert main(["report", "out/metrics-plain-mean.csv", "out/metrics-full-doha.csv",
                     "--out-svg", "r.svg", "--out-csv", "r.csv"]) == 0
        svg = (corpus / "r.svg").read_text()
        assert svg.count("<polyline") == 2
        assert "metrics-plain-mean" in svg and "metrics-full-doha" in svg
        assert len((corpus / "r.csv").read_text().splitlines()) == 1 + 4

    def test_empty_input(self, cwd):
        assert main(["report", "--out-svg", "r.svg"]) != 0
        assert not (cwd / "r.svg").exists()

    def test_delay_sweep_table(self, cwd):
        assert main(["delay-sweep", "--hr", "72", "--delays", "1-25", "--out", "sw.csv"]) == 0
        assert main(["report", "sw.csv", "--out-csv", "r.csv"]) == 0
        lines = (cwd / "r.csv").read_text().splitlines()
        assert lines[0] == "series,delay,max_dev" and len(lines) == 1 + 50

    def test_mixed_inputs(self, corpus):
        main(["train", "--corpus-dir", "corp", "--epochs", "1", "--out-dir", "out"])
        main(["delay-sweep", "--delays", "1,2", "--out", "sw.csv"])
        assert main(["report", "sw.csv", "out/metrics-full-doha.csv", "--out-csv", "r.csv"]) != 0


class TestDelaySweep:
    def test_matches_library(self, cwd):
        main(["delay-sweep", "--hr", "90", "--delays", "2,5,9", "--mode", "truncation", "--out", "sw.csv"])
        lines = (cwd / "sw.csv").read_text().splitlines()[1:]
        got = [float(l.split(",")[2]) for l in lines]
        want = phase_invariance_report(SynthSpec(90, 30, 300, (0.4, 0.15)), [2, 5, 9], mode="truncation")
        assert got == want.tolist()

    def test_delay_too_long(self, cwd):
        assert main(["delay-sweep", "--hr", "150", "--delays", "30", "--out", "sw.csv"]) != 0
