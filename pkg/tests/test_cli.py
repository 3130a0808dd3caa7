import json

import numpy as np
import pytest
from scipy.io import wavfile

from revfeat.cli import chunk_starts, main
from revfeat.dsp import AudioClip
from revfeat.fileio import read_metadata_csv, read_tensor, read_wav, write_metadata_csv, write_wav
from revfeat.geometry import itdg_table
from revfeat.metrics import EventRecord


def foa_file(path, seconds, seed=0, channels=4, sr=24000):
    rng = np.random.default_rng(seed)
    write_wav(path, AudioClip(0.1 * rng.standard_normal((channels, int(seconds * sr))), sr))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestChunking:
    def test_ten_seconds(self):
        sr = 24000
        train = chunk_starts(10 * sr, 3 * sr, sr, "train")
        test = chunk_starts(10 * sr, 3 * sr, sr, "test")
        assert [s // sr for s in train] == list(range(8))
        assert [s // sr for s in test] == [0, 3, 6]

    def test_short_clip(self):
        assert chunk_starts(1000, 72000, 24000, "train") == [0]
        assert chunk_starts(1000, 72000, 24000, "test") == [0]


class TestExtract:
    def test_stpacc_one_chunk(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "clip.wav", 3.0)
        code, out, _ = run(capsys, "extract", "--mode", "stpacc", "--chunk", 3, "--in", wav, "--out", tmp_path / "o")
        assert code == 0
        files = sorted((tmp_path / "o").iterdir())
        assert [f.name for f in files] == ["clip_test_0000.rvft"]
        stack = read_tensor(files[0])
        assert stack.shape == (8, 480, 128)
        assert stack.metadata["source"].endswith("clip.wav")
        assert "8x480x128" in out

    def test_chunk_counts(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "long.wav", 10.0)
        for split, n in (("train", 8), ("test", 3)):
            out_dir = tmp_path / split
            code, out, _ = run(capsys, "extract", "--mode", "none", "--split", split, "--json",
                               "--in", wav, "--out", out_dir)
            assert code == 0
            rows = [json.loads(line) for line in out.splitlines()]
            assert len(rows) == n == len(list(out_dir.iterdir()))
            assert all(r["shape"] == [7, 480, 128] for r in rows)

    def test_padded_last_chunk(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "long.wav", 7.5)
        run(capsys, "extract", "--mode", "none", "--in", wav, "--out", tmp_path / "o")
        assert len(list((tmp_path / "o").iterdir())) == 3
        last = read_tensor(tmp_path / "o" / "long_test_0002.rvft")
        # 1.5 s of audio then 1.5 s of zeros: log-mel sits on the floor at the end
        assert np.all(last.data[:4, -100:] == -100.0)

    def test_drr_whole_file_split(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "clip.wav", 3.0)
        code, _, _ = run(capsys, "extract", "--mode", "dplusr", "--in", wav, "--out", tmp_path / "o")
        assert code == 0
        stack = read_tensor(tmp_path / "o" / "clip_test_0000.rvft")
        assert stack.shape == (9, 480, 128) and stack.mode == "d_plus_r"
        assert stack.metadata["wpe"]["taps"] == 60

    def test_mono_rejected(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "mono.wav", 0.5, channels=1)
        code, _, err = run(capsys, "extract", "--mode", "none", "--in", wav, "--out", tmp_path / "o")
        assert code != 0
        assert "mono.wav" in err and "4-channel" in err

    def test_rate_rejected(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "r.wav", 0.5, sr=48000)
        code, _, err = run(capsys, "extract", "--mode", "none", "--in", wav, "--out", tmp_path / "o")
        assert code != 0 and "48000" in err

    def test_worker_count_irrelevant(self, tmp_path, capsys, monkeypatch):
        wavs = [foa_file(tmp_path / f"c{i}.wav", 3.5, seed=i) for i in range(3)]
        outputs = []
        for threads in ("1", "3"):
            monkeypatch.setenv("REVFEAT_THREADS", threads)
            out_dir = tmp_path / f"o{threads}"
            assert run(capsys, "extract", "--mode", "stpacc", "--in", *wavs, "--out", out_dir)[0] == 0
            outputs.append({p.name: p.read_bytes() for p in out_dir.iterdir()})
        assert outputs[0] == outputs[1] and len(outputs[0]) == 3


class TestAugment:
    def test_eight_pairs(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "s.wav", 0.2)
        write_metadata_csv(tmp_path / "s.csv", [EventRecord(0, 1, 0, 10.0, 20.0, 2.0)])
        code, out, _ = run(capsys, "augment", "--wav", wav, "--csv", tmp_path / "s.csv",
                           "--out", tmp_path / "aug", "--json")
        assert code == 0
        assert len(out.splitlines()) == 8
        names = sorted(p.name for p in (tmp_path / "aug").iterdir())
        assert len(names) == 16 and "s_acs5.wav" in names and "s_acs5.csv" in names
        (e,) = read_metadata_csv(tmp_path / "aug" / "s_acs1.csv")
        assert (e.azimuth, e.elevation) == (100.0, 20.0)
        orig, rot = read_wav(wav), read_wav(tmp_path / "aug" / "s_acs1.wav")
        np.testing.assert_array_equal(rot.samples[0], orig.samples[0])
        np.testing.assert_array_equal(rot.samples[1], -orig.samples[2])

    def test_count_mismatch(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "s.wav", 0.2)
        code, _, err = run(capsys, "augment", "--wav", wav, wav, "--csv", tmp_path / "x.csv", "--out", tmp_path)
        assert code == 1 and "CSV" in err


class TestEval:
    def refs(self, tmp_path):
        ref = tmp_path / "ref"
        for i in range(3):
            write_metadata_csv(ref / f"seq{i}.csv",
                               [EventRecord(f, i, 0, 10.0 * f, 5.0, 1.5 + i) for f in range(5)])
        return ref

    def test_self_is_perfect(self, tmp_path, capsys):
        ref = self.refs(tmp_path)
        code, out, _ = run(capsys, "eval", "--pred", ref, "--ref", ref)
        assert code == 0
        assert "SELD: 0.000" in out and "F<=20deg/1: 1.000" in out

    def test_json_and_missing_prediction(self, tmp_path, capsys):
        ref = self.refs(tmp_path)
        pred = tmp_path / "pred"
        pred.mkdir()
        for name in ("seq0.csv", "seq1.csv"):
            (pred / name).write_bytes((ref / name).read_bytes())
        code, out, _ = run(capsys, "eval", "--pred", pred, "--ref", ref, "--json", "--doae-mode", "tp")
        assert code == 0
        rows = [json.loads(line) for line in out.splitlines()]
        by_metric = {r["metric"]: r for r in rows if "metric" in r}
        assert by_metric["f_score"]["value"] == pytest.approx(2 / 3)
        assert by_metric["seld"]["ci_low"] <= by_metric["seld"]["ci_high"]
        assert rows[-1]["doae_mode"] == "tp" and rows[-1]["sentinel_classes"] == [2]

    def test_empty_ref(self, tmp_path, capsys):
        (tmp_path / "e").mkdir()
        code, _, err = run(capsys, "eval", "--pred", tmp_path / "e", "--ref", tmp_path / "e")
        assert code == 1 and "no reference" in err


class TestReports:
    def test_itdg_defaults(self, capsys):
        code, out, _ = run(capsys, "itdg", "--json")
        assert code == 0
        rows = [json.loads(line) for line in out.splitlines()]
        assert rows == [r.as_dict() for r in itdg_table()]

    def test_itdg_custom(self, capsys):
        code, out, _ = run(capsys, "itdg", "--distances", 1, "--heights", "1.5,1.5", "--c", 686)
        assert code == 0
        assert out.splitlines()[1].split()[3:] == ["1.5", "4.6", "3.2"]

    def test_itdg_bad_height(self, capsys):
        code, _, err = run(capsys, "itdg", "--heights", "1.5")
        assert code == 2 and "H_S,H_M" in err

    def test_simulate(self, capsys):
        code, out, _ = run(capsys, "simulate", "--no-tail", "--no-drr", "--distances", 1, 3,
                           "--frames", "0:200", "--json")
        assert code == 0
        rows = [json.loads(line) for line in out.splitlines()]
        assert [r["distance_m"] for r in rows] == [1.0, 3.0]
        assert abs(rows[0]["measured_lag_ms"] - rows[0]["true_itdg_ms"]) < 0.34

    def test_inspect(self, tmp_path, capsys):
        wav = foa_file(tmp_path / "clip.wav", 1.0)
        run(capsys, "extract", "--mode", "none", "--in", wav, "--out", tmp_path)
        code, out, _ = run(capsys, "inspect", tmp_path / "clip_test_0000.rvft")
        assert code == 0 and json.loads(out)["shape"] == [7, 480, 128]

    def test_unknown_flag(self, capsys):
        code, _, err = run(capsys, "itdg", "--bogus")
        assert code == 2 and "unrecognized" in err

    def test_no_command(self, capsys):
        assert run(capsys)[0] == 2
