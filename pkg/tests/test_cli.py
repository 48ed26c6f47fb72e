import csv

import numpy as np
import pytest

from medroi import (
    Volume,
    deserialize,
    extract_roi,
    read_nifti,
    write_nifti,
)
from medroi.cli import main
from medroi.metadata import read_metadata_file
from medroi.metrics import CSV_HEADER


@pytest.fixture
def phantom_file(tmp_path):
    code = main([
        "phantom", str(tmp_path / "corpus"), "--seed", "3", "--count", "1",
        "--dims", "24x24x24", "--noise", "20",
    ])
    assert code == 0
    return tmp_path / "corpus" / "phantom_00003.nii.gz"


def test_phantom_writes_deterministic_volumes(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["phantom", str(out), "--seed", "7", "--count", "3",
                 "--dims", "16,16,16"]) == 0
    files = sorted(out.iterdir())
    assert [f.name for f in files] == [
        "phantom_00007.nii.gz", "phantom_00008.nii.gz", "phantom_00009.nii.gz",
    ]
    v1 = read_nifti(files[0])
    assert main(["phantom", str(tmp_path / "c2"), "--seed", "7",
                 "--dims", "16,16,16"]) == 0
    v2 = read_nifti(tmp_path / "c2" / "phantom_00007.nii.gz")
    assert np.array_equal(v1.data, v2.data)


def test_compress_roi_metadata_matches_extraction(tmp_path, phantom_file, capsys):
    out = tmp_path / "a.mroi"
    meta = tmp_path / "a.mroi-meta"
    code = main([
        "compress", str(phantom_file), str(out),
        "--codec", "deflate", "--mode", "roi", "--dim", "2d",
        "--meta-out", str(meta),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "mode=roi" in printed and "cr=" in printed and "bytes=" in printed
    archive = deserialize(out.read_bytes())
    report = extract_roi(read_nifti(phantom_file))
    assert archive.metadata.box == report.box
    assert read_metadata_file(meta).box == report.box


def test_unknown_codec_exit_4_lists_registered(tmp_path, phantom_file, capsys):
    code = main(["compress", str(phantom_file), str(tmp_path / "x.mroi"),
                 "--codec", "nope"])
    assert code == 4
    err = capsys.readouterr().err
    assert "deflate" in err and "raw" in err and "quant" in err


def test_missing_input_exit_3(tmp_path, capsys):
    assert main(["compress", str(tmp_path / "missing.nii"),
                 str(tmp_path / "x.mroi")]) == 3


def test_corrupt_archive_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.mroi"
    bad.write_bytes(b"XXXX" + bytes(50))
    assert main(["decompress", str(bad), str(tmp_path / "o.nii")]) == 3


def test_all_zero_volume_roi_exit_5(tmp_path, capsys):
    zero = tmp_path / "zero.nii"
    write_nifti(Volume.from_array(np.zeros((8, 8, 8), np.int16)), zero)
    code = main(["compress", str(zero), str(tmp_path / "z.mroi"),
                 "--mode", "roi"])
    assert code == 5
    assert "--mode full" in capsys.readouterr().err


def test_roi_3d_lossless_round_trip(tmp_path, phantom_file, capsys):
    out = tmp_path / "v.mroi"
    restored = tmp_path / "restored.nii"
    assert main(["compress", str(phantom_file), str(out),
                 "--codec", "deflate", "--mode", "roi", "--dim", "3d"]) == 0
    assert main(["decompress", str(out), str(restored)]) == 0
    original = read_nifti(phantom_file)
    back = read_nifti(restored)
    assert back.dims == original.dims
    archive = deserialize(out.read_bytes())
    b = archive.metadata.box
    sl = (slice(b.x_min, b.x_max + 1), slice(b.y_min, b.y_max + 1),
          slice(b.z_min, b.z_max + 1))
    assert np.array_equal(back.data[sl], original.data[sl])
    rest = back.data.copy()
    rest[sl] = 0
    assert not rest.any()


def test_exact_affine_flag(tmp_path, phantom_file, capsys):
    out = tmp_path / "e.mroi"
    assert main(["compress", str(phantom_file), str(out), "--codec", "raw",
                 "--mode", "roi", "--dim", "3d", "--exact-affine"]) == 0
    archive = deserialize(out.read_bytes())
    assert archive.metadata.translation is not None
    original = read_nifti(phantom_file)
    restored = tmp_path / "r.nii"
    assert main(["decompress", str(out), str(restored)]) == 0
    np.testing.assert_allclose(read_nifti(restored).affine, original.affine,
                               atol=1e-5)


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["compress"])  # missing positionals
    assert exc.value.code == 2


class TestEvalReport:
    def run_eval(self, tmp_path, capsys, extra=()):
        corpus = tmp_path / "corpus"
        assert main(["phantom", str(corpus), "--seed", "1", "--count", "4",
                     "--dims", "20x20x20", "--noise", "15"]) == 0
        out_csv = tmp_path / "eval.csv"
        code = main(["eval", str(corpus), "--codecs", "deflate",
                     "--out", str(out_csv), "--jobs", "1", *extra])
        assert code == 0
        return out_csv

    def test_schema_and_determinism(self, tmp_path, capsys):
        out_csv = self.run_eval(tmp_path, capsys)
        with open(out_csv) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_HEADER
        # 4 volumes x 1 codec x 2 modes x 2 dims
        assert len(rows) - 1 == 16
        # deterministic non-timing fields across runs
        again = tmp_path / "again.csv"
        assert main(["eval", str(tmp_path / "corpus"), "--codecs", "deflate",
                     "--out", str(again), "--jobs", "1"]) == 0
        with open(again) as fh:
            rows2 = list(csv.reader(fh))
        stable = [r[:9] for r in rows[1:]]
        stable2 = [r[:9] for r in rows2[1:]]
        assert stable == stable2

    def test_eval_repeats(self, tmp_path, capsys):
        out_csv = self.run_eval(tmp_path, capsys, extra=("--repeats", "2"))
        with open(out_csv) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) - 1 == 16  # medians recorded, still one row per cell
        assert all(float(r[9]) >= 0 for r in rows[1:])

    def test_eval_generate_flag(self, tmp_path, capsys):
        corpus = tmp_path / "gen"
        out_csv = tmp_path / "g.csv"
        assert main(["eval", str(corpus), "--generate", "3", "--seed", "11",
                     "--codecs", "raw", "--dims", "3d", "--out", str(out_csv),
                     "--jobs", "1"]) == 0
        assert len(list(corpus.glob("*.nii.gz"))) == 3

    def test_report_outputs(self, tmp_path, capsys):
        out_csv = self.run_eval(tmp_path, capsys)
        rep = tmp_path / "rep"
        assert main(["report", str(out_csv), "--out", str(rep)]) == 0
        printed = capsys.readouterr().out
        assert "CR" in printed and "PSNR" in printed
        for name in ("summary.csv", "rd_points.csv", "rd_scatter.gp",
                     "significance.csv"):
            assert (rep / name).exists()
        with open(rep / "significance.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["metric", "codec", "t", "p_raw", "p_adjusted",
                           "significant@0.05"]
        labels = {r[1] for r in rows[1:]}
        assert labels == {"deflate-q6-2d", "deflate-q6-3d"}
        metrics_seen = {r[0] for r in rows[1:]}
        assert metrics_seen == {"cr", "compress_s", "decompress_s"}
        with open(rep / "rd_points.csv") as fh:
            pts = list(csv.reader(fh))
        assert {r[6] for r in pts[1:]} == {"filled", "hollow"}

    def test_report_rejects_unknown_columns(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        with open(bad, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER + ["surprise"])
            writer.writerow(["v", "raw", "0", "full", "2d"] + ["1"] * 7)
        assert main(["report", str(bad), "--out", str(tmp_path / "r")]) == 2
        assert "unexpected columns" in capsys.readouterr().err

    def test_empty_corpus_exit_3(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["eval", str(empty), "--out",
                     str(tmp_path / "x.csv")]) == 3

    def test_twenty_phantom_corpus_end_to_end(self, tmp_path, capsys):
        corpus = tmp_path / "c20"
        out_csv = tmp_path / "e.csv"
        rep = tmp_path / "rep20"
        assert main(["eval", str(corpus), "--generate", "20", "--seed", "1",
                     "--codecs", "deflate,quant", "--qualities", "4",
                     "--out", str(out_csv), "--jobs", "1"]) == 0
        assert main(["report", str(out_csv), "--out", str(rep)]) == 0
        with open(rep / "significance.csv") as fh:
            rows = list(csv.reader(fh))
        labels = {r[1] for r in rows[1:]}
        # every requested codec configuration appears
        assert labels == {"deflate-q4-2d", "deflate-q4-3d",
                          "quant-q4-2d", "quant-q4-3d"}
        # and each carries all three tested metrics
        for label in labels:
            assert {r[0] for r in rows[1:] if r[1] == label} == {
                "cr", "compress_s", "decompress_s"}


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, tmp_path, phantom_file,
                                                 capsys):
        cfg = tmp_path / "medroi.toml"
        cfg.write_text(
            '[compress]\ncodec = "quant"\nquality = 2\nmode = "full"\n'
        )
        out = tmp_path / "c.mroi"
        assert main(["compress", str(phantom_file), str(out),
                     "--config", str(cfg), "--mode", "roi"]) == 0
        archive = deserialize(out.read_bytes())
        assert archive.codec_id == "quant"   # from config
        assert archive.quality == 2          # from config
        assert archive.mode.value == "roi"   # flag wins over config

    def test_unknown_config_key_rejected(self, tmp_path, phantom_file, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[compress]\nbogus = 1\n")
        assert main(["compress", str(phantom_file),
                     str(tmp_path / "c.mroi"), "--config", str(cfg)]) == 2
