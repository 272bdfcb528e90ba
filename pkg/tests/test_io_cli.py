import os
import re

import numpy as np
import pytest

from subtta import fileio
from subtta.adapt import StepReport
from subtta.cli import main
from subtta.exceptions import FormatError, TruncationError, UnsupportedDtype


def _unit_rows(rng, rows, dim):
    m = rng.normal(size=(rows, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


class TestEmbeddingFormat:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "min.seb"
        fileio.write_embeddings(path, np.array([[1.0, 0.0]]))
        matrix, labels = fileio.read_embeddings(path)
        assert np.array_equal(matrix, [[1.0, 0.0]])
        assert labels is None

    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        m = _unit_rows(rng, 32, 8).astype(np.float32).astype(np.float64)
        path = tmp_path / "rt.seb"
        fileio.write_embeddings(path, m)
        back, _ = fileio.read_embeddings(path)
        assert np.array_equal(back, m)

    def test_labels_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        m = _unit_rows(rng, 10, 4)
        labels = rng.integers(0, 5, size=10)
        path = tmp_path / "lab.seb"
        fileio.write_embeddings(path, m, labels)
        _, back = fileio.read_embeddings(path)
        assert np.array_equal(back, labels)

    def test_label_count_mismatch_on_write(self, tmp_path):
        with pytest.raises(FormatError):
            fileio.write_embeddings(tmp_path / "bad.seb",
                                    np.eye(3), labels=np.zeros(2))

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.seb"
        fileio.write_embeddings(path, np.eye(4))
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 8])
        with pytest.raises(TruncationError) as exc:
            fileio.read_embeddings(path)
        # Message names expected vs actual byte counts.
        assert re.search(r"\d+ bytes, have \d+", str(exc.value))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "magic.seb"
        fileio.write_embeddings(path, np.eye(2))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            fileio.read_embeddings(path)

    def test_unsupported_dtype(self, tmp_path):
        path = tmp_path / "dtype.seb"
        fileio.write_embeddings(path, np.eye(2))
        blob = bytearray(path.read_bytes())
        blob[16] = 7  # dtype byte after 4s + three u32
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedDtype):
            fileio.read_embeddings(path)

    def test_non_unit_rows_renormalized_with_warning(self, tmp_path):
        path = tmp_path / "norm.seb"
        fileio.write_embeddings(path, np.array([[3.0, 0.0], [0.0, 1.0]]))
        with pytest.warns(UserWarning):
            matrix, _ = fileio.read_embeddings(path)
        assert np.allclose(np.linalg.norm(matrix, axis=1), 1.0)

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        fileio.write_embeddings(tmp_path / "a.seb", np.eye(3))
        leftovers = [f for f in os.listdir(tmp_path) if f != "a.seb"]
        assert leftovers == []


class TestCsvAndConfig:
    def _report(self, step):
        return StepReport(step=step, segment="s", align_loss_before=1.25,
                          align_loss_after=1.0, tta_loss=-0.5, accuracy=0.75,
                          mean_concentration=0.9,
                          max_principal_angle_deg=12.3456789)

    def test_empty_reports_header_only(self, tmp_path):
        path = tmp_path / "steps.csv"
        fileio.write_step_csv([], path)
        lines = path.read_text().splitlines()
        assert lines == [",".join(fileio.STEP_CSV_COLUMNS)]

    def test_one_report_two_lines(self, tmp_path):
        path = tmp_path / "steps.csv"
        fileio.write_step_csv([self._report(1)], path)
        assert len(path.read_text().splitlines()) == 2

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        reports = [self._report(i) for i in range(3)]
        fileio.write_step_csv(reports, a)
        fileio.write_step_csv(reports, b)
        assert a.read_bytes() == b.read_bytes()

    def test_fmt9(self):
        assert fileio.fmt9(0.1) == "0.1"
        assert fileio.fmt9(12.3456789) == "12.3456789"
        assert fileio.fmt9(1e-12) == "1e-12"

    def test_config_roundtrip(self, tmp_path):
        path = tmp_path / "config.txt"
        fileio.write_config({"b": 2, "a": "x=y"}, path)
        assert fileio.read_config(path) == {"a": "x=y", "b": "2"}
        # Keys sorted for byte determinism.
        assert path.read_text() == "a=x=y\nb=2\n"

    def test_malformed_config_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("no-equals-here\n")
        with pytest.raises(FormatError):
            fileio.read_config(path)


class TestCli:
    SMALL = ["--dim", "32", "--classes", "6", "--samples-per-class", "64"]

    def test_synth_gen_writes_readable_files(self, tmp_path):
        outdir = str(tmp_path / "gen")
        assert main(["synth-gen", "--outdir", outdir, "--seed", "1"] + self.SMALL) == 0
        emb, labels = fileio.read_embeddings(os.path.join(outdir, "embeddings.seb"))
        anchors, _ = fileio.read_embeddings(os.path.join(outdir, "anchors.seb"))
        assert emb.shape == (384, 32) and labels.shape == (384,)
        assert anchors.shape == (6, 32)
        cfg = fileio.read_config(os.path.join(outdir, "config.txt"))
        assert cfg["seed"] == "1"

    def test_adapt_synth_and_deterministic_csv(self, tmp_path):
        out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
        args = ["adapt", "--synth", "--seed", "0"] + self.SMALL
        assert main(args + ["--outdir", out1]) == 0
        assert main(args + ["--outdir", out2]) == 0
        csv1 = open(os.path.join(out1, "steps.csv"), "rb").read()
        csv2 = open(os.path.join(out2, "steps.csv"), "rb").read()
        assert csv1 == csv2

    def test_degeneracy_matches_diagnose_source_accuracy(self, tmp_path, capsys):
        gen = str(tmp_path / "gen")
        assert main(["synth-gen", "--outdir", gen, "--seed", "2"] + self.SMALL) == 0
        emb = os.path.join(gen, "embeddings.seb")
        anc = os.path.join(gen, "anchors.seb")

        out = str(tmp_path / "adapt")
        assert main(["adapt", "--data", emb, "--anchors", anc,
                     "--no-align", "--no-project", "--outdir", out]) == 0
        stdout = capsys.readouterr().out
        adapt_acc = float(re.search(r"mean_accuracy=([\d.]+)", stdout).group(1))

        diag_csv = str(tmp_path / "diag.csv")
        assert main(["diagnose", "--embeddings", emb, "--anchors", anc,
                     "--out", diag_csv]) == 0
        stdout = capsys.readouterr().out
        diag_acc = float(re.search(r"source_accuracy=([\d.]+)", stdout).group(1))
        assert adapt_acc == diag_acc

    def test_diagnose_writes_csv(self, tmp_path):
        gen = str(tmp_path / "gen")
        assert main(["synth-gen", "--outdir", gen, "--seed", "3"] + self.SMALL) == 0
        out_csv = str(tmp_path / "diag.csv")
        assert main(["diagnose",
                     "--embeddings", os.path.join(gen, "embeddings.seb"),
                     "--anchors", os.path.join(gen, "anchors.seb"),
                     "--out", out_csv]) == 0
        lines = open(out_csv).read().splitlines()
        assert lines[0].startswith("sample,label,pred_class,angle")
        assert len(lines) == 385

    def test_eig_check_passes(self):
        assert main(["eig-check", "--seed", "0"]) == 0

    def test_grad_check_passes(self):
        assert main(["grad-check", "--seed", "7"]) == 0

    def test_adapt_requires_data_or_synth(self, capsys):
        assert main(["adapt", "--outdir", "/tmp/nope"]) == 2

    def test_missing_file_is_clean_error(self, tmp_path, capsys):
        assert main(["diagnose", "--embeddings", str(tmp_path / "nope.seb"),
                     "--anchors", str(tmp_path / "nope2.seb"),
                     "--out", str(tmp_path / "o.csv")]) == 1
        assert "error:" in capsys.readouterr().err
