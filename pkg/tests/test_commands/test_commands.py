"""
End-to-end tests of the vessel-transfer subcommands through the CLI runner.
"""

import json
import os

import numpy as np
import pytest

from vessel_transfer import cli
from vessel_transfer.imgio import MaskImage, load_image, save_image, synth_vessels


def vt(*argv):
    return cli.run(package="vessel_transfer", prog="vessel-transfer", argv=[str(a) for a in argv])


def _tree(root):
    found = {}
    for base, _, files in os.walk(root):
        for name in files:
            path = os.path.join(base, name)
            with open(path, "rb") as f:
                found[os.path.relpath(path, root)] = f.read()
    return found


class TestEvaluate:
    """``evaluate``"""

    def test_prediction_equal_to_truth(self, tmp_path, capsys):
        _, mask = synth_vessels(0, 32, 32)
        path = tmp_path / "mask.pgm"
        save_image(str(path), mask)
        capsys.readouterr()
        assert vt("evaluate", "--pred", path, "--truth", path) == 0
        assert capsys.readouterr().out == "1.0000 1.0000 1.0000 1.0000\n"

    def test_roi_and_json(self, tmp_path, capsys):
        truth = MaskImage(np.array([[1, 0], [0, 0]]))
        pred = MaskImage(np.array([[1, 1], [0, 0]]))
        roi = MaskImage(np.array([[1, 0], [1, 1]]))
        for name, img in [("t", truth), ("p", pred), ("r", roi)]:
            save_image(str(tmp_path / f"{name}.pgm"), img)
        capsys.readouterr()
        code = vt(
            "evaluate", "--output", "json", "--pred", tmp_path / "p.pgm", "--truth", tmp_path / "t.pgm", "--roi", tmp_path / "r.pgm"
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out) == [{"acc": 1.0, "sen": 1.0, "spe": 1.0, "auc": 1.0}]

    def test_single_class_prints_undefined(self, tmp_path, capsys):
        save_image(str(tmp_path / "t.pgm"), MaskImage(np.zeros((4, 4), dtype=np.uint8)))
        capsys.readouterr()
        assert vt("evaluate", "--pred", tmp_path / "t.pgm", "--truth", tmp_path / "t.pgm") == 0
        assert capsys.readouterr().out == "1.0000 undefined 1.0000 undefined\n"

    def test_missing_inputs_is_usage_error(self):
        assert vt("evaluate") == 2
        assert vt("evaluate", "--pred", "only.pgm") == 2

    def test_threshold_out_of_range(self, tmp_path):
        assert vt("evaluate", "--pred", tmp_path / "a", "--truth", tmp_path / "b", "--threshold", "2") == 2

    def test_malformed_image_is_runtime_failure(self, tmp_path):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        assert vt("evaluate", "--pred", bad, "--truth", bad) == 1


class TestSynth:
    """``synth``"""

    def test_deterministic(self, tmp_path):
        assert vt("synth", "--out", tmp_path / "a", "--seed", 1, "--count", 2, "--width", 32, "--height", 32) == 0
        assert vt("synth", "--out", tmp_path / "b", "--seed", 1, "--count", 2, "--width", 32, "--height", 32) == 0
        a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
        assert a == b
        assert "manifest.tsv" in a
        assert os.path.join("synth-retina", "images", "synth-retina-0001.ppm") in a
        assert os.path.join("synth-retina", "masks", "synth-retina-0002.pgm") in a

    def test_labelled_sources_without_masks(self, tmp_path):
        code = vt(
            "synth", "--out", tmp_path, "--style", "neuron", "--domain", "source", "--label", "dissimilar",
            "--no-masks", "--count", 1, "--width", 32, "--height", 32, "--dataset", "cells",
        )
        assert code == 0
        assert (tmp_path / "manifest.tsv").read_text() == "cells-0000\tsource\tcells\tdissimilar\n"
        assert not (tmp_path / "cells" / "masks").exists()

    def test_target_needs_masks(self, tmp_path):
        assert vt("synth", "--out", tmp_path, "--no-masks") == 2

    def test_unknown_style(self, tmp_path):
        assert vt("synth", "--out", tmp_path, "--style", "cortex") == 2


class TestPreprocess:
    """``preprocess``"""

    def test_single_image(self, tmp_path):
        image, _ = synth_vessels(0, 32, 32)
        save_image(str(tmp_path / "in.ppm"), image)
        out = tmp_path / "out.pgm"
        assert vt("preprocess", "--input", tmp_path / "in.ppm", "--output-image", out, "--tiles", "2x2") == 0
        assert load_image(str(out)).pixels.shape == (32, 32)

    def test_modes_are_exclusive(self, tmp_path):
        assert vt("preprocess", "--input", "a", "--output-image", "b", "--data-root", "c", "--out-root", "d") == 2
        assert vt("preprocess") == 2

    def test_bad_tiles(self, tmp_path):
        assert vt("preprocess", "--input", "a", "--output-image", "b", "--tiles", "eight") == 2

    def test_registry_is_reproducible(self, tmp_path):
        assert vt("synth", "--out", tmp_path / "raw", "--seed", 4, "--count", 2, "--width", 32, "--height", 32) == 0
        for out in ("a", "b"):
            assert vt("preprocess", "--data-root", tmp_path / "raw", "--out-root", tmp_path / out, "--tiles", "2x2") == 0
        a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
        assert a == b
        assert "manifest.tsv" in a

    def test_second_run_into_same_root_fails_without_overwriting(self, tmp_path):
        assert vt("synth", "--out", tmp_path / "raw", "--seed", 4, "--count", 1, "--width", 32, "--height", 32) == 0
        before = _tree(tmp_path / "raw")
        assert vt("synth", "--out", tmp_path / "raw", "--seed", 4, "--count", 1, "--width", 32, "--height", 32) == 1
        assert _tree(tmp_path / "raw") == before


class TestModelCommands:
    """``train``, ``select-transfer`` and ``predict`` on a tiny registry."""

    NET = ["--patch-size", 8, "--stride", 4, "--depth", 1, "--base-channels", 2, "--latent-dim", 4]

    @pytest.fixture
    def registry(self, synth_registry):
        return synth_registry(
            [
                ("drive", "target", "retina", 2, None, True),
                ("stare", "source", "retina", 1, "similar", True),
                ("cells", "source", "neuron", 2, "dissimilar", True),
            ],
            size=32,
        )

    @pytest.fixture
    def checkpoint(self, registry, tmp_path):
        path = tmp_path / "model.dru"
        code = vt(
            "train", "--data-root", registry.root, "--checkpoint", path, "--rounds", 2,
            "--epochs", 1, "--patches-per-image", 2, "--clusters", 2, *self.NET,
        )
        assert code == 0
        return path

    def test_train_writes_checkpoint_and_selection(self, registry, tmp_path, capsys):
        selection = tmp_path / "sel.tsv"
        code = vt(
            "train", "--data-root", registry.root, "--checkpoint", tmp_path / "m.dru", "--rounds", 2,
            "--epochs", 1, "--patches-per-image", 2, "--clusters", 2, "--selection-out", selection,
            "--output", "json", *self.NET,
        )
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert [r["round"] for r in rows] == [1, 2]
        assert rows[0]["sources_accepted"] == 0
        assert (tmp_path / "m.dru").exists()
        assert selection.read_text().startswith("# threshold=0.5 ")

    def test_select_transfer(self, registry, checkpoint, tmp_path, capsys):
        out = tmp_path / "selection.tsv"
        capsys.readouterr()
        code = vt(
            "select-transfer", "--data-root", registry.root, "--checkpoint", checkpoint, "--out", out,
            "--clusters", 2, "--stride", 4, "--output", "plain", "--ib-lambda", 1.0, "--mi-bins", 4,
        )
        assert code == 0
        assert len(capsys.readouterr().out.splitlines()) == 3
        assert len(out.read_text().splitlines()) == 2 + 3

    def test_predict_registry(self, registry, checkpoint, tmp_path):
        out_dir = tmp_path / "pred"
        assert vt("predict", "--checkpoint", checkpoint, "--data-root", registry.root, "--out-dir", out_dir, "--stride", 4) == 0
        maps = sorted(os.listdir(out_dir))
        assert maps == ["drive-000.pgm", "drive-001.pgm"]
        assert load_image(str(out_dir / maps[0])).pixels.shape == (32, 32)

    def test_predict_then_evaluate(self, registry, checkpoint, tmp_path, capsys):
        out_dir = tmp_path / "pred"
        assert vt("predict", "--checkpoint", checkpoint, "--data-root", registry.root, "--out-dir", out_dir, "--stride", 4) == 0
        capsys.readouterr()
        assert vt("evaluate", "--pred-dir", out_dir, "--data-root", registry.root, "--output", "json") == 0
        row = json.loads(capsys.readouterr().out)[0]
        assert 0.0 <= row["acc"] <= 1.0

    def test_checkpoint_architecture_is_respected(self, checkpoint, tmp_path):
        image = tmp_path / "x.pgm"
        save_image(str(image), MaskImage(np.zeros((32, 32), dtype=np.uint8)))
        assert vt("predict", "--checkpoint", checkpoint, "--input", image, "--output-image", tmp_path / "y.pgm", "--stride", 4) == 0
        assert vt("predict", "--checkpoint", tmp_path / "absent.dru", "--input", image, "--output-image", tmp_path / "z.pgm") == 1

    def test_train_is_reproducible(self, registry, tmp_path):
        for name in ("a", "b"):
            code = vt(
                "train", "--data-root", registry.root, "--checkpoint", tmp_path / f"{name}.dru", "--rounds", 2,
                "--epochs", 1, "--patches-per-image", 2, "--clusters", 2, "--seed", 7,
                "--selection-out", tmp_path / f"{name}.tsv", *self.NET,
            )
            assert code == 0
        assert (tmp_path / "a.dru").read_bytes() == (tmp_path / "b.dru").read_bytes()
        assert (tmp_path / "a.tsv").read_text() == (tmp_path / "b.tsv").read_text()

    def test_select_transfer_is_reproducible(self, registry, checkpoint, tmp_path):
        for name in ("a", "b"):
            code = vt(
                "select-transfer", "--data-root", registry.root, "--checkpoint", checkpoint,
                "--out", tmp_path / f"{name}.tsv", "--clusters", 2, "--stride", 4, "--seed", 7,
            )
            assert code == 0
        assert (tmp_path / "a.tsv").read_text() == (tmp_path / "b.tsv").read_text()

    def test_predict_is_reproducible(self, registry, checkpoint, tmp_path):
        for name in ("a", "b"):
            code = vt("predict", "--checkpoint", checkpoint, "--data-root", registry.root, "--out-dir", tmp_path / name, "--stride", 4)
            assert code == 0
        assert _tree(tmp_path / "a") == _tree(tmp_path / "b")

    def test_unknown_transfer_mode(self, registry, tmp_path):
        code = vt("train", "--data-root", registry.root, "--checkpoint", tmp_path / "m", "--transfer-mode", "maybe", *self.NET)
        assert code == 2


@pytest.mark.slow
def test_full_pipeline_generalises_to_held_out_images(tmp_path, capsys):
    for split, seed, count in (("train", 0, 8), ("test", 100, 4)):
        assert vt("synth", "--out", tmp_path / f"raw-{split}", "--count", count, "--seed", seed) == 0
        assert vt("preprocess", "--data-root", tmp_path / f"raw-{split}", "--out-root", tmp_path / split, "--tiles", "4x4") == 0
    code = vt(
        "train", "--data-root", tmp_path / "train", "--checkpoint", tmp_path / "m.dru", "--rounds", 2,
        "--patch-size", 16, "--stride", 8, "--depth", 1, "--base-channels", 4, "--latent-dim", 8,
        "--epochs", 40, "--batch", 8, "--patches-per-image", 16, "--lr", 0.01,
    )
    assert code == 0
    preds = tmp_path / "preds"
    assert vt("predict", "--checkpoint", tmp_path / "m.dru", "--data-root", tmp_path / "test", "--out-dir", preds, "--stride", 8) == 0
    assert sorted(os.listdir(preds)) == [f"synth-retina-{seed:04d}.pgm" for seed in range(100, 104)]
    capsys.readouterr()
    assert vt("evaluate", "--pred-dir", preds, "--data-root", tmp_path / "test", "--output", "json") == 0
    row = json.loads(capsys.readouterr().out)[0]
    masks = [synth_vessels(seed, 64, 64, "retina")[1].pixels for seed in range(100, 104)]
    baseline = 1.0 - float(np.mean(masks))
    assert row["acc"] > baseline
    assert row["auc"] > 0.80
