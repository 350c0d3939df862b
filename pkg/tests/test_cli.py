import json

import numpy as np
import pytest
from PIL import Image

from src.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from src.errors import TrainingAbortedError
from src.services.trainer import trainer

TINY_CONFIG = {
    "steps": 1,
    "schedule": [[4, 1], [2, 1], [1, 1]],
    "num_frequencies": 2,
    "checkpoint_every": 0,
    "log_every": 0,
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


@pytest.fixture
def trained_run(tmp_path, toy_dir, config_file):
    out = tmp_path / "run"
    assert main(["train", "--data", str(toy_dir), "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    return out


class TestMakeToy:
    def test_defaults(self, tmp_path):
        out = tmp_path / "toy"
        assert main(["make-toy", "--out", str(out)]) == EXIT_OK
        assert (out / "cameras.json").is_file()
        assert len(list((out / "images").glob("*.png"))) == 20
        assert len(list((out / "depth_gt").glob("*.pfm"))) == 20

    def test_options(self, tmp_path):
        out = tmp_path / "planes"
        code = main([
            "make-toy", "--out", str(out), "--scene", "plane", "--views", "6",
            "--res", "16x24", "--config", "fronto-parallel", "--cell-size", "0.5",
        ])
        assert code == EXIT_OK
        views = json.loads((out / "cameras.json").read_text())["views"]
        assert len(views) == 6
        assert views[0]["cx"] == 8.0 and views[0]["cy"] == 12.0

    def test_same_seed_is_bit_identical(self, tmp_path):
        for name in ("a", "b"):
            assert main(["make-toy", "--out", str(tmp_path / name), "--views", "4", "--res", "16x16"]) == EXIT_OK
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert len(files) == 9
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_too_few_views(self, tmp_path, capsys):
        assert main(["make-toy", "--out", str(tmp_path / "x"), "--views", "3"]) == EXIT_USAGE
        assert "Error:" in capsys.readouterr().err

    def test_bad_resolution(self, tmp_path):
        assert main(["make-toy", "--out", str(tmp_path / "x"), "--res", "big"]) == EXIT_USAGE


class TestUsage:
    def test_unknown_flag(self, capsys):
        assert main(["make-toy", "--out", "x", "--colour", "red"]) == EXIT_USAGE
        assert "unrecognized arguments" in capsys.readouterr().err

    def test_missing_command(self):
        assert main([]) == EXIT_USAGE

    def test_missing_data_directory(self, tmp_path, config_file):
        code = main(["train", "--data", str(tmp_path / "none"), "--config", str(config_file), "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_missing_config_file(self, tmp_path, toy_dir):
        code = main(["train", "--data", str(toy_dir), "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_unknown_config_field(self, tmp_path, toy_dir):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"steps": 1, "momentum": 0.9}))
        assert main(["train", "--data", str(toy_dir), "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE


class TestTrainCommand:
    def test_writes_checkpoint_and_history(self, trained_run):
        assert (trained_run / "checkpoint.pt").is_file()
        assert len((trained_run / "history.jsonl").read_text().splitlines()) == 1

    def test_resume(self, tmp_path, toy_dir, config_file, trained_run):
        out = tmp_path / "resumed"
        code = main([
            "train", "--data", str(toy_dir), "--config", str(config_file),
            "--out", str(out), "--resume", str(trained_run / "checkpoint.pt"),
        ])
        assert code == EXIT_OK
        record = json.loads((out / "history.jsonl").read_text().splitlines()[0])
        assert record["step"] == 2

    def test_resume_with_different_architecture(self, tmp_path, toy_dir, trained_run):
        path = tmp_path / "wider.json"
        path.write_text(json.dumps({**TINY_CONFIG, "num_frequencies": 4, "schedule": [[4, 2], [2, 1], [1, 0]]}))
        out = tmp_path / "resumed"
        code = main([
            "train", "--data", str(toy_dir), "--config", str(path),
            "--out", str(out), "--resume", str(trained_run / "checkpoint.pt"),
        ])
        assert code == EXIT_OK
        code = main([
            "render", "--checkpoint", str(out / "checkpoint.pt"),
            "--data", str(toy_dir), "--view-index", "1", "--out", str(tmp_path / "renders"),
        ])
        assert code == EXIT_OK

    def test_bad_device_is_usage_error(self, tmp_path, toy_dir, config_file, monkeypatch, mocker, capsys):
        monkeypatch.setenv("NEURALMVS_DEVICE", "tpu")
        mocker.patch.object(trainer, "_device", None)
        code = main(["train", "--data", str(toy_dir), "--config", str(config_file), "--out", str(tmp_path)])
        assert code == EXIT_USAGE
        assert "NEURALMVS_DEVICE" in capsys.readouterr().err

    def test_training_abort_is_runtime_failure(self, tmp_path, toy_dir, config_file, mocker, capsys):
        mocker.patch.object(trainer, "train", side_effect=TrainingAbortedError("Non-finite loss nan at step 1", step=1))
        code = main(["train", "--data", str(toy_dir), "--config", str(config_file), "--out", str(tmp_path)])
        assert code == EXIT_RUNTIME
        assert "Non-finite loss" in capsys.readouterr().err


class TestInspectionCommands:
    def test_select_views(self, tmp_path, toy_dir):
        out = tmp_path / "selection.json"
        assert main(["select-views", "--data", str(toy_dir), "--target-index", "0", "--out", str(out)]) == EXIT_OK
        payload = json.loads(out.read_text())
        assert payload["configuration"] == "hemisphere"
        assert 0 not in payload["view_ids"]
        assert len(payload["selected"]["view_ids"]) == 3
        assert sum(payload["selected"]["weights"]) == pytest.approx(1.0)
        assert len(payload["projected"]) == len(payload["view_ids"])

    def test_select_views_index_out_of_range(self, tmp_path, toy_dir):
        assert main(["select-views", "--data", str(toy_dir), "--target-index", "99", "--out", str(tmp_path / "s.json")]) == EXIT_USAGE

    def test_render(self, tmp_path, toy_dir, trained_run):
        out = tmp_path / "renders"
        code = main([
            "render", "--checkpoint", str(trained_run / "checkpoint.pt"),
            "--data", str(toy_dir), "--view-index", "3", "--out", str(out),
        ])
        assert code == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ["view_003_color.png", "view_003_conf.png", "view_003_depth.pfm"]

    def test_eval(self, tmp_path, toy_dir, trained_run):
        out = tmp_path / "metrics.json"
        code = main([
            "eval", "--checkpoint", str(trained_run / "checkpoint.pt"),
            "--data", str(toy_dir), "--split", "test", "--out", str(out),
        ])
        assert code == EXIT_OK
        metrics = json.loads(out.read_text())
        assert set(metrics["aggregate"]) == {"psnr_mean", "ssim_mean", "loss_mean"}
        assert [v["view"] for v in metrics["views"]] == [0]

    def test_missing_checkpoint(self, tmp_path, toy_dir):
        code = main([
            "eval", "--checkpoint", str(tmp_path / "none.pt"), "--data", str(toy_dir), "--out", str(tmp_path / "m.json"),
        ])
        assert code == EXIT_USAGE


class TestAblateCommand:
    def test_writes_one_row_per_variant(self, tmp_path, toy_dir, config_file):
        out = tmp_path / "ablation"
        assert main(["ablate", "--data", str(toy_dir), "--config", str(config_file), "--out", str(out)]) == EXIT_OK
        rows = json.loads((out / "ablation.json").read_text())
        assert len(rows) == 5
        assert all("psnr_mean" in row for row in rows.values())

    def test_seed_list_from_config(self, tmp_path, toy_dir):
        path = tmp_path / "seeds.json"
        path.write_text(json.dumps({**TINY_CONFIG, "ablation_seeds": [0, 1]}))
        out = tmp_path / "ablation"
        assert main(["ablate", "--data", str(toy_dir), "--config", str(path), "--out", str(out)]) == EXIT_OK
        rows = json.loads((out / "ablation.json").read_text())
        assert all([run["seed"] for run in row["runs"]] == [0, 1] for row in rows.values())
        assert (out / "complete" / "seed_1" / "checkpoint.pt").is_file()


class TestSceneErrors:
    def test_tiny_images_are_usage_error(self, tmp_path, config_file, capsys):
        data = tmp_path / "tiny"
        (data / "images").mkdir(parents=True)
        views = []
        for i in range(4):
            Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(data / "images" / f"{i}.png")
            pose = np.eye(4)
            pose[0, 3] = float(i)
            views.append(
                {"file": f"{i}.png", "fx": 2.0, "fy": 2.0, "cx": 1.0, "cy": 1.0, "pose": pose.reshape(-1).tolist()}
            )
        (data / "cameras.json").write_text(json.dumps({"near": 1.0, "far": 5.0, "views": views}))
        code = main(["train", "--data", str(data), "--config", str(config_file), "--out", str(tmp_path / "run")])
        assert code == EXIT_USAGE
        assert "too small" in capsys.readouterr().err
