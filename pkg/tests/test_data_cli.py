import json
import subprocess
import sys

import numpy as np
import pytest

from pinda.baselines import baseline_random_noise_view, baseline_simcl_repr_noise
from pinda.cli import main
from pinda.config import ConfigError, ExperimentConfig
from pinda.data import (
    IngestionError,
    SyntheticSpec,
    VectorDataset,
    concat_split,
    inverse_rescale,
    load_csv,
    make_synthetic,
    rescale,
    train_test_split,
    write_csv,
)
from pinda.experiment import ExperimentError, augmentation_set, run_experiment


def tiny_config(**overrides):
    base = {
        "name": "tiny",
        "dataset": {"synthetic": {"n_per_class": 20, "d": 3, "n_classes": 2, "spacing": 3.0, "seed": 1}},
        "encoder": {"hidden": [8], "embed_dim": 6, "head": [6, 4]},
        "generator": {"kind": "gaussian_learned_mean", "hidden": [8]},
        "batch_size": 8,
        "epochs": 2,
        "seeds": [0, 1],
        "eval": {"k": 3, "sr_epochs": 3},
    }
    base.update(overrides)
    return base


class TestCSV:
    def test_basic(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2,0\n3,4,1\n5,6,0\n")
        ds = load_csv(p)
        assert (ds.n, ds.d) == (3, 2)
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])

    def test_header_skipped(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("x,y,label\n1,2,0\n3,4,1\n")
        assert load_csv(p, has_header=True).n == 2

    def test_unlabelled(self, tmp_path):
        p = tmp_path / "u.csv"
        p.write_text("1,2\n3,4\n")
        ds = load_csv(p, has_labels=False)
        assert ds.labels is None and ds.d == 2

    def test_empty(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(IngestionError):
            load_csv(p)

    def test_parse_error_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1,2,0\n3,abc,1\n")
        with pytest.raises(IngestionError, match=":2:"):
            load_csv(p)

    def test_ragged(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("1,2,0\n3,1\n")
        with pytest.raises(IngestionError, match=":2:"):
            load_csv(p)

    def test_nan_rejected(self, tmp_path):
        p = tmp_path / "n.csv"
        p.write_text("1,nan,0\n")
        with pytest.raises(IngestionError):
            load_csv(p)

    def test_bad_labels(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("1,2,0.5\n")
        with pytest.raises(IngestionError):
            load_csv(p)

    def test_write_roundtrip(self, tmp_path):
        ds = make_synthetic(SyntheticSpec(n_per_class=5, d=3, n_classes=3))
        write_csv(ds, tmp_path / "s.csv")
        back = load_csv(tmp_path / "s.csv")
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestRescale:
    def test_standardize(self):
        out = rescale(VectorDataset([[1.0], [3.0]]), "standardize").features
        np.testing.assert_allclose(out.ravel(), [-1.0, 1.0])

    def test_minmax(self):
        out = rescale(VectorDataset([[2.0], [4.0], [6.0]]), "minmax").features
        np.testing.assert_allclose(out.ravel(), [0.0, 0.5, 1.0])

    def test_constant_feature(self):
        out = rescale(VectorDataset([[5.0, 1.0], [5.0, 2.0]]), "standardize").features
        np.testing.assert_array_equal(out[:, 0], [0.0, 0.0])

    @pytest.mark.parametrize("mode", ["standardize", "minmax", "none"])
    def test_inverse(self, mode):
        x = np.random.default_rng(0).standard_normal((20, 4)) * 7 + 3
        np.testing.assert_allclose(inverse_rescale(rescale(VectorDataset(x), mode)), x, atol=1e-12, rtol=0)

    def test_statistics_from_train_rows(self):
        ds = VectorDataset([[0.0], [2.0], [100.0]], test_mask=np.array([False, False, True]))
        np.testing.assert_allclose(rescale(ds).features.ravel(), [-1.0, 1.0, 99.0])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            rescale(VectorDataset([[1.0]]), "robust")


class TestSynthetic:
    def test_deterministic(self):
        spec = SyntheticSpec(n_per_class=10, d=4, n_classes=3, seed=5)
        assert make_synthetic(spec).features.tobytes() == make_synthetic(spec).features.tobytes()

    def test_zero_sigma_gives_centers(self):
        ds = make_synthetic(SyntheticSpec(n_per_class=4, d=3, n_classes=2, sigma=0.0, spacing=2.0))
        for c in range(2):
            rows = ds.features[ds.labels == c]
            np.testing.assert_array_equal(rows, np.tile(rows[0], (4, 1)))
            assert np.linalg.norm(rows[0]) == pytest.approx(2.0, abs=1e-12)

    def test_class_sizes_and_split(self):
        ds = make_synthetic(SyntheticSpec(n_per_class=25, d=2, n_classes=4, test_fraction=0.2))
        assert np.all(np.bincount(ds.labels) == 25)
        assert ds.test_mask.sum() == 20

    def test_bad_generator(self):
        with pytest.raises(ValueError):
            SyntheticSpec(generator="moons")

    def test_split_without_declared_mask(self):
        ds = VectorDataset(np.zeros((10, 2)))
        tr, te = train_test_split(ds, seed=0)
        assert len(te) == 2 and len(np.intersect1d(tr, te)) == 0
        assert np.array_equal(te, train_test_split(ds, seed=0)[1])

    def test_concat_split(self):
        a, b = VectorDataset(np.zeros((3, 2)), [0, 1, 0]), VectorDataset(np.ones((2, 2)), [1, 1])
        joined = concat_split(a, b)
        tr, te = train_test_split(joined)
        np.testing.assert_array_equal(te, [3, 4])


class TestBaselines:
    def test_random_noise_moments(self):
        x = np.full((20_000, 3), 2.0)
        noise = baseline_random_noise_view(x, np.random.default_rng(0)) - x
        assert np.all(np.abs(noise.mean(axis=0)) <= 4 / np.sqrt(20_000))
        np.testing.assert_allclose(noise.var(axis=0), 1.0, rtol=0.05)

    def test_random_noise_draws_differ(self):
        rng = np.random.default_rng(1)
        x = np.zeros((4, 3))
        assert not np.array_equal(baseline_random_noise_view(x, rng), baseline_random_noise_view(x, rng))

    @pytest.mark.parametrize("scale", [0.5, 2.0])
    def test_repr_noise_norm(self, scale):
        h = np.random.default_rng(2).standard_normal((6, 5))
        delta = baseline_simcl_repr_noise(h, np.random.default_rng(3), scale).data - h
        np.testing.assert_allclose(np.linalg.norm(delta, axis=1), scale, rtol=1e-12)

    def test_repr_noise_zero_scale(self):
        h = np.random.default_rng(2).standard_normal((3, 5))
        np.testing.assert_array_equal(baseline_simcl_repr_noise(h, np.random.default_rng(0), 0.0).data, h)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.from_dict({"dataset": {"csv": "x.csv"}})
        assert (cfg.temperature, cfg.batch_size, cfg.epochs, cfg.lr) == (0.1, 256, 200, 1e-3)
        assert cfg.encoder.hidden == [1024, 1024] and cfg.eval.k == 5

    def test_roundtrip_and_hash(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        again = ExperimentConfig.from_json(cfg.to_json())
        assert again == cfg and again.config_hash() == cfg.config_hash()
        assert ExperimentConfig.from_dict(tiny_config(lr=0.01)).config_hash() != cfg.config_hash()

    @pytest.mark.parametrize(
        "bad",
        [{"method": "byol"}, {"temperature": 0}, {"unknown_key": 1}, {"seeds": []}, {"dataset": {}}, {"generator": {"kind": "x"}}],
    )
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(tiny_config(**bad))

    def test_random_noise_method_pool(self):
        cfg = ExperimentConfig.from_dict(tiny_config(method="random_noise"))
        assert [a.kind for a in augmentation_set(cfg).augmentations] == ["identity", "random_noise"]


class TestExperiment:
    def test_report_fields(self, tmp_path):
        report = run_experiment(ExperimentConfig.from_dict(tiny_config()), tmp_path / "r.json")
        data = json.loads((tmp_path / "r.json").read_text())
        assert set(data) == {"dataset", "config_hash", "method", "seeds", "knn", "softmax", "runs", "loss_history"}
        assert data["seeds"] == [0, 1] and len(data["loss_history"]) == 2
        assert 0 <= report.knn["mean"] <= 1

    def test_repeated_seed_has_zero_std(self):
        report = run_experiment(ExperimentConfig.from_dict(tiny_config(seeds=[3, 3])))
        assert report.knn["std"] == 0.0 and report.softmax["std"] == 0.0

    @pytest.mark.parametrize("method", ["random_noise", "simcl_repr_noise", "plain_infonce"])
    def test_comparison_methods_run(self, method):
        report = run_experiment(ExperimentConfig.from_dict(tiny_config(method=method, seeds=[0])))
        assert np.isfinite(report.loss_history[0]).all()

    def test_missing_file_names_stage(self, tmp_path):
        cfg = ExperimentConfig.from_dict(tiny_config(dataset={"csv": str(tmp_path / "none.csv")}))
        with pytest.raises(ExperimentError, match=r"\[load\]"):
            run_experiment(cfg)


class TestCLI:
    def _write(self, tmp_path, **overrides):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(tiny_config(**overrides)))
        return path

    def test_train_byte_identical(self, tmp_path, capsys):
        cfg = self._write(tmp_path)
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "a.json")]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "b.json")]) == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_eval_matches_training_run(self, tmp_path, capsys):
        cfg = self._write(tmp_path, seeds=[0])
        main(["train", "--config", str(cfg), "--out", str(tmp_path / "r.json"), "--checkpoint-dir", str(tmp_path / "ck")])
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(tmp_path / "ck" / "seed0.npz"), "--config", str(cfg)]) == 0
        printed = json.loads(capsys.readouterr().out)
        run = json.loads((tmp_path / "r.json").read_text())["runs"][0]
        assert printed["knn"] == run["knn"] and printed["softmax"] == run["softmax"]

    def test_synth(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_per_class": 3, "d": 2, "n_classes": 2}))
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s.csv")]) == 0
        assert load_csv(tmp_path / "s.csv").n == 6

    def test_invalid_method_exit_code(self, tmp_path, capsys):
        cfg = self._write(tmp_path, method="byol")
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == 2
        assert "[config]" in capsys.readouterr().err

    def test_missing_dataset_exit_code(self, tmp_path, capsys):
        cfg = self._write(tmp_path, dataset={"csv": str(tmp_path / "none.csv")})
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == 1
        assert "[load]" in capsys.readouterr().err

    def test_gradcheck_subcommand(self):
        out = subprocess.run(
            [sys.executable, "-m", "pinda", "gradcheck", "--instances", "1"], capture_output=True, text=True, check=False
        )
        assert out.returncode == 0, out.stderr
        assert out.stdout.count("PASS") == 6
