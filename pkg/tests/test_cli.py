import json
from pathlib import Path

import numpy as np
import pytest

from kronreg import io as kio
from kronreg.cli import main


def write_fit_config(path, **kw):
    doc = {
        "p": [2, 2, 1],
        "d": [2, 2, 1],
        "rank": 1,
        "iterations": 12,
        "burn_in": 6,
        "seed": 3,
        "warmup": 5,
        "standardize": False,
    }
    doc.update(kw)
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


@pytest.fixture
def dataset_dir(tmp_path):
    rc = main(
        [
            "simulate",
            "--out",
            str(tmp_path / "ds"),
            "--n",
            "24",
            "--dims",
            "4,4,1",
            "--seed",
            "5",
        ]
    )
    assert rc == 0
    return tmp_path / "ds"


class TestSimulateCmd:
    def test_outputs_loadable(self, dataset_dir, tmp_path):
        config = kio.FitConfig(p=(2, 2, 1), d=(2, 2, 1))
        data = kio.load_dataset(dataset_dir / "manifest.json", config)
        assert data.n == 24
        assert (dataset_dir / "c_true.bten").exists()

    def test_reproducible(self, tmp_path):
        for sub in ("a", "b"):
            main(
                [
                    "simulate", "--out", str(tmp_path / sub), "--n", "10",
                    "--dims", "4,4,1", "--seed", "9",
                ]
            )
        t1 = kio.read_tensor(tmp_path / "a" / "tensors.bten")
        t2 = kio.read_tensor(tmp_path / "b" / "tensors.bten")
        assert np.array_equal(t1, t2)

    def test_pgm_signal_source(self, tmp_path, dataset_dir):
        # export the truth to PGM, then simulate from that image
        truth = kio.read_tensor(dataset_dir / "c_true.bten")
        kio.export_map(truth, 2, 0, tmp_path / "sig.pgm")
        rc = main(
            [
                "simulate", "--out", str(tmp_path / "ds2"), "--n", "6",
                "--dims", "4,4,1", "--signal", str(tmp_path / "sig.pgm"),
                "--seed", "1",
            ]
        )
        assert rc == 0


class TestFitPredictFlow:
    def test_fit_then_predict_and_summaries(self, dataset_dir, tmp_path, capsys):
        config_path = write_fit_config(tmp_path / "fit.json")
        rc = main(
            [
                "fit", "--data", str(dataset_dir / "manifest.json"),
                "--config", str(config_path), "--out", str(tmp_path / "chain"),
            ]
        )
        assert rc == 0
        out = kio.load_chain(tmp_path / "chain")
        assert out.kept == 6

        rc = main(["summarize", "--chain", str(tmp_path / "chain")])
        assert rc == 0
        text = capsys.readouterr().out
        assert "sigma median" in text

        rc = main(
            [
                "predict", "--chain", str(tmp_path / "chain"),
                "--data", str(dataset_dir / "manifest.json"),
                "--out", str(tmp_path / "preds.csv"),
            ]
        )
        assert rc == 0
        rows = (tmp_path / "preds.csv").read_text().splitlines()
        assert rows[0] == "pred_signal_trace,pred_signal_class"
        assert len(rows) == 25

    def test_predict_reproduces_plugin_definition(self, dataset_dir, tmp_path):
        config_path = write_fit_config(tmp_path / "fit.json")
        main(
            [
                "fit", "--data", str(dataset_dir / "manifest.json"),
                "--config", str(config_path), "--out", str(tmp_path / "chain"),
            ]
        )
        main(
            [
                "predict", "--chain", str(tmp_path / "chain"),
                "--data", str(dataset_dir / "manifest.json"),
                "--out", str(tmp_path / "preds.csv"),
            ]
        )
        out = kio.load_chain(tmp_path / "chain")
        config = kio.FitConfig(p=(2, 2, 1), d=(2, 2, 1), standardize=False)
        data = kio.load_dataset(dataset_dir / "manifest.json", config)
        from kronreg.gibbs import predict as lib_predict

        want = lib_predict(out, data)
        got = np.loadtxt(tmp_path / "preds.csv", delimiter=",", skiprows=1)
        assert np.allclose(got, want, rtol=1e-12)

    def test_invalid_split_exits_nonzero(self, dataset_dir, tmp_path):
        config_path = write_fit_config(tmp_path / "fit.json", p=[3, 2, 1])
        rc = main(
            [
                "fit", "--data", str(dataset_dir / "manifest.json"),
                "--config", str(config_path), "--out", str(tmp_path / "chain"),
            ]
        )
        assert rc == 2

    def test_fit_deterministic(self, dataset_dir, tmp_path):
        config_path = write_fit_config(tmp_path / "fit.json")
        for sub in ("c1", "c2"):
            main(
                [
                    "fit", "--data", str(dataset_dir / "manifest.json"),
                    "--config", str(config_path), "--out", str(tmp_path / sub),
                ]
            )
        a = kio.read_tensor(tmp_path / "c1" / "c0_median.bten")
        b = kio.read_tensor(tmp_path / "c2" / "c0_median.bten")
        assert np.array_equal(a, b)


class TestCrossval:
    def test_emits_folds_and_summary(self, dataset_dir, tmp_path, capsys):
        config_path = write_fit_config(tmp_path / "fit.json")
        rc = main(
            [
                "crossval", "--data", str(dataset_dir / "manifest.json"),
                "--config", str(config_path), "--folds", "3", "--seed", "2",
                "--out", str(tmp_path / "cv.json"),
            ]
        )
        assert rc == 0
        text = capsys.readouterr().out
        assert text.count("fold ") == 3
        assert "mse[signal_trace] =" in text
        assert "±" in text
        doc = json.loads((tmp_path / "cv.json").read_text())
        assert len(doc["folds"]) == 3


class TestExportMaps:
    def test_writes_pgm_per_response(self, dataset_dir, tmp_path):
        config_path = write_fit_config(tmp_path / "fit.json")
        main(
            [
                "fit", "--data", str(dataset_dir / "manifest.json"),
                "--config", str(config_path), "--out", str(tmp_path / "chain"),
            ]
        )
        rc = main(
            [
                "export-maps", "--chain", str(tmp_path / "chain"),
                "--axis", "2", "--slice-index", "0",
                "--out-prefix", str(tmp_path / "map"),
            ]
        )
        assert rc == 0
        for name in ("signal_trace", "signal_class"):
            img = kio.read_pgm(tmp_path / f"map_{name}.pgm")
            assert img.shape == (4, 4)


class TestErrors:
    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit):
            main(["simulate", "--nope", "x"])

    def test_missing_chain_dir(self, tmp_path):
        rc = main(["summarize", "--chain", str(tmp_path / "nochain")])
        assert rc != 0
