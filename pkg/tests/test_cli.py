import json

import numpy as np
import pytest

from salesrisk import cli


def run(argv):
    return cli.main(argv)


@pytest.fixture
def schema_file(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text(json.dumps({"fields": [
        {"name": "store", "kind": "categorical", "levels": ["A", "B", "C"]},
        {"name": "price", "kind": "continuous"},
    ]}))
    return str(path)


@pytest.fixture
def small_csv(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["store,price,y"]
    for _ in range(50):
        s = rng.choice(["A", "B", "C"])
        p = rng.uniform(1.0, 5.0)
        lines.append(f"{s},{p:.4f},{10 + 3*p + rng.exponential(2.0):.4f}")
    path = tmp_path / "sales.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class TestPipeline:
    def test_fit_smoke_on_small_csv(self, tmp_path, schema_file, small_csv):
        model_path = str(tmp_path / "model.npz")
        code = run(["fit", "--data", small_csv, "--schema", schema_file,
                    "--m", "5", "--out", model_path])
        assert code == 0
        meta = json.loads((tmp_path / "model.npz.meta.json").read_text())
        assert meta["m"] == 5 and meta["kind"] == "linear"
        assert "model_id" in meta and "fit_report" in meta

    def test_generate_and_risk(self, tmp_path, schema_file, small_csv):
        model_path = str(tmp_path / "model.npz")
        assert run(["fit", "--data", small_csv, "--schema", schema_file,
                    "--m", "5", "--out", model_path]) == 0
        out = str(tmp_path / "draws.csv")
        assert run(["generate", "--model", model_path, "-x", "store=A",
                    "-x", "price=2.5", "--K", "500", "--seed", "3", "--out", out]) == 0
        lines = [l for l in open(out) if not l.startswith("#")]
        assert len(lines) == 501  # header + draws

        curve_default = str(tmp_path / "curve.csv")
        assert run(["risk", "--model", model_path, "-x", "store=A", "-x", "price=2.5",
                    "--out", curve_default]) == 0
        curve_plugin = str(tmp_path / "curve_g1.csv")
        assert run(["risk", "--model", model_path, "-x", "store=A", "-x", "price=2.5",
                    "--loss-plugin", "indicator", "--out", curve_plugin]) == 0
        base = json.loads(open(curve_default + ".json").read())
        g1 = json.loads(open(curve_plugin + ".json").read())
        assert g1["r3"] == base["r1"]  # reduction identity through the CLI

    def test_synth_ingest_eval_roundtrip(self, tmp_path, schema_file):
        synth_csv = str(tmp_path / "synth.csv")
        assert run(["synth", "--schema", schema_file, "--n", "600",
                    "--seed", "5", "--out", synth_csv]) == 0
        meta = json.loads((tmp_path / "synth.csv.meta.json").read_text())
        assert meta["prng"] == "numpy.random.PCG64" and meta["seed"] == 5

        npz = str(tmp_path / "data.npz")
        assert run(["ingest", "--schema", schema_file, "--csv", synth_csv,
                    "--response-column", "y", "--out", npz]) == 0

        table = str(tmp_path / "table.csv")
        assert run(["eval", "--data", npz, "--m", "6", "--replications", "3",
                    "--out", table]) == 0
        report = json.loads(open(table + ".json").read())
        assert report["aggregates"]["replications"] == 3
        assert len(open(table).read().strip().splitlines()) == 4

    def test_reproducible_generate(self, tmp_path, schema_file, small_csv):
        model_path = str(tmp_path / "model.npz")
        run(["fit", "--data", small_csv, "--schema", schema_file, "--m", "5",
             "--out", model_path])
        a = str(tmp_path / "a.csv")
        b = str(tmp_path / "b.csv")
        run(["generate", "--model", model_path, "-x", "store=B", "-x", "price=1.0",
             "--K", "100", "--seed", "11", "--out", a])
        run(["generate", "--model", model_path, "-x", "store=B", "-x", "price=1.0",
             "--K", "100", "--seed", "11", "--out", b])
        assert open(a).read() == open(b).read()


class TestExitCodes:
    def test_missing_file_is_data_error(self, tmp_path, schema_file):
        code = run(["fit", "--data", str(tmp_path / "absent.csv"),
                    "--schema", schema_file, "--out", str(tmp_path / "m.npz")])
        assert code == cli.EXIT_DATA

    def test_bad_usage_exits_two(self):
        with pytest.raises(SystemExit) as err:
            run(["fit"])  # missing required arguments
        assert err.value.code == 2

    def test_unseen_level_is_data_error(self, tmp_path, schema_file, small_csv):
        model_path = str(tmp_path / "model.npz")
        run(["fit", "--data", small_csv, "--schema", schema_file, "--m", "5",
             "--out", model_path])
        code = run(["generate", "--model", model_path, "-x", "store=Z",
                    "-x", "price=1.0", "--out", str(tmp_path / "o.csv")])
        assert code == cli.EXIT_DATA

    def test_env_seed_fallback(self, tmp_path, schema_file, monkeypatch):
        monkeypatch.setenv("SALESRISK_SEED", "17")
        synth_csv = str(tmp_path / "s.csv")
        assert run(["synth", "--schema", schema_file, "--n", "50", "--out", synth_csv]) == 0
        meta = json.loads((tmp_path / "s.csv.meta.json").read_text())
        assert meta["seed"] == 17
