import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from frailty_metrics.cohort_io import COHORT_HEADER
from frailty_metrics.synth import SynthSpec, generate_cohort


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "frailty_metrics", *args],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    spec = SynthSpec(n_patients=30, true_beta=(0.35, 0.2), seed=404,
                     censor_rate=0.2, volume_dims=(8, 8, 8))
    generate_cohort(spec, root)
    return root


@pytest.fixture(scope="module")
def run_config(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    cfg = {
        "data_dir": str(synth_dir),
        "cohort_csv": str(synth_dir / "cohort.csv"),
        "out_dir": str(out / "run1"),
        "k": 3,
        "repeats": 2,
        "master_seed": 17,
    }
    path = out / "run.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


class TestRun:
    def test_full_run_writes_manifest(self, run_config):
        path, cfg = run_config
        proc = run_cli("run", "--config", str(path))
        assert proc.returncode == 0, proc.stderr
        manifest = json.loads(Path(cfg["out_dir"], "manifest.json").read_text())
        names = [f["path"] for f in manifest["files"]]
        assert names == sorted(["predictions.csv", "discrepancy.csv",
                                "los_table.csv", "os_table.csv",
                                "los_forest.svg", "os_forest.svg",
                                "age_scatter.svg"])
        import hashlib
        for entry in manifest["files"]:
            blob = Path(cfg["out_dir"], entry["path"]).read_bytes()
            assert hashlib.sha256(blob).hexdigest() == entry["sha256"]

    def test_repeat_run_is_byte_identical(self, run_config, tmp_path):
        path, cfg = run_config
        out2 = tmp_path / "run2"
        proc = run_cli("run", "--config", str(path), "--out", str(out2))
        assert proc.returncode == 0, proc.stderr
        m1 = json.loads(Path(cfg["out_dir"], "manifest.json").read_text())
        m2 = json.loads((out2 / "manifest.json").read_text())
        assert m1["files"] == m2["files"]

    def test_flag_overrides_win(self, run_config, tmp_path):
        path, _ = run_config
        out = tmp_path / "tied"
        proc = run_cli("run", "--config", str(path), "--out", str(out),
                       "--ties", "breslow")
        assert proc.returncode == 0, proc.stderr
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["ties"] == "breslow"
        assert manifest["config"]["out_dir"] == str(out)

    def test_external_without_predictions_csv_is_config_error(self, run_config):
        path, _ = run_config
        proc = run_cli("run", "--config", str(path), "--predictor", "external")
        assert proc.returncode == 2
        assert proc.stderr.startswith("ERROR 2 ")

    def test_missing_config_file(self):
        proc = run_cli("run", "--config", "/nonexistent/run.json")
        assert proc.returncode == 2
        assert proc.stderr.startswith("ERROR 2 ")

    def test_missing_case_dir_is_data_error(self, run_config, tmp_path):
        path, cfg = run_config
        sparse = tmp_path / "sparse"
        sparse.mkdir()
        (sparse / "cohort.csv").write_text(Path(cfg["cohort_csv"]).read_text())
        proc = run_cli("run", "--config", str(path), "--data-dir", str(sparse),
                       "--out", str(tmp_path / "o"))
        assert proc.returncode == 3
        assert proc.stderr.startswith("ERROR 3 predictions ")

    def test_constant_covariate_is_numeric_error(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = []
        preds = ["patient_id,predicted_age,chronological_age"]
        for i in range(12):
            age = 50 + i
            # metastasis constant 0 makes the OS design singular
            rows.append(f"p{i:02d},{age},4,1,{20 + i},1,open,"
                        f"{i % 2},{i % 5},3.5,{1 + i % 2},0,0,2")
            preds.append(f"p{i:02d},{age + rng.normal(0, 4):.3f},{age}")
        cohort = tmp_path / "cohort.csv"
        cohort.write_text(COHORT_HEADER + "\n" + "\n".join(rows) + "\n")
        pred_csv = tmp_path / "preds.csv"
        pred_csv.write_text("\n".join(preds) + "\n")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "cohort_csv": str(cohort), "out_dir": str(tmp_path / "out"),
            "predictor": "external", "predictions_csv": str(pred_csv)}))
        proc = run_cli("run", "--config", str(cfg))
        assert proc.returncode == 4, proc.stderr
        assert proc.stderr.startswith("ERROR 4 coxfit ")

    def test_error_record_is_single_line(self, run_config):
        path, _ = run_config
        proc = run_cli("run", "--config", str(path), "--predictor", "external")
        lines = [l for l in proc.stderr.splitlines() if l]
        assert len(lines) == 1
        code, stage = lines[0].split()[1:3]
        assert code == "2" and stage


class TestStages:
    def test_ingest_summary(self, synth_dir):
        proc = run_cli("ingest", "--cohort-csv", str(synth_dir / "cohort.csv"),
                       "--data-dir", str(synth_dir))
        assert proc.returncode == 0, proc.stderr
        summary = json.loads(proc.stdout)
        assert summary["patients_kept"] == 30
        assert summary["cases_checked"] == 30

    def test_views_dump(self, synth_dir, tmp_path):
        prefix = tmp_path / "case0"
        proc = run_cli("views", "--data-dir", str(synth_dir),
                       "--case-id", "case_00000", "--dump", str(prefix))
        assert proc.returncode == 0, proc.stderr
        stats = json.loads(proc.stdout)
        assert stats["n_views"] == 24  # 8 + 8 + 8
        assert abs(stats["weight_sum"] - 1.0) < 1e-9
        sidecar = json.loads((tmp_path / "case0.json").read_text())
        assert len(sidecar["views"]) == 24
        assert (tmp_path / "case0.bin").stat().st_size == sidecar["total_bytes"]

    def test_cv_then_discrepancy_then_coxfit_then_report(self, synth_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "data_dir": str(synth_dir),
            "cohort_csv": str(synth_dir / "cohort.csv"),
            "out_dir": str(tmp_path / "stage"),
            "k": 3, "repeats": 2, "master_seed": 5}))
        proc = run_cli("cv", "--config", str(cfg))
        assert proc.returncode == 0, proc.stderr
        predictions = tmp_path / "stage" / "predictions.csv"
        assert predictions.exists()

        proc = run_cli("discrepancy", "--predictions", str(predictions),
                       "--out", str(tmp_path / "stage"))
        assert proc.returncode == 0, proc.stderr
        disc = tmp_path / "stage" / "discrepancy.csv"
        assert disc.exists()

        proc = run_cli("coxfit", "--cohort-csv", str(synth_dir / "cohort.csv"),
                       "--discrepancy", str(disc), "--endpoint", "los")
        assert proc.returncode == 0, proc.stderr
        fit = json.loads(proc.stdout)
        assert len(fit["beta"]) == 6
        assert fit["converged"] is True

        proc = run_cli("report", "--cohort-csv", str(synth_dir / "cohort.csv"),
                       "--predictions", str(predictions),
                       "--out", str(tmp_path / "rep"))
        assert proc.returncode == 0, proc.stderr
        for name in ("los_table.csv", "os_table.csv", "los_forest.svg",
                     "os_forest.svg", "age_scatter.svg"):
            assert (tmp_path / "rep" / name).exists()

    def test_synth_subcommand(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_patients": 4, "true_beta": [0.4],
                                    "seed": 8, "volume_dims": [4, 4, 4]}))
        proc = run_cli("synth", "--spec", str(spec), "--out", str(tmp_path / "d"))
        assert proc.returncode == 0, proc.stderr
        out = json.loads(proc.stdout)
        assert out["n_cases"] == 4
        assert (tmp_path / "d" / "case_00000" / "imaging.nii").exists()

    def test_bad_synth_spec_is_config_error(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_patients": 4}))  # missing true_beta
        proc = run_cli("synth", "--spec", str(spec), "--out", str(tmp_path / "d"))
        assert proc.returncode == 2
        assert proc.stderr.startswith("ERROR 2 ")
