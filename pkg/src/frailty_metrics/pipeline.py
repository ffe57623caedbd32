"""End-to-end run orchestration: ingest, predict, discrepancy, Cox fits,
reports, and a hashed artifact manifest.

All artifact bytes are computed before anything is written; files then land
via write-to-temp plus atomic rename, so a failed run leaves no partial
output. Every output is a pure function of (inputs, config).
"""

import hashlib
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .cohort_io import (
    Endpoint,
    apply_exclusions,
    build_design_matrix,
    parse_clinical_csv,
)
from .cv import CvCase, make_folds, run_cv
from .discrepancy import compute_discrepancy, discrepancy_csv, fit_ols
from .errors import ConfigError, DataError, FrailtyMetricsError, MissingCase
from .predictor import BaselineAgePredictor, PredictionTable, load_external_predictions
from .report import forest_rows, render_forest_plot, render_hr_table, render_scatter
from .survival import SurvivalData, fit_cox
from .views import extract_views
from .volume_io import load_case

LOS_LABELS = ("AI Age Discrepancy", "Tumor Size", "Minimally Invasive Surgery",
              "Nephron Sparing Procedure", "Charlson Comorbidity Index",
              "Chronological Age")
OS_LABELS = LOS_LABELS + ("T Stage >= 3", "Lymph Node Involvement",
                          "Metastasis", "Tumor ISUP Grade")

_AGE_MATCH_TOL = 1e-6


@dataclass
class RunConfig:
    data_dir: str = ""
    cohort_csv: str = ""
    out_dir: str = ""
    k: int = 5
    repeats: int = 3
    master_seed: int = 20230
    views_per_scan: int = 12
    ties: str = "efron"
    predictor: str = "baseline"
    predictions_csv: str = ""
    ridge_lambda: float = 1.0

    def validate(self) -> None:
        if not self.cohort_csv:
            raise ConfigError("cohort_csv is required")
        if not self.out_dir:
            raise ConfigError("out_dir is required")
        if self.k < 2:
            raise ConfigError(f"k must be at least 2, got {self.k}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be at least 1, got {self.repeats}")
        if self.views_per_scan < 1:
            raise ConfigError("views_per_scan must be positive")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be nonnegative")
        if self.ties not in ("efron", "breslow"):
            raise ConfigError(f"ties must be efron or breslow, got {self.ties!r}")
        if self.predictor not in ("baseline", "external"):
            raise ConfigError(
                f"predictor must be baseline or external, got {self.predictor!r}")
        if self.predictor == "external" and not self.predictions_csv:
            raise ConfigError("predictions_csv is required with the external predictor")
        if self.predictor == "baseline" and not self.data_dir:
            raise ConfigError("data_dir is required with the baseline predictor")

    @classmethod
    def from_json_file(cls, path: Path | str, overrides: dict | None = None
                       ) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(obj)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        try:
            cfg = cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _stage(exc: Exception, stage: str) -> Exception:
    if not getattr(exc, "stage", None):
        exc.stage = stage  # type: ignore[attr-defined]
    return exc


def load_cohort(cohort_csv: Path | str):
    """Parse the clinical table and apply the under-18 exclusion."""
    try:
        text = Path(cohort_csv).read_text()
    except OSError as exc:
        raise DataError(f"cannot read cohort file: {exc}") from exc
    records = parse_clinical_csv(text)
    kept, excluded = apply_exclusions(records)
    return kept, excluded


def load_cohort_cases(data_dir: Path | str, records) -> list[CvCase]:
    """Read and validate each patient's volumes, building view sets."""
    cases = []
    for rec in records:
        case_dir = Path(data_dir) / rec.patient_id
        try:
            image, seg = load_case(case_dir)
        except FileNotFoundError as exc:
            raise MissingCase(
                f"patient {rec.patient_id}: missing volume file {exc.filename}"
            ) from exc
        views = extract_views(image, seg, case_id=rec.patient_id)
        cases.append(CvCase(patient_id=rec.patient_id, views=views,
                            age_years=rec.age_years))
    return cases


def cv_predictions(config: RunConfig, records) -> PredictionTable:
    cases = load_cohort_cases(config.data_dir, records)
    plan = make_folds([r.patient_id for r in records], config.k, config.repeats,
                      config.master_seed)
    factory = lambda: BaselineAgePredictor(ridge_lambda=config.ridge_lambda,
                                           views_per_scan=config.views_per_scan)
    return run_cv(cases, factory, plan)


def external_predictions(config: RunConfig, records) -> PredictionTable:
    """Select the analysis cohort's rows from an external predictions file.

    Extra patients (for example under-18 exclusions) are dropped; every kept
    patient must be present with a matching chronological age.
    """
    try:
        text = Path(config.predictions_csv).read_text()
    except OSError as exc:
        raise DataError(f"cannot read predictions file: {exc}") from exc
    table = load_external_predictions(text)
    by_id = {pid: i for i, pid in enumerate(table.patient_ids)}
    ids, preds, ages = [], [], []
    for rec in sorted(records, key=lambda r: r.patient_id):
        i = by_id.get(rec.patient_id)
        if i is None:
            raise MissingCase(f"no external prediction for patient {rec.patient_id}")
        if abs(table.chronological_age[i] - rec.age_years) > _AGE_MATCH_TOL:
            raise DataError(
                f"patient {rec.patient_id}: chronological_age "
                f"{table.chronological_age[i]!r} disagrees with cohort "
                f"{rec.age_years!r}")
        ids.append(rec.patient_id)
        preds.append(table.predicted_age[i])
        ages.append(rec.age_years)
    return PredictionTable(patient_ids=tuple(ids), predicted_age=np.array(preds),
                           chronological_age=np.array(ages))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def run_pipeline(config: RunConfig) -> dict:
    """Execute the full flow and return the written manifest."""
    config.validate()

    try:
        records, excluded = load_cohort(config.cohort_csv)
    except FrailtyMetricsError as exc:
        raise _stage(exc, "cohort")
    records = sorted(records, key=lambda r: r.patient_id)

    try:
        if config.predictor == "baseline":
            table = cv_predictions(config, records)
        else:
            table = external_predictions(config, records)
    except FrailtyMetricsError as exc:
        raise _stage(exc, "predictions")

    try:
        ols = fit_ols(table.chronological_age, table.predicted_age)
        disc = compute_discrepancy(table)
        los_design = build_design_matrix(records, Endpoint.LOS, disc)
        os_design = build_design_matrix(records, Endpoint.OS, disc)
    except FrailtyMetricsError as exc:
        raise _stage(exc, "discrepancy")

    try:
        los_fit = fit_cox(SurvivalData(x=los_design.x, time=los_design.time,
                                       event=los_design.event, ties=config.ties))
        os_fit = fit_cox(SurvivalData(x=os_design.x, time=os_design.time,
                                      event=os_design.event, ties=config.ties))
    except FrailtyMetricsError as exc:
        raise _stage(exc, "coxfit")

    try:
        artifacts = {
            "predictions.csv": table.to_csv_text().encode(),
            "discrepancy.csv": discrepancy_csv(table, disc).encode(),
            "los_table.csv": render_hr_table(los_fit, list(LOS_LABELS)).csv.encode(),
            "os_table.csv": render_hr_table(os_fit, list(OS_LABELS)).csv.encode(),
            "los_forest.svg": render_forest_plot(
                forest_rows(los_fit, list(LOS_LABELS))).encode(),
            "os_forest.svg": render_forest_plot(
                forest_rows(os_fit, list(OS_LABELS))).encode(),
            "age_scatter.svg": render_scatter(table, ols).encode(),
        }
    except FrailtyMetricsError as exc:
        raise _stage(exc, "report")

    manifest = {
        "config": config.to_dict(),
        "excluded_patients": [{"patient_id": pid, "reason": why}
                              for pid, why in excluded],
        "files": [{"path": name, "sha256": _sha256(data), "bytes": len(data)}
                  for name, data in sorted(artifacts.items())],
    }

    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, data in sorted(artifacts.items()):
            write_atomic(out / name, data)
        write_atomic(out / "manifest.json",
                     (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    except OSError as exc:
        raise _stage(DataError(f"cannot write outputs: {exc}"), "write")
    return manifest
