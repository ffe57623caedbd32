"""Pluggable age predictor with a ridge-regression baseline.

The baseline maps handcrafted per-view intensity/shape features to age and
stands in for any stronger model; externally produced predictions can be
loaded from CSV instead. Anything that fits the ``fit(cases, seed)`` /
``predict(view_set)`` pair slots into the cross-validation driver.
"""

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DuplicatePatient,
    MissingColumn,
    NonFiniteInput,
    NonNumericField,
    TooFewSamples,
)
from .seeds import derive_seed
from .views import View, ViewSet, aggregate_predictions, sample_views

FEATURE_NAMES = (
    "mean_hu_all",
    "mean_hu_kidney",
    "mean_hu_tumor",
    "tumor_area_fraction",
    "kidney_area_fraction",
    "hu_p10",
    "hu_p50",
    "hu_p90",
)

PREDICTIONS_HEADER = "patient_id,predicted_age,chronological_age"

_CONST_COLUMN_SD = 1e-12


@dataclass(frozen=True)
class FeatureVector:
    mean_hu_all: float
    mean_hu_kidney: float
    mean_hu_tumor: float
    tumor_area_fraction: float
    kidney_area_fraction: float
    hu_p10: float
    hu_p50: float
    hu_p90: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES])


@dataclass(frozen=True)
class BaselineModel:
    """Ridge fit on standardized features; constant columns are dropped."""

    feature_names: tuple[str, ...]  # names of the kept columns
    kept: np.ndarray                # bool mask over FEATURE_NAMES
    means: np.ndarray               # per kept column
    sds: np.ndarray
    weights: np.ndarray             # per kept column, standardized scale
    intercept: float
    ridge_lambda: float

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        """Predict ages for a (n, len(FEATURE_NAMES)) feature matrix."""
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
        z = (f[:, self.kept] - self.means) / self.sds
        return z @ self.weights + self.intercept

    def to_json(self) -> str:
        return json.dumps({
            "feature_names": list(self.feature_names),
            "kept": self.kept.astype(int).tolist(),
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "ridge_lambda": self.ridge_lambda,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BaselineModel":
        obj = json.loads(text)
        return cls(feature_names=tuple(obj["feature_names"]),
                   kept=np.array(obj["kept"], dtype=bool),
                   means=np.array(obj["means"]),
                   sds=np.array(obj["sds"]),
                   weights=np.array(obj["weights"]),
                   intercept=float(obj["intercept"]),
                   ridge_lambda=float(obj["ridge_lambda"]))


@dataclass(frozen=True)
class PredictionTable:
    patient_ids: tuple[str, ...]
    predicted_age: np.ndarray
    chronological_age: np.ndarray

    def __len__(self) -> int:
        return len(self.patient_ids)

    def to_csv_text(self) -> str:
        lines = [PREDICTIONS_HEADER]
        for pid, pred, chron in zip(self.patient_ids, self.predicted_age,
                                    self.chronological_age):
            lines.append(f"{pid},{float(pred)!r},{float(chron)!r}")
        return "\n".join(lines) + "\n"


def compute_view_features(view: View) -> FeatureVector:
    """Intensity and mask-area summary of one view.

    Masked means fall back to 0 when the mask is empty.
    """
    hu = view.hu
    tumor = view.tumor_mask == 1
    kidney = view.kidney_mask == 1

    def masked_mean(mask):
        return float(hu[mask].mean()) if mask.any() else 0.0

    p10, p50, p90 = np.percentile(hu, [10.0, 50.0, 90.0])
    size = hu.size
    return FeatureVector(
        mean_hu_all=float(hu.mean()),
        mean_hu_kidney=masked_mean(kidney),
        mean_hu_tumor=masked_mean(tumor),
        tumor_area_fraction=float(tumor.sum()) / size,
        kidney_area_fraction=float(kidney.sum()) / size,
        hu_p10=float(p10),
        hu_p50=float(p50),
        hu_p90=float(p90),
    )


def fit_baseline(features: np.ndarray, ages: np.ndarray,
                 ridge_lambda: float) -> BaselineModel:
    """Minimize ||y - Xw||^2 + lambda ||w||^2 with an unpenalized intercept.

    Columns are standardized internally and constant columns dropped; the
    normal equations are solved by Cholesky factorization.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(ages, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != len(FEATURE_NAMES):
        raise NonFiniteInput(f"feature matrix must be (n, {len(FEATURE_NAMES)})")
    if x.shape[0] != y.size or x.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples, got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))
            and math.isfinite(ridge_lambda)):
        raise NonFiniteInput("features, ages, and lambda must be finite")
    if ridge_lambda < 0:
        raise NonFiniteInput(f"ridge_lambda must be nonnegative, got {ridge_lambda}")

    means = x.mean(axis=0)
    sds = x.std(axis=0)
    kept = sds > _CONST_COLUMN_SD
    z = (x[:, kept] - means[kept]) / sds[kept]
    k = z.shape[1]

    a = np.hstack([z, np.ones((x.shape[0], 1))])
    gram = a.T @ a
    gram[np.arange(k), np.arange(k)] += ridge_lambda  # intercept unpenalized
    rhs = a.T @ y
    chol = np.linalg.cholesky(gram)
    w = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    names = tuple(n for n, keep in zip(FEATURE_NAMES, kept) if keep)
    return BaselineModel(feature_names=names, kept=kept, means=means[kept],
                         sds=sds[kept], weights=w[:k], intercept=float(w[k]),
                         ridge_lambda=float(ridge_lambda))


def predict_age(model: BaselineModel, view_set: ViewSet) -> float:
    """Per-view predictions combined by tumor-fraction weights."""
    feats = np.array([compute_view_features(v).to_array() for v in view_set.views])
    per_view = model.predict_features(feats)
    return aggregate_predictions(per_view, view_set.weights)


class BaselineAgePredictor:
    """Cross-validation plugin wrapping the ridge baseline.

    Training draws ``views_per_scan`` weighted view samples per case with a
    stream derived from (seed, case_id); prediction averages over all views.
    """

    def __init__(self, ridge_lambda: float = 1.0, views_per_scan: int = 12):
        self.ridge_lambda = ridge_lambda
        self.views_per_scan = views_per_scan
        self._model: BaselineModel | None = None

    def fit(self, cases, seed: int) -> None:
        rows, targets = [], []
        for case in cases:
            idx = sample_views(case.views, self.views_per_scan,
                               derive_seed(seed, case.patient_id))
            for i in idx:
                rows.append(compute_view_features(case.views.views[i]).to_array())
                targets.append(case.age_years)
        self._model = fit_baseline(np.array(rows), np.array(targets),
                                   self.ridge_lambda)

    def predict(self, view_set: ViewSet) -> float:
        if self._model is None:
            raise TooFewSamples("predictor used before fit")
        return predict_age(self._model, view_set)


def load_external_predictions(csv_text: str) -> PredictionTable:
    """Parse and validate a predictions CSV produced by an external model."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty predictions file") from None
    if [h.strip() for h in header] != PREDICTIONS_HEADER.split(","):
        raise MissingColumn(
            f"header must be exactly '{PREDICTIONS_HEADER}', got {','.join(header)}")

    ids: list[str] = []
    preds: list[float] = []
    chrons: list[float] = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise NonNumericField(f"line {lineno}: expected 3 fields, got {len(row)}")
        pid = row[0].strip()
        if pid in seen:
            raise DuplicatePatient(f"line {lineno}: repeated patient_id {pid!r}")
        seen.add(pid)
        values = []
        for col, cell in zip(("predicted_age", "chronological_age"), row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericField(f"line {lineno}: {col} {cell!r}") from None
            if not math.isfinite(v) or v <= 0:
                raise NonNumericField(
                    f"line {lineno}: {col} must be finite and positive, got {cell!r}")
            values.append(v)
        ids.append(pid)
        preds.append(values[0])
        chrons.append(values[1])
    return PredictionTable(patient_ids=tuple(ids),
                           predicted_age=np.array(preds),
                           chronological_age=np.array(chrons))


def load_predictions_file(path: Path | str) -> PredictionTable:
    return load_external_predictions(Path(path).read_text())
