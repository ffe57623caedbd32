"""Age discrepancy: normalized residuals from the predicted-on-chronological
least-squares line.

Predictions regress toward the cohort mean, so residuals are taken to the
fitted line rather than to y = x, then normalized to mean 0 and population
standard deviation 1. A positive value means the model sees the patient as
older than expected for their age.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateResiduals,
    DegenerateX,
    DuplicatePatient,
    LengthMismatch,
    MissingColumn,
    NonNumericField,
)
from .predictor import PredictionTable

_SD_FLOOR = 1e-12

DISCREPANCY_HEADER = ("patient_id,predicted_age,chronological_age,"
                      "raw_residual,ai_age_discrepancy")


@dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    n: int

    def predict(self, ages: np.ndarray) -> np.ndarray:
        return self.intercept + self.slope * np.asarray(ages, dtype=np.float64)


@dataclass(frozen=True)
class DiscrepancyVector:
    patient_ids: tuple[str, ...]
    raw_residual: np.ndarray
    discrepancy: np.ndarray

    def by_patient(self) -> dict[str, float]:
        return {pid: float(d) for pid, d in zip(self.patient_ids, self.discrepancy)}


def fit_ols(ages, preds) -> OlsFit:
    """Least-squares line of predictions on chronological age."""
    x = np.asarray(ages, dtype=np.float64)
    y = np.asarray(preds, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise LengthMismatch(f"ages length {x.size} vs preds length {y.size}")
    if x.size < 2:
        raise LengthMismatch(f"need at least 2 points, got {x.size}")
    xc = x - x.mean()
    var = float(np.dot(xc, xc))
    if var <= 0.0:
        raise DegenerateX("chronological ages are all identical")
    slope = float(np.dot(xc, y - y.mean())) / var
    intercept = float(y.mean() - slope * x.mean())
    return OlsFit(slope=slope, intercept=intercept, n=int(x.size))


def compute_discrepancy(table: PredictionTable,
                        sd_convention: str = "population") -> DiscrepancyVector:
    """Residuals to the OLS line, z-scored.

    The population (divide-by-n) standard deviation is the default; pass
    ``sd_convention="sample"`` for the n-1 denominator. The residual mean is
    zero analytically; it is still subtracted to keep the output centered
    under floating-point rounding.
    """
    if sd_convention not in ("population", "sample"):
        raise ValueError(f"unknown sd convention {sd_convention!r}")
    fit = fit_ols(table.chronological_age, table.predicted_age)
    raw = table.predicted_age - fit.predict(table.chronological_age)
    sd = float(np.std(raw, ddof=0 if sd_convention == "population" else 1))
    if sd < _SD_FLOOR:
        raise DegenerateResiduals(
            "predictions lie on a single line in age; residual spread is zero")
    z = (raw - raw.mean()) / sd
    return DiscrepancyVector(patient_ids=table.patient_ids, raw_residual=raw,
                             discrepancy=z)


def discrepancy_csv(table: PredictionTable, disc: DiscrepancyVector) -> str:
    """CSV with predictions, raw residuals, and normalized discrepancies."""
    lines = [DISCREPANCY_HEADER]
    for i, pid in enumerate(disc.patient_ids):
        lines.append(f"{pid},{float(table.predicted_age[i])!r},"
                     f"{float(table.chronological_age[i])!r},"
                     f"{float(disc.raw_residual[i])!r},"
                     f"{float(disc.discrepancy[i])!r}")
    return "\n".join(lines) + "\n"


def parse_discrepancy_csv(text: str) -> DiscrepancyVector:
    """Read back a discrepancy CSV written by :func:`discrepancy_csv`."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty discrepancy file") from None
    if header != DISCREPANCY_HEADER.split(","):
        raise MissingColumn(f"header must be exactly '{DISCREPANCY_HEADER}'")
    ids, raw, z = [], [], []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise NonNumericField(f"line {lineno}: expected 5 fields, got {len(row)}")
        pid = row[0].strip()
        if pid in seen:
            raise DuplicatePatient(f"line {lineno}: repeated patient_id {pid!r}")
        seen.add(pid)
        try:
            raw.append(float(row[3]))
            z.append(float(row[4]))
        except ValueError:
            raise NonNumericField(f"line {lineno}: non-numeric residual") from None
        ids.append(pid)
    return DiscrepancyVector(patient_ids=tuple(ids), raw_residual=np.array(raw),
                             discrepancy=np.array(z))
