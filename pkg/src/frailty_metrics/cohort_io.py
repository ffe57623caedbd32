"""Clinical table ingestion, under-18 exclusion, and design-matrix assembly.

The two endpoint models share a covariate core; stage and grade enter only
the overall-survival matrix because they are unknown before surgery.
"""

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .discrepancy import DiscrepancyVector
from .errors import (
    BadEnumValue,
    DuplicatePatient,
    EmptyCohortAfterExclusion,
    MissingColumn,
    MissingDiscrepancy,
    MissingGrade,
    NonPositiveTime,
)

COHORT_HEADER = ("patient_id,age_years,los_days,los_event,os_months,os_event,"
                 "approach,nephron_sparing,cci,tumor_size_cm,t_stage,"
                 "lymph_node_involvement,metastasis,isup_grade")

APPROACHES = ("open", "laparoscopic", "robotic")
MINIMALLY_INVASIVE = ("laparoscopic", "robotic")

ADULT_AGE_YEARS = 18.0

LOS_COLUMNS = ("ai_age_discrepancy", "tumor_size_cm", "minimally_invasive",
               "nephron_sparing", "cci", "age_years")
OS_COLUMNS = LOS_COLUMNS + ("t_stage_ge3", "lymph_node_involvement",
                            "metastasis", "isup_grade")


class Endpoint(str, enum.Enum):
    LOS = "los"
    OS = "os"


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    age_years: float
    los_days: float
    los_event: int
    os_months: float
    os_event: int
    approach: str
    nephron_sparing: int
    cci: int
    tumor_size_cm: float
    t_stage: int
    lymph_node_involvement: int
    metastasis: int
    isup_grade: int | None


@dataclass(frozen=True)
class DesignMatrix:
    endpoint: Endpoint
    columns: tuple[str, ...]
    x: np.ndarray
    time: np.ndarray
    event: np.ndarray
    patient_ids: tuple[str, ...]


def _parse_float(field: str, cell: str, lineno: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise BadEnumValue(f"line {lineno}: {field} {cell!r} is not numeric") from None
    if not math.isfinite(v):
        raise BadEnumValue(f"line {lineno}: {field} must be finite")
    return v


def _parse_flag(field: str, cell: str, lineno: int) -> int:
    if cell not in ("0", "1"):
        raise BadEnumValue(f"line {lineno}: {field} must be 0 or 1, got {cell!r}")
    return int(cell)


def _parse_int(field: str, cell: str, lineno: int, lo: int, hi: int | None) -> int:
    try:
        v = int(cell)
    except ValueError:
        raise BadEnumValue(f"line {lineno}: {field} {cell!r} is not an integer") from None
    if v < lo or (hi is not None and v > hi):
        raise BadEnumValue(f"line {lineno}: {field} {v} out of range")
    return v


def parse_clinical_csv(text: str) -> list[PatientRecord]:
    """Parse and validate the cohort table; the header must match exactly."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty cohort file") from None
    if header != COHORT_HEADER.split(","):
        raise MissingColumn(f"cohort header must be exactly '{COHORT_HEADER}'")

    records: list[PatientRecord] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 14:
            raise MissingColumn(f"line {lineno}: expected 14 fields, got {len(row)}")
        (pid, age_s, los_s, los_ev_s, os_s, os_ev_s, approach, nss_s, cci_s,
         size_s, tstage_s, lymph_s, met_s, isup_s) = [c.strip() for c in row]
        if not pid:
            raise BadEnumValue(f"line {lineno}: empty patient_id")
        if pid in seen:
            raise DuplicatePatient(f"line {lineno}: repeated patient_id {pid!r}")
        seen.add(pid)

        age = _parse_float("age_years", age_s, lineno)
        if age <= 0:
            raise BadEnumValue(f"line {lineno}: age_years must be positive")
        los = _parse_float("los_days", los_s, lineno)
        osm = _parse_float("os_months", os_s, lineno)
        if los <= 0:
            raise NonPositiveTime(f"line {lineno}: los_days must be positive")
        if osm <= 0:
            raise NonPositiveTime(f"line {lineno}: os_months must be positive")
        if approach not in APPROACHES:
            raise BadEnumValue(f"line {lineno}: approach {approach!r} not one of "
                               f"{'/'.join(APPROACHES)}")
        size = _parse_float("tumor_size_cm", size_s, lineno)
        if size <= 0:
            raise BadEnumValue(f"line {lineno}: tumor_size_cm must be positive")

        records.append(PatientRecord(
            patient_id=pid,
            age_years=age,
            los_days=los,
            los_event=_parse_flag("los_event", los_ev_s, lineno),
            os_months=osm,
            os_event=_parse_flag("os_event", os_ev_s, lineno),
            approach=approach,
            nephron_sparing=_parse_flag("nephron_sparing", nss_s, lineno),
            cci=_parse_int("cci", cci_s, lineno, 0, None),
            tumor_size_cm=size,
            t_stage=_parse_int("t_stage", tstage_s, lineno, 1, 4),
            lymph_node_involvement=_parse_flag("lymph_node_involvement", lymph_s, lineno),
            metastasis=_parse_flag("metastasis", met_s, lineno),
            isup_grade=None if isup_s == "" else _parse_int("isup_grade", isup_s,
                                                            lineno, 1, 4),
        ))
    return records


def records_to_csv(records: list[PatientRecord]) -> str:
    """Serialize records; floats use repr so parse -> serialize round-trips."""
    lines = [COHORT_HEADER]
    for r in records:
        isup = "" if r.isup_grade is None else str(r.isup_grade)
        lines.append(f"{r.patient_id},{float(r.age_years)!r},{float(r.los_days)!r},"
                     f"{r.los_event},{float(r.os_months)!r},{r.os_event},"
                     f"{r.approach},{r.nephron_sparing},{r.cci},"
                     f"{float(r.tumor_size_cm)!r},{r.t_stage},"
                     f"{r.lymph_node_involvement},{r.metastasis},{isup}")
    return "\n".join(lines) + "\n"


def apply_exclusions(records: list[PatientRecord]
                     ) -> tuple[list[PatientRecord], list[tuple[str, str]]]:
    """Drop patients under 18 years; age exactly 18 is kept."""
    kept, log = [], []
    for r in records:
        if r.age_years < ADULT_AGE_YEARS:
            log.append((r.patient_id, f"age_years {r.age_years!r} < 18"))
        else:
            kept.append(r)
    if not kept:
        raise EmptyCohortAfterExclusion("no patients remain after exclusions")
    return kept, log


def build_design_matrix(records: list[PatientRecord], endpoint: Endpoint,
                        disc: DiscrepancyVector) -> DesignMatrix:
    """Assemble covariates, time, and event vectors for one endpoint."""
    endpoint = Endpoint(endpoint)
    disc_by_id = disc.by_patient()
    columns = OS_COLUMNS if endpoint is Endpoint.OS else LOS_COLUMNS

    rows, times, events, ids = [], [], [], []
    for r in records:
        if r.patient_id not in disc_by_id:
            raise MissingDiscrepancy(f"no discrepancy value for patient {r.patient_id}")
        row = [disc_by_id[r.patient_id],
               r.tumor_size_cm,
               1.0 if r.approach in MINIMALLY_INVASIVE else 0.0,
               float(r.nephron_sparing),
               float(r.cci),
               r.age_years]
        if endpoint is Endpoint.OS:
            if r.isup_grade is None:
                raise MissingGrade(f"patient {r.patient_id} has no ISUP grade")
            row += [1.0 if r.t_stage >= 3 else 0.0,
                    float(r.lymph_node_involvement),
                    float(r.metastasis),
                    float(r.isup_grade)]
            times.append(r.os_months)
            events.append(r.os_event)
        else:
            times.append(r.los_days)
            events.append(r.los_event)
        rows.append(row)
        ids.append(r.patient_id)

    return DesignMatrix(endpoint=endpoint, columns=columns,
                        x=np.array(rows, dtype=np.float64),
                        time=np.array(times, dtype=np.float64),
                        event=np.array(events, dtype=np.int64),
                        patient_ids=tuple(ids))
