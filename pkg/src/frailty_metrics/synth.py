"""Synthetic fixtures: survival draws with known coefficients, plus crafted
NIfTI cases whose HU texture carries a learnable age signal.

Event times follow an exponential proportional-hazards model on standardized
cohort covariates. Censoring times are uniform on (0, b) with b calibrated by
bisection so the expected censored fraction matches the requested rate.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort_io import PatientRecord, records_to_csv
from .errors import IoFailure
from .seeds import derive_seed, make_rng
from .volume_io import DT_INT16, DT_UINT8, write_nifti

PH_COLUMN_POOL = ("age_years", "cci", "tumor_size_cm", "metastasis",
                  "lymph_node_involvement")

_LOS_BASELINE_HAZARD = 0.17  # per day; median stay around 4 days


@dataclass(frozen=True)
class SynthSpec:
    n_patients: int
    true_beta: tuple[float, ...]
    baseline_hazard: float = 0.08
    censor_rate: float = 0.2
    seed: int = 0
    volume_dims: tuple[int, int, int] = (12, 12, 12)

    def validate(self) -> None:
        if self.n_patients < 2:
            raise ValueError("n_patients must be at least 2")
        if not 0.0 <= self.censor_rate < 1.0:
            raise ValueError("censor_rate must lie in [0, 1)")
        if self.baseline_hazard <= 0:
            raise ValueError("baseline_hazard must be positive")
        if any(d < 2 for d in self.volume_dims):
            raise ValueError("volume dims must be at least 2 per axis")
        if not 1 <= len(self.true_beta) <= len(PH_COLUMN_POOL):
            raise ValueError(f"true_beta length must be 1..{len(PH_COLUMN_POOL)}")

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        obj = json.loads(text)
        return cls(n_patients=int(obj["n_patients"]),
                   true_beta=tuple(float(b) for b in obj["true_beta"]),
                   baseline_hazard=float(obj.get("baseline_hazard", 0.08)),
                   censor_rate=float(obj.get("censor_rate", 0.2)),
                   seed=int(obj.get("seed", 0)),
                   volume_dims=tuple(obj.get("volume_dims", (12, 12, 12))))


@dataclass(frozen=True)
class SynthResult:
    out_dir: Path
    cohort_csv: Path
    case_ids: tuple[str, ...]
    truth: dict


def censor_bound(rates: np.ndarray, censor_rate: float) -> float:
    """Bisection for b such that C ~ U(0, b) censors the target fraction.

    For exponential event times with rate r, P(C < T) = (1 - exp(-r b))/(r b)
    averaged over subjects; the function decreases from 1 to 0 in b.
    """
    rates = np.asarray(rates, dtype=np.float64)

    def censored_fraction(b: float) -> float:
        rb = rates * b
        return float(np.mean((1.0 - np.exp(-rb)) / rb))

    lo, hi = 1e-12, 1.0
    while censored_fraction(hi) > censor_rate:
        hi *= 2.0
        if hi > 1e18:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if censored_fraction(mid) > censor_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simulate_survival(x: np.ndarray, beta, baseline_hazard: float,
                      censor_rate: float, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Draw (time, event) from the exponential PH model with hazard
    baseline_hazard * exp(x @ beta) and calibrated uniform censoring."""
    x = np.asarray(x, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    rates = baseline_hazard * np.exp(x @ beta)
    u = rng.uniform(size=x.shape[0])
    t_event = -np.log(u) / rates
    if censor_rate <= 0.0:
        return t_event, np.ones(x.shape[0], dtype=np.int64)
    b = censor_bound(rates, censor_rate)
    t_cens = rng.uniform(0.0, b, size=x.shape[0])
    event = (t_event <= t_cens).astype(np.int64)
    return np.minimum(t_event, t_cens), event


def _ellipsoid(dims, center, radii) -> np.ndarray:
    gx, gy, gz = np.ogrid[0:dims[0], 0:dims[1], 0:dims[2]]
    rx, ry, rz = (max(r, 0.5) for r in radii)
    return (((gx - center[0]) / rx) ** 2 + ((gy - center[1]) / ry) ** 2
            + ((gz - center[2]) / rz) ** 2) <= 1.0


def _make_case_volume(rng: np.random.Generator, age: float, dims
                      ) -> tuple[np.ndarray, np.ndarray]:
    """HU texture plus labels; tissue and tumor means drift with age."""
    dx, dy, dz = dims
    body_mu = 80.0 - 0.5 * age
    tumor_mu = 10.0 + 0.8 * age

    hu = rng.normal(body_mu, 4.0, size=dims)
    labels = np.zeros(dims, dtype=np.int16)

    k_center = (0.38 * dx, 0.5 * dy, 0.5 * dz)
    kidney = _ellipsoid(dims, k_center, (0.30 * dx, 0.34 * dy, 0.36 * dz))
    labels[kidney] = 1
    hu[kidney] = rng.normal(body_mu + 12.0, 3.0, size=int(kidney.sum()))

    if rng.uniform() < 0.3:
        cyst = _ellipsoid(dims, (0.30 * dx, 0.40 * dy, 0.42 * dz),
                          (0.08 * dx, 0.08 * dy, 0.08 * dz)) & kidney
        labels[cyst] = 3

    t_center = (min(dx - 1, 0.48 * dx), min(dy - 1, 0.58 * dy),
                min(dz - 1, 0.44 * dz))
    tumor = _ellipsoid(dims, t_center, (0.16 * dx, 0.15 * dy, 0.15 * dz))
    labels[tumor] = 2
    # tiny grids can produce an empty ellipsoid; the tumor label is mandatory
    ti = tuple(min(int(round(c)), d - 1) for c, d in zip(t_center, dims))
    labels[ti] = 2
    tumor_mask = labels == 2
    hu[tumor_mask] = rng.normal(tumor_mu, 3.0, size=int(tumor_mask.sum()))

    stored = np.clip(np.rint(hu), -1024, 3071).astype(np.int16)
    return stored, labels.astype(np.uint8)


def _ph_design(records: list[PatientRecord], n_cols: int
               ) -> tuple[np.ndarray, dict]:
    raw = np.array([[r.age_years, r.cci, r.tumor_size_cm, r.metastasis,
                     r.lymph_node_involvement] for r in records])
    raw = raw[:, :n_cols]
    means = raw.mean(axis=0)
    sds = raw.std(axis=0)
    sds[sds == 0.0] = 1.0
    z = (raw - means) / sds
    info = {"ph_columns": list(PH_COLUMN_POOL[:n_cols]),
            "ph_means": means.tolist(), "ph_sds": sds.tolist()}
    return z, info


def generate_cohort(spec: SynthSpec, out_dir: Path | str) -> SynthResult:
    """Write ``<case_id>/imaging.nii`` + ``segmentation.nii`` per patient,
    ``cohort.csv``, and ``truth.json`` with the generating parameters."""
    spec.validate()
    out = Path(out_dir)
    n = spec.n_patients

    case_ids = [f"case_{i:05d}" for i in range(n)]
    base_records: list[dict] = []
    for i, cid in enumerate(case_ids):
        rng = make_rng(derive_seed(spec.seed, "case", i))
        age = round(float(rng.uniform(30.0, 85.0)), 1)
        base_records.append({
            "patient_id": cid,
            "age_years": age,
            "approach": str(rng.choice(["open", "laparoscopic", "robotic"],
                                       p=[0.40, 0.35, 0.25])),
            "nephron_sparing": int(rng.uniform() < 0.45),
            "cci": int(rng.binomial(10, 0.25)),
            "tumor_size_cm": round(float(rng.uniform(1.5, 10.0)), 1),
            "t_stage": int(rng.choice([1, 2, 3, 4], p=[0.3, 0.3, 0.3, 0.1])),
            "lymph_node_involvement": int(rng.uniform() < 0.3),
            "metastasis": int(rng.uniform() < 0.25),
            "isup_grade": int(rng.choice([1, 2, 3, 4], p=[0.2, 0.35, 0.3, 0.15])),
        })

    # survival draws use the standardized covariate design and true_beta
    protos = [PatientRecord(los_days=1.0, los_event=1, os_months=1.0, os_event=1,
                            **row) for row in base_records]
    z, ph_info = _ph_design(protos, len(spec.true_beta))
    beta = np.asarray(spec.true_beta, dtype=np.float64)

    rng_os = make_rng(derive_seed(spec.seed, "os"))
    os_months, os_event = simulate_survival(z, beta, spec.baseline_hazard,
                                            spec.censor_rate, rng_os)
    rng_los = make_rng(derive_seed(spec.seed, "los"))
    los_raw, _ = simulate_survival(z, beta, _LOS_BASELINE_HAZARD, 0.0, rng_los)
    los_days = np.maximum(np.ceil(los_raw), 1.0)

    records = [PatientRecord(los_days=float(los_days[i]), los_event=1,
                             os_months=float(os_months[i]),
                             os_event=int(os_event[i]), **row)
               for i, row in enumerate(base_records)]

    try:
        out.mkdir(parents=True, exist_ok=True)
        for i, (cid, rec) in enumerate(zip(case_ids, records)):
            rng = make_rng(derive_seed(spec.seed, "volume", i))
            stored, labels = _make_case_volume(rng, rec.age_years,
                                               spec.volume_dims)
            case_dir = out / cid
            case_dir.mkdir(exist_ok=True)
            write_nifti(case_dir / "imaging.nii", stored, datatype_code=DT_INT16)
            write_nifti(case_dir / "segmentation.nii", labels,
                        datatype_code=DT_UINT8)

        cohort_csv = out / "cohort.csv"
        cohort_csv.write_text(records_to_csv(records))

        truth = {
            "n_patients": n,
            "true_beta": list(spec.true_beta),
            "baseline_hazard_os": spec.baseline_hazard,
            "baseline_hazard_los": _LOS_BASELINE_HAZARD,
            "censor_rate": spec.censor_rate,
            "achieved_censor_fraction": float(1.0 - np.mean(os_event)),
            "seed": spec.seed,
            "volume_dims": list(spec.volume_dims),
            **ph_info,
        }
        (out / "truth.json").write_text(
            json.dumps(truth, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"failed to write synthetic cohort: {exc}") from exc

    return SynthResult(out_dir=out, cohort_csv=cohort_csv,
                       case_ids=tuple(case_ids), truth=truth)
