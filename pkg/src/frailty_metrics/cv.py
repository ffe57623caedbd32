"""Repeated k-fold cross-validation producing one averaged prediction per patient.

Each repeat shuffles independently with a seed derived from
(master_seed, repeat_index), so extending the repeat count never reshuffles
earlier repeats. Fold fits are independent; the result table is assembled by
patient id so any execution schedule yields identical output.
"""

from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .errors import DuplicateIds, MissingCase, PredictorFailure, TooFewPatients
from .predictor import PredictionTable
from .seeds import derive_seed, make_rng
from .views import ViewSet


@dataclass(frozen=True)
class CvCase:
    patient_id: str
    views: ViewSet
    age_years: float


class AgePredictor(Protocol):
    def fit(self, cases: Sequence[CvCase], seed: int) -> None: ...

    def predict(self, view_set: ViewSet) -> float: ...


@dataclass(frozen=True)
class FoldPlan:
    k: int
    repeats: int
    assignments: tuple[Mapping[str, int], ...]  # per repeat: patient_id -> fold
    master_seed: int


def make_folds(patient_ids: Sequence[str], k: int, repeats: int,
               master_seed: int) -> FoldPlan:
    """Seeded shuffle partitioned round-robin, one shuffle per repeat."""
    ids = list(patient_ids)
    if len(set(ids)) != len(ids):
        raise DuplicateIds("patient ids must be unique")
    if k < 2:
        raise ValueError(f"fold count must be at least 2, got {k}")
    if repeats < 1:
        raise ValueError(f"repeat count must be at least 1, got {repeats}")
    if len(ids) < k:
        raise TooFewPatients(f"{len(ids)} patients cannot fill {k} folds")

    canonical = sorted(ids)
    assignments = []
    for r in range(repeats):
        rng = make_rng(derive_seed(master_seed, r))
        order = rng.permutation(len(canonical))
        assignments.append({canonical[j]: i % k for i, j in enumerate(order)})
    return FoldPlan(k=k, repeats=repeats, assignments=tuple(assignments),
                    master_seed=master_seed)


def run_cv(cases: Sequence[CvCase], predictor_factory: Callable[[], AgePredictor],
           plan: FoldPlan) -> PredictionTable:
    """Fit on train folds, predict each test fold, average over repeats."""
    by_id = {c.patient_id: c for c in cases}
    plan_ids = sorted(plan.assignments[0])
    for pid in plan_ids:
        if pid not in by_id:
            raise MissingCase(f"no case available for patient {pid}")

    sums = {pid: 0.0 for pid in plan_ids}
    for r, assignment in enumerate(plan.assignments):
        # one training seed per repeat; plugins derive per-case streams from it,
        # so each (case, repeat) pair samples identically in every fold
        fit_seed = derive_seed(plan.master_seed, "fit", r)
        for fold in range(plan.k):
            train = [by_id[pid] for pid in plan_ids if assignment[pid] != fold]
            test = [by_id[pid] for pid in plan_ids if assignment[pid] == fold]
            model = predictor_factory()
            try:
                model.fit(train, fit_seed)
            except Exception as exc:
                raise PredictorFailure(
                    f"fit failed on repeat {r} fold {fold}: {exc}") from exc
            for case in test:
                try:
                    sums[case.patient_id] += float(model.predict(case.views))
                except Exception as exc:
                    raise PredictorFailure(
                        f"prediction failed for patient {case.patient_id} "
                        f"(repeat {r} fold {fold}): {exc}") from exc

    preds = np.array([sums[pid] / plan.repeats for pid in plan_ids])
    ages = np.array([by_id[pid].age_years for pid in plan_ids])
    return PredictionTable(patient_ids=tuple(plan_ids), predicted_age=preds,
                           chronological_age=ages)
