"""Three-channel 2-D views over all anatomical planes of a segmented volume.

Every slice of every plane becomes one view with HU, tumor-mask, and
kidney-mask channels. View weights are the fraction of tumor voxels each
view holds, normalized over the full three-plane list so they form a single
probability distribution.
"""

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInput, LengthMismatch, NoTumorVoxels, ZeroSampleCount
from .seeds import make_rng
from .volume_io import LABEL_KIDNEY, LABEL_TUMOR, SegmentationVolume, Volume

WEIGHT_SUM_TOL = 1e-12


class Plane(str, enum.Enum):
    AXIAL = "axial"        # slices along z, shape (dx, dy)
    CORONAL = "coronal"    # slices along y, shape (dx, dz)
    SAGITTAL = "sagittal"  # slices along x, shape (dy, dz)


@dataclass(frozen=True)
class View:
    plane: Plane
    index: int
    hu: np.ndarray
    tumor_mask: np.ndarray
    kidney_mask: np.ndarray
    tumor_voxels: int


@dataclass(frozen=True)
class ViewSet:
    case_id: str
    views: tuple[View, ...]
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.views)


def _slices(plane: Plane, image: Volume, labels: np.ndarray):
    dx, dy, dz = image.dims
    if plane is Plane.AXIAL:
        return ((k, image.data[:, :, k], labels[:, :, k]) for k in range(dz))
    if plane is Plane.CORONAL:
        return ((j, image.data[:, j, :], labels[:, j, :]) for j in range(dy))
    return ((i, image.data[i, :, :], labels[i, :, :]) for i in range(dx))


def extract_views(image: Volume, seg: SegmentationVolume, case_id: str = "") -> ViewSet:
    """One view per slice per plane, ordered axial, coronal, sagittal."""
    views = []
    for plane in Plane:
        for index, hu, lab in _slices(plane, image, seg.labels):
            tumor = (lab == LABEL_TUMOR).astype(np.uint8)
            kidney = (lab == LABEL_KIDNEY).astype(np.uint8)
            views.append(View(plane=plane, index=index,
                              hu=np.ascontiguousarray(hu),
                              tumor_mask=tumor, kidney_mask=kidney,
                              tumor_voxels=int(tumor.sum())))
    weights = tumor_fraction_weights(views)
    return ViewSet(case_id=case_id, views=tuple(views), weights=weights)


def tumor_fraction_weights(views: list[View] | tuple[View, ...]) -> np.ndarray:
    """weight_i = tumor_voxels_i / total tumor voxels across the view list."""
    counts = np.array([v.tumor_voxels for v in views], dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise NoTumorVoxels("all views have zero tumor voxels")
    return counts / total


def sample_views(view_set: ViewSet, n: int, seed: int) -> np.ndarray:
    """Draw n view indices with replacement from the weight distribution.

    The generator is seeded, so identical (view_set, n, seed) give identical
    draws.
    """
    if n <= 0:
        raise ZeroSampleCount(f"sample count must be positive, got {n}")
    rng = make_rng(seed)
    return rng.choice(len(view_set.views), size=n, replace=True, p=view_set.weights)


def aggregate_predictions(per_view_preds, weights) -> float:
    """Weighted mean of per-view predictions.

    Terms are summed in a canonical order (sorted by weight, then value) so
    the result is exactly invariant under joint permutations of the inputs.
    """
    preds = np.asarray(per_view_preds, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if preds.ndim != 1 or w.ndim != 1 or preds.shape != w.shape:
        raise LengthMismatch(f"preds length {preds.size} vs weights length {w.size}")
    if preds.size == 0:
        raise EmptyInput("no predictions to aggregate")
    order = np.lexsort((preds, w))
    return float(math.fsum(w[order] * preds[order]))


def dump_views(view_set: ViewSet, bin_path: Path | str, json_path: Path | str) -> None:
    """Debug dump: concatenated channel payloads plus a JSON sidecar.

    Per view the binary holds the HU channel as little-endian float32 followed
    by the tumor and kidney masks as uint8, row-major.
    """
    blobs = []
    entries = []
    offset = 0
    for i, v in enumerate(view_set.views):
        hu = np.ascontiguousarray(v.hu, dtype="<f4").tobytes()
        tm = np.ascontiguousarray(v.tumor_mask, dtype="u1").tobytes()
        km = np.ascontiguousarray(v.kidney_mask, dtype="u1").tobytes()
        entries.append({
            "plane": v.plane.value,
            "index": v.index,
            "shape": list(v.hu.shape),
            "tumor_voxels": v.tumor_voxels,
            "weight": float(view_set.weights[i]),
            "hu_offset": offset,
            "tumor_offset": offset + len(hu),
            "kidney_offset": offset + len(hu) + len(tm),
        })
        blobs.extend((hu, tm, km))
        offset += len(hu) + len(tm) + len(km)
    sidecar = {
        "case_id": view_set.case_id,
        "hu_dtype": "<f4",
        "mask_dtype": "u1",
        "total_bytes": offset,
        "views": entries,
    }
    Path(bin_path).write_bytes(b"".join(blobs))
    Path(json_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
