import struct

import numpy as np
import pytest

from frailty_metrics.views import View, ViewSet
from frailty_metrics.volume_io import SegmentationVolume, Volume


def crafted_header(dims=(4, 4, 4), datatype=4, slope=1.0, inter=0.0,
                   dim0=3, magic=b"n+1\x00", byte_order="<") -> bytearray:
    """352-byte NIfTI-1 header assembled field by field from the public layout
    (independent of the package's writer)."""
    hdr = bytearray(352)
    struct.pack_into(f"{byte_order}i", hdr, 0, 348)
    struct.pack_into(f"{byte_order}8h", hdr, 40, dim0, dims[0], dims[1], dims[2],
                     1, 1, 1, 1)
    struct.pack_into(f"{byte_order}h", hdr, 70, datatype)
    bitpix = {2: 8, 4: 16, 16: 32}.get(datatype, 0)
    struct.pack_into(f"{byte_order}h", hdr, 72, bitpix)
    struct.pack_into(f"{byte_order}f", hdr, 108, 352.0)
    struct.pack_into(f"{byte_order}f", hdr, 112, slope)
    struct.pack_into(f"{byte_order}f", hdr, 116, inter)
    hdr[344:348] = magic
    return hdr


def crafted_file(stored: np.ndarray, datatype=4, slope=1.0, inter=0.0,
                 byte_order="<") -> bytes:
    """Header plus x-fastest payload for a (dx, dy, dz) stored-value array."""
    hdr = crafted_header(dims=stored.shape, datatype=datatype, slope=slope,
                         inter=inter, byte_order=byte_order)
    code = {2: "u1", 4: "i2", 16: "f4"}[datatype]
    payload = np.ascontiguousarray(stored.transpose(2, 1, 0),
                                   dtype=np.dtype(byte_order + code)).tobytes()
    return bytes(hdr) + payload


def make_view(tumor_voxels=0, shape=(4, 4), hu=None, plane_index=0):
    """Minimal View with the requested tumor count in the top-left corner."""
    from frailty_metrics.views import Plane
    hu_arr = np.zeros(shape) if hu is None else np.asarray(hu, dtype=float)
    tumor = np.zeros(shape, dtype=np.uint8)
    tumor.ravel()[:tumor_voxels] = 1
    kidney = np.zeros(shape, dtype=np.uint8)
    return View(plane=Plane.AXIAL, index=plane_index, hu=hu_arr,
                tumor_mask=tumor, kidney_mask=kidney,
                tumor_voxels=int(tumor.sum()))


def make_view_set(counts, case_id="case", shape=(4, 4), hus=None) -> ViewSet:
    views = tuple(make_view(tumor_voxels=c, shape=shape,
                            hu=None if hus is None else hus[i], plane_index=i)
                  for i, c in enumerate(counts))
    total = float(sum(c for c in counts))
    weights = np.array([c / total for c in counts], dtype=float)
    return ViewSet(case_id=case_id, views=views, weights=weights)


@pytest.fixture
def small_volume_pair():
    """4x4x4 image with a 2-voxel tumor and a small kidney."""
    rng = np.random.default_rng(42)
    data = rng.normal(30.0, 5.0, size=(4, 4, 4))
    image = Volume(dims=(4, 4, 4), data=data)
    labels = np.zeros((4, 4, 4), dtype=np.uint8)
    labels[1, 1:3, 1] = 1
    labels[2, 2, 2] = 2
    labels[2, 3, 2] = 2
    seg = SegmentationVolume(dims=(4, 4, 4), labels=labels,
                             label_counts={0: 58, 1: 2, 2: 2})
    return image, seg
