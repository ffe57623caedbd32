"""Reader and writer for uncompressed single-file NIfTI-1 volumes.

Only the fields this pipeline needs are decoded: grid dims, datatype,
HU scaling (scl_slope / scl_inter), and byte order. Scope is fixed to 3-D
volumes stored as int16, float32, or uint8, with the payload at byte 352
(348-byte header plus the 4-byte extension flag). Case layout on disk is
``<case_id>/imaging.nii`` and ``<case_id>/segmentation.nii``.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadDims,
    BadMagic,
    HeaderTooShort,
    IllegalLabel,
    NoTumorVoxels,
    NonFiniteValue,
    PayloadTruncated,
    ShapeMismatch,
    UnsupportedDatatype,
)

HEADER_SIZE = 348
PAYLOAD_OFFSET = 352  # header + 4-byte extension flag
MAGIC = b"n+1\x00"

# NIfTI-1 datatype codes supported by this reader
DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

_DTYPE_CHAR = {DT_UINT8: "u1", DT_INT16: "i2", DT_FLOAT32: "f4"}

LABEL_BACKGROUND = 0
LABEL_KIDNEY = 1
LABEL_TUMOR = 2
LABEL_CYST = 3
ALLOWED_LABELS = (LABEL_BACKGROUND, LABEL_KIDNEY, LABEL_TUMOR, LABEL_CYST)


@dataclass(frozen=True)
class VolumeHeader:
    dims: tuple[int, int, int]
    datatype_code: int
    scl_slope: float
    scl_inter: float
    byte_order: str  # "little" or "big"

    @property
    def bytes_per_voxel(self) -> int:
        return {DT_UINT8: 1, DT_INT16: 2, DT_FLOAT32: 4}[self.datatype_code]

    @property
    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]


@dataclass(frozen=True)
class Volume:
    """Dense HU grid; ``data[x, y, z]`` with x the fastest-varying file axis."""

    dims: tuple[int, int, int]
    data: np.ndarray

    @property
    def voxels(self) -> np.ndarray:
        """Flat voxel vector in file (x-fastest) order."""
        return self.data.transpose(2, 1, 0).ravel()


@dataclass(frozen=True)
class SegmentationVolume:
    dims: tuple[int, int, int]
    labels: np.ndarray  # uint8, same layout as Volume.data
    label_counts: dict[int, int] = field(default_factory=dict)


def parse_nifti_header(data: bytes) -> VolumeHeader:
    """Decode a NIfTI-1 header from the leading bytes of a file.

    Byte order is inferred from whichever endianness makes sizeof_hdr read
    as 348; a stream where neither does is rejected as not NIfTI-1.
    """
    if len(data) < PAYLOAD_OFFSET:
        raise HeaderTooShort(f"need at least {PAYLOAD_OFFSET} bytes, got {len(data)}")

    if data[344:348] != MAGIC:
        raise BadMagic("magic bytes at offset 344 are not 'n+1'")

    if struct.unpack_from("<i", data, 0)[0] == HEADER_SIZE:
        order = "little"
    elif struct.unpack_from(">i", data, 0)[0] == HEADER_SIZE:
        order = "big"
    else:
        raise BadMagic("sizeof_hdr is not 348 in either byte order")
    pre = "<" if order == "little" else ">"

    dim = struct.unpack_from(f"{pre}8h", data, 40)
    if dim[0] != 3:
        raise BadDims(f"dim[0] = {dim[0]}, only 3-D volumes supported")
    dims = (dim[1], dim[2], dim[3])
    if any(d < 1 for d in dims):
        raise BadDims(f"non-positive axis length in dims {dims}")

    datatype = struct.unpack_from(f"{pre}h", data, 70)[0]
    if datatype not in _DTYPE_CHAR:
        raise UnsupportedDatatype(f"datatype code {datatype}")

    slope = struct.unpack_from(f"{pre}f", data, 112)[0]
    inter = struct.unpack_from(f"{pre}f", data, 116)[0]
    return VolumeHeader(dims=dims, datatype_code=datatype, scl_slope=slope,
                        scl_inter=inter, byte_order=order)


def read_volume(header: VolumeHeader, data: bytes) -> Volume:
    """Decode the voxel payload and map stored values to HU.

    HU = scl_slope * stored + scl_inter, with slope 0 treated as 1 per the
    NIfTI-1 convention.
    """
    need = header.voxel_count * header.bytes_per_voxel
    payload = data[PAYLOAD_OFFSET:PAYLOAD_OFFSET + need]
    if len(payload) < need:
        raise PayloadTruncated(
            f"payload has {len(data) - PAYLOAD_OFFSET} bytes, need {need}")

    pre = "<" if header.byte_order == "little" else ">"
    raw = np.frombuffer(payload, dtype=np.dtype(pre + _DTYPE_CHAR[header.datatype_code]))
    slope = header.scl_slope if header.scl_slope != 0.0 else 1.0
    hu = slope * raw.astype(np.float64) + header.scl_inter
    if not np.all(np.isfinite(hu)):
        raise NonFiniteValue("volume contains NaN or Inf after HU scaling")

    dx, dy, dz = header.dims
    grid = hu.reshape(dz, dy, dx).transpose(2, 1, 0)
    return Volume(dims=header.dims, data=np.ascontiguousarray(grid))


def validate_segmentation(seg: Volume, image: Volume) -> SegmentationVolume:
    """Check a label volume against its paired image and type it."""
    if seg.dims != image.dims:
        raise ShapeMismatch(f"segmentation dims {seg.dims} != image dims {image.dims}")

    rounded = np.rint(seg.data)
    if np.any(rounded != seg.data):
        raise IllegalLabel("segmentation contains non-integer values")
    labels = rounded.astype(np.int64)
    bad = np.setdiff1d(np.unique(labels), ALLOWED_LABELS)
    if bad.size:
        raise IllegalLabel(f"labels outside {{0,1,2,3}}: {bad.tolist()}")

    counts = {int(v): int(c) for v, c in zip(*np.unique(labels, return_counts=True))}
    if counts.get(LABEL_TUMOR, 0) == 0:
        raise NoTumorVoxels("segmentation has no voxel labelled 2 (tumor)")
    return SegmentationVolume(dims=seg.dims, labels=labels.astype(np.uint8),
                              label_counts=counts)


def build_nifti_bytes(stored: np.ndarray, *, datatype_code: int,
                      scl_slope: float = 1.0, scl_inter: float = 0.0,
                      byte_order: str = "little") -> bytes:
    """Serialize a (dx, dy, dz) array of stored values to NIfTI-1 bytes."""
    if stored.ndim != 3:
        raise BadDims(f"expected a 3-D array, got ndim={stored.ndim}")
    if datatype_code not in _DTYPE_CHAR:
        raise UnsupportedDatatype(f"datatype code {datatype_code}")
    pre = "<" if byte_order == "little" else ">"
    dtype = np.dtype(pre + _DTYPE_CHAR[datatype_code])
    dx, dy, dz = stored.shape

    hdr = bytearray(HEADER_SIZE + 4)
    struct.pack_into(f"{pre}i", hdr, 0, HEADER_SIZE)
    struct.pack_into(f"{pre}8h", hdr, 40, 3, dx, dy, dz, 1, 1, 1, 1)
    struct.pack_into(f"{pre}h", hdr, 70, datatype_code)
    struct.pack_into(f"{pre}h", hdr, 72, dtype.itemsize * 8)  # bitpix
    struct.pack_into(f"{pre}8f", hdr, 76, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into(f"{pre}f", hdr, 108, float(PAYLOAD_OFFSET))  # vox_offset
    struct.pack_into(f"{pre}f", hdr, 112, scl_slope)
    struct.pack_into(f"{pre}f", hdr, 116, scl_inter)
    hdr[344:348] = MAGIC

    payload = np.ascontiguousarray(stored.transpose(2, 1, 0), dtype=dtype).tobytes()
    return bytes(hdr) + payload


def write_nifti(path: Path | str, stored: np.ndarray, *, datatype_code: int,
                scl_slope: float = 1.0, scl_inter: float = 0.0,
                byte_order: str = "little") -> None:
    Path(path).write_bytes(build_nifti_bytes(
        stored, datatype_code=datatype_code, scl_slope=scl_slope,
        scl_inter=scl_inter, byte_order=byte_order))


def read_nifti(path: Path | str) -> Volume:
    data = Path(path).read_bytes()
    return read_volume(parse_nifti_header(data), data)


def load_case(case_dir: Path | str) -> tuple[Volume, SegmentationVolume]:
    """Read ``imaging.nii`` + ``segmentation.nii`` from a case directory."""
    case_dir = Path(case_dir)
    image = read_nifti(case_dir / "imaging.nii")
    seg_raw = read_nifti(case_dir / "segmentation.nii")
    return image, validate_segmentation(seg_raw, image)
