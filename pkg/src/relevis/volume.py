"""Volumetric image values and the supported NIfTI-1 file subset.

Centralizes every byte-level decision in one place: single-file
little-endian NIfTI-1 holding 3-dimensional float32 data. Anything
else is rejected with a diagnostic rather than guessed at. The 4x4
spatial transform is carried through reads and writes opaquely; all
in-package geometry uses voxel indices and the isotropic voxel size.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AtlasError, DimsError, FormatError, IoError, RejectedError

HEADER_SIZE = 348
VOX_OFFSET = 352
DTYPE_FLOAT32 = 16
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"


@dataclass(frozen=True)
class Volume3D:
    """A 3D scalar field on a regular isotropic grid.

    data is float32 indexed [x, y, z]; the value object is immutable.
    """

    data: np.ndarray
    voxel_size_mm: float = 1.0
    origin_mm: tuple = (0.0, 0.0, 0.0)
    affine: np.ndarray = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise DimsError(f"volume data must be 3-dimensional, got shape {arr.shape}")
        if any(s < 1 for s in arr.shape):
            raise DimsError(f"volume dims must be positive, got {arr.shape}")
        if not float(self.voxel_size_mm) > 0:
            raise DimsError(f"voxel size must be positive, got {self.voxel_size_mm}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "voxel_size_mm", float(self.voxel_size_mm))
        object.__setattr__(self, "origin_mm", tuple(float(v) for v in self.origin_mm))
        if self.affine is None:
            aff = np.zeros((3, 4), dtype=np.float32)
            aff[0, 0] = aff[1, 1] = aff[2, 2] = self.voxel_size_mm
            aff[:, 3] = self.origin_mm
        else:
            aff = np.array(self.affine, dtype=np.float32).reshape(3, 4)
        aff.flags.writeable = False
        object.__setattr__(self, "affine", aff)

    @property
    def dims(self):
        return self.data.shape

    @property
    def voxel_volume_ml(self):
        return self.voxel_size_mm ** 3 / 1000.0

    def with_data(self, data):
        """Same grid geometry, different values."""
        return Volume3D(data, self.voxel_size_mm, self.origin_mm, self.affine)


def read_volume(path):
    """Read one volume from the supported NIfTI-1 subset.

    Raises FormatError for corrupt files, UnsupportedError for
    recognizable files outside the subset, IoError when the file
    cannot be read at all.
    """
    from .errors import UnsupportedError

    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(raw) < VOX_OFFSET:
        raise FormatError(f"{path}: file shorter than a NIfTI-1 header")
    magic = raw[344:348]
    if magic != MAGIC_SINGLE:
        if magic == MAGIC_PAIR:
            raise UnsupportedError(f"{path}: two-file NIfTI pairs are not supported")
        raise FormatError(f"{path}: bad magic {magic!r}")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise UnsupportedError(
            f"{path}: header size field is {sizeof_hdr}; only little-endian files are supported")
    dim = struct.unpack_from("<8h", raw, 40)
    if dim[0] != 3:
        raise UnsupportedError(f"{path}: has {dim[0]} dimensions, only 3 are supported")
    (datatype, bitpix) = struct.unpack_from("<2h", raw, 70)
    if datatype != DTYPE_FLOAT32 or bitpix != 32:
        raise UnsupportedError(
            f"{path}: datatype code {datatype}/{bitpix} bit; only float32 (16/32) is supported")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if nx < 1 or ny < 1 or nz < 1:
        raise FormatError(f"{path}: non-positive dims {(nx, ny, nz)}")
    pixdim = struct.unpack_from("<8f", raw, 76)
    if not np.isfinite(pixdim[1]) or pixdim[1] <= 0:
        raise FormatError(f"{path}: voxel size {pixdim[1]} is not a positive real")
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    offset = int(vox_offset)
    if offset < VOX_OFFSET:
        raise FormatError(f"{path}: voxel data offset {vox_offset} overlaps the header")
    expected = nx * ny * nz * 4
    if len(raw) - offset != expected:
        raise FormatError(
            f"{path}: payload is {len(raw) - offset} bytes, header promises {expected}")

    flat = np.frombuffer(raw, dtype="<f4", count=nx * ny * nz, offset=offset)
    data = np.ascontiguousarray(flat.reshape((nx, ny, nz), order="F"))
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: volume contains non-finite values")

    (sform_code,) = struct.unpack_from("<h", raw, 254)
    if sform_code > 0:
        rows = [struct.unpack_from("<4f", raw, off) for off in (280, 296, 312)]
        affine = np.array(rows, dtype=np.float32)
    else:
        qoffset = struct.unpack_from("<3f", raw, 268)
        affine = np.zeros((3, 4), dtype=np.float32)
        affine[0, 0] = affine[1, 1] = affine[2, 2] = pixdim[1]
        affine[:, 3] = qoffset
    origin = tuple(float(v) for v in affine[:, 3])
    return Volume3D(data, float(pixdim[1]), origin, affine)


def write_volume(vol, path):
    """Write a volume as single-file little-endian float32 NIfTI-1."""
    data = vol.data
    if not np.all(np.isfinite(data)):
        raise RejectedError("refusing to write non-finite voxel values")
    nx, ny, nz = data.shape
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, DTYPE_FLOAT32, 32)
    struct.pack_into("<8f", hdr, 76, 1.0, vol.voxel_size_mm, vol.voxel_size_mm,
                     vol.voxel_size_mm, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform unused, sform set
    struct.pack_into("<3f", hdr, 268, *vol.origin_mm)
    struct.pack_into("<4f", hdr, 280, *[float(v) for v in vol.affine[0]])
    struct.pack_into("<4f", hdr, 296, *[float(v) for v in vol.affine[1]])
    struct.pack_into("<4f", hdr, 312, *[float(v) for v in vol.affine[2]])
    hdr[344:348] = MAGIC_SINGLE
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(hdr))
            fh.write(b"\x00\x00\x00\x00")  # no header extensions
            fh.write(np.asfortranarray(data).tobytes(order="F"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class Atlas:
    """Integer region labels on a volume grid plus region names.

    Region id 0 is the background and needs no name entry.
    """

    labels: np.ndarray
    names: dict
    voxel_size_mm: float = 1.0
    region_ids: tuple = field(init=False)

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.int32)
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        present = sorted(int(v) for v in np.unique(lab) if v != 0)
        missing = [i for i in present if i not in self.names]
        if missing:
            raise AtlasError(f"labels contain ids without names: {missing}")
        object.__setattr__(self, "region_ids", tuple(present))

    @property
    def dims(self):
        return self.labels.shape

    def mask(self, region_id):
        if region_id not in self.names and region_id != 0:
            raise AtlasError(f"unknown region id {region_id}")
        return self.labels == region_id

    def id_for_name(self, name):
        for rid, rname in self.names.items():
            if rname == name:
                return rid
        raise AtlasError(f"unknown region name {name!r}")


def load_atlas(labels_path, names_path):
    """Load a label volume and its tab-separated id-to-name table."""
    vol = read_volume(labels_path)
    rounded = np.rint(vol.data)
    if np.max(np.abs(vol.data - rounded)) > 1e-6 or np.min(rounded) < 0:
        raise AtlasError(f"{labels_path}: labels must hold nonnegative integers")
    names = {}
    try:
        with open(names_path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IoError(f"cannot read {names_path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise AtlasError(f"{names_path}:{lineno}: expected 'id<TAB>name'")
        try:
            rid = int(parts[0])
        except ValueError:
            raise AtlasError(f"{names_path}:{lineno}: region id {parts[0]!r} is not an integer")
        if rid in names:
            raise AtlasError(f"{names_path}:{lineno}: duplicate region id {rid}")
        names[rid] = parts[1]
    return Atlas(rounded.astype(np.int32), names, vol.voxel_size_mm)


def save_atlas(atlas, labels_path, names_path):
    """Inverse of load_atlas: label volume plus id-to-name table."""
    write_volume(Volume3D(atlas.labels.astype(np.float32), atlas.voxel_size_mm),
                 labels_path)
    try:
        with open(names_path, "w", encoding="utf-8") as fh:
            for rid in sorted(atlas.names):
                fh.write(f"{rid}\t{atlas.names[rid]}\n")
    except OSError as exc:
        raise IoError(f"cannot write {names_path}: {exc}") from exc


def lookup(atlas, x, y, z):
    """Region name at a voxel coordinate; id 0 maps to 'background'."""
    dims = atlas.dims
    if not (0 <= x < dims[0] and 0 <= y < dims[1] and 0 <= z < dims[2]):
        raise DimsError(f"coordinate {(x, y, z)} outside grid {dims}")
    rid = int(atlas.labels[x, y, z])
    if rid == 0:
        return "background"
    return atlas.names[rid]
