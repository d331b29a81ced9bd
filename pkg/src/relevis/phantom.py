"""Synthetic desk-scale cohorts with a known ground-truth lesion.

Each phantom brain is a set of smooth intensity blobs, one per atlas
region. Disease severity multiplicatively darkens the target region,
age and head-size trends shift the whole pattern, and per-subject
amplitude jitter plus voxel noise provide biological and measurement
variability. Everything is deterministic in (spec, record, seed).
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DataError
from .volume import Atlas, Volume3D

GROUPS = ("CN", "MCI", "AD")

# region id, name, center and semi-axes as fractions of the grid, amplitude
REGIONS = (
    (1, "target_core", (0.34, 0.42, 0.38), (0.11, 0.13, 0.11), 1.0),
    (2, "mirror_core", (0.66, 0.42, 0.38), (0.11, 0.13, 0.11), 1.0),
    (3, "dorsal_mass", (0.50, 0.30, 0.68), (0.16, 0.12, 0.13), 0.9),
    (4, "caudal_mass", (0.50, 0.72, 0.62), (0.14, 0.13, 0.12), 0.8),
)


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    group: str
    age: float
    sex: str  # "F" or "M"
    tiv: float  # total intracranial volume, ml
    field_strength: float  # tesla
    severity: float = 0.0
    amyloid: float = None

    def __post_init__(self):
        if self.group not in GROUPS:
            raise DataError(f"group must be one of {GROUPS}, got {self.group!r}")
        if self.sex not in ("F", "M"):
            raise DataError(f"sex must be 'F' or 'M', got {self.sex!r}")

    def covariates(self):
        """Design-row covariates [age, sex, tiv, field_strength].

        Sex and field strength are {0, 1} indicators: male and 3 T.
        """
        return np.array([self.age, 1.0 if self.sex == "M" else 0.0,
                         self.tiv, 1.0 if self.field_strength == 3.0 else 0.0],
                        dtype=np.float64)

    @property
    def label(self):
        """Binary class: controls 0, disease spectrum 1."""
        return 0 if self.group == "CN" else 1

    def to_dict(self):
        return {"id": self.id, "group": self.group, "age": self.age,
                "sex": self.sex, "tiv": self.tiv,
                "field_strength": self.field_strength,
                "severity": self.severity, "amyloid": self.amyloid}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown subject record keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (32, 32, 40)
    voxel_size_mm: float = 1.5
    target_region_id: int = 1
    cn_severity: tuple = (0.0, 0.0)
    mci_severity: tuple = (0.2, 0.5)
    ad_severity: tuple = (0.5, 0.9)
    lesion_coefficient: float = 0.4
    noise_sd: float = 0.05
    amplitude_jitter_sd: float = 0.08
    smoothing_rel: float = 0.035
    age_mean: tuple = (75.4, 74.1, 75.0)
    age_sd: tuple = (6.6, 8.1, 8.0)
    female_fraction: tuple = (0.512, 0.423, 0.423)
    fs3t_fraction: tuple = (0.720, 0.777, 0.815)
    tiv_mean: float = 1400.0
    tiv_sd: float = 130.0
    age_coef: float = -0.004
    tiv_coef: float = 0.0002
    sex_coef: float = -0.01
    fs_coef: float = 0.01
    age_ref: float = 75.0
    tiv_ref: float = 1400.0

    def __post_init__(self):
        for name in ("dims", "cn_severity", "mci_severity", "ad_severity",
                     "age_mean", "age_sd", "female_fraction", "fs3t_fraction"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.dims) != 3 or any(int(d) < 4 for d in self.dims):
            raise DataError(f"dims must be three values of at least 4, got {self.dims}")
        if self.cn_severity != (0.0, 0.0):
            raise DataError("control severity must be exactly (0.0, 0.0)")
        lo_m, hi_m = self.mci_severity
        lo_a, hi_a = self.ad_severity
        if not (0.0 < lo_m <= hi_m and lo_m <= lo_a <= hi_a and hi_m <= hi_a):
            raise DataError("severity ranges must satisfy 0 < MCI <= AD")
        if not (0.0 <= self.lesion_coefficient <= 1.0):
            raise DataError("lesion coefficient must lie in [0, 1]")

    def to_dict(self):
        return {f: list(v) if isinstance(v, tuple) else v
                for f, v in ((name, getattr(self, name))
                             for name in self.__dataclass_fields__)}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown phantom spec keys: {sorted(unknown)}")
        return cls(**d)


_BASE_CACHE = {}


def _base_fields(spec):
    """Atlas labels plus the smoothed per-region intensity fields."""
    key = spec
    if key in _BASE_CACHE:
        return _BASE_CACHE[key]
    nx, ny, nz = spec.dims
    fx = (np.arange(nx) + 0.5) / nx
    fy = (np.arange(ny) + 0.5) / ny
    fz = (np.arange(nz) + 0.5) / nz
    labels = np.zeros(spec.dims, dtype=np.int32)
    sigma = max(0.75, spec.smoothing_rel * min(spec.dims))
    fields = {}
    for rid, _, center, semi, amp in REGIONS:
        dist = (((fx - center[0]) / semi[0]) ** 2)[:, None, None] \
            + (((fy - center[1]) / semi[1]) ** 2)[None, :, None] \
            + (((fz - center[2]) / semi[2]) ** 2)[None, None, :]
        mask = dist <= 1.0
        labels[mask] = rid
        fields[rid] = gaussian_filter(mask.astype(np.float64) * amp, sigma)
    base_total = np.sum(list(fields.values()), axis=0)
    value = (labels, fields, base_total)
    _BASE_CACHE[key] = value
    return value


def generate_atlas(spec):
    labels, _, _ = _base_fields(spec)
    names = {rid: name for rid, name, _, _, _ in REGIONS}
    return Atlas(labels, names, spec.voxel_size_mm)


def _record_rng(seed, record_id):
    digest = hashlib.blake2b(record_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([int(seed), int.from_bytes(digest, "little")])


def generate_phantom(spec, record, seed=0):
    """One subject's volume.

    The value at voxel v is

        sum_r jitter_r * base_r(v) * lesion(v)
        + (age_coef*(age-age_ref) + tiv_coef*(tiv-tiv_ref)
           + sex_coef*[sex=M] + fs_coef*(fs-1.5)) * base(v)
        + noise_sd * n(v)

    where lesion(v) = 1 - severity * lesion_coefficient inside the
    target region and 1 elsewhere, base is the unjittered total field,
    jitter_r ~ N(1, amplitude_jitter_sd) clipped below at 0.1, and n is
    unit white noise. Two records differing only in a covariate differ
    exactly by the corresponding trend term.
    """
    labels, fields, base_total = _base_fields(spec)
    rng = _record_rng(seed, record.id)
    jitter = np.maximum(0.1, 1.0 + spec.amplitude_jitter_sd * rng.standard_normal(len(REGIONS)))
    v = np.zeros(spec.dims, dtype=np.float64)
    for (rid, _, _, _, _), g in zip(REGIONS, jitter):
        v += g * fields[rid]
    lesion = 1.0 - float(record.severity) * spec.lesion_coefficient
    target = labels == spec.target_region_id
    v[target] *= lesion
    trend = (spec.age_coef * (record.age - spec.age_ref)
             + spec.tiv_coef * (record.tiv - spec.tiv_ref)
             + spec.sex_coef * (1.0 if record.sex == "M" else 0.0)
             + spec.fs_coef * (record.field_strength - 1.5))
    v += trend * base_total
    if spec.noise_sd > 0:
        v += spec.noise_sd * rng.standard_normal(spec.dims)
    return Volume3D(v.astype(np.float32), spec.voxel_size_mm)


def _severity_range(spec, group):
    return {"CN": spec.cn_severity, "MCI": spec.mci_severity,
            "AD": spec.ad_severity}[group]


def generate_cohort(spec, counts=(150, 130, 110), seed=0):
    """Records and volumes for counts of (CN, MCI, AD) subjects."""
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise DataError(f"counts must be three nonnegative values, got {counts}")
    rng = np.random.default_rng([int(seed), 0xC0F0])
    cohort = []
    index = 0
    for gi, (group, n) in enumerate(zip(GROUPS, counts)):
        for _ in range(n):
            index += 1
            age = float(np.clip(rng.normal(spec.age_mean[gi], spec.age_sd[gi]), 55.0, 95.0))
            sex = "F" if rng.random() < spec.female_fraction[gi] else "M"
            tiv = float(np.clip(rng.normal(spec.tiv_mean, spec.tiv_sd), 1050.0, 1850.0))
            fs = 3.0 if rng.random() < spec.fs3t_fraction[gi] else 1.5
            lo, hi = _severity_range(spec, group)
            severity = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
            record = SubjectRecord(f"s{index:04d}", group, round(age, 1), sex,
                                   round(tiv, 1), fs, severity)
            cohort.append((record, generate_phantom(spec, record, seed)))
    return cohort
