"""Linear covariate correction fitted on healthy controls.

For every voxel (or a single scalar marker) an ordinary least-squares
model value ~ intercept + age + sex + tiv + field_strength is fitted on
the control group, then the fitted prediction is subtracted from every
subject, leaving residuals that carry only what the covariates cannot
explain. Sex and field strength enter as {0, 1} indicators (male, 3 T).
Fitting uses 64-bit normal equations; exact collinearity in the design
is refused with the offending column names. Scalar mode also accepts a
reduced covariate set, down to a single column.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr

from .errors import (DataError, DimsError, FormatError, IoError,
                     SingularDesignError)

COVARIATE_NAMES = ("age", "sex", "tiv", "field_strength")
DESIGN_COLUMNS = ("intercept",) + COVARIATE_NAMES
RESID_MAGIC = b"RLVSRES\x00"
RESID_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ResidualModel:
    """Per-voxel (or scalar) OLS coefficients in design-column order."""

    coefficients: np.ndarray  # (n_voxels, n_columns) or (n_columns,) float64
    dims: tuple  # None for scalar models
    voxel_size_mm: float
    fit_count: int
    columns: tuple = DESIGN_COLUMNS

    def __post_init__(self):
        coef = np.ascontiguousarray(self.coefficients, dtype=np.float64)
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "dims", tuple(self.dims) if self.dims else None)
        object.__setattr__(self, "columns", tuple(self.columns))
        if coef.shape[-1] != len(self.columns):
            raise DataError(f"{coef.shape[-1]} coefficients for "
                            f"{len(self.columns)} design columns")

    @property
    def is_scalar(self):
        return self.dims is None


def _column_names(n_covariates):
    if n_covariates == len(COVARIATE_NAMES):
        return DESIGN_COLUMNS
    return ("intercept",) + tuple(f"x{j + 1}" for j in range(n_covariates))


def design_matrix(covariates):
    """Prepend the intercept column to (n, p) covariate rows, float64."""
    cov = np.asarray(covariates, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[1] < 1:
        raise DataError(f"covariates must be (n, p) with p >= 1, got {cov.shape}")
    return np.column_stack([np.ones(len(cov)), cov])


def _check_design(x, names):
    """Raise SingularDesignError naming columns on exact collinearity."""
    offenders = []
    keep = list(range(x.shape[1]))
    for j in range(1, x.shape[1]):
        if np.ptp(x[:, j]) == 0.0:
            offenders.append(names[j])
            keep.remove(j)
    sub = x[:, keep]
    _, r, piv = qr(sub, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(sub.shape) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    offenders += [names[keep[piv[j]]] for j in range(rank, len(keep))]
    if offenders:
        raise SingularDesignError(sorted(set(offenders)))


def _check_fit_count(x):
    # exact interpolation (n == columns) is allowed, underdetermined is not
    if x.shape[0] < x.shape[1]:
        raise DataError(f"need at least {x.shape[1]} fit subjects, got {x.shape[0]}")


def _fit(x, y):
    """Normal-equation OLS: one solve shared by every response column."""
    xtx = x.T @ x
    xty = x.T @ y
    return np.linalg.solve(xtx, xty)


def fit_voxelwise(volumes, covariates):
    """Fit the per-voxel model on control subjects.

    volumes: control Volume3D values, all on one grid.
    covariates: (n, 4) rows in COVARIATE_NAMES order.
    """
    if len(volumes) == 0:
        raise DataError("cannot fit on an empty control set")
    cov = np.asarray(covariates, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[1] != len(COVARIATE_NAMES):
        raise DataError(f"covariates must be (n, {len(COVARIATE_NAMES)}), got {cov.shape}")
    x = design_matrix(cov)
    if len(volumes) != x.shape[0]:
        raise DataError(f"{len(volumes)} volumes but {x.shape[0]} covariate rows")
    _check_fit_count(x)
    dims = volumes[0].dims
    for v in volumes[1:]:
        if v.dims != dims:
            raise DimsError(f"mixed volume dims in fit set: {v.dims} vs {dims}")
    _check_design(x, DESIGN_COLUMNS)
    y = np.stack([v.data.reshape(-1, order="F") for v in volumes]).astype(np.float64)
    beta = _fit(x, y)  # (5, n_voxels)
    return ResidualModel(np.ascontiguousarray(beta.T), dims,
                         volumes[0].voxel_size_mm, x.shape[0])


def fit_scalar(values, covariates):
    """Same model for a single scalar marker per subject.

    covariates may be (n, 4) in COVARIATE_NAMES order or (n, p) for any
    reduced design; a 1-D array is taken as a single covariate column.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise DataError("scalar fit needs a one-dimensional, non-empty value array")
    cov = np.asarray(covariates, dtype=np.float64)
    if cov.ndim == 1:
        cov = cov[:, None]
    x = design_matrix(cov)
    names = _column_names(cov.shape[1])
    if vals.size != x.shape[0]:
        raise DataError(f"{vals.size} values but {x.shape[0]} covariate rows")
    _check_fit_count(x)
    _check_design(x, names)
    beta = _fit(x, vals)
    return ResidualModel(beta, None, 1.0, x.shape[0], names)


def _design_row(model, covariates):
    cov = np.asarray(covariates, dtype=np.float64).reshape(-1)
    if cov.size != len(model.columns) - 1:
        raise DataError(f"model expects {len(model.columns) - 1} covariates, "
                        f"got {cov.size}")
    return np.concatenate([[1.0], cov])


def apply_voxelwise(model, vol, covariates):
    """Subtract the fitted covariate prediction from one subject."""
    if model.is_scalar:
        raise DataError("scalar model cannot be applied to a volume")
    if vol.dims != model.dims:
        raise DimsError(f"volume dims {vol.dims} do not match model {model.dims}")
    row = _design_row(model, covariates)
    pred = model.coefficients @ row
    resid = vol.data.reshape(-1, order="F").astype(np.float64) - pred
    return vol.with_data(resid.reshape(model.dims, order="F").astype(np.float32))


def apply_scalar(model, value, covariates):
    if not model.is_scalar:
        raise DataError("voxel model cannot be applied to a scalar")
    return float(value - model.coefficients @ _design_row(model, covariates))


def save_residual_model(model, path):
    """Magic, header length, JSON header, then little-endian float32
    coefficients, one vector per voxel in x-fastest voxel order."""
    header = {
        "format_version": RESID_FORMAT_VERSION,
        "kind": "scalar" if model.is_scalar else "voxel",
        "covariates": list(model.columns),
        "dims": list(model.dims) if model.dims else None,
        "voxel_size_mm": model.voxel_size_mm,
        "fit_count": model.fit_count,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(RESID_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(model.coefficients, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_residual_model(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(raw) < len(RESID_MAGIC) + 4 or raw[:len(RESID_MAGIC)] != RESID_MAGIC:
        raise FormatError(f"{path}: not a residual model file")
    (hlen,) = struct.unpack_from("<I", raw, len(RESID_MAGIC))
    start = len(RESID_MAGIC) + 4
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != RESID_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version")
    columns = tuple(header.get("covariates", DESIGN_COLUMNS))
    dims = tuple(header["dims"]) if header.get("dims") else None
    n = int(np.prod(dims)) if dims else 1
    expected = n * len(columns) * 4
    payload = raw[start + hlen:]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    coef = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    coef = coef.reshape(n, len(columns)) if dims else coef
    return ResidualModel(coef, dims, header.get("voxel_size_mm", 1.0),
                         header["fit_count"], columns)
