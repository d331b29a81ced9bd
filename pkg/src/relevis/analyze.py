"""Relevance-map analysis: cluster extraction, per-slice summaries,
region aggregation, and the occlusion sensitivity scan.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimsError, ShapeError, UnsupportedError
from .lrp import relevance_map
from .volume import Volume3D


@dataclass(frozen=True)
class Cluster:
    label: int
    size: int
    volume_ml: float
    sum_relevance: float
    peak_value: float
    peak_coord: tuple
    voxels: np.ndarray  # (n, 3) int coordinates in index order


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple
    threshold: float
    min_size: int
    connectivity: int
    dims: tuple
    voxel_size_mm: float

    def __len__(self):
        return len(self.clusters)

    def mask(self):
        """Boolean array marking every voxel of every kept cluster."""
        m = np.zeros(self.dims, dtype=bool)
        for c in self.clusters:
            m[c.voxels[:, 0], c.voxels[:, 1], c.voxels[:, 2]] = True
        return m


def _structure(connectivity):
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise UnsupportedError(f"connectivity must be 6 or 26, got {connectivity}")


def extract_clusters(vol, threshold, min_size=1, connectivity=6):
    """Connected components of voxels with value >= threshold.

    Clusters smaller than min_size voxels are dropped; the rest are
    ordered by total relevance, largest first. Peak ties resolve to the
    lowest flat index in [x, y, z] order.
    """
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    voxel_size = vol.voxel_size_mm if isinstance(vol, Volume3D) else 1.0
    if min_size < 1:
        raise ValueError(f"min_size must be at least 1, got {min_size}")
    labeled, count = ndimage.label(data >= threshold, structure=_structure(connectivity))
    clusters = []
    for lab in range(1, count + 1):
        coords = np.argwhere(labeled == lab)
        if len(coords) < min_size:
            continue
        values = data[coords[:, 0], coords[:, 1], coords[:, 2]]
        peak_local = int(np.argmax(values))  # argwhere is index-ordered; first max wins
        clusters.append(Cluster(
            label=lab,
            size=len(coords),
            volume_ml=len(coords) * voxel_size ** 3 / 1000.0,
            sum_relevance=float(values.astype(np.float64).sum()),
            peak_value=float(values[peak_local]),
            peak_coord=tuple(int(v) for v in coords[peak_local]),
            voxels=coords,
        ))
    clusters.sort(key=lambda c: (-c.sum_relevance, c.peak_coord))
    return ClusterSet(tuple(clusters), float(threshold), int(min_size),
                      int(connectivity), data.shape, voxel_size)


def cluster_size_histogram(cluster_set, bins=10):
    """Histogram of cluster sizes; pass integer bin edges for unit bins.

    Returns (counts, edges); the counts always sum to the number of
    clusters because the range spans every observed size.
    """
    sizes = np.array([c.size for c in cluster_set.clusters], dtype=np.int64)
    if sizes.size == 0:
        edges = np.asarray(bins, dtype=np.float64) if np.ndim(bins) else \
            np.linspace(0.0, 1.0, int(bins) + 1)
        return np.zeros(len(edges) - 1, dtype=np.int64), edges
    if np.ndim(bins):
        return np.histogram(sizes, bins=np.asarray(bins, dtype=np.float64))
    return np.histogram(sizes, bins=int(bins))


def slice_profile(vol, axis):
    """Per-slice positive and negative relevance sums along one axis."""
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1, or 2, got {axis}")
    other = tuple(a for a in range(3) if a != axis)
    d64 = data.astype(np.float64)
    pos = np.maximum(d64, 0).sum(axis=other)
    neg = np.minimum(d64, 0).sum(axis=other)
    return pos, neg


def region_relevance(vol, atlas):
    """Total relevance inside each atlas region, background included as
    id 0; the sums partition the map total exactly."""
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    if data.shape != atlas.dims:
        raise DimsError(f"map dims {data.shape} do not match atlas {atlas.dims}")
    out = {}
    d64 = data.astype(np.float64)
    for rid in (0,) + atlas.region_ids:
        out[rid] = float(d64[atlas.labels == rid].sum())
    return out


def region_volume(vol, atlas, region_id):
    """Intensity-weighted region volume in milliliters."""
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    if data.shape != atlas.dims:
        raise DimsError(f"volume dims {data.shape} do not match atlas {atlas.dims}")
    total = float(data.astype(np.float64)[atlas.mask(region_id)].sum())
    voxel_size = vol.voxel_size_mm if isinstance(vol, Volume3D) else atlas.voxel_size_mm
    return total * voxel_size ** 3 / 1000.0


@dataclass(frozen=True)
class OcclusionResult:
    probability_map: Volume3D
    relevance_map: Volume3D
    baseline_probability: float
    baseline_total_relevance: float
    cube_edge: int
    reduction: float
    stride: int


def occlusion_scan(model, vol, cube_edge=None, reduction=0.5, stride=4,
                   target_class=1, config=None):
    """Darken a cube at every grid position and record the effect.

    At each position the cube's voxels are multiplied by (1 - reduction)
    and the model re-evaluated; the target-class probability and the
    total relevance of the occluded input are written at the cube's
    center voxel, with nearest-neighbor fill between stride>1 grid
    points.
    """
    from .lrp import RuleConfig

    geometry = vol if isinstance(vol, Volume3D) else Volume3D(np.asarray(vol))
    data = geometry.data
    dims = data.shape
    if dims != model.input_dims:
        raise DimsError(f"volume dims {dims} do not match model {model.input_dims}")
    if cube_edge is None:
        cube_edge = round(0.2 * max(dims))
    cube_edge = int(cube_edge)
    if not 1 <= cube_edge <= min(dims):
        raise ShapeError(f"cube edge must be 1..{min(dims)}, got {cube_edge}")
    if not 0.0 <= reduction <= 1.0:
        raise ValueError(f"reduction must be within [0, 1], got {reduction}")
    if stride < 1:
        raise ShapeError(f"stride must be at least 1, got {stride}")
    config = config or RuleConfig()

    base_map = relevance_map(model, geometry, target_class, config)
    probs, _ = model.forward_batch(data[None, None].astype(model.dtype), mode="infer")
    baseline_prob = float(probs[0, target_class])
    baseline_total = float(base_map.volume.data.astype(np.float64).sum())

    centers = [np.arange(stride // 2, d, stride) for d in dims]
    grid_prob = np.empty([len(c) for c in centers], dtype=np.float64)
    grid_rel = np.empty_like(grid_prob)
    half = cube_edge // 2
    for i, cx in enumerate(centers[0]):
        for j, cy in enumerate(centers[1]):
            for k, cz in enumerate(centers[2]):
                occluded = np.array(data)
                sl = tuple(slice(max(0, c - half), min(d, c - half + cube_edge))
                           for c, d in zip((cx, cy, cz), dims))
                occluded[sl] = occluded[sl] * (1.0 - reduction)
                p, _ = model.forward_batch(occluded[None, None].astype(model.dtype),
                                           mode="infer")
                grid_prob[i, j, k] = float(p[0, target_class])
                rmap = relevance_map(model, occluded, target_class, config)
                grid_rel[i, j, k] = float(rmap.volume.data.astype(np.float64).sum())

    nearest = [np.abs(np.arange(d)[:, None] - c[None, :]).argmin(axis=1)
               for d, c in zip(dims, centers)]
    ix = np.ix_(nearest[0], nearest[1], nearest[2])
    prob_full = grid_prob[ix].astype(np.float32)
    rel_full = grid_rel[ix].astype(np.float32)
    return OcclusionResult(geometry.with_data(prob_full), geometry.with_data(rel_full),
                           baseline_prob, baseline_total, cube_edge,
                           float(reduction), int(stride))
