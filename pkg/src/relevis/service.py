"""HTTP backend for the interactive relevance viewer.

The app is built from a catalog file: a JSON document listing subject
records with their volume files, trained model files, and the atlas.
All heavy state (volumes, models, relevance maps) is loaded lazily and
cached in memory; relevance maps live in a bounded LRU so the service
can serve whole cohorts without unbounded growth.

Slices cross the wire as raw little-endian bytes with the slice shape
in an X-Dims header; everything else is JSON.
"""

import json
import os
import threading
from collections import OrderedDict
from http import HTTPStatus
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import analyze
from .errors import FormatError, RelevisError
from .lrp import RuleConfig, relevance_map
from .nn import load_model
from .phantom import SubjectRecord
from .volume import load_atlas, lookup, read_volume

RELEVANCE_CACHE_SIZE = 32


class _LruCache:
    """Bounded map with single-flight computation per key."""

    def __init__(self, maxsize):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._locks = {}
        self._meta = threading.Lock()

    def peek(self, key):
        with self._meta:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
            return None

    def get_or_compute(self, key, fn):
        with self._meta:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            with self._meta:
                if key in self._data:
                    self._data.move_to_end(key)
                    return self._data[key]
            value = fn()
            with self._meta:
                self._data[key] = value
                self._data.move_to_end(key)
                while len(self._data) > self.maxsize:
                    old, _ = self._data.popitem(last=False)
                    self._locks.pop(old, None)
            return value


class Catalog:
    """Subjects, models, and the atlas behind one service instance."""

    def __init__(self, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise FormatError(f"cannot read catalog {path}: {exc}") from exc
        except ValueError as exc:
            raise FormatError(f"catalog {path} is not valid JSON: {exc}") from exc
        for key in ("subjects", "models", "atlas"):
            if key not in doc:
                raise FormatError(f"catalog {path} is missing the {key!r} section")
        base = path.parent
        self.subjects = OrderedDict()
        for entry in doc["subjects"]:
            entry = dict(entry)
            volume_path = entry.pop("volume", None)
            if volume_path is None:
                raise FormatError(f"catalog subject {entry.get('id')!r} has no volume path")
            record = SubjectRecord.from_dict(entry)
            if record.id in self.subjects:
                raise FormatError(f"catalog lists subject {record.id!r} twice")
            self.subjects[record.id] = (record, base / volume_path)
        self.model_paths = OrderedDict()
        for entry in doc["models"]:
            if entry["id"] in self.model_paths:
                raise FormatError(f"catalog lists model {entry['id']!r} twice")
            self.model_paths[entry["id"]] = base / entry["path"]
        self.atlas_paths = (base / doc["atlas"]["labels"], base / doc["atlas"]["names"])
        self._volumes = {}
        self._models = {}
        self._atlas = None
        self._lock = threading.Lock()

    def record(self, subject_id):
        if subject_id not in self.subjects:
            raise HTTPException(404, f"unknown subject {subject_id!r}")
        return self.subjects[subject_id][0]

    def volume(self, subject_id):
        self.record(subject_id)
        with self._lock:
            if subject_id not in self._volumes:
                self._volumes[subject_id] = read_volume(self.subjects[subject_id][1])
            return self._volumes[subject_id]

    def model(self, model_id):
        if model_id not in self.model_paths:
            raise HTTPException(404, f"unknown model {model_id!r}")
        with self._lock:
            if model_id not in self._models:
                self._models[model_id] = load_model(self.model_paths[model_id])
            return self._models[model_id]

    def atlas(self):
        with self._lock:
            if self._atlas is None:
                self._atlas = load_atlas(*self.atlas_paths)
            return self._atlas


class RelevanceRequest(BaseModel):
    subject_id: str
    model_id: str
    target_class: int = 1


def _json_bytes(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _profiles(vol_or_array):
    out = {}
    for axis in range(3):
        pos, neg = analyze.slice_profile(vol_or_array, axis)
        out[str(axis)] = {"pos": [float(v) for v in pos], "neg": [float(v) for v in neg]}
    return out


def _slice_response(arr2d, voxel_size_mm, dtype):
    body = np.ascontiguousarray(arr2d.astype(dtype)).tobytes()
    return Response(content=body, media_type="application/octet-stream", headers={
        "X-Dims": ",".join(str(s) for s in arr2d.shape),
        "X-Voxel-Size": repr(float(voxel_size_mm)),
    })


def _check_axis_index(axis, index, dims):
    if axis not in (0, 1, 2):
        raise HTTPException(400, f"axis must be 0, 1, or 2, got {axis}")
    if not 0 <= index < dims[axis]:
        raise HTTPException(404, f"index {index} outside axis {axis} of {dims}")


def _error_name(status_code):
    return HTTPStatus(status_code).phrase.lower().replace(" ", "_")


def create_app(catalog_path=None, static_dir=None):
    """Build the service; catalog_path falls back to $RELEVIS_CATALOG."""
    if catalog_path is None:
        catalog_path = os.environ.get("RELEVIS_CATALOG")
    if not catalog_path:
        raise FormatError("no catalog path given and RELEVIS_CATALOG is not set")
    catalog = Catalog(catalog_path)
    app = FastAPI(title="relevis", docs_url=None, redoc_url=None)
    relevance_cache = _LruCache(RELEVANCE_CACHE_SIZE)
    score_cache = _LruCache(8)

    @app.exception_handler(RequestValidationError)
    def _on_validation(request: Request, exc):
        return JSONResponse(status_code=400, content={
            "error": "bad_request", "detail": str(exc)})

    @app.exception_handler(RelevisError)
    def _on_domain_error(request: Request, exc):
        return JSONResponse(status_code=400, content={
            "error": "bad_request", "detail": str(exc)})

    @app.exception_handler(StarletteHTTPException)
    def _on_http_error(request: Request, exc):
        return JSONResponse(status_code=exc.status_code, content={
            "error": _error_name(exc.status_code), "detail": exc.detail})

    def model_scores(model_id):
        """p(class 1) for every subject, computed once per model."""
        def compute():
            model = catalog.model(model_id)
            ids = list(catalog.subjects)
            scores = {}
            for start in range(0, len(ids), 16):
                chunk = ids[start:start + 16]
                x = np.stack([catalog.volume(s).data for s in chunk])[:, None]
                probs, _ = model.forward_batch(x.astype(model.dtype), mode="infer")
                for sid, p in zip(chunk, probs):
                    scores[sid] = (float(p[0]), float(p[1]))
            return scores
        return score_cache.get_or_compute(model_id, compute)

    def compute_relevance(subject_id, model_id, target_class):
        vol = catalog.volume(subject_id)
        model = catalog.model(model_id)
        if vol.dims != model.input_dims:
            raise HTTPException(
                400, f"subject dims {vol.dims} do not match model {model.input_dims}")
        if not 0 <= target_class <= 1:
            raise HTTPException(400, f"target_class must be 0 or 1, got {target_class}")
        rule = RuleConfig()
        key = (subject_id, model_id, target_class, rule.identifier())

        def build():
            rmap = relevance_map(model, vol, target_class=target_class, config=rule)
            data = rmap.volume.data
            payload = {
                "map_id": f"{subject_id}:{model_id}:{target_class}",
                "subject_id": subject_id,
                "model_id": model_id,
                "target_class": target_class,
                "dims": list(vol.dims),
                "total_relevance": float(data.sum(dtype=np.float64)),
                "max_abs_relevance": float(np.abs(data).max()),
                "output_relevance": rmap.total_output_relevance,
                "rule": rmap.rule,
                "slice_profiles": _profiles(rmap.volume),
            }
            return rmap, _json_bytes(payload)

        return key, relevance_cache.get_or_compute(key, build)

    def cached_map(subject_id, model_id, target_class):
        catalog.record(subject_id)
        catalog.model(model_id)
        entry = relevance_cache.peek(
            (subject_id, model_id, target_class, RuleConfig().identifier()))
        if entry is None:
            raise HTTPException(
                409, "relevance map not computed yet; POST /api/relevance first")
        return entry[0]

    @app.get("/api/participants")
    def participants(model: str = None):
        scores = model_scores(model) if model is not None else None
        rows = []
        for sid, (record, _) in catalog.subjects.items():
            row = record.to_dict()
            row["dims"] = list(catalog.volume(sid).dims)
            if scores is not None:
                row["p_cn"], row["p_ad"] = scores[sid]
            rows.append(row)
        return {"participants": rows}

    @app.get("/api/models")
    def models():
        return {"models": [{"id": mid} for mid in catalog.model_paths]}

    @app.get("/api/prediction/{subject_id}")
    def prediction(subject_id: str, model: str = Query(...)):
        catalog.record(subject_id)
        scores = model_scores(model)
        p_cn, p_ad = scores[subject_id]
        return {"subject_id": subject_id, "model_id": model,
                "p_cn": p_cn, "p_ad": p_ad}

    @app.post("/api/relevance")
    def relevance(req: RelevanceRequest):
        _, (_, body) = compute_relevance(req.subject_id, req.model_id, req.target_class)
        return Response(content=body, media_type="application/json")

    @app.get("/api/slice/{subject_id}/{kind}/{axis}/{index}")
    def get_slice(subject_id: str, kind: str, axis: int, index: int,
                  model: str = None, target_class: int = 1):
        vol = catalog.volume(subject_id)
        _check_axis_index(axis, index, vol.dims)
        if kind == "background":
            return _slice_response(np.take(vol.data, index, axis=axis),
                                   vol.voxel_size_mm, "<f4")
        if kind == "relevance":
            if model is None:
                raise HTTPException(400, "relevance slices need a model parameter")
            rmap = cached_map(subject_id, model, target_class)
            return _slice_response(np.take(rmap.volume.data, index, axis=axis),
                                   vol.voxel_size_mm, "<f4")
        raise HTTPException(
            400, f"kind must be 'background' or 'relevance', got {kind!r}")

    @app.get("/api/clusters/{subject_id}/{model_id}")
    def clusters(subject_id: str, model_id: str, threshold: float = Query(...),
                 min_size: int = 1, connectivity: int = 6, target_class: int = 1):
        if min_size < 1:
            raise HTTPException(400, f"min_size must be at least 1, got {min_size}")
        if connectivity not in (6, 26):
            raise HTTPException(400, f"connectivity must be 6 or 26, got {connectivity}")
        rmap = cached_map(subject_id, model_id, target_class)
        cset = analyze.extract_clusters(rmap.volume, threshold, min_size, connectivity)
        counts, edges = analyze.cluster_size_histogram(cset)
        masked = np.where(cset.mask(), rmap.volume.data, 0.0)
        return {
            "subject_id": subject_id,
            "model_id": model_id,
            "threshold": cset.threshold,
            "min_size": cset.min_size,
            "connectivity": cset.connectivity,
            "n_clusters": len(cset),
            "clusters": [{
                "label": c.label,
                "size": c.size,
                "volume_ml": c.volume_ml,
                "sum_relevance": c.sum_relevance,
                "peak_value": c.peak_value,
                "peak_coord": list(c.peak_coord),
            } for c in cset.clusters],
            "histogram": {"counts": [int(v) for v in counts],
                          "edges": [float(v) for v in edges]},
            "slice_profiles": _profiles(masked),
        }

    @app.get("/api/atlas")
    def atlas_info():
        atlas = catalog.atlas()
        return {"dims": list(atlas.dims),
                "voxel_size_mm": atlas.voxel_size_mm,
                "regions": {str(rid): atlas.names[rid] for rid in atlas.region_ids}}

    @app.get("/api/atlas/lookup")
    def atlas_lookup(x: int = Query(...), y: int = Query(...), z: int = Query(...)):
        atlas = catalog.atlas()
        dims = atlas.dims
        if not (0 <= x < dims[0] and 0 <= y < dims[1] and 0 <= z < dims[2]):
            raise HTTPException(400, f"coordinate {(x, y, z)} outside grid {dims}")
        return {"region": lookup(atlas, x, y, z)}

    @app.get("/api/atlas/mask/{region_id}/{axis}/{index}")
    def atlas_mask(region_id: int, axis: int, index: int):
        atlas = catalog.atlas()
        if region_id != 0 and region_id not in atlas.names:
            raise HTTPException(404, f"unknown region id {region_id}")
        _check_axis_index(axis, index, atlas.dims)
        sl = np.take(atlas.mask(region_id), index, axis=axis)
        return _slice_response(sl.astype(np.uint8), atlas.voxel_size_mm, np.uint8)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
