"""Command line front end.

Every data-producing subcommand takes --out DIR and leaves behind a
manifest.json recording the command, a hash of its effective
configuration, the seed, the artifact list, and wall-clock timings, so
runs can be compared and reproduced.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .analyze import occlusion_scan, region_relevance, region_volume
from .errors import DataError, FormatError, IoError, RelevisError
from .evaluate import (classification_metrics, relevance_volume_correlation,
                       roc_auc, stratified_kfold, youden_threshold)
from .lrp import RuleConfig, conservation_report, relevance_map
from .nn import TrainConfig, build_model, load_model, predict_scores, save_model, train
from .phantom import GROUPS, PhantomSpec, generate_atlas, generate_cohort
from .residualize import apply_voxelwise, fit_voxelwise, load_residual_model, \
    save_residual_model
from .service import Catalog, create_app
from .volume import load_atlas, save_atlas, write_volume


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _config_hash(config):
    return hashlib.sha256(_canonical(config).encode("utf-8")).hexdigest()


def _effective_config(args):
    skip = {"func", "out"}
    cfg = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def _int_triple(values, name):
    """Accept either three tokens or one comma-joined token."""
    if values is None:
        return None
    if len(values) == 1 and "," in values[0]:
        values = values[0].split(",")
    if len(values) != 3:
        raise DataError(f"--{name} needs exactly three integers, got {values}")
    try:
        return tuple(int(v) for v in values)
    except ValueError:
        raise DataError(f"--{name} needs integers, got {values}") from None


def _parse_bind(bind):
    host, sep, port = bind.rpartition(":")
    if not sep or not host:
        raise DataError(f"--bind expects HOST:PORT, got {bind!r}")
    try:
        return host, int(port)
    except ValueError:
        raise DataError(f"--bind port must be an integer, got {port!r}") from None


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _finish(args, artifacts, timings, t0):
    out = Path(args.out)
    timings = dict(timings)
    timings["total_s"] = round(time.perf_counter() - t0, 3)
    config = _effective_config(args)
    manifest = {
        "command": args.command,
        "config": config,
        "config_hash": _config_hash(config),
        "seed": getattr(args, "seed", None),
        "artifacts": sorted(artifacts),
        "timings": timings,
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_catalog(args):
    return Catalog(args.catalog)


def _rebase(path, out):
    """Catalog paths resolve against the catalog's own directory, so
    paths carried over from a loaded catalog must be rewritten relative
    to the one being written."""
    return os.path.relpath(os.path.abspath(str(path)), os.path.abspath(str(out)))


def _subject_rows(catalog, out, volume_paths=None):
    rows = []
    for sid, (record, path) in catalog.subjects.items():
        row = record.to_dict()
        row["volume"] = str(volume_paths[sid]) if volume_paths else _rebase(path, out)
        rows.append(row)
    return rows


def _write_catalog(path, subject_rows, model_rows, atlas_labels, atlas_names):
    _write_json(path, {
        "subjects": subject_rows,
        "models": model_rows,
        "atlas": {"labels": str(atlas_labels), "names": str(atlas_names)},
    })


def cmd_phantom_gen(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    counts = _int_triple(args.counts, "counts")
    dims = _int_triple(args.dims, "dims")
    # canonical ints in the manifest, so "6,4,6" and "6 4 6" hash the same
    args.counts = list(counts) if counts else None
    args.dims = list(dims) if dims else None
    if args.spec:
        spec = PhantomSpec.from_dict(json.loads(Path(args.spec).read_text()))
        if dims or args.voxel_size:
            raise DataError("--spec cannot be combined with --dims or --voxel-size")
    else:
        kwargs = {}
        if dims:
            kwargs["dims"] = dims
        if args.voxel_size:
            kwargs["voxel_size_mm"] = args.voxel_size
        spec = PhantomSpec(**kwargs)
    cohort = generate_cohort(spec, counts, args.seed)
    atlas = generate_atlas(spec)
    (out / "volumes").mkdir(exist_ok=True)
    artifacts = []
    rows = []
    for record, vol in cohort:
        rel = f"volumes/{record.id}.nii"
        write_volume(vol, out / rel)
        artifacts.append(rel)
        row = record.to_dict()
        row["volume"] = rel
        rows.append(row)
    save_atlas(atlas, out / "atlas_labels.nii", out / "atlas_names.tsv")
    _write_json(out / "phantom_spec.json",
                {"spec": spec.to_dict(), "counts": list(counts), "seed": args.seed})
    _write_catalog(out / "catalog.json", rows, [], "atlas_labels.nii", "atlas_names.tsv")
    artifacts += ["atlas_labels.nii", "atlas_names.tsv", "phantom_spec.json",
                  "catalog.json"]
    _finish(args, artifacts, {}, t0)
    print(f"wrote {len(cohort)} subjects to {out}")
    return 0


def cmd_fit_residualizer(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    wanted = set(args.groups)
    unknown = wanted - set(GROUPS)
    if unknown:
        raise DataError(f"unknown groups {sorted(unknown)}; choose from {GROUPS}")
    ids = [sid for sid, (rec, _) in catalog.subjects.items() if rec.group in wanted]
    if not ids:
        raise DataError(f"catalog has no subjects in groups {sorted(wanted)}")
    volumes = [catalog.volume(sid) for sid in ids]
    covariates = np.stack([catalog.record(sid).covariates() for sid in ids])
    model = fit_voxelwise(volumes, covariates)
    save_residual_model(model, out / "residual_model.bin")
    _write_json(out / "fit_summary.json",
                {"groups": sorted(wanted), "n_subjects": len(ids), "subject_ids": ids})
    _finish(args, ["residual_model.bin", "fit_summary.json"], {}, t0)
    print(f"fitted residualizer on {len(ids)} subjects")
    return 0


def cmd_residualize(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    rmodel = load_residual_model(args.model)
    (out / "volumes").mkdir(exist_ok=True)
    artifacts = []
    volume_paths = {}
    for sid, (record, _) in catalog.subjects.items():
        res = apply_voxelwise(rmodel, catalog.volume(sid), record.covariates())
        rel = f"volumes/{sid}.nii"
        write_volume(res, out / rel)
        artifacts.append(rel)
        volume_paths[sid] = rel
    model_rows = [{"id": mid, "path": _rebase(path, out)}
                  for mid, path in catalog.model_paths.items()]
    _write_catalog(out / "catalog.json", _subject_rows(catalog, out, volume_paths),
                   model_rows, *(_rebase(p, out) for p in catalog.atlas_paths))
    artifacts.append("catalog.json")
    _finish(args, artifacts, {}, t0)
    print(f"residualized {len(volume_paths)} volumes")
    return 0


def _binary_subjects(catalog):
    """CN/AD subjects as (id, data, label); MCI ids returned separately."""
    pairs, mci = [], []
    for sid, (record, _) in catalog.subjects.items():
        if record.group == "MCI":
            mci.append(sid)
        else:
            pairs.append((sid, record.group))
    return pairs, mci


def _holdout_split(pairs, fraction, seed):
    if not 0.0 < fraction < 0.5:
        raise DataError(f"holdout fraction must lie in (0, 0.5), got {fraction}")
    k = max(2, round(1.0 / fraction))
    folds = stratified_kfold([g for _, g in pairs], k, seed)
    holdout = set(int(i) for i in folds[0])
    train_ids = [sid for i, (sid, _) in enumerate(pairs) if i not in holdout]
    test_ids = [sid for i, (sid, _) in enumerate(pairs) if i in holdout]
    return train_ids, test_ids


def _dataset(catalog, ids):
    out = []
    for sid in ids:
        record = catalog.record(sid)
        out.append((sid, catalog.volume(sid).data, record.label))
    return out


def _training_config(args):
    epochs = args.epochs
    if epochs is None:
        epochs = 20 if args.input == "raw" else 10
    return TrainConfig(learning_rate=args.learning_rate, batch_size=args.batch_size,
                       epochs=epochs, l2=args.l2, augmentation=not args.no_augment,
                       checkpoint=args.checkpoint, seed=args.seed)


def _split_metrics(catalog, model, test_ids, mci_ids):
    """Holdout AUCs; the MCI contrast reuses the held-out controls."""
    test_records = [catalog.record(sid) for sid in test_ids]
    scores = predict_scores(model, [catalog.volume(sid).data for sid in test_ids])
    labels = [r.label for r in test_records]
    metrics = {"n_test": len(test_ids),
               "auc_ad_cn": roc_auc(scores, labels)}
    cn_ids = [sid for sid, rec in zip(test_ids, test_records) if rec.group == "CN"]
    if mci_ids and cn_ids:
        ids = cn_ids + mci_ids
        s = predict_scores(model, [catalog.volume(sid).data for sid in ids])
        y = [0] * len(cn_ids) + [1] * len(mci_ids)
        metrics["auc_mci_cn"] = roc_auc(s, y)
        metrics["n_mci"] = len(mci_ids)
    return metrics, scores, labels


def cmd_train(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    pairs, mci_ids = _binary_subjects(catalog)
    if not pairs:
        raise DataError("catalog has no CN or AD subjects to train on")
    train_ids, test_ids = _holdout_split(pairs, args.holdout_fraction, args.seed)
    cfg = _training_config(args)
    dims = catalog.volume(pairs[0][0]).dims
    model = build_model(dims, seed=args.seed)
    mark = time.perf_counter()
    history = train(model, _dataset(catalog, train_ids), _dataset(catalog, test_ids), cfg)
    train_s = round(time.perf_counter() - mark, 3)
    save_model(model, out / "model.bin")
    metrics, scores, labels = _split_metrics(catalog, model, test_ids, mci_ids)
    _write_json(out / "history.json", {"config": cfg.to_dict(), "epochs": history})
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "split.json", {"train_ids": train_ids, "test_ids": test_ids,
                                     "mci_ids": mci_ids})
    model_rows = [{"id": mid, "path": _rebase(path, out)}
                  for mid, path in catalog.model_paths.items()]
    model_rows.append({"id": args.model_id, "path": "model.bin"})
    _write_catalog(out / "catalog.json", _subject_rows(catalog, out), model_rows,
                   *(_rebase(p, out) for p in catalog.atlas_paths))
    _finish(args, ["model.bin", "history.json", "metrics.json", "split.json",
                   "catalog.json"], {"train_s": train_s}, t0)
    print(f"trained {cfg.epochs} epochs; holdout AUC {metrics['auc_ad_cn']:.3f}")
    return 0


def cmd_cross_validate(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    pairs, mci_ids = _binary_subjects(catalog)
    if not pairs:
        raise DataError("catalog has no CN or AD subjects to train on")
    folds = stratified_kfold([g for _, g in pairs], args.k, args.seed)
    cfg = _training_config(args)
    dims = catalog.volume(pairs[0][0]).dims

    def run_fold(fi):
        hold = set(int(i) for i in folds[fi])
        train_ids = [sid for i, (sid, _) in enumerate(pairs) if i not in hold]
        test_ids = [sid for i, (sid, _) in enumerate(pairs) if i in hold]
        model = build_model(dims, seed=args.seed + fi)
        train(model, _dataset(catalog, train_ids), _dataset(catalog, test_ids), cfg)
        name = f"model_fold{fi}.bin"
        save_model(model, out / name)
        metrics, _, _ = _split_metrics(catalog, model, test_ids, mci_ids)
        metrics["fold"] = fi
        return name, metrics

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_fold, range(args.k)))
    else:
        results = [run_fold(fi) for fi in range(args.k)]
    artifacts = [name for name, _ in results]
    rows = [metrics for _, metrics in results]
    aucs = [r["auc_ad_cn"] for r in rows]
    mean = float(np.mean(aucs))
    sd = float(np.std(aucs, ddof=1)) if len(aucs) > 1 else 0.0
    _write_json(out / "folds.json", {
        "config": cfg.to_dict(), "k": args.k, "folds": rows,
        "auc_ad_cn_mean": mean, "auc_ad_cn_sd": sd,
    })
    lines = [f"{'fold':>4}  {'n_test':>6}  {'auc_ad_cn':>9}  {'auc_mci_cn':>10}"]
    for r in rows:
        mci = f"{r['auc_mci_cn']:10.3f}" if "auc_mci_cn" in r else f"{'-':>10}"
        lines.append(f"{r['fold']:>4}  {r['n_test']:>6}  {r['auc_ad_cn']:9.3f}  {mci}")
    summary = f"AUC(AD vs CN) mean {mean:.3f} +/- {sd:.3f} over {args.k} folds"
    lines.append(summary)
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    artifacts += ["folds.json", "report.txt"]
    _finish(args, artifacts, {}, t0)
    print("\n".join(lines))
    return 0


def cmd_evaluate(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    model = load_model(args.model)
    ids = list(catalog.subjects)
    scores = predict_scores(model, [catalog.volume(sid).data for sid in ids])
    groups = [catalog.record(sid).group for sid in ids]
    rows = [{"id": sid, "group": g, "score": float(s)}
            for sid, g, s in zip(ids, groups, scores)]
    payload = {"subjects": rows}
    cn = [float(s) for s, g in zip(scores, groups) if g == "CN"]
    for disease in ("AD", "MCI"):
        sick = [float(s) for s, g in zip(scores, groups) if g == disease]
        if cn and sick:
            s = np.array(cn + sick)
            y = np.array([0] * len(cn) + [1] * len(sick))
            key = disease.lower()
            payload[f"auc_{key}_cn"] = roc_auc(s, y)
            thr, j = youden_threshold(s, y)
            payload[f"youden_threshold_{key}"] = thr
            payload[f"youden_j_{key}"] = j
            m = classification_metrics(y, (s >= thr).astype(int))
            payload[f"metrics_{key}"] = {
                "sensitivity": m.sensitivity, "specificity": m.specificity,
                "balanced_accuracy": m.balanced_accuracy, "ppv": m.ppv,
                "npv": m.npv, "f1": m.f1,
            }
    _write_json(out / "evaluation.json", payload)
    lines = [f"{'contrast':>10}  {'auc':>6}  {'thr':>8}  {'j':>6}  "
             f"{'sens':>6}  {'spec':>6}  {'bacc':>6}"]
    for disease in ("AD", "MCI"):
        key = disease.lower()
        if f"auc_{key}_cn" not in payload:
            continue
        m = payload[f"metrics_{key}"]
        lines.append(
            f"{disease + ' vs CN':>10}  {payload[f'auc_{key}_cn']:6.3f}  "
            f"{payload[f'youden_threshold_{key}']:8.4f}  "
            f"{payload[f'youden_j_{key}']:6.3f}  {m['sensitivity']:6.3f}  "
            f"{m['specificity']:6.3f}  {m['balanced_accuracy']:6.3f}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _finish(args, ["evaluation.json", "report.txt"], {}, t0)
    print("\n".join(lines) if len(lines) > 1 else "no contrasts")
    return 0


def cmd_relevance(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    model = load_model(args.model)
    vol = catalog.volume(args.subject)
    config = RuleConfig(relevance_init=args.relevance_init)
    rmap = relevance_map(model, vol, target_class=args.target_class, config=config)
    name = f"relevance_{args.subject}_c{args.target_class}.nii"
    write_volume(rmap.volume, out / name)
    report = conservation_report(rmap)
    atlas = load_atlas(*catalog.atlas_paths)
    summary = {
        "subject_id": args.subject,
        "target_class": args.target_class,
        "rule": rmap.rule,
        "output_relevance": rmap.total_output_relevance,
        "input_sum": report.input_sum,
        "conservation_ratio": report.ratio,
        "absorbed_share": report.absorbed_share,
        "region_relevance": {str(k): v
                             for k, v in region_relevance(rmap.volume, atlas).items()},
    }
    _write_json(out / f"relevance_{args.subject}.json", summary)
    _finish(args, [name, f"relevance_{args.subject}.json"], {}, t0)
    print(f"conservation ratio {report.ratio:.4f}")
    return 0


def cmd_region_stats(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    atlas = load_atlas(*catalog.atlas_paths)
    try:
        region_id = int(args.region)
    except ValueError:
        region_id = atlas.id_for_name(args.region)
    model = load_model(args.model) if args.model else None
    rows = []
    for sid, (record, _) in catalog.subjects.items():
        vol = catalog.volume(sid)
        row = {"id": sid, "group": record.group,
               "volume_ml": region_volume(vol, atlas, region_id)}
        if model is not None:
            rmap = relevance_map(model, vol, target_class=args.target_class)
            row["relevance_sum"] = region_relevance(rmap.volume, atlas)[region_id]
        rows.append(row)
    payload = {"region_id": region_id, "region_name": atlas.names[region_id],
               "subjects": rows}
    cn = [r["volume_ml"] for r in rows if r["group"] == "CN"]
    ad = [r["volume_ml"] for r in rows if r["group"] == "AD"]
    if cn and ad:
        values = np.array(cn + ad)
        labels = np.array([0] * len(cn) + [1] * len(ad))
        payload["auc_ad_cn"] = roc_auc(values, labels, invert=True)
        thr, j = youden_threshold(values, labels, invert=True)
        payload["youden_threshold"] = thr
        payload["youden_j"] = j
    artifacts = ["region_stats.json"]
    if model is not None:
        corr = relevance_volume_correlation([r["volume_ml"] for r in rows],
                                            [r["relevance_sum"] for r in rows])
        payload["correlation"] = {k: corr[k] for k in ("r", "t", "p", "n")}
        with open(out / "scatter.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "group", "volume_ml", "relevance_sum"])
            for r in rows:
                writer.writerow([r["id"], r["group"], repr(r["volume_ml"]),
                                 repr(r["relevance_sum"])])
        artifacts.append("scatter.csv")
    _write_json(out / "region_stats.json", payload)
    _finish(args, artifacts, {}, t0)
    note = f", AUC {payload['auc_ad_cn']:.3f}" if "auc_ad_cn" in payload else ""
    if "correlation" in payload:
        note += f", r {payload['correlation']['r']:.3f}"
    print(f"{atlas.names[region_id]}: {len(rows)} subjects{note}")
    return 0


def cmd_occlusion(args):
    t0 = time.perf_counter()
    out = _out_dir(args)
    catalog = _load_catalog(args)
    model = load_model(args.model)
    vol = catalog.volume(args.subject)
    result = occlusion_scan(model, vol, cube_edge=args.cube,
                            reduction=args.reduction, stride=args.stride,
                            target_class=args.target_class)
    prob_name = f"occlusion_prob_{args.subject}.nii"
    rel_name = f"occlusion_relevance_{args.subject}.nii"
    write_volume(result.probability_map, out / prob_name)
    write_volume(result.relevance_map, out / rel_name)
    prob = result.probability_map.data
    drop = result.baseline_probability - prob.astype(np.float64)
    peak = np.unravel_index(int(np.argmax(drop)), prob.shape)
    _write_json(out / f"occlusion_{args.subject}.json", {
        "subject_id": args.subject,
        "baseline_probability": result.baseline_probability,
        "baseline_total_relevance": result.baseline_total_relevance,
        "cube_edge": result.cube_edge,
        "reduction": result.reduction,
        "stride": result.stride,
        "max_probability_drop": float(drop.max()),
        "max_drop_coord": [int(v) for v in peak],
    })
    _finish(args, [prob_name, rel_name, f"occlusion_{args.subject}.json"], {}, t0)
    print(f"max probability drop {float(drop.max()):.4f} at {tuple(int(v) for v in peak)}")
    return 0


def cmd_serve(args):
    import uvicorn
    host, port = _parse_bind(args.bind)
    app = create_app(args.catalog, static_dir=args.static)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _add_catalog(p, required=True):
    p.add_argument("--catalog", required=required, type=Path,
                   help="catalog JSON written by phantom-gen or a derived command")


def _add_out(p, required=True):
    p.add_argument("--out", required=required, type=Path, help="output directory")


def _add_training_flags(p):
    p.add_argument("--config", type=Path, default=None,
                   help="JSON with defaults for these flags; explicit flags win")
    p.add_argument("--epochs", type=int, default=None,
                   help="default 10, or 20 when --input raw")
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--input", choices=("raw", "residualized"), default="residualized",
                   help="what the catalog volumes contain; raw doubles default epochs")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--checkpoint", choices=("best_on_test", "fixed_epochs"),
                   default="best_on_test")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="relevis",
                                     description="desk-scale relevance mapping toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom-gen", help="generate a synthetic cohort")
    _add_out(p)
    p.add_argument("--counts", nargs="+", default=["150", "130", "110"],
                   metavar="CN MCI AD", help="three integers, space or comma separated")
    p.add_argument("--dims", nargs="+", default=None, metavar="X Y Z")
    p.add_argument("--voxel-size", type=float, default=None)
    p.add_argument("--spec", type=Path, default=None,
                   help="full phantom spec JSON; excludes --dims/--voxel-size")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("fit-residualizer", help="fit voxelwise covariate regression")
    _add_catalog(p)
    _add_out(p)
    p.add_argument("--groups", nargs="+", default=["CN"],
                   help="groups used to fit the regression (default: CN)")
    p.set_defaults(func=cmd_fit_residualizer)

    p = sub.add_parser("residualize", help="remove covariate trends from all volumes")
    _add_catalog(p)
    _add_out(p)
    p.add_argument("--model", required=True, type=Path,
                   help="residual model from fit-residualizer")
    p.set_defaults(func=cmd_residualize)

    p = sub.add_parser("train", help="train a classifier with a stratified holdout")
    _add_catalog(p, required=False)
    _add_out(p, required=False)
    p.add_argument("--holdout-fraction", type=float, default=0.2)
    p.add_argument("--model-id", default="model",
                   help="id the new model gets in the output catalog")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cross-validate", help="k-fold training and evaluation")
    _add_catalog(p, required=False)
    _add_out(p, required=False)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1,
                   help="concurrent folds (threads); default sequential")
    _add_training_flags(p)
    p.set_defaults(func=cmd_cross_validate)

    p = sub.add_parser("evaluate", help="score a trained model on a catalog")
    _add_catalog(p)
    _add_out(p)
    p.add_argument("--model", required=True, type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("relevance", help="relevance map for one subject")
    _add_catalog(p)
    _add_out(p)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--subject", required=True)
    p.add_argument("--target-class", type=int, default=1)
    p.add_argument("--relevance-init", choices=("logit", "prob"), default="logit")
    p.set_defaults(func=cmd_relevance)

    p = sub.add_parser("region-stats", help="region volumes, and with a model the "
                                            "relevance-volume scatter")
    _add_catalog(p)
    _add_out(p)
    p.add_argument("--region", required=True, help="region id or name")
    p.add_argument("--model", type=Path, default=None,
                   help="adds per-subject relevance sums and the correlation")
    p.add_argument("--target-class", type=int, default=1)
    p.set_defaults(func=cmd_region_stats)

    p = sub.add_parser("occlusion", help="cube occlusion scan for one subject")
    _add_catalog(p)
    _add_out(p)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--subject", required=True)
    p.add_argument("--cube", type=int, default=None,
                   help="cube edge in voxels; default scales with the volume")
    p.add_argument("--reduction", type=float, default=0.5)
    p.add_argument("--stride", type=int, default=4,
                   help="grid step; 1 visits every voxel but costs cubically more")
    p.add_argument("--target-class", type=int, default=1)
    p.set_defaults(func=cmd_occlusion)

    p = sub.add_parser("serve", help="run the HTTP viewer backend")
    p.add_argument("--catalog", type=Path, default=None,
                   help="defaults to $RELEVIS_CATALOG")
    p.add_argument("--bind", default="127.0.0.1:8000", help="HOST:PORT to listen on")
    p.add_argument("--static", type=Path, default=None,
                   help="directory with the built web UI")
    p.set_defaults(func=cmd_serve)

    return parser


def _config_overrides(path, subparser):
    """Keys mirror the subcommand's flags; explicit flags still win
    because these land as parser defaults before a re-parse."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError("config file must hold a JSON object")
    dests = {a.dest for a in subparser._actions} - {"help", "func", "config"}
    overrides, unknown = {}, []
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            unknown.append(key)
            continue
        if dest in ("catalog", "out") and value is not None:
            value = Path(value)
        overrides[dest] = value
    if unknown:
        raise DataError(f"unknown config keys {sorted(unknown)}")
    return overrides


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            action = next(a for a in parser._actions
                          if isinstance(a, argparse._SubParsersAction))
            subparser = action.choices[args.command]
            subparser.set_defaults(**_config_overrides(args.config, subparser))
            args = parser.parse_args(argv)
        if args.command in ("train", "cross-validate"):
            for dest in ("catalog", "out"):
                if getattr(args, dest) is None:
                    raise DataError(f"--{dest} is required (flag or config key)")
        return args.func(args)
    except RelevisError as exc:
        print(f"relevis: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
