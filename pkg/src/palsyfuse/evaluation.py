"""Leave-one-patient-out protocol, stratified round-robin sampling, metrics,
and report generation.

Each fold holds out every frame of one affected subject; training draws from
the remaining affected subjects plus a fixed-size healthy cohort, testing
from the held-out subject plus a disjoint healthy cohort. Per-subject frame
quotas are filled one class at a time in canonical class order, so no palsy
intensity stratum is over-represented. All selection is deterministic in the
run seed.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry, models, rasterizer, synthgen
from .datamodel import (DatasetManifest, LandmarkFrame, class_key_sort_index,
                        fmt9, read_frames)
from .errors import (ConfigError, DimensionError, ModalityUnavailableError,
                     PalsyFuseError, PlanError)
from .fusion import early_fuse_predict, early_fuse_train, late_fuse_predict
from .rng import derive_seed

REPORT_FORMAT_VERSION = "1"


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class MetricsRecord:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float

    def to_json_obj(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "MetricsRecord":
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (2.0 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        return cls(tp, fp, fn, tn, precision, recall, f1)


def compute_metrics(predicted, truth) -> MetricsRecord:
    """Precision/recall/F1 with zero-denominator conventions fixed at 0."""
    pred = np.asarray(predicted, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape or pred.ndim != 1:
        raise DimensionError(
            f"metrics: prediction shape {pred.shape} != truth shape {true.shape}")
    if pred.size == 0:
        raise DimensionError("metrics: empty prediction vector")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    return MetricsRecord.from_counts(tp, fp, fn, tn)


# ---------------------------------------------------------------------------
# sampling

def round_robin_sample(frames: list[LandmarkFrame], target: int,
                       seed: int = 0) -> list[LandmarkFrame]:
    """One frame per intensity class in canonical class order, cycling until
    the quota is met or the subject is exhausted.

    Within a class, frames are taken in frame_id order, so the selection is
    fully deterministic; the seed is accepted for interface stability but not
    consumed.
    """
    if target <= 0:
        raise PlanError(f"sample target must be positive, got {target}")
    if not frames:
        raise PlanError("cannot sample from a subject with no frames")
    if len(frames) <= target:
        return sorted(frames, key=lambda f: f.frame_id)

    by_class: dict = {}
    for f in frames:
        key = f.label.class_key() if f.label is not None else None
        by_class.setdefault(key, []).append(f)
    ordered_keys = sorted((k for k in by_class if k is not None),
                          key=class_key_sort_index)
    if None in by_class:
        ordered_keys.append(None)
    for key in ordered_keys:
        by_class[key].sort(key=lambda f: f.frame_id)

    selected: list[LandmarkFrame] = []
    cursors = {k: 0 for k in ordered_keys}
    while len(selected) < target:
        took_any = False
        for key in ordered_keys:
            if len(selected) >= target:
                break
            pool = by_class[key]
            cur = cursors[key]
            if cur < len(pool):
                selected.append(pool[cur])
                cursors[key] = cur + 1
                took_any = True
        if not took_any:
            break
    return selected


# ---------------------------------------------------------------------------
# LOPO planning

@dataclass(frozen=True)
class SamplingConfig:
    train_per_subject: int = 50
    healthy_train_subjects: int = 20
    healthy_test_subjects: int = 20
    test_per_heldout: int = 50
    test_per_healthy: int = 2

    def __post_init__(self):
        for name in ("train_per_subject", "healthy_train_subjects",
                     "healthy_test_subjects", "test_per_heldout", "test_per_healthy"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"sampling.{name} must be positive")

    def to_json_obj(self) -> dict:
        return {"train_per_subject": self.train_per_subject,
                "healthy_train_subjects": self.healthy_train_subjects,
                "healthy_test_subjects": self.healthy_test_subjects,
                "test_per_heldout": self.test_per_heldout,
                "test_per_healthy": self.test_per_healthy}


@dataclass(frozen=True)
class SplitPlan:
    fold_id: int
    heldout: str
    train_palsy: tuple
    train_healthy: tuple
    test_healthy: tuple
    sampling: SamplingConfig
    seed: int

    def __post_init__(self):
        if self.heldout in self.train_palsy:
            raise PlanError(f"fold {self.fold_id}: held-out subject also in training")
        if set(self.train_healthy) & set(self.test_healthy):
            raise PlanError(f"fold {self.fold_id}: healthy train/test sets overlap")


def _is_palsy_subject(entry) -> bool:
    if entry.source.value == "palsy_video":
        return True
    return any(key not in ("Normal-Normal", "unlabeled") for key in entry.census)


def make_lopo_plan(manifest: DatasetManifest, sampling: SamplingConfig,
                   seed: int = 0) -> list[SplitPlan]:
    palsy = sorted(e.subject_id for e in manifest.subjects if _is_palsy_subject(e))
    healthy = sorted(e.subject_id for e in manifest.subjects if not _is_palsy_subject(e))
    need_healthy = sampling.healthy_train_subjects + sampling.healthy_test_subjects
    if len(healthy) < need_healthy:
        raise PlanError(
            f"need at least {need_healthy} healthy subjects "
            f"({sampling.healthy_train_subjects} train + "
            f"{sampling.healthy_test_subjects} disjoint test), got {len(healthy)}")
    if len(palsy) < 2:
        raise PlanError(f"need at least 2 affected subjects for LOPO, got {len(palsy)}")

    plans = []
    for k, heldout in enumerate(palsy):
        shuffled = list(healthy)
        rng = synthgen.Xoshiro256StarStar(derive_seed(seed, "healthy-split", k))
        rng.shuffle(shuffled)
        train_h = tuple(shuffled[:sampling.healthy_train_subjects])
        test_h = tuple(shuffled[sampling.healthy_train_subjects:need_healthy])
        plans.append(SplitPlan(
            fold_id=k, heldout=heldout,
            train_palsy=tuple(s for s in palsy if s != heldout),
            train_healthy=train_h, test_healthy=test_h,
            sampling=sampling, seed=derive_seed(seed, "fold", k)))
    return plans


# ---------------------------------------------------------------------------
# run configuration

_TOP_KEYS = {"seed", "dataset", "sampling", "image_size", "roles", "contours",
             "models", "fusions", "threads", "output_dir"}
_SYNTH_KEYS = {"kind", "palsy_subjects", "healthy_subjects", "frames_per_subject",
               "severity_min", "severity_max", "jitter_sigma"}
_FILE_KEYS = {"kind", "frames"}
_MODEL_KEYS = {"name", "max_epochs", "image_size", "patch", "dim", "token_mlp",
               "channel_mlp", "depth"}
_FUSION_KEYS = {"mode", "members", "max_epochs", "lr"}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dataset: dict
    sampling: SamplingConfig
    image_size: int
    roles_path: str | None
    contours_path: str | None
    model_cfgs: tuple
    fusion_cfgs: tuple
    threads: int = 1
    output_dir: str | None = None

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(obj) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for required in ("seed", "dataset", "models"):
            if required not in obj:
                raise ConfigError(f"config missing required key {required!r}")
        dataset = obj["dataset"]
        if not isinstance(dataset, dict) or "kind" not in dataset:
            raise ConfigError("dataset config must be an object with a 'kind'")
        if dataset["kind"] == "synthetic":
            bad = set(dataset) - _SYNTH_KEYS
        elif dataset["kind"] == "files":
            bad = set(dataset) - _FILE_KEYS
            if "frames" not in dataset:
                raise ConfigError("dataset.kind 'files' requires a 'frames' path")
        else:
            raise ConfigError(f"unknown dataset kind {dataset['kind']!r}")
        if bad:
            raise ConfigError(f"unknown dataset keys: {sorted(bad)}")

        sampling = SamplingConfig(**obj.get("sampling", {})) if isinstance(
            obj.get("sampling", {}), dict) else None
        if sampling is None:
            raise ConfigError("sampling config must be an object")

        model_cfgs = []
        for m in obj["models"]:
            if not isinstance(m, dict) or "name" not in m:
                raise ConfigError("each models[] entry must be an object with a 'name'")
            bad = set(m) - _MODEL_KEYS
            if bad:
                raise ConfigError(f"model {m.get('name')}: unknown keys {sorted(bad)}")
            model_cfgs.append(dict(m))
        names = [m["name"] for m in model_cfgs]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate model names in config")
        for name in names:
            models.build_model_spec(name, seed=0,
                                    overrides={})  # validates the name up front

        fusion_cfgs = []
        for f in obj.get("fusions", []):
            if not isinstance(f, dict) or "mode" not in f or "members" not in f:
                raise ConfigError("each fusions[] entry needs 'mode' and 'members'")
            bad = set(f) - _FUSION_KEYS
            if bad:
                raise ConfigError(f"fusion entry: unknown keys {sorted(bad)}")
            if f["mode"] not in ("early", "late"):
                raise ConfigError(f"fusion mode must be 'early' or 'late', got {f['mode']!r}")
            members = list(f["members"])
            if len(members) != 2:
                raise ConfigError("fusion members must name exactly 2 models")
            for member in members:
                if member not in names:
                    raise ConfigError(
                        f"fusion member {member!r} is not in the models list")
            fusion_cfgs.append(dict(f))

        return cls(seed=int(obj["seed"]), dataset=dict(dataset), sampling=sampling,
                   image_size=int(obj.get("image_size", 64)),
                   roles_path=obj.get("roles"), contours_path=obj.get("contours"),
                   model_cfgs=tuple(model_cfgs), fusion_cfgs=tuple(fusion_cfgs),
                   threads=int(obj.get("threads", 1)),
                   output_dir=obj.get("output_dir"))

    def to_json_obj(self) -> dict:
        return {"seed": self.seed, "dataset": self.dataset,
                "sampling": self.sampling.to_json_obj(),
                "image_size": self.image_size, "roles": self.roles_path,
                "contours": self.contours_path,
                "models": [dict(m) for m in self.model_cfgs],
                "fusions": [dict(f) for f in self.fusion_cfgs]}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# modality extraction

MODALITY_BY_MODEL_PREFIX = {
    "ffn_expression": "expression52",
    "ffn_coordinates": "coordinates956",
    "ffn_handcrafted": "handcrafted29",
    "mixer_rgb": "rgb_image",
    "resnet_rgb": "rgb_image",
    "mixer_bnw": "bnw_image",
    "resnet_bnw": "bnw_image",
}


def extract_modalities(frames: list[LandmarkFrame], needed: set[str],
                       roles: geometry.RoleMap, contours: rasterizer.ContourSet,
                       image_size: int) -> dict[str, np.ndarray]:
    """Per-frame modality arrays (images stay uint8 until batched)."""
    out: dict[str, np.ndarray] = {}
    n = len(frames)
    if "handcrafted29" in needed:
        out["handcrafted29"] = np.stack(
            [geometry.handcrafted29(f, roles).values for f in frames])
    if "coordinates956" in needed:
        out["coordinates956"] = np.stack(
            [geometry.flatten_coordinates(f, roles).values for f in frames])
    if "expression52" in needed:
        rows = []
        for f in frames:
            if f.blendshapes is None:
                raise ModalityUnavailableError(
                    f"frame {f.subject_id}/{f.frame_id} has no expression coefficients")
            rows.append(f.blendshapes)
        out["expression52"] = np.stack(rows)
    if "rgb_image" in needed:
        imgs = np.empty((n, 3, image_size, image_size), dtype=np.uint8)
        for i, f in enumerate(frames):
            buf = rasterizer.render_face_sketch(f, contours, (image_size, image_size))
            imgs[i] = buf.to_array().transpose(2, 0, 1)
        out["rgb_image"] = imgs
    if "bnw_image" in needed:
        imgs = np.empty((n, 1, image_size, image_size), dtype=np.uint8)
        for i, f in enumerate(frames):
            buf = rasterizer.render_line_segments(f, contours, (image_size, image_size))
            imgs[i] = buf.to_array()[None, :, :]
        out["bnw_image"] = imgs
    return out


def _as_model_input(modal: np.ndarray, idx: np.ndarray) -> np.ndarray:
    sel = modal[idx]
    if sel.dtype == np.uint8:
        return sel.astype(np.float64) / 255.0
    return sel


# ---------------------------------------------------------------------------
# the experiment

@dataclass
class FoldResult:
    fold_id: int
    heldout: str
    metrics: dict            # model/fusion name -> MetricsRecord
    train_manifest: dict     # subject -> [frame ids]
    test_manifest: dict
    predictions: dict        # name -> list of (subject, frame, prob, label)


@dataclass
class RunReport:
    config: RunConfig
    folds: list
    incomplete: list
    averages: dict | None
    pooled: dict | None

    def to_json_obj(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "config": self.config.to_json_obj(),
            "folds": [
                {"fold": fr.fold_id, "heldout": fr.heldout,
                 "metrics": {name: m.to_json_obj() for name, m in sorted(fr.metrics.items())},
                 "train_manifest": fr.train_manifest,
                 "test_manifest": fr.test_manifest}
                for fr in self.folds
            ],
            "incomplete_folds": self.incomplete,
            "averages": self.averages,
            "pooled": self.pooled,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, indent=2) + "\n"


_CTX: dict = {}


def _needed_modalities(config: RunConfig) -> set[str]:
    return {MODALITY_BY_MODEL_PREFIX[m["name"]] for m in config.model_cfgs}


def _select_fold_frames(plan: SplitPlan, by_subject: dict):
    s = plan.sampling
    train, test = [], []
    for sid in plan.train_palsy + plan.train_healthy:
        train.extend(round_robin_sample(by_subject[sid], s.train_per_subject, plan.seed))
    test.extend(round_robin_sample(by_subject[plan.heldout], s.test_per_heldout, plan.seed))
    for sid in plan.test_healthy:
        test.extend(round_robin_sample(by_subject[sid], s.test_per_healthy, plan.seed))
    train_subjects = {f.subject_id for f in train}
    test_subjects = {f.subject_id for f in test}
    leak = train_subjects & test_subjects
    if leak:
        raise PlanError(f"fold {plan.fold_id}: subject leakage {sorted(leak)}")
    return train, test


def _manifest_of(frames: list[LandmarkFrame]) -> dict:
    out: dict[str, list] = {}
    for f in frames:
        out.setdefault(f.subject_id, []).append(f.frame_id)
    return {sid: sorted(ids) for sid, ids in sorted(out.items())}


def _run_fold(plan: SplitPlan) -> FoldResult:
    config: RunConfig = _CTX["config"]
    by_subject = _CTX["by_subject"]
    modal = _CTX["modal"]
    row_of = _CTX["row_of"]

    train_frames, test_frames = _select_fold_frames(plan, by_subject)
    train_idx = np.array([row_of[(f.subject_id, f.frame_id)] for f in train_frames])
    test_idx = np.array([row_of[(f.subject_id, f.frame_id)] for f in test_frames])
    y_train = np.array([f.binary_label() for f in train_frames], dtype=np.float64)
    y_test = np.array([bool(f.binary_label()) for f in test_frames])

    metrics: dict = {}
    predictions: dict = {}
    trained: dict = {}
    test_probs: dict = {}

    for mc in config.model_cfgs:
        name = mc["name"]
        overrides = {k: v for k, v in mc.items() if k != "name"}
        spec = models.build_model_spec(
            name, seed=derive_seed(config.seed, "model", plan.fold_id, name),
            overrides=overrides)
        modality = MODALITY_BY_MODEL_PREFIX[name]
        X_train = _as_model_input(modal[modality], train_idx)
        tm = models.train(spec, (X_train, y_train))
        X_test = _as_model_input(modal[modality], test_idx)
        probs = models.predict_proba(tm, X_test)
        trained[name] = tm
        test_probs[name] = probs
        pred = probs >= 0.5
        metrics[name] = compute_metrics(pred, y_test)
        predictions[name] = [
            (f.subject_id, f.frame_id, float(p), bool(q))
            for f, p, q in zip(test_frames, probs, pred)]

    for fc in config.fusion_cfgs:
        ma, mb = fc["members"]
        a, b = trained[ma], trained[mb]
        mod_a = MODALITY_BY_MODEL_PREFIX[ma]
        mod_b = MODALITY_BY_MODEL_PREFIX[mb]
        if fc["mode"] == "early":
            head = early_fuse_train(
                a, b,
                (_as_model_input(modal[mod_a], train_idx),
                 _as_model_input(modal[mod_b], train_idx),
                 y_train),
                seed=derive_seed(config.seed, "fusion", plan.fold_id, ma, mb),
                max_epochs=fc.get("max_epochs", 100), lr=fc.get("lr"))
            probs = early_fuse_predict(head, a, b,
                                       _as_model_input(modal[mod_a], test_idx),
                                       _as_model_input(modal[mod_b], test_idx))
            pred = probs >= 0.5
            fname = f"early_fusion[{ma}+{mb}]"
        else:
            probs, pred = late_fuse_predict(a, b,
                                            _as_model_input(modal[mod_a], test_idx),
                                            _as_model_input(modal[mod_b], test_idx))
            fname = f"late_fusion[{ma}+{mb}]"
        metrics[fname] = compute_metrics(pred, y_test)
        predictions[fname] = [
            (f.subject_id, f.frame_id, float(p), bool(q))
            for f, p, q in zip(test_frames, probs, pred)]

    return FoldResult(fold_id=plan.fold_id, heldout=plan.heldout, metrics=metrics,
                      train_manifest=_manifest_of(train_frames),
                      test_manifest=_manifest_of(test_frames),
                      predictions=predictions)


def _run_fold_safe(plan: SplitPlan):
    try:
        return _run_fold(plan)
    except PalsyFuseError as e:
        return {"fold": plan.fold_id, "error": f"{type(e).__name__}: {e}"}


def load_dataset_frames(config: RunConfig) -> list[LandmarkFrame]:
    ds = config.dataset
    if ds["kind"] == "synthetic":
        return synthgen.generate_dataset(
            n_palsy=int(ds.get("palsy_subjects", 10)),
            n_healthy=int(ds.get("healthy_subjects", 40)),
            frames_per_subject=int(ds.get("frames_per_subject", 50)),
            seed=derive_seed(config.seed, "dataset"),
            jitter_sigma=float(ds.get("jitter_sigma", 0.01)),
            severity_range=(float(ds.get("severity_min", 0.5)),
                            float(ds.get("severity_max", 1.0))))
    return read_frames(ds["frames"])


def run_experiment(config: RunConfig, threads: int | None = None,
                   progress=None) -> RunReport:
    """Full LOPO run: sample, extract, train, predict, score, and aggregate."""
    threads = threads if threads is not None else config.threads

    frames = load_dataset_frames(config)
    for f in frames:
        if f.label is None:
            raise ConfigError(
                f"frame {f.subject_id}/{f.frame_id} has no label; "
                f"supervised evaluation needs labelled frames")

    by_subject: dict[str, list] = {}
    for f in frames:
        by_subject.setdefault(f.subject_id, []).append(f)
    manifest = DatasetManifest.from_frames(frames)
    plans = make_lopo_plan(manifest, config.sampling, seed=config.seed)

    roles = (geometry.RoleMap.from_json(config.roles_path)
             if config.roles_path else geometry.default_role_map())
    contours = (rasterizer.ContourSet.from_json(config.contours_path)
                if config.contours_path else rasterizer.default_contours())

    modal = extract_modalities(frames, _needed_modalities(config), roles, contours,
                               config.image_size)
    row_of = {(f.subject_id, f.frame_id): i for i, f in enumerate(frames)}

    _CTX.clear()
    _CTX.update({"config": config, "by_subject": by_subject,
                 "modal": modal, "row_of": row_of})

    results = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = list(pool.map(_run_fold_safe, plans))
        results = list(futures)
    else:
        for plan in plans:
            results.append(_run_fold_safe(plan))
            if progress is not None:
                last = results[-1]
                if isinstance(last, FoldResult):
                    line = ", ".join(f"{k} f1={m.f1:.3f}"
                                     for k, m in sorted(last.metrics.items()))
                    progress(f"fold {plan.fold_id} ({plan.heldout}): {line}")
                else:
                    progress(f"fold {plan.fold_id} ({plan.heldout}): "
                             f"FAILED: {last['error']}")

    folds = [r for r in results if isinstance(r, FoldResult)]
    incomplete = [r for r in results if not isinstance(r, FoldResult)]
    folds.sort(key=lambda fr: fr.fold_id)

    averages = pooled = None
    if not incomplete and folds:
        names = sorted(folds[0].metrics)
        averages = {}
        pooled = {}
        for name in names:
            ms = [fr.metrics[name] for fr in folds]
            averages[name] = {
                "precision": float(np.mean([m.precision for m in ms])),
                "recall": float(np.mean([m.recall for m in ms])),
                "f1": float(np.mean([m.f1 for m in ms])),
            }
            agg = MetricsRecord.from_counts(
                sum(m.tp for m in ms), sum(m.fp for m in ms),
                sum(m.fn for m in ms), sum(m.tn for m in ms))
            pooled[name] = agg.to_json_obj()

    return RunReport(config=config, folds=folds, incomplete=incomplete,
                     averages=averages, pooled=pooled)


# ---------------------------------------------------------------------------
# report rendering

_MODALITY_TITLES = {
    "ffn_expression": ("Expression Features", "Feed-forward Network"),
    "ffn_coordinates": ("Landmark Coordinates", "Feed-forward Network"),
    "ffn_handcrafted": ("Handcrafted Features", "Feed-forward Network"),
    "mixer_rgb": ("RGB Images", "MixerMini"),
    "mixer_bnw": ("BnW Line-Segment Images", "MixerMini"),
    "resnet_rgb": ("RGB Images", "ResNetMini"),
    "resnet_bnw": ("BnW Line-Segment Images", "ResNetMini"),
}


def _row_title(name: str) -> tuple[str, str]:
    if name in _MODALITY_TITLES:
        return _MODALITY_TITLES[name]
    if name.startswith(("early_fusion[", "late_fusion[")):
        mode = "Early Fusion" if name.startswith("early") else "Late Fusion"
        inner = name[name.index("[") + 1:-1]
        a, b = inner.split("+")
        mod_a = _MODALITY_TITLES.get(a, (a, a))[0]
        mod_b = _MODALITY_TITLES.get(b, (b, b))[0]
        arch_a = _MODALITY_TITLES.get(a, (a, a))[1]
        arch_b = _MODALITY_TITLES.get(b, (b, b))[1]
        return (f"{mod_a} + {mod_b}", f"{mode} ({arch_a} + {arch_b})")
    return (name, name)


def render_markdown_report(report_obj: dict) -> str:
    """Results table: Data Modality | Model | Average F1 | Precision | Recall."""
    lines = ["# Evaluation report", "",
             f"- config hash: `{report_obj['config_hash']}`",
             f"- seed: {report_obj['seed']}",
             f"- folds: {len(report_obj['folds'])} "
             f"(incomplete: {len(report_obj['incomplete_folds'])})", ""]
    averages = report_obj.get("averages")
    if averages is None:
        lines.append("Averages unavailable: one or more folds failed.")
        for item in report_obj["incomplete_folds"]:
            lines.append(f"- fold {item['fold']}: {item['error']}")
        return "\n".join(lines) + "\n"
    lines.append("| Data Modality | Model | Average F1 | Average Precision | Average Recall |")
    lines.append("|---|---|---|---|---|")
    for name in averages:
        modality, model = _row_title(name)
        a = averages[name]
        lines.append(
            f"| {modality} | {model} | {a['f1'] * 100:.2f} "
            f"| {a['precision'] * 100:.2f} | {a['recall'] * 100:.2f} |")
    return "\n".join(lines) + "\n"


def write_prediction_csvs(report: RunReport, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for fr in report.folds:
        for name, rows in sorted(fr.predictions.items()):
            safe = name.replace("[", "_").replace("]", "").replace("+", "_")
            path = os.path.join(out_dir, f"predictions_{safe}_fold{fr.fold_id}.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("subject_id,frame_id,probability,label\n")
                for sid, fid, prob, lab in rows:
                    fh.write(f"{sid},{fid},{fmt9(prob)},{'Palsy' if lab else 'NoPalsy'}\n")
