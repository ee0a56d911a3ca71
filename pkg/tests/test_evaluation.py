"""Round-robin sampler, metrics oracle, LOPO planning, and the experiment
runner end to end."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_frame
from palsyfuse import evaluation, synthgen
from palsyfuse.datamodel import (DatasetManifest, Intensity, LandmarkFrame,
                                 RegionLabel, Source)
from palsyfuse.errors import ConfigError, DimensionError, PlanError
from palsyfuse.evaluation import (MetricsRecord, RunConfig, SamplingConfig,
                                  compute_metrics, make_lopo_plan,
                                  round_robin_sample, run_experiment)

_TPL = synthgen.neutral_template()


def frame_with_label(subject, idx, eyes=Intensity.NORMAL, mouth=Intensity.NORMAL,
                     source=Source.SYNTHETIC):
    return LandmarkFrame(subject, f"f{idx:04d}", source, _TPL,
                         label=RegionLabel(eyes, mouth))


def subject_frames(subject, census):
    """census: list of (eyes, mouth, count).  Frame ids increase across classes."""
    frames = []
    i = 0
    for eyes, mouth, count in census:
        for _ in range(count):
            frames.append(frame_with_label(subject, i, eyes, mouth))
            i += 1
    return frames


def brute_force_metrics(pred, truth):
    tp = sum(1 for p, t in zip(pred, truth) if p and t)
    fp = sum(1 for p, t in zip(pred, truth) if p and not t)
    fn = sum(1 for p, t in zip(pred, truth) if not p and t)
    tn = sum(1 for p, t in zip(pred, truth) if not p and not t)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return tp, fp, fn, tn, precision, recall, f1


class TestMetrics:
    def test_perfect(self):
        m = compute_metrics([True, False, True], [True, False, True])
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)

    def test_all_negative_degenerate(self):
        m = compute_metrics([False, False, False], [True, False, True])
        assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)

    def test_hand_computed(self):
        # tp=2 fp=1 fn=1 -> P = R = F1 = 2/3
        m = compute_metrics([True, True, True, False, False],
                            [True, True, False, True, False])
        assert abs(m.precision - 2 / 3) < 1e-15
        assert abs(m.recall - 2 / 3) < 1e-15
        assert abs(m.f1 - 2 / 3) < 1e-15

    def test_matches_oracle_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = rng.integers(1, 40)
            pred = rng.random(n) > rng.random()
            truth = rng.random(n) > rng.random()
            m = compute_metrics(pred, truth)
            assert (m.tp, m.fp, m.fn, m.tn, m.precision, m.recall, m.f1) == \
                brute_force_metrics(pred, truth)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            compute_metrics([True], [True, False])

    def test_empty(self):
        with pytest.raises(DimensionError):
            compute_metrics([], [])


class TestRoundRobin:
    def test_even_split(self):
        frames = subject_frames("s", [(Intensity.SLIGHT, Intensity.NORMAL, 10),
                                      (Intensity.STRONG, Intensity.NORMAL, 10)])
        out = round_robin_sample(frames, 6)
        keys = [f.label.class_key() for f in out]
        assert keys.count((Intensity.SLIGHT, Intensity.NORMAL)) == 3
        assert keys.count((Intensity.STRONG, Intensity.NORMAL)) == 3

    def test_scarce_class_exhausted_first(self):
        frames = subject_frames("s", [(Intensity.SLIGHT, Intensity.NORMAL, 10),
                                      (Intensity.STRONG, Intensity.NORMAL, 1)])
        out = round_robin_sample(frames, 6)
        keys = [f.label.class_key() for f in out]
        assert keys.count((Intensity.STRONG, Intensity.NORMAL)) == 1
        assert keys.count((Intensity.SLIGHT, Intensity.NORMAL)) == 5

    def test_subject_smaller_than_target(self):
        frames = subject_frames("s", [(Intensity.SLIGHT, Intensity.SLIGHT, 2)])
        out = round_robin_sample(frames, 50)
        assert len(out) == 2

    def test_earliest_frame_ids_win(self):
        frames = subject_frames("s", [(Intensity.NORMAL, Intensity.NORMAL, 8)])
        out = round_robin_sample(frames, 3)
        assert [f.frame_id for f in out] == ["f0000", "f0001", "f0002"]

    def test_deterministic(self):
        frames = subject_frames("s", [(Intensity.SLIGHT, Intensity.NORMAL, 7),
                                      (Intensity.NORMAL, Intensity.SLIGHT, 5),
                                      (Intensity.STRONG, Intensity.STRONG, 3)])
        a = round_robin_sample(frames, 9, seed=1)
        b = round_robin_sample(frames, 9, seed=2)
        assert [f.frame_id for f in a] == [f.frame_id for f in b]

    def test_nonpositive_target(self):
        frames = subject_frames("s", [(Intensity.NORMAL, Intensity.NORMAL, 2)])
        with pytest.raises(PlanError):
            round_robin_sample(frames, 0)

    @settings(max_examples=120, deadline=None)
    @given(st.lists(st.integers(min_value=1, max_value=12), min_size=1, max_size=6),
           st.integers(min_value=1, max_value=40))
    def test_balance_when_sufficient(self, counts, target):
        levels = [(e, m) for e in Intensity for m in Intensity]
        census = [(levels[i][0], levels[i][1], c) for i, c in enumerate(counts)]
        frames = subject_frames("s", census)
        out = round_robin_sample(frames, target)
        assert len(out) == min(target, len(frames))
        per_class: dict = {}
        for f in out:
            per_class[f.label.class_key()] = per_class.get(f.label.class_key(), 0) + 1
        if all(c >= (target + len(counts) - 1) // len(counts) for c in counts):
            # every class has enough frames: counts differ by at most 1
            values = [per_class.get((levels[i][0], levels[i][1]), 0)
                      for i in range(len(counts))]
            assert max(values) - min(values) <= 1


def build_manifest(n_palsy, n_healthy, frames_each=50):
    frames = []
    for k in range(n_palsy):
        frames.extend(subject_frames(
            f"p{k:02d}", [(Intensity.SLIGHT, Intensity.NORMAL, frames_each // 2),
                          (Intensity.STRONG, Intensity.STRONG,
                           frames_each - frames_each // 2)]))
    for k in range(n_healthy):
        frames.extend(subject_frames(
            f"h{k:02d}", [(Intensity.NORMAL, Intensity.NORMAL, frames_each)]))
    return frames, DatasetManifest.from_frames(frames)


class TestLopoPlan:
    def test_full_cohort_arithmetic(self):
        frames, manifest = build_manifest(21, 40)
        plans = make_lopo_plan(manifest, SamplingConfig(), seed=11)
        assert len(plans) == 21
        by_subject: dict = {}
        for f in frames:
            by_subject.setdefault(f.subject_id, []).append(f)
        for plan in plans:
            train, test = evaluation._select_fold_frames(plan, by_subject)
            assert len(train) == 20 * 50 + 20 * 50 == 2000
            assert len(test) == 50 + 20 * 2 == 90
            train_subjects = {f.subject_id for f in train}
            test_subjects = {f.subject_id for f in test}
            assert not (train_subjects & test_subjects)
            assert plan.heldout in test_subjects

    def test_each_palsy_subject_held_out_once(self):
        _, manifest = build_manifest(5, 45, frames_each=10)
        plans = make_lopo_plan(manifest, SamplingConfig(
            train_per_subject=5, healthy_train_subjects=20,
            healthy_test_subjects=20, test_per_heldout=5, test_per_healthy=1), seed=3)
        assert sorted(p.heldout for p in plans) == [f"p{k:02d}" for k in range(5)]

    def test_insufficient_healthy(self):
        _, manifest = build_manifest(21, 30)
        with pytest.raises(PlanError, match="40"):
            make_lopo_plan(manifest, SamplingConfig(), seed=0)

    def test_healthy_sets_disjoint_and_deterministic(self):
        _, manifest = build_manifest(4, 45, frames_each=8)
        cfg = SamplingConfig(train_per_subject=4, healthy_train_subjects=20,
                             healthy_test_subjects=20, test_per_heldout=4,
                             test_per_healthy=1)
        a = make_lopo_plan(manifest, cfg, seed=5)
        b = make_lopo_plan(manifest, cfg, seed=5)
        assert a == b
        for plan in a:
            assert not (set(plan.train_healthy) & set(plan.test_healthy))


def smoke_config(tmp_path=None, threads=1, fusions=(), models_extra=()):
    obj = {
        "seed": 1234,
        "dataset": {"kind": "synthetic", "palsy_subjects": 3, "healthy_subjects": 8,
                    "frames_per_subject": 10, "severity_min": 0.6,
                    "severity_max": 1.0, "jitter_sigma": 0.01},
        "sampling": {"train_per_subject": 8, "healthy_train_subjects": 4,
                     "healthy_test_subjects": 4, "test_per_heldout": 8,
                     "test_per_healthy": 2},
        "image_size": 16,
        "models": [{"name": "ffn_handcrafted", "max_epochs": 40}] + list(models_extra),
        "fusions": list(fusions),
        "threads": threads,
    }
    return RunConfig.from_json_obj(obj)


class TestRunConfig:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_json_obj({"seed": 1, "dataset": {"kind": "synthetic"},
                                     "models": [], "extra": 1})

    def test_unknown_model_rejected_before_training(self):
        with pytest.raises(ConfigError, match="unknown model"):
            RunConfig.from_json_obj({"seed": 1, "dataset": {"kind": "synthetic"},
                                     "models": [{"name": "nope"}]})

    def test_fusion_member_must_be_listed(self):
        with pytest.raises(ConfigError, match="not in the models list"):
            RunConfig.from_json_obj({
                "seed": 1, "dataset": {"kind": "synthetic"},
                "models": [{"name": "ffn_handcrafted"}],
                "fusions": [{"mode": "late",
                             "members": ["ffn_handcrafted", "mixer_rgb"]}]})

    def test_bad_fusion_mode(self):
        with pytest.raises(ConfigError, match="early"):
            RunConfig.from_json_obj({
                "seed": 1, "dataset": {"kind": "synthetic"},
                "models": [{"name": "ffn_handcrafted"}],
                "fusions": [{"mode": "mid", "members": ["ffn_handcrafted",
                                                        "ffn_handcrafted"]}]})

    def test_hash_stable(self):
        assert smoke_config().config_hash() == smoke_config().config_hash()


class TestRunExperiment:
    def test_synthetic_end_to_end(self):
        report = run_experiment(smoke_config(), threads=1)
        assert len(report.folds) == 3
        assert not report.incomplete
        assert "ffn_handcrafted" in report.averages
        f1 = report.averages["ffn_handcrafted"]["f1"]
        assert 0.0 <= f1 <= 1.0
        mean_of_folds = np.mean([fr.metrics["ffn_handcrafted"].f1 for fr in report.folds])
        assert abs(f1 - mean_of_folds) < 1e-12

    def test_no_leakage_in_manifests(self):
        report = run_experiment(smoke_config(), threads=1)
        for fr in report.folds:
            assert not (set(fr.train_manifest) & set(fr.test_manifest))

    def test_byte_identical_reports(self):
        a = run_experiment(smoke_config(), threads=1).to_json_text()
        b = run_experiment(smoke_config(), threads=1).to_json_text()
        assert a == b

    def test_parallel_folds_match_serial(self):
        serial = run_experiment(smoke_config(), threads=1).to_json_text()
        parallel = run_experiment(smoke_config(), threads=2).to_json_text()
        assert serial == parallel

    def test_with_fusions(self):
        cfg = smoke_config(
            models_extra=[{"name": "mixer_rgb", "max_epochs": 3, "image_size": 16,
                           "patch": 8, "dim": 8, "token_mlp": 4, "channel_mlp": 8,
                           "depth": 1}],
            fusions=[{"mode": "early", "members": ["ffn_handcrafted", "mixer_rgb"],
                      "max_epochs": 10},
                     {"mode": "late", "members": ["ffn_handcrafted", "mixer_rgb"]}])
        report = run_experiment(cfg, threads=1)
        assert not report.incomplete
        names = set(report.averages)
        assert "early_fusion[ffn_handcrafted+mixer_rgb]" in names
        assert "late_fusion[ffn_handcrafted+mixer_rgb]" in names

    def test_markdown_table_shape(self):
        report = run_experiment(smoke_config(), threads=1)
        md = evaluation.render_markdown_report(report.to_json_obj())
        assert "| Data Modality | Model | Average F1 | Average Precision | Average Recall |" in md
        assert "Handcrafted Features" in md

    def test_incomplete_fold_blocks_averaging(self, monkeypatch):
        from palsyfuse.errors import PalsyFuseError

        real = evaluation._run_fold

        def flaky(plan):
            if plan.fold_id == 1:
                raise PalsyFuseError("synthetic fold failure")
            return real(plan)

        monkeypatch.setattr(evaluation, "_run_fold", flaky)
        report = run_experiment(smoke_config(), threads=1)
        assert len(report.incomplete) == 1
        assert report.incomplete[0]["fold"] == 1
        assert "synthetic fold failure" in report.incomplete[0]["error"]
        assert report.averages is None and report.pooled is None
        obj = report.to_json_obj()
        assert obj["averages"] is None
        md = evaluation.render_markdown_report(obj)
        assert "Averages unavailable" in md
        assert "fold 1" in md

    def test_prediction_csvs(self, tmp_path):
        report = run_experiment(smoke_config(), threads=1)
        evaluation.write_prediction_csvs(report, tmp_path)
        files = sorted(p.name for p in tmp_path.iterdir())
        assert "predictions_ffn_handcrafted_fold0.csv" in files
        text = (tmp_path / "predictions_ffn_handcrafted_fold0.csv").read_text()
        header = text.splitlines()[0]
        assert header == "subject_id,frame_id,probability,label"
        assert "Palsy" in text or "NoPalsy" in text
