"""Frames JSONL, feature CSV, manifest: schema validation and round trips."""

import numpy as np
import pytest

from conftest import make_frame
from palsyfuse.datamodel import (DatasetManifest, FeatureKind, FeatureVector,
                                 Intensity, LandmarkFrame, RegionLabel, Source,
                                 fmt9, read_features_csv, read_frames,
                                 read_manifest, write_features_csv, write_frames,
                                 write_manifest)
from palsyfuse.errors import ParseError, SchemaError


def canonical(x: float) -> float:
    return float(fmt9(x))


def random_frames(n, seed=0, with_blendshapes=True, with_label=True):
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        lm = rng.random((478, 2))
        lm = np.vectorize(canonical)(lm)
        bs = None
        if with_blendshapes:
            bs = np.vectorize(canonical)(rng.random(52))
        label = None
        if with_label:
            label = RegionLabel(Intensity.SLIGHT if i % 2 else Intensity.NORMAL,
                                Intensity.NORMAL)
        frames.append(LandmarkFrame(f"s{i % 3}", f"f{i:04d}", Source.SYNTHETIC,
                                    lm, blendshapes=bs, label=label))
    return frames


class TestLandmarkFrame:
    def test_wrong_landmark_count(self):
        with pytest.raises(SchemaError, match="expected 478, got 477"):
            make_frame(np.zeros((477, 2)))

    def test_nonfinite_coordinate(self):
        lm = np.zeros((478, 2))
        lm[3, 1] = np.nan
        with pytest.raises(SchemaError, match="non-finite"):
            make_frame(lm)

    def test_blendshape_range(self):
        bs = np.zeros(52)
        bs[10] = 1.5
        with pytest.raises(SchemaError, match="blendshape"):
            make_frame(np.zeros((478, 2)) + 0.5, blendshapes=bs)

    def test_blendshape_count(self):
        with pytest.raises(SchemaError, match="expected 52"):
            make_frame(np.zeros((478, 2)), blendshapes=np.zeros(51))

    def test_immutable_arrays(self):
        f = make_frame(np.zeros((478, 2)))
        with pytest.raises(ValueError):
            f.landmarks[0, 0] = 1.0


class TestRegionLabel:
    def test_binary_label(self):
        assert not RegionLabel(Intensity.NORMAL, Intensity.NORMAL).binary_label()
        assert RegionLabel(Intensity.SLIGHT, Intensity.NORMAL).binary_label()
        assert RegionLabel(Intensity.NORMAL, Intensity.STRONG).binary_label()

    def test_class_key(self):
        lab = RegionLabel(Intensity.SLIGHT, Intensity.STRONG)
        assert lab.class_key() == (Intensity.SLIGHT, Intensity.STRONG)
        assert lab.class_key_str() == "Slight-Strong"


class TestFramesJsonl:
    def test_round_trip_order_preserved(self, tmp_path):
        frames = random_frames(10, seed=1)
        path = tmp_path / "frames.jsonl"
        write_frames(frames, path)
        back = read_frames(path)
        assert back == frames

    def test_write_read_write_bit_identical(self, tmp_path):
        frames = random_frames(5, seed=2)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_frames(frames, p1)
        write_frames(read_frames(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_two_valid_lines(self, tmp_path):
        frames = random_frames(2, seed=3)
        path = tmp_path / "frames.jsonl"
        write_frames(frames, path)
        back = read_frames(path)
        assert [f.frame_id for f in back] == [f.frame_id for f in frames]

    def test_malformed_line_cites_line_number(self, tmp_path):
        frames = random_frames(1, seed=4)
        path = tmp_path / "frames.jsonl"
        write_frames(frames, path)
        with open(path, "a") as fh:
            fh.write("{not json\n")
        with pytest.raises(ParseError, match=":2"):
            read_frames(path)

    def test_wrong_landmark_count_names_frame(self, tmp_path):
        path = tmp_path / "frames.jsonl"
        obj = ('{"subject_id":"s","frame_id":"f0","source":"synthetic",'
               '"landmarks":' + str([[0.0, 0.0]] * 477) + ',"blendshapes":null,"label":null}')
        path.write_text(obj + "\n")
        with pytest.raises(SchemaError, match="expected 478, got 477"):
            read_frames(path)

    def test_blendshape_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "frames.jsonl"
        bs = [0.0] * 52
        bs[0] = 1.5
        obj = ('{"subject_id":"s","frame_id":"f0","source":"synthetic",'
               '"landmarks":' + str([[0.0, 0.0]] * 478)
               + ',"blendshapes":' + str(bs) + ',"label":null}')
        path.write_text(obj + "\n")
        with pytest.raises(SchemaError, match="blendshape"):
            read_frames(path)

    def test_duplicate_identity_rejected(self, tmp_path):
        frames = random_frames(1, seed=5)
        path = tmp_path / "frames.jsonl"
        write_frames(frames + frames, path)
        with pytest.raises(SchemaError, match="duplicate"):
            read_frames(path)

    def test_arbitrary_bytes_do_not_crash(self, tmp_path):
        path = tmp_path / "junk.jsonl"
        path.write_bytes(b"\x00\xff garbage\n")
        with pytest.raises(ParseError):
            read_frames(path)


class TestFeaturesCsv:
    def vector(self, seed=0):
        rng = np.random.default_rng(seed)
        vals = np.vectorize(canonical)(rng.random(29))
        return FeatureVector(FeatureKind.HANDCRAFTED29, vals, "s0", "f0000")

    def test_column_count(self, tmp_path):
        path = tmp_path / "f.csv"
        write_features_csv([self.vector()], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert len(lines[0].split(",")) == 31
        assert lines[0].split(",")[:3] == ["subject_id", "frame_id", "F1"]
        assert lines[0].split(",")[-1] == "F29"

    def test_round_trip(self, tmp_path):
        vectors = [self.vector(i) for i in range(7)]
        path = tmp_path / "f.csv"
        write_features_csv(vectors, path)
        back = read_features_csv(path)
        assert back == vectors

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "f.csv"
        write_features_csv([self.vector()], path)
        lines = path.read_text().splitlines()
        header = ",".join(lines[0].split(",")[:-1])  # drop F29
        body = ",".join(lines[1].split(",")[:-1])
        path.write_text(header + "\n" + body + "\n")
        with pytest.raises(SchemaError, match="F29"):
            read_features_csv(path)

    def test_mixed_kinds_rejected(self, tmp_path):
        rng = np.random.default_rng(0)
        v29 = self.vector()
        v52 = FeatureVector(FeatureKind.EXPRESSION52, rng.random(52), "s", "f")
        with pytest.raises(SchemaError, match="mixed"):
            write_features_csv([v29, v52], tmp_path / "f.csv")

    def test_expression_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        vecs = [FeatureVector(FeatureKind.EXPRESSION52,
                              np.vectorize(canonical)(rng.random(52)), "s", f"f{i}")
                for i in range(3)]
        path = tmp_path / "e.csv"
        write_features_csv(vecs, path)
        assert read_features_csv(path) == vecs


class TestFeatureVector:
    def test_length_mismatch(self):
        with pytest.raises(SchemaError, match="expected 29"):
            FeatureVector(FeatureKind.HANDCRAFTED29, np.zeros(28), "s", "f")

    def test_bounded_kinds_reject_out_of_range(self):
        vals = np.zeros(52)
        vals[5] = -0.1
        with pytest.raises(SchemaError, match=r"\[0,1\]"):
            FeatureVector(FeatureKind.EXPRESSION52, vals, "s", "f")

    def test_coordinates_unbounded(self):
        vals = np.linspace(-3, 3, 956)
        v = FeatureVector(FeatureKind.COORDINATES956, vals, "s", "f")
        assert v.values.shape == (956,)


class TestManifest:
    def test_census_equals_recount(self, tmp_path):
        frames = random_frames(12, seed=6)
        manifest = DatasetManifest.from_frames(frames)
        for entry in manifest.subjects:
            mine = [f for f in frames if f.subject_id == entry.subject_id]
            assert entry.frame_count == len(mine)
            recount: dict = {}
            for f in mine:
                key = f.label.class_key_str() if f.label else "unlabeled"
                recount[key] = recount.get(key, 0) + 1
            assert entry.census == recount
        path = tmp_path / "manifest.json"
        write_manifest(manifest, path)
        assert read_manifest(path) == manifest

    def test_bad_census_sum_rejected(self):
        frames = random_frames(3, seed=7)
        manifest = DatasetManifest.from_frames(frames)
        entry = manifest.subjects[0]
        bad = dict(entry.census)
        first = next(iter(bad))
        bad[first] += 1
        from palsyfuse.datamodel import SubjectEntry
        with pytest.raises(SchemaError, match="census"):
            DatasetManifest(subjects=(SubjectEntry(
                entry.subject_id, entry.source, entry.frame_count, bad),))
