import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reldisc.corpus import (
    CorpusError,
    EmbeddedInstance,
    RelationSpec,
    SyntheticSpec,
    build_split,
    generate_synthetic,
    load_embeddings,
    well_separated_spec,
    write_embeddings,
)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadEmbeddings:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.jsonl"
        p.write_text("")
        assert load_embeddings(p) == []

    def test_single_line_round_trip(self, tmp_path):
        p = tmp_path / "e.jsonl"
        write_lines(p, ['{"id":"a","vec":[1.0,0.0],"label":"r1"}'])
        out = load_embeddings(p)
        assert len(out) == 1
        assert out[0].id == "a"
        assert out[0].gold_label == "r1"
        assert out[0].dim == 2
        np.testing.assert_array_equal(out[0].vector, [1.0, 0.0])

    def test_dimension_mismatch_names_line(self, tmp_path):
        p = tmp_path / "e.jsonl"
        write_lines(p, ['{"id":"a","vec":[1.0,2.0],"label":null}',
                        '{"id":"b","vec":[1.0,2.0,3.0],"label":null}'])
        with pytest.raises(CorpusError, match="line 2"):
            load_embeddings(p)

    def test_malformed_json_names_line(self, tmp_path):
        p = tmp_path / "e.jsonl"
        write_lines(p, ['{"id":"a","vec":[1.0]}', "{nope"])
        with pytest.raises(CorpusError, match="line 2"):
            load_embeddings(p)

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "e.jsonl"
        write_lines(p, ['{"id":"a","vec":[1.0]}', '{"id":"a","vec":[2.0]}'])
        with pytest.raises(CorpusError, match="duplicate id"):
            load_embeddings(p)

    def test_non_finite_value(self, tmp_path):
        p = tmp_path / "e.jsonl"
        write_lines(p, ['{"id":"a","vec":[1e999]}'])
        with pytest.raises(CorpusError, match="line 1"):
            load_embeddings(p)

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        instances = [
            EmbeddedInstance(id=f"i{k}", vector=rng.standard_normal(5),
                             gold_label=None if k % 3 == 0 else f"r{k % 2}")
            for k in range(20)
        ]
        p = tmp_path / "e.jsonl"
        write_embeddings(p, instances)
        loaded = load_embeddings(p)
        assert [i.id for i in loaded] == [i.id for i in instances]
        assert [i.gold_label for i in loaded] == [i.gold_label for i in instances]
        for a, b in zip(loaded, instances):
            np.testing.assert_array_equal(a.vector, b.vector)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
                min_size=1, max_size=8))
def test_round_trip_property(tmp_path_factory, vectors):
    tmp = tmp_path_factory.mktemp("rt")
    instances = [EmbeddedInstance(id=str(i), vector=np.array(v), gold_label="r")
                 for i, v in enumerate(vectors)]
    p = tmp / "e.jsonl"
    write_embeddings(p, instances)
    loaded = load_embeddings(p)
    for a, b in zip(loaded, instances):
        np.testing.assert_array_equal(a.vector, b.vector)


def make_labeled(counts: dict[str, int], dim=3) -> list[EmbeddedInstance]:
    rng = np.random.default_rng(42)
    out = []
    for name, count in counts.items():
        for i in range(count):
            out.append(EmbeddedInstance(id=f"{name}-{i}", vector=rng.standard_normal(dim),
                                        gold_label=name))
    return out


class TestBuildSplit:
    def test_half_split_counts(self):
        split = build_split(make_labeled({"r1": 10, "n1": 4}), {"n1"}, 0.5, seed=0)
        assert len(split.labeled) == 5
        labeled_r1 = [i for i in split.labeled if i.id.startswith("r1")]
        assert len(labeled_r1) == 5

    def test_novel_goes_entirely_unlabeled(self):
        split = build_split(make_labeled({"r1": 4, "n1": 7}), {"n1"}, 0.5, seed=0)
        novel_ids = {i.id for i in split.unlabeled if i.id.startswith("n1")}
        assert len(novel_ids) == 7
        assert all(not i.id.startswith("n1") for i in split.labeled)

    def test_same_seed_identical(self):
        data = make_labeled({"r1": 9, "r2": 7, "n1": 3})
        s1 = build_split(data, {"n1"}, 0.4, seed=11)
        s2 = build_split(data, {"n1"}, 0.4, seed=11)
        assert [i.id for i in s1.labeled] == [i.id for i in s2.labeled]
        assert [i.id for i in s1.unlabeled] == [i.id for i in s2.unlabeled]

    def test_partition_and_floor(self):
        counts = {"r1": 9, "r2": 7, "r3": 2, "n1": 5}
        data = make_labeled(counts)
        split = build_split(data, {"n1"}, 0.4, seed=3)
        labeled_ids = {i.id for i in split.labeled}
        unlabeled_ids = {i.id for i in split.unlabeled}
        assert labeled_ids | unlabeled_ids == {i.id for i in data}
        assert labeled_ids & unlabeled_ids == set()
        for name in ("r1", "r2", "r3"):
            got = sum(1 for i in split.labeled if i.id.startswith(name))
            assert got == math.floor(0.4 * counts[name])

    def test_unlabeled_labels_sealed(self):
        split = build_split(make_labeled({"r1": 4, "n1": 3}), {"n1"}, 0.5, seed=0)
        assert all(i.gold_label is None for i in split.unlabeled)
        assert set(split.eval_labels.values()) <= {"r1", "n1"}
        assert len(split.eval_labels) == len(split.unlabeled)

    def test_unknown_novel_name(self):
        with pytest.raises(CorpusError, match="novel names"):
            build_split(make_labeled({"r1": 4}), {"nope"}, 0.5, seed=0)

    def test_tiny_known_relation_rejected(self):
        with pytest.raises(CorpusError, match="fewer than 2"):
            build_split(make_labeled({"r1": 1, "n1": 3}), {"n1"}, 0.5, seed=0)

    def test_fraction_bounds(self):
        data = make_labeled({"r1": 4, "n1": 2})
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(CorpusError):
                build_split(data, {"n1"}, bad, seed=0)


class TestSynthetic:
    def test_zero_stddev_identical_vectors(self):
        spec = SyntheticSpec(
            dim=4,
            relations=(RelationSpec("r", np.zeros(4), 0.0, 3),),
            novel_names=(),
            seed=0,
        )
        out = generate_synthetic(spec)
        assert len(out) == 3
        for inst in out:
            np.testing.assert_array_equal(inst.vector, np.zeros(4))

    def test_sample_means_near_truth(self):
        m1 = np.zeros(6); m1[0] = 10.0
        m2 = np.zeros(6); m2[0] = -10.0
        spec = SyntheticSpec(
            dim=6,
            relations=(RelationSpec("a", m1, 1.0, 100), RelationSpec("b", m2, 1.0, 100)),
            novel_names=(),
            seed=7,
        )
        out = generate_synthetic(spec)
        for name, mean in (("a", m1), ("b", m2)):
            vecs = np.stack([i.vector for i in out if i.gold_label == name])
            assert np.linalg.norm(vecs.mean(axis=0) - mean) < 0.5

    def test_deterministic_bytes(self, tmp_path):
        spec = SyntheticSpec(
            dim=3,
            relations=(RelationSpec("a", np.ones(3), 0.5, 5),),
            novel_names=(),
            seed=9,
        )
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_embeddings(p1, generate_synthetic(spec))
        write_embeddings(p2, generate_synthetic(spec))
        assert p1.read_bytes() == p2.read_bytes()

    def test_count_below_two_rejected(self):
        with pytest.raises(CorpusError, match="count"):
            SyntheticSpec(dim=2, relations=(RelationSpec("a", np.zeros(2), 1.0, 1),),
                          novel_names=(), seed=0)

    def test_well_separated_distances(self):
        spec = well_separated_spec([f"k{i}" for i in range(5)], ["n0", "n1"],
                                   dim=64, separation=8.0)
        means = [r.mean for r in spec.relations]
        for i in range(len(means)):
            for j in range(i + 1, len(means)):
                assert np.linalg.norm(means[i] - means[j]) >= 8.0 - 1e-9
