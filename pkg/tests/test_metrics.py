import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reldisc.metrics import (
    ContingencyTable,
    MetricsError,
    ari,
    bcubed,
    hungarian_align,
    known_prf,
    purity,
    v_measure,
)

from oracles import (
    ari_reference,
    bcubed_reference,
    hungarian_reference,
    purity_reference,
    v_measure_reference,
)


class TestKnownPrf:
    def test_all_correct(self):
        pred = {"a": 0, "b": 1, "c": 0}
        gold = {"a": "r0", "b": "r1", "c": "r0"}
        micro, macro = known_prf(pred, gold, ["r0", "r1"])
        for score in (micro, macro):
            assert score.precision == score.recall == score.f1 == 1.0

    def test_hand_counted_example(self):
        # truth r1, r1, r2; predictions Known(r1), NovelCluster(0), Known(r2)
        pred = {"a": 0, "b": None, "c": 1}
        gold = {"a": "r1", "b": "r1", "c": "r2"}
        micro, _ = known_prf(pred, gold, ["r1", "r2"])
        assert micro.precision == pytest.approx(1.0)
        assert micro.recall == pytest.approx(2.0 / 3.0)
        assert micro.f1 == pytest.approx(0.8)

    def test_everything_sent_to_novel(self):
        pred = {"a": None, "b": None}
        gold = {"a": "r0", "b": "r1"}
        micro, macro = known_prf(pred, gold, ["r0", "r1"])
        assert micro.recall == 0.0 and micro.f1 == 0.0
        assert macro.recall == 0.0 and macro.f1 == 0.0

    def test_novel_truth_excluded(self):
        # instance d has a novel gold label; it must not affect known scores
        pred = {"a": 0, "d": 0}
        gold = {"a": "r0", "d": "something_new"}
        micro, _ = known_prf(pred, gold, ["r0"])
        assert micro.precision == micro.recall == 1.0

    def test_micro_perfect_iff_every_instance_correct(self):
        pred = {"a": 0, "b": 1, "c": 1}
        gold = {"a": "r0", "b": "r1", "c": "r0"}
        micro, _ = known_prf(pred, gold, ["r0", "r1"])
        assert micro.f1 < 1.0

    def test_empty_known_set_rejected(self):
        with pytest.raises(MetricsError):
            known_prf({}, {"a": "novelx"}, ["r0"])


class TestBcubed:
    def test_identity(self):
        assert bcubed([1, 2, 3], ["a", "b", "c"]).f1 == 1.0

    def test_worked_example(self):
        score = bcubed(["x", "x", "x", "y"], ["A", "A", "B", "B"])
        assert score.precision == pytest.approx(2.0 / 3.0)
        assert score.recall == pytest.approx(3.0 / 4.0)
        assert score.f1 == pytest.approx(12.0 / 17.0)
        ref = bcubed_reference(["x", "x", "x", "y"], ["A", "A", "B", "B"])
        assert (score.precision, score.recall, score.f1) == pytest.approx(ref)

    def test_single_cluster_two_even_classes(self):
        score = bcubed(["x"] * 4, ["A", "A", "B", "B"])
        assert score.precision == pytest.approx(0.5)
        assert score.recall == pytest.approx(1.0)


class TestVMeasure:
    def test_identity(self):
        assert v_measure([0, 1], ["a", "b"]) == (1.0, 1.0, 1.0)

    def test_single_cluster_two_classes(self):
        hom, comp, _ = v_measure(["x", "x"], ["a", "b"])
        assert hom == pytest.approx(0.0)
        assert comp == pytest.approx(1.0)

    def test_worked_example_matches_entropy_oracle(self):
        pred, true = ["x", "x", "x", "y"], ["A", "A", "B", "B"]
        got = v_measure(pred, true)
        ref = v_measure_reference(pred, true)
        np.testing.assert_allclose(got, ref, atol=1e-12)


class TestAri:
    def test_identity(self):
        assert ari([0, 1, 0], ["a", "b", "a"]) == pytest.approx(1.0)

    def test_worked_zero_case(self):
        assert ari(["x", "x", "x", "y"], ["A", "A", "B", "B"]) == pytest.approx(0.0)

    def test_single_class_convention(self):
        assert ari([0, 1, 2], ["a", "a", "a"]) == 1.0
        assert ari([0, 0, 0], ["a", "a", "a"]) == 1.0

    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = rng.integers(2, 10)
            pred = rng.integers(0, 3, n).tolist()
            true = rng.integers(0, 3, n).tolist()
            assert -1.0 <= ari(pred, true) <= 1.0


class TestPurity:
    def test_worked_example(self):
        # clusters {a,a,b} and {b,b}: purity (2+2)/5, both classes identified
        pred = [0, 0, 0, 1, 1]
        true = ["a", "a", "b", "b", "b"]
        score, identified = purity(pred, true)
        assert score == pytest.approx(0.8)
        assert identified == 2
        assert score == pytest.approx(purity_reference(pred, true))

    def test_perfect_clusters(self):
        score, identified = purity([0, 0, 1], ["a", "a", "b"])
        assert score == 1.0 and identified == 2

    def test_novel_restriction(self):
        pred = [0, 0, 1, 1]
        true = ["known_r", "known_r", "nov", "nov"]
        _, identified = purity(pred, true, novel_labels=["nov"])
        assert identified == 1

    def test_majority_tie_lowest_label(self):
        # cluster contains one 'a' and one 'b': majority goes to 'a'
        _, identified = purity([0, 0], ["a", "b"], novel_labels=["b"])
        assert identified == 0


class TestHungarian:
    def test_zero_diagonal_identity(self):
        cost = np.ones((3, 3)) - np.eye(3)
        pairs, total = hungarian_align(cost)
        assert pairs == [(0, 0), (1, 1), (2, 2)]
        assert total == 0.0

    def test_two_by_two(self):
        pairs, total = hungarian_align([[1.0, 2.0], [2.0, 1.0]])
        assert pairs == [(0, 0), (1, 1)]
        assert total == 2.0

    def test_matches_bruteforce_small_int_matrices(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            cost = rng.integers(0, 10, size=(3, 3)).astype(float)
            _, total = hungarian_align(cost)
            assert total == pytest.approx(hungarian_reference(cost))

    def test_matches_bruteforce_up_to_seven(self):
        rng = np.random.default_rng(2)
        for trial in range(40):
            n = int(rng.integers(2, 8))
            m = int(rng.integers(2, 8))
            cost = rng.standard_normal((n, m))
            pairs, total = hungarian_align(cost)
            assert len(pairs) == min(n, m)
            assert total == pytest.approx(hungarian_reference(cost))
            got = sum(cost[r, c] for r, c in pairs)
            assert got == pytest.approx(total)

    def test_lexicographic_tie_break(self):
        # every matching costs 2: lexicographically smallest must win
        pairs, _ = hungarian_align(np.ones((2, 2)))
        assert pairs == [(0, 0), (1, 1)]

    def test_rejects_bad_input(self):
        with pytest.raises(MetricsError):
            hungarian_align(np.zeros((0, 2)))
        with pytest.raises(MetricsError):
            hungarian_align([[np.inf, 1.0], [1.0, 2.0]])


class TestOracleEquivalence:
    def test_random_clusterings_match_bruteforce(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            n = int(rng.integers(1, 13))
            pred = rng.integers(0, 4, n).tolist()
            true = [chr(97 + v) for v in rng.integers(0, 4, n)]
            b = bcubed(pred, true)
            np.testing.assert_allclose(
                (b.precision, b.recall, b.f1), bcubed_reference(pred, true), atol=1e-12)
            np.testing.assert_allclose(
                v_measure(pred, true), v_measure_reference(pred, true), atol=1e-12)
            np.testing.assert_allclose(ari(pred, true), ari_reference(pred, true),
                                       atol=1e-12)
            np.testing.assert_allclose(purity(pred, true)[0],
                                       purity_reference(pred, true), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=10).flatmap(
    lambda pred: st.tuples(st.just(pred),
                           st.lists(st.integers(0, 3), min_size=len(pred),
                                    max_size=len(pred)),
                           st.permutations(range(4)))))
def test_cluster_relabeling_invariance(args):
    pred, true, perm = args
    renamed = [perm[p] for p in pred]
    assert ari(pred, true) == pytest.approx(ari(renamed, true), abs=1e-12)
    a, b = bcubed(pred, true), bcubed(renamed, true)
    assert (a.precision, a.recall, a.f1) == pytest.approx((b.precision, b.recall, b.f1))
    np.testing.assert_allclose(v_measure(pred, true), v_measure(renamed, true), atol=1e-12)
    assert purity(pred, true)[0] == pytest.approx(purity(renamed, true)[0])


class TestContingency:
    def test_marginals_consistent(self):
        table = ContingencyTable.from_labels([0, 0, 1], ["a", "b", "b"])
        assert table.total == 3
        assert table.row_sums.sum() == 3
        assert table.col_sums.sum() == 3
        assert table.counts.sum() == 3

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            ContingencyTable.from_labels([], [])
