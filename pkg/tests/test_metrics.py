import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from tsint.errors import ContractError
from tsint.metrics import evaluate, map_at_r, mean_ap, precision_at_1


def brute_force(emb, labels):
    """Per-query loops over an explicit (distance, index) sort."""
    n = len(labels)
    p1, mapr, ap = [], [], []
    for q in range(n):
        others = [j for j in range(n) if j != q]
        dists = {j: math.sqrt(sum((a - b) ** 2 for a, b in zip(emb[q], emb[j]))) for j in others}
        ranking = sorted(others, key=lambda j: (dists[j], j))
        rel = [labels[j] == labels[q] for j in ranking]
        r = sum(rel)
        if r == 0:
            continue
        p1.append(1.0 if rel[0] else 0.0)
        hits, prec_sum_r, prec_sum = 0, 0.0, 0.0
        for i, flag in enumerate(rel, start=1):
            if flag:
                hits += 1
                prec_sum += hits / i
                if i <= r:
                    prec_sum_r += hits / i
        mapr.append(prec_sum_r / r)
        ap.append(prec_sum / r)
    return sum(p1) / len(p1), sum(mapr) / len(mapr), sum(ap) / len(ap)


def _instance(seed, n=20):
    rng = np.random.default_rng(seed)
    emb = rng.standard_normal((n, 3))
    labels = rng.integers(0, 4, n)
    return emb, labels


class TestValues:
    def test_identical_embeddings_one_class(self):
        emb = np.ones((5, 2))
        assert precision_at_1(emb, [0] * 5) == 1.0
        assert map_at_r(emb, [0] * 5) == 1.0

    def test_interleaved_classes(self):
        # positions 0,1,2,3 on a line alternate classes: every nearest neighbor differs
        emb = np.array([[0.0], [1.0], [2.0], [3.0]])
        assert precision_at_1(emb, [0, 1, 0, 1]) == 0.0

    def test_perfect_ranking(self):
        emb = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
        labels = [0, 0, 0, 1, 1, 1]
        m = evaluate(emb, labels)
        assert (m.precision_at_1, m.map_at_r, m.mean_ap) == (1.0, 1.0, 1.0)

    def test_map_at_r_hand_example(self):
        # query 0 (class a, R=2): ranking 1 (a), 2 (b), 3 (a)
        emb = np.array([[0.0], [1.0], [2.0], [3.0]])
        labels = np.array([0, 0, 1, 0])
        from tsint.metrics import _per_query, ranked_relevance
        valid, p1, ap_r, ap = _per_query(ranked_relevance(emb, labels))
        assert ap_r[0] == pytest.approx(0.5)
        assert ap[0] == pytest.approx((1 + 2 / 3) / 2)

    def test_single_relevant_at_rank_k(self):
        emb = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
        labels = np.array([0, 1, 2, 0, 3])
        from tsint.metrics import _per_query, ranked_relevance
        _, _, _, ap = _per_query(ranked_relevance(emb, labels))
        assert ap[0] == pytest.approx(1 / 3)

    def test_singletons_excluded(self, caplog):
        emb = np.array([[0.0], [0.1], [9.0]])
        m = evaluate(emb, [0, 0, 1])
        assert m.n_queries == 2 and m.n_excluded == 1
        assert m.precision_at_1 == 1.0

    def test_two_samples(self):
        assert precision_at_1(np.array([[0.0], [1.0]]), [0, 0]) in (0.0, 1.0)

    def test_needs_two(self):
        with pytest.raises(ContractError):
            evaluate(np.zeros((1, 2)), [0])

    def test_ties_break_by_index(self):
        # query 0 is equidistant from 1 (other class) and 2 (same class)
        emb = np.array([[0.0], [1.0], [-1.0]])
        assert evaluate(emb, [0, 1, 0]).precision_at_1 < 1.0
        emb = np.array([[0.0], [-1.0], [1.0]])
        labels = [0, 0, 1]
        p1_q0 = brute_force(emb, labels)[0]
        assert precision_at_1(emb, labels) == p1_q0


class TestOracle:
    @pytest.mark.parametrize("seed", range(10))
    def test_random_instances(self, seed):
        emb, labels = _instance(seed)
        m = evaluate(emb, labels)
        bf = brute_force(emb, labels)
        assert m.precision_at_1 == pytest.approx(bf[0], abs=1e-12)
        assert m.map_at_r == pytest.approx(bf[1], abs=1e-12)
        assert m.mean_ap == pytest.approx(bf[2], abs=1e-12)


class TestProperties:
    @pytest.mark.parametrize("seed", range(20))
    def test_ordering(self, seed):
        emb, labels = _instance(seed, n=15)
        m = evaluate(emb, labels)
        assert m.map_at_r <= m.mean_ap + 1e-15 <= 1 + 1e-15
        assert 0 <= m.precision_at_1 <= 1

    @pytest.mark.parametrize("seed", range(5))
    def test_rotation_invariance(self, seed):
        emb, labels = _instance(seed)
        rot = ortho_group.rvs(3, random_state=seed)
        a, b = evaluate(emb, labels), evaluate(emb @ rot, labels)
        assert a.precision_at_1 == pytest.approx(b.precision_at_1, abs=1e-9)
        assert a.map_at_r == pytest.approx(b.map_at_r, abs=1e-9)
        assert a.mean_ap == pytest.approx(b.mean_ap, abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_invariance(self, seed):
        emb, labels = _instance(seed)
        perm = np.random.default_rng(seed).permutation(len(labels))
        a, b = evaluate(emb, labels), evaluate(emb[perm], labels[perm])
        assert a.precision_at_1 == pytest.approx(b.precision_at_1, abs=1e-12)
        assert a.map_at_r == pytest.approx(b.map_at_r, abs=1e-12)
        assert a.mean_ap == pytest.approx(b.mean_ap, abs=1e-12)
